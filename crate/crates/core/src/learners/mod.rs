//! Regression learners behind one fit/predict interface: a least-squares
//! baseline, CART, a random forest of CART trees and the M5 model tree.

mod forest;
mod linear;
mod m5;
mod tree;

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trace::{Feature, LabeledSample};

pub use forest::{Forest, ForestParams};
pub use linear::{fit_linear, LinearColumn, LinearModel};
pub use m5::{M5Model, M5Node, M5Params, NodeModel};
pub use tree::{CartParams, Node, Split, Tree};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Numeric,
    Categorical,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub kind: FeatureKind,
}

impl FeatureSpec {
    pub fn numeric(name: impl Into<String>) -> Self {
        FeatureSpec { name: name.into(), kind: FeatureKind::Numeric }
    }

    pub fn categorical(name: impl Into<String>) -> Self {
        FeatureSpec { name: name.into(), kind: FeatureKind::Categorical }
    }
}

/// The nine trace features in their fixed order.
pub fn standard_features() -> Vec<FeatureSpec> {
    Feature::ALL
        .iter()
        .map(|f| FeatureSpec {
            name: f.name().to_string(),
            kind: if f.is_categorical() { FeatureKind::Categorical } else { FeatureKind::Numeric },
        })
        .collect()
}

/// Row-major feature table with labels. `None` marks a missing value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub features: Vec<FeatureSpec>,
    pub rows: Vec<Vec<Option<f64>>>,
    pub labels: Vec<f64>,
}

impl Dataset {
    pub fn new(features: Vec<FeatureSpec>, rows: Vec<Vec<Option<f64>>>, labels: Vec<f64>) -> Result<Self> {
        if rows.len() != labels.len() {
            return Err(Error::LengthMismatch(format!(
                "{} rows but {} labels",
                rows.len(),
                labels.len()
            )));
        }
        if let Some(r) = rows.iter().position(|r| r.len() != features.len()) {
            return Err(Error::LengthMismatch(format!(
                "row {r} has {} values, expected {}",
                rows[r].len(),
                features.len()
            )));
        }
        if labels.iter().any(|y| !y.is_finite()) {
            return Err(Error::NonFinite("labels"));
        }
        if rows.iter().flatten().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("features"));
        }
        Ok(Dataset { features, rows, labels })
    }

    pub fn from_samples(samples: &[LabeledSample]) -> Self {
        Dataset {
            features: standard_features(),
            rows: samples.iter().map(|s| s.features.as_slice().to_vec()).collect(),
            labels: samples.iter().map(|s| s.label).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.features.len()
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }

    /// Rows at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            features: self.features.clone(),
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    /// Keeps only the named features, in the given order.
    pub fn project(&self, names: &[&str]) -> Result<Dataset> {
        let idx = names
            .iter()
            .map(|n| {
                self.feature_index(n)
                    .ok_or_else(|| Error::FeatureMismatch(format!("dataset has no feature '{n}'")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Dataset {
            features: idx.iter().map(|&i| self.features[i].clone()).collect(),
            rows: self.rows.iter().map(|r| idx.iter().map(|&i| r[i]).collect()).collect(),
            labels: self.labels.clone(),
        })
    }

    /// Imputed column-major copy of the feature table.
    pub(crate) fn columns(&self, imputer: &Imputer) -> Vec<Vec<f64>> {
        (0..self.n_features())
            .map(|j| {
                self.rows
                    .iter()
                    .map(|r| r[j].unwrap_or(imputer.fill[j]))
                    .collect()
            })
            .collect()
    }

    fn kinds(&self) -> Vec<FeatureKind> {
        self.features.iter().map(|f| f.kind).collect()
    }

    fn require(&self, min_rows: usize) -> Result<()> {
        if self.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if self.len() < min_rows {
            return Err(Error::TooSmall(format!(
                "{} rows, at least {min_rows} required",
                self.len()
            )));
        }
        Ok(())
    }
}

/// Training-time fill values for missing features: column mean for numeric
/// features, most frequent value (smallest on ties) for categorical ones.
/// A column with no observed value is filled with 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Imputer {
    pub fill: Vec<f64>,
}

impl Imputer {
    pub fn fit(data: &Dataset) -> Imputer {
        let fill = data
            .features
            .iter()
            .enumerate()
            .map(|(j, spec)| {
                let present = data.rows.iter().filter_map(|r| r[j]);
                match spec.kind {
                    FeatureKind::Numeric => {
                        let (s, n) = present.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
                        if n == 0 { 0.0 } else { s / n as f64 }
                    }
                    FeatureKind::Categorical => {
                        let mut vals: Vec<f64> = present.collect();
                        vals.sort_by(f64::total_cmp);
                        let mut best = (0usize, 0.0);
                        let mut i = 0;
                        while i < vals.len() {
                            let j = vals[i..].partition_point(|v| *v == vals[i]) + i;
                            if j - i > best.0 {
                                best = (j - i, vals[i]);
                            }
                            i = j;
                        }
                        best.1
                    }
                }
            })
            .collect();
        Imputer { fill }
    }

    pub fn apply(&self, row: &[Option<f64>]) -> Vec<f64> {
        row.iter().zip(&self.fill).map(|(v, f)| v.unwrap_or(*f)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ModelKind {
    Linear(LinearModel),
    Cart(Tree),
    Forest(Forest),
    M5(M5Model),
}

/// A trained model together with the feature ordering and the imputation it
/// was trained with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionModel {
    pub features: Vec<FeatureSpec>,
    pub imputer: Imputer,
    pub learner: LearnerSpec,
    pub model: ModelKind,
}

pub const MODEL_FORMAT: &str = "mnolytics-model";
pub const MODEL_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Envelope<T> {
    format: String,
    version: u32,
    model: T,
}

impl RegressionModel {
    /// Predicts one row given in the model's feature order.
    pub fn predict_row(&self, row: &[Option<f64>]) -> f64 {
        let x = self.imputer.apply(row);
        match &self.model {
            ModelKind::Linear(m) => m.predict(&x),
            ModelKind::Cart(t) => t.predict(&x),
            ModelKind::Forest(f) => f.predict(&x),
            ModelKind::M5(m) => m.predict(&x),
        }
    }

    /// Predicts every row of `data` after checking its feature header.
    pub fn predict(&self, data: &Dataset) -> Result<Vec<f64>> {
        self.check_features(&data.features)?;
        Ok(data.rows.iter().map(|r| self.predict_row(r)).collect())
    }

    pub fn check_features(&self, features: &[FeatureSpec]) -> Result<()> {
        if features != self.features.as_slice() {
            let show = |fs: &[FeatureSpec]| fs.iter().map(|f| f.name.as_str()).collect::<Vec<_>>().join(",");
            return Err(Error::FeatureMismatch(format!(
                "model expects [{}], data has [{}]",
                show(&self.features),
                show(features)
            )));
        }
        Ok(())
    }

    /// Total leaves; summed over trees for a forest.
    pub fn leaf_count(&self) -> Result<usize> {
        match &self.model {
            ModelKind::Linear(_) => Err(Error::NotATree),
            ModelKind::Cart(t) => Ok(t.leaf_count()),
            ModelKind::Forest(f) => Ok(f.leaf_count()),
            ModelKind::M5(m) => Ok(m.leaf_count()),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&Envelope {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            model: self,
        })?)
    }

    pub fn from_json(text: &str) -> Result<RegressionModel> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::CorruptModel(e.to_string()))?;
        if value.get("format").and_then(|f| f.as_str()) != Some(MODEL_FORMAT) {
            return Err(Error::CorruptModel("not a model file".into()));
        }
        let version = value
            .get("version")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| Error::CorruptModel("missing version".into()))?;
        if version != u64::from(MODEL_VERSION) {
            return Err(Error::VersionMismatch {
                found: version.try_into().unwrap_or(u32::MAX),
                expected: MODEL_VERSION,
            });
        }
        let env: Envelope<RegressionModel> =
            serde_json::from_value(value).map_err(|e| Error::CorruptModel(e.to_string()))?;
        env.model.validate()?;
        Ok(env.model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<RegressionModel> {
        RegressionModel::from_json(&fs::read_to_string(path)?)
    }

    /// Structural checks so that prediction cannot index out of bounds.
    fn validate(&self) -> Result<()> {
        let d = self.features.len();
        if self.imputer.fill.len() != d {
            return Err(Error::CorruptModel("imputation length differs from feature count".into()));
        }
        let ok = match &self.model {
            ModelKind::Linear(m) => m.is_consistent(d),
            ModelKind::Cart(t) => t.is_consistent(d),
            ModelKind::Forest(f) => !f.trees.is_empty() && f.trees.iter().all(|t| t.is_consistent(d)),
            ModelKind::M5(m) => m.is_consistent(d),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::CorruptModel("inconsistent model structure".into()))
        }
    }
}

/// Learner choice plus hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "learner", rename_all = "snake_case")]
pub enum LearnerSpec {
    Linear,
    Cart(CartParams),
    #[serde(rename = "rf")]
    Forest(ForestParams),
    M5(M5Params),
}

impl LearnerSpec {
    pub fn name(&self) -> &'static str {
        match self {
            LearnerSpec::Linear => "linear",
            LearnerSpec::Cart(_) => "cart",
            LearnerSpec::Forest(_) => "rf",
            LearnerSpec::M5(_) => "m5",
        }
    }

    /// Default hyperparameters for a learner name (`linear`, `cart`, `rf`, `m5`).
    pub fn from_name(name: &str) -> Option<LearnerSpec> {
        match name {
            "linear" | "lr" => Some(LearnerSpec::Linear),
            "cart" => Some(LearnerSpec::Cart(CartParams::default())),
            "rf" | "forest" => Some(LearnerSpec::Forest(ForestParams::default())),
            "m5" => Some(LearnerSpec::M5(M5Params::default())),
            _ => None,
        }
    }

    /// Same learner with its random seed replaced, where it has one.
    pub fn with_seed(&self, seed: u64) -> LearnerSpec {
        match self {
            LearnerSpec::Forest(p) => LearnerSpec::Forest(ForestParams { seed, ..p.clone() }),
            other => other.clone(),
        }
    }

    pub fn fit(&self, data: &Dataset) -> Result<RegressionModel> {
        let imputer = Imputer::fit(data);
        let model = match self {
            LearnerSpec::Linear => {
                data.require(2)?;
                ModelKind::Linear(linear::fit_with(data, &imputer)?)
            }
            LearnerSpec::Cart(p) => {
                data.require(p.min_leaf.max(1))?;
                ModelKind::Cart(tree::fit_cart(&data.columns(&imputer), &data.kinds(), &data.labels, p)?)
            }
            LearnerSpec::Forest(p) => {
                data.require(p.min_leaf.max(1))?;
                ModelKind::Forest(forest::fit_forest(&data.columns(&imputer), &data.kinds(), &data.labels, p)?)
            }
            LearnerSpec::M5(p) => {
                data.require(p.min_split.max(1))?;
                ModelKind::M5(m5::fit_m5(&data.columns(&imputer), &data.kinds(), &data.labels, p)?)
            }
        };
        Ok(RegressionModel {
            features: data.features.clone(),
            imputer,
            learner: self.clone(),
            model,
        })
    }
}
