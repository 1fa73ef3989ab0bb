//! Prediction from connectivity-map lookups instead of measured channel
//! features.
//!
//! The map used for a cross-validation fold is rebuilt from that fold's
//! training samples only, so no test measurement can leak into the features
//! it is evaluated on.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{cross_validate, finish, kfold, mae, r_squared, Fold, Scoring};
use crate::grid::{ConnectivityMap, GridConfig, Kpi, Measurement};
use crate::learners::{standard_features, Dataset, FeatureSpec, LearnerSpec};
use crate::trace::{Feature, LabeledSample};

/// Channel features that may be replaced by map lookups.
pub const CM_FEATURES: [Feature; 6] = [
    Feature::Rsrp,
    Feature::Rsrq,
    Feature::Sinr,
    Feature::Cqi,
    Feature::Ta,
    Feature::Freq,
];

pub const DEFAULT_CELL_SIZES: [f64; 5] = [5.0, 10.0, 25.0, 50.0, 100.0];

fn kpi_of(f: Feature) -> Result<Kpi> {
    match f {
        Feature::Rsrp => Ok(Kpi::Rsrp),
        Feature::Rsrq => Ok(Kpi::Rsrq),
        Feature::Sinr => Ok(Kpi::Sinr),
        Feature::Cqi => Ok(Kpi::Cqi),
        Feature::Ta => Ok(Kpi::Ta),
        Feature::Freq => Ok(Kpi::Freq),
        other => Err(Error::Config(format!("feature '{other}' cannot be taken from a map"))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CmFeatureSpec {
    /// Grid cell edge, meters.
    pub cell_size: f64,
    /// Features replaced by lookups; payload, speed and cell id always come
    /// from the sample.
    pub kpis: Vec<Feature>,
    /// Chebyshev ring radius (in cells) searched when the sample's own cell
    /// is empty.
    pub fallback_radius: u32,
    /// Keep the measured features and append the lookups as extra `cm_*`
    /// columns instead of replacing them.
    pub keep_measured: bool,
}

impl CmFeatureSpec {
    pub fn new(cell_size: f64) -> Self {
        CmFeatureSpec {
            cell_size,
            kpis: CM_FEATURES.to_vec(),
            fallback_radius: 0,
            keep_measured: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for f in &self.kpis {
            kpi_of(*f)?;
        }
        if !(self.cell_size > 0.0 && self.cell_size.is_finite()) {
            return Err(Error::Config(format!("cell size must be positive, got {}", self.cell_size)));
        }
        Ok(())
    }

    pub fn features(&self) -> Vec<FeatureSpec> {
        let mut out = standard_features();
        if self.keep_measured {
            out.extend(self.kpis.iter().map(|f| FeatureSpec::numeric(format!("cm_{}", f.name()))));
        }
        out
    }
}

/// South-west corner of the samples' bounding box.
pub fn origin_of(samples: &[LabeledSample]) -> Result<(f64, f64)> {
    if samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(samples.iter().fold((f64::INFINITY, f64::INFINITY), |(a, b), s| (a.min(s.lat), b.min(s.lon))))
}

/// Map of the samples' own channel features at their positions.
pub fn map_from_samples<'a>(
    samples: impl IntoIterator<Item = &'a LabeledSample>,
    config: GridConfig,
) -> ConnectivityMap {
    let mut map = ConnectivityMap::new(config);
    for s in samples {
        for f in CM_FEATURES {
            if let Some(value) = s.features.get(f) {
                map.insert(&Measurement {
                    mno: s.mno.clone(),
                    kpi: kpi_of(f).expect("channel feature"),
                    value,
                    lat: s.lat,
                    lon: s.lon,
                });
            }
        }
    }
    map
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CmReport {
    /// Input positions of the samples kept, aligned with the dataset rows.
    pub kept: Vec<usize>,
    /// Samples without a lookup value within the fallback radius.
    pub dropped: usize,
}

/// Replaces the selected channel features by map lookups at each sample's
/// position (cell mean; per-cell mode for TA and frequency).
pub fn cm_featurize(
    samples: &[LabeledSample],
    map: &ConnectivityMap,
    spec: &CmFeatureSpec,
) -> Result<(Dataset, CmReport)> {
    spec.validate()?;
    if (map.config.cell_size - spec.cell_size).abs() > 1e-9 * spec.cell_size {
        return Err(Error::CellSizeMismatch { map: map.config.cell_size, spec: spec.cell_size });
    }
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    let mut report = CmReport::default();
    'samples: for (i, s) in samples.iter().enumerate() {
        let mut looked_up = Vec::with_capacity(spec.kpis.len());
        for &f in &spec.kpis {
            let kpi = kpi_of(f)?;
            let value = map
                .lookup_cell(s.lat, s.lon, &s.mno, kpi, spec.fallback_radius)
                .and_then(|(_, stats)| if kpi.is_discrete() { stats.mode() } else { Some(stats.mean) });
            match value {
                Some(v) => looked_up.push(v),
                None => {
                    report.dropped += 1;
                    continue 'samples;
                }
            }
        }
        let mut fv = s.features;
        let mut row: Vec<Option<f64>>;
        if spec.keep_measured {
            row = fv.as_slice().to_vec();
            row.extend(looked_up.into_iter().map(Some));
        } else {
            for (&f, v) in spec.kpis.iter().zip(looked_up) {
                fv.set(f, Some(v));
            }
            row = fv.as_slice().to_vec();
        }
        rows.push(row);
        labels.push(s.label);
        report.kept.push(i);
    }
    Ok((Dataset { features: spec.features(), rows, labels }, report))
}

/// The folds of a map-featurized cross-validation, each with the map built
/// from its training samples only.
pub fn fold_maps(
    samples: &[LabeledSample],
    spec: &CmFeatureSpec,
    k: usize,
    seed: u64,
) -> Result<Vec<(Fold, ConnectivityMap)>> {
    spec.validate()?;
    let (lat0, lon0) = origin_of(samples)?;
    let config = GridConfig::new(lat0, lon0, spec.cell_size)?;
    Ok(kfold(samples.len(), k, seed)?
        .into_iter()
        .map(|fold| {
            let map = map_from_samples(fold.train.iter().map(|&i| &samples[i]), config);
            (fold, map)
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CmEval {
    pub r2: f64,
    pub mae: f64,
    /// Test predictions scored.
    pub n: usize,
    /// Test samples dropped for lack of a lookup value.
    pub dropped: usize,
}

/// k-fold cross-validation on map features, rebuilding the map per fold.
/// Out-of-fold predictions are pooled.
pub fn cm_cross_validate(
    samples: &[LabeledSample],
    spec: &CmFeatureSpec,
    learner: &LearnerSpec,
    k: usize,
    seed: u64,
) -> Result<CmEval> {
    let folds = fold_maps(samples, spec, k, seed)?;
    let per_fold: Vec<(Vec<f64>, Vec<f64>, usize)> = folds
        .par_iter()
        .map(|(fold, map)| {
            let train: Vec<LabeledSample> = fold.train.iter().map(|&i| samples[i].clone()).collect();
            let test: Vec<LabeledSample> = fold.test.iter().map(|&i| samples[i].clone()).collect();
            let (train_data, _) = cm_featurize(&train, map, spec)?;
            let (test_data, report) = cm_featurize(&test, map, spec)?;
            if test_data.is_empty() {
                return Ok((Vec::new(), Vec::new(), report.dropped));
            }
            let model = learner.fit(&train_data)?;
            Ok((test_data.labels.clone(), model.predict(&test_data)?, report.dropped))
        })
        .collect::<Result<_>>()?;
    let mut actual = Vec::new();
    let mut predicted = Vec::new();
    let mut dropped = 0;
    for (a, p, d) in per_fold {
        actual.extend(a);
        predicted.extend(p);
        dropped += d;
    }
    Ok(CmEval {
        r2: r_squared(&actual, &predicted)?,
        mae: mae(&actual, &predicted)?,
        n: actual.len(),
        dropped,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    /// `MNO` for the measured-feature baseline, `CM_<c>` otherwise.
    pub data: String,
    pub cell_size: Option<f64>,
    pub r2: f64,
    pub mae: f64,
    pub n: usize,
    pub dropped: usize,
}

/// Measured-feature baseline followed by one map-featurized evaluation per
/// cell size. `base` supplies everything but the cell size.
pub fn sweep_cell_sizes(
    samples: &[LabeledSample],
    sizes: &[f64],
    base: &CmFeatureSpec,
    learner: &LearnerSpec,
    k: usize,
    seed: u64,
) -> Result<Vec<SweepRow>> {
    if sizes.len() < 2 {
        return Err(Error::Config("a sweep needs at least two cell sizes".into()));
    }
    let baseline = cross_validate(learner, &Dataset::from_samples(samples), k, seed, Scoring::Pooled)?;
    let mut rows = vec![SweepRow {
        data: "MNO".into(),
        cell_size: None,
        r2: baseline.r2,
        mae: baseline.mae,
        n: baseline.n,
        dropped: 0,
    }];
    let evals: Vec<(f64, CmEval)> = sizes
        .par_iter()
        .map(|&c| {
            let spec = CmFeatureSpec { cell_size: c, ..base.clone() };
            Ok((c, cm_cross_validate(samples, &spec, learner, k, seed)?))
        })
        .collect::<Result<_>>()?;
    rows.extend(evals.into_iter().map(|(c, e)| SweepRow {
        data: format!("CM_{c}"),
        cell_size: Some(c),
        r2: e.r2,
        mae: e.mae,
        n: e.n,
        dropped: e.dropped,
    }));
    Ok(rows)
}

/// Table with one row per data source and `r2_<m>, mae_<m>` columns per
/// operator.
pub fn sweep_table_csv(per_mno: &[(String, Vec<SweepRow>)]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["data".to_string()];
    for (m, _) in per_mno {
        header.push(format!("r2_{m}"));
        header.push(format!("mae_{m}"));
    }
    w.write_record(&header)?;
    let mut labels: Vec<&str> = Vec::new();
    for (_, rows) in per_mno {
        for r in rows {
            if !labels.contains(&r.data.as_str()) {
                labels.push(&r.data);
            }
        }
    }
    for label in labels {
        let mut rec = vec![label.to_string()];
        for (_, rows) in per_mno {
            match rows.iter().find(|r| r.data == label) {
                Some(r) => {
                    rec.push(r.r2.to_string());
                    rec.push(r.mae.to_string());
                }
                None => rec.extend([String::new(), String::new()]),
            }
        }
        w.write_record(&rec)?;
    }
    finish(w)
}
