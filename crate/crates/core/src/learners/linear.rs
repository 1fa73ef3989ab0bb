use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{Dataset, FeatureKind, Imputer};
use crate::error::Result;

/// Ridge penalty used when the standardized design is rank deficient.
pub const RIDGE_LAMBDA: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LinearColumn {
    Numeric { feature: usize },
    /// One-hot indicator of a categorical value.
    Indicator { feature: usize, category: f64 },
}

impl LinearColumn {
    fn value(&self, x: &[f64]) -> f64 {
        match *self {
            LinearColumn::Numeric { feature } => x[feature],
            LinearColumn::Indicator { feature, category } => f64::from(u8::from(x[feature] == category)),
        }
    }

    fn feature(&self) -> usize {
        match *self {
            LinearColumn::Numeric { feature } | LinearColumn::Indicator { feature, .. } => feature,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub columns: Vec<LinearColumn>,
    pub intercept: f64,
    pub coefs: Vec<f64>,
    /// The design was rank deficient and the ridge fallback was used.
    pub ridge: bool,
}

impl LinearModel {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.intercept
            + self
                .columns
                .iter()
                .zip(&self.coefs)
                .map(|(c, b)| b * c.value(x))
                .sum::<f64>()
    }

    pub(crate) fn is_consistent(&self, d: usize) -> bool {
        self.columns.len() == self.coefs.len() && self.columns.iter().all(|c| c.feature() < d)
    }
}

/// Least squares over all features; categorical features are one-hot
/// encoded against their smallest observed value. Missing values are filled
/// with the training column mean (mode for categoricals).
pub fn fit_linear(data: &Dataset) -> Result<LinearModel> {
    data.require(2)?;
    fit_with(data, &Imputer::fit(data))
}

pub(crate) fn fit_with(data: &Dataset, imputer: &Imputer) -> Result<LinearModel> {
    let x = data.columns(imputer);
    let mut columns = Vec::new();
    for (j, spec) in data.features.iter().enumerate() {
        match spec.kind {
            FeatureKind::Numeric => columns.push(LinearColumn::Numeric { feature: j }),
            FeatureKind::Categorical => {
                let levels: BTreeSet<u64> = x[j].iter().map(|v| v.to_bits()).collect();
                let mut levels: Vec<f64> = levels.into_iter().map(f64::from_bits).collect();
                levels.sort_by(f64::total_cmp);
                columns.extend(
                    levels
                        .into_iter()
                        .skip(1)
                        .map(|category| LinearColumn::Indicator { feature: j, category }),
                );
            }
        }
    }
    let design: Vec<Vec<f64>> = columns
        .iter()
        .map(|c| match *c {
            LinearColumn::Numeric { feature } => x[feature].clone(),
            LinearColumn::Indicator { feature, category } => x[feature]
                .iter()
                .map(|v| f64::from(u8::from(*v == category)))
                .collect(),
        })
        .collect();
    let cols: Vec<&[f64]> = design.iter().map(Vec::as_slice).collect();
    let fit = least_squares(&cols, &data.labels);
    Ok(LinearModel {
        columns,
        intercept: fit.intercept,
        coefs: fit.coefs,
        ridge: fit.ridge,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct LsFit {
    pub intercept: f64,
    pub coefs: Vec<f64>,
    pub ridge: bool,
}

impl LsFit {
    #[cfg(test)]
    pub fn predict(&self, x: impl Iterator<Item = f64>) -> f64 {
        self.intercept + x.zip(&self.coefs).map(|(v, b)| v * b).sum::<f64>()
    }
}

/// Ordinary least squares with intercept on column-major data. Columns are
/// centred and scaled to unit variance; constant columns get a zero
/// coefficient. If the scaled normal equations are numerically singular the
/// solve is repeated with `RIDGE_LAMBDA` added to the diagonal.
pub(crate) fn least_squares(cols: &[&[f64]], y: &[f64]) -> LsFit {
    let n = y.len();
    let nf = n as f64;
    let y_mean = y.iter().sum::<f64>() / nf;
    let mut coefs = vec![0.0; cols.len()];

    let mut active = Vec::new();
    let mut means = Vec::new();
    let mut scales = Vec::new();
    for (j, c) in cols.iter().enumerate() {
        let m = c.iter().sum::<f64>() / nf;
        let sd = (c.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / nf).sqrt();
        if sd > 0.0 && sd.is_finite() && c.iter().any(|v| *v != c[0]) {
            active.push(j);
            means.push(m);
            scales.push(sd);
        }
    }
    let p = active.len();
    let z: Vec<Vec<f64>> = active
        .iter()
        .enumerate()
        .map(|(a, &j)| cols[j].iter().map(|v| (v - means[a]) / scales[a]).collect())
        .collect();
    let yc: Vec<f64> = y.iter().map(|v| v - y_mean).collect();
    let mut gram = vec![0.0; p * p];
    let mut rhs = vec![0.0; p];
    for a in 0..p {
        for b in 0..=a {
            let s = z[a].iter().zip(&z[b]).map(|(u, v)| u * v).sum::<f64>() / nf;
            gram[a * p + b] = s;
            gram[b * p + a] = s;
        }
        rhs[a] = z[a].iter().zip(&yc).map(|(u, v)| u * v).sum::<f64>() / nf;
    }

    let mut ridge = false;
    let gamma = match cholesky_solve(&gram, &rhs, p) {
        Some(g) => g,
        None => {
            ridge = true;
            let mut g = gram.clone();
            for a in 0..p {
                g[a * p + a] += RIDGE_LAMBDA;
            }
            cholesky_solve(&g, &rhs, p).unwrap_or_else(|| vec![0.0; p])
        }
    };
    let mut intercept = y_mean;
    for (a, &j) in active.iter().enumerate() {
        let b = gamma[a] / scales[a];
        coefs[j] = b;
        intercept -= b * means[a];
    }
    LsFit { intercept, coefs, ridge }
}

/// Solves `A x = b` for symmetric positive definite `A` (row-major `p × p`).
/// Returns `None` when a pivot falls below `1e-10` of its diagonal entry.
fn cholesky_solve(a: &[f64], b: &[f64], p: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; p * p];
    for i in 0..p {
        for j in 0..=i {
            let mut s = a[i * p + j];
            for k in 0..j {
                s -= l[i * p + k] * l[j * p + k];
            }
            if i == j {
                if !(s > 1e-10 * a[i * p + i].abs().max(f64::MIN_POSITIVE)) {
                    return None;
                }
                l[i * p + i] = s.sqrt();
            } else {
                l[i * p + j] = s / l[j * p + j];
            }
        }
    }
    let mut x = b.to_vec();
    for i in 0..p {
        for k in 0..i {
            x[i] -= l[i * p + k] * x[k];
        }
        x[i] /= l[i * p + i];
    }
    for i in (0..p).rev() {
        for k in i + 1..p {
            x[i] -= l[k * p + i] * x[k];
        }
        x[i] /= l[i * p + i];
    }
    Some(x)
}
