use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{mae, r_squared};
use crate::error::{Error, Result};
use crate::learners::{Dataset, LearnerSpec};

pub const DEFAULT_FOLDS: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Seeded shuffle of `0..n` cut into `k` test folds; the first `n % k`
/// folds hold one extra row. Train sets are the sorted complements.
pub fn kfold(n: usize, k: usize, seed: u64) -> Result<Vec<Fold>> {
    if k < 2 {
        return Err(Error::Config(format!("k must be at least 2, got {k}")));
    }
    if n < k {
        return Err(Error::TooSmall(format!("{n} rows cannot be split into {k} folds")));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (base, extra) = (n / k, n % k);
    let mut fold_of = vec![0usize; n];
    let mut start = 0;
    let mut tests = Vec::with_capacity(k);
    for f in 0..k {
        let len = base + usize::from(f < extra);
        let mut test = perm[start..start + len].to_vec();
        test.sort_unstable();
        for &i in &test {
            fold_of[i] = f;
        }
        tests.push(test);
        start += len;
    }
    Ok(tests
        .into_iter()
        .enumerate()
        .map(|(f, test)| Fold {
            train: (0..n).filter(|&i| fold_of[i] != f).collect(),
            test,
        })
        .collect())
}

/// How out-of-fold predictions are turned into one score.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scoring {
    /// Score all out-of-fold predictions at once.
    #[default]
    Pooled,
    /// Average the per-fold scores (folds with constant labels are skipped
    /// for R²).
    MeanOfFolds,
}

impl std::str::FromStr for Scoring {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pooled" => Ok(Scoring::Pooled),
            "mean-of-folds" => Ok(Scoring::MeanOfFolds),
            other => Err(format!("unknown scoring '{other}' (pooled, mean-of-folds)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldScore {
    pub n_test: usize,
    /// `None` when the fold's labels are constant.
    pub r2: Option<f64>,
    pub mae: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub r2: f64,
    pub mae: f64,
    pub n: usize,
    pub scoring: Scoring,
    pub folds: Vec<FoldScore>,
    /// Out-of-fold prediction for every row, in dataset order.
    pub predictions: Vec<f64>,
}

/// k-fold cross-validation of `spec` on `data`.
pub fn cross_validate(spec: &LearnerSpec, data: &Dataset, k: usize, seed: u64, scoring: Scoring) -> Result<EvalReport> {
    let folds = kfold(data.len(), k, seed)?;
    let per_fold: Vec<Vec<f64>> = folds
        .par_iter()
        .map(|fold| {
            let model = spec.fit(&data.subset(&fold.train))?;
            Ok(fold.test.iter().map(|&i| model.predict_row(&data.rows[i])).collect())
        })
        .collect::<Result<_>>()?;
    let mut predictions = vec![0.0; data.len()];
    let mut scores = Vec::with_capacity(k);
    for (fold, preds) in folds.iter().zip(&per_fold) {
        let actual: Vec<f64> = fold.test.iter().map(|&i| data.labels[i]).collect();
        for (&i, &p) in fold.test.iter().zip(preds) {
            predictions[i] = p;
        }
        scores.push(FoldScore {
            n_test: actual.len(),
            r2: match r_squared(&actual, preds) {
                Ok(v) => Some(v),
                Err(Error::UndefinedVariance | Error::TooSmall(_)) => None,
                Err(e) => return Err(e),
            },
            mae: mae(&actual, preds)?,
        });
    }
    let (r2, err) = match scoring {
        Scoring::Pooled => (r_squared(&data.labels, &predictions)?, mae(&data.labels, &predictions)?),
        Scoring::MeanOfFolds => {
            let r2s: Vec<f64> = scores.iter().filter_map(|s| s.r2).collect();
            if r2s.is_empty() {
                return Err(Error::UndefinedVariance);
            }
            (
                r2s.iter().sum::<f64>() / r2s.len() as f64,
                scores.iter().map(|s| s.mae).sum::<f64>() / scores.len() as f64,
            )
        }
    };
    Ok(EvalReport { r2, mae: err, n: data.len(), scoring, folds: scores, predictions })
}
