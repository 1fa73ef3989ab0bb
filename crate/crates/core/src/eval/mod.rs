//! Evaluation: metrics, cross-validation, data aggregation levels, train/test
//! matrices, feature importance, binned indicator impact and ECDFs.

mod aggregate;
mod cv;
mod importance;
mod matrix;
mod metrics;
mod stats;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learners::LearnerSpec;
use crate::trace::LabeledSample;

pub use aggregate::{aggregate, Aggregation, AggregationLevel, Group, GroupKey, KeyDetail};
pub use cv::{cross_validate, kfold, EvalReport, Fold, FoldScore, Scoring, DEFAULT_FOLDS};
pub use importance::{feature_importance, importance_csv, mdi};
pub use matrix::{train_test_matrix, TrainTestMatrix};
pub use metrics::{mae, r_squared};
pub use stats::{binned_csv, binned_impact, ecdf, ecdf_csv, Bin, MIN_BIN_COUNT};

pub(crate) fn finish(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroupResult {
    pub key: GroupKey,
    pub report: EvalReport,
}

/// Cross-validation of one learner on every group of one aggregation level.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LevelEvaluation {
    pub level: AggregationLevel,
    pub learner: String,
    pub groups: Vec<GroupResult>,
    pub dropped: Vec<(GroupKey, usize)>,
    /// Groups whose labels are constant, so R² is undefined.
    pub skipped: Vec<GroupKey>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MnoSummary {
    pub mno: String,
    pub groups: usize,
    pub samples: usize,
    /// Mean R² over groups.
    pub mean_r2: f64,
    /// Group-size weighted mean R².
    pub weighted_r2: f64,
    pub mean_mae: f64,
}

impl LevelEvaluation {
    pub fn summary(&self) -> Vec<MnoSummary> {
        let mnos: BTreeSet<&str> = self.groups.iter().map(|g| g.key.mno.as_str()).collect();
        mnos.into_iter()
            .map(|mno| {
                let gs: Vec<&EvalReport> =
                    self.groups.iter().filter(|g| g.key.mno == mno).map(|g| &g.report).collect();
                let n: usize = gs.iter().map(|r| r.n).sum();
                MnoSummary {
                    mno: mno.to_string(),
                    groups: gs.len(),
                    samples: n,
                    mean_r2: gs.iter().map(|r| r.r2).sum::<f64>() / gs.len() as f64,
                    weighted_r2: gs.iter().map(|r| r.r2 * r.n as f64).sum::<f64>() / n as f64,
                    mean_mae: gs.iter().map(|r| r.mae).sum::<f64>() / gs.len() as f64,
                }
            })
            .collect()
    }
}

/// Aggregates `samples` at `level` (size gate `2k`) and cross-validates
/// `spec` within every retained group.
pub fn evaluate_level(
    samples: &[LabeledSample],
    level: AggregationLevel,
    spec: &LearnerSpec,
    k: usize,
    seed: u64,
    scoring: Scoring,
) -> Result<LevelEvaluation> {
    let gate = 2 * k;
    let agg = aggregate(samples, level, gate);
    if agg.groups.is_empty() {
        return Err(Error::TooSmall(format!(
            "no {level}-level group reaches the size gate of 2k = {gate} samples ({} samples in {} group(s))",
            samples.len(),
            agg.dropped.len()
        )));
    }
    let mut groups = Vec::new();
    let mut skipped = Vec::new();
    for g in agg.groups {
        match cross_validate(spec, &g.data, k, seed, scoring) {
            Ok(report) => groups.push(GroupResult { key: g.key, report }),
            Err(Error::UndefinedVariance) => skipped.push(g.key),
            Err(e) => return Err(e),
        }
    }
    if groups.is_empty() {
        return Err(Error::UndefinedVariance);
    }
    Ok(LevelEvaluation { level, learner: spec.name().to_string(), groups, dropped: agg.dropped, skipped })
}

/// One row per aggregation level; for every learner × operator the mean and
/// the size-weighted mean R² over that level's groups.
pub fn level_table_csv(evals: &[LevelEvaluation]) -> Result<String> {
    let mut learners: Vec<&str> = Vec::new();
    for e in evals {
        if !learners.contains(&e.learner.as_str()) {
            learners.push(&e.learner);
        }
    }
    let mnos: BTreeSet<&str> = evals.iter().flat_map(|e| e.groups.iter().map(|g| g.key.mno.as_str())).collect();
    let mut levels: Vec<AggregationLevel> = Vec::new();
    for e in evals {
        if !levels.contains(&e.level) {
            levels.push(e.level);
        }
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["level".to_string()];
    for l in &learners {
        for m in &mnos {
            header.push(format!("{l}_{m}_r2"));
            header.push(format!("{l}_{m}_r2_weighted"));
        }
    }
    w.write_record(&header)?;
    for level in levels {
        let mut row = vec![level.to_string()];
        for l in &learners {
            let summary = evals
                .iter()
                .find(|e| e.level == level && e.learner == *l)
                .map(LevelEvaluation::summary)
                .unwrap_or_default();
            for m in &mnos {
                match summary.iter().find(|s| s.mno == *m) {
                    Some(s) => {
                        row.push(s.mean_r2.to_string());
                        row.push(s.weighted_r2.to_string());
                    }
                    None => {
                        row.push(String::new());
                        row.push(String::new());
                    }
                }
            }
        }
        w.write_record(&row)?;
    }
    finish(w)
}

/// Per-group detail of one or more level evaluations.
pub fn group_detail_csv(evals: &[LevelEvaluation]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["level", "learner", "group", "mno", "n", "r2", "mae"])?;
    for e in evals {
        for g in &e.groups {
            w.write_record([
                e.level.to_string(),
                e.learner.clone(),
                g.key.to_string(),
                g.key.mno.clone(),
                g.report.n.to_string(),
                g.report.r2.to_string(),
                g.report.mae.to_string(),
            ])?;
        }
    }
    finish(w)
}
