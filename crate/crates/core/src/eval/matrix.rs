use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cv::{cross_validate, Scoring};
use super::metrics::r_squared;
use crate::error::{Error, Result};
use crate::learners::{Dataset, LearnerSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainTestMatrix {
    pub keys: Vec<String>,
    /// `r2[r][c]`: trained on group `r`, tested on group `c`; the diagonal is
    /// the within-group cross-validation score.
    pub r2: Vec<Vec<f64>>,
}

pub fn train_test_matrix(
    groups: &[(String, Dataset)],
    spec: &LearnerSpec,
    k: usize,
    seed: u64,
    scoring: Scoring,
) -> Result<TrainTestMatrix> {
    if groups.len() < 2 {
        return Err(Error::TooSmall(format!("{} group(s); a matrix needs at least 2", groups.len())));
    }
    let r2 = groups
        .par_iter()
        .enumerate()
        .map(|(r, (_, train))| {
            let model = spec.fit(train)?;
            groups
                .iter()
                .enumerate()
                .map(|(c, (_, test))| {
                    if r == c {
                        Ok(cross_validate(spec, train, k, seed, scoring)?.r2)
                    } else {
                        r_squared(&test.labels, &model.predict(test)?)
                    }
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TrainTestMatrix { keys: groups.iter().map(|g| g.0.clone()).collect(), r2 })
}

impl TrainTestMatrix {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["train\\test".to_string()];
        header.extend(self.keys.iter().cloned());
        w.write_record(&header)?;
        for (key, row) in self.keys.iter().zip(&self.r2) {
            let mut rec = vec![key.clone()];
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        super::finish(w)
    }
}
