use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{grow, GrowParams, Presorted, Tree};
use super::FeatureKind;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub min_leaf: usize,
    /// `None` means `max(1, d / 3)`.
    pub features_per_split: Option<usize>,
    pub max_depth: Option<usize>,
    /// Train each tree on a bootstrap resample; disabling it is a test hook.
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 100,
            min_leaf: 5,
            features_per_split: None,
            max_depth: None,
            bootstrap: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub trees: Vec<Tree>,
}

impl Forest {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict(x)).sum::<f64>() / self.trees.len() as f64
    }

    pub fn leaf_count(&self) -> usize {
        self.trees.iter().map(Tree::leaf_count).sum()
    }
}

/// Per-tree seeds drawn from the master seed, so the forest does not depend
/// on how trees are scheduled across threads.
fn tree_seeds(seed: u64, n: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.gen()).collect()
}

pub(crate) fn fit_forest(
    cols: &[Vec<f64>],
    kinds: &[FeatureKind],
    y: &[f64],
    p: &ForestParams,
) -> Result<Forest> {
    if y.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if p.n_trees == 0 || p.min_leaf == 0 {
        return Err(Error::Config("n_trees and min_leaf must be at least 1".into()));
    }
    let d = cols.len();
    let params = GrowParams {
        min_leaf: p.min_leaf,
        max_depth: p.max_depth,
        mtry: p.features_per_split.unwrap_or((d / 3).max(1)).clamp(1, d.max(1)),
    };
    let presorted = Presorted::new(cols);
    let n = y.len();
    let trees = tree_seeds(p.seed, p.n_trees)
        .into_par_iter()
        .map(|seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut weights = vec![if p.bootstrap { 0.0 } else { 1.0 }; n];
            if p.bootstrap {
                for _ in 0..n {
                    weights[rng.gen_range(0..n)] += 1.0;
                }
            }
            grow(cols, kinds, y, &weights, &presorted, &params, Some(&mut rng))
        })
        .collect();
    Ok(Forest { trees })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::tree::{fit_cart, CartParams};

    fn data() -> (Vec<Vec<f64>>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cols: Vec<Vec<f64>> = (0..4).map(|_| (0..200).map(|_| rng.gen_range(0.0..10.0)).collect()).collect();
        let y = (0..200).map(|i| if cols[0][i] > 5.0 { 3.0 } else { 0.0 } + cols[2][i] * 0.2).collect();
        (cols, y)
    }

    #[test]
    fn one_tree_without_bootstrap_is_cart() {
        let (cols, y) = data();
        let kinds = vec![FeatureKind::Numeric; 4];
        let f = fit_forest(
            &cols,
            &kinds,
            &y,
            &ForestParams {
                n_trees: 1,
                min_leaf: 3,
                features_per_split: Some(4),
                bootstrap: false,
                ..ForestParams::default()
            },
        )
        .unwrap();
        let t = fit_cart(&cols, &kinds, &y, &CartParams { min_leaf: 3, max_depth: None }).unwrap();
        assert_eq!(f.trees[0], t);
    }

    #[test]
    fn same_seed_same_forest_and_thread_count_does_not_matter() {
        let (cols, y) = data();
        let kinds = vec![FeatureKind::Numeric; 4];
        let p = ForestParams { n_trees: 12, seed: 9, ..ForestParams::default() };
        let a = fit_forest(&cols, &kinds, &y, &p).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let b = pool.install(|| fit_forest(&cols, &kinds, &y, &p).unwrap());
        assert_eq!(a, b);
        let c = fit_forest(&cols, &kinds, &y, &ForestParams { seed: 10, ..p }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn predictions_stay_within_label_range() {
        let (cols, y) = data();
        let f = fit_forest(&cols, &[FeatureKind::Numeric; 4], &y, &ForestParams { n_trees: 20, ..ForestParams::default() }).unwrap();
        let (lo, hi) = y.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
        for x in [[0.0, 0.0, 0.0, 0.0], [10.0, 10.0, 10.0, 10.0], [5.0, 1.0, 7.0, 2.0]] {
            let p = f.predict(&x);
            assert!(p >= lo && p <= hi);
        }
    }

    #[test]
    fn identical_trees_predict_like_one() {
        let (cols, y) = data();
        let t = fit_cart(&cols, &[FeatureKind::Numeric; 4], &y, &CartParams::default()).unwrap();
        let f = Forest { trees: vec![t.clone(); 7] };
        for i in 0..20 {
            let x: Vec<f64> = cols.iter().map(|c| c[i]).collect();
            assert!((f.predict(&x) - t.predict(&x)).abs() <= 1e-12 * t.predict(&x).abs().max(1.0));
        }
    }
}
