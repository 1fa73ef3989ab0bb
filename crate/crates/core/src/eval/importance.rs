use crate::error::{Error, Result};
use crate::learners::{Forest, ModelKind, RegressionModel, Tree};

/// Impurity decrease per feature for one tree, each split weighted by the
/// fraction of the tree's training weight reaching it.
fn tree_decrease(tree: &Tree, d: usize) -> Vec<f64> {
    let mut out = vec![0.0; d];
    let total = tree.nodes[0].n;
    for node in &tree.nodes {
        let Some(split) = &node.split else { continue };
        let (l, r) = (&tree.nodes[node.left], &tree.nodes[node.right]);
        let decrease = node.impurity - l.n / node.n * l.impurity - r.n / node.n * r.impurity;
        out[split.feature()] += node.n / total * decrease.max(0.0);
    }
    out
}

fn normalize(mut v: Vec<f64>) -> Result<Vec<f64>> {
    let sum: f64 = v.iter().sum();
    if !(sum > 0.0) {
        return Err(Error::NoSplits);
    }
    for x in &mut v {
        *x /= sum;
    }
    Ok(v)
}

/// Mean decrease in (variance) impurity over the forest's trees, normalised
/// to sum to 1. Features never used in a split get exactly 0.
pub fn mdi(forest: &Forest, n_features: usize) -> Result<Vec<f64>> {
    let mut acc = vec![0.0; n_features];
    for t in &forest.trees {
        for (a, v) in acc.iter_mut().zip(tree_decrease(t, n_features)) {
            *a += v;
        }
    }
    let n = forest.trees.len() as f64;
    normalize(acc.into_iter().map(|v| v / n).collect())
}

/// Named MDI importances of a CART or forest model.
pub fn feature_importance(model: &RegressionModel) -> Result<Vec<(String, f64)>> {
    let d = model.features.len();
    let v = match &model.model {
        ModelKind::Forest(f) => mdi(f, d)?,
        ModelKind::Cart(t) => normalize(tree_decrease(t, d))?,
        ModelKind::Linear(_) | ModelKind::M5(_) => return Err(Error::NotATree),
    };
    Ok(model.features.iter().map(|f| f.name.clone()).zip(v).collect())
}

pub fn importance_csv(importance: &[(String, f64)]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["feature", "importance"])?;
    for (name, v) in importance {
        w.write_record([name.as_str(), &v.to_string()])?;
    }
    super::finish(w)
}
