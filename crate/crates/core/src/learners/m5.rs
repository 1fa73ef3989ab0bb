//! M5 model trees: standard-deviation-reduction splits, a linear model at
//! every node over the numeric features tested in its subtree, bottom-up
//! pruning by estimated error, and smoothing along the root path.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::linear::least_squares;
use super::tree::{Split, MAX_EXACT_CATEGORIES, TIE_TOLERANCE};
use super::FeatureKind;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct M5Params {
    /// Nodes with fewer rows are not split.
    pub min_split: usize,
    /// Nodes whose label SD is below this fraction of the root SD are not split.
    pub sdr_stop: f64,
    /// Smoothing constant; 0 disables smoothing.
    pub smoothing_k: f64,
    pub prune: bool,
    /// Minimum rows per child of a split.
    pub min_leaf: usize,
}

impl Default for M5Params {
    fn default() -> Self {
        M5Params { min_split: 4, sdr_stop: 0.05, smoothing_k: 15.0, prune: true, min_leaf: 2 }
    }
}

/// Linear model over a subset of (imputed) features plus intercept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeModel {
    pub features: Vec<usize>,
    pub intercept: f64,
    pub coefs: Vec<f64>,
}

impl NodeModel {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.intercept + self.features.iter().zip(&self.coefs).map(|(&f, b)| b * x[f]).sum::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct M5Node {
    pub split: Option<Split>,
    pub left: usize,
    pub right: usize,
    /// Training rows reaching the node.
    pub n: usize,
    pub model: NodeModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct M5Model {
    pub nodes: Vec<M5Node>,
    pub smoothing_k: f64,
    /// Nodes removed by pruning.
    pub pruned: usize,
}

impl M5Model {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut path = vec![0];
        let mut i = 0;
        while let Some(s) = &self.nodes[i].split {
            i = if s.goes_left(x) { self.nodes[i].left } else { self.nodes[i].right };
            path.push(i);
        }
        let mut p = self.nodes[i].model.predict(x);
        if self.smoothing_k > 0.0 {
            let k = self.smoothing_k;
            for w in path.windows(2).rev() {
                let n = self.nodes[w[1]].n as f64;
                p = (n * p + k * self.nodes[w[0]].model.predict(x)) / (n + k);
            }
        }
        p
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.split.is_none()).count()
    }

    pub(crate) fn is_consistent(&self, d: usize) -> bool {
        let len = self.nodes.len();
        len > 0
            && self.nodes.iter().enumerate().all(|(i, n)| {
                n.model.features.len() == n.model.coefs.len()
                    && n.model.features.iter().all(|&f| f < d)
                    && match &n.split {
                        None => true,
                        Some(s) => s.feature() < d && n.left > i && n.right > i && n.left < len && n.right < len,
                    }
            })
    }
}

fn sd(sum: f64, sum2: f64, n: f64) -> f64 {
    ((sum2 / n - (sum / n).powi(2)).max(0.0)).sqrt()
}

/// Centred population SD of `rows`.
fn sd_of(y: &[f64], rows: &[usize]) -> f64 {
    let n = rows.len() as f64;
    let m = rows.iter().map(|&r| y[r]).sum::<f64>() / n;
    (rows.iter().map(|&r| (y[r] - m).powi(2)).sum::<f64>() / n).sqrt()
}

struct Builder<'a> {
    cols: &'a [Vec<f64>],
    kinds: &'a [FeatureKind],
    y: &'a [f64],
    p: &'a M5Params,
    stop_sd: f64,
    nodes: Vec<M5Node>,
    rows: Vec<Vec<usize>>,
}

impl Builder<'_> {
    /// Grows the subtree for `rows`; node ids and `self.rows` are both
    /// assigned in pre-order.
    fn grow(&mut self, rows: Vec<usize>) -> usize {
        let id = self.nodes.len();
        self.nodes.push(M5Node {
            split: None,
            left: 0,
            right: 0,
            n: rows.len(),
            model: NodeModel { features: vec![], intercept: 0.0, coefs: vec![] },
        });
        let split = if rows.len() < self.p.min_split || sd_of(self.y, &rows) < self.stop_sd {
            None
        } else {
            self.best_split(&rows)
        };
        if let Some(split) = split {
            let (mut l, mut r) = (Vec::new(), Vec::new());
            let mut probe = vec![0.0; self.cols.len()];
            for &row in &rows {
                probe[split.feature()] = self.cols[split.feature()][row];
                if split.goes_left(&probe) {
                    l.push(row);
                } else {
                    r.push(row);
                }
            }
            self.rows.push(rows);
            self.nodes[id].split = Some(split);
            let li = self.grow(l);
            self.nodes[id].left = li;
            let ri = self.grow(r);
            self.nodes[id].right = ri;
        } else {
            self.rows.push(rows);
        }
        id
    }

    /// Highest positive SDR split; ties go to the first feature, then the
    /// lowest threshold.
    fn best_split(&self, rows: &[usize]) -> Option<Split> {
        let n = rows.len() as f64;
        let min_leaf = self.p.min_leaf.max(1);
        // Labels are centred on the node mean before accumulating sums of
        // squares.
        let mean = rows.iter().map(|&r| self.y[r]).sum::<f64>() / n;
        let yc = |r: usize| self.y[r] - mean;
        let (ts, ts2) = rows.iter().fold((0.0, 0.0), |(a, b), &r| (a + yc(r), b + yc(r) * yc(r)));
        let parent = sd_of(self.y, rows);
        if !(parent > 0.0) {
            return None;
        }
        let floor = 1e-12 * parent;
        let tol = TIE_TOLERANCE * parent;
        let mut best: Option<(f64, Split)> = None;
        for f in 0..self.cols.len() {
            let x = &self.cols[f];
            match self.kinds[f] {
                FeatureKind::Numeric => {
                    let mut sorted = rows.to_vec();
                    sorted.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
                    let (mut s, mut s2) = (0.0, 0.0);
                    for i in 0..sorted.len() - 1 {
                        let yi = yc(sorted[i]);
                        s += yi;
                        s2 += yi * yi;
                        let (a, b) = (x[sorted[i]], x[sorted[i + 1]]);
                        let nl = i + 1;
                        if a == b || nl < min_leaf || sorted.len() - nl < min_leaf {
                            continue;
                        }
                        let (nl, nr) = (nl as f64, n - nl as f64);
                        let sdr = parent - nl / n * sd(s, s2, nl) - nr / n * sd(ts - s, ts2 - s2, nr);
                        if sdr > floor && best.as_ref().is_none_or(|(g, _)| sdr > *g + tol) {
                            let mut t = a + (b - a) / 2.0;
                            if !(t < b) {
                                t = a;
                            }
                            best = Some((sdr, Split::Numeric { feature: f, threshold: t }));
                        }
                    }
                }
                FeatureKind::Categorical => {
                    // (category, count, sum, sum of squares)
                    let mut sorted = rows.to_vec();
                    sorted.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
                    let mut cats: Vec<(f64, usize, f64, f64)> = Vec::new();
                    for &r in &sorted {
                        let yi = yc(r);
                        match cats.last_mut() {
                            Some(c) if c.0 == x[r] => {
                                c.1 += 1;
                                c.2 += yi;
                                c.3 += yi * yi;
                            }
                            _ => cats.push((x[r], 1, yi, yi * yi)),
                        }
                    }
                    if cats.len() < 2 {
                        continue;
                    }
                    if cats.len() <= MAX_EXACT_CATEGORIES {
                        cats.sort_by(|a, b| (a.2 / a.1 as f64).total_cmp(&(b.2 / b.1 as f64)).then(a.0.total_cmp(&b.0)));
                    } else {
                        cats.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.total_cmp(&b.0)));
                    }
                    let (mut c, mut s, mut s2) = (0usize, 0.0, 0.0);
                    for k in 0..cats.len() - 1 {
                        c += cats[k].1;
                        s += cats[k].2;
                        s2 += cats[k].3;
                        if c < min_leaf || rows.len() - c < min_leaf {
                            continue;
                        }
                        let (nl, nr) = (c as f64, n - c as f64);
                        let sdr = parent - nl / n * sd(s, s2, nl) - nr / n * sd(ts - s, ts2 - s2, nr);
                        if sdr > floor && best.as_ref().is_none_or(|(g, _)| sdr > *g + tol) {
                            let mut left: Vec<f64> = cats[..=k].iter().map(|c| c.0).collect();
                            let mut right: Vec<f64> = cats[k + 1..].iter().map(|c| c.0).collect();
                            left.sort_by(f64::total_cmp);
                            right.sort_by(f64::total_cmp);
                            best = Some((
                                sdr,
                                Split::Categorical { feature: f, left, right, unseen_left: nl >= nr },
                            ));
                        }
                    }
                }
            }
        }
        best.map(|(_, s)| s)
    }

    /// Numeric features tested anywhere below node `i` (inclusive).
    fn subtree_features(&self, i: usize, out: &mut BTreeSet<usize>) {
        if let Some(s) = &self.nodes[i].split {
            if self.kinds[s.feature()] == FeatureKind::Numeric {
                out.insert(s.feature());
            }
            self.subtree_features(self.nodes[i].left, out);
            self.subtree_features(self.nodes[i].right, out);
        }
    }

    fn fit_models(&mut self) {
        for i in 0..self.nodes.len() {
            let mut feats = BTreeSet::new();
            self.subtree_features(i, &mut feats);
            let features: Vec<usize> = feats.into_iter().collect();
            let rows = &self.rows[i];
            let ys: Vec<f64> = rows.iter().map(|&r| self.y[r]).collect();
            let cols: Vec<Vec<f64>> = features
                .iter()
                .map(|&f| rows.iter().map(|&r| self.cols[f][r]).collect())
                .collect();
            let refs: Vec<&[f64]> = cols.iter().map(Vec::as_slice).collect();
            let fit = least_squares(&refs, &ys);
            self.nodes[i].model = NodeModel { features, intercept: fit.intercept, coefs: fit.coefs };
        }
    }

    /// Error of node `i`'s own model on its rows, inflated for the number
    /// of parameters.
    fn model_error(&self, i: usize) -> f64 {
        let rows = &self.rows[i];
        let n = rows.len() as f64;
        let m = &self.nodes[i].model;
        let abs: f64 = rows
            .iter()
            .map(|&r| {
                let fit = m.intercept
                    + m.features.iter().zip(&m.coefs).map(|(&f, b)| b * self.cols[f][r]).sum::<f64>();
                (self.y[r] - fit).abs()
            })
            .sum();
        let v = (m.features.len() + 1) as f64;
        let factor = if n <= v { 10.0 } else { (n + v) / (n - v) };
        abs / n * factor
    }

    /// Bottom-up pruning; returns the estimated error of the (possibly
    /// pruned) subtree at `i`.
    fn prune(&mut self, i: usize, tolerance: f64) -> f64 {
        let own = self.model_error(i);
        if self.nodes[i].split.is_none() {
            return own;
        }
        let (l, r) = (self.nodes[i].left, self.nodes[i].right);
        let el = self.prune(l, tolerance);
        let er = self.prune(r, tolerance);
        let (nl, nr) = (self.nodes[l].n as f64, self.nodes[r].n as f64);
        let subtree = (nl * el + nr * er) / (nl + nr);
        if own <= subtree + tolerance {
            self.nodes[i].split = None;
            own
        } else {
            subtree
        }
    }

    /// Drops nodes unreachable after pruning, keeping pre-order.
    fn compact(&self) -> Vec<M5Node> {
        fn walk(src: &[M5Node], i: usize, out: &mut Vec<M5Node>) -> usize {
            let id = out.len();
            let mut node = src[i].clone();
            let split = node.split.is_some();
            node.left = 0;
            node.right = 0;
            out.push(node);
            if split {
                let l = walk(src, src[i].left, out);
                let r = walk(src, src[i].right, out);
                out[id].left = l;
                out[id].right = r;
            }
            id
        }
        let mut out = Vec::new();
        walk(&self.nodes, 0, &mut out);
        out
    }
}

pub(crate) fn fit_m5(cols: &[Vec<f64>], kinds: &[FeatureKind], y: &[f64], p: &M5Params) -> Result<M5Model> {
    if y.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if !(p.sdr_stop >= 0.0 && p.smoothing_k >= 0.0) {
        return Err(Error::Config("sdr_stop and smoothing_k must be non-negative".into()));
    }
    let all: Vec<usize> = (0..y.len()).collect();
    let root_sd = sd_of(y, &all);
    let mut b = Builder {
        cols,
        kinds,
        y,
        p,
        stop_sd: p.sdr_stop * root_sd,
        nodes: Vec::new(),
        rows: Vec::new(),
    };
    b.grow(all);
    b.fit_models();
    let before = b.nodes.len();
    if p.prune {
        b.prune(0, 1e-10 * root_sd);
    }
    let nodes = b.compact();
    Ok(M5Model { pruned: before - nodes.len(), nodes, smoothing_k: p.smoothing_k })
}
