//! CART regression trees grown by variance reduction.
//!
//! Rows are presorted once per feature. A node owns the same contiguous range
//! in every per-feature index array, so a split is a stable partition of
//! those ranges and each split search is a single linear scan. Bootstrap
//! resamples are expressed as integer row weights.

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::FeatureKind;
use crate::error::{Error, Result};

/// Above this many distinct values a categorical split only considers
/// prefixes of the frequency-ordered categories.
/// Relative gain difference below which two candidate splits tie.
pub(crate) const TIE_TOLERANCE: f64 = 1e-10;

pub const MAX_EXACT_CATEGORIES: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CartParams {
    pub min_leaf: usize,
    pub max_depth: Option<usize>,
}

impl Default for CartParams {
    fn default() -> Self {
        CartParams { min_leaf: 5, max_depth: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Split {
    /// `x <= threshold` goes left.
    Numeric { feature: usize, threshold: f64 },
    /// Values in `left` go left, values in `right` go right; values seen in
    /// neither during training follow the heavier branch.
    Categorical {
        feature: usize,
        left: Vec<f64>,
        right: Vec<f64>,
        unseen_left: bool,
    },
}

impl Split {
    pub fn feature(&self) -> usize {
        match *self {
            Split::Numeric { feature, .. } | Split::Categorical { feature, .. } => feature,
        }
    }

    pub fn goes_left(&self, x: &[f64]) -> bool {
        match self {
            Split::Numeric { feature, threshold } => x[*feature] <= *threshold,
            Split::Categorical { feature, left, right, unseen_left } => {
                let v = x[*feature];
                if left.binary_search_by(|c| c.total_cmp(&v)).is_ok() {
                    true
                } else if right.binary_search_by(|c| c.total_cmp(&v)).is_ok() {
                    false
                } else {
                    *unseen_left
                }
            }
        }
    }
}

/// Tree node in pre-order storage. `left`/`right` are node indices and are
/// meaningful only when `split` is set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub split: Option<Split>,
    pub left: usize,
    pub right: usize,
    /// Mean label of the node's training rows.
    pub value: f64,
    /// Training weight reaching the node (row count without bootstrap).
    pub n: f64,
    /// Population variance of the node's training labels.
    pub impurity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.nodes[self.leaf_of(x)].value
    }

    /// Index of the leaf `x` falls into.
    pub fn leaf_of(&self, x: &[f64]) -> usize {
        let mut i = 0;
        while let Some(split) = &self.nodes[i].split {
            i = if split.goes_left(x) { self.nodes[i].left } else { self.nodes[i].right };
        }
        i
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.split.is_none()).count()
    }

    pub fn depth(&self) -> usize {
        fn go(t: &Tree, i: usize) -> usize {
            match t.nodes[i].split {
                None => 0,
                Some(_) => 1 + go(t, t.nodes[i].left).max(go(t, t.nodes[i].right)),
            }
        }
        go(self, 0)
    }

    /// Children point forward and in range, split features exist.
    pub(crate) fn is_consistent(&self, d: usize) -> bool {
        !self.nodes.is_empty()
            && self.nodes.iter().enumerate().all(|(i, n)| match &n.split {
                None => true,
                Some(s) => {
                    s.feature() < d
                        && n.left > i
                        && n.right > i
                        && n.left < self.nodes.len()
                        && n.right < self.nodes.len()
                }
            })
    }
}

/// Row indices sorted by value (then index) for every feature.
pub(crate) struct Presorted {
    order: Vec<Vec<u32>>,
}

impl Presorted {
    pub fn new(cols: &[Vec<f64>]) -> Self {
        let order = cols
            .iter()
            .map(|c| {
                let mut idx: Vec<u32> = (0..c.len() as u32).collect();
                idx.sort_by(|&a, &b| c[a as usize].total_cmp(&c[b as usize]).then(a.cmp(&b)));
                idx
            })
            .collect();
        Presorted { order }
    }
}

pub(crate) struct GrowParams {
    pub min_leaf: usize,
    pub max_depth: Option<usize>,
    /// Features examined per split.
    pub mtry: usize,
}

#[derive(Debug, Clone)]
struct Candidate {
    gain: f64,
    feature: usize,
    /// Numeric threshold, or prefix length for categorical splits.
    key: f64,
    split: Split,
}

impl Candidate {
    /// Gains within `tol` of each other are ties.
    fn beats(&self, other: &Candidate, tol: f64) -> bool {
        self.gain > other.gain + tol
            || (self.gain >= other.gain - tol
                && (self.feature < other.feature || (self.feature == other.feature && self.key < other.key)))
    }
}

struct Grower<'a> {
    cols: &'a [Vec<f64>],
    kinds: &'a [FeatureKind],
    y: &'a [f64],
    w: &'a [f64],
    params: &'a GrowParams,
    idx: Vec<Vec<u32>>,
    goes_left: Vec<bool>,
    scratch: Vec<u32>,
}

/// Fits one tree. `weights[i]` is the multiplicity of row `i` (0 excludes
/// the row). With `rng` set, each split examines a random subset of
/// `params.mtry` features, extended one feature at a time if none of them
/// yields a valid split.
pub(crate) fn grow(
    cols: &[Vec<f64>],
    kinds: &[FeatureKind],
    y: &[f64],
    weights: &[f64],
    presorted: &Presorted,
    params: &GrowParams,
    mut rng: Option<&mut ChaCha8Rng>,
) -> Tree {
    let idx: Vec<Vec<u32>> = presorted
        .order
        .iter()
        .map(|o| o.iter().copied().filter(|&r| weights[r as usize] > 0.0).collect())
        .collect();
    let active = idx.first().map_or_else(
        || (0..y.len() as u32).filter(|&r| weights[r as usize] > 0.0).count(),
        Vec::len,
    );
    let mut g = Grower {
        cols,
        kinds,
        y,
        w: weights,
        params,
        idx,
        goes_left: vec![false; y.len()],
        scratch: Vec::with_capacity(active),
    };
    // Without features there is nothing to split; the root covers all rows.
    let root_rows: Vec<u32> = if g.idx.is_empty() {
        (0..y.len() as u32).filter(|&r| weights[r as usize] > 0.0).collect()
    } else {
        Vec::new()
    };

    let d = cols.len();
    let mut order: Vec<usize> = (0..d).collect();
    let mut nodes: Vec<Node> = Vec::new();
    // (lo, hi, depth, parent link)
    let mut stack: Vec<(usize, usize, usize, Option<(usize, bool)>)> = vec![(0, active, 0, None)];
    while let Some((lo, hi, depth, parent)) = stack.pop() {
        let rows: &[u32] = if d == 0 { &root_rows } else { &g.idx[0][lo..hi] };
        let (mut sw, mut sy) = (0.0, 0.0);
        let (mut ymin, mut ymax) = (f64::INFINITY, f64::NEG_INFINITY);
        for &r in rows {
            let (wi, yi) = (g.w[r as usize], g.y[r as usize]);
            sw += wi;
            sy += wi * yi;
            ymin = ymin.min(yi);
            ymax = ymax.max(yi);
        }
        let mean = if ymin == ymax { ymin } else { sy / sw };
        let impurity = rows
            .iter()
            .map(|&r| g.w[r as usize] * (g.y[r as usize] - mean).powi(2))
            .sum::<f64>()
            / sw;
        let id = nodes.len();
        nodes.push(Node { split: None, left: 0, right: 0, value: mean, n: sw, impurity });
        if let Some((p, is_left)) = parent {
            if is_left {
                nodes[p].left = id;
            } else {
                nodes[p].right = id;
            }
        }

        let min_leaf = params.min_leaf as f64;
        if d == 0
            || params.max_depth.is_some_and(|m| depth >= m)
            || sw < 2.0 * min_leaf
            || ymin == ymax
        {
            continue;
        }

        if let Some(r) = rng.as_deref_mut() {
            order.shuffle(r);
        }
        let first = if rng.is_some() { params.mtry.clamp(1, d) } else { d };
        let mut best: Option<Candidate> = None;
        let mut examined: Vec<usize> = order[..first].to_vec();
        examined.sort_unstable();
        for &f in &examined {
            g.consider(f, lo, hi, sw, mean, impurity, &mut best);
        }
        let mut next = first;
        while best.is_none() && next < d {
            g.consider(order[next], lo, hi, sw, mean, impurity, &mut best);
            next += 1;
        }
        let Some(best) = best else { continue };

        for &r in &g.idx[0][lo..hi] {
            let r = r as usize;
            g.goes_left[r] = match &best.split {
                Split::Numeric { feature, threshold } => g.cols[*feature][r] <= *threshold,
                Split::Categorical { feature, left, .. } => {
                    let v = g.cols[*feature][r];
                    left.binary_search_by(|c| c.total_cmp(&v)).is_ok()
                }
            };
        }
        let mut n_left = 0;
        for f in 0..d {
            n_left = g.partition(f, lo, hi);
        }
        nodes[id].split = Some(best.split);
        stack.push((lo + n_left, hi, depth + 1, Some((id, false))));
        stack.push((lo, lo + n_left, depth + 1, Some((id, true))));
    }
    Tree { nodes }
}

impl Grower<'_> {
    /// Stable partition of feature `f`'s range by `goes_left`; returns the
    /// number of rows moved left.
    fn partition(&mut self, f: usize, lo: usize, hi: usize) -> usize {
        self.scratch.clear();
        let slice = &mut self.idx[f][lo..hi];
        let mut k = 0;
        for i in 0..slice.len() {
            let r = slice[i];
            if self.goes_left[r as usize] {
                slice[k] = r;
                k += 1;
            } else {
                self.scratch.push(r);
            }
        }
        slice[k..].copy_from_slice(&self.scratch);
        k
    }

    #[allow(clippy::too_many_arguments)]
    fn consider(
        &self,
        f: usize,
        lo: usize,
        hi: usize,
        sw: f64,
        mean: f64,
        impurity: f64,
        best: &mut Option<Candidate>,
    ) {
        // Gains that differ only by rounding (e.g. two features inducing the
        // same partition) must not depend on the label offset.
        let tol = TIE_TOLERANCE * impurity;
        let cand = match self.kinds[f] {
            FeatureKind::Numeric => self.best_numeric(f, lo, hi, sw, mean, tol),
            FeatureKind::Categorical => self.best_categorical(f, lo, hi, sw, mean, tol),
        };
        if let Some(c) = cand {
            // Gains at rounding level of a (near-)pure node are not splits.
            if c.gain > 1e-12 * impurity && best.as_ref().is_none_or(|b| c.beats(b, tol)) {
                *best = Some(c);
            }
        }
    }

    fn best_numeric(&self, f: usize, lo: usize, hi: usize, sw: f64, mean: f64, tol: f64) -> Option<Candidate> {
        let x = &self.cols[f];
        let rows = &self.idx[f][lo..hi];
        let min_leaf = self.params.min_leaf as f64;
        let total: f64 = rows
            .iter()
            .map(|&r| self.w[r as usize] * (self.y[r as usize] - mean))
            .sum();
        let base = total * total / sw;
        let (mut wl, mut sl) = (0.0, 0.0);
        let mut best: Option<(f64, f64)> = None;
        for i in 0..rows.len() - 1 {
            let r = rows[i] as usize;
            wl += self.w[r];
            sl += self.w[r] * (self.y[r] - mean);
            let (a, b) = (x[r], x[rows[i + 1] as usize]);
            if a == b {
                continue;
            }
            let wr = sw - wl;
            if wl < min_leaf || wr < min_leaf {
                continue;
            }
            let sr = total - sl;
            let gain = (sl * sl / wl + sr * sr / wr - base) / sw;
            if best.is_none_or(|(g, _)| gain > g + tol) {
                let mut t = a + (b - a) / 2.0;
                if !(t < b) {
                    t = a;
                }
                best = Some((gain, t));
            }
        }
        best.map(|(gain, threshold)| Candidate {
            gain,
            feature: f,
            key: threshold,
            split: Split::Numeric { feature: f, threshold },
        })
    }

    fn best_categorical(&self, f: usize, lo: usize, hi: usize, sw: f64, mean: f64, tol: f64) -> Option<Candidate> {
        let x = &self.cols[f];
        let rows = &self.idx[f][lo..hi];
        // (category, weight, centred sum); rows are sorted by value.
        let mut cats: Vec<(f64, f64, f64)> = Vec::new();
        for &r in rows {
            let r = r as usize;
            let (wi, yi) = (self.w[r], self.y[r] - mean);
            match cats.last_mut() {
                Some(last) if last.0 == x[r] => {
                    last.1 += wi;
                    last.2 += wi * yi;
                }
                _ => cats.push((x[r], wi, wi * yi)),
            }
        }
        if cats.len() < 2 {
            return None;
        }
        if cats.len() <= MAX_EXACT_CATEGORIES {
            // Ordering by mean label makes the best prefix the best subset.
            cats.sort_by(|a, b| (a.2 / a.1).total_cmp(&(b.2 / b.1)).then(a.0.total_cmp(&b.0)));
        } else {
            cats.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.total_cmp(&b.0)));
        }
        let min_leaf = self.params.min_leaf as f64;
        let total: f64 = cats.iter().map(|c| c.2).sum();
        let base = total * total / sw;
        let (mut wl, mut sl) = (0.0, 0.0);
        let mut best: Option<(f64, usize, f64)> = None;
        for (k, c) in cats[..cats.len() - 1].iter().enumerate() {
            wl += c.1;
            sl += c.2;
            let wr = sw - wl;
            if wl < min_leaf || wr < min_leaf {
                continue;
            }
            let sr = total - sl;
            let gain = (sl * sl / wl + sr * sr / wr - base) / sw;
            if best.is_none_or(|(g, _, _)| gain > g + tol) {
                best = Some((gain, k + 1, wl));
            }
        }
        let (gain, prefix, wl) = best?;
        let mut left: Vec<f64> = cats[..prefix].iter().map(|c| c.0).collect();
        let mut right: Vec<f64> = cats[prefix..].iter().map(|c| c.0).collect();
        left.sort_by(f64::total_cmp);
        right.sort_by(f64::total_cmp);
        Some(Candidate {
            gain,
            feature: f,
            key: prefix as f64,
            split: Split::Categorical { feature: f, left, right, unseen_left: wl >= sw - wl },
        })
    }
}

pub(crate) fn fit_cart(cols: &[Vec<f64>], kinds: &[FeatureKind], y: &[f64], p: &CartParams) -> Result<Tree> {
    if y.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if p.min_leaf == 0 {
        return Err(Error::Config("min_leaf must be at least 1".into()));
    }
    let params = GrowParams { min_leaf: p.min_leaf, max_depth: p.max_depth, mtry: cols.len() };
    Ok(grow(cols, kinds, y, &vec![1.0; y.len()], &Presorted::new(cols), &params, None))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fit(cols: Vec<Vec<f64>>, kinds: Vec<FeatureKind>, y: Vec<f64>, min_leaf: usize) -> Tree {
        fit_cart(&cols, &kinds, &y, &CartParams { min_leaf, max_depth: None }).unwrap()
    }

    #[test]
    fn step_function_gives_one_split_with_exact_means() {
        let rsrp: Vec<f64> = (0..40).map(|i| if i < 20 { -110.0 + i as f64 * 0.5 } else { -90.0 + i as f64 * 0.5 }).collect();
        let y: Vec<f64> = rsrp.iter().map(|&r| if r < -95.0 { 2.0 } else { 8.0 }).collect();
        let t = fit(vec![rsrp], vec![FeatureKind::Numeric], y, 1);
        assert_eq!(t.leaf_count(), 2);
        let Some(Split::Numeric { threshold, .. }) = &t.nodes[0].split else { panic!() };
        assert!(*threshold > -100.5 && *threshold < -80.0);
        assert_eq!(t.nodes[t.nodes[0].left].value, 2.0);
        assert_eq!(t.nodes[t.nodes[0].right].value, 8.0);
    }

    #[test]
    fn constant_labels_give_single_leaf() {
        let t = fit(vec![(0..30).map(f64::from).collect()], vec![FeatureKind::Numeric], vec![3.3; 30], 1);
        assert_eq!(t.leaf_count(), 1);
        assert_eq!(t.predict(&[100.0]), 3.3);
    }

    #[test]
    fn min_leaf_equal_to_n_gives_global_mean() {
        let y: Vec<f64> = (0..10).map(|i| (i * i) as f64).collect();
        let mean = y.iter().sum::<f64>() / 10.0;
        let t = fit(vec![(0..10).map(f64::from).collect()], vec![FeatureKind::Numeric], y, 10);
        assert_eq!(t.nodes.len(), 1);
        assert!((t.predict(&[3.0]) - mean).abs() < 1e-12);
    }

    #[test]
    fn max_depth_limits_growth() {
        let x: Vec<f64> = (0..64).map(f64::from).collect();
        let y: Vec<f64> = x.iter().map(|v| v * v).collect();
        let t = fit_cart(&[x], &[FeatureKind::Numeric], &y, &CartParams { min_leaf: 1, max_depth: Some(3) }).unwrap();
        assert_eq!(t.depth(), 3);
        assert_eq!(t.leaf_count(), 8);
    }

    #[test]
    fn storage_is_pre_order() {
        let x: Vec<f64> = (0..32).map(f64::from).collect();
        let y: Vec<f64> = x.iter().map(|v| (v * 0.7).sin()).collect();
        let t = fit(vec![x], vec![FeatureKind::Numeric], y, 2);
        fn walk(t: &Tree, i: usize, out: &mut Vec<usize>) {
            out.push(i);
            if t.nodes[i].split.is_some() {
                walk(t, t.nodes[i].left, out);
                walk(t, t.nodes[i].right, out);
            }
        }
        let mut seen = Vec::new();
        walk(&t, 0, &mut seen);
        assert_eq!(seen, (0..t.nodes.len()).collect::<Vec<_>>());
    }

    #[test]
    fn categorical_split_groups_by_mean_and_routes_unseen_to_majority() {
        // Categories 1 and 3 share a high mean, 2 is low and rare.
        let mut c = Vec::new();
        let mut y = Vec::new();
        for i in 0..30 {
            let cat = [1.0, 3.0, 1.0, 3.0, 2.0][i % 5];
            c.push(cat);
            y.push(if cat == 2.0 { 0.0 } else { 10.0 });
        }
        let t = fit(vec![c], vec![FeatureKind::Categorical], y, 1);
        let Some(Split::Categorical { left, right, unseen_left, .. }) = &t.nodes[0].split else { panic!() };
        assert_eq!(left, &vec![2.0]);
        assert_eq!(right, &vec![1.0, 3.0]);
        assert!(!unseen_left);
        assert_eq!(t.predict(&[7.0]), 10.0);
        assert_eq!(t.predict(&[2.0]), 0.0);
    }

    #[test]
    fn ties_prefer_first_feature() {
        let x: Vec<f64> = (0..20).map(f64::from).collect();
        let y: Vec<f64> = x.iter().map(|v| if *v < 10.0 { 0.0 } else { 1.0 }).collect();
        let t = fit(vec![x.clone(), x], vec![FeatureKind::Numeric; 2], y, 1);
        assert_eq!(t.nodes[0].split.as_ref().unwrap().feature(), 0);
    }

    #[test]
    fn weighted_rows_match_duplicated_rows() {
        let x: Vec<f64> = vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let y: Vec<f64> = vec![1.0, 4.0, 2.0, 8.0, 5.0, 7.0];
        let w = vec![2.0, 0.0, 1.0, 3.0, 1.0, 1.0];
        let p = GrowParams { min_leaf: 1, max_depth: None, mtry: 1 };
        let a = grow(std::slice::from_ref(&x), &[FeatureKind::Numeric], &y, &w, &Presorted::new(std::slice::from_ref(&x)), &p, None);
        let mut xd = Vec::new();
        let mut yd = Vec::new();
        for i in 0..x.len() {
            for _ in 0..w[i] as usize {
                xd.push(x[i]);
                yd.push(y[i]);
            }
        }
        let b = fit(vec![xd], vec![FeatureKind::Numeric], yd, 1);
        for v in [0.0, 1.5, 2.5, 3.5, 4.5, 5.5, 7.0] {
            assert_eq!(a.predict(&[v]), b.predict(&[v]));
        }
    }
}
