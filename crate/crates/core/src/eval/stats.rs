use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bins with fewer samples are flagged as unreliable.
pub const MIN_BIN_COUNT: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bin {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation (0 for a single sample).
    pub sd: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub low_count: bool,
}

/// Mean response per equal-width bin of the indicator, with a normal
/// approximation 95% confidence interval. Empty bins are omitted.
pub fn binned_impact(pairs: &[(f64, f64)], n_bins: usize) -> Result<Vec<Bin>> {
    if n_bins == 0 {
        return Err(Error::Config("n_bins must be at least 1".into()));
    }
    if pairs.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if pairs.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(Error::NonFinite("binned values"));
    }
    let (min, max) = pairs
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), (x, _)| (a.min(*x), b.max(*x)));
    let width = (max - min) / n_bins as f64;
    let mut members: Vec<Vec<f64>> = vec![Vec::new(); n_bins];
    for &(x, y) in pairs {
        let b = if width > 0.0 { (((x - min) / width) as usize).min(n_bins - 1) } else { 0 };
        members[b].push(y);
    }
    Ok(members
        .into_iter()
        .enumerate()
        .filter(|(_, m)| !m.is_empty())
        .map(|(b, m)| {
            let n = m.len();
            let mean = m.iter().sum::<f64>() / n as f64;
            let sd = if n > 1 {
                (m.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
            } else {
                0.0
            };
            let half = 1.96 * sd / (n as f64).sqrt();
            let lo = min + width * b as f64;
            let hi = if b + 1 == n_bins { max } else { min + width * (b + 1) as f64 };
            Bin { lo, hi, n, mean, sd, ci_lo: mean - half, ci_hi: mean + half, low_count: n < MIN_BIN_COUNT }
        })
        .collect())
}

pub fn binned_csv(indicator: &str, bins: &[Bin]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["indicator", "lo", "hi", "n", "mean", "ci_lo", "ci_hi", "low_count"])?;
    for b in bins {
        w.write_record([
            indicator.to_string(),
            b.lo.to_string(),
            b.hi.to_string(),
            b.n.to_string(),
            b.mean.to_string(),
            b.ci_lo.to_string(),
            b.ci_hi.to_string(),
            b.low_count.to_string(),
        ])?;
    }
    super::finish(w)
}

/// Empirical CDF as `(x, F(x))` over the sorted distinct values; repeated
/// values keep their last rank.
pub fn ecdf(values: &[f64]) -> Result<Vec<(f64, f64)>> {
    if values.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("ecdf values"));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (i, x) in v.into_iter().enumerate() {
        let f = (i + 1) as f64 / n;
        match out.last_mut() {
            Some(last) if last.0 == x => last.1 = f,
            _ => out.push((x, f)),
        }
    }
    Ok(out)
}

pub fn ecdf_csv(series: &[(String, Vec<(f64, f64)>)]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["series", "x", "F"])?;
    for (name, points) in series {
        for (x, f) in points {
            w.write_record([name.clone(), x.to_string(), f.to_string()])?;
        }
    }
    super::finish(w)
}
