//! Per-position multi-operator selection statistics.
//!
//! Context readings of all operators are bucketed onto a shared time base.
//! At each instant an oracle picks the operator with the best value of an
//! indicator; the report compares each operator's own mean with the mean of
//! the per-instant winners.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Better;
use crate::trace::{ContextSample, DriveTrace, Tech};

/// Default alignment bucket: the transmission cadence.
pub const DEFAULT_BUCKET_S: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Indicator {
    Rsrp,
    Rsrq,
    Sinr,
    Cqi,
    Rtt,
    Ptx,
}

impl Indicator {
    pub const ALL: [Indicator; 6] = [
        Indicator::Rsrp,
        Indicator::Rsrq,
        Indicator::Sinr,
        Indicator::Cqi,
        Indicator::Rtt,
        Indicator::Ptx,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Indicator::Rsrp => "rsrp",
            Indicator::Rsrq => "rsrq",
            Indicator::Sinr => "sinr",
            Indicator::Cqi => "cqi",
            Indicator::Rtt => "rtt",
            Indicator::Ptx => "ptx",
        }
    }

    pub fn better(self) -> Better {
        match self {
            Indicator::Rtt | Indicator::Ptx => Better::Min,
            _ => Better::Max,
        }
    }

    fn value(self, c: &ContextSample) -> Option<f64> {
        match self {
            Indicator::Rsrp => c.rsrp,
            Indicator::Rsrq => c.rsrq,
            Indicator::Sinr => c.sinr,
            Indicator::Cqi => c.cqi.map(f64::from),
            Indicator::Rtt => c.rtt,
            Indicator::Ptx => c.ptx,
        }
    }
}

impl FromStr for Indicator {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Indicator::ALL
            .into_iter()
            .find(|i| i.name() == s)
            .ok_or_else(|| format!("unknown indicator '{s}'"))
    }
}

impl fmt::Display for Indicator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Per-operator values on a shared time base; `values[m][k]` is operator
/// `mnos[m]` at `instants[k]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndicatorSeries {
    pub indicator: Indicator,
    pub mnos: Vec<String>,
    pub instants: Vec<f64>,
    pub values: Vec<Vec<Option<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alignment {
    pub mnos: Vec<String>,
    pub instants: Vec<f64>,
    pub series: Vec<IndicatorSeries>,
    /// `lte[m][k]`: operator `m` reported an LTE context within instant `k`.
    pub lte: Vec<Vec<bool>>,
    pub warnings: Vec<String>,
}

impl Alignment {
    pub fn series(&self, indicator: Indicator) -> Option<&IndicatorSeries> {
        self.series.iter().find(|s| s.indicator == indicator)
    }
}

/// Buckets every operator's context readings onto common instants of width
/// `bucket` (mean within a bucket). Traces sharing a `run_id` share a clock
/// and are aligned together; separate runs are concatenated. Only the time
/// span covered by all operators is kept.
pub fn align_instants(traces: &[DriveTrace], bucket: f64) -> Result<Alignment> {
    if !(bucket > 0.0 && bucket.is_finite()) {
        return Err(Error::Config(format!("bucket must be positive, got {bucket}")));
    }
    let mnos: Vec<String> = traces
        .iter()
        .flat_map(|t| t.mnos.iter().cloned())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut runs: BTreeMap<&str, Vec<&DriveTrace>> = BTreeMap::new();
    for t in traces {
        runs.entry(t.run_id.as_str()).or_default().push(t);
    }

    let n_mno = mnos.len();
    let mut out = Alignment {
        mnos: mnos.clone(),
        instants: Vec::new(),
        series: Indicator::ALL
            .iter()
            .map(|&indicator| IndicatorSeries {
                indicator,
                mnos: mnos.clone(),
                instants: Vec::new(),
                values: vec![Vec::new(); n_mno],
            })
            .collect(),
        lte: vec![Vec::new(); n_mno],
        warnings: Vec::new(),
    };

    for (run, members) in runs {
        let contexts: Vec<&ContextSample> = members.iter().flat_map(|t| t.contexts.iter()).collect();
        let mut span: Vec<Option<(f64, f64)>> = vec![None; n_mno];
        for c in &contexts {
            let m = mnos.binary_search(&c.mno).expect("operator declared");
            span[m] = Some(match span[m] {
                None => (c.t, c.t),
                Some((a, b)) => (a.min(c.t), b.max(c.t)),
            });
        }
        let (start, end) = span.iter().fold((f64::NEG_INFINITY, f64::INFINITY), |(s, e), sp| {
            match sp {
                Some((a, b)) => (s.max(*a), e.min(*b)),
                None => (f64::INFINITY, f64::NEG_INFINITY),
            }
        });
        if !(start <= end) {
            let msg = format!("run '{run}': operator time ranges do not overlap; no instants aligned");
            log::warn!("{msg}");
            out.warnings.push(msg);
            continue;
        }
        let k0 = (start / bucket).floor() as i64;
        let k1 = (end / bucket).floor() as i64;
        let n = (k1 - k0 + 1) as usize;

        // sums[indicator][mno][k] = (sum, count)
        let mut sums = vec![vec![vec![(0.0f64, 0u32); n]; n_mno]; Indicator::ALL.len()];
        let mut lte = vec![vec![false; n]; n_mno];
        for c in &contexts {
            let k = (c.t / bucket).floor() as i64;
            if k < k0 || k > k1 {
                continue;
            }
            let k = (k - k0) as usize;
            let m = mnos.binary_search(&c.mno).expect("operator declared");
            if c.tech == Tech::Lte {
                lte[m][k] = true;
            }
            for (ii, ind) in Indicator::ALL.iter().enumerate() {
                if let Some(v) = ind.value(c) {
                    let cell = &mut sums[ii][m][k];
                    cell.0 += v;
                    cell.1 += 1;
                }
            }
        }
        let instants: Vec<f64> = (k0..=k1).map(|k| k as f64 * bucket).collect();
        out.instants.extend(&instants);
        for (ii, series) in out.series.iter_mut().enumerate() {
            series.instants.extend(&instants);
            for m in 0..n_mno {
                series.values[m].extend(
                    sums[ii][m]
                        .iter()
                        .map(|&(s, c)| (c > 0).then(|| s / c as f64)),
                );
            }
        }
        for m in 0..n_mno {
            out.lte[m].extend(&lte[m]);
        }
    }
    if out.instants.is_empty() && out.warnings.is_empty() {
        out.warnings.push("no instants aligned".into());
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub indicator: Indicator,
    pub mnos: Vec<String>,
    /// Each operator's mean over the retained instants where it reports.
    pub mean: Vec<Option<f64>>,
    /// Fraction of retained instants each operator wins.
    pub best_proportion: Vec<f64>,
    /// Mean of the per-instant winning values.
    pub multi_mean: Option<f64>,
    /// Winner per instant (`None` where every operator is missing).
    pub winners: Vec<Option<usize>>,
    pub retained: usize,
    pub excluded_all_missing: usize,
}

/// Per-instant oracle selection. Ties go to the operator listed first
/// (operators are kept sorted by id).
pub fn select_best(series: &IndicatorSeries, better: Better) -> SelectionReport {
    let n_mno = series.mnos.len();
    let n = series.instants.len();
    let mut winners = Vec::with_capacity(n);
    let mut wins = vec![0usize; n_mno];
    let mut own = vec![(0.0f64, 0usize); n_mno];
    let mut multi = 0.0;
    let mut retained = 0;
    for k in 0..n {
        let mut best: Option<(usize, f64)> = None;
        for m in 0..n_mno {
            if let Some(v) = series.values[m][k] {
                own[m].0 += v;
                own[m].1 += 1;
                if best.is_none_or(|(_, b)| better.beats(v, b)) {
                    best = Some((m, v));
                }
            }
        }
        match best {
            Some((m, v)) => {
                wins[m] += 1;
                multi += v;
                retained += 1;
                winners.push(Some(m));
            }
            None => winners.push(None),
        }
    }
    SelectionReport {
        indicator: series.indicator,
        mnos: series.mnos.clone(),
        mean: own
            .iter()
            .map(|&(s, c)| (c > 0).then(|| s / c as f64))
            .collect(),
        best_proportion: wins
            .iter()
            .map(|&w| if retained > 0 { w as f64 / retained as f64 } else { 0.0 })
            .collect(),
        multi_mean: (retained > 0).then(|| multi / retained as f64),
        winners,
        retained,
        excluded_all_missing: n - retained,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub mnos: Vec<String>,
    /// Fraction of instants with an LTE context, per operator.
    pub per_mno: Vec<f64>,
    /// Fraction of instants where at least one operator has LTE.
    pub combined: f64,
    pub instants: usize,
}

pub fn coverage(alignment: &Alignment) -> CoverageReport {
    let n = alignment.instants.len();
    let frac = |count: usize| if n == 0 { 0.0 } else { count as f64 / n as f64 };
    let per_mno = alignment
        .lte
        .iter()
        .map(|row| frac(row.iter().filter(|&&b| b).count()))
        .collect();
    let any = (0..n)
        .filter(|&k| alignment.lte.iter().any(|row| row[k]))
        .count();
    CoverageReport {
        mnos: alignment.mnos.clone(),
        per_mno,
        combined: frac(any),
        instants: n,
    }
}

/// Table with one row per indicator: `indicator, mean_<m>, best_<m> ..., multi`.
/// The coverage row leaves the `best` columns empty.
pub fn selection_table_csv(alignment: &Alignment) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["indicator".to_string()];
    for m in &alignment.mnos {
        header.push(format!("mean_{m}"));
        header.push(format!("best_{m}"));
    }
    header.push("multi".into());
    w.write_record(&header)?;

    let cov = coverage(alignment);
    let mut row = vec!["coverage".to_string()];
    for c in &cov.per_mno {
        row.push(c.to_string());
        row.push(String::new());
    }
    row.push(cov.combined.to_string());
    w.write_record(&row)?;

    let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for series in &alignment.series {
        let r = select_best(series, series.indicator.better());
        let mut row = vec![series.indicator.name().to_string()];
        for (mean, best) in r.mean.iter().zip(&r.best_proportion) {
            row.push(fmt(*mean));
            row.push(best.to_string());
        }
        row.push(fmt(r.multi_mean));
        w.write_record(&row)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("utf-8"))
}
