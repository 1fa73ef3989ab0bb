use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{ContextSample, DriveTrace, Feature, FeatureVector, GpsFix, LabeledSample, Tech};

/// Half the 10 s transmission cadence.
pub const DEFAULT_MAX_GAP_S: f64 = 5.0;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct JoinReport {
    pub transmissions: usize,
    pub joined: usize,
    /// No LTE context of the same operator within `max_gap`.
    pub dropped_no_context: usize,
    /// The trace has no GPS fixes to position the transmission.
    pub dropped_no_position: usize,
}

/// Linear interpolation between the two fixes bracketing `t`; clamps to the
/// first/last fix outside the covered time range.
pub fn interpolate_fix(fixes: &[GpsFix], t: f64) -> Option<GpsFix> {
    let first = fixes.first()?;
    let last = fixes.last()?;
    if t <= first.t {
        return Some(GpsFix { t, ..*first });
    }
    if t >= last.t {
        return Some(GpsFix { t, ..*last });
    }
    let hi = fixes.partition_point(|f| f.t <= t);
    let (a, b) = (&fixes[hi - 1], &fixes[hi]);
    if a.t == t {
        return Some(*a);
    }
    let w = (t - a.t) / (b.t - a.t);
    let lerp = |x: f64, y: f64| x + (y - x) * w;
    Some(GpsFix {
        t,
        lat: lerp(a.lat, b.lat),
        lon: lerp(a.lon, b.lon),
        speed: lerp(a.speed, b.speed),
    })
}

/// Index of the nearest time in a sorted slice; ties go to the earlier entry.
fn nearest(times: &[f64], t: f64) -> Option<usize> {
    if times.is_empty() {
        return None;
    }
    let hi = times.partition_point(|&x| x < t);
    match (hi.checked_sub(1), (hi < times.len()).then_some(hi)) {
        (Some(lo), Some(hi)) => Some(if t - times[lo] <= times[hi] - t { lo } else { hi }),
        (Some(lo), None) => Some(lo),
        (None, Some(hi)) => Some(hi),
        (None, None) => None,
    }
}

pub(crate) fn features_from(context: &ContextSample, payload: f64, speed: f64) -> FeatureVector {
    let mut fv = FeatureVector::default();
    fv.set(Feature::Payload, Some(payload));
    fv.set(Feature::Rsrp, context.rsrp);
    fv.set(Feature::Rsrq, context.rsrq);
    fv.set(Feature::Sinr, context.sinr);
    fv.set(Feature::Cqi, context.cqi.map(f64::from));
    fv.set(Feature::Ta, context.ta.map(f64::from));
    fv.set(Feature::Freq, context.freq);
    fv.set(Feature::Speed, Some(speed));
    fv.set(Feature::CellId, context.cell_id.map(|c| c as f64));
    fv
}

/// LTE contexts per operator, time-sorted, as (times, samples).
pub(crate) struct LteIndex<'a> {
    by_mno: HashMap<&'a str, (Vec<f64>, Vec<&'a ContextSample>)>,
}

impl<'a> LteIndex<'a> {
    pub(crate) fn new(contexts: &'a [ContextSample]) -> Self {
        let mut by_mno: HashMap<&str, (Vec<f64>, Vec<&ContextSample>)> = HashMap::new();
        for c in contexts.iter().filter(|c| c.tech == Tech::Lte) {
            let entry = by_mno.entry(c.mno.as_str()).or_default();
            entry.0.push(c.t);
            entry.1.push(c);
        }
        LteIndex { by_mno }
    }

    pub(crate) fn nearest(&self, mno: &str, t: f64, max_gap: f64) -> Option<&'a ContextSample> {
        let (times, samples) = self.by_mno.get(mno)?;
        let idx = nearest(times, t)?;
        ((times[idx] - t).abs() <= max_gap).then(|| samples[idx])
    }
}

/// Pairs each transmission with the nearest-in-time LTE context of the same
/// operator (|Δt| ≤ `max_gap`). Transmissions without such a context are
/// dropped and counted.
pub fn join_samples(trace: &DriveTrace, max_gap: f64) -> (Vec<LabeledSample>, JoinReport) {
    let index = LteIndex::new(&trace.contexts);
    let mut report = JoinReport {
        transmissions: trace.transmissions.len(),
        ..JoinReport::default()
    };
    let mut out = Vec::new();
    for tx in &trace.transmissions {
        let Some(context) = index.nearest(&tx.mno, tx.t, max_gap) else {
            report.dropped_no_context += 1;
            continue;
        };
        let Some(fix) = interpolate_fix(&trace.fixes, tx.t) else {
            report.dropped_no_position += 1;
            continue;
        };
        out.push(LabeledSample {
            features: features_from(context, tx.payload, fix.speed),
            label: tx.datarate,
            mno: tx.mno.clone(),
            scenario: trace.scenario,
            run_id: trace.run_id.clone(),
            enb_id: context.enb_id,
            cell_id: context.cell_id,
            direction: tx.direction,
            lat: fix.lat,
            lon: fix.lon,
            t: tx.t,
        });
    }
    report.joined = out.len();
    (out, report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::{Direction, Scenario, TransmissionRecord};

    fn ctx(t: f64, mno: &str, tech: Tech, rsrp: f64) -> ContextSample {
        let mut c = ContextSample::empty(t, mno, tech);
        if tech == Tech::Lte {
            c.rsrp = Some(rsrp);
            c.cell_id = Some(3);
        }
        c
    }

    fn tx(t: f64, mno: &str) -> TransmissionRecord {
        TransmissionRecord {
            t,
            mno: mno.into(),
            direction: Direction::Uplink,
            payload: 1.0,
            datarate: 5.0,
        }
    }

    fn trace(contexts: Vec<ContextSample>, txs: Vec<TransmissionRecord>) -> DriveTrace {
        DriveTrace {
            scenario: Scenario::Synthetic,
            run_id: "r".into(),
            mnos: vec!["A".into(), "B".into()],
            fixes: vec![
                GpsFix { t: 0.0, lat: 51.0, lon: 7.0, speed: 10.0 },
                GpsFix { t: 100.0, lat: 51.001, lon: 7.002, speed: 30.0 },
            ],
            contexts,
            transmissions: txs,
        }
    }

    #[test]
    fn pairs_with_nearest_context() {
        let t = trace(
            vec![ctx(9.0, "A", Tech::Lte, -80.0), ctx(12.0, "A", Tech::Lte, -99.0)],
            vec![tx(10.0, "A")],
        );
        let (samples, report) = join_samples(&t, DEFAULT_MAX_GAP_S);
        assert_eq!(report.joined, 1);
        assert_eq!(samples[0].features.get(Feature::Rsrp), Some(-80.0));
    }

    #[test]
    fn non_lte_only_context_is_dropped() {
        let t = trace(vec![ctx(10.0, "A", Tech::NonLte, 0.0)], vec![tx(10.0, "A")]);
        let (samples, report) = join_samples(&t, DEFAULT_MAX_GAP_S);
        assert!(samples.is_empty());
        assert_eq!(report.dropped_no_context, 1);
    }

    #[test]
    fn other_operator_context_is_ignored() {
        let t = trace(vec![ctx(10.0, "B", Tech::Lte, -80.0)], vec![tx(10.0, "A")]);
        assert_eq!(join_samples(&t, DEFAULT_MAX_GAP_S).1.dropped_no_context, 1);
    }

    #[test]
    fn position_and_speed_are_interpolated() {
        let t = trace(vec![ctx(25.0, "A", Tech::Lte, -80.0)], vec![tx(25.0, "A")]);
        let (samples, _) = join_samples(&t, DEFAULT_MAX_GAP_S);
        let s = &samples[0];
        assert!((s.lat - 51.00025).abs() < 1e-12);
        assert!((s.lon - 7.0005).abs() < 1e-12);
        assert_eq!(s.features.get(Feature::Speed), Some(15.0));
    }

    #[test]
    fn equidistant_tie_prefers_earlier() {
        let t = trace(
            vec![ctx(8.0, "A", Tech::Lte, -80.0), ctx(12.0, "A", Tech::Lte, -99.0)],
            vec![tx(10.0, "A")],
        );
        let (samples, _) = join_samples(&t, DEFAULT_MAX_GAP_S);
        assert_eq!(samples[0].features.get(Feature::Rsrp), Some(-80.0));
    }

    #[test]
    fn gap_beyond_limit_drops() {
        let t = trace(vec![ctx(16.0, "A", Tech::Lte, -80.0)], vec![tx(10.0, "A")]);
        assert_eq!(join_samples(&t, DEFAULT_MAX_GAP_S).1.dropped_no_context, 1);
        assert_eq!(join_samples(&t, 6.0).1.joined, 1);
    }
}
