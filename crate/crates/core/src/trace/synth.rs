//! Synthetic drive tests with known ground truth.
//!
//! A vehicle drives a closed loop (or an out-and-back line) at a smoothly
//! varying speed. Each operator has its own row of eNBs beside the road; the
//! radio KPIs at any position follow from log-distance path loss, same-band
//! interference and per-eNB load, so every KPI field is spatially smooth.
//! Transmissions happen on a fixed cadence and their noiseless data rate is
//! [`rate_model`] applied to exactly the features that [`join_samples`]
//! will attach, which makes the label a deterministic function of the
//! feature vector when `noise_sigma == 0`.
//!
//! [`join_samples`]: super::join_samples

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::join::{features_from, interpolate_fix, LteIndex};
use super::{
    ContextSample, Direction, DriveTrace, Feature, FeatureVector, GpsFix, Scenario, Tech,
    TransmissionRecord,
};
use crate::error::{Error, Result};
use crate::grid::LocalFrame;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum RouteShape {
    Loop { radius_m: f64 },
    OutAndBack { length_m: f64 },
}

impl RouteShape {
    /// Length of one lap in meters.
    pub fn lap_length(&self) -> f64 {
        match *self {
            RouteShape::Loop { radius_m } => 2.0 * std::f64::consts::PI * radius_m,
            RouteShape::OutAndBack { length_m } => 2.0 * length_m,
        }
    }

    /// Local (x, y) position after driving `s` meters, and the unit normal
    /// pointing away from the road's left side.
    fn locate(&self, s: f64) -> ((f64, f64), (f64, f64)) {
        match *self {
            RouteShape::Loop { radius_m } => {
                let a = s / radius_m;
                let (sin, cos) = a.sin_cos();
                ((radius_m * cos, radius_m * sin), (cos, sin))
            }
            RouteShape::OutAndBack { length_m } => {
                let u = s.rem_euclid(2.0 * length_m);
                let x = if u <= length_m { u } else { 2.0 * length_m - u };
                ((x, 0.0), (0.0, 1.0))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_mnos: usize,
    pub duration_s: f64,
    pub scenario: Scenario,
    pub run_id: String,
    pub route: RouteShape,
    pub origin_lat: f64,
    pub origin_lon: f64,
    pub mean_speed_kmh: f64,
    /// Relative amplitude of the speed oscillation, in [0, 1).
    pub speed_variation: f64,
    pub fix_interval_s: f64,
    pub context_interval_s: f64,
    pub tx_interval_s: f64,
    pub payload_min_mb: f64,
    pub payload_max_mb: f64,
    /// Relative standard deviation of the multiplicative label noise.
    pub noise_sigma: f64,
    /// Gaussian measurement error added to reported RSRP and SINR. Anything
    /// above zero makes the reported KPIs deviate from the smooth field.
    pub kpi_noise_db: f64,
    /// `None` alternates uplink/downlink on successive cadence ticks.
    pub direction: Option<Direction>,
    /// eNB spacing along the road for the first operator; operator `k` uses
    /// `spacing * (1 + 0.35 k)`.
    pub enb_spacing_m: f64,
    /// Below this serving RSRP the modem falls back to non-LTE.
    pub lte_threshold_dbm: f64,
    /// Pairing window used when computing the noiseless rate; must match the
    /// window later passed to the join.
    pub max_gap_s: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 0,
            n_mnos: 3,
            duration_s: 600.0,
            scenario: Scenario::Synthetic,
            run_id: "0".into(),
            route: RouteShape::Loop { radius_m: 800.0 },
            origin_lat: 51.4934,
            origin_lon: 7.4143,
            mean_speed_kmh: 50.0,
            speed_variation: 0.3,
            fix_interval_s: 1.0,
            context_interval_s: 1.0,
            tx_interval_s: 10.0,
            payload_min_mb: 0.1,
            payload_max_mb: 10.0,
            noise_sigma: 0.0,
            kpi_noise_db: 0.0,
            direction: None,
            enb_spacing_m: 1200.0,
            lte_threshold_dbm: -115.0,
            max_gap_s: super::DEFAULT_MAX_GAP_S,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.n_mnos < 1 {
            return bad("n_mnos must be at least 1");
        }
        if !(self.duration_s > 0.0) {
            return bad("duration must be positive");
        }
        for (name, v) in [
            ("fix_interval_s", self.fix_interval_s),
            ("context_interval_s", self.context_interval_s),
            ("tx_interval_s", self.tx_interval_s),
            ("mean_speed_kmh", self.mean_speed_kmh),
            ("enb_spacing_m", self.enb_spacing_m),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(&format!("{name} must be positive"));
            }
        }
        if !(0.0..1.0).contains(&self.speed_variation) {
            return bad("speed_variation must lie in [0, 1)");
        }
        if !(self.payload_min_mb > 0.0 && self.payload_min_mb <= self.payload_max_mb) {
            return bad("payload range must satisfy 0 < min <= max");
        }
        if !(self.noise_sigma >= 0.0 && self.kpi_noise_db >= 0.0) {
            return bad("noise levels must be non-negative");
        }
        let size = match self.route {
            RouteShape::Loop { radius_m } => radius_m,
            RouteShape::OutAndBack { length_m } => length_m,
        };
        if !(size > 0.0 && size.is_finite()) {
            return bad("route size must be positive");
        }
        Ok(())
    }

    pub fn mno_names(&self) -> Vec<String> {
        (0..self.n_mnos)
            .map(|k| {
                if k < 26 {
                    char::from(b'A' + k as u8).to_string()
                } else {
                    format!("M{k}")
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Enb {
    id: u64,
    x: f64,
    y: f64,
    /// RSRP at 1 km before the frequency term, dBm.
    power_dbm: f64,
    freq_mhz: f64,
    load: f64,
}

/// Noise floor per resource element, dBm.
const NOISE_DBM: f64 = -125.0;
/// LTE timing-advance step in meters.
const TA_STEP_M: f64 = 78.12;

/// Path loss in dB (3GPP macro model plus a frequency term).
fn path_loss_db(distance_m: f64, freq_mhz: f64) -> f64 {
    let d_km = distance_m.max(10.0) / 1000.0;
    128.1 + 37.6 * d_km.log10() + 20.0 * (freq_mhz / 2000.0).log10()
}

fn db_to_lin(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Noise-free KPIs of one operator's serving cell at a point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldSample {
    pub rsrp: f64,
    pub sinr: f64,
    pub rsrq: f64,
    pub cqi: u32,
    pub ta: u32,
    pub freq: f64,
    pub enb_id: u64,
    pub cell_id: u64,
    pub ptx: f64,
    /// Load of the serving eNB, in [0, 1].
    pub load: f64,
}

/// The analytic radio environment of a synthetic run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RadioField {
    frame: LocalFrame,
    enbs: Vec<Vec<Enb>>,
}

fn rsrq_from(sinr_db: f64, load: f64) -> f64 {
    (-3.0 - 10.0 * (1.0 + 1.0 / db_to_lin(sinr_db)).log10() - 4.0 * load).clamp(-20.0, -3.0)
}

fn cqi_from(sinr_db: f64) -> u32 {
    ((sinr_db + 7.0) / 2.2).round().clamp(0.0, 15.0) as u32
}

impl RadioField {
    fn new(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Self {
        const BANDS: [f64; 3] = [800.0, 1800.0, 2600.0];
        let lap = cfg.route.lap_length();
        let enbs = (0..cfg.n_mnos)
            .map(|m| {
                let spacing = cfg.enb_spacing_m * (1.0 + 0.35 * m as f64);
                let offset = rng.gen_range(0.0..spacing);
                let mut out = Vec::new();
                let mut s = offset;
                let mut k = 0usize;
                while s < lap || k == 0 {
                    let ((x, y), (nx, ny)) = cfg.route.locate(s);
                    let side = if k.is_multiple_of(2) { 1.0 } else { -1.0 };
                    let lateral = side * (120.0 + 60.0 * (k % 3) as f64);
                    out.push(Enb {
                        id: 100 * (m as u64 + 1) + k as u64,
                        x: x + nx * lateral,
                        y: y + ny * lateral,
                        power_dbm: 15.0 + rng.gen_range(-2.0..2.0),
                        freq_mhz: BANDS[(k + m) % BANDS.len()],
                        load: rng.gen_range(0.2..0.9),
                    });
                    s += spacing;
                    k += 1;
                }
                out
            })
            .collect();
        RadioField {
            frame: LocalFrame::new(cfg.origin_lat, cfg.origin_lon),
            enbs,
        }
    }

    pub fn frame(&self) -> LocalFrame {
        self.frame
    }

    /// Serving-cell KPIs for operator index `mno` at local position (x, y).
    pub fn at_xy(&self, mno: usize, x: f64, y: f64) -> FieldSample {
        let enbs = &self.enbs[mno];
        let rx: Vec<(f64, f64)> = enbs
            .iter()
            .map(|e| {
                let d = (x - e.x).hypot(y - e.y);
                (e.power_dbm - path_loss_db(d, e.freq_mhz), d)
            })
            .collect();
        let (serving, &(rsrp, dist)) = rx
            .iter()
            .enumerate()
            .max_by(|a, b| a.1 .0.total_cmp(&b.1 .0).then(b.0.cmp(&a.0)))
            .expect("at least one eNB per operator");
        let s = &enbs[serving];
        let interference: f64 = enbs
            .iter()
            .zip(&rx)
            .enumerate()
            .filter(|(j, (e, _))| *j != serving && e.freq_mhz == s.freq_mhz)
            .map(|(_, (e, (p, _)))| e.load * db_to_lin(*p))
            .sum();
        let sinr = (rsrp - 10.0 * (interference + db_to_lin(NOISE_DBM)).log10()).clamp(-10.0, 30.0);
        let azimuth = (y - s.y).atan2(x - s.x).rem_euclid(2.0 * std::f64::consts::PI);
        let sector = ((azimuth / (2.0 * std::f64::consts::PI / 3.0)) as u64).min(2);
        let pl = s.power_dbm - rsrp;
        FieldSample {
            rsrp,
            sinr,
            rsrq: rsrq_from(sinr, s.load),
            cqi: cqi_from(sinr),
            ta: (dist / TA_STEP_M).round() as u32,
            freq: s.freq_mhz,
            enb_id: s.id,
            cell_id: s.id * 10 + sector,
            ptx: (-10.0 + 0.8 * (pl - 90.0)).clamp(-40.0, 23.0),
            load: s.load,
        }
    }

    pub fn at(&self, mno: usize, lat: f64, lon: f64) -> FieldSample {
        let (x, y) = self.frame.to_xy(lat, lon);
        self.at_xy(mno, x, y)
    }
}

/// The documented noiseless data-rate function, MBit/s.
///
/// * payload factor `g = p / (p + 1.5)` (slow-start penalty for small payloads)
/// * band factor 0.5 below 1 GHz, 1.0 below 2 GHz, 0.8 above
/// * cell centre (`rsrp >= -100`): spectral efficiency `log2(1 + SINR)`;
///   cell edge: `0.22 * (rsrq + 20)`, clamped to [0.05, 7]
/// * speed factor `1 - 0.0025 * max(0, v - 60)`, at least 0.5
/// * uplink `0.3 + 3.2 b s g h`, downlink `0.5 + 9 b s g h`
///
/// Missing payload counts as 1 MB, missing speed as 0, missing frequency as
/// band factor 0.7 and missing RSRP as cell edge.
pub fn rate_model(fv: &FeatureVector, direction: Direction) -> f64 {
    let payload = fv.get(Feature::Payload).unwrap_or(1.0);
    let g = payload / (payload + 1.5);
    let band = match fv.get(Feature::Freq) {
        Some(f) if f < 1000.0 => 0.5,
        Some(f) if f < 2000.0 => 1.0,
        Some(_) => 0.8,
        None => 0.7,
    };
    let centre = fv.get(Feature::Rsrp).is_some_and(|r| r >= -100.0);
    let se = if centre {
        let sinr = fv.get(Feature::Sinr).unwrap_or(0.0);
        (1.0 + db_to_lin(sinr)).log2()
    } else {
        0.22 * (fv.get(Feature::Rsrq).unwrap_or(-20.0) + 20.0).max(0.0)
    }
    .clamp(0.05, 7.0);
    let speed = fv.get(Feature::Speed).unwrap_or(0.0);
    let h = (1.0 - 0.0025 * (speed - 60.0).max(0.0)).max(0.5);
    match direction {
        Direction::Uplink => 0.3 + 3.2 * band * se * g * h,
        Direction::Downlink => 0.5 + 9.0 * band * se * g * h,
    }
}

/// Rate without an LTE context (3G fallback); such transmissions are dropped
/// by the join anyway.
fn fallback_rate(payload: f64) -> f64 {
    0.2 + 0.3 * payload / (payload + 1.5)
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub trace: DriveTrace,
    /// Noiseless data rate of each transmission, aligned with
    /// `trace.transmissions`.
    pub noiseless: Vec<f64>,
    pub field: RadioField,
}

/// Cadence ticks `0, dt, 2dt, ...` strictly below `duration`.
fn ticks(duration: f64, dt: f64) -> impl Iterator<Item = (usize, f64)> {
    (0..)
        .map(move |k| (k, k as f64 * dt))
        .take_while(move |&(_, t)| t < duration)
}

pub fn synth_trace(cfg: &SynthConfig) -> Result<SynthOutput> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let field = RadioField::new(cfg, &mut rng);
    let frame = field.frame();
    let mnos = cfg.mno_names();

    // Speed v(t) = m (1 + a sin(w1 t + p1) + b sin(w2 t + p2)); distance is
    // its closed-form integral.
    let m = cfg.mean_speed_kmh / 3.6;
    let a = 0.6 * cfg.speed_variation;
    let b = 0.4 * cfg.speed_variation;
    let w1 = 2.0 * std::f64::consts::PI / 97.0;
    let w2 = 2.0 * std::f64::consts::PI / 431.0;
    let p1 = rng.gen_range(0.0..std::f64::consts::TAU);
    let p2 = rng.gen_range(0.0..std::f64::consts::TAU);
    let start = rng.gen_range(0.0..cfg.route.lap_length());
    let speed_kmh = |t: f64| 3.6 * m * (1.0 + a * (w1 * t + p1).sin() + b * (w2 * t + p2).sin());
    let distance = |t: f64| {
        start
            + m * (t - a / w1 * ((w1 * t + p1).cos() - p1.cos())
                - b / w2 * ((w2 * t + p2).cos() - p2.cos()))
    };
    let position = |t: f64| {
        let ((x, y), _) = cfg.route.locate(distance(t));
        (x, y)
    };

    let fixes: Vec<GpsFix> = ticks(cfg.duration_s, cfg.fix_interval_s)
        .map(|(_, t)| {
            let (x, y) = position(t);
            let (lat, lon) = frame.to_latlon(x, y);
            GpsFix {
                t,
                lat,
                lon,
                speed: speed_kmh(t),
            }
        })
        .collect();

    let mut contexts = Vec::new();
    for (_, t) in ticks(cfg.duration_s, cfg.context_interval_s) {
        let (x, y) = position(t);
        for (k, mno) in mnos.iter().enumerate() {
            let f = field.at_xy(k, x, y);
            let rsrp_noise: f64 = cfg.kpi_noise_db * rng.sample::<f64, _>(StandardNormal);
            let sinr_noise: f64 = cfg.kpi_noise_db * rng.sample::<f64, _>(StandardNormal);
            let rtt_jitter: f64 = rng.gen_range(0.0..10.0);
            if f.rsrp < cfg.lte_threshold_dbm {
                let mut c = ContextSample::empty(t, mno.clone(), Tech::NonLte);
                c.ptx = Some(23.0);
                c.rtt = Some(180.0 + 20.0 * rtt_jitter);
                contexts.push(c);
                continue;
            }
            let sinr = (f.sinr + sinr_noise).clamp(-10.0, 30.0);
            contexts.push(ContextSample {
                t,
                mno: mno.clone(),
                tech: Tech::Lte,
                rsrp: Some(f.rsrp + rsrp_noise),
                rsrq: Some(rsrq_from(sinr, f.load)),
                sinr: Some(sinr),
                cqi: Some(cqi_from(sinr)),
                ta: Some(f.ta),
                freq: Some(f.freq),
                enb_id: Some(f.enb_id),
                cell_id: Some(f.cell_id),
                ptx: Some(f.ptx),
                rtt: Some(35.0 + 8.0 * f.load + 0.8 * (5.0 - sinr).max(0.0).powi(2) + rtt_jitter),
            });
        }
    }

    let index = LteIndex::new(&contexts);
    let (ln_min, ln_max) = (cfg.payload_min_mb.ln(), cfg.payload_max_mb.ln());
    let mut transmissions = Vec::new();
    let mut noiseless = Vec::new();
    for (tick, t) in ticks(cfg.duration_s, cfg.tx_interval_s) {
        let direction = cfg.direction.unwrap_or(if tick % 2 == 0 {
            Direction::Uplink
        } else {
            Direction::Downlink
        });
        let speed = interpolate_fix(&fixes, t).map_or(0.0, |f| f.speed);
        for mno in &mnos {
            let payload = if ln_min == ln_max {
                cfg.payload_min_mb
            } else {
                rng.gen_range(ln_min..ln_max).exp().clamp(cfg.payload_min_mb, cfg.payload_max_mb)
            };
            let z: f64 = rng.sample(StandardNormal);
            let rate = match index.nearest(mno, t, cfg.max_gap_s) {
                Some(c) => rate_model(&features_from(c, payload, speed), direction),
                None => fallback_rate(payload),
            };
            let label = (rate * (1.0 + cfg.noise_sigma * z)).max(0.01 * rate);
            noiseless.push(rate);
            transmissions.push(TransmissionRecord {
                t,
                mno: mno.clone(),
                direction,
                payload,
                datarate: label,
            });
        }
    }

    Ok(SynthOutput {
        trace: DriveTrace {
            scenario: cfg.scenario,
            run_id: cfg.run_id.clone(),
            mnos,
            fixes,
            contexts,
            transmissions,
        },
        noiseless,
        field,
    })
}
