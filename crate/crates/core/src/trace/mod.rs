//! Drive-test trace model: GPS fixes, per-operator radio context samples and
//! active transmission records, plus the join that turns them into labeled
//! training samples.

mod csv_io;
mod join;
mod synth;
mod validate;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use csv_io::{
    parse_contexts, parse_fixes, parse_trace, parse_transmissions, read_samples_csv,
    read_trace_dir, write_contexts, write_fixes, write_samples_csv, write_trace_dir,
    write_transmissions, ParsedTrace, TraceMeta, TraceText,
};
pub use join::{interpolate_fix, join_samples, JoinReport, DEFAULT_MAX_GAP_S};
pub use synth::{rate_model, synth_trace, FieldSample, RadioField, RouteShape, SynthConfig, SynthOutput};
pub use validate::{validate_trace, Table, TraceLimits, Violation};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpsFix {
    /// Seconds since run start.
    pub t: f64,
    pub lat: f64,
    pub lon: f64,
    /// km/h
    pub speed: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Tech {
    #[serde(rename = "LTE")]
    Lte,
    #[serde(rename = "non-LTE")]
    NonLte,
    #[serde(rename = "none")]
    NoService,
}

impl Tech {
    pub fn as_str(self) -> &'static str {
        match self {
            Tech::Lte => "LTE",
            Tech::NonLte => "non-LTE",
            Tech::NoService => "none",
        }
    }
}

impl FromStr for Tech {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "LTE" => Ok(Tech::Lte),
            "non-LTE" => Ok(Tech::NonLte),
            "none" => Ok(Tech::NoService),
            other => Err(format!("unknown technology tag '{other}'")),
        }
    }
}

/// One radio-context reading of a single operator's modem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextSample {
    pub t: f64,
    pub mno: String,
    pub tech: Tech,
    /// dBm
    pub rsrp: Option<f64>,
    /// dB
    pub rsrq: Option<f64>,
    /// dB
    pub sinr: Option<f64>,
    pub cqi: Option<u32>,
    pub ta: Option<u32>,
    /// Carrier frequency in MHz.
    pub freq: Option<f64>,
    pub enb_id: Option<u64>,
    pub cell_id: Option<u64>,
    /// Uplink transmit power, dBm.
    pub ptx: Option<f64>,
    /// Round-trip time, ms.
    pub rtt: Option<f64>,
}

impl ContextSample {
    pub fn empty(t: f64, mno: impl Into<String>, tech: Tech) -> Self {
        ContextSample {
            t,
            mno: mno.into(),
            tech,
            rsrp: None,
            rsrq: None,
            sinr: None,
            cqi: None,
            ta: None,
            freq: None,
            enb_id: None,
            cell_id: None,
            ptx: None,
            rtt: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Uplink,
    Downlink,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Uplink => "uplink",
            Direction::Downlink => "downlink",
        }
    }
}

impl FromStr for Direction {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "uplink" | "ul" => Ok(Direction::Uplink),
            "downlink" | "dl" => Ok(Direction::Downlink),
            other => Err(format!("unknown direction '{other}'")),
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransmissionRecord {
    pub t: f64,
    pub mno: String,
    pub direction: Direction,
    /// MB
    pub payload: f64,
    /// MBit/s
    pub datarate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    Campus,
    Urban,
    Suburban,
    Highway,
    Synthetic,
}

impl Scenario {
    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::Campus => "campus",
            Scenario::Urban => "urban",
            Scenario::Suburban => "suburban",
            Scenario::Highway => "highway",
            Scenario::Synthetic => "synthetic",
        }
    }
}

impl FromStr for Scenario {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "campus" => Ok(Scenario::Campus),
            "urban" => Ok(Scenario::Urban),
            "suburban" => Ok(Scenario::Suburban),
            "highway" => Ok(Scenario::Highway),
            "synthetic" => Ok(Scenario::Synthetic),
            other => Err(format!("unknown scenario '{other}'")),
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One drive of one route. Every list is sorted by time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriveTrace {
    pub scenario: Scenario,
    pub run_id: String,
    /// Declared operator set; every record must reference one of these.
    pub mnos: Vec<String>,
    pub fixes: Vec<GpsFix>,
    pub contexts: Vec<ContextSample>,
    pub transmissions: Vec<TransmissionRecord>,
}

/// The nine prediction features, in their fixed column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Feature {
    Payload,
    Rsrp,
    Rsrq,
    Sinr,
    Cqi,
    Ta,
    Freq,
    Speed,
    CellId,
}

impl Feature {
    pub const COUNT: usize = 9;
    pub const ALL: [Feature; Feature::COUNT] = [
        Feature::Payload,
        Feature::Rsrp,
        Feature::Rsrq,
        Feature::Sinr,
        Feature::Cqi,
        Feature::Ta,
        Feature::Freq,
        Feature::Speed,
        Feature::CellId,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Feature::Payload => "payload",
            Feature::Rsrp => "rsrp",
            Feature::Rsrq => "rsrq",
            Feature::Sinr => "sinr",
            Feature::Cqi => "cqi",
            Feature::Ta => "ta",
            Feature::Freq => "freq",
            Feature::Speed => "speed",
            Feature::CellId => "cell_id",
        }
    }

    pub fn is_categorical(self) -> bool {
        self == Feature::CellId
    }
}

impl FromStr for Feature {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Feature::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| format!("unknown feature '{s}'"))
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Nine named features; `None` marks a missing value.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FeatureVector(pub [Option<f64>; Feature::COUNT]);

impl FeatureVector {
    pub fn get(&self, f: Feature) -> Option<f64> {
        self.0[f.index()]
    }

    pub fn set(&mut self, f: Feature, value: Option<f64>) {
        self.0[f.index()] = value;
    }

    pub fn as_slice(&self) -> &[Option<f64>] {
        &self.0
    }
}

/// A transmission joined with its radio context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub features: FeatureVector,
    /// Measured data rate, MBit/s.
    pub label: f64,
    pub mno: String,
    pub scenario: Scenario,
    pub run_id: String,
    pub enb_id: Option<u64>,
    pub cell_id: Option<u64>,
    pub direction: Direction,
    pub lat: f64,
    pub lon: f64,
    pub t: f64,
}
