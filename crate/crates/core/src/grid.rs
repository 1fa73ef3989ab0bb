//! Multilayer, multi-operator connectivity maps.
//!
//! Positions are projected onto a local equirectangular frame anchored at the
//! grid origin and binned into square cells of edge `cell_size`. Each layer
//! holds one KPI of one operator as a sparse map `(i, j) -> CellStats`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trace::{interpolate_fix, Direction, DriveTrace};

const METERS_PER_DEG_LAT: f64 = 110_574.0;
const METERS_PER_DEG_LON_EQUATOR: f64 = 111_320.0;

/// Local tangent-plane approximation around an origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalFrame {
    pub origin_lat: f64,
    pub origin_lon: f64,
}

impl LocalFrame {
    pub fn new(origin_lat: f64, origin_lon: f64) -> Self {
        LocalFrame {
            origin_lat,
            origin_lon,
        }
    }

    fn lon_scale(&self) -> f64 {
        METERS_PER_DEG_LON_EQUATOR * self.origin_lat.to_radians().cos()
    }

    /// Meters east (x) and north (y) of the origin.
    pub fn to_xy(&self, lat: f64, lon: f64) -> (f64, f64) {
        (
            (lon - self.origin_lon) * self.lon_scale(),
            (lat - self.origin_lat) * METERS_PER_DEG_LAT,
        )
    }

    pub fn to_latlon(&self, x: f64, y: f64) -> (f64, f64) {
        (
            self.origin_lat + y / METERS_PER_DEG_LAT,
            self.origin_lon + x / self.lon_scale(),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub origin_lat: f64,
    pub origin_lon: f64,
    /// Cell edge length in meters.
    pub cell_size: f64,
}

impl GridConfig {
    pub fn new(origin_lat: f64, origin_lon: f64, cell_size: f64) -> Result<Self> {
        if !(cell_size > 0.0 && cell_size.is_finite()) {
            return Err(Error::Config(format!("cell size must be positive, got {cell_size}")));
        }
        if !(origin_lat.is_finite() && origin_lon.is_finite()) || origin_lat.abs() >= 90.0 {
            return Err(Error::Config("grid origin must be finite and off the poles".into()));
        }
        Ok(GridConfig {
            origin_lat,
            origin_lon,
            cell_size,
        })
    }

    pub fn frame(&self) -> LocalFrame {
        LocalFrame::new(self.origin_lat, self.origin_lon)
    }
}

pub type CellIndex = (i64, i64);

pub fn grid_index(lat: f64, lon: f64, config: &GridConfig) -> CellIndex {
    let (x, y) = config.frame().to_xy(lat, lon);
    (
        (x / config.cell_size).floor() as i64,
        (y / config.cell_size).floor() as i64,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Better {
    Max,
    Min,
}

impl Better {
    /// True if `a` is strictly better than `b`.
    pub fn beats(self, a: f64, b: f64) -> bool {
        match self {
            Better::Max => a > b,
            Better::Min => a < b,
        }
    }
}

impl FromStr for Better {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "max" => Ok(Better::Max),
            "min" => Ok(Better::Min),
            other => Err(format!("expected max|min, got '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kpi {
    Rsrp,
    Rsrq,
    Sinr,
    Cqi,
    Ta,
    Freq,
    Ptx,
    Rtt,
    DatarateUl,
    DatarateDl,
}

impl Kpi {
    pub const ALL: [Kpi; 10] = [
        Kpi::Rsrp,
        Kpi::Rsrq,
        Kpi::Sinr,
        Kpi::Cqi,
        Kpi::Ta,
        Kpi::Freq,
        Kpi::Ptx,
        Kpi::Rtt,
        Kpi::DatarateUl,
        Kpi::DatarateDl,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Kpi::Rsrp => "rsrp",
            Kpi::Rsrq => "rsrq",
            Kpi::Sinr => "sinr",
            Kpi::Cqi => "cqi",
            Kpi::Ta => "ta",
            Kpi::Freq => "freq",
            Kpi::Ptx => "ptx",
            Kpi::Rtt => "rtt",
            Kpi::DatarateUl => "datarate_ul",
            Kpi::DatarateDl => "datarate_dl",
        }
    }

    /// Which direction counts as better; `None` for KPIs without an order
    /// (carrier frequency).
    pub fn better(self) -> Option<Better> {
        match self {
            Kpi::Rsrp | Kpi::Rsrq | Kpi::Sinr | Kpi::Cqi | Kpi::DatarateUl | Kpi::DatarateDl => {
                Some(Better::Max)
            }
            Kpi::Rtt | Kpi::Ptx | Kpi::Ta => Some(Better::Min),
            Kpi::Freq => None,
        }
    }

    /// Discrete KPIs also keep a value histogram so cells can report a mode.
    pub fn is_discrete(self) -> bool {
        matches!(self, Kpi::Ta | Kpi::Freq)
    }
}

impl FromStr for Kpi {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Kpi::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown KPI '{s}'"))
    }
}

impl fmt::Display for Kpi {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Histogram keys are values scaled by 1000 and rounded.
const HIST_SCALE: f64 = 1000.0;

/// Streaming per-cell statistics (Welford). A stored cell always has
/// `count >= 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellStats {
    pub count: u64,
    pub mean: f64,
    /// Running sum of squared deviations from the mean.
    pub m2: f64,
    pub min: f64,
    pub max: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hist: Option<BTreeMap<i64, u64>>,
}

impl CellStats {
    pub fn new(discrete: bool) -> Self {
        CellStats {
            count: 0,
            mean: f64::NAN,
            m2: f64::NAN,
            min: f64::NAN,
            max: f64::NAN,
            hist: discrete.then(BTreeMap::new),
        }
    }

    pub fn push(&mut self, x: f64) {
        if self.count == 0 {
            self.count = 1;
            self.mean = x;
            self.m2 = 0.0;
            self.min = x;
            self.max = x;
        } else {
            self.count += 1;
            let delta = x - self.mean;
            self.mean += delta / self.count as f64;
            self.m2 += delta * (x - self.mean);
            self.min = self.min.min(x);
            self.max = self.max.max(x);
        }
        if let Some(h) = &mut self.hist {
            *h.entry((x * HIST_SCALE).round() as i64).or_insert(0) += 1;
        }
    }

    /// Chan et al. pairwise combination.
    pub fn merge(&mut self, other: &CellStats) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = other.clone();
            return;
        }
        let n_a = self.count as f64;
        let n_b = other.count as f64;
        let n = n_a + n_b;
        let delta = other.mean - self.mean;
        self.mean += delta * n_b / n;
        self.m2 += other.m2 + delta * delta * n_a * n_b / n;
        self.count += other.count;
        self.min = self.min.min(other.min);
        self.max = self.max.max(other.max);
        if let (Some(h), Some(o)) = (&mut self.hist, &other.hist) {
            for (k, c) in o {
                *h.entry(*k).or_insert(0) += c;
            }
        }
    }

    /// Sample variance; `None` below two values.
    pub fn variance(&self) -> Option<f64> {
        (self.count >= 2).then(|| self.m2 / (self.count - 1) as f64)
    }

    /// Most frequent value (smallest on ties); only for discrete layers.
    pub fn mode(&self) -> Option<f64> {
        let h = self.hist.as_ref()?;
        let mut best: Option<(i64, u64)> = None;
        for (&k, &c) in h {
            if best.is_none_or(|(_, bc)| c > bc) {
                best = Some((k, c));
            }
        }
        best.map(|(k, _)| k as f64 / HIST_SCALE)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub mno: String,
    pub kpi: Kpi,
    pub value: f64,
    pub lat: f64,
    pub lon: f64,
}

pub type Layer = BTreeMap<CellIndex, CellStats>;

#[derive(Debug, Clone, PartialEq)]
pub struct ConnectivityMap {
    pub config: GridConfig,
    pub layers: BTreeMap<(String, Kpi), Layer>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildReport {
    pub accepted: usize,
    /// Measurements with a non-finite value or position.
    pub rejected: usize,
}

/// Folds every measurement into its cell.
pub fn build_map(measurements: &[Measurement], config: GridConfig) -> (ConnectivityMap, BuildReport) {
    let mut map = ConnectivityMap::new(config);
    let mut report = BuildReport::default();
    for m in measurements {
        if map.insert(m) {
            report.accepted += 1;
        } else {
            report.rejected += 1;
        }
    }
    (map, report)
}

impl ConnectivityMap {
    pub fn new(config: GridConfig) -> Self {
        ConnectivityMap {
            config,
            layers: BTreeMap::new(),
        }
    }

    /// Returns false (and stores nothing) for non-finite input.
    pub fn insert(&mut self, m: &Measurement) -> bool {
        if !(m.value.is_finite() && m.lat.is_finite() && m.lon.is_finite()) {
            return false;
        }
        let idx = grid_index(m.lat, m.lon, &self.config);
        self.layers
            .entry((m.mno.clone(), m.kpi))
            .or_default()
            .entry(idx)
            .or_insert_with(|| CellStats::new(m.kpi.is_discrete()))
            .push(m.value);
        true
    }

    /// Combines a partial map built with the same grid.
    pub fn merge(&mut self, other: &ConnectivityMap) -> Result<()> {
        if self.config != other.config {
            return Err(Error::Config("cannot merge maps with different grids".into()));
        }
        for (key, layer) in &other.layers {
            let dst = self.layers.entry(key.clone()).or_default();
            for (idx, stats) in layer {
                dst.entry(*idx)
                    .or_insert_with(|| CellStats::new(key.1.is_discrete()))
                    .merge(stats);
            }
        }
        Ok(())
    }

    pub fn layer(&self, mno: &str, kpi: Kpi) -> Option<&Layer> {
        self.layers.get(&(mno.to_string(), kpi))
    }

    pub fn cell_count(&self) -> usize {
        self.layers.values().map(BTreeMap::len).sum()
    }

    /// The stored cell at the query position, or the nearest stored cell
    /// within Chebyshev distance `fallback_radius` (ties to the smallest
    /// `(i, j)`).
    pub fn lookup_cell(
        &self,
        lat: f64,
        lon: f64,
        mno: &str,
        kpi: Kpi,
        fallback_radius: u32,
    ) -> Option<(CellIndex, &CellStats)> {
        let layer = self.layer(mno, kpi)?;
        let (ci, cj) = grid_index(lat, lon, &self.config);
        if let Some(s) = layer.get(&(ci, cj)) {
            return Some(((ci, cj), s));
        }
        for r in 1..=fallback_radius as i64 {
            // Ring cells in lexicographic order: the first hit is the tie winner.
            for i in (ci - r)..=(ci + r) {
                let js: Vec<i64> = if (i - ci).abs() == r {
                    ((cj - r)..=(cj + r)).collect()
                } else {
                    vec![cj - r, cj + r]
                };
                for j in js {
                    if let Some(s) = layer.get(&(i, j)) {
                        return Some(((i, j), s));
                    }
                }
            }
        }
        None
    }

    pub fn lookup(&self, lat: f64, lon: f64, mno: &str, kpi: Kpi, fallback_radius: u32) -> Option<f64> {
        self.lookup_cell(lat, lon, mno, kpi, fallback_radius)
            .map(|(_, s)| s.mean)
    }

    /// Operators present in the map, sorted.
    pub fn mnos(&self) -> Vec<String> {
        let mut out: Vec<String> = self.layers.keys().map(|(m, _)| m.clone()).collect();
        out.dedup();
        out
    }

    /// Best operator per cell for one KPI; ties go to the smallest id.
    pub fn operator_map(&self, kpi: Kpi, better: Better) -> BTreeMap<CellIndex, String> {
        let mut best: BTreeMap<CellIndex, (String, f64)> = BTreeMap::new();
        // Layers iterate in ascending operator order, so strict improvement
        // keeps the smallest id on ties.
        for ((mno, k), layer) in &self.layers {
            if *k != kpi {
                continue;
            }
            for (idx, stats) in layer {
                match best.get_mut(idx) {
                    Some(cur) if !better.beats(stats.mean, cur.1) => {}
                    Some(cur) => *cur = (mno.clone(), stats.mean),
                    None => {
                        best.insert(*idx, (mno.clone(), stats.mean));
                    }
                }
            }
        }
        best.into_iter().map(|(k, (m, _))| (k, m)).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        let rows = self
            .layers
            .iter()
            .flat_map(|((mno, kpi), layer)| {
                layer.iter().map(move |(&(i, j), s)| MapRow {
                    mno: mno.clone(),
                    kpi: *kpi,
                    i,
                    j,
                    count: s.count,
                    mean: s.mean,
                    var: s.variance(),
                    m2: s.m2,
                    min: s.min,
                    max: s.max,
                    hist: s.hist.as_ref().map(|h| h.iter().map(|(k, c)| (*k, *c)).collect()),
                })
            })
            .collect();
        let doc = MapDocument {
            format: MAP_FORMAT.into(),
            version: MAP_VERSION,
            config: self.config,
            rows,
        };
        Ok(serde_json::to_string_pretty(&doc)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: MapDocument = serde_json::from_str(text)?;
        if doc.format != MAP_FORMAT {
            return Err(Error::Config(format!("not a connectivity map: '{}'", doc.format)));
        }
        if doc.version != MAP_VERSION {
            return Err(Error::VersionMismatch {
                found: doc.version,
                expected: MAP_VERSION,
            });
        }
        let config = GridConfig::new(doc.config.origin_lat, doc.config.origin_lon, doc.config.cell_size)?;
        let mut map = ConnectivityMap::new(config);
        for r in doc.rows {
            if r.count == 0 {
                return Err(Error::Config("stored cell with zero count".into()));
            }
            map.layers.entry((r.mno, r.kpi)).or_default().insert(
                (r.i, r.j),
                CellStats {
                    count: r.count,
                    mean: r.mean,
                    m2: r.m2,
                    min: r.min,
                    max: r.max,
                    hist: r.hist.map(|h| h.into_iter().collect()),
                },
            );
        }
        Ok(map)
    }

    /// Plot-ready `i,j,mean` rows for one layer.
    pub fn layer_csv(&self, mno: &str, kpi: Kpi) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["i", "j", "mean"])?;
        if let Some(layer) = self.layer(mno, kpi) {
            for (&(i, j), s) in layer {
                w.write_record([i.to_string(), j.to_string(), s.mean.to_string()])?;
            }
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("utf-8"))
    }
}

const MAP_FORMAT: &str = "mnolytics-connectivity-map";
const MAP_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct MapDocument {
    format: String,
    version: u32,
    config: GridConfig,
    rows: Vec<MapRow>,
}

#[derive(Serialize, Deserialize)]
struct MapRow {
    mno: String,
    kpi: Kpi,
    i: i64,
    j: i64,
    count: u64,
    mean: f64,
    var: Option<f64>,
    m2: f64,
    min: f64,
    max: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    hist: Option<Vec<(i64, u64)>>,
}

/// All KPI readings of a trace as positioned measurements. Context samples
/// are placed by interpolating the GPS track; transmissions contribute to
/// the data-rate layers.
pub fn measurements_from_trace(trace: &DriveTrace) -> Vec<Measurement> {
    let mut out = Vec::new();
    for c in &trace.contexts {
        let Some(fix) = interpolate_fix(&trace.fixes, c.t) else {
            continue;
        };
        let values = [
            (Kpi::Rsrp, c.rsrp),
            (Kpi::Rsrq, c.rsrq),
            (Kpi::Sinr, c.sinr),
            (Kpi::Cqi, c.cqi.map(f64::from)),
            (Kpi::Ta, c.ta.map(f64::from)),
            (Kpi::Freq, c.freq),
            (Kpi::Ptx, c.ptx),
            (Kpi::Rtt, c.rtt),
        ];
        for (kpi, v) in values {
            if let Some(value) = v {
                out.push(Measurement {
                    mno: c.mno.clone(),
                    kpi,
                    value,
                    lat: fix.lat,
                    lon: fix.lon,
                });
            }
        }
    }
    for tx in &trace.transmissions {
        let Some(fix) = interpolate_fix(&trace.fixes, tx.t) else {
            continue;
        };
        out.push(Measurement {
            mno: tx.mno.clone(),
            kpi: match tx.direction {
                Direction::Uplink => Kpi::DatarateUl,
                Direction::Downlink => Kpi::DatarateDl,
            },
            value: tx.datarate,
            lat: fix.lat,
            lon: fix.lon,
        });
    }
    out
}
