//! Canonical CSV triplet (`fixes.csv`, `contexts.csv`, `transmissions.csv`)
//! plus an optional `meta.json` carrying scenario, run id and operator set.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{
    validate_trace, ContextSample, DriveTrace, Feature, FeatureVector, GpsFix,
    LabeledSample, Scenario, TraceLimits, TransmissionRecord,
};
use crate::error::{Error, Result};

pub const FIXES_HEADER: [&str; 4] = ["t", "lat", "lon", "speed"];
pub const CONTEXTS_HEADER: [&str; 13] = [
    "t", "mno", "tech", "rsrp", "rsrq", "sinr", "cqi", "ta", "freq", "enb_id", "cell_id", "ptx",
    "rtt",
];
pub const TRANSMISSIONS_HEADER: [&str; 5] = ["t", "mno", "direction", "payload_mb", "datarate_mbits"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub scenario: Scenario,
    pub run_id: String,
    pub mnos: Vec<String>,
}

/// Raw contents of one trace's files.
#[derive(Debug, Clone, Copy)]
pub struct TraceText<'a> {
    pub fixes: &'a str,
    pub contexts: &'a str,
    pub transmissions: &'a str,
    pub meta: Option<&'a TraceMeta>,
}

#[derive(Debug, Clone)]
pub struct ParsedTrace {
    pub trace: DriveTrace,
    /// Columns present in the files but not part of the schema.
    pub unknown_columns: usize,
}

struct Table {
    rows: Vec<(usize, csv::StringRecord)>,
    columns: Vec<Option<usize>>,
    unknown: usize,
}

impl Table {
    fn read(text: &str, schema: &[&str], required: &[&str]) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(false)
            .from_reader(text.as_bytes());
        let headers = reader
            .headers()
            .map_err(|e| Error::Malformed {
                line: 1,
                message: e.to_string(),
            })?
            .clone();
        let columns: Vec<Option<usize>> = schema
            .iter()
            .map(|name| headers.iter().position(|h| h.trim() == *name))
            .collect();
        for name in required {
            if !headers.iter().any(|h| h.trim() == *name) {
                return Err(Error::Malformed {
                    line: 1,
                    message: format!("missing required column '{name}'"),
                });
            }
        }
        let unknown = headers
            .iter()
            .filter(|h| !schema.contains(&h.trim()))
            .count();
        let mut rows = Vec::new();
        for (idx, record) in reader.records().enumerate() {
            let line = idx + 2;
            let record = record.map_err(|e| Error::Malformed {
                line,
                message: e.to_string(),
            })?;
            rows.push((line, record));
        }
        Ok(Table {
            rows,
            columns,
            unknown,
        })
    }

    fn field<'r>(&self, record: &'r csv::StringRecord, col: usize) -> Option<&'r str> {
        self.columns[col]
            .and_then(|c| record.get(c))
            .map(str::trim)
            .filter(|s| !s.is_empty())
    }
}

fn required<T: FromStr>(value: Option<&str>, line: usize, name: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    let raw = value.ok_or_else(|| Error::Malformed {
        line,
        message: format!("field '{name}' is required"),
    })?;
    raw.parse().map_err(|e: T::Err| Error::Malformed {
        line,
        message: format!("field '{name}': cannot parse '{raw}': {e}"),
    })
}

fn optional<T: FromStr>(value: Option<&str>, line: usize, name: &str) -> Result<Option<T>>
where
    T::Err: std::fmt::Display,
{
    value.map(|v| required(Some(v), line, name)).transpose()
}

pub fn parse_fixes(text: &str) -> Result<(Vec<GpsFix>, usize)> {
    let table = Table::read(text, &FIXES_HEADER, &FIXES_HEADER)?;
    let mut out = Vec::with_capacity(table.rows.len());
    for (line, rec) in &table.rows {
        let line = *line;
        out.push(GpsFix {
            t: required(table.field(rec, 0), line, "t")?,
            lat: required(table.field(rec, 1), line, "lat")?,
            lon: required(table.field(rec, 2), line, "lon")?,
            speed: required(table.field(rec, 3), line, "speed")?,
        });
    }
    Ok((out, table.unknown))
}

pub fn parse_contexts(text: &str) -> Result<(Vec<ContextSample>, usize)> {
    let table = Table::read(text, &CONTEXTS_HEADER, &["t", "mno", "tech"])?;
    let mut out = Vec::with_capacity(table.rows.len());
    for (line, rec) in &table.rows {
        let line = *line;
        out.push(ContextSample {
            t: required(table.field(rec, 0), line, "t")?,
            mno: required(table.field(rec, 1), line, "mno")?,
            tech: required(table.field(rec, 2), line, "tech")?,
            rsrp: optional(table.field(rec, 3), line, "rsrp")?,
            rsrq: optional(table.field(rec, 4), line, "rsrq")?,
            sinr: optional(table.field(rec, 5), line, "sinr")?,
            cqi: optional(table.field(rec, 6), line, "cqi")?,
            ta: optional(table.field(rec, 7), line, "ta")?,
            freq: optional(table.field(rec, 8), line, "freq")?,
            enb_id: optional(table.field(rec, 9), line, "enb_id")?,
            cell_id: optional(table.field(rec, 10), line, "cell_id")?,
            ptx: optional(table.field(rec, 11), line, "ptx")?,
            rtt: optional(table.field(rec, 12), line, "rtt")?,
        });
    }
    Ok((out, table.unknown))
}

pub fn parse_transmissions(text: &str) -> Result<(Vec<TransmissionRecord>, usize)> {
    let table = Table::read(text, &TRANSMISSIONS_HEADER, &TRANSMISSIONS_HEADER)?;
    let mut out = Vec::with_capacity(table.rows.len());
    for (line, rec) in &table.rows {
        let line = *line;
        out.push(TransmissionRecord {
            t: required(table.field(rec, 0), line, "t")?,
            mno: required(table.field(rec, 1), line, "mno")?,
            direction: required(table.field(rec, 2), line, "direction")?,
            payload: required(table.field(rec, 3), line, "payload_mb")?,
            datarate: required(table.field(rec, 4), line, "datarate_mbits")?,
        });
    }
    Ok((out, table.unknown))
}

/// Parses and validates a trace. Without `meta` the scenario defaults to
/// `synthetic`, the run id to `"0"`, and the operator set to the sorted
/// identifiers seen in the data.
pub fn parse_trace(text: TraceText<'_>, limits: &TraceLimits) -> Result<ParsedTrace> {
    let (fixes, u1) = parse_fixes(text.fixes)?;
    let (contexts, u2) = parse_contexts(text.contexts)?;
    let (transmissions, u3) = parse_transmissions(text.transmissions)?;
    let unknown_columns = u1 + u2 + u3;
    if unknown_columns > 0 {
        log::warn!("ignored {unknown_columns} unknown column(s) in trace files");
    }
    let (scenario, run_id, mnos) = match text.meta {
        Some(m) => (m.scenario, m.run_id.clone(), m.mnos.clone()),
        None => {
            let seen: BTreeSet<&str> = contexts
                .iter()
                .map(|c| c.mno.as_str())
                .chain(transmissions.iter().map(|t| t.mno.as_str()))
                .collect();
            (
                Scenario::Synthetic,
                "0".to_string(),
                seen.into_iter().map(String::from).collect(),
            )
        }
    };
    let trace = DriveTrace {
        scenario,
        run_id,
        mnos,
        fixes,
        contexts,
        transmissions,
    };
    let violations = validate_trace(&trace, limits);
    if !violations.is_empty() {
        return Err(Error::Validation(violations));
    }
    Ok(ParsedTrace {
        trace,
        unknown_columns,
    })
}

pub fn read_trace_dir(dir: &Path, limits: &TraceLimits) -> Result<ParsedTrace> {
    let fixes = fs::read_to_string(dir.join("fixes.csv"))?;
    let contexts = fs::read_to_string(dir.join("contexts.csv"))?;
    let transmissions = fs::read_to_string(dir.join("transmissions.csv"))?;
    let meta_path = dir.join("meta.json");
    let meta: Option<TraceMeta> = if meta_path.exists() {
        Some(serde_json::from_str(&fs::read_to_string(meta_path)?)?)
    } else {
        None
    };
    parse_trace(
        TraceText {
            fixes: &fixes,
            contexts: &contexts,
            transmissions: &transmissions,
            meta: meta.as_ref(),
        },
        limits,
    )
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn finish(writer: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = writer
        .into_inner()
        .map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn write_fixes(fixes: &[GpsFix]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(FIXES_HEADER)?;
    for f in fixes {
        w.write_record([
            f.t.to_string(),
            f.lat.to_string(),
            f.lon.to_string(),
            f.speed.to_string(),
        ])?;
    }
    finish(w)
}

pub fn write_contexts(contexts: &[ContextSample]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CONTEXTS_HEADER)?;
    for c in contexts {
        w.write_record([
            c.t.to_string(),
            c.mno.clone(),
            c.tech.as_str().to_string(),
            opt(c.rsrp),
            opt(c.rsrq),
            opt(c.sinr),
            opt(c.cqi),
            opt(c.ta),
            opt(c.freq),
            opt(c.enb_id),
            opt(c.cell_id),
            opt(c.ptx),
            opt(c.rtt),
        ])?;
    }
    finish(w)
}

pub fn write_transmissions(transmissions: &[TransmissionRecord]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(TRANSMISSIONS_HEADER)?;
    for tx in transmissions {
        w.write_record([
            tx.t.to_string(),
            tx.mno.clone(),
            tx.direction.as_str().to_string(),
            tx.payload.to_string(),
            tx.datarate.to_string(),
        ])?;
    }
    finish(w)
}

pub fn write_trace_dir(trace: &DriveTrace, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("fixes.csv"), write_fixes(&trace.fixes)?)?;
    fs::write(dir.join("contexts.csv"), write_contexts(&trace.contexts)?)?;
    fs::write(dir.join("transmissions.csv"), write_transmissions(&trace.transmissions)?)?;
    let meta = TraceMeta {
        scenario: trace.scenario,
        run_id: trace.run_id.clone(),
        mnos: trace.mnos.clone(),
    };
    fs::write(dir.join("meta.json"), serde_json::to_string_pretty(&meta)? + "\n")?;
    Ok(())
}

const SAMPLE_META: [&str; 9] = [
    "t", "mno", "scenario", "run_id", "direction", "enb_id", "cell_id", "lat", "lon",
];

fn samples_header() -> Vec<String> {
    let mut header: Vec<String> = SAMPLE_META.iter().map(|s| s.to_string()).collect();
    header.extend(Feature::ALL.iter().map(|f| format!("f_{}", f.name())));
    header.push("datarate_mbits".into());
    header
}

/// Labeled samples as one flat CSV (metadata, `f_`-prefixed features, label).
pub fn write_samples_csv(samples: &[LabeledSample]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(samples_header())?;
    for s in samples {
        let mut rec = vec![
            s.t.to_string(),
            s.mno.clone(),
            s.scenario.as_str().to_string(),
            s.run_id.clone(),
            s.direction.as_str().to_string(),
            opt(s.enb_id),
            opt(s.cell_id),
            s.lat.to_string(),
            s.lon.to_string(),
        ];
        rec.extend(s.features.0.iter().map(|v| opt(*v)));
        rec.push(s.label.to_string());
        w.write_record(rec)?;
    }
    finish(w)
}

pub fn read_samples_csv(text: &str) -> Result<Vec<LabeledSample>> {
    let header = samples_header();
    let schema: Vec<&str> = header.iter().map(String::as_str).collect();
    let required_cols: Vec<&str> = schema
        .iter()
        .copied()
        .filter(|c| !c.starts_with("f_") && *c != "enb_id" && *c != "cell_id")
        .collect();
    let table = Table::read(text, &schema, &required_cols)?;
    let mut out = Vec::with_capacity(table.rows.len());
    for (line, rec) in &table.rows {
        let line = *line;
        let mut features = FeatureVector::default();
        for (k, f) in Feature::ALL.iter().enumerate() {
            features.set(*f, optional(table.field(rec, SAMPLE_META.len() + k), line, f.name())?);
        }
        let label: f64 = required(table.field(rec, schema.len() - 1), line, "datarate_mbits")?;
        if !(label.is_finite() && label > 0.0) {
            return Err(Error::Malformed {
                line,
                message: format!("label {label} must be finite and positive"),
            });
        }
        out.push(LabeledSample {
            t: required(table.field(rec, 0), line, "t")?,
            mno: required(table.field(rec, 1), line, "mno")?,
            scenario: required(table.field(rec, 2), line, "scenario")?,
            run_id: required(table.field(rec, 3), line, "run_id")?,
            direction: required(table.field(rec, 4), line, "direction")?,
            enb_id: optional(table.field(rec, 5), line, "enb_id")?,
            cell_id: optional(table.field(rec, 6), line, "cell_id")?,
            lat: required(table.field(rec, 7), line, "lat")?,
            lon: required(table.field(rec, 8), line, "lon")?,
            features,
            label,
        });
    }
    Ok(out)
}
