use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{DriveTrace, Tech};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Table {
    Fixes,
    Contexts,
    Transmissions,
}

impl Table {
    pub fn file_name(self) -> &'static str {
        match self {
            Table::Fixes => "fixes.csv",
            Table::Contexts => "contexts.csv",
            Table::Transmissions => "transmissions.csv",
        }
    }
}

/// One broken invariant. `row` is the 0-based record index; the CSV line is
/// `row + 2` because of the header.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub table: Table,
    pub row: usize,
    pub field: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} row {} (line {}) field '{}': {}",
            self.table.file_name(),
            self.row,
            self.row + 2,
            self.field,
            self.message
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceLimits {
    pub payload_min_mb: f64,
    pub payload_max_mb: f64,
}

impl Default for TraceLimits {
    fn default() -> Self {
        TraceLimits {
            payload_min_mb: 0.1,
            payload_max_mb: 10.0,
        }
    }
}

/// Returns every invariant violation; empty iff the trace is valid.
pub fn validate_trace(trace: &DriveTrace, limits: &TraceLimits) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |table, row, field: &str, message: String| {
        out.push(Violation {
            table,
            row,
            field: field.to_string(),
            message,
        })
    };

    let mut prev_t: Option<f64> = None;
    for (row, fix) in trace.fixes.iter().enumerate() {
        if !fix.t.is_finite() {
            push(Table::Fixes, row, "t", "timestamp is not finite".into());
        } else if let Some(p) = prev_t {
            if fix.t <= p {
                push(
                    Table::Fixes,
                    row,
                    "t",
                    format!("non-monotonic timestamp {} after {}", fix.t, p),
                );
            }
        }
        prev_t = Some(fix.t);
        if !(-90.0..=90.0).contains(&fix.lat) {
            push(Table::Fixes, row, "lat", format!("latitude {} outside [-90, 90]", fix.lat));
        }
        if !(-180.0..=180.0).contains(&fix.lon) {
            push(Table::Fixes, row, "lon", format!("longitude {} outside [-180, 180]", fix.lon));
        }
        if !(fix.speed >= 0.0 && fix.speed.is_finite()) {
            push(Table::Fixes, row, "speed", format!("speed {} must be finite and >= 0", fix.speed));
        }
    }

    let mut prev_t: Option<f64> = None;
    let mut prev_by_mno: HashMap<&str, f64> = HashMap::new();
    for (row, c) in trace.contexts.iter().enumerate() {
        if !c.t.is_finite() {
            push(Table::Contexts, row, "t", "timestamp is not finite".into());
        } else {
            if let Some(p) = prev_t {
                if c.t < p {
                    push(
                        Table::Contexts,
                        row,
                        "t",
                        format!("non-monotonic timestamp {} after {}", c.t, p),
                    );
                }
            }
            if let Some(&p) = prev_by_mno.get(c.mno.as_str()) {
                if c.t <= p && prev_t.is_none_or(|g| c.t >= g) {
                    push(
                        Table::Contexts,
                        row,
                        "t",
                        format!("duplicate timestamp {} for operator {}", c.t, c.mno),
                    );
                }
            }
            prev_t = Some(c.t);
            prev_by_mno.insert(c.mno.as_str(), c.t);
        }
        if !trace.mnos.contains(&c.mno) {
            push(Table::Contexts, row, "mno", format!("undeclared operator '{}'", c.mno));
        }
        if c.tech != Tech::Lte {
            let lte_only = [
                ("rsrp", c.rsrp.is_some()),
                ("rsrq", c.rsrq.is_some()),
                ("sinr", c.sinr.is_some()),
                ("cqi", c.cqi.is_some()),
                ("ta", c.ta.is_some()),
                ("freq", c.freq.is_some()),
            ];
            for (field, present) in lte_only {
                if present {
                    push(
                        Table::Contexts,
                        row,
                        field,
                        format!("must be missing when tech is {}", c.tech.as_str()),
                    );
                }
            }
        }
        if let Some(cqi) = c.cqi {
            if cqi > 15 {
                push(Table::Contexts, row, "cqi", format!("cqi {cqi} outside [0, 15]"));
            }
        }
        for (field, v) in [
            ("rsrp", c.rsrp),
            ("rsrq", c.rsrq),
            ("sinr", c.sinr),
            ("freq", c.freq),
            ("ptx", c.ptx),
            ("rtt", c.rtt),
        ] {
            if let Some(v) = v {
                if !v.is_finite() {
                    push(Table::Contexts, row, field, "value is not finite".into());
                }
            }
        }
        if let Some(rtt) = c.rtt {
            if rtt < 0.0 {
                push(Table::Contexts, row, "rtt", format!("negative rtt {rtt}"));
            }
        }
        if let Some(freq) = c.freq {
            if freq <= 0.0 {
                push(Table::Contexts, row, "freq", format!("non-positive frequency {freq}"));
            }
        }
    }

    let mut prev_t: Option<f64> = None;
    for (row, tx) in trace.transmissions.iter().enumerate() {
        if !tx.t.is_finite() {
            push(Table::Transmissions, row, "t", "timestamp is not finite".into());
        } else {
            if let Some(p) = prev_t {
                if tx.t < p {
                    push(
                        Table::Transmissions,
                        row,
                        "t",
                        format!("non-monotonic timestamp {} after {}", tx.t, p),
                    );
                }
            }
            prev_t = Some(tx.t);
        }
        if !trace.mnos.contains(&tx.mno) {
            push(Table::Transmissions, row, "mno", format!("undeclared operator '{}'", tx.mno));
        }
        if !(tx.payload >= limits.payload_min_mb && tx.payload <= limits.payload_max_mb) {
            push(
                Table::Transmissions,
                row,
                "payload_mb",
                format!(
                    "payload {} outside [{}, {}]",
                    tx.payload, limits.payload_min_mb, limits.payload_max_mb
                ),
            );
        }
        if !(tx.datarate.is_finite() && tx.datarate > 0.0) {
            push(
                Table::Transmissions,
                row,
                "datarate_mbits",
                format!("data rate {} must be finite and positive", tx.datarate),
            );
        }
    }

    out
}
