use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use chrono::Utc;
use mnolytics::trace::{
    join_samples, read_samples_csv, read_trace_dir, DriveTrace, LabeledSample, TraceLimits,
};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::args::DataArgs;
use crate::UsageError;

pub const OUTPUT_DIR_ENV: &str = "MNOLYTICS_OUTPUT_DIR";

const TRACE_FILES: [&str; 4] = ["fixes.csv", "contexts.csv", "transmissions.csv", "meta.json"];

fn is_trace_dir(p: &Path) -> bool {
    p.join("fixes.csv").is_file()
}

/// Expands each path to trace directories: a trace directory itself, or the
/// sorted trace directories directly inside it.
pub fn trace_dirs(paths: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in paths {
        if is_trace_dir(p) {
            out.push(p.clone());
            continue;
        }
        if !p.is_dir() {
            return Err(UsageError(format!("{} is not a trace directory", p.display())).into());
        }
        let mut children: Vec<PathBuf> = fs::read_dir(p)
            .with_context(|| format!("reading {}", p.display()))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|c| is_trace_dir(c))
            .collect();
        if children.is_empty() {
            return Err(UsageError(format!("{} contains no trace directories", p.display())).into());
        }
        children.sort();
        out.extend(children);
    }
    Ok(out)
}

pub fn load_traces(paths: &[PathBuf]) -> Result<(Vec<DriveTrace>, Vec<PathBuf>)> {
    let dirs = trace_dirs(paths)?;
    let mut traces = Vec::with_capacity(dirs.len());
    for d in &dirs {
        let parsed = read_trace_dir(d, &TraceLimits::default()).with_context(|| format!("reading trace {}", d.display()))?;
        traces.push(parsed.trace);
    }
    Ok((traces, input_files(&dirs)))
}

/// Every file that contributed to a set of inputs, for digests.
pub fn input_files(paths: &[PathBuf]) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            out.extend(TRACE_FILES.iter().map(|f| p.join(f)).filter(|f| f.is_file()));
        } else {
            out.push(p.clone());
        }
    }
    out
}

pub struct Loaded {
    pub samples: Vec<LabeledSample>,
    pub files: Vec<PathBuf>,
}

/// Reads samples CSVs and trace directories, joining traces, then applies the
/// operator and direction filters.
pub fn load_samples(args: &DataArgs) -> Result<Loaded> {
    let mut samples = Vec::new();
    let mut files = Vec::new();
    for p in &args.data {
        if p.is_file() {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            samples.extend(read_samples_csv(&text).with_context(|| format!("parsing {}", p.display()))?);
            files.push(p.clone());
        } else if p.exists() {
            let (ts, fs) = load_traces(std::slice::from_ref(p))?;
            for t in &ts {
                let (joined, report) = join_samples(t, args.max_gap);
                log::info!(
                    "run {}: {} of {} transmissions joined ({} without context, {} without position)",
                    t.run_id,
                    report.joined,
                    report.transmissions,
                    report.dropped_no_context,
                    report.dropped_no_position
                );
                samples.extend(joined);
            }
            files.extend(fs);
        } else {
            return Err(UsageError(format!("{} does not exist", p.display())).into());
        }
    }
    samples.retain(|s| (args.mno.is_empty() || args.mno.contains(&s.mno)) && args.direction.admits(s.direction));
    if samples.is_empty() {
        return Err(mnolytics::Error::EmptyDataset).context("no samples after filtering");
    }
    Ok(Loaded { samples, files })
}

/// Relative output paths land under `$MNOLYTICS_OUTPUT_DIR` when it is set.
pub fn resolve_output(p: &Path) -> PathBuf {
    match std::env::var_os(OUTPUT_DIR_ENV) {
        Some(dir) if p.is_relative() && !dir.is_empty() => PathBuf::from(dir).join(p),
        _ => p.to_path_buf(),
    }
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

/// Manifest path for a file artifact: `model.json` → `model.manifest.json`.
pub fn manifest_for_file(path: &Path) -> PathBuf {
    path.with_extension("manifest.json")
}

#[derive(Serialize)]
struct InputDigest {
    path: String,
    sha256: String,
}

#[derive(Serialize)]
struct Manifest<'a, C: Serialize> {
    command: &'a str,
    config: &'a C,
    seed: Option<u64>,
    inputs: Vec<InputDigest>,
    outputs: Vec<String>,
    version: &'a str,
    started_at: String,
    finished_at: String,
}

pub struct Run {
    pub started: chrono::DateTime<Utc>,
}

impl Run {
    pub fn start() -> Run {
        Run { started: Utc::now() }
    }

    pub fn manifest<C: Serialize>(
        &self,
        path: &Path,
        command: &str,
        config: &C,
        seed: Option<u64>,
        inputs: &[PathBuf],
        outputs: &[PathBuf],
    ) -> Result<()> {
        let inputs = inputs
            .iter()
            .map(|p| {
                let bytes = fs::read(p).with_context(|| format!("hashing {}", p.display()))?;
                Ok(InputDigest { path: p.display().to_string(), sha256: hex::encode(Sha256::digest(&bytes)) })
            })
            .collect::<Result<Vec<_>>>()?;
        let m = Manifest {
            command,
            config,
            seed,
            inputs,
            outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
            version: env!("CARGO_PKG_VERSION"),
            started_at: self.started.to_rfc3339(),
            finished_at: Utc::now().to_rfc3339(),
        };
        write_file(path, &(serde_json::to_string_pretty(&m)? + "\n"))
    }
}
