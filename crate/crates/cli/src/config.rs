//! Merges a TOML config file into argv. Keys mirror long flags (underscores
//! or dashes); a `[command]` table applies to that subcommand, top-level keys
//! to whichever subcommand accepts them. Flags given on the command line win.

use std::ffi::OsString;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::CommandFactory;

use crate::args::Cli;
use crate::UsageError;

const GLOBAL_WITH_VALUE: [&str; 2] = ["--threads", "--config"];

struct Scan {
    config: Option<PathBuf>,
    subcommand: Option<String>,
}

fn scan(argv: &[OsString]) -> Scan {
    let mut out = Scan { config: None, subcommand: None };
    let mut it = argv.iter().skip(1).map(|a| a.to_string_lossy().into_owned());
    while let Some(a) = it.next() {
        if a == "--config" {
            out.config = it.next().map(PathBuf::from);
        } else if let Some(v) = a.strip_prefix("--config=") {
            out.config = Some(PathBuf::from(v));
        } else if GLOBAL_WITH_VALUE.contains(&a.as_str()) {
            it.next();
        } else if !a.starts_with('-') && out.subcommand.is_none() {
            out.subcommand = Some(a);
        }
    }
    out
}

fn given(argv: &[OsString], flag: &str) -> bool {
    let eq = format!("{flag}=");
    argv.iter().any(|a| {
        let a = a.to_string_lossy();
        a == flag || a.starts_with(&eq)
    })
}

fn scalar(key: &str, v: &toml::Value) -> Result<String> {
    Ok(match v {
        toml::Value::String(s) => s.clone(),
        toml::Value::Integer(i) => i.to_string(),
        toml::Value::Float(f) => f.to_string(),
        toml::Value::Boolean(b) => b.to_string(),
        _ => return Err(UsageError(format!("config key '{key}' must be a scalar or an array of scalars")).into()),
    })
}

fn push_flag(out: &mut Vec<OsString>, flag: &str, key: &str, value: &toml::Value, is_switch: bool) -> Result<()> {
    match value {
        toml::Value::Boolean(b) if is_switch => {
            if *b {
                out.push(flag.into());
            }
        }
        toml::Value::Array(items) => {
            for item in items {
                out.push(format!("{flag}={}", scalar(key, item)?).into());
            }
        }
        v => out.push(format!("{flag}={}", scalar(key, v)?).into()),
    }
    Ok(())
}

/// Returns argv with config-file values appended as flags.
pub fn merge(argv: Vec<OsString>) -> Result<Vec<OsString>> {
    let s = scan(&argv);
    let Some(path) = s.config else {
        return Ok(argv);
    };
    let text = std::fs::read_to_string(&path)
        .map_err(|e| UsageError(format!("cannot read config {}: {e}", path.display())))?;
    let table: toml::Table = text
        .parse()
        .map_err(|e| UsageError(format!("config {}: {e}", path.display())))?;

    let cmd = Cli::command();
    let sub = s.subcommand.as_deref().and_then(|name| cmd.find_subcommand(name));
    let switch = |c: &clap::Command, long: &str| {
        c.get_arguments()
            .find(|a| a.get_long() == Some(long))
            .map(|a| matches!(a.get_action(), clap::ArgAction::SetTrue))
    };

    let mut extra: Vec<OsString> = Vec::new();
    let mut globals: Vec<OsString> = Vec::new();
    for (key, value) in &table {
        if let toml::Value::Table(inner) = value {
            if cmd.find_subcommand(key).is_none() {
                return Err(UsageError(format!("config table [{key}] is not a subcommand")).into());
            }
            if Some(key.as_str()) != s.subcommand.as_deref() {
                continue;
            }
            let sub = sub.context("subcommand lookup")?;
            for (k, v) in inner {
                let long = k.replace('_', "-");
                let flag = format!("--{long}");
                let Some(is_switch) = switch(sub, &long) else {
                    return Err(UsageError(format!("config key [{key}].{k} is not a flag of '{key}'")).into());
                };
                if !given(&argv, &flag) {
                    push_flag(&mut extra, &flag, k, v, is_switch)?;
                }
            }
            continue;
        }
        let long = key.replace('_', "-");
        let flag = format!("--{long}");
        if long == "threads" {
            if !given(&argv, &flag) {
                push_flag(&mut globals, &flag, key, value, false)?;
            }
            continue;
        }
        if long == "config" {
            return Err(UsageError("config files cannot include other config files".into()).into());
        }
        let known = cmd
            .get_subcommands()
            .any(|c| c.get_arguments().any(|a| a.get_long() == Some(long.as_str())));
        if !known {
            return Err(UsageError(format!("config key '{key}' is not a flag of any subcommand")).into());
        }
        if let Some(is_switch) = sub.and_then(|c| switch(c, &long)) {
            if !given(&argv, &flag) {
                push_flag(&mut extra, &flag, key, value, is_switch)?;
            }
        }
    }
    // Global flags go before the subcommand so they never collide with its args.
    let mut out = Vec::with_capacity(argv.len() + globals.len() + extra.len());
    out.push(argv[0].clone());
    out.extend(globals);
    out.extend(argv.into_iter().skip(1));
    out.extend(extra);
    Ok(out)
}
