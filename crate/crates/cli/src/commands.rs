use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;

use anyhow::{Context, Result};
use mnolytics::cm::{map_from_samples, origin_of, sweep_cell_sizes, sweep_table_csv, CmFeatureSpec};
use mnolytics::eval::{
    aggregate, binned_csv, binned_impact, ecdf, ecdf_csv, evaluate_level, feature_importance, group_detail_csv,
    importance_csv, level_table_csv, train_test_matrix, LevelEvaluation,
};
use mnolytics::grid::{build_map, measurements_from_trace, ConnectivityMap, GridConfig, Kpi, Measurement};
use mnolytics::learners::{Dataset, RegressionModel};
use mnolytics::select::{align_instants, coverage, selection_table_csv};
use mnolytics::trace::{
    read_trace_dir, synth_trace, write_samples_csv, write_trace_dir, Direction, Feature, SynthConfig, TraceLimits,
};
use mnolytics::Error;

use crate::args::*;
use crate::io::{input_files, load_samples, load_traces, manifest_for_file, resolve_output, trace_dirs, write_file, Run};
use crate::UsageError;

pub fn run(cmd: &Command) -> Result<()> {
    let run = Run::start();
    let name = cmd.name();
    let seed = cmd.seed();
    match cmd {
        Command::Ingest(a) => {
            let loaded = load_samples(&a.data)?;
            let out = resolve_output(&a.out);
            write_file(&out, &write_samples_csv(&loaded.samples)?)?;
            run.manifest(&manifest_for_file(&out), name, a, seed, &loaded.files, std::slice::from_ref(&out))?;
            eprintln!("wrote {} samples to {}", loaded.samples.len(), out.display());
        }
        Command::Synth(a) => {
            let cfg = SynthConfig {
                seed: a.seed,
                n_mnos: a.mnos,
                duration_s: a.duration,
                scenario: a.scenario.into(),
                run_id: a.run_id.clone(),
                route: a.route_shape(),
                mean_speed_kmh: a.speed,
                tx_interval_s: a.tx_interval,
                noise_sigma: a.noise,
                kpi_noise_db: a.kpi_noise,
                direction: match a.direction {
                    SynthDirection::Alternate => None,
                    SynthDirection::Uplink => Some(Direction::Uplink),
                    SynthDirection::Downlink => Some(Direction::Downlink),
                },
                ..SynthConfig::default()
            };
            let trace = synth_trace(&cfg)?.trace;
            let out = resolve_output(&a.out);
            write_trace_dir(&trace, &out).with_context(|| format!("writing {}", out.display()))?;
            let files = input_files(std::slice::from_ref(&out));
            run.manifest(&out.join("manifest.json"), name, a, seed, &[], &files)?;
            eprintln!(
                "wrote {} fixes, {} contexts, {} transmissions to {}",
                trace.fixes.len(),
                trace.contexts.len(),
                trace.transmissions.len(),
                out.display()
            );
        }
        Command::Validate(a) => validate(a, &run)?,
        Command::BuildMap(a) => build_map_cmd(a, &run)?,
        Command::Select(a) => {
            let (traces, files) = load_traces(&a.trace)?;
            let alignment = align_instants(&traces, a.bucket)?;
            for w in &alignment.warnings {
                log::warn!("{w}");
            }
            let out = resolve_output(&a.out);
            write_file(&out, &selection_table_csv(&alignment)?)?;
            run.manifest(&manifest_for_file(&out), name, a, seed, &files, std::slice::from_ref(&out))?;
            let cov = coverage(&alignment);
            eprintln!("{} instants, combined coverage {:.4}; wrote {}", cov.instants, cov.combined, out.display());
        }
        Command::Train(a) => {
            let loaded = load_samples(&a.data)?;
            let data = Dataset::from_samples(&loaded.samples);
            let model = a.learner.spec(a.seed).fit(&data)?;
            let out = resolve_output(&a.out);
            if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
                fs::create_dir_all(parent)?;
            }
            model.save(&out)?;
            run.manifest(&manifest_for_file(&out), name, a, seed, &loaded.files, std::slice::from_ref(&out))?;
            eprintln!("trained {} on {} samples; wrote {}", model.learner.name(), data.len(), out.display());
        }
        Command::Eval(a) => eval(a, &run)?,
        Command::Matrix(a) => {
            let loaded = load_samples(&a.data)?;
            let agg = aggregate(&loaded.samples, a.level.into(), 2 * a.cv.folds);
            for (key, n) in &agg.dropped {
                log::warn!("group {key} dropped: {n} samples below the size gate of 2k = {}", 2 * a.cv.folds);
            }
            let groups: Vec<(String, Dataset)> = agg.groups.into_iter().map(|g| (g.key.to_string(), g.data)).collect();
            let m = train_test_matrix(&groups, &a.learner.spec(a.seed), a.cv.folds, a.seed, a.cv.scoring.into())?;
            let out = resolve_output(&a.out);
            write_file(&out, &m.to_csv()?)?;
            run.manifest(&manifest_for_file(&out), name, a, seed, &loaded.files, std::slice::from_ref(&out))?;
            eprintln!("{}×{} matrix; wrote {}", m.keys.len(), m.keys.len(), out.display());
        }
        Command::Importance(a) => {
            let (model, files) = match &a.model_file {
                Some(p) => (RegressionModel::load(p)?, vec![p.clone()]),
                None => {
                    let data_args = DataArgs {
                        data: a.data.clone(),
                        max_gap: a.max_gap,
                        mno: a.mno.clone(),
                        direction: a.direction,
                    };
                    let loaded = load_samples(&data_args)?;
                    let spec = a.params.spec(Learner::Rf, a.seed);
                    (spec.fit(&Dataset::from_samples(&loaded.samples))?, loaded.files)
                }
            };
            let imp = feature_importance(&model)?;
            let out = resolve_output(&a.out);
            write_file(&out, &importance_csv(&imp)?)?;
            run.manifest(&manifest_for_file(&out), name, a, seed, &files, std::slice::from_ref(&out))?;
            eprintln!("wrote {}", out.display());
        }
        Command::CmSweep(a) => cm_sweep(a, &run)?,
        Command::Ecdf(a) => {
            let loaded = load_samples(&a.data)?;
            let column = if a.column == "label" { None } else { Some(parse_feature(&a.column)?) };
            let mut by_mno: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
            for s in &loaded.samples {
                let v = match column {
                    None => Some(s.label),
                    Some(f) => s.features.get(f),
                };
                if let Some(v) = v {
                    by_mno.entry(&s.mno).or_default().push(v);
                }
            }
            let series = by_mno
                .into_iter()
                .map(|(m, v)| Ok((m.to_string(), ecdf(&v)?)))
                .collect::<Result<Vec<_>>>()?;
            if series.is_empty() {
                return Err(Error::EmptyDataset).context(format!("no values for column '{}'", a.column));
            }
            let out = resolve_output(&a.out);
            write_file(&out, &ecdf_csv(&series)?)?;
            run.manifest(&manifest_for_file(&out), name, a, seed, &loaded.files, std::slice::from_ref(&out))?;
            eprintln!("wrote {}", out.display());
        }
        Command::Predict(a) => predict(a, &run)?,
    }
    Ok(())
}

fn parse_feature(name: &str) -> Result<Feature> {
    name.parse::<Feature>().map_err(|_| UsageError(format!("unknown feature '{name}'")).into())
}

fn validate(a: &ValidateArgs, run: &Run) -> Result<()> {
    let dirs = trace_dirs(&a.trace)?;
    let mut rows = Vec::new();
    for d in &dirs {
        match read_trace_dir(d, &TraceLimits::default()) {
            Ok(_) => println!("{}: ok", d.display()),
            Err(Error::Validation(vs)) => {
                for v in vs {
                    println!("{}: {v}", d.display());
                    rows.push([
                        d.display().to_string(),
                        v.table.file_name().to_string(),
                        v.row.to_string(),
                        (v.row + 2).to_string(),
                        v.field,
                        v.message,
                    ]);
                }
            }
            Err(e @ (Error::Malformed { .. } | Error::Csv(_))) => {
                println!("{}: {e}", d.display());
                rows.push([d.display().to_string(), String::new(), String::new(), String::new(), String::new(), e.to_string()]);
            }
            Err(e) => return Err(e).with_context(|| format!("reading {}", d.display())),
        }
    }
    if let Some(out) = &a.out {
        let out = resolve_output(out);
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["trace", "table", "row", "line", "field", "message"])?;
        for r in &rows {
            w.write_record(r)?;
        }
        write_file(&out, &String::from_utf8(w.into_inner()?)?)?;
        run.manifest(&manifest_for_file(&out), "validate", a, None, &input_files(&dirs), std::slice::from_ref(&out))?;
    }
    if rows.is_empty() {
        Ok(())
    } else {
        Err(UsageError(format!("{} violation(s) in {} trace(s)", rows.len(), dirs.len())).into())
    }
}

fn build_map_cmd(a: &BuildMapArgs, run: &Run) -> Result<()> {
    // Trace directories contribute every context reading; a samples CSV only
    // the joined samples.
    let all_traces = a.data.data.iter().all(|p| p.is_dir());
    let (map, files) = if all_traces {
        let (traces, files) = load_traces(&a.data.data)?;
        let ms: Vec<Measurement> = traces
            .iter()
            .flat_map(measurements_from_trace)
            .filter(|m| a.data.mno.is_empty() || a.data.mno.contains(&m.mno))
            .collect();
        if ms.is_empty() {
            return Err(Error::EmptyDataset).context("no positioned measurements");
        }
        let (lat0, lon0) = match (a.origin_lat, a.origin_lon) {
            (Some(la), Some(lo)) => (la, lo),
            _ => ms.iter().fold((f64::INFINITY, f64::INFINITY), |(la, lo), m| (la.min(m.lat), lo.min(m.lon))),
        };
        let (map, report) = build_map(&ms, GridConfig::new(lat0, lon0, a.cell_size)?);
        log::info!("map build: {report:?}");
        (map, files)
    } else {
        let loaded = load_samples(&a.data)?;
        let (lat0, lon0) = match (a.origin_lat, a.origin_lon) {
            (Some(la), Some(lo)) => (la, lo),
            _ => origin_of(&loaded.samples).context("no samples")?,
        };
        (map_from_samples(&loaded.samples, GridConfig::new(lat0, lon0, a.cell_size)?), loaded.files)
    };

    let dir = resolve_output(&a.out);
    let mut outputs = Vec::new();
    let mut emit = |rel: String, text: String| -> Result<()> {
        let p = dir.join(rel);
        write_file(&p, &text)?;
        outputs.push(p);
        Ok(())
    };
    emit("map.json".into(), map.to_json()?)?;
    for (mno, kpi) in map.layers.keys() {
        emit(format!("layers/{mno}_{}.csv", kpi.name()), map.layer_csv(mno, *kpi)?)?;
    }
    for kpi in Kpi::ALL {
        if let Some(better) = kpi.better() {
            if map.layers.keys().any(|(_, k)| *k == kpi) {
                emit(format!("operator_{}.csv", kpi.name()), operator_csv(&map, kpi, better)?)?;
            }
        }
    }
    run.manifest(&dir.join("manifest.json"), "build-map", a, None, &files, &outputs)?;
    eprintln!("{} layers, {} cells; wrote {}", map.layers.len(), map.cell_count(), dir.display());
    Ok(())
}

fn operator_csv(map: &ConnectivityMap, kpi: Kpi, better: mnolytics::grid::Better) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["i", "j", "mno"])?;
    for ((i, j), mno) in map.operator_map(kpi, better) {
        w.write_record([i.to_string(), j.to_string(), mno])?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

fn eval(a: &EvalArgs, run: &Run) -> Result<()> {
    let loaded = load_samples(&a.data)?;
    let mut evals: Vec<LevelEvaluation> = Vec::new();
    let mut last_err = None;
    for &level in &a.levels {
        for &learner in &a.models {
            let spec = a.params.spec(learner, a.seed);
            match evaluate_level(&loaded.samples, level.into(), &spec, a.cv.folds, a.seed, a.cv.scoring.into()) {
                Ok(e) => {
                    for (key, n) in &e.dropped {
                        log::info!("{key}: {n} samples below the size gate");
                    }
                    evals.push(e);
                }
                Err(e @ Error::TooSmall(_)) => {
                    log::warn!("skipping level {level:?}: {e}");
                    last_err = Some(e);
                }
                Err(e) => return Err(e.into()),
            }
        }
    }
    if evals.is_empty() {
        return Err(last_err.map_or_else(|| UsageError("no levels or models selected".into()).into(), Into::into));
    }

    let dir = resolve_output(&a.out);
    let mut outputs: Vec<PathBuf> = Vec::new();
    let mut emit = |rel: &str, text: String| -> Result<()> {
        let p = dir.join(rel);
        write_file(&p, &text)?;
        outputs.push(p);
        Ok(())
    };
    emit("table.csv", level_table_csv(&evals)?)?;
    emit("groups.csv", group_detail_csv(&evals)?)?;

    let feature = parse_feature(&a.bin_feature)?;
    let mut by_mno: BTreeMap<&str, Vec<(f64, f64)>> = BTreeMap::new();
    for s in &loaded.samples {
        if let Some(x) = s.features.get(feature) {
            by_mno.entry(&s.mno).or_default().push((x, s.label));
        }
    }
    let mut binned = String::new();
    for (mno, pairs) in by_mno {
        match binned_impact(&pairs, a.bins) {
            Ok(bins) => {
                let csv = binned_csv(&format!("{}_{mno}", feature.name()), &bins)?;
                // Keep one header across operators.
                let body = if binned.is_empty() { csv.as_str() } else { csv.split_once('\n').map_or("", |x| x.1) };
                binned.push_str(body);
            }
            Err(e) => log::warn!("no binned impact for {mno}: {e}"),
        }
    }
    if !binned.is_empty() {
        emit("binned.csv", binned)?;
    }
    run.manifest(&dir.join("manifest.json"), "eval", a, Some(a.seed), &loaded.files, &outputs)?;
    for e in &evals {
        for s in e.summary() {
            eprintln!(
                "{:<8} {:<6} {:<4} groups {:>4}  mean R² {:.4}  weighted R² {:.4}",
                format!("{:?}", e.level).to_lowercase(),
                e.learner,
                s.mno,
                s.groups,
                s.mean_r2,
                s.weighted_r2
            );
        }
    }
    eprintln!("wrote {}", dir.display());
    Ok(())
}

fn cm_sweep(a: &CmSweepArgs, run: &Run) -> Result<()> {
    let loaded = load_samples(&a.data)?;
    let kpis = a.kpis.iter().map(|k| parse_feature(k)).collect::<Result<Vec<_>>>()?;
    let first = *a.sizes.first().ok_or_else(|| UsageError("no cell sizes given".into()))?;
    let base = CmFeatureSpec { kpis, fallback_radius: a.fallback_radius, keep_measured: a.keep_measured, ..CmFeatureSpec::new(first) };
    base.validate()?;
    let spec = a.learner.spec(a.seed);
    let mut by_mno: BTreeMap<String, Vec<_>> = BTreeMap::new();
    for s in &loaded.samples {
        by_mno.entry(s.mno.clone()).or_default().push(s.clone());
    }
    let mut tables = Vec::new();
    for (mno, samples) in by_mno {
        let rows = sweep_cell_sizes(&samples, &a.sizes, &base, &spec, a.folds, a.seed)
            .with_context(|| format!("operator {mno}"))?;
        for r in &rows {
            eprintln!("{mno} {:<8} R² {:.4}  MAE {:.4}  n {}  dropped {}", r.data, r.r2, r.mae, r.n, r.dropped);
        }
        tables.push((mno, rows));
    }
    let out = resolve_output(&a.out);
    write_file(&out, &sweep_table_csv(&tables)?)?;
    run.manifest(&manifest_for_file(&out), "cm-sweep", a, Some(a.seed), &loaded.files, std::slice::from_ref(&out))?;
    eprintln!("wrote {}", out.display());
    Ok(())
}

fn predict(a: &PredictArgs, run: &Run) -> Result<()> {
    let model = RegressionModel::load(&a.model)?;
    if !a.features.is_file() {
        return Err(UsageError(format!("{} does not exist", a.features.display())).into());
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(&a.features)
        .with_context(|| format!("reading {}", a.features.display()))?;
    let header: Vec<String> = reader.headers().map_err(Error::from)?.iter().map(|h| h.trim().to_string()).collect();
    let expected: Vec<&str> = model.features.iter().map(|f| f.name.as_str()).collect();
    if header != expected {
        return Err(Error::FeatureMismatch(format!(
            "model expects columns [{}], {} has [{}]",
            expected.join(","),
            a.features.display(),
            header.join(",")
        ))
        .into());
    }
    let mut out = String::from("prediction\n");
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(Error::from)?;
        let line = i + 2;
        let row = rec
            .iter()
            .map(|field| {
                let field = field.trim();
                if field.is_empty() {
                    return Ok(None);
                }
                match field.parse::<f64>() {
                    Ok(v) if v.is_finite() => Ok(Some(v)),
                    _ => Err(Error::Malformed { line, message: format!("'{field}' is not a finite number") }),
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        out.push_str(&format!("{}\n", model.predict_row(&row)));
    }
    match &a.out {
        Some(p) => {
            let p = resolve_output(p);
            write_file(&p, &out)?;
            run.manifest(&manifest_for_file(&p), "predict", a, None, &[a.model.clone(), a.features.clone()], std::slice::from_ref(&p))?;
        }
        None => print!("{out}"),
    }
    Ok(())
}
