use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mnolytics::learners::RegressionModel;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_mnolytics"));
    c.env_remove("MNOLYTICS_OUTPUT_DIR");
    c
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().expect("spawn mnolytics")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = run_in(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed with {:?}\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn synth(dir: &Path, out: &str, extra: &[&str]) {
    let mut args = vec!["synth", "--out", out];
    args.extend_from_slice(extra);
    if !extra.contains(&"--seed") {
        args.extend(["--seed", "7"]);
    }
    ok(dir, &args);
}

fn read_json(p: PathBuf) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))).unwrap()
}

#[test]
fn synth_then_train_writes_model_and_manifest() {
    let d = tempfile::tempdir().unwrap();
    synth(d.path(), "t/", &["--duration", "900"]);
    assert!(d.path().join("t/manifest.json").is_file());
    ok(d.path(), &["train", "--model", "rf", "--data", "t/", "--out", "m.json", "--trees", "10", "--seed", "3"]);

    let model = RegressionModel::load(&d.path().join("m.json")).unwrap();
    assert_eq!(model.features.len(), 9);
    let m = read_json(d.path().join("m.manifest.json"));
    assert_eq!(m["command"], "train");
    assert_eq!(m["seed"], 3);
    assert_eq!(m["config"]["learner"]["model"], "rf");
    assert_eq!(m["version"], env!("CARGO_PKG_VERSION"));
    assert!(m["started_at"].is_string() && m["finished_at"].is_string());
    let inputs = m["inputs"].as_array().unwrap();
    assert_eq!(inputs.len(), 4);
    for i in inputs {
        let bytes = fs::read(d.path().join(i["path"].as_str().unwrap())).unwrap();
        assert_eq!(i["sha256"].as_str().unwrap(), hex::encode(Sha256::digest(&bytes)));
    }
}

#[test]
fn eval_below_size_gate_exits_2() {
    let d = tempfile::tempdir().unwrap();
    synth(d.path(), "t", &["--duration", "60"]);
    let out = run_in(d.path(), &["eval", "--data", "t", "--folds", "10", "--trees", "5"]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    assert!(stderr(&out).contains("size gate"), "{}", stderr(&out));
}

#[test]
fn predict_is_bit_equal_to_in_process_prediction() {
    let d = tempfile::tempdir().unwrap();
    synth(d.path(), "t", &["--duration", "900", "--noise", "0.1"]);
    ok(d.path(), &["train", "--data", "t", "--out", "m.json", "--trees", "30"]);
    let model = RegressionModel::load(&d.path().join("m.json")).unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let names: Vec<&str> = model.features.iter().map(|f| f.name.as_str()).collect();
    let mut csv = names.join(",") + "\n";
    let mut rows = Vec::new();
    for _ in 0..100 {
        let row: Vec<Option<f64>> = (0..names.len())
            .map(|j| rng.gen_bool(0.85).then(|| rng.gen_range(-130.0..60.0) * (j + 1) as f64 / 3.0))
            .collect();
        let fields: Vec<String> = row.iter().map(|v| v.map_or_else(String::new, |x| x.to_string())).collect();
        csv += &(fields.join(",") + "\n");
        rows.push(row);
    }
    fs::write(d.path().join("fv.csv"), csv).unwrap();
    let out = ok(d.path(), &["predict", "--model", "m.json", "--features", "fv.csv"]);
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("prediction"));
    let got: Vec<f64> = lines.map(|l| l.parse().unwrap()).collect();
    assert_eq!(got.len(), rows.len());
    for (g, row) in got.iter().zip(&rows) {
        assert_eq!(g.to_bits(), model.predict_row(row).to_bits());
    }

    // Reordered header is rejected as a user error.
    let mut swapped = names.clone();
    swapped.swap(0, 1);
    fs::write(d.path().join("bad.csv"), swapped.join(",") + "\n").unwrap();
    let out = run_in(d.path(), &["predict", "--model", "m.json", "--features", "bad.csv"]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    assert!(stderr(&out).contains("feature ordering"), "{}", stderr(&out));
}

#[test]
fn truncated_model_exits_1() {
    let d = tempfile::tempdir().unwrap();
    synth(d.path(), "t", &["--duration", "600"]);
    ok(d.path(), &["train", "--data", "t", "--model", "cart", "--out", "m.json"]);
    let bytes = fs::read(d.path().join("m.json")).unwrap();
    fs::write(d.path().join("m.json"), &bytes[..bytes.len() / 2]).unwrap();
    fs::write(d.path().join("fv.csv"), "payload\n1\n").unwrap();
    let out = run_in(d.path(), &["predict", "--model", "m.json", "--features", "fv.csv"]);
    assert_eq!(out.status.code(), Some(1), "{}", stderr(&out));
    assert!(stderr(&out).contains("corrupt"), "{}", stderr(&out));
}

#[test]
fn usage_errors_exit_2() {
    let d = tempfile::tempdir().unwrap();
    for args in [&["train", "--bogus"][..], &["frobnicate"][..], &["train", "--model", "svm", "--data", "x"][..], &[][..]] {
        let out = run_in(d.path(), args);
        assert_eq!(out.status.code(), Some(2), "{args:?}: {}", stderr(&out));
    }
    let out = run_in(d.path(), &["train", "--data", "missing"]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
}

#[test]
fn help_lists_defaults() {
    let d = tempfile::tempdir().unwrap();
    let expect: &[(&str, &[&str])] = &[
        ("train", &["[default: rf]", "[default: 100]", "[default: 5]", "[default: 0.05]", "[default: 15]", "[default: model.json]"]),
        ("eval", &["[default: 10]", "[default: pooled]", "[default: mno,scenario,enb,cell]", "[default: sinr]"]),
        ("cm-sweep", &["[default: 5,10,25,50,100]", "[default: rsrp,rsrq,sinr,cqi,ta,freq]", "[default: 0]"]),
        ("build-map", &["[default: 10]"]),
        ("select", &["[default: 10]"]),
        ("ingest", &["[default: 5]", "[default: all]"]),
    ];
    for (cmd, needles) in expect {
        let out = ok(d.path(), &[cmd, "--help"]);
        let text = String::from_utf8(out.stdout).unwrap();
        for n in *needles {
            assert!(text.contains(n), "{cmd} --help lacks {n}:\n{text}");
        }
    }
    let top = String::from_utf8(ok(d.path(), &["--help"]).stdout).unwrap();
    for cmd in ["ingest", "synth", "validate", "build-map", "select", "train", "eval", "matrix", "importance", "cm-sweep", "ecdf", "predict"] {
        assert!(top.contains(cmd), "{cmd} missing from --help");
    }
}

fn read_all(dir: &Path, names: &[&str]) -> Vec<Vec<u8>> {
    names.iter().map(|n| fs::read(dir.join(n)).unwrap()).collect()
}

fn without_timestamps(p: PathBuf) -> serde_json::Value {
    let mut v = read_json(p);
    let o = v.as_object_mut().unwrap();
    o.remove("started_at");
    o.remove("finished_at");
    v
}

#[test]
fn reruns_are_byte_identical_and_thread_count_does_not_matter() {
    let d = tempfile::tempdir().unwrap();
    synth(d.path(), "t", &["--duration", "1800", "--noise", "0.05"]);
    let files = ["ev/table.csv", "ev/groups.csv", "ev/binned.csv", "cm.csv", "mx.csv", "imp.csv"];
    let go = |threads: &str| {
        let base = ["--threads", threads];
        let cmds: [&[&str]; 4] = [
            &["eval", "--data", "t", "--models", "rf,m5", "--trees", "15", "--folds", "5", "--seed", "2", "--out", "ev"],
            &["cm-sweep", "--data", "t", "--sizes", "10,50", "--trees", "10", "--folds", "5", "--seed", "2", "--out", "cm.csv"],
            &["matrix", "--data", "t", "--trees", "10", "--folds", "5", "--out", "mx.csv"],
            &["importance", "--data", "t", "--trees", "10", "--seed", "4", "--out", "imp.csv"],
        ];
        for c in cmds {
            let args: Vec<&str> = base.iter().chain(c.iter()).copied().collect();
            ok(d.path(), &args);
        }
        read_all(d.path(), &files)
    };
    let first = go("1");
    let m1 = without_timestamps(d.path().join("ev/manifest.json"));
    let again = go("1");
    let m2 = without_timestamps(d.path().join("ev/manifest.json"));
    let wide = go("4");
    for (i, f) in files.iter().enumerate() {
        assert_eq!(first[i], again[i], "{f} differs between identical runs");
        assert_eq!(first[i], wide[i], "{f} differs between 1 and 4 threads");
    }
    assert_eq!(m1, m2);
    let cm = String::from_utf8(first[3].clone()).unwrap();
    assert_eq!(cm.lines().next(), Some("data,r2_A,mae_A,r2_B,mae_B,r2_C,mae_C"));
    assert_eq!(cm.lines().nth(1).unwrap().split(',').next(), Some("MNO"));
}

#[test]
fn output_dir_env_redirects_relative_outputs() {
    let d = tempfile::tempdir().unwrap();
    let outdir = d.path().join("artifacts");
    synth(d.path(), "t", &["--duration", "600"]);
    let out = bin()
        .current_dir(d.path())
        .env("MNOLYTICS_OUTPUT_DIR", &outdir)
        .args(["ingest", "--data", "t", "--out", "s.csv"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(outdir.join("s.csv").is_file());
    assert!(outdir.join("s.manifest.json").is_file());
    assert!(!d.path().join("s.csv").exists());

    // The samples CSV is itself valid input.
    ok(d.path(), &["train", "--data", outdir.join("s.csv").to_str().unwrap(), "--model", "linear", "--out", "lin.json"]);
}

#[test]
fn config_file_mirrors_flags_and_flags_win() {
    let d = tempfile::tempdir().unwrap();
    synth(d.path(), "t", &["--duration", "600"]);
    fs::write(
        d.path().join("run.toml"),
        "seed = 11\n[train]\ndata = [\"t\"]\nmodel = \"cart\"\nmin_leaf = 3\nout = \"from_config.json\"\n",
    )
    .unwrap();
    ok(d.path(), &["--config", "run.toml", "train", "--out", "from_flag.json"]);
    assert!(d.path().join("from_flag.json").is_file());
    assert!(!d.path().join("from_config.json").exists());
    let m = read_json(d.path().join("from_flag.manifest.json"));
    assert_eq!(m["seed"], 11);
    assert_eq!(m["config"]["learner"]["model"], "cart");
    assert_eq!(m["config"]["learner"]["params"]["min_leaf"], 3);

    fs::write(d.path().join("bad.toml"), "[train]\nnot_a_flag = 1\n").unwrap();
    let out = run_in(d.path(), &["--config", "bad.toml", "train", "--data", "t"]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
}

#[test]
fn validate_reports_violations_with_exit_2() {
    let d = tempfile::tempdir().unwrap();
    synth(d.path(), "t", &["--duration", "120"]);
    ok(d.path(), &["validate", "--trace", "t"]);

    let tx = d.path().join("t/transmissions.csv");
    let text = fs::read_to_string(&tx).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let mut cols: Vec<String> = lines[1].split(',').map(String::from).collect();
    cols[3] = "250".into();
    lines[1] = cols.join(",");
    fs::write(&tx, lines.join("\n") + "\n").unwrap();
    let out = run_in(d.path(), &["validate", "--trace", "t", "--out", "v.csv"]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("transmissions.csv row 0 (line 2) field 'payload_mb'"), "{stdout}");
    let report = fs::read_to_string(d.path().join("v.csv")).unwrap();
    assert!(report.starts_with("trace,table,row,line,field,message\n"));
    assert_eq!(report.lines().count(), 2);

    let out = run_in(d.path(), &["train", "--data", "t"]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
}

#[test]
fn select_build_map_and_ecdf_emit_plot_ready_files() {
    let d = tempfile::tempdir().unwrap();
    synth(d.path(), "runs/r1", &["--duration", "600"]);
    synth(d.path(), "runs/r2", &["--duration", "600", "--run-id", "2", "--seed", "8"]);

    ok(d.path(), &["select", "--trace", "runs/r1", "--out", "sel.csv"]);
    let sel = fs::read_to_string(d.path().join("sel.csv")).unwrap();
    assert_eq!(sel.lines().next(), Some("indicator,mean_A,best_A,mean_B,best_B,mean_C,best_C,multi"));
    assert!(sel.lines().nth(1).unwrap().starts_with("coverage,"));

    ok(d.path(), &["build-map", "--data", "runs", "--cell-size", "25", "--out", "map"]);
    let map = read_json(d.path().join("map/map.json"));
    assert!(map.is_object());
    assert!(d.path().join("map/layers/A_rsrp.csv").is_file());
    let op = fs::read_to_string(d.path().join("map/operator_sinr.csv")).unwrap();
    assert!(op.starts_with("i,j,mno\n") && op.lines().count() > 1);
    let m = read_json(d.path().join("map/manifest.json"));
    assert_eq!(m["inputs"].as_array().unwrap().len(), 8, "two traces × four files");

    ok(d.path(), &["ecdf", "--data", "runs", "--column", "sinr", "--out", "e.csv"]);
    let e = fs::read_to_string(d.path().join("e.csv")).unwrap();
    assert!(e.starts_with("series,x,F\n"));
    let last_a = e.lines().filter(|l| l.starts_with("A,")).next_back().unwrap();
    assert!(last_a.ends_with(",1"), "{last_a}");
}
