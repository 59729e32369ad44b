use serde_json::{json, Value};
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn kvtier(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kvtier")).args(args).output().expect("binary runs")
}

fn s(p: &Path) -> String {
    p.display().to_string()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// A short trace from the bundled spec.
fn small_trace(dir: &Path, requests: u64) -> PathBuf {
    let mut spec = read_json(&root().join("fixtures/trace_spec.json"));
    spec["request_count"] = json!(requests);
    let spec_path = dir.join("spec.json");
    std::fs::write(&spec_path, spec.to_string()).unwrap();
    let trace = dir.join("trace.jsonl");
    let o = kvtier(&["gen-trace", "--spec", &s(&spec_path), "--out", &s(&trace)]);
    assert!(o.status.success(), "{}", stderr(&o));
    trace
}

/// The bundled config with a tiny search grid.
fn small_config(dir: &Path) -> PathBuf {
    let mut cfg = read_json(&root().join("fixtures/config.json"));
    cfg["compute"]["kernel_profile"] = json!(s(&root().join("fixtures/kernel_profile.csv")));
    cfg["pricing"] = json!(s(&root().join("fixtures/pricing.json")));
    cfg["search"]["seed_grid"] = json!({
        "dram_min_gb": 0, "dram_max_gb": 64, "dram_step_gb": 64,
        "ttl_min_s": 0, "ttl_max_s": 600, "ttl_step_s": 600
    });
    cfg["search"]["budget"] = json!(8);
    let path = dir.join("config.json");
    std::fs::write(&path, cfg.to_string()).unwrap();
    path
}

fn validate(schema: &str, instance: &Value) {
    let schema = read_json(&root().join("schemas").join(schema));
    let v = jsonschema::validator_for(&schema).expect("schema compiles");
    let errors: Vec<String> = v.iter_errors(instance).map(|e| format!("{} at {}", e, e.instance_path)).collect();
    assert!(errors.is_empty(), "{errors:#?}");
}

#[test]
fn missing_trace_is_a_usage_error_naming_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.jsonl");
    let o = kvtier(&[
        "simulate",
        "--trace",
        &s(&missing),
        "--config",
        &s(&root().join("fixtures/config.json")),
        "--out",
        &s(&dir.path().join("r.json")),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains(&s(&missing)), "{}", stderr(&o));
}

#[test]
fn unknown_config_field_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let trace = small_trace(dir.path(), 20);
    let mut cfg = read_json(&small_config(dir.path()));
    cfg["compute"]["turbo"] = json!(true);
    let path = dir.path().join("bad.json");
    std::fs::write(&path, cfg.to_string()).unwrap();
    let o = kvtier(&["simulate", "--trace", &s(&trace), "--config", &s(&path), "--out", &s(&dir.path().join("r.json"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("turbo"), "{}", stderr(&o));
}

#[test]
fn bad_arguments_exit_with_usage_code() {
    assert_eq!(kvtier(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(kvtier(&["simulate", "--trace"]).status.code(), Some(2));
}

#[test]
fn gen_trace_is_reproducible_and_seed_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let spec = s(&root().join("fixtures/trace_spec.json"));
    let out = |name: &str, seed: Option<&str>| {
        let p = dir.path().join(name);
        let mut args = vec!["gen-trace", "--spec", &spec, "--out"];
        let ps = s(&p);
        args.push(&ps);
        if let Some(seed) = seed {
            args.extend(["--seed", seed]);
        }
        let o = kvtier(&args);
        assert!(o.status.success(), "{}", stderr(&o));
        std::fs::read(p).unwrap()
    };
    let a = out("a.jsonl", None);
    assert_eq!(a, out("b.jsonl", None));
    assert_ne!(a, out("c.jsonl", Some("99")));
    let manifest = read_json(&dir.path().join("a.manifest.json"));
    assert_eq!(manifest["command"], "gen-trace");
    assert_eq!(manifest["outputs"][0]["path"], s(&dir.path().join("a.jsonl")));
}

#[test]
fn config_fixtures_match_their_schemas() {
    validate("config.schema.json", &read_json(&root().join("fixtures/config.json")));
    validate("pricing.schema.json", &read_json(&root().join("fixtures/pricing.json")));
}

#[test]
fn simulate_report_matches_schema() {
    let dir = tempfile::tempdir().unwrap();
    let trace = small_trace(dir.path(), 200);
    let out = dir.path().join("report.json");
    let o = kvtier(&["simulate", "--trace", &s(&trace), "--config", &s(&small_config(dir.path())), "--out", &s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report = read_json(&out);
    validate("report.schema.json", &report);
    assert_eq!(report["report"]["request_count"], 200);
    let manifest = read_json(&dir.path().join("report.manifest.json"));
    assert_eq!(manifest["inputs"].as_array().unwrap().len(), 4, "trace, config, kernel profile, pricing");
}

#[test]
fn impossible_constraints_leave_an_empty_frontier() {
    let dir = tempfile::tempdir().unwrap();
    let trace = small_trace(dir.path(), 100);
    let frontier = dir.path().join("frontier.csv");
    let o = kvtier(&[
        "search",
        "--trace",
        &s(&trace),
        "--config",
        &s(&small_config(dir.path())),
        "--max-cost",
        "0",
        "--out",
        &s(&frontier),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(&frontier).unwrap();
    assert_eq!(text.lines().count(), 1, "header only: {text}");
    let extremes = read_json(&dir.path().join("frontier.extremes.json"));
    assert_eq!(extremes["frontier_size"], 0);
    assert!(extremes["notice"].is_string());
    assert!(extremes["extremes"].is_null());
    let log = read_json(&dir.path().join("frontier.evaluations.json"));
    assert!(log["evaluation_count"].as_u64().unwrap() > 0);
}

#[test]
fn grid_and_adaptive_search_share_output_layout() {
    let dir = tempfile::tempdir().unwrap();
    let trace = small_trace(dir.path(), 100);
    let config = small_config(dir.path());
    for mode in ["grid", "adaptive"] {
        let frontier = dir.path().join(format!("{mode}.csv"));
        let o = kvtier(&[
            "search", "--trace", &s(&trace), "--config", &s(&config), "--mode", mode, "--out", &s(&frontier),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        let log = read_json(&frontier.with_extension("evaluations.json"));
        assert_eq!(log["mode"], mode);
        let extremes = read_json(&frontier.with_extension("extremes.json"));
        assert!(extremes["extremes"]["min_cost"].is_object());
        assert!(extremes["baseline"].is_object(), "the config names a baseline");
    }
}

#[test]
fn analyze_writes_every_table() {
    let dir = tempfile::tempdir().unwrap();
    let trace = small_trace(dir.path(), 300);
    let out = dir.path().join("analysis");
    let o = kvtier(&["analyze", "--trace", &s(&trace), "--out-dir", &s(&out), "--baseline-rps", "4"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let manifest = read_json(&out.join("summary.manifest.json"));
    let listed: Vec<&str> = manifest["outputs"].as_array().unwrap().iter().map(|o| o["path"].as_str().unwrap()).collect();
    for name in ["lorenz.csv", "footprint.csv", "intervals.csv", "density.csv", "groups.csv", "summary.json"] {
        assert!(out.join(name).exists(), "{name}");
        assert!(listed.iter().any(|p| p.ends_with(name)), "{name} missing from manifest");
    }
}

#[test]
fn ttl_opt_stays_within_budget() {
    let dir = tempfile::tempdir().unwrap();
    let trace = small_trace(dir.path(), 400);
    let out = dir.path().join("ttl.json");
    let o = kvtier(&["ttl-opt", "--trace", &s(&trace), "--budget", "50000", "--k", "3", "--out", &s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v = read_json(&out);
    assert!(v["cost"].as_f64().unwrap() <= 50000.0 * (1.0 + 1e-6));
    assert_eq!(v["ttls"].as_object().unwrap().len(), 4, "three subtrees plus the residual group");
    assert_eq!(v["policy"]["mode"], "group");
    let bad = kvtier(&["ttl-opt", "--trace", &s(&trace), "--budget", "-1", "--out", &s(&out)]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn hypervolume_compares_sets_against_one_reference() {
    let dir = tempfile::tempdir().unwrap();
    let write = |name: &str, rows: &[(f64, f64, f64)]| {
        let p = dir.path().join(name);
        let mut text = String::from("dram_gb,ttl_s,medium,mean_ttft_ms,throughput_tps,cost,evaluated_round\n");
        for (t, tps, c) in rows {
            text += &format!("0,0,m,{t},{tps},{c},1\n");
        }
        std::fs::write(&p, text).unwrap();
        p
    };
    let a = write("a.csv", &[(1.0, 10.0, 1.0)]);
    let b = write("b.csv", &[(1.0, 10.0, 1.0), (0.5, 5.0, 2.0)]);
    let out = dir.path().join("hv.json");
    let o = kvtier(&[
        "hypervolume", "--frontier", &s(&a), "--frontier", &s(&b), "--ref", "2,0,3", "--out", &s(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v = read_json(&out);
    let hv: Vec<f64> = v["sets"].as_array().unwrap().iter().map(|x| x["hypervolume"].as_f64().unwrap()).collect();
    // box of a: 1 x 10 x 2; b adds 0.5 x 5 x 1
    assert!((hv[0] - 20.0).abs() < 1e-9, "{hv:?}");
    assert!((hv[1] - 22.5).abs() < 1e-9, "{hv:?}");
    let bad = kvtier(&["hypervolume", "--frontier", &s(&a), "--ref", "1,2", "--out", &s(&out)]);
    assert_eq!(bad.status.code(), Some(2));
}
