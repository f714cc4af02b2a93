use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use scalelaw_core::eval::{ThresholdSweep, Validation};
use scalelaw_core::fit::{Law, ScalingModel};
use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_scalelaw");

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .current_dir(dir)
        .env_remove("SCALELAW_SEED")
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let o = run(dir, args);
    assert_eq!(code(&o), 0, "{args:?}: {}", stderr(&o));
    o
}

fn json<T: serde::de::DeserializeOwned>(path: PathBuf) -> T {
    serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap()
}

const TRIVIA_TRUTH: &str = r#"{
  "spec": {"name": "TriviaQA", "metric_type": "exact_match", "q_random": 0.0, "filter_margin": 0.05},
  "truth": {"form": "power_law", "params": {"A": 1.0, "alpha": 0.3, "c_ref": 1e21}},
  "proxies": [{"name": "nll", "law": {"l0": 1.7, "a": 1.5, "alpha": 0.25, "c_ref": 1e21}}]
}"#;

/// Temp dir holding `arc.csv` (ARC-E preset, noise-free) and `tq.json`
/// (TriviaQA direct law with an NLL proxy, logit noise).
fn workspace() -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    ok(p, &["synth", "--preset", "ARC-E", "--out", "arc.csv"]);
    fs::write(p.join("truth.json"), TRIVIA_TRUTH).unwrap();
    ok(
        p,
        &[
            "synth",
            "--params",
            "truth.json",
            "--noise",
            "gaussian_logit",
            "--sigma",
            "0.05",
            "--seed",
            "3",
            "--out",
            "tq.json",
        ],
    );
    dir
}

#[test]
fn help_version_and_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let help = run(p, &["--help"]);
    assert_eq!(code(&help), 0);
    assert!(String::from_utf8_lossy(&help.stdout).contains("sweep"));
    assert_eq!(code(&run(p, &["--version"])), 0);
    assert_eq!(code(&run(p, &[])), 1);
    assert_eq!(code(&run(p, &["frobnicate"])), 1);
    assert_eq!(code(&run(p, &["fit", "--input", "x.csv"])), 1);
    assert_eq!(
        code(&run(
            p,
            &["fit", "--input", "x.csv", "--form", "cubic", "--out", "m.json"]
        )),
        1
    );
    assert_eq!(
        code(&run(
            p,
            &["predict", "--model", "m.json", "--flops", "1e21", "--n", "1e9"]
        )),
        1
    );
}

#[test]
fn fit_writes_model_and_manifest() {
    let ws = workspace();
    let p = ws.path();
    ok(
        p,
        &[
            "fit",
            "--input",
            "tq.json",
            "--benchmark",
            "TriviaQA",
            "--form",
            "power_law",
            "--out",
            "models/pl.json",
        ],
    );
    let model: ScalingModel = json(p.join("models/pl.json"));
    assert_eq!(model.form(), "power_law");
    let raw: serde_json::Value = json(p.join("models/pl.json"));
    assert_eq!(raw["form"], "power_law");
    let manifest: serde_json::Value = json(p.join("models/pl.manifest.json"));
    assert_eq!(manifest["command"], "fit");
    assert_eq!(manifest["input_paths"][0], "tq.json");
    assert_eq!(manifest["outputs"][0], "models/pl.json");
    assert_eq!(manifest["tool_version"], env!("CARGO_PKG_VERSION"));
    // No stray temporaries next to the outputs.
    let mut names: Vec<_> = fs::read_dir(p.join("models"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(names, ["pl.json", "pl.manifest.json"]);
}

#[test]
fn fit_errors_exit_two_with_context() {
    let ws = workspace();
    let p = ws.path();
    let o = run(
        p,
        &[
            "fit",
            "--input",
            "arc.csv",
            "--benchmark",
            "MMLU",
            "--form",
            "power_law",
            "--out",
            "m.json",
        ],
    );
    assert_eq!(code(&o), 2);
    assert!(
        stderr(&o).contains("benchmark not registered"),
        "{}",
        stderr(&o)
    );
    assert!(stderr(&o).contains("power_law"));

    let o = run(
        p,
        &[
            "fit",
            "--input",
            "arc.csv",
            "--benchmark",
            "ARC-E",
            "--form",
            "passk",
            "--out",
            "m.json",
        ],
    );
    assert_eq!(code(&o), 2);
    let msg = stderr(&o);
    assert!(
        msg.contains("`k`") && msg.contains("passk") && msg.contains("ARC-E"),
        "{msg}"
    );

    let o = run(
        p,
        &[
            "fit",
            "--input",
            "tq.json",
            "--benchmark",
            "TriviaQA",
            "--form",
            "two_stage",
            "--out",
            "m.json",
        ],
    );
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("proxy"));

    let o = run(
        p,
        &[
            "fit",
            "--input",
            "missing.csv",
            "--benchmark",
            "ARC-E",
            "--form",
            "nd_law",
            "--out",
            "m.json",
        ],
    );
    assert_eq!(code(&o), 2);
    assert!(!p.join("m.json").exists());

    fs::write(p.join("bad.csv"), "run_id,n_params,d_tokens,dataset,benchmark,metric_type,value\nr,1e9,2e10,x,ARC-E,acc_norm,1.2\n")
        .unwrap();
    let o = run(
        p,
        &[
            "fit",
            "--input",
            "bad.csv",
            "--benchmark",
            "ARC-E",
            "--form",
            "nd_law",
            "--out",
            "m.json",
        ],
    );
    assert_eq!(code(&o), 2);
    assert!(
        stderr(&o).contains("bad.csv:2") && stderr(&o).contains("`value`"),
        "{}",
        stderr(&o)
    );
}

#[test]
fn synth_then_fit_recovers_preset_and_worked_example() {
    let ws = workspace();
    let p = ws.path();
    ok(
        p,
        &[
            "fit",
            "--input",
            "arc.csv",
            "--benchmark",
            "ARC-E",
            "--form",
            "nd_law",
            "--out",
            "nd.json",
        ],
    );
    let model: ScalingModel = json(p.join("nd.json"));
    let Law::NdLaw(l) = model.law else {
        panic!("{:?}", model.law)
    };
    for (got, want) in [
        (l.a, 1533.4592),
        (l.alpha, 0.3749),
        (l.b, 2923.3999),
        (l.beta, 0.3812),
    ] {
        assert!(((got - want) / want).abs() < 1e-4, "{got} vs {want}");
    }
    let o = ok(
        p,
        &["predict", "--model", "nd.json", "--n", "1e9", "--d", "2e10"],
    );
    let line = String::from_utf8(o.stdout).unwrap();
    let fields: Vec<&str> = line.trim().split(',').collect();
    assert_eq!(fields.len(), 3);
    let raw: f64 = fields[0].parse().unwrap();
    assert!((raw - 0.5538).abs() < 5e-4, "{raw}");
    assert_eq!(fields[2], "false");

    let o = run(p, &["predict", "--model", "nd.json", "--flops", "1e21"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("does not match"));
}

#[test]
fn predict_flags_clamping() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    fs::write(
        p.join("link.json"),
        r#"{"form": "proxy_link", "params": {"proxy_name": "nll", "link": {"kind": "linear", "a": 0.0, "b": 1.0}},
            "c_ref": 1e21, "benchmark": "TriviaQA", "q_random": 0.0, "filter_rule": {"rule": "all"},
            "fit_stats": {"train_points": 3, "objective": 0.0, "loss": "least_squares", "train_range": [1e18, 1e21]}}"#,
    )
    .unwrap();
    let o = ok(
        p,
        &["predict", "--model", "link.json", "--proxy-value", "1.5"],
    );
    assert_eq!(String::from_utf8(o.stdout).unwrap(), "1.0,1.0,true\n");
    let o = ok(
        p,
        &["predict", "--model", "link.json", "--proxy-value", "0.25"],
    );
    assert_eq!(String::from_utf8(o.stdout).unwrap(), "0.25,0.25,false\n");
}

#[test]
fn validate_reports() {
    let ws = workspace();
    let p = ws.path();
    ok(
        p,
        &[
            "fit",
            "--input",
            "arc.csv",
            "--benchmark",
            "ARC-E",
            "--form",
            "nd_law",
            "--out",
            "nd.json",
        ],
    );
    ok(
        p,
        &[
            "validate",
            "--model",
            "nd.json",
            "--input",
            "arc.csv",
            "--tpr-holdout",
            "160",
            "--out",
            "val",
        ],
    );
    for f in [
        "validation.json",
        "validation.csv",
        "residuals.csv",
        "manifest.json",
    ] {
        assert!(p.join("val").join(f).exists(), "{f}");
    }
    let v: Validation = json(p.join("val/validation.json"));
    assert!(v.valid.mae().unwrap() < 1e-9);
    let csv = fs::read_to_string(p.join("val/validation.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    let residuals = fs::read_to_string(p.join("val/residuals.csv")).unwrap();
    assert_eq!(
        residuals.lines().count(),
        1 + v.train.points + v.valid.points
    );

    // Default threshold: runs strictly above 6e21 (no ratio holdout).
    ok(
        p,
        &[
            "validate",
            "--model",
            "nd.json",
            "--input",
            "arc.csv",
            "--out",
            "val_default",
        ],
    );
    let v: Validation = json(p.join("val_default/validation.json"));
    assert!(!v.valid.residuals.is_empty());
    assert!(v.valid.residuals.iter().all(|r| r.flops > 6e21));
    assert!(v.train.residuals.iter().all(|r| r.flops <= 6e21));

    // Nothing above the threshold.
    ok(
        p,
        &[
            "validate",
            "--model",
            "nd.json",
            "--input",
            "arc.csv",
            "--flops-threshold",
            "1e30",
            "--out",
            "val_empty",
        ],
    );
    let v: Validation = json(p.join("val_empty/validation.json"));
    assert!(v.valid.empty && v.valid.metrics.is_none());

    assert_eq!(
        code(&run(
            p,
            &[
                "validate",
                "--model",
                "nd.json",
                "--input",
                "arc.csv",
                "--flops-threshold",
                "-1",
                "--out",
                "x"
            ]
        )),
        1
    );
}

#[test]
fn sweep_outputs() {
    let ws = workspace();
    let p = ws.path();
    ok(
        p,
        &[
            "sweep",
            "--input",
            "tq.json",
            "--benchmark",
            "TriviaQA",
            "--form",
            "power_law",
            "--out",
            "sw",
        ],
    );
    let s: ThresholdSweep = json(p.join("sw/sweep.json"));
    assert_eq!(s.points.len(), 20);
    assert!(s.all_success);
    let first = s.points.iter().find(|q| q.evaluable).unwrap().threshold;
    assert_eq!(s.crossing, Some(first));
    let svg = fs::read_to_string(p.join("sw/sweep.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("stroke-dasharray"));
    assert_eq!(
        fs::read_to_string(p.join("sw/sweep.csv"))
            .unwrap()
            .lines()
            .count(),
        21
    );

    ok(
        p,
        &[
            "sweep",
            "--input",
            "tq.json",
            "--benchmark",
            "TriviaQA",
            "--form",
            "power_law",
            "--thresholds",
            "1e20:1e22:5",
            "--out",
            "sw5",
        ],
    );
    let s: ThresholdSweep = json(p.join("sw5/sweep.json"));
    assert_eq!(s.points.len(), 5);

    for bad in ["1e20:1e22", "1e22:1e20:5", "a:b:c"] {
        let o = run(
            p,
            &[
                "sweep",
                "--input",
                "tq.json",
                "--benchmark",
                "TriviaQA",
                "--form",
                "power_law",
                "--thresholds",
                bad,
                "--out",
                "x",
            ],
        );
        assert_eq!(code(&o), 1, "{bad}");
    }
    let o = run(
        p,
        &[
            "sweep",
            "--input",
            "tq.json",
            "--benchmark",
            "Nope",
            "--form",
            "power_law",
            "--out",
            "x",
        ],
    );
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("benchmark not registered"));
}

fn fit_four(p: &Path) {
    ok(
        p,
        &[
            "fit",
            "--input",
            "tq.json",
            "--benchmark",
            "TriviaQA",
            "--form",
            "power_law",
            "--out",
            "models/power_law.json",
        ],
    );
    ok(
        p,
        &[
            "fit",
            "--input",
            "tq.json",
            "--benchmark",
            "TriviaQA",
            "--form",
            "bnsl",
            "--out",
            "models/bnsl.json",
        ],
    );
    for link in ["linear", "logistic"] {
        let out = format!("models/two_stage_{link}.json");
        ok(
            p,
            &[
                "fit",
                "--input",
                "tq.json",
                "--benchmark",
                "TriviaQA",
                "--form",
                "two_stage",
                "--proxy",
                "nll",
                "--link",
                link,
                "--out",
                &out,
            ],
        );
    }
}

#[test]
fn report_one_and_four_models() {
    let ws = workspace();
    let p = ws.path();
    ok(
        p,
        &[
            "fit",
            "--input",
            "arc.csv",
            "--benchmark",
            "ARC-E",
            "--form",
            "nd_law",
            "--out",
            "one/nd.json",
        ],
    );
    ok(
        p,
        &[
            "report", "--models", "one", "--input", "arc.csv", "--out", "rep1",
        ],
    );
    let svgs: Vec<_> = fs::read_dir(p.join("rep1"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.ends_with(".svg"))
        .collect();
    assert_eq!(svgs, ["nd.svg"]);
    let svg = fs::read_to_string(p.join("rep1/nd.svg")).unwrap();
    assert!(svg.contains("<polyline") && svg.contains("fill-opacity"));

    fit_four(p);
    ok(
        p,
        &[
            "report",
            "--models",
            "models",
            "--input",
            "tq.json",
            "--tpr-holdout",
            "160",
            "--out",
            "rep4",
        ],
    );
    let table = fs::read_to_string(p.join("rep4/comparison.csv")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines.len(), 5);
    assert!(lines[0]
        .starts_with("strategy,benchmark,model,valid_mae,valid_mre_pct,train_rmse,train_r2"));
    let mut labels: Vec<&str> = lines[1..]
        .iter()
        .map(|l| l.split(',').next().unwrap())
        .collect();
    labels.sort();
    assert_eq!(
        labels,
        [
            "bnsl",
            "power_law",
            "two_stage_linear",
            "two_stage_logistic"
        ]
    );
    let rows: Vec<serde_json::Value> = json(p.join("rep4/comparison.json"));
    assert_eq!(rows.len(), 4);
    assert!(rows
        .iter()
        .all(|r| r["validation"]["valid"]["metrics"]["mae"].is_f64()));

    let empty = p.join("empty");
    fs::create_dir(&empty).unwrap();
    assert_eq!(
        code(&run(
            p,
            &["report", "--models", "empty", "--input", "tq.json", "--out", "x"]
        )),
        1
    );
}

#[test]
fn config_and_seed_env() {
    let ws = workspace();
    let p = ws.path();
    fs::write(
        p.join("cfg.json"),
        r#"{"benchmarks": {"MMLU": {"metric_type": "acc", "q_random": 0.25, "filter_margin": 0.05}},
            "fit": {"seed": 5, "basin_hops": 4}}"#,
    )
    .unwrap();
    let args = [
        "fit",
        "--input",
        "tq.json",
        "--benchmark",
        "TriviaQA",
        "--form",
        "bnsl",
        "--config",
        "cfg.json",
        "--out",
        "b.json",
    ];
    ok(p, &args);
    let m: serde_json::Value = json(p.join("b.manifest.json"));
    assert_eq!(
        (m["seed"].as_u64(), m["config_path"].as_str()),
        (Some(5), Some("cfg.json"))
    );

    let o = Command::new(BIN)
        .args(args)
        .current_dir(p)
        .env("SCALELAW_SEED", "11")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    let m: serde_json::Value = json(p.join("b.manifest.json"));
    assert_eq!(m["seed"], 11);

    let mut with_flag = args.to_vec();
    with_flag.extend(["--seed", "13"]);
    let o = Command::new(BIN)
        .args(&with_flag)
        .current_dir(p)
        .env("SCALELAW_SEED", "11")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    let m: serde_json::Value = json(p.join("b.manifest.json"));
    assert_eq!(m["seed"], 13);

    let o = Command::new(BIN)
        .args(args)
        .current_dir(p)
        .env("SCALELAW_SEED", "soon")
        .output()
        .unwrap();
    assert_eq!(code(&o), 1);

    fs::write(p.join("bad_cfg.json"), r#"{"fit": {"huber_delta": -1}}"#).unwrap();
    let o = run(
        p,
        &[
            "fit",
            "--input",
            "tq.json",
            "--benchmark",
            "TriviaQA",
            "--form",
            "power_law",
            "--config",
            "bad_cfg.json",
            "--out",
            "x.json",
        ],
    );
    assert_eq!(code(&o), 2);
}

#[test]
fn synth_grid_file_and_noise_flags() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    fs::write(
        p.join("grid.json"),
        r#"{"flops_range": [1e19, 1e22], "points": 6, "tprs": [20], "seed": 4}"#,
    )
    .unwrap();
    ok(
        p,
        &[
            "synth",
            "--preset",
            "GSM8K",
            "--grid",
            "grid.json",
            "--noise",
            "gaussian_accuracy",
            "--sigma",
            "0.01",
            "--out",
            "g.csv",
        ],
    );
    let text = fs::read_to_string(p.join("g.csv")).unwrap();
    assert_eq!(text.lines().count(), 7);
    let m: serde_json::Value = json(p.join("g.manifest.json"));
    assert_eq!(m["seed"], 4);
    assert_eq!(
        code(&run(p, &["synth", "--preset", "Nope", "--out", "x.csv"])),
        2
    );
    assert_eq!(
        code(&run(p, &["synth", "--preset", "ARC-E", "--out", "x.txt"])),
        1
    );
    assert_eq!(code(&run(p, &["synth", "--out", "x.csv"])), 1);
}
