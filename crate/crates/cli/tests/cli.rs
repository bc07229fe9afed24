use std::fs;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};

use strupkit_cli::dispatch;

static COUNTER: AtomicUsize = AtomicUsize::new(0);

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!(
        "strupkit-cli-{}-{}-{name}",
        std::process::id(),
        COUNTER.fetch_add(1, Ordering::Relaxed)
    ));
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(args: &[&str]) -> i32 {
    let mut argv = vec!["strupkit"];
    argv.extend_from_slice(args);
    dispatch(argv)
}

fn gen_data(dir: &std::path::Path, seed: &str) -> PathBuf {
    let out = dir.join(format!("d{seed}.csv"));
    let code = run(&[
        "gen-data", "--system", "harmonic(1)", "--n", "12", "--h", "0.1", "--seed", seed,
        "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    out
}

#[test]
fn gen_data_format_and_reproducibility() {
    let dir = scratch("gen");
    let a = gen_data(&dir, "3");
    let text = fs::read_to_string(&a).unwrap();
    assert!(text.starts_with("# dim=2 h=0.1 system=harmonic(1) seed=3"));
    assert_eq!(text.lines().count(), 13);
    let b = dir.join("again.csv");
    run(&[
        "gen-data", "--system", "harmonic(1)", "--n", "12", "--h", "0.1", "--seed", "3",
        "--out", b.to_str().unwrap(),
    ]);
    assert_eq!(text, fs::read_to_string(&b).unwrap());
}

#[test]
fn train_eval_round_trip() {
    let dir = scratch("train");
    let data = gen_data(&dir, "1");
    let out = dir.join("run");
    let code = run(&[
        "train", "--method", "P", "--layers", "2", "--degree", "2",
        "--data", data.to_str().unwrap(), "--epochs", "60", "--seed", "4",
        "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    for f in ["model.ckpt.json", "report.json", "history.csv"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    // identical run is byte-identical up to wall time
    let out2 = dir.join("run2");
    run(&[
        "train", "--method", "P", "--layers", "2", "--degree", "2",
        "--data", data.to_str().unwrap(), "--epochs", "60", "--seed", "4",
        "--out", out2.to_str().unwrap(),
    ]);
    assert_eq!(
        fs::read_to_string(out.join("history.csv")).unwrap(),
        fs::read_to_string(out2.join("history.csv")).unwrap()
    );
    let eval_dir = dir.join("eval");
    let code = run(&[
        "eval", "--model", out.join("model.ckpt.json").to_str().unwrap(),
        "--data", data.to_str().unwrap(), "--out", eval_dir.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let eval: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(eval_dir.join("eval.json")).unwrap()).unwrap();
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    let diff = (eval["loss"].as_f64().unwrap() - report["best_train_loss"].as_f64().unwrap()).abs();
    assert!(diff < 1e-15);
}

#[test]
fn config_defaults_and_flag_precedence() {
    let dir = scratch("config");
    let data = gen_data(&dir, "2");
    let cfg = dir.join("cfg.json");
    fs::write(&cfg, r#"{"epochs": 9, "lr": 0.002}"#).unwrap();
    // flag overrides the file value
    let out = dir.join("run");
    let code = run(&[
        "train", "--method", "P", "--layers", "2", "--degree", "2",
        "--data", data.to_str().unwrap(), "--config", cfg.to_str().unwrap(),
        "--epochs", "5", "--log-every", "1", "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let history = fs::read_to_string(out.join("history.csv")).unwrap();
    let last = history.lines().last().unwrap();
    assert!(last.starts_with("5,"), "expected 5 epochs, got line {last}");
    // file value applies when no flag is given
    let out2 = dir.join("run2");
    run(&[
        "train", "--method", "P", "--layers", "2", "--degree", "2",
        "--data", data.to_str().unwrap(), "--config", cfg.to_str().unwrap(),
        "--log-every", "1", "--out", out2.to_str().unwrap(),
    ]);
    let history2 = fs::read_to_string(out2.join("history.csv")).unwrap();
    assert!(history2.lines().last().unwrap().starts_with("9,"));
}

#[test]
fn unknown_config_key_rejected_by_name() {
    let dir = scratch("badcfg");
    let data = gen_data(&dir, "5");
    let cfg = dir.join("bad.json");
    fs::write(&cfg, r#"{"momentum": 0.9}"#).unwrap();
    let code = run(&[
        "train", "--method", "P", "--layers", "2", "--degree", "2",
        "--data", data.to_str().unwrap(), "--config", cfg.to_str().unwrap(),
        "--out", dir.join("x").to_str().unwrap(),
    ]);
    assert_eq!(code, 1);
    let err = strupkit_cli::load_config(&cfg).unwrap_err();
    assert!(err.to_string().contains("momentum"));
    // empty object is fine and keeps defaults
    let empty = dir.join("empty.json");
    fs::write(&empty, "{}").unwrap();
    let cfg = strupkit_cli::load_config(&empty).unwrap();
    assert!(cfg.epochs.is_none() && cfg.lr.is_none() && cfg.abs_tol.is_none());
}

#[test]
fn grid_runs_and_reports_rows() {
    let dir = scratch("grid");
    let data = gen_data(&dir, "6");
    let grid = dir.join("grid.json");
    fs::write(
        &grid,
        r#"[{"method":"P","layers":2,"degree":2},{"method":"G","layers":2,"width":3}]"#,
    )
    .unwrap();
    let out = dir.join("g");
    let code = run(&[
        "grid", "--grid", grid.to_str().unwrap(), "--data", data.to_str().unwrap(),
        "--epochs", "40", "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let csv = fs::read_to_string(out.join("grid.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0].starts_with("method,layers,width_or_degree"));
    assert!(lines[1].starts_with("P,2,2,"));
    assert!(lines[2].starts_with("G,2,3,"));
    assert!(out.join("best.ckpt.json").exists());
    // unknown key in grid entries rejected
    fs::write(&grid, r#"[{"method":"P","layers":2,"degree":2,"dropout":0.5}]"#).unwrap();
    let code = run(&[
        "grid", "--grid", grid.to_str().unwrap(), "--data", data.to_str().unwrap(),
        "--epochs", "10", "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(code, 1);
}

#[test]
fn regress_emits_table_and_json() {
    let dir = scratch("regress");
    let data = gen_data(&dir, "7");
    let out = dir.join("run");
    run(&[
        "train", "--method", "P", "--layers", "2", "--degree", "2",
        "--data", data.to_str().unwrap(), "--epochs", "200", "--out", out.to_str().unwrap(),
    ]);
    let truth = dir.join("truth.poly");
    // H = (p^2 + q^2)/2 for harmonic(1)
    fs::write(&truth, "2 0 : 0.5\n0 2 : 0.5\n").unwrap();
    let reg = dir.join("reg");
    let code = run(&[
        "regress", "--model", out.join("model.ckpt.json").to_str().unwrap(),
        "--h", "0.1", "--max-order", "2", "--truth", truth.to_str().unwrap(),
        "--out", reg.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(reg.join("regress.json")).unwrap()).unwrap();
    let rows = json["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 3);
    for row in rows {
        assert!(row["mae"].as_f64().unwrap() > 0.0);
    }
    assert!(fs::read_to_string(reg.join("regress.txt")).unwrap().contains("p=2"));
}

#[test]
fn linrep_summary_within_bounds() {
    let dir = scratch("linrep");
    let out = dir.join("lin");
    let code = run(&[
        "linrep", "--n", "2", "--trials", "5", "--seed", "1", "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("linrep.json")).unwrap()).unwrap();
    assert!(json["max_action_error"].as_f64().unwrap() < 1e-10);
    assert!(json["max_layer_count"].as_u64().unwrap() <= 8);
    assert!(out.join("last.ckpt.json").exists());
}

#[test]
fn bad_invocations_exit_one() {
    assert_eq!(run(&["frobnicate"]), 1);
    assert_eq!(run(&["train", "--method", "Z", "--layers", "2"]), 1);
    let dir = scratch("badargs");
    let data = gen_data(&dir, "8");
    // method/hyper mismatch: P requires a degree
    let code = run(&[
        "train", "--method", "P", "--layers", "2", "--data", data.to_str().unwrap(),
        "--out", dir.join("o").to_str().unwrap(),
    ]);
    assert_eq!(code, 1);
    assert_eq!(run(&["gen-data", "--system", "nope", "--n", "1", "--h", "0.1", "--out",
        dir.join("n.csv").to_str().unwrap()]), 1);
}

#[test]
fn help_exits_zero() {
    assert_eq!(run(&["--help"]), 0);
    assert_eq!(run(&["train", "--help"]), 0);
}
