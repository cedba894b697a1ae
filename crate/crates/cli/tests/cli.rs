use std::path::Path;
use std::process::{Command, Output};

fn shotcast(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_shotcast"))
        .args(args)
        .env_remove("SHOTCAST_DATA_DIR")
        .output()
        .expect("spawn shotcast")
}

fn simulate(dir: &Path) {
    let out = shotcast(&[
        "simulate",
        "--output",
        dir.to_str().unwrap(),
        "--teams",
        "12",
        "--seasons",
        "3",
        "--seed",
        "7",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn simulate_then_backtest_writes_reports() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let out_dir = tmp.path().join("out");
    simulate(&data);
    let out = shotcast(&[
        "backtest",
        "--data-dir",
        data.to_str().unwrap(),
        "--output-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    for f in [
        "evaluation.json",
        "betting.json",
        "forecasts.csv",
        "shot_forecasts.csv",
        "reliability_blend.csv",
    ] {
        assert!(out_dir.join(f).is_file(), "missing {f}");
    }
    let report = shotcast(&["report", out_dir.to_str().unwrap()]);
    assert!(report.status.success());
    assert!(String::from_utf8_lossy(&report.stdout).contains("1x2-model"));
}

#[test]
fn backtest_output_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    simulate(&data);
    let mut runs = Vec::new();
    for name in ["a", "b"] {
        let dir = tmp.path().join(name);
        let out = shotcast(&[
            "backtest",
            "--data-dir",
            data.to_str().unwrap(),
            "--output-dir",
            dir.to_str().unwrap(),
            "--seed",
            "3",
        ]);
        assert!(out.status.success());
        runs.push(dir);
    }
    for f in [
        "evaluation.json",
        "forecasts.csv",
        "bets_1x2.csv",
        "reliability.json",
    ] {
        let a = std::fs::read(runs[0].join(f)).unwrap();
        let b = std::fs::read(runs[1].join(f)).unwrap();
        assert_eq!(a, b, "{f} differs between runs");
    }
}

#[test]
fn config_file_is_read_and_flags_override_it() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    simulate(&data);
    let cfg = tmp.path().join("run.toml");
    std::fs::write(
        &cfg,
        format!(
            "data_dir = {:?}\nhalf_life = 30.0\nmarkets = [\"1x2\"]\n",
            data.to_str().unwrap()
        ),
    )
    .unwrap();
    let dir = tmp.path().join("out");
    let out = shotcast(&[
        "backtest",
        "--config",
        cfg.to_str().unwrap(),
        "--half-life",
        "90",
        "--output-dir",
        dir.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("evaluation.json")).unwrap())
            .unwrap();
    assert_eq!(summary["half_life"].as_f64(), Some(90.0));
    assert!(!dir.join("bets_ou25.csv").exists());
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("out");
    let missing = shotcast(&[
        "backtest",
        "--data-dir",
        tmp.path().join("nope").to_str().unwrap(),
        "--output-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(missing.status.code(), Some(1));

    assert_eq!(
        shotcast(&["backtest", "--no-such-flag"]).status.code(),
        Some(1)
    );
    assert_eq!(
        shotcast(&["backtest", "--calibrator", "isotonic"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(shotcast(&["--help"]).status.code(), Some(0));

    let bad_cfg = tmp.path().join("bad.toml");
    std::fs::write(&bad_cfg, "half_lif = 3\n").unwrap();
    assert_eq!(
        shotcast(&["backtest", "--config", bad_cfg.to_str().unwrap()])
            .status
            .code(),
        Some(1)
    );

    let empty = tmp.path().join("empty");
    std::fs::create_dir(&empty).unwrap();
    let vacuous = shotcast(&[
        "backtest",
        "--data-dir",
        empty.to_str().unwrap(),
        "--output-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(vacuous.status.code(), Some(2));
}

#[test]
fn ingest_and_fit_gap_print_json() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    simulate(&data);
    let ingest = shotcast(&["ingest", "--data-dir", data.to_str().unwrap()]);
    assert!(ingest.status.success());
    let v: serde_json::Value = serde_json::from_slice(&ingest.stdout).unwrap();
    assert_eq!(v["totals"]["records"].as_u64(), Some(12 * 11 * 3));

    let gap = shotcast(&["fit-gap", "--data-dir", data.to_str().unwrap()]);
    assert!(
        gap.status.success(),
        "{}",
        String::from_utf8_lossy(&gap.stderr)
    );
    let states: serde_json::Value = serde_json::from_slice(&gap.stdout).unwrap();
    assert_eq!(states.as_array().map(Vec::len), Some(1));
}
