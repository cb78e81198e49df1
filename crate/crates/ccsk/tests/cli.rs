//! End-to-end checks of the `ccsk` binary: flag validation, exit codes,
//! file output, the config-file merge, and run-to-run reproducibility.

use std::path::PathBuf;
use std::process::{Command, Output};

fn ccsk(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ccsk"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn tmp(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join("ccsk_cli_tests");
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

#[test]
fn help_exits_zero_everywhere() {
    for args in [
        vec!["--help"],
        vec!["ser", "--help"],
        vec!["train", "--help"],
        vec!["misalign", "--help"],
        vec!["leakage", "--help"],
        vec!["eve", "--help"],
        vec!["dcsk", "--help"],
        vec!["complexity", "--help"],
    ] {
        let out = ccsk(&args);
        assert_eq!(out.status.code(), Some(0), "{args:?}");
        assert!(!out.stdout.is_empty());
    }
}

#[test]
fn unknown_flag_exits_one_with_usage_on_stderr() {
    let out = ccsk(&["ser", "--bogus", "1"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.to_lowercase().contains("usage"), "stderr: {err}");
}

#[test]
fn invalid_constellation_exits_one() {
    let out = ccsk(&[
        "ser", "--M", "3", "--k", "8", "--symbols", "100", "--snr", "10",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("power of two"));
}

#[test]
fn missing_checkpoint_is_a_runtime_error() {
    let out = ccsk(&[
        "ser",
        "--detector",
        "nn",
        "--model",
        "/nonexistent/model.ccsk",
        "--symbols",
        "100",
        "--snr",
        "10",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn ser_grid_row_count_and_reproducibility() {
    let out_a = tmp("rep_a.csv");
    let out_b = tmp("rep_b.csv");
    let args = |path: &str| {
        vec![
            "ser".to_string(),
            "--M".into(),
            "4".into(),
            "--k".into(),
            "8".into(),
            "--snr".into(),
            "0:2:20".into(),
            "--detector".into(),
            "residual".into(),
            "--channel".into(),
            "awgn".into(),
            "--symbols".into(),
            "400".into(),
            "--seed".into(),
            "42".into(),
            "--out".into(),
            path.to_string(),
        ]
    };
    let a: Vec<String> = args(out_a.to_str().unwrap());
    let b: Vec<String> = args(out_b.to_str().unwrap());
    let run_a = ccsk(&a.iter().map(|s| s.as_str()).collect::<Vec<_>>());
    assert_eq!(run_a.status.code(), Some(0), "{}", String::from_utf8_lossy(&run_a.stderr));
    let run_b = ccsk(&b.iter().map(|s| s.as_str()).collect::<Vec<_>>());
    assert_eq!(run_b.status.code(), Some(0));

    let bytes_a = std::fs::read(&out_a).unwrap();
    let bytes_b = std::fs::read(&out_b).unwrap();
    assert_eq!(bytes_a, bytes_b, "same master seed must give identical CSV bytes");

    let text = String::from_utf8(bytes_a).unwrap();
    let rows = ccsk::harness::parse_results(&text).unwrap();
    assert_eq!(rows.len(), 11);
}

#[test]
fn stdout_csv_when_no_out_path() {
    let out = ccsk(&[
        "ser", "--M", "2", "--k", "4", "--snr", "12", "--symbols", "150", "--seed", "3",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let rows = ccsk::harness::parse_results(&text).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].detector, "residual");
}

#[test]
fn config_file_supplies_defaults_and_cli_overrides() {
    let cfg = tmp("run.cfg");
    std::fs::write(&cfg, "M = 2\nk = 4\nsnr = 14\nsymbols = 150\nseed = 9\n").unwrap();
    let out = ccsk(&["ser", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = ccsk::harness::parse_results(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert_eq!(rows[0].m, 2);
    assert_eq!(rows[0].ebn0_db, 14.0);

    // explicit flag wins over the file
    let out = ccsk(&["ser", "--config", cfg.to_str().unwrap(), "--M", "4", "--k", "4"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = ccsk::harness::parse_results(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert_eq!(rows[0].m, 4);
}

#[test]
fn complexity_prints_the_full_scale_terms() {
    let out = ccsk(&["complexity", "--k", "128"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("2129920"), "{text}");
    assert!(text.contains("543195392"), "{text}");
}

#[test]
fn leakage_subcommand_evaluates_points() {
    let out = ccsk(&["leakage", "--pe", "0,0.11,0.5"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("pe,leakage"));
    assert_eq!(lines.next(), Some("0,1"));
    let l11: Vec<&str> = lines.next().unwrap().split(',').collect();
    let v: f64 = l11[1].parse().unwrap();
    assert!((v - 0.50008).abs() < 1e-4);
    assert_eq!(lines.next(), Some("0.5,0"));
}

#[test]
fn train_and_reuse_checkpoint() {
    let model = tmp("tiny_model.ccsk");
    let out = ccsk(&[
        "train", "--M", "2", "--k", "8", "--channel", "awgn", "--n", "256", "--batch", "32",
        "--epochs", "2", "--hidden", "3", "--heads", "1", "--seed", "7", "--model",
        model.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(model.exists());

    let out = ccsk(&[
        "ser", "--M", "2", "--k", "8", "--detector", "nn", "--model", model.to_str().unwrap(),
        "--snr", "10:5:15", "--symbols", "120", "--seed", "1",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = ccsk::harness::parse_results(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0].detector, "nn");

    // geometry mismatch is refused up front
    let out = ccsk(&[
        "ser", "--M", "2", "--k", "16", "--detector", "nn", "--model", model.to_str().unwrap(),
        "--snr", "10", "--symbols", "120",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("trained for windows"));
}

#[test]
fn dcsk_subcommand_runs() {
    let out = ccsk(&[
        "dcsk", "--spreading", "16", "--snr", "0:10:20", "--symbols", "300", "--channel", "awgn",
        "--seed", "2",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = ccsk::harness::parse_results(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r.detector == "dcsk-correlator"));
}

#[test]
fn misalign_rows_cover_the_d_grid() {
    let out = ccsk(&[
        "misalign", "--M", "2", "--k", "8", "--snr", "12", "--symbols", "150",
        "--d-grid", "0,2,4", "--seed", "5",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = ccsk::harness::parse_results(&String::from_utf8(out.stdout).unwrap()).unwrap();
    let ds: Vec<usize> = rows.iter().map(|r| r.d).collect();
    assert_eq!(ds, vec![0, 2, 4]);
}
