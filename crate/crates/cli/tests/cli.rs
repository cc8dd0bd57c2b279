//! End-to-end runs of the command-line frontend: synthetic generation,
//! calibration, Monte Carlo validation, comparison, and the exit-code
//! contract.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_sotcal")
}

fn run(args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .output()
        .expect("binary runs")
}

fn small_config(dir: &Path, with_rho_ref: bool) -> PathBuf {
    let z0 = 92.0f64.ln();
    let rho_ref = if with_rho_ref {
        r#""rho_ref": -2.4,"#
    } else {
        ""
    };
    let text = format!(
        r#"{{
  "variant": "joint",
  "market": {{ "s0": 92.0, "r0": 0.025, "rate_scale": 100.0 }},
  "grid": {{
    "z_min": {}, "z_max": {}, "r_min": 0.0, "r_max": 5.0,
    "nz": 31, "nr": 21, "dt_days": 1.0
  }},
  "bounds": {{ "b11_lo": 0.01, "b11_hi": 0.5, "b22_lo": 0.0002, "b22_hi": 0.001 }},
  "eps1": 1e-6,
  "eps2": 1e-10,
  {rho_ref}
  "max_outer_evals": 40,
  "min_smoothing_iterations": 0,
  "max_epochs": 2,
  "reference": {{
    "type": "cev-vasicek",
    "sigma": 0.45, "gamma": 0.93, "rho": -0.2,
    "rate_vol": 0.023, "mean_reversion": 0.1, "mean_level": 2.8
  }},
  "generating": {{
    "type": "cev-vasicek",
    "sigma": 0.45, "gamma": 0.93, "rho": -0.2,
    "rate_vol": 0.023, "mean_reversion": 0.1, "mean_level": 2.8
  }},
  "synthetic_instruments": {{
    "calls": [
      {{ "maturity_days": 20, "strikes": [88, 92] }},
      {{ "maturity_days": 30, "strikes": [92, 96] }}
    ]
  }},
  "mc": {{ "n_paths": 20000, "seed": 11, "substeps_per_day": 2, "antithetic": true }}
}}"#,
        z0 - 0.6,
        z0 + 0.6
    );
    let path = dir.join("config.json");
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn gen_calibrate_validate_compare_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path(), false);
    let quotes = dir.path().join("quotes.csv");
    let out = run(&[
        "gen-synthetic",
        "--config",
        config.to_str().unwrap(),
        "--out",
        quotes.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(&quotes).unwrap();
    assert!(text.starts_with("kind,maturity_days,strike,notional,price,iv"));
    assert_eq!(text.lines().count(), 5);

    // deterministic regeneration is byte-identical
    let quotes2 = dir.path().join("quotes2.csv");
    run(&[
        "gen-synthetic",
        "--config",
        config.to_str().unwrap(),
        "--out",
        quotes2.to_str().unwrap(),
    ]);
    assert_eq!(fs::read(&quotes).unwrap(), fs::read(&quotes2).unwrap());

    // generating model equals the reference: immediate calibration success
    let result_dir = dir.path().join("run");
    let out = run(&[
        "calibrate",
        "--config",
        config.to_str().unwrap(),
        "--instruments",
        quotes.to_str().unwrap(),
        "--out",
        result_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(result_dir.join("result.json")).unwrap()).unwrap();
    assert_eq!(summary["converged"], serde_json::Value::Bool(true));
    assert_eq!(summary["final_output_smoothed"], serde_json::Value::Bool(false));
    assert!(result_dir.join("surfaces.csv").exists());
    assert!(result_dir.join("smile.csv").exists());
    // outputs carry the configuration hash
    let smile = fs::read_to_string(result_dir.join("smile.csv")).unwrap();
    assert!(smile.starts_with("# config_hash="));

    // monte carlo validation over the written run; on this deliberately
    // coarse grid the verdict may flag the PDE bias (exit 2), but the report
    // itself must be complete either way
    let mc_csv = dir.path().join("mc.csv");
    let out = run(&[
        "validate-mc",
        "--config",
        config.to_str().unwrap(),
        "--result",
        result_dir.to_str().unwrap(),
        "--out",
        mc_csv.to_str().unwrap(),
        "--paths",
        "20000",
        "--export-paths",
        "5",
    ]);
    assert!(
        matches!(out.status.code(), Some(0) | Some(2)),
        "validate-mc: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let mc_text = fs::read_to_string(&mc_csv).unwrap();
    assert_eq!(mc_text.lines().count(), 6); // hash line + header + 4 rows
    assert!(mc_text.starts_with("# config_hash="));
    let paths_text = fs::read_to_string(dir.path().join("mc.paths.csv")).unwrap();
    assert!(paths_text.starts_with("# config_hash="));
    assert_eq!(paths_text.lines().count(), 2 + 5 * 31); // hash + header + 5 paths x 31 days

    // compare a run against itself: all-zero differences
    let cmp_dir = dir.path().join("cmp");
    let out = run(&[
        "compare",
        "--a",
        result_dir.to_str().unwrap(),
        "--b",
        result_dir.to_str().unwrap(),
        "--out",
        cmp_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let diff: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(cmp_dir.join("diff_summary.json")).unwrap())
            .unwrap();
    for field in ["alpha1", "alpha2", "beta11", "beta12", "beta22"] {
        assert_eq!(diff["max_abs"][field], serde_json::json!(0.0));
    }
}

#[test]
fn sequential_variant_requires_rho_ref() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path(), false);
    let quotes = dir.path().join("quotes.csv");
    run(&[
        "gen-synthetic",
        "--config",
        config.to_str().unwrap(),
        "--out",
        quotes.to_str().unwrap(),
    ]);
    let out = run(&[
        "calibrate",
        "--config",
        config.to_str().unwrap(),
        "--instruments",
        quotes.to_str().unwrap(),
        "--variant",
        "seq",
        "--out",
        dir.path().join("run").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("rho_ref"));
}

#[test]
fn sequential_and_full_sequential_share_rate_surfaces() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path(), true);
    let quotes = dir.path().join("quotes.csv");
    run(&[
        "gen-synthetic",
        "--config",
        config.to_str().unwrap(),
        "--out",
        quotes.to_str().unwrap(),
    ]);
    let seq_dir = dir.path().join("seq");
    let full_dir = dir.path().join("full");
    for (variant, out_dir) in [("seq", &seq_dir), ("full-seq", &full_dir)] {
        let out = run(&[
            "calibrate",
            "--config",
            config.to_str().unwrap(),
            "--instruments",
            quotes.to_str().unwrap(),
            "--variant",
            variant,
            "--out",
            out_dir.to_str().unwrap(),
        ]);
        assert!(
            out.status.success(),
            "{variant}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    let cmp_dir = dir.path().join("cmp");
    let out = run(&[
        "compare",
        "--a",
        seq_dir.to_str().unwrap(),
        "--b",
        full_dir.to_str().unwrap(),
        "--out",
        cmp_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let diff: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(cmp_dir.join("diff_summary.json")).unwrap())
            .unwrap();
    // the rate drift and rate variance are frozen in both variants
    assert_eq!(diff["max_abs"]["alpha2"], serde_json::json!(0.0));
    assert_eq!(diff["max_abs"]["beta22"], serde_json::json!(0.0));
}

#[test]
fn non_converged_run_exits_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path(), false);
    let quotes = dir.path().join("quotes.csv");
    run(&[
        "gen-synthetic",
        "--config",
        config.to_str().unwrap(),
        "--out",
        quotes.to_str().unwrap(),
    ]);
    // demand an impossible tolerance on a one-epoch budget
    let out = run(&[
        "calibrate",
        "--config",
        config.to_str().unwrap(),
        "--instruments",
        quotes.to_str().unwrap(),
        "--eps1",
        "1e-18",
        "--out",
        dir.path().join("run").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let summary: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(dir.path().join("run").join("result.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(summary["converged"], serde_json::Value::Bool(false));
}

#[test]
fn bundled_market_format_file_ingests_and_regenerates() {
    let repo_config = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs/market32_cevvasicek.json");
    let bundled = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/market32.csv");
    let dir = tempfile::tempdir().unwrap();
    let fresh = dir.path().join("market32.csv");
    let out = run(&[
        "gen-synthetic",
        "--config",
        repo_config.to_str().unwrap(),
        "--out",
        fresh.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(&fresh).unwrap();
    assert_eq!(text.lines().count(), 33); // header + 10 + 6 + 10 + 6
    assert_eq!(
        fs::read(&bundled).unwrap(),
        fs::read(&fresh).unwrap(),
        "bundled market-format file must match deterministic regeneration"
    );
}
