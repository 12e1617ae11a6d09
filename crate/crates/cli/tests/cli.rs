use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_vortex-sim"));
    cmd.env("RUST_LOG", "error");
    cmd
}

fn run(args: &[&str], config: Option<&str>, dir: &Path) -> Output {
    let mut cmd = bin();
    cmd.args(args).arg("--out").arg(dir.join("out"));
    if let Some(text) = config {
        let path = dir.join("config.json");
        std::fs::write(&path, text).unwrap();
        cmd.arg("--config").arg(path);
    }
    cmd.output().unwrap()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.unwrap().iter().map(String::from).collect())
        .collect();
    (header, rows)
}

#[test]
fn every_subcommand_has_help() {
    for sub in ["spectrum", "phase", "smatrix", "vortex", "noise", "convergence"] {
        let out = bin().args([sub, "--help"]).output().unwrap();
        assert!(out.status.success(), "{sub} --help failed");
        let text = String::from_utf8(out.stdout).unwrap();
        for flag in ["--config", "--out", "--seed"] {
            assert!(text.contains(flag), "{sub} --help lacks {flag}");
        }
    }
}

#[test]
fn malformed_config_exits_2_without_output() {
    let dir = tempfile::tempdir().unwrap();
    for text in ["{not json", r#"{"circut": {}}"#, r#"{"circuit": {"ec_ghz": -3}}"#] {
        let out = run(&["spectrum"], Some(text), dir.path());
        assert_eq!(out.status.code(), Some(2), "config {text}");
        assert!(!dir.path().join("out").exists());
    }
}

#[test]
fn bad_thread_count_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .env("VORTEX_SIM_THREADS", "0")
        .args(["convergence", "--out"])
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn single_point_spectrum_at_zero_flux() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"circuit": {"n_max": 2}, "flux_sweep": {"start": 0.0, "stop": 0.0, "points": 1}}"#;
    let out = run(&["spectrum"], Some(cfg), dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (header, rows) = read_csv(&dir.path().join("out/spectrum.csv"));
    assert_eq!(header, ["a", "level", "energy_ghz"]);
    assert_eq!(rows.len(), 20);
    let energies: Vec<f64> = rows.iter().map(|r| r[2].parse().unwrap()).collect();
    assert!(energies.windows(2).all(|w| w[0] <= w[1]));
}

#[test]
fn default_phase_scan_finds_reference_targets() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["phase"], None, dir.path());
    assert!(out.status.success());
    let targets = read_json(&dir.path().join("out/targets.json"));
    let omegas: Vec<f64> = targets["targets"]
        .as_array()
        .unwrap()
        .iter()
        .map(|t| t["omega_t_ghz"].as_f64().unwrap())
        .collect();
    for (w, expected) in omegas.iter().zip([0.4595, 1.3418, 3.3319, 5.1285]) {
        assert!((w - expected).abs() <= 0.02 * expected, "{w} vs {expected}");
    }
    let (header, rows) = read_csv(&dir.path().join("out/phase.csv"));
    assert_eq!(header, ["omega_ghz", "delta_theta", "alpha_abs", "beta"]);
    assert!(rows.len() > 3000);
}

#[test]
fn zero_flux_has_no_targets_and_smatrix_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"circuit": {"n_max": 2, "a_loops": [0.0, 0.0, 0.0]}}"#;
    let out = run(&["phase"], Some(cfg), dir.path());
    assert!(out.status.success());
    let targets = read_json(&dir.path().join("out/targets.json"));
    assert!(targets["targets"].as_array().unwrap().is_empty());

    let other = tempfile::tempdir().unwrap();
    let out = run(&["smatrix", "--target", "1"], Some(cfg), other.path());
    assert_eq!(out.status.code(), Some(4));
    assert!(!other.path().join("out").exists());
}

#[test]
fn point_four_smatrix_and_bandwidth() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"smatrix": {"target": 4, "half_width_ghz": 1.5, "points": 3001}}"#;
    let out = run(&["smatrix"], Some(cfg), dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let bw = read_json(&dir.path().join("out/bandwidth.json"));
    let width = bw["bandwidth_ghz"].as_f64().unwrap();
    assert!((width - 1.3).abs() <= 0.15 * 1.3, "bandwidth {width}");
    assert_eq!(bw["transmission"], "S21");

    let (header, rows) = read_csv(&dir.path().join("out/smatrix.csv"));
    assert_eq!(header.len(), 13);
    assert_eq!(header[4], "S21_db");
    for row in &rows {
        for sum in &row[10..13] {
            assert!((sum.parse::<f64>().unwrap() - 1.0).abs() < 1e-9);
        }
    }
}

#[test]
fn vortex_circulation_numbers_are_quantized_and_antisymmetric() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{
        "circuit": {"n_max": 3},
        "vortex": {"a_start": 0.1, "a_stop": 0.9, "a_points": 9, "t_points": 11}
    }"#;
    let out = run(&["vortex"], Some(cfg), dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (header, rows) = read_csv(&dir.path().join("out/vortex_theta.csv"));
    assert_eq!(header, ["a", "theta_01", "theta_02"]);
    let parsed: Vec<Vec<Option<i32>>> = rows
        .iter()
        .map(|r| r[1..].iter().map(|x| x.parse().ok()).collect())
        .collect();
    for row in &parsed {
        for t in row.iter().flatten() {
            assert!((-1..=1).contains(t));
        }
    }
    for (row, mirror) in parsed.iter().zip(parsed.iter().rev()) {
        for (t, m) in row.iter().zip(mirror) {
            if let (Some(t), Some(m)) = (t, m) {
                assert_eq!(*t, -*m);
            }
        }
    }

    let (_, exp) = read_csv(&dir.path().join("out/vortex_expectations.csv"));
    for r in &exp {
        let i: Vec<f64> = r[2..5].iter().map(|x| x.parse().unwrap()).collect();
        assert!((i[0] - i[1]).abs() < 1e-9 && (i[1] - i[2]).abs() < 1e-9);
    }
    for name in ["vortex_elements.csv", "vortex_superposition.csv", "vortex_response.csv"] {
        assert!(dir.path().join("out").join(name).exists());
    }
}

#[test]
fn noise_without_disorder_has_full_yield_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        &["noise", "--sigma", "0", "--samples", "2", "--seed", "7"],
        None,
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = read_json(&dir.path().join("out/noise_summary.json"));
    assert_eq!(summary["yield"].as_f64(), Some(1.0));
    assert_eq!(summary["seed"].as_u64(), Some(7));

    let other = tempfile::tempdir().unwrap();
    let cfg = r#"{"noise": {"sigma": 0.3, "samples": 2, "seed": 11}}"#;
    let first = run(&["noise"], Some(cfg), dir.path());
    let second = run(&["noise"], Some(cfg), other.path());
    assert!(first.status.success() && second.status.success());
    let a = std::fs::read(dir.path().join("out/noise_samples.csv")).unwrap();
    let b = std::fs::read(other.path().join("out/noise_samples.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn convergence_report_is_written() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"circuit": {"n_max": 2}, "convergence": {"levels": 5}}"#;
    let out = run(&["convergence"], Some(cfg), dir.path());
    assert!(out.status.success());
    let report = read_json(&dir.path().join("out/convergence.json"));
    assert_eq!(report["n_max"].as_u64(), Some(2));
    assert_eq!(report["shifts_ghz"].as_array().unwrap().len(), 5);
    assert!(report["passed"].is_boolean());
}
