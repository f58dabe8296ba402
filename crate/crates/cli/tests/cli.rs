use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

const PRESET: &str = include_str!("../presets/paper.cfg");

fn preset() -> Value {
    serde_json::from_str(PRESET).unwrap()
}

/// Preset shrunk to run in seconds.
fn small() -> Value {
    let mut c = preset();
    c["training"] = json!({ "lo": 0.5, "hi": 3.0, "count": 21 });
    c["basis_size"] = json!(4);
    c["online_sizes"] = json!([2, 4]);
    c["online"]["starts"] = json!(200);
    c["tests"] = json!([{ "name": "interpolation", "lo": 0.6, "hi": 2.9, "count": 3 }]);
    c["heatmap"]["points"] = json!(41);
    c["widths"] = json!({
        "half_width": 1.0, "charge": 1.0, "parameters": 41, "spatial_step": 0.01,
        "quantiles": 256, "dimer_half_width": 1.0, "kernel_points": 200, "kernel_eigenvalues": 6
    });
    c
}

fn write_config(dir: &Path, cfg: &Value) -> String {
    let path = dir.join("config.json");
    std::fs::write(&path, cfg.to_string()).unwrap();
    path.display().to_string()
}

fn nrb(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nrb")).current_dir(dir).args(args).output().unwrap()
}

fn run_ok(dir: &Path, args: &[&str]) {
    let o = nrb(dir, args);
    assert!(o.status.success(), "nrb {args:?} failed: {}", String::from_utf8_lossy(&o.stderr));
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let head = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect();
    (head, rows)
}

fn column(head: &[String], name: &str) -> usize {
    head.iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"))
}

fn num(s: &str) -> f64 {
    s.parse().unwrap()
}

#[test]
fn single_nucleus_energy_is_minus_half() {
    let tmp = TempDir::new().unwrap();
    let mut c = small();
    c["charges"] = json!([1.0]);
    let cfg = write_config(tmp.path(), &c);
    run_ok(tmp.path(), &["--config", &cfg, "--out", "o", "solve", "--r", "0.0", "1.3"]);
    let (head, rows) = read_csv(&tmp.path().join("o/solve.csv"));
    assert_eq!(rows.len(), 2);
    for row in &rows {
        assert!((num(&row[column(&head, "energy")]) + 0.5).abs() < 1e-14);
        assert!((num(&row[column(&head, "zeta")]) - 1.0).abs() < 1e-14);
        assert_eq!(row[column(&head, "pi_1")], "1.0000000000000000e0");
    }
}

#[test]
fn symmetric_dimer_matches_fixed_point() {
    let tmp = TempDir::new().unwrap();
    let mut c = small();
    c["charges"] = json!([1.0, 1.0]);
    let cfg = write_config(tmp.path(), &c);
    run_ok(tmp.path(), &["--config", &cfg, "--out", "o", "solve", "--r", "0.2", "0.7", "2.5"]);
    let (head, rows) = read_csv(&tmp.path().join("o/solve.csv"));
    for row in &rows {
        let r = num(&row[column(&head, "r")]);
        // ζ = 1 + e^{-2ζr} by bisection on [1, 2]
        let (mut lo, mut hi) = (1.0_f64, 2.0_f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid - 1.0 - (-2.0 * mid * r).exp() < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let zeta = num(&row[column(&head, "zeta")]);
        assert!((zeta - lo).abs() < 1e-12, "r = {r}: {zeta} vs {lo}");
        assert!((num(&row[column(&head, "energy")]) + 0.5 * lo * lo).abs() < 1e-12);
        assert!((num(&row[column(&head, "pi_1")]) - 0.5).abs() < 1e-12);
    }
}

#[test]
fn malformed_config_exits_two_and_names_the_field() {
    let tmp = TempDir::new().unwrap();
    let mut c = small();
    c["training"]["count"] = json!(1);
    let cfg = write_config(tmp.path(), &c);
    let o = nrb(tmp.path(), &["--config", &cfg, "solve"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("training.count"));

    let mut c = small();
    c["charges"] = json!("heavy");
    let cfg = write_config(tmp.path(), &c);
    let o = nrb(tmp.path(), &["--config", &cfg, "solve"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("heavy"));

    std::fs::write(tmp.path().join("broken.json"), "{ not json").unwrap();
    assert_eq!(nrb(tmp.path(), &["--config", "broken.json", "solve"]).status.code(), Some(2));
    assert_eq!(nrb(tmp.path(), &["--config", "absent.json", "solve"]).status.code(), Some(2));
    assert_eq!(nrb(tmp.path(), &["--preset", "paper", "--threads", "0", "solve"]).status.code(), Some(2));
}

#[test]
fn schema_mismatch_exits_four() {
    let tmp = TempDir::new().unwrap();
    let mut c = small();
    c["schema_version"] = json!(2);
    let cfg = write_config(tmp.path(), &c);
    assert_eq!(nrb(tmp.path(), &["--config", &cfg, "solve"]).status.code(), Some(4));

    let cfg = write_config(tmp.path(), &small());
    run_ok(tmp.path(), &["--config", &cfg, "--out", "o", "offline", "--size", "2"]);
    let path = tmp.path().join("o/basis.json");
    let mut art: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    art["schema_version"] = json!(99);
    std::fs::write(&path, art.to_string()).unwrap();
    assert_eq!(nrb(tmp.path(), &["--config", &cfg, "--out", "o", "online"]).status.code(), Some(4));
    art["schema_version"] = json!(1);
    art["a"] = json!([1.0]);
    std::fs::write(&path, art.to_string()).unwrap();
    assert_eq!(nrb(tmp.path(), &["--config", &cfg, "--out", "o", "online"]).status.code(), Some(4));
}

#[test]
fn missing_basis_is_a_config_error() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), &small());
    let o = nrb(tmp.path(), &["--config", &cfg, "--out", "o", "online"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("offline"));
}

#[test]
fn offline_is_deterministic_and_writes_the_artifact() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), &small());
    run_ok(tmp.path(), &["--config", &cfg, "--out", "a", "--threads", "1", "offline"]);
    run_ok(tmp.path(), &["--config", &cfg, "--out", "b", "offline"]);
    for f in ["history.csv", "basis.json"] {
        let a = std::fs::read(tmp.path().join("a").join(f)).unwrap();
        let b = std::fs::read(tmp.path().join("b").join(f)).unwrap();
        assert_eq!(a, b, "{f} differs between runs");
    }

    let art: Value = serde_json::from_str(&std::fs::read_to_string(tmp.path().join("a/basis.json")).unwrap()).unwrap();
    for key in ["schema_version", "charges", "snapshots", "wstar", "a", "a_inverse", "history"] {
        assert!(art.get(key).is_some(), "artifact lacks {key}");
    }
    assert_eq!(art["snapshots"].as_array().unwrap().len(), 4);
    assert_eq!(art["a"].as_array().unwrap().len(), 16);
    let params: Vec<f64> = art["snapshots"].as_array().unwrap().iter().map(|s| s["parameter"].as_f64().unwrap()).collect();
    assert_eq!(&params[..2], &[0.5, 3.0]);

    let (head, rows) = read_csv(&tmp.path().join("a/history.csv"));
    assert_eq!(rows.len(), 3);
    let max = column(&head, "max_error");
    assert!(rows.windows(2).all(|w| num(&w[1][max]) <= num(&w[0][max]) + 1e-12));
    assert!(!head.iter().any(|h| h.contains("time") || h.contains("elapsed")));
    let meta: Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("a/offline.meta.json")).unwrap()).unwrap();
    assert!(meta["elapsed_seconds"].as_f64().unwrap() >= 0.0);
    assert_eq!(meta["threads"], json!(1));
}

#[test]
fn floats_carry_seventeen_significant_digits() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), &small());
    run_ok(tmp.path(), &["--config", &cfg, "--out", "o", "offline"]);
    let (head, rows) = read_csv(&tmp.path().join("o/history.csv"));
    let col = column(&head, "mean_error");
    for row in &rows {
        let s = &row[col];
        let mantissa = s.split('e').next().unwrap().trim_start_matches('-');
        assert_eq!(mantissa.chars().filter(char::is_ascii_digit).count(), 17, "{s}");
        assert_eq!(num(s).to_string().parse::<f64>().unwrap(), num(s));
    }
}

#[test]
fn online_recovers_snapshot_energies() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), &small());
    run_ok(tmp.path(), &["--config", &cfg, "--out", "o", "offline"]);
    run_ok(tmp.path(), &["--config", &cfg, "--out", "o", "online", "--r", "0.5", "3.0"]);
    let (head, rows) = read_csv(&tmp.path().join("o/online.csv"));
    assert_eq!(rows.len(), 4);
    for row in &rows {
        let err = num(&row[column(&head, "error")]);
        assert!(err.abs() <= 1e-6, "r = {}: error {err}", row[column(&head, "r")]);
        assert!(err >= -1e-12, "reduced energy below the exact one: {err}");
    }
    let (_, decay) = read_csv(&tmp.path().join("o/online_decay.csv"));
    assert_eq!(decay.len(), 2);
    let records: Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("o/online_records.json")).unwrap()).unwrap();
    assert_eq!(records.as_array().unwrap().len(), 4);
    let meta: Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("o/online.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["details"]["queries"].as_array().unwrap().len(), 4);
}

#[test]
fn online_runs_configured_test_sets() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), &small());
    run_ok(tmp.path(), &["--config", &cfg, "--out", "o", "offline"]);
    run_ok(tmp.path(), &["--config", &cfg, "--out", "o", "online"]);
    let (head, rows) = read_csv(&tmp.path().join("o/online.csv"));
    assert_eq!(rows.len(), 6);
    assert!(rows.iter().all(|r| r[column(&head, "set")] == "interpolation"));
    assert!(rows.iter().all(|r| num(&r[column(&head, "error")]) > -1e-12));
}

#[test]
fn heatmap_flags_cells_outside_the_domain() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), &small());
    run_ok(tmp.path(), &["--config", &cfg, "--out", "o", "offline"]);
    let o = nrb(tmp.path(), &["--config", &cfg, "--out", "o", "heatmap"]);
    assert_eq!(o.status.code(), Some(2), "a 4-element basis must be refused");

    run_ok(tmp.path(), &["--config", &cfg, "--out", "h", "offline", "--size", "2"]);
    run_ok(tmp.path(), &["--config", &cfg, "--out", "h", "heatmap"]);
    let (head, rows) = read_csv(&tmp.path().join("h/heatmap.csv"));
    assert_eq!(rows.len(), 41 * 41);
    let e = column(&head, "energy");
    let nan = rows.iter().filter(|r| r[e] == "NaN").count();
    assert!(nan > 0 && nan < rows.len());
    // (−2, −2) gives Σλ_i/ζ^i < 0
    assert_eq!(rows[0][e], "NaN");
    let (_, minima) = read_csv(&tmp.path().join("h/heatmap_minima.csv"));
    assert!(!minima.is_empty());
    let (_, descent) = read_csv(&tmp.path().join("h/heatmap_descent_minima.csv"));
    assert!(!descent.is_empty() && descent.len() <= minima.len());
}

#[test]
fn widths_writes_curves_and_spectrum() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), &small());
    run_ok(tmp.path(), &["--config", &cfg, "--out", "w", "widths"]);
    for f in ["widths_l2_single.csv", "widths_icdf_single.csv", "widths_l2_dimer.csv", "widths_icdf_dimer.csv"] {
        let (_, rows) = read_csv(&tmp.path().join("w").join(f));
        assert_eq!(num(&rows[0][1]), num(&rows[0][1]).abs(), "{f}");
        assert!(rows.windows(2).all(|w| num(&w[1][1]) <= num(&w[0][1])), "{f} not decreasing");
    }
    let (_, icdf) = read_csv(&tmp.path().join("w/widths_icdf_single.csv"));
    assert!(num(&icdf[2][1]) <= 1e-12 * num(&icdf[0][1]), "translated quantiles span two functions");
    let (_, spec) = read_csv(&tmp.path().join("w/kernel_spectrum.csv"));
    assert_eq!(spec.len(), 6);
    let summary: Value = serde_json::from_str(&std::fs::read_to_string(tmp.path().join("w/widths.json")).unwrap()).unwrap();
    assert!(summary["l2_single"]["slope"].as_f64().unwrap() < 0.0);
}
