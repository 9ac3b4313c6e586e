//! End-to-end runs of the `szego` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rug::Float;
use serde_json::Value;
use szego_core::coefficients::sphere_geometry;
use szego_core::sphere_model::SphereModel;
use szego_core::verify::fit_slice;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn szego(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_szego")).args(args).env_remove("SZEGO_PRECISION").output().expect("binary runs")
}

fn cfg(name: &str) -> String {
    configs().join(name).display().to_string()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("bad JSON ({e}): {}", String::from_utf8_lossy(&o.stdout)))
}

fn data_rows(csv: &str) -> Vec<Vec<String>> {
    csv.lines().filter(|l| !l.starts_with('#')).skip(1).map(|l| l.split(',').map(str::to_owned).collect()).collect()
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("run.json");
    std::fs::write(&p, text).unwrap();
    p.display().to_string()
}

#[test]
fn kernel_rows_follow_parity_and_match_direct_values() {
    let o = szego(&["kernel", "-c", &cfg("sphere3.json"), "--m-min", "2", "--m-max", "10"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.starts_with("# precision_bits=128\n"));
    assert!(text.contains("m,S_km_exact,S_km_scaled"));
    let rows = data_rows(&text);
    let ms: Vec<&str> = rows.iter().map(|r| r[0].as_str()).collect();
    assert_eq!(ms, ["2", "4", "6", "8", "10"]);
    let model = SphereModel::new(1, vec![vec![1, -1]], 128).unwrap();
    let p = model.find_zero_point().unwrap();
    for r in &rows {
        let m: usize = r[0].parse().unwrap();
        let v = Float::with_val(128, Float::parse(&r[1]).unwrap());
        assert_eq!(v, model.szego_km_diag(&[0], m, &p), "m = {m}");
    }
}

#[test]
fn empty_slice_range_gives_header_and_warning() {
    let o = szego(&["kernel", "-c", &cfg("sphere3.json"), "--k", "5", "--m-min", "2", "--m-max", "4"]);
    assert!(o.status.success());
    assert!(data_rows(&stdout(&o)).is_empty());
    assert!(String::from_utf8_lossy(&o.stderr).contains("warning"));
}

#[test]
fn fit_of_kernel_table_equals_in_process_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("k.csv");
    let csv_s = csv.display().to_string();
    for k in ["0", "1"] {
        let o = szego(&["kernel", "-c", &cfg("sphere3.json"), "--k", k, "-o", &csv_s]);
        assert!(o.status.success());
        let first = szego(&["fit", "-c", &cfg("sphere3.json"), "--k", k, "-i", &csv_s]);
        assert!(first.status.success(), "{}", String::from_utf8_lossy(&first.stderr));
        let again = szego(&["fit", "-c", &cfg("sphere3.json"), "--k", k, "-i", &csv_s]);
        assert_eq!(first.stdout, again.stdout, "report is deterministic");
        let r = json(&first);
        assert_eq!(r["report_version"], 1);
        assert!(r.get("timings").is_none());
        let kv = vec![k.parse::<i64>().unwrap()];
        let model = SphereModel::new(1, vec![vec![1, -1]], 128).unwrap();
        let p = model.find_zero_point().unwrap();
        let direct = fit_slice(&model, &p, &kv, 50, 400, 5).unwrap();
        let got: Vec<Float> =
            r["fit"]["coefficients_decimal"].as_array().unwrap().iter().map(|s| Float::with_val(128, Float::parse(s.as_str().unwrap()).unwrap())).collect();
        assert_eq!(got, direct.fit.coeffs, "k = {k}");
        assert!(r["relative_errors"]["b0"].as_f64().unwrap() < 1e-5);
        assert!(r["relative_errors"]["b1_global"].as_f64().unwrap() < 1e-3);
        for key in ["v_eff", "r", "s_g", "r_e", "lap_char", "levi_volume_const"] {
            assert!(r["geometry"][key].is_number(), "{key}");
        }
    }
}

#[test]
fn fit_reports_timings_only_on_request() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("k.csv").display().to_string();
    assert!(szego(&["kernel", "-c", &cfg("sphere3.json"), "-o", &csv]).status.success());
    let r = json(&szego(&["fit", "-c", &cfg("sphere3.json"), "-i", &csv, "--timings"]));
    assert!(r["timings"]["fit_s"].is_number());
}

#[test]
fn fit_rejects_precision_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("k.csv").display().to_string();
    assert!(szego(&["kernel", "-c", &cfg("sphere3.json"), "-o", &csv]).status.success());
    let o = szego(&["fit", "-c", &cfg("sphere3.json"), "-i", &csv, "--precision", "96"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn coeffs_reports_predicted_b0() {
    let o = szego(&["coeffs", "-c", &cfg("sphere3.json")]);
    assert!(o.status.success());
    let r = json(&o);
    let model = SphereModel::new(1, vec![vec![1, -1]], 128).unwrap();
    let p = model.find_zero_point().unwrap();
    let b0 = sphere_geometry(&model, &p, &[0]).unwrap().b0();
    let got = Float::with_val(128, Float::parse(r["predicted"]["b0_decimal"].as_str().unwrap()).unwrap());
    assert_eq!(got, b0);
    assert_eq!(r["b0"].as_f64().unwrap(), b0.to_f64());
}

#[test]
fn expand_gaussian_demo() {
    let o = szego(&["expand", "-c", &cfg("expand_gaussian.json")]);
    assert!(o.status.success());
    let r = json(&o);
    let pre = r["prefactor"].as_array().unwrap();
    assert!((pre[0].as_f64().unwrap() - std::f64::consts::PI.sqrt()).abs() < 1e-15);
    assert!(pre[1].as_f64().unwrap().abs() < 1e-15);
    let l0 = r["terms"][0].as_array().unwrap();
    assert_eq!(l0[0].as_f64().unwrap(), 1.0);
    assert_eq!(l0[1].as_f64().unwrap(), 0.0);
}

#[test]
fn expand_orbit_matches_predictions() {
    let r = json(&szego(&["expand", "-c", &cfg("expand_orbit.json")]));
    let route = &r["route"];
    let rel = |a: &str, b: &str| ((route[a].as_f64().unwrap() - route[b].as_f64().unwrap()) / route[b].as_f64().unwrap()).abs();
    assert!(rel("c0", "b0") < 1e-12);
    assert!(rel("c1", "b1_global") < 1e-12);
    assert!(route["error_slope"].as_f64().unwrap() > 2.7);
}

#[test]
fn verify_default_sphere_passes() {
    let o = szego(&["verify", "-c", &cfg("sphere3.json")]);
    let r = json(&o);
    assert_eq!(o.status.code(), Some(0), "failed: {}", r["failed"]);
    assert_eq!(r["passed"], true);
    let criteria: std::collections::BTreeSet<u64> = r["checks"].as_array().unwrap().iter().map(|c| c["criterion"].as_u64().unwrap()).collect();
    assert_eq!(criteria.len(), 8);
}

#[test]
fn verify_with_tight_b1_tolerance_fails_by_name() {
    let o = szego(&["verify", "-c", &cfg("sphere3_tight_b1.json")]);
    assert_eq!(o.status.code(), Some(1));
    let r = json(&o);
    let failed: Vec<&str> = r["failed"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    assert!(!failed.is_empty());
    assert!(failed.iter().all(|n| n.starts_with("b1 fit")), "{failed:?}");
    assert!(String::from_utf8_lossy(&o.stderr).contains("FAILED: b1 fit"));
}

#[test]
fn malformed_and_invalid_configs_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write_config(dir.path(), "{\"model\": ");
    assert_eq!(szego(&["verify", "-c", &bad]).status.code(), Some(2));
    let low = write_config(dir.path(), r#"{"model":{"n":1,"weights":[[1,-1]]},"k":[0],"m_range":{"min":2,"max":10},"precision_bits":32}"#);
    assert_eq!(szego(&["kernel", "-c", &low]).status.code(), Some(2));
    let weights = write_config(dir.path(), r#"{"model":{"n":1,"weights":[[1,1]]},"k":[0],"m_range":{"min":2,"max":10}}"#);
    assert_eq!(szego(&["kernel", "-c", &weights]).status.code(), Some(2));
    assert_eq!(szego(&["kernel", "-c", "/nonexistent/run.json"]).status.code(), Some(2));
    assert_eq!(szego(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn precision_from_environment_and_flag() {
    let args = ["kernel", "-c", &cfg("sphere3.json"), "--m-min", "2", "--m-max", "4"].map(String::from);
    let run = |env: Option<&str>, extra: &[&str]| {
        let mut c = Command::new(env!("CARGO_BIN_EXE_szego"));
        c.args(&args).args(extra).env_remove("SZEGO_PRECISION");
        if let Some(v) = env {
            c.env("SZEGO_PRECISION", v);
        }
        c.output().unwrap()
    };
    assert!(stdout(&run(Some("200"), &[])).starts_with("# precision_bits=200\n"));
    assert!(stdout(&run(Some("200"), &["--precision", "96"])).starts_with("# precision_bits=96\n"));
    assert_eq!(run(Some("lots"), &[]).status.code(), Some(2));
}
