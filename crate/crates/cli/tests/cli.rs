use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn wbo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wbo"))
        .args(args)
        .output()
        .expect("spawn wbo")
}

fn ok(args: &[&str]) -> Output {
    let out = wbo(args);
    assert!(
        out.status.success(),
        "wbo {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    (header, rows)
}

fn column(header: &[String], rows: &[Vec<String>], name: &str) -> Vec<f64> {
    let i = header.iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"));
    rows.iter().map(|r| r[i].parse().unwrap()).collect()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    s(&p)
}

#[test]
fn rayleigh_curve_residuals_and_db_columns() {
    let d = tempfile::tempdir().unwrap();
    let model = write(d.path(), "m.json", r#"{"kind": "rayleigh"}"#);
    let out = d.path().join("curve.csv");
    ok(&["exponent", "--model", &model, "--eta-min", "1", "--eta-max", "10", "--points", "10", "--per-bit", "--out", &s(&out)]);
    let (h, rows) = read_csv(&out);
    assert_eq!(h, ["eta", "eta_db", "exponent", "lambda_star", "closed_form", "closed_minus_numeric", "eta_bit_db"]);
    assert_eq!(rows.len(), 10);
    let eta = column(&h, &rows, "eta");
    let db = column(&h, &rows, "eta_db");
    let bit = column(&h, &rows, "eta_bit_db");
    for (i, r) in column(&h, &rows, "closed_minus_numeric").iter().enumerate() {
        assert!(r.abs() <= 1e-9);
        assert!((db[i] - 10.0 * eta[i].log10()).abs() <= 1e-12);
        assert!((bit[i] - db[i] + 1.591_745_389_548_616).abs() <= 1e-12);
    }
    assert!((eta[0] - 1.0).abs() < 1e-15 && (eta[9] - 10.0).abs() < 1e-12);

    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(d.path().join("curve.csv.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "exponent");
    assert_eq!(manifest["config"]["model"]["kind"], "rayleigh");
    assert!(manifest["version"].is_string());
    assert!(manifest["duration_secs"].is_number());
    assert_eq!(manifest["outputs"][0], s(&out));
}

#[test]
fn correlated_curve_has_no_closed_form_column() {
    let d = tempfile::tempdir().unwrap();
    let model = write(
        d.path(),
        "m.json",
        r#"{"kind": "mimo_correlated", "n_t": 2, "n_r": 1, "psi": [[[1,0],[0.5,0]],[[0.5,0],[1,0]]], "sigma": [[[0.5,0],[0,0]],[[0,0],[0.5,0]]]}"#,
    );
    let out = d.path().join("c.csv");
    ok(&["exponent", "--model", &model, "--out", &s(&out)]);
    let (h, rows) = read_csv(&out);
    assert_eq!(h, ["eta", "eta_db", "exponent", "lambda_star"]);
    assert_eq!(rows.len(), 50);
}

#[test]
fn range_below_eta_bar_exits_with_domain_status() {
    let d = tempfile::tempdir().unwrap();
    let model = write(d.path(), "m.json", r#"{"kind": "mimo_white", "n_t": 2, "n_r": 1}"#);
    let out = wbo(&["exponent", "--model", &model, "--eta-min", "0.1", "--eta-max", "0.9", "--out", &s(&d.path().join("x.csv"))]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("below minimum energy per nat"));
}

#[test]
fn malformed_descriptor_reports_field_and_usage_status() {
    let d = tempfile::tempdir().unwrap();
    let model = write(d.path(), "m.json", r#"{"kind": "nakagami", "m": "two"}"#);
    let out = wbo(&["exponent", "--model", &model, "--out", &s(&d.path().join("x.csv"))]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("m: invalid type"), "{err}");

    let sim = write(d.path(), "s.json", r#"{"model": {"kind": "rayleigh"}, "eta": "x", "mode": "exact", "sampler": "plain"}"#);
    let out = wbo(&["simulate", "--config", &sim, "--out", &s(&d.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("`eta`"));

    let out = wbo(&["exponent", "--model", &model]);
    assert_eq!(out.status.code(), Some(2));
    let out = wbo(&["simulate", "--config", &sim, "--mode", "approximate", "--out", "x"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn stronger_line_of_sight_dominates_pointwise() {
    let d = tempfile::tempdir().unwrap();
    let mut curves = Vec::new();
    for kappa in ["0.9", "0.5"] {
        let model = write(d.path(), &format!("k{kappa}.json"), &format!(r#"{{"kind": "rician", "kappa": {kappa}}}"#));
        let out = d.path().join(format!("k{kappa}.csv"));
        ok(&["exponent", "--model", &model, "--eta-min", "1", "--eta-max", "100", "--points", "40", "--out", &s(&out)]);
        let (h, rows) = read_csv(&out);
        curves.push(column(&h, &rows, "exponent"));
    }
    for (a, b) in curves[0].iter().zip(&curves[1]) {
        assert!(a >= b);
    }
}

#[test]
fn feedback_defaults_envelope_and_conjecture() {
    let d = tempfile::tempdir().unwrap();
    let dir = d.path().join("fb");
    ok(&["feedback", "--eta-min", "0.5", "--eta-max", "2", "--points", "3", "--conjecture", "--out", &s(&dir)]);
    let (h, rows) = read_csv(&dir.join("curves.csv"));
    assert_eq!(h, ["eta", "eta_db", "exponent", "regime", "x_star", "tau", "g0"]);
    let taus = column(&h, &rows, "tau");
    let mut distinct = taus.clone();
    distinct.dedup();
    assert_eq!(distinct, [0.25, 0.5, 1.0, 2.0]);
    let eta = column(&h, &rows, "eta");
    let e = column(&h, &rows, "exponent");
    let best_at_one = eta
        .iter()
        .zip(&e)
        .filter(|(x, _)| (**x - 1.0).abs() < 1e-12)
        .map(|(_, y)| *y)
        .fold(f64::NEG_INFINITY, f64::max);
    assert!((best_at_one - 0.458_675).abs() < 1e-6, "{best_at_one}");

    let (h, rows) = read_csv(&dir.join("envelope.csv"));
    assert_eq!(h, ["eta", "eta_db", "tau_opt", "exponent"]);
    let t = column(&h, &rows, "tau_opt");
    assert!(t.windows(2).all(|w| w[1] < w[0]));

    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("conjecture.json")).unwrap()).unwrap();
    assert_eq!(report[0]["eta"], 1.0);
    assert_eq!(report[0]["supports_conjecture"], true);
    assert_eq!(report[0]["label"], "numerical support for the conjecture");
    assert!(dir.join("manifest.json").exists());
}

#[test]
fn feedback_without_conjecture_flag_writes_no_report() {
    let d = tempfile::tempdir().unwrap();
    let dir = d.path().join("fb");
    ok(&["feedback", "--tau", "1", "--g0", "0,0.5", "--points", "5", "--linear", "--out", &s(&dir)]);
    assert!(!dir.join("conjecture.json").exists());
    let (h, rows) = read_csv(&dir.join("curves.csv"));
    let g0 = column(&h, &rows, "g0");
    assert!(g0.contains(&0.0) && g0.contains(&0.5));
}

#[test]
fn simulate_tilted_default_grid_ratio() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write(d.path(), "s.json", r#"{"model": {"kind": "rayleigh"}, "eta": 2.0, "mode": "linearized", "sampler": "tilted", "trials": 20000}"#);
    let dir = d.path().join("sim");
    ok(&["simulate", "--config", &cfg, "--out", &s(&dir)]);
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap();
    let ratio = summary["ratio"].as_f64().unwrap();
    assert!((0.9..=1.1).contains(&ratio), "{ratio}");
    for key in ["slope", "intercept", "r_squared", "analytical_exponent", "oracle_slope"] {
        assert!(summary[key].is_number(), "{key}");
    }
    let (h, rows) = read_csv(&dir.join("outage.csv"));
    assert_eq!(h, ["K", "outage", "std_err", "log_outage", "flagged"]);
    assert_eq!(rows.len(), 8);
}

#[test]
fn simulate_is_deterministic_in_seed() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write(d.path(), "s.json", r#"{"model": {"kind": "rician", "kappa": 0.5}, "eta": 1.5, "k_grid": [5, 10, 15, 20], "trials": 20000, "mode": "exact", "sampler": "plain", "seed": 9}"#);
    let (a, b, c) = (d.path().join("a"), d.path().join("b"), d.path().join("c"));
    ok(&["simulate", "--config", &cfg, "--out", &s(&a)]);
    ok(&["simulate", "--config", &cfg, "--out", &s(&b)]);
    ok(&["simulate", "--config", &cfg, "--seed", "10", "--out", &s(&c)]);
    let read = |p: &Path| fs::read(p.join("outage.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
    assert_ne!(read(&a), read(&c));
}

#[test]
fn exact_rate_feedback_is_consistent_across_seeds() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write(d.path(), "s.json", r#"{"protocol": {"tau": 1.0, "g0": 0.0}, "eta": 0.7, "k_grid": [44, 47, 50, 53], "trials": 100000, "mode": "exact", "sampler": "plain", "seed": 1}"#);
    let (a, b) = (d.path().join("a"), d.path().join("b"));
    ok(&["simulate", "--config", &cfg, "--out", &s(&a)]);
    ok(&["simulate", "--config", &cfg, "--seed", "2", "--out", &s(&b)]);
    let row = |p: &Path| {
        let (h, rows) = read_csv(&p.join("outage.csv"));
        let k = column(&h, &rows, "K");
        let i = k.iter().position(|&x| x == 50.0).unwrap();
        (column(&h, &rows, "outage")[i], column(&h, &rows, "std_err")[i])
    };
    let ((pa, sa), (pb, sb)) = (row(&a), row(&b));
    assert!(pa > 0.0 && pb > 0.0);
    assert!((pa - pb).abs() <= 3.0 * (sa * sa + sb * sb).sqrt(), "{pa} vs {pb}");
}

#[test]
fn insufficient_data_keeps_estimates_and_explains() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write(d.path(), "s.json", r#"{"model": {"kind": "rayleigh"}, "eta": 3.0, "k_grid": [100, 200, 300, 400], "trials": 500, "mode": "linearized", "sampler": "plain"}"#);
    let dir = d.path().join("sim");
    let out = wbo(&["simulate", "--config", &cfg, "--out", &s(&dir)]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("increase trials or use the tilted sampler"));
    let (h, rows) = read_csv(&dir.join("outage.csv"));
    assert!(rows.iter().all(|r| r[h.iter().position(|x| x == "flagged").unwrap()] == "true"));
    assert!(dir.join("manifest.json").exists());
    assert!(!dir.join("summary.json").exists());
}

#[test]
fn tilted_sampler_rejected_for_rician() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write(d.path(), "s.json", r#"{"model": {"kind": "rician", "kappa": 0.5}, "eta": 2.0, "mode": "linearized", "sampler": "tilted"}"#);
    let out = wbo(&["simulate", "--config", &cfg, "--out", &s(&d.path().join("o"))]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("tilting not available"));
}

const PSI_I4: &str = r#"{"n_t": 2, "n_r": 2, "psi": [[[1,0],[0,0],[0,0],[0,0]],[[0,0],[1,0],[0,0],[0,0]],[[0,0],[0,0],[1,0],[0,0]],[[0,0],[0,0],[0,0],[1,0]]]}"#;

#[test]
fn shape_identity_correlation_recovers_white_objective() {
    let d = tempfile::tempdir().unwrap();
    let psi = write(d.path(), "psi.json", PSI_I4);
    let out = d.path().join("shape.json");
    ok(&["shape", "--psi", &psi, "--eta", "1.5", "--starts", "6", "--out", &s(&out)]);
    let r: serde_json::Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    let (e, w) = (r["exponent"].as_f64().unwrap(), r["white_exponent"].as_f64().unwrap());
    assert!((e - w).abs() <= 1e-9, "{e} vs {w}");
    assert_eq!(r["start_values"].as_array().unwrap().len(), 6);
    assert!(r.get("trace").is_none());
    assert_eq!(r["starts"], 6);

    let verbose = d.path().join("v.json");
    ok(&["shape", "--psi", &psi, "--eta", "1.5", "--starts", "6", "--verbose", "--out", &s(&verbose)]);
    let r: serde_json::Value = serde_json::from_str(&fs::read_to_string(&verbose).unwrap()).unwrap();
    let trace = r["trace"].as_array().unwrap();
    assert_eq!(trace.len(), 6);
    assert_eq!(trace[0]["kind"], "white");
    assert_eq!(trace[1]["kind"], "top_eigenvector");
    assert!(trace[0]["sigma"].is_array());
}

#[test]
fn shape_infeasible_target_exits_with_domain_status() {
    let d = tempfile::tempdir().unwrap();
    let psi = write(d.path(), "psi.json", PSI_I4);
    let out = wbo(&["shape", "--psi", &psi, "--eta", "0.2", "--out", &s(&d.path().join("x.json"))]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no sigma attains"));
}

#[test]
fn replay_reproduces_outputs_in_place() {
    let d = tempfile::tempdir().unwrap();
    let model = write(d.path(), "m.json", r#"{"kind": "nakagami", "m": 3}"#);
    let out = d.path().join("n.csv");
    ok(&["exponent", "--model", &model, "--linear", "--points", "7", "--out", &s(&out)]);
    let first = fs::read(&out).unwrap();
    fs::remove_file(&model).unwrap();
    fs::remove_file(&out).unwrap();
    ok(&["replay", &s(&d.path().join("n.csv.manifest.json"))]);
    assert_eq!(fs::read(&out).unwrap(), first);
}

#[test]
fn inline_descriptor_is_accepted() {
    let d = tempfile::tempdir().unwrap();
    let out = d.path().join("r.csv");
    ok(&["exponent", "--model", r#"{"kind": "rician", "kappa": 0.7}"#, "--eta-min", "4", "--eta-max", "5", "--points", "2", "--out", &s(&out)]);
    let (h, rows) = read_csv(&out);
    assert!((column(&h, &rows, "exponent")[0] - 0.765_166_5).abs() < 1e-6);
    let bad = wbo(&["exponent", "--model", r#"{"kind": "rician", "kapa": 0.7}"#, "--out", &s(&out)]);
    assert_eq!(bad.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("unknown field `kapa`"));
}
