use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use spinrelax_core::noise::{brms_squared, FieldComponent, LayerGeometry, LayerKind};
use spinrelax_core::numerics::linear_regression;
use spinrelax_core::sequence::DecayCurve;

fn spinrelax(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spinrelax"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("SPINRELAX_OUT")
        .output()
        .expect("binary runs")
}

fn ok(out: &Path, args: &[&str]) -> Output {
    let o = spinrelax(out, args);
    assert!(
        o.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    o
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn table(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut rdr = csv::Reader::from_path(path).unwrap();
    let headers = rdr.headers().unwrap().iter().map(String::from).collect();
    let rows = rdr
        .records()
        .map(|r| r.unwrap().iter().map(|v| v.parse().unwrap()).collect())
        .collect();
    (headers, rows)
}

#[test]
fn predict_echo_starts_at_one() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        dir.path(),
        &[
            "predict", "--seq", "echo", "--w", "4.40", "--tau", "14.6", "--t2", "1.41", "--tmax",
            "5",
        ],
    );
    let text = std::fs::read_to_string(dir.path().join("predict_echo.csv")).unwrap();
    assert!(text.starts_with("time_us,signal,sigma\n"));
    assert!(!text.contains('\r'));
    let c = DecayCurve::load_csv(dir.path().join("predict_echo.csv")).unwrap();
    assert_eq!(c.values[0], 1.0);
    assert_eq!(*c.times.last().unwrap(), 5.0);
    let numeric = DecayCurve::load_csv(dir.path().join("predict_echo_numeric.csv")).unwrap();
    assert_eq!(numeric.values[0], 1.0);
    let m = json(&dir.path().join("manifest_predict.json"));
    assert_eq!(m["command"], "predict");
    assert_eq!(m["config"]["w"], 4.4);
    assert_eq!(m["tool"], "spinrelax");
}

#[test]
fn joint_fit_on_fixture_recovers_truth() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["fit", "--joint", "--fixture"]);
    let r = json(&dir.path().join("fit_joint.json"));
    assert_eq!(r["converged"], true);
    for (k, v) in [("j1", 0.71), ("w", 4.40), ("tau", 14.6)] {
        let got = r["params"][k].as_f64().unwrap();
        assert!((got - v).abs() / v < 0.10, "{k} = {got}");
        assert!(r["sigmas"][k].as_f64().unwrap() > 0.0);
    }
    assert!(r["covariance"].as_array().unwrap().len() == 4);
}

#[test]
fn wtau_scan_is_linear_with_positive_slope() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["hopping", "--scan-wtau"]);
    let (headers, rows) = table(&dir.path().join("hopping_scan.csv"));
    let col = |name: &str| {
        let i = headers.iter().position(|h| h == name).unwrap();
        rows.iter().map(|r| r[i]).collect::<Vec<f64>>()
    };
    let (_, slope, r2) = linear_regression(&col("w_tau"), &col("t_z_fit"));
    assert!(slope > 0.0 && r2 > 0.99, "slope {slope}, R^2 {r2}");
    assert!(dir.path().join("hopping_closed.csv").exists());
    let tz = json(&dir.path().join("hopping_tz.json"))["t_z_us"]
        .as_f64()
        .unwrap();
    assert!((15.0..=60.0).contains(&(tz / 1.41)));
}

#[test]
fn rerun_from_manifest_is_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = [
        "simulate",
        "--observable",
        "echo",
        "--n-spins",
        "3",
        "--tmax",
        "2",
        "--points",
        "9",
        "--realizations",
        "6",
        "--seed",
        "17",
        "--w",
        "2",
        "--tau",
        "5",
    ];
    ok(a.path(), &args);
    let manifest = a.path().join("manifest_simulate.json");
    ok(b.path(), &["rerun", manifest.to_str().unwrap()]);
    let name = "simulate_echo.csv";
    assert_eq!(
        std::fs::read(a.path().join(name)).unwrap(),
        std::fs::read(b.path().join(name)).unwrap()
    );
    assert_eq!(
        std::fs::read(a.path().join("manifest_simulate.json")).unwrap(),
        std::fs::read(b.path().join("manifest_simulate.json")).unwrap()
    );
    assert_eq!(json(&manifest)["seed"], 17);
}

#[test]
fn config_file_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(
        &cfg,
        "[predict]\nseq = \"xy4\"\ntmax = 2.0\npoints = 5\nnumeric = false\n",
    )
    .unwrap();
    ok(
        dir.path(),
        &[
            "predict",
            "--config",
            cfg.to_str().unwrap(),
            "--points",
            "7",
        ],
    );
    let c = DecayCurve::load_csv(dir.path().join("predict_xy4.csv")).unwrap();
    assert_eq!(c.len(), 7);
    assert_eq!(*c.times.last().unwrap(), 2.0);
    assert!(!dir.path().join("predict_xy4_numeric.csv").exists());

    std::fs::write(&cfg, "[predict]\nwidth = 2.0\n").unwrap();
    let o = spinrelax(dir.path(), &["predict", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = spinrelax(
        dir.path(),
        &["fit", "--stretched", "--input", "/no/such/file.csv"],
    );
    assert_eq!(missing.status.code(), Some(2));
    assert!(!missing.stderr.is_empty());

    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "time_us,signal\n0,abc\n").unwrap();
    let o = spinrelax(
        dir.path(),
        &["fit", "--stretched", "--input", bad.to_str().unwrap()],
    );
    assert_eq!(o.status.code(), Some(3));

    let flat = dir.path().join("flat.csv");
    let rows: String = (0..10)
        .map(|i| format!("{},0.8\n", i as f64 * 0.5))
        .collect();
    std::fs::write(&flat, format!("time_us,signal\n{rows}")).unwrap();
    let o = spinrelax(
        dir.path(),
        &["fit", "--stretched", "--input", flat.to_str().unwrap()],
    );
    assert_eq!(o.status.code(), Some(4));
    assert!(dir.path().join("fit_stretched.json").exists());

    let o = spinrelax(dir.path(), &["predict", "--w", "-1"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn output_directory_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("from_env");
    let o = Command::new(env!("CARGO_BIN_EXE_spinrelax"))
        .args(["t1rho", "--points", "10"])
        .env("SPINRELAX_OUT", &target)
        .output()
        .unwrap();
    assert!(o.status.success());
    let (headers, rows) = table(&target.join("t1rho.csv"));
    assert_eq!(headers, ["omega_rad_per_us", "rate_per_us", "t1rho_us"]);
    assert_eq!(rows.len(), 10);
}

#[test]
fn depth_roundtrip_and_svg() {
    let dir = tempfile::tempdir().unwrap();
    let g = LayerGeometry {
        kind: LayerKind::HalfSpace,
        depth: 2.92,
        proton_density: 50.0,
        spin_quantum: 0.5,
    };
    let b = brms_squared(&g, FieldComponent::Longitudinal)
        .unwrap()
        .sqrt();
    ok(dir.path(), &["depth", "--brms", &b.to_string(), "--svg"]);
    let d = json(&dir.path().join("depth.json"))["depth_nm"]
        .as_f64()
        .unwrap();
    assert!((d - 2.92).abs() < 1e-9);

    ok(dir.path(), &["t1rho", "--svg", "--points", "20"]);
    let svg = std::fs::read_to_string(dir.path().join("t1rho.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("polyline"));
}

#[test]
fn collapse_and_density_run_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    ok(p, &["hopping", "--w", "3", "--tau", "10", "--points", "50"]);
    std::fs::rename(p.join("hopping_closed.csv"), p.join("a.csv")).unwrap();
    ok(p, &["hopping", "--w", "5", "--tau", "20", "--points", "50"]);
    std::fs::rename(p.join("hopping_closed.csv"), p.join("b.csv")).unwrap();
    let (a, b) = (p.join("a.csv"), p.join("b.csv"));
    ok(
        p,
        &[
            "collapse",
            "--input",
            a.to_str().unwrap(),
            "--input",
            b.to_str().unwrap(),
            "--w",
            "3,5",
            "--tau",
            "10,20",
            "--j1",
            "0.71,0.71",
        ],
    );
    let text = std::fs::read_to_string(p.join("collapse_1.csv")).unwrap();
    assert!(text.starts_with("t_rescaled,signal,sigma\n"));
    let o = spinrelax(
        p,
        &[
            "collapse",
            "--input",
            a.to_str().unwrap(),
            "--w",
            "3,5",
            "--tau",
            "10",
        ],
    );
    assert_eq!(o.status.code(), Some(2));

    ok(
        p,
        &[
            "simulate",
            "--observable",
            "xy4",
            "--n-spins",
            "3",
            "--tmax",
            "6",
            "--points",
            "7",
            "--realizations",
            "8",
            "--separation",
            "6",
            "--w",
            "1",
            "--tau",
            "5",
        ],
    );
    ok(
        p,
        &[
            "density",
            "--input",
            p.join("simulate_xy4.csv").to_str().unwrap(),
            "--w",
            "1",
            "--tau",
            "5",
            "--sep-min",
            "5",
            "--sep-max",
            "7",
            "--sep-step",
            "1",
            "--neighbors",
            "2",
            "--realizations",
            "8",
            "--threads",
            "2",
        ],
    );
    let r = json(&p.join("density.json"));
    assert!(r["params"]["separation"].as_f64().is_some());
    let (_, rows) = table(&p.join("density_profile.csv"));
    assert_eq!(rows.len(), 3);
}
