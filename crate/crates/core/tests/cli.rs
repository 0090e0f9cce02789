use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn heatlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_heatlab"))
        .args(args)
        .env_remove("HEATLAB_WORKERS")
        .output()
        .expect("binary runs")
}

fn domain(name: &str) -> String {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../domains").join(name);
    root.to_string_lossy().into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn spectrum_of_half_plane_arc() {
    let o = heatlab(&["spectrum", "--arc", "0", "3.14159265358979", "--k", "3"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].starts_with("# heatlab "), "{text}");
    assert!(lines[0].contains("config="));
    assert_eq!(&lines[1..], &["k,lambda,alpha", "1,1,1", "2,4,2", "3,9,3"]);
}

#[test]
fn missing_domain_file() {
    let o = heatlab(&["verify-exit", "--domain", "no/such.json", "--x", "0,1", "--t-grid", "1,2"]);
    assert_eq!(o.status.code(), Some(4));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("domain file not found: no/such.json"), "{err}");
    let v: serde_json::Value = serde_json::from_str(err.trim()).unwrap();
    assert_eq!(v["error"], "io");
}

#[test]
fn config_errors_exit_with_two() {
    let o = heatlab(&["kernel", "--arc", "0", "7", "--x", "0,1", "--y", "0,1", "--t-grid", "1"]);
    assert_eq!(o.status.code(), Some(2));
    let o = heatlab(&["kernel", "--arc", "0", "3", "--x", "0,1", "--y", "0,1", "--t-grid", "2,1"]);
    assert_eq!(o.status.code(), Some(2));
    let o = heatlab(&["simulate", "--domain", &domain("truncated_halfplane.json"), "--x", "0,-2", "--t-grid", "1"]);
    assert_eq!(o.status.code(), Some(2));
    let o = heatlab(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn malformed_and_invalid_domains() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"dimension\": 2, \"branches\": [], \"extra\": 1}").unwrap();
    let o = heatlab(&["simulate", "--domain", bad.to_str().unwrap(), "--x", "0,1", "--t-grid", "1"]);
    assert_eq!(o.status.code(), Some(2));

    let overlap = dir.path().join("overlap.json");
    std::fs::write(
        &overlap,
        r#"{"dimension": 2, "core": [{"center": [0, 0], "radius": 1}], "branches": [
            {"vertex": [0, 0], "opening": {"type": "arc", "params": [-0.785, 0.785]}, "truncation_radius": 1},
            {"vertex": [0, 0], "opening": {"type": "arc", "params": [0, 1.57]}, "truncation_radius": 1}]}"#,
    )
    .unwrap();
    let o = heatlab(&["simulate", "--domain", overlap.to_str().unwrap(), "--x", "0,0", "--t-grid", "1"]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    let v: serde_json::Value = serde_json::from_str(err.trim()).unwrap();
    assert!(v["violations"][0].as_str().unwrap().contains("branches intersect"), "{err}");
}

#[test]
fn kernel_rows_match_reflection() {
    let o = heatlab(&["kernel", "--arc", "0", "3.141592653589793", "--x", "0,1", "--y", "0,1", "--t-grid", "1"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let row: Vec<&str> = text.lines().nth(2).unwrap().split(',').collect();
    let v: f64 = row[1].parse().unwrap();
    let want = (1.0 - (-2.0f64).exp()) / (2.0 * std::f64::consts::PI);
    assert!((v - want).abs() < 1e-11);
}

fn simulate(workers: &str, out: &Path) -> Output {
    heatlab(&[
        "simulate",
        "--domain",
        &domain("two_quadrants.json"),
        "--x",
        "0.5,0",
        "--y",
        "2,0",
        "--t-grid",
        "0.5:2:3",
        "--paths",
        "3000",
        "--dt",
        "0.05",
        "--seed",
        "11",
        "--workers",
        workers,
        "--out",
        out.to_str().unwrap(),
    ])
}

#[test]
fn output_is_identical_across_runs_and_workers() {
    let dir = tempfile::tempdir().unwrap();
    let paths: Vec<PathBuf> = (0..3).map(|i| dir.path().join(format!("s{i}.csv"))).collect();
    for (p, w) in paths.iter().zip(["1", "1", "3"]) {
        let o = simulate(w, p);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let a = std::fs::read(&paths[0]).unwrap();
    assert_eq!(a, std::fs::read(&paths[1]).unwrap());
    assert_eq!(a, std::fs::read(&paths[2]).unwrap());
    let text = String::from_utf8(a).unwrap();
    assert!(text.starts_with("# heatlab "));
    assert_eq!(text.lines().count(), 5);
}

#[test]
fn workers_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("env.csv");
    let o = Command::new(env!("CARGO_BIN_EXE_heatlab"))
        .args(["survival", "--cap", "1.5707963267948966", "--x", "0,0,1", "--t-grid", "1"])
        .args(["--out", out.to_str().unwrap()])
        .env("HEATLAB_WORKERS", "2")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    let text = std::fs::read_to_string(&out).unwrap();
    let v: f64 = text.lines().nth(2).unwrap().split(',').nth(1).unwrap().parse().unwrap();
    assert!((v - 0.682689492137).abs() < 1e-8);
}

#[test]
fn verify_exit_writes_csv_and_json() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("exit.csv");
    let o = heatlab(&[
        "verify-exit",
        "--domain",
        &domain("halfplane.json"),
        "--x",
        "0,1",
        "--t-grid",
        "16,32,64",
        "--paths",
        "20000",
        "--seed",
        "7",
        "--out",
        out.to_str().unwrap(),
    ]);
    let code = o.status.code().unwrap();
    assert!(code == 0 || code == 3, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(&out).unwrap();
    assert_eq!(csv.lines().count(), 5);
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.with_extension("json")).unwrap()).unwrap();
    let verdict = json["verdict"].as_str().unwrap();
    assert_eq!(verdict == "PASS", code == 0);
    let target = json["report"]["target"]["value"].as_f64().unwrap();
    assert!((target - (2.0 / std::f64::consts::PI).sqrt()).abs() < 1e-3);
}

#[test]
fn harmonic_reports_w() {
    let o = heatlab(&[
        "harmonic",
        "--domain",
        &domain("truncated_halfplane.json"),
        "--x",
        "0,2",
        "--paths",
        "20000",
        "--seed",
        "3",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let row: Vec<&str> = text.lines().nth(2).unwrap().split(',').collect();
    assert_eq!(row[0], "w");
    let w: f64 = row[2].parse().unwrap();
    let se: f64 = row[3].parse().unwrap();
    let want = (2.0 / std::f64::consts::PI).sqrt() * 1.5;
    assert!((w - want).abs() <= 4.0 * se + 1e-3, "{w} ± {se} vs {want}");
}
