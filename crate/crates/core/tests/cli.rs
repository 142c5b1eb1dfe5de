use std::path::Path;
use std::process::Command;

fn run(args: &[&str], dir: &Path) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_ductwave"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap();
    (
        out.status.code().unwrap(),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn write_config(dir: &Path, body: &str) -> String {
    let p = dir.join("run.json");
    std::fs::write(&p, body).unwrap();
    p.display().to_string()
}

const EXP: &str = r#"{"profile":{"type":"exp","a":1.0},"grid":{"extent":40,"n":256},"y_nodes":16,
 "growth":{"t_max":8,"fit_from":2,"y_nodes":32}}"#;

#[test]
fn analyze_writes_table_classification_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), EXP);
    let (code, _, err) = run(&["analyze", "--config", &cfg, "--out", "o"], dir.path());
    assert_eq!(code, 0, "{err}");
    let o = dir.path().join("o");
    let csv = std::fs::read_to_string(o.join("dispersion.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 513 + 2);
    let m: serde_json::Value = serde_json::from_slice(&std::fs::read(o.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["command"], "analyze");
    assert_eq!(m["config"]["grid"]["n"], 256);
    assert!(m["wall_seconds"]["analyze"].as_f64().unwrap() >= 0.0);
    let c: serde_json::Value = serde_json::from_slice(&std::fs::read(o.join("classification.json")).unwrap()).unwrap();
    assert!(c.is_object());
}

#[test]
fn solve_times_override_and_csv_shape() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), EXP);
    let (code, _, err) = run(
        &["solve", "--config", &cfg, "--out", "o", "--times", "0,0.5"],
        dir.path(),
    );
    assert_eq!(code, 0, "{err}");
    let o = dir.path().join("o");
    let mean = std::fs::read_to_string(o.join("mean_t0.5.csv")).unwrap();
    let mut lines = mean.lines();
    assert_eq!(lines.next().unwrap(), "x,a_u,p");
    assert_eq!(mean.lines().count(), 257);
    let row: Vec<f64> = lines.next().unwrap().split(',').map(|s| s.parse().unwrap()).collect();
    assert_eq!(row.len(), 3);
    let field = std::fs::read_to_string(o.join("field_t0.csv")).unwrap();
    assert_eq!(field.lines().count(), 1 + 16 * 256);
    assert!(std::fs::read_dir(&o)
        .unwrap()
        .all(|e| !e.unwrap().file_name().to_string_lossy().ends_with(".tmp")));
}

#[test]
fn validate_and_growth_succeed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), EXP);
    let (code, out, err) = run(
        &["validate", "--config", &cfg, "--out", "v", "--times", "0.5"],
        dir.path(),
    );
    assert_eq!(code, 0, "{out}{err}");
    assert!(out.lines().all(|l| l.starts_with("PASS")), "{out}");
    let v: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("v/validate.json")).unwrap()).unwrap();
    assert!(v.as_array().unwrap().iter().all(|c| c["pass"] == true));
    let (code, _, err) = run(&["growth", "--config", &cfg, "--out", "g"], dir.path());
    assert_eq!(code, 0, "{err}");
    let norms = std::fs::read_to_string(dir.path().join("g/norms.csv")).unwrap();
    assert!(norms.starts_with("t,norm_mean,norm_full"));
}

#[test]
fn decompose_writes_components() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), EXP);
    let (code, _, err) = run(
        &["decompose", "--config", &cfg, "--out", "d", "--times", "1"],
        dir.path(),
    );
    assert_eq!(code, 0, "{err}");
    let names: Vec<String> = std::fs::read_dir(dir.path().join("d"))
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    for part in ["pole", "spread", "local"] {
        assert!(names.contains(&format!("decompose_t1_{part}.csv")), "{names:?}");
    }
}

#[test]
fn unstable_profile_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"profile":{"type":"pl","breakpoints":[-1,-0.01,0.01,1],"values":[0,0.001,0.999,1]},"times":[1]}"#,
    );
    let (code, _, err) = run(&["solve", "--config", &cfg, "--out", "o"], dir.path());
    assert_eq!(code, 3);
    assert!(err.contains("unstable") && err.contains("0.336"), "{err}");
    let (code, _, _) = run(&["spectrum", "--config", &cfg, "--out", "s"], dir.path());
    assert_eq!(code, 0);
}

#[test]
fn config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    for (body, needle) in [
        (
            r#"{"profile":{"type":"exp","a":1.0},"grid":{"extent":40,"n":100}}"#,
            "grid.n",
        ),
        (r#"{"profile":{"type":"exp","a":1.0},"times":[2,1]}"#, "times"),
        (r#"{"profile":{"type":"exp","a":1.0},"colour":1}"#, "colour"),
        (r#"{"profile":{"type":"quadratic","c":0.5}}"#, "profile"),
    ] {
        let cfg = write_config(dir.path(), body);
        let (code, _, err) = run(&["spectrum", "--config", &cfg, "--out", "o"], dir.path());
        assert_eq!(code, 2, "{body}: {err}");
        assert!(err.contains(needle), "{body}: {err}");
    }
    let (code, _, _) = run(&["spectrum", "--config", "missing.json"], dir.path());
    assert_eq!(code, 2);
}

#[test]
fn velocity_data_rejected_by_decompose() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"profile":{"type":"exp","a":1.0},"grid":{"extent":40,"n":128},"y_nodes":16,"times":[1],
            "data":{"type":"packets","u0":[],"u1":[{"amplitude":1.0,"center":0.0}]}}"#,
    );
    let (code, _, err) = run(&["decompose", "--config", &cfg, "--out", "o"], dir.path());
    assert_eq!(code, 2, "{err}");
}
