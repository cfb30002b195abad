use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn laros(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_laros")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn scalar_solve_reports_the_analytic_answer() {
    let dir = tempfile::tempdir().unwrap();
    let a = write(dir.path(), "a.csv", "2\n");
    let o = laros(&["solve", "--input", &a, "--theta", "0.5", "--eps", "1e-10"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(r["command"], "solve");
    assert!((r["objective"].as_f64().unwrap() - 0.75).abs() < 1e-8);
    assert!((r["x2"][0][0].as_f64().unwrap() - 0.5).abs() < 1e-8);
    assert_eq!(r["features"][0]["support_rows"], serde_json::json!([0]));
}

#[test]
fn config_file_fills_missing_flags_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let a = write(dir.path(), "a.csv", "2\n");
    let cfg = write(dir.path(), "c.json", &format!(r#"{{"input": "{a}", "theta": 0.5, "algo": "primal"}}"#));
    let o = laros(&["solve", "--config", &cfg]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(r["solver"]["algorithm"], "primal");
    let o = laros(&["solve", "--config", &cfg, "--algo", "dual"]);
    let r: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(r["solver"]["algorithm"], "dual");
}

#[test]
fn usage_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let a = write(dir.path(), "a.csv", "1,2\n3,4\n");
    let o = laros(&["solve", "--input", &a]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("theta"));
    assert_eq!(code(&laros(&["solve", "--input", &a, "--theta", "-1"])), 1);
    assert_eq!(code(&laros(&["solve", "--bogus"])), 1);
    assert_eq!(code(&laros(&["--help"])), 0);

    let x2 = write(dir.path(), "x2.csv", "1,2,3\n");
    assert_eq!(code(&laros(&["certify", "--input", &a, "--x2", &x2, "--theta", "0.3"])), 1);
}

#[test]
fn certify_accepts_the_all_ones_solution() {
    let dir = tempfile::tempdir().unwrap();
    let a = write(dir.path(), "a.csv", "1,1\n1,1\n");
    let x2 = write(dir.path(), "x2.csv", "0.25,0.25\n0.25,0.25\n");
    let o = laros(&["certify", "--input", &a, "--x2", &x2, "--theta", "0.3"]);
    let text = String::from_utf8_lossy(&o.stdout);
    assert_eq!(code(&o), 0, "{text}");
    assert!(text.contains("certified      true"));
    assert!(text.contains("support        2x2"));

    let x2 = write(dir.path(), "bad.csv", "0.5,0\n0,0\n");
    let o = laros(&["certify", "--input", &a, "--x2", &x2, "--theta", "0.3"]);
    assert_eq!(code(&o), 4);
}

#[test]
fn gen_sailboat_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = laros(&["gen-sailboat", "--out", out.to_str().unwrap(), "--seed", "3"]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        out
    };
    let (a, b) = (run("a"), run("b"));
    for f in ["matrix.csv", "truth.json", "images/image_001.pgm", "images/image_030.pgm"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let truth: Value = serde_json::from_slice(&fs::read(a.join("truth.json")).unwrap()).unwrap();
    assert_eq!(truth["images"].as_array().unwrap().len(), 30);
    assert_eq!(fs::read_dir(a.join("images")).unwrap().count(), 30);
    assert_eq!(code(&laros(&["gen-sailboat", "--out", a.to_str().unwrap(), "--features", "6"])), 1);
}

#[test]
fn extract_writes_report_and_masks() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let o = laros(&["gen-sailboat", "--out", data.to_str().unwrap(), "--height", "16", "--width", "10", "--images", "12", "--features", "3", "--per-image", "2"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let out = dir.path().join("out");
    let o = laros(&[
        "extract",
        "--images",
        data.join("images").to_str().unwrap(),
        "--max-features",
        "1",
        "--theta-grid",
        "0.1:1:4",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r: Value = serde_json::from_slice(&fs::read(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(r["command"], "extract");
    assert_eq!(r["images"], serde_json::json!([16, 10]));
    assert_eq!(r["features"].as_array().unwrap().len(), 1);
    let mask = laros::matio::read_pgm(out.join("feature_01.pgm")).unwrap();
    let on = mask.pixels.iter().filter(|p| **p == 255.0).count();
    assert_eq!(on, r["features"][0]["s_i"].as_u64().unwrap() as usize);
}
