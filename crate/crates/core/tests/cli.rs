use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn wlra(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wlra")).args(args).output().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn small(dir: &Path) -> (PathBuf, PathBuf) {
    (write(dir, "x.csv", "6,0\n1,2\n"), write(dir, "w.csv", "0.04,0.68\n0.84,0.40\n"))
}

fn medium(dir: &Path) -> (PathBuf, PathBuf) {
    (
        write(dir, "x4.json", r#"{"rows":4,"cols":3,"entries":[[6,4,6],[2,2,9],[9,0,7],[1,3,1]]}"#),
        write(dir, "w4.csv", "0.04,0.84,0.72\n0.56,1,0.68\n0.12,0.40,0.52\n0.60,0.48,0.32\n"),
    )
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn cuts_json_and_csv() {
    let dir = TempDir::new().unwrap();
    let (_, w) = small(dir.path());
    let out = dir.path().join("cuts.json");
    let o = wlra(&["cuts", "--weights", s(&w), "-o", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v = json(&out);
    assert_eq!(v["schema"], "wlra-report/1");
    assert_eq!(v["command"], "cuts");
    let cuts = v["result"]["cuts"].as_array().unwrap();
    let got: Vec<(u64, u64, f64)> = cuts
        .iter()
        .map(|c| (c["row"].as_u64().unwrap(), c["col"].as_u64().unwrap(), c["tau"].as_f64().unwrap()))
        .collect();
    let want = [(2, 2, -1.43695), (1, 1, -0.06266), (2, 1, 5.19697), (1, 2, 416.500)];
    assert_eq!(got.len(), 4);
    for (g, w) in got.iter().zip(want) {
        assert_eq!((g.0, g.1), (w.0, w.1));
        assert!((g.2 - w.2).abs() <= 1e-3 * w.2.abs());
    }

    let o = wlra(&["cuts", "--weights", s(&w), "--format", "csv"]);
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.starts_with("row,col,tau\n2,2,-1.43"), "{text}");
    assert_eq!(text.lines().count(), 5);
}

#[test]
fn enumerate_finds_three_solutions_on_4x3() {
    let dir = TempDir::new().unwrap();
    let (x, w) = medium(dir.path());
    let out = dir.path().join("e.json");
    let o = wlra(&["--seed", "3", "enumerate", "--data", s(&x), "--weights", s(&w), "--rank", "2", "-o", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v = json(&out);
    assert_eq!(v["result"]["solutions"].as_array().unwrap().len(), 3);
    assert_eq!(v["config"]["seed"], 3);
    assert_eq!(v["config"]["starts"], 256);
    assert!(v["config"].get("jobs").is_none());
}

#[test]
fn output_is_identical_across_jobs() {
    let dir = TempDir::new().unwrap();
    let (x, w) = medium(dir.path());
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for (jobs, out) in [("1", &a), ("3", &b)] {
        let o = wlra(&["--jobs", jobs, "enumerate", "--data", s(&x), "--weights", s(&w), "--rank", "2", "-o", s(out)]);
        assert_eq!(o.status.code(), Some(0));
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

#[test]
fn solve_exit_codes() {
    let dir = TempDir::new().unwrap();
    let (x, w) = small(dir.path());
    let out = dir.path().join("s.json");
    let o = wlra(&["solve", "--data", s(&x), "--weights", s(&w), "--rank", "1", "-o", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v = json(&out);
    assert_eq!(v["result"]["converged"], true);
    assert!(v["result"]["rmse"].as_f64().unwrap() > 0.8);

    let o = wlra(&["solve", "--data", s(&x), "--weights", s(&w), "--rank", "1", "--max-iter", "1", "-o", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(json(&out)["result"]["converged"], false);

    let o = wlra(&["solve", "--data", s(&x), "--weights", s(&w), "--rank", "2"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--rank"), "{}", stderr(&o));

    let start = write(dir.path(), "a0.csv", "1,0\n0,1\n");
    let o = wlra(&["solve", "--data", s(&x), "--weights", s(&w), "--rank", "1", "--start", s(&start)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--start"), "{}", stderr(&o));
}

#[test]
fn bad_inputs_name_the_field() {
    let dir = TempDir::new().unwrap();
    let (x, w) = small(dir.path());
    let bad = write(dir.path(), "bad.csv", "1,2\n3,oops\n");
    let o = wlra(&["enumerate", "--data", s(&bad), "--weights", s(&w), "--rank", "1"]);
    assert_eq!(o.status.code(), Some(1));
    let e = stderr(&o);
    assert!(e.contains("--data") && e.contains("oops") && e.contains("line 2"), "{e}");

    let wide = write(dir.path(), "wide.csv", "1,1,1\n1,1,1\n");
    let o = wlra(&["enumerate", "--data", s(&x), "--weights", s(&wide), "--rank", "1"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--weights"), "{}", stderr(&o));

    let neg = write(dir.path(), "neg.csv", "1,-1\n1,1\n");
    let o = wlra(&["solve", "--data", s(&x), "--weights", s(&neg), "--rank", "1"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--weights"), "{}", stderr(&o));

    let o = wlra(&["solve", "--data", "/nonexistent.csv", "--weights", s(&w), "--rank", "1"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--data"));

    let o = wlra(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn path_emits_curves_and_plot_data() {
    let dir = TempDir::new().unwrap();
    let (x, w) = small(dir.path());
    let out = dir.path().join("p.json");
    let plot = dir.path().join("p.csv");
    let o = wlra(&["path", "--data", s(&x), "--weights", s(&w), "--rank", "1", "-o", s(&out), "--plot", s(&plot)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v = json(&out);
    let curves = v["result"]["curves"].as_array().unwrap();
    assert_eq!(curves.len(), 2);
    assert_eq!(v["result"]["skipped_seeds"], 1);
    let mut ends: Vec<(f64, f64)> = curves
        .iter()
        .map(|c| (c["tau_left"].as_f64().unwrap(), c["tau_right"].as_f64().unwrap()))
        .collect();
    ends.sort_by(|a, b| a.0.total_cmp(&b.0));
    assert!((ends[0].0 - -0.18799).abs() < 1e-2 && (ends[0].1 - 0.09357).abs() < 1e-2, "{ends:?}");
    assert!((ends[1].0 - -0.05227).abs() < 1e-2 && (ends[1].1 - 5.19696).abs() < 1e-2, "{ends:?}");
    let sample = &curves[0]["samples"][0];
    for key in ["tau", "rmse", "wlra", "converged"] {
        assert!(sample.get(key).is_some(), "{key}");
    }

    let text = fs::read_to_string(&plot).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("curve_id,tau,rmse"));
    let rows: Vec<&str> = lines.collect();
    let samples: usize = curves.iter().map(|c| c["samples"].as_array().unwrap().len()).sum();
    assert_eq!(rows.len(), samples);
}

#[test]
fn scan_summary() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("scan.json");
    let o = wlra(&["--seed", "1", "scan", "--m", "2", "--n", "2", "--rank", "1", "--trials", "50", "-o", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v = json(&out);
    assert_eq!(v["result"]["bound"], 2);
    assert!(v["result"]["max_count"].as_u64().unwrap() <= 2);
    let total: u64 = v["result"]["histogram"].as_object().unwrap().values().map(|c| c.as_u64().unwrap()).sum();
    assert_eq!(total, 50);

    let o = wlra(&["scan", "--m", "2", "--n", "2", "--rank", "2", "--trials", "5"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--rank"));
}
