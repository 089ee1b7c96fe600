use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_jordan-reduce"))
}

fn example(i: usize) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join(format!("problems/example{i}.json"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn without_wall_time(s: &str) -> String {
    s.lines()
        .filter(|l| !l.starts_with("wall_time_ms="))
        .collect::<Vec<_>>()
        .join("\n")
}

fn write_variant(dir: &Path, i: usize, edit: impl FnOnce(&mut Value)) -> PathBuf {
    let mut v: Value = serde_json::from_str(&std::fs::read_to_string(example(i)).unwrap()).unwrap();
    edit(&mut v);
    let p = dir.join(format!("variant{i}.json"));
    std::fs::write(&p, v.to_string()).unwrap();
    p
}

#[test]
fn verify_passes_on_all_examples() {
    for i in 1..=5 {
        let o = run(&["verify", example(i).to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "example{i}: {}{}", stdout(&o), stderr(&o));
        assert!(stdout(&o).contains("wall_time_ms="));
    }
}

#[test]
fn structure_lists_certificates() {
    let o = run(&["structure", example(1).to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains("[certificates]"));
    assert!(text.contains("chain_lengths"));
}

#[test]
fn resonant_lambda_is_a_solvability_failure() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_variant(dir.path(), 5, |v| v["lambda"] = 4.into());
    let o = run(&["solve", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("resonant"), "{}", stderr(&o));
}

#[test]
fn input_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let corrupt = dir.path().join("corrupt.json");
    std::fs::write(&corrupt, "{\"family\": \"goursat\", ").unwrap();
    let unknown = write_variant(dir.path(), 1, |v| v["family"] = "heat".into());
    let missing = dir.path().join("missing.json");
    for p in [&corrupt, &unknown, &missing] {
        let o = run(&["verify", p.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(2), "{}: {}", p.display(), stderr(&o));
        assert!(stderr(&o).starts_with("error:"));
    }
    let o = run(&["verify", example(1).to_str().unwrap(), "--dt", "abc"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn impossible_tolerance_fails_verification() {
    let o = run(&["verify", example(2).to_str().unwrap(), "--tol", "1e-30"]);
    assert_eq!(o.status.code(), Some(1), "{}", stdout(&o));
}

#[test]
fn solve_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("u.csv");
    let o = run(&["solve", example(1).to_str().unwrap(), "-o", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let csv = std::fs::read_to_string(&out).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("x,y,component,value"));
    assert!(lines.all(|l| l.split(',').count() == 4));

    let o = run(&["solve", example(1).to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), csv);
    assert!(stderr(&o).contains("[certificates]"));
}

#[test]
fn overrides_change_the_grid() {
    let rows = |args: &[&str]| {
        let o = run(args);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        stdout(&o).lines().count() - 1
    };
    let p2 = example(2);
    let p2 = p2.to_str().unwrap();
    let base = rows(&["solve", p2]);
    let coarse = rows(&["solve", p2, "--grid-scale", "0.5"]);
    assert!(coarse < base, "{coarse} vs {base}");
    let coarse_dt = rows(&["solve", p2, "--dt", "0.01", "--grid-scale", "0.5"]);
    assert!(coarse_dt > 0);

    let p5 = example(5);
    let o = run(&["verify", p5.to_str().unwrap(), "--modes", "8"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let o = run(&["verify", p2, "--dt", "0.01"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
}

#[test]
fn reports_are_deterministic() {
    for i in [1, 4] {
        let p = example(i);
        let a = run(&["report", p.to_str().unwrap()]);
        let b = run(&["report", p.to_str().unwrap()]);
        assert_eq!(a.status.code(), Some(0));
        assert_eq!(without_wall_time(&stdout(&a)), without_wall_time(&stdout(&b)));
    }
}
