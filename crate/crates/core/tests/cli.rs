use std::fs;
use std::path::Path;
use std::process::Command;

use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_topobeta");

fn write_config(dir: &Path, text: &str) -> std::path::PathBuf {
    let path = dir.join("run.cfg");
    fs::write(&path, text).unwrap();
    path
}

fn run(dir: &Path, config: &Path, extra: &[&str]) -> i32 {
    let out = dir.join("out");
    let status = Command::new(BIN)
        .arg("run")
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(&out)
        .args(extra)
        .output()
        .unwrap();
    status.status.code().unwrap()
}

const SMALL_MBB: &str = "problem.name = mbb\nproblem.nelx = 12\nproblem.nely = 4\nproblem.rmin = 1.5\n";

#[test]
fn capped_run_writes_artifacts() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), SMALL_MBB);
    assert_eq!(run(tmp.path(), &cfg, &["--max-iters", "2"]), 2);
    let out = tmp.path().join("out");
    let csv = fs::read_to_string(out.join("history.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "iter,objective,volume,gray,beta,change,constraint_1");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("1,") && lines[2].starts_with("2,"));
    assert!(!csv.contains('\r'));

    let pgm = fs::read_to_string(out.join("density_final.pgm")).unwrap();
    let mut tokens = pgm.split_whitespace();
    assert_eq!(tokens.next(), Some("P2"));
    assert_eq!((tokens.next(), tokens.next(), tokens.next()), (Some("12"), Some("4"), Some("255")));
    let pixels: Vec<u32> = tokens.map(|t| t.parse().unwrap()).collect();
    assert_eq!(pixels.len(), 48);
    assert!(pixels.iter().all(|&p| p <= 255));

    let summary = fs::read_to_string(out.join("summary.txt")).unwrap();
    assert!(summary.contains("termination: cap"));
    assert!(summary.contains("iterations: 2"));
}

#[test]
fn converged_run_exits_zero() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "problem.name = mbb\nproblem.nelx = 24\nproblem.nely = 8\nproblem.rmin = 1.5\n");
    assert_eq!(run(tmp.path(), &cfg, &[]), 0);
    let summary = fs::read_to_string(tmp.path().join("out/summary.txt")).unwrap();
    assert!(summary.contains("termination: converged"), "{summary}");
}

#[test]
fn invalid_configs_exit_one() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), &format!("{SMALL_MBB}continuation.gamma = -1\n"));
    assert_eq!(run(tmp.path(), &cfg, &[]), 1);
    let cfg = write_config(tmp.path(), &format!("{SMALL_MBB}solver.kind = direct\n"));
    assert_eq!(run(tmp.path(), &cfg, &[]), 1);
    let cfg = write_config(tmp.path(), SMALL_MBB);
    assert_eq!(run(tmp.path(), &cfg, &["--scheme", "fastest"]), 1);
    assert_eq!(run(tmp.path(), &tmp.path().join("missing.cfg"), &[]), 1);
}

#[test]
fn comparison_mode_writes_sibling_dirs() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), &format!("{SMALL_MBB}schemes = [default, modified, automatic]\n"));
    assert_eq!(run(tmp.path(), &cfg, &["--max-iters", "3"]), 2);
    let out = tmp.path().join("out");
    for name in ["default", "modified", "automatic"] {
        assert!(out.join(name).join("history.csv").is_file(), "{name}");
        assert!(out.join(name).join("density_final.pgm").is_file(), "{name}");
    }
    let table = fs::read_to_string(out.join("comparison.txt")).unwrap();
    let rows: Vec<&str> = table.lines().skip(2).collect();
    assert_eq!(rows.len(), 3);
    assert!(rows[0].starts_with("default") && rows[1].starts_with("modified") && rows[2].starts_with("automatic"));
}

#[test]
fn scheme_flag_selects_single_run() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), &format!("{SMALL_MBB}schemes = [default, automatic]\n"));
    assert_eq!(run(tmp.path(), &cfg, &["--max-iters", "2", "--scheme", "constant"]), 2);
    let summary = fs::read_to_string(tmp.path().join("out/summary.txt")).unwrap();
    assert!(summary.contains("scheme: constant"));
    assert!(!tmp.path().join("out/default").exists());
}
