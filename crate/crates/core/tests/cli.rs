//! End-to-end checks of the experiment binary: flags, report files, energy
//! traces, and exit codes.

use std::path::PathBuf;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_eminamg"))
}

fn tmpdir(tag: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("eminamg-cli-{tag}-{}", std::process::id()));
    std::fs::create_dir_all(&d).unwrap();
    d
}

#[test]
fn converged_run_exits_zero_and_writes_valid_report() {
    let dir = tmpdir("ok");
    let out = dir.join("report.json");
    let csv = dir.join("trace.csv");
    let status = bin()
        .args([
            "--problem",
            "poisson2d",
            "--nx",
            "32",
            "--ny",
            "32",
            "--variant",
            "emin-j:2",
            "--tau",
            "1e-10",
            "--out",
        ])
        .arg(&out)
        .arg("--trace-csv")
        .arg(&csv)
        .output()
        .unwrap();
    assert!(
        status.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&status.stderr)
    );
    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    eminamg::validate_report_json(&doc).unwrap();
    assert_eq!(doc["schema_version"], 1);
    assert_eq!(doc["runs"][0]["solve"]["converged"], true);
    // Energy trace with the documented header.
    let trace = std::fs::read_to_string(&csv).unwrap();
    let mut lines = trace.lines();
    assert_eq!(lines.next(), Some("iter,dE_rel,energy"));
    assert!(lines.next().is_some(), "trace has no data rows");
    std::fs::remove_dir_all(dir).ok();
}

#[test]
fn non_convergence_exits_nonzero() {
    let dir = tmpdir("fail");
    let out = dir.join("report.json");
    let status = bin()
        .args([
            "--problem",
            "poisson2d",
            "--nx",
            "32",
            "--ny",
            "32",
            "--variant",
            "tentative",
            "--solve-maxit",
            "1",
            "--out",
        ])
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(1));
    // The report is still written, with converged = false recorded.
    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(doc["runs"][0]["solve"]["converged"], false);
    std::fs::remove_dir_all(dir).ok();
}

#[test]
fn bad_arguments_exit_with_error_code() {
    let status = bin()
        .args(["--problem", "heat-death", "--out", "/dev/null"])
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&status.stderr).contains("unknown problem"));
}

#[test]
fn matrix_file_problem_via_cli() {
    let dir = tmpdir("file");
    // Write a small SPD system, then solve it through --problem file.
    let mut trips = Vec::new();
    let n = 40;
    for i in 0..n {
        trips.push((i, i, 2.0));
        if i > 0 {
            trips.push((i, i - 1, -1.0));
            trips.push((i - 1, i, -1.0));
        }
    }
    let a = eminamg::SparseMatrix::from_triplets(n, n, &trips).unwrap();
    let mtx = dir.join("a.mtx");
    eminamg::mm_write(&mtx, &a).unwrap();
    let out = dir.join("report.json");
    let status = bin()
        .args(["--problem", "file", "--matrix"])
        .arg(&mtx)
        .args(["--variant", "emin-gs:1", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(doc["problem"]["kind"], "file");
    assert_eq!(doc["problem"]["nrows"], 40);
    std::fs::remove_dir_all(dir).ok();
}

#[test]
fn file_problem_with_dense_nullspace_file() {
    let dir = tmpdir("nullspace");
    let n = 30;
    let mut trips = Vec::new();
    for i in 0..n {
        trips.push((i, i, 2.0));
        if i > 0 {
            trips.push((i, i - 1, -1.0));
            trips.push((i - 1, i, -1.0));
        }
    }
    let a = eminamg::SparseMatrix::from_triplets(n, n, &trips).unwrap();
    let mtx = dir.join("a.mtx");
    eminamg::mm_write(&mtx, &a).unwrap();
    let modes = eminamg::DenseMatrix::from_fn(n, 1, |_, _| 1.0);
    let vpath = dir.join("v.mtx");
    eminamg::mm_write_dense(&vpath, &modes).unwrap();
    let out = dir.join("report.json");
    let status = bin()
        .args(["--problem", "file", "--matrix"])
        .arg(&mtx)
        .arg("--nullspace")
        .arg(&vpath)
        .args(["--variant", "emin-j:1", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(
        doc["problem"]["nullspace"],
        vpath.display().to_string().as_str()
    );
    std::fs::remove_dir_all(dir).ok();
}

#[test]
fn theta_defaults_per_problem_kind() {
    let dir = tmpdir("theta");
    let out = dir.join("report.json");
    let status = bin()
        .args([
            "--problem",
            "elasticity3d",
            "--nx",
            "8",
            "--ny",
            "8",
            "--nz",
            "8",
            "--variant",
            "tentative",
            "--out",
        ])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(doc["config"]["theta"], 0.06);
    std::fs::remove_dir_all(dir).ok();
}

#[test]
fn strength_threshold_alias_accepted() {
    let dir = tmpdir("alias");
    let out = dir.join("report.json");
    let status = bin()
        .args([
            "--problem",
            "poisson2d",
            "--nx",
            "16",
            "--ny",
            "16",
            "--strength-threshold",
            "0.5",
            "--variant",
            "tentative",
            "--out",
        ])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(doc["config"]["theta"], 0.5);
    std::fs::remove_dir_all(dir).ok();
}
