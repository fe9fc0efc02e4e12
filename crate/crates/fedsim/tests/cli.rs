//! Binary-level checks: exit codes, strict config rejection, cross-process
//! determinism, and thread-count invariance of the written files.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn fedsim(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fedsim"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

const QUAD_CFG: &str = "\
algorithm = fedavg
problem.kind = quadratic
problem.dim = 6
problem.mu = 0.5
problem.l_max = 2.0
problem.rho = 1.0
problem.sigma_sq = 0.05
problem.workers = 4
problem.seed = 3
local.T = 2
schedule.kind = fixed
schedule.c = 0.2
run.rounds = 8
run.seeds = 1,2
run.init = zeros
";

#[test]
fn bounds_prints_proposition_constants() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("p.cfg");
    fs::write(
        &cfg,
        "\
algorithm = fedprox
problem.kind = quadratic
problem.dim = 1
problem.mu = 1.0
problem.l_max = 1.0
problem.rho = 0
problem.workers = 1
schedule.kind = fixed
schedule.c = 0.2
run.rounds = 100
run.init = zeros
",
    )
    .unwrap();
    let out = fedsim(&["bounds", "p.cfg"], dir.path());
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("b1 = 2.449490"), "{stdout}");
    assert!(stdout.contains("step_cap = 0.408248"), "{stdout}");
}

#[test]
fn oracle_exits_zero_with_no_violations() {
    let dir = tempfile::tempdir().unwrap();
    let out = fedsim(&["oracle", "--trials", "100"], dir.path());
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert_eq!(stdout.matches("violations = 0").count(), 3, "{stdout}");
}

#[test]
fn missing_dataset_file_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(
        &cfg,
        "\
algorithm = fedavg
problem.kind = logistic
dataset.kind = idx
dataset.images = nope-images.idx
dataset.labels = nope-labels.idx
partition.mode = iid
partition.workers = 2
local.T = 1
schedule.kind = fixed
schedule.c = 1
run.rounds = 2
",
    )
    .unwrap();
    let out = fedsim(&["run", "bad.cfg"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("ingestion error"), "{stderr}");
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("typo.cfg");
    fs::write(&cfg, format!("{QUAD_CFG}schedle.c = 2\n")).unwrap();
    let out = fedsim(&["run", "typo.cfg"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("unknown key 'schedle.c'"), "{stderr}");
}

#[test]
fn run_outputs_are_byte_identical_across_processes_and_threads() {
    let mut snapshots: Vec<Vec<(String, Vec<u8>)>> = Vec::new();
    for threads in ["1", "4", "8", "4"] {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("q.cfg"), QUAD_CFG).unwrap();
        let out = fedsim(&["--threads", threads, "run", "q.cfg"], dir.path());
        assert!(out.status.success(), "{:?}", out);
        let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir.path().join("out"))
            .unwrap()
            .map(|e| {
                let e = e.unwrap();
                (
                    e.file_name().to_string_lossy().into_owned(),
                    fs::read(e.path()).unwrap(),
                )
            })
            .collect();
        files.sort();
        snapshots.push(files);
    }
    for s in &snapshots[1..] {
        assert_eq!(s, &snapshots[0]);
    }
}

#[test]
fn verify_reports_a_verdict_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("q.cfg");
    fs::write(&cfg, QUAD_CFG).unwrap();
    let out = fedsim(&["verify", "q.cfg"], dir.path());
    assert!(out.status.success(), "{out:?}");
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("theorem1_fixed"), "{stdout}");
    assert!(stdout.contains("bound ="), "{stdout}");
}

#[test]
fn preset_writes_twelve_configs() {
    let dir = tempfile::tempdir().unwrap();
    let out = fedsim(&["preset", "fig-fixed", "--out-dir", "p"], dir.path());
    assert!(out.status.success());
    let count = fs::read_dir(dir.path().join("p")).unwrap().count();
    assert_eq!(count, 12);
}

#[test]
fn partition_report_shows_single_class_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("p.cfg");
    fs::write(
        &cfg,
        "\
algorithm = fedavg
problem.kind = logistic
dataset.kind = blobs
dataset.classes = 4
dataset.per_class = 10
partition.mode = noniid1
partition.workers = 4
local.T = 1
schedule.kind = fixed
schedule.c = 1
run.rounds = 1
",
    )
    .unwrap();
    let out = fedsim(&["partition-report", "p.cfg"], dir.path());
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    let data_rows: Vec<&str> = stdout
        .lines()
        .filter(|l| !l.starts_with("worker") && !l.starts_with('#'))
        .collect();
    assert_eq!(data_rows.len(), 4);
    for row in data_rows {
        let nonzero = row
            .split(',')
            .skip(2)
            .filter(|v| *v != "0")
            .count();
        assert_eq!(nonzero, 1, "row {row} should have one class");
    }
}
