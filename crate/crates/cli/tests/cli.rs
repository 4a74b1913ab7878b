use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn haldane(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_haldane"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn out_arg(path: &Path) -> String {
    path.to_str().unwrap().to_string()
}

fn data_lines(path: &Path) -> Vec<String> {
    fs::read_to_string(path).unwrap().lines().map(str::to_string).collect()
}

#[test]
fn ed_scan_writes_header_rows_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("ed.csv");
    let out = haldane(&[
        "--mode", "ed", "--n", "4", "--n", "6", "--p-min", "0.8", "--p-max", "0.9", "--p-step", "0.05",
        "--no-refine", "--output", &out_arg(&csv),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let lines = data_lines(&csv);
    assert_eq!(
        lines[0],
        "N,p,delta,energy,fidelity,susceptibility,entropy_pair,dE_dp,max_discarded_weight,sweeps_run,wall_time_s"
    );
    assert_eq!(lines.len(), 1 + 2 * 3);
    assert!(lines[1].starts_with("4,0.8,0.001,"));
    assert!(lines[6].starts_with("6,0.9,0.001,"));
    let manifest = fs::read_to_string(dir.path().join("ed.manifest.toml")).unwrap();
    assert!(manifest.contains("mode = \"ed\""), "{manifest}");
}

#[test]
fn refinement_window_adds_points() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("r.csv");
    let out = haldane(&[
        "--mode", "ed", "--n", "4", "--p-min", "0.8", "--p-max", "0.9", "--p-step", "0.05",
        "--refine-min", "0.84", "--refine-max", "0.86", "--refine-step", "0.01", "--output", &out_arg(&csv),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let ps: Vec<String> = data_lines(&csv)[1..]
        .iter()
        .map(|l| l.split(',').nth(1).unwrap().to_string())
        .collect();
    assert_eq!(ps, ["0.8", "0.84", "0.85", "0.86", "0.9"]);
}

#[test]
fn invalid_configurations_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let csv = out_arg(&dir.path().join("x.csv"));
    let reversed = haldane(&["--n", "4", "--p-min", "0.9", "--p-max", "0.8", "--output", &csv]);
    assert_eq!(reversed.status.code(), Some(2));
    let too_big = haldane(&["--mode", "ed", "--n", "14", "--output", &csv]);
    assert_eq!(too_big.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&too_big.stderr).contains("cap"));
    let odd = haldane(&["--mode", "ed", "--n", "5", "--output", &csv]);
    assert_eq!(odd.status.code(), Some(2));
    let missing_n = haldane(&["--output", &csv]);
    assert_eq!(missing_n.status.code(), Some(2));
    let both = haldane(&["--n", "4", "--sweeps", "4", "--paper-protocol", "--output", &csv]);
    assert_eq!(both.status.code(), Some(2));
    assert!(!dir.path().join("x.csv").exists());
}

#[test]
fn resume_keeps_finished_points() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("res.csv");
    let common = ["--mode", "ed", "--n", "6", "--p-step", "0.1", "--no-refine", "--output"];
    let mut first: Vec<&str> = common.to_vec();
    let path = out_arg(&csv);
    first.extend([path.as_str(), "--p-min", "0.5", "--p-max", "0.8"]);
    assert_eq!(haldane(&first).status.code(), Some(0));
    let before = data_lines(&csv);

    let mut second: Vec<&str> = common.to_vec();
    second.extend([path.as_str(), "--p-min", "0.5", "--p-max", "1.0", "--resume"]);
    let out = haldane(&second);
    assert_eq!(out.status.code(), Some(0));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("2 computed, 4 reused"), "{stderr}");
    let after = data_lines(&csv);
    assert_eq!(after.len(), 1 + 6);
    assert_eq!(after[..before.len()], before[..]);
}

#[test]
fn repeated_runs_match_except_wall_time() {
    let dir = tempfile::tempdir().unwrap();
    let strip = |path: &Path| -> Vec<String> {
        data_lines(path)
            .iter()
            .map(|l| l.rsplit_once(',').unwrap().0.to_string())
            .collect()
    };
    let mut runs = Vec::new();
    for name in ["a.csv", "b.csv"] {
        let csv = dir.path().join(name);
        let out = haldane(&[
            "--mode", "dmrg", "--n", "8", "--p-min", "0.84", "--p-max", "0.86", "--p-step", "0.01",
            "--no-refine", "--m", "20", "--output", &out_arg(&csv),
        ]);
        assert_eq!(out.status.code(), Some(0));
        runs.push(strip(&csv));
    }
    assert_eq!(runs[0], runs[1]);
}

#[test]
fn oracle_check_reports_agreement_and_disagreement() {
    let dir = tempfile::tempdir().unwrap();
    let run = |m: &str, name: &str| {
        haldane(&[
            "--mode", "dmrg", "--n", "8", "--p-min", "0.85", "--p-max", "0.85", "--no-refine", "--m", m,
            "--oracle-check", "--output", &out_arg(&dir.path().join(name)),
        ])
    };
    let exact = run("81", "good.csv");
    assert_eq!(exact.status.code(), Some(0), "{}", String::from_utf8_lossy(&exact.stderr));
    assert!(String::from_utf8_lossy(&exact.stderr).contains("oracle check passed"));
    // m = 2 cannot represent the N = 8 ground state
    let crude = run("2", "bad.csv");
    assert_eq!(crude.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&crude.stderr).contains("oracle check FAILED"));
    let manifest = fs::read_to_string(dir.path().join("bad.manifest.toml")).unwrap();
    assert!(manifest.contains("passed = false"), "{manifest}");
}

#[test]
fn paper_protocol_runs_three_sweeps() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("pp.csv");
    let out = haldane(&[
        "--n", "6", "--p-min", "1.0", "--p-max", "1.0", "--no-refine", "--paper-protocol", "--output",
        &out_arg(&csv),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let row = &data_lines(&csv)[1];
    assert_eq!(row.split(',').nth(9), Some("3"));
}
