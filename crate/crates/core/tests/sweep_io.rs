use std::fs;
use std::io::Cursor;

use haldane_core::ed::ed_ground_state;
use haldane_core::mps::{random_mps, Mps};
use haldane_core::observables::{central_pair_entropy, fidelity};
use haldane_core::sweep::{read_csv, CSV_HEADER};
use haldane_core::{
    dmrg_ground_state, run_sweep, verify_against_oracle, DmrgConfig, Mode, ModelParams, PGrid, SweepConfig,
    SweepError,
};

fn ed_config(dir: &tempfile::TempDir, name: &str, n: usize, grid: PGrid) -> SweepConfig {
    let mut cfg = SweepConfig::new(Mode::Ed, vec![n], dir.path().join(name));
    cfg.grid = grid;
    cfg
}

#[test]
fn ed_scan_covers_the_coarse_grid() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ed_config(&dir, "n8.csv", 8, PGrid::uniform(0.5, 1.2, 0.01));
    let out = run_sweep(&cfg).unwrap();
    assert_eq!(out.exit_code(), 0);
    assert_eq!(out.records.len(), 71);
    assert!(out.records.iter().all(|r| r.is_complete() && r.n == 8));
    assert!(out.records.windows(2).all(|w| w[0].p < w[1].p));
    let text = fs::read_to_string(&out.csv_path).unwrap();
    assert_eq!(text.lines().next().unwrap(), CSV_HEADER.join(","));
    assert_eq!(text.lines().count(), 72);
    assert!(out.manifest_path.exists());
    let back = read_csv(&out.csv_path).unwrap();
    assert_eq!(back.len(), 71);
    for (a, b) in back.iter().zip(&out.records) {
        assert!((a.energy - b.energy).abs() <= 1e-11 * b.energy.abs());
        assert!((a.susceptibility - b.susceptibility).abs() <= 1e-11 * b.susceptibility.abs());
    }
}

#[test]
fn resume_recomputes_only_missing_or_failed_points() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ed_config(&dir, "res.csv", 6, PGrid::uniform(0.6, 1.0, 0.05));
    let full = run_sweep(&cfg).unwrap();
    assert_eq!(full.computed, 9);
    let text = fs::read_to_string(&cfg.output).unwrap();
    let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
    // drop one point and mark another as failed
    lines.remove(3);
    let fields: Vec<&str> = lines[5].split(',').collect();
    let mut failed: Vec<String> = fields[..3].iter().map(|s| s.to_string()).collect();
    failed.extend(["NaN"; 6].map(String::from));
    failed.extend(["0".to_string(), fields[10].to_string()]);
    lines[5] = failed.join(",");
    fs::write(&cfg.output, lines.join("\n") + "\n").unwrap();

    cfg.resume = true;
    let again = run_sweep(&cfg).unwrap();
    assert_eq!((again.computed, again.reused), (2, 7));
    assert_eq!(again.records.len(), 9);
    for (a, b) in again.records.iter().zip(&full.records) {
        assert_eq!(a.csv_fields()[..10], b.csv_fields()[..10]);
    }
}

#[test]
fn resume_ignores_rows_with_another_delta() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ed_config(&dir, "d.csv", 4, PGrid::uniform(0.8, 0.9, 0.05));
    run_sweep(&cfg).unwrap();
    cfg.delta = 0.002;
    cfg.resume = true;
    let out = run_sweep(&cfg).unwrap();
    assert_eq!((out.computed, out.reused), (3, 0));
    assert!(out.records.iter().all(|r| r.delta == 0.002));
}

#[test]
fn oracle_check_agrees_and_respects_the_cap() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = SweepConfig::new(Mode::Dmrg, vec![8], dir.path().join("unused.csv"));
    cfg.grid = PGrid::uniform(0.5, 1.4, 0.1);
    let report = verify_against_oracle(&cfg).unwrap();
    assert!(report.passed, "{report:?}");
    assert_eq!(report.comparisons[0].points, 10);
    assert!(report.max_abs_energy() < 1e-9);
    assert!(!cfg.output.exists());

    cfg.sizes = vec![2];
    let tiny = verify_against_oracle(&cfg).unwrap();
    assert!(tiny.max_abs_energy() < 1e-12 && tiny.max_abs_entropy() < 1e-12);

    cfg.sizes = vec![14];
    assert!(matches!(
        verify_against_oracle(&cfg),
        Err(SweepError::CapExceeded { n: 14, cap: 12 })
    ));
}

#[test]
fn invalid_configurations_are_rejected_before_any_output() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ed_config(&dir, "bad.csv", 8, PGrid::uniform(0.5, 1.2, 0.01));
    cfg.delta = 0.0;
    assert!(matches!(run_sweep(&cfg), Err(SweepError::InvalidConfig(_))));
    cfg.delta = 1e-3;
    cfg.sizes = vec![7];
    assert!(matches!(run_sweep(&cfg), Err(SweepError::InvalidConfig(_))));
    cfg.sizes = vec![16];
    assert!(matches!(run_sweep(&cfg), Err(SweepError::CapExceeded { .. })));
    assert!(!cfg.output.exists());
}

#[test]
fn dmrg_and_ed_fidelities_agree() {
    let (p, delta) = (0.85, 1e-3);
    let cfg = DmrgConfig::default();
    let dm = |p| dmrg_ground_state(&ModelParams::new(8, p).unwrap(), &cfg).unwrap().0;
    let ed = |p| ed_ground_state(&ModelParams::new(8, p).unwrap(), 0, 1e-12).unwrap();
    let f_dmrg = fidelity(&dm(p), &dm(p + delta)).unwrap();
    let f_ed = fidelity(&ed(p), &ed(p + delta)).unwrap();
    assert!((f_dmrg - f_ed).abs() < 1e-10, "{f_dmrg} vs {f_ed}");
    assert!(f_ed < 1.0 && f_ed > 0.999);
}

#[test]
fn entropy_derivative_matches_a_polynomial_fit() {
    // least-squares cubic through seven exact entropies around p = 0.85
    let h = 0.01;
    let xs: Vec<f64> = (-3..=3).map(|k| k as f64 * h).collect();
    let ys: Vec<f64> = xs
        .iter()
        .map(|x| {
            let s = ed_ground_state(&ModelParams::new(8, 0.85 + x).unwrap(), 0, 1e-12).unwrap();
            central_pair_entropy(&s).unwrap()
        })
        .collect();
    // odd part a x + b x^3 by least squares
    let (mut s2, mut s4, mut s6, mut sy1, mut sy3) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(&ys) {
        s2 += x * x;
        s4 += x.powi(4);
        s6 += x.powi(6);
        sy1 += x * y;
        sy3 += x.powi(3) * y;
    }
    let slope = (sy1 * s6 - sy3 * s4) / (s2 * s6 - s4 * s4);

    let dir = tempfile::tempdir().unwrap();
    let cfg = ed_config(&dir, "s.csv", 8, PGrid::uniform(0.85, 0.85, 0.01));
    let rec = &run_sweep(&cfg).unwrap().records[0];
    assert!((rec.d_entropy_dp - slope).abs() < 1e-4 * slope.abs().max(1.0), "{} vs {slope}", rec.d_entropy_dp);
}

#[test]
fn checkpoint_layout_is_little_endian_words() {
    let psi = random_mps(6, 4, 11);
    let mut bytes = Vec::new();
    psi.write_binary(&mut bytes).unwrap();
    let word = |i: usize| u64::from_le_bytes(bytes[8 * i..8 * i + 8].try_into().unwrap());
    assert_eq!(word(0), 6);
    let dims: Vec<u64> = (1..=7).map(word).collect();
    assert_eq!(dims, psi.bond_dims().iter().map(|&d| d as u64).collect::<Vec<_>>());
    let values = psi.parameter_count();
    assert_eq!(bytes.len(), 8 * (1 + 7 + values));
    let first = f64::from_le_bytes(bytes[64..72].try_into().unwrap());
    assert_eq!(first, psi.tensors()[0].data()[0]);

    let back = Mps::read_binary(Cursor::new(&bytes)).unwrap();
    assert_eq!(back.to_dense(), psi.to_dense());
    assert!(Mps::read_binary(Cursor::new(&bytes[..bytes.len() - 1])).is_err());
}
