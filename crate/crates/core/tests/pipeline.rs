use std::path::Path;
use std::process::Command;

use acmca::exec::Execution;
use acmca::harness::report::{
    self, load_run_dir, read_summary_csv, read_trials_csv, write_run_dir, write_summary_csv, Metric,
};
use acmca::harness::run::{initial_weights, run_unit, run_unit_with_weights};
use acmca::harness::{run_experiment, ExperimentConfig, Mode};

fn small() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.signal.n = 64;
    cfg.signal.frames = 5;
    cfg.matrix.m_list = vec![16, 32];
    cfg.run.trials = 3;
    cfg
}

#[test]
fn tiny_noiseless_instance_is_recovered() {
    let mut cfg = ExperimentConfig::default();
    cfg.signal.n = 8;
    cfg.signal.sparsity_rate = 0.125;
    cfg.signal.roi_fraction = 0.25;
    cfg.signal.frames = 1;
    cfg.matrix.m_list = vec![6];
    cfg.solver.tol = 1e-9;
    cfg.solver.max_iter = 20_000;
    cfg.run.trials = 1;
    cfg.validate().unwrap();
    assert_eq!(cfg.k(), 1);
    let report = run_experiment(&cfg, Execution::Sequential).unwrap();
    for r in &report.trials {
        assert!(r.tnmse_db <= -80.0, "{r:?}");
    }
}

#[test]
fn unit_weights_reproduce_the_uniform_mode() {
    let cfg = small();
    let ones = vec![1.0; cfg.signal.n];
    assert_eq!(initial_weights(&cfg, Mode::Uniform), ones);
    let direct = run_unit(&cfg, 1, Mode::Uniform).unwrap();
    let explicit = run_unit_with_weights(&cfg, 1, Mode::Uniform, &ones).unwrap();
    assert_eq!(direct, explicit);
}

#[test]
fn exhausted_total_budget_freezes_the_adaptive_mode() {
    let mut cfg = small();
    cfg.adaptive.total_budget_pj = Some(0.0);
    let adaptive = run_unit(&cfg, 0, Mode::Adaptive).unwrap();
    let fixed = run_unit(&cfg, 0, Mode::NonUniform).unwrap();
    for (a, s) in adaptive.results.iter().zip(&fixed.results) {
        assert_eq!(a.updates, 0);
        assert_eq!(a.cells_touched, 0);
        assert_eq!(a.tnmse_db, s.tnmse_db);
        assert_eq!(a.roi_tnmse_db, s.roi_tnmse_db);
    }
}

#[test]
fn summary_covers_every_cell_and_matches_the_trials() {
    let mut cfg = small();
    cfg.matrix.m_list = vec![8, 16, 24, 32];
    let report = run_experiment(&cfg, Execution::default()).unwrap();
    // 4 M values x 3 modes x 2 metrics
    assert_eq!(report.summary.len(), 24);
    assert_eq!(report.trials.len(), 4 * 3 * cfg.run.trials);
    for row in &report.summary {
        let values: Vec<f64> = report
            .trials
            .iter()
            .filter(|t| t.m == row.m && t.mode == row.mode)
            .map(|t| match row.metric {
                Metric::Tnmse => t.tnmse_db,
                Metric::RoiTnmse => t.roi_tnmse_db,
            })
            .collect();
        assert_eq!(values.len(), row.trials);
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        assert!((mean - row.mean_db).abs() < 1e-9);
    }
}

#[test]
fn run_directory_round_trips() {
    let cfg = small();
    let report = run_experiment(&cfg, Execution::Sequential).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_run_dir(&report, dir.path()).unwrap();

    assert_eq!(read_trials_csv(&dir.path().join(report::TRIALS_FILE)).unwrap(), report.trials);
    let summary = read_summary_csv(&dir.path().join(report::SUMMARY_FILE)).unwrap();
    assert_eq!(summary.len(), report.summary.len());
    for (a, b) in summary.iter().zip(&report.summary) {
        assert_eq!((a.m, a.mode, a.metric, a.trials), (b.m, b.mode, b.metric, b.trials));
        assert!((a.mean_db - b.mean_db).abs() <= 1e-5 * b.mean_db.abs());
    }
    let reloaded = load_run_dir(dir.path()).unwrap();
    assert_eq!(reloaded.config, cfg);
    assert_eq!(reloaded.summary, report.summary);
}

#[test]
fn empty_summary_is_header_only() {
    let mut buf = Vec::new();
    write_summary_csv(&[], &mut buf).unwrap();
    assert_eq!(String::from_utf8(buf).unwrap(), "M,mode,metric,mean_dB,std_dB,trials\n");
}

fn bin(args: &[&str], cwd: &Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_acmca")).args(args).current_dir(cwd).output().unwrap()
}

#[test]
fn cli_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    std::fs::write(p.join("bad.toml"), "[signal]\nn = 0\n").unwrap();
    std::fs::write(p.join("typo.toml"), "[signal]\nnn = 10\n").unwrap();
    std::fs::write(p.join("ok.toml"), "[signal]\nn = 32\nframes = 2\n[matrix]\nm_list = [8]\n[run]\ntrials = 1\n")
        .unwrap();
    std::fs::write(p.join("blocker"), "").unwrap();

    assert_eq!(bin(&["run", "bad.toml"], p).status.code(), Some(2));
    assert_eq!(bin(&["run", "typo.toml"], p).status.code(), Some(2));
    assert_eq!(bin(&["sweep", "ok.toml", "--m-list", "8,99"], p).status.code(), Some(2));
    assert_eq!(bin(&["run", "missing.toml"], p).status.code(), Some(3));
    // output directory cannot be created under a regular file
    assert_eq!(bin(&["run", "ok.toml", "--out", "blocker/x"], p).status.code(), Some(3));
    assert_eq!(bin(&["report", "nowhere"], p).status.code(), Some(3));

    let out = bin(&["sweep", "ok.toml", "--m-list", "8,16", "--out", "r"], p);
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert_eq!(stdout.lines().count(), 1 + 2 * 3 * 2);

    // re-rendering reproduces the summary the run wrote
    let before = std::fs::read(p.join("r").join(report::SUMMARY_FILE)).unwrap();
    std::fs::remove_file(p.join("r").join(report::SUMMARY_FILE)).unwrap();
    let again = bin(&["report", "r"], p);
    assert_eq!(again.status.code(), Some(0));
    assert_eq!(std::fs::read(p.join("r").join(report::SUMMARY_FILE)).unwrap(), before);
    assert_eq!(again.stdout, before);
}
