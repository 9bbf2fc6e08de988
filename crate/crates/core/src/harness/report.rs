//! Aggregation and on-disk artifacts of a run.
//!
//! A run directory holds `config.toml` (the effective configuration),
//! `trials.csv` (one row per `(M, mode, trial)` at full precision),
//! `summary.csv` (mean and std-dev per `(M, mode, metric)`), `trace.csv`
//! (adaptive-loop iterations) and `report.json` (energy, area and the
//! summary). Everything in the summary and the energy table is recomputable
//! from `trials.csv`.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::energy::{vmm_energy, AreaModel, Design, EnergyParams, Tech};
use crate::error::{Error, Result};
use crate::exec::Execution;

use super::config::ExperimentConfig;
use super::run::{run_trials, Mode, TraceRow, TrialResult};

pub const TRIALS_FILE: &str = "trials.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const TRACE_FILE: &str = "trace.csv";
pub const REPORT_FILE: &str = "report.json";
pub const CONFIG_FILE: &str = "config.toml";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Tnmse,
    RoiTnmse,
}

impl Metric {
    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Tnmse => "tnmse",
            Metric::RoiTnmse => "roi_tnmse",
        }
    }

    fn of(self, r: &TrialResult) -> f64 {
        match self {
            Metric::Tnmse => r.tnmse_db,
            Metric::RoiTnmse => r.roi_tnmse_db,
        }
    }
}

/// Mean and sample standard deviation of one metric over trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    #[serde(rename = "M")]
    pub m: usize,
    pub mode: Mode,
    pub metric: Metric,
    pub mean_db: f64,
    pub std_db: f64,
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyRow {
    pub m: usize,
    pub mode: Mode,
    pub programming_pj_mean: f64,
    pub loop_energy_pj_mean: f64,
    /// Energy of one VMM over the enabled `m x n` block.
    pub vmm_smc_pj: f64,
    pub vmm_cmos_pj: f64,
    pub cells_touched_mean: f64,
    pub updates_mean: f64,
    pub nonconverged_frames: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AreaRow {
    pub m: usize,
    pub n: usize,
    pub acmca_um2: f64,
    pub baseline_um2: f64,
    pub reduction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub master_seed: u64,
    pub k: usize,
    pub config: ExperimentConfig,
    pub summary: Vec<SummaryRow>,
    pub energy: Vec<EnergyRow>,
    pub area: Vec<AreaRow>,
    /// Per-trial rows; persisted separately in `trials.csv`.
    #[serde(skip)]
    pub trials: Vec<TrialResult>,
    /// Adaptive-loop trace; persisted separately in `trace.csv`.
    #[serde(skip)]
    pub traces: Vec<TraceRow>,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn sample_std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let mu = mean(xs);
    (xs.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

fn groups(trials: &[TrialResult]) -> BTreeMap<(usize, Mode), Vec<&TrialResult>> {
    let mut g: BTreeMap<(usize, Mode), Vec<&TrialResult>> = BTreeMap::new();
    for r in trials {
        g.entry((r.m, r.mode)).or_default().push(r);
    }
    // a fixed trial order keeps sums bit-identical however rows arrived
    for rows in g.values_mut() {
        rows.sort_by_key(|r| r.trial);
    }
    g
}

/// Summary rows ordered by `(M, mode, metric)`.
pub fn summarize(trials: &[TrialResult]) -> Vec<SummaryRow> {
    let mut out = Vec::new();
    for ((m, mode), rows) in groups(trials) {
        for metric in [Metric::Tnmse, Metric::RoiTnmse] {
            let xs: Vec<f64> = rows.iter().map(|r| metric.of(r)).collect();
            out.push(SummaryRow {
                m,
                mode,
                metric,
                mean_db: mean(&xs),
                std_db: sample_std(&xs),
                trials: xs.len(),
            });
        }
    }
    out
}

pub fn energy_table(trials: &[TrialResult], n: usize, params: &EnergyParams) -> Vec<EnergyRow> {
    groups(trials)
        .into_iter()
        .map(|((m, mode), rows)| {
            let col = |f: &dyn Fn(&TrialResult) -> f64| -> f64 {
                mean(&rows.iter().map(|r| f(r)).collect::<Vec<_>>())
            };
            EnergyRow {
                m,
                mode,
                programming_pj_mean: col(&|r| r.programming_pj),
                loop_energy_pj_mean: col(&|r| r.loop_energy_pj),
                vmm_smc_pj: vmm_energy(n, m, Tech::Smc, params),
                vmm_cmos_pj: vmm_energy(n, m, Tech::Cmos, params),
                cells_touched_mean: col(&|r| r.cells_touched as f64),
                updates_mean: col(&|r| r.updates as f64),
                nonconverged_frames: rows.iter().map(|r| r.nonconverged_frames).sum(),
            }
        })
        .collect()
}

pub fn area_table(n: usize, m_list: &[usize]) -> Vec<AreaRow> {
    let model = AreaModel::default();
    let mut ms = m_list.to_vec();
    ms.sort_unstable();
    ms.into_iter()
        .map(|m| AreaRow {
            m,
            n,
            acmca_um2: model.area_estimate(n, m, Design::Acmca),
            baseline_um2: model.area_estimate(n, m, Design::Baseline),
            reduction: model.area_reduction(n, m),
        })
        .collect()
}

pub fn build_report(cfg: &ExperimentConfig, trials: Vec<TrialResult>, traces: Vec<TraceRow>) -> RunReport {
    RunReport {
        master_seed: cfg.run.master_seed,
        k: cfg.k(),
        config: cfg.clone(),
        summary: summarize(&trials),
        energy: energy_table(&trials, cfg.signal.n, &EnergyParams::default()),
        area: area_table(cfg.signal.n, &cfg.matrix.m_list),
        trials,
        traces,
    }
}

/// Runs the experiment described by `cfg` and aggregates it.
pub fn run_experiment(cfg: &ExperimentConfig, exec: Execution) -> Result<RunReport> {
    let out = run_trials(cfg, exec)?;
    Ok(build_report(cfg, out.results, out.traces))
}

/// `x` rounded to 6 significant digits, in plain notation when that is
/// reasonably short.
pub fn sig6(x: f64) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..=9).contains(&exp) {
        return sci;
    }
    // reuse the rounded mantissa so both notations carry the same digits
    let digits: String = mantissa.chars().filter(|c| c.is_ascii_digit()).collect();
    let neg = mantissa.starts_with('-');
    let point = exp + 1;
    let body = if point <= 0 {
        format!("0.{}{}", "0".repeat((-point) as usize), digits)
    } else if point as usize >= digits.len() {
        format!("{}{}", digits, "0".repeat(point as usize - digits.len()))
    } else {
        format!("{}.{}", &digits[..point as usize], &digits[point as usize..])
    };
    let body = if body.contains('.') {
        body.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        body
    };
    if neg {
        format!("-{body}")
    } else {
        body
    }
}

pub fn write_summary_csv<W: Write>(rows: &[SummaryRow], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(["M", "mode", "metric", "mean_dB", "std_dB", "trials"])?;
    for r in rows {
        w.write_record([
            r.m.to_string(),
            r.mode.as_str().to_string(),
            r.metric.as_str().to_string(),
            sig6(r.mean_db),
            sig6(r.std_db),
            r.trials.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the summary table of `report` to `path`.
pub fn sweep_to_csv(report: &RunReport, path: &Path) -> Result<()> {
    write_summary_csv(&report.summary, BufWriter::new(File::create(path)?))
}

pub fn read_summary_csv(path: &Path) -> Result<Vec<SummaryRow>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let field = |i: usize| rec.get(i).unwrap_or("");
        let bad = |what: &str| Error::InvalidArgument(format!("summary row has a bad {what}: {rec:?}"));
        rows.push(SummaryRow {
            m: field(0).parse().map_err(|_| bad("M"))?,
            mode: Mode::parse(field(1)).ok_or_else(|| bad("mode"))?,
            metric: match field(2) {
                "tnmse" => Metric::Tnmse,
                "roi_tnmse" => Metric::RoiTnmse,
                _ => return Err(bad("metric")),
            },
            mean_db: field(3).parse().map_err(|_| bad("mean"))?,
            std_db: field(4).parse().map_err(|_| bad("std"))?,
            trials: field(5).parse().map_err(|_| bad("trial count"))?,
        });
    }
    Ok(rows)
}

fn write_rows<T: Serialize>(rows: &[T], path: &Path) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_trials_csv(rows: &[TrialResult], path: &Path) -> Result<()> {
    if rows.is_empty() {
        // serde writes the header with the first row; keep the file parseable
        let mut f = File::create(path)?;
        writeln!(
            f,
            "m,mode,trial,tnmse_db,roi_tnmse_db,programming_pj,loop_energy_pj,cells_touched,updates,nonconverged_frames"
        )?;
        return Ok(());
    }
    write_rows(rows, path)
}

pub fn read_trials_csv(path: &Path) -> Result<Vec<TrialResult>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let rows = rdr.deserialize().collect::<std::result::Result<Vec<TrialResult>, _>>()?;
    Ok(rows)
}

pub fn write_trace_csv(rows: &[TraceRow], path: &Path) -> Result<()> {
    if rows.is_empty() {
        let mut f = File::create(path)?;
        writeln!(
            f,
            "m,trial,iteration,gamma,tier,updated,cells_touched,energy_pj,tnmse_so_far_db"
        )?;
        return Ok(());
    }
    write_rows(rows, path)
}

/// Writes every artifact of `report` into `dir`, creating it if needed.
pub fn write_run_dir(report: &RunReport, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(CONFIG_FILE), report.config.to_toml())?;
    write_trials_csv(&report.trials, &dir.join(TRIALS_FILE))?;
    sweep_to_csv(report, &dir.join(SUMMARY_FILE))?;
    write_trace_csv(&report.traces, &dir.join(TRACE_FILE))?;
    let json = serde_json::to_string_pretty(report)
        .map_err(|e| Error::InvalidArgument(format!("report serialization: {e}")))?;
    std::fs::write(dir.join(REPORT_FILE), json + "\n")?;
    Ok(())
}

/// Rebuilds the report of a previous run from its directory.
pub fn load_run_dir(dir: &Path) -> Result<RunReport> {
    let cfg = ExperimentConfig::load(&dir.join(CONFIG_FILE))?;
    let trials = read_trials_csv(&dir.join(TRIALS_FILE))?;
    Ok(build_report(&cfg, trials, Vec::new()))
}
