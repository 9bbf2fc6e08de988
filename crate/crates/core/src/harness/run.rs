//! Monte Carlo execution of the three comparison modes.
//!
//! The unit of work is one `(trial, mode)` pair. Inside it the full
//! `m_max x n` array is programmed once; each M then works on a copy with
//! only the first M rows enabled, so smaller M always sees a prefix of the
//! rows used by larger M. Signal frames, target draws and programming
//! randomness come from streams keyed by trial only, which makes the modes
//! paired comparisons and the output independent of scheduling.

use serde::{Deserialize, Serialize};

use crate::adaptive::{
    adapt_matrix, update_gamma, update_roi, GammaState, LoopSpend, RoiEstimate, TraceRecord,
};
use crate::crossbar::CrossbarArray;
use crate::cs::{
    generate_frame, metrics, sample, BasisPursuit, RoiProfile, SamplePath, SparseFrame,
};
use crate::energy::EnergyParams;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::matrix::{program_matrix, target_levels, MatrixSpec};
use crate::rng::{Domain, StreamKey};

use super::config::ExperimentConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Uniform,
    #[serde(rename = "nonuniform")]
    NonUniform,
    Adaptive,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Uniform => "uniform",
            Mode::NonUniform => "nonuniform",
            Mode::Adaptive => "adaptive",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "uniform" => Some(Mode::Uniform),
            "nonuniform" => Some(Mode::NonUniform),
            "adaptive" => Some(Mode::Adaptive),
            _ => None,
        }
    }
}

/// One `(M, mode, trial)` outcome. Floats are stored at full precision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub m: usize,
    pub mode: Mode,
    pub trial: usize,
    pub tnmse_db: f64,
    pub roi_tnmse_db: f64,
    /// Initial programming of the array plus the first read-back.
    pub programming_pj: f64,
    /// Sampling, re-programming and read-back energy inside the frame loop.
    pub loop_energy_pj: f64,
    pub cells_touched: usize,
    pub updates: usize,
    pub nonconverged_frames: usize,
}

/// One adaptive-loop iteration, tagged with where it came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub m: usize,
    pub trial: usize,
    pub iteration: usize,
    pub gamma: f64,
    pub tier: String,
    pub updated: bool,
    pub cells_touched: usize,
    pub energy_pj: f64,
    pub tnmse_so_far_db: f64,
}

impl TraceRow {
    fn new(m: usize, trial: usize, rec: &TraceRecord) -> Self {
        Self {
            m,
            trial,
            iteration: rec.iteration,
            gamma: rec.gamma,
            tier: rec.tier.as_str().to_string(),
            updated: rec.updated,
            cells_touched: rec.cells_touched,
            energy_pj: rec.energy_pj,
            tnmse_so_far_db: rec.tnmse_so_far_db,
        }
    }
}

/// Everything one `(trial, mode)` unit produces.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitOutput {
    pub results: Vec<TrialResult>,
    pub traces: Vec<TraceRow>,
}

/// Raw output of a run, sorted by `(M, mode, trial)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub results: Vec<TrialResult>,
    pub traces: Vec<TraceRow>,
}

pub fn modes(cfg: &ExperimentConfig) -> Vec<Mode> {
    if cfg.adaptive.enabled {
        vec![Mode::Uniform, Mode::NonUniform, Mode::Adaptive]
    } else {
        vec![Mode::Uniform, Mode::NonUniform]
    }
}

pub fn roi_profile(cfg: &ExperimentConfig) -> RoiProfile {
    let s = &cfg.signal;
    RoiProfile::contiguous(s.n, s.roi_fraction, s.roi_in_fraction, s.persistence)
}

/// Column weights a mode starts from: all ones for uniform sampling, the
/// RoI mask lifted by the weight floor otherwise.
pub fn initial_weights(cfg: &ExperimentConfig, mode: Mode) -> Vec<f64> {
    match mode {
        Mode::Uniform => vec![1.0; cfg.signal.n],
        Mode::NonUniform | Mode::Adaptive => {
            RoiEstimate::from_mask(&roi_profile(cfg).mask, cfg.adaptive.ema_alpha).column_weights()
        }
    }
}

/// The signal frames of one trial, shared by every mode and M.
pub fn trial_frames(cfg: &ExperimentConfig, trial: usize) -> Result<Vec<SparseFrame>> {
    let roi = roi_profile(cfg);
    let mut rng = StreamKey::new(cfg.run.master_seed, Domain::Signal, trial as u64).rng(0);
    let mut frames: Vec<SparseFrame> = Vec::with_capacity(cfg.signal.frames);
    for t in 0..cfg.signal.frames {
        let frame = generate_frame(frames.last(), &roi, cfg.k(), t, &mut rng)?;
        frames.push(frame);
    }
    Ok(frames)
}

/// Runs one `(trial, mode)` unit starting from explicit column weights.
pub fn run_unit_with_weights(
    cfg: &ExperimentConfig,
    trial: usize,
    mode: Mode,
    weights: &[f64],
) -> Result<UnitOutput> {
    let n = cfg.signal.n;
    let m_max = cfg.m_max();
    let seed = cfg.run.master_seed;
    let t_key = |d| StreamKey::new(seed, d, trial as u64);
    let program = cfg.program_config();
    let roi = roi_profile(cfg);
    let frames = trial_frames(cfg, trial)?;
    let opts = cfg.solver.options();
    let budget = cfg.adaptive.budget()?;

    let spec = MatrixSpec::new(cfg.matrix.kind, m_max, n, weights)?;
    let targets = target_levels(&spec, &mut t_key(Domain::Targets).rng(0));
    let mut base = CrossbarArray::new(m_max, n, EnergyParams::default())?;
    program_matrix(&mut base, &targets, &program, &t_key(Domain::Programming))?;
    let base_programming = base.ledger().programming_pj();

    let mut m_list = cfg.matrix.m_list.clone();
    m_list.sort_unstable();
    let mut results = Vec::with_capacity(m_list.len());
    let mut traces = Vec::new();

    for m in m_list {
        let mut array = base.clone();
        array.enable_first_rows(m)?;
        let before_read = array.ledger().total_pj();
        let mut phi = crate::matrix::realize_phi(&mut array, &program.encoding);
        let programming_pj = base_programming + (array.ledger().total_pj() - before_read);
        let mut solver = BasisPursuit::new(&phi.values)?;
        let mut noise = t_key(Domain::Noise).rng(m as u64);

        let mut cur_targets = targets.clone();
        let mut cur_spec = spec.clone();
        let mut est = RoiEstimate::from_mask(&roi.mask, cfg.adaptive.ema_alpha);
        let mut gamma = GammaState::new(&budget, cfg.adaptive.u1, cfg.adaptive.u2);
        let mut spend = LoopSpend::default();

        let mut overall = Vec::with_capacity(frames.len());
        let mut in_roi = Vec::with_capacity(frames.len());
        let (mut cells_touched, mut updates, mut nonconverged) = (0, 0, 0);
        let mut warm: Option<Vec<f64>> = None;

        for (t, frame) in frames.iter().enumerate() {
            let start = array.ledger().total_pj();
            let y = sample(&phi, frame, cfg.signal.noise_sigma, &mut noise, SamplePath::Crossbar(&mut array))?;
            let warm_ref = if cfg.solver.warm_start { warm.as_deref() } else { None };
            let rec = solver.solve_from(&y.y, &opts, warm_ref)?;
            if !rec.converged {
                nonconverged += 1;
                log::debug!("trial {trial} {} M={m} frame {t}: solver hit max_iter", mode.as_str());
            }
            if let Some(r) = metrics::frame_nmse(frame, &rec.x_hat, None) {
                overall.push(r);
            }
            if let Some(r) = metrics::frame_nmse(frame, &rec.x_hat, Some(&roi.mask)) {
                in_roi.push(r);
            }

            if mode == Mode::Adaptive {
                let threshold = cfg.adaptive.support_threshold
                    * rec.x_hat.iter().fold(0.0f64, |a, v| a.max(v.abs()));
                if threshold > 0.0 {
                    update_roi(&mut est, &rec, threshold)?;
                }
                gamma = update_gamma(&gamma, &spend, &budget, frames.len() - t)?;
                let exhausted = budget.total_budget.is_some_and(|cap| spend.consumed_pj >= cap);
                // the last frame's update would never be used
                let updated = t + 1 < frames.len()
                    && !exhausted
                    && crate::adaptive::should_update(&gamma, t);
                let mut touched = 0;
                if updated {
                    let out = adapt_matrix(
                        &mut array,
                        &cur_targets,
                        &est,
                        &cur_spec,
                        &t_key(Domain::Targets),
                        &program,
                        &t_key(Domain::Programming).with_epoch(t as u64 + 1),
                    )?;
                    touched = out.cells_touched;
                    if touched > 0 {
                        solver = BasisPursuit::new(&out.phi.values)?;
                    }
                    phi = out.phi;
                    cur_targets = out.targets;
                    cur_spec = out.spec;
                    cells_touched += touched;
                    updates += 1;
                }
                let spent = array.ledger().total_pj() - start;
                spend.consumed_pj += spent;
                spend.last_iteration_pj = spent;
                traces.push(TraceRow::new(
                    m,
                    trial,
                    &TraceRecord {
                        iteration: t,
                        gamma: gamma.gamma,
                        tier: gamma.tier,
                        updated,
                        cells_touched: touched,
                        energy_pj: spent,
                        tnmse_so_far_db: metrics::tnmse_from_ratios(&overall)
                            .unwrap_or(f64::NAN),
                    },
                ));
            } else {
                let spent = array.ledger().total_pj() - start;
                spend.consumed_pj += spent;
                spend.last_iteration_pj = spent;
            }
            warm = Some(rec.x_hat);
        }

        let db = |ratios: &[f64], what: &str| match metrics::tnmse_from_ratios(ratios) {
            Ok(v) => v,
            Err(_) => {
                log::warn!("trial {trial} M={m}: no frame had {what} energy; metric is NaN");
                f64::NAN
            }
        };
        results.push(TrialResult {
            m,
            mode,
            trial,
            tnmse_db: db(&overall, "signal"),
            roi_tnmse_db: db(&in_roi, "RoI"),
            programming_pj,
            loop_energy_pj: spend.consumed_pj,
            cells_touched,
            updates,
            nonconverged_frames: nonconverged,
        });
    }
    Ok(UnitOutput { results, traces })
}

pub fn run_unit(cfg: &ExperimentConfig, trial: usize, mode: Mode) -> Result<UnitOutput> {
    run_unit_with_weights(cfg, trial, mode, &initial_weights(cfg, mode))
}

/// Runs every `(trial, mode)` unit and sorts the results.
pub fn run_trials(cfg: &ExperimentConfig, exec: Execution) -> Result<RunOutput> {
    cfg.validate()?;
    let units: Vec<(usize, Mode)> = (0..cfg.run.trials)
        .flat_map(|t| modes(cfg).into_iter().map(move |m| (t, m)))
        .collect();
    let outputs = exec.map(&units, |&(trial, mode)| run_unit(cfg, trial, mode));
    let mut results = Vec::new();
    let mut traces = Vec::new();
    for out in outputs {
        let out = out?;
        results.extend(out.results);
        traces.extend(out.traces);
    }
    results.sort_by_key(|r| (r.m, r.mode, r.trial));
    traces.sort_by_key(|r| (r.m, r.trial, r.iteration));
    if results.is_empty() {
        return Err(Error::InvalidArgument("run produced no results".into()));
    }
    Ok(RunOutput { results, traces })
}
