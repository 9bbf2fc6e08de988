//! Energy-governed adaptation of the measurement matrix.
//!
//! A scalar `gamma` (pJ) is recomputed every iteration from the energy
//! budget and sorted into one of three update tiers. The RoI estimate is an
//! exponential moving average of reconstructed-support indicators; it feeds
//! new column weights, and only cells whose target level moves get
//! re-programmed.

use serde::{Deserialize, Serialize};

use crate::crossbar::CrossbarArray;
use crate::cs::Reconstruction;
use crate::error::{Error, Result};
use crate::matrix::{
    normalize_weights, program_cells, realize_phi, snapshot_phi, target_levels, MatrixSpec, MeasurementMatrix,
    ProgramConfig,
};
use crate::rng::StreamKey;

/// Baseline added to activity before normalizing into column weights.
pub const WEIGHT_FLOOR: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyBudget {
    /// Per-iteration allowance (pJ).
    pub e_budget: f64,
    /// Critical per-iteration energy (pJ), below `e_budget`.
    pub e_critical: f64,
    /// Optional cap on the whole run (pJ).
    pub total_budget: Option<f64>,
}

impl EnergyBudget {
    pub fn new(e_budget: f64, e_critical: f64, total_budget: Option<f64>) -> Result<Self> {
        if !(e_critical > 0.0 && e_critical < e_budget) {
            return Err(Error::InvalidArgument(format!(
                "need 0 < e_critical ({e_critical}) < e_budget ({e_budget})"
            )));
        }
        if let Some(t) = total_budget {
            if !(t >= 0.0) {
                return Err(Error::InvalidArgument(format!("total budget {t} must be >= 0")));
            }
        }
        Ok(Self {
            e_budget,
            e_critical,
            total_budget,
        })
    }

    /// Budget under which the matrix is updated every iteration.
    pub fn unlimited() -> Self {
        Self {
            e_budget: f64::INFINITY,
            e_critical: 1.0,
            total_budget: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Tier {
    EveryIteration,
    ReducedU1,
    ReducedU2,
}

impl Tier {
    pub fn as_str(self) -> &'static str {
        match self {
            Tier::EveryIteration => "every",
            Tier::ReducedU1 => "u1",
            Tier::ReducedU2 => "u2",
        }
    }
}

/// Threshold rule; a gamma equal to a threshold falls to the lower tier.
pub fn tier_for(gamma: f64, budget: &EnergyBudget) -> Tier {
    if budget.e_budget.is_infinite() || gamma > budget.e_budget {
        Tier::EveryIteration
    } else if gamma > budget.e_critical {
        Tier::ReducedU1
    } else {
        Tier::ReducedU2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaState {
    pub gamma: f64,
    pub tier: Tier,
    pub u1: usize,
    pub u2: usize,
}

impl GammaState {
    pub fn new(budget: &EnergyBudget, u1: usize, u2: usize) -> Self {
        let gamma = 2.0 * budget.e_budget;
        Self {
            gamma,
            tier: tier_for(gamma, budget),
            u1: u1.max(1),
            u2: u2.max(1),
        }
    }
}

impl Default for GammaState {
    fn default() -> Self {
        GammaState::new(&EnergyBudget::unlimited(), 5, 20)
    }
}

/// Energy spent so far inside the loop.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LoopSpend {
    pub consumed_pj: f64,
    pub last_iteration_pj: f64,
}

/// Recomputes gamma: the remaining total budget spread over the remaining
/// iterations when a cap is set, otherwise `2 e_budget - last spend`.
/// Negative values clamp to 0.
pub fn update_gamma(
    state: &GammaState,
    spend: &LoopSpend,
    budget: &EnergyBudget,
    iterations_remaining: usize,
) -> Result<GammaState> {
    if iterations_remaining == 0 {
        return Err(Error::InvalidArgument(
            "iterations_remaining must be at least 1".into(),
        ));
    }
    let raw = match budget.total_budget {
        Some(total) => (total - spend.consumed_pj) / iterations_remaining as f64,
        None => 2.0 * budget.e_budget - spend.last_iteration_pj,
    };
    let gamma = if raw.is_nan() { 0.0 } else { raw.max(0.0) };
    Ok(GammaState {
        gamma,
        tier: tier_for(gamma, budget),
        ..*state
    })
}

pub fn should_update(state: &GammaState, t: usize) -> bool {
    match state.tier {
        Tier::EveryIteration => true,
        Tier::ReducedU1 => t.is_multiple_of(state.u1),
        Tier::ReducedU2 => t.is_multiple_of(state.u2),
    }
}

/// Per-index support activity in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoiEstimate {
    pub activity: Vec<f64>,
    pub ema_alpha: f64,
}

impl RoiEstimate {
    pub fn new(n: usize, ema_alpha: f64) -> Self {
        Self {
            activity: vec![0.0; n],
            ema_alpha,
        }
    }

    /// Seeds the estimate with a known mask.
    pub fn from_mask(mask: &[bool], ema_alpha: f64) -> Self {
        Self {
            activity: mask.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect(),
            ema_alpha,
        }
    }

    /// `normalize(WEIGHT_FLOOR + activity)`.
    pub fn column_weights(&self) -> Vec<f64> {
        let raw: Vec<f64> = self.activity.iter().map(|a| WEIGHT_FLOOR + a).collect();
        normalize_weights(&raw).expect("floor keeps weights positive")
    }
}

/// Default support threshold: a tenth of the largest magnitude.
pub fn default_support_threshold(recon: &Reconstruction) -> f64 {
    let peak = recon.x_hat.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    (0.1 * peak).max(f64::MIN_POSITIVE)
}

pub fn update_roi(est: &mut RoiEstimate, recon: &Reconstruction, support_threshold: f64) -> Result<()> {
    if est.activity.len() != recon.x_hat.len() {
        return Err(Error::LengthMismatch {
            what: "reconstruction",
            expected: est.activity.len(),
            got: recon.x_hat.len(),
        });
    }
    if !(support_threshold > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "support threshold {support_threshold} must be positive"
        )));
    }
    let alpha = est.ema_alpha;
    for (a, &x) in est.activity.iter_mut().zip(&recon.x_hat) {
        let hit = if x.abs() > support_threshold { 1.0 } else { 0.0 };
        *a = (1.0 - alpha) * *a + alpha * hit;
    }
    Ok(())
}

/// Result of a partial re-programming pass.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptOutcome {
    pub phi: MeasurementMatrix,
    pub spec: MatrixSpec,
    pub targets: Vec<u8>,
    pub cells_touched: usize,
    pub energy_pj: f64,
}

/// Re-weights columns from `est`, recomputes targets on the fixed
/// `target_key` stream, and re-programs only the enabled cells whose target
/// changed. Gated cells keep their previous targets.
#[allow(clippy::too_many_arguments)]
pub fn adapt_matrix(
    array: &mut CrossbarArray,
    current_targets: &[u8],
    est: &RoiEstimate,
    spec: &MatrixSpec,
    target_key: &StreamKey,
    program: &ProgramConfig,
    program_key: &StreamKey,
) -> Result<AdaptOutcome> {
    if est.activity.len() != spec.cols || current_targets.len() != spec.rows * spec.cols {
        return Err(Error::LengthMismatch {
            what: "adaptation state",
            expected: spec.rows * spec.cols,
            got: current_targets.len(),
        });
    }
    let new_spec = MatrixSpec {
        col_weights: est.column_weights(),
        ..spec.clone()
    };
    let proposed = target_levels(&new_spec, &mut target_key.rng(0));
    let cols = spec.cols;
    let rows_on = array.row_enabled().to_vec();
    let cols_on = array.col_enabled().to_vec();
    let mut targets = current_targets.to_vec();
    let mut changed = vec![false; targets.len()];
    for (i, (&new, old)) in proposed.iter().zip(targets.iter_mut()).enumerate() {
        if rows_on[i / cols] && cols_on[i % cols] && new != *old {
            *old = new;
            changed[i] = true;
        }
    }
    let before = array.ledger().total_pj();
    let (cells_touched, _, _) =
        program_cells(array, &targets, program, program_key, |r, c| changed[r * cols + c])?;
    let phi = if cells_touched > 0 {
        realize_phi(array, &program.encoding)
    } else {
        // nothing moved, so the previous read-back still holds
        snapshot_phi(array, &program.encoding)
    };
    Ok(AdaptOutcome {
        phi,
        spec: new_spec,
        targets,
        cells_touched,
        energy_pj: array.ledger().total_pj() - before,
    })
}

/// One row of the adaptive-loop trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iteration: usize,
    pub gamma: f64,
    pub tier: Tier,
    pub updated: bool,
    pub cells_touched: usize,
    pub energy_pj: f64,
    pub tnmse_so_far_db: f64,
}
