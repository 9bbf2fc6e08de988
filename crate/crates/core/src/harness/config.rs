//! Experiment configuration, read from TOML.
//!
//! Every key has a default, so an empty file is a valid configuration. The
//! grammar is documented in the README.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::adaptive::EnergyBudget;
use crate::cs::BpOptions;
use crate::error::{Error, Result};
use crate::matrix::{MatrixKind, ProgramConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SignalConfig {
    pub n: usize,
    /// k / n; k is rounded to the nearest integer.
    pub sparsity_rate: f64,
    /// Share of indices inside the region of interest.
    pub roi_fraction: f64,
    /// Expected share of nonzeros that fall inside the region of interest.
    pub roi_in_fraction: f64,
    /// Probability a support index survives to the next frame.
    pub persistence: f64,
    pub frames: usize,
    /// Additive Gaussian noise on each measurement.
    pub noise_sigma: f64,
}

impl Default for SignalConfig {
    fn default() -> Self {
        Self {
            n: 400,
            sparsity_rate: 0.1,
            roi_fraction: 0.1,
            roi_in_fraction: 0.7,
            persistence: 0.9,
            frames: 50,
            noise_sigma: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatrixConfig {
    pub kind: MatrixKind,
    pub m_list: Vec<usize>,
    pub pulse_probability: f64,
    pub max_pulses: u32,
    pub verify: bool,
}

impl Default for MatrixConfig {
    fn default() -> Self {
        Self {
            kind: MatrixKind::Gaussian,
            m_list: vec![40, 60, 80, 100],
            pulse_probability: 0.3,
            max_pulses: 40,
            verify: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdaptiveConfig {
    /// Run the closed-loop mode next to the two static ones.
    pub enabled: bool,
    pub e_budget_pj: f64,
    pub e_critical_pj: f64,
    pub total_budget_pj: Option<f64>,
    pub u1: usize,
    pub u2: usize,
    /// Weight of the newest support indicator in the RoI estimate.
    pub ema_alpha: f64,
    /// Support threshold as a fraction of the largest reconstructed magnitude.
    pub support_threshold: f64,
}

impl Default for AdaptiveConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            e_budget_pj: 20_000.0,
            e_critical_pj: 5_000.0,
            total_budget_pj: None,
            u1: 5,
            u2: 20,
            ema_alpha: 0.3,
            support_threshold: 0.1,
        }
    }
}

impl AdaptiveConfig {
    pub fn budget(&self) -> Result<EnergyBudget> {
        EnergyBudget::new(self.e_budget_pj, self.e_critical_pj, self.total_budget_pj)
            .map_err(|e| Error::config("adaptive.e_budget_pj", e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub rho: f64,
    /// Start each frame's solve from the previous frame's estimate.
    pub warm_start: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: 1e-3,
            max_iter: 2000,
            rho: 1.0,
            warm_start: false,
        }
    }
}

impl SolverConfig {
    pub fn options(&self) -> BpOptions {
        BpOptions {
            tol: self.tol,
            max_iter: self.max_iter,
            rho: self.rho,
            ..BpOptions::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub trials: usize,
    pub master_seed: u64,
    pub output_dir: PathBuf,
    /// 0 uses every core, 1 runs sequentially.
    pub workers: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            trials: 100,
            master_seed: 2020,
            output_dir: PathBuf::from("runs/latest"),
            workers: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub signal: SignalConfig,
    pub matrix: MatrixConfig,
    pub adaptive: AdaptiveConfig,
    pub solver: SolverConfig,
    pub run: RunConfig,
}

fn check(ok: bool, field: &str, reason: impl Into<String>) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::config(field, reason))
    }
}

fn unit_interval(x: f64) -> bool {
    (0.0..=1.0).contains(&x)
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| {
            let field = e
                .span()
                .map(|s| format!("byte {}..{}", s.start, s.end))
                .unwrap_or_else(|| "file".into());
            Error::config(field, e.message().trim().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable")
    }

    /// Number of nonzeros per frame.
    pub fn k(&self) -> usize {
        (self.signal.sparsity_rate * self.signal.n as f64).round() as usize
    }

    pub fn m_max(&self) -> usize {
        self.matrix.m_list.iter().copied().max().unwrap_or(0)
    }

    pub fn program_config(&self) -> ProgramConfig {
        ProgramConfig {
            pulse_probability: self.matrix.pulse_probability,
            max_pulses: self.matrix.max_pulses,
            verify: self.matrix.verify,
            ..ProgramConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.signal;
        check(s.n > 0, "signal.n", "must be positive")?;
        check(s.frames > 0, "signal.frames", "must be positive")?;
        check(
            s.sparsity_rate > 0.0 && s.sparsity_rate <= 1.0,
            "signal.sparsity_rate",
            "must be in (0, 1]",
        )?;
        check(self.k() >= 1, "signal.sparsity_rate", "rounds to k = 0 nonzeros")?;
        check(
            s.roi_fraction > 0.0 && s.roi_fraction <= 1.0,
            "signal.roi_fraction",
            "must be in (0, 1]",
        )?;
        check(unit_interval(s.roi_in_fraction), "signal.roi_in_fraction", "must be in [0, 1]")?;
        check(unit_interval(s.persistence), "signal.persistence", "must be in [0, 1]")?;
        check(
            s.noise_sigma >= 0.0 && s.noise_sigma.is_finite(),
            "signal.noise_sigma",
            "must be finite and >= 0",
        )?;

        let m = &self.matrix;
        check(!m.m_list.is_empty(), "matrix.m_list", "must not be empty")?;
        for &mi in &m.m_list {
            check(mi > 0, "matrix.m_list", "every M must be positive")?;
            check(mi <= s.n, "matrix.m_list", format!("M = {mi} exceeds n = {}", s.n))?;
        }
        let mut sorted = m.m_list.clone();
        sorted.sort_unstable();
        sorted.dedup();
        check(sorted.len() == m.m_list.len(), "matrix.m_list", "contains duplicates")?;
        check(
            m.pulse_probability > 0.0 && m.pulse_probability < 1.0,
            "matrix.pulse_probability",
            "must be in (0, 1)",
        )?;
        check(m.max_pulses > 0, "matrix.max_pulses", "must be positive")?;

        let a = &self.adaptive;
        check(
            a.e_critical_pj > 0.0 && a.e_critical_pj < a.e_budget_pj,
            "adaptive.e_critical_pj",
            "need 0 < e_critical_pj < e_budget_pj",
        )?;
        if let Some(t) = a.total_budget_pj {
            check(t >= 0.0, "adaptive.total_budget_pj", "must be >= 0")?;
        }
        check(a.u1 > 0, "adaptive.u1", "must be positive")?;
        check(a.u2 > 0, "adaptive.u2", "must be positive")?;
        check(
            a.ema_alpha > 0.0 && a.ema_alpha <= 1.0,
            "adaptive.ema_alpha",
            "must be in (0, 1]",
        )?;
        check(
            a.support_threshold > 0.0 && a.support_threshold < 1.0,
            "adaptive.support_threshold",
            "must be in (0, 1)",
        )?;

        let v = &self.solver;
        check(v.tol > 0.0, "solver.tol", "must be positive")?;
        check(v.max_iter > 0, "solver.max_iter", "must be positive")?;
        check(v.rho > 0.0, "solver.rho", "must be positive")?;

        check(self.run.trials >= 1, "run.trials", "must be at least 1")?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn field_of(err: Error) -> String {
        match err {
            Error::Config { field, .. } => field,
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = ExperimentConfig::from_toml("").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        assert_eq!(cfg.k(), 40);
        assert_eq!(cfg.m_max(), 100);
    }

    #[test]
    fn round_trips_through_toml() {
        let mut cfg = ExperimentConfig::default();
        cfg.matrix.kind = MatrixKind::Bernoulli;
        cfg.adaptive.total_budget_pj = Some(1e6);
        cfg.run.output_dir = "x/y".into();
        assert_eq!(ExperimentConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn partial_sections_keep_other_defaults() {
        let cfg = ExperimentConfig::from_toml(
            "[signal]\nn = 64\n\n[matrix]\nkind = \"bernoulli\"\nm_list = [16, 32]\n",
        )
        .unwrap();
        assert_eq!(cfg.signal.n, 64);
        assert_eq!(cfg.signal.frames, 50);
        assert_eq!(cfg.matrix.kind, MatrixKind::Bernoulli);
        assert_eq!(cfg.matrix.m_list, vec![16, 32]);
    }

    #[test]
    fn invalid_fields_are_named() {
        let cases = [
            ("[signal]\nn = 0", "signal.n"),
            ("[matrix]\nm_list = [40, 500]", "matrix.m_list"),
            ("[matrix]\nm_list = []", "matrix.m_list"),
            ("[run]\ntrials = 0", "run.trials"),
            ("[adaptive]\ne_critical_pj = 1e9", "adaptive.e_critical_pj"),
            ("[signal]\nsparsity_rate = 0.0001", "signal.sparsity_rate"),
            ("[solver]\ntol = -1.0", "solver.tol"),
        ];
        for (text, field) in cases {
            let err = ExperimentConfig::from_toml(text).unwrap_err();
            assert_eq!(field_of(err), field, "{text}");
        }
    }

    #[test]
    fn unknown_keys_and_bad_types_are_config_errors() {
        assert!(matches!(
            ExperimentConfig::from_toml("[signal]\nnn = 3"),
            Err(Error::Config { .. })
        ));
        assert!(matches!(
            ExperimentConfig::from_toml("[signal]\nn = \"many\""),
            Err(Error::Config { .. })
        ));
    }

    #[test]
    fn infinite_budget_is_accepted() {
        let cfg = ExperimentConfig::from_toml("[adaptive]\ne_budget_pj = inf").unwrap();
        assert!(cfg.adaptive.budget().unwrap().e_budget.is_infinite());
    }
}
