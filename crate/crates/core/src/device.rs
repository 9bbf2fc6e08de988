//! Behavioral model of a stochastic SOT-MRAM multibit cell (SMC).
//!
//! A cell is a bank of [`MAGNETS_PER_CELL`] nanomagnets sharing one spin-Hall
//! write channel. Set pulses flip each magnet still at `-1` to `+1` with a
//! per-pulse probability that grows with drive strength; flipped magnets stay
//! put. A reset pulse returns every magnet to `-1` deterministically. The
//! read path sees the parallel combination, modeled as a conductance linear
//! in the number of `+1` magnets.

use rand::Rng;

use crate::error::{Error, Result};

/// Magnets per cell (4-bit cell, 2^4 magnets).
pub const MAGNETS_PER_CELL: usize = 16;
/// Highest raw level (all magnets at +1).
pub const MAX_LEVEL: u8 = MAGNETS_PER_CELL as u8;
/// Conductance at level 0 (5 kΩ).
pub const G_MIN: f64 = 1.0 / 5000.0;
/// Conductance at level 16 (1 kΩ).
pub const G_MAX: f64 = 1.0 / 1000.0;
/// Conductance increment per switched magnet.
pub const G_STEP: f64 = (G_MAX - G_MIN) / MAGNETS_PER_CELL as f64;

/// Reset pulse width in µs.
pub const RESET_WIDTH_US: f64 = 50.0;
/// Reset drive amplitude in mA, well into the deterministic switching regime.
pub const RESET_AMPLITUDE_MA: f64 = 14.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum NanomagnetState {
    #[default]
    Down,
    Up,
}

impl NanomagnetState {
    pub fn polarity(self) -> i8 {
        match self {
            NanomagnetState::Down => -1,
            NanomagnetState::Up => 1,
        }
    }
}

/// One multibit cell. `level` always equals the number of `Up` magnets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct SmcCell {
    magnets: [NanomagnetState; MAGNETS_PER_CELL],
    level: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PulseMode {
    Set,
    Reset,
}

/// A train of identical write pulses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulseSpec {
    pub amplitude_ma: f64,
    pub width_us: f64,
    pub count: u32,
    pub mode: PulseMode,
}

impl PulseSpec {
    pub fn set(amplitude_ma: f64, width_us: f64, count: u32) -> Self {
        Self {
            amplitude_ma,
            width_us,
            count,
            mode: PulseMode::Set,
        }
    }

    /// The single deterministic reset pulse.
    pub fn reset() -> Self {
        Self {
            amplitude_ma: RESET_AMPLITUDE_MA,
            width_us: RESET_WIDTH_US,
            count: 1,
            mode: PulseMode::Reset,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.amplitude_ma.is_finite() || self.amplitude_ma < 0.0 {
            return Err(Error::InvalidPulse(format!(
                "amplitude {} mA must be finite and >= 0",
                self.amplitude_ma
            )));
        }
        if !self.width_us.is_finite() || self.width_us <= 0.0 {
            return Err(Error::InvalidPulse(format!(
                "width {} us must be finite and > 0",
                self.width_us
            )));
        }
        if self.mode == PulseMode::Reset && self.width_us != RESET_WIDTH_US {
            return Err(Error::InvalidPulse(format!(
                "reset pulses are fixed at {RESET_WIDTH_US} us"
            )));
        }
        Ok(())
    }
}

/// Logistic per-pulse switching model in effective drive
/// `amplitude * width / width_ref`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwitchingModel {
    pub i50_ma: f64,
    pub slope: f64,
    pub width_ref_us: f64,
}

impl Default for SwitchingModel {
    fn default() -> Self {
        Self {
            i50_ma: 6.97,
            slope: 2.0,
            width_ref_us: 20.0,
        }
    }
}

impl SwitchingModel {
    /// Per-pulse probability that a `-1` magnet flips under `pulse`.
    pub fn switching_probability(&self, pulse: &PulseSpec) -> Result<f64> {
        if pulse.mode != PulseMode::Set {
            return Err(Error::InvalidPulse(
                "switching probability is defined for set pulses only".into(),
            ));
        }
        pulse.validate()?;
        let drive = pulse.amplitude_ma * (pulse.width_us / self.width_ref_us);
        Ok(logistic(self.slope * (drive - self.i50_ma)))
    }

    /// Amplitude that gives per-pulse probability `p` at `width_us`.
    pub fn amplitude_for_probability(&self, p: f64, width_us: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "target probability {p} must lie strictly inside (0, 1)"
            )));
        }
        let logit = (p / (1.0 - p)).ln();
        let amplitude = (self.i50_ma + logit / self.slope) * self.width_ref_us / width_us;
        if amplitude < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "probability {p} needs a negative drive under this model"
            )));
        }
        Ok(amplitude)
    }
}

fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Conductance of a cell holding `level` switched magnets.
pub fn level_conductance(level: u8) -> f64 {
    G_MIN + f64::from(level) * G_STEP
}

impl SmcCell {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn level(&self) -> u8 {
        self.level
    }

    pub fn magnets(&self) -> &[NanomagnetState; MAGNETS_PER_CELL] {
        &self.magnets
    }

    pub fn conductance(&self) -> f64 {
        level_conductance(self.level)
    }

    /// Drives all magnets to `-1`. Consumes no randomness.
    pub fn reset(&mut self) {
        self.magnets = [NanomagnetState::Down; MAGNETS_PER_CELL];
        self.level = 0;
    }

    /// Applies a set pulse train under `model`.
    pub fn apply_set_pulses<R: Rng + ?Sized>(
        &mut self,
        pulse: &PulseSpec,
        model: &SwitchingModel,
        rng: &mut R,
    ) -> Result<()> {
        let p = model.switching_probability(pulse)?;
        self.apply_with_probability(p, pulse.count, rng);
        Ok(())
    }

    /// Applies a train whose pulses may differ in amplitude or width.
    pub fn apply_pulse_sequence<R: Rng + ?Sized>(
        &mut self,
        pulses: &[PulseSpec],
        model: &SwitchingModel,
        rng: &mut R,
    ) -> Result<()> {
        for pulse in pulses {
            match pulse.mode {
                PulseMode::Set => self.apply_set_pulses(pulse, model, rng)?,
                PulseMode::Reset => {
                    pulse.validate()?;
                    self.reset();
                }
            }
        }
        Ok(())
    }

    /// `count` pulses at per-pulse flip probability `p`. One uniform draw is
    /// consumed per `-1` magnet per pulse.
    pub fn apply_with_probability<R: Rng + ?Sized>(&mut self, p: f64, count: u32, rng: &mut R) {
        for _ in 0..count {
            if self.level == MAX_LEVEL {
                break;
            }
            for magnet in self.magnets.iter_mut() {
                if *magnet == NanomagnetState::Down && rng.random::<f64>() < p {
                    *magnet = NanomagnetState::Up;
                    self.level += 1;
                }
            }
        }
    }
}

/// Closed-form mean level after `pulses` pulses at probability `p` from reset.
pub fn expected_level(p: f64, pulses: u32) -> f64 {
    MAGNETS_PER_CELL as f64 * (1.0 - (1.0 - p).powi(pulses as i32))
}
