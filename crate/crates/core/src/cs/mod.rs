//! Compressive-sensing core: signal model, sampling, recovery and metrics.

pub mod bp;
pub mod metrics;
pub mod omp;
pub mod sampling;
pub mod signal;

pub use bp::{reconstruct_bp, BasisPursuit, BpOptions};
pub use metrics::{frame_nmse, tnmse, tnmse_from_ratios, TNMSE_FLOOR_DB};
pub use omp::{reconstruct_omp, AtomSelect, OmpResult};
pub use sampling::{sample, Measurements, SamplePath};
pub use signal::{generate_frame, RoiProfile, SparseFrame};

/// A recovered signal. `residual_norm` is `||y - Phi x_hat||_2`.
#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    pub x_hat: Vec<f64>,
    pub iterations: usize,
    pub residual_norm: f64,
    pub converged: bool,
    pub rank_deficient: bool,
}

impl Reconstruction {
    /// Indices with `|x_hat| > threshold`.
    pub fn support(&self, threshold: f64) -> Vec<usize> {
        self.x_hat
            .iter()
            .enumerate()
            .filter(|(_, v)| v.abs() > threshold)
            .map(|(i, _)| i)
            .collect()
    }
}
