use rand::Rng;
use rand_distr::StandardNormal;

use crate::crossbar::CrossbarArray;
use crate::error::{Error, Result};
use crate::matrix::MeasurementMatrix;

use super::signal::SparseFrame;

#[derive(Debug, Clone, PartialEq)]
pub struct Measurements {
    pub y: Vec<f64>,
    pub noise_sigma: f64,
}

/// How `y = Phi x` is evaluated.
#[derive(Debug)]
pub enum SamplePath<'a> {
    /// Digital product with the realized matrix.
    IdealMatmul,
    /// Analog VMM on the programmed array, read differentially.
    Crossbar(&'a mut CrossbarArray),
}

pub fn sample<R: Rng + ?Sized>(
    phi: &MeasurementMatrix,
    x: &SparseFrame,
    noise_sigma: f64,
    rng: &mut R,
    via: SamplePath<'_>,
) -> Result<Measurements> {
    if x.n != phi.ncols() {
        return Err(Error::LengthMismatch {
            what: "signal",
            expected: phi.ncols(),
            got: x.n,
        });
    }
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "noise sigma {noise_sigma} must be finite and >= 0"
        )));
    }
    let dense = x.dense();
    let mut y = match via {
        SamplePath::IdealMatmul => phi.matvec(&dense),
        SamplePath::Crossbar(array) => {
            if array.cols() != phi.ncols() {
                return Err(Error::LengthMismatch {
                    what: "crossbar columns",
                    expected: phi.ncols(),
                    got: array.cols(),
                });
            }
            let enabled: Vec<usize> = (0..array.rows()).filter(|&r| array.row_enabled()[r]).collect();
            if enabled != phi.row_index {
                return Err(Error::LengthMismatch {
                    what: "enabled crossbar rows",
                    expected: phi.row_index.len(),
                    got: enabled.len(),
                });
            }
            let out = array.vmm_differential(&dense, &phi.encoding)?;
            phi.row_index.iter().map(|&r| out.currents[r]).collect()
        }
    };
    if noise_sigma > 0.0 {
        for v in y.iter_mut() {
            *v += noise_sigma * rng.sample::<f64, _>(StandardNormal);
        }
    }
    Ok(Measurements { y, noise_sigma })
}
