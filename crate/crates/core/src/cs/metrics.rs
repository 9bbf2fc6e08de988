//! Time-averaged normalized mean squared error (TNMSE).

use crate::error::{Error, Result};

use super::signal::SparseFrame;
use super::Reconstruction;

/// Reported value for a perfect reconstruction.
pub const TNMSE_FLOOR_DB: f64 = -120.0;

/// `||(x_hat - x)|mask||^2 / ||x|mask||^2`, or `None` when the restricted
/// reference is all zero.
pub fn frame_nmse(truth: &SparseFrame, x_hat: &[f64], mask: Option<&[bool]>) -> Option<f64> {
    let x = truth.dense();
    let (mut err, mut reference) = (0.0, 0.0);
    for i in 0..x.len() {
        if mask.is_some_and(|m| !m[i]) {
            continue;
        }
        err += (x_hat[i] - x[i]).powi(2);
        reference += x[i] * x[i];
    }
    (reference > 0.0).then(|| err / reference)
}

/// `10 log10(mean(ratios))`, floored at [`TNMSE_FLOOR_DB`].
pub fn tnmse_from_ratios(ratios: &[f64]) -> Result<f64> {
    if ratios.is_empty() {
        return Err(Error::UndefinedMetric);
    }
    let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
    Ok(to_db(mean))
}

pub fn to_db(ratio: f64) -> f64 {
    if ratio <= 0.0 {
        TNMSE_FLOOR_DB
    } else {
        (10.0 * ratio.log10()).max(TNMSE_FLOOR_DB)
    }
}

/// TNMSE in dB over a sequence of frames, optionally restricted to `mask`.
/// Frames whose restricted reference is zero are skipped with a warning.
pub fn tnmse(
    truth: &[SparseFrame],
    recons: &[Reconstruction],
    restrict: Option<&[bool]>,
) -> Result<f64> {
    if truth.len() != recons.len() || truth.is_empty() {
        return Err(Error::LengthMismatch {
            what: "reconstructions",
            expected: truth.len(),
            got: recons.len(),
        });
    }
    let mut ratios = Vec::with_capacity(truth.len());
    for (frame, rec) in truth.iter().zip(recons) {
        match frame_nmse(frame, &rec.x_hat, restrict) {
            Some(r) => ratios.push(r),
            None => log::warn!(
                "frame {} has no reference energy on the metric support; skipped",
                frame.frame_index
            ),
        }
    }
    tnmse_from_ratios(&ratios)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn frame(values: &[(usize, f64)], n: usize) -> SparseFrame {
        SparseFrame {
            n,
            support: values.iter().map(|p| p.0).collect(),
            values: values.iter().map(|p| p.1).collect(),
            frame_index: 0,
        }
    }

    fn rec(x_hat: Vec<f64>) -> Reconstruction {
        Reconstruction {
            x_hat,
            iterations: 0,
            residual_norm: 0.0,
            converged: true,
            rank_deficient: false,
        }
    }

    #[test]
    fn perfect_and_zero_reconstructions() {
        let f = frame(&[(1, 2.0), (3, -1.0)], 5);
        assert_eq!(tnmse(&[f.clone()], &[rec(f.dense())], None).unwrap(), TNMSE_FLOOR_DB);
        assert_eq!(tnmse(&[f], &[rec(vec![0.0; 5])], None).unwrap(), 0.0);
    }

    #[test]
    fn two_frame_average() {
        // ratios 0.01 and 0.1
        let a = frame(&[(0, 1.0)], 2);
        let b = frame(&[(1, 1.0)], 2);
        let ra = rec(vec![1.1, 0.0]);
        let rb = rec(vec![0.0, 1.0 + 0.1f64.sqrt()]);
        let db = tnmse(&[a, b], &[ra, rb], None).unwrap();
        assert_relative_eq!(db, 10.0 * 0.055f64.log10(), epsilon = 1e-12);
        assert!((db + 12.60).abs() < 0.005);
    }

    #[test]
    fn restriction_and_skipping() {
        let mask = [true, true, false, false];
        let inside = frame(&[(0, 1.0), (3, 5.0)], 4);
        let outside = frame(&[(2, 1.0)], 4);
        let ri = rec(vec![0.5, 0.0, 0.0, 0.0]);
        let ro = rec(vec![0.0; 4]);
        let db = tnmse(&[inside.clone(), outside.clone()], &[ri, ro.clone()], Some(&mask)).unwrap();
        assert_relative_eq!(db, 10.0 * 0.25f64.log10(), epsilon = 1e-12);
        assert!(matches!(
            tnmse(&[outside], &[ro], Some(&mask)),
            Err(Error::UndefinedMetric)
        ));
        assert!(tnmse(&[inside], &[], None).is_err());
    }

    #[test]
    fn noisier_estimates_score_worse() {
        use crate::rng::seeded;
        use rand::Rng;
        use rand_distr::StandardNormal;
        let mut rng = seeded(1);
        let frames: Vec<SparseFrame> = (0..20)
            .map(|t| {
                let mut f = frame(&[(2, 1.0), (7, -2.0), (11, 0.5)], 16);
                f.frame_index = t;
                f
            })
            .collect();
        let mut noisy = |sigma: f64| -> f64 {
            let recs: Vec<Reconstruction> = frames
                .iter()
                .map(|f| {
                    rec(f
                        .dense()
                        .iter()
                        .map(|v| v + sigma * rng.sample::<f64, _>(StandardNormal))
                        .collect())
                })
                .collect();
            tnmse(&frames, &recs, None).unwrap()
        };
        let low = noisy(0.01);
        let high = noisy(0.1);
        assert!(high > low + 10.0, "{low} {high}");
    }
}
