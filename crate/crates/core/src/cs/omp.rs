//! Orthogonal matching pursuit with pluggable atom selection.

use nalgebra::{DMatrix, DVector};

use crate::crossbar::{wta, CrossbarArray};
use crate::error::{Error, Result};
use crate::matrix::MeasurementMatrix;

use super::Reconstruction;

/// How the next atom is chosen.
#[derive(Debug)]
pub enum AtomSelect<'a> {
    /// Digital `argmax |Phi^T r|`, ties to the lowest index.
    Scan,
    /// `Phi^T r` on a transposed copy of the array, then WTA over `|currents|`.
    CrossbarWta(&'a mut CrossbarArray),
}

/// OMP output, including the order in which atoms were picked.
#[derive(Debug, Clone, PartialEq)]
pub struct OmpResult {
    pub reconstruction: Reconstruction,
    pub atoms: Vec<usize>,
}

fn scan_argmax_abs(scores: &[f64]) -> usize {
    let mut best = 0;
    for i in 1..scores.len() {
        if scores[i].abs() > scores[best].abs() {
            best = i;
        }
    }
    best
}

/// Least squares on the selected columns. Falls back to a pseudo-inverse when
/// the QR factor is numerically singular; the second value reports that.
fn refit(phi: &DMatrix<f64>, atoms: &[usize], y: &DVector<f64>) -> (DVector<f64>, bool) {
    let sub = phi.select_columns(atoms);
    let qr = sub.clone().qr();
    let (q, r) = qr.unpack();
    let diag_max = r.diagonal().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let singular = r
        .diagonal()
        .iter()
        .any(|v| v.abs() <= 1e-12 * diag_max.max(f64::MIN_POSITIVE));
    if !singular {
        let qty = q.transpose() * y;
        if let Some(c) = r.solve_upper_triangular(&qty) {
            return (c, false);
        }
    }
    let pinv = sub
        .pseudo_inverse(1e-12)
        .unwrap_or_else(|_| DMatrix::zeros(atoms.len(), y.len()));
    (pinv * y, true)
}

pub fn reconstruct_omp(
    phi: &MeasurementMatrix,
    y: &[f64],
    k: usize,
    mut select: AtomSelect<'_>,
) -> Result<OmpResult> {
    if k == 0 {
        return Err(Error::InvalidArgument("OMP needs k >= 1".into()));
    }
    let (m, n) = phi.values.shape();
    if y.len() != m {
        return Err(Error::LengthMismatch {
            what: "measurements",
            expected: m,
            got: y.len(),
        });
    }
    if let AtomSelect::CrossbarWta(array) = &select {
        if array.rows() != n {
            return Err(Error::LengthMismatch {
                what: "transposed crossbar rows",
                expected: n,
                got: array.rows(),
            });
        }
    }
    let y_vec = DVector::from_column_slice(y);
    let y_norm = y_vec.norm();
    let mut residual = y.to_vec();
    let mut atoms: Vec<usize> = Vec::new();
    let mut coefs = DVector::zeros(0);
    let mut rank_deficient = false;

    for _ in 0..k.min(n) {
        let res_norm = residual.iter().map(|v| v * v).sum::<f64>().sqrt();
        if res_norm <= 1e-12 * y_norm || y_norm == 0.0 {
            break;
        }
        let atom = match &mut select {
            AtomSelect::Scan => scan_argmax_abs(&phi.matvec_transpose(&residual)),
            AtomSelect::CrossbarWta(array) => {
                let mut input = vec![0.0; array.cols()];
                for (i, &r) in phi.row_index.iter().enumerate() {
                    input[r] = residual[i];
                }
                let out = array.vmm_differential(&input, &phi.encoding)?;
                wta(&out.map(f64::abs))?
            }
        };
        if atoms.contains(&atom) {
            break;
        }
        atoms.push(atom);
        let (c, singular) = refit(&phi.values, &atoms, &y_vec);
        rank_deficient |= singular;
        coefs = c;
        let fit = phi.values.select_columns(&atoms) * &coefs;
        residual = (&y_vec - fit).as_slice().to_vec();
    }

    let mut x_hat = vec![0.0; n];
    for (&a, &c) in atoms.iter().zip(coefs.iter()) {
        x_hat[a] = c;
    }
    let fitted = &phi.values * DVector::from_column_slice(&x_hat);
    let residual_norm = (&y_vec - fitted).norm();
    Ok(OmpResult {
        reconstruction: Reconstruction {
            x_hat,
            iterations: atoms.len(),
            residual_norm,
            converged: true,
            rank_deficient,
        },
        atoms,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crossbar::DifferentialEncoding;
    use crate::energy::EnergyParams;
    use crate::matrix::{program_matrix, target_levels, MatrixKind, MatrixSpec, ProgramConfig};
    use crate::rng::{seeded, Domain, StreamKey};
    use rand::seq::index;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn dense_phi(m: usize, n: usize, seed: u64) -> MeasurementMatrix {
        let mut rng = seeded(seed);
        MeasurementMatrix {
            values: DMatrix::from_fn(m, n, |_, _| rng.sample::<f64, _>(StandardNormal)),
            source_levels: vec![8; m * n],
            row_index: (0..m).collect(),
            encoding: DifferentialEncoding::default(),
        }
    }

    #[test]
    fn single_column_is_found_in_one_step() {
        let phi = dense_phi(10, 25, 1);
        let y: Vec<f64> = phi.values.column(13).iter().copied().collect();
        let out = reconstruct_omp(&phi, &y, 3, AtomSelect::Scan).unwrap();
        assert_eq!(out.atoms, vec![13]);
        assert!((out.reconstruction.x_hat[13] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn exact_recovery_with_ample_measurements() {
        let (m, n, k) = (32, 64, 4);
        for seed in 0..20 {
            let phi = dense_phi(m, n, 10 + seed);
            let mut rng = seeded(500 + seed);
            let mut x = vec![0.0; n];
            for i in index::sample(&mut rng, n, k) {
                x[i] = rng.sample::<f64, _>(StandardNormal) + 0.5f64.copysign(rng.random::<f64>() - 0.5);
            }
            let y = phi.matvec(&x);
            let out = reconstruct_omp(&phi, &y, k, AtomSelect::Scan).unwrap();
            for (a, b) in out.reconstruction.x_hat.iter().zip(&x) {
                assert!((a - b).abs() < 1e-8, "seed {seed}");
            }
        }
    }

    #[test]
    fn crossbar_wta_selects_the_same_atoms() {
        let (m, n, k) = (20, 48, 5);
        let mut array = CrossbarArray::new(m, n, EnergyParams::default()).unwrap();
        let targets = target_levels(&MatrixSpec::uniform(MatrixKind::Gaussian, m, n), &mut seeded(3));
        let key = StreamKey::new(3, Domain::Programming, 0);
        let phi = program_matrix(&mut array, &targets, &ProgramConfig::default(), &key)
            .unwrap()
            .phi;
        let mut transposed = array.transposed();
        for seed in 0..10 {
            let mut rng = seeded(seed);
            let mut x = vec![0.0; n];
            for i in index::sample(&mut rng, n, k) {
                x[i] = rng.sample(StandardNormal);
            }
            let y = phi.matvec(&x);
            let scan = reconstruct_omp(&phi, &y, k, AtomSelect::Scan).unwrap();
            let wta = reconstruct_omp(&phi, &y, k, AtomSelect::CrossbarWta(&mut transposed)).unwrap();
            assert_eq!(scan.atoms, wta.atoms);
            assert_eq!(scan.reconstruction, wta.reconstruction);
        }
        assert!(transposed.ledger().vmm_pj() > 0.0);
    }

    #[test]
    fn duplicated_columns_trigger_pseudo_inverse() {
        let mut phi = dense_phi(6, 8, 4);
        let col = phi.values.column(2).clone_owned();
        phi.values.column_mut(5).copy_from(&col);
        let atoms = [2, 5];
        let y = DVector::from_column_slice(&phi.matvec(&[0., 0., 1., 0., 0., 0., 0., 0.]));
        let (_, singular) = refit(&phi.values, &atoms, &y);
        assert!(singular);
    }

    #[test]
    fn argument_errors() {
        let phi = dense_phi(4, 6, 5);
        assert!(reconstruct_omp(&phi, &[0.0; 4], 0, AtomSelect::Scan).is_err());
        assert!(reconstruct_omp(&phi, &[0.0; 3], 1, AtomSelect::Scan).is_err());
        let out = reconstruct_omp(&phi, &[0.0; 4], 2, AtomSelect::Scan).unwrap();
        assert!(out.atoms.is_empty());
    }
}
