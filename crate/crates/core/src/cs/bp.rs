//! Basis pursuit, `min ||x||_1 s.t. Phi x = y`, by ADMM.
//!
//! Splitting `x = z` with `x` constrained to the affine set `{Phi x = y}`
//! and `z` carrying the l1 term gives the iteration
//!
//! ```text
//! x <- Proj(z - u)
//! z <- soft(a x + (1 - a) z + u, 1/rho)
//! u <- u + a x + (1 - a) z_old - z
//! ```
//!
//! with over-relaxation `a`. Writing `Phi = L Q^T` with `Q` orthonormal
//! (`L` the Cholesky factor of `Phi Phi^T`), the projection is
//! `v - Q (Q^T v - L^-1 y)`. `Q` is stored row by row so one sweep computes
//! the projection for each coordinate, the elementwise updates, and the
//! next `Q^T v`. `rho` is adapted by residual balancing, which needs no
//! refactorization because the projection does not depend on it.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

use super::Reconstruction;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BpOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub rho: f64,
    /// Residual balancing: rescale `rho` by `tau` when one residual exceeds
    /// the other by more than `mu`. Checked every `adapt_every` iterations
    /// up to `adapt_until`, then frozen so the iteration can settle.
    pub adapt_rho: bool,
    pub mu: f64,
    pub tau: f64,
    pub adapt_every: usize,
    pub adapt_until: usize,
    /// Over-relaxation factor in `(0, 2)`.
    pub relaxation: f64,
}

impl Default for BpOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iter: 2000,
            rho: 1.0,
            adapt_rho: true,
            mu: 10.0,
            tau: 2.0,
            adapt_every: 10,
            adapt_until: 200,
            relaxation: 1.0,
        }
    }
}

/// A matrix prepared for repeated basis-pursuit solves.
#[derive(Debug, Clone)]
pub struct BasisPursuit {
    a: DMatrix<f64>,
    /// Row-major `n x r` orthonormal basis of the row space.
    q: Vec<f64>,
    r: usize,
    /// Maps `y` to the row-space coordinates of the affine set.
    coord: DMatrix<f64>,
    rank_deficient: bool,
}

impl BasisPursuit {
    pub fn new(phi: &DMatrix<f64>) -> Result<Self> {
        if phi.nrows() == 0 || phi.iter().all(|v| *v == 0.0) {
            return Err(Error::InvalidArgument("basis pursuit needs a nonzero matrix".into()));
        }
        let (m, n) = phi.shape();
        let gram = phi * phi.transpose();
        let chol = (m <= n)
            .then(|| gram.clone().cholesky())
            .flatten()
            .filter(|c| {
                // a tiny pivot means numerically dependent rows
                let d = c.l_dirty().diagonal();
                let max = d.iter().fold(0.0f64, |a, v| a.max(v.abs()));
                d.iter().all(|v| v.abs() > 1e-7 * max)
            });
        let (qt, coord, rank_deficient) = match chol {
            Some(chol) => {
                let l = chol.l();
                let l_inv = l
                    .clone()
                    .try_inverse()
                    .ok_or_else(|| Error::InvalidArgument("singular Cholesky factor".into()))?;
                (&l_inv * phi, l_inv, false)
            }
            None => {
                let svd = phi.clone().svd(true, true);
                let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
                let smax = svd.singular_values.max();
                let keep: Vec<usize> = (0..svd.singular_values.len())
                    .filter(|&i| svd.singular_values[i] > 1e-10 * smax)
                    .collect();
                let qt = DMatrix::from_fn(keep.len(), n, |i, j| vt[(keep[i], j)]);
                let coord = DMatrix::from_fn(keep.len(), m, |i, j| {
                    u[(j, keep[i])] / svd.singular_values[keep[i]]
                });
                (qt, coord, true)
            }
        };
        let r = qt.nrows();
        let mut q = vec![0.0; n * r];
        for i in 0..n {
            for j in 0..r {
                q[i * r + j] = qt[(j, i)];
            }
        }
        Ok(Self {
            a: phi.clone(),
            q,
            r,
            coord,
            rank_deficient,
        })
    }

    pub fn rank_deficient(&self) -> bool {
        self.rank_deficient
    }

    pub fn solve(&self, y: &[f64], opts: &BpOptions) -> Result<Reconstruction> {
        self.solve_from(y, opts, None)
    }

    /// Solves starting from `warm` (a previous solution) instead of zero.
    pub fn solve_from(
        &self,
        y: &[f64],
        opts: &BpOptions,
        warm: Option<&[f64]>,
    ) -> Result<Reconstruction> {
        let (m, n) = self.a.shape();
        if y.len() != m {
            return Err(Error::LengthMismatch {
                what: "measurements",
                expected: m,
                got: y.len(),
            });
        }
        if !(opts.tol > 0.0
            && opts.max_iter > 0
            && opts.rho > 0.0
            && opts.relaxation > 0.0
            && opts.relaxation < 2.0)
        {
            return Err(Error::InvalidArgument(
                "tol, max_iter and rho must be positive and relaxation in (0, 2)".into(),
            ));
        }
        let y_vec = DVector::from_column_slice(y);
        let y_norm = y_vec.norm();
        if y_norm == 0.0 {
            return Ok(Reconstruction {
                x_hat: vec![0.0; n],
                iterations: 0,
                residual_norm: 0.0,
                converged: true,
                rank_deficient: self.rank_deficient,
            });
        }
        let r = self.r;
        let d = (&self.coord * &y_vec).as_slice().to_vec();
        let alpha = opts.relaxation;

        let mut z = match warm {
            Some(w) if w.len() == n => w.to_vec(),
            _ => vec![0.0; n],
        };
        let mut u = vec![0.0; n];
        // w = Q^T v - d for the current v = z - u
        let mut w = vec![0.0; r];
        for i in 0..n {
            let vi = z[i] - u[i];
            let row = &self.q[i * r..(i + 1) * r];
            for (acc, qij) in w.iter_mut().zip(row) {
                *acc += qij * vi;
            }
        }
        for (acc, dj) in w.iter_mut().zip(&d) {
            *acc -= dj;
        }
        let mut w_next = vec![0.0; r];
        let mut rho = opts.rho;
        let mut converged = false;
        let mut iterations = 0;

        for it in 1..=opts.max_iter {
            iterations = it;
            let kappa = 1.0 / rho;
            w_next.iter_mut().for_each(|v| *v = 0.0);
            let (mut step_sq, mut z_sq, mut primal_sq) = (0.0, 0.0, 0.0);
            for i in 0..n {
                let row = &self.q[i * r..(i + 1) * r];
                let x = z[i] - u[i] - dot(row, &w);
                let z_old = z[i];
                let xr = alpha * x + (1.0 - alpha) * z_old;
                let s = xr + u[i];
                let zi = if s > kappa {
                    s - kappa
                } else if s < -kappa {
                    s + kappa
                } else {
                    0.0
                };
                u[i] = s - zi;
                z[i] = zi;
                step_sq += (zi - z_old) * (zi - z_old);
                z_sq += zi * zi;
                primal_sq += (x - zi) * (x - zi);
                let vi = zi - u[i];
                for (acc, qij) in w_next.iter_mut().zip(row) {
                    *acc += qij * vi;
                }
            }
            for ((wj, nj), dj) in w.iter_mut().zip(&w_next).zip(&d) {
                *wj = nj - dj;
            }

            let step = step_sq.sqrt();
            if step <= opts.tol * z_sq.sqrt().max(f64::MIN_POSITIVE)
                && self.residual(&z, &y_vec) <= opts.tol * y_norm
            {
                converged = true;
                break;
            }

            if opts.adapt_rho && it <= opts.adapt_until && it % opts.adapt_every.max(1) == 0 {
                let r_primal = primal_sq.sqrt();
                let r_dual = rho * step;
                let scale = if r_primal > opts.mu * r_dual {
                    opts.tau
                } else if r_dual > opts.mu * r_primal {
                    1.0 / opts.tau
                } else {
                    1.0
                };
                if scale != 1.0 {
                    rho *= scale;
                    // u is scaled by 1/rho; v = z - u changes with it
                    u.iter_mut().for_each(|v| *v /= scale);
                    w.iter_mut().for_each(|v| *v = 0.0);
                    for i in 0..n {
                        let vi = z[i] - u[i];
                        let row = &self.q[i * r..(i + 1) * r];
                        for (acc, qij) in w.iter_mut().zip(row) {
                            *acc += qij * vi;
                        }
                    }
                    for (acc, dj) in w.iter_mut().zip(&d) {
                        *acc -= dj;
                    }
                }
            }
        }

        let residual_norm = self.residual(&z, &y_vec);
        Ok(Reconstruction {
            x_hat: z,
            iterations,
            residual_norm,
            converged,
            rank_deficient: self.rank_deficient,
        })
    }

    fn residual(&self, x: &[f64], y: &DVector<f64>) -> f64 {
        let mut ax = y.clone();
        ax.gemv(1.0, &self.a, &DVector::from_column_slice(x), -1.0);
        ax.norm()
    }
}

/// Dot product with four independent accumulators so the loop vectorizes.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for l in 0..4 {
            acc[l] += x[l] * y[l];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// One-shot basis pursuit.
pub fn reconstruct_bp(phi: &DMatrix<f64>, y: &[f64], tol: f64, max_iter: usize) -> Result<Reconstruction> {
    let opts = BpOptions {
        tol,
        max_iter,
        ..BpOptions::default()
    };
    BasisPursuit::new(phi)?.solve(y, &opts)
}
