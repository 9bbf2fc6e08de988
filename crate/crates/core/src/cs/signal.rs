//! Time-varying k-sparse signal model with a region of interest.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// One time step of a k-sparse signal. `support` is sorted and `values`
/// is aligned with it; every other entry is exactly zero.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseFrame {
    pub n: usize,
    pub support: Vec<usize>,
    pub values: Vec<f64>,
    pub frame_index: usize,
}

impl SparseFrame {
    pub fn k(&self) -> usize {
        self.support.len()
    }

    pub fn dense(&self) -> Vec<f64> {
        let mut x = vec![0.0; self.n];
        for (&i, &v) in self.support.iter().zip(&self.values) {
            x[i] = v;
        }
        x
    }

    pub fn count_in(&self, mask: &[bool]) -> usize {
        self.support.iter().filter(|&&i| mask[i]).count()
    }
}

/// Where the signal's energy concentrates, and how its support evolves.
#[derive(Debug, Clone, PartialEq)]
pub struct RoiProfile {
    pub mask: Vec<bool>,
    /// Expected share of nonzeros drawn inside the mask.
    pub in_roi_fraction: f64,
    /// Probability that a support index carries over to the next frame.
    pub persistence: f64,
}

impl RoiProfile {
    /// A centered contiguous block covering `round(fraction * n)` indices.
    pub fn contiguous(n: usize, fraction: f64, in_roi_fraction: f64, persistence: f64) -> Self {
        let len = ((fraction * n as f64).round() as usize).min(n);
        let start = (n - len) / 2;
        let mask = (0..n).map(|i| i >= start && i < start + len).collect();
        Self {
            mask,
            in_roi_fraction,
            persistence,
        }
    }

    pub fn n(&self) -> usize {
        self.mask.len()
    }

    pub fn len(&self) -> usize {
        self.mask.iter().filter(|m| **m).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn pick_from<R: Rng + ?Sized>(pool: &[usize], rng: &mut R) -> usize {
    pool[rng.random_range(0..pool.len())]
}

/// Next frame of the Markov support process.
///
/// Each index of `prev` survives with probability `roi.persistence`. Free
/// slots are refilled one at a time, drawing from the RoI with probability
/// `roi.in_roi_fraction` (falling back to the other pool when one is
/// exhausted). Values are fresh standard normals.
pub fn generate_frame<R: Rng + ?Sized>(
    prev: Option<&SparseFrame>,
    roi: &RoiProfile,
    k: usize,
    frame_index: usize,
    rng: &mut R,
) -> Result<SparseFrame> {
    let n = roi.n();
    if k > n {
        return Err(Error::SparsityTooLarge { k, n });
    }
    let mut in_support = vec![false; n];
    let mut support = Vec::with_capacity(k);
    if let Some(prev) = prev {
        for &i in &prev.support {
            let keep = rng.random::<f64>() < roi.persistence;
            if keep && support.len() < k {
                in_support[i] = true;
                support.push(i);
            }
        }
    }
    while support.len() < k {
        let want_roi = rng.random::<f64>() < roi.in_roi_fraction;
        let pool: Vec<usize> = (0..n)
            .filter(|&i| !in_support[i] && roi.mask[i] == want_roi)
            .collect();
        let i = if pool.is_empty() {
            let other: Vec<usize> = (0..n).filter(|&i| !in_support[i]).collect();
            pick_from(&other, rng)
        } else {
            pick_from(&pool, rng)
        };
        in_support[i] = true;
        support.push(i);
    }
    support.sort_unstable();
    let values = support.iter().map(|_| rng.sample(StandardNormal)).collect();
    Ok(SparseFrame {
        n,
        support,
        values,
        frame_index,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn check_invariants(frame: &SparseFrame, k: usize) {
        assert_eq!(frame.k(), k);
        assert!(frame.support.windows(2).all(|w| w[0] < w[1]));
        let dense = frame.dense();
        let nonzero = dense.iter().filter(|v| **v != 0.0).count();
        assert_eq!(nonzero, k);
    }

    #[test]
    fn default_profile_covers_ten_percent() {
        let roi = RoiProfile::contiguous(400, 0.10, 0.7, 0.9);
        assert_eq!(roi.len(), 40);
        let first = roi.mask.iter().position(|m| *m).unwrap();
        assert!(roi.mask[first..first + 40].iter().all(|m| *m));
    }

    #[test]
    fn full_persistence_keeps_support() {
        let roi = RoiProfile::contiguous(100, 0.1, 0.7, 1.0);
        let mut rng = seeded(1);
        let f0 = generate_frame(None, &roi, 10, 0, &mut rng).unwrap();
        let f1 = generate_frame(Some(&f0), &roi, 10, 1, &mut rng).unwrap();
        assert_eq!(f0.support, f1.support);
        assert_ne!(f0.values, f1.values);
    }

    #[test]
    fn fresh_support_respects_roi_share() {
        let roi = RoiProfile::contiguous(400, 0.1, 0.7, 0.0);
        let mut rng = seeded(2);
        let (k, draws) = (10, 4000);
        let mut prev = generate_frame(None, &roi, k, 0, &mut rng).unwrap();
        let mut inside = 0usize;
        for t in 1..=draws {
            let f = generate_frame(Some(&prev), &roi, k, t, &mut rng).unwrap();
            inside += f.count_in(&roi.mask);
            prev = f;
        }
        let total = (k * draws) as f64;
        let share = inside as f64 / total;
        let sigma = (0.7 * 0.3 / total).sqrt();
        assert!((share - 0.7).abs() < 3.0 * sigma, "{share}");
    }

    #[test]
    fn full_sized_frames_hold_invariants() {
        let roi = RoiProfile::contiguous(400, 0.1, 0.7, 0.9);
        let mut rng = seeded(3);
        let mut prev: Option<SparseFrame> = None;
        for t in 0..50 {
            let f = generate_frame(prev.as_ref(), &roi, 40, t, &mut rng).unwrap();
            check_invariants(&f, 40);
            assert_eq!(f.frame_index, t);
            prev = Some(f);
        }
    }

    #[test]
    fn saturated_roi_falls_back() {
        let roi = RoiProfile::contiguous(20, 0.1, 1.0, 0.0);
        let f = generate_frame(None, &roi, 5, 0, &mut seeded(4)).unwrap();
        check_invariants(&f, 5);
        assert_eq!(f.count_in(&roi.mask), 2);
    }

    #[test]
    fn oversized_k_is_rejected() {
        let roi = RoiProfile::contiguous(10, 0.1, 0.7, 0.9);
        assert!(matches!(
            generate_frame(None, &roi, 11, 0, &mut seeded(0)),
            Err(Error::SparsityTooLarge { k: 11, n: 10 })
        ));
    }
}
