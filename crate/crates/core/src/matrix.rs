//! Measurement-matrix generation, stochastic programming and RIP estimation.
//!
//! Targets are drawn with exactly one random draw per entry in row-major
//! order, so two specs that differ only in column weights map the same
//! underlying draws to (mostly) the same levels. The adaptive loop relies on
//! this to re-program only the cells whose target actually moved.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::crossbar::{CrossbarArray, DifferentialEncoding};
use crate::device::{PulseSpec, SwitchingModel, MAGNETS_PER_CELL};
use crate::error::{Error, Result};
use crate::rng::StreamKey;

/// Levels used to realize -1 / +1 Bernoulli entries.
pub const BERNOULLI_LOW: u8 = 1;
pub const BERNOULLI_HIGH: u8 = 15;
/// Highest programmable target (4-bit alphabet 0..=15).
pub const MAX_TARGET: u8 = 15;
/// Gaussian draws are clipped to this many units before quantization.
pub const GAUSSIAN_CLIP: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatrixKind {
    Bernoulli,
    Gaussian,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixSpec {
    pub kind: MatrixKind,
    pub rows: usize,
    pub cols: usize,
    /// Per-column sampling weights, mean 1.
    pub col_weights: Vec<f64>,
}

/// Scales nonnegative weights to mean 1.
pub fn normalize_weights(raw: &[f64]) -> Result<Vec<f64>> {
    if raw.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::InvalidArgument(
            "column weights must be finite and nonnegative".into(),
        ));
    }
    let sum: f64 = raw.iter().sum();
    if sum <= 0.0 {
        return Err(Error::InvalidArgument(
            "at least one column weight must be positive".into(),
        ));
    }
    let mean = sum / raw.len() as f64;
    Ok(raw.iter().map(|w| w / mean).collect())
}

impl MatrixSpec {
    pub fn new(kind: MatrixKind, rows: usize, cols: usize, raw_weights: &[f64]) -> Result<Self> {
        if raw_weights.len() != cols {
            return Err(Error::LengthMismatch {
                what: "column weights",
                expected: cols,
                got: raw_weights.len(),
            });
        }
        Ok(Self {
            kind,
            rows,
            cols,
            col_weights: normalize_weights(raw_weights)?,
        })
    }

    pub fn uniform(kind: MatrixKind, rows: usize, cols: usize) -> Self {
        Self {
            kind,
            rows,
            cols,
            col_weights: vec![1.0; cols],
        }
    }
}

/// Probability that a Bernoulli entry in a column of weight `w` is high.
pub fn bernoulli_high_probability(w: f64) -> f64 {
    (0.5 * w).clamp(0.05, 0.95)
}

/// Maps a Gaussian draw onto levels 1..=15 with 0 at mid-scale (8).
pub fn gaussian_level(g: f64) -> u8 {
    let g = g.clamp(-GAUSSIAN_CLIP, GAUSSIAN_CLIP);
    let half_span = f64::from(MAX_TARGET - BERNOULLI_LOW) / 2.0;
    let mid = f64::from(BERNOULLI_LOW) + half_span;
    (mid + g * half_span / GAUSSIAN_CLIP + 0.5).floor() as u8
}

/// Row-major target levels for `spec`.
pub fn target_levels<R: Rng + ?Sized>(spec: &MatrixSpec, rng: &mut R) -> Vec<u8> {
    let mut out = Vec::with_capacity(spec.rows * spec.cols);
    for _ in 0..spec.rows {
        for &w in &spec.col_weights {
            let level = match spec.kind {
                MatrixKind::Bernoulli => {
                    let u: f64 = rng.random();
                    if u < bernoulli_high_probability(w) {
                        BERNOULLI_HIGH
                    } else {
                        BERNOULLI_LOW
                    }
                }
                MatrixKind::Gaussian => {
                    let z: f64 = rng.sample(StandardNormal);
                    gaussian_level(w.sqrt() * z)
                }
            };
            out.push(level);
        }
    }
    out
}

/// The realized real-valued measurement matrix, read back from the array.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementMatrix {
    /// Enabled rows x all columns. Gated columns hold 0.
    pub values: DMatrix<f64>,
    /// Row-major levels of the same cells.
    pub source_levels: Vec<u8>,
    /// Array row behind each matrix row.
    pub row_index: Vec<usize>,
    pub encoding: DifferentialEncoding,
}

impl MeasurementMatrix {
    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    pub fn scale(&self) -> f64 {
        self.encoding.scale
    }

    /// Content hash of the values, for checking that two stages used the
    /// same snapshot.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |x: u64| {
            for b in x.to_le_bytes() {
                h ^= u64::from(b);
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        };
        eat(self.nrows() as u64);
        eat(self.ncols() as u64);
        for v in self.values.iter() {
            eat(v.to_bits());
        }
        h
    }

    /// `values * x`, summing each row in column order.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let (rows, cols) = self.values.shape();
        (0..rows)
            .map(|r| {
                let mut acc = 0.0;
                for c in 0..cols {
                    acc += self.values[(r, c)] * x[c];
                }
                acc
            })
            .collect()
    }

    /// `values^T * r`, summing each column in row order.
    pub fn matvec_transpose(&self, r: &[f64]) -> Vec<f64> {
        self.values
            .column_iter()
            .map(|col| {
                let mut acc = 0.0;
                for (a, b) in col.iter().zip(r) {
                    acc += a * b;
                }
                acc
            })
            .collect()
    }
}

/// Reads the array and applies the differential encoding. Deterministic in
/// the cell states.
pub fn realize_phi(array: &mut CrossbarArray, encoding: &DifferentialEncoding) -> MeasurementMatrix {
    let grid = array.read_conductances();
    build_phi(array, encoding, |r, c| grid[(r, c)])
}

/// Same matrix as [`realize_phi`] built from known cell states, without
/// charging a read.
pub fn snapshot_phi(array: &CrossbarArray, encoding: &DifferentialEncoding) -> MeasurementMatrix {
    build_phi(array, encoding, |r, c| array.cell(r, c).conductance())
}

fn build_phi(
    array: &CrossbarArray,
    encoding: &DifferentialEncoding,
    conductance: impl Fn(usize, usize) -> f64,
) -> MeasurementMatrix {
    let g_ref = crate::device::level_conductance(encoding.reference_level);
    let row_index: Vec<usize> = (0..array.rows()).filter(|&r| array.row_enabled()[r]).collect();
    let col_enabled = array.col_enabled();
    let values = DMatrix::from_fn(row_index.len(), array.cols(), |i, c| {
        if col_enabled[c] {
            encoding.scale * (conductance(row_index[i], c) - g_ref)
        } else {
            0.0
        }
    });
    let source_levels = row_index
        .iter()
        .flat_map(|&r| (0..array.cols()).map(move |c| (r, c)))
        .map(|(r, c)| array.cell(r, c).level())
        .collect();
    MeasurementMatrix {
        values,
        source_levels,
        row_index,
        encoding: *encoding,
    }
}

/// Settings for program-and-verify.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProgramConfig {
    pub model: SwitchingModel,
    /// Per-pulse switching probability the programming amplitude is tuned to.
    pub pulse_probability: f64,
    pub pulse_width_us: f64,
    /// Pulses applied between verify reads.
    pub batch_pulses: u32,
    /// Per-cell pulse budget.
    pub max_pulses: u32,
    pub verify: bool,
    pub encoding: DifferentialEncoding,
}

impl Default for ProgramConfig {
    fn default() -> Self {
        Self {
            model: SwitchingModel::default(),
            pulse_probability: 0.3,
            pulse_width_us: 20.0,
            batch_pulses: 1,
            max_pulses: 40,
            verify: true,
            encoding: DifferentialEncoding::default(),
        }
    }
}

/// Result of a programming pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ProgramOutcome {
    pub phi: MeasurementMatrix,
    pub cells_programmed: usize,
    pub pulses: u64,
    pub resets: u64,
}

/// Open-loop pulse count whose expected level first reaches `target`.
fn open_loop_pulses(target: u8, p: f64, max_pulses: u32) -> u32 {
    if target == 0 {
        return 0;
    }
    let frac = f64::from(target) / MAGNETS_PER_CELL as f64;
    if frac >= 1.0 {
        return max_pulses;
    }
    let n = ((1.0 - frac).ln() / (1.0 - p).ln()).ceil();
    (n as u32).min(max_pulses)
}

/// Resets and programs one cell toward `target` on its own stream.
/// Returns the number of set pulses applied.
pub(crate) fn program_cell(
    array: &mut CrossbarArray,
    row: usize,
    col: usize,
    target: u8,
    cfg: &ProgramConfig,
    amplitude: f64,
    key: &StreamKey,
) -> Result<u32> {
    let mut rng = key.cell_rng(row, col);
    array.write_cell(row, col, &PulseSpec::reset(), &cfg.model, &mut rng)?;
    let mut spent = 0;
    if cfg.verify {
        let mut level = 0;
        while level < target && spent < cfg.max_pulses {
            let n = cfg.batch_pulses.min(cfg.max_pulses - spent);
            let pulse = PulseSpec::set(amplitude, cfg.pulse_width_us, n);
            array.write_cell(row, col, &pulse, &cfg.model, &mut rng)?;
            spent += n;
            level = array.read_level(row, col)?;
        }
    } else {
        let n = open_loop_pulses(target, cfg.pulse_probability, cfg.max_pulses);
        if n > 0 {
            let pulse = PulseSpec::set(amplitude, cfg.pulse_width_us, n);
            array.write_cell(row, col, &pulse, &cfg.model, &mut rng)?;
            spent = n;
        }
    }
    Ok(spent)
}

fn check_targets(array: &CrossbarArray, targets: &[u8]) -> Result<()> {
    if targets.len() != array.rows() * array.cols() {
        return Err(Error::LengthMismatch {
            what: "target levels",
            expected: array.rows() * array.cols(),
            got: targets.len(),
        });
    }
    if let Some(bad) = targets.iter().find(|&&t| t > MAX_TARGET) {
        return Err(Error::InvalidArgument(format!(
            "target level {bad} outside 0..={MAX_TARGET}"
        )));
    }
    Ok(())
}

/// Programs the enabled cells selected by `select` toward `targets`
/// (row-major). Gated cells are left alone.
pub(crate) fn program_cells(
    array: &mut CrossbarArray,
    targets: &[u8],
    cfg: &ProgramConfig,
    key: &StreamKey,
    mut select: impl FnMut(usize, usize) -> bool,
) -> Result<(usize, u64, u64)> {
    check_targets(array, targets)?;
    let amplitude = cfg
        .model
        .amplitude_for_probability(cfg.pulse_probability, cfg.pulse_width_us)?;
    let (mut cells, mut pulses) = (0usize, 0u64);
    for r in 0..array.rows() {
        if !array.row_enabled()[r] {
            continue;
        }
        for c in 0..array.cols() {
            if !array.col_enabled()[c] || !select(r, c) {
                continue;
            }
            pulses += u64::from(program_cell(
                array,
                r,
                c,
                targets[r * array.cols() + c],
                cfg,
                amplitude,
                key,
            )?);
            cells += 1;
        }
    }
    Ok((cells, pulses, cells as u64))
}

/// Full-array program-and-verify. Every enabled cell is reset and then
/// pulsed until its read-back level reaches the target or the pulse budget
/// runs out. The returned matrix comes from read-back, not from `targets`.
pub fn program_matrix(
    array: &mut CrossbarArray,
    targets: &[u8],
    cfg: &ProgramConfig,
    key: &StreamKey,
) -> Result<ProgramOutcome> {
    let (cells_programmed, pulses, resets) = program_cells(array, targets, cfg, key, |_, _| true)?;
    Ok(ProgramOutcome {
        phi: realize_phi(array, &cfg.encoding),
        cells_programmed,
        pulses,
        resets,
    })
}

/// Outcome of an empirical RIP probe.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RipEstimate {
    pub delta_hat: f64,
    pub k: usize,
    pub trials: usize,
    pub p_norm: u32,
}

/// A sparse test vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Probe {
    pub support: Vec<usize>,
    pub values: Vec<f64>,
}

/// Copy of `phi` with every nonzero column scaled to unit l2 norm.
pub fn column_normalized(phi: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = phi.clone();
    for mut col in out.column_iter_mut() {
        let mut ss = 0.0;
        for v in col.iter() {
            ss += v * v;
        }
        if ss > 0.0 {
            let norm = ss.sqrt();
            for v in col.iter_mut() {
                *v /= norm;
            }
        }
    }
    out
}

/// Max of `| ||Phi x||^2 / ||x||^2 - 1 |` over the given probes, on the
/// column-normalized matrix.
pub fn rip_estimate_over(phi: &DMatrix<f64>, k: usize, probes: &[Probe]) -> Result<RipEstimate> {
    if k == 0 || k > phi.ncols() {
        return Err(Error::SparsityTooLarge { k, n: phi.ncols() });
    }
    let normalized = column_normalized(phi);
    let mut delta_hat: f64 = 0.0;
    for probe in probes {
        let mut x_norm_sq = 0.0;
        for v in &probe.values {
            x_norm_sq += v * v;
        }
        if x_norm_sq == 0.0 {
            continue;
        }
        let mut y_norm_sq = 0.0;
        for r in 0..normalized.nrows() {
            let mut acc = 0.0;
            for (&c, &v) in probe.support.iter().zip(&probe.values) {
                acc += normalized[(r, c)] * v;
            }
            y_norm_sq += acc * acc;
        }
        delta_hat = delta_hat.max((y_norm_sq / x_norm_sq - 1.0).abs());
    }
    Ok(RipEstimate {
        delta_hat,
        k,
        trials: probes.len(),
        p_norm: 2,
    })
}

/// Draws a random unit-norm probe with uniform support and Gaussian values.
pub fn random_probe<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> Probe {
    let mut support = index::sample(rng, n, k).into_vec();
    support.sort_unstable();
    let mut values: Vec<f64> = (0..k).map(|_| rng.sample(StandardNormal)).collect();
    let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        values.iter_mut().for_each(|v| *v /= norm);
    }
    Probe { support, values }
}

/// Monte Carlo lower bound on the order-`k` restricted isometry constant.
pub fn rip_estimate<R: Rng + ?Sized>(
    phi: &DMatrix<f64>,
    k: usize,
    trials: usize,
    rng: &mut R,
) -> Result<RipEstimate> {
    if k == 0 || k > phi.ncols() {
        return Err(Error::SparsityTooLarge { k, n: phi.ncols() });
    }
    let probes: Vec<Probe> = (0..trials).map(|_| random_probe(phi.ncols(), k, rng)).collect();
    rip_estimate_over(phi, k, &probes)
}

/// Exact order-`k` restricted isometry constant of the column-normalized
/// matrix, by enumerating every support. Exponential; small matrices only.
pub fn rip_constant_exhaustive(phi: &DMatrix<f64>, k: usize) -> Result<f64> {
    let n = phi.ncols();
    if k == 0 || k > n {
        return Err(Error::SparsityTooLarge { k, n });
    }
    let normalized = column_normalized(phi);
    let mut support: Vec<usize> = (0..k).collect();
    let mut delta: f64 = 0.0;
    loop {
        let sub = normalized.select_columns(&support);
        let gram = sub.transpose() * &sub;
        let eig = SymmetricEigen::new(gram);
        for lambda in eig.eigenvalues.iter() {
            delta = delta.max((lambda - 1.0).abs());
        }
        // next combination in lexicographic order
        let mut i = k;
        while i > 0 && support[i - 1] == n - k + i - 1 {
            i -= 1;
        }
        if i == 0 {
            break;
        }
        support[i - 1] += 1;
        for j in i..k {
            support[j] = support[j - 1] + 1;
        }
    }
    Ok(delta)
}
