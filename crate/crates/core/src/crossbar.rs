//! An M x N crossbar of multibit cells with write, read and reset paths,
//! row/column power gating, analog vector-matrix multiply and a
//! winner-takes-all readout.
//!
//! Rows are measurements (output ports), columns are signal elements (input
//! ports). Gated lines contribute no current and cost no energy.

use std::io::Write;

use nalgebra::DMatrix;
use rand::Rng;

use crate::device::{level_conductance, PulseMode, PulseSpec, SmcCell, SwitchingModel, G_MAX, G_MIN, MAX_LEVEL};
use crate::energy::{EnergyLedger, EnergyOp, EnergyParams, Tech};
use crate::error::{Error, Result};

/// Signed read-out of a cell: `scale * (G(level) - G(reference_level))`.
///
/// The subtraction happens after the array, so signed matrix entries are
/// realized from strictly positive conductances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DifferentialEncoding {
    pub scale: f64,
    pub reference_level: u8,
}

impl Default for DifferentialEncoding {
    fn default() -> Self {
        Self {
            scale: 1.0 / (G_MAX - G_MIN),
            reference_level: 8,
        }
    }
}

impl DifferentialEncoding {
    pub fn weight(&self, level: u8) -> f64 {
        self.scale * (level_conductance(level) - level_conductance(self.reference_level))
    }

    fn table(&self) -> [f64; MAX_LEVEL as usize + 1] {
        std::array::from_fn(|l| self.weight(l as u8))
    }
}

/// Optional uniform output quantizer over `[-full_scale, full_scale]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutputQuantizer {
    pub bits: u32,
    pub full_scale: f64,
}

impl OutputQuantizer {
    pub fn quantize(&self, x: f64) -> f64 {
        let steps = ((1u64 << self.bits) - 1) as f64;
        let lsb = 2.0 * self.full_scale / steps;
        let clamped = x.clamp(-self.full_scale, self.full_scale);
        ((clamped + self.full_scale) / lsb).round() * lsb - self.full_scale
    }
}

/// Row outputs of one VMM. Gated rows report exactly 0.
#[derive(Debug, Clone, PartialEq)]
pub struct VmmResult {
    pub currents: Vec<f64>,
    pub enabled: Vec<bool>,
}

impl VmmResult {
    /// Unmasked result, e.g. for WTA over externally computed scores.
    pub fn from_currents(currents: Vec<f64>) -> Self {
        let enabled = vec![true; currents.len()];
        Self { currents, enabled }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            currents: self.currents.iter().map(|&c| f(c)).collect(),
            enabled: self.enabled.clone(),
        }
    }
}

/// Index of the largest current among enabled rows; ties go to the lowest index.
pub fn wta(result: &VmmResult) -> Result<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, (&c, &on)) in result.currents.iter().zip(&result.enabled).enumerate() {
        if !on {
            continue;
        }
        match best {
            Some((_, b)) if c <= b => {}
            _ => best = Some((i, c)),
        }
    }
    best.map(|(i, _)| i).ok_or(Error::EmptySelection)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossbarArray {
    rows: usize,
    cols: usize,
    cells: Vec<SmcCell>,
    row_enabled: Vec<bool>,
    col_enabled: Vec<bool>,
    ledger: EnergyLedger,
    tech: Tech,
    quantizer: Option<OutputQuantizer>,
}

impl CrossbarArray {
    /// A fully enabled array of reset cells.
    pub fn new(rows: usize, cols: usize, params: EnergyParams) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidArgument(format!(
                "crossbar dimensions must be positive, got {rows}x{cols}"
            )));
        }
        Ok(Self {
            rows,
            cols,
            cells: vec![SmcCell::new(); rows * cols],
            row_enabled: vec![true; rows],
            col_enabled: vec![true; cols],
            ledger: EnergyLedger::new(params),
            tech: Tech::Smc,
            quantizer: None,
        })
    }

    pub fn with_quantizer(mut self, quantizer: Option<OutputQuantizer>) -> Self {
        self.quantizer = quantizer;
        self
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn ledger(&self) -> &EnergyLedger {
        &self.ledger
    }

    pub fn ledger_mut(&mut self) -> &mut EnergyLedger {
        &mut self.ledger
    }

    pub fn row_enabled(&self) -> &[bool] {
        &self.row_enabled
    }

    pub fn col_enabled(&self) -> &[bool] {
        &self.col_enabled
    }

    pub fn enabled_rows(&self) -> usize {
        self.row_enabled.iter().filter(|e| **e).count()
    }

    pub fn enabled_cols(&self) -> usize {
        self.col_enabled.iter().filter(|e| **e).count()
    }

    pub fn cell(&self, row: usize, col: usize) -> &SmcCell {
        &self.cells[row * self.cols + col]
    }

    /// Row-major cell levels, ignoring gating.
    pub fn levels(&self) -> Vec<u8> {
        self.cells.iter().map(SmcCell::level).collect()
    }

    fn check(&self, row: usize, col: usize) -> Result<usize> {
        if row >= self.rows || col >= self.cols {
            return Err(Error::OutOfRange {
                row,
                col,
                rows: self.rows,
                cols: self.cols,
            });
        }
        if !self.row_enabled[row] {
            return Err(Error::GatedLine { line: "row", index: row });
        }
        if !self.col_enabled[col] {
            return Err(Error::GatedLine { line: "column", index: col });
        }
        Ok(row * self.cols + col)
    }

    /// Applies `pulse` to one cell and charges its write or reset energy.
    pub fn write_cell<R: Rng + ?Sized>(
        &mut self,
        row: usize,
        col: usize,
        pulse: &PulseSpec,
        model: &SwitchingModel,
        rng: &mut R,
    ) -> Result<()> {
        let idx = self.check(row, col)?;
        pulse.validate()?;
        match pulse.mode {
            PulseMode::Set => {
                self.cells[idx].apply_set_pulses(pulse, model, rng)?;
                self.ledger.charge(EnergyOp::WritePulses(u64::from(pulse.count)));
            }
            PulseMode::Reset => {
                self.cells[idx].reset();
                self.ledger.charge(EnergyOp::Resets(u64::from(pulse.count)));
            }
        }
        Ok(())
    }

    /// Verify read of a single cell.
    pub fn read_level(&mut self, row: usize, col: usize) -> Result<u8> {
        let idx = self.check(row, col)?;
        self.ledger.charge(EnergyOp::Reads(1));
        Ok(self.cells[idx].level())
    }

    /// Conductance grid; gated lines read 0 and cost nothing.
    pub fn read_conductances(&mut self) -> DMatrix<f64> {
        let grid = DMatrix::from_fn(self.rows, self.cols, |r, c| {
            if self.row_enabled[r] && self.col_enabled[c] {
                self.cell(r, c).conductance()
            } else {
                0.0
            }
        });
        let enabled = (self.enabled_rows() * self.enabled_cols()) as u64;
        self.ledger.charge(EnergyOp::Reads(enabled));
        grid
    }

    fn check_input(&self, len: usize) -> Result<()> {
        if len != self.cols {
            return Err(Error::LengthMismatch {
                what: "vmm input",
                expected: self.cols,
                got: len,
            });
        }
        Ok(())
    }

    fn finish(&mut self, mut currents: Vec<f64>) -> VmmResult {
        if let Some(q) = self.quantizer {
            for (c, &on) in currents.iter_mut().zip(&self.row_enabled) {
                if on {
                    *c = q.quantize(*c);
                }
            }
        }
        let cells = (self.enabled_rows() * self.enabled_cols()) as u64;
        self.ledger.charge_vmm(cells, self.tech);
        VmmResult {
            currents,
            enabled: self.row_enabled.clone(),
        }
    }

    fn accumulate(&self, input: &[f64], weight: impl Fn(&SmcCell) -> f64) -> Vec<f64> {
        (0..self.rows)
            .map(|r| {
                if !self.row_enabled[r] {
                    return 0.0;
                }
                let row = &self.cells[r * self.cols..(r + 1) * self.cols];
                let mut acc = 0.0;
                for ((cell, &v), &on) in row.iter().zip(input).zip(&self.col_enabled) {
                    if on {
                        acc += weight(cell) * v;
                    }
                }
                acc
            })
            .collect()
    }

    /// Ideal analog VMM: `currents[m] = sum_n G[m][n] * v[n]` over enabled lines.
    pub fn vmm(&mut self, input_voltages: &[f64]) -> Result<VmmResult> {
        self.check_input(input_voltages.len())?;
        let currents = self.accumulate(input_voltages, SmcCell::conductance);
        Ok(self.finish(currents))
    }

    /// VMM with each cell read through `encoding`, giving signed outputs.
    pub fn vmm_differential(
        &mut self,
        input: &[f64],
        encoding: &DifferentialEncoding,
    ) -> Result<VmmResult> {
        self.check_input(input.len())?;
        let table = encoding.table();
        let currents = self.accumulate(input, |cell| table[cell.level() as usize]);
        Ok(self.finish(currents))
    }

    pub fn set_enable(&mut self, row_mask: &[bool], col_mask: &[bool]) -> Result<()> {
        if row_mask.len() != self.rows {
            return Err(Error::LengthMismatch {
                what: "row mask",
                expected: self.rows,
                got: row_mask.len(),
            });
        }
        if col_mask.len() != self.cols {
            return Err(Error::LengthMismatch {
                what: "column mask",
                expected: self.cols,
                got: col_mask.len(),
            });
        }
        self.row_enabled.copy_from_slice(row_mask);
        self.col_enabled.copy_from_slice(col_mask);
        Ok(())
    }

    /// Enables exactly the first `m` rows and every column.
    pub fn enable_first_rows(&mut self, m: usize) -> Result<()> {
        let rows: Vec<bool> = (0..self.rows).map(|r| r < m).collect();
        let cols = vec![true; self.cols];
        self.set_enable(&rows, &cols)
    }

    /// A copy with rows and columns swapped and a fresh ledger, as if the
    /// same levels had been written into an N x M array.
    pub fn transposed(&self) -> Self {
        let mut cells = Vec::with_capacity(self.cells.len());
        for c in 0..self.cols {
            for r in 0..self.rows {
                cells.push(*self.cell(r, c));
            }
        }
        Self {
            rows: self.cols,
            cols: self.rows,
            cells,
            row_enabled: self.col_enabled.clone(),
            col_enabled: self.row_enabled.clone(),
            ledger: EnergyLedger::new(*self.ledger.params()),
            tech: self.tech,
            quantizer: self.quantizer,
        }
    }

    /// Row-major conductance dump, one row per line, 9 significant digits.
    /// Does not charge read energy.
    pub fn write_conductance_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for r in 0..self.rows {
            let line: Vec<String> = (0..self.cols)
                .map(|c| {
                    let g = if self.row_enabled[r] && self.col_enabled[c] {
                        self.cell(r, c).conductance()
                    } else {
                        0.0
                    };
                    format!("{g:.8e}")
                })
                .collect();
            writeln!(out, "{}", line.join(","))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::Rng;

    fn random_array(rows: usize, cols: usize, seed: u64) -> CrossbarArray {
        let mut rng = seeded(seed);
        let mut array = CrossbarArray::new(rows, cols, EnergyParams::default()).unwrap();
        for r in 0..rows {
            for c in 0..cols {
                let p = rng.random::<f64>();
                array.cells[r * cols + c].apply_with_probability(p, 2, &mut rng);
            }
        }
        array
    }

    fn dense_matvec(g: &DMatrix<f64>, v: &[f64]) -> Vec<f64> {
        (0..g.nrows())
            .map(|r| {
                let mut acc = 0.0;
                for c in 0..g.ncols() {
                    acc += g[(r, c)] * v[c];
                }
                acc
            })
            .collect()
    }

    #[test]
    fn reset_is_local() {
        let mut array = random_array(3, 4, 1);
        let before = array.levels();
        let mut rng = seeded(0);
        let model = SwitchingModel::default();
        array.write_cell(1, 2, &PulseSpec::reset(), &model, &mut rng).unwrap();
        let after = array.levels();
        for (i, (b, a)) in before.iter().zip(&after).enumerate() {
            if i == 6 {
                assert_eq!(*a, 0);
            } else {
                assert_eq!(a, b);
            }
        }
        assert_eq!(array.ledger().resets(), 1);
    }

    #[test]
    fn certain_set_saturates_cell() {
        let mut array = CrossbarArray::new(2, 2, EnergyParams::default()).unwrap();
        let mut rng = seeded(0);
        let model = SwitchingModel::default();
        array
            .write_cell(0, 1, &PulseSpec::set(1000.0, 20.0, 1), &model, &mut rng)
            .unwrap();
        assert_eq!(array.cell(0, 1).level(), 16);
        assert_eq!(array.ledger().write_pulses(), 1);
    }

    #[test]
    fn write_errors() {
        let mut array = CrossbarArray::new(2, 2, EnergyParams::default()).unwrap();
        let mut rng = seeded(0);
        let model = SwitchingModel::default();
        let pulse = PulseSpec::set(6.97, 20.0, 1);
        assert!(matches!(
            array.write_cell(2, 0, &pulse, &model, &mut rng),
            Err(Error::OutOfRange { .. })
        ));
        array.set_enable(&[true, false], &[true, true]).unwrap();
        assert!(matches!(
            array.write_cell(1, 0, &pulse, &model, &mut rng),
            Err(Error::GatedLine { line: "row", .. })
        ));
        let bad = PulseSpec::set(-1.0, 20.0, 1);
        assert!(array.write_cell(0, 0, &bad, &model, &mut rng).is_err());
    }

    #[test]
    fn read_examples() {
        let mut array = CrossbarArray::new(3, 3, EnergyParams::default()).unwrap();
        let g = array.read_conductances();
        assert!(g.iter().all(|&x| (x - 2.0e-4).abs() < 1e-18));
        assert_eq!(array.ledger().cell_reads(), 9);

        let mut array = random_array(3, 4, 9);
        array.set_enable(&[true; 3], &[true, false, true, true]).unwrap();
        let g = array.read_conductances();
        for r in 0..3 {
            assert_eq!(g[(r, 1)], 0.0);
            for c in [0, 2, 3] {
                assert_eq!(g[(r, c)], level_conductance(array.cell(r, c).level()));
            }
        }
        assert_eq!(array.ledger().cell_reads(), 9);
    }

    #[test]
    fn vmm_examples() {
        let mut array = random_array(4, 6, 2);
        let zero = array.vmm(&[0.0; 6]).unwrap();
        assert!(zero.currents.iter().all(|&c| c == 0.0));

        let mut onehot = [0.0; 6];
        onehot[3] = 1.0;
        let out = array.vmm(&onehot).unwrap();
        for r in 0..4 {
            assert_eq!(out.currents[r], array.cell(r, 3).conductance());
        }

        let mut rng = seeded(3);
        let v: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
        let g = array.read_conductances();
        assert_eq!(array.vmm(&v).unwrap().currents, dense_matvec(&g, &v));

        assert!(matches!(array.vmm(&[1.0; 5]), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn gating_examples() {
        let mut array = random_array(4, 5, 4);
        array.set_enable(&[true; 4], &[false; 5]).unwrap();
        let out = array.vmm(&[1.0; 5]).unwrap();
        assert!(out.currents.iter().all(|&c| c == 0.0));

        array.set_enable(&[true, false, true, true], &[true; 5]).unwrap();
        let mut rng = seeded(5);
        for _ in 0..50 {
            let v: Vec<f64> = (0..5).map(|_| rng.random_range(0.0..1.0)).collect();
            assert_ne!(wta(&array.vmm(&v).unwrap()).unwrap(), 1);
        }

        let rows = [true, false, true, false];
        let cols = [false, true, true, false, true];
        array.set_enable(&rows, &cols).unwrap();
        let v = [0.3, -0.7, 1.1, 2.0, 0.25];
        let out = array.vmm(&v).unwrap();
        for r in 0..4 {
            let mut expected = 0.0;
            if rows[r] {
                for c in 0..5 {
                    if cols[c] {
                        expected += array.cell(r, c).conductance() * v[c];
                    }
                }
            }
            assert_eq!(out.currents[r], expected);
        }
        assert!(array.set_enable(&[true; 3], &[true; 5]).is_err());
    }

    #[test]
    fn vmm_energy_scales_with_enabled_cells() {
        let mut array = random_array(6, 7, 6);
        let e_cell = array.ledger().params().e_cell_vmm_smc;
        for (rows_on, cols_on) in [(6, 7), (3, 7), (6, 2), (1, 1), (0, 4)] {
            let rows: Vec<bool> = (0..6).map(|r| r < rows_on).collect();
            let cols: Vec<bool> = (0..7).map(|c| c < cols_on).collect();
            array.set_enable(&rows, &cols).unwrap();
            let before = array.ledger().vmm_pj();
            array.vmm(&[1.0; 7]).unwrap();
            let delta = array.ledger().vmm_pj() - before;
            assert_relative_eq!(delta, (rows_on * cols_on) as f64 * e_cell, epsilon = 1e-9);
        }
    }

    #[test]
    fn wta_examples() {
        assert_eq!(wta(&VmmResult::from_currents(vec![1.0, 3.0, 2.0])).unwrap(), 1);
        assert_eq!(wta(&VmmResult::from_currents(vec![5.0, 5.0, 0.0])).unwrap(), 0);
        let none = VmmResult {
            currents: vec![1.0, 2.0],
            enabled: vec![false, false],
        };
        assert!(matches!(wta(&none), Err(Error::EmptySelection)));
        let masked = VmmResult {
            currents: vec![-1.0, 0.0, -3.0],
            enabled: vec![true, false, true],
        };
        assert_eq!(wta(&masked).unwrap(), 0);
    }

    #[test]
    fn differential_matches_encoding() {
        let mut array = random_array(3, 4, 7);
        let enc = DifferentialEncoding::default();
        let v = [0.5, -1.0, 2.0, 0.0];
        let out = array.vmm_differential(&v, &enc).unwrap();
        for r in 0..3 {
            let mut acc = 0.0;
            for c in 0..4 {
                acc += enc.weight(array.cell(r, c).level()) * v[c];
            }
            assert_eq!(out.currents[r], acc);
        }
        assert_relative_eq!(enc.weight(16), 0.5, epsilon = 1e-12);
        assert_relative_eq!(enc.weight(8), 0.0, epsilon = 0.0);
    }

    #[test]
    fn transposed_swaps_geometry() {
        let array = random_array(3, 5, 8);
        let t = array.transposed();
        assert_eq!((t.rows(), t.cols()), (5, 3));
        for r in 0..3 {
            for c in 0..5 {
                assert_eq!(array.cell(r, c), t.cell(c, r));
            }
        }
    }

    #[test]
    fn quantizer_snaps_to_grid() {
        let q = OutputQuantizer { bits: 2, full_scale: 1.5 };
        assert_eq!(q.quantize(0.4), 0.5);
        assert_eq!(q.quantize(10.0), 1.5);
        assert_eq!(q.quantize(-0.6), -0.5);
    }

    #[test]
    fn csv_dump_format() {
        let mut array = CrossbarArray::new(2, 3, EnergyParams::default()).unwrap();
        array.set_enable(&[true, true], &[true, false, true]).unwrap();
        let mut buf = Vec::new();
        array.write_conductance_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "2.00000000e-4,0.00000000e0,2.00000000e-4\n2.00000000e-4,0.00000000e0,2.00000000e-4\n"
        );
    }

    proptest! {
        #[test]
        fn vmm_is_linear(seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
            let mut array = random_array(5, 6, seed);
            let mut rng = seeded(seed ^ 0xabc);
            let u: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
            let v: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mix: Vec<f64> = u.iter().zip(&v).map(|(x, y)| a * x + b * y).collect();
            let lhs = array.vmm(&mix).unwrap().currents;
            let ru = array.vmm(&u).unwrap().currents;
            let rv = array.vmm(&v).unwrap().currents;
            for r in 0..5 {
                let rhs = a * ru[r] + b * rv[r];
                prop_assert!((lhs[r] - rhs).abs() <= 1e-15 * (1.0 + rhs.abs()));
            }
        }

        #[test]
        fn wta_equals_linear_scan(values in proptest::collection::vec(-5i32..5, 1..30)) {
            let currents: Vec<f64> = values.iter().map(|&v| f64::from(v)).collect();
            let mut best = 0;
            for i in 1..currents.len() {
                if currents[i] > currents[best] {
                    best = i;
                }
            }
            prop_assert_eq!(wta(&VmmResult::from_currents(currents)).unwrap(), best);
        }
    }
}
