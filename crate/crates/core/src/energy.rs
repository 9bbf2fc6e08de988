//! Energy accounting and area estimation.
//!
//! The ledger stores integer event counts and derives picojoule totals from
//! them, so every total is exactly `count * per-op constant` and ledgers from
//! independent trials merge without ordering effects.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// Technology used for a VMM energy charge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Tech {
    Smc,
    Cmos,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum OpKind {
    Vmm,
    Write,
    Reset,
    Read,
}

/// Per-event energies in pJ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyParams {
    pub e_cell_vmm_smc: f64,
    pub e_cell_vmm_cmos: f64,
    pub e_write_pulse: f64,
    pub e_reset_pulse: f64,
    pub e_read_cell: f64,
}

impl Default for EnergyParams {
    fn default() -> Self {
        Self {
            // 240 pJ / 2500 cells and 1177 pJ / 2500 cells.
            e_cell_vmm_smc: 0.096,
            e_cell_vmm_cmos: 0.4708,
            // Full Gaussian program-and-verify at p = 0.3 averages about
            // 2.48 set pulses plus one reset per cell; this lands the whole
            // matrix near 1.2 pJ/cell.
            e_write_pulse: 0.42,
            e_reset_pulse: 0.15,
            e_read_cell: 0.01,
        }
    }
}

impl EnergyParams {
    pub fn e_cell_vmm(&self, tech: Tech) -> f64 {
        match tech {
            Tech::Smc => self.e_cell_vmm_smc,
            Tech::Cmos => self.e_cell_vmm_cmos,
        }
    }

    pub fn is_valid(&self) -> bool {
        let all = [
            self.e_cell_vmm_smc,
            self.e_cell_vmm_cmos,
            self.e_write_pulse,
            self.e_reset_pulse,
            self.e_read_cell,
        ];
        all.iter().all(|e| e.is_finite() && *e > 0.0) && self.e_cell_vmm_smc < self.e_cell_vmm_cmos
    }
}

/// A single chargeable event, used for logging and replay.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnergyOp {
    Vmm { cells: u64, tech: Tech },
    WritePulses(u64),
    Resets(u64),
    Reads(u64),
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EnergyLedger {
    params: EnergyParams,
    vmm_smc_cells: u64,
    vmm_cmos_cells: u64,
    write_pulses: u64,
    resets: u64,
    cell_reads: u64,
    op_counts: BTreeMap<OpKind, u64>,
}

impl EnergyLedger {
    pub fn new(params: EnergyParams) -> Self {
        Self {
            params,
            ..Self::default()
        }
    }

    pub fn params(&self) -> &EnergyParams {
        &self.params
    }

    pub fn charge(&mut self, op: EnergyOp) {
        let kind = match op {
            EnergyOp::Vmm { cells, tech } => {
                match tech {
                    Tech::Smc => self.vmm_smc_cells += cells,
                    Tech::Cmos => self.vmm_cmos_cells += cells,
                }
                OpKind::Vmm
            }
            EnergyOp::WritePulses(n) => {
                self.write_pulses += n;
                OpKind::Write
            }
            EnergyOp::Resets(n) => {
                self.resets += n;
                OpKind::Reset
            }
            EnergyOp::Reads(n) => {
                self.cell_reads += n;
                OpKind::Read
            }
        };
        *self.op_counts.entry(kind).or_insert(0) += 1;
    }

    pub fn charge_vmm(&mut self, enabled_cells: u64, tech: Tech) {
        self.charge(EnergyOp::Vmm {
            cells: enabled_cells,
            tech,
        });
    }

    pub fn vmm_pj(&self) -> f64 {
        self.vmm_smc_cells as f64 * self.params.e_cell_vmm_smc
            + self.vmm_cmos_cells as f64 * self.params.e_cell_vmm_cmos
    }

    pub fn write_pj(&self) -> f64 {
        self.write_pulses as f64 * self.params.e_write_pulse
    }

    pub fn reset_pj(&self) -> f64 {
        self.resets as f64 * self.params.e_reset_pulse
    }

    pub fn read_pj(&self) -> f64 {
        self.cell_reads as f64 * self.params.e_read_cell
    }

    /// Write plus reset energy: what it costs to (re)populate cells.
    pub fn programming_pj(&self) -> f64 {
        programming_energy(self.write_pulses, self.resets, &self.params)
    }

    pub fn total_pj(&self) -> f64 {
        self.vmm_pj() + self.write_pj() + self.reset_pj() + self.read_pj()
    }

    pub fn write_pulses(&self) -> u64 {
        self.write_pulses
    }

    pub fn resets(&self) -> u64 {
        self.resets
    }

    pub fn cell_reads(&self) -> u64 {
        self.cell_reads
    }

    pub fn vmm_cells(&self, tech: Tech) -> u64 {
        match tech {
            Tech::Smc => self.vmm_smc_cells,
            Tech::Cmos => self.vmm_cmos_cells,
        }
    }

    pub fn op_count(&self, kind: OpKind) -> u64 {
        self.op_counts.get(&kind).copied().unwrap_or(0)
    }

    /// Adds another ledger's counts. Both must share the same parameters.
    pub fn merge(&mut self, other: &EnergyLedger) {
        debug_assert_eq!(self.params, other.params);
        self.vmm_smc_cells += other.vmm_smc_cells;
        self.vmm_cmos_cells += other.vmm_cmos_cells;
        self.write_pulses += other.write_pulses;
        self.resets += other.resets;
        self.cell_reads += other.cell_reads;
        for (k, v) in &other.op_counts {
            *self.op_counts.entry(*k).or_insert(0) += v;
        }
    }
}

/// VMM energy of an `n x m` array for one full-array operation.
pub fn vmm_energy(n: usize, m: usize, tech: Tech, params: &EnergyParams) -> f64 {
    (n * m) as f64 * params.e_cell_vmm(tech)
}

/// CMOS over SMC VMM energy for an `n x m` array.
pub fn improvement_ratio(n: usize, m: usize, params: &EnergyParams) -> f64 {
    vmm_energy(n, m, Tech::Cmos, params) / vmm_energy(n, m, Tech::Smc, params)
}

pub fn programming_energy(pulse_count_total: u64, reset_count: u64, params: &EnergyParams) -> f64 {
    pulse_count_total as f64 * params.e_write_pulse + reset_count as f64 * params.e_reset_pulse
}

/// Reference VMM energy comparison: `(n, m, cmos_pj, smc_pj)`.
pub const TABLE1: [(usize, usize, f64, f64); 3] = [
    (100, 25, 1177.0, 240.0),
    (200, 50, 4708.0, 968.0),
    (400, 100, 18832.0, 3840.0),
];

/// Reference average write energy to populate a full matrix: `(n, m, pj)`.
pub const PROGRAMMING_TOTALS: [(usize, usize, f64); 3] =
    [(100, 25, 3000.0), (200, 50, 12000.0), (400, 100, 50000.0)];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Design {
    Acmca,
    Baseline,
}

/// Transistor-count area model at a fixed technology node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AreaModel {
    /// Four transmission gates of two transistors each.
    pub transistors_per_cell_acmca: f64,
    /// Effective per-cell count of the comparison design, calibrated so the
    /// 400x100 array differs by 160 um^2.
    pub transistors_per_cell_baseline: f64,
    pub area_per_transistor_um2: f64,
}

impl Default for AreaModel {
    fn default() -> Self {
        Self {
            transistors_per_cell_acmca: 8.0,
            transistors_per_cell_baseline: 8.08,
            area_per_transistor_um2: 0.05,
        }
    }
}

impl AreaModel {
    pub fn area_estimate(&self, n: usize, m: usize, which: Design) -> f64 {
        if self.transistors_per_cell_baseline < self.transistors_per_cell_acmca {
            log::warn!(
                "baseline per-cell transistor count {} is below the ACMCA count {}",
                self.transistors_per_cell_baseline,
                self.transistors_per_cell_acmca
            );
        }
        let per_cell = match which {
            Design::Acmca => self.transistors_per_cell_acmca,
            Design::Baseline => self.transistors_per_cell_baseline,
        };
        (n * m) as f64 * per_cell * self.area_per_transistor_um2
    }

    pub fn area_reduction(&self, n: usize, m: usize) -> f64 {
        self.area_estimate(n, m, Design::Baseline) - self.area_estimate(n, m, Design::Acmca)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn table1_vmm_examples() {
        let p = EnergyParams::default();
        let mut ledger = EnergyLedger::new(p);
        ledger.charge_vmm(100 * 25, Tech::Smc);
        assert_relative_eq!(ledger.vmm_pj(), 240.0, max_relative = 1e-12);

        let mut ledger = EnergyLedger::new(p);
        ledger.charge_vmm(400 * 100, Tech::Cmos);
        assert_relative_eq!(ledger.vmm_pj(), 18_832.0, max_relative = 1e-12);

        let mut ledger = EnergyLedger::new(p);
        ledger.charge_vmm(0, Tech::Smc);
        assert_eq!(ledger.vmm_pj(), 0.0);
    }

    #[test]
    fn ratio_examples() {
        let p = EnergyParams::default();
        assert_relative_eq!(improvement_ratio(100, 25, &p), 1177.0 / 240.0, max_relative = 1e-12);
        let constant = 0.4708 / 0.096;
        for (n, m) in [(1, 1), (200, 50), (400, 100), (37, 11)] {
            assert_relative_eq!(improvement_ratio(n, m, &p), constant, max_relative = 1e-12);
        }
        assert!((constant - 4.90).abs() < 0.005);
    }

    #[test]
    fn table1_rows_share_a_per_cell_constant() {
        let per_cell: Vec<(f64, f64)> = TABLE1
            .iter()
            .map(|&(n, m, cmos, smc)| (cmos / (n * m) as f64, smc / (n * m) as f64))
            .collect();
        for (cmos, smc) in &per_cell {
            assert!((cmos / per_cell[0].0 - 1.0).abs() < 0.01);
            assert!((smc / per_cell[0].1 - 1.0).abs() < 0.01);
        }
    }

    #[test]
    fn programming_energy_formula() {
        let p = EnergyParams::default();
        assert_eq!(programming_energy(0, 0, &p), 0.0);
        assert_relative_eq!(
            programming_energy(10, 3, &p),
            10.0 * p.e_write_pulse + 3.0 * p.e_reset_pulse,
            max_relative = 1e-15
        );
    }

    #[test]
    fn ledger_replays_op_log() {
        let p = EnergyParams::default();
        let log = [
            EnergyOp::Vmm { cells: 40, tech: Tech::Smc },
            EnergyOp::WritePulses(7),
            EnergyOp::Resets(2),
            EnergyOp::Reads(9),
            EnergyOp::Vmm { cells: 12, tech: Tech::Cmos },
            EnergyOp::WritePulses(1),
        ];
        let mut live = EnergyLedger::new(p);
        let mut a = EnergyLedger::new(p);
        let mut b = EnergyLedger::new(p);
        for (i, op) in log.iter().enumerate() {
            live.charge(*op);
            if i % 2 == 0 { a.charge(*op) } else { b.charge(*op) }
        }
        a.merge(&b);
        assert_eq!(a, live);
        let replayed: f64 = log
            .iter()
            .map(|op| match *op {
                EnergyOp::Vmm { cells, tech } => cells as f64 * p.e_cell_vmm(tech),
                EnergyOp::WritePulses(n) => n as f64 * p.e_write_pulse,
                EnergyOp::Resets(n) => n as f64 * p.e_reset_pulse,
                EnergyOp::Reads(n) => n as f64 * p.e_read_cell,
            })
            .sum();
        assert_relative_eq!(live.total_pj(), replayed, max_relative = 1e-12);
        assert_eq!(live.op_count(OpKind::Write), 2);
        assert_eq!(live.op_count(OpKind::Vmm), 2);
    }

    #[test]
    fn area_examples() {
        let model = AreaModel::default();
        assert_relative_eq!(model.area_estimate(400, 100, Design::Acmca), 16_000.0, max_relative = 1e-12);
        assert_relative_eq!(model.area_reduction(400, 100), 160.0, max_relative = 1e-9);
        assert_eq!(model.area_estimate(0, 0, Design::Acmca), 0.0);
        assert!(model.area_reduction(100, 25) < 160.0);
    }

    #[test]
    fn default_params_are_valid() {
        assert!(EnergyParams::default().is_valid());
    }
}
