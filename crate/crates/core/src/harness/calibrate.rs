//! Energy and area calibration tables.

use std::fmt::Write as _;

use crate::crossbar::CrossbarArray;
use crate::energy::{
    improvement_ratio, vmm_energy, AreaModel, Design, EnergyParams, Tech, PROGRAMMING_TOTALS,
    TABLE1,
};
use crate::error::Result;
use crate::exec::Execution;
use crate::matrix::{program_matrix, target_levels, MatrixKind, MatrixSpec, ProgramConfig};
use crate::rng::{Domain, StreamKey};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VmmRow {
    pub n: usize,
    pub m: usize,
    pub smc_pj: f64,
    pub cmos_pj: f64,
    pub ratio: f64,
    pub reference_smc_pj: f64,
    pub reference_cmos_pj: f64,
}

pub fn vmm_rows(params: &EnergyParams) -> Vec<VmmRow> {
    TABLE1
        .iter()
        .map(|&(n, m, cmos, smc)| VmmRow {
            n,
            m,
            smc_pj: vmm_energy(n, m, Tech::Smc, params),
            cmos_pj: vmm_energy(n, m, Tech::Cmos, params),
            ratio: improvement_ratio(n, m, params),
            reference_smc_pj: smc,
            reference_cmos_pj: cmos,
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProgrammingRow {
    pub n: usize,
    pub m: usize,
    pub mean_pj: f64,
    pub reference_pj: f64,
    pub mean_pulses_per_cell: f64,
}

/// Full-matrix program-and-verify energy (set pulses and resets) of an
/// `m x n` Gaussian matrix, averaged over `seeds` seeds.
pub fn programming_average(
    n: usize,
    m: usize,
    seeds: u64,
    cfg: &ProgramConfig,
    exec: Execution,
) -> Result<(f64, f64)> {
    let seed_list: Vec<u64> = (0..seeds).collect();
    let per_seed = exec.map(&seed_list, |&seed| -> Result<(f64, u64)> {
        let mut array = CrossbarArray::new(m, n, EnergyParams::default())?;
        let spec = MatrixSpec::uniform(MatrixKind::Gaussian, m, n);
        let targets = target_levels(&spec, &mut StreamKey::new(seed, Domain::Targets, 0).rng(0));
        let out = program_matrix(&mut array, &targets, cfg, &StreamKey::new(seed, Domain::Programming, 0))?;
        Ok((array.ledger().programming_pj(), out.pulses))
    });
    let (mut energy, mut pulses) = (0.0, 0u64);
    for r in per_seed {
        let (e, p) = r?;
        energy += e;
        pulses += p;
    }
    let s = seeds as f64;
    Ok((energy / s, pulses as f64 / (s * (n * m) as f64)))
}

pub fn programming_rows(seeds: u64, exec: Execution) -> Result<Vec<ProgrammingRow>> {
    let cfg = ProgramConfig::default();
    PROGRAMMING_TOTALS
        .iter()
        .map(|&(n, m, reference)| {
            let (mean_pj, pulses) = programming_average(n, m, seeds, &cfg, exec)?;
            Ok(ProgrammingRow {
                n,
                m,
                mean_pj,
                reference_pj: reference,
                mean_pulses_per_cell: pulses,
            })
        })
        .collect()
}

/// Plain-text rendering of the calibration tables.
pub fn render(vmm: &[VmmRow], programming: &[ProgrammingRow]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "VMM energy per operation");
    let _ = writeln!(
        s,
        "{:>9}  {:>10}  {:>10}  {:>6}  {:>14}  {:>14}",
        "N x M", "SMC pJ", "CMOS pJ", "ratio", "reference SMC", "reference CMOS"
    );
    for r in vmm {
        let _ = writeln!(
            s,
            "{:>9}  {:>10.1}  {:>10.1}  {:>6.2}  {:>14.0}  {:>14.0}",
            format!("{}x{}", r.n, r.m),
            r.smc_pj,
            r.cmos_pj,
            r.ratio,
            r.reference_smc_pj,
            r.reference_cmos_pj
        );
    }
    if !programming.is_empty() {
        let _ = writeln!(s);
        let _ = writeln!(s, "Full-matrix programming energy (Gaussian, program-and-verify)");
        let _ = writeln!(
            s,
            "{:>9}  {:>10}  {:>10}  {:>12}",
            "N x M", "mean nJ", "target nJ", "pulses/cell"
        );
        for r in programming {
            let _ = writeln!(
                s,
                "{:>9}  {:>10.3}  {:>10.1}  {:>12.3}",
                format!("{}x{}", r.n, r.m),
                r.mean_pj / 1000.0,
                r.reference_pj / 1000.0,
                r.mean_pulses_per_cell
            );
        }
    }
    let area = AreaModel::default();
    let _ = writeln!(s);
    let _ = writeln!(s, "Array area (um^2)");
    let _ = writeln!(s, "{:>9}  {:>10}  {:>10}  {:>10}", "N x M", "ACMCA", "baseline", "saved");
    for &(n, m, _, _) in &TABLE1 {
        let _ = writeln!(
            s,
            "{:>9}  {:>10.1}  {:>10.1}  {:>10.1}",
            format!("{n}x{m}"),
            area.area_estimate(n, m, Design::Acmca),
            area.area_estimate(n, m, Design::Baseline),
            area.area_reduction(n, m)
        );
    }
    s
}
