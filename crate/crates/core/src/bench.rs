//! Count-model comparison of packed convolution against three analytic
//! baselines, per `(s_bits, k_bits)` cell:
//!
//! * scalar: one SISD instruction per MAC;
//! * lane: every operand held in its own 16-bit lane as if it were 8 bits,
//!   the usual int8 SIMD kernel;
//! * cmix: one element per lane, bitwidths rounded up to 2, 4 or 8 and the
//!   lane the narrowest one that holds the product.
//!
//! The SIMD baselines are degenerate one-element-per-lane plans, scored by
//! the same count model as the packed kernels on the same register width.

use std::io::Write;

use serde::Serialize;

use crate::conv::{candidates, Variant};
use crate::cost::{predict_counts, report, CostParams};
use crate::error::{Error, Result};
use crate::packing::{derive_plan, PackingPlan, MAX_BITS, MIN_BITS};
use crate::simd::{InstrCounts, SimdShape, LANE_WIDTHS};

pub const CSV_HEADER: [&str; 11] = [
    "s_bits",
    "k_bits",
    "variant",
    "shape",
    "simd_mul",
    "bit_ops",
    "sisd",
    "score",
    "speedup_scalar",
    "speedup_lane",
    "speedup_cmix",
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchConfig {
    pub s_bits: Vec<u32>,
    pub k_bits: Vec<u32>,
    pub variants: Vec<Variant>,
    /// Shapes the packed kernel may choose from; all share one register width.
    pub register_bits: u32,
    pub seq_len: usize,
    pub kernel_len: usize,
    pub params: CostParams,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            s_bits: (MIN_BITS..=MAX_BITS).collect(),
            k_bits: (MIN_BITS..=MAX_BITS).collect(),
            variants: Variant::ALL.to_vec(),
            register_bits: 32,
            seq_len: 256,
            kernel_len: 3,
            params: CostParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub s_bits: u32,
    pub k_bits: u32,
    pub variant: Variant,
    pub shape: SimdShape,
    pub plan: PackingPlan,
    pub simd_mul: u64,
    pub bit_ops: u64,
    pub sisd: u64,
    pub score: f64,
    pub macs_per_mul: f64,
    pub speedup_scalar: f64,
    pub speedup_lane: f64,
    pub speedup_cmix: f64,
}

/// Narrowest of 2, 4 or 8 bits holding `bits`.
pub fn cmix_width(bits: u32) -> u32 {
    [2, 4, 8].into_iter().find(|&w| w >= bits).unwrap_or(bits)
}

fn degenerate(s_bits: u32, k_bits: u32, register_bits: u32) -> Result<PackingPlan> {
    let lane = LANE_WIDTHS
        .into_iter()
        .find(|&l| l >= s_bits + k_bits && l <= register_bits)
        .ok_or(Error::UnsupportedShape { register_bits, lane_bits: s_bits + k_bits })?;
    PackingPlan::new(s_bits, k_bits, 1, 1, s_bits + k_bits, SimdShape::new(register_bits, lane)?, 1)
}

/// One-element-per-16-bit-lane int8 plan.
pub fn lane_baseline_plan(register_bits: u32) -> Result<PackingPlan> {
    degenerate(8, 8, register_bits)
}

pub fn cmix_baseline_plan(s_bits: u32, k_bits: u32, register_bits: u32) -> Result<PackingPlan> {
    degenerate(cmix_width(s_bits), cmix_width(k_bits), register_bits)
}

/// MACs per SIMD multiply of the densest packing over all lane widths of
/// `register_bits`, next to the cmix baseline's.
pub fn packing_density(s_bits: u32, k_bits: u32, register_bits: u32) -> Result<(usize, usize)> {
    let packed = LANE_WIDTHS
        .into_iter()
        .filter_map(|l| SimdShape::new(register_bits, l).ok())
        .filter_map(|sh| derive_plan(s_bits, k_bits, sh, 1).ok())
        .map(|p| p.macs_per_simd_multiply())
        .max()
        .ok_or_else(|| Error::NoFeasiblePlan { s_bits, k_bits, shape: format!("{register_bits}-bit registers") })?;
    let cmix = cmix_baseline_plan(s_bits, k_bits, register_bits)?.macs_per_simd_multiply();
    Ok((packed, cmix))
}

fn scored(counts: &InstrCounts, params: &CostParams) -> f64 {
    report(counts, params).total
}

/// Runs the grid; rows ordered by `s_bits`, `k_bits`, then variant.
pub fn run_bench(cfg: &BenchConfig) -> Result<Vec<BenchRow>> {
    if cfg.s_bits.is_empty() || cfg.k_bits.is_empty() || cfg.variants.is_empty() {
        return Err(Error::BadInput("empty bench grid".into()));
    }
    if cfg.seq_len < cfg.kernel_len || cfg.kernel_len == 0 {
        return Err(Error::BadInput("need 1 <= kernel_len <= seq_len".into()));
    }
    let shapes: Vec<SimdShape> =
        SimdShape::all().into_iter().filter(|s| s.register_bits() == cfg.register_bits).collect();
    if shapes.is_empty() {
        return Err(Error::BadInput(format!("unsupported register width {}", cfg.register_bits)));
    }
    let (n, k) = (cfg.seq_len, cfg.kernel_len);
    let macs = (n * k) as f64;
    let lane_plan = lane_baseline_plan(cfg.register_bits)?;
    let lane_score = scored(&predict_counts(&lane_plan, n, k, Variant::Naive)?, &cfg.params);

    let mut rows = Vec::new();
    for &s in &cfg.s_bits {
        for &kb in &cfg.k_bits {
            let all = candidates(s, kb, k, n, &cfg.params, &shapes)?;
            let cmix_plan = cmix_baseline_plan(s, kb, cfg.register_bits)?;
            let cmix_score = scored(&predict_counts(&cmix_plan, n, k, Variant::Naive)?, &cfg.params);
            for &v in &cfg.variants {
                let best = all.iter().filter(|c| c.variant == v).min_by(|a, b| a.cost.total_cmp(&b.cost)).ok_or_else(
                    || Error::NoFeasiblePlan {
                        s_bits: s,
                        k_bits: kb,
                        shape: format!("{}-bit registers", cfg.register_bits),
                    },
                )?;
                let c = best.counts;
                rows.push(BenchRow {
                    s_bits: s,
                    k_bits: kb,
                    variant: v,
                    shape: best.plan.shape(),
                    plan: best.plan,
                    simd_mul: c.simd_mul,
                    bit_ops: c.bit_ops,
                    sisd: c.sisd_arith,
                    score: best.cost,
                    macs_per_mul: macs / c.simd_mul as f64,
                    speedup_scalar: macs / best.cost,
                    speedup_lane: lane_score / best.cost,
                    speedup_cmix: cmix_score / best.cost,
                });
            }
        }
    }
    Ok(rows)
}

pub fn write_bench_csv(writer: impl Write, rows: &[BenchRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.write_record([
            r.s_bits.to_string(),
            r.k_bits.to_string(),
            r.variant.to_string(),
            r.shape.to_string(),
            r.simd_mul.to_string(),
            r.bit_ops.to_string(),
            r.sisd.to_string(),
            format!("{:.3}", r.score),
            format!("{:.4}", r.speedup_scalar),
            format!("{:.4}", r.speedup_lane),
            format!("{:.4}", r.speedup_cmix),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cmix_widths() {
        assert_eq!([2, 3, 4, 5, 8].map(cmix_width), [2, 4, 4, 8, 8]);
    }

    #[test]
    fn baselines_are_degenerate() {
        let p = lane_baseline_plan(32).unwrap();
        assert_eq!((p.seq_per_lane(), p.ker_per_lane(), p.lane_count()), (1, 1, 2));
        let c = cmix_baseline_plan(2, 2, 32).unwrap();
        assert_eq!((c.shape().lane_bits(), c.lane_count()), (8, 4));
        let c = cmix_baseline_plan(3, 5, 32).unwrap();
        assert_eq!(c.shape().lane_bits(), 16);
    }

    #[test]
    fn eight_bit_density_equals_cmix() {
        for r in [32, 64, 128] {
            let (packed, cmix) = packing_density(8, 8, r).unwrap();
            assert_eq!(packed, cmix);
        }
    }
}
