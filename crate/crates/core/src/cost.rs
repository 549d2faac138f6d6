//! Instruction-count prediction and the weighted complexity score
//! `C = C_sisd + alpha * C_simd + beta * C_bit`.
//!
//! The predicted counts are closed forms of the kernels in [`crate::conv`]
//! and agree with the emulator's tallies exactly. `C_simd` covers SIMD
//! multiplies and adds; loads and stores are reported but not weighted.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::conv::{kernel_chunks, LayerSpec, Variant};
use crate::error::{Error, Result};
use crate::packing::PackingPlan;
use crate::simd::InstrCounts;

pub const DEFAULT_ALPHA: f64 = 4.0;
pub const DEFAULT_BETA: f64 = 1.0;

/// Weights of SIMD and bit instructions relative to one SISD instruction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostParams {
    pub alpha: f64,
    pub beta: f64,
    /// False for the built-in defaults; reports flag uncalibrated scores.
    pub calibrated: bool,
}

impl Default for CostParams {
    fn default() -> Self {
        Self { alpha: DEFAULT_ALPHA, beta: DEFAULT_BETA, calibrated: false }
    }
}

impl CostParams {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite() && beta > 0.0 && beta.is_finite()) {
            return Err(Error::InvalidParams(format!("alpha={alpha}, beta={beta} must be positive")));
        }
        Ok(Self { alpha, beta, calibrated: true })
    }
}

/// Counts grouped into the three weighted classes, plus the weighted total.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CostReport {
    pub c_sisd: u64,
    pub c_simd: u64,
    pub c_bit: u64,
    pub total: f64,
}

pub fn score(c_sisd: u64, c_simd: u64, c_bit: u64, params: &CostParams) -> f64 {
    c_sisd as f64 + params.alpha * c_simd as f64 + params.beta * c_bit as f64
}

pub fn report(counts: &InstrCounts, params: &CostParams) -> CostReport {
    let c_sisd = counts.sisd_arith;
    let c_simd = counts.simd_mul + counts.simd_addsub;
    let c_bit = counts.bit_ops;
    CostReport { c_sisd, c_simd, c_bit, total: score(c_sisd, c_simd, c_bit, params) }
}

/// Counts of the naive path over `len` sequence elements for a kernel chunk
/// of `taps` taps.
fn naive_range(len: usize, ns: usize, lanes: usize, taps: usize) -> InstrCounts {
    let per_reg = ns * lanes;
    let full = (len / per_reg) as u64;
    let rem = len % per_reg;
    let (ns_, l_, t_) = (ns as u64, lanes as u64, taps as u64);

    let fields = ns_ + t_ - 1;
    let seg_full = (fields - 1) + fields + l_ * fields;
    let mut c = InstrCounts {
        sisd_arith: full * l_ * fields,
        simd_mul: full,
        simd_addsub: 0,
        bit_ops: full * (ns_ * l_ + seg_full),
        loads_stores: full,
        segmentation: full * seg_full,
    };
    if rem > 0 {
        let (q, t) = ((rem / ns) as u64, (rem % ns) as u64);
        let first = if q > 0 { ns_ } else { t };
        let rounds = first + t_ - 1;
        let gets = q * fields + if t > 0 { t + t_ - 1 } else { 0 };
        let seg = (rounds - 1) + rounds + gets;
        c += InstrCounts {
            sisd_arith: gets,
            simd_mul: 1,
            simd_addsub: 0,
            bit_ops: rem as u64 + seg,
            loads_stores: 1,
            segmentation: seg,
        };
    }
    c
}

/// Counts of one reordered group of `N_s * N_l^2` elements.
fn reordered_group(ns: usize, lanes: usize, taps: usize) -> InstrCounts {
    let (n, l, t) = (ns as u64, lanes as u64, taps as u64);
    let seg = l * ((n - 1) + n + n * l) + (t - 1) * (2 + l);
    InstrCounts {
        sisd_arith: l * n * l + (t - 1) * l,
        simd_mul: l,
        simd_addsub: l - 1,
        bit_ops: n * l * l + (l - 1) + seg,
        loads_stores: l,
        segmentation: seg,
    }
}

/// Closed-form instruction counts of running `variant` with `plan` on a
/// sequence of `seq_len` elements and a kernel of `ker_len` taps.
pub fn predict_counts(plan: &PackingPlan, seq_len: usize, ker_len: usize, variant: Variant) -> Result<InstrCounts> {
    plan.check()?;
    let lanes = plan.lane_count();
    let needed = variant.accum_rounds(lanes, plan.ker_per_lane(), ker_len);
    if plan.accum_rounds() < needed {
        return Err(Error::InfeasiblePlan(format!(
            "reordered packing on {lanes} lanes needs {needed} accumulation rounds"
        )));
    }
    if seq_len == 0 || ker_len == 0 {
        return Err(Error::EmptyInput);
    }
    let ns = plan.seq_per_lane();
    // Mask broadcast.
    let mut c = InstrCounts { bit_ops: 1, ..Default::default() };
    for (_, taps) in kernel_chunks(ker_len, plan.ker_per_lane()) {
        // Kernel packing and broadcast.
        c.bit_ops += taps as u64 + 1;
        let mut done = 0;
        if variant == Variant::Reordered && crate::conv::reorder_applies(taps, lanes) {
            let group = ns * lanes * lanes;
            let groups = seq_len / group;
            c += reordered_group(ns, lanes, taps).scaled(groups as u64);
            done = groups * group;
        }
        c += naive_range(seq_len - done, ns, lanes, taps);
    }
    Ok(c)
}

/// Counts of a whole layer as lowered by [`crate::conv::conv_layer`].
pub fn predict_layer_counts(plan: &PackingPlan, layer: &LayerSpec, variant: Variant) -> Result<InstrCounts> {
    layer.validate()?;
    let row = predict_counts(plan, layer.width, layer.kernel_size, variant)?;
    let mut per = row;
    per.sisd_arith += layer.out_width() as u64;
    Ok(per.scaled(layer.row_problems() as u64))
}

/// One measurement: counts and an externally measured cost.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRow {
    pub c_sisd: f64,
    pub c_simd: f64,
    pub c_bit: f64,
    pub cost: f64,
}

/// Fitted parameters and the quality of the fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Calibration {
    pub params: CostParams,
    /// Residual sum of squares.
    pub rss: f64,
    /// Root-mean-square residual.
    pub rms: f64,
    pub rows: usize,
}

/// Least-squares fit of `alpha`, `beta` minimising
/// `sum (cost - c_sisd - alpha * c_simd - beta * c_bit)^2`, via the 2x2
/// normal equations with partial pivoting.
pub fn calibrate(rows: &[CalibrationRow]) -> Result<Calibration> {
    if rows.len() < 2 {
        return Err(Error::DegenerateSystem(format!("{} row(s), need at least 2", rows.len())));
    }
    let (mut saa, mut sab, mut sbb, mut say, mut sby) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for r in rows {
        let y = r.cost - r.c_sisd;
        saa += r.c_simd * r.c_simd;
        sab += r.c_simd * r.c_bit;
        sbb += r.c_bit * r.c_bit;
        say += r.c_simd * y;
        sby += r.c_bit * y;
    }
    let det = saa * sbb - sab * sab;
    if det.is_nan() || det.abs() <= 1e-12 * saa * sbb || saa == 0.0 || sbb == 0.0 {
        return Err(Error::DegenerateSystem("c_simd and c_bit columns are collinear".into()));
    }
    // Pivot on the larger diagonal entry of the first column.
    let (alpha, beta) = if saa.abs() >= sab.abs() {
        let m = sab / saa;
        let beta = (sby - m * say) / (sbb - m * sab);
        ((say - sab * beta) / saa, beta)
    } else {
        let m = saa / sab;
        let beta = (say - m * sby) / (sab - m * sbb);
        ((sby - sbb * beta) / sab, beta)
    };
    let rss: f64 = rows
        .iter()
        .map(|r| {
            let e = r.cost - r.c_sisd - alpha * r.c_simd - beta * r.c_bit;
            e * e
        })
        .sum();
    Ok(Calibration {
        params: CostParams::new(alpha, beta)?,
        rss,
        rms: (rss / rows.len() as f64).sqrt(),
        rows: rows.len(),
    })
}

/// Reads calibration rows from CSV with header `c_sisd,c_simd,c_bit,cost`.
pub fn read_calibration_csv(reader: impl Read) -> Result<Vec<CalibrationRow>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.iter().collect::<Vec<_>>() != ["c_sisd", "c_simd", "c_bit", "cost"] {
        return Err(Error::BadInput(format!(
            "calibration header must be `c_sisd,c_simd,c_bit,cost`, got `{}`",
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    rdr.deserialize().map(|r| r.map_err(Error::from)).collect()
}

pub fn write_calibration_csv(writer: impl Write, rows: &[CalibrationRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
