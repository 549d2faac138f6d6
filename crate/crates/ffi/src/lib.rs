//! C ABI over the mixq engine.
//!
//! Every fallible call returns a [`MixqStatus`]; on failure the message is
//! available from [`mixq_last_error`] on the same thread until the next
//! failing call. Emulators are opaque handles created with
//! [`mixq_emulator_new`] and released with [`mixq_emulator_free`].

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use mixq::conv::{reference_conv, select_plan, slbc, ConvProblem, Variant};
use mixq::cost::{calibrate, report, CalibrationRow, CostParams};
use mixq::packing::{derive_plan_for_kernel, PackingPlan, QuantizedTensor};
use mixq::simd::{Emulator, InstrCounts, SimdShape, Validation};
use mixq::Error;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MixqStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    NoFeasiblePlan = 3,
    InfeasiblePlan = 4,
    FieldOverflow = 5,
    DegenerateSystem = 6,
    BufferTooSmall = 7,
    Internal = 99,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MixqVariant {
    Naive = 0,
    Reordered = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MixqValidation {
    Trust = 0,
    Shadow = 1,
    ShadowAllowIllegal = 2,
}

/// Instruction tallies; `segmentation` is a subset of `bit_ops`.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MixqCounts {
    pub sisd_arith: u64,
    pub simd_mul: u64,
    pub simd_addsub: u64,
    pub bit_ops: u64,
    pub loads_stores: u64,
    pub segmentation: u64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MixqPlan {
    pub seq_bits: u32,
    pub ker_bits: u32,
    pub seq_per_lane: u32,
    pub ker_per_lane: u32,
    pub slot_bits: u32,
    pub register_bits: u32,
    pub lane_bits: u32,
    pub accum_rounds: u32,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixqCostParams {
    pub alpha: f64,
    pub beta: f64,
}

/// Opaque emulator context.
pub struct MixqEmulator {
    inner: Emulator,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> MixqStatus {
    match e {
        Error::NoFeasiblePlan { .. } => MixqStatus::NoFeasiblePlan,
        Error::InfeasiblePlan(_) | Error::PlanMismatch(_) => MixqStatus::InfeasiblePlan,
        Error::FieldOverflow { .. } => MixqStatus::FieldOverflow,
        Error::DegenerateSystem(_) => MixqStatus::DegenerateSystem,
        _ => MixqStatus::InvalidArgument,
    }
}

/// Runs `f`, turning errors and panics into a status plus message.
fn guard(f: impl FnOnce() -> Result<(), (MixqStatus, String)>) -> MixqStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MixqStatus::Ok,
        Ok(Err((s, msg))) => {
            set_error(&msg);
            s
        }
        Err(_) => {
            set_error("internal panic");
            MixqStatus::Internal
        }
    }
}

fn lib(e: Error) -> (MixqStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (MixqStatus, String) {
    (MixqStatus::NullPointer, format!("{what} is null"))
}

fn counts_out(c: InstrCounts) -> MixqCounts {
    MixqCounts {
        sisd_arith: c.sisd_arith,
        simd_mul: c.simd_mul,
        simd_addsub: c.simd_addsub,
        bit_ops: c.bit_ops,
        loads_stores: c.loads_stores,
        segmentation: c.segmentation,
    }
}

fn counts_in(c: &MixqCounts) -> InstrCounts {
    InstrCounts {
        sisd_arith: c.sisd_arith,
        simd_mul: c.simd_mul,
        simd_addsub: c.simd_addsub,
        bit_ops: c.bit_ops,
        loads_stores: c.loads_stores,
        segmentation: c.segmentation,
    }
}

fn plan_out(p: &PackingPlan) -> MixqPlan {
    MixqPlan {
        seq_bits: p.seq_bits(),
        ker_bits: p.ker_bits(),
        seq_per_lane: p.seq_per_lane() as u32,
        ker_per_lane: p.ker_per_lane() as u32,
        slot_bits: p.slot_bits(),
        register_bits: p.shape().register_bits(),
        lane_bits: p.shape().lane_bits(),
        accum_rounds: p.accum_rounds() as u32,
    }
}

fn plan_in(p: &MixqPlan) -> Result<PackingPlan, Error> {
    let shape = SimdShape::new(p.register_bits, p.lane_bits)?;
    PackingPlan::new(
        p.seq_bits,
        p.ker_bits,
        p.seq_per_lane as usize,
        p.ker_per_lane as usize,
        p.slot_bits,
        shape,
        p.accum_rounds as usize,
    )
}

fn variant_in(v: MixqVariant) -> Variant {
    match v {
        MixqVariant::Naive => Variant::Naive,
        MixqVariant::Reordered => Variant::Reordered,
    }
}

unsafe fn params_in(p: *const MixqCostParams) -> Result<CostParams, Error> {
    match p.as_ref() {
        None => Ok(CostParams::default()),
        Some(p) => CostParams::new(p.alpha, p.beta),
    }
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], (MixqStatus, String)> {
    if len == 0 {
        Ok(&[])
    } else if p.is_null() {
        Err(null(what))
    } else {
        Ok(std::slice::from_raw_parts(p, len))
    }
}

/// Message of the last failing call on this thread; empty if none. The
/// pointer stays valid until the next failing call on this thread.
#[no_mangle]
pub extern "C" fn mixq_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn mixq_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

#[no_mangle]
pub unsafe extern "C" fn mixq_emulator_new(validation: MixqValidation, out: *mut *mut MixqEmulator) -> MixqStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let v = match validation {
            MixqValidation::Trust => Validation::Trust,
            MixqValidation::Shadow => Validation::Shadow,
            MixqValidation::ShadowAllowIllegal => Validation::ShadowAllowIllegal,
        };
        *out = Box::into_raw(Box::new(MixqEmulator { inner: Emulator::with_validation(v) }));
        Ok(())
    })
}

/// Releases a handle from [`mixq_emulator_new`]; null is ignored.
#[no_mangle]
pub unsafe extern "C" fn mixq_emulator_free(emu: *mut MixqEmulator) {
    if !emu.is_null() {
        drop(Box::from_raw(emu));
    }
}

#[no_mangle]
pub unsafe extern "C" fn mixq_emulator_reset(emu: *mut MixqEmulator) -> MixqStatus {
    guard(|| {
        emu.as_mut().ok_or_else(|| null("emu"))?.inner.reset_counters();
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn mixq_emulator_read_counters(emu: *const MixqEmulator, out: *mut MixqCounts) -> MixqStatus {
    guard(|| {
        let emu = emu.as_ref().ok_or_else(|| null("emu"))?;
        *out.as_mut().ok_or_else(|| null("out"))? = counts_out(emu.inner.read_counters());
        Ok(())
    })
}

/// Densest legal plan on one shape, packing the whole kernel in a lane when
/// possible.
#[no_mangle]
pub unsafe extern "C" fn mixq_derive_plan(
    seq_bits: u32,
    ker_bits: u32,
    register_bits: u32,
    lane_bits: u32,
    accum_rounds: u32,
    kernel_len: usize,
    out: *mut MixqPlan,
) -> MixqStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let shape = SimdShape::new(register_bits, lane_bits).map_err(lib)?;
        let plan = derive_plan_for_kernel(seq_bits, ker_bits, shape, accum_rounds as usize, kernel_len).map_err(lib)?;
        *out = plan_out(&plan);
        Ok(())
    })
}

/// Cheapest plan and kernel over all shapes. `params` may be null for the
/// uncalibrated defaults. Any of the outputs except `plan` may be null.
#[no_mangle]
pub unsafe extern "C" fn mixq_select_plan(
    seq_bits: u32,
    ker_bits: u32,
    kernel_len: usize,
    seq_len: usize,
    params: *const MixqCostParams,
    plan: *mut MixqPlan,
    variant: *mut MixqVariant,
    cost: *mut f64,
) -> MixqStatus {
    guard(|| {
        let out = plan.as_mut().ok_or_else(|| null("plan"))?;
        let params = params_in(params).map_err(lib)?;
        let c = select_plan(seq_bits, ker_bits, kernel_len, seq_len, &params, None).map_err(lib)?;
        *out = plan_out(&c.plan);
        if let Some(v) = variant.as_mut() {
            *v = match c.variant {
                Variant::Naive => MixqVariant::Naive,
                Variant::Reordered => MixqVariant::Reordered,
            };
        }
        if let Some(x) = cost.as_mut() {
            *x = c.cost;
        }
        Ok(())
    })
}

/// Packed convolution of `seq` with `ker`. Writes `seq_len + ker_len - 1`
/// outputs; `out_cap` smaller than that fails with `BufferTooSmall` and
/// still stores the required length in `out_len`. Counters accumulate on
/// `emu`.
#[no_mangle]
pub unsafe extern "C" fn mixq_conv(
    emu: *mut MixqEmulator,
    plan: *const MixqPlan,
    variant: MixqVariant,
    seq: *const u32,
    seq_len: usize,
    ker: *const u32,
    ker_len: usize,
    out: *mut u64,
    out_cap: usize,
    out_len: *mut usize,
) -> MixqStatus {
    guard(|| {
        let emu = emu.as_mut().ok_or_else(|| null("emu"))?;
        let plan = plan_in(plan.as_ref().ok_or_else(|| null("plan"))?).map_err(lib)?;
        let s = slice(seq, seq_len, "seq")?;
        let k = slice(ker, ker_len, "ker")?;
        let need = (seq_len + ker_len).saturating_sub(1);
        if let Some(n) = out_len.as_mut() {
            *n = need;
        }
        if out_cap < need {
            return Err((MixqStatus::BufferTooSmall, format!("need {need} outputs, buffer holds {out_cap}")));
        }
        let s = QuantizedTensor::new(s.to_vec(), plan.seq_bits()).map_err(lib)?;
        let k = QuantizedTensor::new(k.to_vec(), plan.ker_bits()).map_err(lib)?;
        let p = ConvProblem::new(s, k, plan).map_err(lib)?;
        let r = slbc(&p, variant_in(variant), &mut emu.inner).map_err(lib)?;
        if out.is_null() {
            return Err(null("out"));
        }
        std::slice::from_raw_parts_mut(out, need).copy_from_slice(&r.outputs);
        Ok(())
    })
}

/// Exact wide-integer convolution, for checking [`mixq_conv`].
#[no_mangle]
pub unsafe extern "C" fn mixq_reference_conv(
    seq: *const u32,
    seq_len: usize,
    ker: *const u32,
    ker_len: usize,
    out: *mut u64,
    out_cap: usize,
) -> MixqStatus {
    guard(|| {
        let s = slice(seq, seq_len, "seq")?;
        let k = slice(ker, ker_len, "ker")?;
        let need = (seq_len + ker_len).saturating_sub(1);
        if out_cap < need {
            return Err((MixqStatus::BufferTooSmall, format!("need {need} outputs, buffer holds {out_cap}")));
        }
        let width = |v: &[u32]| (32 - v.iter().max().copied().unwrap_or(0).leading_zeros()).clamp(1, 16);
        let st = QuantizedTensor::new(s.to_vec(), width(s)).map_err(lib)?;
        let kt = QuantizedTensor::new(k.to_vec(), width(k)).map_err(lib)?;
        let y = reference_conv(&st, &kt).map_err(lib)?;
        if out.is_null() {
            return Err(null("out"));
        }
        std::slice::from_raw_parts_mut(out, need).copy_from_slice(&y);
        Ok(())
    })
}

/// Weighted cost of `counts`; `params` may be null for the defaults.
#[no_mangle]
pub unsafe extern "C" fn mixq_score(
    counts: *const MixqCounts,
    params: *const MixqCostParams,
    out: *mut f64,
) -> MixqStatus {
    guard(|| {
        let c = counts.as_ref().ok_or_else(|| null("counts"))?;
        let params = params_in(params).map_err(lib)?;
        *out.as_mut().ok_or_else(|| null("out"))? = report(&counts_in(c), &params).total;
        Ok(())
    })
}

/// Least-squares fit over `n_rows` rows of `[c_sisd, c_simd, c_bit, cost]`
/// stored contiguously. `rss` may be null.
#[no_mangle]
pub unsafe extern "C" fn mixq_calibrate(
    rows: *const f64,
    n_rows: usize,
    out: *mut MixqCostParams,
    rss: *mut f64,
) -> MixqStatus {
    guard(|| {
        let flat = slice(rows, n_rows * 4, "rows")?;
        let rows: Vec<CalibrationRow> = flat
            .chunks_exact(4)
            .map(|r| CalibrationRow { c_sisd: r[0], c_simd: r[1], c_bit: r[2], cost: r[3] })
            .collect();
        let cal = calibrate(&rows).map_err(lib)?;
        *out.as_mut().ok_or_else(|| null("out"))? = MixqCostParams { alpha: cal.params.alpha, beta: cal.params.beta };
        if let Some(r) = rss.as_mut() {
            *r = cal.rss;
        }
        Ok(())
    })
}
