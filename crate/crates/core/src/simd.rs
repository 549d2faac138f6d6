//! Bit-exact emulation of a lane-partitioned SIMD register file.
//!
//! Every operation goes through an [`Emulator`] context which tallies the
//! instructions issued, grouped into the classes used by the cost model.
//! Lanes are unsigned; arithmetic wraps modulo `2^lane_bits` and never
//! carries across lane boundaries.

use std::fmt;
use std::ops::{Add, AddAssign, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Register widths the emulator supports.
pub const REGISTER_WIDTHS: [u32; 3] = [32, 64, 128];
/// Lane widths the emulator supports.
pub const LANE_WIDTHS: [u32; 4] = [8, 16, 32, 64];

/// Register width and lane width of the virtual SIMD fabric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SimdShape {
    register_bits: u32,
    lane_bits: u32,
}

impl SimdShape {
    pub fn new(register_bits: u32, lane_bits: u32) -> Result<Self> {
        if !REGISTER_WIDTHS.contains(&register_bits) || !LANE_WIDTHS.contains(&lane_bits) || lane_bits > register_bits {
            return Err(Error::UnsupportedShape { register_bits, lane_bits });
        }
        Ok(Self { register_bits, lane_bits })
    }

    /// All supported shapes, ordered by register width then lane width.
    pub fn all() -> Vec<SimdShape> {
        REGISTER_WIDTHS
            .iter()
            .flat_map(|&r| LANE_WIDTHS.iter().filter_map(move |&l| SimdShape::new(r, l).ok()))
            .collect()
    }

    pub fn register_bits(&self) -> u32 {
        self.register_bits
    }

    pub fn lane_bits(&self) -> u32 {
        self.lane_bits
    }

    pub fn lane_count(&self) -> usize {
        (self.register_bits / self.lane_bits) as usize
    }

    /// Largest value a lane can hold.
    pub fn lane_mask(&self) -> u64 {
        low_mask(self.lane_bits)
    }

    fn register_mask(&self) -> u128 {
        if self.register_bits == 128 {
            u128::MAX
        } else {
            (1u128 << self.register_bits) - 1
        }
    }
}

impl fmt::Display for SimdShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.register_bits, self.lane_bits)
    }
}

impl std::str::FromStr for SimdShape {
    type Err = Error;

    /// Parses `REGISTERxLANE`, e.g. `128x32`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::BadInput(format!("malformed shape `{s}`, expected e.g. 128x32"));
        let (r, l) = s.split_once(['x', 'X']).ok_or_else(bad)?;
        let r = r.trim().parse().map_err(|_| bad())?;
        let l = l.trim().parse().map_err(|_| bad())?;
        SimdShape::new(r, l)
    }
}

pub(crate) fn low_mask(bits: u32) -> u64 {
    if bits >= 64 {
        u64::MAX
    } else {
        (1u64 << bits) - 1
    }
}

/// A register value: `register_bits` of payload, lane `l` in bits
/// `[l * lane_bits, (l + 1) * lane_bits)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SimdVec {
    shape: SimdShape,
    bits: u128,
}

impl SimdVec {
    pub fn zero(shape: SimdShape) -> Self {
        Self { shape, bits: 0 }
    }

    /// Builds a register from lane values without touching any counter.
    pub fn from_lanes(shape: SimdShape, lanes: &[u64]) -> Result<Self> {
        if lanes.len() != shape.lane_count() {
            return Err(Error::LaneCountMismatch { expected: shape.lane_count(), got: lanes.len() });
        }
        let mut bits = 0u128;
        for (l, &v) in lanes.iter().enumerate() {
            if v > shape.lane_mask() {
                return Err(Error::ScalarTooWide { scalar: v, lane_bits: shape.lane_bits });
            }
            bits |= (v as u128) << (l as u32 * shape.lane_bits);
        }
        Ok(Self { shape, bits })
    }

    /// Wraps a raw payload; bits at or above `register_bits` are rejected.
    pub fn from_bits(shape: SimdShape, bits: u128) -> Result<Self> {
        if bits & !shape.register_mask() != 0 {
            return Err(Error::BadInput(format!("payload wider than {} bits", shape.register_bits)));
        }
        Ok(Self { shape, bits })
    }

    pub fn shape(&self) -> SimdShape {
        self.shape
    }

    pub fn bits(&self) -> u128 {
        self.bits
    }

    /// Uncounted lane read, for inspection and tests.
    pub fn lane(&self, lane: usize) -> u64 {
        ((self.bits >> (lane as u32 * self.shape.lane_bits)) as u64) & self.shape.lane_mask()
    }

    pub fn lanes(&self) -> Vec<u64> {
        (0..self.shape.lane_count()).map(|l| self.lane(l)).collect()
    }

    fn map_lanes(self, f: impl Fn(usize, u64) -> u64) -> Self {
        let mask = self.shape.lane_mask();
        let mut bits = 0u128;
        for l in 0..self.shape.lane_count() {
            let v = f(l, self.lane(l)) & mask;
            bits |= (v as u128) << (l as u32 * self.shape.lane_bits);
        }
        Self { shape: self.shape, bits }
    }
}

/// Per-class instruction tallies.
///
/// `segmentation` is not an extra class: it counts the subset of `bit_ops`
/// issued while extracting output fields from packed products.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct InstrCounts {
    pub sisd_arith: u64,
    pub simd_mul: u64,
    pub simd_addsub: u64,
    pub bit_ops: u64,
    pub loads_stores: u64,
    pub segmentation: u64,
}

impl InstrCounts {
    pub fn scaled(&self, factor: u64) -> Self {
        Self {
            sisd_arith: self.sisd_arith * factor,
            simd_mul: self.simd_mul * factor,
            simd_addsub: self.simd_addsub * factor,
            bit_ops: self.bit_ops * factor,
            loads_stores: self.loads_stores * factor,
            segmentation: self.segmentation * factor,
        }
    }
}

impl Add for InstrCounts {
    type Output = InstrCounts;

    fn add(self, o: InstrCounts) -> InstrCounts {
        InstrCounts {
            sisd_arith: self.sisd_arith + o.sisd_arith,
            simd_mul: self.simd_mul + o.simd_mul,
            simd_addsub: self.simd_addsub + o.simd_addsub,
            bit_ops: self.bit_ops + o.bit_ops,
            loads_stores: self.loads_stores + o.loads_stores,
            segmentation: self.segmentation + o.segmentation,
        }
    }
}

impl AddAssign for InstrCounts {
    fn add_assign(&mut self, o: InstrCounts) {
        *self = *self + o;
    }
}

impl Sub for InstrCounts {
    type Output = InstrCounts;

    /// Counter delta; `self` must be a later snapshot than `o`.
    fn sub(self, o: InstrCounts) -> InstrCounts {
        InstrCounts {
            sisd_arith: self.sisd_arith - o.sisd_arith,
            simd_mul: self.simd_mul - o.simd_mul,
            simd_addsub: self.simd_addsub - o.simd_addsub,
            bit_ops: self.bit_ops - o.bit_ops,
            loads_stores: self.loads_stores - o.loads_stores,
            segmentation: self.segmentation - o.segmentation,
        }
    }
}

/// How much a kernel trusts its packing plan.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Validation {
    /// Reject illegal plans, otherwise trust the guard-bit analysis.
    #[default]
    Trust,
    /// Reject illegal plans and recompute every extracted field in wide
    /// integer arithmetic.
    Shadow,
    /// Run illegal plans anyway with the shadow check on. Used to probe
    /// guard-bit bounds.
    ShadowAllowIllegal,
}

impl Validation {
    pub fn shadow(self) -> bool {
        !matches!(self, Validation::Trust)
    }
}

/// Emulator context: the instruction counters plus validation settings.
///
/// Contexts are independent values; run distinct contexts on distinct
/// threads for parallel work.
#[derive(Debug, Clone, Default)]
pub struct Emulator {
    counts: InstrCounts,
    in_segmentation: bool,
    validation: Validation,
}

impl Emulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_validation(validation: Validation) -> Self {
        Self { validation, ..Self::default() }
    }

    pub fn validation(&self) -> Validation {
        self.validation
    }

    pub fn reset_counters(&mut self) {
        self.counts = InstrCounts::default();
    }

    pub fn read_counters(&self) -> InstrCounts {
        self.counts
    }

    /// Runs `f` with segmentation tallying on: bit ops issued inside are
    /// also counted as segmentation-class.
    pub fn segmentation<T>(&mut self, f: impl FnOnce(&mut Self) -> T) -> T {
        let prev = self.set_segmentation(true);
        let out = f(self);
        self.set_segmentation(prev);
        out
    }

    /// Turns segmentation tallying on or off, returning the previous state.
    pub fn set_segmentation(&mut self, on: bool) -> bool {
        std::mem::replace(&mut self.in_segmentation, on)
    }

    fn bit_op(&mut self) {
        self.counts.bit_ops += 1;
        if self.in_segmentation {
            self.counts.segmentation += 1;
        }
    }

    pub fn vdup(&mut self, shape: SimdShape, scalar: u64) -> Result<SimdVec> {
        if scalar > shape.lane_mask() {
            return Err(Error::ScalarTooWide { scalar, lane_bits: shape.lane_bits });
        }
        self.bit_op();
        Ok(SimdVec::zero(shape).map_lanes(|_, _| scalar))
    }

    /// Vector load of one word per lane.
    pub fn vld(&mut self, shape: SimdShape, lanes: &[u64]) -> Result<SimdVec> {
        let v = SimdVec::from_lanes(shape, lanes)?;
        self.counts.loads_stores += 1;
        Ok(v)
    }

    /// Lane-wise multiply keeping the low `lane_bits` of each product.
    pub fn vmul(&mut self, a: SimdVec, b: SimdVec) -> Result<SimdVec> {
        if a.shape != b.shape {
            return Err(Error::ShapeMismatch);
        }
        self.counts.simd_mul += 1;
        Ok(a.map_lanes(|l, x| (x as u128 * b.lane(l) as u128) as u64))
    }

    pub fn vadd(&mut self, a: SimdVec, b: SimdVec) -> Result<SimdVec> {
        if a.shape != b.shape {
            return Err(Error::ShapeMismatch);
        }
        self.counts.simd_addsub += 1;
        Ok(a.map_lanes(|l, x| x.wrapping_add(b.lane(l))))
    }

    /// Lane-wise logical right shift.
    pub fn vshr(&mut self, a: SimdVec, amount: u32) -> Result<SimdVec> {
        if amount >= a.shape.lane_bits {
            return Err(Error::ShiftOutOfRange { amount, lane_bits: a.shape.lane_bits });
        }
        self.bit_op();
        Ok(a.map_lanes(|_, x| x >> amount))
    }

    pub fn vand(&mut self, a: SimdVec, b: SimdVec) -> Result<SimdVec> {
        if a.shape != b.shape {
            return Err(Error::ShapeMismatch);
        }
        self.bit_op();
        Ok(SimdVec { shape: a.shape, bits: a.bits & b.bits })
    }

    pub fn vget(&mut self, a: SimdVec, lane: usize) -> Result<u64> {
        if lane >= a.shape.lane_count() {
            return Err(Error::LaneOutOfRange { lane, lanes: a.shape.lane_count() });
        }
        self.bit_op();
        Ok(a.lane(lane))
    }

    /// Scalar `acc | (value << shift)`, one barrel-shifted ORR.
    pub fn pack_or(&mut self, acc: u64, value: u64, shift: u32) -> u64 {
        self.bit_op();
        acc | (value << shift)
    }

    /// Scalar accumulate.
    pub fn sisd_add(&mut self, acc: u64, value: u64) -> u64 {
        self.counts.sisd_arith += 1;
        acc.wrapping_add(value)
    }

    /// Scalar multiply-accumulate (single MLA).
    pub fn sisd_mac(&mut self, acc: u64, a: u64, b: u64) -> u64 {
        self.counts.sisd_arith += 1;
        acc.wrapping_add(a.wrapping_mul(b))
    }
}
