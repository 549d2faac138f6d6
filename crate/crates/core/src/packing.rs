//! Scalar packing algebra.
//!
//! A run of low-bitwidth values `v[0..n]` is packed as the polynomial
//! `sum v[i] * 2^(i * G)` in one machine word, `G` being the slot width.
//! Multiplying a packed sequence segment by a packed kernel yields, field by
//! field, the linear convolution of the two, provided each field has enough
//! guard bits to absorb its accumulation and the whole product fits the
//! word. [`PackingPlan`] is the certificate that both hold.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simd::{low_mask, SimdShape};

/// Smallest and largest element bitwidth the planner accepts.
pub const MIN_BITS: u32 = 2;
pub const MAX_BITS: u32 = 8;

/// `ceil(log2(n))` for `n >= 1`.
pub fn ceil_log2(n: usize) -> u32 {
    assert!(n >= 1, "ceil_log2 of zero");
    usize::BITS - (n - 1).leading_zeros()
}

/// Minimum slot width for the given operand widths, elements per lane and
/// local accumulation rounds.
pub fn required_slot_bits(
    seq_bits: u32,
    ker_bits: u32,
    seq_per_lane: usize,
    ker_per_lane: usize,
    accum_rounds: usize,
) -> u32 {
    seq_bits + ker_bits + ceil_log2(seq_per_lane.min(ker_per_lane)) + ceil_log2(accum_rounds)
}

/// Elements per lane, slot width and accumulation depth for a packed
/// convolution on a given SIMD shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PackingPlan {
    seq_bits: u32,
    ker_bits: u32,
    seq_per_lane: usize,
    ker_per_lane: usize,
    slot_bits: u32,
    shape: SimdShape,
    accum_rounds: usize,
}

impl PackingPlan {
    /// Builds a plan and checks every legality constraint.
    pub fn new(
        seq_bits: u32,
        ker_bits: u32,
        seq_per_lane: usize,
        ker_per_lane: usize,
        slot_bits: u32,
        shape: SimdShape,
        accum_rounds: usize,
    ) -> Result<Self> {
        let plan = Self::new_unchecked(seq_bits, ker_bits, seq_per_lane, ker_per_lane, slot_bits, shape, accum_rounds);
        plan.check()?;
        Ok(plan)
    }

    /// Builds a plan without checking legality. Kernels refuse to run such
    /// a plan unless shadow validation explicitly allows it.
    pub fn new_unchecked(
        seq_bits: u32,
        ker_bits: u32,
        seq_per_lane: usize,
        ker_per_lane: usize,
        slot_bits: u32,
        shape: SimdShape,
        accum_rounds: usize,
    ) -> Self {
        Self { seq_bits, ker_bits, seq_per_lane, ker_per_lane, slot_bits, shape, accum_rounds }
    }

    pub fn seq_bits(&self) -> u32 {
        self.seq_bits
    }
    pub fn ker_bits(&self) -> u32 {
        self.ker_bits
    }
    /// Sequence elements per lane (N_s).
    pub fn seq_per_lane(&self) -> usize {
        self.seq_per_lane
    }
    /// Kernel taps per lane (N_k).
    pub fn ker_per_lane(&self) -> usize {
        self.ker_per_lane
    }
    /// Slot width in bits (G_b).
    pub fn slot_bits(&self) -> u32 {
        self.slot_bits
    }
    pub fn shape(&self) -> SimdShape {
        self.shape
    }
    pub fn accum_rounds(&self) -> usize {
        self.accum_rounds
    }
    pub fn lane_count(&self) -> usize {
        self.shape.lane_count()
    }

    /// MACs computed by one lane multiply.
    pub fn macs_per_lane_multiply(&self) -> usize {
        self.seq_per_lane * self.ker_per_lane
    }

    /// MACs computed by one SIMD multiply when the kernel fills its slots.
    pub fn macs_per_simd_multiply(&self) -> usize {
        self.macs_per_lane_multiply() * self.lane_count()
    }

    /// Copy with a different slot width, legality unchecked.
    pub fn with_slot_bits_unchecked(&self, slot_bits: u32) -> Self {
        Self { slot_bits, ..*self }
    }

    /// Copy with a different accumulation depth, legality unchecked.
    pub fn with_accum_rounds_unchecked(&self, accum_rounds: usize) -> Self {
        Self { accum_rounds, ..*self }
    }

    /// Lists every violated constraint; empty means legal.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        let lane = self.shape.lane_bits() as usize;
        let g = self.slot_bits as usize;
        if self.seq_per_lane == 0 || self.ker_per_lane == 0 || self.accum_rounds == 0 {
            v.push("elements per lane and accumulation rounds must be >= 1".to_string());
            return v;
        }
        if !(MIN_BITS..=MAX_BITS).contains(&self.seq_bits) || !(MIN_BITS..=MAX_BITS).contains(&self.ker_bits) {
            v.push(format!("bitwidths must lie in {MIN_BITS}..={MAX_BITS}"));
        }
        let guard = (self.seq_bits
            + self.ker_bits
            + ceil_log2(self.seq_per_lane.min(self.ker_per_lane))
            + ceil_log2(self.accum_rounds)) as usize;
        if g < guard {
            v.push(format!("slot width {g} below guard requirement {guard}"));
        }
        if (self.seq_per_lane - 1) * g + self.seq_bits as usize > lane {
            v.push(format!("{} sequence elements do not fit a {lane}-bit lane", self.seq_per_lane));
        }
        if (self.ker_per_lane - 1) * g + self.ker_bits as usize > lane {
            v.push(format!("{} kernel taps do not fit a {lane}-bit lane", self.ker_per_lane));
        }
        if (self.seq_per_lane + self.ker_per_lane - 2) * g + guard > lane {
            v.push(format!("packed product overflows a {lane}-bit lane"));
        }
        v
    }

    pub fn is_legal(&self) -> bool {
        self.violations().is_empty()
    }

    pub fn check(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::InfeasiblePlan(v.join("; ")))
        }
    }
}

fn check_bits(bits: u32) -> Result<()> {
    if (MIN_BITS..=MAX_BITS).contains(&bits) {
        Ok(())
    } else {
        Err(Error::UnsupportedBitwidth(bits))
    }
}

/// Every legal plan with `ker_per_lane <= max_ker_per_lane`, each at its
/// minimal slot width, ordered by `(seq_per_lane, ker_per_lane)`.
pub fn enumerate_plans(
    seq_bits: u32,
    ker_bits: u32,
    shape: SimdShape,
    accum_rounds: usize,
    max_ker_per_lane: usize,
) -> Result<Vec<PackingPlan>> {
    check_bits(seq_bits)?;
    check_bits(ker_bits)?;
    let lane = shape.lane_bits() as usize;
    let mut out = Vec::new();
    // Slots are at least 4 bits wide, so no lane holds more than lane/4 + 1.
    let cap = lane / 4 + 1;
    for ns in 1..=cap {
        for nk in 1..=cap.min(max_ker_per_lane) {
            let g = required_slot_bits(seq_bits, ker_bits, ns, nk, accum_rounds);
            let plan = PackingPlan::new_unchecked(seq_bits, ker_bits, ns, nk, g, shape, accum_rounds);
            if plan.is_legal() {
                out.push(plan);
            }
        }
    }
    Ok(out)
}

fn no_plan(seq_bits: u32, ker_bits: u32, shape: SimdShape) -> Error {
    Error::NoFeasiblePlan { s_bits: seq_bits, k_bits: ker_bits, shape: shape.to_string() }
}

/// The densest legal plan: maximises `N_s * N_k`, ties to larger `N_s`,
/// then smaller slot width.
pub fn derive_plan(seq_bits: u32, ker_bits: u32, shape: SimdShape, accum_rounds: usize) -> Result<PackingPlan> {
    let plans = enumerate_plans(seq_bits, ker_bits, shape, accum_rounds, usize::MAX)?;
    densest(plans.into_iter()).ok_or_else(|| no_plan(seq_bits, ker_bits, shape))
}

fn densest(plans: impl Iterator<Item = PackingPlan>) -> Option<PackingPlan> {
    plans.min_by(|a, b| {
        b.macs_per_lane_multiply()
            .cmp(&a.macs_per_lane_multiply())
            .then(b.seq_per_lane.cmp(&a.seq_per_lane))
            .then(a.slot_bits.cmp(&b.slot_bits))
    })
}

/// Plan for a concrete kernel length: packs the whole kernel in one lane
/// (`N_k = kernel_len`) when any legal plan allows it, taking the largest
/// `N_s`; otherwise falls back to the densest plan with `N_k < kernel_len`.
pub fn derive_plan_for_kernel(
    seq_bits: u32,
    ker_bits: u32,
    shape: SimdShape,
    accum_rounds: usize,
    kernel_len: usize,
) -> Result<PackingPlan> {
    if kernel_len == 0 {
        return Err(Error::EmptyInput);
    }
    let plans = enumerate_plans(seq_bits, ker_bits, shape, accum_rounds, kernel_len)?;
    let whole = plans.iter().copied().filter(|p| p.ker_per_lane == kernel_len);
    densest(whole).or_else(|| densest(plans.into_iter())).ok_or_else(|| no_plan(seq_bits, ker_bits, shape))
}

/// `sum values[i] * 2^(i * slot_bits)`.
pub fn pack_word(values: &[u64], slot_bits: u32) -> Result<u128> {
    if values.len() as u64 * slot_bits as u64 > 128 || slot_bits > 64 {
        return Err(Error::WordOverflow { fields: values.len(), slot_bits, word_bits: 128 });
    }
    let mut word = 0u128;
    for (i, &v) in values.iter().enumerate() {
        if v > low_mask(slot_bits) {
            return Err(Error::SlotOverflow { value: v, slot_bits });
        }
        word |= (v as u128) << (i as u32 * slot_bits);
    }
    Ok(word)
}

/// Reads `count` fields of `slot_bits` each, lowest first. Fields that lie
/// past bit 127 read as zero.
pub fn extract_fields(word: u128, slot_bits: u32, count: usize) -> Vec<u64> {
    let mask = low_mask(slot_bits.min(64)) as u128;
    (0..count)
        .map(|i| {
            let shift = i as u64 * slot_bits as u64;
            if shift >= 128 {
                0
            } else {
                ((word >> shift) & mask) as u64
            }
        })
        .collect()
}

/// Quantized element stream: unsigned codes plus the zero point that maps
/// them back to signed values (`signed = code - zero_point`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuantizedTensor {
    values: Vec<u32>,
    bits: u32,
    #[serde(default)]
    zero_point: u32,
}

impl QuantizedTensor {
    pub fn new(values: Vec<u32>, bits: u32) -> Result<Self> {
        Self::with_zero_point(values, bits, 0)
    }

    pub fn with_zero_point(values: Vec<u32>, bits: u32, zero_point: u32) -> Result<Self> {
        if bits == 0 || bits > 16 {
            return Err(Error::UnsupportedBitwidth(bits));
        }
        if let Some(&value) = values.iter().find(|&&v| v as u64 > low_mask(bits)) {
            return Err(Error::ValueOutOfRange { value, bits });
        }
        if zero_point as u64 > low_mask(bits) {
            return Err(Error::ValueOutOfRange { value: zero_point, bits });
        }
        Ok(Self { values, bits, zero_point })
    }

    /// Offsets signed values by `zero_point` into unsigned codes.
    pub fn from_signed(values: &[i32], bits: u32, zero_point: u32) -> Result<Self> {
        let codes = values
            .iter()
            .map(|&x| {
                let c = x as i64 + zero_point as i64;
                if c < 0 || c as u64 > low_mask(bits.min(16)) {
                    Err(Error::BadInput(format!("{x} not representable at {bits} bits")))
                } else {
                    Ok(c as u32)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Self::with_zero_point(codes, bits, zero_point)
    }

    pub fn values(&self) -> &[u32] {
        &self.values
    }
    pub fn bits(&self) -> u32 {
        self.bits
    }
    pub fn zero_point(&self) -> u32 {
        self.zero_point
    }
    pub fn len(&self) -> usize {
        self.values.len()
    }
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn signed_values(&self) -> Vec<i64> {
        self.values.iter().map(|&v| v as i64 - self.zero_point as i64).collect()
    }
}

/// Convolution through scalar packed words: sequence segments of `N_s`
/// elements times the packed kernel, one wide multiply per segment, then
/// overlap-add of the `|k| - 1` boundary outputs between segments.
pub fn scalar_packed_conv(s: &QuantizedTensor, k: &QuantizedTensor, plan: &PackingPlan) -> Result<Vec<u64>> {
    if s.is_empty() || k.is_empty() {
        return Err(Error::EmptyInput);
    }
    plan.check()?;
    if s.bits() > plan.seq_bits || k.bits() > plan.ker_bits {
        return Err(Error::PlanMismatch(format!(
            "operands are {}x{} bits, plan covers {}x{}",
            s.bits(),
            k.bits(),
            plan.seq_bits,
            plan.ker_bits
        )));
    }
    if k.len() > plan.ker_per_lane {
        return Err(Error::PlanMismatch(format!(
            "kernel of {} taps exceeds {} slots per lane",
            k.len(),
            plan.ker_per_lane
        )));
    }
    let g = plan.slot_bits;
    let word_mask = low_mask(plan.shape.lane_bits()) as u128;
    let kv: Vec<u64> = k.values().iter().map(|&x| x as u64).collect();
    let kw = pack_word(&kv, g)?;
    let mut out = vec![0u64; s.len() + k.len() - 1];
    for (seg, chunk) in s.values().chunks(plan.seq_per_lane).enumerate() {
        let sv: Vec<u64> = chunk.iter().map(|&x| x as u64).collect();
        let product = pack_word(&sv, g)?.wrapping_mul(kw) & word_mask;
        let base = seg * plan.seq_per_lane;
        for (f, v) in extract_fields(product, g, chunk.len() + k.len() - 1).into_iter().enumerate() {
            out[base + f] += v;
        }
    }
    Ok(out)
}

/// Recovers the signed convolution from the convolution of unsigned codes:
/// `sum (u - zu)(v - zv) = sum uv - zv*sum u - zu*sum v + n*zu*zv` per output.
pub fn dequantize_conv(raw: &[u64], s: &QuantizedTensor, k: &QuantizedTensor) -> Result<Vec<i64>> {
    if raw.len() + 1 != s.len() + k.len() {
        return Err(Error::DimMismatch(format!("{} outputs for {}+{} inputs", raw.len(), s.len(), k.len())));
    }
    let (zs, zk) = (s.zero_point() as i64, k.zero_point() as i64);
    let mut out = Vec::with_capacity(raw.len());
    for (n, &r) in raw.iter().enumerate() {
        let lo = n.saturating_sub(k.len() - 1);
        let hi = n.min(s.len() - 1);
        let (mut su, mut sv) = (0i64, 0i64);
        for i in lo..=hi {
            su += s.values()[i] as i64;
            sv += k.values()[n - i] as i64;
        }
        let pairs = (hi - lo + 1) as i64;
        out.push(r as i64 - zk * su - zs * sv + pairs * zs * zk);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shape(r: u32, l: u32) -> SimdShape {
        SimdShape::new(r, l).unwrap()
    }

    fn direct(s: &[u32], k: &[u32]) -> Vec<u64> {
        let mut y = vec![0u64; s.len() + k.len() - 1];
        for (i, &a) in s.iter().enumerate() {
            for (j, &b) in k.iter().enumerate() {
                y[i + j] += a as u64 * b as u64;
            }
        }
        y
    }

    #[test]
    fn ceil_log2_values() {
        let v: Vec<u32> = [1, 2, 3, 4, 5, 8, 9].iter().map(|&n| ceil_log2(n)).collect();
        assert_eq!(v, vec![0, 1, 2, 2, 3, 3, 4]);
    }

    #[test]
    fn pack_word_examples() {
        assert_eq!(pack_word(&[0, 0, 0], 5).unwrap(), 0);
        assert_eq!(pack_word(&[1, 2, 3], 4).unwrap(), 0x321);
        assert_eq!(pack_word(&[1, 2], 8).unwrap(), 513);
        assert_eq!(pack_word(&[3, 1], 8).unwrap(), 259);
        assert_eq!(pack_word(&[16], 4), Err(Error::SlotOverflow { value: 16, slot_bits: 4 }));
        assert!(matches!(pack_word(&[0; 17], 8), Err(Error::WordOverflow { .. })));
    }

    #[test]
    fn extract_fields_examples() {
        assert_eq!(extract_fields(513 * 259, 8, 3), vec![3, 7, 2]);
        assert_eq!(extract_fields(0x321, 4, 3), vec![1, 2, 3]);
        assert_eq!(extract_fields(u128::MAX, 64, 3), vec![u64::MAX, u64::MAX, 0]);
    }

    #[test]
    fn plan_rejects_out_of_bounds() {
        let s = shape(32, 8);
        // 8x8-bit products need 16-bit slots.
        assert!(matches!(derive_plan(8, 8, s, 1), Err(Error::NoFeasiblePlan { .. })));
        let p = PackingPlan::new(2, 2, 1, 1, 4, s, 1).unwrap();
        assert_eq!(p.macs_per_lane_multiply(), 1);
        assert!(PackingPlan::new(2, 2, 1, 1, 3, s, 1).is_err());
        assert!(PackingPlan::new(2, 2, 2, 1, 4, s, 1).is_ok());
        assert!(PackingPlan::new(2, 2, 2, 2, 5, s, 1).is_err());
        assert!(derive_plan(1, 4, s, 1).is_err());
        assert!(derive_plan(4, 9, s, 1).is_err());
    }

    #[test]
    fn derive_plan_two_bit_32_lane() {
        let p = derive_plan(2, 2, shape(32, 32), 1).unwrap();
        assert!(p.is_legal());
        assert_eq!(p.slot_bits(), required_slot_bits(2, 2, p.seq_per_lane(), p.ker_per_lane(), 1));
    }

    #[test]
    fn whole_kernel_preferred() {
        let p = derive_plan_for_kernel(2, 2, shape(32, 32), 1, 3).unwrap();
        assert_eq!(p.ker_per_lane(), 3);
        assert_eq!(p.seq_per_lane(), 3);
        assert_eq!(p.slot_bits(), 6);
        // Too long for one lane: split kernel.
        let p = derive_plan_for_kernel(8, 8, shape(64, 64), 1, 7).unwrap();
        assert!(p.ker_per_lane() < 7);
    }

    #[test]
    fn scalar_packed_conv_examples() {
        let s = QuantizedTensor::new(vec![1, 2], 2).unwrap();
        let k = QuantizedTensor::new(vec![3, 1], 2).unwrap();
        let plan = derive_plan_for_kernel(2, 2, shape(32, 32), 1, 2).unwrap();
        assert_eq!(scalar_packed_conv(&s, &k, &plan).unwrap(), vec![3, 7, 2]);

        let s = QuantizedTensor::new(vec![3, 0, 2, 1, 3, 3, 0], 2).unwrap();
        let one = QuantizedTensor::new(vec![1], 2).unwrap();
        let plan = derive_plan_for_kernel(2, 2, shape(32, 16), 1, 1).unwrap();
        let y = scalar_packed_conv(&s, &one, &plan).unwrap();
        assert_eq!(y, s.values().iter().map(|&v| v as u64).collect::<Vec<_>>());

        let long = QuantizedTensor::new(vec![1; 9], 2).unwrap();
        assert!(matches!(scalar_packed_conv(&s, &long, &plan), Err(Error::PlanMismatch(_))));
        let wide = QuantizedTensor::new(vec![1], 4).unwrap();
        assert!(matches!(scalar_packed_conv(&s, &wide, &plan), Err(Error::PlanMismatch(_))));
    }

    #[test]
    fn dequantize_recovers_signed_conv() {
        let s = QuantizedTensor::from_signed(&[-2, 1, 0, 3, -1], 3, 4).unwrap();
        let k = QuantizedTensor::from_signed(&[1, -2, 2], 3, 3).unwrap();
        let raw = direct(s.values(), k.values());
        let got = dequantize_conv(&raw, &s, &k).unwrap();
        let (sv, kv) = (s.signed_values(), k.signed_values());
        let mut want = vec![0i64; sv.len() + kv.len() - 1];
        for (i, a) in sv.iter().enumerate() {
            for (j, b) in kv.iter().enumerate() {
                want[i + j] += a * b;
            }
        }
        assert_eq!(got, want);
        assert!(QuantizedTensor::from_signed(&[-5], 3, 4).is_err());
    }

    #[test]
    fn tensor_validation() {
        assert!(QuantizedTensor::new(vec![4], 2).is_err());
        assert!(QuantizedTensor::new(vec![3], 0).is_err());
        assert!(QuantizedTensor::with_zero_point(vec![3], 2, 4).is_err());
    }
}
