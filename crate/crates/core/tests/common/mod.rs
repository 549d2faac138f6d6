#![allow(dead_code)]

use mixq::conv::{ConvProblem, Variant};
use mixq::packing::{derive_plan_for_kernel, PackingPlan, QuantizedTensor};
use mixq::rng::{random_values, SplitMix64};
use mixq::simd::SimdShape;

/// Plan for `variant` on `shape` with enough accumulation rounds for it,
/// or `None` when the bitwidths do not fit.
pub fn plan_for(
    s_bits: u32,
    k_bits: u32,
    shape: SimdShape,
    variant: Variant,
    kernel_len: usize,
) -> Option<PackingPlan> {
    let rounds = match variant {
        Variant::Naive => 1,
        Variant::Reordered => shape.lane_count(),
    };
    derive_plan_for_kernel(s_bits, k_bits, shape, rounds, kernel_len).ok()
}

pub fn tensor(rng: &mut SplitMix64, len: usize, bits: u32) -> QuantizedTensor {
    QuantizedTensor::new(random_values(rng, len, bits), bits).unwrap()
}

/// Random problem with the given sizes on the first shape, scanning from a
/// random start, that admits a plan for both kernels.
pub fn random_problem(rng: &mut SplitMix64, s_bits: u32, k_bits: u32, seq_len: usize, ker_len: usize) -> ConvProblem {
    let shapes = SimdShape::all();
    let start = rng.below(shapes.len() as u64) as usize;
    let plan = (0..shapes.len())
        .map(|i| shapes[(start + i) % shapes.len()])
        .find_map(|sh| plan_for(s_bits, k_bits, sh, Variant::Reordered, ker_len))
        .expect("128x64 always fits");
    let s = tensor(rng, seq_len, s_bits);
    let k = tensor(rng, ker_len, k_bits);
    ConvProblem::new(s, k, plan).unwrap()
}

/// Naive oracle for the reference convolution, independent of the library.
pub fn direct_conv(s: &[u32], k: &[u32]) -> Vec<u64> {
    let mut y = vec![0u64; s.len() + k.len() - 1];
    for (i, &a) in s.iter().enumerate() {
        for (j, &b) in k.iter().enumerate() {
            y[i + j] += a as u64 * b as u64;
        }
    }
    y
}
