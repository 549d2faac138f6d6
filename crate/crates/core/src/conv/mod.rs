//! Packed convolution kernels running on the SIMD emulator.
//!
//! Two kernels compute the same exact linear convolution:
//!
//! * [`slbc_naive`] packs `N_s` consecutive sequence elements per lane and
//!   `N_l` consecutive segments per register, multiplies by the replicated
//!   packed kernel and extracts all `N_s + K - 1` fields of every lane.
//!   Fields that straddle segment boundaries are combined by scalar
//!   overlap-add.
//! * [`slbc_reordered`] takes groups of `N_s * N_l^2` elements and transposes
//!   the segment order so that lane `l` of successive registers carries
//!   consecutive segments. Boundary fields then meet in the same lane of
//!   adjacent registers and are merged by a shift-and-add into a local
//!   accumulator instead of being extracted separately.
//!
//! Kernels longer than `N_k` are split into chunks of at most `N_k` taps,
//! each run as its own pass and overlap-added at its tap offset.

mod kernels;
mod layer;
mod select;

pub use kernels::{slbc, slbc_naive, slbc_reordered};
pub use layer::{conv_layer, direct_conv2d, FeatureMap, LayerSpec, Weights};
pub use select::{candidates, select_plan, select_plan_for, PlanChoice};

pub(crate) use kernels::reorder_applies;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::packing::{PackingPlan, QuantizedTensor};
use crate::simd::InstrCounts;

/// Which packed kernel to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Naive,
    Reordered,
}

impl Variant {
    pub const ALL: [Variant; 2] = [Variant::Naive, Variant::Reordered];

    pub fn name(&self) -> &'static str {
        match self {
            Variant::Naive => "naive",
            Variant::Reordered => "reordered",
        }
    }

    /// Local accumulation rounds the variant needs for a kernel of
    /// `kernel_len` taps packed `ker_per_lane` to a lane on `lanes` lanes.
    /// Reordering that falls back to the naive path needs none.
    pub fn accum_rounds(&self, lanes: usize, ker_per_lane: usize, kernel_len: usize) -> usize {
        match self {
            Variant::Reordered if reorder_applies(ker_per_lane.min(kernel_len), lanes) => lanes,
            _ => 1,
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "naive" => Ok(Variant::Naive),
            "reordered" => Ok(Variant::Reordered),
            other => Err(Error::BadInput(format!("unknown variant `{other}`"))),
        }
    }
}

/// A 1-D convolution to run: sequence, kernel and the plan to pack them with.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvProblem {
    sequence: QuantizedTensor,
    kernel: QuantizedTensor,
    plan: PackingPlan,
}

impl ConvProblem {
    pub fn new(sequence: QuantizedTensor, kernel: QuantizedTensor, plan: PackingPlan) -> Result<Self> {
        if sequence.is_empty() || kernel.is_empty() {
            return Err(Error::EmptyInput);
        }
        if sequence.len() < kernel.len() {
            return Err(Error::DimMismatch(format!(
                "sequence of {} shorter than kernel of {}",
                sequence.len(),
                kernel.len()
            )));
        }
        if sequence.bits() > plan.seq_bits() || kernel.bits() > plan.ker_bits() {
            return Err(Error::PlanMismatch(format!(
                "operands are {}x{} bits, plan covers {}x{}",
                sequence.bits(),
                kernel.bits(),
                plan.seq_bits(),
                plan.ker_bits()
            )));
        }
        Ok(Self { sequence, kernel, plan })
    }

    pub fn sequence(&self) -> &QuantizedTensor {
        &self.sequence
    }
    pub fn kernel(&self) -> &QuantizedTensor {
        &self.kernel
    }
    pub fn plan(&self) -> &PackingPlan {
        &self.plan
    }
    pub fn output_len(&self) -> usize {
        self.sequence.len() + self.kernel.len() - 1
    }
}

/// Outputs of one kernel run plus the instructions it issued.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvResult {
    pub outputs: Vec<u64>,
    pub counts: InstrCounts,
    pub plan_used: PackingPlan,
    pub variant: Variant,
}

/// Exact linear convolution `y[n] = sum_{i+j=n} s[i] * k[j]`.
pub fn reference_conv(s: &QuantizedTensor, k: &QuantizedTensor) -> Result<Vec<u64>> {
    if s.is_empty() || k.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut y = vec![0u64; s.len() + k.len() - 1];
    for (i, &a) in s.values().iter().enumerate() {
        for (j, &b) in k.values().iter().enumerate() {
            y[i + j] += a as u64 * b as u64;
        }
    }
    Ok(y)
}

/// Tap ranges `[start, start + len)` the kernel is split into for a plan.
pub fn kernel_chunks(kernel_len: usize, ker_per_lane: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..kernel_len).step_by(ker_per_lane.max(1)).map(move |start| (start, ker_per_lane.min(kernel_len - start)))
}
