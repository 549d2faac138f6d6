//! Adaptive choice of SIMD lane size and packing per convolution.

use serde::Serialize;

use crate::cost::{predict_counts, report, CostParams};
use crate::error::{Error, Result};
use crate::packing::{enumerate_plans, PackingPlan};
use crate::simd::{InstrCounts, SimdShape};

use super::Variant;

/// A plan, the kernel to run it with and its predicted cost.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PlanChoice {
    pub plan: PackingPlan,
    pub variant: Variant,
    pub counts: InstrCounts,
    pub cost: f64,
}

impl PlanChoice {
    /// Total order used to pick among candidates: cost, then smaller
    /// register, larger `N_s`, smaller lane, larger `N_k`, naive first.
    fn rank_cmp(&self, o: &PlanChoice) -> std::cmp::Ordering {
        self.cost
            .total_cmp(&o.cost)
            .then(self.plan.shape().register_bits().cmp(&o.plan.shape().register_bits()))
            .then(o.plan.seq_per_lane().cmp(&self.plan.seq_per_lane()))
            .then(self.plan.shape().lane_bits().cmp(&o.plan.shape().lane_bits()))
            .then(o.plan.ker_per_lane().cmp(&self.plan.ker_per_lane()))
            .then(self.variant.cmp(&o.variant))
    }
}

/// Every candidate `select_plan` considers, in enumeration order.
pub fn candidates(
    seq_bits: u32,
    ker_bits: u32,
    kernel_len: usize,
    seq_len: usize,
    params: &CostParams,
    shapes: &[SimdShape],
) -> Result<Vec<PlanChoice>> {
    let mut out = Vec::new();
    for &shape in shapes {
        for variant in Variant::ALL {
            let lanes = shape.lane_count();
            let mut rounds = vec![1, lanes];
            rounds.dedup();
            // Each plan is taken at the guard width its kernel actually needs.
            let plans = rounds
                .into_iter()
                .map(|a| enumerate_plans(seq_bits, ker_bits, shape, a, kernel_len))
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .flatten()
                .filter(|p| p.accum_rounds() == variant.accum_rounds(lanes, p.ker_per_lane(), kernel_len));
            for plan in plans {
                let counts = predict_counts(&plan, seq_len, kernel_len, variant)?;
                let cost = report(&counts, params).total;
                out.push(PlanChoice { plan, variant, counts, cost });
            }
        }
    }
    Ok(out)
}

/// Enumerates every shape in `shapes` (all supported shapes when `None`),
/// every legal plan for both kernels, and returns the cheapest under the
/// cost model.
pub fn select_plan(
    seq_bits: u32,
    ker_bits: u32,
    kernel_len: usize,
    seq_len: usize,
    params: &CostParams,
    shapes: Option<&[SimdShape]>,
) -> Result<PlanChoice> {
    select_plan_for(seq_bits, ker_bits, kernel_len, seq_len, params, shapes, None)
}

/// [`select_plan`] restricted to one kernel when `variant` is given.
pub fn select_plan_for(
    seq_bits: u32,
    ker_bits: u32,
    kernel_len: usize,
    seq_len: usize,
    params: &CostParams,
    shapes: Option<&[SimdShape]>,
    variant: Option<Variant>,
) -> Result<PlanChoice> {
    if kernel_len == 0 || seq_len == 0 {
        return Err(Error::EmptyInput);
    }
    let all = SimdShape::all();
    let shapes = shapes.unwrap_or(&all);
    candidates(seq_bits, ker_bits, kernel_len, seq_len, params, shapes)?
        .into_iter()
        .filter(|c| variant.is_none_or(|v| c.variant == v))
        .min_by(|a, b| a.rank_cmp(b))
        .ok_or_else(|| Error::NoFeasiblePlan {
            s_bits: seq_bits,
            k_bits: ker_bits,
            shape: shapes.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(","),
        })
}
