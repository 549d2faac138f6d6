//! Sub-byte packed convolution on an emulated SIMD unit, an
//! instruction-count cost model and a hardware-aware mixed-precision
//! bitwidth search.
//!
//! * [`simd`]: bit-exact register emulator with instruction counters.
//! * [`packing`]: packing plans, guard bits, pack/extract.
//! * [`conv`]: naive and reordered packed convolution kernels, layer
//!   lowering and plan selection.
//! * [`cost`]: weighted cost, closed-form count prediction, calibration.
//! * [`search`]: per-layer `(w_bits, a_bits)` search.
//! * [`bench`]: count-model comparison against unpacked baselines.
//! * [`rng`]: portable seeded generator for reproducible inputs.

pub mod bench;
pub mod conv;
pub mod cost;
pub mod error;
pub mod packing;
pub mod rng;
pub mod search;
pub mod simd;

pub use conv::{
    reference_conv, select_plan, slbc, slbc_naive, slbc_reordered, ConvProblem, ConvResult, PlanChoice, Variant,
};
pub use cost::{calibrate, predict_counts, score, CostParams};
pub use error::{Error, Result};
pub use packing::{derive_plan, PackingPlan, QuantizedTensor};
pub use search::{search, QuantConfig, SearchOptions};
pub use simd::{Emulator, InstrCounts, SimdShape, SimdVec, Validation};
