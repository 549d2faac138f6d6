use thiserror::Error;

/// Errors raised by the engine, cost model, search and CLI plumbing.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("unsupported SIMD shape {register_bits}x{lane_bits}")]
    UnsupportedShape { register_bits: u32, lane_bits: u32 },
    #[error("scalar {scalar:#x} does not fit in a {lane_bits}-bit lane")]
    ScalarTooWide { scalar: u64, lane_bits: u32 },
    #[error("SIMD operand shapes differ")]
    ShapeMismatch,
    #[error("shift amount {amount} out of range for {lane_bits}-bit lanes")]
    ShiftOutOfRange { amount: u32, lane_bits: u32 },
    #[error("lane {lane} out of range ({lanes} lanes)")]
    LaneOutOfRange { lane: usize, lanes: usize },
    #[error("lane count mismatch: expected {expected}, got {got}")]
    LaneCountMismatch { expected: usize, got: usize },

    #[error("value {value} does not fit in a {slot_bits}-bit slot")]
    SlotOverflow { value: u64, slot_bits: u32 },
    #[error("{fields} fields of {slot_bits} bits exceed a {word_bits}-bit word")]
    WordOverflow { fields: usize, slot_bits: u32, word_bits: u32 },
    #[error("value {value} does not fit in {bits} bits")]
    ValueOutOfRange { value: u32, bits: u32 },
    #[error("unsupported bitwidth {0}")]
    UnsupportedBitwidth(u32),
    #[error("no feasible packing plan for s_b={s_bits}, k_b={k_bits} on {shape}")]
    NoFeasiblePlan { s_bits: u32, k_bits: u32, shape: String },
    #[error("packing plan violates its legality constraints: {0}")]
    InfeasiblePlan(String),
    #[error("plan does not match the problem: {0}")]
    PlanMismatch(String),
    #[error("packed field overflow at output {position}: expected {expected}, extracted {extracted}")]
    FieldOverflow { position: usize, expected: u64, extracted: u64 },
    #[error("empty input")]
    EmptyInput,
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),

    #[error("invalid cost parameters: {0}")]
    InvalidParams(String),
    #[error("degenerate least-squares system: {0}")]
    DegenerateSystem(String),

    #[error("no feasible plan for layer `{layer}`: {source}")]
    LayerInfeasible { layer: String, source: Box<Error> },
    #[error("sensitivity table does not cover layer `{layer}` at w{w_bits}/a{a_bits}")]
    IncompleteTable { layer: String, w_bits: u32, a_bits: u32 },
    #[error("invalid sensitivity table: {0}")]
    InvalidTable(String),
    #[error("no configuration satisfies the memory constraints")]
    Infeasible,

    #[error("invalid input: {0}")]
    BadInput(String),
    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::BadInput(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::BadInput(e.to_string())
    }
}
