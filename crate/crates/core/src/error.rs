//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: dimension mismatch, left is {}x{} but right is {}x{}", left.0, left.1, right.0, right.1)]
    ShapeMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("entry buffer holds {got} values but a {rows}x{cols} matrix needs {}", rows * cols)]
    EntryCount { rows: usize, cols: usize, got: usize },

    #[error("grid side {grid_side} exceeds matrix dimension {dim}")]
    GridExceedsDim { grid_side: usize, dim: usize },

    #[error("grid side must be at least 1")]
    EmptyGrid,

    #[error("block ({row},{col}) is missing from the tile set")]
    MissingBlock { row: usize, col: usize },

    #[error("block ({row},{col}) appears more than once in the tile set")]
    DuplicateBlock { row: usize, col: usize },

    #[error("{op}: operands use different block partitions ({0}x{0} blocks of dim {1} vs {2}x{2} blocks of dim {3})", left.0, left.1, right.0, right.1)]
    PartitionMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("matrix index ({},{}) is not on the diagonal", index.0, index.1)]
    NotDiagonal { index: (usize, usize) },

    #[error("index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },

    #[error("cannon_chain requires at least one matrix")]
    EmptyChain,

    #[error("matrix is not Hermitian (max |a_ij - conj(a_ji)| = {defect:.3e})")]
    NonHermitian { defect: f64 },

    #[error("invalid channel {src}->{dst} on dimension {dim}: {reason}")]
    InvalidChannel {
        src: usize,
        dst: usize,
        dim: usize,
        reason: &'static str,
    },

    #[error("invalid channel rates: gamma*dt = {gamma_dt}, gamma'*dt = {gamma_prime_dt} (need 0 < gamma*dt < 1 and 0 <= gamma'*dt < gamma*dt)")]
    InvalidRates { gamma_dt: f64, gamma_prime_dt: f64 },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("subspace is not closed: state {0} maps outside the generated set")]
    ClosureViolation(u64),

    #[error("oracle dimension {dim} exceeds cap {cap}")]
    OracleCap { dim: usize, cap: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("invariant violated: {0}")]
    InvariantViolation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
