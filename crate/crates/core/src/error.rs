use thiserror::Error;

/// Errors produced by kernel construction, planning and assembly.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("{what} ({value}) is not divisible by {divisor}")]
    NotDivisible {
        what: &'static str,
        value: usize,
        divisor: usize,
    },

    #[error("unsupported lane width {0}, expected one of 1, 2, 4, 8")]
    InvalidWidth(usize),

    #[error("vectorized kernel may touch at most 2 distinct tensors, got {0}")]
    TooManyInputs(usize),

    #[error("kernels grouped into one vectorized kernel must share bounds and stage")]
    MixedBounds,

    #[error("kernels grouped into one vectorized kernel must share the facet normal direction")]
    MixedEmbedding,

    #[error("vectorized kernel group is empty")]
    EmptyGroup,

    #[error("lane capacity mismatch: f={f} s={s} num_inputs={num_inputs} does not give width {width}")]
    LaneCapacity {
        f: usize,
        s: usize,
        num_inputs: usize,
        width: usize,
    },

    #[error("group of {members} members does not fit f={f} quantity slots per input")]
    GroupOverflow { members: usize, f: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("autotune requires at least 3 repeats, got {0}")]
    TooFewRepeats(usize),

    #[error("verification failed: {0}")]
    VerificationFailed(String),
}

pub type Result<T> = std::result::Result<T, Error>;
