use thiserror::Error;

/// Errors raised by the damisac library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("delay taps must be pairwise distinct, {0} appears more than once")]
    DuplicateDelay(usize),

    #[error("cannot draw {needed} distinct delay taps from a range of {available}")]
    DelayRangeTooSmall { needed: usize, available: usize },

    #[error("symbol frame pad {pad} is shorter than the required history {required}")]
    PadTooSmall { pad: usize, required: usize },

    #[error("target delay {delay} taps exceeds the guard interval of {guard} taps")]
    DelayBeyondGuard { delay: usize, guard: usize },

    #[error("antenna {0} carries an all-zero signal, PAPR undefined")]
    ZeroSignal(usize),

    #[error("beamformer is orthogonal to the target steering vector")]
    OrthogonalBeam,

    #[error("reference has zero energy at delay bin {0}")]
    ZeroReference(usize),

    #[error("data cell ({symbol}, {subcarrier}) has zero modulus")]
    ZeroDataCell { symbol: usize, subcarrier: usize },

    #[error("matrix is not Hermitian (max asymmetry {0:e})")]
    NotHermitian(f64),

    #[error("interference channel of path {path} is rank deficient (condition number {condition:e})")]
    RankDeficient { path: usize, condition: f64 },

    #[error("all zero-forcing projections of the channel vanish")]
    NoZfSubspace,

    #[error("sensing threshold {gamma_tilde:e} exceeds the achievable maximum {gamma_max:e}")]
    Infeasible { gamma_tilde: f64, gamma_max: f64 },

    #[error("no feasible beamformer recovered from the relaxed solution ({0})")]
    RecoveryFailed(String),

    #[error("too few samples: need at least {needed}, got {got}")]
    TooFewSamples { needed: usize, got: usize },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
