use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("label count N must be positive")]
    ZeroModulus,
    #[error("label count {0} is not a power of two")]
    NotPowerOfTwo(u64),
    #[error("period {period} exceeds floor(sqrt({n}))")]
    PeriodTooLarge { period: u64, n: u64 },
    #[error("period must be at least {min}, got {period}")]
    PeriodTooSmall { period: u64, min: u64 },
    #[error("element count M must be at least {min}, got {m}")]
    CountTooSmall { m: u64, min: u64 },
    #[error("last element {last} lies past N-1 = {max}")]
    SetOverflow { last: u64, max: u64 },
    #[error("label {label} out of range for N = {n}")]
    LabelOutOfRange { label: u64, n: u64 },
    #[error("rate {0} is not in [0, 1]")]
    InvalidRate(f64),
    #[error("marked count T = {t} is degenerate for N = {n}")]
    DegenerateMarkedCount { t: u64, n: u64 },
    #[error("error label {0} collides with the periodic set or repeats")]
    ErrorLabelCollision(u64),
    #[error("state norm {0} differs from 1")]
    NotNormalized(f64),
    #[error("matrix is not unitary (deviation {0})")]
    NotUnitary(f64),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("malformed pair set: {0}")]
    MalformedPairs(String),
    #[error("case {0:?} has no random-sum term")]
    NoRandomSum(crate::numerics::CaseTag),
    #[error("case C requires Py != 0 mod N")]
    CaseMismatch,
    #[error("at least {min} trials required, got {got}")]
    TooFewTrials { min: u64, got: u64 },
    #[error("candidate period {0} failed oracle verification")]
    WrongPeriod(u64),
    #[error("invalid parameter: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;
