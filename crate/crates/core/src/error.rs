use thiserror::Error;

/// Broad failure class, used by the command line to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Bad parameters, out-of-domain values, malformed files.
    Data,
    /// A numerical routine failed or produced non-finite output.
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("omega must be positive and finite, got {0}")]
    NonPositiveOmega(f64),
    #[error("spacing must be positive and finite, got {0}")]
    NonPositiveSpacing(f64),
    #[error("origin must be finite, got {0}")]
    NonFiniteOrigin(f64),
    #[error("channel count must be at least 1")]
    ZeroCount,
    #[error("overlap must be at least 1")]
    ZeroOverlap,
    #[error("overlap {overlap} exceeds channel count {count}")]
    OverlapExceedsCount { overlap: usize, count: usize },
    #[error("omega * overlap * spacing = {product} must be below 2*pi, otherwise the phase wraps inside one window")]
    PhaseWrap { product: f64 },

    #[error("value {x} outside the decodable domain [{lo}, {hi})")]
    OutOfDomain { x: f64, lo: f64, hi: f64 },
    #[error("axis {axis}: {source}")]
    Axis {
        axis: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("vector length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("channel index {index} outside 1..={len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("duplicate channel index {0}")]
    DuplicateIndex(usize),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("superposition weights must be non-negative and finite, got {0}")]
    InvalidWeight(f64),
    #[error("superposition needs at least one term")]
    EmptySuperposition,

    #[error("channel vector has no active entries")]
    EmptyVector,
    #[error("active channels {0:?} do not form a single run of at most `overlap` indices")]
    Ambiguous(Vec<usize>),
    #[error("phase points to {value}, outside the support window [{lo}, {hi}]")]
    Inconsistent { value: f64, lo: f64, hi: f64 },
    #[error("coherence {coherence} below the minimum {min}")]
    Incoherent { coherence: f64, min: f64 },
    #[error("invalid decode parameter: {0}")]
    InvalidParam(String),

    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("bank layout mismatch: {0}")]
    BankMismatch(String),
    #[error("singular value decomposition did not converge")]
    SvdFailed,

    #[error("invalid synthetic dataset request: {0}")]
    Synthetic(String),
    #[error("domain too narrow: {0}")]
    DomainTooNarrow(String),

    #[error("malformed input: {0}")]
    Format(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::SvdFailed | Error::NonFinite(_) => ErrorKind::Numerical,
            Error::Axis { source, .. } => source.kind(),
            _ => ErrorKind::Data,
        }
    }

    pub(crate) fn on_axis(self, axis: usize) -> Error {
        Error::Axis {
            axis,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
