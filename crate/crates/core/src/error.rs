use thiserror::Error;

/// Errors raised anywhere in the library.
///
/// [`Error::is_numerical`] separates failures of a numerical procedure (a stage
/// solve that does not converge, a path that is too coarse) from validation
/// errors on the inputs; the command-line front end maps them to different exit
/// codes.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid label {label}: {reason}")]
    InvalidLabel { label: String, reason: String },

    #[error("A-node in {tree} has {count} children that are not t-nodes (at most one allowed)")]
    SemiLinearArity { tree: String, count: usize },

    #[error("enumeration produced more than {limit} trees")]
    CapExceeded { limit: usize },

    #[error("parse error at byte {pos} of {input:?}: {message}")]
    Parse { input: String, pos: usize, message: String },

    #[error("pair ({subtree}, {remainder}) is not a subtree decomposition of {tree}")]
    PairNotInSt {
        tree: String,
        subtree: String,
        remainder: String,
    },

    #[error("weight of the empty tree must be 1, found {found}")]
    EmptyWeightNotOne { found: String },

    #[error("weight of the empty tree must be 0, found {found}")]
    EmptyWeightNotZero { found: String },

    #[error("model mismatch: {0}")]
    ModelMismatch(String),

    #[error("derivative of order {order} requested for {label} without analytic derivatives (finite differences support order <= 3)")]
    DerivativeOrderUnsupported { label: String, order: usize },

    #[error("path too short: {0}")]
    PathTooShort(String),

    #[error("expression references Wiener process {color} but the path only carries colors 1..={available}")]
    ColorMissing { color: u32, available: u32 },

    #[error("no admissible split of {0} into an A-tree and a g-rooted tree")]
    NoAdmissibleSplit(String),

    #[error("tree {tree} has {count} admissible splits, expected exactly one")]
    AmbiguousSplit { tree: String, count: usize },

    #[error("order cap {requested} not supported (maximum {max})")]
    CapUnsupported { requested: String, max: String },

    #[error("stage iteration did not converge at t = {t} (h = {h}, last update {update:e})")]
    StageDivergence { t: f64, h: f64, update: f64 },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("expression is not a polynomial in h and dW: {0}")]
    NotPolynomial(String),

    #[error("invalid method specification: {0}")]
    MethodSpec(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    /// True for failures of a numerical procedure rather than of input validation.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::StageDivergence { .. }
                | Error::NonFinite(_)
                | Error::PathTooShort(_)
                | Error::NoAdmissibleSplit(_)
                | Error::AmbiguousSplit { .. }
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
