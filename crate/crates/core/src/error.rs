use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Two operands of a tensor product (or a space constructor) share a
    /// factor label.
    #[error("factor label collision: `{0}` appears on both sides")]
    LabelCollision(String),

    #[error("unknown factor label `{0}`")]
    UnknownLabel(String),

    #[error("factor `{0}` has zero dimension")]
    ZeroDimension(String),

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch { context: String, expected: usize, found: usize },

    #[error("space mismatch in {0}")]
    SpaceMismatch(String),

    /// Truncated coherent/cat state loses more Poisson weight than allowed.
    #[error(
        "truncation too small for |alpha| = {abs_alpha}: dim {dim} leaves tail mass {tail:e}; \
         need dim >= {required_dim}"
    )]
    TailMass { abs_alpha: f64, dim: usize, tail: f64, required_dim: usize },

    #[error("superposition has zero norm: {0}")]
    ZeroNorm(String),

    #[error("operator is not {property} within tolerance {tol:e} (deviation {deviation:e}): {what}")]
    Property { what: String, property: &'static str, tol: f64, deviation: f64 },

    #[error("only single-input-channel models are supported: {0}")]
    MultiChannel(String),

    #[error("modulator is not of oscillator form: {0}")]
    NotOscillatorModulator(String),

    #[error("{what} is not normalized: norm {norm:.6} (squared norm {norm_sq:.6})")]
    NotNormalized { what: String, norm: f64, norm_sq: f64 },

    #[error("pulses {i} and {j} are not orthogonal: overlap {overlap:e}")]
    NotOrthogonal { i: usize, j: usize, overlap: f64 },

    #[error("cat branch {index} is not proportional to the common pulse (relative residual {residual:e})")]
    NotProportional { index: usize, residual: f64 },

    #[error("missing hierarchy block {0}")]
    MissingBlock(String),

    #[error("hierarchy needs {blocks} blocks, above the ceiling of {ceiling}")]
    BlockCeiling { blocks: usize, ceiling: usize },

    #[error("joint dimension {dim} exceeds the ceiling of {ceiling}")]
    DimensionCeiling { dim: usize, ceiling: usize },

    #[error(
        "integrator instability at t = {time}: trace drift {drift:e} exceeds {limit:e}; \
         try dt <= {suggested_dt:e}"
    )]
    IntegratorInstability { time: f64, drift: f64, limit: f64, suggested_dt: f64 },

    #[error("synthesis cutoff at t = {cutoff} emits only {emitted} of the pulse (minimum {minimum})")]
    EmittedFraction { cutoff: f64, emitted: f64, minimum: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Scenario parse/validation error; `path` is the dotted field path.
    #[error("{path}: {message}")]
    Scenario { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn scenario(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Scenario { path: path.into(), message: message.into() }
    }
}
