use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("dimension {dim} exceeds the configured cap of {cap}")]
    Size { dim: usize, cap: usize },

    #[error("matrix is not an isometry (‖V*V - I‖ = {residual:.3e})")]
    NotIsometry { residual: f64 },

    #[error("matrix is not unitary (‖U*U - I‖ = {residual:.3e})")]
    NotUnitary { residual: f64 },

    #[error("unknown label `{0}`")]
    Label(String),

    #[error("horizon reached at label `{label}`: {reason}")]
    Horizon { label: String, reason: String },

    #[error("operation requires a strict-mode model")]
    Mode,

    #[error("Kraus family is not complete: residual ‖Σ A*A - I‖ = {residual:.4}")]
    Kraus { residual: f64 },

    /// A strict model on a finite label set whose `f` is not injective. Its
    /// blocks cannot satisfy completeness and co-isometry together, since a
    /// branching classical map needs infinitely many labels.
    #[error(
        "strict model has a branching map on a finite label set: `{target}` has {count} predecessors"
    )]
    FiniteBranching { target: String, count: usize },

    #[error("invalid model: {0}")]
    Model(String),

    #[error("invalid state: {0}")]
    State(String),

    #[error("invalid parameter: {0}")]
    Param(String),

    #[error("unsupported structure: {0}")]
    Unsupported(String),

    #[error("evolution is not compatible: {0}")]
    Incompatible(String),

    #[error("parse error: {0}")]
    Parse(String),
}
