use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("invalid form: {0}")]
    InvalidForm(String),

    #[error("subset {0:?} is not transient (restricted energy matrix is singular)")]
    NotTransient(Vec<usize>),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("nonlinearity is increasing at {site}: f(y={y1}) = {f1} < f(y={y2}) = {f2}")]
    NotMonotone {
        site: String,
        y1: f64,
        y2: f64,
        f1: f64,
        f2: f64,
    },

    #[error("truncation ladder did not converge after {levels} levels (last change {change:.3e})")]
    NotConverged {
        levels: usize,
        change: f64,
        best: Vec<f64>,
    },

    #[error("unknown {kind} `{name}`")]
    Unknown { kind: &'static str, name: String },

    #[error("quadrature failure: {0}")]
    Quadrature(String),

    #[error("path exceeded {0} steps without leaving the domain")]
    RunawayPath(u64),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
