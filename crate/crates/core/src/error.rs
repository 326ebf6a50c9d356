use std::path::PathBuf;

/// Errors raised across the solver, optimizer and I/O layers.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("point ({x}, {y}) lies outside the domain [0, {lx}] x [0, {ly}]")]
    OutOfDomain { x: f64, y: f64, lx: f64, ly: f64 },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: usize, found: usize },

    #[error("expression error at byte {pos}: {msg}")]
    Expression { pos: usize, msg: String },

    #[error("config key `{key}`: {constraint}")]
    Config { key: String, constraint: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed data in {path}: {msg}")]
    Parse { path: PathBuf, msg: String },

    #[error("nonlinear iteration did not converge in {iterations} steps (last residual {last:.3e})")]
    Diverged {
        iterations: usize,
        last: f64,
        history: Vec<f64>,
    },

    #[error("linear solver failure: {0}")]
    LinearSolver(String),

    #[error("adjoint system is singular or ill-conditioned: {0}")]
    SingularAdjoint(String),

    #[error("optimization failed after {iterations} iterations: {msg}")]
    Optimization {
        iterations: usize,
        msg: String,
        trace: Box<crate::control::OptimizationTrace>,
    },
}

impl Error {
    /// Short machine-readable tag used in CLI error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::OutOfDomain { .. } => "out_of_domain",
            Error::Invariant(_) => "invariant",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::ShapeMismatch { .. } => "shape_mismatch",
            Error::Expression { .. } => "expression",
            Error::Config { .. } => "config",
            Error::Io { .. } => "io",
            Error::Parse { .. } => "parse",
            Error::Diverged { .. } => "diverged",
            Error::LinearSolver(_) => "linear_solver",
            Error::SingularAdjoint(_) => "singular_adjoint",
            Error::Optimization { .. } => "optimization",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
