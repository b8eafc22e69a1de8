use thiserror::Error;

/// Errors raised by the solver and the constants ledger.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value in {what} at node {node}, path {path}")]
    NonFinite {
        what: &'static str,
        node: usize,
        path: usize,
    },

    #[error("{quantity} overflows: exponent {exponent:.6e} exceeds the f64 range")]
    Overflow { quantity: &'static str, exponent: f64 },

    #[error("rank-deficient regression basis at node {node} (no regularization)")]
    RankDeficient { node: usize },

    #[error("estimator was fitted at node {fitted}, asked to predict at node {requested}")]
    NodeMismatch { fitted: usize, requested: usize },

    #[error("constants ledger invariant failed: {inequality} (value {value:.6e})")]
    Invariant { inequality: &'static str, value: f64 },

    #[error("scalar solver diverged at node {node}: max|Y| = {max_abs_y:.6e} exceeds 10x a priori bound {bound:.6e}")]
    Divergence {
        node: usize,
        max_abs_y: f64,
        bound: f64,
    },

    #[error("component {component}: {source}")]
    Component {
        component: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("Picard iteration did not reach tol {tol:.3e} within {iterations} iterations (last distance {last:.3e})")]
    NotConverged {
        iterations: usize,
        tol: f64,
        last: f64,
        /// `max(y distance, z distance)` per iteration.
        distances: Vec<f64>,
    },

    #[error("declared growth bound violated at probe {probe}")]
    GrowthBound { probe: String },

    #[error("certified step {eta:.3e} is below the floor {floor:.3e}; use working mode")]
    StepBelowFloor { eta: f64, floor: f64 },

    #[error("uniform bound violated at t = {time:.4}: max|Y| = {max_abs_y:.6e} > {bound:.6e}")]
    UniformBound {
        time: f64,
        max_abs_y: f64,
        bound: f64,
    },

    #[error("io: {0}")]
    Io(String),
}

impl Error {
    /// Stable machine-readable code for CLI exit reports.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidArgument(_) => "invalid_argument",
            Error::NonFinite { .. } => "non_finite",
            Error::Overflow { .. } => "overflow",
            Error::RankDeficient { .. } => "rank_deficient",
            Error::NodeMismatch { .. } => "node_mismatch",
            Error::Invariant { .. } => "invariant",
            Error::Divergence { .. } => "divergence",
            Error::Component { source, .. } => source.code(),
            Error::NotConverged { .. } => "not_converged",
            Error::GrowthBound { .. } => "growth_bound",
            Error::StepBelowFloor { .. } => "step_below_floor",
            Error::UniformBound { .. } => "uniform_bound",
            Error::Io(_) => "io",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
