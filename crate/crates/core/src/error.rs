use thiserror::Error;

use crate::approx::ApproxResult;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid group specification: {0}")]
    InvalidGroup(String),

    #[error("Jacobi identity fails for basis triple (X{i}, X{j}, X{k}): residual {residual:e}")]
    JacobiViolation {
        i: usize,
        j: usize,
        k: usize,
        residual: f64,
    },

    #[error("grading violated: [X{i}, X{j}] has a component along X{k} outside the expected stratum")]
    GradingViolation { i: usize, j: usize, k: usize },

    #[error("stratum V{stratum} is not generated by [V1, V{}]: rank {rank} < {expected}", stratum - 1)]
    GenerationFailure {
        stratum: usize,
        rank: usize,
        expected: usize,
    },

    #[error("scale factor must be positive, got {0}")]
    NonPositiveScale(f64),

    #[error("no quadrature node lies in Omega(x0, r) for x0 = {x0:?}, r = {r}")]
    EmptyIntersection { x0: Vec<f64>, r: f64 },

    #[error("non-finite integrand value at node {index}")]
    NonFinite { index: usize },

    #[error("design matrix is rank deficient: condition {cond:e} with {nodes} nodes for {basis} basis functions")]
    RankDeficient {
        cond: f64,
        nodes: usize,
        basis: usize,
    },

    #[error("iteratively reweighted solver stopped after {iterations} iterations without converging")]
    NoConvergence {
        iterations: usize,
        best: Box<ApproxResult>,
    },

    #[error("multi-index of homogeneous degree {degree} exceeds k = {k}")]
    DegreeOverflow { degree: u32, k: u32 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("sample plan is empty")]
    NoSamples,

    #[error("quadrature failure: zero measure for Omega(x0, r) at interior point x0 = {x0:?}, r = {r}")]
    QuadratureFailure { x0: Vec<f64>, r: f64 },

    #[error("every dyadic level of the trace is empty")]
    AllLevelsEmpty,

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
        if expected == got {
            Ok(())
        } else {
            Err(Error::DimensionMismatch { expected, got })
        }
    }
}
