use std::fmt;

use serde::{Deserialize, Serialize};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid dimensions p={p}, n={n}: both must be at least 1")]
    InvalidDimension { p: usize, n: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: String, found: String },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("covariance is not positive definite (pivot {index} is {pivot:.3e})")]
    NotPositiveDefinite { index: usize, pivot: f64 },

    #[error("variable {row} has zero sample variance")]
    DegenerateVariable { row: usize },

    #[error("eigensolver failed: {0}")]
    Numerical(String),

    #[error("test function `{label}` is not finite at {at}")]
    Evaluation { label: String, at: String },

    #[error("z = {z} lies on the branch cut [-2, 2]")]
    BranchCut { z: String },

    #[error("singular point: {0}")]
    Singularity(String),

    #[error("degenerate quadratic: leading and linear coefficients both vanish")]
    DegenerateQuadratic,

    #[error("contour integral has imaginary residual {residual:.3e} above tolerance {tolerance:.3e}")]
    ContourAccuracy { residual: f64, tolerance: f64 },

    #[error("quadrature failed: {0}")]
    Quadrature(String),

    #[error("sample is empty")]
    EmptySample,

    #[error(
        "experiment cost {cost:.3e} multiply-accumulates exceeds the limit {limit:.1e}; pass force to run anyway"
    )]
    Guardrail { cost: f64, limit: f64 },

    #[error("csv line {line}: {message}")]
    Csv { line: u64, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Non-fatal conditions attached to results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Warning {
    /// Adjacent contour nodes disagree by far more than typical, which usually
    /// means the root choice switched branches.
    RootDiscontinuity { node: usize, jump: f64, median_jump: f64 },
    /// Tracking both roots node to node shows the selection changing branch,
    /// so the integrand is not analytic on the contour.
    BranchSwitch { nodes: usize, first: usize },
    /// The contour rule on every other node disagrees with the full rule, so
    /// the integrand is not resolved at this node count and radius.
    ContourResolution { value: f64, half_nodes: f64 },
    /// The two quadratic roots had nearly equal modulus at some nodes.
    RootNearTie { nodes: usize },
    /// The linear coefficient was real at some nodes, so the imaginary sign
    /// rule had nothing to match and the principal root was used.
    RealLinearCoefficient { nodes: usize },
    /// Covariance series tail is not negligible.
    SeriesTail { tail: f64, value: f64 },
    /// A derivative was approximated by central differences.
    ApproximateDerivative { label: String },
    /// The sample regime is outside where the statistic is intended to be used.
    Regime { message: String },
}

impl fmt::Display for Warning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Warning::RootDiscontinuity { node, jump, median_jump } => write!(
                f,
                "root discontinuity at contour node {node}: jump {jump:.3e} vs median {median_jump:.3e}"
            ),
            Warning::BranchSwitch { nodes, first } => {
                write!(f, "root selection changed branch at {nodes} contour nodes, first at node {first}")
            }
            Warning::ContourResolution { value, half_nodes } => write!(
                f,
                "contour integral not converged: {value:.6e} with all nodes vs {half_nodes:.6e} with half"
            ),
            Warning::RootNearTie { nodes } => {
                write!(f, "quadratic roots nearly tied in modulus at {nodes} nodes")
            }
            Warning::RealLinearCoefficient { nodes } => {
                write!(f, "real linear coefficient at {nodes} nodes; principal root used")
            }
            Warning::SeriesTail { tail, value } => {
                write!(f, "covariance series tail {tail:.3e} is large relative to {value:.3e}")
            }
            Warning::ApproximateDerivative { label } => {
                write!(f, "derivative of `{label}` approximated by central differences")
            }
            Warning::Regime { message } => write!(f, "{message}"),
        }
    }
}
