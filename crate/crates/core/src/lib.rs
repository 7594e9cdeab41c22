//! Eigenvalue sums `Σ f(λ_j)` of `A = sqrt(p/n) (XᵀX/p - I_n)` for a `p × n`
//! data matrix with `p ≫ n`.
//!
//! * [`data_gen`]: entry laws, covariance designs, streaming generation
//! * [`spectra`]: the normalized Gram matrix and its eigenvalues
//! * [`semicircle`]: the limiting law, its Stieltjes transform and `Ψ_k`
//! * [`correction`]: mean corrections and the limiting mean and covariance
//! * [`identity_test`]: the `L_n` test of `Σ = I`
//! * [`harness`]: seeded Monte Carlo size, power and moment experiments

pub mod correction;
pub mod data_gen;
pub mod error;
pub mod harness;
pub mod semicircle;
pub mod spectra;
pub mod test_function;

pub use correction::{CorrectionOptions, LssResult, RootRule, Variant};
pub use data_gen::{CovarianceSpec, DataMatrix, DistKind, DistributionSpec, StandardizeMode};
pub use error::{Error, Result, Warning};
pub use harness::{ExperimentConfig, McReport, Nu4Mode, StatisticKind};
pub use identity_test::TestResult;
pub use spectra::{NormalizedMatrix, Spectrum};
pub use test_function::TestFunction;
