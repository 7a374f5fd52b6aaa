//! Differentially private estimation of means and linear-regression
//! coefficients, in low and high (sparse) dimensions.
//!
//! The crate provides the estimators, the noise mechanisms they are built
//! from, private tuning of truncation and sparsity, a membership-inference
//! auditor, and a simulation harness for error-versus-sample-size studies.
//!
//! Every randomized call takes a [`Seed`]; identical inputs and seed give
//! bit-identical output.

pub mod audit;
pub mod budget;
pub mod data;
pub mod error;
pub mod estimate;
pub mod mean;
pub mod mechanisms;
pub mod noise;
pub mod peeling;
pub mod regression;
pub mod rng;
pub mod sim;
pub mod tuning;
pub mod vector;

pub use budget::{compose, BudgetLedger, PrivacyBudget};
pub use data::{adjacent_datasets, DataMatrix, RegressionData};
pub use error::{Error, Result};
pub use estimate::{Estimate, Truncation};
pub use mean::{private_mean, private_sparse_mean, truncated_mean, MeanConfig};
pub use noise::{NoiseLedger, NoiseRecord};
pub use peeling::{peel, verify_peeling_accuracy, PeelingResult};
pub use regression::{
    least_squares_loss, private_linear_regression, private_sparse_regression, truncated_half_gradient,
    RegressionConfig, TheoryConstants, TraceRecord,
};
pub use rng::Seed;
pub use tuning::{
    data_driven_truncation, private_cv_sparsity, private_quantile, theoretical_truncation, CvConfig, CvProblem,
    QuantileConfig,
};
pub use vector::{clamp_scalar, project_l2_ball};
