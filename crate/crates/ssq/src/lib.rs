//! Semi-supervised quantile estimation.
//!
//! Given a labeled sample `(Y_i, X_i)` and a (typically much larger) unlabeled
//! sample of covariates, this crate estimates a marginal quantile of `Y` by
//! refining the sample quantile with a one-step Newton update built on a
//! cross-fitted, debiased imputation of the indicator estimating function.
//! The update is robust to arbitrary misspecification of the imputation model
//! and never less efficient than the sample quantile asymptotically.
//!
//! The pieces:
//!
//! * [`estimator`] — check function, sample quantile, kernel density estimate,
//!   fold plans, cross-fitting, the one-step update and plug-in inference.
//! * [`nuisance`] — imputation strategies: Nadaraya-Watson kernel smoothing on
//!   projected covariates, (penalized) logistic regression, and a regression
//!   random forest.
//! * [`dimred`] — covariate transformations feeding the kernel smoother: OLS
//!   and lasso regression directions, sliced inverse regression and a sparse
//!   variant.
//! * [`sim`] — the synthetic data generating processes, oracle constants, and
//!   the replication engine producing relative-efficiency / coverage tables.

pub mod data;
pub mod dimred;
pub mod error;
pub mod estimator;
pub mod normal;
pub mod nuisance;
pub mod rng;
pub mod sim;

pub use data::{
    Dataset, DensityEstimate, FoldPlan, ImputedValues, QuantileFit, QuantileLevel,
};
pub use error::{Error, Result};
pub use estimator::estimate;
