//! Imputation strategies: working models for the conditional estimating
//! function `E{psi(Y, theta) | X}`.
//!
//! The one-step update is robust to arbitrary misspecification here, so a
//! strategy is any fit/predict pair. Shipped families: Nadaraya-Watson
//! kernel smoothing on projected covariates, (L1-penalized) logistic
//! regression of the indicator, and a regression random forest on psi.

use std::sync::Arc;

use ndarray::{ArrayView1, ArrayView2};

use crate::error::Result;

mod forest;
mod kernel;
mod logistic;

pub use forest::{fit_forest, ForestModel, ForestStrategy};
pub use kernel::{
    cv_bandwidth, default_bandwidth_grid, fit_kernel_strategy, gaussian_product_kernel,
    nw_predict, KernelSmootherModel, KernelStrategy, NW_RIDGE,
};
pub use logistic::{fit_logistic, LogisticModel, LogisticStrategy, PenaltySpec};

/// A fitted imputation model. Prediction is deterministic and safe to call
/// concurrently.
pub trait ImputationModel: Send + Sync {
    fn predict(&self, x: ArrayView1<f64>, theta: f64) -> f64;
}

/// Recipe for fitting imputation models on fold complements.
///
/// `fit` must use only the rows it is given; cross-fitting enforces fold
/// discipline by construction. Identical training data, theta and seed must
/// produce identical models.
pub trait ImputationStrategy: Send + Sync {
    fn name(&self) -> &str;

    fn fit(
        &self,
        train_y: &[f64],
        train_x: ArrayView2<f64>,
        theta: f64,
        seed: u64,
    ) -> Result<Box<dyn ImputationModel>>;
}

/// The phi == 0 baseline; reduces the one-step update to a Newton refinement
/// of the supervised estimator.
pub struct ZeroStrategy;

impl ImputationStrategy for ZeroStrategy {
    fn name(&self) -> &str {
        "zero"
    }

    fn fit(
        &self,
        _train_y: &[f64],
        _train_x: ArrayView2<f64>,
        _theta: f64,
        _seed: u64,
    ) -> Result<Box<dyn ImputationModel>> {
        Ok(Box::new(ConstantModel(0.0)))
    }
}

/// Imputes a fixed constant everywhere (mostly for tests; constants cancel
/// exactly in the one-step update).
pub struct ConstantStrategy(pub f64);

pub struct ConstantModel(pub f64);

impl ImputationModel for ConstantModel {
    fn predict(&self, _x: ArrayView1<f64>, _theta: f64) -> f64 {
        self.0
    }
}

impl ImputationStrategy for ConstantStrategy {
    fn name(&self) -> &str {
        "constant"
    }

    fn fit(
        &self,
        _train_y: &[f64],
        _train_x: ArrayView2<f64>,
        _theta: f64,
        _seed: u64,
    ) -> Result<Box<dyn ImputationModel>> {
        Ok(Box::new(ConstantModel(self.0)))
    }
}

type ImputationFn = dyn Fn(ArrayView1<f64>, f64) -> f64 + Send + Sync;

/// Wraps a fixed closed-form imputation function (the oracle test hook).
#[derive(Clone)]
pub struct FunctionStrategy {
    name: String,
    f: Arc<ImputationFn>,
}

impl FunctionStrategy {
    pub fn new(
        name: impl Into<String>,
        f: impl Fn(ArrayView1<f64>, f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        FunctionStrategy {
            name: name.into(),
            f: Arc::new(f),
        }
    }
}

struct FunctionModel {
    f: Arc<ImputationFn>,
}

impl ImputationModel for FunctionModel {
    fn predict(&self, x: ArrayView1<f64>, theta: f64) -> f64 {
        (self.f)(x, theta)
    }
}

impl ImputationStrategy for FunctionStrategy {
    fn name(&self) -> &str {
        &self.name
    }

    fn fit(
        &self,
        _train_y: &[f64],
        _train_x: ArrayView2<f64>,
        _theta: f64,
        _seed: u64,
    ) -> Result<Box<dyn ImputationModel>> {
        Ok(Box::new(FunctionModel { f: self.f.clone() }))
    }
}
