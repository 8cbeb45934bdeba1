//! Simulation studies: data generating processes, Monte Carlo oracle
//! constants, and the replication engine behind the metrics tables.

use crate::data::QuantileLevel;
use crate::dimred::DimRedSpec;
use crate::error::{Error, Result};
use crate::nuisance::{
    ForestStrategy, ImputationStrategy, KernelStrategy, LogisticStrategy, ZeroStrategy,
};

pub mod dgp;
pub mod oracle;
pub mod study;

pub use dgp::{gen_dataset, mean_function, DgpModel, DgpSpec};
pub use oracle::{oracle_constants, OracleConstants, OracleStrategy};
pub use study::{run_replication, run_study, MethodFit, MetricsRow, MetricsTable, ReplicationResult};

/// Hyperparameters shared by the strategy tokens; the defaults are the ones
/// used throughout the studies.
#[derive(Debug, Clone)]
pub struct StrategyOptions {
    pub forest_trees: usize,
    pub forest_min_leaf: usize,
    /// `None` resolves to ceil(sqrt(p)) at fit time.
    pub forest_mtry: Option<usize>,
    /// Penalty grid for lasso-based fits; `None` derives a geometric grid
    /// from the data.
    pub lambda_grid: Option<Vec<f64>>,
    pub cv_folds: usize,
    /// Bandwidth grid for the kernel strategies; `None` uses the default
    /// geometric grid around the rule-of-thumb reference.
    pub bandwidth_grid: Option<Vec<f64>>,
    /// Slice count overrides for the SIR variants.
    pub sir_slices: Option<usize>,
    pub sparse_sir_slices: Option<usize>,
    /// Sparsity for `oracle:<model>` tokens that do not carry an explicit q.
    pub oracle_q: Option<usize>,
}

impl Default for StrategyOptions {
    fn default() -> Self {
        StrategyOptions {
            forest_trees: 500,
            forest_min_leaf: 5,
            forest_mtry: None,
            lambda_grid: None,
            cv_folds: 10,
            bandwidth_grid: None,
            sir_slices: None,
            sparse_sir_slices: None,
            oracle_q: None,
        }
    }
}

/// Build an imputation strategy from its configuration token.
///
/// Tokens: `zero`, `ks_ols`, `ks_lasso`, `ks_sir`, `ks_sparse_sir`,
/// `logistic`, `logistic_l1`, `forest`, and the test hook
/// `oracle:<model>[:<q>]`.
pub fn strategy_from_token(
    token: &str,
    tau: QuantileLevel,
    opts: &StrategyOptions,
) -> Result<Box<dyn ImputationStrategy>> {
    let kernel = |mut spec: DimRedSpec, name: &str| -> Box<dyn ImputationStrategy> {
        spec.lambda_grid = opts.lambda_grid.clone();
        spec.cv_folds = opts.cv_folds;
        let mut s = KernelStrategy::new(name, spec, tau);
        s.grid = opts.bandwidth_grid.clone();
        Box::new(s)
    };
    match token {
        "zero" => Ok(Box::new(ZeroStrategy)),
        "ks_ols" => Ok(kernel(DimRedSpec::ols(), "ks_ols")),
        "ks_lasso" => Ok(kernel(DimRedSpec::lasso(), "ks_lasso")),
        "ks_sir" => {
            let mut spec = DimRedSpec::sir();
            spec.slices = opts.sir_slices;
            Ok(kernel(spec, "ks_sir"))
        }
        "ks_sparse_sir" => {
            let mut spec = DimRedSpec::sparse_sir();
            spec.slices = opts.sparse_sir_slices;
            Ok(kernel(spec, "ks_sparse_sir"))
        }
        "ks_identity" => Ok(kernel(DimRedSpec::identity(), "ks_identity")),
        "logistic" => Ok(Box::new(LogisticStrategy::unpenalized(tau))),
        "logistic_l1" => Ok(Box::new(LogisticStrategy::l1_cv(tau))),
        "forest" => {
            let mut s = ForestStrategy::new(tau);
            s.n_trees = opts.forest_trees;
            s.min_leaf = opts.forest_min_leaf;
            s.mtry = opts.forest_mtry;
            Ok(Box::new(s))
        }
        other => {
            if let Some(rest) = other.strip_prefix("oracle:") {
                let mut parts = rest.splitn(2, ':');
                let model = DgpModel::from_token(parts.next().unwrap_or(""))?;
                let q = match parts.next() {
                    Some(qs) => qs.parse::<usize>().map_err(|_| {
                        Error::InvalidConfig(format!("bad oracle sparsity in '{other}'"))
                    })?,
                    None => opts.oracle_q.ok_or_else(|| {
                        Error::InvalidConfig(format!(
                            "token '{other}' needs an explicit sparsity (oracle:<model>:<q>)"
                        ))
                    })?,
                };
                Ok(Box::new(OracleStrategy::new(model, q, tau)))
            } else {
                Err(Error::InvalidConfig(format!(
                    "unknown strategy token '{other}'"
                )))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokens_resolve() {
        let tau = QuantileLevel::new(0.5).unwrap();
        let opts = StrategyOptions {
            oracle_q: Some(3),
            ..StrategyOptions::default()
        };
        for t in [
            "zero",
            "ks_ols",
            "ks_lasso",
            "ks_sir",
            "ks_sparse_sir",
            "ks_identity",
            "logistic",
            "logistic_l1",
            "forest",
            "oracle:b",
            "oracle:d:4",
        ] {
            let s = strategy_from_token(t, tau, &opts).unwrap();
            assert!(!s.name().is_empty());
        }
        assert!(strategy_from_token("nope", tau, &opts).is_err());
        assert!(strategy_from_token("oracle:z", tau, &opts).is_err());
        let bare = StrategyOptions::default();
        assert!(strategy_from_token("oracle:b", tau, &bare).is_err());
    }
}
