//! Population constants approximated by Monte Carlo, and the closed-form
//! oracle imputation strategy for the synthetic models.

use ndarray::{ArrayView1, ArrayView2};

use crate::data::QuantileLevel;
use crate::error::Result;
use crate::estimator;
use crate::normal;
use crate::nuisance::{ImputationModel, ImputationStrategy};
use crate::rng;
use crate::sim::dgp::{mean_function, DgpModel, DgpSpec};

/// Population quantile and efficiency constants for one configuration.
///
/// `sigma2_eff` is the variance component of the semiparametric bound:
/// (1-nu) E[var{psi | X}] + nu E[psi^2]; `ore = sigma2_sup / sigma2_eff` is
/// the best achievable relative efficiency.
#[derive(Debug, Clone, Copy)]
pub struct OracleConstants {
    pub theta0: f64,
    pub sigma2_sup: f64,
    pub sigma2_eff: f64,
    pub ore: f64,
}

/// Approximate the constants with `m_oracle` fresh draws.
///
/// theta0 is the empirical tau-quantile of the simulated responses (same
/// order-statistic convention as the estimator); the conditional CDF of Y
/// given X is known in closed form, Phi(theta - m(X)), so E[var{psi | X}]
/// is a Monte Carlo average of F(1-F) over the X draws.
pub fn oracle_constants(spec: &DgpSpec, m_oracle: usize, seed: u64) -> Result<OracleConstants> {
    let mut gen = rng::rng_from(seed);
    let mut ys = Vec::with_capacity(m_oracle);
    let mut means = Vec::with_capacity(m_oracle);
    let mut row = vec![0.0; spec.p];
    for _ in 0..m_oracle {
        for v in row.iter_mut() {
            *v = rng::standard_normal(&mut gen);
        }
        let m = mean_function(spec.model, &row, spec.q);
        means.push(m);
        ys.push(m + rng::standard_normal(&mut gen));
    }
    let theta0 = estimator::sample_quantile(&ys, spec.tau)?;
    let tau = spec.tau.value();
    let sigma2_sup = tau * (1.0 - tau);
    let cond_var: f64 = means
        .iter()
        .map(|&m| {
            let f = normal::cdf(theta0 - m);
            f * (1.0 - f)
        })
        .sum::<f64>()
        / m_oracle as f64;
    let nu = spec.nu();
    let sigma2_eff = (1.0 - nu) * cond_var + nu * sigma2_sup;
    Ok(OracleConstants {
        theta0,
        sigma2_sup,
        sigma2_eff,
        ore: sigma2_sup / sigma2_eff,
    })
}

/// The efficient imputation in closed form:
/// phi(x, theta) = Phi(theta - m(x)) - tau. Test hook; no fitting happens.
pub struct OracleStrategy {
    pub model: DgpModel,
    pub q: usize,
    pub tau: QuantileLevel,
    name: String,
}

impl OracleStrategy {
    pub fn new(model: DgpModel, q: usize, tau: QuantileLevel) -> Self {
        let name = format!("oracle:{}", model.token());
        OracleStrategy {
            model,
            q,
            tau,
            name,
        }
    }
}

struct OracleModel {
    model: DgpModel,
    q: usize,
    tau: f64,
}

impl ImputationModel for OracleModel {
    fn predict(&self, x: ArrayView1<f64>, theta: f64) -> f64 {
        let xs: Vec<f64> = x.iter().copied().collect();
        normal::cdf(theta - mean_function(self.model, &xs, self.q)) - self.tau
    }
}

impl ImputationStrategy for OracleStrategy {
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
        Ok(Box::new(OracleModel {
            model: self.model,
            q: self.q,
            tau: self.tau.value(),
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::QuantileLevel;

    fn spec(model: DgpModel, p: usize, q: usize, n: usize, nu_n: usize) -> DgpSpec {
        DgpSpec::new(model, p, q, n, nu_n, QuantileLevel::new(0.5).unwrap()).unwrap()
    }

    #[test]
    fn null_model_constants() {
        let s = spec(DgpModel::Null, 10, 10, 500, 5000);
        let oc = oracle_constants(&s, 100_000, 1).unwrap();
        assert!(oc.theta0.abs() < 0.02, "theta0 {}", oc.theta0);
        assert!((oc.ore - 1.0).abs() < 0.01, "ore {}", oc.ore);
        assert_eq!(oc.sigma2_sup, 0.25);
    }

    #[test]
    fn linear_model_theta0_is_near_zero() {
        // Monte Carlo se of the median is sd(Y) * sqrt(pi/2) / sqrt(m);
        // keep tolerances above 3 of those.
        let s5 = spec(DgpModel::Linear, 5, 5, 500, 5000);
        let oc5 = oracle_constants(&s5, 100_000, 2).unwrap();
        assert!(oc5.theta0.abs() < 0.03, "theta0 {}", oc5.theta0);

        let s20 = spec(DgpModel::Linear, 20, 20, 500, 5000);
        let oc = oracle_constants(&s20, 100_000, 2).unwrap();
        assert!(oc.theta0.abs() < 0.06, "theta0 {}", oc.theta0);
        assert!(oc.sigma2_eff <= oc.sigma2_sup + 1e-12);
        assert!(oc.ore >= 1.0 - 1e-9);
    }

    #[test]
    fn oracle_strategy_is_a_fixed_function() {
        let s = spec(DgpModel::Linear, 3, 3, 50, 0);
        let strat = OracleStrategy::new(s.model, s.q, s.tau);
        let data = crate::sim::dgp::gen_dataset(&s, 3);
        let model = strat
            .fit(data.labeled_y(), data.labeled_x().view(), 0.0, 9)
            .unwrap();
        let x0 = data.labeled_x().row(0);
        let m: f64 = x0.iter().sum();
        let want = crate::normal::cdf(0.0 - m) - 0.5;
        let got = model.predict(x0, 0.0);
        assert!((got - want).abs() < 1e-12);
    }
}
