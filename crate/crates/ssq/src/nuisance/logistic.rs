//! Logistic regression of the indicator `I(Y < theta)` on the covariates,
//! unpenalized (IRLS) or L1-penalized (coordinate descent on the quadratic
//! approximation, intercept unpenalized). Predictions return
//! `expit((1, x')gamma) - tau`, always inside (-tau, 1-tau).

use ndarray::{ArrayView1, ArrayView2};

use crate::data::QuantileLevel;
use crate::error::{Error, Result};
use crate::estimator;
use crate::nuisance::{ImputationModel, ImputationStrategy};
use crate::rng;

const GRAD_TOL: f64 = 1e-8;
const MAX_ITER: usize = 100;
const WEIGHT_FLOOR: f64 = 1e-10;
const PROB_CLAMP: f64 = 1e-12;

#[inline]
fn expit(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// A fitted logistic imputation model: intercept first, then slopes.
#[derive(Debug, Clone)]
pub struct LogisticModel {
    pub coefficients: Vec<f64>,
    pub penalty: f64,
    pub tau: f64,
}

impl LogisticModel {
    fn linear(&self, x: ArrayView1<f64>) -> f64 {
        self.coefficients[0]
            + self.coefficients[1..]
                .iter()
                .zip(x)
                .map(|(c, v)| c * v)
                .sum::<f64>()
    }

    /// Fitted probability of the indicator at x.
    pub fn probability(&self, x: ArrayView1<f64>) -> f64 {
        expit(self.linear(x))
    }
}

impl ImputationModel for LogisticModel {
    fn predict(&self, x: ArrayView1<f64>, _theta: f64) -> f64 {
        self.probability(x) - self.tau
    }
}

fn mean_nll(z: &[f64], probs: &[f64]) -> f64 {
    let m = z.len() as f64;
    z.iter()
        .zip(probs)
        .map(|(&zi, &pi)| {
            let p = pi.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
            -(zi * p.ln() + (1.0 - zi) * (1.0 - p).ln())
        })
        .sum::<f64>()
        / m
}

/// Fit the logistic working model for `I(y < theta)`.
///
/// `penalty = 0`: Newton/IRLS with step-halving, declared converged when the
/// sup-norm of the mean log-likelihood gradient falls under 1e-8. Separation
/// (all fitted probabilities at the boundary, or no convergence within the
/// iteration cap) is an error for the unpenalized fit.
///
/// `penalty > 0`: proximal Newton; each outer step solves the weighted
/// quadratic approximation by coordinate descent with soft-thresholding,
/// intercept unpenalized. Objective: mean NLL + penalty * ||slopes||_1.
pub fn fit_logistic(
    train_y: &[f64],
    train_x: ArrayView2<f64>,
    theta: f64,
    tau: QuantileLevel,
    penalty: f64,
) -> Result<LogisticModel> {
    let m = train_y.len();
    let p = train_x.ncols();
    if train_x.nrows() != m || m < 2 {
        return Err(Error::ShapeMismatch(
            "need at least two aligned training rows".into(),
        ));
    }
    if !(penalty >= 0.0) {
        return Err(Error::InvalidConfig(format!(
            "penalty must be nonnegative, got {penalty}"
        )));
    }
    let z: Vec<f64> = train_y
        .iter()
        .map(|&y| if y < theta { 1.0 } else { 0.0 })
        .collect();
    let pos = z.iter().sum::<f64>();
    if penalty == 0.0 && (pos == 0.0 || pos == m as f64) {
        return Err(Error::Separation);
    }

    let m_f = m as f64;
    let mut coef = vec![0.0; p + 1];
    let prevalence = (pos / m_f).clamp(1.0 / (2.0 * m_f), 1.0 - 1.0 / (2.0 * m_f));
    coef[0] = (prevalence / (1.0 - prevalence)).ln();

    let mut eta = vec![coef[0]; m];
    let mut probs: Vec<f64> = eta.iter().map(|&e| expit(e)).collect();
    let mut nll = mean_nll(&z, &probs) + penalty * l1_slopes(&coef);
    let mut converged = false;

    for _ in 0..MAX_ITER {
        // Working weights and response for the quadratic approximation.
        let w: Vec<f64> = probs.iter().map(|&pi| (pi * (1.0 - pi)).max(WEIGHT_FLOOR)).collect();
        let grad = gradient(&z, &probs, train_x, m_f);
        if penalty == 0.0 && sup_norm(&grad) < GRAD_TOL {
            converged = true;
            break;
        }

        let delta = if penalty == 0.0 {
            newton_direction(train_x, &w, &z, &probs, m_f)?
        } else {
            let u: Vec<f64> = (0..m)
                .map(|i| eta[i] + (z[i] - probs[i]) / w[i])
                .collect();
            let new_coef = weighted_lasso(train_x, &w, &u, penalty, &coef);
            let d: Vec<f64> = new_coef.iter().zip(&coef).map(|(a, b)| a - b).collect();
            if sup_norm(&d) < 1e-9 {
                converged = true;
                break;
            }
            d
        };

        // Step-halving on the penalized objective.
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let cand: Vec<f64> = coef
                .iter()
                .zip(&delta)
                .map(|(c, d)| c + step * d)
                .collect();
            let cand_eta: Vec<f64> = (0..m)
                .map(|i| {
                    cand[0]
                        + cand[1..]
                            .iter()
                            .zip(train_x.row(i))
                            .map(|(c, v)| c * v)
                            .sum::<f64>()
                })
                .collect();
            let cand_probs: Vec<f64> = cand_eta.iter().map(|&e| expit(e)).collect();
            let cand_nll = mean_nll(&z, &cand_probs) + penalty * l1_slopes(&cand);
            if cand_nll <= nll + 1e-14 {
                coef = cand;
                eta = cand_eta;
                probs = cand_probs;
                nll = cand_nll;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            // No descent possible: treat as converged to numerical limits.
            converged = true;
            break;
        }
    }

    if penalty == 0.0 {
        let grad = gradient(&z, &probs, train_x, m_f);
        if sup_norm(&grad) < GRAD_TOL {
            converged = true;
        }
        if !converged {
            return Err(Error::Separation);
        }
        // Converged but every observation fitted at the boundary is what
        // perfect separation looks like numerically.
        let least_extreme = probs
            .iter()
            .map(|&pi| pi.min(1.0 - pi))
            .fold(f64::NEG_INFINITY, f64::max);
        if least_extreme < 1e-6 {
            return Err(Error::Separation);
        }
    }

    Ok(LogisticModel {
        coefficients: coef,
        penalty,
        tau: tau.value(),
    })
}

fn l1_slopes(coef: &[f64]) -> f64 {
    coef[1..].iter().map(|c| c.abs()).sum()
}

fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |a, &b| a.max(b.abs()))
}

/// Gradient of the mean negative log-likelihood: (1/m) X'(p - z), intercept
/// first.
fn gradient(z: &[f64], probs: &[f64], x: ArrayView2<f64>, m_f: f64) -> Vec<f64> {
    let p = x.ncols();
    let mut g = vec![0.0; p + 1];
    for i in 0..z.len() {
        let r = probs[i] - z[i];
        g[0] += r;
        for j in 0..p {
            g[j + 1] += r * x[[i, j]];
        }
    }
    for v in g.iter_mut() {
        *v /= m_f;
    }
    g
}

/// Newton direction solving (X'WX/m + ridge I) d = -grad.
fn newton_direction(
    x: ArrayView2<f64>,
    w: &[f64],
    z: &[f64],
    probs: &[f64],
    m_f: f64,
) -> Result<Vec<f64>> {
    let p = x.ncols();
    let dim = p + 1;
    let mut h = nalgebra::DMatrix::<f64>::zeros(dim, dim);
    let mut g = nalgebra::DVector::<f64>::zeros(dim);
    for i in 0..z.len() {
        let wi = w[i];
        let r = probs[i] - z[i];
        g[0] += r;
        h[(0, 0)] += wi;
        for a in 0..p {
            let xa = x[[i, a]];
            g[a + 1] += r * xa;
            h[(0, a + 1)] += wi * xa;
            for b in a..p {
                h[(a + 1, b + 1)] += wi * xa * x[[i, b]];
            }
        }
    }
    for a in 0..dim {
        for b in a..dim {
            let v = h[(a, b)] / m_f + if a == b { 1e-10 } else { 0.0 };
            h[(a, b)] = v;
            h[(b, a)] = v;
        }
    }
    g /= m_f;
    let chol = h.cholesky().ok_or(Error::SingularDesign)?;
    let d = chol.solve(&(-g));
    Ok(d.iter().copied().collect())
}

/// Coordinate descent for the weighted penalized least squares problem
/// (1/2m) sum w_i (u_i - c0 - x_i'c)^2 + penalty ||c||_1, intercept free.
/// This is the exact quadratic model of the mean NLL at the expansion point,
/// so a fixed point of the outer loop satisfies the penalized KKT system.
fn weighted_lasso(
    x: ArrayView2<f64>,
    w: &[f64],
    u: &[f64],
    penalty: f64,
    start: &[f64],
) -> Vec<f64> {
    let m = u.len();
    let p = x.ncols();
    let m_f = m as f64;
    let mut coef = start.to_vec();
    // residual of the working response under the current coefficients
    let mut resid: Vec<f64> = (0..m)
        .map(|i| {
            u[i] - coef[0]
                - coef[1..]
                    .iter()
                    .zip(x.row(i))
                    .map(|(c, v)| c * v)
                    .sum::<f64>()
        })
        .collect();
    let wx2: Vec<f64> = (0..p)
        .map(|j| {
            x.column(j)
                .iter()
                .zip(w)
                .map(|(v, wi)| wi * v * v)
                .sum::<f64>()
                / m_f
        })
        .collect();
    let w_sum: f64 = w.iter().sum::<f64>() / m_f;

    for _ in 0..1000 {
        let mut max_delta = 0.0_f64;
        // intercept
        let num: f64 = resid.iter().zip(w).map(|(r, wi)| wi * r).sum::<f64>() / m_f;
        let d0 = num / w_sum;
        if d0 != 0.0 {
            coef[0] += d0;
            for r in resid.iter_mut() {
                *r -= d0;
            }
            max_delta = max_delta.max(d0.abs());
        }
        for j in 0..p {
            if wx2[j] == 0.0 {
                continue;
            }
            let col = x.column(j);
            let mut dot = 0.0;
            for ((r, wi), v) in resid.iter().zip(w).zip(col) {
                dot += wi * r * v;
            }
            let rho = dot / m_f + wx2[j] * coef[j + 1];
            let new = if rho > penalty {
                (rho - penalty) / wx2[j]
            } else if rho < -penalty {
                (rho + penalty) / wx2[j]
            } else {
                0.0
            };
            let delta = new - coef[j + 1];
            if delta != 0.0 {
                for (r, v) in resid.iter_mut().zip(col) {
                    *r -= delta * v;
                }
                coef[j + 1] = new;
                max_delta = max_delta.max(delta.abs());
            }
        }
        if max_delta < 1e-9 {
            break;
        }
    }
    coef
}

/// Largest penalty with any active slope at the null model:
/// (1/m) max_j |x_j'(z - zbar)|.
pub fn logistic_max_penalty(train_x: ArrayView2<f64>, z: &[f64]) -> f64 {
    let m = z.len() as f64;
    let zbar = z.iter().sum::<f64>() / m;
    let mut max = 0.0_f64;
    for j in 0..train_x.ncols() {
        let dot: f64 = train_x
            .column(j)
            .iter()
            .zip(z)
            .map(|(x, zi)| x * (zi - zbar))
            .sum();
        max = max.max(dot.abs());
    }
    max / m
}

/// How the logistic strategy chooses its penalty.
#[derive(Debug, Clone)]
pub enum PenaltySpec {
    /// Unpenalized maximum likelihood.
    None,
    Fixed(f64),
    /// K-fold cross-validation by validation deviance over a geometric grid
    /// (30 values down to 0.1% of the data-driven maximum when no grid is
    /// given).
    CrossValidated {
        grid: Option<Vec<f64>>,
        folds: usize,
    },
}

/// Imputation strategy backed by [`fit_logistic`].
pub struct LogisticStrategy {
    pub tau: QuantileLevel,
    pub penalty: PenaltySpec,
    name: String,
}

impl LogisticStrategy {
    pub fn unpenalized(tau: QuantileLevel) -> Self {
        LogisticStrategy {
            tau,
            penalty: PenaltySpec::None,
            name: "logistic".into(),
        }
    }

    pub fn l1_cv(tau: QuantileLevel) -> Self {
        LogisticStrategy {
            tau,
            penalty: PenaltySpec::CrossValidated {
                grid: None,
                folds: 10,
            },
            name: "logistic_l1".into(),
        }
    }
}

impl ImputationStrategy for LogisticStrategy {
    fn name(&self) -> &str {
        &self.name
    }

    fn fit(
        &self,
        train_y: &[f64],
        train_x: ArrayView2<f64>,
        theta: f64,
        seed: u64,
    ) -> Result<Box<dyn ImputationModel>> {
        let model = match &self.penalty {
            PenaltySpec::None => fit_logistic(train_y, train_x, theta, self.tau, 0.0)?,
            PenaltySpec::Fixed(lambda) => {
                fit_logistic(train_y, train_x, theta, self.tau, *lambda)?
            }
            PenaltySpec::CrossValidated { grid, folds } => {
                let lambda =
                    cv_penalty(train_y, train_x, theta, self.tau, grid.as_deref(), *folds, seed)?;
                fit_logistic(train_y, train_x, theta, self.tau, lambda)?
            }
        };
        Ok(Box::new(model))
    }
}

fn cv_penalty(
    train_y: &[f64],
    train_x: ArrayView2<f64>,
    theta: f64,
    tau: QuantileLevel,
    grid: Option<&[f64]>,
    folds: usize,
    seed: u64,
) -> Result<f64> {
    let m = train_y.len();
    let owned;
    let grid: &[f64] = match grid {
        Some(g) if !g.is_empty() => g,
        Some(_) => return Err(Error::InvalidConfig("empty penalty grid".into())),
        None => {
            let z: Vec<f64> = train_y
                .iter()
                .map(|&y| if y < theta { 1.0 } else { 0.0 })
                .collect();
            let lmax = logistic_max_penalty(train_x, &z).max(1e-12);
            owned = (0..30)
                .map(|g| lmax * 1e-3_f64.powf(g as f64 / 29.0))
                .collect::<Vec<f64>>();
            &owned
        }
    };
    let mut lambdas = grid.to_vec();
    lambdas.sort_by(|a, b| b.total_cmp(a));
    lambdas.dedup();

    let plan = estimator::make_fold_plan(m, folds, rng::substream(seed, 0))?;
    let mut deviance = vec![0.0_f64; lambdas.len()];
    for fold in 0..folds {
        let train_idx = plan.complement_indices(fold);
        let val_idx = plan.fold_indices(fold);
        let mut xt = ndarray::Array2::<f64>::zeros((train_idx.len(), train_x.ncols()));
        let mut yt = Vec::with_capacity(train_idx.len());
        for (row, &i) in train_idx.iter().enumerate() {
            xt.row_mut(row).assign(&train_x.row(i));
            yt.push(train_y[i]);
        }
        for (li, &lambda) in lambdas.iter().enumerate() {
            let fit = fit_logistic(&yt, xt.view(), theta, tau, lambda)?;
            for &i in &val_idx {
                let z = if train_y[i] < theta { 1.0 } else { 0.0 };
                let p = fit
                    .probability(train_x.row(i))
                    .clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
                deviance[li] -= z * p.ln() + (1.0 - z) * (1.0 - p).ln();
            }
        }
    }
    let mut best = 0usize;
    for li in 1..lambdas.len() {
        if deviance[li] < deviance[best] {
            best = li;
        }
    }
    Ok(lambdas[best])
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::{arr1, Array2};

    fn tau(t: f64) -> QuantileLevel {
        QuantileLevel::new(t).unwrap()
    }

    #[test]
    fn saturated_two_location_fit_matches_closed_form() {
        // Observations at two distinct covariate values; the saturated MLE
        // matches the empirical log-odds at each location.
        // x = 0: 1 of 3 indicators on; x = 1: 3 of 4 on.
        let theta = 0.5;
        // y < theta encodes the indicator
        let y = vec![0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 1.0];
        let xv = vec![0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0];
        let x = Array2::from_shape_vec((7, 1), xv).unwrap();
        let fit = fit_logistic(&y, x.view(), theta, tau(0.5), 0.0).unwrap();
        let logit = |p: f64| (p / (1.0 - p)).ln();
        let want0 = logit(1.0 / 3.0);
        let want1 = logit(3.0 / 4.0);
        assert_abs_diff_eq!(fit.coefficients[0], want0, epsilon = 1e-6);
        assert_abs_diff_eq!(fit.coefficients[0] + fit.coefficients[1], want1, epsilon = 1e-6);
    }

    #[test]
    fn prediction_is_bounded() {
        let y = vec![0.0, 1.0, 0.0, 1.0, 1.0, 0.0];
        let x = Array2::from_shape_fn((6, 2), |(i, j)| (i as f64) * 0.3 - j as f64);
        let t = tau(0.3);
        let fit = fit_logistic(&y, x.view(), 0.5, t, 0.1).unwrap();
        for i in 0..6 {
            let v = fit.predict(x.row(i), 0.5);
            assert!(v > -0.3 && v < 0.7);
        }
    }

    #[test]
    fn large_penalty_gives_null_model() {
        let mut gen = rng::rng_from(1);
        let n = 80;
        let x = Array2::from_shape_fn((n, 3), |_| rng::standard_normal(&mut gen));
        // indicators independent of X: prevalence 0.25
        let y: Vec<f64> = (0..n)
            .map(|i| if i % 4 == 0 { -1.0 } else { 1.0 })
            .collect();
        let fit = fit_logistic(&y, x.view(), 0.0, tau(0.5), 10.0).unwrap();
        for j in 1..4 {
            assert_abs_diff_eq!(fit.coefficients[j], 0.0, epsilon = 1e-9);
        }
        let prevalence: f64 = 0.25;
        assert_abs_diff_eq!(
            fit.coefficients[0],
            (prevalence / (1.0 - prevalence)).ln(),
            epsilon = 1e-6
        );
    }

    #[test]
    fn l1_kkt_conditions() {
        let mut gen = rng::rng_from(2);
        let n = 120;
        let x = Array2::from_shape_fn((n, 5), |_| rng::standard_normal(&mut gen));
        let y: Vec<f64> = (0..n)
            .map(|i| 1.5 * x[[i, 0]] - x[[i, 3]] + rng::standard_normal(&mut gen))
            .collect();
        let theta = 0.0;
        let penalty = 0.05;
        let fit = fit_logistic(&y, x.view(), theta, tau(0.5), penalty).unwrap();
        let z: Vec<f64> = y.iter().map(|&v| if v < theta { 1.0 } else { 0.0 }).collect();
        let probs: Vec<f64> = (0..n).map(|i| fit.probability(x.row(i))).collect();
        for j in 0..5 {
            let grad: f64 = (0..n)
                .map(|i| x[[i, j]] * (probs[i] - z[i]))
                .sum::<f64>()
                / n as f64;
            let b = fit.coefficients[j + 1];
            if b == 0.0 {
                assert!(grad.abs() <= penalty + 1e-6, "inactive KKT {j}: {grad}");
            } else {
                assert_abs_diff_eq!(grad, -penalty * b.signum(), epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn separation_is_detected() {
        // Perfectly separated indicators along x.
        let y = vec![-1.0, -1.0, -1.0, 1.0, 1.0, 1.0];
        let xv = vec![-3.0, -2.0, -1.0, 1.0, 2.0, 3.0];
        let x = Array2::from_shape_vec((6, 1), xv).unwrap();
        assert!(matches!(
            fit_logistic(&y, x.view(), 0.0, tau(0.5), 0.0),
            Err(Error::Separation)
        ));
        // With a penalty the fit goes through.
        assert!(fit_logistic(&y, x.view(), 0.0, tau(0.5), 0.05).is_ok());
        // All labels identical: error without penalty.
        let y1 = vec![1.0; 6];
        assert!(matches!(
            fit_logistic(&y1, x.view(), 10.0, tau(0.5), 0.0),
            Err(Error::Separation)
        ));
    }

    #[test]
    fn gradient_converged_on_well_posed_fit() {
        let mut gen = rng::rng_from(3);
        let n = 200;
        let x = Array2::from_shape_fn((n, 3), |_| rng::standard_normal(&mut gen));
        let y: Vec<f64> = (0..n)
            .map(|i| 0.8 * x[[i, 1]] + rng::standard_normal(&mut gen))
            .collect();
        let fit = fit_logistic(&y, x.view(), 0.2, tau(0.5), 0.0).unwrap();
        let z: Vec<f64> = y.iter().map(|&v| if v < 0.2 { 1.0 } else { 0.0 }).collect();
        let probs: Vec<f64> = (0..n).map(|i| fit.probability(x.row(i))).collect();
        let g = gradient(&z, &probs, x.view(), n as f64);
        assert!(sup_norm(&g) < 1e-8, "gradient {:?}", g);
    }

    #[test]
    fn cv_strategy_runs_and_predicts_in_range() {
        let mut gen = rng::rng_from(4);
        let n = 90;
        let x = Array2::from_shape_fn((n, 4), |_| rng::standard_normal(&mut gen));
        let y: Vec<f64> = (0..n)
            .map(|i| x[[i, 0]] + rng::standard_normal(&mut gen))
            .collect();
        let strat = LogisticStrategy::l1_cv(tau(0.5));
        let model = strat.fit(&y, x.view(), 0.0, 11).unwrap();
        let v = model.predict(arr1(&[0.0, 0.0, 0.0, 0.0]).view(), 0.0);
        assert!(v > -0.5 && v < 0.5);
    }
}
