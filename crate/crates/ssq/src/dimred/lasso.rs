//! L1-penalized least squares by coordinate descent, with K-fold
//! cross-validation over a penalty grid.
//!
//! The objective is `n^{-1} sum_i (y_i - b0 - x_i'beta)^2 + lambda ||beta||_1`
//! on the original covariate scale. Covariates are standardized internally
//! for the sweeps (with the penalty rescaled per coordinate so the solution
//! is exactly the raw-scale one) and coefficients are returned on the
//! original scale. The intercept is unpenalized.

use ndarray::ArrayView2;

use crate::dimred::Projection;
use crate::error::{Error, Result};
use crate::estimator;
use crate::rng;

const TOL: f64 = 1e-9;
const MAX_SWEEPS: usize = 50_000;

/// Coordinate-descent solution at a single penalty.
#[derive(Debug, Clone)]
pub struct LassoFit {
    pub intercept: f64,
    pub slopes: Vec<f64>,
    pub lambda: f64,
}

struct Standardized {
    cols: Vec<f64>, // p x m column-major standardized covariates
    xbar: Vec<f64>,
    sd: Vec<f64>,
    yc: Vec<f64>,
    ybar: f64,
    m: usize,
    p: usize,
}

impl Standardized {
    fn build(x: ArrayView2<f64>, y: &[f64]) -> Result<Self> {
        let m = x.nrows();
        let p = x.ncols();
        if y.len() != m || m < 2 {
            return Err(Error::ShapeMismatch(
                "need at least two aligned rows".into(),
            ));
        }
        let mut cols = vec![0.0; p * m];
        let mut xbar = vec![0.0; p];
        let mut sd = vec![0.0; p];
        for j in 0..p {
            let col = x.column(j);
            let mean = col.sum() / m as f64;
            let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / m as f64;
            if var <= 1e-24 * (1.0 + mean * mean) {
                return Err(Error::ZeroVarianceCovariate(j));
            }
            let s = var.sqrt();
            xbar[j] = mean;
            sd[j] = s;
            for (i, v) in col.iter().enumerate() {
                cols[j * m + i] = (v - mean) / s;
            }
        }
        let ybar = y.iter().sum::<f64>() / m as f64;
        let yc: Vec<f64> = y.iter().map(|v| v - ybar).collect();
        Ok(Standardized {
            cols,
            xbar,
            sd,
            yc,
            ybar,
            m,
            p,
        })
    }

    #[inline]
    fn col(&self, j: usize) -> &[f64] {
        &self.cols[j * self.m..(j + 1) * self.m]
    }

    /// Run coordinate descent at `lambda`, warm-starting from `beta`
    /// (standardized scale). Residuals are maintained incrementally.
    fn descend(&self, lambda: f64, beta: &mut [f64], resid: &mut [f64]) {
        let m_f = self.m as f64;
        // Per-coordinate soft threshold making the standardized problem
        // exactly equivalent to the raw-scale objective.
        let thresh: Vec<f64> = self.sd.iter().map(|s| lambda / (2.0 * s)).collect();

        let mut sweeps = 0usize;
        loop {
            // Sweep the current active set to convergence, then confirm with
            // a full sweep; stop when the full sweep moves nothing.
            let mut active: Vec<usize> =
                (0..self.p).filter(|&j| beta[j] != 0.0).collect();
            loop {
                let mut max_delta = 0.0_f64;
                for &j in &active {
                    max_delta = max_delta.max(self.update_coord(j, thresh[j], beta, resid, m_f));
                }
                sweeps += 1;
                if max_delta < TOL || sweeps >= MAX_SWEEPS {
                    break;
                }
            }
            let mut max_delta = 0.0_f64;
            for j in 0..self.p {
                max_delta = max_delta.max(self.update_coord(j, thresh[j], beta, resid, m_f));
            }
            sweeps += 1;
            if max_delta < TOL || sweeps >= MAX_SWEEPS {
                break;
            }
            active.clear();
        }
    }

    #[inline]
    fn update_coord(
        &self,
        j: usize,
        thresh: f64,
        beta: &mut [f64],
        resid: &mut [f64],
        m_f: f64,
    ) -> f64 {
        let col = self.col(j);
        let mut dot = 0.0;
        for (r, c) in resid.iter().zip(col) {
            dot += r * c;
        }
        let rho = dot / m_f + beta[j];
        let new = soft_threshold(rho, thresh);
        let delta = new - beta[j];
        if delta != 0.0 {
            for (r, c) in resid.iter_mut().zip(col) {
                *r -= delta * c;
            }
            beta[j] = new;
        }
        delta.abs()
    }

    fn to_raw(&self, beta_std: &[f64], lambda: f64) -> LassoFit {
        let slopes: Vec<f64> = beta_std
            .iter()
            .zip(&self.sd)
            .map(|(b, s)| b / s)
            .collect();
        let intercept = self.ybar
            - slopes
                .iter()
                .zip(&self.xbar)
                .map(|(b, m)| b * m)
                .sum::<f64>();
        LassoFit {
            intercept,
            slopes,
            lambda,
        }
    }
}

#[inline]
fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// Smallest penalty at which every slope is zero:
/// `(2/n) * max_j |x_j'(y - ybar)|`.
pub fn lasso_max_lambda(x: ArrayView2<f64>, y: &[f64]) -> f64 {
    let m = x.nrows() as f64;
    let ybar = y.iter().sum::<f64>() / m;
    let mut max = 0.0_f64;
    for j in 0..x.ncols() {
        let dot: f64 = x
            .column(j)
            .iter()
            .zip(y)
            .map(|(xv, yv)| xv * (yv - ybar))
            .sum();
        max = max.max(dot.abs());
    }
    2.0 * max / m
}

/// Solve the lasso at a single penalty.
pub fn lasso_solve(x: ArrayView2<f64>, y: &[f64], lambda: f64) -> Result<LassoFit> {
    if !(lambda >= 0.0) {
        return Err(Error::InvalidConfig(format!(
            "penalty must be nonnegative, got {lambda}"
        )));
    }
    let ws = Standardized::build(x, y)?;
    let mut beta = vec![0.0; ws.p];
    let mut resid = ws.yc.clone();
    ws.descend(lambda, &mut beta, &mut resid);
    Ok(ws.to_raw(&beta, lambda))
}

/// Geometric default grid: 30 penalties from lambda_max down to 0.001 of it.
fn default_grid(lambda_max: f64) -> Vec<f64> {
    let lm = if lambda_max > 0.0 { lambda_max } else { 1.0 };
    (0..30)
        .map(|g| lm * 1e-3_f64.powf(g as f64 / 29.0))
        .collect()
}

/// How cross-validation picks the penalty from the score curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CvRule {
    /// The CV-MSE minimizer (ties keep the most regularized penalty).
    Minimizer,
    /// The most regularized penalty within one standard error of the
    /// minimizer (standard error taken across fold means).
    OneStandardError,
}

/// K-fold cross-validation over a penalty grid; returns the refit at the
/// selected penalty along with its CV score.
pub fn cv_lasso(
    x: ArrayView2<f64>,
    y: &[f64],
    grid: Option<&[f64]>,
    cv_folds: usize,
    seed: u64,
    rule: CvRule,
) -> Result<(LassoFit, f64)> {
    let m = x.nrows();
    let owned;
    let grid: &[f64] = match grid {
        Some(g) if !g.is_empty() => g,
        Some(_) => return Err(Error::InvalidConfig("empty penalty grid".into())),
        None => {
            owned = default_grid(lasso_max_lambda(x, y));
            &owned
        }
    };
    let mut lambdas = grid.to_vec();
    lambdas.sort_by(|a, b| b.total_cmp(a)); // descending for warm starts
    lambdas.dedup();

    let plan = estimator::make_fold_plan(m, cv_folds, rng::substream(seed, 0))?;
    // per-lambda, per-fold validation MSE
    let mut fold_mse = vec![vec![0.0_f64; cv_folds]; lambdas.len()];

    for fold in 0..cv_folds {
        let train_idx = plan.complement_indices(fold);
        let val_idx = plan.fold_indices(fold);
        let mut xt = ndarray::Array2::<f64>::zeros((train_idx.len(), x.ncols()));
        let mut yt = Vec::with_capacity(train_idx.len());
        for (row, &i) in train_idx.iter().enumerate() {
            xt.row_mut(row).assign(&x.row(i));
            yt.push(y[i]);
        }
        let ws = Standardized::build(xt.view(), &yt)?;
        let mut beta = vec![0.0; ws.p];
        let mut resid = ws.yc.clone();
        for (li, &lambda) in lambdas.iter().enumerate() {
            ws.descend(lambda, &mut beta, &mut resid);
            let fit = ws.to_raw(&beta, lambda);
            let mut sse = 0.0;
            for &i in &val_idx {
                let pred = fit.intercept
                    + fit
                        .slopes
                        .iter()
                        .zip(x.row(i))
                        .map(|(b, v)| b * v)
                        .sum::<f64>();
                let e = y[i] - pred;
                sse += e * e;
            }
            fold_mse[li][fold] = sse / val_idx.len() as f64;
        }
    }

    let means: Vec<f64> = fold_mse
        .iter()
        .map(|f| f.iter().sum::<f64>() / cv_folds as f64)
        .collect();
    let mut best = 0usize;
    for li in 1..lambdas.len() {
        if means[li] < means[best] {
            best = li;
        }
    }
    let selected = match rule {
        CvRule::Minimizer => best,
        CvRule::OneStandardError => {
            let mb = means[best];
            let var = fold_mse[best]
                .iter()
                .map(|v| (v - mb) * (v - mb))
                .sum::<f64>()
                / (cv_folds as f64 - 1.0);
            let se = (var / cv_folds as f64).sqrt();
            // lambdas descend, so the first index within the band is the
            // most regularized choice
            (0..=best)
                .find(|&li| means[li] <= mb + se)
                .unwrap_or(best)
        }
    };
    let fit = lasso_solve(x, y, lambdas[selected])?;
    Ok((fit, means[selected]))
}

/// Cross-validated lasso slope vector as a 1-direction projection; the
/// penalty is the plain CV-MSE minimizer.
pub fn lasso_direction(
    x: ArrayView2<f64>,
    y: &[f64],
    lambda_grid: Option<&[f64]>,
    cv_folds: usize,
    seed: u64,
) -> Result<Projection> {
    let (fit, cv_mse) = cv_lasso(x, y, lambda_grid, cv_folds, seed, CvRule::Minimizer)?;
    let p = x.ncols();
    let matrix = ndarray::Array2::from_shape_fn((p, 1), |(j, _)| fit.slopes[j]);
    Projection::new(matrix, "lasso", vec![fit.lambda, cv_mse])
}
