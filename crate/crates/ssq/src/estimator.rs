//! Core estimation operations: check function, sample quantile, density
//! estimate, cross-fitting, the one-step update and plug-in inference.

use rand::seq::SliceRandom;

use crate::data::{Dataset, DensityEstimate, FoldPlan, ImputedValues, QuantileFit, QuantileLevel};
use crate::error::{Error, Result};
use crate::normal;
use crate::nuisance::ImputationStrategy;
use crate::rng;

/// Minimum admissible density estimate before the one-step division.
pub const DENSITY_FLOOR: f64 = 1e-6;

/// Indicator estimating function `I(y < theta) - tau`; strict inequality, so
/// `y == theta` contributes `-tau`.
#[inline]
pub fn psi(y: f64, theta: f64, tau: QuantileLevel) -> f64 {
    if y < theta {
        1.0 - tau.value()
    } else {
        -tau.value()
    }
}

/// Left-continuous inverse of the empirical CDF: the ceil(n*tau)-th order
/// statistic. Any point in the crossing interval of the empirical estimating
/// equation is asymptotically valid; this convention is the deterministic
/// canonical pick.
pub fn sample_quantile(ys: &[f64], tau: QuantileLevel) -> Result<f64> {
    if ys.is_empty() {
        return Err(Error::EmptySample);
    }
    let n = ys.len();
    let rank = (n as f64 * tau.value()).ceil() as usize;
    let idx = rank.max(1).min(n) - 1;
    let mut sorted = ys.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    Ok(sorted[idx])
}

/// Empirical variance with the /n divisor: `E_n[g^2] - (E_n g)^2`.
pub(crate) fn var_n(g: &[f64]) -> f64 {
    let n = g.len() as f64;
    let mean = g.iter().sum::<f64>() / n;
    g.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
}

/// Gaussian-kernel density estimate of the sample `ys` at `point`.
///
/// With no bandwidth given, uses h = 1.06 * min(sd, IQR/1.34) * n^(-1/5);
/// the quartiles follow the same order-statistic convention as
/// [`sample_quantile`]. If the IQR is zero the spread falls back to the
/// standard deviation alone; a sample with no spread at all is an error.
pub fn kde_density_at(ys: &[f64], point: f64, bandwidth: Option<f64>) -> Result<DensityEstimate> {
    let n = ys.len();
    if n < 2 {
        return Err(Error::EmptySample);
    }
    let h = match bandwidth {
        Some(h) if h > 0.0 => h,
        Some(h) => {
            return Err(Error::InvalidConfig(format!(
                "bandwidth must be positive, got {h}"
            )))
        }
        None => rule_of_thumb_bandwidth(ys)?,
    };
    let sum: f64 = ys.iter().map(|&y| normal::pdf((point - y) / h)).sum();
    Ok(DensityEstimate {
        value: sum / (n as f64 * h),
        bandwidth: h,
    })
}

/// h = 1.06 * min(sd, IQR/1.34) * n^(-1/5), the second-order-kernel rule of
/// thumb at the optimal rate.
pub fn rule_of_thumb_bandwidth(ys: &[f64]) -> Result<f64> {
    let n = ys.len();
    if n < 2 {
        return Err(Error::EmptySample);
    }
    let sd = var_n(ys).sqrt();
    let q1 = sample_quantile(ys, QuantileLevel::new(0.25).unwrap())?;
    let q3 = sample_quantile(ys, QuantileLevel::new(0.75).unwrap())?;
    let iqr = q3 - q1;
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    if spread <= 0.0 {
        return Err(Error::DegenerateSample);
    }
    Ok(1.06 * spread * (n as f64).powf(-0.2))
}

/// Uniformly random partition of `0..n` into K folds whose sizes differ by
/// at most one. Deterministic given the seed.
pub fn make_fold_plan(n: usize, k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 || k > n {
        return Err(Error::InvalidFoldCount { k, n });
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut gen = rng::rng_from(seed);
    order.shuffle(&mut gen);
    let mut assignments = vec![0usize; n];
    // Deal the shuffled indices out round-robin so sizes differ by <= 1.
    for (pos, &idx) in order.iter().enumerate() {
        assignments[idx] = pos % k;
    }
    FoldPlan::from_assignments(assignments, k)
}

/// Cross-fitted imputation of the estimating function at `theta`.
///
/// For each fold k the strategy is fit on the fold's complement; labeled
/// rows of fold k are imputed by that model, and every unlabeled row
/// receives the average of all K fold models. Fold k's fit draws its
/// randomness from substream k of `seed`.
pub fn cross_fit(
    data: &Dataset,
    strategy: &dyn ImputationStrategy,
    plan: &FoldPlan,
    theta: f64,
    seed: u64,
) -> Result<ImputedValues> {
    if plan.n() != data.n() {
        return Err(Error::ShapeMismatch(format!(
            "fold plan covers {} indices but dataset has {} labeled rows",
            plan.n(),
            data.n()
        )));
    }
    let n = data.n();
    let n_unlabeled = data.n_unlabeled();
    let k = plan.k();
    let mut at_labeled = vec![0.0; n];
    let mut at_unlabeled = vec![0.0; n_unlabeled];

    for fold in 0..k {
        let train_idx = plan.complement_indices(fold);
        let train_y: Vec<f64> = train_idx.iter().map(|&i| data.labeled_y()[i]).collect();
        let mut train_x = ndarray::Array2::<f64>::zeros((train_idx.len(), data.p()));
        for (row, &i) in train_idx.iter().enumerate() {
            train_x.row_mut(row).assign(&data.labeled_x().row(i));
        }
        let model = strategy
            .fit(&train_y, train_x.view(), theta, rng::substream(seed, fold as u64))
            .map_err(|e| e.in_fold(fold))?;

        for i in plan.fold_indices(fold) {
            at_labeled[i] = model.predict(data.labeled_x().row(i), theta);
        }
        for (j, acc) in at_unlabeled.iter_mut().enumerate() {
            *acc += model.predict(data.unlabeled_x().row(j), theta);
        }
    }
    let k_inv = 1.0 / k as f64;
    for v in at_unlabeled.iter_mut() {
        *v *= k_inv;
    }
    Ok(ImputedValues {
        at_labeled,
        at_unlabeled,
        theta_used: theta,
    })
}

/// One Newton step on the debiased estimating equation:
///
/// theta_init + f_hat^{-1} * [ E_n{phi - psi} - E_{n+N}{phi} ]
///
/// where E_{n+N} pools the cross-fitted labeled imputations with the
/// fold-averaged unlabeled ones, weighted by counts. With no unlabeled rows
/// the bracket reduces to -E_n{psi}: one Newton step on the supervised
/// equation.
pub fn one_step(
    theta_init: f64,
    f_hat: &DensityEstimate,
    imputed: &ImputedValues,
    psi_labeled: &[f64],
) -> Result<f64> {
    if f_hat.value < DENSITY_FLOOR {
        return Err(Error::DensityFloor {
            value: f_hat.value,
            floor: DENSITY_FLOOR,
        });
    }
    if imputed.theta_used != theta_init {
        return Err(Error::ImputationMismatch(format!(
            "imputations computed at {} but update requested at {theta_init}",
            imputed.theta_used
        )));
    }
    let n = psi_labeled.len();
    if imputed.at_labeled.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "{} imputations for {} psi values",
            imputed.at_labeled.len(),
            n
        )));
    }
    let n_f = n as f64;
    let total = n_f + imputed.at_unlabeled.len() as f64;

    let mean_phi_minus_psi = imputed
        .at_labeled
        .iter()
        .zip(psi_labeled)
        .map(|(phi, ps)| phi - ps)
        .sum::<f64>()
        / n_f;
    let pooled_phi = (imputed.at_labeled.iter().sum::<f64>()
        + imputed.at_unlabeled.iter().sum::<f64>())
        / total;

    Ok(theta_init + (mean_phi_minus_psi - pooled_phi) / f_hat.value)
}

/// Variance of the debiased estimating function:
/// `(1-nu) var_n{psi - phi} + nu var_n{psi}` with the /n divisor.
pub fn ss_variance(imputed: &ImputedValues, psi_labeled: &[f64], nu: f64) -> Result<f64> {
    let n = psi_labeled.len();
    if n < 2 {
        return Err(Error::VarianceUndefined);
    }
    if imputed.at_labeled.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "{} imputations for {} psi values",
            imputed.at_labeled.len(),
            n
        )));
    }
    let diffs: Vec<f64> = psi_labeled
        .iter()
        .zip(&imputed.at_labeled)
        .map(|(ps, phi)| ps - phi)
        .collect();
    Ok((1.0 - nu) * var_n(&diffs) + nu * var_n(psi_labeled))
}

/// Plug-in asymptotic variance of the supervised quantile:
/// `tau(1-tau) / (n * f_hat^2)`.
pub fn supervised_variance(
    tau: QuantileLevel,
    f_hat: &DensityEstimate,
    n: usize,
) -> Result<f64> {
    if f_hat.value < DENSITY_FLOOR {
        return Err(Error::DensityFloor {
            value: f_hat.value,
            floor: DENSITY_FLOOR,
        });
    }
    let t = tau.value();
    Ok(t * (1.0 - t) / (n as f64 * f_hat.value * f_hat.value))
}

/// Normal-approximation interval `theta ± z * se` at the given level.
pub fn confidence_interval(theta: f64, se: f64, level: f64) -> Result<(f64, f64)> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidConfidence(level));
    }
    let z = normal::inv_cdf(1.0 - (1.0 - level) / 2.0);
    Ok((theta - z * se, theta + z * se))
}

/// Full pipeline: initial sample quantile, density estimate at it,
/// cross-fitted imputation, one-step update and plug-in inference.
/// Deterministic given the seed.
pub fn estimate(
    data: &Dataset,
    tau: QuantileLevel,
    strategy: &dyn ImputationStrategy,
    k: usize,
    level: f64,
    seed: u64,
) -> Result<QuantileFit> {
    let theta_sup = sample_quantile(data.labeled_y(), tau)?;
    let theta_init = theta_sup;
    let f_hat = kde_density_at(data.labeled_y(), theta_init, None)?;

    let plan = make_fold_plan(data.n(), k, rng::substream(seed, 0))?;
    let imputed = cross_fit(data, strategy, &plan, theta_init, rng::substream(seed, 1))?;

    let psi_labeled: Vec<f64> = data
        .labeled_y()
        .iter()
        .map(|&y| psi(y, theta_init, tau))
        .collect();

    let theta_ss = one_step(theta_init, &f_hat, &imputed, &psi_labeled)?;
    let nu = data.nu();
    let sigma2_ss = ss_variance(&imputed, &psi_labeled, nu)?;

    let root_n = (data.n() as f64).sqrt();
    let se_ss = sigma2_ss.sqrt() / (root_n * f_hat.value);
    let se_sup = supervised_variance(tau, &f_hat, data.n())?.sqrt();
    let ci_ss = confidence_interval(theta_ss, se_ss, level)?;
    let ci_sup = confidence_interval(theta_sup, se_sup, level)?;

    Ok(QuantileFit {
        theta_sup,
        theta_init,
        theta_ss,
        f_hat,
        sigma2_ss,
        se_ss,
        se_sup,
        ci_ss,
        ci_sup,
        level,
        nu,
    })
}
