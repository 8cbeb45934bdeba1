//! Domain types: quantile level, dataset, fold plans and fit results.

use ndarray::Array2;

use crate::error::{Error, Result};

/// A quantile level strictly inside (0,1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantileLevel(f64);

impl QuantileLevel {
    /// Construct a level, rejecting boundary and out-of-range values.
    pub fn new(tau: f64) -> Result<Self> {
        if tau.is_finite() && tau > 0.0 && tau < 1.0 {
            Ok(QuantileLevel(tau))
        } else {
            Err(Error::InvalidLevel(tau))
        }
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }
}

/// Labeled pairs plus unlabeled covariate rows.
///
/// The labeled block has `n` rows and `p` columns, the unlabeled block `N`
/// rows over the same `p` columns. `N = 0` degrades everything downstream to
/// supervised-only behavior.
#[derive(Debug, Clone)]
pub struct Dataset {
    labeled_y: Vec<f64>,
    labeled_x: Array2<f64>,
    unlabeled_x: Array2<f64>,
}

impl Dataset {
    pub fn new(
        labeled_y: Vec<f64>,
        labeled_x: Array2<f64>,
        unlabeled_x: Array2<f64>,
    ) -> Result<Self> {
        let n = labeled_y.len();
        if n < 2 {
            return Err(Error::ShapeMismatch(format!(
                "need at least 2 labeled rows, got {n}"
            )));
        }
        if labeled_x.nrows() != n {
            return Err(Error::ShapeMismatch(format!(
                "labeled_x has {} rows but labeled_y has {n} entries",
                labeled_x.nrows()
            )));
        }
        let p = labeled_x.ncols();
        if p < 1 {
            return Err(Error::ShapeMismatch("need at least one covariate".into()));
        }
        if unlabeled_x.ncols() != p {
            return Err(Error::ShapeMismatch(format!(
                "unlabeled_x has {} columns but labeled_x has {p}",
                unlabeled_x.ncols()
            )));
        }
        if labeled_y.iter().any(|v| !v.is_finite())
            || labeled_x.iter().any(|v| !v.is_finite())
            || unlabeled_x.iter().any(|v| !v.is_finite())
        {
            return Err(Error::ShapeMismatch("non-finite value in dataset".into()));
        }
        Ok(Dataset {
            labeled_y,
            labeled_x,
            unlabeled_x,
        })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.labeled_y.len()
    }

    /// Number of unlabeled rows.
    #[inline]
    pub fn n_unlabeled(&self) -> usize {
        self.unlabeled_x.nrows()
    }

    #[inline]
    pub fn p(&self) -> usize {
        self.labeled_x.ncols()
    }

    /// Labeled fraction n/(n+N), in (0,1].
    #[inline]
    pub fn nu(&self) -> f64 {
        let n = self.n() as f64;
        n / (n + self.n_unlabeled() as f64)
    }

    #[inline]
    pub fn labeled_y(&self) -> &[f64] {
        &self.labeled_y
    }

    #[inline]
    pub fn labeled_x(&self) -> &Array2<f64> {
        &self.labeled_x
    }

    #[inline]
    pub fn unlabeled_x(&self) -> &Array2<f64> {
        &self.unlabeled_x
    }
}

/// Partition of the labeled indices into K disjoint folds for cross-fitting.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldPlan {
    assignments: Vec<usize>, // fold id in 0..k for each labeled index
    k: usize,
}

impl FoldPlan {
    /// Build from explicit assignments; every fold in `0..k` must be nonempty
    /// and fold sizes may differ by at most one.
    pub fn from_assignments(assignments: Vec<usize>, k: usize) -> Result<Self> {
        let n = assignments.len();
        if k < 2 || k > n {
            return Err(Error::InvalidFoldCount { k, n });
        }
        let mut sizes = vec![0usize; k];
        for &a in &assignments {
            if a >= k {
                return Err(Error::ShapeMismatch(format!(
                    "fold label {a} out of range 0..{k}"
                )));
            }
            sizes[a] += 1;
        }
        let lo = *sizes.iter().min().unwrap();
        let hi = *sizes.iter().max().unwrap();
        if lo == 0 || hi - lo > 1 {
            return Err(Error::ShapeMismatch(format!(
                "fold sizes must differ by at most 1, got {sizes:?}"
            )));
        }
        Ok(FoldPlan { assignments, k })
    }

    #[inline]
    pub fn k(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.assignments.len()
    }

    #[inline]
    pub fn assignments(&self) -> &[usize] {
        &self.assignments
    }

    /// Indices belonging to fold `fold`.
    pub fn fold_indices(&self, fold: usize) -> Vec<usize> {
        self.assignments
            .iter()
            .enumerate()
            .filter(|(_, &a)| a == fold)
            .map(|(i, _)| i)
            .collect()
    }

    /// Indices outside fold `fold` (the training set for that fold's model).
    pub fn complement_indices(&self, fold: usize) -> Vec<usize> {
        self.assignments
            .iter()
            .enumerate()
            .filter(|(_, &a)| a != fold)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Cross-fitted imputations at a single theta.
///
/// `at_labeled[i]` comes from the model trained on the complement of i's
/// fold; `at_unlabeled[j]` is the average of all K fold models at row j.
#[derive(Debug, Clone, PartialEq)]
pub struct ImputedValues {
    pub at_labeled: Vec<f64>,
    pub at_unlabeled: Vec<f64>,
    pub theta_used: f64,
}

impl ImputedValues {
    /// Clip all imputations into `[-tau - slack, 1 - tau + slack]`.
    ///
    /// Off by default: the one-step update is robust to arbitrary
    /// imputations. Useful when the strategy targets a conditional
    /// probability shifted by tau and should respect that range.
    pub fn clipped(mut self, tau: QuantileLevel, slack: f64) -> Self {
        let lo = -tau.value() - slack;
        let hi = 1.0 - tau.value() + slack;
        for v in self.at_labeled.iter_mut().chain(self.at_unlabeled.iter_mut()) {
            *v = v.clamp(lo, hi);
        }
        self
    }
}

/// A univariate density value together with the bandwidth that produced it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityEstimate {
    pub value: f64,
    pub bandwidth: f64,
}

/// Full output of one estimation run.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileFit {
    /// Sample quantile of the labeled responses.
    pub theta_sup: f64,
    /// Initial value fed to the one-step update (equal to `theta_sup`).
    pub theta_init: f64,
    /// Semi-supervised one-step estimate.
    pub theta_ss: f64,
    /// Density estimate at `theta_init`.
    pub f_hat: DensityEstimate,
    /// Variance of the debiased estimating function, evaluated at `theta_init`.
    pub sigma2_ss: f64,
    /// Standard error of `theta_ss`: sqrt(sigma2_ss) / (sqrt(n) * f_hat).
    pub se_ss: f64,
    /// Standard error of `theta_sup`: sqrt(tau(1-tau)) / (sqrt(n) * f_hat).
    pub se_sup: f64,
    pub ci_ss: (f64, f64),
    pub ci_sup: (f64, f64),
    /// Nominal confidence level of the intervals.
    pub level: f64,
    /// Labeled fraction n/(n+N).
    pub nu: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr2;

    #[test]
    fn quantile_level_rejects_boundaries() {
        assert!(QuantileLevel::new(0.5).is_ok());
        assert!(QuantileLevel::new(0.0).is_err());
        assert!(QuantileLevel::new(1.0).is_err());
        assert!(QuantileLevel::new(-0.2).is_err());
        assert!(QuantileLevel::new(f64::NAN).is_err());
    }

    #[test]
    fn dataset_checks_shapes() {
        let y = vec![1.0, 2.0, 3.0];
        let x = arr2(&[[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]);
        let u = Array2::<f64>::zeros((0, 2));
        let d = Dataset::new(y.clone(), x.clone(), u).unwrap();
        assert_eq!(d.n(), 3);
        assert_eq!(d.n_unlabeled(), 0);
        assert_eq!(d.p(), 2);
        assert_eq!(d.nu(), 1.0);

        let bad_u = Array2::<f64>::zeros((4, 3));
        assert!(Dataset::new(y.clone(), x.clone(), bad_u).is_err());
        assert!(Dataset::new(vec![1.0], arr2(&[[1.0]]), Array2::zeros((0, 1))).is_err());
    }

    #[test]
    fn nu_reflects_unlabeled_size() {
        let y = vec![0.0, 1.0];
        let x = arr2(&[[0.0], [1.0]]);
        let u = Array2::from_elem((6, 1), 0.5);
        let d = Dataset::new(y, x, u).unwrap();
        assert!((d.nu() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn fold_plan_validates() {
        assert!(FoldPlan::from_assignments(vec![0, 1, 0, 1], 2).is_ok());
        // unbalanced by 2
        assert!(FoldPlan::from_assignments(vec![0, 0, 0, 1], 2).is_err());
        // label out of range
        assert!(FoldPlan::from_assignments(vec![0, 2], 2).is_err());
        // K too large / too small
        assert!(FoldPlan::from_assignments(vec![0], 1).is_err());
    }

    #[test]
    fn clipping_respects_range() {
        let tau = QuantileLevel::new(0.25).unwrap();
        let iv = ImputedValues {
            at_labeled: vec![-5.0, 0.1, 5.0],
            at_unlabeled: vec![2.0],
            theta_used: 0.0,
        }
        .clipped(tau, 0.0);
        assert_eq!(iv.at_labeled, vec![-0.25, 0.1, 0.75]);
        assert_eq!(iv.at_unlabeled, vec![0.75]);
    }
}
