//! Covariate transformations for the kernel smoother: regression directions
//! (OLS, lasso) and sliced inverse regression (plain and sparse).

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};

mod lasso;
mod sir;

pub use lasso::{cv_lasso, lasso_direction, lasso_max_lambda, lasso_solve, CvRule, LassoFit};
pub use sir::{sir_directions, sparse_sir_directions};

/// Which transformation to fit, and its tuning knobs.
#[derive(Debug, Clone, PartialEq)]
pub struct DimRedSpec {
    pub method: DimRedMethod,
    /// Number of directions. Regression methods give r = 1; SIR variants
    /// default to r = 2.
    pub r: usize,
    /// Slice count for the SIR variants; `None` picks ceil(m/5) equal-width
    /// slices (plain) or ceil(m/75) equal-count slices (sparse) from the
    /// training size m.
    pub slices: Option<usize>,
    /// Penalty grid for the lasso-based methods; `None` uses a geometric
    /// grid of 30 values from the data-driven maximum down to 0.1% of it.
    pub lambda_grid: Option<Vec<f64>>,
    pub cv_folds: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DimRedMethod {
    /// No reduction: project onto the coordinate axes.
    Identity,
    Ols,
    Lasso,
    Sir,
    SparseSir,
}

impl DimRedSpec {
    pub fn identity() -> Self {
        DimRedSpec {
            method: DimRedMethod::Identity,
            r: 0, // resolved to p at fit time
            slices: None,
            lambda_grid: None,
            cv_folds: 10,
        }
    }

    pub fn ols() -> Self {
        DimRedSpec {
            method: DimRedMethod::Ols,
            r: 1,
            slices: None,
            lambda_grid: None,
            cv_folds: 10,
        }
    }

    pub fn lasso() -> Self {
        DimRedSpec {
            method: DimRedMethod::Lasso,
            r: 1,
            slices: None,
            lambda_grid: None,
            cv_folds: 10,
        }
    }

    pub fn sir() -> Self {
        DimRedSpec {
            method: DimRedMethod::Sir,
            r: 2,
            slices: None,
            lambda_grid: None,
            cv_folds: 10,
        }
    }

    pub fn sparse_sir() -> Self {
        DimRedSpec {
            method: DimRedMethod::SparseSir,
            r: 2,
            slices: None,
            lambda_grid: None,
            cv_folds: 10,
        }
    }

    pub fn method_token(&self) -> &'static str {
        match self.method {
            DimRedMethod::Identity => "identity",
            DimRedMethod::Ols => "ols",
            DimRedMethod::Lasso => "lasso",
            DimRedMethod::Sir => "sir",
            DimRedMethod::SparseSir => "sparse_sir",
        }
    }
}

/// A fitted p x r transformation.
///
/// Directions from the SIR variants have unit Euclidean norm with the
/// largest-magnitude entry positive; regression directions keep their
/// natural scale (the smoother's bandwidth selection absorbs scale).
/// An all-zero column is rejected at construction.
#[derive(Debug, Clone)]
pub struct Projection {
    pub matrix: Array2<f64>,
    pub method: &'static str,
    /// Per-direction eigenvalue (SIR) or CV score (lasso); empty otherwise.
    pub diagnostics: Vec<f64>,
}

impl Projection {
    pub fn new(
        matrix: Array2<f64>,
        method: &'static str,
        diagnostics: Vec<f64>,
    ) -> Result<Self> {
        for j in 0..matrix.ncols() {
            if matrix.column(j).iter().all(|&v| v == 0.0) {
                return Err(Error::ZeroDirection(method));
            }
        }
        Ok(Projection {
            matrix,
            method,
            diagnostics,
        })
    }
}

/// Fit the transformation described by `spec` on the given rows.
pub fn fit(spec: &DimRedSpec, x: ArrayView2<f64>, y: &[f64], seed: u64) -> Result<Projection> {
    let m = x.nrows();
    let p = x.ncols();
    if y.len() != m {
        return Err(Error::ShapeMismatch(format!(
            "{} responses for {} rows",
            y.len(),
            m
        )));
    }
    match spec.method {
        DimRedMethod::Identity => Projection::new(Array2::eye(p), "identity", Vec::new()),
        DimRedMethod::Ols => ols_direction(x, y),
        DimRedMethod::Lasso => lasso_direction(
            x,
            y,
            spec.lambda_grid.as_deref(),
            spec.cv_folds,
            seed,
        ),
        DimRedMethod::Sir => {
            let slices = spec.slices.unwrap_or_else(|| m.div_ceil(5));
            sir_directions(x, y, slices, spec.r)
        }
        DimRedMethod::SparseSir => {
            let slices = spec.slices.unwrap_or_else(|| m.div_ceil(75));
            sparse_sir_directions(
                x,
                y,
                slices,
                spec.r,
                spec.lambda_grid.as_deref(),
                spec.cv_folds,
                seed,
            )
        }
    }
}

/// Slope vector of the least-squares regression of y on x (intercept fitted,
/// excluded from the direction). Requires more rows than columns and a
/// full-rank design, checked through a column-pivoted QR decomposition.
pub fn ols_direction(x: ArrayView2<f64>, y: &[f64]) -> Result<Projection> {
    let m = x.nrows();
    let p = x.ncols();
    if m <= p {
        return Err(Error::SingularDesign);
    }
    // Normal equations of the intercept-augmented design, solved through a
    // column-pivoted QR whose R diagonal exposes rank deficiency.
    let dim = p + 1;
    let mut gram = nalgebra::DMatrix::<f64>::zeros(dim, dim);
    let mut rhs = nalgebra::DVector::<f64>::zeros(dim);
    for i in 0..m {
        let yi = y[i];
        rhs[0] += yi;
        gram[(0, 0)] += 1.0;
        for a in 0..p {
            let xa = x[[i, a]];
            rhs[a + 1] += xa * yi;
            gram[(0, a + 1)] += xa;
            for b in a..p {
                gram[(a + 1, b + 1)] += xa * x[[i, b]];
            }
        }
    }
    for a in 0..dim {
        for b in a..dim {
            gram[(b, a)] = gram[(a, b)];
        }
    }
    let qr = gram.col_piv_qr();
    let diag_max = (0..dim)
        .map(|j| qr.r()[(j, j)].abs())
        .fold(0.0_f64, f64::max);
    let rank_ok = (0..dim).all(|j| qr.r()[(j, j)].abs() > 1e-10 * diag_max.max(1e-300));
    if !rank_ok {
        return Err(Error::SingularDesign);
    }
    let coef = qr.solve(&rhs).ok_or(Error::SingularDesign)?;
    let slopes = Array2::from_shape_fn((p, 1), |(j, _)| coef[j + 1]);
    Projection::new(slopes, "ols", Vec::new())
}

/// Fix a direction's orientation: largest-magnitude entry positive.
pub(crate) fn fix_sign(column: &mut [f64]) {
    let mut lead = 0usize;
    for (j, v) in column.iter().enumerate() {
        if v.abs() > column[lead].abs() {
            lead = j;
        }
    }
    if column[lead] < 0.0 {
        for v in column.iter_mut() {
            *v = -*v;
        }
    }
}

/// Scale a direction to unit Euclidean norm.
pub(crate) fn normalize(column: &mut [f64]) -> Result<()> {
    let norm = column.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(Error::ZeroDirection("normalize"));
    }
    for v in column.iter_mut() {
        *v /= norm;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use approx::assert_abs_diff_eq;
    use ndarray::Array2;

    fn random_x(m: usize, p: usize, seed: u64) -> Array2<f64> {
        let mut gen = rng::rng_from(seed);
        Array2::from_shape_fn((m, p), |_| rng::standard_normal(&mut gen))
    }

    #[test]
    fn ols_recovers_exact_linear_fit() {
        let x = random_x(40, 3, 1);
        let y: Vec<f64> = (0..40).map(|i| 2.0 * x[[i, 0]]).collect();
        let proj = ols_direction(x.view(), &y).unwrap();
        assert_abs_diff_eq!(proj.matrix[[0, 0]], 2.0, epsilon = 1e-10);
        assert_abs_diff_eq!(proj.matrix[[1, 0]], 0.0, epsilon = 1e-10);
        assert_abs_diff_eq!(proj.matrix[[2, 0]], 0.0, epsilon = 1e-10);
    }

    #[test]
    fn ols_null_direction_is_small() {
        let x = random_x(10_000, 2, 2);
        let mut gen = rng::rng_from(3);
        let y: Vec<f64> = (0..10_000).map(|_| rng::standard_normal(&mut gen)).collect();
        let proj = ols_direction(x.view(), &y).unwrap();
        let norm = proj.matrix.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(norm < 0.05, "null direction norm {norm}");
    }

    #[test]
    fn ols_normal_equations_hold() {
        let x = random_x(50, 4, 4);
        let mut gen = rng::rng_from(5);
        let y: Vec<f64> = (0..50)
            .map(|i| 1.5 + x[[i, 1]] - 0.5 * x[[i, 3]] + 0.1 * rng::standard_normal(&mut gen))
            .collect();
        let proj = ols_direction(x.view(), &y).unwrap();
        // Recompute the intercept from the slopes, then check X'(y - yhat) = 0.
        let slopes: Vec<f64> = proj.matrix.column(0).iter().copied().collect();
        let xbar: Vec<f64> = (0..4).map(|j| x.column(j).sum() / 50.0).collect();
        let ybar = y.iter().sum::<f64>() / 50.0;
        let intercept = ybar - slopes.iter().zip(&xbar).map(|(b, m)| b * m).sum::<f64>();
        for j in 0..4 {
            let mut dot = 0.0;
            for i in 0..50 {
                let yhat = intercept
                    + (0..4).map(|k| slopes[k] * x[[i, k]]).sum::<f64>();
                dot += x[[i, j]] * (y[i] - yhat);
            }
            assert!(dot.abs() < 1e-8, "normal equation residual {dot} at {j}");
        }
    }

    #[test]
    fn ols_rejects_rank_deficiency() {
        let mut x = random_x(30, 3, 6);
        for i in 0..30 {
            x[[i, 2]] = x[[i, 0]] + x[[i, 1]]; // exact collinearity
        }
        let y: Vec<f64> = (0..30).map(|i| x[[i, 0]]).collect();
        assert!(matches!(
            ols_direction(x.view(), &y),
            Err(Error::SingularDesign)
        ));
        // and n <= p
        let x2 = random_x(3, 5, 7);
        assert!(ols_direction(x2.view(), &[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn projection_rejects_zero_columns() {
        let z = Array2::<f64>::zeros((3, 1));
        assert!(matches!(
            Projection::new(z, "test", vec![]),
            Err(Error::ZeroDirection(_))
        ));
    }

    #[test]
    fn sign_and_normalize_helpers() {
        let mut v = vec![0.3, -0.8, 0.1];
        fix_sign(&mut v);
        assert_eq!(v, vec![-0.3, 0.8, -0.1]);
        normalize(&mut v).unwrap();
        let norm: f64 = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        assert_abs_diff_eq!(norm, 1.0, epsilon = 1e-12);
    }
}
