//! Synthetic data generating processes: X ~ N(0, I_p) and
//! Y | X ~ Normal(m(X), 1) for five conditional mean shapes.

use ndarray::Array2;

use crate::data::{Dataset, QuantileLevel};
use crate::error::{Error, Result};
use crate::rng;

/// Conditional mean family, keyed by the tokens a-e.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DgpModel {
    /// m(x) = 0
    Null,
    /// m(x) = 1_q' x_q
    Linear,
    /// m(x) = 1_q' x_q + (1_q' x_q)^2 / q
    SingleIndex,
    /// m(x) = (1_q' x_q) {1 + 2 (0', 1_ceil(q/2)') x_q / q}
    DoubleIndex,
    /// m(x) = 1_q' x_q + ||x_q||^2 / 3
    Quadratic,
}

impl DgpModel {
    pub fn from_token(token: &str) -> Result<Self> {
        match token {
            "a" => Ok(DgpModel::Null),
            "b" => Ok(DgpModel::Linear),
            "c" => Ok(DgpModel::SingleIndex),
            "d" => Ok(DgpModel::DoubleIndex),
            "e" => Ok(DgpModel::Quadratic),
            other => Err(Error::InvalidConfig(format!(
                "unknown model token '{other}' (expected one of a, b, c, d, e)"
            ))),
        }
    }

    pub fn token(self) -> &'static str {
        match self {
            DgpModel::Null => "a",
            DgpModel::Linear => "b",
            DgpModel::SingleIndex => "c",
            DgpModel::DoubleIndex => "d",
            DgpModel::Quadratic => "e",
        }
    }
}

/// One simulation configuration.
#[derive(Debug, Clone)]
pub struct DgpSpec {
    pub model: DgpModel,
    pub p: usize,
    /// Effective sparsity: only the first q coordinates enter the mean.
    pub q: usize,
    pub n: usize,
    pub n_unlabeled: usize,
    pub tau: QuantileLevel,
}

impl DgpSpec {
    pub fn new(
        model: DgpModel,
        p: usize,
        q: usize,
        n: usize,
        n_unlabeled: usize,
        tau: QuantileLevel,
    ) -> Result<Self> {
        if p < 1 || q < 1 || q > p {
            return Err(Error::InvalidConfig(format!(
                "need 1 <= q <= p, got q={q}, p={p}"
            )));
        }
        if n < 2 {
            return Err(Error::InvalidConfig(format!("need n >= 2, got {n}")));
        }
        Ok(DgpSpec {
            model,
            p,
            q,
            n,
            n_unlabeled,
            tau,
        })
    }

    /// Labeled fraction n/(n+N).
    pub fn nu(&self) -> f64 {
        self.n as f64 / (self.n + self.n_unlabeled) as f64
    }
}

/// Conditional mean m(x) using the first `q` coordinates of `x`.
pub fn mean_function(model: DgpModel, x: &[f64], q: usize) -> f64 {
    debug_assert!(q <= x.len());
    let xq = &x[..q];
    let s: f64 = xq.iter().sum();
    match model {
        DgpModel::Null => 0.0,
        DgpModel::Linear => s,
        DgpModel::SingleIndex => s + s * s / q as f64,
        DgpModel::DoubleIndex => {
            // second index: sum of the last ceil(q/2) entries of x_q
            let half = q.div_ceil(2);
            let t: f64 = xq[q - half..].iter().sum();
            s * (1.0 + 2.0 * t / q as f64)
        }
        DgpModel::Quadratic => s + xq.iter().map(|v| v * v).sum::<f64>() / 3.0,
    }
}

/// Generate a dataset: n labeled rows then N unlabeled rows, single stream.
pub fn gen_dataset(spec: &DgpSpec, seed: u64) -> Dataset {
    let mut gen = rng::rng_from(seed);
    let mut labeled_x = Array2::<f64>::zeros((spec.n, spec.p));
    let mut labeled_y = Vec::with_capacity(spec.n);
    let mut row = vec![0.0; spec.p];
    for i in 0..spec.n {
        for v in row.iter_mut() {
            *v = rng::standard_normal(&mut gen);
        }
        labeled_x.row_mut(i).assign(&ndarray::ArrayView1::from(&row));
        let m = mean_function(spec.model, &row, spec.q);
        labeled_y.push(m + rng::standard_normal(&mut gen));
    }
    let mut unlabeled_x = Array2::<f64>::zeros((spec.n_unlabeled, spec.p));
    for i in 0..spec.n_unlabeled {
        for v in row.iter_mut() {
            *v = rng::standard_normal(&mut gen);
        }
        unlabeled_x
            .row_mut(i)
            .assign(&ndarray::ArrayView1::from(&row));
    }
    Dataset::new(labeled_y, labeled_x, unlabeled_x)
        .expect("generated dataset satisfies the shape invariants")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn tau() -> QuantileLevel {
        QuantileLevel::new(0.5).unwrap()
    }

    #[test]
    fn tokens_round_trip() {
        for t in ["a", "b", "c", "d", "e"] {
            assert_eq!(DgpModel::from_token(t).unwrap().token(), t);
        }
        assert!(DgpModel::from_token("f").is_err());
    }

    #[test]
    fn mean_function_values() {
        let x = vec![1.0; 6];
        assert_eq!(mean_function(DgpModel::Null, &x, 4), 0.0);
        assert_eq!(mean_function(DgpModel::Linear, &x, 4), 4.0);
        // c: s + s^2/q = 4 + 16/4
        assert_eq!(mean_function(DgpModel::SingleIndex, &x, 4), 8.0);
        // d: s (1 + 2t/q) with t = sum of last 2 entries = 2
        assert_eq!(mean_function(DgpModel::DoubleIndex, &x, 4), 8.0);
        // e at zero vector
        let z = vec![0.0; 5];
        assert_eq!(mean_function(DgpModel::Quadratic, &z, 5), 0.0);
        // e: s + ||x||^2/3
        assert_abs_diff_eq!(
            mean_function(DgpModel::Quadratic, &x, 3),
            3.0 + 1.0,
            epsilon = 1e-15
        );
        // d with odd q: ceil(5/2) = 3 trailing entries
        let xv = vec![1.0, 2.0, 3.0, 4.0, 5.0];
        let s = 15.0;
        let t = 12.0;
        assert_abs_diff_eq!(
            mean_function(DgpModel::DoubleIndex, &xv, 5),
            s * (1.0 + 2.0 * t / 5.0),
            epsilon = 1e-12
        );
    }

    #[test]
    fn null_model_y_is_standard_normal() {
        let spec = DgpSpec::new(DgpModel::Null, 10, 10, 1000, 0, tau()).unwrap();
        let data = gen_dataset(&spec, 1);
        let mean = data.labeled_y().iter().sum::<f64>() / 1000.0;
        assert!(mean.abs() < 0.1, "mean {mean}");
    }

    #[test]
    fn covariate_columns_are_centered() {
        let spec = DgpSpec::new(DgpModel::Linear, 5, 5, 400, 600, tau()).unwrap();
        let data = gen_dataset(&spec, 2);
        let total = 1000.0_f64;
        for j in 0..5 {
            let sum = data.labeled_x().column(j).sum() + data.unlabeled_x().column(j).sum();
            let mean = sum / total;
            assert!(mean.abs() < 4.0 / total.sqrt(), "column {j} mean {mean}");
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = DgpSpec::new(DgpModel::Quadratic, 4, 2, 50, 30, tau()).unwrap();
        let a = gen_dataset(&spec, 7);
        let b = gen_dataset(&spec, 7);
        assert_eq!(a.labeled_y(), b.labeled_y());
        assert_eq!(a.labeled_x(), b.labeled_x());
        assert_eq!(a.unlabeled_x(), b.unlabeled_x());
    }

    #[test]
    fn spec_validation() {
        assert!(DgpSpec::new(DgpModel::Linear, 4, 5, 100, 0, tau()).is_err());
        assert!(DgpSpec::new(DgpModel::Linear, 4, 4, 1, 0, tau()).is_err());
    }
}
