//! Nadaraya-Watson kernel smoothing of the estimating function on projected
//! covariates, with likelihood cross-validated bandwidths.

use ndarray::{Array2, ArrayView1, ArrayView2};

use crate::data::QuantileLevel;
use crate::dimred::{self, DimRedSpec};
use crate::error::{Error, Result};
use crate::estimator;
use crate::nuisance::{ImputationModel, ImputationStrategy};
use crate::rng;

/// Guard added to the kernel mass in the smoother denominator.
pub const NW_RIDGE: f64 = 1e-12;

/// Kernel mass below this counts as an empty neighborhood.
const UNDERFLOW: f64 = 1e-300;

/// Leave-one-out likelihood probabilities are clipped into [KAPPA, 1-KAPPA].
const CLIP_KAPPA: f64 = 1e-6;

/// Squared scaled distance beyond which a kernel weight is skipped. Weights
/// out there are below 2e-35, twenty orders under the ridge, so dropping
/// them does not move any reported digit.
const USQ_CUTOFF: f64 = 160.0;

/// Product of standard normal densities over the coordinates of `s`.
pub fn gaussian_product_kernel(s: &[f64]) -> f64 {
    s.iter().map(|&v| crate::normal::pdf(v)).product()
}

#[inline]
fn kernel_norm(r: usize) -> f64 {
    (2.0 * std::f64::consts::PI).powf(-(r as f64) / 2.0)
}

/// Fitted kernel smoother: training rows projected through `projection`,
/// sorted by their first projected coordinate.
pub struct KernelSmootherModel {
    projection: Array2<f64>, // p x r
    bandwidth: f64,
    train_proj: Vec<f64>, // m x r, row-major, rows sorted by first coordinate
    train_psi: Vec<f64>,
    train_y: Vec<f64>, // empty when built from raw psi values
    tau: f64,
    theta_fit: f64,
    ridge: f64,
    r: usize,
    mean_psi: f64,
}

impl KernelSmootherModel {
    /// Assemble a smoother from raw parts; `train_psi` may hold arbitrary
    /// values to smooth. Prediction then ignores theta.
    pub fn from_parts(
        projection: Array2<f64>,
        bandwidth: f64,
        train_proj: ArrayView2<f64>,
        train_psi: &[f64],
        ridge: f64,
    ) -> Result<Self> {
        if bandwidth <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "bandwidth must be positive, got {bandwidth}"
            )));
        }
        if train_proj.nrows() != train_psi.len() || train_proj.nrows() == 0 {
            return Err(Error::ShapeMismatch(
                "projected rows and psi values must align and be nonempty".into(),
            ));
        }
        let r = projection.ncols();
        if train_proj.ncols() != r {
            return Err(Error::ShapeMismatch(
                "projected rows must have one column per direction".into(),
            ));
        }
        let m = train_proj.nrows();
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| train_proj[[a, 0]].total_cmp(&train_proj[[b, 0]]));
        let mut proj = Vec::with_capacity(m * r);
        let mut psi = Vec::with_capacity(m);
        for &i in &order {
            proj.extend(train_proj.row(i).iter());
            psi.push(train_psi[i]);
        }
        let mean_psi = psi.iter().sum::<f64>() / m as f64;
        Ok(KernelSmootherModel {
            projection,
            bandwidth,
            train_proj: proj,
            train_psi: psi,
            train_y: Vec::new(),
            tau: 0.0,
            theta_fit: f64::NAN,
            ridge,
            r,
            mean_psi,
        })
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn projection(&self) -> &Array2<f64> {
        &self.projection
    }

    fn project_query(&self, x: ArrayView1<f64>) -> Vec<f64> {
        (0..self.r)
            .map(|j| x.dot(&self.projection.column(j)))
            .collect()
    }

    /// Window of training rows whose first coordinate can contribute.
    fn window(&self, q0: f64) -> (usize, usize) {
        let m = self.train_psi.len();
        let half = USQ_CUTOFF.sqrt() * self.bandwidth;
        let first = |i: usize| self.train_proj[i * self.r];
        let lo = partition_point(m, |i| first(i) < q0 - half);
        let hi = partition_point(m, |i| first(i) <= q0 + half);
        (lo, hi)
    }

    /// Accumulate (kernel mass, weighted sum of `values[i]`) over training
    /// rows for the projected query `q`, skipping negligible weights.
    fn sums_over(&self, q: &[f64], lo: usize, hi: usize, values: &[f64]) -> (f64, f64) {
        let norm = kernel_norm(self.r);
        let inv_h = 1.0 / self.bandwidth;
        let mut mass = 0.0;
        let mut weighted = 0.0;
        for i in lo..hi {
            let row = &self.train_proj[i * self.r..(i + 1) * self.r];
            let mut usq = 0.0;
            for j in 0..self.r {
                let u = (q[j] - row[j]) * inv_h;
                usq += u * u;
            }
            if usq > USQ_CUTOFF {
                continue;
            }
            let w = norm * (-0.5 * usq).exp();
            mass += w;
            weighted += w * values[i];
        }
        (mass, weighted)
    }

    fn smooth(&self, x: ArrayView1<f64>, values: &[f64], fallback: f64) -> Result<f64> {
        let q = self.project_query(x);
        let (lo, hi) = self.window(q[0]);
        let (mut mass, mut weighted) = self.sums_over(&q, lo, hi, values);
        if mass < UNDERFLOW {
            // The window missed everything; scan the full set once before
            // declaring the neighborhood empty.
            let m = self.train_psi.len();
            let (full_mass, full_weighted) = {
                let norm = kernel_norm(self.r);
                let inv_h = 1.0 / self.bandwidth;
                let mut fm = 0.0;
                let mut fw = 0.0;
                for i in 0..m {
                    let row = &self.train_proj[i * self.r..(i + 1) * self.r];
                    let mut usq = 0.0;
                    for j in 0..self.r {
                        let u = (q[j] - row[j]) * inv_h;
                        usq += u * u;
                    }
                    let w = norm * (-0.5 * usq).exp();
                    fm += w;
                    fw += w * values[i];
                }
                (fm, fw)
            };
            mass = full_mass;
            weighted = full_weighted;
        }
        if mass < UNDERFLOW {
            if self.ridge == 0.0 {
                return Err(Error::EmptyNeighborhood);
            }
            return Ok(fallback);
        }
        Ok(weighted / (mass + self.ridge))
    }
}

fn partition_point(len: usize, pred: impl Fn(usize) -> bool) -> usize {
    let (mut lo, mut hi) = (0, len);
    while lo < hi {
        let mid = (lo + hi) / 2;
        if pred(mid) {
            lo = mid + 1;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Kernel-weighted mean of the stored psi values at `x`:
/// `sum_i K{P'(x - X_i)/h} psi_i / (sum_i K{P'(x - X_i)/h} + ridge)`.
///
/// Errors only when the kernel mass underflows and the model was built with
/// `ridge = 0`; with a positive ridge the prediction falls back to the
/// training mean of psi in that situation.
pub fn nw_predict(model: &KernelSmootherModel, x: ArrayView1<f64>) -> Result<f64> {
    model.smooth(x, &model.train_psi, model.mean_psi)
}

impl ImputationModel for KernelSmootherModel {
    fn predict(&self, x: ArrayView1<f64>, theta: f64) -> f64 {
        if theta == self.theta_fit || self.train_y.is_empty() {
            return nw_predict(self, x).unwrap_or(self.mean_psi);
        }
        // Same weights, indicators recomputed at the requested theta:
        // phi(x, theta) = [sum w I(y < theta) - tau sum w] / (sum w + ridge).
        let q = self.project_query(x);
        let (lo, hi) = self.window(q[0]);
        let norm = kernel_norm(self.r);
        let inv_h = 1.0 / self.bandwidth;
        let mut mass = 0.0;
        let mut hits = 0.0;
        for i in lo..hi {
            let row = &self.train_proj[i * self.r..(i + 1) * self.r];
            let mut usq = 0.0;
            for j in 0..self.r {
                let u = (q[j] - row[j]) * inv_h;
                usq += u * u;
            }
            if usq > USQ_CUTOFF {
                continue;
            }
            let w = norm * (-0.5 * usq).exp();
            mass += w;
            if self.train_y[i] < theta {
                hits += w;
            }
        }
        if mass < UNDERFLOW {
            let below = self.train_y.iter().filter(|&&y| y < theta).count() as f64;
            return below / self.train_y.len() as f64 - self.tau;
        }
        (hits - self.tau * mass) / (mass + self.ridge)
    }
}

/// Pick the bandwidth maximizing the leave-one-out cross-validated
/// likelihood of the smoothed indicator `I(Y < theta)` over `grid`.
///
/// Probabilities are clipped into `[1e-6, 1 - 1e-6]` before taking logs.
/// Ties keep the smallest bandwidth; the grid is scanned in ascending order.
pub fn cv_bandwidth(
    train_y: &[f64],
    train_x: ArrayView2<f64>,
    theta: f64,
    projection: &Array2<f64>,
    grid: &[f64],
) -> Result<f64> {
    let m = train_y.len();
    if grid.is_empty() || grid.iter().any(|&h| !(h > 0.0)) {
        return Err(Error::BandwidthSelection);
    }
    if m < 2 || train_x.nrows() != m {
        return Err(Error::ShapeMismatch(
            "need at least two aligned training rows".into(),
        ));
    }
    let r = projection.ncols();
    let proj = project_rows(train_x, projection);
    let indicator: Vec<f64> = train_y
        .iter()
        .map(|&y| if y < theta { 1.0 } else { 0.0 })
        .collect();

    // Rows sorted by first projected coordinate so narrow bandwidths only
    // touch nearby pairs.
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| proj[a * r].total_cmp(&proj[b * r]));
    let sorted_proj: Vec<f64> = order
        .iter()
        .flat_map(|&i| proj[i * r..(i + 1) * r].iter().copied())
        .collect();
    let sorted_ind: Vec<f64> = order.iter().map(|&i| indicator[i]).collect();
    let total_hits: f64 = sorted_ind.iter().sum();

    let norm = kernel_norm(r);
    let k0 = norm; // self weight: kernel at zero
    let mut grid_sorted = grid.to_vec();
    grid_sorted.sort_by(|a, b| a.total_cmp(b));

    let mut best: Option<(f64, f64)> = None; // (loglik, h)
    let mut mass = vec![0.0_f64; m];
    let mut hits = vec![0.0_f64; m];

    for &h in &grid_sorted {
        mass.iter_mut().for_each(|v| *v = 0.0);
        hits.iter_mut().for_each(|v| *v = 0.0);
        let inv_h = 1.0 / h;
        let reach = USQ_CUTOFF.sqrt() * h;

        for i in 0..m {
            let si = &sorted_proj[i * r..(i + 1) * r];
            for j in (i + 1)..m {
                let sj = &sorted_proj[j * r..(j + 1) * r];
                if sj[0] - si[0] > reach {
                    break; // sorted: no later row can be closer in coord 0
                }
                let mut usq = 0.0;
                for d in 0..r {
                    let u = (si[d] - sj[d]) * inv_h;
                    usq += u * u;
                }
                if usq > USQ_CUTOFF {
                    continue;
                }
                let w = norm * (-0.5 * usq).exp();
                mass[i] += w;
                mass[j] += w;
                hits[i] += w * sorted_ind[j];
                hits[j] += w * sorted_ind[i];
            }
        }

        let mut loglik = 0.0;
        for i in 0..m {
            // mass/hits exclude row i itself (pairs only), so this is the
            // leave-one-out prediction already.
            let p_raw = if mass[i] < UNDERFLOW {
                (total_hits - sorted_ind[i]) / (m as f64 - 1.0)
            } else {
                hits[i] / (mass[i] + NW_RIDGE)
            };
            let p = p_raw.clamp(CLIP_KAPPA, 1.0 - CLIP_KAPPA);
            loglik += if sorted_ind[i] > 0.5 {
                p.ln()
            } else {
                (1.0 - p).ln()
            };
        }
        // k0 kept out of the sums entirely; noted here because the LOO
        // construction relies on it.
        let _ = k0;

        if loglik.is_finite() && best.map_or(true, |(b, _)| loglik > b) {
            best = Some((loglik, h));
        }
    }
    best.map(|(_, h)| h).ok_or(Error::BandwidthSelection)
}

fn project_rows(x: ArrayView2<f64>, projection: &Array2<f64>) -> Vec<f64> {
    let m = x.nrows();
    let r = projection.ncols();
    let mut out = vec![0.0; m * r];
    for i in 0..m {
        let row = x.row(i);
        for j in 0..r {
            out[i * r + j] = row.dot(&projection.column(j));
        }
    }
    out
}

/// Geometric grid of 20 bandwidths spanning [0.1, 3] times the reference.
pub fn default_bandwidth_grid(h_ref: f64) -> Vec<f64> {
    let lo = 0.1 * h_ref;
    let ratio: f64 = 30.0;
    (0..20)
        .map(|g| lo * ratio.powf(g as f64 / 19.0))
        .collect()
}

/// Rule-of-thumb reference bandwidth for an m x r matrix of projected
/// covariates: 1.06 * (mean coordinate spread) * m^(-1/(4+r)).
fn reference_bandwidth(proj: &[f64], m: usize, r: usize) -> Result<f64> {
    let mut spread_sum = 0.0;
    for j in 0..r {
        let col: Vec<f64> = (0..m).map(|i| proj[i * r + j]).collect();
        let sd = estimator::var_n(&col).sqrt();
        let q1 = estimator::sample_quantile(&col, QuantileLevel::new(0.25).unwrap())?;
        let q3 = estimator::sample_quantile(&col, QuantileLevel::new(0.75).unwrap())?;
        let iqr = q3 - q1;
        spread_sum += if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    }
    let spread = spread_sum / r as f64;
    if spread <= 0.0 {
        return Err(Error::DegenerateSample);
    }
    Ok(1.06 * spread * (m as f64).powf(-1.0 / (4.0 + r as f64)))
}

/// Fit the full kernel strategy: estimate the projection on the training
/// rows, cross-validate the bandwidth on the given (or default) grid, and
/// store psi(train_y, theta) for smoothing.
pub fn fit_kernel_strategy(
    train_y: &[f64],
    train_x: ArrayView2<f64>,
    theta: f64,
    dimred_spec: &DimRedSpec,
    grid: Option<&[f64]>,
    tau: QuantileLevel,
    ridge: f64,
    seed: u64,
) -> Result<KernelSmootherModel> {
    let m = train_y.len();
    if m < 2 || train_x.nrows() != m {
        return Err(Error::ShapeMismatch(
            "need at least two aligned training rows".into(),
        ));
    }
    let projection = dimred::fit(dimred_spec, train_x, train_y, rng::substream(seed, 0))?;
    let r = projection.matrix.ncols();
    let proj = project_rows(train_x, &projection.matrix);

    let owned_grid;
    let grid: &[f64] = match grid {
        Some(g) => g,
        None => {
            owned_grid = default_bandwidth_grid(reference_bandwidth(&proj, m, r)?);
            &owned_grid
        }
    };
    let h = cv_bandwidth(train_y, train_x, theta, &projection.matrix, grid)?;

    let psi: Vec<f64> = train_y
        .iter()
        .map(|&y| estimator::psi(y, theta, tau))
        .collect();
    let proj_view = ArrayView2::from_shape((m, r), &proj)
        .map_err(|e| Error::ShapeMismatch(e.to_string()))?;
    let mut model =
        KernelSmootherModel::from_parts(projection.matrix, h, proj_view, &psi, ridge)?;
    // Re-sort y alongside (from_parts sorted by first coordinate).
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| proj[a * r].total_cmp(&proj[b * r]));
    model.train_y = order.iter().map(|&i| train_y[i]).collect();
    model.tau = tau.value();
    model.theta_fit = theta;
    Ok(model)
}

/// Imputation strategy: kernel smoothing on dimension-reduced covariates.
pub struct KernelStrategy {
    pub dimred: DimRedSpec,
    pub tau: QuantileLevel,
    /// Explicit bandwidth grid; `None` selects the default geometric grid
    /// around the rule-of-thumb reference.
    pub grid: Option<Vec<f64>>,
    pub ridge: f64,
    name: String,
}

impl KernelStrategy {
    pub fn new(name: impl Into<String>, dimred: DimRedSpec, tau: QuantileLevel) -> Self {
        KernelStrategy {
            dimred,
            tau,
            grid: None,
            ridge: NW_RIDGE,
            name: name.into(),
        }
    }
}

impl ImputationStrategy for KernelStrategy {
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
        let model = fit_kernel_strategy(
            train_y,
            train_x,
            theta,
            &self.dimred,
            self.grid.as_deref(),
            self.tau,
            self.ridge,
            seed,
        )?;
        Ok(Box::new(model))
    }
}
