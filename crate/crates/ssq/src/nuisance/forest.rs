//! Bagged CART regression forest on the estimating function psi(Y, theta).
//!
//! Each tree trains on a bootstrap resample; every split considers `mtry`
//! uniformly sampled coordinates and minimizes within-node squared error.
//! Trees get independent seed substreams, so training order (or thread
//! schedule) never changes the model.

use ndarray::{ArrayView1, ArrayView2};
use rand::Rng;
use rayon::prelude::*;

use crate::data::QuantileLevel;
use crate::error::{Error, Result};
use crate::estimator;
use crate::nuisance::{ImputationModel, ImputationStrategy};
use crate::rng;

const LEAF: u32 = u32::MAX;

#[derive(Debug, Clone)]
struct Node {
    feature: u32, // LEAF marks a leaf
    threshold: f64,
    left: u32,
    right: u32,
    value: f64,
}

#[derive(Debug, Clone)]
struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn predict(&self, x: ArrayView1<f64>) -> f64 {
        let mut at = 0usize;
        loop {
            let node = &self.nodes[at];
            if node.feature == LEAF {
                return node.value;
            }
            at = if x[node.feature as usize] <= node.threshold {
                node.left as usize
            } else {
                node.right as usize
            };
        }
    }
}

/// A fitted bagged regression forest.
pub struct ForestModel {
    trees: Vec<Tree>,
    /// Per tree: how often each training row appeared in its bootstrap.
    in_bag: Vec<Vec<u16>>,
    pub n_trees: usize,
    pub mtry: usize,
    pub min_leaf: usize,
}

impl ForestModel {
    /// Mean squared error of out-of-bag predictions against `resp`; `None`
    /// when some row is never out of bag.
    pub fn oob_mse(&self, train_x: ArrayView2<f64>, resp: &[f64]) -> Option<f64> {
        let m = resp.len();
        let mut total = 0.0;
        let mut used = 0usize;
        for i in 0..m {
            let mut sum = 0.0;
            let mut count = 0usize;
            for (t, tree) in self.trees.iter().enumerate() {
                if self.in_bag[t][i] == 0 {
                    sum += tree.predict(train_x.row(i));
                    count += 1;
                }
            }
            if count > 0 {
                let e = resp[i] - sum / count as f64;
                total += e * e;
                used += 1;
            }
        }
        if used == m {
            Some(total / m as f64)
        } else {
            None
        }
    }
}

impl ImputationModel for ForestModel {
    fn predict(&self, x: ArrayView1<f64>, _theta: f64) -> f64 {
        let sum: f64 = self.trees.iter().map(|t| t.predict(x)).sum();
        sum / self.trees.len() as f64
    }
}

struct TreeBuilder<'a> {
    x: ArrayView2<'a, f64>,
    resp: &'a [f64],
    mtry: usize,
    min_leaf: usize,
    rng: rand_chacha::ChaCha8Rng,
    nodes: Vec<Node>,
    features: Vec<u32>,
    scratch: Vec<(f64, f64)>, // (covariate value, response) within a node
}

impl<'a> TreeBuilder<'a> {
    fn build(&mut self, idx: &mut [u32]) -> u32 {
        let id = self.nodes.len() as u32;
        let size = idx.len();
        let sum: f64 = idx.iter().map(|&i| self.resp[i as usize]).sum();
        let mean = sum / size as f64;
        self.nodes.push(Node {
            feature: LEAF,
            threshold: 0.0,
            left: 0,
            right: 0,
            value: mean,
        });
        if size < 2 * self.min_leaf {
            return id;
        }
        // Pure node: nothing to gain from splitting.
        let first = self.resp[idx[0] as usize];
        if idx.iter().all(|&i| self.resp[i as usize] == first) {
            return id;
        }

        // Sample mtry candidate features without replacement.
        let p = self.features.len();
        let mtry = self.mtry.min(p);
        for k in 0..mtry {
            let j = self.rng.gen_range(k..p);
            self.features.swap(k, j);
        }

        let mut best: Option<(f64, u32, f64)> = None; // (score, feature, threshold)
        for k in 0..mtry {
            let feat = self.features[k];
            self.scratch.clear();
            self.scratch.extend(
                idx.iter()
                    .map(|&i| (self.x[[i as usize, feat as usize]], self.resp[i as usize])),
            );
            self.scratch.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));

            // Maximize sum_L^2/n_L + sum_R^2/n_R over valid cut positions.
            let total: f64 = self.scratch.iter().map(|v| v.1).sum();
            let mut left_sum = 0.0;
            for cut in 1..size {
                left_sum += self.scratch[cut - 1].1;
                if cut < self.min_leaf || size - cut < self.min_leaf {
                    continue;
                }
                // Can't split between equal covariate values.
                if self.scratch[cut].0 <= self.scratch[cut - 1].0 {
                    continue;
                }
                let right_sum = total - left_sum;
                let score = left_sum * left_sum / cut as f64
                    + right_sum * right_sum / (size - cut) as f64;
                if best.map_or(true, |(b, _, _)| score > b) {
                    let threshold = 0.5 * (self.scratch[cut - 1].0 + self.scratch[cut].0);
                    best = Some((score, feat, threshold));
                }
            }
        }

        let Some((_, feat, threshold)) = best else {
            return id; // no valid split among the sampled features
        };

        // Partition indices in place: left block gets x <= threshold.
        let mut split = 0usize;
        for i in 0..size {
            if self.x[[idx[i] as usize, feat as usize]] <= threshold {
                idx.swap(split, i);
                split += 1;
            }
        }
        let (left_idx, right_idx) = idx.split_at_mut(split);
        let left = self.build(left_idx);
        let right = self.build(right_idx);
        let node = &mut self.nodes[id as usize];
        node.feature = feat;
        node.threshold = threshold;
        node.left = left;
        node.right = right;
        id
    }
}

/// Fit a bagged regression forest with response psi(y, theta).
pub fn fit_forest(
    train_y: &[f64],
    train_x: ArrayView2<f64>,
    theta: f64,
    tau: QuantileLevel,
    n_trees: usize,
    mtry: usize,
    min_leaf: usize,
    seed: u64,
) -> Result<ForestModel> {
    let m = train_y.len();
    let p = train_x.ncols();
    if train_x.nrows() != m {
        return Err(Error::ShapeMismatch("rows must align with responses".into()));
    }
    if n_trees == 0 || mtry == 0 || min_leaf == 0 {
        return Err(Error::InvalidConfig(
            "n_trees, mtry and min_leaf must be positive".into(),
        ));
    }
    if m < 2 {
        return Err(Error::ShapeMismatch(
            "need at least two training rows".into(),
        ));
    }
    let resp: Vec<f64> = train_y
        .iter()
        .map(|&y| estimator::psi(y, theta, tau))
        .collect();

    let results: Vec<(Tree, Vec<u16>)> = (0..n_trees)
        .into_par_iter()
        .map(|t| {
            let mut gen = rng::rng_from(rng::substream(seed, t as u64));
            let mut counts = vec![0u16; m];
            let mut idx: Vec<u32> = (0..m)
                .map(|_| {
                    let i = gen.gen_range(0..m);
                    counts[i] = counts[i].saturating_add(1);
                    i as u32
                })
                .collect();
            let mut builder = TreeBuilder {
                x: train_x,
                resp: &resp,
                mtry: mtry.min(p),
                min_leaf,
                rng: gen,
                nodes: Vec::with_capacity(2 * m / min_leaf),
                features: (0..p as u32).collect(),
                scratch: Vec::with_capacity(m),
            };
            builder.build(&mut idx);
            (
                Tree {
                    nodes: builder.nodes,
                },
                counts,
            )
        })
        .collect();

    let mut trees = Vec::with_capacity(n_trees);
    let mut in_bag = Vec::with_capacity(n_trees);
    for (tree, counts) in results {
        trees.push(tree);
        in_bag.push(counts);
    }
    Ok(ForestModel {
        trees,
        in_bag,
        n_trees,
        mtry: mtry.min(p),
        min_leaf,
    })
}

/// Imputation strategy backed by [`fit_forest`]. `mtry = None` resolves to
/// ceil(sqrt(p)) at fit time.
pub struct ForestStrategy {
    pub tau: QuantileLevel,
    pub n_trees: usize,
    pub mtry: Option<usize>,
    pub min_leaf: usize,
}

impl ForestStrategy {
    pub fn new(tau: QuantileLevel) -> Self {
        ForestStrategy {
            tau,
            n_trees: 500,
            mtry: None,
            min_leaf: 5,
        }
    }
}

impl ImputationStrategy for ForestStrategy {
    fn name(&self) -> &str {
        "forest"
    }

    fn fit(
        &self,
        train_y: &[f64],
        train_x: ArrayView2<f64>,
        theta: f64,
        seed: u64,
    ) -> Result<Box<dyn ImputationModel>> {
        let p = train_x.ncols();
        let mtry = self
            .mtry
            .unwrap_or_else(|| (p as f64).sqrt().ceil() as usize);
        let model = fit_forest(
            train_y,
            train_x,
            theta,
            self.tau,
            self.n_trees,
            mtry,
            self.min_leaf,
            seed,
        )?;
        Ok(Box::new(model))
    }
}
