use std::time::Instant;

use ndarray::{Array2, ArrayView1};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{derive_seed, flagged_count, DetectionResult};
use crate::error::{Error, Result};
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IsolationForestParams {
    pub n_trees: usize,
    pub subsample_size: usize,
    pub seed: u64,
}

impl Default for IsolationForestParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            subsample_size: 256,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        size: usize,
    },
}

/// Flat node arena; the root is node 0.
#[derive(Debug, Clone, PartialEq)]
pub struct IsolationTree {
    pub nodes: Vec<Node>,
}

impl IsolationTree {
    /// Depth reached by `x` plus the average-path adjustment at its leaf.
    ///
    /// `adjust[m]` must hold `average_path_length(m)` for every leaf size.
    pub fn path_length(&self, x: ArrayView1<f64>, adjust: &[f64]) -> f64 {
        let mut node = 0;
        let mut depth = 0usize;
        loop {
            match self.nodes[node] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    node = if x[feature] < threshold { left } else { right };
                    depth += 1;
                }
                Node::Leaf { size } => return depth as f64 + adjust[size],
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
                Node::Leaf { .. } => 0,
            }
        }
        walk(&self.nodes, 0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IsolationForestModel {
    pub trees: Vec<IsolationTree>,
    /// Effective subsample size, `min(psi, n)`.
    pub subsample_size: usize,
    pub n_trees: usize,
    pub height_limit: usize,
    pub n_features: usize,
    /// Score threshold chosen by the last [`if_predict`] call, if any.
    pub threshold: Option<f64>,
}

fn harmonic(k: usize) -> f64 {
    (1..=k).map(|i| 1.0 / i as f64).sum()
}

/// Average unsuccessful-search path length in a binary search tree of `m` points:
/// `c(m) = 2 H(m-1) - 2 (m-1) / m`, with `c(1) = 0`.
pub fn average_path_length(m: usize) -> f64 {
    match m {
        0 | 1 => 0.0,
        _ => 2.0 * harmonic(m - 1) - 2.0 * (m - 1) as f64 / m as f64,
    }
}

struct TreeBuilder<'a> {
    data: &'a Array2<f64>,
    height_limit: usize,
    rng: ChaCha8Rng,
    nodes: Vec<Node>,
}

impl TreeBuilder<'_> {
    fn build(&mut self, rows: &mut [usize], depth: usize) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { size: rows.len() });
        if depth >= self.height_limit || rows.len() <= 1 {
            return id;
        }

        // features that can still separate the points in this node
        let p = self.data.ncols();
        let mut ranges = Vec::with_capacity(p);
        for f in 0..p {
            let (lo, hi) = rows
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &r| {
                    let v = self.data[[r, f]];
                    (lo.min(v), hi.max(v))
                });
            if lo < hi {
                ranges.push((f, lo, hi));
            }
        }
        if ranges.is_empty() {
            return id;
        }
        let (feature, lo, hi) = ranges[self.rng.random_range(0..ranges.len())];
        let mut threshold = lo;
        while threshold <= lo {
            threshold = lo + self.rng.random::<f64>() * (hi - lo);
        }

        let mut split = 0;
        for i in 0..rows.len() {
            if self.data[[rows[i], feature]] < threshold {
                rows.swap(i, split);
                split += 1;
            }
        }
        let (l, r) = rows.split_at_mut(split);
        let left = self.build(l, depth + 1);
        let right = self.build(r, depth + 1);
        self.nodes[id] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        id
    }
}

/// Grows `n_trees` isolation trees, each on a uniform subsample without replacement.
///
/// Tree `t` draws from its own stream seeded by `derive_seed(seed, t)`, so the
/// forest is identical whether trees are built sequentially or in parallel.
pub fn if_fit(
    features: &Array2<f64>,
    params: &IsolationForestParams,
) -> Result<IsolationForestModel> {
    let n = features.nrows();
    if n == 0 {
        return Err(Error::Empty("features"));
    }
    if params.n_trees == 0 || params.subsample_size == 0 {
        return Err(Error::param("n_trees and subsample_size must be positive"));
    }
    let psi = params.subsample_size.min(n);
    let height_limit = (psi as f64).log2().ceil() as usize;
    let trees = par::map_range(params.n_trees, |t| {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(params.seed, t as u64));
        let mut rows = index::sample(&mut rng, n, psi).into_vec();
        let mut builder = TreeBuilder {
            data: features,
            height_limit,
            rng,
            nodes: Vec::new(),
        };
        builder.build(&mut rows, 0);
        IsolationTree {
            nodes: builder.nodes,
        }
    });
    Ok(IsolationForestModel {
        trees,
        subsample_size: psi,
        n_trees: params.n_trees,
        height_limit,
        n_features: features.ncols(),
        threshold: None,
    })
}

/// Anomaly score `2^(-E[h(x)] / c(psi))` for every row.
///
/// With a one-point subsample `c(psi) = 0` and every score is 0.5.
pub fn if_score(model: &IsolationForestModel, features: &Array2<f64>) -> Result<Vec<f64>> {
    if features.ncols() != model.n_features {
        return Err(Error::DimensionMismatch {
            expected: model.n_features,
            actual: features.ncols(),
        });
    }
    let norm = average_path_length(model.subsample_size);
    let adjust: Vec<f64> = (0..=model.subsample_size)
        .map(average_path_length)
        .collect();
    let n_trees = model.trees.len() as f64;
    Ok(par::map_range(features.nrows(), |i| {
        if norm == 0.0 {
            return 0.5;
        }
        let row = features.row(i);
        let mean_path = model
            .trees
            .iter()
            .map(|t| t.path_length(row, &adjust))
            .sum::<f64>()
            / n_trees;
        2f64.powf(-mean_path / norm)
    }))
}

/// Flags the `ceil(c * n)` highest scores; equal scores go to the lower index first.
pub fn if_predict(model: &mut IsolationForestModel, scores: &[f64], contamination: f64) -> Vec<u8> {
    let k = flagged_count(contamination, scores.len());
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut out = vec![0u8; scores.len()];
    for &i in &order[..k] {
        out[i] = 1;
    }
    model.threshold = order[..k].last().map(|&i| scores[i]);
    out
}

/// Fit, score and threshold in one call, with wall-clock timings.
pub fn if_detect(
    features: &Array2<f64>,
    params: &IsolationForestParams,
    contamination: f64,
) -> Result<(IsolationForestModel, DetectionResult)> {
    let t0 = Instant::now();
    let mut model = if_fit(features, params)?;
    let fit_time = t0.elapsed().as_secs_f64();
    let t1 = Instant::now();
    let scores = if_score(&model, features)?;
    let predictions = if_predict(&mut model, &scores, contamination);
    let predict_time = t1.elapsed().as_secs_f64();
    Ok((
        model,
        DetectionResult {
            predictions,
            scores,
            fit_time,
            predict_time,
        },
    ))
}
