//! One-class SVM with an RBF kernel, solved by two-coordinate SMO updates.
//!
//! The dual is posed with the simplex scaling
//!
//! ```text
//! min  1/2 a^T K a
//! s.t. 0 <= a_i <= 1 / (nu * l),  sum a_i = 1
//! ```
//!
//! and the working pair is chosen with second-order information, as in
//! LIBSVM's one-class solver. The decision function is
//! `f(x) = sum_i a_i K(x_i, x) - rho`; negative values are anomalies.

use std::collections::VecDeque;
use std::sync::Arc;
use std::time::Instant;

use ndarray::{s, Array2, ArrayView1, ArrayView2};

use super::DetectionResult;
use crate::error::{Error, Result};
use crate::par;

pub const DEFAULT_TRAIN_SIZE: usize = 5000;
pub const DEFAULT_CHUNK_SIZE: usize = 20_000;
/// Upper bound applied to `nu` when it is derived from the contamination.
pub const MAX_NU: f64 = 0.3;

const TAU: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Gamma {
    /// `1 / (m * v)` with `v` the mean per-feature variance of the training slice.
    Scale,
    Value(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OcsvmParams {
    pub nu: f64,
    pub gamma: Gamma,
    /// KKT violation tolerance on the maximal violating pair.
    pub tol: f64,
    /// Cap on pair updates.
    pub max_iter: usize,
    /// Kernel row cache budget in bytes.
    pub cache_bytes: usize,
}

impl Default for OcsvmParams {
    fn default() -> Self {
        Self {
            nu: 0.1,
            gamma: Gamma::Scale,
            tol: 1e-3,
            max_iter: 10_000_000,
            cache_bytes: 512 << 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OcsvmModel {
    /// Training rows with non-zero dual coefficient.
    pub support_vectors: Array2<f64>,
    pub alphas: Vec<f64>,
    pub rho: f64,
    pub gamma: f64,
    pub nu: f64,
    pub n_train: usize,
    pub iterations: usize,
    pub converged: bool,
    /// Full dual vector over the training slice, for constraint checks.
    pub dual: Vec<f64>,
    /// Box bound `1 / (nu * n_train)`.
    pub upper_bound: f64,
}

impl OcsvmModel {
    pub fn n_support(&self) -> usize {
        self.alphas.len()
    }

    pub fn n_features(&self) -> usize {
        self.support_vectors.ncols()
    }

    /// `f(x) = sum_i a_i K(sv_i, x) - rho`.
    pub fn decision_value(&self, x: ArrayView1<f64>) -> f64 {
        let mut acc = 0.0;
        for (sv, &a) in self.support_vectors.rows().into_iter().zip(&self.alphas) {
            acc += a * rbf(sv, x, self.gamma);
        }
        acc - self.rho
    }
}

fn rbf(a: ArrayView1<f64>, b: ArrayView1<f64>, gamma: f64) -> f64 {
    let d2: f64 = a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum();
    (-gamma * d2).exp()
}

/// Resolves `gamma = "scale"` against the training slice.
pub fn scale_gamma(train: ArrayView2<f64>) -> f64 {
    let (n, m) = train.dim();
    if n == 0 || m == 0 {
        return 1.0;
    }
    let mean_var = (0..m)
        .map(|j| {
            let col = train.column(j);
            let mean = col.iter().sum::<f64>() / n as f64;
            col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64
        })
        .sum::<f64>()
        / m as f64;
    if mean_var > 0.0 {
        1.0 / (m as f64 * mean_var)
    } else {
        1.0
    }
}

/// Bounded FIFO cache of kernel matrix rows.
struct KernelRows<'a> {
    data: ArrayView2<'a, f64>,
    gamma: f64,
    rows: Vec<Option<Arc<[f64]>>>,
    order: VecDeque<usize>,
    capacity: usize,
}

impl<'a> KernelRows<'a> {
    fn new(data: ArrayView2<'a, f64>, gamma: f64, cache_bytes: usize) -> Self {
        let n = data.nrows();
        let capacity = (cache_bytes / (8 * n.max(1))).clamp(2, n.max(2));
        Self {
            data,
            gamma,
            rows: vec![None; n],
            order: VecDeque::new(),
            capacity,
        }
    }

    fn row(&mut self, i: usize) -> Arc<[f64]> {
        if let Some(r) = &self.rows[i] {
            return Arc::clone(r);
        }
        let xi = self.data.row(i);
        let data = self.data;
        let gamma = self.gamma;
        let computed: Arc<[f64]> = par::map_range(data.nrows(), |j| {
            if j == i {
                1.0
            } else {
                rbf(xi, data.row(j), gamma)
            }
        })
        .into();
        if self.order.len() >= self.capacity {
            if let Some(old) = self.order.pop_front() {
                self.rows[old] = None;
            }
        }
        self.order.push_back(i);
        self.rows[i] = Some(Arc::clone(&computed));
        computed
    }
}

/// Fits on the first `train_size` rows of `features` (all rows if fewer).
pub fn ocsvm_fit(
    features: &Array2<f64>,
    train_size: usize,
    params: &OcsvmParams,
) -> Result<OcsvmModel> {
    let l = train_size.min(features.nrows());
    if l == 0 {
        return Err(Error::Empty("training slice"));
    }
    let nu = params.nu;
    if !(nu > 0.0 && nu <= 1.0) {
        return Err(Error::param(format!("nu = {nu} outside (0, 1]")));
    }
    if nu * (l as f64) < 1.0 {
        return Err(Error::param(format!(
            "nu * n_train = {} < 1; too few training samples for nu = {nu}",
            nu * l as f64
        )));
    }
    let train = features.slice(s![..l, ..]);
    let gamma = match params.gamma {
        Gamma::Scale => scale_gamma(train),
        Gamma::Value(g) if g > 0.0 => g,
        Gamma::Value(g) => return Err(Error::param(format!("gamma = {g} must be positive"))),
    };
    let upper = 1.0 / (nu * l as f64);

    // Fill the first floor(nu * l) coordinates to the bound, the remainder on the next.
    let mut alpha = vec![0.0; l];
    let full = ((nu * l as f64).floor() as usize).min(l);
    for a in alpha.iter_mut().take(full) {
        *a = upper;
    }
    if full < l {
        alpha[full] = (1.0 - full as f64 * upper).max(0.0);
    }

    let mut kernel = KernelRows::new(train, gamma, params.cache_bytes);
    let mut grad = vec![0.0; l];
    for (i, &a) in alpha.iter().enumerate() {
        if a > 0.0 {
            let row = kernel.row(i);
            for (g, &k) in grad.iter_mut().zip(row.iter()) {
                *g += a * k;
            }
        }
    }

    let mut iterations = 0;
    let mut converged = false;
    while iterations < params.max_iter {
        // i: most violating coordinate that can still grow
        let mut gmax = f64::NEG_INFINITY;
        let mut i = usize::MAX;
        for t in 0..l {
            if alpha[t] < upper && -grad[t] >= gmax {
                gmax = -grad[t];
                i = t;
            }
        }
        if i == usize::MAX {
            converged = true;
            break;
        }
        let qi = kernel.row(i);
        let mut gmax2 = f64::NEG_INFINITY;
        let mut j = usize::MAX;
        let mut obj_min = f64::INFINITY;
        for t in 0..l {
            if alpha[t] > 0.0 {
                if grad[t] >= gmax2 {
                    gmax2 = grad[t];
                }
                let diff = gmax + grad[t];
                if diff > 0.0 {
                    let quad = (2.0 - 2.0 * qi[t]).max(TAU);
                    let obj = -(diff * diff) / quad;
                    if obj <= obj_min {
                        obj_min = obj;
                        j = t;
                    }
                }
            }
        }
        if gmax + gmax2 < params.tol || j == usize::MAX {
            converged = true;
            break;
        }
        let qj = kernel.row(j);

        let quad = (2.0 - 2.0 * qi[j]).max(TAU);
        let (old_i, old_j) = (alpha[i], alpha[j]);
        let delta = (grad[i] - grad[j]) / quad;
        let sum = old_i + old_j;
        let mut ai = old_i - delta;
        let mut aj = old_j + delta;
        if sum > upper {
            if ai > upper {
                ai = upper;
                aj = sum - upper;
            }
        } else if aj < 0.0 {
            aj = 0.0;
            ai = sum;
        }
        if sum > upper {
            if aj > upper {
                aj = upper;
                ai = sum - upper;
            }
        } else if ai < 0.0 {
            ai = 0.0;
            aj = sum;
        }
        alpha[i] = ai;
        alpha[j] = aj;

        let (di, dj) = (ai - old_i, aj - old_j);
        for t in 0..l {
            grad[t] += qi[t] * di + qj[t] * dj;
        }
        iterations += 1;
    }

    let rho = compute_rho(&alpha, &grad, upper);
    let sv: Vec<usize> = (0..l).filter(|&t| alpha[t] > 0.0).collect();
    let mut support_vectors = Array2::zeros((sv.len(), train.ncols()));
    for (r, &t) in sv.iter().enumerate() {
        support_vectors.row_mut(r).assign(&train.row(t));
    }
    Ok(OcsvmModel {
        support_vectors,
        alphas: sv.iter().map(|&t| alpha[t]).collect(),
        rho,
        gamma,
        nu,
        n_train: l,
        iterations,
        converged,
        dual: alpha,
        upper_bound: upper,
    })
}

/// Offset from free coordinates, or the midpoint of the feasible interval when none are free.
fn compute_rho(alpha: &[f64], grad: &[f64], upper: f64) -> f64 {
    let mut ub = f64::INFINITY;
    let mut lb = f64::NEG_INFINITY;
    let mut free = 0usize;
    let mut sum = 0.0;
    for (&a, &g) in alpha.iter().zip(grad) {
        if a >= upper {
            lb = lb.max(g);
        } else if a <= 0.0 {
            ub = ub.min(g);
        } else {
            free += 1;
            sum += g;
        }
    }
    if free > 0 {
        sum / free as f64
    } else {
        (ub + lb) / 2.0
    }
}

/// Decision values in row chunks of at most `chunk` rows.
///
/// Each row's value depends only on that row, so the chunk size never
/// changes the output.
pub fn ocsvm_predict(
    model: &OcsvmModel,
    features: &Array2<f64>,
    chunk: usize,
) -> Result<DetectionResult> {
    if features.ncols() != model.n_features() {
        return Err(Error::DimensionMismatch {
            expected: model.n_features(),
            actual: features.ncols(),
        });
    }
    let chunk = chunk.max(1);
    let t0 = Instant::now();
    let n = features.nrows();
    let mut scores = Vec::with_capacity(n);
    let mut start = 0;
    while start < n {
        let end = (start + chunk).min(n);
        let block = features.slice(s![start..end, ..]);
        scores.extend(par::map_range(end - start, |r| {
            -model.decision_value(block.row(r))
        }));
        start = end;
    }
    let predictions = scores.iter().map(|&s| u8::from(s > 0.0)).collect();
    Ok(DetectionResult {
        predictions,
        scores,
        fit_time: 0.0,
        predict_time: t0.elapsed().as_secs_f64(),
    })
}
