use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{s, Array1, Array2, Axis};

use crate::error::{Error, Result};
use crate::par;

/// Component budget and variance target of the structural probe.
pub const DEFAULT_COMPONENT_BUDGET: usize = 5;
pub const DEFAULT_VARIANCE_TARGET: f64 = 0.95;

const GRAM_CHUNK_ROWS: usize = 4096;

/// Principal components of a centered matrix.
///
/// `basis` is `p x d` with orthonormal columns sorted by decreasing variance.
/// Each column is signed so its largest-magnitude entry is positive.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    pub mean: Array1<f64>,
    pub basis: Array2<f64>,
    pub explained_variance: Vec<f64>,
    pub explained_variance_ratio: Vec<f64>,
    /// Ratios for every available component, for the cumulative-variance curve.
    pub spectrum_ratio: Vec<f64>,
    pub total_components_available: usize,
}

impl PcaModel {
    pub fn n_features(&self) -> usize {
        self.basis.nrows()
    }

    pub fn n_components(&self) -> usize {
        self.basis.ncols()
    }

    /// Cumulative explained-variance ratio over every available component.
    pub fn cumulative_spectrum(&self) -> Vec<f64> {
        self.spectrum_ratio
            .iter()
            .scan(0.0, |acc, r| {
                *acc += r;
                Some(*acc)
            })
            .collect()
    }

    /// Maps scores back to feature space: `z W^T + mean`.
    pub fn reconstruct(&self, scores: &Array2<f64>) -> Result<Array2<f64>> {
        let k = scores.ncols();
        if k > self.n_components() {
            return Err(Error::DimensionMismatch {
                expected: self.n_components(),
                actual: k,
            });
        }
        let w = self.basis.slice(s![.., ..k]);
        Ok(scores.dot(&w.t()) + &self.mean)
    }
}

/// `X^T X` accumulated over fixed row chunks, summed in chunk order.
fn gram(centered: &Array2<f64>) -> Array2<f64> {
    let n = centered.nrows();
    let chunks = n.div_ceil(GRAM_CHUNK_ROWS);
    let partials = par::map_range(chunks, |c| {
        let lo = c * GRAM_CHUNK_ROWS;
        let hi = (lo + GRAM_CHUNK_ROWS).min(n);
        let block = centered.slice(s![lo..hi, ..]);
        block.t().dot(&block)
    });
    let p = centered.ncols();
    partials
        .into_iter()
        .fold(Array2::zeros((p, p)), |acc, part| acc + part)
}

/// Largest feasible component count for an `n x p` matrix.
pub fn max_components(n: usize, p: usize) -> usize {
    p.min(n.saturating_sub(1))
}

/// Fits PCA by eigendecomposition of the sample covariance and keeps `d` components.
pub fn fit_pca(matrix: &Array2<f64>, d: usize) -> Result<PcaModel> {
    let (n, p) = matrix.dim();
    if n < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            actual: n,
        });
    }
    let available = max_components(n, p);
    if d == 0 || d > available {
        return Err(Error::param(format!(
            "component count {d} outside 1..={available}"
        )));
    }
    let mean = matrix.mean_axis(Axis(0)).expect("n >= 2");
    let centered = matrix - &mean;
    let cov = gram(&centered) / (n as f64 - 1.0);

    let cov_na = DMatrix::from_fn(p, p, |i, j| 0.5 * (cov[[i, j]] + cov[[j, i]]));
    let eig = SymmetricEigen::new(cov_na);

    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    let total: f64 = values.iter().sum();
    if !(total > 0.0) {
        return Err(Error::ZeroMatrix);
    }
    let spectrum_ratio: Vec<f64> = values[..available].iter().map(|v| v / total).collect();

    let mut basis = Array2::<f64>::zeros((p, d));
    for (c, &src) in order.iter().take(d).enumerate() {
        let v = eig.eigenvectors.column(src);
        let norm = v.norm();
        let pivot = (0..p)
            .max_by(|&a, &b| {
                v[a].abs()
                    .partial_cmp(&v[b].abs())
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then(b.cmp(&a))
            })
            .unwrap_or(0);
        let sign = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
        for r in 0..p {
            basis[[r, c]] = sign * v[r] / norm;
        }
    }

    Ok(PcaModel {
        mean,
        basis,
        explained_variance: values[..d].to_vec(),
        explained_variance_ratio: spectrum_ratio[..d].to_vec(),
        spectrum_ratio,
        total_components_available: available,
    })
}

/// Projects each row independently: `z_i = W_k^T (x_i - mean)`.
pub fn project(model: &PcaModel, matrix: &Array2<f64>, k: usize) -> Result<Array2<f64>> {
    if matrix.ncols() != model.n_features() {
        return Err(Error::DimensionMismatch {
            expected: model.n_features(),
            actual: matrix.ncols(),
        });
    }
    if k > model.n_components() {
        return Err(Error::param(format!(
            "requested {k} components, model has {}",
            model.n_components()
        )));
    }
    let w = model.basis.slice(s![.., ..k]);
    Ok((matrix - &model.mean).dot(&w))
}

/// Cumulative variance over the first `k` components compared to `target`.
#[derive(Debug, Clone, PartialEq)]
pub struct VarianceProbeResult {
    pub k: usize,
    pub target: f64,
    pub cumulative_at_k: f64,
    pub verdict: bool,
}

/// Components beyond those the model holds count as zero variance.
pub fn variance_probe(model: &PcaModel, k: usize, target: f64) -> VarianceProbeResult {
    variance_probe_from_ratios(&model.explained_variance_ratio, k, target)
}

pub(crate) fn variance_probe_from_ratios(
    ratios: &[f64],
    k: usize,
    target: f64,
) -> VarianceProbeResult {
    let cumulative_at_k = ratios.iter().take(k).sum::<f64>();
    VarianceProbeResult {
        k,
        target,
        cumulative_at_k,
        verdict: cumulative_at_k >= target,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn max_abs_offdiag_identity(w: &Array2<f64>) -> f64 {
        let g = w.t().dot(w);
        let mut worst: f64 = 0.0;
        for ((i, j), v) in g.indexed_iter() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((v - target).abs());
        }
        worst
    }

    #[test]
    fn line_data_is_rank_one() {
        let m = Array2::from_shape_fn((20, 2), |(i, j)| {
            (i as f64 - 7.0) * if j == 0 { 1.0 } else { 2.0 }
        });
        let model = fit_pca(&m, 2).unwrap();
        assert!((model.explained_variance_ratio[0] - 1.0).abs() < 1e-9);
        assert!(model.explained_variance_ratio[1].abs() < 1e-9);
        // k = 1 recovers the signed coordinate along the line
        let z = project(&model, &m, 1).unwrap();
        let scale = 5f64.sqrt();
        for i in 0..20 {
            assert!((z[[i, 0]] - (i as f64 - 9.5) * scale).abs() < 1e-9);
        }
    }

    #[test]
    fn isotropic_gaussian_splits_evenly() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let m = Array2::from_shape_fn((10_000, 2), |_| StandardNormal.sample(&mut rng));
        let model = fit_pca(&m, 2).unwrap();
        for r in &model.explained_variance_ratio {
            assert!((r - 0.5).abs() < 0.03);
        }
    }

    #[test]
    fn basis_orthonormal_and_sign_fixed() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let m = Array2::from_shape_fn((300, 12), |(_, j)| {
            let v: f64 = StandardNormal.sample(&mut rng);
            v * (1.0 + j as f64)
        });
        let model = fit_pca(&m, 12).unwrap();
        assert!(max_abs_offdiag_identity(&model.basis) < 1e-8);
        for c in 0..12 {
            let col = model.basis.column(c);
            let pivot = col
                .iter()
                .cloned()
                .fold(0.0f64, |a, b| if b.abs() > a.abs() { b } else { a });
            assert!(pivot > 0.0);
        }
        let ratios = &model.explained_variance_ratio;
        assert!(ratios.windows(2).all(|w| w[0] >= w[1]));
        assert!((ratios.iter().sum::<f64>() - 1.0).abs() < 1e-9);

        let z = project(&model, &m, 12).unwrap();
        let back = model.reconstruct(&z).unwrap();
        let err = (&back - &m).iter().fold(0.0f64, |a, v| a.max(v.abs()));
        assert!(err < 1e-6);
    }

    #[test]
    fn projecting_mean_gives_zero() {
        let m = array![[1.0, 2.0], [3.0, 1.0], [5.0, 7.0]];
        let model = fit_pca(&m, 2).unwrap();
        let mean_row = model.mean.clone().insert_axis(Axis(0));
        let z = project(&model, &mean_row, 2).unwrap();
        assert!(z.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn errors() {
        let m = array![[1.0, 2.0], [3.0, 1.0], [5.0, 7.0]];
        assert!(fit_pca(&m, 3).is_err());
        assert!(fit_pca(&m, 0).is_err());
        assert!(matches!(
            fit_pca(&Array2::zeros((4, 2)), 1),
            Err(Error::ZeroMatrix)
        ));
        let model = fit_pca(&m, 1).unwrap();
        assert!(matches!(
            project(&model, &array![[1.0]], 1),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn variance_probe_arithmetic() {
        let r = variance_probe_from_ratios(&[0.6, 0.3, 0.05, 0.03, 0.01], 5, 0.95);
        assert!((r.cumulative_at_k - 0.99).abs() < 1e-12);
        assert!(r.verdict);
        let uniform = vec![1.0 / 1024.0; 1024];
        let r = variance_probe_from_ratios(&uniform, 5, 0.95);
        assert!((r.cumulative_at_k - 5.0 / 1024.0).abs() < 1e-12);
        assert!(!r.verdict);
        let ratios = [0.5, 0.25, 0.125, 0.0625, 0.0125];
        let exact: f64 = ratios.iter().sum();
        let r = variance_probe_from_ratios(&ratios, 5, exact);
        assert_eq!(r.cumulative_at_k, exact);
        assert!(r.verdict);
        // fewer components than the budget pad with zero
        let r = variance_probe_from_ratios(&[0.7, 0.2], 5, 0.95);
        assert!(!r.verdict);
    }
}
