//! Temporal (rolling-window) and structural (PCA) feature spaces.

use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::ingest::format_f64;
use crate::par;
use crate::probes::{aggregate_signal, max_components, project, Aggregation, PcaModel};

pub const DEFAULT_WINDOWS: [usize; 3] = [10, 30, 100];
pub const DEFAULT_STRUCTURAL_DIMS: usize = 10;
/// Leading principal components used as temporal base signals.
pub const TEMPORAL_PCS: usize = 5;
/// Guard on the coefficient-of-variation denominator.
pub const CV_EPSILON: f64 = 1e-8;

pub const STAT_NAMES: [&str; 6] = ["mean", "std", "max", "min", "diff", "cv"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureSpace {
    Temporal,
    Structural,
}

impl FeatureSpace {
    pub fn as_str(self) -> &'static str {
        match self {
            FeatureSpace::Temporal => "temporal",
            FeatureSpace::Structural => "structural",
        }
    }

    /// Suffix used in method labels such as `IF-Temp.`.
    pub fn short(self) -> &'static str {
        match self {
            FeatureSpace::Temporal => "Temp.",
            FeatureSpace::Structural => "Str.",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Provenance {
    Temporal {
        windows: Vec<usize>,
    },
    /// `components < requested` means the count was clamped to the data's rank bound.
    Structural {
        components: usize,
        requested: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub matrix: Array2<f64>,
    pub feature_names: Vec<String>,
    pub space: FeatureSpace,
    pub provenance: Provenance,
}

impl FeatureMatrix {
    pub fn n_features(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(&self.feature_names)?;
        for row in self.matrix.rows() {
            w.write_record(row.iter().map(|v| format_f64(*v)))?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

/// The six per-window statistics of one base signal, each of length `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct RollingStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub max: Vec<f64>,
    pub min: Vec<f64>,
    /// `mean[i] - mean[i-1]`, zero at `i = 0`.
    pub diff: Vec<f64>,
    pub cv: Vec<f64>,
}

impl RollingStats {
    pub fn columns(&self) -> [&[f64]; 6] {
        [
            &self.mean, &self.std, &self.max, &self.min, &self.diff, &self.cv,
        ]
    }
}

/// Half-open bounds of the centered window of width `w` at `i`.
///
/// Spans `i - floor(w/2) ..= i + ceil(w/2) - 1`, truncated to `0..n`.
pub fn window_bounds(i: usize, w: usize, n: usize) -> (usize, usize) {
    let lo = i.saturating_sub(w / 2);
    let hi = (i + w.div_ceil(2)).min(n);
    (lo, hi)
}

pub fn coefficient_of_variation(mean: f64, std: f64) -> f64 {
    if mean.abs() > CV_EPSILON {
        std / mean.abs()
    } else {
        0.0
    }
}

pub fn rolling_stats(series: &[f64], w: usize) -> Result<RollingStats> {
    if w < 2 {
        return Err(Error::param(format!("window size {w} < 2")));
    }
    let n = series.len();
    let per_sample = par::map_range(n, |i| {
        let (lo, hi) = window_bounds(i, w, n);
        let win = &series[lo..hi];
        let len = win.len() as f64;
        let mean = win.iter().sum::<f64>() / len;
        let std = (win.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / len).sqrt();
        let max = win.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = win.iter().copied().fold(f64::INFINITY, f64::min);
        (mean, std, max, min)
    });

    let mut out = RollingStats {
        mean: Vec::with_capacity(n),
        std: Vec::with_capacity(n),
        max: Vec::with_capacity(n),
        min: Vec::with_capacity(n),
        diff: Vec::with_capacity(n),
        cv: Vec::with_capacity(n),
    };
    for (i, &(mean, std, max, min)) in per_sample.iter().enumerate() {
        out.mean.push(mean);
        out.std.push(std);
        out.max.push(max);
        out.min.push(min);
        out.diff.push(if i == 0 {
            0.0
        } else {
            mean - per_sample[i - 1].0
        });
        out.cv.push(coefficient_of_variation(mean, std));
    }
    Ok(out)
}

/// Rolling statistics over the row-norm signal and the first five PC scores.
///
/// Columns are ordered by window, then base signal (`l2`, `pc1`..`pc5`),
/// then statistic, and named `w{window}_{signal}_{stat}`.
pub fn temporal_features(
    matrix: &Array2<f64>,
    pca: &PcaModel,
    windows: &[usize],
) -> Result<FeatureMatrix> {
    if windows.is_empty() {
        return Err(Error::param("window set is empty"));
    }
    if let Some(&w) = windows.iter().find(|&&w| w < 2) {
        return Err(Error::param(format!("window size {w} < 2")));
    }
    let n = matrix.nrows();
    let max_w = *windows.iter().max().expect("non-empty");
    if n <= max_w {
        return Err(Error::TooFewSamples {
            needed: max_w + 1,
            actual: n,
        });
    }
    if pca.n_components() < TEMPORAL_PCS {
        return Err(Error::param(format!(
            "temporal features need {TEMPORAL_PCS} principal components, model has {}",
            pca.n_components()
        )));
    }

    let mut signals: Vec<(String, Vec<f64>)> = Vec::with_capacity(TEMPORAL_PCS + 1);
    signals.push(("l2".into(), aggregate_signal(matrix, Aggregation::L2Norm)?));
    let scores = project(pca, matrix, TEMPORAL_PCS)?;
    for c in 0..TEMPORAL_PCS {
        signals.push((format!("pc{}", c + 1), scores.column(c).to_vec()));
    }

    let pairs: Vec<(usize, usize)> = windows
        .iter()
        .flat_map(|&w| (0..signals.len()).map(move |s| (w, s)))
        .collect();
    let stats: Vec<RollingStats> = pairs
        .iter()
        .map(|&(w, s)| rolling_stats(&signals[s].1, w))
        .collect::<Result<_>>()?;

    let m = pairs.len() * STAT_NAMES.len();
    let mut out = Array2::<f64>::zeros((n, m));
    let mut names = Vec::with_capacity(m);
    for (block, (&(w, s), st)) in pairs.iter().zip(&stats).enumerate() {
        for (k, (col, stat)) in st.columns().iter().zip(STAT_NAMES).enumerate() {
            let j = block * STAT_NAMES.len() + k;
            out.column_mut(j)
                .iter_mut()
                .zip(col.iter())
                .for_each(|(dst, &v)| *dst = v);
            names.push(format!("w{w}_{}_{stat}", signals[s].0));
        }
    }

    Ok(FeatureMatrix {
        matrix: out,
        feature_names: names,
        space: FeatureSpace::Temporal,
        provenance: Provenance::Temporal {
            windows: windows.to_vec(),
        },
    })
}

/// Component count for the structural space: `requested` clamped to the rank bound.
pub fn clamp_structural_dims(requested: usize, n: usize, p: usize) -> usize {
    requested.min(max_components(n, p))
}

/// The per-sample PCA projection onto every component of `pca`.
pub fn structural_features(
    matrix: &Array2<f64>,
    pca: &PcaModel,
    requested: usize,
) -> Result<FeatureMatrix> {
    let d = pca.n_components().min(requested);
    let z = project(pca, matrix, d)?;
    Ok(FeatureMatrix {
        matrix: z,
        feature_names: (1..=d).map(|c| format!("pc{c}")).collect(),
        space: FeatureSpace::Structural,
        provenance: Provenance::Structural {
            components: d,
            requested,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::probes::fit_pca;
    use ndarray::Array1;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn noise(n: usize, p: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((n, p), |_| StandardNormal.sample(&mut rng))
    }

    #[test]
    fn constant_series_has_zero_spread() {
        let st = rolling_stats(&[5.0; 4], 3).unwrap();
        assert!(st.mean.iter().all(|&v| v == 5.0));
        assert!(st.std.iter().all(|&v| v == 0.0));
        assert!(st.max.iter().all(|&v| v == 5.0));
        assert!(st.min.iter().all(|&v| v == 5.0));
        assert!(st.diff.iter().all(|&v| v == 0.0));
        assert!(st.cv.iter().all(|&v| v == 0.0));

        let st = rolling_stats(&[0.0; 3], 2).unwrap();
        assert!(st.cv.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn hand_window() {
        let st = rolling_stats(&[1.0, 2.0, 3.0, 4.0, 5.0], 3).unwrap();
        assert_eq!(st.mean[2], 3.0);
        assert_eq!(st.max[2], 4.0);
        assert_eq!(st.min[2], 2.0);
        assert!((st.std[2] - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
        // left edge truncated to {1, 2}
        assert_eq!(st.mean[0], 1.5);
        assert_eq!(st.diff[0], 0.0);
        assert_eq!(st.diff[1], 2.0 - 1.5);
    }

    #[test]
    fn even_window_bounds() {
        assert_eq!(window_bounds(0, 10, 100), (0, 5));
        assert_eq!(window_bounds(50, 10, 100), (45, 55));
        assert_eq!(window_bounds(99, 10, 100), (94, 100));
        assert_eq!(window_bounds(2, 3, 5), (1, 4));
    }

    #[test]
    fn window_too_small() {
        assert!(rolling_stats(&[1.0, 2.0], 1).is_err());
    }

    #[test]
    fn default_space_has_108_named_columns() {
        let x = noise(300, 8, 1);
        let pca = fit_pca(&x, 8).unwrap();
        let f = temporal_features(&x, &pca, &DEFAULT_WINDOWS).unwrap();
        assert_eq!(f.matrix.dim(), (300, 108));
        assert_eq!(f.feature_names[0], "w10_l2_mean");
        assert_eq!(f.feature_names[6], "w10_pc1_mean");
        assert_eq!(f.feature_names[107], "w100_pc5_cv");
        assert!(f.matrix.iter().all(|v| v.is_finite()));
        let mut uniq = f.feature_names.clone();
        uniq.sort();
        uniq.dedup();
        assert_eq!(uniq.len(), 108);
    }

    #[test]
    fn count_formula_for_other_window_sets() {
        let x = noise(120, 6, 2);
        let pca = fit_pca(&x, 5).unwrap();
        for ws in [vec![4usize], vec![2, 7], vec![3, 5, 9, 11]] {
            let f = temporal_features(&x, &pca, &ws).unwrap();
            assert_eq!(f.n_features(), ws.len() * 6 * 6);
        }
    }

    #[test]
    fn temporal_errors() {
        let x = noise(100, 6, 3);
        let pca = fit_pca(&x, 5).unwrap();
        assert!(matches!(
            temporal_features(&x, &pca, &DEFAULT_WINDOWS),
            Err(Error::TooFewSamples { .. })
        ));
        let small = fit_pca(&x, 4).unwrap();
        assert!(temporal_features(&x, &small, &[10]).is_err());
        assert!(temporal_features(&x, &pca, &[]).is_err());
    }

    #[test]
    fn zero_input_gives_zero_features() {
        let x = noise(200, 6, 4);
        let mut pca = fit_pca(&x, 6).unwrap();
        pca.mean = Array1::zeros(6);
        let zeros = Array2::zeros((200, 6));
        let f = temporal_features(&zeros, &pca, &DEFAULT_WINDOWS).unwrap();
        assert!(f.matrix.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn structural_projection_is_decorrelated() {
        let x = noise(500, 12, 5);
        let pca = fit_pca(&x, 10).unwrap();
        let f = structural_features(&x, &pca, 10).unwrap();
        assert_eq!(f.n_features(), 10);
        let n = f.matrix.nrows() as f64;
        let cov = f.matrix.t().dot(&f.matrix) / (n - 1.0);
        for i in 0..10 {
            for j in 0..10 {
                if i != j {
                    assert!(cov[[i, j]].abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn structural_clamps_small_p() {
        assert_eq!(clamp_structural_dims(10, 1000, 4), 4);
        assert_eq!(clamp_structural_dims(10, 5, 50), 4);
        let x = noise(50, 4, 6);
        let pca = fit_pca(&x, clamp_structural_dims(10, 50, 4)).unwrap();
        let f = structural_features(&x, &pca, 10).unwrap();
        assert_eq!(
            f.provenance,
            Provenance::Structural {
                components: 4,
                requested: 10
            }
        );
    }
}
