use std::time::Instant;

use ndarray::{Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{derive_seed, DetectionResult};
use crate::error::{Error, Result};
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansParams {
    pub k: usize,
    pub n_init: usize,
    pub max_iter: usize,
    /// Converged once no centroid moves farther than this.
    pub tol: f64,
    pub seed: u64,
}

impl Default for KMeansParams {
    fn default() -> Self {
        Self {
            k: 2,
            n_init: 10,
            max_iter: 300,
            tol: 1e-4,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansModel {
    pub centroids: Array2<f64>,
    pub k: usize,
    pub inertia: f64,
    pub n_iter: usize,
    /// Inertia after each assignment step of the winning restart.
    pub inertia_history: Vec<f64>,
}

fn sq_dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest centroid (lowest index on ties) and squared distance for each row.
fn nearest(x: &Array2<f64>, centroids: &Array2<f64>) -> Vec<(usize, f64)> {
    par::map_range(x.nrows(), |i| {
        let row = x.row(i);
        let mut best = (0, f64::INFINITY);
        for (c, centroid) in centroids.rows().into_iter().enumerate() {
            let d = sq_dist(row, centroid);
            if d < best.1 {
                best = (c, d);
            }
        }
        best
    })
}

fn kmeans_plus_plus(x: &Array2<f64>, k: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let n = x.nrows();
    let mut centroids = Array2::zeros((k, x.ncols()));
    let first = rng.random_range(0..n);
    centroids.row_mut(0).assign(&x.row(first));
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(x.row(i), x.row(first))).collect();
    for c in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                acc += d;
                if acc > target {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centroids.row_mut(c).assign(&x.row(pick));
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(x.row(i), x.row(pick)));
        }
    }
    centroids
}

fn lloyd(x: &Array2<f64>, params: &KMeansParams, seed: u64) -> KMeansModel {
    let (n, m) = x.dim();
    let k = params.k;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = kmeans_plus_plus(x, k, &mut rng);
    let mut history = Vec::new();
    let mut n_iter = 0;

    loop {
        let assign = nearest(x, &centroids);
        history.push(assign.iter().map(|a| a.1).sum::<f64>());
        if n_iter >= params.max_iter {
            break;
        }
        n_iter += 1;

        let mut sums = Array2::<f64>::zeros((k, m));
        let mut counts = vec![0usize; k];
        for (i, &(c, _)) in assign.iter().enumerate() {
            counts[c] += 1;
            sums.row_mut(c).zip_mut_with(&x.row(i), |s, v| *s += v);
        }
        let mut next = centroids.clone();
        for (c, &cnt) in counts.iter().enumerate() {
            if cnt > 0 {
                next.row_mut(c)
                    .assign(&sums.row(c).mapv(|v| v / cnt as f64));
            }
        }
        // Reseed each empty cluster at the point farthest from its centroid.
        let mut taken = vec![false; n];
        for c in (0..k).filter(|&c| counts[c] == 0) {
            let far = (0..n)
                .filter(|&i| !taken[i])
                .max_by(|&a, &b| {
                    assign[a]
                        .1
                        .partial_cmp(&assign[b].1)
                        .unwrap_or(std::cmp::Ordering::Equal)
                        .then(b.cmp(&a))
                })
                .unwrap_or(0);
            taken[far] = true;
            next.row_mut(c).assign(&x.row(far));
        }

        let shift = (0..k)
            .map(|c| sq_dist(next.row(c), centroids.row(c)).sqrt())
            .fold(0.0, f64::max);
        centroids = next;
        if shift < params.tol {
            let assign = nearest(x, &centroids);
            history.push(assign.iter().map(|a| a.1).sum::<f64>());
            break;
        }
    }

    KMeansModel {
        centroids,
        k,
        inertia: *history.last().expect("at least one assignment"),
        n_iter,
        inertia_history: history,
    }
}

/// Best of `n_init` k-means++ seeded Lloyd runs by inertia.
///
/// Restart `r` is seeded with `derive_seed(seed, r)`; ties keep the lowest restart.
pub fn kmeans_fit(features: &Array2<f64>, params: &KMeansParams) -> Result<KMeansModel> {
    let n = features.nrows();
    if params.k == 0 {
        return Err(Error::param("k must be positive"));
    }
    if n < params.k {
        return Err(Error::TooFewSamples {
            needed: params.k,
            actual: n,
        });
    }
    let runs = par::map_range(params.n_init.max(1), |r| {
        lloyd(features, params, derive_seed(params.seed, r as u64))
    });
    let mut best = None::<KMeansModel>;
    for run in runs {
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    Ok(best.expect("n_init >= 1"))
}

/// Nearest-centroid index for every row.
pub fn kmeans_assign(model: &KMeansModel, features: &Array2<f64>) -> Result<Vec<usize>> {
    if features.ncols() != model.centroids.ncols() {
        return Err(Error::DimensionMismatch {
            expected: model.centroids.ncols(),
            actual: features.ncols(),
        });
    }
    Ok(nearest(features, &model.centroids)
        .into_iter()
        .map(|a| a.0)
        .collect())
}

/// Majority ground-truth label per cluster; ties and empty clusters map to 0.
pub fn majority_label_map(assignments: &[usize], labels: &[u8], k: usize) -> Vec<u8> {
    let mut attack = vec![0usize; k];
    let mut benign = vec![0usize; k];
    for (&c, &l) in assignments.iter().zip(labels) {
        if l == 1 {
            attack[c] += 1;
        } else {
            benign[c] += 1;
        }
    }
    (0..k).map(|c| u8::from(attack[c] > benign[c])).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansDetection {
    /// With labels, predictions are mapped labels. Without, they are raw cluster ids.
    pub result: DetectionResult,
    pub assignments: Vec<usize>,
    pub cluster_labels: Option<Vec<u8>>,
}

/// Assigns rows to centroids and maps clusters to their majority label.
///
/// Labels are used only for this post hoc mapping. Scores are distances to
/// the assigned centroid.
pub fn kmeans_detect(
    model: &KMeansModel,
    features: &Array2<f64>,
    labels: Option<&[u8]>,
) -> Result<KMeansDetection> {
    if features.ncols() != model.centroids.ncols() {
        return Err(Error::DimensionMismatch {
            expected: model.centroids.ncols(),
            actual: features.ncols(),
        });
    }
    let t0 = Instant::now();
    let nearest = nearest(features, &model.centroids);
    let assignments: Vec<usize> = nearest.iter().map(|a| a.0).collect();
    let scores: Vec<f64> = nearest.iter().map(|a| a.1.sqrt()).collect();
    let (predictions, cluster_labels) = match labels {
        Some(labels) => {
            if labels.len() != assignments.len() {
                return Err(Error::LengthMismatch {
                    left: assignments.len(),
                    right: labels.len(),
                });
            }
            let map = majority_label_map(&assignments, labels, model.k);
            (assignments.iter().map(|&c| map[c]).collect(), Some(map))
        }
        None => (
            assignments
                .iter()
                .map(|&c| c.min(u8::MAX as usize) as u8)
                .collect(),
            None,
        ),
    };
    Ok(KMeansDetection {
        result: DetectionResult {
            predictions,
            scores,
            fit_time: 0.0,
            predict_time: t0.elapsed().as_secs_f64(),
        },
        assignments,
        cluster_labels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand_distr::{Distribution, StandardNormal};

    fn blobs(n: usize, sep: f64, seed: u64) -> (Array2<f64>, Vec<u8>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let labels: Vec<u8> = (0..n).map(|i| u8::from(i % 3 == 0)).collect();
        let x = Array2::from_shape_fn((n, 2), |(i, j)| {
            let z: f64 = StandardNormal.sample(&mut rng);
            z + if j == 0 && labels[i] == 1 { sep } else { 0.0 }
        });
        (x, labels)
    }

    #[test]
    fn two_points_two_clusters() {
        let x = array![[0.0, 0.0], [3.0, 4.0]];
        let m = kmeans_fit(&x, &KMeansParams::default()).unwrap();
        assert_eq!(m.inertia, 0.0);
        let a = kmeans_assign(&m, &x).unwrap();
        assert_ne!(a[0], a[1]);
    }

    #[test]
    fn deterministic_for_seed() {
        let (x, _) = blobs(300, 4.0, 1);
        let p = KMeansParams {
            seed: 5,
            ..Default::default()
        };
        assert_eq!(kmeans_fit(&x, &p).unwrap(), kmeans_fit(&x, &p).unwrap());
    }

    #[test]
    fn recovers_separated_means() {
        let (x, _) = blobs(2000, 10.0, 2);
        let m = kmeans_fit(&x, &KMeansParams::default()).unwrap();
        let mut cs: Vec<(f64, f64)> = m
            .centroids
            .rows()
            .into_iter()
            .map(|r| (r[0], r[1]))
            .collect();
        cs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        assert!((cs[0].0).abs() < 0.2 && cs[0].1.abs() < 0.2);
        assert!((cs[1].0 - 10.0).abs() < 0.2 && cs[1].1.abs() < 0.2);
    }

    #[test]
    fn inertia_never_increases() {
        let (x, _) = blobs(500, 1.0, 3);
        for seed in 0..5 {
            let m = kmeans_fit(
                &x,
                &KMeansParams {
                    k: 4,
                    seed,
                    ..Default::default()
                },
            )
            .unwrap();
            for w in m.inertia_history.windows(2) {
                assert!(w[1] <= w[0] * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn empty_cluster_is_reseeded() {
        // three distinct points, k = 3; any duplicate init must be repaired
        let x = array![[0.0], [0.0], [0.0], [1.0], [2.0]];
        let m = kmeans_fit(
            &x,
            &KMeansParams {
                k: 3,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(m.inertia < 1e-12);
    }

    #[test]
    fn too_few_samples() {
        assert!(kmeans_fit(&array![[1.0]], &KMeansParams::default()).is_err());
    }

    #[test]
    fn majority_mapping_and_ties() {
        let assign = vec![0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 1, 1];
        let labels = vec![1, 1, 1, 1, 1, 1, 1, 1, 1, 0, 1, 0];
        assert_eq!(majority_label_map(&assign, &labels, 2), vec![1, 0]);
        assert_eq!(majority_label_map(&[0, 0], &[0, 1], 3), vec![0, 0, 0]);
    }

    #[test]
    fn pure_clusters_detect_perfectly() {
        let (x, labels) = blobs(600, 12.0, 4);
        let m = kmeans_fit(&x, &KMeansParams::default()).unwrap();
        let d = kmeans_detect(&m, &x, Some(&labels)).unwrap();
        assert_eq!(d.result.predictions, labels);
        let raw = kmeans_detect(&m, &x, None).unwrap();
        assert!(raw.cluster_labels.is_none());
        assert!(raw.result.predictions.iter().all(|&p| p < 2));
    }
}
