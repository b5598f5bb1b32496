//! Detection metrics, silhouette scores and the cross-paradigm gap.

use ndarray::{Array2, ArrayView1};
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::detect::{kmeans_assign, kmeans_fit, KMeansParams};
use crate::error::{Error, Result};
use crate::features::FeatureSpace;
use crate::par;

pub const DEFAULT_SILHOUETTE_CAP: usize = 5000;

/// Confusion counts with the attack class (1) as positive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl Confusion {
    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

/// One row of a results table.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalMetrics {
    pub method: String,
    pub paradigm: FeatureSpace,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub silhouette: Option<f64>,
    pub fit_time: f64,
    pub predict_time: f64,
}

impl EvalMetrics {
    /// Builds a row from published or externally computed precision/recall/F1.
    pub fn from_values(
        method: impl Into<String>,
        paradigm: FeatureSpace,
        precision: f64,
        recall: f64,
        f1: f64,
    ) -> Self {
        Self {
            method: method.into(),
            paradigm,
            precision,
            recall,
            f1,
            silhouette: None,
            fit_time: 0.0,
            predict_time: 0.0,
        }
    }

    pub fn total_time(&self) -> f64 {
        self.fit_time + self.predict_time
    }

    pub fn get(&self, metric: Metric) -> f64 {
        match metric {
            Metric::Precision => self.precision,
            Metric::Recall => self.recall,
            Metric::F1 => self.f1,
        }
    }
}

pub fn confusion(predictions: &[u8], labels: &[u8]) -> Result<Confusion> {
    if predictions.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: predictions.len(),
            right: labels.len(),
        });
    }
    let mut c = Confusion::default();
    for (&p, &l) in predictions.iter().zip(labels) {
        match (p != 0, l != 0) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    Ok(c)
}

/// Precision, recall and F1 of `predictions` against `labels`.
///
/// Empty denominators give 0 rather than NaN.
pub fn confusion_metrics(
    method: impl Into<String>,
    paradigm: FeatureSpace,
    predictions: &[u8],
    labels: &[u8],
) -> Result<EvalMetrics> {
    let c = confusion(predictions, labels)?;
    let (p, r) = (c.precision(), c.recall());
    Ok(EvalMetrics::from_values(
        method,
        paradigm,
        p,
        r,
        f1_score(p, r),
    ))
}

fn dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Mean silhouette coefficient.
///
/// When `n > sample_cap`, a seeded uniform sample of `sample_cap` rows is
/// drawn and the silhouette is computed within that sample only. Points that
/// are alone in their cluster contribute 0.
pub fn silhouette(
    features: &Array2<f64>,
    assignments: &[usize],
    sample_cap: usize,
    seed: u64,
) -> Result<f64> {
    let n = features.nrows();
    if assignments.len() != n {
        return Err(Error::LengthMismatch {
            left: n,
            right: assignments.len(),
        });
    }
    let rows: Vec<usize> = if n > sample_cap && sample_cap > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut picked = index::sample(&mut rng, n, sample_cap).into_vec();
        picked.sort_unstable();
        picked
    } else {
        (0..n).collect()
    };
    let k = assignments.iter().copied().max().map_or(0, |m| m + 1);
    let mut sizes = vec![0usize; k];
    for &r in &rows {
        sizes[assignments[r]] += 1;
    }
    if sizes.iter().filter(|&&s| s > 0).count() < 2 {
        return Err(Error::Degenerate(
            "silhouette needs at least two non-empty clusters".into(),
        ));
    }

    let per_point = par::map_slice(&rows, |&i| {
        let own = assignments[i];
        if sizes[own] <= 1 {
            return 0.0;
        }
        let mut sums = vec![0.0; k];
        let xi = features.row(i);
        for &j in &rows {
            if j != i {
                sums[assignments[j]] += dist(xi, features.row(j));
            }
        }
        let a = sums[own] / (sizes[own] - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != own && sizes[c] > 0)
            .map(|c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let denom = a.max(b);
        if denom > 0.0 {
            (b - a) / denom
        } else {
            0.0
        }
    });
    Ok(per_point.iter().sum::<f64>() / rows.len() as f64)
}

/// Fits KMeans for every `k` in `ks` and scores each partition.
pub fn silhouette_sweep(
    features: &Array2<f64>,
    ks: &[usize],
    base: &KMeansParams,
    sample_cap: usize,
) -> Result<Vec<(usize, f64)>> {
    let n = features.nrows();
    if n == 0 {
        return Err(Error::Empty("features"));
    }
    let first = features.row(0);
    if features.rows().into_iter().all(|r| r == first) {
        return Err(Error::Degenerate(
            "all rows are identical; no cluster structure".into(),
        ));
    }
    if let Some(&kmax) = ks.iter().max() {
        if n < kmax {
            return Err(Error::TooFewSamples {
                needed: kmax,
                actual: n,
            });
        }
    }
    ks.iter()
        .map(|&k| {
            let params = KMeansParams { k, ..*base };
            let model = kmeans_fit(features, &params)?;
            let assign = kmeans_assign(&model, features)?;
            Ok((k, silhouette(features, &assign, sample_cap, base.seed)?))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Precision,
    Recall,
    F1,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Precision, Metric::Recall, Metric::F1];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Precision => "precision",
            Metric::Recall => "recall",
            Metric::F1 => "f1",
        }
    }
}

/// Best-temporal minus best-structural for one metric.
#[derive(Debug, Clone, PartialEq)]
pub struct GapEntry {
    pub metric: Metric,
    pub delta: f64,
    pub best_temporal: String,
    pub temporal_value: f64,
    pub best_structural: String,
    pub structural_value: f64,
}

/// Per-metric paradigm gap; negative deltas mean the structural side is better.
#[derive(Debug, Clone, PartialEq)]
pub struct ParadigmGap {
    pub precision: GapEntry,
    pub recall: GapEntry,
    pub f1: GapEntry,
}

impl ParadigmGap {
    pub fn delta_precision(&self) -> f64 {
        self.precision.delta
    }

    pub fn delta_recall(&self) -> f64 {
        self.recall.delta
    }

    pub fn delta_f1(&self) -> f64 {
        self.f1.delta
    }

    pub fn entries(&self) -> [&GapEntry; 3] {
        [&self.precision, &self.recall, &self.f1]
    }
}

fn best(results: &[EvalMetrics], metric: Metric) -> (String, f64) {
    let mut top = &results[0];
    for r in &results[1..] {
        if r.get(metric) > top.get(metric) {
            top = r;
        }
    }
    (top.method.clone(), top.get(metric))
}

/// Computes `max_t m_t - max_s m_s` independently for precision, recall and F1.
pub fn paradigm_gap(temporal: &[EvalMetrics], structural: &[EvalMetrics]) -> Result<ParadigmGap> {
    if temporal.is_empty() {
        return Err(Error::Empty("temporal results"));
    }
    if structural.is_empty() {
        return Err(Error::Empty("structural results"));
    }
    let entry = |metric| {
        let (tm, tv) = best(temporal, metric);
        let (sm, sv) = best(structural, metric);
        GapEntry {
            metric,
            delta: tv - sv,
            best_temporal: tm,
            temporal_value: tv,
            best_structural: sm,
            structural_value: sv,
        }
    };
    Ok(ParadigmGap {
        precision: entry(Metric::Precision),
        recall: entry(Metric::Recall),
        f1: entry(Metric::F1),
    })
}
