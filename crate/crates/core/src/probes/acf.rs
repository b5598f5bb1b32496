use ndarray::Array2;

use crate::error::{Error, Result};
use crate::par;

/// Default threshold above which lag-1 autocorrelation counts as "high".
pub const DEFAULT_ACF_THRESHOLD: f64 = 0.3;
/// Number of lags kept for the reported ACF curve.
pub const DEFAULT_MAX_LAG: usize = 50;

/// How a sample's feature vector is collapsed to one scalar.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Aggregation {
    /// Euclidean norm of the standardized row.
    #[default]
    L2Norm,
    /// Plain sum of the standardized row.
    Sum,
}

impl Aggregation {
    pub fn as_str(self) -> &'static str {
        match self {
            Aggregation::L2Norm => "l2",
            Aggregation::Sum => "sum",
        }
    }
}

impl std::str::FromStr for Aggregation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "l2" | "norm" | "l2norm" => Ok(Aggregation::L2Norm),
            "sum" => Ok(Aggregation::Sum),
            other => Err(Error::param(format!("unknown aggregation `{other}`"))),
        }
    }
}

/// Collapses each row of a standardized matrix to a scalar, preserving row order.
pub fn aggregate_signal(matrix: &Array2<f64>, how: Aggregation) -> Result<Vec<f64>> {
    if matrix.nrows() == 0 || matrix.ncols() == 0 {
        return Err(Error::Empty("matrix"));
    }
    Ok(par::map_range(matrix.nrows(), |i| {
        let row = matrix.row(i);
        match how {
            Aggregation::L2Norm => row.iter().map(|v| v * v).sum::<f64>().sqrt(),
            Aggregation::Sum => row.iter().sum(),
        }
    }))
}

/// Biased sample autocorrelation for lags `0..=max_lag`.
///
/// `rho(k) = sum_{i<n-k} (x_i - m)(x_{i+k} - m) / sum_i (x_i - m)^2`.
pub fn acf(series: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    let n = series.len();
    if n <= max_lag {
        return Err(Error::TooFewSamples {
            needed: max_lag + 1,
            actual: n,
        });
    }
    if series.iter().all(|&v| v == series[0]) {
        return Err(Error::ConstantSeries);
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = series.iter().map(|&v| v - mean).collect();
    let denom: f64 = centered.iter().map(|v| v * v).sum();
    if denom <= 0.0 || !denom.is_finite() {
        return Err(Error::ConstantSeries);
    }
    let mut out = par::map_range(max_lag + 1, |k| {
        centered[..n - k]
            .iter()
            .zip(&centered[k..])
            .map(|(a, b)| a * b)
            .sum::<f64>()
            / denom
    });
    out[0] = 1.0;
    Ok(out)
}

/// Lag-1 autocorrelation check with its full curve kept for reporting.
#[derive(Debug, Clone, PartialEq)]
pub struct AcfProbeResult {
    pub acf: Vec<f64>,
    pub lag1: f64,
    pub threshold: f64,
    pub verdict: bool,
}

impl AcfProbeResult {
    /// Builds a result from a precomputed curve; `curve[1]` is the lag-1 value.
    pub fn from_curve(acf: Vec<f64>, threshold: f64) -> Self {
        let lag1 = acf.get(1).copied().unwrap_or(0.0);
        Self {
            verdict: lag1 >= threshold,
            acf,
            lag1,
            threshold,
        }
    }
}

pub fn acf_probe(series: &[f64], threshold: f64, max_lag: usize) -> Result<AcfProbeResult> {
    let curve = acf(series, max_lag.max(1))?;
    Ok(AcfProbeResult::from_curve(curve, threshold))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn aggregate_hand_cases() {
        let m = array![[3.0, 4.0], [0.0, 0.0]];
        assert_eq!(
            aggregate_signal(&m, Aggregation::L2Norm).unwrap(),
            vec![5.0, 0.0]
        );
        let single = array![[-2.0], [3.0]];
        assert_eq!(
            aggregate_signal(&single, Aggregation::L2Norm).unwrap(),
            vec![2.0, 3.0]
        );
        assert_eq!(
            aggregate_signal(&m, Aggregation::Sum).unwrap(),
            vec![7.0, 0.0]
        );
        assert!(aggregate_signal(&Array2::zeros((0, 3)), Aggregation::L2Norm).is_err());
    }

    #[test]
    fn aggregate_norm_mean_tracks_sqrt_p() {
        // chi distribution mean for p = 64 is sqrt(2) Gamma(32.5)/Gamma(32) ~ 7.969
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = Array2::from_shape_fn((4000, 64), |_| StandardNormal.sample(&mut rng));
        let s = aggregate_signal(&m, Aggregation::L2Norm).unwrap();
        let mean = s.iter().sum::<f64>() / s.len() as f64;
        assert!((mean - 7.969).abs() < 0.05, "mean {mean}");
        assert!(s.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn alternating_series_is_anticorrelated() {
        let s: Vec<f64> = (0..1000)
            .map(|i| if i % 2 == 0 { 1.0 } else { -1.0 })
            .collect();
        let r = acf(&s, 2).unwrap();
        assert!((r[1] + 1.0).abs() < 0.01);
        assert_eq!(r[0], 1.0);
    }

    #[test]
    fn white_noise_lag1_is_small() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s: Vec<f64> = (0..10_000)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        assert!(acf(&s, 1).unwrap()[1].abs() < 0.05);
    }

    #[test]
    fn constant_and_short_series_error() {
        assert!(matches!(acf(&[2.0; 10], 3), Err(Error::ConstantSeries)));
        assert!(matches!(
            acf(&[1.0, 2.0], 2),
            Err(Error::TooFewSamples { .. })
        ));
    }

    #[test]
    fn probe_boundary_is_inclusive() {
        let r = AcfProbeResult::from_curve(vec![1.0, 0.3], 0.3);
        assert!(r.verdict);
        let r = AcfProbeResult::from_curve(vec![1.0, 0.9], 0.3);
        assert!(r.verdict);
        let r = AcfProbeResult::from_curve(vec![1.0, 0.02], 0.3);
        assert!(!r.verdict);
    }
}
