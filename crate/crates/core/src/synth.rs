//! Seeded synthetic datasets with known temporal and spectral structure.

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::LabeledDataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthKind {
    Ar1,
    LowRank,
    TwoClusters,
    WhiteNoise,
}

impl std::str::FromStr for SynthKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "ar1" => Ok(SynthKind::Ar1),
            "low_rank" | "lowrank" => Ok(SynthKind::LowRank),
            "two_clusters" | "clusters" => Ok(SynthKind::TwoClusters),
            "white_noise" | "white" => Ok(SynthKind::WhiteNoise),
            other => Err(Error::param(format!("unknown synthetic kind `{other}`"))),
        }
    }
}

/// Loading strengths of the low-rank generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strengths {
    /// Component `j` scaled by `1 / (j + 1)`.
    #[default]
    Descending,
    Equal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub kind: SynthKind,
    pub n: usize,
    pub p: usize,
    #[serde(default)]
    pub phi: f64,
    #[serde(default = "default_rank")]
    pub rank: usize,
    #[serde(default)]
    pub noise_std: f64,
    #[serde(default)]
    pub strengths: Strengths,
    #[serde(default)]
    pub separation: f64,
    #[serde(default)]
    pub attack_ratio: f64,
    pub seed: u64,
}

fn default_rank() -> usize {
    1
}

impl SynthSpec {
    pub fn new(kind: SynthKind, n: usize, p: usize, seed: u64) -> Self {
        Self {
            kind,
            n,
            p,
            phi: 0.0,
            rank: 1,
            noise_std: 0.0,
            strengths: Strengths::Descending,
            separation: 0.0,
            attack_ratio: 0.0,
            seed,
        }
    }
}

/// A generated dataset, plus the row shuffle when one was applied.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthDataset {
    pub dataset: LabeledDataset,
    /// `permutation[i]` is the pre-shuffle index of output row `i`.
    pub permutation: Option<Vec<usize>>,
}

pub fn generate(spec: &SynthSpec) -> Result<SynthDataset> {
    match spec.kind {
        SynthKind::Ar1 => gen_ar1(spec.n, spec.p, spec.phi, spec.seed).map(unshuffled),
        SynthKind::WhiteNoise => gen_ar1(spec.n, spec.p, 0.0, spec.seed).map(unshuffled),
        SynthKind::LowRank => gen_lowrank(
            spec.n,
            spec.p,
            spec.rank,
            spec.noise_std,
            spec.strengths,
            spec.seed,
        )
        .map(unshuffled),
        SynthKind::TwoClusters => gen_two_clusters(
            spec.n,
            spec.p,
            spec.separation,
            spec.attack_ratio,
            spec.seed,
        ),
    }
}

fn unshuffled(dataset: LabeledDataset) -> SynthDataset {
    SynthDataset {
        dataset,
        permutation: None,
    }
}

fn check_size(n: usize, p: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::param("n must be positive"));
    }
    if p == 0 {
        return Err(Error::param("p must be positive"));
    }
    Ok(())
}

fn names(p: usize) -> Vec<String> {
    (0..p).map(|j| format!("x{j}")).collect()
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Independent stationary AR(1) columns `x_t = phi x_{t-1} + e_t`, `e_t ~ N(0, 1)`.
pub fn gen_ar1(n: usize, p: usize, phi: f64, seed: u64) -> Result<LabeledDataset> {
    check_size(n, p)?;
    if !(phi.abs() < 1.0) {
        return Err(Error::param(format!("|phi| = {} must be < 1", phi.abs())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Array2::zeros((n, p));
    let stationary_sd = 1.0 / (1.0 - phi * phi).sqrt();
    for j in 0..p {
        x[[0, j]] = normal(&mut rng) * stationary_sd;
    }
    for t in 1..n {
        for j in 0..p {
            x[[t, j]] = phi * x[[t - 1, j]] + normal(&mut rng);
        }
    }
    LabeledDataset::new(format!("ar1_phi{phi}"), x, vec![0; n], names(p))
}

/// Gram-Schmidt on the columns of a `p x r` Gaussian draw.
fn orthonormal_columns(p: usize, r: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let mut q = Array2::<f64>::zeros((p, r));
    let mut c = 0;
    while c < r {
        let mut v: Array1<f64> = (0..p).map(|_| normal(rng)).collect();
        for prev in 0..c {
            let qp = q.column(prev);
            let proj = qp.dot(&v);
            v.scaled_add(-proj, &qp);
        }
        let norm = v.dot(&v).sqrt();
        if norm > 1e-8 {
            q.column_mut(c).assign(&(v / norm));
            c += 1;
        }
    }
    q
}

/// `X = F L^T + noise`, with `F` i.i.d. Gaussian factors and `L` orthonormal loadings.
pub fn gen_lowrank(
    n: usize,
    p: usize,
    r: usize,
    noise_std: f64,
    strengths: Strengths,
    seed: u64,
) -> Result<LabeledDataset> {
    check_size(n, p)?;
    if r == 0 || r > n.min(p) {
        return Err(Error::param(format!("rank {r} outside 1..={}", n.min(p))));
    }
    if !(noise_std >= 0.0) {
        return Err(Error::param("noise_std must be >= 0"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut loadings = orthonormal_columns(p, r, &mut rng);
    for j in 0..r {
        let s = match strengths {
            Strengths::Descending => 1.0 / (j + 1) as f64,
            Strengths::Equal => 1.0,
        };
        loadings.column_mut(j).mapv_inplace(|v| v * s);
    }
    let factors = Array2::from_shape_fn((n, r), |_| normal(&mut rng));
    let mut x = factors.dot(&loadings.t());
    if noise_std > 0.0 {
        x.mapv_inplace(|v| v + noise_std * normal(&mut rng));
    }
    LabeledDataset::new(format!("lowrank_r{r}"), x, vec![0; n], names(p))
}

/// Two isotropic unit-variance Gaussian clusters, rows shuffled.
///
/// Benign rows sit at the origin and `round(attack_ratio * n)` attack rows at
/// distance `separation` along a random unit direction.
pub fn gen_two_clusters(
    n: usize,
    p: usize,
    separation: f64,
    attack_ratio: f64,
    seed: u64,
) -> Result<SynthDataset> {
    check_size(n, p)?;
    if !(separation >= 0.0) {
        return Err(Error::param("separation must be >= 0"));
    }
    if !(attack_ratio > 0.0 && attack_ratio < 1.0) {
        return Err(Error::param("attack_ratio must be in (0, 1)"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let direction = orthonormal_columns(p, 1, &mut rng).column(0).to_owned();
    let n_attack = (attack_ratio * n as f64).round() as usize;
    let n_benign = n - n_attack;

    let mut permutation: Vec<usize> = (0..n).collect();
    permutation.shuffle(&mut rng);

    let mut x = Array2::zeros((n, p));
    let mut labels = vec![0u8; n];
    for (row, &orig) in permutation.iter().enumerate() {
        let attack = orig >= n_benign;
        labels[row] = u8::from(attack);
        for j in 0..p {
            let shift = if attack {
                separation * direction[j]
            } else {
                0.0
            };
            x[[row, j]] = normal(&mut rng) + shift;
        }
    }
    let dataset =
        LabeledDataset::new(format!("two_clusters_sep{separation}"), x, labels, names(p))?;
    Ok(SynthDataset {
        dataset,
        permutation: Some(permutation),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::probes::{acf, fit_pca};

    #[test]
    fn ar1_columns_follow_phi() {
        let ds = gen_ar1(10_000, 3, 0.9, 1).unwrap();
        for j in 0..3 {
            let col = ds.matrix.column(j).to_vec();
            let r1 = acf(&col, 1).unwrap()[1];
            assert!((0.85..=0.95).contains(&r1), "{r1}");
        }
        assert!(ds.labels.iter().all(|&l| l == 0));
    }

    #[test]
    fn generators_are_deterministic() {
        assert_eq!(
            gen_ar1(100, 4, 0.5, 7).unwrap(),
            gen_ar1(100, 4, 0.5, 7).unwrap()
        );
        assert_eq!(
            gen_lowrank(50, 6, 2, 0.1, Strengths::Descending, 3).unwrap(),
            gen_lowrank(50, 6, 2, 0.1, Strengths::Descending, 3).unwrap()
        );
        assert_eq!(
            gen_two_clusters(80, 3, 5.0, 0.25, 2).unwrap(),
            gen_two_clusters(80, 3, 5.0, 0.25, 2).unwrap()
        );
    }

    #[test]
    fn parameter_checks() {
        assert!(gen_ar1(10, 2, 1.0, 0).is_err());
        assert!(gen_ar1(0, 2, 0.5, 0).is_err());
        assert!(gen_lowrank(10, 5, 6, 0.0, Strengths::Equal, 0).is_err());
        assert!(gen_lowrank(10, 5, 2, -1.0, Strengths::Equal, 0).is_err());
        assert!(gen_two_clusters(10, 2, -1.0, 0.5, 0).is_err());
        assert!(gen_two_clusters(10, 2, 1.0, 1.0, 0).is_err());
    }

    #[test]
    fn exact_rank_one() {
        let ds = gen_lowrank(200, 8, 1, 0.0, Strengths::Descending, 4).unwrap();
        let model = fit_pca(&ds.matrix, 3).unwrap();
        assert!((model.explained_variance_ratio[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn low_rank_is_compressible() {
        let ds = gen_lowrank(2000, 50, 2, 0.01, Strengths::Descending, 5).unwrap();
        let model = fit_pca(&ds.matrix, 5).unwrap();
        assert!(model.explained_variance_ratio[..2].iter().sum::<f64>() >= 0.99);
    }

    #[test]
    fn equal_full_rank_is_diffuse() {
        let ds = gen_lowrank(5000, 40, 40, 0.0, Strengths::Equal, 6).unwrap();
        let model = fit_pca(&ds.matrix, 5).unwrap();
        let cum: f64 = model.explained_variance_ratio.iter().sum();
        assert!((cum - 5.0 / 40.0).abs() < 0.03, "{cum}");
    }

    #[test]
    fn shuffle_keeps_labels_aligned() {
        let s = gen_two_clusters(200, 2, 10.0, 0.3, 8).unwrap();
        let perm = s.permutation.unwrap();
        let n_benign = 200 - 60;
        for (row, &orig) in perm.iter().enumerate() {
            assert_eq!(s.dataset.labels[row], u8::from(orig >= n_benign));
        }
        let mut sorted = perm.clone();
        sorted.sort();
        assert_eq!(sorted, (0..200).collect::<Vec<_>>());
        assert_eq!(s.dataset.labels.iter().filter(|&&l| l == 1).count(), 60);
    }
}
