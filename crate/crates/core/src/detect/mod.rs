//! Isolation Forest, One-Class SVM and KMeans detectors.
//!
//! All three are deterministic for a fixed seed, including under the
//! `parallel` feature: per-tree and per-restart seeds are derived from the
//! base seed and results are assembled in index order.

mod contamination;
mod iforest;
mod kmeans;
mod ocsvm;

pub use contamination::{compute_contamination, flagged_count, ContaminationEstimate};
pub use iforest::{
    average_path_length, if_detect, if_fit, if_predict, if_score, IsolationForestModel,
    IsolationForestParams, IsolationTree, Node,
};
pub use kmeans::{
    kmeans_assign, kmeans_detect, kmeans_fit, majority_label_map, KMeansDetection, KMeansModel,
    KMeansParams,
};
pub use ocsvm::{
    ocsvm_fit, ocsvm_predict, Gamma, OcsvmModel, OcsvmParams, DEFAULT_CHUNK_SIZE,
    DEFAULT_TRAIN_SIZE, MAX_NU,
};

/// Per-sample output of a detector.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionResult {
    /// 1 = anomaly/attack.
    pub predictions: Vec<u8>,
    /// Higher is more anomalous.
    pub scores: Vec<f64>,
    pub fit_time: f64,
    pub predict_time: f64,
}

/// SplitMix64 step, used to derive independent per-task seeds from one base seed.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(stream.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::derive_seed;

    #[test]
    fn derived_seeds_differ() {
        let a: Vec<u64> = (0..64).map(|s| derive_seed(7, s)).collect();
        let mut b = a.clone();
        b.sort();
        b.dedup();
        assert_eq!(b.len(), 64);
        assert_ne!(derive_seed(1, 0), derive_seed(2, 0));
    }
}
