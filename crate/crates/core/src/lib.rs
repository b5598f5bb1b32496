//! Paradigm probing and unsupervised DDoS detection for network-flow datasets.
//!
//! The crate decides, before any detector is trained, whether a dataset is
//! better described by temporal features (rolling statistics along capture
//! order) or structural features (a PCA projection of each sample), then
//! builds both feature spaces, runs Isolation Forest, One-Class SVM and
//! KMeans, and reports precision/recall/F1 along with the cross-paradigm gap.
//!
//! Modules follow the pipeline order:
//!
//! * [`ingest`] loads CSV or raw-float inputs, cleans non-finite values and
//!   z-score standardizes columns.
//! * [`probes`] computes the lag-1 autocorrelation and PCA variance probes
//!   and routes to a [`probes::Paradigm`].
//! * [`features`] builds the 108-column temporal space and the PCA space.
//! * [`detect`] holds the three detectors.
//! * [`eval`] computes detection metrics, silhouette scores and the gap.
//! * [`synth`] generates seeded datasets with known structure.
//! * [`pipeline`] wires everything into the `probe`/`run`/`synth` commands.
//!
//! Data-parallel inner loops use rayon when the `parallel` feature is on
//! (the default). Every parallel path produces the same bits as the
//! sequential fallback.

// `!(x > 0.0)` style checks are used on purpose so NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod detect;
pub mod error;
pub mod eval;
pub mod features;
pub mod ingest;
pub mod par;
pub mod pipeline;
pub mod probes;
pub mod synth;

pub use error::{Error, Result};
pub use ingest::LabeledDataset;
