//! Run configuration and its flat key-value file form.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::detect::{DEFAULT_CHUNK_SIZE, DEFAULT_TRAIN_SIZE};
use crate::error::{Error, Result};
use crate::eval::DEFAULT_SILHOUETTE_CAP;
use crate::features::{DEFAULT_STRUCTURAL_DIMS, DEFAULT_WINDOWS};
use crate::probes::{
    Aggregation, Paradigm, DEFAULT_ACF_THRESHOLD, DEFAULT_COMPONENT_BUDGET, DEFAULT_MAX_LAG,
    DEFAULT_VARIANCE_TARGET,
};

/// Environment variable naming the default output directory.
pub const OUTPUT_DIR_ENV: &str = "PARAPROBE_OUTPUT_DIR";

#[derive(Debug, Clone, PartialEq)]
pub enum InputFormat {
    Csv,
    /// Raw little-endian f32 with a key-value sidecar.
    Binary {
        sidecar: PathBuf,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct InputSpec {
    pub path: PathBuf,
    pub format: InputFormat,
}

impl InputSpec {
    pub fn csv(path: impl Into<PathBuf>) -> Self {
        Self {
            path: path.into(),
            format: InputFormat::Csv,
        }
    }

    /// CSV unless the path ends in `.bin`/`.f32`, in which case the sidecar is
    /// `<path>.toml` unless given.
    pub fn infer(path: impl Into<PathBuf>, sidecar: Option<PathBuf>) -> Self {
        let path = path.into();
        let is_raw = matches!(
            path.extension().and_then(|e| e.to_str()),
            Some("bin" | "f32" | "raw")
        );
        match (sidecar, is_raw) {
            (Some(sidecar), _) => Self {
                path,
                format: InputFormat::Binary { sidecar },
            },
            (None, true) => {
                let mut s = path.clone().into_os_string();
                s.push(".toml");
                Self {
                    path,
                    format: InputFormat::Binary { sidecar: s.into() },
                }
            }
            (None, false) => Self::csv(path),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub inputs: Vec<InputSpec>,
    pub label_column: String,
    pub positive_values: Vec<String>,

    pub acf_threshold: f64,
    pub max_lag: usize,
    pub aggregation: Aggregation,
    pub variance_target: f64,
    pub component_budget: usize,
    pub force_both_probes: bool,
    pub force_paradigm: Option<Paradigm>,

    pub windows: Vec<usize>,
    pub structural_dims: usize,

    pub if_trees: usize,
    pub if_subsample: usize,
    pub train_size: usize,
    pub chunk_size: usize,
    pub ocsvm_tol: f64,
    pub ocsvm_max_iter: usize,
    pub k: usize,
    pub kmeans_n_init: usize,
    pub kmeans_max_iter: usize,
    pub kmeans_tol: f64,
    pub sweep_k: Vec<usize>,
    pub silhouette_cap: usize,

    pub seed: u64,
    pub output_dir: PathBuf,
    /// When false the report's time column is left empty so bundles are byte-stable.
    pub record_timings: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            inputs: Vec::new(),
            label_column: "label".into(),
            positive_values: vec!["1".into(), "attack".into()],
            acf_threshold: DEFAULT_ACF_THRESHOLD,
            max_lag: DEFAULT_MAX_LAG,
            aggregation: Aggregation::L2Norm,
            variance_target: DEFAULT_VARIANCE_TARGET,
            component_budget: DEFAULT_COMPONENT_BUDGET,
            force_both_probes: false,
            force_paradigm: None,
            windows: DEFAULT_WINDOWS.to_vec(),
            structural_dims: DEFAULT_STRUCTURAL_DIMS,
            if_trees: 100,
            if_subsample: 256,
            train_size: DEFAULT_TRAIN_SIZE,
            chunk_size: DEFAULT_CHUNK_SIZE,
            ocsvm_tol: 1e-3,
            ocsvm_max_iter: 10_000_000,
            k: 2,
            kmeans_n_init: 10,
            kmeans_max_iter: 300,
            kmeans_tol: 1e-4,
            sweep_k: (2..=10).collect(),
            silhouette_cap: DEFAULT_SILHOUETTE_CAP,
            seed: 0,
            output_dir: std::env::var_os(OUTPUT_DIR_ENV)
                .map(PathBuf::from)
                .unwrap_or_else(|| PathBuf::from("out")),
            record_timings: true,
        }
    }
}

/// Every key of the config file; absent keys keep their current value.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    inputs: Option<Vec<PathBuf>>,
    sidecar: Option<PathBuf>,
    label_column: Option<String>,
    positive_values: Option<Vec<String>>,
    acf_threshold: Option<f64>,
    max_lag: Option<usize>,
    aggregation: Option<String>,
    variance_target: Option<f64>,
    component_budget: Option<usize>,
    force_both_probes: Option<bool>,
    force_paradigm: Option<String>,
    windows: Option<Vec<usize>>,
    structural_dims: Option<usize>,
    if_trees: Option<usize>,
    if_subsample: Option<usize>,
    train_size: Option<usize>,
    chunk_size: Option<usize>,
    ocsvm_tol: Option<f64>,
    ocsvm_max_iter: Option<usize>,
    k: Option<usize>,
    kmeans_n_init: Option<usize>,
    kmeans_max_iter: Option<usize>,
    kmeans_tol: Option<f64>,
    sweep_k: Option<Vec<usize>>,
    silhouette_cap: Option<usize>,
    seed: Option<u64>,
    output_dir: Option<PathBuf>,
    record_timings: Option<bool>,
}

macro_rules! overlay {
    ($cfg:ident, $file:ident; $($field:ident),* $(,)?) => {
        $( if let Some(v) = $file.$field { $cfg.$field = v; } )*
    };
}

impl RunConfig {
    /// Applies a flat `key = value` document on top of `self`.
    ///
    /// Relative input paths resolve against `base_dir`.
    pub fn merge_kv(&mut self, text: &str, base_dir: &Path) -> Result<()> {
        let file: ConfigFile = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let resolve = |p: PathBuf| if p.is_relative() { base_dir.join(p) } else { p };
        if let Some(paths) = file.inputs {
            let sidecar = file.sidecar.map(resolve);
            self.inputs = paths
                .into_iter()
                .map(|p| InputSpec::infer(resolve(p), sidecar.clone()))
                .collect();
        }
        if let Some(a) = file.aggregation {
            self.aggregation = a.parse()?;
        }
        if let Some(p) = file.force_paradigm {
            self.force_paradigm = Some(p.parse()?);
        }
        overlay!(self, file;
            label_column, positive_values, acf_threshold, max_lag, variance_target,
            component_budget, force_both_probes, windows, structural_dims, if_trees,
            if_subsample, train_size, chunk_size, ocsvm_tol, ocsvm_max_iter, k,
            kmeans_n_init, kmeans_max_iter, kmeans_tol, sweep_k, silhouette_cap, seed,
            output_dir, record_timings,
        );
        Ok(())
    }

    pub fn load_file(&mut self, path: &Path) -> Result<()> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        self.merge_kv(&text, base)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(-1.0..=1.0).contains(&self.acf_threshold) {
            return bad(format!(
                "acf_threshold {} outside [-1, 1]",
                self.acf_threshold
            ));
        }
        if !(self.variance_target > 0.0 && self.variance_target <= 1.0) {
            return bad(format!(
                "variance_target {} outside (0, 1]",
                self.variance_target
            ));
        }
        if self.component_budget == 0 {
            return bad("component_budget must be positive".into());
        }
        if self.max_lag == 0 {
            return bad("max_lag must be positive".into());
        }
        if self.windows.is_empty() || self.windows.iter().any(|&w| w < 2) {
            return bad("windows must be non-empty with every size >= 2".into());
        }
        if self.structural_dims == 0 {
            return bad("structural_dims must be positive".into());
        }
        if self.if_trees == 0 || self.if_subsample == 0 {
            return bad("isolation forest sizes must be positive".into());
        }
        if self.train_size == 0 || self.chunk_size == 0 {
            return bad("train_size and chunk_size must be positive".into());
        }
        if !(self.ocsvm_tol > 0.0) || !(self.kmeans_tol > 0.0) {
            return bad("tolerances must be positive".into());
        }
        if self.k < 2 {
            return bad("k must be >= 2".into());
        }
        if self.kmeans_n_init == 0 {
            return bad("kmeans_n_init must be positive".into());
        }
        if self.sweep_k.iter().any(|&k| k < 2) {
            return bad("sweep_k entries must be >= 2".into());
        }
        if self.positive_values.is_empty() {
            return bad("positive_values is empty".into());
        }
        Ok(())
    }
}
