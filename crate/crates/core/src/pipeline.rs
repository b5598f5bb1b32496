//! End-to-end commands: probe, run, features, eval and synth.
//!
//! `run` executes the six steps in order: load, clean and standardize, probe,
//! build both feature spaces, run the detector grid, then evaluate. Output is
//! assembled in memory and written only once every stage has succeeded, so a
//! failed run leaves no partial bundle behind.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::Array2;
use serde::Serialize;

use crate::config::{InputFormat, InputSpec, RunConfig};
use crate::detect::{
    self, compute_contamination, derive_seed, kmeans_detect, kmeans_fit, ocsvm_fit, ocsvm_predict,
    ContaminationEstimate, DetectionResult, Gamma, IsolationForestParams, KMeansParams,
    OcsvmParams, MAX_NU,
};
use crate::error::{Error, Result, StageContext};
use crate::eval::{
    confusion_metrics, paradigm_gap, silhouette, silhouette_sweep, EvalMetrics, ParadigmGap,
};
use crate::features::{
    clamp_structural_dims, structural_features, temporal_features, FeatureMatrix, FeatureSpace,
    Provenance, TEMPORAL_PCS,
};
use crate::ingest::{self, format_f64, LabeledDataset};
use crate::probes::{
    acf_probe, aggregate_signal, decide_paradigm, fit_pca, max_components, project, variance_probe,
    Paradigm, ParadigmDecision, PcaModel, VarianceProbeResult,
};
use crate::synth::{self, SynthDataset, SynthSpec};

pub const METHOD_KMEANS_STR: &str = "KMeans-Str.";
pub const METHOD_OCSVM_TEMP: &str = "OCSVM-Temp.";
pub const METHOD_IF_TEMP: &str = "IF-Temp.";
pub const METHOD_IF_STR: &str = "IF-Str.";

/// Label written for the hybrid branch in reports.
pub const HYBRID_LABEL: &str = "hybrid (unvalidated fallback)";

pub const REPORT_FILE: &str = "report.csv";
pub const GAP_FILE: &str = "gap.csv";
pub const DECISION_FILE: &str = "decision.txt";
pub const PLOTS_DIR: &str = "plots";

/// Loads one input and replaces non-finite entries with zero.
pub fn load_input(input: &InputSpec, cfg: &RunConfig) -> Result<LabeledDataset> {
    let ds = match &input.format {
        InputFormat::Csv => {
            let positives: HashSet<String> = cfg.positive_values.iter().cloned().collect();
            ingest::load_csv(&input.path, &cfg.label_column, &positives)?
        }
        InputFormat::Binary { sidecar } => ingest::load_binary(&input.path, sidecar)?,
    };
    Ok(ingest::clean(ds))
}

/// Probe evidence for one dataset.
#[derive(Debug, Clone)]
pub struct ProbeOutcome {
    pub dataset: String,
    pub n_samples: usize,
    pub n_features: usize,
    pub decision: ParadigmDecision,
    pub forced: Option<Paradigm>,
    /// Variance probe result whenever it was computed, including forced evaluation.
    pub variance: Option<VarianceProbeResult>,
    /// Cumulative explained variance over all available components.
    pub variance_curve: Option<Vec<f64>>,
    pub pca: Option<PcaModel>,
}

impl ProbeOutcome {
    /// The paradigm the run follows: the override if any, else the probe decision.
    pub fn effective(&self) -> Paradigm {
        self.forced.unwrap_or(self.decision.branch)
    }

    pub fn effective_label(&self) -> &'static str {
        match self.effective() {
            Paradigm::Hybrid => HYBRID_LABEL,
            p => p.as_str(),
        }
    }
}

fn pca_components(cfg: &RunConfig, n: usize, p: usize) -> usize {
    cfg.structural_dims
        .max(cfg.component_budget)
        .max(TEMPORAL_PCS)
        .min(max_components(n, p))
}

/// Runs both probes on a standardized matrix and routes.
///
/// The PCA fit is skipped on the temporal branch unless `need_pca` or
/// `force_both_probes` asks for it.
pub fn run_probes(
    name: &str,
    z: &Array2<f64>,
    cfg: &RunConfig,
    need_pca: bool,
) -> Result<ProbeOutcome> {
    let (n, p) = z.dim();
    let series = aggregate_signal(z, cfg.aggregation)?;
    let max_lag = cfg.max_lag.min(n.saturating_sub(1)).max(1);
    let acf_result = acf_probe(&series, cfg.acf_threshold, max_lag)?;

    let d = pca_components(cfg, n, p);
    let mut pca = None;
    let decision = decide_paradigm(acf_result, || {
        let model = fit_pca(z, d)?;
        let v = variance_probe(&model, cfg.component_budget, cfg.variance_target);
        pca = Some(model);
        Ok(v)
    })?;
    if pca.is_none() && (need_pca || cfg.force_both_probes) {
        pca = Some(fit_pca(z, d)?);
    }
    let variance = match (&decision.variance_evidence, &pca) {
        (Some(v), _) => Some(v.clone()),
        (None, Some(m)) if cfg.force_both_probes => {
            Some(variance_probe(m, cfg.component_budget, cfg.variance_target))
        }
        _ => None,
    };
    let variance_curve =
        if decision.variance_evidence.is_some() || cfg.force_both_probes || need_pca {
            pca.as_ref().map(PcaModel::cumulative_spectrum)
        } else {
            None
        };
    Ok(ProbeOutcome {
        dataset: name.to_string(),
        n_samples: n,
        n_features: p,
        decision,
        forced: cfg.force_paradigm,
        variance,
        variance_curve,
        pca,
    })
}

fn load_and_standardize(
    input: &InputSpec,
    cfg: &RunConfig,
) -> Result<(LabeledDataset, Array2<f64>)> {
    let ds = load_input(input, cfg).stage("ingest")?;
    let (z, _) = ingest::standardize(&ds.matrix).stage("standardize")?;
    Ok((ds, z))
}

/// Probes every input and writes `decision.txt` plus the probe curves.
pub fn cmd_probe(cfg: &RunConfig) -> Result<Vec<ProbeOutcome>> {
    cfg.validate()?;
    if cfg.inputs.is_empty() {
        return Err(Error::Config("no inputs given".into()));
    }
    let mut outcomes = Vec::new();
    for input in &cfg.inputs {
        let (ds, z) = load_and_standardize(input, cfg)?;
        outcomes.push(run_probes(&ds.name, &z, cfg, false).stage("probes")?);
    }
    let mut bundle = Bundle::default();
    let docs: Vec<DatasetDoc> = outcomes
        .iter()
        .map(|o| DatasetDoc::from_probe(o, cfg))
        .collect();
    bundle.add(DECISION_FILE, render_decision(&docs)?);
    bundle.add(plot_path("acf.csv"), acf_csv(outcomes.iter()));
    bundle.add(
        plot_path("cumulative_variance.csv"),
        variance_csv(outcomes.iter()),
    );
    bundle.write(&cfg.output_dir)?;
    Ok(outcomes)
}

/// Hyperparameters and fitted state of the detector grid, for the report.
#[derive(Debug, Clone, Serialize)]
pub struct ModelSummary {
    pub contamination_raw: f64,
    pub contamination: f64,
    pub structural_components: usize,
    pub structural_requested: usize,
    pub windows: Vec<usize>,
    pub if_trees: usize,
    pub if_subsample: usize,
    pub if_height_limit: usize,
    pub if_threshold_temporal: Option<f64>,
    pub if_threshold_structural: Option<f64>,
    pub ocsvm_nu: f64,
    pub ocsvm_gamma: f64,
    pub ocsvm_rho: f64,
    pub ocsvm_n_train: usize,
    pub ocsvm_n_support: usize,
    pub ocsvm_iterations: usize,
    pub ocsvm_converged: bool,
    pub kmeans_k: usize,
    pub kmeans_inertia: f64,
    pub kmeans_iterations: usize,
    pub kmeans_centroids: Vec<Vec<f64>>,
    pub kmeans_cluster_labels: Vec<u8>,
    pub kmeans_silhouette: Option<f64>,
}

/// Everything produced for one dataset by `run`.
#[derive(Debug, Clone)]
pub struct DatasetRun {
    pub probe: ProbeOutcome,
    pub contamination: ContaminationEstimate,
    /// Table rows sorted by F1 descending, grid order on ties.
    pub rows: Vec<EvalMetrics>,
    pub gap: ParadigmGap,
    pub sweep: Vec<(usize, f64)>,
    pub pca2: Array2<f64>,
    pub labels: Vec<u8>,
    pub models: ModelSummary,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub datasets: Vec<DatasetRun>,
    pub output_dir: PathBuf,
}

impl RunSummary {
    pub fn warnings(&self) -> impl Iterator<Item = &String> {
        self.datasets.iter().flat_map(|d| d.warnings.iter())
    }
}

fn metrics_for(
    method: &str,
    space: FeatureSpace,
    result: &DetectionResult,
    labels: &[u8],
    cfg: &RunConfig,
) -> Result<EvalMetrics> {
    let mut m = confusion_metrics(method, space, &result.predictions, labels)?;
    if cfg.record_timings {
        m.fit_time = result.fit_time;
        m.predict_time = result.predict_time;
    }
    Ok(m)
}

/// Builds both feature spaces for a standardized matrix.
pub fn build_features(
    z: &Array2<f64>,
    pca: &PcaModel,
    cfg: &RunConfig,
) -> Result<(FeatureMatrix, FeatureMatrix)> {
    let (n, p) = z.dim();
    let structural_dims = clamp_structural_dims(cfg.structural_dims, n, p);
    let temporal = temporal_features(z, pca, &cfg.windows)?;
    let mut structural = structural_features(z, pca, structural_dims)?;
    structural.provenance = Provenance::Structural {
        components: structural.n_features(),
        requested: cfg.structural_dims,
    };
    Ok((temporal, structural))
}

/// Runs the full pipeline on one already-loaded dataset.
pub fn run_dataset(ds: &LabeledDataset, cfg: &RunConfig) -> Result<DatasetRun> {
    let (z, _) = ingest::standardize(&ds.matrix).stage("standardize")?;
    let probe = run_probes(&ds.name, &z, cfg, true).stage("probes")?;
    let pca = probe.pca.as_ref().expect("need_pca set");
    let mut warnings = Vec::new();
    if probe.decision.hybrid_flag {
        warnings.push(format!(
            "{}: probes were inconclusive; running the {HYBRID_LABEL}",
            ds.name
        ));
    }
    if let Some(forced) = probe.forced {
        warnings.push(format!(
            "{}: paradigm forced to {forced} (probes chose {})",
            ds.name, probe.decision.branch
        ));
    }

    let (temporal, structural) = build_features(&z, pca, cfg).stage("features")?;
    if let Provenance::Structural {
        components,
        requested,
    } = structural.provenance
    {
        if components < requested {
            warnings.push(format!(
                "{}: structural dimensions clamped from {requested} to {components}",
                ds.name
            ));
        }
    }

    let labels = &ds.labels;
    let contamination = compute_contamination(labels).stage("detect")?;
    let c = contamination.clamped;

    let if_params = |stream| IsolationForestParams {
        n_trees: cfg.if_trees,
        subsample_size: cfg.if_subsample,
        seed: derive_seed(cfg.seed, stream),
    };
    let (if_t_model, if_t) =
        detect::if_detect(&temporal.matrix, &if_params(1), c).stage("isolation_forest")?;
    let (if_s_model, if_s) =
        detect::if_detect(&structural.matrix, &if_params(2), c).stage("isolation_forest")?;

    let nu = c.min(MAX_NU);
    let t0 = Instant::now();
    let oc_model = ocsvm_fit(
        &temporal.matrix,
        cfg.train_size,
        &OcsvmParams {
            nu,
            gamma: Gamma::Scale,
            tol: cfg.ocsvm_tol,
            max_iter: cfg.ocsvm_max_iter,
            ..Default::default()
        },
    )
    .stage("ocsvm")?;
    let oc_fit_time = t0.elapsed().as_secs_f64();
    let mut oc = ocsvm_predict(&oc_model, &temporal.matrix, cfg.chunk_size).stage("ocsvm")?;
    oc.fit_time = oc_fit_time;
    if !oc_model.converged {
        warnings.push(format!(
            "{}: one-class SVM stopped at the iteration cap ({}) before reaching tolerance",
            ds.name, oc_model.iterations
        ));
    }

    let km_params = KMeansParams {
        k: cfg.k,
        n_init: cfg.kmeans_n_init,
        max_iter: cfg.kmeans_max_iter,
        tol: cfg.kmeans_tol,
        seed: derive_seed(cfg.seed, 3),
    };
    let t0 = Instant::now();
    let km_model = kmeans_fit(&structural.matrix, &km_params).stage("kmeans")?;
    let km_fit_time = t0.elapsed().as_secs_f64();
    let mut km = kmeans_detect(&km_model, &structural.matrix, Some(labels)).stage("kmeans")?;
    km.result.fit_time = km_fit_time;

    let km_silhouette = silhouette(
        &structural.matrix,
        &km.assignments,
        cfg.silhouette_cap,
        derive_seed(cfg.seed, 4),
    )
    .ok();

    let mut rows = vec![
        metrics_for(
            METHOD_KMEANS_STR,
            FeatureSpace::Structural,
            &km.result,
            labels,
            cfg,
        ),
        metrics_for(METHOD_OCSVM_TEMP, FeatureSpace::Temporal, &oc, labels, cfg),
        metrics_for(METHOD_IF_TEMP, FeatureSpace::Temporal, &if_t, labels, cfg),
        metrics_for(METHOD_IF_STR, FeatureSpace::Structural, &if_s, labels, cfg),
    ]
    .into_iter()
    .collect::<Result<Vec<_>>>()
    .stage("evaluate")?;
    rows[0].silhouette = km_silhouette;
    rows.sort_by(|a, b| b.f1.partial_cmp(&a.f1).unwrap_or(std::cmp::Ordering::Equal));

    let (t_rows, s_rows): (Vec<EvalMetrics>, Vec<EvalMetrics>) = rows
        .iter()
        .cloned()
        .partition(|r| r.paradigm == FeatureSpace::Temporal);
    let gap = paradigm_gap(&t_rows, &s_rows).stage("evaluate")?;

    let n = structural.matrix.nrows();
    let ks: Vec<usize> = cfg.sweep_k.iter().copied().filter(|&k| k <= n).collect();
    let sweep_params = KMeansParams {
        seed: derive_seed(cfg.seed, 5),
        ..km_params
    };
    let sweep = silhouette_sweep(&structural.matrix, &ks, &sweep_params, cfg.silhouette_cap)
        .stage("silhouette_sweep")?;

    let pca2 = project(pca, &z, pca.n_components().min(2)).stage("evaluate")?;

    let models = ModelSummary {
        contamination_raw: contamination.raw_ratio,
        contamination: c,
        structural_components: structural.n_features(),
        structural_requested: cfg.structural_dims,
        windows: cfg.windows.clone(),
        if_trees: if_t_model.n_trees,
        if_subsample: if_t_model.subsample_size,
        if_height_limit: if_t_model.height_limit,
        if_threshold_temporal: if_t_model.threshold,
        if_threshold_structural: if_s_model.threshold,
        ocsvm_nu: nu,
        ocsvm_gamma: oc_model.gamma,
        ocsvm_rho: oc_model.rho,
        ocsvm_n_train: oc_model.n_train,
        ocsvm_n_support: oc_model.n_support(),
        ocsvm_iterations: oc_model.iterations,
        ocsvm_converged: oc_model.converged,
        kmeans_k: km_model.k,
        kmeans_inertia: km_model.inertia,
        kmeans_iterations: km_model.n_iter,
        kmeans_centroids: km_model
            .centroids
            .rows()
            .into_iter()
            .map(|r| r.to_vec())
            .collect(),
        kmeans_cluster_labels: km.cluster_labels.clone().unwrap_or_default(),
        kmeans_silhouette: km_silhouette,
    };

    Ok(DatasetRun {
        probe,
        contamination,
        rows,
        gap,
        sweep,
        pca2,
        labels: labels.clone(),
        models,
        warnings,
    })
}

/// Runs every input through the pipeline and writes the report bundle.
pub fn cmd_run(cfg: &RunConfig) -> Result<RunSummary> {
    cfg.validate()?;
    if cfg.inputs.is_empty() {
        return Err(Error::Config("no inputs given".into()));
    }
    let mut datasets = Vec::new();
    for input in &cfg.inputs {
        let ds = load_input(input, cfg).stage("ingest")?;
        datasets.push(run_dataset(&ds, cfg)?);
    }
    let bundle = render_run_bundle(&datasets, cfg)?;
    bundle.write(&cfg.output_dir)?;
    Ok(RunSummary {
        datasets,
        output_dir: cfg.output_dir.clone(),
    })
}

/// Writes the temporal and structural feature matrices of every input as CSV.
pub fn cmd_features(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    if cfg.inputs.is_empty() {
        return Err(Error::Config("no inputs given".into()));
    }
    fs::create_dir_all(&cfg.output_dir).map_err(|e| Error::io(&cfg.output_dir, e))?;
    let mut written = Vec::new();
    for input in &cfg.inputs {
        let (ds, z) = load_and_standardize(input, cfg)?;
        let (n, p) = z.dim();
        let pca = fit_pca(&z, pca_components(cfg, n, p)).stage("features")?;
        let (temporal, structural) = build_features(&z, &pca, cfg).stage("features")?;
        for fm in [&temporal, &structural] {
            let path = cfg
                .output_dir
                .join(format!("{}_{}.csv", ds.name, fm.space.as_str()));
            fm.write_csv(&path)?;
            written.push(path);
        }
    }
    Ok(written)
}

/// Precision, recall and F1 for a prediction file against a label file
/// (one 0/1 per line each).
pub fn cmd_eval(
    predictions: &Path,
    labels: &Path,
    method: &str,
    space: FeatureSpace,
) -> Result<EvalMetrics> {
    let p = ingest::read_label_file(predictions)?;
    let l = ingest::read_label_file(labels)?;
    confusion_metrics(method, space, &p, &l)
}

/// Generates a dataset, writes it as CSV with a `label` column, and echoes
/// the spec to `<stem>.synth.toml` (plus `<stem>.permutation.txt` when rows were shuffled).
pub fn cmd_synth(spec: &SynthSpec, out: &Path) -> Result<SynthDataset> {
    let data = synth::generate(spec)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    data.dataset.write_csv(out, "label")?;
    let sidecar = out.with_extension("synth.toml");
    let text = toml::to_string(spec).map_err(|e| Error::Config(e.to_string()))?;
    fs::write(&sidecar, text).map_err(|e| Error::io(&sidecar, e))?;
    if let Some(perm) = &data.permutation {
        let path = out.with_extension("permutation.txt");
        let body: String = perm.iter().map(|i| format!("{i}\n")).collect();
        fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
    }
    Ok(data)
}

// ---------------------------------------------------------------------------
// report rendering

#[derive(Default)]
struct Bundle {
    files: Vec<(PathBuf, String)>,
}

impl Bundle {
    fn add(&mut self, rel: impl Into<PathBuf>, body: String) {
        self.files.push((rel.into(), body));
    }

    fn write(self, dir: &Path) -> Result<()> {
        let mut written: Vec<PathBuf> = Vec::new();
        let result = (|| {
            for (rel, body) in &self.files {
                let path = dir.join(rel);
                if let Some(parent) = path.parent() {
                    fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
                }
                fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
                written.push(path);
            }
            Ok(())
        })();
        if result.is_err() {
            for path in &written {
                let _ = fs::remove_file(path);
            }
        }
        result
    }
}

fn plot_path(name: &str) -> PathBuf {
    Path::new(PLOTS_DIR).join(name)
}

fn fixed(v: f64) -> String {
    format!("{v:.6}")
}

#[derive(Serialize)]
struct DatasetDoc {
    name: String,
    samples: usize,
    features: usize,
    decision: String,
    probe_branch: String,
    decision_source: &'static str,
    hybrid_unvalidated: bool,
    aggregation: &'static str,
    acf_threshold: f64,
    lag1_acf: f64,
    acf_curve: Vec<f64>,
    variance_target: f64,
    component_budget: usize,
    variance_probe_evaluated: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    cumulative_variance_at_budget: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    variance_verdict: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    cumulative_variance_curve: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    warnings: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    models: Option<ModelSummary>,
}

impl DatasetDoc {
    fn from_probe(o: &ProbeOutcome, cfg: &RunConfig) -> Self {
        let acf = &o.decision.acf_evidence;
        Self {
            name: o.dataset.clone(),
            samples: o.n_samples,
            features: o.n_features,
            decision: o.effective_label().to_string(),
            probe_branch: o.decision.branch.as_str().to_string(),
            decision_source: if o.forced.is_some() {
                "forced"
            } else {
                "probes"
            },
            hybrid_unvalidated: o.effective() == Paradigm::Hybrid,
            aggregation: cfg.aggregation.as_str(),
            acf_threshold: acf.threshold,
            lag1_acf: acf.lag1,
            acf_curve: acf.acf.clone(),
            variance_target: cfg.variance_target,
            component_budget: cfg.component_budget,
            variance_probe_evaluated: o.decision.variance_evidence.is_some(),
            cumulative_variance_at_budget: o.variance.as_ref().map(|v| v.cumulative_at_k),
            variance_verdict: o.variance.as_ref().map(|v| v.verdict),
            cumulative_variance_curve: o.variance_curve.clone(),
            warnings: Vec::new(),
            models: None,
        }
    }
}

#[derive(Serialize)]
struct DecisionDoc<'a> {
    dataset: &'a [DatasetDoc],
}

fn render_decision(docs: &[DatasetDoc]) -> Result<String> {
    toml::to_string(&DecisionDoc { dataset: docs }).map_err(|e| Error::Config(e.to_string()))
}

fn acf_csv<'a>(outcomes: impl Iterator<Item = &'a ProbeOutcome>) -> String {
    let mut s = String::from("dataset,lag,acf\n");
    for o in outcomes {
        for (lag, v) in o.decision.acf_evidence.acf.iter().enumerate() {
            let _ = writeln!(s, "{},{lag},{}", o.dataset, format_f64(*v));
        }
    }
    s
}

fn variance_csv<'a>(outcomes: impl Iterator<Item = &'a ProbeOutcome>) -> String {
    let mut s = String::from("dataset,component,ratio,cumulative\n");
    for o in outcomes {
        let (Some(curve), Some(pca)) = (&o.variance_curve, &o.pca) else {
            continue;
        };
        for (c, (cum, ratio)) in curve.iter().zip(&pca.spectrum_ratio).enumerate() {
            let _ = writeln!(
                s,
                "{},{},{},{}",
                o.dataset,
                c + 1,
                format_f64(*ratio),
                format_f64(*cum)
            );
        }
    }
    s
}

/// Table rows: `dataset,method,paradigm,precision,recall,f1,time`.
pub fn report_csv(datasets: &[DatasetRun], record_timings: bool) -> String {
    let mut s = String::from("dataset,method,paradigm,precision,recall,f1,time\n");
    for d in datasets {
        for r in &d.rows {
            let time = if record_timings {
                format!("{:.2}", r.total_time())
            } else {
                String::new()
            };
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                d.probe.dataset,
                r.method,
                r.paradigm.as_str(),
                fixed(r.precision),
                fixed(r.recall),
                fixed(r.f1),
                time
            );
        }
    }
    s
}

pub fn gap_csv(datasets: &[DatasetRun]) -> String {
    let mut s = String::from(
        "dataset,metric,delta,best_temporal,temporal_value,best_structural,structural_value\n",
    );
    for d in datasets {
        for e in d.gap.entries() {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                d.probe.dataset,
                e.metric.as_str(),
                fixed(e.delta),
                e.best_temporal,
                fixed(e.temporal_value),
                e.best_structural,
                fixed(e.structural_value)
            );
        }
    }
    s
}

fn render_run_bundle(datasets: &[DatasetRun], cfg: &RunConfig) -> Result<Bundle> {
    let mut bundle = Bundle::default();
    bundle.add(REPORT_FILE, report_csv(datasets, cfg.record_timings));
    bundle.add(GAP_FILE, gap_csv(datasets));

    let docs: Vec<DatasetDoc> = datasets
        .iter()
        .map(|d| {
            let mut doc = DatasetDoc::from_probe(&d.probe, cfg);
            doc.warnings = d.warnings.clone();
            doc.models = Some(d.models.clone());
            doc
        })
        .collect();
    bundle.add(DECISION_FILE, render_decision(&docs)?);

    bundle.add(
        plot_path("acf.csv"),
        acf_csv(datasets.iter().map(|d| &d.probe)),
    );
    bundle.add(
        plot_path("cumulative_variance.csv"),
        variance_csv(datasets.iter().map(|d| &d.probe)),
    );

    let mut sil = String::from("dataset,k,silhouette\n");
    for d in datasets {
        for (k, v) in &d.sweep {
            let _ = writeln!(sil, "{},{k},{}", d.probe.dataset, format_f64(*v));
        }
    }
    bundle.add(plot_path("silhouette.csv"), sil);

    let mut bars = String::from("dataset,method,paradigm,metric,value\n");
    for d in datasets {
        for r in &d.rows {
            for (name, v) in [
                ("precision", r.precision),
                ("recall", r.recall),
                ("f1", r.f1),
            ] {
                let _ = writeln!(
                    bars,
                    "{},{},{},{name},{}",
                    d.probe.dataset,
                    r.method,
                    r.paradigm.as_str(),
                    fixed(v)
                );
            }
        }
    }
    bundle.add(plot_path("metrics.csv"), bars);

    let mut gap_bars = String::from("dataset,metric,delta\n");
    for d in datasets {
        for e in d.gap.entries() {
            let _ = writeln!(
                gap_bars,
                "{},{},{}",
                d.probe.dataset,
                e.metric.as_str(),
                fixed(e.delta)
            );
        }
    }
    bundle.add(plot_path("gap.csv"), gap_bars);

    let mut proj = String::from("dataset,index,pc1,pc2,label\n");
    for d in datasets {
        for (i, (row, label)) in d.pca2.rows().into_iter().zip(&d.labels).enumerate() {
            let pc1 = row.get(0).copied().unwrap_or(0.0);
            let pc2 = row.get(1).copied().unwrap_or(0.0);
            let _ = writeln!(
                proj,
                "{},{i},{},{},{label}",
                d.probe.dataset,
                format_f64(pc1),
                format_f64(pc2)
            );
        }
    }
    bundle.add(plot_path("pca2.csv"), proj);
    Ok(bundle)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{gen_ar1, gen_two_clusters};

    fn small_cfg(dir: &Path) -> RunConfig {
        RunConfig {
            windows: vec![5, 10],
            train_size: 300,
            sweep_k: vec![2, 3],
            kmeans_n_init: 3,
            if_trees: 30,
            output_dir: dir.to_path_buf(),
            record_timings: false,
            ..Default::default()
        }
    }

    #[test]
    fn probes_skip_pca_on_temporal_branch() {
        let ds = gen_ar1(2000, 6, 0.9, 1).unwrap();
        let (z, _) = ingest::standardize(&ds.matrix).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_cfg(dir.path());
        let o = run_probes("ar", &z, &cfg, false).unwrap();
        assert_eq!(o.decision.branch, Paradigm::Temporal);
        assert!(o.pca.is_none() && o.variance.is_none());

        let both = RunConfig {
            force_both_probes: true,
            ..cfg
        };
        let o = run_probes("ar", &z, &both, false).unwrap();
        assert_eq!(o.decision.branch, Paradigm::Temporal);
        assert!(o.decision.variance_evidence.is_none());
        assert!(o.variance.is_some() && o.variance_curve.is_some());
    }

    #[test]
    fn run_dataset_produces_four_rows() {
        let ds = gen_two_clusters(600, 6, 10.0, 0.35, 2).unwrap().dataset;
        let dir = tempfile::tempdir().unwrap();
        let run = run_dataset(&ds, &small_cfg(dir.path())).unwrap();
        let mut methods: Vec<&str> = run.rows.iter().map(|r| r.method.as_str()).collect();
        assert_eq!(methods[0], METHOD_KMEANS_STR);
        methods.sort();
        assert_eq!(
            methods,
            vec![
                METHOD_IF_STR,
                METHOD_IF_TEMP,
                METHOD_KMEANS_STR,
                METHOD_OCSVM_TEMP
            ]
        );
        assert!(run.rows.windows(2).all(|w| w[0].f1 >= w[1].f1));
        assert!(run.rows[0].f1 >= 0.99);
        assert_eq!(run.models.ocsvm_n_train, 300);
        assert_eq!(run.pca2.ncols(), 2);
    }

    #[test]
    fn bundle_write_cleans_up_on_failure() {
        let dir = tempfile::tempdir().unwrap();
        // a file where the plots directory should go makes the second write fail
        fs::write(dir.path().join(PLOTS_DIR), "x").unwrap();
        let mut b = Bundle::default();
        b.add("report.csv", "a\n".into());
        b.add(plot_path("acf.csv"), "b\n".into());
        assert!(b.write(dir.path()).is_err());
        assert!(!dir.path().join("report.csv").exists());
    }
}
