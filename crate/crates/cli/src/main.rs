//! `paraprobe`: probe a flow dataset for temporal or structural signal and
//! benchmark unsupervised detectors on both feature spaces.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use paraprobe_core::config::{InputSpec, RunConfig, OUTPUT_DIR_ENV};
use paraprobe_core::features::FeatureSpace;
use paraprobe_core::pipeline::{self, ProbeOutcome, REPORT_FILE};
use paraprobe_core::probes::{Aggregation, Paradigm};
use paraprobe_core::synth::{Strengths, SynthKind, SynthSpec};

#[derive(Parser)]
#[command(name = "paraprobe", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the ACF and variance probes and write the routing decision.
    Probe(RunArgs),
    /// Full pipeline: probes, both feature spaces, detector grid, report bundle.
    Run(RunArgs),
    /// Write the temporal and structural feature matrices as CSV.
    Features(RunArgs),
    /// Precision, recall and F1 of a prediction file against a label file.
    Eval(EvalArgs),
    /// Generate a seeded synthetic dataset.
    Synth(SynthArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Key-value config file; flags given here take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Input dataset (CSV, or raw f32 with a sidecar). Repeatable.
    #[arg(long = "input", short = 'i')]
    inputs: Vec<PathBuf>,
    /// Sidecar for raw binary inputs (default `<input>.toml`).
    #[arg(long)]
    sidecar: Option<PathBuf>,
    #[arg(long)]
    label_column: Option<String>,
    /// Label value counted as attack. Repeatable.
    #[arg(long = "positive")]
    positive_values: Vec<String>,
    #[arg(long, short = 'o', env = OUTPUT_DIR_ENV)]
    output: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    acf_threshold: Option<f64>,
    #[arg(long)]
    max_lag: Option<usize>,
    #[arg(long, value_enum)]
    aggregation: Option<AggregationArg>,
    #[arg(long)]
    variance_target: Option<f64>,
    #[arg(long)]
    component_budget: Option<usize>,
    /// Comma-separated rolling window sizes.
    #[arg(long, value_delimiter = ',')]
    windows: Option<Vec<usize>>,
    #[arg(long)]
    structural_dims: Option<usize>,
    #[arg(long)]
    train_size: Option<usize>,
    #[arg(long)]
    chunk_size: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    /// Evaluate the variance probe even when the ACF probe already decided.
    #[arg(long)]
    force_both_probes: bool,
    /// Override the routing decision (recorded in the report).
    #[arg(long, value_enum)]
    force_paradigm: Option<ParadigmArg>,
    /// Leave the time column empty so repeated runs are byte-identical.
    #[arg(long)]
    no_timings: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum AggregationArg {
    L2,
    Sum,
}

#[derive(Clone, Copy, ValueEnum)]
enum ParadigmArg {
    Temporal,
    Structural,
    Hybrid,
}

#[derive(Clone, Copy, ValueEnum)]
enum SpaceArg {
    Temporal,
    Structural,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Ar1,
    LowRank,
    TwoClusters,
    WhiteNoise,
}

#[derive(Clone, Copy, ValueEnum)]
enum StrengthsArg {
    Descending,
    Equal,
}

#[derive(Args)]
struct EvalArgs {
    /// One 0/1 prediction per line.
    #[arg(long)]
    predictions: PathBuf,
    /// One 0/1 label per line.
    #[arg(long)]
    labels: PathBuf,
    #[arg(long, default_value = "external")]
    method: String,
    #[arg(long, value_enum, default_value = "temporal")]
    space: SpaceArg,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, value_enum)]
    kind: KindArg,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    p: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.0)]
    phi: f64,
    #[arg(long, default_value_t = 1)]
    rank: usize,
    #[arg(long, default_value_t = 0.0)]
    noise_std: f64,
    #[arg(long, value_enum, default_value = "descending")]
    strengths: StrengthsArg,
    #[arg(long, default_value_t = 0.0)]
    separation: f64,
    #[arg(long, default_value_t = 0.0)]
    attack_ratio: f64,
    /// Output CSV path.
    #[arg(long, short = 'o')]
    out: PathBuf,
}

impl RunArgs {
    fn into_config(self) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        if let Some(path) = &self.config {
            cfg.load_file(path)
                .with_context(|| format!("reading config {}", path.display()))?;
        }
        if !self.inputs.is_empty() {
            cfg.inputs = self
                .inputs
                .into_iter()
                .map(|p| InputSpec::infer(p, self.sidecar.clone()))
                .collect();
        }
        if let Some(v) = self.label_column {
            cfg.label_column = v;
        }
        if !self.positive_values.is_empty() {
            cfg.positive_values = self.positive_values;
        }
        macro_rules! set {
            ($($flag:ident => $field:ident),* $(,)?) => {
                $( if let Some(v) = self.$flag { cfg.$field = v; } )*
            };
        }
        set!(
            output => output_dir,
            seed => seed,
            acf_threshold => acf_threshold,
            max_lag => max_lag,
            variance_target => variance_target,
            component_budget => component_budget,
            windows => windows,
            structural_dims => structural_dims,
            train_size => train_size,
            chunk_size => chunk_size,
            k => k,
        );
        if let Some(a) = self.aggregation {
            cfg.aggregation = match a {
                AggregationArg::L2 => Aggregation::L2Norm,
                AggregationArg::Sum => Aggregation::Sum,
            };
        }
        if let Some(p) = self.force_paradigm {
            cfg.force_paradigm = Some(match p {
                ParadigmArg::Temporal => Paradigm::Temporal,
                ParadigmArg::Structural => Paradigm::Structural,
                ParadigmArg::Hybrid => Paradigm::Hybrid,
            });
        }
        cfg.force_both_probes |= self.force_both_probes;
        if self.no_timings {
            cfg.record_timings = false;
        }
        if cfg.inputs.is_empty() {
            bail!("no inputs: pass --input or set `inputs` in the config file");
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn print_probe(o: &ProbeOutcome) {
    let var = o
        .variance
        .as_ref()
        .map(|v| format!("{:.4}", v.cumulative_at_k))
        .unwrap_or_else(|| "not evaluated".into());
    println!(
        "{}: {} (lag-1 ACF {:.4}, cumulative variance {var})",
        o.dataset,
        o.effective_label(),
        o.decision.acf_evidence.lag1
    );
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Probe(args) => {
            let cfg = args.into_config()?;
            for o in pipeline::cmd_probe(&cfg)? {
                print_probe(&o);
            }
        }
        Command::Run(args) => {
            let cfg = args.into_config()?;
            let summary = pipeline::cmd_run(&cfg)?;
            for w in summary.warnings() {
                eprintln!("warning: {w}");
            }
            for d in &summary.datasets {
                print_probe(&d.probe);
                for r in &d.rows {
                    println!(
                        "  {:<12} {:<10} P={:.3} R={:.3} F1={:.3}",
                        r.method,
                        r.paradigm.as_str(),
                        r.precision,
                        r.recall,
                        r.f1
                    );
                }
                println!(
                    "  delta F1 (temporal - structural) = {:+.3}",
                    d.gap.delta_f1()
                );
            }
            println!("report: {}", summary.output_dir.join(REPORT_FILE).display());
        }
        Command::Features(args) => {
            let cfg = args.into_config()?;
            for path in pipeline::cmd_features(&cfg)? {
                println!("{}", path.display());
            }
        }
        Command::Eval(args) => {
            let space = match args.space {
                SpaceArg::Temporal => FeatureSpace::Temporal,
                SpaceArg::Structural => FeatureSpace::Structural,
            };
            let m = pipeline::cmd_eval(&args.predictions, &args.labels, &args.method, space)?;
            println!("precision,recall,f1");
            println!("{:.6},{:.6},{:.6}", m.precision, m.recall, m.f1);
        }
        Command::Synth(a) => {
            let kind = match a.kind {
                KindArg::Ar1 => SynthKind::Ar1,
                KindArg::LowRank => SynthKind::LowRank,
                KindArg::TwoClusters => SynthKind::TwoClusters,
                KindArg::WhiteNoise => SynthKind::WhiteNoise,
            };
            let spec = SynthSpec {
                phi: a.phi,
                rank: a.rank,
                noise_std: a.noise_std,
                strengths: match a.strengths {
                    StrengthsArg::Descending => Strengths::Descending,
                    StrengthsArg::Equal => Strengths::Equal,
                },
                separation: a.separation,
                attack_ratio: a.attack_ratio,
                ..SynthSpec::new(kind, a.n, a.p, a.seed)
            };
            let data = pipeline::cmd_synth(&spec, &a.out)?;
            println!(
                "{} rows x {} features -> {}",
                data.dataset.n_samples(),
                data.dataset.n_features(),
                a.out.display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // core errors already embed their source in the message
            let mut line = String::new();
            for cause in e.chain().map(|c| c.to_string()) {
                if !line.contains(&cause) {
                    if !line.is_empty() {
                        line.push_str(": ");
                    }
                    line.push_str(&cause);
                }
            }
            eprintln!("error: {line}");
            ExitCode::FAILURE
        }
    }
}
