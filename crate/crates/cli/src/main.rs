//! `gnnstrat`: train, compare and analyse degree-stratified GNNs on portable
//! dataset directories. Every artifact is plain CSV or JSON.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gnnstrat_core::autodiff::AdamConfig;
use gnnstrat_core::checkpoint::Checkpoint;
use gnnstrat_core::experiment::{run_experiment, theta_sweep, write_sweep_csv, ExperimentConfig};
use gnnstrat_core::models::{Arch, Variant};
use gnnstrat_core::spectral::{dense_limit_from_env, partition_spectrum, Group, Normalization};
use gnnstrat_core::synthetic::{synthetic_dataset, SyntheticConfig};
use gnnstrat_core::train::{train, TrainConfig};
use gnnstrat_core::{load_dataset, partition_by_degree, save_dataset, DegreeHistogram, Error, ThetaMode};

#[derive(Parser)]
#[command(name = "gnnstrat", version, about = "Degree-stratified GCN, GAT and GraphSAGE experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one model and write its metrics JSON.
    Train(TrainArgs),
    /// Repeat training over seeds for each variant and summarise.
    Experiment(ExperimentArgs),
    /// Stratified accuracy across fixed thresholds, with a baseline row.
    SweepTheta(SweepArgs),
    /// Eigenvalues of the renormalized adjacency on one degree group.
    Spectrum(SpectrumArgs),
    /// Node degree histogram as `degree,count`.
    DegreeHist(DataArgs),
    /// Load a dataset directory and print its counts.
    Validate(DataArgs),
    /// Write a synthetic preferential-attachment dataset.
    Synth(SynthArgs),
}

#[derive(Args)]
struct DataArgs {
    /// Portable dataset directory.
    #[arg(long)]
    data: PathBuf,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long)]
    data: PathBuf,
    /// gcn, gat or sage.
    #[arg(long)]
    model: Arch,
    /// `auto` (Otsu on degrees), `auto-log` (Otsu on log degrees) or an integer.
    #[arg(long, default_value = "auto")]
    theta: ThetaMode,
    #[arg(long, default_value_t = 200)]
    epochs: usize,
    #[arg(long, default_value_t = 32)]
    hidden: usize,
    /// Attention heads per GAT layer.
    #[arg(long, default_value_t = 1)]
    heads: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 5e-4)]
    weight_decay: f64,
    /// Store wall-clock seconds in results. Makes outputs run-dependent.
    #[arg(long)]
    record_wall_time: bool,
}

impl ModelArgs {
    fn config(&self, variant: Variant, seed: u64) -> TrainConfig {
        TrainConfig {
            theta: self.theta,
            seed,
            epochs: self.epochs,
            hidden_dim: self.hidden,
            gat_heads: self.heads,
            adam: AdamConfig {
                lr: self.lr,
                weight_decay: self.weight_decay,
                ..AdamConfig::default()
            },
            record_wall_time: self.record_wall_time,
            ..TrainConfig::new(self.model, variant)
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// baseline, stratified or random.
    #[arg(long, default_value = "baseline")]
    variant: Variant,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Metrics JSON; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also save the best-validation weights here.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Args)]
struct RunsArgs {
    #[arg(long, default_value_t = 10)]
    runs: usize,
    /// First seed; runs use consecutive seeds.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Concurrent runs. Results do not depend on this.
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
}

#[derive(Args)]
struct ExperimentArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    runs: RunsArgs,
    /// Comma-separated subset of variants.
    #[arg(long, value_delimiter = ',', default_value = "baseline,stratified,random")]
    variants: Vec<Variant>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    runs: RunsArgs,
    /// Thresholds as a comma list and/or inclusive ranges, e.g. `1-10` or `2,3,5`.
    #[arg(long, default_value = "1-10", value_parser = parse_thetas)]
    thetas: ThetaList,
}

#[derive(Clone)]
struct ThetaList(Vec<usize>);

fn parse_thetas(s: &str) -> Result<ThetaList, String> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim) {
        let bad = || format!("bad threshold list entry {part:?}");
        match part.split_once('-') {
            Some((a, b)) => {
                let (a, b): (usize, usize) = (a.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?);
                if a > b {
                    return Err(bad());
                }
                out.extend(a..=b);
            }
            None => out.push(part.parse().map_err(|_| bad())?),
        }
    }
    Ok(ThetaList(out))
}

#[derive(Args)]
struct SpectrumArgs {
    #[arg(long)]
    data: PathBuf,
    /// low, high or full.
    #[arg(long, default_value = "full")]
    group: Group,
    #[arg(long, default_value = "auto")]
    theta: ThetaMode,
    /// `subgraph` renormalizes the induced subgraph; `full` restricts the
    /// whole graph's operator.
    #[arg(long, default_value = "subgraph")]
    normalization: Normalization,
    /// Eigenvalue CSV; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Summary JSON; defaults to the CSV path with a `.json` extension.
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 500)]
    nodes: usize,
    /// Edges added per new node.
    #[arg(long, default_value_t = 2)]
    attach: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

/// Writes `path` through a temporary file in the same directory, or stdout.
fn emit(path: Option<&Path>, write: impl FnOnce(&mut dyn Write) -> Result<(), Error>) -> Result<(), Error> {
    match path {
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            write(&mut lock)?;
            lock.flush()?;
            Ok(())
        }
        Some(path) => {
            let dir = match path.parent() {
                Some(p) if !p.as_os_str().is_empty() => p,
                _ => Path::new("."),
            };
            let mut builder = tempfile::Builder::new();
            #[cfg(unix)]
            builder.permissions(std::os::unix::fs::PermissionsExt::from_mode(0o644));
            let mut tmp = builder.tempfile_in(dir)?;
            write(tmp.as_file_mut())?;
            tmp.as_file_mut().flush()?;
            tmp.persist(path).map_err(|e| Error::Io(e.error))?;
            Ok(())
        }
    }
}

fn emit_json<T: serde::Serialize>(path: Option<&Path>, value: &T) -> Result<(), Error> {
    emit(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        writeln!(w)?;
        Ok(())
    })
}

fn run_train(a: &TrainArgs) -> Result<(), Error> {
    let ds = load_dataset(&a.model.data)?;
    let out = train(&a.model.config(a.variant, a.seed), &ds)?;
    if let Some(path) = &a.checkpoint {
        let bytes = Checkpoint {
            weights: out.weights,
            theta: out.result.theta,
        }
        .to_bytes();
        emit(Some(path), |w| Ok(w.write_all(&bytes)?))?;
    }
    emit_json(a.out.as_deref(), &out.result)
}

fn experiment_config(model: &ModelArgs, runs: &RunsArgs) -> ExperimentConfig {
    ExperimentConfig {
        runs: runs.runs,
        base_seed: runs.seed,
        workers: runs.workers,
        ..ExperimentConfig::new(model.config(Variant::Baseline, runs.seed))
    }
}

fn run_experiment_cmd(a: &ExperimentArgs) -> Result<(), Error> {
    let ds = load_dataset(&a.model.data)?;
    let cfg = ExperimentConfig {
        variants: a.variants.clone(),
        ..experiment_config(&a.model, &a.runs)
    };
    let summary = run_experiment(&cfg, &ds)?;
    match a.runs.format {
        Format::Csv => emit(a.runs.out.as_deref(), |w| summary.write_csv(w)),
        Format::Json => emit_json(a.runs.out.as_deref(), &summary),
    }
}

fn run_sweep(a: &SweepArgs) -> Result<(), Error> {
    let ds = load_dataset(&a.model.data)?;
    let rows = theta_sweep(&experiment_config(&a.model, &a.runs), &ds, &a.thetas.0)?;
    match a.runs.format {
        Format::Csv => emit(a.runs.out.as_deref(), |w| write_sweep_csv(&rows, w)),
        Format::Json => emit_json(a.runs.out.as_deref(), &rows),
    }
}

fn run_spectrum(a: &SpectrumArgs) -> Result<(), Error> {
    let limit = dense_limit_from_env()?;
    let ds = load_dataset(&a.data)?;
    let partition = match a.group {
        Group::Full => None,
        _ => Some(partition_by_degree(&ds.graph.degrees(), a.theta.resolve(&ds.graph.degrees())?)?),
    };
    let spectrum = partition_spectrum(&ds.graph, partition.as_ref(), a.group, a.normalization, limit)?;
    emit(a.out.as_deref(), |w| spectrum.write_csv(w))?;
    let summary_path = a.summary.clone().or_else(|| a.out.as_ref().map(|p| p.with_extension("json")));
    match summary_path {
        Some(p) => emit_json(Some(&p), &spectrum.summary()),
        None => {
            eprintln!("{}", serde_json::to_string(&spectrum.summary())?);
            Ok(())
        }
    }
}

fn run_degree_hist(a: &DataArgs) -> Result<(), Error> {
    let ds = load_dataset(&a.data)?;
    let hist = DegreeHistogram::from_degrees(&ds.graph.degrees());
    emit(a.out.as_deref(), |w| hist.write_csv(w))
}

fn run_validate(a: &DataArgs) -> Result<(), Error> {
    let ds = load_dataset(&a.data)?;
    let line = format!(
        "{} nodes, {} edges, {} features, {} classes",
        ds.num_nodes(),
        ds.graph.num_edges(),
        ds.num_features(),
        ds.num_classes
    );
    emit(a.out.as_deref(), |w| Ok(writeln!(w, "{line}")?))
}

fn run_synth(a: &SynthArgs) -> Result<(), Error> {
    let ds = synthetic_dataset(&SyntheticConfig {
        nodes: a.nodes,
        attach: a.attach,
        seed: a.seed,
        ..SyntheticConfig::default()
    })?;
    save_dataset(&ds, &a.out)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    let result = match &cli.command {
        Command::Train(a) => run_train(a),
        Command::Experiment(a) => run_experiment_cmd(a),
        Command::SweepTheta(a) => run_sweep(a),
        Command::Spectrum(a) => run_spectrum(a),
        Command::DegreeHist(a) => run_degree_hist(a),
        Command::Validate(a) => run_validate(a),
        Command::Synth(a) => run_synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
