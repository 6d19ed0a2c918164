//! Command-line front end: featurize prices, train and compare forecasters,
//! export filter trajectories, and generate synthetic benchmark data.
//!
//! Exit codes: 0 on success, 2 on usage or malformed-input errors, 1 on
//! internal errors. Every command writes a manifest next to its artifacts;
//! re-running with identical inputs and flags reproduces every output byte.

mod manifest;

use clap::{Args, Parser, Subcommand};
use manifest::{file_digest, RunManifest};
use pmcf_core::data::{PriceSeries, SplitSpec, DEFAULT_WINDOW};
use pmcf_core::hmc::HeadMode;
use pmcf_core::io::{
    read_features, read_json, read_price_csv, write_feature_csv, write_json, write_price_csv,
    write_regimes_csv, write_report_csv, FeatureSidecar, ModelFile, NormReference,
};
use pmcf_core::models::BaseKind;
use pmcf_core::pmc::FilterError;
use pmcf_core::synth::{generate, RegimeSpec, BENCHMARK_HOURS};
use pmcf_core::train::{
    markdown_table, run_experiment, thread_budget, Dataset, ModelSpec, TrainConfig, TrainError,
};
use serde::{Deserialize, Serialize};
use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "pmcf",
    version,
    about = "Pairwise-filter volatility forecasting"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Turn a 1-minute price CSV into normalized hourly volatility features
    Features(FeaturesArgs),
    /// Train one model kind across seeds and report test MSE
    Train(TrainArgs),
    /// Export a trained filter's trajectory over a feature series
    Report(ReportArgs),
    /// Generate regime-switching synthetic prices with ground truth
    Synth(SynthArgs),
}

#[derive(Args)]
struct FeaturesArgs {
    /// Price CSV with a `timestamp,open` header
    prices: PathBuf,
    /// Directory for features.csv, features.norm.json, and the manifest
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Minutes per feature window
    #[arg(long)]
    window: Option<usize>,
    /// Chronological split fractions, e.g. 0.4,0.4,0.2
    #[arg(long)]
    split: Option<String>,
    /// JSON config file; flags given on the command line win
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    /// Feature CSV written by `features`
    features: PathBuf,
    /// Normalization sidecar (default: features path with .norm.json)
    #[arg(long)]
    norm: Option<PathBuf>,
    /// Directory for per-seed models, report.json, report.md, manifest
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Model kind: garch, fnn2, fnn3, fnn23, hmc, or pmc
    #[arg(long)]
    model: Option<String>,
    /// Number of hidden states (pmc and hmc only)
    #[arg(long = "N")]
    n_states: Option<usize>,
    /// Per-state expert kind for pmc: garch, fnn2, fnn3, or fnn23
    #[arg(long)]
    base: Option<String>,
    /// hmc prediction heads: affine or constants
    #[arg(long)]
    head_mode: Option<String>,
    /// Seed count (e.g. 5 for seeds 0..5) or explicit list (e.g. 2,7,9)
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Early-stopping patience in epochs
    #[arg(long)]
    patience: Option<usize>,
    /// Adam learning rate
    #[arg(long)]
    lr: Option<f64>,
    /// Worker cap for the per-seed parallelism (PMC_THREADS also applies)
    #[arg(long)]
    threads: Option<usize>,
    /// Label naming the dataset in reports (default: feature file stem)
    #[arg(long)]
    dataset_label: Option<String>,
    /// JSON config file; flags given on the command line win
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Trained model JSON written by `train`
    model: PathBuf,
    /// Feature CSV written by `features`
    features: PathBuf,
    /// Normalization sidecar (default: features path with .norm.json)
    #[arg(long)]
    norm: Option<PathBuf>,
    /// Output trajectory CSV
    #[arg(long, default_value = "report.csv")]
    out: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    /// Generator spec JSON; defaults to the built-in two-regime benchmark
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Seed for the built-in benchmark spec (ignored with --spec)
    #[arg(long)]
    seed: Option<u64>,
    /// Hours to simulate
    #[arg(long)]
    hours: Option<usize>,
    /// Directory for prices.csv, regimes.csv, and the manifest
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

enum CliError {
    Usage(String),
    Internal(String),
}

fn usage(e: impl Display) -> CliError {
    CliError::Usage(e.to_string())
}

fn internal(e: impl Display) -> CliError {
    CliError::Internal(e.to_string())
}

/// Training failures caused by the inputs are usage errors; failures inside
/// the numerics are internal.
fn train_error(e: TrainError) -> CliError {
    match &e {
        TrainError::Config(_)
        | TrainError::Pipeline(_)
        | TrainError::Empty
        | TrainError::LengthMismatch { .. } => usage(e),
        _ => internal(e),
    }
}

/// Filter failures from a model/feature mismatch are usage errors.
fn report_error(e: FilterError) -> CliError {
    match &e {
        FilterError::ExpertMismatch { .. }
        | FilterError::MixedExperts
        | FilterError::NoStates
        | FilterError::TooShort { .. } => usage(e),
        _ => internal(e),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Internal(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Features(args) => cmd_features(args),
        Command::Train(args) => cmd_train(args),
        Command::Report(args) => cmd_report(args),
        Command::Synth(args) => cmd_synth(args),
    }
}

fn read_config<T: Default + serde::de::DeserializeOwned>(
    path: &Option<PathBuf>,
) -> Result<T, CliError> {
    match path {
        Some(p) => read_json(p).map_err(usage),
        None => Ok(T::default()),
    }
}

fn ensure_out_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(usage)
}

fn write_manifest(
    dir_or_file: &Path,
    manifest: &RunManifest,
    as_sibling: bool,
) -> Result<PathBuf, CliError> {
    let path = if as_sibling {
        dir_or_file.with_extension("manifest.json")
    } else {
        dir_or_file.join("manifest.json")
    };
    write_json(&path, manifest).map_err(internal)?;
    Ok(path)
}

fn print_gap_warnings(prices: &PriceSeries) {
    for pair in prices.points().windows(2) {
        let missing = pair[1].timestamp - pair[0].timestamp - 1;
        if missing > 0 {
            eprintln!(
                "warning: {missing} missing minute(s) between t={} and t={}",
                pair[0].timestamp * 60,
                pair[1].timestamp * 60
            );
        }
    }
}

#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FeaturesFileConfig {
    window: Option<usize>,
    split: Option<[f64; 3]>,
}

#[derive(Serialize)]
struct FeaturesEffectiveConfig {
    window: usize,
    split: [f64; 3],
}

fn parse_split(raw: &str) -> Result<[f64; 3], CliError> {
    let parts: Vec<&str> = raw.split(',').collect();
    if parts.len() != 3 {
        return Err(usage(format!(
            "--split wants three comma-separated fractions, got {raw:?}"
        )));
    }
    let mut fracs = [0.0; 3];
    for (slot, part) in fracs.iter_mut().zip(&parts) {
        *slot = part
            .trim()
            .parse()
            .map_err(|_| usage(format!("unparseable split fraction {part:?}")))?;
    }
    Ok(fracs)
}

fn cmd_features(args: FeaturesArgs) -> Result<(), CliError> {
    let file: FeaturesFileConfig = read_config(&args.config)?;
    let window = args.window.or(file.window).unwrap_or(DEFAULT_WINDOW);
    let split = match &args.split {
        Some(raw) => parse_split(raw)?,
        None => file.split.unwrap_or([0.4, 0.4, 0.2]),
    };
    let split_spec = SplitSpec {
        train_frac: split[0],
        val_frac: split[1],
        test_frac: split[2],
    };

    let prices = read_price_csv(&args.prices).map_err(usage)?;
    print_gap_warnings(&prices);
    let dataset = Dataset::from_prices(&prices, window, split_spec).map_err(usage)?;

    ensure_out_dir(&args.out_dir)?;
    let csv_path = args.out_dir.join("features.csv");
    let norm_path = args.out_dir.join("features.norm.json");
    write_feature_csv(&csv_path, &dataset.features).map_err(internal)?;
    let sidecar = FeatureSidecar {
        window,
        split: split_spec,
        boundaries: dataset.boundaries,
        normalization: *dataset.features.norm().expect("pipeline attaches norm"),
    };
    write_json(&norm_path, &sidecar).map_err(internal)?;

    let config = FeaturesEffectiveConfig { window, split };
    let manifest = RunManifest::collect(
        "features",
        &config,
        &[&args.prices],
        &[],
        &[&csv_path, &norm_path],
    )
    .map_err(internal)?;
    write_manifest(&args.out_dir, &manifest, false)?;

    println!(
        "wrote {} feature rows ({} train / {} val / {} test) to {}",
        dataset.features.len(),
        dataset.boundaries.train_end,
        dataset.boundaries.val_end - dataset.boundaries.train_end,
        dataset.boundaries.total - dataset.boundaries.val_end,
        csv_path.display()
    );
    Ok(())
}

#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrainFileConfig {
    model: Option<String>,
    n_states: Option<usize>,
    base: Option<String>,
    head_mode: Option<String>,
    seeds: Option<String>,
    epochs: Option<usize>,
    patience: Option<usize>,
    learning_rate: Option<f64>,
    threads: Option<usize>,
    dataset_label: Option<String>,
}

#[derive(Serialize)]
struct TrainEffectiveConfig {
    model: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    n_states: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    base: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    head_mode: Option<String>,
    epochs: usize,
    patience: usize,
    learning_rate: f64,
    window: usize,
    split: [f64; 3],
    dataset_label: String,
}

/// A bare count n means seeds 0..n; a comma list is taken verbatim.
fn parse_seeds(raw: &str) -> Result<Vec<u64>, CliError> {
    let raw = raw.trim();
    if raw.contains(',') {
        raw.split(',')
            .map(|part| {
                part.trim()
                    .parse::<u64>()
                    .map_err(|_| usage(format!("unparseable seed {part:?}")))
            })
            .collect()
    } else {
        let count: u64 = raw
            .parse()
            .map_err(|_| usage(format!("unparseable seed count {raw:?}")))?;
        if count == 0 {
            return Err(usage("need at least one seed"));
        }
        Ok((0..count).collect())
    }
}

fn parse_base(raw: &str) -> Result<BaseKind, CliError> {
    BaseKind::parse(raw).ok_or_else(|| {
        usage(format!(
            "unknown base kind {raw:?} (expected garch, fnn2, fnn3, or fnn23)"
        ))
    })
}

struct ResolvedModel {
    spec: ModelSpec,
    n_states: Option<usize>,
    base: Option<String>,
    head_mode: Option<String>,
}

/// Validates the model/N/base/head-mode combination.
fn resolve_model(
    model: &str,
    n_states: Option<usize>,
    base: Option<&str>,
    head_mode: Option<&str>,
) -> Result<ResolvedModel, CliError> {
    let reject = |flag: &str| -> Result<(), CliError> {
        Err(usage(format!("{flag} is not valid with --model {model}")))
    };
    match model {
        "pmc" => {
            if head_mode.is_some() {
                reject("--head-mode")?;
            }
            let n = n_states.unwrap_or(2);
            if n == 0 {
                return Err(usage("--N must be at least 1"));
            }
            let base_kind = parse_base(base.unwrap_or("garch"))?;
            Ok(ResolvedModel {
                spec: ModelSpec::Pmc {
                    n_states: n,
                    base: base_kind,
                },
                n_states: Some(n),
                base: Some(base_kind.name().to_string()),
                head_mode: None,
            })
        }
        "hmc" => {
            if base.is_some() {
                reject("--base")?;
            }
            let n = n_states.unwrap_or(2);
            if n == 0 {
                return Err(usage("--N must be at least 1"));
            }
            let mode = match head_mode.unwrap_or("affine") {
                "affine" => HeadMode::Affine,
                "constants" => HeadMode::ConstantsOnly,
                other => {
                    return Err(usage(format!(
                        "unknown head mode {other:?} (expected affine or constants)"
                    )))
                }
            };
            Ok(ResolvedModel {
                spec: ModelSpec::Hmc {
                    n_states: n,
                    head_mode: mode,
                },
                n_states: Some(n),
                base: None,
                head_mode: Some(
                    match mode {
                        HeadMode::Affine => "affine",
                        HeadMode::ConstantsOnly => "constants",
                    }
                    .to_string(),
                ),
            })
        }
        other => {
            let kind = parse_base(other).map_err(|_| {
                usage(format!(
                    "unknown model {other:?} (expected garch, fnn2, fnn3, fnn23, hmc, or pmc)"
                ))
            })?;
            if n_states.is_some() {
                reject("--N")?;
            }
            if base.is_some() {
                reject("--base")?;
            }
            if head_mode.is_some() {
                reject("--head-mode")?;
            }
            Ok(ResolvedModel {
                spec: ModelSpec::Base(kind),
                n_states: None,
                base: None,
                head_mode: None,
            })
        }
    }
}

fn norm_path_for(features: &Path, norm: &Option<PathBuf>) -> PathBuf {
    match norm {
        Some(p) => p.clone(),
        None => features.with_extension("norm.json"),
    }
}

fn cmd_train(args: TrainArgs) -> Result<(), CliError> {
    let file: TrainFileConfig = read_config(&args.config)?;
    let model_name = args
        .model
        .or(file.model)
        .ok_or_else(|| usage("--model is required (garch, fnn2, fnn3, fnn23, hmc, or pmc)"))?;
    let resolved = resolve_model(
        &model_name,
        args.n_states.or(file.n_states),
        args.base.or(file.base).as_deref(),
        args.head_mode.or(file.head_mode).as_deref(),
    )?;
    let seeds = match args.seeds.or(file.seeds) {
        Some(raw) => parse_seeds(&raw)?,
        None => (0..5).collect(),
    };
    let mut config = TrainConfig::default();
    if let Some(epochs) = args.epochs.or(file.epochs) {
        config.epochs = epochs;
        config.patience = config.patience.min(epochs.max(1));
    }
    if let Some(patience) = args.patience.or(file.patience) {
        config.patience = patience;
    }
    if let Some(lr) = args.lr.or(file.learning_rate) {
        config.adam.learning_rate = lr;
    }
    let threads = thread_budget(args.threads.or(file.threads));

    let norm_path = norm_path_for(&args.features, &args.norm);
    let (features, sidecar) = read_features(&args.features, &norm_path).map_err(usage)?;
    let dataset =
        Dataset::from_normalized(features, sidecar.window, sidecar.split).map_err(usage)?;
    let dataset_label = args
        .dataset_label
        .or(file.dataset_label)
        .unwrap_or_else(|| {
            args.features
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "features".to_string())
        });

    let outcome = run_experiment(
        &dataset,
        resolved.spec,
        &config,
        &seeds,
        threads,
        &dataset_label,
    )
    .map_err(train_error)?;

    ensure_out_dir(&args.out_dir)?;
    let norm_ref = Some(NormReference {
        path: norm_path.display().to_string(),
        sha256: file_digest(&norm_path).map_err(usage)?.sha256,
    });
    let mut artifact_paths = Vec::new();
    for run in &outcome.runs {
        let path = args.out_dir.join(format!("model_seed{}.json", run.seed));
        let model_file = ModelFile {
            seed: run.seed,
            norm_ref: norm_ref.clone(),
            model: run.model.clone(),
        };
        write_json(&path, &model_file).map_err(internal)?;
        artifact_paths.push(path);
    }
    let report_json = args.out_dir.join("report.json");
    write_json(&report_json, &outcome.report).map_err(internal)?;
    artifact_paths.push(report_json);
    let table = markdown_table(std::slice::from_ref(&outcome.report));
    let report_md = args.out_dir.join("report.md");
    fs::write(&report_md, &table).map_err(internal)?;
    artifact_paths.push(report_md);

    let effective = TrainEffectiveConfig {
        model: model_name,
        n_states: resolved.n_states,
        base: resolved.base,
        head_mode: resolved.head_mode,
        epochs: config.epochs,
        patience: config.patience,
        learning_rate: config.adam.learning_rate,
        window: sidecar.window,
        split: [
            sidecar.split.train_frac,
            sidecar.split.val_frac,
            sidecar.split.test_frac,
        ],
        dataset_label,
    };
    let artifact_refs: Vec<&Path> = artifact_paths.iter().map(PathBuf::as_path).collect();
    let manifest = RunManifest::collect(
        "train",
        &effective,
        &[&args.features, &norm_path],
        &seeds,
        &artifact_refs,
    )
    .map_err(internal)?;
    write_manifest(&args.out_dir, &manifest, false)?;

    print!("{table}");
    Ok(())
}

fn cmd_report(args: ReportArgs) -> Result<(), CliError> {
    let model_file: ModelFile = read_json(&args.model).map_err(usage)?;
    let norm_path = norm_path_for(&args.features, &args.norm);
    let (features, _) = read_features(&args.features, &norm_path).map_err(usage)?;
    let pairs = features.normalized_pairs().map_err(usage)?;

    let run = match model_file.model.filter_run(&pairs).map_err(report_error)? {
        Some(run) => run,
        None => {
            return Err(usage(format!(
                "model kind {:?} carries no filter; report wants a pmc or hmc model",
                model_file.model.kind_name()
            )))
        }
    };
    if let Some(parent) = args.out.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(usage)?;
        }
    }
    write_report_csv(&args.out, &run).map_err(internal)?;

    #[derive(Serialize)]
    struct ReportEffectiveConfig {
        model_kind: String,
        n_states: usize,
    }
    let manifest = RunManifest::collect(
        "report",
        &ReportEffectiveConfig {
            model_kind: model_file.model.kind_name().to_string(),
            n_states: model_file.model.n_states(),
        },
        &[&args.model, &args.features, &norm_path],
        &[],
        &[&args.out],
    )
    .map_err(internal)?;
    write_manifest(&args.out, &manifest, true)?;

    println!(
        "wrote {} trajectory rows to {}",
        run.predictions.len(),
        args.out.display()
    );
    Ok(())
}

fn cmd_synth(args: SynthArgs) -> Result<(), CliError> {
    let spec: RegimeSpec = match &args.spec {
        Some(path) => {
            if args.seed.is_some() {
                return Err(usage("--seed only applies to the built-in benchmark spec"));
            }
            read_json(path).map_err(usage)?
        }
        None => RegimeSpec::benchmark(args.seed.unwrap_or(0)),
    };
    let hours = args.hours.unwrap_or(BENCHMARK_HOURS);
    let series = generate(&spec, hours, 60).map_err(usage)?;

    ensure_out_dir(&args.out_dir)?;
    let prices_path = args.out_dir.join("prices.csv");
    let regimes_path = args.out_dir.join("regimes.csv");
    write_price_csv(&prices_path, &series.prices).map_err(internal)?;
    write_regimes_csv(&regimes_path, &series.regimes).map_err(internal)?;

    #[derive(Serialize)]
    struct SynthEffectiveConfig {
        hours: usize,
        minutes_per_hour: usize,
        spec: RegimeSpec,
    }
    let inputs: Vec<&Path> = args.spec.iter().map(PathBuf::as_path).collect();
    let manifest = RunManifest::collect(
        "synth",
        &SynthEffectiveConfig {
            hours,
            minutes_per_hour: 60,
            spec,
        },
        &inputs,
        &[],
        &[&prices_path, &regimes_path],
    )
    .map_err(internal)?;
    write_manifest(&args.out_dir, &manifest, false)?;

    println!(
        "wrote {} minute prices and {} regime rows to {}",
        series.prices.len(),
        series.regimes.len(),
        args.out_dir.display()
    );
    Ok(())
}
