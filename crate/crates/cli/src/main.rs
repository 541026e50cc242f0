use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use eforest::codec::{decode_batch, encode_batch, TreeMask};
use eforest::io::{load_csv, load_idx, save_csv, write_atomic, CsvOptions};
use eforest::metrics::{damage_curve, forest_stats, per_channel_mse, reconstruct, MaskSpec, Metric, ReconOptions};
use eforest::persist::{load_encodings_for, load_model, load_model_partial, save_encodings, save_model};
use eforest::synth::{tfidf_corpus, TextSpec};
use eforest::tree::depth_stats;
use eforest::{Dataset, Forest, Mode, Strategy, TrainConfig};

#[derive(Parser)]
#[command(name = "eforest", version, about = "Tree-ensemble autoencoder")]
struct Cli {
    /// Worker threads (0 = one per core).
    #[arg(long, global = true, env = "EFOREST_THREADS", default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a forest and save it as a model file.
    Train(TrainArgs),
    /// Write the leaf-index encoding of every row.
    Encode(EncodeArgs),
    /// Rebuild rows from an encoding file.
    Decode(DecodeArgs),
    /// Encode, decode and score a dataset.
    Reconstruct(ReconArgs),
    /// Reconstruction error with growing fractions of the trees.
    Damage(DamageArgs),
    /// Reconstruct a dataset with a model trained on another one.
    Reuse(ReconArgs),
    /// Depth, leaf and size statistics of a model.
    Stats(StatsArgs),
    /// Generate the synthetic tf-idf corpus as CSV.
    GenText(GenTextArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Idx,
    Csv,
}

#[derive(Args)]
struct DataArgs {
    /// Data file (IDX, optionally gzipped, or CSV).
    #[arg(long)]
    data: PathBuf,
    /// Defaults to idx for *ubyte* files and csv otherwise.
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// IDX label file.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// CSV column kinds, e.g. "num*784" or "num,cat:RED|GREEN".
    #[arg(long)]
    kinds: Option<String>,
    /// CSV has a header row.
    #[arg(long)]
    header: bool,
    /// CSV column holding integer class labels.
    #[arg(long)]
    label_col: Option<usize>,
    /// Use only the first N rows.
    #[arg(long)]
    limit: Option<usize>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    /// sup or unsup.
    #[arg(long)]
    mode: Option<Mode>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    trees: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    min_node: Option<usize>,
    #[arg(long)]
    max_depth: Option<u32>,
    /// Resample rows per tree (default: on for sup, off for unsup).
    #[arg(long)]
    bootstrap: Option<bool>,
    /// JSON training config; explicit flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EncodeArgs {
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct MaskArgs {
    /// Keep this fraction of the trees, chosen at random.
    #[arg(long)]
    mask_keep: Option<f64>,
    #[arg(long, default_value_t = 0)]
    mask_seed: u64,
}

impl MaskArgs {
    fn spec(&self) -> Option<MaskSpec> {
        self.mask_keep.map(|fraction| MaskSpec {
            fraction,
            seed: self.mask_seed,
        })
    }
}

#[derive(Args)]
struct DecodeArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    encodings: PathBuf,
    #[arg(long, default_value = "min")]
    strategy: Strategy,
    #[command(flatten)]
    mask: MaskArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReconArgs {
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value = "min")]
    strategy: Strategy,
    #[arg(long, default_value = "mse")]
    metric: Metric,
    #[command(flatten)]
    mask: MaskArgs,
    /// JSON report.
    #[arg(long)]
    report: PathBuf,
    /// Per-sample values as CSV (sample_index,metric_value).
    #[arg(long)]
    values_csv: Option<PathBuf>,
    /// Reconstructed rows as CSV.
    #[arg(long)]
    dump_recon: Option<PathBuf>,
    /// Also report MSE per colour plane (channel-planar data).
    #[arg(long)]
    channels: bool,
}

#[derive(Args)]
struct DamageArgs {
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_delimiter = ',', default_value = "0.25,0.5,0.75,1.0")]
    keep: Vec<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "min")]
    strategy: Strategy,
    #[arg(long, default_value = "mse")]
    metric: Metric,
    #[arg(long)]
    report: PathBuf,
}

#[derive(Args)]
struct StatsArgs {
    #[arg(long)]
    model: PathBuf,
    /// Skip trees that fail validation instead of rejecting the file.
    #[arg(long)]
    partial: bool,
}

#[derive(Args)]
struct GenTextArgs {
    #[arg(long, default_value_t = 2000)]
    docs: usize,
    #[arg(long, default_value_t = 500)]
    vocab: usize,
    #[arg(long, default_value_t = 10)]
    topics: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

/// Bad flag combinations; reported with the same exit status as clap uses.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global() {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    }
    let result = match cli.command {
        Command::Train(args) => train(args, cli.threads),
        Command::Encode(args) => encode(args),
        Command::Decode(args) => decode(args),
        Command::Reconstruct(args) => recon(args, false),
        Command::Damage(args) => damage(args),
        Command::Reuse(args) => recon(args, true),
        Command::Stats(args) => stats(args),
        Command::GenText(args) => gen_text(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is::<UsageError>() => {
            eprintln!("usage error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn load_data(args: &DataArgs) -> Result<Dataset> {
    let name = args.data.to_string_lossy();
    let format = args.format.unwrap_or(if name.contains("ubyte") {
        Format::Idx
    } else {
        Format::Csv
    });
    let data = match format {
        Format::Idx => load_idx(&args.data, args.labels.as_deref())?,
        Format::Csv => {
            let kinds = match &args.kinds {
                Some(spec) => CsvOptions::parse_kinds(spec)?,
                None => return Err(usage("--kinds is required for CSV input")),
            };
            let mut options = CsvOptions::new(kinds);
            if args.header {
                options = options.with_header();
            }
            if let Some(col) = args.label_col {
                options = options.with_label_column(col);
            }
            load_csv(&args.data, &options)?
        }
    };
    Ok(match args.limit {
        Some(n) if n < data.len() => data.slice(0..n),
        _ => data,
    })
}

fn load(path: &Path) -> Result<Forest> {
    load_model(path).with_context(|| format!("loading model {}", path.display()))
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())?;
    Ok(())
}

fn train(args: TrainArgs, threads: usize) -> Result<()> {
    let mut config = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str::<TrainConfig>(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => {
            let (Some(mode), Some(trees)) = (args.mode, args.trees) else {
                return Err(usage("--mode and --trees are required without --config"));
            };
            TrainConfig::new(mode, trees as usize, 0)
        }
    };
    if let Some(mode) = args.mode {
        config.mode = mode;
    }
    if let Some(trees) = args.trees {
        config.n_trees = trees as usize;
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(min_node) = args.min_node {
        config.min_node_size = min_node;
    }
    if args.max_depth.is_some() {
        config.max_depth_cap = args.max_depth;
    }
    if args.bootstrap.is_some() {
        config.bootstrap = args.bootstrap;
    }
    config.threads = threads;
    config.validate()?;

    let data = load_data(&args.data)?;
    if config.mode == Mode::Supervised && data.labels().is_none() {
        return Err(usage("supervised training needs labels (--labels or --label-col)"));
    }
    let start = Instant::now();
    let forest = eforest::train_forest(&data, &config)?;
    let seconds = start.elapsed().as_secs_f64();
    let hash = save_model(&forest, &args.out)?;
    let depth = depth_stats(&forest);
    println!(
        "{}",
        json!({
            "model": args.out,
            "hash": format!("{hash:016x}"),
            "mode": config.mode,
            "trees": forest.n_trees(),
            "rows": data.len(),
            "max_depth": depth.max_depth,
            "avg_depth": depth.mean_depth,
            "train_seconds": seconds,
        })
    );
    Ok(())
}

fn encode(args: EncodeArgs) -> Result<()> {
    let forest = load(&args.model)?;
    let data = load_data(&args.data)?;
    let matrix = encode_batch(&forest, &data)?;
    save_encodings(&matrix, &args.out)?;
    println!(
        "{}",
        json!({ "encodings": args.out, "rows": matrix.n_rows(), "trees": matrix.n_trees() })
    );
    Ok(())
}

fn decode(args: DecodeArgs) -> Result<()> {
    let forest = load(&args.model)?;
    let matrix = load_encodings_for(&args.encodings, &forest)?;
    let mask = args
        .mask
        .spec()
        .map(|m| TreeMask::random(forest.n_trees(), m.fraction, m.seed))
        .transpose()?;
    let recon = decode_batch(&forest, &matrix, args.strategy, mask.as_ref())?;
    save_csv(&recon, &args.out)?;
    println!("{}", json!({ "reconstructions": args.out, "rows": recon.len() }));
    Ok(())
}

fn recon(args: ReconArgs, reuse: bool) -> Result<()> {
    let forest = load(&args.model)?;
    let data = load_data(&args.data)?;
    let options = ReconOptions {
        strategy: args.strategy,
        metric: args.metric,
        mask: args.mask.spec(),
        reuse,
    };
    let start = Instant::now();
    let (mut report, reconstructed) = reconstruct(&forest, &data, &options)?;
    if args.channels {
        report.per_channel = Some(per_channel_mse(&data, &reconstructed)?);
    }
    write_json(&args.report, &report)?;
    if let Some(path) = &args.values_csv {
        write_atomic(path, report.to_csv().as_bytes())?;
    }
    if let Some(path) = &args.dump_recon {
        save_csv(&reconstructed, path)?;
    }
    println!(
        "{}",
        json!({
            "run": if reuse { "reuse" } else { "reconstruct" },
            "metric": report.metric,
            "mean": report.mean,
            "n": report.n,
            "per_channel": report.per_channel,
            "config": report.config,
            "seconds": start.elapsed().as_secs_f64(),
        })
    );
    Ok(())
}

fn damage(args: DamageArgs) -> Result<()> {
    let forest = load(&args.model)?;
    let data = load_data(&args.data)?;
    let reports = damage_curve(&forest, &data, &args.keep, args.strategy, args.seed, args.metric)?;
    write_json(&args.report, &reports)?;
    for r in &reports {
        println!(
            "{}",
            json!({
                "keep": r.config.mask_fraction,
                "trees_used": r.config.trees_used,
                "metric": r.metric,
                "mean": r.mean,
                "n": r.n,
            })
        );
    }
    Ok(())
}

fn stats(args: StatsArgs) -> Result<()> {
    let (forest, dropped) = if args.partial {
        let partial = load_model_partial(&args.model)?;
        (partial.forest, Some(partial.dropped))
    } else {
        (load(&args.model)?, None)
    };
    let mut value = serde_json::to_value(forest_stats(&forest))?;
    value["hash"] = json!(format!("{:016x}", forest.content_hash()));
    if let Some(dropped) = dropped {
        value["dropped_trees"] = json!(dropped);
    }
    println!("{value}");
    Ok(())
}

fn gen_text(args: GenTextArgs) -> Result<()> {
    if args.topics == 0 || args.vocab == 0 {
        return Err(usage("--topics and --vocab must be positive"));
    }
    let spec = TextSpec {
        docs: args.docs,
        vocab: args.vocab,
        topics: args.topics,
        seed: args.seed,
        ..TextSpec::default()
    };
    let data = tfidf_corpus(&spec)?;
    save_csv(&data, &args.out)?;
    println!(
        "{}",
        json!({ "out": args.out, "docs": data.len(), "vocab": args.vocab, "kinds": format!("num*{}", args.vocab) })
    );
    Ok(())
}
