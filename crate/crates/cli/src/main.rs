use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tracing_subscriber::EnvFilter;

use tsadapt::image::ReshapePolicy;
use tsadapt::ingest::sleep::{load_sleep_edf_dir, SleepEdfOptions};
use tsadapt::ingest::store::{read_dataset, read_split, write_dataset, write_split, SPLIT_FILE};
use tsadapt::ingest::{har::load_har_dir, parse_seizure_csv, split_dataset, SeizureCsvOptions, Split, SplitOptions, SplitUnit, SynthSpec};
use tsadapt::pipeline::config::{parse_adapter_sections, parse_normalization, parse_ratios};
use tsadapt::pipeline::inspect::inspect;
use tsadapt::pipeline::{
    convert_images, convert_texts, ingest, load_features, render_metrics, run_pipeline, train_probe, DatasetSpec,
    LearningRate, PipelineConfig, PipelineError, ProbeSpec, RunOptions,
};
use tsadapt::probe::{evaluate, ProbeHead};
use tsadapt::text::Aggregator;

#[derive(Parser)]
#[command(name = "tsadapt", version, about = "Convert biosignal time series into images or integer text")]
struct Cli {
    /// Log filter (overridden by TSADAPT_LOG).
    #[arg(long, global = true, default_value = "info")]
    log: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load a dataset and write its manifest and samples.
    Ingest(IngestArgs),
    /// Draw a seeded train/valid/test split of an ingested dataset.
    Split(SplitArgs),
    /// Convert an ingested dataset.
    #[command(subcommand)]
    Convert(ConvertCommand),
    /// Train or evaluate the linear probe.
    #[command(subcommand)]
    Probe(ProbeCommand),
    /// Describe an artifact.
    Inspect { path: PathBuf },
    /// Run ingest, split, convert and probe from one config file.
    Run(RunArgs),
}

#[derive(Args)]
struct IngestArgs {
    /// har, seizure-csv, edf or synth.
    #[arg(long)]
    format: String,
    #[arg(long)]
    out: PathBuf,
    /// Input file or directory (all formats but synth).
    #[arg(long)]
    path: Option<PathBuf>,
    /// HAR partition name.
    #[arg(long, default_value = "train")]
    partition: String,
    /// Samples per seizure CSV row.
    #[arg(long, default_value_t = 178)]
    samples: usize,
    /// Seizure versus everything else.
    #[arg(long)]
    binary: bool,
    /// EDF channel label.
    #[arg(long, default_value = "Fpz-Cz")]
    channel: String,
    #[arg(long, default_value_t = 3000)]
    epoch_samples: usize,
    /// Wake epochs kept around each night's sleep period.
    #[arg(long)]
    trim_wake: Option<usize>,
    #[arg(long, default_value_t = 9)]
    channels: usize,
    #[arg(long, default_value_t = 128)]
    length: usize,
    #[arg(long, default_value_t = 6)]
    classes: usize,
    #[arg(long, default_value_t = 50)]
    per_class: usize,
    #[arg(long, default_value_t = 3.0)]
    separation: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct SplitArgs {
    /// Ingested dataset directory.
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, default_value = "0.6,0.2,0.2")]
    ratios: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    stratify: bool,
    /// Keep groups (subjects, recordings) together.
    #[arg(long)]
    by_group: bool,
    /// Defaults to `split.jsonl` inside the dataset directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ConvertCommon {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    split: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Config file supplying `image.*` / `text.*` keys; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    parallelism: usize,
}

#[derive(Subcommand)]
enum ConvertCommand {
    Image {
        #[command(flatten)]
        common: ConvertCommon,
        #[arg(long)]
        height: Option<usize>,
        #[arg(long)]
        width: Option<usize>,
        /// keep, near-square or auto.
        #[arg(long)]
        reshape: Option<String>,
        /// per-instance or global(min,max).
        #[arg(long)]
        norm: Option<String>,
    },
    Text {
        #[command(flatten)]
        common: ConvertCommon,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        max_len: Option<usize>,
        /// mean, first or max-abs.
        #[arg(long)]
        aggregator: Option<String>,
        #[arg(long)]
        separator: Option<String>,
        #[arg(long)]
        force: bool,
        #[arg(long)]
        legacy_flatten: bool,
        #[arg(long)]
        integer_input: bool,
    },
}

#[derive(Subcommand)]
enum ProbeCommand {
    Train {
        /// Converted directory.
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        split: PathBuf,
        #[arg(long, default_value_t = 30)]
        epochs: usize,
        /// A positive step size, or `auto`.
        #[arg(long, default_value = "auto")]
        lr: String,
        #[arg(long, default_value_t = 16)]
        batch_size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.0)]
        l2: f64,
        #[arg(long)]
        out: PathBuf,
    },
    Eval {
        #[arg(long)]
        head: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        split: PathBuf,
        /// Which part of the split to evaluate.
        #[arg(long, default_value = "test")]
        on: String,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config file and the environment.
    #[arg(long)]
    output_root: Option<PathBuf>,
    #[arg(long)]
    parallelism: Option<usize>,
    /// Reuse an earlier run's dataset and split.
    #[arg(long)]
    resume: bool,
}

fn invalid(msg: impl Into<String>) -> PipelineError {
    PipelineError::Config(msg.into())
}

fn read_text(path: &Path) -> Result<String, PipelineError> {
    Ok(tsadapt::jsonl::read_text(path)?)
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), PipelineError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| tsadapt::ingest::IngestError::Io {
            path: parent.display().to_string(),
            source: e,
        })?;
    }
    std::fs::write(path, bytes).map_err(|e| {
        tsadapt::ingest::IngestError::Io {
            path: path.display().to_string(),
            source: e,
        }
        .into()
    })
}

fn print_json(value: &impl serde::Serialize) {
    println!("{}", serde_json::to_string(value).expect("serializable"));
}

fn cmd_ingest(a: IngestArgs) -> Result<(), PipelineError> {
    let path = || a.path.clone().ok_or_else(|| invalid(format!("--path is required for --format {}", a.format)));
    let dataset = match a.format.as_str() {
        "synth" => ingest(&DatasetSpec::Synth(SynthSpec {
            channels: a.channels,
            length: a.length,
            classes: a.classes,
            per_class: a.per_class,
            separation: a.separation,
            seed: a.seed,
        }))?,
        "har" => load_har_dir(&path()?, &a.partition)?,
        "seizure-csv" => {
            let p = path()?;
            let bytes = std::fs::read(&p).map_err(|e| tsadapt::ingest::IngestError::Io {
                path: p.display().to_string(),
                source: e,
            })?;
            let name = p.file_name().map_or_else(|| p.display().to_string(), |n| n.to_string_lossy().into());
            parse_seizure_csv(
                &name,
                &bytes,
                SeizureCsvOptions {
                    samples: a.samples,
                    binary: a.binary,
                },
            )?
        }
        "edf" => load_sleep_edf_dir(
            &path()?,
            &SleepEdfOptions {
                channel: a.channel.clone(),
                epoch_samples: a.epoch_samples,
                trim_wake_epochs: a.trim_wake,
                ..Default::default()
            },
        )?,
        other => return Err(invalid(format!("unknown format {other:?}"))),
    };
    write_dataset(&a.out, &dataset)?;
    let m = &dataset.manifest;
    print_json(&serde_json::json!({
        "dataset": m.name,
        "instances": m.len(),
        "channels": m.channels,
        "length": m.length,
        "classes": m.class_names,
        "checksum": m.checksum,
        "out": a.out,
    }));
    Ok(())
}

fn cmd_split(a: SplitArgs) -> Result<(), PipelineError> {
    let dataset = read_dataset(&a.dataset)?;
    let opts = SplitOptions {
        ratios: parse_ratios(&a.ratios)?,
        seed: a.seed,
        stratify: a.stratify,
        unit: if a.by_group { SplitUnit::Group } else { SplitUnit::Instance },
    };
    let split = split_dataset(&dataset.manifest, &opts)?;
    let out = a.out.unwrap_or_else(|| a.dataset.join(SPLIT_FILE));
    write_split(&out, &split)?;
    let [train, valid, test] = split.sizes();
    print_json(&serde_json::json!({"train": train, "valid": valid, "test": test, "out": out}));
    Ok(())
}

fn cmd_convert(c: ConvertCommand) -> Result<(), PipelineError> {
    let load = |common: &ConvertCommon| -> Result<_, PipelineError> {
        let sections = match &common.config {
            Some(p) => parse_adapter_sections(&read_text(p)?)?,
            None => Default::default(),
        };
        let dataset = read_dataset(&common.dataset)?;
        let split = read_split(&common.split)?;
        Ok((sections, dataset, split))
    };
    let report = match c {
        ConvertCommand::Image {
            common,
            height,
            width,
            reshape,
            norm,
        } => {
            let ((mut cfg, _), dataset, split) = load(&common)?;
            if let Some(h) = height {
                cfg.height = h;
            }
            if let Some(w) = width {
                cfg.width = w;
            }
            if let Some(r) = reshape {
                cfg.reshape = r.parse::<ReshapePolicy>().map_err(invalid)?;
            }
            if let Some(n) = norm {
                cfg.normalization = parse_normalization(&n)?;
            }
            convert_images(&dataset, &split, &cfg, &common.out, common.parallelism)?
        }
        ConvertCommand::Text {
            common,
            alpha,
            max_len,
            aggregator,
            separator,
            force,
            legacy_flatten,
            integer_input,
        } => {
            let ((_, mut cfg), dataset, split) = load(&common)?;
            if let Some(v) = alpha {
                cfg.alpha = v;
            }
            if let Some(v) = max_len {
                cfg.max_len = v;
            }
            if let Some(v) = aggregator {
                cfg.aggregator = v.parse::<Aggregator>().map_err(invalid)?;
            }
            if let Some(v) = separator {
                cfg.separator = v;
            }
            cfg.force |= force;
            cfg.legacy_flatten |= legacy_flatten;
            cfg.integer_input |= integer_input;
            if dataset.manifest.channels > 1 && !cfg.legacy_flatten {
                return Err(invalid(format!(
                    "the text adapter needs a single-channel dataset, this one has {} channels; \
                     use `convert image` or --legacy-flatten",
                    dataset.manifest.channels
                )));
            }
            convert_texts(&dataset, &split, &cfg, &common.out, common.parallelism)?
        }
    };
    print_json(&report);
    Ok(())
}

fn cmd_probe(c: ProbeCommand) -> Result<(), PipelineError> {
    match c {
        ProbeCommand::Train {
            input,
            split,
            epochs,
            lr,
            batch_size,
            seed,
            l2,
            out,
        } => {
            let learning_rate = match lr.as_str() {
                "auto" => LearningRate::Auto,
                v => LearningRate::Fixed(
                    v.parse()
                        .map_err(|_| invalid(format!("--lr expects a number or auto, got {v:?}")))?,
                ),
            };
            let spec = ProbeSpec {
                enabled: true,
                epochs,
                learning_rate,
                batch_size,
                seed,
                l2,
            };
            let split = read_split(&split)?;
            let (head, report, history) = train_probe(&input, &split, &spec)?;
            write_bytes(&out, &head.to_bytes())?;
            print!("{}", render_metrics(&report, &history));
        }
        ProbeCommand::Eval { head, input, split, on } => {
            let bytes = std::fs::read(&head).map_err(|e| tsadapt::ingest::IngestError::Io {
                path: head.display().to_string(),
                source: e,
            })?;
            let head = ProbeHead::from_bytes(&bytes)?;
            let which: Split = on.parse().map_err(|e: String| invalid(e))?;
            let (data, _) = load_features(&input, &read_split(&split)?, which)?;
            let e = evaluate(&head, &data)?;
            print_json(&serde_json::json!({"split": which.as_str(), "metric": "accuracy", "value": e.accuracy}));
            print_json(&serde_json::json!({"split": which.as_str(), "metric": "macro_f1", "value": e.macro_f1}));
            for (truth, row) in e.confusion.counts.iter().enumerate() {
                print_json(&serde_json::json!({"split": which.as_str(), "metric": "confusion", "truth": truth, "predicted": row}));
            }
        }
    }
    Ok(())
}

fn cmd_run(a: RunArgs) -> Result<(), PipelineError> {
    let mut config = PipelineConfig::parse(&read_text(&a.config)?)?;
    config.apply_env();
    if let Some(root) = a.output_root {
        config.output_root = root;
    }
    if let Some(n) = a.parallelism {
        config.parallelism = n;
    }
    let summary = run_pipeline(&config, RunOptions { resume: a.resume })?;
    print_json(&serde_json::json!({"output": config.output_dir(), "summary": summary}));
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let filter = EnvFilter::try_from_env("TSADAPT_LOG").unwrap_or_else(|_| EnvFilter::new(&cli.log));
    tracing_subscriber::fmt()
        .json()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .init();

    let result = match cli.command {
        Command::Ingest(a) => cmd_ingest(a),
        Command::Split(a) => cmd_split(a),
        Command::Convert(c) => cmd_convert(c),
        Command::Probe(c) => cmd_probe(c),
        Command::Inspect { path } => inspect(&path).map(|s| print!("{s}")),
        Command::Run(a) => cmd_run(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            tracing::error!(error = %e, "command failed");
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
