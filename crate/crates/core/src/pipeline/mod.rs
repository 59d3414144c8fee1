//! End-to-end orchestration: ingest → split → convert → probe.
//!
//! A run writes everything under `<output root>/<config hash>/`:
//!
//! ```text
//! config.txt               canonical configuration
//! dataset/                 manifest.jsonl + signals.bin
//! manifests/split.jsonl
//! images/ or texts/        converted outputs + converted.jsonl
//! probe/                   head.bin + metrics.jsonl (when the probe is on)
//! summary.json
//! ```
//!
//! Nothing in the tree depends on time or on the worker count, so identical
//! configurations reproduce identical bytes. A failed run leaves its partial
//! outputs in place next to a `FAILED` file naming the stage and the error.

pub mod config;
pub mod convert;
pub mod inspect;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::image::ImageError;
use crate::ingest::har::load_har_dir;
use crate::ingest::sleep::load_sleep_edf_dir;
use crate::ingest::store::{read_dataset, read_split, write_dataset, write_split};
use crate::ingest::{
    generate_synthetic_dataset, parse_seizure_csv, split_dataset, Dataset, IngestError, Split, SplitManifest,
};
use crate::jsonl;
use crate::numeric::NumericError;
use crate::probe::{evaluate, suggested_learning_rate, train_centered, Evaluation, ProbeError, ProbeHead, TrainConfig};
use crate::text::TextError;

pub use config::{AdapterConfig, DatasetSpec, LearningRate, PipelineConfig, ProbeSpec, OUTPUT_ROOT_ENV};
pub use convert::{convert_images, convert_texts, load_features, ConvertReport};

pub const FAILED_MARKER: &str = "FAILED";
pub const SUMMARY_FILE: &str = "summary.json";
pub const CONFIG_FILE: &str = "config.txt";
pub const HEAD_FILE: &str = "head.bin";
pub const METRICS_FILE: &str = "metrics.jsonl";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Text(#[from] TextError),
    #[error(transparent)]
    Probe(#[from] ProbeError),
    #[error("{0}")]
    Unrecognized(String),
}

impl PipelineError {
    /// 1 for invalid input or configuration, 2 for I/O failures, 3 for
    /// numeric failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Ingest(IngestError::Io { .. }) => 2,
            PipelineError::Image(ImageError::Png(_)) => 2,
            PipelineError::Image(ImageError::Numeric(NumericError::NonFinite { .. })) => 3,
            PipelineError::Text(TextError::OutOfRange { .. } | TextError::NonFinite { .. }) => 3,
            PipelineError::Probe(ProbeError::Diverged { .. }) => 3,
            _ => 1,
        }
    }
}

impl From<NumericError> for PipelineError {
    fn from(e: NumericError) -> Self {
        PipelineError::Image(ImageError::Numeric(e))
    }
}

fn io(path: &Path, e: std::io::Error) -> PipelineError {
    PipelineError::Ingest(IngestError::io(path, e))
}

/// Load the dataset a config describes.
pub fn ingest(spec: &DatasetSpec) -> Result<Dataset, PipelineError> {
    let dataset = match spec {
        DatasetSpec::Synth(s) => generate_synthetic_dataset(s)?,
        DatasetSpec::Har { path, partition } => load_har_dir(path, partition)?,
        DatasetSpec::SeizureCsv { path, options } => {
            let bytes = std::fs::read(path).map_err(|e| io(path, e))?;
            let name = path.file_name().map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into());
            parse_seizure_csv(&name, &bytes, *options)?
        }
        DatasetSpec::SleepEdf { path, .. } => load_sleep_edf_dir(path, &spec.sleep_options().expect("edf spec"))?,
    };
    tracing::info!(
        format = spec.format(),
        instances = dataset.manifest.len(),
        checksum = %dataset.manifest.checksum,
        "dataset ingested"
    );
    Ok(dataset)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub epochs: usize,
    pub learning_rate: f64,
    pub features: usize,
    pub initial_objective: f64,
    pub final_objective: f64,
    pub train: Evaluation,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub valid: Option<Evaluation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test: Option<Evaluation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub config_hash: String,
    pub dataset: String,
    pub dataset_checksum: String,
    pub adapter: String,
    pub instances: usize,
    pub classes: usize,
    pub split_sizes: [usize; 3],
    pub conversion: ConvertReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probe: Option<ProbeReport>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Reuse `dataset/` and `manifests/split.jsonl` from an earlier run in
    /// the same directory when they load cleanly and agree with each other.
    pub resume: bool,
}

/// Train a head on the `train` instances of a converted directory and
/// evaluate it on every non-empty split.
pub fn train_probe(
    converted: &Path,
    split: &SplitManifest,
    spec: &ProbeSpec,
) -> Result<(ProbeHead, ProbeReport, Vec<f64>), PipelineError> {
    let (train_set, classes) = load_features(converted, split, Split::Train)?;
    let learning_rate = match spec.learning_rate {
        LearningRate::Fixed(lr) => lr,
        LearningRate::Auto => suggested_learning_rate(&train_set, spec.batch_size),
    };
    let cfg = TrainConfig {
        learning_rate,
        epochs: spec.epochs,
        batch_size: spec.batch_size,
        seed: spec.seed,
        l2: spec.l2,
    };
    let outcome = train_centered(&train_set, classes, &cfg)?;
    let eval_split = |s: Split| -> Result<Option<Evaluation>, PipelineError> {
        let (data, _) = load_features(converted, split, s)?;
        if data.is_empty() {
            return Ok(None);
        }
        Ok(Some(evaluate(&outcome.head, &data)?))
    };
    let report = ProbeReport {
        epochs: spec.epochs,
        learning_rate,
        features: train_set.width(),
        initial_objective: outcome.history[0],
        final_objective: *outcome.history.last().expect("history holds the initial value"),
        train: evaluate(&outcome.head, &train_set)?,
        valid: eval_split(Split::Valid)?,
        test: eval_split(Split::Test)?,
    };
    tracing::info!(
        learning_rate,
        final_objective = report.final_objective,
        test_accuracy = report.test.as_ref().map(|e| e.accuracy),
        "probe trained"
    );
    Ok((outcome.head, report, outcome.history))
}

/// Line-delimited metric records: the objective history, then one record per
/// evaluated split.
pub fn render_metrics(report: &ProbeReport, history: &[f64]) -> String {
    #[derive(Serialize)]
    struct History<'a> {
        kind: &'static str,
        learning_rate: f64,
        objective: &'a [f64],
    }
    #[derive(Serialize)]
    struct Metrics<'a> {
        kind: &'static str,
        split: &'static str,
        accuracy: f64,
        macro_f1: f64,
        confusion: &'a [Vec<u64>],
    }
    let mut out = jsonl::to_line(&History {
        kind: "history",
        learning_rate: report.learning_rate,
        objective: history,
    });
    let evals = [("train", Some(&report.train)), ("valid", report.valid.as_ref()), ("test", report.test.as_ref())];
    for (split, e) in evals {
        if let Some(e) = e {
            out.push_str(&jsonl::to_line(&Metrics {
                kind: "metrics",
                split,
                accuracy: e.accuracy,
                macro_f1: e.macro_f1,
                confusion: &e.confusion.counts,
            }));
        }
    }
    out
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), PipelineError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| io(parent, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| io(path, e))
}

fn resumed(dir: &Path) -> Option<(Dataset, SplitManifest)> {
    let dataset = read_dataset(&dir.join("dataset")).ok()?;
    let split = read_split(&dir.join("manifests").join("split.jsonl")).ok()?;
    (split.dataset_checksum == dataset.manifest.checksum).then_some((dataset, split))
}

/// Run every stage. On failure a `FAILED` marker is written to the run
/// directory and the error is returned.
pub fn run_pipeline(config: &PipelineConfig, options: RunOptions) -> Result<RunSummary, PipelineError> {
    config.validate()?;
    let dir = config.output_dir();
    std::fs::create_dir_all(&dir).map_err(|e| io(&dir, e))?;
    let marker = dir.join(FAILED_MARKER);
    if marker.exists() {
        std::fs::remove_file(&marker).map_err(|e| io(&marker, e))?;
    }
    let mut stage = "setup";
    let result = run_stages(config, options, &dir, &mut stage);
    if let Err(e) = &result {
        tracing::error!(stage, error = %e, "pipeline failed");
        let _ = std::fs::write(&marker, format!("stage={stage}\nerror={e}\n"));
    }
    result
}

fn run_stages(
    config: &PipelineConfig,
    options: RunOptions,
    dir: &Path,
    stage: &mut &'static str,
) -> Result<RunSummary, PipelineError> {
    let hash = config.hash();
    tracing::info!(config_hash = %hash, dir = %dir.display(), "pipeline started");
    write(&dir.join(CONFIG_FILE), config.canonical().as_bytes())?;

    let reused = if options.resume { resumed(dir) } else { None };
    let (dataset, split) = match reused {
        Some(pair) => {
            tracing::info!("reusing ingested dataset and split");
            pair
        }
        None => {
            *stage = "ingest";
            let dataset = ingest(&config.dataset)?;
            write_dataset(&dir.join("dataset"), &dataset)?;
            *stage = "split";
            let split = split_dataset(&dataset.manifest, &config.split)?;
            write_split(&dir.join("manifests").join("split.jsonl"), &split)?;
            (dataset, split)
        }
    };

    *stage = "convert";
    let converted: PathBuf = convert::adapter_dir(dir, config.adapter.name());
    let conversion = match &config.adapter {
        AdapterConfig::Image(c) => convert_images(&dataset, &split, c, &converted, config.parallelism)?,
        AdapterConfig::Text(c) => convert_texts(&dataset, &split, c, &converted, config.parallelism)?,
    };

    let probe = if config.probe.enabled {
        *stage = "probe";
        let (head, report, history) = train_probe(&converted, &split, &config.probe)?;
        write(&dir.join("probe").join(HEAD_FILE), &head.to_bytes())?;
        write(&dir.join("probe").join(METRICS_FILE), render_metrics(&report, &history).as_bytes())?;
        Some(report)
    } else {
        None
    };

    *stage = "summary";
    let summary = RunSummary {
        config_hash: hash,
        dataset: config.dataset.format().to_string(),
        dataset_checksum: dataset.manifest.checksum.clone(),
        adapter: config.adapter.name().to_string(),
        instances: dataset.manifest.len(),
        classes: dataset.manifest.class_count(),
        split_sizes: split.sizes(),
        conversion,
        probe,
    };
    let mut json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    json.push('\n');
    write(&dir.join(SUMMARY_FILE), json.as_bytes())?;
    tracing::info!("pipeline finished");
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(adapter: &str) -> PipelineConfig {
        let text = format!(
            "synth.channels = {}\nsynth.length = 40\nsynth.classes = 2\nsynth.per_class = 10\n\
             adapter = {adapter}\nimage.height = 16\nimage.width = 16\ntext.max_len = 32\nprobe.epochs = 3\n",
            if adapter == "text" { 1 } else { 3 }
        );
        PipelineConfig::parse(&text).unwrap()
    }

    #[test]
    fn image_run_populates_probe_metrics() {
        let tmp = tempfile::tempdir().unwrap();
        let mut cfg = small("image");
        cfg.output_root = tmp.path().into();
        let s = run_pipeline(&cfg, RunOptions::default()).unwrap();
        assert_eq!(s.instances, 20);
        assert_eq!(s.split_sizes, [12, 4, 4]);
        assert!(s.probe.unwrap().test.is_some());
        let dir = cfg.output_dir();
        for f in ["config.txt", "summary.json", "dataset/manifest.jsonl", "manifests/split.jsonl", "images/converted.jsonl", "probe/head.bin"] {
            assert!(dir.join(f).exists(), "{f} missing");
        }
        let back: RunSummary = serde_json::from_slice(&std::fs::read(dir.join(SUMMARY_FILE)).unwrap()).unwrap();
        assert_eq!(back.config_hash, cfg.hash());
    }

    #[test]
    fn text_run_reports_overflow_statuses() {
        let tmp = tempfile::tempdir().unwrap();
        let mut cfg = small("text");
        cfg.output_root = tmp.path().into();
        let s = run_pipeline(&cfg, RunOptions::default()).unwrap();
        assert_eq!(s.conversion.overflow.get("downsampled"), Some(&20));
        let train = std::fs::read_to_string(cfg.output_dir().join("texts/train.txt")).unwrap();
        assert_eq!(train.lines().count(), 12);
        assert!(train.lines().all(|l| l.split(' ').count() == 20));
    }

    #[test]
    fn failure_leaves_marker() {
        let tmp = tempfile::tempdir().unwrap();
        let mut cfg = small("text");
        cfg.output_root = tmp.path().into();
        if let AdapterConfig::Text(t) = &mut cfg.adapter {
            t.max_len = 10;
        }
        let err = run_pipeline(&cfg, RunOptions::default()).unwrap_err();
        assert_eq!(err.exit_code(), 1);
        let marker = std::fs::read_to_string(cfg.output_dir().join(FAILED_MARKER)).unwrap();
        assert!(marker.starts_with("stage=convert"));
        assert!(cfg.output_dir().join("dataset/manifest.jsonl").exists());
        if let AdapterConfig::Text(t) = &mut cfg.adapter {
            t.force = true;
        }
        // a different hash, so a separate directory
        run_pipeline(&cfg, RunOptions::default()).unwrap();
        assert!(!cfg.output_dir().join(FAILED_MARKER).exists());
    }

    #[test]
    fn text_on_multichannel_fails_before_any_output() {
        let tmp = tempfile::tempdir().unwrap();
        let mut cfg = small("text");
        cfg.dataset = DatasetSpec::Synth(crate::ingest::SynthSpec::default());
        cfg.output_root = tmp.path().join("root");
        assert_eq!(run_pipeline(&cfg, RunOptions::default()).unwrap_err().exit_code(), 1);
        assert!(!cfg.output_root.exists());
    }

    #[test]
    fn resume_reuses_earlier_stages() {
        let tmp = tempfile::tempdir().unwrap();
        let mut cfg = small("image");
        cfg.output_root = tmp.path().into();
        let a = run_pipeline(&cfg, RunOptions::default()).unwrap();
        let b = run_pipeline(&cfg, RunOptions { resume: true }).unwrap();
        assert_eq!(a, b);
    }
}
