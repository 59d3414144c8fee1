//! Pipeline configuration as line-oriented `key = value` text.
//!
//! `#` starts a comment. Unknown keys are rejected. [`PipelineConfig::canonical`]
//! renders every semantically meaningful field in a fixed order; the output
//! root and the worker count are left out, so they never change the hash.

use std::path::PathBuf;

use crate::image::{ImageAdapterConfig, Normalization, ReshapePolicy};
use crate::ingest::sleep::{SleepEdfOptions, StageMapping};
use crate::ingest::{SeizureCsvOptions, SplitOptions, SplitUnit, SynthSpec};
use crate::text::{Aggregator, TextAdapterConfig};

use super::PipelineError;

/// Environment variable that overrides `output.root`.
pub const OUTPUT_ROOT_ENV: &str = "TSADAPT_OUTPUT_ROOT";

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSpec {
    Synth(SynthSpec),
    /// A HAR partition directory and the partition name (`train`/`test`).
    Har { path: PathBuf, partition: String },
    SeizureCsv { path: PathBuf, options: SeizureCsvOptions },
    /// A directory of Sleep-EDF PSG/hypnogram pairs.
    SleepEdf {
        path: PathBuf,
        channel: String,
        epoch_samples: usize,
        trim_wake_epochs: Option<usize>,
    },
}

impl DatasetSpec {
    pub fn format(&self) -> &'static str {
        match self {
            DatasetSpec::Synth(_) => "synth",
            DatasetSpec::Har { .. } => "har",
            DatasetSpec::SeizureCsv { .. } => "seizure-csv",
            DatasetSpec::SleepEdf { .. } => "edf",
        }
    }

    /// Channels every instance of this dataset will have.
    pub fn channels(&self) -> usize {
        match self {
            DatasetSpec::Synth(s) => s.channels,
            DatasetSpec::Har { .. } => crate::ingest::har::HAR_CHANNEL_STEMS.len(),
            DatasetSpec::SeizureCsv { .. } | DatasetSpec::SleepEdf { .. } => 1,
        }
    }

    pub fn sleep_options(&self) -> Option<SleepEdfOptions> {
        match self {
            DatasetSpec::SleepEdf {
                channel,
                epoch_samples,
                trim_wake_epochs,
                ..
            } => Some(SleepEdfOptions {
                channel: channel.clone(),
                epoch_samples: *epoch_samples,
                mapping: StageMapping::default(),
                trim_wake_epochs: *trim_wake_epochs,
                wake_class: "W".into(),
            }),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AdapterConfig {
    Image(ImageAdapterConfig),
    Text(TextAdapterConfig),
}

impl AdapterConfig {
    pub fn name(&self) -> &'static str {
        match self {
            AdapterConfig::Image(_) => "image",
            AdapterConfig::Text(_) => "text",
        }
    }

    pub fn hash(&self) -> String {
        match self {
            AdapterConfig::Image(c) => c.hash(),
            AdapterConfig::Text(c) => c.hash(),
        }
    }
}

/// Step size for the probe: fixed, or derived from the training features.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LearningRate {
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeSpec {
    pub enabled: bool,
    pub epochs: usize,
    pub learning_rate: LearningRate,
    pub batch_size: usize,
    pub seed: u64,
    pub l2: f64,
}

impl Default for ProbeSpec {
    fn default() -> Self {
        Self {
            enabled: true,
            epochs: 30,
            learning_rate: LearningRate::Auto,
            batch_size: 16,
            seed: 0,
            l2: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub dataset: DatasetSpec,
    pub adapter: AdapterConfig,
    pub split: SplitOptions,
    pub probe: ProbeSpec,
    pub output_root: PathBuf,
    pub parallelism: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetSpec::Synth(SynthSpec::default()),
            adapter: AdapterConfig::Image(ImageAdapterConfig::default()),
            split: SplitOptions::default(),
            probe: ProbeSpec::default(),
            output_root: PathBuf::from("out"),
            parallelism: 1,
        }
    }
}

fn invalid(msg: impl Into<String>) -> PipelineError {
    PipelineError::Config(msg.into())
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, PipelineError> {
    value
        .parse()
        .map_err(|_| invalid(format!("{key}: cannot parse {value:?}")))
}

fn flag(key: &str, value: &str) -> Result<bool, PipelineError> {
    match value {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(invalid(format!("{key}: expected a boolean, got {value:?}"))),
    }
}

pub fn parse_ratios(value: &str) -> Result<[f64; 3], PipelineError> {
    let parts: Vec<&str> = value.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(invalid(format!("ratios need three comma-separated values, got {value:?}")));
    }
    let mut r = [0.0; 3];
    for (slot, p) in r.iter_mut().zip(parts) {
        *slot = num("ratios", p)?;
    }
    Ok(r)
}

pub fn parse_normalization(value: &str) -> Result<Normalization, PipelineError> {
    match value {
        "per-instance" | "per_instance" => Ok(Normalization::PerInstance),
        other => {
            let inner = other
                .strip_prefix("global(")
                .and_then(|s| s.strip_suffix(')'))
                .ok_or_else(|| invalid(format!("normalization {other:?}: use per-instance or global(min,max)")))?;
            let (min, max) = inner
                .split_once(',')
                .ok_or_else(|| invalid(format!("normalization {other:?}: use global(min,max)")))?;
            Ok(Normalization::Global {
                min: num("image.norm", min.trim())?,
                max: num("image.norm", max.trim())?,
            })
        }
    }
}

/// Loosely typed key/value view, filled line by line before the typed config
/// is assembled, so keys may come in any order.
#[derive(Default)]
struct Raw {
    entries: std::collections::BTreeMap<String, (usize, String)>,
}

impl Raw {
    fn read(text: &str) -> Result<Self, PipelineError> {
        let mut raw = Raw::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| invalid(format!("line {}: expected key = value", i + 1)))?;
            let (k, v) = (k.trim().to_string(), v.trim().to_string());
            if let Some((first, _)) = raw.entries.insert(k.clone(), (i + 1, v)) {
                return Err(invalid(format!("line {}: {k} already set on line {first}", i + 1)));
            }
        }
        Ok(raw)
    }

    fn take(&mut self, key: &str) -> Option<String> {
        self.entries.remove(key).map(|(_, v)| v)
    }

    fn take_or<T: std::str::FromStr>(&mut self, key: &str, default: T) -> Result<T, PipelineError> {
        match self.take(key) {
            Some(v) => num(key, &v),
            None => Ok(default),
        }
    }

    fn flag_or(&mut self, key: &str, default: bool) -> Result<bool, PipelineError> {
        match self.take(key) {
            Some(v) => flag(key, &v),
            None => Ok(default),
        }
    }

    fn path(&mut self, key: &str) -> Result<PathBuf, PipelineError> {
        self.take(key)
            .map(PathBuf::from)
            .ok_or_else(|| invalid(format!("{key} is required for this dataset format")))
    }
}

/// Both adapter sections are accepted so one file can switch adapters by
/// changing a single key; only the chosen one enters the hash.
fn take_adapters(raw: &mut Raw) -> Result<(ImageAdapterConfig, TextAdapterConfig), PipelineError> {
    let di = ImageAdapterConfig::default();
    let image = ImageAdapterConfig {
        height: raw.take_or("image.height", di.height)?,
        width: raw.take_or("image.width", di.width)?,
        reshape: match raw.take("image.reshape") {
            Some(v) => v.parse::<ReshapePolicy>().map_err(invalid)?,
            None => di.reshape,
        },
        normalization: match raw.take("image.norm") {
            Some(v) => parse_normalization(&v)?,
            None => di.normalization,
        },
    };
    let dt = TextAdapterConfig::default();
    let text = TextAdapterConfig {
        alpha: raw.take_or("text.alpha", dt.alpha)?,
        max_len: raw.take_or("text.max_len", dt.max_len)?,
        aggregator: match raw.take("text.aggregator") {
            Some(v) => v.parse::<Aggregator>().map_err(invalid)?,
            None => dt.aggregator,
        },
        separator: match raw.take("text.separator") {
            Some(v) => serde_json::from_str(&v)
                .map_err(|_| invalid(format!("text.separator must be a quoted string, got {v}")))?,
            None => dt.separator,
        },
        integer_input: raw.flag_or("text.integer_input", dt.integer_input)?,
        force: raw.flag_or("text.force", dt.force)?,
        legacy_flatten: raw.flag_or("text.legacy_flatten", dt.legacy_flatten)?,
    };
    Ok((image, text))
}

/// The `image.*` and `text.*` sections of a config file, ignoring every
/// other key.
pub fn parse_adapter_sections(text: &str) -> Result<(ImageAdapterConfig, TextAdapterConfig), PipelineError> {
    let mut raw = Raw::read(text)?;
    take_adapters(&mut raw)
}

impl PipelineConfig {
    /// Parse `key = value` lines. Keys left unset take their defaults.
    pub fn parse(text: &str) -> Result<Self, PipelineError> {
        Self::from_raw(Raw::read(text)?)
    }

    fn from_raw(mut raw: Raw) -> Result<Self, PipelineError> {
        let format = raw.take("dataset.format").unwrap_or_else(|| "synth".into());
        let dataset = match format.as_str() {
            "synth" => {
                let d = SynthSpec::default();
                DatasetSpec::Synth(SynthSpec {
                    channels: raw.take_or("synth.channels", d.channels)?,
                    length: raw.take_or("synth.length", d.length)?,
                    classes: raw.take_or("synth.classes", d.classes)?,
                    per_class: raw.take_or("synth.per_class", d.per_class)?,
                    separation: raw.take_or("synth.separation", d.separation)?,
                    seed: raw.take_or("synth.seed", d.seed)?,
                })
            }
            "har" => DatasetSpec::Har {
                path: raw.path("dataset.path")?,
                partition: raw.take("dataset.partition").unwrap_or_else(|| "train".into()),
            },
            "seizure-csv" => {
                let d = SeizureCsvOptions::default();
                DatasetSpec::SeizureCsv {
                    path: raw.path("dataset.path")?,
                    options: SeizureCsvOptions {
                        samples: raw.take_or("dataset.samples", d.samples)?,
                        binary: raw.flag_or("dataset.binary", d.binary)?,
                    },
                }
            }
            "edf" => {
                let d = SleepEdfOptions::default();
                DatasetSpec::SleepEdf {
                    path: raw.path("dataset.path")?,
                    channel: raw.take("dataset.channel").unwrap_or(d.channel),
                    epoch_samples: raw.take_or("dataset.epoch_samples", d.epoch_samples)?,
                    trim_wake_epochs: match raw.take("dataset.trim_wake_epochs") {
                        None => None,
                        Some(v) if v == "none" => None,
                        Some(v) => Some(num("dataset.trim_wake_epochs", &v)?),
                    },
                }
            }
            other => return Err(invalid(format!("unknown dataset.format {other:?}"))),
        };

        let (image, text) = take_adapters(&mut raw)?;
        let adapter = match raw.take("adapter").as_deref().unwrap_or("image") {
            "image" => AdapterConfig::Image(image),
            "text" => AdapterConfig::Text(text),
            other => return Err(invalid(format!("unknown adapter {other:?}"))),
        };

        let ds = SplitOptions::default();
        let split = SplitOptions {
            ratios: match raw.take("split.ratios") {
                Some(v) => parse_ratios(&v)?,
                None => ds.ratios,
            },
            seed: raw.take_or("split.seed", ds.seed)?,
            stratify: raw.flag_or("split.stratify", ds.stratify)?,
            unit: match raw.take("split.unit").as_deref() {
                None | Some("instance") => SplitUnit::Instance,
                Some("group") => SplitUnit::Group,
                Some(other) => return Err(invalid(format!("unknown split.unit {other:?}"))),
            },
        };

        let dp = ProbeSpec::default();
        let probe = ProbeSpec {
            enabled: raw.flag_or("probe.enabled", dp.enabled)?,
            epochs: raw.take_or("probe.epochs", dp.epochs)?,
            learning_rate: match raw.take("probe.lr").as_deref() {
                None | Some("auto") => LearningRate::Auto,
                Some(v) => LearningRate::Fixed(num("probe.lr", v)?),
            },
            batch_size: raw.take_or("probe.batch_size", dp.batch_size)?,
            seed: raw.take_or("probe.seed", dp.seed)?,
            l2: raw.take_or("probe.l2", dp.l2)?,
        };

        let output_root = raw.take("output.root").map(PathBuf::from).unwrap_or_else(|| "out".into());
        let parallelism = raw.take_or("parallelism", 1usize)?;

        if let Some((key, (line, _))) = raw.entries.iter().next() {
            return Err(invalid(format!("line {line}: unknown key {key}")));
        }
        Ok(Self {
            dataset,
            adapter,
            split,
            probe,
            output_root,
            parallelism,
        })
    }

    /// Replace the output root with the environment override, if set.
    pub fn apply_env(&mut self) {
        if let Some(root) = std::env::var_os(OUTPUT_ROOT_ENV) {
            if !root.is_empty() {
                self.output_root = PathBuf::from(root);
            }
        }
    }

    /// Checks that need no input data. Every rejection here happens before
    /// any file is read or written.
    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.parallelism == 0 {
            return Err(invalid("parallelism must be at least 1"));
        }
        match &self.adapter {
            AdapterConfig::Image(c) => c.validate()?,
            AdapterConfig::Text(c) => {
                c.validate()?;
                let channels = self.dataset.channels();
                if channels > 1 && !c.legacy_flatten {
                    return Err(invalid(format!(
                        "the text adapter needs a single-channel dataset, {} has {channels} channels; \
                         use the image adapter or set text.legacy_flatten",
                        self.dataset.format()
                    )));
                }
            }
        }
        let r = self.split.ratios;
        if r.iter().any(|v| !v.is_finite() || *v < 0.0) || (r.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(invalid(format!("split ratios {r:?} must be non-negative and sum to 1")));
        }
        if self.probe.enabled {
            if self.probe.batch_size == 0 {
                return Err(invalid("probe.batch_size must be positive"));
            }
            if let LearningRate::Fixed(lr) = self.probe.learning_rate {
                if !(lr.is_finite() && lr > 0.0) {
                    return Err(invalid(format!("probe.lr must be positive, got {lr}")));
                }
            }
            if !(self.probe.l2.is_finite() && self.probe.l2 >= 0.0) {
                return Err(invalid(format!("probe.l2 must be non-negative, got {}", self.probe.l2)));
            }
        }
        Ok(())
    }

    /// Every field that affects output bytes, one `key=value` per line in a
    /// fixed order. Parsing this text gives back an equal config (apart from
    /// the output root and worker count).
    pub fn canonical(&self) -> String {
        let mut lines: Vec<String> = vec![format!("dataset.format={}", self.dataset.format())];
        match &self.dataset {
            DatasetSpec::Synth(s) => {
                lines.push(format!("synth.channels={}", s.channels));
                lines.push(format!("synth.length={}", s.length));
                lines.push(format!("synth.classes={}", s.classes));
                lines.push(format!("synth.per_class={}", s.per_class));
                lines.push(format!("synth.separation={:?}", s.separation));
                lines.push(format!("synth.seed={}", s.seed));
            }
            DatasetSpec::Har { path, partition } => {
                lines.push(format!("dataset.path={}", path.display()));
                lines.push(format!("dataset.partition={partition}"));
            }
            DatasetSpec::SeizureCsv { path, options } => {
                lines.push(format!("dataset.path={}", path.display()));
                lines.push(format!("dataset.samples={}", options.samples));
                lines.push(format!("dataset.binary={}", options.binary));
            }
            DatasetSpec::SleepEdf {
                path,
                channel,
                epoch_samples,
                trim_wake_epochs,
            } => {
                lines.push(format!("dataset.path={}", path.display()));
                lines.push(format!("dataset.channel={channel}"));
                lines.push(format!("dataset.epoch_samples={epoch_samples}"));
                lines.push(format!(
                    "dataset.trim_wake_epochs={}",
                    trim_wake_epochs.map_or("none".to_string(), |n| n.to_string())
                ));
            }
        }
        lines.push(format!("adapter={}", self.adapter.name()));
        let adapter = match &self.adapter {
            AdapterConfig::Image(c) => c.canonical(),
            AdapterConfig::Text(c) => c.canonical(),
        };
        lines.extend(adapter.lines().map(|l| {
            let (k, v) = l.split_once('=').expect("adapter canonical lines are key=value");
            format!("{k}={}", v.replace("per_instance", "per-instance"))
        }));
        let s = &self.split;
        lines.push(format!(
            "split.ratios={:?},{:?},{:?}",
            s.ratios[0], s.ratios[1], s.ratios[2]
        ));
        lines.push(format!("split.seed={}", s.seed));
        lines.push(format!("split.stratify={}", s.stratify));
        lines.push(format!(
            "split.unit={}",
            match s.unit {
                SplitUnit::Instance => "instance",
                SplitUnit::Group => "group",
            }
        ));
        let p = &self.probe;
        lines.push(format!("probe.enabled={}", p.enabled));
        if p.enabled {
            lines.push(format!("probe.epochs={}", p.epochs));
            lines.push(match p.learning_rate {
                LearningRate::Auto => "probe.lr=auto".to_string(),
                LearningRate::Fixed(lr) => format!("probe.lr={lr:?}"),
            });
            lines.push(format!("probe.batch_size={}", p.batch_size));
            lines.push(format!("probe.seed={}", p.seed));
            lines.push(format!("probe.l2={:?}", p.l2));
        }
        let mut out = lines.join("\n");
        out.push('\n');
        out
    }

    pub fn hash(&self) -> String {
        crate::short_hash(self.canonical().as_bytes())
    }

    /// `<output root>/<config hash>`.
    pub fn output_dir(&self) -> PathBuf {
        self.output_root.join(self.hash())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_parse_from_empty_text() {
        assert_eq!(PipelineConfig::parse("# nothing\n\n").unwrap(), PipelineConfig::default());
    }

    #[test]
    fn canonical_round_trips() {
        let text = "dataset.format = seizure-csv\ndataset.path = /data/s.csv\ndataset.binary = true\n\
                    adapter = text\ntext.max_len = 512\ntext.aggregator = first\ntext.separator = \", \"\n\
                    split.ratios = 0.7, 0.15, 0.15\nsplit.stratify = yes\nprobe.lr = 0.05\n";
        let cfg = PipelineConfig::parse(text).unwrap();
        let back = PipelineConfig::parse(&cfg.canonical()).unwrap();
        assert_eq!(back, cfg);
        let img = PipelineConfig::parse("image.norm = global(-2.5, 4)\nimage.reshape = keep").unwrap();
        assert_eq!(PipelineConfig::parse(&img.canonical()).unwrap(), img);
    }

    #[test]
    fn hash_ignores_root_and_parallelism() {
        let a = PipelineConfig::default();
        let b = PipelineConfig {
            output_root: "/elsewhere".into(),
            parallelism: 8,
            ..a.clone()
        };
        assert_eq!(a.hash(), b.hash());
    }

    #[test]
    fn hash_tracks_meaningful_fields() {
        let base = PipelineConfig::default();
        let variants = [
            "synth.seed = 1",
            "synth.separation = 0",
            "image.height = 112",
            "image.reshape = near_square",
            "split.seed = 9",
            "split.ratios = 0.5,0.25,0.25",
            "probe.epochs = 3",
            "probe.enabled = false",
        ];
        let mut seen = std::collections::BTreeSet::from([base.hash()]);
        for v in variants {
            let cfg = PipelineConfig::parse(v).unwrap();
            assert!(seen.insert(cfg.hash()), "{v} did not change the hash");
        }
    }

    #[test]
    fn rejects_bad_input() {
        for bad in [
            "nonsense",
            "unknown.key = 1",
            "synth.length = ten",
            "adapter = audio",
            "dataset.format = har",
            "split.ratios = 0.5,0.5",
            "synth.seed = 1\nsynth.seed = 2",
        ] {
            assert!(PipelineConfig::parse(bad).is_err(), "{bad:?} accepted");
        }
    }

    #[test]
    fn text_on_multichannel_fails_validation() {
        let cfg = PipelineConfig::parse("adapter = text").unwrap();
        assert!(matches!(cfg.validate(), Err(PipelineError::Config(_))));
        let flat = PipelineConfig::parse("adapter = text\ntext.legacy_flatten = true").unwrap();
        assert!(flat.validate().is_ok());
    }
}
