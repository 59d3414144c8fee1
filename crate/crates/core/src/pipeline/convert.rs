//! Converted-output directories and the probe features read back from them.
//!
//! An image directory holds one `<id>.png` per instance; a text directory
//! holds `train.txt`, `valid.txt` and `test.txt` with one instance per line.
//! Both carry `converted.jsonl`: a header record followed by one sidecar
//! record per instance in dataset manifest order.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::image::{convert_to_image, decode_png, ImageAdapterConfig, NormRecord, Scheme};
use crate::ingest::{Dataset, IngestError, SignalMatrix, Split, SplitManifest};
use crate::jsonl;
use crate::probe::FeatureBatch;
use crate::text::{convert_to_text, parse_tokens, OverflowStatus, TextAdapterConfig};

use super::PipelineError;

pub const SIDECAR_FILE: &str = "converted.jsonl";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvertedHeader {
    pub kind: String,
    pub adapter: String,
    pub config_hash: String,
    pub dataset_checksum: String,
    pub class_names: Vec<String>,
    pub count: usize,
    /// Image geometry (image adapter only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shape: Option<(usize, usize)>,
    /// Amplification factor (text adapter only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub separator: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageSidecar {
    pub id: String,
    pub label: usize,
    pub split: Split,
    pub file: String,
    pub scheme: Scheme,
    pub stack_shape: (usize, usize),
    pub pre_resize_shape: (usize, usize),
    pub norm_record: NormRecord,
    pub config_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextSidecar {
    pub id: String,
    pub label: usize,
    pub split: Split,
    pub file: String,
    /// 1-based line within `file`.
    pub line: usize,
    pub token_count: usize,
    pub window_size: usize,
    pub overflow_status: OverflowStatus,
    pub config_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvertReport {
    pub adapter: String,
    pub count: usize,
    /// Instances per overflow status (text adapter only).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub overflow: BTreeMap<String, usize>,
}

fn io(path: &Path, e: std::io::Error) -> PipelineError {
    PipelineError::Ingest(IngestError::Io {
        path: path.display().to_string(),
        source: e,
    })
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<(), PipelineError> {
    std::fs::write(path, bytes).map_err(|e| io(path, e))
}

pub(crate) fn thread_pool(threads: usize) -> Result<rayon::ThreadPool, PipelineError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| PipelineError::Config(format!("worker pool: {e}")))
}

fn assigned(split: &SplitManifest, dataset: &Dataset) -> Result<Vec<Split>, PipelineError> {
    if split.dataset_checksum != dataset.manifest.checksum {
        return Err(PipelineError::Config(format!(
            "split was drawn from dataset {}, not {}",
            split.dataset_checksum, dataset.manifest.checksum
        )));
    }
    dataset
        .signals
        .iter()
        .map(|s| {
            split
                .get(s.id())
                .ok_or_else(|| PipelineError::Config(format!("instance {} missing from split manifest", s.id())))
        })
        .collect()
}

/// File name for an instance id; ids are already filesystem-safe in every
/// loader, this only guards against separators.
fn file_stem(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' })
        .collect()
}

/// Convert every instance to a PNG under `out`, `threads` at a time.
pub fn convert_images(
    dataset: &Dataset,
    split: &SplitManifest,
    config: &ImageAdapterConfig,
    out: &Path,
    threads: usize,
) -> Result<ConvertReport, PipelineError> {
    config.validate()?;
    let splits = assigned(split, dataset)?;
    std::fs::create_dir_all(out).map_err(|e| io(out, e))?;
    let config_hash = config.hash();
    let convert_one = |(m, s): (&SignalMatrix, Split)| -> Result<ImageSidecar, PipelineError> {
        let img = convert_to_image(m, config)?;
        let file = format!("{}.png", file_stem(m.id()));
        write_file(&out.join(&file), &img.to_png()?)?;
        Ok(ImageSidecar {
            id: m.id().to_string(),
            label: m.label(),
            split: s,
            file,
            scheme: img.provenance.scheme,
            stack_shape: img.provenance.stack_shape,
            pre_resize_shape: img.provenance.pre_resize_shape,
            norm_record: img.norm,
            config_hash: config_hash.clone(),
        })
    };
    let work: Vec<(&SignalMatrix, Split)> = dataset.signals.iter().zip(splits).collect();
    let records: Vec<ImageSidecar> =
        thread_pool(threads)?.install(|| work.into_par_iter().map(convert_one).collect::<Result<_, _>>())?;
    let header = ConvertedHeader {
        kind: "converted".into(),
        adapter: "image".into(),
        config_hash,
        dataset_checksum: dataset.manifest.checksum.clone(),
        class_names: dataset.manifest.class_names.clone(),
        count: records.len(),
        shape: Some((config.height, config.width)),
        alpha: None,
        separator: None,
    };
    let mut sidecar = jsonl::to_line(&header);
    for r in &records {
        sidecar.push_str(&jsonl::to_line(r));
    }
    write_file(&out.join(SIDECAR_FILE), sidecar.as_bytes())?;
    tracing::info!(count = records.len(), dir = %out.display(), "images written");
    Ok(ConvertReport {
        adapter: "image".into(),
        count: records.len(),
        overflow: BTreeMap::new(),
    })
}

pub fn split_file(split: Split) -> String {
    format!("{}.txt", split.as_str())
}

/// Convert every instance to a line of integers in its split's text file.
pub fn convert_texts(
    dataset: &Dataset,
    split: &SplitManifest,
    config: &TextAdapterConfig,
    out: &Path,
    threads: usize,
) -> Result<ConvertReport, PipelineError> {
    config.validate()?;
    let splits = assigned(split, dataset)?;
    std::fs::create_dir_all(out).map_err(|e| io(out, e))?;
    let work: Vec<&SignalMatrix> = dataset.signals.iter().collect();
    let converted = thread_pool(threads)?
        .install(|| work.into_par_iter().map(|m| convert_to_text(m, config)).collect::<Result<Vec<_>, _>>())?;

    let mut files: [String; 3] = Default::default();
    let mut lines = [0usize; 3];
    let mut overflow = BTreeMap::new();
    let mut sidecar = jsonl::to_line(&ConvertedHeader {
        kind: "converted".into(),
        adapter: "text".into(),
        config_hash: config.hash(),
        dataset_checksum: dataset.manifest.checksum.clone(),
        class_names: dataset.manifest.class_names.clone(),
        count: converted.len(),
        shape: None,
        alpha: Some(config.alpha),
        separator: Some(config.separator.clone()),
    });
    for ((tok, m), s) in converted.iter().zip(&dataset.signals).zip(&splits) {
        let k = s.index();
        files[k].push_str(&tok.text);
        files[k].push('\n');
        lines[k] += 1;
        *overflow.entry(tok.status.as_str().to_string()).or_insert(0) += 1;
        sidecar.push_str(&jsonl::to_line(&TextSidecar {
            id: tok.instance_id.clone(),
            label: m.label(),
            split: *s,
            file: split_file(*s),
            line: lines[k],
            token_count: tok.token_count,
            window_size: tok.window_size,
            overflow_status: tok.status,
            config_hash: tok.config_hash.clone(),
        }));
    }
    for s in [Split::Train, Split::Valid, Split::Test] {
        write_file(&out.join(split_file(s)), files[s.index()].as_bytes())?;
    }
    write_file(&out.join(SIDECAR_FILE), sidecar.as_bytes())?;
    tracing::info!(count = converted.len(), dir = %out.display(), ?overflow, "texts written");
    Ok(ConvertReport {
        adapter: "text".into(),
        count: converted.len(),
        overflow,
    })
}

/// A parsed `converted.jsonl`.
#[derive(Debug, Clone, PartialEq)]
pub enum Sidecar {
    Image(ConvertedHeader, Vec<ImageSidecar>),
    Text(ConvertedHeader, Vec<TextSidecar>),
}

impl Sidecar {
    pub fn header(&self) -> &ConvertedHeader {
        match self {
            Sidecar::Image(h, _) | Sidecar::Text(h, _) => h,
        }
    }
}

pub fn parse_sidecar(path: &Path, text: &str) -> Result<Sidecar, PipelineError> {
    let corrupt = |line: usize, reason: String| {
        PipelineError::Ingest(IngestError::CorruptManifest {
            path: path.display().to_string(),
            line,
            reason,
        })
    };
    let mut lines = jsonl::lines(text);
    let (no, first) = lines.next().ok_or_else(|| corrupt(1, "empty sidecar".into()))?;
    let header: ConvertedHeader = jsonl::parse_line(path, no, first)?;
    if header.kind != "converted" {
        return Err(corrupt(no, format!("expected a converted header, found kind {:?}", header.kind)));
    }
    let sidecar = match header.adapter.as_str() {
        "image" => Sidecar::Image(
            header.clone(),
            lines
                .map(|(n, l)| jsonl::parse_line(path, n, l))
                .collect::<Result<_, _>>()?,
        ),
        "text" => Sidecar::Text(
            header.clone(),
            lines
                .map(|(n, l)| jsonl::parse_line(path, n, l))
                .collect::<Result<_, _>>()?,
        ),
        other => return Err(corrupt(no, format!("unknown adapter {other:?}"))),
    };
    let count = match &sidecar {
        Sidecar::Image(_, r) => r.len(),
        Sidecar::Text(_, r) => r.len(),
    };
    if count != header.count {
        return Err(corrupt(no, format!("header announces {} records, found {count}", header.count)));
    }
    Ok(sidecar)
}

pub fn read_sidecar(dir: &Path) -> Result<Sidecar, PipelineError> {
    let path = dir.join(SIDECAR_FILE);
    parse_sidecar(&path, &jsonl::read_text(&path)?)
}

/// Probe features for the instances of one split: pixels scaled to `[0, 1]`
/// (RGB-interleaved, row-major), or text integers divided by `alpha`.
/// Returns the batch and the class count.
pub fn load_features(dir: &Path, split: &SplitManifest, which: Split) -> Result<(FeatureBatch, usize), PipelineError> {
    let sidecar = read_sidecar(dir)?;
    let header = sidecar.header().clone();
    if header.dataset_checksum != split.dataset_checksum {
        return Err(PipelineError::Config(format!(
            "{} was converted from dataset {}, split manifest is for {}",
            dir.display(),
            header.dataset_checksum,
            split.dataset_checksum
        )));
    }
    let in_split = |id: &str| -> Result<bool, PipelineError> {
        split
            .get(id)
            .map(|s| s == which)
            .ok_or_else(|| PipelineError::Config(format!("instance {id} missing from split manifest")))
    };
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut labels = Vec::new();
    match &sidecar {
        Sidecar::Image(_, records) => {
            let picked: Vec<&ImageSidecar> = records
                .iter()
                .filter_map(|r| in_split(&r.id).map(|keep| keep.then_some(r)).transpose())
                .collect::<Result<_, _>>()?;
            let decoded: Vec<Vec<f64>> = picked
                .par_iter()
                .map(|r| {
                    let path = dir.join(&r.file);
                    let bytes = std::fs::read(&path).map_err(|e| io(&path, e))?;
                    let (_, _, px) = decode_png(&bytes)?;
                    Ok(px.into_iter().map(|p| p as f64 / 255.0).collect())
                })
                .collect::<Result<_, PipelineError>>()?;
            rows = decoded;
            labels = picked.iter().map(|r| r.label).collect();
        }
        Sidecar::Text(_, records) => {
            let alpha = header.alpha.unwrap_or(1.0);
            let sep = header.separator.clone().unwrap_or_else(|| " ".into());
            let mut cache: BTreeMap<String, Vec<String>> = BTreeMap::new();
            for r in records {
                if !in_split(&r.id)? {
                    continue;
                }
                if !cache.contains_key(&r.file) {
                    let path = dir.join(&r.file);
                    let text = jsonl::read_text(&path)?;
                    cache.insert(r.file.clone(), text.lines().map(str::to_string).collect());
                }
                let line = cache[&r.file].get(r.line.wrapping_sub(1)).ok_or_else(|| {
                    PipelineError::Config(format!("{} has no line {} for {}", r.file, r.line, r.id))
                })?;
                let values = parse_tokens(line, &sep)?;
                rows.push(values.into_iter().map(|v| v as f64 / alpha).collect());
                labels.push(r.label);
            }
        }
    }
    let width = rows.first().map_or(0, Vec::len);
    if let Some(bad) = rows.iter().position(|r| r.len() != width) {
        return Err(PipelineError::Config(format!(
            "feature row {bad} has width {}, expected {width}",
            rows[bad].len()
        )));
    }
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    let features = Array2::from_shape_vec((labels.len(), width), flat)
        .map_err(|e| PipelineError::Config(e.to_string()))?;
    Ok((FeatureBatch::new(features, labels)?, header.class_names.len()))
}

/// Directory name of an adapter's outputs inside a run directory.
pub fn adapter_dir(root: &Path, adapter: &str) -> PathBuf {
    root.join(if adapter == "text" { "texts" } else { "images" })
}
