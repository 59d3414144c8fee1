//! Human-readable dumps of pipeline artifacts.

use std::fmt::Write as _;
use std::path::Path;

use crate::image::decode_png;
use crate::ingest::edf::parse_edf;
use crate::ingest::store::{parse_manifest, parse_split, read_dataset, MANIFEST_FILE};
use crate::jsonl;
use crate::probe::ProbeHead;
use crate::text::parse_tokens;

use super::convert::{parse_sidecar, Sidecar, SIDECAR_FILE};
use super::PipelineError;

fn unrecognized(path: &Path, why: &str) -> PipelineError {
    PipelineError::Unrecognized(format!("{}: {why}", path.display()))
}

/// Describe the artifact at `path`: a dataset directory, a converted-output
/// directory, a PNG, a converted text file, a manifest/sidecar, a probe head,
/// or an EDF file.
pub fn inspect(path: &Path) -> Result<String, PipelineError> {
    if path.is_dir() {
        if path.join(MANIFEST_FILE).exists() {
            return inspect_dataset_dir(path);
        }
        if path.join(SIDECAR_FILE).exists() {
            return inspect_jsonl(&path.join(SIDECAR_FILE));
        }
        return Err(unrecognized(path, "directory holds neither a dataset nor converted outputs"));
    }
    let bytes = std::fs::read(path).map_err(|e| PipelineError::Ingest(crate::ingest::IngestError::io(path, e)))?;
    match path.extension().and_then(|e| e.to_str()).unwrap_or("") {
        "png" => inspect_png(path, &bytes),
        "txt" => inspect_text(path, &bytes),
        "jsonl" => inspect_jsonl(path),
        "edf" => inspect_edf(&bytes),
        _ if bytes.starts_with(b"TSPROBE") => inspect_head(&bytes),
        _ => Err(unrecognized(path, "unknown artifact type")),
    }
}

fn inspect_dataset_dir(dir: &Path) -> Result<String, PipelineError> {
    let ds = read_dataset(dir)?;
    let m = &ds.manifest;
    let mut out = String::new();
    writeln!(out, "dataset {}", m.name).unwrap();
    writeln!(out, "instances: {}", m.len()).unwrap();
    writeln!(out, "shape: {}x{}", m.channels, m.length).unwrap();
    writeln!(out, "classes: {}", m.class_names.join(", ")).unwrap();
    writeln!(out, "checksum: {}", m.checksum).unwrap();
    if let Some(first) = ds.signals.first() {
        let preview: Vec<String> = first.channel(0).iter().take(10).map(|v| format!("{v}")).collect();
        writeln!(out, "first instance {} (label {}): {}", first.id(), first.label(), preview.join(" ")).unwrap();
    }
    Ok(out)
}

fn inspect_png(path: &Path, bytes: &[u8]) -> Result<String, PipelineError> {
    let (w, h, px) = decode_png(bytes)?;
    let mut out = String::new();
    writeln!(out, "image {}", path.display()).unwrap();
    writeln!(out, "shape: 3x{h}x{w}").unwrap();
    for (k, name) in ["r", "g", "b"].iter().enumerate() {
        let plane: Vec<u8> = px.iter().skip(k).step_by(3).copied().collect();
        let min = plane.iter().min().copied().unwrap_or(0);
        let max = plane.iter().max().copied().unwrap_or(0);
        let mean = plane.iter().map(|&v| v as f64).sum::<f64>() / plane.len().max(1) as f64;
        writeln!(out, "plane {name}: min {min} max {max} mean {mean:.3}").unwrap();
    }
    let sidecar_path = path.with_file_name(SIDECAR_FILE);
    if sidecar_path.exists() {
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
        if let Sidecar::Image(_, records) = parse_sidecar(&sidecar_path, &jsonl::read_text(&sidecar_path)?)? {
            if let Some(r) = records.iter().find(|r| r.file == name) {
                writeln!(out, "id: {} (label {}, split {})", r.id, r.label, r.split).unwrap();
                writeln!(out, "scheme: {}", r.scheme.as_str()).unwrap();
                writeln!(out, "stack shape: {}x{}", r.stack_shape.0, r.stack_shape.1).unwrap();
                writeln!(out, "pre-resize shape: {}x{}", r.pre_resize_shape.0, r.pre_resize_shape.1).unwrap();
                writeln!(out, "norm record: v_min {} v_max {}", r.norm_record.v_min, r.norm_record.v_max).unwrap();
                writeln!(out, "config hash: {}", r.config_hash).unwrap();
            }
        }
    }
    Ok(out)
}

fn inspect_text(path: &Path, bytes: &[u8]) -> Result<String, PipelineError> {
    let text = std::str::from_utf8(bytes).map_err(|_| unrecognized(path, "not UTF-8 text"))?;
    let sidecar_path = path.with_file_name(SIDECAR_FILE);
    let separator = if sidecar_path.exists() {
        match parse_sidecar(&sidecar_path, &jsonl::read_text(&sidecar_path)?)? {
            Sidecar::Text(h, _) => h.separator.unwrap_or_else(|| " ".into()),
            Sidecar::Image(..) => " ".into(),
        }
    } else {
        " ".into()
    };
    let mut out = String::new();
    writeln!(out, "text {}", path.display()).unwrap();
    writeln!(out, "lines: {}", text.lines().count()).unwrap();
    match text.lines().next() {
        Some(first) => {
            let values = parse_tokens(first, &separator)?;
            let head: Vec<String> = values.iter().take(10).map(i64::to_string).collect();
            writeln!(out, "line 1 tokens: {}", values.len()).unwrap();
            writeln!(out, "line 1 first integers: {}", head.join(" ")).unwrap();
        }
        None => writeln!(out, "empty").unwrap(),
    }
    Ok(out)
}

fn inspect_jsonl(path: &Path) -> Result<String, PipelineError> {
    let text = jsonl::read_text(path)?;
    let (no, first) = jsonl::lines(&text)
        .next()
        .ok_or_else(|| unrecognized(path, "empty file"))?;
    let header: serde_json::Value = jsonl::parse_line(path, no, first)?;
    let mut out = String::new();
    match header.get("kind").and_then(|k| k.as_str()) {
        Some("dataset") => {
            let m = parse_manifest(path, &text)?;
            writeln!(out, "dataset manifest {}", m.name).unwrap();
            writeln!(out, "instances: {}", m.len()).unwrap();
            writeln!(out, "shape: {}x{}", m.channels, m.length).unwrap();
            writeln!(out, "classes: {}", m.class_names.join(", ")).unwrap();
            writeln!(out, "checksum: {}", m.checksum).unwrap();
        }
        Some("split") => {
            let s = parse_split(path, &text)?;
            let [tr, va, te] = s.sizes();
            writeln!(out, "split manifest (seed {}, ratios {:?})", s.seed, s.ratios).unwrap();
            writeln!(out, "sizes: train {tr} valid {va} test {te}").unwrap();
            writeln!(out, "dataset checksum: {}", s.dataset_checksum).unwrap();
        }
        Some("converted") => {
            let sidecar = parse_sidecar(path, &text)?;
            let h = sidecar.header();
            writeln!(out, "{} sidecar, {} records", h.adapter, h.count).unwrap();
            writeln!(out, "config hash: {}", h.config_hash).unwrap();
            writeln!(out, "classes: {}", h.class_names.join(", ")).unwrap();
            match &sidecar {
                Sidecar::Image(_, records) => {
                    if let Some((height, width)) = h.shape {
                        writeln!(out, "image shape: 3x{height}x{width}").unwrap();
                    }
                    if let Some(r) = records.first() {
                        writeln!(
                            out,
                            "first: {} scheme {} pre-resize {}x{} norm [{}, {}]",
                            r.id, r.scheme.as_str(), r.pre_resize_shape.0, r.pre_resize_shape.1,
                            r.norm_record.v_min, r.norm_record.v_max
                        )
                        .unwrap();
                    }
                }
                Sidecar::Text(_, records) => {
                    let mut counts = std::collections::BTreeMap::new();
                    for r in records {
                        *counts.entry(r.overflow_status.as_str()).or_insert(0usize) += 1;
                    }
                    writeln!(out, "overflow: {counts:?}").unwrap();
                    if let Some(r) = records.first() {
                        writeln!(
                            out,
                            "first: {} tokens {} window {}",
                            r.id, r.token_count, r.window_size
                        )
                        .unwrap();
                    }
                }
            }
        }
        _ => return Err(unrecognized(path, "no recognized header record on the first line")),
    }
    Ok(out)
}

fn inspect_head(bytes: &[u8]) -> Result<String, PipelineError> {
    let head = ProbeHead::from_bytes(bytes)?;
    let norm = head.weights.iter().map(|w| w * w).sum::<f64>().sqrt();
    Ok(format!(
        "probe head\nclasses: {}\nfeatures: {}\nweight norm: {norm:.6}\nbias: {:?}\n",
        head.classes(),
        head.features(),
        head.bias.to_vec()
    ))
}

fn inspect_edf(bytes: &[u8]) -> Result<String, PipelineError> {
    let rec = parse_edf(bytes)?;
    let mut out = String::new();
    writeln!(out, "EDF recording, {} records of {} s", rec.record_count, rec.header.record_duration).unwrap();
    for ch in &rec.channels {
        writeln!(
            out,
            "signal {:?}: {} samples at {} Hz, {}",
            ch.header.label,
            ch.samples.len(),
            ch.sampling_rate,
            ch.header.physical_dimension
        )
        .unwrap();
    }
    writeln!(out, "annotations: {}", rec.annotations.len()).unwrap();
    Ok(out)
}
