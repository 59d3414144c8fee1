//! On-disk layout of an ingested dataset and of split manifests.
//!
//! A dataset directory holds `manifest.jsonl` (a header record followed by
//! one `{id, source, offset, label}` record per instance) and `signals.bin`
//! (the samples as little-endian f64, instances in manifest order).

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::split::{Split, SplitManifest, SplitUnit};
use super::{Dataset, DatasetManifest, IngestError, InstanceRecord, SignalMatrix};
use crate::jsonl;

pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const SIGNALS_FILE: &str = "signals.bin";
pub const SPLIT_FILE: &str = "split.jsonl";
const SIGNALS_MAGIC: &[u8; 8] = b"TSSIGNL1";

#[derive(Debug, Serialize, Deserialize)]
struct DatasetHeader {
    kind: String,
    name: String,
    class_names: Vec<String>,
    channels: usize,
    length: usize,
    checksum: String,
    count: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct SplitHeader {
    kind: String,
    seed: u64,
    ratios: [f64; 3],
    stratify: bool,
    unit: SplitUnit,
    dataset_checksum: String,
    count: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct SplitLine {
    id: String,
    split: Split,
}

pub fn render_manifest(manifest: &DatasetManifest) -> String {
    let mut out = jsonl::to_line(&DatasetHeader {
        kind: "dataset".into(),
        name: manifest.name.clone(),
        class_names: manifest.class_names.clone(),
        channels: manifest.channels,
        length: manifest.length,
        checksum: manifest.checksum.clone(),
        count: manifest.len(),
    });
    for r in &manifest.instances {
        out.push_str(&jsonl::to_line(r));
    }
    out
}

pub fn parse_manifest(path: &Path, text: &str) -> Result<DatasetManifest, IngestError> {
    let mut lines = jsonl::lines(text);
    let (no, first) = lines.next().ok_or_else(|| IngestError::CorruptManifest {
        path: path.display().to_string(),
        line: 1,
        reason: "empty manifest".into(),
    })?;
    let header: DatasetHeader = jsonl::parse_line(path, no, first)?;
    if header.kind != "dataset" {
        return Err(IngestError::CorruptManifest {
            path: path.display().to_string(),
            line: no,
            reason: format!("expected a dataset header, found kind {:?}", header.kind),
        });
    }
    let instances = lines
        .map(|(no, l)| jsonl::parse_line::<InstanceRecord>(path, no, l))
        .collect::<Result<Vec<_>, _>>()?;
    if instances.len() != header.count {
        return Err(IngestError::CorruptManifest {
            path: path.display().to_string(),
            line: no,
            reason: format!("header announces {} records, found {}", header.count, instances.len()),
        });
    }
    Ok(DatasetManifest {
        name: header.name,
        class_names: header.class_names,
        channels: header.channels,
        length: header.length,
        checksum: header.checksum,
        instances,
    })
}

pub fn encode_signals(dataset: &Dataset) -> Vec<u8> {
    let m = &dataset.manifest;
    let mut out = Vec::with_capacity(32 + dataset.signals.len() * m.channels * m.length * 8);
    out.extend_from_slice(SIGNALS_MAGIC);
    for v in [dataset.signals.len(), m.channels, m.length] {
        out.extend_from_slice(&(v as u64).to_le_bytes());
    }
    for s in &dataset.signals {
        for v in s.samples() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

fn decode_signals(
    path: &Path,
    bytes: &[u8],
    manifest: &DatasetManifest,
) -> Result<Vec<SignalMatrix>, IngestError> {
    let corrupt = |reason: String| IngestError::CorruptManifest {
        path: path.display().to_string(),
        line: 0,
        reason,
    };
    if bytes.len() < 32 || &bytes[..8] != SIGNALS_MAGIC {
        return Err(corrupt("not a signal store".into()));
    }
    let word = |i: usize| u64::from_le_bytes(bytes[8 + 8 * i..16 + 8 * i].try_into().unwrap()) as usize;
    let (count, channels, length) = (word(0), word(1), word(2));
    if (count, channels, length) != (manifest.len(), manifest.channels, manifest.length) {
        return Err(corrupt(format!(
            "store holds {count} x {channels}x{length}, manifest expects {} x {}x{}",
            manifest.len(),
            manifest.channels,
            manifest.length
        )));
    }
    let per = channels * length;
    let body = &bytes[32..];
    if body.len() != count * per * 8 {
        return Err(corrupt(format!(
            "expected {} sample bytes, found {}",
            count * per * 8,
            body.len()
        )));
    }
    manifest
        .instances
        .iter()
        .zip(body.chunks_exact((per * 8).max(1)))
        .map(|(rec, chunk)| {
            let samples = chunk
                .chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
                .collect();
            SignalMatrix::new(&rec.id, channels, length, samples, rec.label)
        })
        .collect()
}

pub fn write_dataset(dir: &Path, dataset: &Dataset) -> Result<(), IngestError> {
    std::fs::create_dir_all(dir).map_err(|e| IngestError::io(dir, e))?;
    let mpath = dir.join(MANIFEST_FILE);
    std::fs::write(&mpath, render_manifest(&dataset.manifest)).map_err(|e| IngestError::io(&mpath, e))?;
    let spath = dir.join(SIGNALS_FILE);
    std::fs::write(&spath, encode_signals(dataset)).map_err(|e| IngestError::io(&spath, e))
}

pub fn read_dataset(dir: &Path) -> Result<Dataset, IngestError> {
    let mpath = dir.join(MANIFEST_FILE);
    let manifest = parse_manifest(&mpath, &jsonl::read_text(&mpath)?)?;
    let spath = dir.join(SIGNALS_FILE);
    let bytes = std::fs::read(&spath).map_err(|e| IngestError::io(&spath, e))?;
    let signals = decode_signals(&spath, &bytes, &manifest)?;
    Dataset::new(manifest, signals)
}

pub fn render_split(split: &SplitManifest) -> String {
    let mut out = jsonl::to_line(&SplitHeader {
        kind: "split".into(),
        seed: split.seed,
        ratios: split.ratios,
        stratify: split.stratify,
        unit: split.unit,
        dataset_checksum: split.dataset_checksum.clone(),
        count: split.assignment.len(),
    });
    for (id, s) in &split.assignment {
        out.push_str(&jsonl::to_line(&SplitLine {
            id: id.clone(),
            split: *s,
        }));
    }
    out
}

pub fn parse_split(path: &Path, text: &str) -> Result<SplitManifest, IngestError> {
    let mut lines = jsonl::lines(text);
    let (no, first) = lines.next().ok_or_else(|| IngestError::CorruptManifest {
        path: path.display().to_string(),
        line: 1,
        reason: "empty split manifest".into(),
    })?;
    let header: SplitHeader = jsonl::parse_line(path, no, first)?;
    if header.kind != "split" {
        return Err(IngestError::CorruptManifest {
            path: path.display().to_string(),
            line: no,
            reason: format!("expected a split header, found kind {:?}", header.kind),
        });
    }
    let mut assignment = std::collections::BTreeMap::new();
    for (no, l) in lines {
        let rec: SplitLine = jsonl::parse_line(path, no, l)?;
        if assignment.insert(rec.id.clone(), rec.split).is_some() {
            return Err(IngestError::CorruptManifest {
                path: path.display().to_string(),
                line: no,
                reason: format!("duplicate id {}", rec.id),
            });
        }
    }
    if assignment.len() != header.count {
        return Err(IngestError::CorruptManifest {
            path: path.display().to_string(),
            line: no,
            reason: format!("header announces {} ids, found {}", header.count, assignment.len()),
        });
    }
    Ok(SplitManifest {
        seed: header.seed,
        ratios: header.ratios,
        stratify: header.stratify,
        unit: header.unit,
        dataset_checksum: header.dataset_checksum,
        assignment,
    })
}

pub fn write_split(path: &Path, split: &SplitManifest) -> Result<(), IngestError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| IngestError::io(parent, e))?;
    }
    std::fs::write(path, render_split(split)).map_err(|e| IngestError::io(path, e))
}

pub fn read_split(path: &Path) -> Result<SplitManifest, IngestError> {
    parse_split(path, &jsonl::read_text(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::split::{split_dataset, SplitOptions};
    use crate::ingest::synth::{generate_synthetic_dataset, SynthSpec};

    #[test]
    fn dataset_dir_round_trip() {
        let ds = generate_synthetic_dataset(&SynthSpec { per_class: 2, ..Default::default() }).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_dataset(dir.path(), &ds).unwrap();
        let back = read_dataset(dir.path()).unwrap();
        assert_eq!(back.manifest, ds.manifest);
        assert_eq!(back.signals, ds.signals);
    }

    #[test]
    fn split_round_trip() {
        let ds = generate_synthetic_dataset(&SynthSpec { per_class: 5, ..Default::default() }).unwrap();
        let s = split_dataset(&ds.manifest, &SplitOptions::default()).unwrap();
        let text = render_split(&s);
        assert_eq!(parse_split(Path::new("s"), &text).unwrap(), s);
    }

    #[test]
    fn corrupt_line_is_named() {
        let ds = generate_synthetic_dataset(&SynthSpec { per_class: 1, ..Default::default() }).unwrap();
        let mut text = render_manifest(&ds.manifest);
        text = text.replacen("\"label\":2", "\"label\":\"two\"", 1);
        match parse_manifest(Path::new("m.jsonl"), &text).unwrap_err() {
            IngestError::CorruptManifest { line, .. } => assert_eq!(line, 4),
            e => panic!("unexpected {e:?}"),
        }
    }
}
