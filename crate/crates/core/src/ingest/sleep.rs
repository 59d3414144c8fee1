//! Sleep recordings: cut one EEG channel into fixed 30-second epochs and
//! label them from a hypnogram's stage annotations.

use std::collections::BTreeMap;
use std::path::Path;

use super::edf::{parse_edf, Annotation};
use super::{source_checksum, Dataset, DatasetManifest, IngestError, InstanceRecord, SignalMatrix};

pub const DEFAULT_EPOCH_SAMPLES: usize = 3000;
pub const DEFAULT_CHANNEL: &str = "Fpz-Cz";

/// Annotation text → class, with classes indexed in order of first appearance.
#[derive(Debug, Clone, PartialEq)]
pub struct StageMapping {
    class_names: Vec<String>,
    entries: BTreeMap<String, usize>,
}

impl Default for StageMapping {
    /// Five classes W/N1/N2/N3/REM, stages 3 and 4 merged; `?` and movement
    /// time stay unlabeled.
    fn default() -> Self {
        Self::parse(
            "Sleep stage W = W\n\
             Sleep stage 1 = N1\n\
             Sleep stage 2 = N2\n\
             Sleep stage 3 = N3\n\
             Sleep stage 4 = N3\n\
             Sleep stage R = REM\n",
        )
        .expect("default mapping parses")
    }
}

impl StageMapping {
    /// Parse `annotation text = class name` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, IngestError> {
        let mut class_names: Vec<String> = Vec::new();
        let mut entries = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, class) = line.split_once('=').ok_or_else(|| IngestError::MalformedRow {
                row: i + 1,
                reason: "expected `annotation = class`".into(),
            })?;
            let (key, class) = (key.trim(), class.trim());
            if key.is_empty() || class.is_empty() {
                return Err(IngestError::MalformedRow {
                    row: i + 1,
                    reason: "empty annotation or class".into(),
                });
            }
            let idx = match class_names.iter().position(|c| c == class) {
                Some(idx) => idx,
                None => {
                    class_names.push(class.to_string());
                    class_names.len() - 1
                }
            };
            if entries.insert(key.to_string(), idx).is_some() {
                return Err(IngestError::MalformedRow {
                    row: i + 1,
                    reason: format!("annotation {key:?} mapped twice"),
                });
            }
        }
        if class_names.is_empty() {
            return Err(IngestError::InvalidParameter("empty stage mapping".into()));
        }
        Ok(Self {
            class_names,
            entries,
        })
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn class_of(&self, annotation: &str) -> Option<usize> {
        self.entries.get(annotation.trim()).copied()
    }
}

/// Label of every epoch: the mapped stage of the annotation covering the
/// epoch's start time, or `None` when uncovered or unmapped.
pub fn stage_labels(
    annotations: &[Annotation],
    mapping: &StageMapping,
    epoch_seconds: f64,
    epochs: usize,
) -> Vec<Option<usize>> {
    (0..epochs)
        .map(|e| {
            let start = e as f64 * epoch_seconds;
            annotations
                .iter()
                .filter(|a| mapping.class_of(&a.text).is_some())
                .find(|a| {
                    let end = a.onset + a.duration.unwrap_or(epoch_seconds);
                    a.onset <= start && start < end
                })
                .and_then(|a| mapping.class_of(&a.text))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EpochStatus {
    Complete,
    /// The stream held less than one epoch; nothing was produced.
    ShortStream,
}

#[derive(Debug, Clone)]
pub struct EpochOutcome {
    /// Labeled epochs, in time order.
    pub instances: Vec<SignalMatrix>,
    /// Start sample of each produced instance.
    pub offsets: Vec<usize>,
    /// Full epochs cut from the stream, labeled or not.
    pub epochs_cut: usize,
    /// Epochs dropped because their label was missing.
    pub unlabeled: usize,
    /// Trailing samples that did not fill an epoch.
    pub dropped_samples: usize,
    pub status: EpochStatus,
}

/// Cut `stream` into consecutive non-overlapping `epoch_samples` windows
/// (trailing partial window dropped). Epoch `e` takes `labels[e]`; epochs
/// without a label are skipped.
pub fn epoch_sleep_recording(
    id_prefix: &str,
    stream: &[f64],
    epoch_samples: usize,
    labels: &[Option<usize>],
) -> Result<EpochOutcome, IngestError> {
    if epoch_samples == 0 {
        return Err(IngestError::InvalidParameter("epoch length must be positive".into()));
    }
    let epochs_cut = stream.len() / epoch_samples;
    let dropped_samples = stream.len() - epochs_cut * epoch_samples;
    if epochs_cut == 0 {
        tracing::warn!(
            source = id_prefix,
            samples = stream.len(),
            epoch_samples,
            "stream shorter than one epoch"
        );
        return Ok(EpochOutcome {
            instances: Vec::new(),
            offsets: Vec::new(),
            epochs_cut,
            unlabeled: 0,
            dropped_samples,
            status: EpochStatus::ShortStream,
        });
    }
    let mut instances = Vec::new();
    let mut offsets = Vec::new();
    let mut unlabeled = 0;
    for (e, window) in stream.chunks_exact(epoch_samples).enumerate() {
        match labels.get(e).copied().flatten() {
            Some(label) => {
                instances.push(SignalMatrix::new(
                    format!("{id_prefix}-{e:05}"),
                    1,
                    epoch_samples,
                    window.to_vec(),
                    label,
                )?);
                offsets.push(e * epoch_samples);
            }
            None => unlabeled += 1,
        }
    }
    Ok(EpochOutcome {
        instances,
        offsets,
        epochs_cut,
        unlabeled,
        dropped_samples,
        status: EpochStatus::Complete,
    })
}

#[derive(Debug, Clone)]
pub struct SleepEdfOptions {
    pub channel: String,
    pub epoch_samples: usize,
    pub mapping: StageMapping,
    /// Keep only this many wake epochs before the first and after the last
    /// sleep epoch of each night.
    pub trim_wake_epochs: Option<usize>,
    /// Class name treated as wake by `trim_wake_epochs`.
    pub wake_class: String,
}

impl Default for SleepEdfOptions {
    fn default() -> Self {
        Self {
            channel: DEFAULT_CHANNEL.into(),
            epoch_samples: DEFAULT_EPOCH_SAMPLES,
            mapping: StageMapping::default(),
            trim_wake_epochs: None,
            wake_class: "W".into(),
        }
    }
}

/// One night: a signal file and its hypnogram file.
#[derive(Debug, Clone, Copy)]
pub struct SleepNight<'a> {
    pub name: &'a str,
    pub psg: (&'a str, &'a [u8]),
    pub hypnogram: (&'a str, &'a [u8]),
}

fn trim_wake(labels: &mut [Option<usize>], wake: usize, keep: usize) {
    let sleep = |l: &Option<usize>| matches!(l, Some(c) if *c != wake);
    let (Some(first), Some(last)) = (labels.iter().position(sleep), labels.iter().rposition(sleep))
    else {
        return;
    };
    let lo = first.saturating_sub(keep);
    let hi = (last + keep).min(labels.len().saturating_sub(1));
    for (i, l) in labels.iter_mut().enumerate() {
        if i < lo || i > hi {
            *l = None;
        }
    }
}

/// Build a single-channel epoch dataset from sleep recordings.
pub fn assemble_sleep_edf(
    nights: &[SleepNight<'_>],
    options: &SleepEdfOptions,
) -> Result<Dataset, IngestError> {
    let mut signals = Vec::new();
    let mut records = Vec::new();
    for night in nights {
        let psg = parse_edf(night.psg.1)?;
        let channel = psg.channel(&options.channel).ok_or_else(|| {
            IngestError::InvalidParameter(format!(
                "{}: no channel {:?}",
                night.psg.0, options.channel
            ))
        })?;
        if channel.sampling_rate <= 0.0 {
            return Err(IngestError::EdfHeader(format!(
                "{}: channel {} has no sampling rate",
                night.psg.0, channel.header.label
            )));
        }
        let hyp = parse_edf(night.hypnogram.1)?;
        let epoch_seconds = options.epoch_samples as f64 / channel.sampling_rate;
        let epochs = channel.samples.len() / options.epoch_samples;
        let mut labels = stage_labels(&hyp.annotations, &options.mapping, epoch_seconds, epochs);
        if let Some(keep) = options.trim_wake_epochs {
            if let Some(wake) = options
                .mapping
                .class_names()
                .iter()
                .position(|c| *c == options.wake_class)
            {
                trim_wake(&mut labels, wake, keep);
            }
        }
        let outcome =
            epoch_sleep_recording(night.name, &channel.samples, options.epoch_samples, &labels)?;
        for (inst, offset) in outcome.instances.into_iter().zip(outcome.offsets) {
            records.push(InstanceRecord {
                id: inst.id().to_string(),
                source: night.psg.0.to_string(),
                offset: offset as u64,
                label: inst.label(),
                group: Some(night.name.to_string()),
            });
            signals.push(inst);
        }
    }
    let sources: Vec<(&str, &[u8])> = nights
        .iter()
        .flat_map(|n| [n.psg, n.hypnogram])
        .collect();
    let manifest = DatasetManifest {
        name: "sleep-edf".into(),
        class_names: options.mapping.class_names().to_vec(),
        channels: 1,
        length: options.epoch_samples,
        checksum: source_checksum(sources),
        instances: records,
    };
    Dataset::new(manifest, signals)
}

/// Pair `*-PSG.edf` with `*-Hypnogram.edf` files sharing their first six
/// characters (subject and night in the Sleep-EDF naming scheme), in name order.
pub fn load_sleep_edf_dir(dir: &Path, options: &SleepEdfOptions) -> Result<Dataset, IngestError> {
    let mut names: Vec<String> = std::fs::read_dir(dir)
        .map_err(|e| IngestError::io(dir, e))?
        .filter_map(|e| e.ok())
        .filter_map(|e| e.file_name().into_string().ok())
        .collect();
    names.sort();
    let key = |n: &str| n.chars().take(6).collect::<String>();
    let mut pairs = Vec::new();
    for psg in names.iter().filter(|n| n.ends_with("-PSG.edf")) {
        let hyp = names
            .iter()
            .find(|h| h.ends_with("-Hypnogram.edf") && key(h) == key(psg))
            .ok_or_else(|| {
                IngestError::InvalidParameter(format!("no hypnogram for {psg}"))
            })?;
        pairs.push((psg.clone(), hyp.clone()));
    }
    let mut loaded = Vec::with_capacity(pairs.len());
    for (psg, hyp) in &pairs {
        let read = |n: &str| std::fs::read(dir.join(n)).map_err(|e| IngestError::io(dir.join(n), e));
        loaded.push((key(psg), psg.as_str(), read(psg)?, hyp.as_str(), read(hyp)?));
    }
    let nights: Vec<SleepNight<'_>> = loaded
        .iter()
        .map(|(k, p, pb, h, hb)| SleepNight {
            name: k,
            psg: (p, pb),
            hypnogram: (h, hb),
        })
        .collect();
    assemble_sleep_edf(&nights, options)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::edf::{write_edf, EdfSignalData, EdfSignalSpec, ANNOTATION_LABEL};

    #[test]
    fn exact_division_and_drop() {
        let labels = vec![Some(0); 3];
        let out = epoch_sleep_recording("n", &vec![0.5; 9000], 3000, &labels).unwrap();
        assert_eq!(out.instances.len(), 3);
        assert_eq!(out.dropped_samples, 0);
        assert_eq!(out.instances[2].length(), 3000);
        let out = epoch_sleep_recording("n", &vec![0.5; 9001], 3000, &labels).unwrap();
        assert_eq!(out.instances.len(), 3);
        assert_eq!(out.dropped_samples, 1);
        assert_eq!(out.epochs_cut * 3000 + out.dropped_samples, 9001);
    }

    #[test]
    fn short_stream_is_empty_with_status() {
        let out = epoch_sleep_recording("n", &[0.0; 2999], 3000, &[Some(0)]).unwrap();
        assert!(out.instances.is_empty());
        assert_eq!(out.status, EpochStatus::ShortStream);
        assert_eq!(out.dropped_samples, 2999);
    }

    #[test]
    fn unlabeled_epochs_skipped() {
        let out =
            epoch_sleep_recording("n", &[1.0; 40], 10, &[Some(1), None, Some(2)]).unwrap();
        let ids: Vec<&str> = out.instances.iter().map(|i| i.id()).collect();
        assert_eq!(ids, vec!["n-00000", "n-00002"]);
        assert_eq!(out.unlabeled, 2);
        assert_eq!(out.offsets, vec![0, 20]);
    }

    #[test]
    fn default_mapping_merges_stage_four() {
        let m = StageMapping::default();
        assert_eq!(m.class_names(), &["W", "N1", "N2", "N3", "REM"]);
        assert_eq!(m.class_of("Sleep stage 3"), m.class_of("Sleep stage 4"));
        assert_eq!(m.class_of("Sleep stage ?"), None);
        assert_eq!(m.class_of("Movement time"), None);
    }

    #[test]
    fn mapping_parse_errors() {
        assert!(StageMapping::parse("no equals sign").is_err());
        assert!(StageMapping::parse("a = x\na = y").is_err());
        assert!(StageMapping::parse("# only comments\n").is_err());
    }

    fn night(stages: &[(&str, f64)], seconds: usize) -> (Vec<u8>, Vec<u8>) {
        let samples: Vec<f64> = (0..seconds * 100).map(|i| ((i % 200) as f64) - 100.0).collect();
        let spec = EdfSignalSpec {
            label: "EEG Fpz-Cz".into(),
            physical_dimension: "uV".into(),
            physical_min: -200.0,
            physical_max: 200.0,
            digital_min: -2048,
            digital_max: 2047,
            samples_per_record: 3000,
        };
        let psg = write_edf(30.0, &[(spec, EdfSignalData::Physical(&samples))]).unwrap();
        let mut onset = 0.0;
        let notes: Vec<Annotation> = stages
            .iter()
            .map(|&(t, d)| {
                let a = Annotation {
                    onset,
                    duration: Some(d),
                    text: t.into(),
                };
                onset += d;
                a
            })
            .collect();
        let aspec = EdfSignalSpec {
            label: ANNOTATION_LABEL.into(),
            physical_dimension: String::new(),
            physical_min: -1.0,
            physical_max: 1.0,
            digital_min: -32768,
            digital_max: 32767,
            samples_per_record: 512,
        };
        let hyp = write_edf(30.0, &[(aspec, EdfSignalData::Annotations(&notes))]).unwrap();
        (psg, hyp)
    }

    #[test]
    fn labels_follow_hypnogram() {
        let (psg, hyp) = night(
            &[
                ("Sleep stage W", 90.0),
                ("Sleep stage 2", 60.0),
                ("Sleep stage ?", 30.0),
                ("Sleep stage 4", 30.0),
            ],
            240,
        );
        let nights = [SleepNight {
            name: "SC4001",
            psg: ("SC4001E0-PSG.edf", &psg),
            hypnogram: ("SC4001EC-Hypnogram.edf", &hyp),
        }];
        let ds = assemble_sleep_edf(&nights, &SleepEdfOptions::default()).unwrap();
        let labels: Vec<usize> = ds.signals.iter().map(|s| s.label()).collect();
        // 8 epochs: W W W N2 N2 ? N3 (uncovered)
        assert_eq!(labels, vec![0, 0, 0, 2, 2, 3]);
        assert_eq!(ds.manifest.instances[5].offset, 6 * 3000);
        assert_eq!(ds.signals[0].length(), 3000);

        let trimmed = assemble_sleep_edf(
            &nights,
            &SleepEdfOptions {
                trim_wake_epochs: Some(1),
                ..Default::default()
            },
        )
        .unwrap();
        let labels: Vec<usize> = trimmed.signals.iter().map(|s| s.label()).collect();
        assert_eq!(labels, vec![0, 2, 2, 3]);
    }
}
