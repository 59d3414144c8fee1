//! Dataset ingestion: parsers for the supported on-disk formats, synthetic
//! corpora, manifests and reproducible train/valid/test splits.

pub mod edf;
pub mod har;
pub mod seizure;
pub mod sleep;
pub mod split;
pub mod store;
pub mod synth;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::numeric::check_finite;

pub use edf::{parse_edf, EdfRecording};
pub use har::{assemble_har_dataset, parse_fixed_width_signal_file};
pub use seizure::{parse_seizure_csv, SeizureCsvOptions};
pub use sleep::{epoch_sleep_recording, EpochOutcome, EpochStatus, StageMapping};
pub use split::{split_dataset, Split, SplitManifest, SplitOptions, SplitUnit};
pub use synth::{generate_synthetic_dataset, SynthSpec};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("row {row}: {reason}")]
    MalformedRow { row: usize, reason: String },
    #[error("row {row}: expected {expected} columns, found {found}")]
    ColumnCount {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("{file}: expected {expected} rows, found {found}")]
    RowCountMismatch {
        file: String,
        expected: usize,
        found: usize,
    },
    #[error("truncated EDF payload: expected {expected} bytes, found {actual}")]
    Truncated { expected: usize, actual: usize },
    #[error("EDF header: {0}")]
    EdfHeader(String),
    #[error("signal {signal}: digital minimum equals digital maximum ({value})")]
    DegenerateCalibration { signal: String, value: i64 },
    #[error("duplicate instance id {0}")]
    DuplicateId(String),
    #[error("invalid instance {id}: {reason}")]
    InvalidInstance { id: String, reason: String },
    #[error("invalid split request: {0}")]
    InvalidSplit(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path} line {line}: {reason}")]
    CorruptManifest {
        path: String,
        line: usize,
        reason: String,
    },
}

impl IngestError {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        IngestError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

/// One labeled instance: `channels × length` samples, channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalMatrix {
    id: String,
    channels: usize,
    length: usize,
    samples: Vec<f64>,
    label: usize,
}

impl SignalMatrix {
    pub fn new(
        id: impl Into<String>,
        channels: usize,
        length: usize,
        samples: Vec<f64>,
        label: usize,
    ) -> Result<Self, IngestError> {
        let id = id.into();
        if channels == 0 || length == 0 {
            return Err(IngestError::InvalidInstance {
                id,
                reason: format!("empty shape {channels}x{length}"),
            });
        }
        if samples.len() != channels * length {
            return Err(IngestError::InvalidInstance {
                id,
                reason: format!(
                    "{} samples for shape {channels}x{length}",
                    samples.len()
                ),
            });
        }
        if let Err(e) = check_finite(&samples) {
            return Err(IngestError::InvalidInstance {
                id,
                reason: e.to_string(),
            });
        }
        Ok(Self {
            id,
            channels,
            length,
            samples,
            label,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn length(&self) -> usize {
        self.length
    }

    pub fn label(&self) -> usize {
        self.label
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn channel(&self, index: usize) -> &[f64] {
        &self.samples[index * self.length..(index + 1) * self.length]
    }

    pub fn get(&self, channel: usize, t: usize) -> f64 {
        self.samples[channel * self.length + t]
    }
}

/// Where an instance came from: source file name and an offset within it
/// (row index for text formats, sample index for recordings).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub id: String,
    pub source: String,
    pub offset: u64,
    pub label: usize,
    /// Subject or recording the instance belongs to, for group-level splits.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    pub class_names: Vec<String>,
    pub channels: usize,
    pub length: usize,
    pub checksum: String,
    pub instances: Vec<InstanceRecord>,
}

impl DatasetManifest {
    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn class_count(&self) -> usize {
        self.class_names.len()
    }

    /// Checks id uniqueness, label range and that `signals` line up with the records.
    pub fn validate(&self, signals: &[SignalMatrix]) -> Result<(), IngestError> {
        let mut seen = std::collections::HashSet::new();
        for rec in &self.instances {
            if !seen.insert(rec.id.as_str()) {
                return Err(IngestError::DuplicateId(rec.id.clone()));
            }
            if rec.label >= self.class_count() {
                return Err(IngestError::InvalidInstance {
                    id: rec.id.clone(),
                    reason: format!(
                        "label {} outside {} classes",
                        rec.label,
                        self.class_count()
                    ),
                });
            }
        }
        if signals.len() != self.instances.len() {
            return Err(IngestError::InvalidParameter(format!(
                "{} signals for {} manifest records",
                signals.len(),
                self.instances.len()
            )));
        }
        for (rec, sig) in self.instances.iter().zip(signals) {
            if rec.id != sig.id() || rec.label != sig.label() {
                return Err(IngestError::InvalidInstance {
                    id: sig.id().to_string(),
                    reason: format!("does not match manifest record {}", rec.id),
                });
            }
            if sig.channels() != self.channels || sig.length() != self.length {
                return Err(IngestError::InvalidInstance {
                    id: sig.id().to_string(),
                    reason: format!(
                        "shape {}x{} differs from dataset {}x{}",
                        sig.channels(),
                        sig.length(),
                        self.channels,
                        self.length
                    ),
                });
            }
        }
        Ok(())
    }
}

/// Content hash over an ordered list of named sources. Each source is
/// length-prefixed so moving bytes between sources also changes the hash.
pub fn source_checksum<'a>(sources: impl IntoIterator<Item = (&'a str, &'a [u8])>) -> String {
    let mut h = Sha256::new();
    for (name, bytes) in sources {
        h.update((name.len() as u64).to_le_bytes());
        h.update(name.as_bytes());
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(bytes);
    }
    hex::encode(h.finalize())
}

/// A parsed dataset: its manifest plus the instances in manifest order.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub signals: Vec<SignalMatrix>,
}

impl Dataset {
    pub fn new(manifest: DatasetManifest, signals: Vec<SignalMatrix>) -> Result<Self, IngestError> {
        manifest.validate(&signals)?;
        Ok(Self { manifest, signals })
    }
}
