//! Single-channel seizure-recognition CSV: one 1-second chunk per row, an
//! optional leading id column, the samples, and a trailing label in `1..=5`.

use super::{source_checksum, Dataset, DatasetManifest, IngestError, InstanceRecord, SignalMatrix};

pub const SEIZURE_CLASS_NAMES: [&str; 5] = [
    "seizure",
    "tumor_area",
    "healthy_area",
    "eyes_closed",
    "eyes_open",
];
pub const BINARY_CLASS_NAMES: [&str; 2] = ["non_seizure", "seizure"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeizureCsvOptions {
    /// Samples per row.
    pub samples: usize,
    /// Collapse the five classes to seizure (label 1) versus everything else.
    pub binary: bool,
}

impl Default for SeizureCsvOptions {
    fn default() -> Self {
        Self {
            samples: 178,
            binary: false,
        }
    }
}

fn is_number(field: &str) -> bool {
    field.trim().parse::<f64>().is_ok()
}

/// Parse the CSV held in `bytes`, named `source` in the manifest. A first
/// line whose label field is not numeric is treated as a header.
pub fn parse_seizure_csv(
    source: &str,
    bytes: &[u8],
    options: SeizureCsvOptions,
) -> Result<Dataset, IngestError> {
    let text = std::str::from_utf8(bytes).map_err(|_| IngestError::MalformedRow {
        row: 1,
        reason: "invalid UTF-8".into(),
    })?;
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .peekable();

    let Some(&(first_no, first)) = lines.peek() else {
        return Err(IngestError::InvalidParameter(format!("{source}: no rows")));
    };
    let first_fields: Vec<&str> = first.split(',').collect();
    let has_header = !is_number(first_fields.last().copied().unwrap_or(""));
    let has_id = if has_header {
        match first_fields.len() {
            n if n == options.samples + 2 => true,
            n if n == options.samples + 1 => false,
            n => {
                return Err(IngestError::ColumnCount {
                    row: first_no + 1,
                    expected: options.samples + 2,
                    found: n,
                })
            }
        }
    } else {
        !is_number(first_fields[0])
    };
    if has_header {
        lines.next();
    }
    let expected = options.samples + 1 + usize::from(has_id);

    let classes: &[&str] = if options.binary {
        &BINARY_CLASS_NAMES
    } else {
        &SEIZURE_CLASS_NAMES
    };
    let mut records = Vec::new();
    let mut signals = Vec::new();
    for (line_idx, line) in lines {
        let row = line_idx + 1;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != expected {
            return Err(IngestError::ColumnCount {
                row,
                expected,
                found: fields.len(),
            });
        }
        let body = if has_id { &fields[1..] } else { &fields[..] };
        let samples = body[..options.samples]
            .iter()
            .map(|f| match f.trim().parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(IngestError::MalformedRow {
                    row,
                    reason: format!("not a finite number: {f:?}"),
                }),
            })
            .collect::<Result<Vec<_>, _>>()?;
        let raw_label: i64 = body[options.samples]
            .trim()
            .parse()
            .map_err(|_| IngestError::MalformedRow {
                row,
                reason: format!("bad label {:?}", body[options.samples]),
            })?;
        if !(1..=5).contains(&raw_label) {
            return Err(IngestError::MalformedRow {
                row,
                reason: format!("label {raw_label} outside 1..=5"),
            });
        }
        let label = if options.binary {
            usize::from(raw_label == 1)
        } else {
            (raw_label - 1) as usize
        };
        let index = signals.len();
        let id = format!("seizure-{index:06}");
        let group = has_id.then(|| {
            let raw = fields[0].trim().trim_matches('"');
            raw.split_once('.').map_or(raw, |(_, rest)| rest).to_string()
        });
        signals.push(SignalMatrix::new(&id, 1, options.samples, samples, label)?);
        records.push(InstanceRecord {
            id,
            source: source.to_string(),
            offset: line_idx as u64,
            label,
            group,
        });
    }

    let manifest = DatasetManifest {
        name: if options.binary {
            "seizure-binary".into()
        } else {
            "seizure".into()
        },
        class_names: classes.iter().map(|s| s.to_string()).collect(),
        channels: 1,
        length: options.samples,
        checksum: source_checksum([(source, bytes)]),
        instances: records,
    };
    Dataset::new(manifest, signals)
}
