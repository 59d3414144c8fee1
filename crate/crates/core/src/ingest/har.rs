//! Inertial-signal datasets stored as one whitespace-separated text file per
//! channel (the UCI HAR "Inertial Signals" layout), one window per row.

use std::path::Path;

use super::{source_checksum, Dataset, DatasetManifest, IngestError, InstanceRecord, SignalMatrix};

/// Channel files in instance channel order: total acceleration X/Y/Z, body
/// acceleration X/Y/Z, angular velocity X/Y/Z.
pub const HAR_CHANNEL_STEMS: [&str; 9] = [
    "total_acc_x",
    "total_acc_y",
    "total_acc_z",
    "body_acc_x",
    "body_acc_y",
    "body_acc_z",
    "body_gyro_x",
    "body_gyro_y",
    "body_gyro_z",
];

pub const HAR_CLASS_NAMES: [&str; 6] = [
    "WALKING",
    "WALKING_UPSTAIRS",
    "WALKING_DOWNSTAIRS",
    "SITTING",
    "STANDING",
    "LAYING",
];

pub const HAR_WINDOW: usize = 128;

/// Parse a whitespace-separated file of reals. Every non-blank row must have
/// the same number of columns (`expected_cols`, or the first row's count).
/// Row numbers in errors are 1-based.
pub fn parse_fixed_width_signal_file(
    bytes: &[u8],
    expected_cols: Option<usize>,
) -> Result<Vec<Vec<f64>>, IngestError> {
    let text = std::str::from_utf8(bytes).map_err(|e| IngestError::MalformedRow {
        row: 1 + bytes[..e.valid_up_to()].iter().filter(|&&b| b == b'\n').count(),
        reason: "invalid UTF-8".into(),
    })?;
    let mut width = expected_cols;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let row_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split_whitespace()
            .map(|tok| match tok.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(IngestError::MalformedRow {
                    row: row_no,
                    reason: format!("not a finite number: {tok:?}"),
                }),
            })
            .collect::<Result<Vec<_>, _>>()?;
        let expected = *width.get_or_insert(row.len());
        if row.len() != expected {
            return Err(IngestError::ColumnCount {
                row: row_no,
                expected,
                found: row.len(),
            });
        }
        rows.push(row);
    }
    Ok(rows)
}

fn parse_integer_column(name: &str, bytes: &[u8]) -> Result<Vec<i64>, IngestError> {
    let rows = parse_fixed_width_signal_file(bytes, Some(1))?;
    rows.into_iter()
        .enumerate()
        .map(|(i, r)| {
            let v = r[0];
            if v.fract() != 0.0 {
                Err(IngestError::MalformedRow {
                    row: i + 1,
                    reason: format!("{name}: expected an integer, found {v}"),
                })
            } else {
                Ok(v as i64)
            }
        })
        .collect()
}

/// A named raw source file.
pub type Source<'a> = (&'a str, &'a [u8]);

/// Stack row `i` of the nine channel files into instance `i` (9×128). Labels
/// in `1..=6` are remapped to `0..6`. The optional subject file supplies the
/// split group of each row.
pub fn assemble_har_dataset(
    channel_files: &[Source<'_>],
    labels: Source<'_>,
    subjects: Option<Source<'_>>,
) -> Result<Dataset, IngestError> {
    if channel_files.len() != HAR_CHANNEL_STEMS.len() {
        return Err(IngestError::InvalidParameter(format!(
            "expected {} channel files, got {}",
            HAR_CHANNEL_STEMS.len(),
            channel_files.len()
        )));
    }
    let parsed = channel_files
        .iter()
        .map(|(name, bytes)| {
            parse_fixed_width_signal_file(bytes, Some(HAR_WINDOW)).map_err(|e| match e {
                IngestError::ColumnCount { row, expected, found } => IngestError::MalformedRow {
                    row,
                    reason: format!("{name}: expected {expected} columns, found {found}"),
                },
                IngestError::MalformedRow { row, reason } => IngestError::MalformedRow {
                    row,
                    reason: format!("{name}: {reason}"),
                },
                other => other,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;

    let n = parsed[0].len();
    for ((name, _), rows) in channel_files.iter().zip(&parsed) {
        if rows.len() != n {
            return Err(IngestError::RowCountMismatch {
                file: name.to_string(),
                expected: n,
                found: rows.len(),
            });
        }
    }
    let raw_labels = parse_integer_column(labels.0, labels.1)?;
    if raw_labels.len() != n {
        return Err(IngestError::RowCountMismatch {
            file: labels.0.to_string(),
            expected: n,
            found: raw_labels.len(),
        });
    }
    let groups = match subjects {
        Some((name, bytes)) => {
            let s = parse_integer_column(name, bytes)?;
            if s.len() != n {
                return Err(IngestError::RowCountMismatch {
                    file: name.to_string(),
                    expected: n,
                    found: s.len(),
                });
            }
            Some(s)
        }
        None => None,
    };

    let mut records = Vec::with_capacity(n);
    let mut signals = Vec::with_capacity(n);
    for i in 0..n {
        let raw = raw_labels[i];
        if !(1..=HAR_CLASS_NAMES.len() as i64).contains(&raw) {
            return Err(IngestError::MalformedRow {
                row: i + 1,
                reason: format!("{}: label {raw} outside 1..=6", labels.0),
            });
        }
        let label = (raw - 1) as usize;
        let id = format!("har-{i:06}");
        let samples: Vec<f64> = parsed.iter().flat_map(|rows| rows[i].iter().copied()).collect();
        signals.push(SignalMatrix::new(&id, 9, HAR_WINDOW, samples, label)?);
        records.push(InstanceRecord {
            id,
            source: channel_files[0].0.to_string(),
            offset: i as u64,
            label,
            group: groups.as_ref().map(|g| format!("subject-{}", g[i])),
        });
    }

    let mut sources: Vec<Source<'_>> = channel_files.to_vec();
    sources.push(labels);
    if let Some(s) = subjects {
        sources.push(s);
    }
    let manifest = DatasetManifest {
        name: "har".into(),
        class_names: HAR_CLASS_NAMES.iter().map(|s| s.to_string()).collect(),
        channels: 9,
        length: HAR_WINDOW,
        checksum: source_checksum(sources),
        instances: records,
    };
    Dataset::new(manifest, signals)
}

/// Load a HAR partition directory (e.g. `UCI HAR Dataset/train`), which holds
/// `y_<partition>.txt`, optionally `subject_<partition>.txt`, and the
/// `Inertial Signals/` channel files.
pub fn load_har_dir(dir: &Path, partition: &str) -> Result<Dataset, IngestError> {
    let read = |p: &Path| std::fs::read(p).map_err(|e| IngestError::io(p, e));
    let signal_dir = dir.join("Inertial Signals");
    let mut files = Vec::new();
    for stem in HAR_CHANNEL_STEMS {
        let name = format!("{stem}_{partition}.txt");
        let bytes = read(&signal_dir.join(&name))?;
        files.push((name, bytes));
    }
    let label_name = format!("y_{partition}.txt");
    let label_bytes = read(&dir.join(&label_name))?;
    let subject_name = format!("subject_{partition}.txt");
    let subject_path = dir.join(&subject_name);
    let subject_bytes = if subject_path.exists() {
        Some(read(&subject_path)?)
    } else {
        None
    };
    let channel_refs: Vec<Source<'_>> = files
        .iter()
        .map(|(n, b)| (n.as_str(), b.as_slice()))
        .collect();
    assemble_har_dataset(
        &channel_refs,
        (&label_name, &label_bytes),
        subject_bytes
            .as_deref()
            .map(|b| (subject_name.as_str(), b)),
    )
}
