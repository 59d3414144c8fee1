//! Line-delimited JSON records.

use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::ingest::IngestError;

pub fn to_line<T: Serialize>(record: &T) -> String {
    let mut s = serde_json::to_string(record).expect("records serialize");
    s.push('\n');
    s
}

pub fn write_lines<T: Serialize>(out: &mut impl Write, records: &[T]) -> std::io::Result<()> {
    for r in records {
        out.write_all(to_line(r).as_bytes())?;
    }
    Ok(())
}

/// Non-empty lines of `text` with their 1-based line numbers.
pub fn lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !l.trim().is_empty())
}

pub fn parse_line<T: DeserializeOwned>(path: &Path, line_no: usize, line: &str) -> Result<T, IngestError> {
    serde_json::from_str(line).map_err(|e| IngestError::CorruptManifest {
        path: path.display().to_string(),
        line: line_no,
        reason: e.to_string(),
    })
}

pub fn read_text(path: &Path) -> Result<String, IngestError> {
    std::fs::read_to_string(path).map_err(|e| IngestError::io(path, e))
}
