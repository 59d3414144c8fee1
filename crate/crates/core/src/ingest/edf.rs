//! European Data Format (EDF/EDF+) reader and a small writer.
//!
//! Layout: a 256-byte ASCII header, 256 bytes of per-signal header fields
//! (stored field-by-field across all signals), then data records holding
//! `samples_per_record` 16-bit little-endian integers per signal. Digital
//! values map to physical units by the linear calibration
//! `phys_min + (dig − dig_min)·(phys_max − phys_min)/(dig_max − dig_min)`.
//! EDF+ "EDF Annotations" signals carry time-stamped annotation lists (TALs)
//! instead of samples.

use super::IngestError;

pub const ANNOTATION_LABEL: &str = "EDF Annotations";

#[derive(Debug, Clone, PartialEq)]
pub struct EdfHeader {
    pub version: String,
    pub patient: String,
    pub recording: String,
    pub start_date: String,
    pub start_time: String,
    pub header_bytes: usize,
    pub reserved: String,
    /// Record count as declared; `None` for the `-1` "unknown" convention.
    pub declared_records: Option<usize>,
    pub record_duration: f64,
    pub signals: Vec<EdfSignalHeader>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdfSignalHeader {
    pub label: String,
    pub transducer: String,
    pub physical_dimension: String,
    pub physical_min: f64,
    pub physical_max: f64,
    pub digital_min: i64,
    pub digital_max: i64,
    pub prefilter: String,
    pub samples_per_record: usize,
}

impl EdfSignalHeader {
    pub fn is_annotation(&self) -> bool {
        self.label == ANNOTATION_LABEL
    }

    /// Physical value of one digital step.
    pub fn resolution(&self) -> f64 {
        (self.physical_max - self.physical_min) / (self.digital_max - self.digital_min) as f64
    }

    pub fn to_physical(&self, digital: i16) -> f64 {
        self.physical_min + (digital as i64 - self.digital_min) as f64 * self.resolution()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdfChannel {
    pub header: EdfSignalHeader,
    /// Samples per second.
    pub sampling_rate: f64,
    pub samples: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Annotation {
    /// Seconds from recording start.
    pub onset: f64,
    pub duration: Option<f64>,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdfRecording {
    pub header: EdfHeader,
    pub record_count: usize,
    pub channels: Vec<EdfChannel>,
    pub annotations: Vec<Annotation>,
}

impl EdfRecording {
    /// First channel whose label equals `name` or ends with it after a
    /// space (so `Fpz-Cz` selects `EEG Fpz-Cz`).
    pub fn channel(&self, name: &str) -> Option<&EdfChannel> {
        self.channels.iter().find(|c| c.header.label == name).or_else(|| {
            self.channels
                .iter()
                .find(|c| c.header.label.rsplit(' ').next() == Some(name))
        })
    }
}

struct FieldReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> FieldReader<'a> {
    fn text(&mut self, width: usize, what: &str) -> Result<String, IngestError> {
        let end = self.pos + width;
        let raw = self
            .bytes
            .get(self.pos..end)
            .ok_or_else(|| IngestError::EdfHeader(format!("header ends inside field {what}")))?;
        self.pos = end;
        if !raw.is_ascii() {
            return Err(IngestError::EdfHeader(format!("non-ASCII bytes in field {what}")));
        }
        Ok(String::from_utf8_lossy(raw).trim().to_string())
    }

    fn number<T: std::str::FromStr>(&mut self, width: usize, what: &str) -> Result<T, IngestError> {
        let s = self.text(width, what)?;
        s.parse()
            .map_err(|_| IngestError::EdfHeader(format!("field {what}: cannot parse {s:?}")))
    }
}

fn parse_header(bytes: &[u8]) -> Result<EdfHeader, IngestError> {
    if bytes.len() < 256 {
        return Err(IngestError::Truncated {
            expected: 256,
            actual: bytes.len(),
        });
    }
    let mut r = FieldReader { bytes, pos: 0 };
    let version = r.text(8, "version")?;
    if version != "0" {
        return Err(IngestError::EdfHeader(format!(
            "unsupported version field {version:?}"
        )));
    }
    let patient = r.text(80, "patient")?;
    let recording = r.text(80, "recording")?;
    let start_date = r.text(8, "start date")?;
    let start_time = r.text(8, "start time")?;
    let header_bytes: usize = r.number(8, "header bytes")?;
    let reserved = r.text(44, "reserved")?;
    let records: i64 = r.number(8, "record count")?;
    let record_duration: f64 = r.number(8, "record duration")?;
    let ns: usize = r.number(4, "signal count")?;

    let declared_records = match records {
        -1 => None,
        n if n >= 0 => Some(n as usize),
        n => return Err(IngestError::EdfHeader(format!("record count {n}"))),
    };
    if !(record_duration.is_finite() && record_duration >= 0.0) {
        return Err(IngestError::EdfHeader(format!(
            "record duration {record_duration}"
        )));
    }
    let expected_header = 256 * (ns + 1);
    if header_bytes != expected_header {
        return Err(IngestError::EdfHeader(format!(
            "header size field {header_bytes} does not match {ns} signals ({expected_header})"
        )));
    }
    if bytes.len() < expected_header {
        return Err(IngestError::Truncated {
            expected: expected_header,
            actual: bytes.len(),
        });
    }

    let texts = |r: &mut FieldReader, w: usize, what: &str| -> Result<Vec<String>, IngestError> {
        (0..ns).map(|_| r.text(w, what)).collect()
    };
    let labels = texts(&mut r, 16, "label")?;
    let transducers = texts(&mut r, 80, "transducer")?;
    let dims = texts(&mut r, 8, "physical dimension")?;
    let pmin: Vec<f64> = (0..ns).map(|_| r.number(8, "physical minimum")).collect::<Result<_, _>>()?;
    let pmax: Vec<f64> = (0..ns).map(|_| r.number(8, "physical maximum")).collect::<Result<_, _>>()?;
    let dmin: Vec<i64> = (0..ns).map(|_| r.number(8, "digital minimum")).collect::<Result<_, _>>()?;
    let dmax: Vec<i64> = (0..ns).map(|_| r.number(8, "digital maximum")).collect::<Result<_, _>>()?;
    let prefilters = texts(&mut r, 80, "prefilter")?;
    let spr: Vec<usize> = (0..ns)
        .map(|_| r.number(8, "samples per record"))
        .collect::<Result<_, _>>()?;

    let signals = (0..ns)
        .map(|i| EdfSignalHeader {
            label: labels[i].clone(),
            transducer: transducers[i].clone(),
            physical_dimension: dims[i].clone(),
            physical_min: pmin[i],
            physical_max: pmax[i],
            digital_min: dmin[i],
            digital_max: dmax[i],
            prefilter: prefilters[i].clone(),
            samples_per_record: spr[i],
        })
        .collect();

    Ok(EdfHeader {
        version,
        patient,
        recording,
        start_date,
        start_time,
        header_bytes,
        reserved,
        declared_records,
        record_duration,
        signals,
    })
}

/// Parse a complete EDF file held in memory.
pub fn parse_edf(bytes: &[u8]) -> Result<EdfRecording, IngestError> {
    let header = parse_header(bytes)?;
    for s in &header.signals {
        if !s.is_annotation() && s.digital_min == s.digital_max {
            return Err(IngestError::DegenerateCalibration {
                signal: s.label.clone(),
                value: s.digital_min,
            });
        }
    }
    let record_bytes: usize = header.signals.iter().map(|s| 2 * s.samples_per_record).sum();
    let payload = &bytes[header.header_bytes..];
    let record_count = match header.declared_records {
        Some(n) => {
            let expected = n * record_bytes;
            if payload.len() < expected {
                return Err(IngestError::Truncated {
                    expected: header.header_bytes + expected,
                    actual: bytes.len(),
                });
            }
            if payload.len() > expected {
                return Err(IngestError::EdfHeader(format!(
                    "{} bytes beyond the {n} declared records",
                    payload.len() - expected
                )));
            }
            n
        }
        None if record_bytes == 0 => 0,
        None => {
            let n = payload.len() / record_bytes;
            if !payload.len().is_multiple_of(record_bytes) {
                return Err(IngestError::Truncated {
                    expected: header.header_bytes + (n + 1) * record_bytes,
                    actual: bytes.len(),
                });
            }
            n
        }
    };

    let mut channels: Vec<EdfChannel> = Vec::new();
    let mut annotation_bytes: Vec<Vec<u8>> = Vec::new();
    let mut slots = Vec::with_capacity(header.signals.len());
    for s in &header.signals {
        if s.is_annotation() {
            slots.push((true, annotation_bytes.len()));
            annotation_bytes.push(Vec::new());
        } else {
            slots.push((false, channels.len()));
            let rate = if header.record_duration > 0.0 {
                s.samples_per_record as f64 / header.record_duration
            } else {
                0.0
            };
            channels.push(EdfChannel {
                header: s.clone(),
                sampling_rate: rate,
                samples: Vec::with_capacity(record_count * s.samples_per_record),
            });
        }
    }

    let mut annotations = Vec::new();
    for rec in payload.chunks_exact(record_bytes.max(1)).take(record_count) {
        let mut pos = 0;
        for (s, &(is_annotation, slot)) in header.signals.iter().zip(&slots) {
            let len = 2 * s.samples_per_record;
            let block = &rec[pos..pos + len];
            pos += len;
            if is_annotation {
                annotations.extend(parse_tals(block)?);
                annotation_bytes[slot].extend_from_slice(block);
            } else {
                let ch = &mut channels[slot];
                ch.samples.extend(
                    block
                        .chunks_exact(2)
                        .map(|b| ch.header.to_physical(i16::from_le_bytes([b[0], b[1]]))),
                );
            }
        }
    }

    Ok(EdfRecording {
        header,
        record_count,
        channels,
        annotations,
    })
}

/// Parse the time-stamped annotation lists of one record's annotation block.
/// Timekeeping TALs (no annotation text) are skipped.
fn parse_tals(block: &[u8]) -> Result<Vec<Annotation>, IngestError> {
    let mut out = Vec::new();
    for tal in block.split(|&b| b == 0).filter(|t| !t.is_empty()) {
        let mut parts = tal.split(|&b| b == 0x14);
        let Some(stamp) = parts.next() else { continue };
        let stamp = std::str::from_utf8(stamp)
            .map_err(|_| IngestError::EdfHeader("annotation onset is not ASCII".into()))?;
        let (onset, duration) = match stamp.split_once('\x15') {
            Some((o, d)) => (o, Some(d)),
            None => (stamp, None),
        };
        let onset: f64 = onset
            .parse()
            .map_err(|_| IngestError::EdfHeader(format!("annotation onset {onset:?}")))?;
        let duration = duration
            .map(|d| {
                d.parse::<f64>()
                    .map_err(|_| IngestError::EdfHeader(format!("annotation duration {d:?}")))
            })
            .transpose()?;
        for text in parts.filter(|p| !p.is_empty()) {
            out.push(Annotation {
                onset,
                duration,
                text: String::from_utf8_lossy(text).into_owned(),
            });
        }
    }
    Ok(out)
}

/// One signal for [`write_edf`].
#[derive(Debug, Clone)]
pub struct EdfSignalSpec {
    pub label: String,
    pub physical_dimension: String,
    pub physical_min: f64,
    pub physical_max: f64,
    pub digital_min: i16,
    pub digital_max: i16,
    pub samples_per_record: usize,
}

#[derive(Debug, Clone)]
pub enum EdfSignalData<'a> {
    /// Physical samples, quantized with the signal's calibration.
    Physical(&'a [f64]),
    /// Raw digital samples written verbatim.
    Digital(&'a [i16]),
    /// EDF+ annotations, packed into the per-record annotation blocks.
    Annotations(&'a [Annotation]),
}

/// Render `value` into at most 8 ASCII characters, trading precision for width.
fn header_number(value: f64) -> Result<String, IngestError> {
    if value.fract() == 0.0 && value.abs() < 1e8 {
        let s = format!("{}", value as i64);
        if s.len() <= 8 {
            return Ok(s);
        }
    }
    for precision in (0..=7).rev() {
        let s = format!("{value:.precision$}");
        if s.len() <= 8 {
            return Ok(s);
        }
    }
    Err(IngestError::InvalidParameter(format!(
        "{value} does not fit an 8-character EDF field"
    )))
}

fn push_field(out: &mut Vec<u8>, value: &str, width: usize) -> Result<(), IngestError> {
    if value.len() > width || !value.is_ascii() {
        return Err(IngestError::InvalidParameter(format!(
            "{value:?} does not fit a {width}-byte ASCII field"
        )));
    }
    out.extend_from_slice(value.as_bytes());
    out.extend(std::iter::repeat_n(b' ', width - value.len()));
    Ok(())
}

/// Serialize signals into an EDF file with `record_duration`-second records.
/// Physical calibration bounds are written with at most 8 characters; samples
/// are quantized against the bounds as written, so a reader recovers each
/// in-range sample to within one digital step.
pub fn write_edf(
    record_duration: f64,
    signals: &[(EdfSignalSpec, EdfSignalData<'_>)],
) -> Result<Vec<u8>, IngestError> {
    let mut records: Option<usize> = None;
    for (spec, data) in signals {
        if spec.samples_per_record == 0 {
            return Err(IngestError::InvalidParameter(format!(
                "{}: zero samples per record",
                spec.label
            )));
        }
        let n = match data {
            EdfSignalData::Physical(v) => Some((v.len(), spec.samples_per_record)),
            EdfSignalData::Digital(v) => Some((v.len(), spec.samples_per_record)),
            EdfSignalData::Annotations(_) => None,
        };
        if let Some((len, spr)) = n {
            if len % spr != 0 {
                return Err(IngestError::InvalidParameter(format!(
                    "{}: {len} samples is not a whole number of {spr}-sample records",
                    spec.label
                )));
            }
            match records {
                None => records = Some(len / spr),
                Some(r) if r != len / spr => {
                    return Err(IngestError::InvalidParameter(format!(
                        "{}: {} records, other signals have {r}",
                        spec.label,
                        len / spr
                    )))
                }
                _ => {}
            }
        }
    }
    let records = records.unwrap_or(1);
    let ns = signals.len();

    let mut out = Vec::with_capacity(256 * (ns + 1));
    push_field(&mut out, "0", 8)?;
    push_field(&mut out, "X X X X", 80)?;
    push_field(&mut out, "Startdate X X X X", 80)?;
    push_field(&mut out, "01.01.85", 8)?;
    push_field(&mut out, "00.00.00", 8)?;
    push_field(&mut out, &(256 * (ns + 1)).to_string(), 8)?;
    let reserved = if signals
        .iter()
        .any(|(_, d)| matches!(d, EdfSignalData::Annotations(_)))
    {
        "EDF+C"
    } else {
        ""
    };
    push_field(&mut out, reserved, 44)?;
    push_field(&mut out, &records.to_string(), 8)?;
    push_field(&mut out, &header_number(record_duration)?, 8)?;
    push_field(&mut out, &ns.to_string(), 4)?;

    let mut written_bounds = Vec::with_capacity(ns);
    for (spec, _) in signals {
        push_field(&mut out, &spec.label, 16)?;
    }
    for _ in signals {
        push_field(&mut out, "", 80)?;
    }
    for (spec, _) in signals {
        push_field(&mut out, &spec.physical_dimension, 8)?;
    }
    let mut mins = Vec::with_capacity(ns);
    for (spec, _) in signals {
        let s = header_number(spec.physical_min)?;
        mins.push(s.parse::<f64>().expect("formatted number"));
        push_field(&mut out, &s, 8)?;
    }
    for ((spec, _), &lo) in signals.iter().zip(&mins) {
        let s = header_number(spec.physical_max)?;
        written_bounds.push((lo, s.parse::<f64>().expect("formatted number")));
        push_field(&mut out, &s, 8)?;
    }
    for (spec, _) in signals {
        push_field(&mut out, &spec.digital_min.to_string(), 8)?;
    }
    for (spec, _) in signals {
        push_field(&mut out, &spec.digital_max.to_string(), 8)?;
    }
    for _ in signals {
        push_field(&mut out, "", 80)?;
    }
    for (spec, _) in signals {
        push_field(&mut out, &spec.samples_per_record.to_string(), 8)?;
    }
    for _ in signals {
        push_field(&mut out, "", 32)?;
    }

    let mut blocks: Vec<Vec<Vec<u8>>> = Vec::with_capacity(ns);
    for ((spec, data), &(pmin, pmax)) in signals.iter().zip(&written_bounds) {
        let spr = spec.samples_per_record;
        let per_record = match data {
            EdfSignalData::Physical(values) => {
                let (dmin, dmax) = (spec.digital_min as f64, spec.digital_max as f64);
                if dmin >= dmax || pmin == pmax {
                    return Err(IngestError::DegenerateCalibration {
                        signal: spec.label.clone(),
                        value: spec.digital_min as i64,
                    });
                }
                let scale = (dmax - dmin) / (pmax - pmin);
                values
                    .chunks(spr)
                    .map(|chunk| {
                        chunk
                            .iter()
                            .flat_map(|&v| {
                                let d = (dmin + (v - pmin) * scale).round().clamp(dmin, dmax);
                                (d as i16).to_le_bytes()
                            })
                            .collect()
                    })
                    .collect()
            }
            EdfSignalData::Digital(values) => values
                .chunks(spr)
                .map(|chunk| chunk.iter().flat_map(|d| d.to_le_bytes()).collect())
                .collect(),
            EdfSignalData::Annotations(list) => {
                pack_annotations(list, records, record_duration, 2 * spr, &spec.label)?
            }
        };
        blocks.push(per_record);
    }
    for r in 0..records {
        for b in &blocks {
            out.extend_from_slice(&b[r]);
        }
    }
    Ok(out)
}

fn pack_annotations(
    list: &[Annotation],
    records: usize,
    record_duration: f64,
    block_len: usize,
    label: &str,
) -> Result<Vec<Vec<u8>>, IngestError> {
    let mut blocks: Vec<Vec<u8>> = (0..records)
        .map(|r| format!("+{}\x14\x14\0", r as f64 * record_duration).into_bytes())
        .collect();
    let mut current = 0;
    for a in list {
        let mut tal = format!("{:+}", a.onset);
        if let Some(d) = a.duration {
            tal.push('\x15');
            tal.push_str(&d.to_string());
        }
        tal.push('\x14');
        tal.push_str(&a.text);
        tal.push_str("\x14\0");
        while current < records && blocks[current].len() + tal.len() > block_len {
            current += 1;
        }
        if current == records {
            return Err(IngestError::InvalidParameter(format!(
                "{label}: annotations do not fit {records} records of {block_len} bytes"
            )));
        }
        blocks[current].extend_from_slice(tal.as_bytes());
    }
    for b in &mut blocks {
        if b.len() > block_len {
            return Err(IngestError::InvalidParameter(format!(
                "{label}: annotation block exceeds {block_len} bytes"
            )));
        }
        b.resize(block_len, 0);
    }
    Ok(blocks)
}
