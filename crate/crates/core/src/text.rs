//! Signal-to-text adapter for single-channel instances.
//!
//! Decimal samples are multiplied by `alpha` and rounded half away from zero
//! (raw integer data skips the scaling). Sequences longer than the token
//! budget `L` are reduced with non-overlapping windows of `w = ⌈T/L⌉`
//! samples, one value per window. Past `3L` samples that reduction discards
//! too much, so the conversion is refused unless forced and the image adapter
//! should be used instead.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::SignalMatrix;

#[derive(Debug, Error, PartialEq)]
pub enum TextError {
    #[error("value {value} at index {index} scaled by {alpha} does not fit a 64-bit integer")]
    OutOfRange { index: usize, value: f64, alpha: f64 },
    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },
    #[error(
        "instance {id} has {channels} channels; text conversion is single-channel only \
         (use the image adapter, or legacy flattening)"
    )]
    MultiChannel { id: String, channels: usize },
    #[error(
        "instance {id}: {length} samples exceed three times the budget of {budget}; \
         window downsampling would lose too much, use the image adapter instead (or force)"
    )]
    Overflow { id: String, length: usize, budget: usize },
    #[error("invalid text configuration: {0}")]
    InvalidConfig(String),
    #[error("token {index} ({token:?}) is not an integer")]
    BadToken { index: usize, token: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregator {
    /// Window mean, rounded half away from zero.
    Mean,
    /// First sample of each window (plain decimation).
    First,
    /// Sample with the largest magnitude; the earliest wins ties.
    MaxAbs,
}

impl Aggregator {
    pub fn as_str(self) -> &'static str {
        match self {
            Aggregator::Mean => "mean",
            Aggregator::First => "first",
            Aggregator::MaxAbs => "max_abs",
        }
    }
}

impl std::str::FromStr for Aggregator {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mean" => Ok(Self::Mean),
            "first" => Ok(Self::First),
            "max_abs" | "max-abs" => Ok(Self::MaxAbs),
            other => Err(format!("unknown aggregator {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TextAdapterConfig {
    pub alpha: f64,
    /// Token budget: the most integers one instance may render to.
    pub max_len: usize,
    pub aggregator: Aggregator,
    pub separator: String,
    /// Samples are already integers; round without scaling.
    pub integer_input: bool,
    /// Convert past the 3× budget anyway.
    pub force: bool,
    /// Flatten multichannel instances row-major instead of rejecting them.
    pub legacy_flatten: bool,
}

impl Default for TextAdapterConfig {
    fn default() -> Self {
        Self {
            alpha: 1000.0,
            max_len: 1024,
            aggregator: Aggregator::Mean,
            separator: " ".into(),
            integer_input: false,
            force: false,
            legacy_flatten: false,
        }
    }
}

impl TextAdapterConfig {
    pub fn validate(&self) -> Result<(), TextError> {
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(TextError::InvalidConfig(format!("alpha must be positive, got {}", self.alpha)));
        }
        if self.max_len == 0 {
            return Err(TextError::InvalidConfig("max_len must be at least 1".into()));
        }
        if self.separator.is_empty()
            || self.separator.contains('\n')
            || self.separator.chars().any(|c| c.is_ascii_digit() || c == '-')
        {
            return Err(TextError::InvalidConfig(format!(
                "separator {:?} must be non-empty and free of digits, '-' and newlines",
                self.separator
            )));
        }
        Ok(())
    }

    /// Canonical `key=value` lines; the basis of [`Self::hash`].
    pub fn canonical(&self) -> String {
        format!(
            "text.alpha={:?}\ntext.max_len={}\ntext.aggregator={}\ntext.separator={:?}\n\
             text.integer_input={}\ntext.force={}\ntext.legacy_flatten={}\n",
            self.alpha,
            self.max_len,
            self.aggregator.as_str(),
            self.separator,
            self.integer_input,
            self.force,
            self.legacy_flatten
        )
    }

    pub fn hash(&self) -> String {
        crate::short_hash(self.canonical().as_bytes())
    }
}

const I64_BOUND: f64 = 9_223_372_036_854_775_808.0; // 2^63

/// Scale by `alpha` (or not, for integer input) and round half away from zero.
pub fn amplify_and_round(values: &[f64], alpha: f64, integer_input: bool) -> Result<Vec<i64>, TextError> {
    let scale = if integer_input { 1.0 } else { alpha };
    values
        .iter()
        .enumerate()
        .map(|(index, &v)| {
            if !v.is_finite() {
                return Err(TextError::NonFinite { index });
            }
            let r = (v * scale).round();
            if !(-I64_BOUND..I64_BOUND).contains(&r) {
                return Err(TextError::OutOfRange { index, value: v, alpha: scale });
            }
            Ok(r as i64)
        })
        .collect()
}

/// `sum / count` rounded half away from zero, exactly.
fn rounded_mean(window: &[i64]) -> i64 {
    let sum: i128 = window.iter().map(|&v| v as i128).sum();
    let n = window.len() as i128;
    let q = (2 * sum.abs() + n) / (2 * n);
    (if sum < 0 { -q } else { q }) as i64
}

pub fn window_size(length: usize, budget: usize) -> usize {
    if length <= budget {
        1
    } else {
        length.div_ceil(budget)
    }
}

/// Reduce `values` to at most `budget` values with non-overlapping windows
/// of `w = ⌈T/L⌉` (the last window may be shorter). Returns the values and `w`.
pub fn window_downsample(values: &[i64], budget: usize, aggregator: Aggregator) -> (Vec<i64>, usize) {
    let w = window_size(values.len(), budget.max(1));
    if w == 1 {
        return (values.to_vec(), 1);
    }
    let out = values
        .chunks(w)
        .map(|win| match aggregator {
            Aggregator::Mean => rounded_mean(win),
            Aggregator::First => win[0],
            Aggregator::MaxAbs => win
                .iter()
                .copied()
                .fold(win[0], |best, v| if v.unsigned_abs() > best.unsigned_abs() { v } else { best }),
        })
        .collect();
    (out, w)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverflowStatus {
    Fits,
    Downsampled,
    Rejected,
}

impl OverflowStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            OverflowStatus::Fits => "fits",
            OverflowStatus::Downsampled => "downsampled",
            OverflowStatus::Rejected => "rejected",
        }
    }
}

/// `T ≤ L` fits, `L < T ≤ 3L` needs downsampling, `T > 3L` is rejected.
pub fn check_overflow(length: usize, budget: usize) -> OverflowStatus {
    if length <= budget {
        OverflowStatus::Fits
    } else if length <= budget.saturating_mul(3) {
        OverflowStatus::Downsampled
    } else {
        OverflowStatus::Rejected
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenText {
    pub text: String,
    pub values: Vec<i64>,
    pub token_count: usize,
    pub window_size: usize,
    pub status: OverflowStatus,
    pub instance_id: String,
    pub config_hash: String,
}

pub fn render_tokens(values: &[i64], separator: &str) -> String {
    let mut s = String::with_capacity(values.len() * 6);
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            s.push_str(separator);
        }
        s.push_str(&v.to_string());
    }
    s
}

pub fn parse_tokens(text: &str, separator: &str) -> Result<Vec<i64>, TextError> {
    if text.is_empty() {
        return Ok(Vec::new());
    }
    text.split(separator)
        .enumerate()
        .map(|(index, tok)| {
            tok.parse().map_err(|_| TextError::BadToken {
                index,
                token: tok.to_string(),
            })
        })
        .collect()
}

/// Overflow check → amplification → window downsampling → rendering.
pub fn convert_to_text(m: &SignalMatrix, config: &TextAdapterConfig) -> Result<TokenText, TextError> {
    config.validate()?;
    if m.channels() > 1 && !config.legacy_flatten {
        return Err(TextError::MultiChannel {
            id: m.id().to_string(),
            channels: m.channels(),
        });
    }
    // Channel-major storage makes the whole buffer the row-major flattening.
    let series = m.samples();
    let mut status = check_overflow(series.len(), config.max_len);
    if status == OverflowStatus::Rejected {
        if !config.force {
            return Err(TextError::Overflow {
                id: m.id().to_string(),
                length: series.len(),
                budget: config.max_len,
            });
        }
        tracing::warn!(id = m.id(), length = series.len(), budget = config.max_len, "forced past 3x budget");
        status = OverflowStatus::Downsampled;
    }
    let ints = amplify_and_round(series, config.alpha, config.integer_input)?;
    let (values, window_size) = window_downsample(&ints, config.max_len, config.aggregator);
    Ok(TokenText {
        text: render_tokens(&values, &config.separator),
        token_count: values.len(),
        values,
        window_size,
        status,
        instance_id: m.id().to_string(),
        config_hash: config.hash(),
    })
}
