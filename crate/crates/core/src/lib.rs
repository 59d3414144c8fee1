//! Convert multichannel biosignal time series into representations that
//! pretrained vision and language transformers accept.
//!
//! * [`image`] stacks channels into three planes, reshapes and bilinearly
//!   resizes them to the model geometry, and quantizes to an 8-bit RGB image.
//! * [`text`] scales single-channel signals to integers, downsamples them with
//!   non-overlapping windows to a token budget, and renders delimited text.
//! * [`probe`] trains a linear softmax head on converted instances, a cheap
//!   check that the conversions keep class structure.
//! * [`ingest`] parses the supported dataset formats and produces seeded splits.
//! * [`pipeline`] runs ingest → split → convert → probe with content-addressed outputs.

pub mod ingest;
pub mod jsonl;
pub mod numeric;
pub mod image;
pub mod pipeline;
pub mod probe;
pub mod text;

/// First 16 hex digits of the SHA-256 of `bytes`.
pub(crate) fn short_hash(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    let mut h = hex::encode(Sha256::digest(bytes));
    h.truncate(16);
    h
}
