//! Signal-to-image adapter.
//!
//! An instance of `C` channels × `T` samples becomes three planes:
//!
//! * `C` divisible by 3: the channel axis is split into 3 × `C/3`, channel
//!   `i` landing in plane `i / (C/3)`, row `i % (C/3)` (scheme A).
//! * other `C ≥ 2`: every time column is linearly resampled from `C` to
//!   `3·⌈C/3⌉` channels first, then split as above (scheme B).
//! * `C == 1`: the single row is replicated into all three planes.
//!
//! The planes are optionally refolded into a near-square shape, bilinearly
//! resized to the model's height × width, and quantized jointly to 8 bits.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::SignalMatrix;
use crate::numeric::{bilinear_resize_2d, linear_resample_1d, NumericError, Plane};

#[derive(Debug, Error)]
pub enum ImageError {
    #[error(transparent)]
    Numeric(#[from] NumericError),
    #[error("instance {id} has {channels} channel(s); use {suggestion}")]
    WrongStack {
        id: String,
        channels: usize,
        suggestion: &'static str,
    },
    #[error("invalid image configuration: {0}")]
    InvalidConfig(String),
    #[error("png: {0}")]
    Png(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scheme {
    /// Channel count divisible by three; pure reindexing.
    #[serde(rename = "A")]
    Divisible,
    /// Channels interpolated up to a multiple of three first.
    #[serde(rename = "B")]
    Interpolated,
    #[serde(rename = "single_channel")]
    SingleChannel,
}

impl Scheme {
    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Divisible => "A",
            Scheme::Interpolated => "B",
            Scheme::SingleChannel => "single_channel",
        }
    }

    pub fn for_channels(channels: usize) -> Option<Scheme> {
        match channels {
            0 => None,
            1 => Some(Scheme::SingleChannel),
            c if c % 3 == 0 => Some(Scheme::Divisible),
            _ => Some(Scheme::Interpolated),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReshapePolicy {
    Keep,
    NearSquare,
    /// `NearSquare` for single-row planes, `Keep` otherwise.
    Auto,
}

impl std::str::FromStr for ReshapePolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "keep" => Ok(Self::Keep),
            "near_square" | "near-square" => Ok(Self::NearSquare),
            "auto" => Ok(Self::Auto),
            other => Err(format!("unknown reshape policy {other:?}")),
        }
    }
}

impl ReshapePolicy {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Keep => "keep",
            Self::NearSquare => "near_square",
            Self::Auto => "auto",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// Min-max over the three planes of each instance.
    PerInstance,
    /// Fixed bounds shared by all instances; values outside are clamped.
    Global { min: f64, max: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImageAdapterConfig {
    pub height: usize,
    pub width: usize,
    pub reshape: ReshapePolicy,
    pub normalization: Normalization,
}

impl Default for ImageAdapterConfig {
    fn default() -> Self {
        Self {
            height: 224,
            width: 224,
            reshape: ReshapePolicy::Auto,
            normalization: Normalization::PerInstance,
        }
    }
}

impl ImageAdapterConfig {
    pub fn validate(&self) -> Result<(), ImageError> {
        if self.height < 2 || self.width < 2 {
            return Err(ImageError::InvalidConfig(format!(
                "target {}x{} must be at least 2x2",
                self.height, self.width
            )));
        }
        if let Normalization::Global { min, max } = self.normalization {
            if !(min.is_finite() && max.is_finite() && min < max) {
                return Err(ImageError::InvalidConfig(format!(
                    "global bounds need min < max, got [{min}, {max}]"
                )));
            }
        }
        Ok(())
    }

    /// Canonical `key=value` lines; the basis of [`Self::hash`].
    pub fn canonical(&self) -> String {
        let norm = match self.normalization {
            Normalization::PerInstance => "per_instance".to_string(),
            Normalization::Global { min, max } => format!("global({min:?},{max:?})"),
        };
        format!(
            "image.height={}\nimage.width={}\nimage.reshape={}\nimage.norm={}\n",
            self.height,
            self.width,
            self.reshape.as_str(),
            norm
        )
    }

    pub fn hash(&self) -> String {
        crate::short_hash(self.canonical().as_bytes())
    }
}

/// Three equally shaped real planes.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbStack {
    pub planes: [Plane; 3],
    pub scheme: Scheme,
}

impl RgbStack {
    pub fn shape(&self) -> (usize, usize) {
        self.planes[0].shape()
    }

    fn map_planes(
        &self,
        f: impl Fn(&Plane) -> Result<Plane, NumericError>,
    ) -> Result<RgbStack, NumericError> {
        Ok(RgbStack {
            planes: [f(&self.planes[0])?, f(&self.planes[1])?, f(&self.planes[2])?],
            scheme: self.scheme,
        })
    }
}

fn decompose(channels: usize, length: usize, samples: &[f64], scheme: Scheme) -> Result<RgbStack, NumericError> {
    debug_assert_eq!(channels % 3, 0);
    let rows = channels / 3;
    let block = rows * length;
    let plane = |k: usize| Plane::new(rows, length, samples[k * block..(k + 1) * block].to_vec());
    Ok(RgbStack {
        planes: [plane(0)?, plane(1)?, plane(2)?],
        scheme,
    })
}

/// Split a multichannel instance (`C ≥ 2`) into three planes.
pub fn build_rgb_stack(m: &SignalMatrix) -> Result<RgbStack, ImageError> {
    let (c, t) = (m.channels(), m.length());
    match Scheme::for_channels(c) {
        Some(Scheme::Divisible) => Ok(decompose(c, t, m.samples(), Scheme::Divisible)?),
        Some(Scheme::Interpolated) => {
            let target = 3 * c.div_ceil(3);
            let mut resampled = vec![0.0; target * t];
            let mut column = vec![0.0; c];
            for time in 0..t {
                for (ch, v) in column.iter_mut().enumerate() {
                    *v = m.get(ch, time);
                }
                for (ch, v) in linear_resample_1d(&column, target)?.into_iter().enumerate() {
                    resampled[ch * t + time] = v;
                }
            }
            Ok(decompose(target, t, &resampled, Scheme::Interpolated)?)
        }
        _ => Err(ImageError::WrongStack {
            id: m.id().to_string(),
            channels: c,
            suggestion: "single_channel_stack",
        }),
    }
}

/// Replicate a single-channel instance into three identical 1×T planes.
pub fn single_channel_stack(m: &SignalMatrix) -> Result<RgbStack, ImageError> {
    if m.channels() != 1 {
        return Err(ImageError::WrongStack {
            id: m.id().to_string(),
            channels: m.channels(),
            suggestion: "build_rgb_stack",
        });
    }
    let p = Plane::new(1, m.length(), m.samples().to_vec())?;
    Ok(RgbStack {
        planes: [p.clone(), p.clone(), p],
        scheme: Scheme::SingleChannel,
    })
}

/// Dispatch to [`single_channel_stack`] or [`build_rgb_stack`] by channel count.
pub fn channel_stack(m: &SignalMatrix) -> Result<RgbStack, ImageError> {
    if m.channels() == 1 {
        single_channel_stack(m)
    } else {
        build_rgb_stack(m)
    }
}

/// `a × b` with `a` the largest divisor of `p` not exceeding `√p`.
pub fn near_square_shape(p: usize) -> (usize, usize) {
    let mut a = (p as f64).sqrt() as usize;
    while a * a > p {
        a -= 1;
    }
    while (a + 1) * (a + 1) <= p {
        a += 1;
    }
    while a > 1 && !p.is_multiple_of(a) {
        a -= 1;
    }
    let a = a.max(1);
    (a, p / a)
}

pub fn reshape_planes(stack: &RgbStack, policy: ReshapePolicy) -> RgbStack {
    let (rows, cols) = stack.shape();
    let fold = match policy {
        ReshapePolicy::Keep => false,
        ReshapePolicy::NearSquare => true,
        ReshapePolicy::Auto => rows == 1,
    };
    if !fold {
        return stack.clone();
    }
    let (a, b) = near_square_shape(rows * cols);
    stack
        .map_planes(|p| Plane::new(a, b, p.values().to_vec()))
        .expect("refold preserves element count")
}

pub fn resize_stack(stack: &RgbStack, height: usize, width: usize) -> Result<RgbStack, ImageError> {
    Ok(stack.map_planes(|p| bilinear_resize_2d(p, height, width))?)
}

/// Bounds used to map values onto `0..=255`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormRecord {
    pub v_min: f64,
    pub v_max: f64,
}

impl NormRecord {
    /// Approximate source value of a pixel level.
    pub fn dequantize(&self, pixel: u8) -> f64 {
        self.v_min + (self.v_max - self.v_min) * pixel as f64 / 255.0
    }
}

#[inline]
fn quantize_value(v: f64, lo: f64, hi: f64) -> u8 {
    // f64::round is half-away-from-zero.
    (255.0 * (v - lo) / (hi - lo)).round().clamp(0.0, 255.0) as u8
}

/// Quantize the three planes jointly. Returns plane-major pixels.
pub fn quantize(stack: &RgbStack, normalization: Normalization) -> Result<(Vec<u8>, NormRecord), ImageError> {
    let (lo, hi) = match normalization {
        Normalization::PerInstance => stack.planes.iter().fold(
            (f64::INFINITY, f64::NEG_INFINITY),
            |(lo, hi), p| {
                let (a, b) = p.range();
                (lo.min(a), hi.max(b))
            },
        ),
        Normalization::Global { min, max } => {
            if !(min.is_finite() && max.is_finite() && min < max) {
                return Err(ImageError::InvalidConfig(format!(
                    "global bounds need min < max, got [{min}, {max}]"
                )));
            }
            (min, max)
        }
    };
    let values = stack.planes.iter().flat_map(|p| p.values().iter().copied());
    let pixels = if lo == hi {
        values.map(|_| 127).collect()
    } else {
        values.map(|v| quantize_value(v, lo, hi)).collect()
    };
    Ok((pixels, NormRecord { v_min: lo, v_max: hi }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageProvenance {
    pub instance_id: String,
    pub scheme: Scheme,
    pub config_hash: String,
    /// Plane shape right after channel stacking.
    pub stack_shape: (usize, usize),
    /// Plane shape after reshaping, just before resizing.
    pub pre_resize_shape: (usize, usize),
}

/// A 3 × height × width 8-bit image, plane-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelImage {
    pub height: usize,
    pub width: usize,
    pub pixels: Vec<u8>,
    pub norm: NormRecord,
    pub provenance: ImageProvenance,
}

impl PixelImage {
    pub fn plane(&self, k: usize) -> &[u8] {
        let n = self.height * self.width;
        &self.pixels[k * n..(k + 1) * n]
    }

    pub fn get(&self, k: usize, row: usize, col: usize) -> u8 {
        self.pixels[k * self.height * self.width + row * self.width + col]
    }

    /// Pixels interleaved as RGB triples, row-major.
    pub fn interleaved(&self) -> Vec<u8> {
        let n = self.height * self.width;
        let mut out = Vec::with_capacity(3 * n);
        for i in 0..n {
            out.extend_from_slice(&[self.pixels[i], self.pixels[n + i], self.pixels[2 * n + i]]);
        }
        out
    }

    /// Encode as an 8-bit RGB PNG without alpha.
    pub fn to_png(&self) -> Result<Vec<u8>, ImageError> {
        let mut out = Vec::new();
        encode_png(&mut out, self.width, self.height, &self.interleaved())?;
        Ok(out)
    }
}

pub fn encode_png(out: &mut impl Write, width: usize, height: usize, rgb: &[u8]) -> Result<(), ImageError> {
    let png_err = |e: png::EncodingError| ImageError::Png(e.to_string());
    let mut enc = png::Encoder::new(out, width as u32, height as u32);
    enc.set_color(png::ColorType::Rgb);
    enc.set_depth(png::BitDepth::Eight);
    let mut writer = enc.write_header().map_err(png_err)?;
    writer.write_image_data(rgb).map_err(png_err)?;
    writer.finish().map_err(png_err)
}

/// Decode an 8-bit RGB PNG into `(width, height, interleaved pixels)`.
pub fn decode_png(bytes: &[u8]) -> Result<(usize, usize, Vec<u8>), ImageError> {
    let decoder = png::Decoder::new(std::io::Cursor::new(bytes));
    let mut reader = decoder.read_info().map_err(|e| ImageError::Png(e.to_string()))?;
    let info = reader.info();
    if info.color_type != png::ColorType::Rgb || info.bit_depth != png::BitDepth::Eight {
        return Err(ImageError::Png(format!(
            "expected 8-bit RGB, found {:?} at {:?}",
            info.color_type, info.bit_depth
        )));
    }
    let (w, h) = (info.width as usize, info.height as usize);
    let mut buf = vec![0; 3 * w * h];
    reader
        .next_frame(&mut buf)
        .map_err(|e| ImageError::Png(e.to_string()))?;
    Ok((w, h, buf))
}

/// Channel stacking → reshape → bilinear resize → quantization.
pub fn convert_to_image(m: &SignalMatrix, config: &ImageAdapterConfig) -> Result<PixelImage, ImageError> {
    config.validate()?;
    let stacked = channel_stack(m)?;
    let stack_shape = stacked.shape();
    let reshaped = reshape_planes(&stacked, config.reshape);
    let pre_resize_shape = reshaped.shape();
    let resized = resize_stack(&reshaped, config.height, config.width)?;
    let (pixels, norm) = quantize(&resized, config.normalization)?;
    Ok(PixelImage {
        height: config.height,
        width: config.width,
        pixels,
        norm,
        provenance: ImageProvenance {
            instance_id: m.id().to_string(),
            scheme: stacked.scheme,
            config_hash: config.hash(),
            stack_shape,
            pre_resize_shape,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn matrix(c: usize, t: usize) -> SignalMatrix {
        let samples = (0..c * t).map(|i| ((i * 37) % 101) as f64 - 50.0).collect();
        SignalMatrix::new("m", c, t, samples, 0).unwrap()
    }

    #[test]
    fn har_geometry_uses_scheme_a() {
        let s = build_rgb_stack(&matrix(9, 128)).unwrap();
        assert_eq!(s.scheme, Scheme::Divisible);
        assert_eq!(s.shape(), (3, 128));
    }

    #[test]
    fn three_channels_map_one_per_plane() {
        let m = matrix(3, 10);
        let s = build_rgb_stack(&m).unwrap();
        for k in 0..3 {
            assert_eq!(s.planes[k].values(), m.channel(k));
        }
    }

    #[test]
    fn seven_channels_interpolate_to_nine() {
        let m = matrix(7, 16);
        let s = build_rgb_stack(&m).unwrap();
        assert_eq!(s.scheme, Scheme::Interpolated);
        assert_eq!(s.shape(), (3, 16));
        for t in 0..16 {
            let column: Vec<f64> = (0..7).map(|c| m.get(c, t)).collect();
            for j in 0..9 {
                // direct evaluation at source coordinate j·6/8
                let x = j as f64 * 6.0 / 8.0;
                let i = (x.floor() as usize).min(5);
                let f = x - i as f64;
                let expected = column[i] * (1.0 - f) + column[i + 1] * f;
                let got = s.planes[j / 3].get(j % 3, t);
                assert!((got - expected).abs() <= 1e-12 * expected.abs().max(1.0));
            }
        }
    }

    #[test]
    fn single_channel_goes_elsewhere() {
        assert!(matches!(
            build_rgb_stack(&matrix(1, 5)),
            Err(ImageError::WrongStack { suggestion: "single_channel_stack", .. })
        ));
        assert!(single_channel_stack(&matrix(2, 5)).is_err());
    }

    #[test]
    fn replication_of_single_channel() {
        let s = single_channel_stack(&matrix(1, 3000)).unwrap();
        assert_eq!(s.shape(), (1, 3000));
        assert_eq!(s.planes[0], s.planes[1]);
        assert_eq!(s.planes[1], s.planes[2]);
        let one = SignalMatrix::new("x", 1, 1, vec![5.0], 0).unwrap();
        let s = single_channel_stack(&one).unwrap();
        assert!(s.planes.iter().all(|p| p.values() == [5.0]));
    }

    #[test]
    fn near_square_factoring() {
        assert_eq!(near_square_shape(3000), (50, 60));
        assert_eq!(near_square_shape(7), (1, 7));
        assert_eq!(near_square_shape(178), (2, 89));
        assert_eq!(near_square_shape(49), (7, 7));
        assert_eq!(near_square_shape(1), (1, 1));
    }

    #[test]
    fn reshape_refills_row_major() {
        let s = single_channel_stack(&matrix(1, 3000)).unwrap();
        let r = reshape_planes(&s, ReshapePolicy::NearSquare);
        assert_eq!(r.shape(), (50, 60));
        for (row, col) in [(0, 0), (1, 0), (7, 13), (49, 59)] {
            assert_eq!(r.planes[0].get(row, col), s.planes[0].get(0, 60 * row + col));
        }
        let keep = single_channel_stack(&matrix(1, 7)).unwrap();
        assert_eq!(reshape_planes(&keep, ReshapePolicy::NearSquare).shape(), (1, 7));
        let multi = build_rgb_stack(&matrix(9, 128)).unwrap();
        assert_eq!(reshape_planes(&multi, ReshapePolicy::Keep), multi);
        assert_eq!(reshape_planes(&multi, ReshapePolicy::Auto), multi);
    }

    fn stack_of(values: Vec<f64>) -> RgbStack {
        let n = values.len();
        let p = Plane::new(1, n, values).unwrap();
        RgbStack {
            planes: [p.clone(), p.clone(), p],
            scheme: Scheme::SingleChannel,
        }
    }

    #[test]
    fn quantization_cases() {
        let (px, norm) = quantize(&stack_of(vec![0.0, 1.0]), Normalization::PerInstance).unwrap();
        assert_eq!(&px[..2], &[0, 255]);
        assert_eq!(norm, NormRecord { v_min: 0.0, v_max: 1.0 });
        let (px, _) = quantize(&stack_of(vec![4.2; 4]), Normalization::PerInstance).unwrap();
        assert!(px.iter().all(|&p| p == 127));
        let (px, _) = quantize(&stack_of(vec![0.0, 0.5, 1.0]), Normalization::PerInstance).unwrap();
        assert_eq!(&px[..3], &[0, 128, 255]);
        let (px, _) = quantize(
            &stack_of(vec![-5.0, 0.0, 0.5, 9.0]),
            Normalization::Global { min: 0.0, max: 1.0 },
        )
        .unwrap();
        assert_eq!(&px[..4], &[0, 0, 128, 255]);
        assert!(quantize(&stack_of(vec![1.0]), Normalization::Global { min: 1.0, max: 1.0 }).is_err());
    }

    #[test]
    fn config_validation() {
        let bad = ImageAdapterConfig { height: 1, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = ImageAdapterConfig {
            normalization: Normalization::Global { min: 2.0, max: 1.0 },
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let a = ImageAdapterConfig::default();
        let b = ImageAdapterConfig { width: 225, ..a };
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn single_channel_image_planes_identical() {
        let img = convert_to_image(&matrix(1, 3000), &ImageAdapterConfig::default()).unwrap();
        assert_eq!(img.provenance.pre_resize_shape, (50, 60));
        assert_eq!(img.plane(0), img.plane(1));
        assert_eq!(img.plane(1), img.plane(2));
    }

    #[test]
    fn png_round_trip() {
        let img = convert_to_image(
            &matrix(9, 128),
            &ImageAdapterConfig { height: 20, width: 30, ..Default::default() },
        )
        .unwrap();
        let png = img.to_png().unwrap();
        let (w, h, rgb) = decode_png(&png).unwrap();
        assert_eq!((w, h), (30, 20));
        assert_eq!(rgb, img.interleaved());
        assert_eq!(png, img.to_png().unwrap());
    }

    #[test]
    fn scheme_selection_exhaustive() {
        for c in 1..=32usize {
            let m = matrix(c, 4);
            let s = channel_stack(&m).unwrap();
            let expected = if c == 1 {
                Scheme::SingleChannel
            } else if c % 3 == 0 {
                Scheme::Divisible
            } else {
                Scheme::Interpolated
            };
            assert_eq!(s.scheme, expected, "C = {c}");
        }
    }

    proptest! {
        #[test]
        fn quantization_monotone_and_bounded(
            mut v in prop::collection::vec(-1e6f64..1e6, 2..50),
            lo in -10.0f64..0.0,
            span in 0.1f64..10.0,
        ) {
            v.sort_by(f64::total_cmp);
            for norm in [Normalization::PerInstance, Normalization::Global { min: lo, max: lo + span }] {
                let (px, _) = quantize(&stack_of(v.clone()), norm).unwrap();
                let first = &px[..v.len()];
                prop_assert!(first.windows(2).all(|w| w[0] <= w[1]));
            }
        }
    }
}
