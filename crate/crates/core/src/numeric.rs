//! Resampling kernels shared by the image and text adapters.
//!
//! Every kernel uses the endpoint-aligned ("align corners") coordinate map:
//! output index `j` of `m` samples reads the source at `j·(n−1)/(m−1)`.
//! A single-sample target reads the source midpoint `(n−1)/2`. There is no
//! anti-alias prefilter, so aggressive downsampling aliases high-frequency
//! content exactly like a plain bilinear resize would.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericError {
    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },
    #[error("linear resampling needs at least 2 source samples, got {len}")]
    TooShort { len: usize },
    #[error("target size must be at least 1")]
    ZeroTarget,
    #[error("plane of {rows}x{cols} needs {expected} values, got {actual}")]
    ShapeMismatch {
        rows: usize,
        cols: usize,
        expected: usize,
        actual: usize,
    },
}

/// A row-major matrix of finite reals; the "last two dimensions" of an image stack.
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl Plane {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self, NumericError> {
        if rows == 0 || cols == 0 {
            return Err(NumericError::ZeroTarget);
        }
        if values.len() != rows * cols {
            return Err(NumericError::ShapeMismatch {
                rows,
                cols,
                expected: rows * cols,
                actual: values.len(),
            });
        }
        check_finite(&values)?;
        Ok(Self { rows, cols, values })
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Result<Self, NumericError> {
        Self::new(rows, cols, vec![value; rows * cols])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.values[row * self.cols..(row + 1) * self.cols]
    }

    /// Minimum and maximum over all values.
    pub fn range(&self) -> (f64, f64) {
        self.values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }
}

pub(crate) fn check_finite(values: &[f64]) -> Result<(), NumericError> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(NumericError::NonFinite { index }),
        None => Ok(()),
    }
}

/// Interpolation tap for one output sample: blend `lo` and `hi` with weight `t` on `hi`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Tap {
    lo: usize,
    hi: usize,
    t: f64,
}

/// Taps mapping `target` outputs onto `source` inputs, endpoint aligned.
/// A single-sample source replicates.
fn axis_taps(source: usize, target: usize) -> Vec<Tap> {
    debug_assert!(source >= 1 && target >= 1);
    if source == 1 {
        return vec![Tap { lo: 0, hi: 0, t: 0.0 }; target];
    }
    let last = source - 1;
    (0..target)
        .map(|j| {
            let x = if target == 1 {
                last as f64 / 2.0
            } else {
                (j * last) as f64 / (target - 1) as f64
            };
            let lo = (x.floor() as usize).min(last - 1);
            Tap {
                lo,
                hi: lo + 1,
                t: x - lo as f64,
            }
        })
        .collect()
}

/// Linear blend that is exact at `t ∈ {0, 1}`, monotone in `t`, and never
/// leaves `[min(a, b), max(a, b)]`.
#[inline]
fn lerp(a: f64, b: f64, t: f64) -> f64 {
    if t == 0.0 {
        return a;
    }
    if t == 1.0 {
        return b;
    }
    let d = b - a;
    let v = if d.is_finite() {
        a + d * t
    } else {
        a * (1.0 - t) + b * t
    };
    v.clamp(a.min(b), a.max(b))
}

#[inline]
fn sample(values: &[f64], tap: Tap) -> f64 {
    lerp(values[tap.lo], values[tap.hi], tap.t)
}

/// Resample a sequence of `n ≥ 2` samples to `target` samples by piecewise-linear
/// interpolation. Endpoints survive exactly when `target ≥ 2`.
pub fn linear_resample_1d(values: &[f64], target: usize) -> Result<Vec<f64>, NumericError> {
    if values.len() < 2 {
        return Err(NumericError::TooShort { len: values.len() });
    }
    if target == 0 {
        return Err(NumericError::ZeroTarget);
    }
    check_finite(values)?;
    Ok(axis_taps(values.len(), target)
        .into_iter()
        .map(|tap| sample(values, tap))
        .collect())
}

/// Bilinear resize of a plane. Rows are interpolated first, then columns, so
/// the result is bit-identical to resampling every row and then every column.
pub fn bilinear_resize_2d(
    plane: &Plane,
    target_rows: usize,
    target_cols: usize,
) -> Result<Plane, NumericError> {
    if target_rows == 0 || target_cols == 0 {
        return Err(NumericError::ZeroTarget);
    }
    check_finite(&plane.values)?;
    if plane.shape() == (target_rows, target_cols) {
        return Ok(plane.clone());
    }

    let col_taps = axis_taps(plane.cols, target_cols);
    let row_taps = axis_taps(plane.rows, target_rows);

    // Horizontal pass over every source row.
    let widened: Vec<f64> = (0..plane.rows)
        .flat_map(|r| {
            let row = plane.row(r);
            col_taps.iter().map(move |&tap| sample(row, tap))
        })
        .collect();

    let mut out = Vec::with_capacity(target_rows * target_cols);
    for tap in &row_taps {
        let upper = &widened[tap.lo * target_cols..(tap.lo + 1) * target_cols];
        let lower = &widened[tap.hi * target_cols..(tap.hi + 1) * target_cols];
        out.extend(upper.iter().zip(lower).map(|(&a, &b)| lerp(a, b, tap.t)));
    }
    Ok(Plane {
        rows: target_rows,
        cols: target_cols,
        values: out,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Direct piecewise-linear evaluation at an arbitrary source coordinate.
    fn eval_at(values: &[f64], x: f64) -> f64 {
        for i in 0..values.len() - 1 {
            let (x0, x1) = (i as f64, (i + 1) as f64);
            if x >= x0 && x <= x1 {
                let t = x - x0;
                return values[i] * (1.0 - t) + values[i + 1] * t;
            }
        }
        unreachable!("coordinate {x} outside source");
    }

    #[test]
    fn identity_when_sizes_match() {
        assert_eq!(linear_resample_1d(&[1.0, 3.0], 2).unwrap(), vec![1.0, 3.0]);
    }

    #[test]
    fn midpoint_of_segment() {
        assert_eq!(
            linear_resample_1d(&[0.0, 2.0], 3).unwrap(),
            vec![0.0, 1.0, 2.0]
        );
    }

    #[test]
    fn upsample_matches_direct_evaluation() {
        let src = [0.0, 1.0, 4.0];
        let expected: Vec<f64> = [0.0, 0.5, 1.0, 1.5, 2.0]
            .iter()
            .map(|&x| eval_at(&src, x))
            .collect();
        assert_eq!(expected, vec![0.0, 0.5, 1.0, 2.5, 4.0]);
        assert_eq!(linear_resample_1d(&src, 5).unwrap(), expected);
    }

    #[test]
    fn single_target_reads_midpoint() {
        assert_eq!(linear_resample_1d(&[0.0, 10.0], 1).unwrap(), vec![5.0]);
        assert_eq!(linear_resample_1d(&[0.0, 10.0, 30.0], 1).unwrap(), vec![10.0]);
    }

    #[test]
    fn rejects_short_and_non_finite() {
        assert_eq!(
            linear_resample_1d(&[1.0], 4),
            Err(NumericError::TooShort { len: 1 })
        );
        assert_eq!(
            linear_resample_1d(&[1.0, f64::NAN, 2.0], 4),
            Err(NumericError::NonFinite { index: 1 })
        );
        assert_eq!(linear_resample_1d(&[1.0, 2.0], 0), Err(NumericError::ZeroTarget));
    }

    #[test]
    fn plane_validates_shape_and_values() {
        assert!(matches!(
            Plane::new(2, 2, vec![0.0; 3]),
            Err(NumericError::ShapeMismatch { .. })
        ));
        assert_eq!(
            Plane::new(1, 2, vec![0.0, f64::INFINITY]),
            Err(NumericError::NonFinite { index: 1 })
        );
    }

    #[test]
    fn resize_identity_is_exact() {
        let values: Vec<f64> = (0..3 * 128).map(|i| (i as f64 * 0.37).sin()).collect();
        let p = Plane::new(3, 128, values).unwrap();
        assert_eq!(bilinear_resize_2d(&p, 3, 128).unwrap(), p);
    }

    #[test]
    fn resize_two_by_two_to_three_by_three() {
        let p = Plane::new(2, 2, vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        let out = bilinear_resize_2d(&p, 3, 3).unwrap();
        assert_eq!(
            out.values(),
            &[0.0, 0.5, 1.0, 1.0, 1.5, 2.0, 2.0, 2.5, 3.0]
        );
    }

    #[test]
    fn degenerate_axis_replicates() {
        let p = Plane::new(1, 4, vec![1.0, -2.0, 3.5, 0.25]).unwrap();
        let out = bilinear_resize_2d(&p, 2, 4).unwrap();
        assert_eq!(out.row(0), p.row(0));
        assert_eq!(out.row(1), p.row(0));
    }

    #[test]
    fn downsampling_keeps_corners() {
        let values: Vec<f64> = (0..50 * 60).map(|i| ((i * 7919) % 101) as f64).collect();
        let p = Plane::new(50, 60, values).unwrap();
        let out = bilinear_resize_2d(&p, 7, 5).unwrap();
        assert_eq!(out.get(0, 0), p.get(0, 0));
        assert_eq!(out.get(0, 4), p.get(0, 59));
        assert_eq!(out.get(6, 0), p.get(49, 0));
        assert_eq!(out.get(6, 4), p.get(49, 59));
    }

    fn plane_strategy() -> impl Strategy<Value = Plane> {
        (1usize..12, 1usize..12).prop_flat_map(|(r, c)| {
            prop::collection::vec(-1e3f64..1e3, r * c)
                .prop_map(move |v| Plane::new(r, c, v).unwrap())
        })
    }

    fn transpose(p: &Plane) -> Plane {
        let mut v = Vec::with_capacity(p.values.len());
        for c in 0..p.cols {
            for r in 0..p.rows {
                v.push(p.get(r, c));
            }
        }
        Plane::new(p.cols, p.rows, v).unwrap()
    }

    proptest! {
        #[test]
        fn resize_stays_in_range(p in plane_strategy(), r in 1usize..20, c in 1usize..20) {
            let (lo, hi) = p.range();
            let out = bilinear_resize_2d(&p, r, c).unwrap();
            prop_assert!(out.values().iter().all(|&v| v >= lo && v <= hi));
        }

        #[test]
        fn resize_is_separable_in_either_order(p in plane_strategy(), r in 1usize..20, c in 1usize..20) {
            let out = bilinear_resize_2d(&p, r, c).unwrap();
            // rows-first: widen rows, then resample columns via transposition.
            let widened = bilinear_resize_2d(&p, p.rows(), c).unwrap();
            let rows_first = transpose(&bilinear_resize_2d(&transpose(&widened), c, r).unwrap());
            prop_assert_eq!(out.values(), rows_first.values());
            // columns-first
            let tall = transpose(&bilinear_resize_2d(&transpose(&p), p.cols(), r).unwrap());
            let cols_first = bilinear_resize_2d(&tall, r, c).unwrap();
            for (a, b) in out.values().iter().zip(cols_first.values()) {
                prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0));
            }
        }

        #[test]
        fn monotone_input_gives_monotone_output(
            steps in prop::collection::vec(0.0f64..10.0, 1..40),
            start in -100.0f64..100.0,
            m in 1usize..200,
        ) {
            let mut values = vec![start];
            for s in steps {
                let last = *values.last().unwrap();
                values.push(last + s);
            }
            let out = linear_resample_1d(&values, m).unwrap();
            prop_assert!(out.windows(2).all(|w| w[0] <= w[1]));
            if m >= 2 {
                prop_assert_eq!(out[0], values[0]);
                prop_assert_eq!(out[m - 1], *values.last().unwrap());
            }
        }
    }
}
