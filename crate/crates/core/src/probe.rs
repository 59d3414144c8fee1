//! Linear + softmax classification head trained by maximizing the summed log
//! likelihood of the true class over a batch, `Σ_k log softmax(W·x_k + b)[y_k]`.
//!
//! The head stands in for a transformer's classification head. Its inputs are
//! the flattened converted representations themselves (pixels scaled to
//! `[0, 1]`, or rendered integers divided by `alpha`), so it measures how much
//! class structure the adapters keep, not what a pretrained model would reach.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ProbeError {
    #[error("feature width {found} does not match head width {expected}")]
    WidthMismatch { expected: usize, found: usize },
    #[error("label {label} outside {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("{labels} labels for {rows} feature rows")]
    LabelCount { rows: usize, labels: usize },
    #[error("empty dataset")]
    Empty,
    #[error("objective diverged at epoch {epoch} (value {value})")]
    Diverged { epoch: usize, value: f64 },
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("head file: {0}")]
    Format(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeHead {
    /// classes × features
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl ProbeHead {
    pub fn zeros(classes: usize, features: usize) -> Self {
        Self {
            weights: Array2::zeros((classes, features)),
            bias: Array1::zeros(classes),
        }
    }

    pub fn classes(&self) -> usize {
        self.bias.len()
    }

    pub fn features(&self) -> usize {
        self.weights.ncols()
    }

    pub fn logits(&self, features: ArrayView2<'_, f64>) -> Result<Array2<f64>, ProbeError> {
        if features.ncols() != self.features() {
            return Err(ProbeError::WidthMismatch {
                expected: self.features(),
                found: features.ncols(),
            });
        }
        Ok(features.dot(&self.weights.t()) + &self.bias)
    }

    /// Predicted class per row; ties go to the lowest class index.
    pub fn predict(&self, features: ArrayView2<'_, f64>) -> Result<Vec<usize>, ProbeError> {
        Ok(self.logits(features)?.rows().into_iter().map(argmax).collect())
    }

    const MAGIC: &'static [u8; 8] = b"TSPROBE\0";
    const VERSION: u32 = 1;

    /// Little-endian layout: magic, version (u32), classes (u64), features
    /// (u64), weights row-major (f64), bias (f64).
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(28 + 8 * (self.weights.len() + self.bias.len()));
        out.extend_from_slice(Self::MAGIC);
        out.extend_from_slice(&Self::VERSION.to_le_bytes());
        out.extend_from_slice(&(self.classes() as u64).to_le_bytes());
        out.extend_from_slice(&(self.features() as u64).to_le_bytes());
        for v in self.weights.iter().chain(self.bias.iter()) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ProbeError> {
        if bytes.len() < 28 || &bytes[..8] != Self::MAGIC {
            return Err(ProbeError::Format("not a probe head".into()));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != Self::VERSION {
            return Err(ProbeError::Format(format!("unsupported version {version}")));
        }
        let classes = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
        let features = u64::from_le_bytes(bytes[20..28].try_into().unwrap()) as usize;
        let count = classes
            .checked_mul(features)
            .and_then(|n| n.checked_add(classes))
            .ok_or_else(|| ProbeError::Format("dimensions overflow".into()))?;
        let body = &bytes[28..];
        if body.len() != 8 * count {
            return Err(ProbeError::Format(format!(
                "expected {} parameter bytes, found {}",
                8 * count,
                body.len()
            )));
        }
        let values: Vec<f64> = body
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(ProbeError::Format("non-finite parameter".into()));
        }
        let weights = Array2::from_shape_vec((classes, features), values[..classes * features].to_vec())
            .map_err(|e| ProbeError::Format(e.to_string()))?;
        Ok(Self {
            weights,
            bias: Array1::from(values[classes * features..].to_vec()),
        })
    }
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a.max(1)
}

fn argmax(row: ArrayView1<'_, f64>) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// K rows of features with their class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBatch {
    pub features: Array2<f64>,
    pub labels: Vec<usize>,
}

impl FeatureBatch {
    pub fn new(features: Array2<f64>, labels: Vec<usize>) -> Result<Self, ProbeError> {
        if features.nrows() != labels.len() {
            return Err(ProbeError::LabelCount {
                rows: features.nrows(),
                labels: labels.len(),
            });
        }
        Ok(Self { features, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn width(&self) -> usize {
        self.features.ncols()
    }

    fn select(&self, rows: &[usize]) -> FeatureBatch {
        FeatureBatch {
            features: self.features.select(Axis(0), rows),
            labels: rows.iter().map(|&r| self.labels[r]).collect(),
        }
    }

    fn check(&self, head: &ProbeHead) -> Result<(), ProbeError> {
        if self.width() != head.features() {
            return Err(ProbeError::WidthMismatch {
                expected: head.features(),
                found: self.width(),
            });
        }
        if let Some(&label) = self.labels.iter().find(|&&l| l >= head.classes()) {
            return Err(ProbeError::LabelOutOfRange {
                label,
                classes: head.classes(),
            });
        }
        Ok(())
    }
}

fn softmax_rows(mut logits: Array2<f64>) -> Array2<f64> {
    for mut row in logits.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row /= sum;
    }
    logits
}

/// Row-wise softmax of the head's logits, computed after subtracting each row's maximum.
pub fn forward(head: &ProbeHead, features: ArrayView2<'_, f64>) -> Result<Array2<f64>, ProbeError> {
    Ok(softmax_rows(head.logits(features)?))
}

/// `Σ_k log p(y_k | x_k) − l2·‖W‖²/2`.
pub fn objective(head: &ProbeHead, batch: &FeatureBatch, l2: f64) -> Result<f64, ProbeError> {
    batch.check(head)?;
    let logits = head.logits(batch.features.view())?;
    let mut total = 0.0;
    for (row, &y) in logits.rows().into_iter().zip(&batch.labels) {
        let top = argmax(row);
        let rest: f64 = row
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != top)
            .map(|(_, &v)| (v - row[top]).exp())
            .sum();
        total += row[y] - row[top] - rest.ln_1p();
    }
    Ok(total - 0.5 * l2 * head.weights.iter().map(|w| w * w).sum::<f64>())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeGradient {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl ProbeGradient {
    pub fn norm(&self) -> f64 {
        self.weights
            .iter()
            .chain(self.bias.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }
}

/// Gradient of the negated objective: `(P − Y)ᵀ·X + l2·W` and `Σ_k (p_k − y_k)`.
pub fn gradient(head: &ProbeHead, batch: &FeatureBatch, l2: f64) -> Result<ProbeGradient, ProbeError> {
    batch.check(head)?;
    let mut residual = forward(head, batch.features.view())?;
    for (mut row, &y) in residual.rows_mut().into_iter().zip(&batch.labels) {
        row[y] -= 1.0;
    }
    let weights = residual.t().dot(&batch.features) + &(&head.weights * l2);
    let bias = residual.sum_axis(Axis(0));
    Ok(ProbeGradient { weights, bias })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub l2: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-2,
            epochs: 20,
            batch_size: 16,
            seed: 0,
            l2: 0.0,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<(), ProbeError> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(ProbeError::InvalidConfig(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(ProbeError::InvalidConfig("batch size must be positive".into()));
        }
        if !(self.l2.is_finite() && self.l2 >= 0.0) {
            return Err(ProbeError::InvalidConfig(format!("l2 must be non-negative, got {}", self.l2)));
        }
        Ok(())
    }
}

/// A step size for [`train_centered`] on this data: the inverse of
/// `batch_size` times the mean squared norm of the centered features (plus
/// one for the bias). The per-example Hessian of the negated objective is
/// bounded by `‖x‖² + 1`, so this stays inside the stable range.
pub fn suggested_learning_rate(data: &FeatureBatch, batch_size: usize) -> f64 {
    let n = data.len().max(1) as f64;
    let spread = match data.features.mean_axis(Axis(0)) {
        Some(mean) => (&data.features - &mean).iter().map(|v| v * v).sum::<f64>() / n,
        None => 0.0,
    };
    1.0 / (batch_size.max(1) as f64 * (spread + 1.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub head: ProbeHead,
    /// Full-dataset objective before training and after every epoch.
    pub history: Vec<f64>,
}

/// Mini-batch gradient ascent from a zero head. Each epoch visits the data in
/// an order drawn from a ChaCha stream seeded with `config.seed`.
pub fn train(data: &FeatureBatch, classes: usize, config: &TrainConfig) -> Result<TrainOutcome, ProbeError> {
    config.validate()?;
    if data.is_empty() {
        return Err(ProbeError::Empty);
    }
    let mut head = ProbeHead::zeros(classes, data.width());
    data.check(&head)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = vec![objective(&head, data, config.l2)?];
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        for rows in order.chunks(config.batch_size) {
            let batch = data.select(rows);
            let g = gradient(&head, &batch, config.l2)?;
            head.weights.scaled_add(-config.learning_rate, &g.weights);
            head.bias.scaled_add(-config.learning_rate, &g.bias);
        }
        let value = objective(&head, data, config.l2)?;
        if !value.is_finite() {
            return Err(ProbeError::Diverged { epoch, value });
        }
        tracing::debug!(epoch, objective = value, "probe epoch");
        history.push(value);
    }
    Ok(TrainOutcome { head, history })
}

/// [`train`] on features shifted by their column means, with the shift folded
/// back into the bias (`b − W·μ`) afterwards. The returned head applies to the
/// original features and the hypothesis class is unchanged; only the
/// conditioning improves when every feature shares a large common offset, as
/// pixels in `[0, 1]` do.
pub fn train_centered(data: &FeatureBatch, classes: usize, config: &TrainConfig) -> Result<TrainOutcome, ProbeError> {
    if data.is_empty() {
        return Err(ProbeError::Empty);
    }
    let mean = data.features.mean_axis(Axis(0)).expect("non-empty");
    let centered = FeatureBatch {
        features: &data.features - &mean,
        labels: data.labels.clone(),
    };
    let mut outcome = train(&centered, classes, config)?;
    let shift = outcome.head.weights.dot(&mean);
    outcome.head.bias -= &shift;
    Ok(outcome)
}

/// `confusion[truth][predicted]` counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        Self {
            counts: vec![vec![0; classes]; classes],
        }
    }

    pub fn from_pairs(classes: usize, truth: &[usize], predicted: &[usize]) -> Self {
        let mut m = Self::new(classes);
        for (&t, &p) in truth.iter().zip(predicted) {
            m.counts[t][p] += 1;
        }
        m
    }

    pub fn classes(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn accuracy(&self) -> f64 {
        let correct: u64 = (0..self.classes()).map(|k| self.counts[k][k]).sum();
        correct as f64 / self.total() as f64
    }

    /// F1 of class `k`, `2TP / (2TP + FP + FN)` (equal to `2PR/(P+R)`), zero
    /// when the class is absent from both truth and predictions.
    pub fn f1(&self, k: usize) -> f64 {
        let tp = self.counts[k][k];
        let fn_: u64 = self.counts[k].iter().sum::<u64>() - tp;
        let fp: u64 = self.counts.iter().map(|row| row[k]).sum::<u64>() - tp;
        let denom = 2 * tp + fp + fn_;
        if denom == 0 || tp == 0 {
            0.0
        } else {
            (2 * tp) as f64 / denom as f64
        }
    }

    /// Unweighted mean of per-class F1. Summed as an exact fraction when the
    /// counts allow it, so the result is the correctly rounded mean.
    pub fn macro_f1(&self) -> f64 {
        self.exact_macro_f1().unwrap_or_else(|| {
            (0..self.classes()).map(|k| self.f1(k)).sum::<f64>() / self.classes() as f64
        })
    }

    fn exact_macro_f1(&self) -> Option<f64> {
        let (mut num, mut den) = (0u128, 1u128);
        for k in 0..self.classes() {
            let tp = self.counts[k][k] as u128;
            if tp == 0 {
                continue;
            }
            let row: u128 = self.counts[k].iter().map(|&v| v as u128).sum();
            let col: u128 = self.counts.iter().map(|r| r[k] as u128).sum();
            let d = row + col;
            num = num.checked_mul(d)?.checked_add((2 * tp).checked_mul(den)?)?;
            den = den.checked_mul(d)?;
            let g = gcd(num, den);
            num /= g;
            den /= g;
        }
        den = den.checked_mul(self.classes() as u128)?;
        let g = gcd(num, den);
        let (num, den) = (num / g, den / g);
        const EXACT: u128 = 1 << 53;
        (num <= EXACT && den <= EXACT).then(|| num as f64 / den as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub accuracy: f64,
    pub macro_f1: f64,
    pub confusion: ConfusionMatrix,
}

pub fn evaluate(head: &ProbeHead, data: &FeatureBatch) -> Result<Evaluation, ProbeError> {
    if data.is_empty() {
        return Err(ProbeError::Empty);
    }
    data.check(head)?;
    let predicted = head.predict(data.features.view())?;
    let confusion = ConfusionMatrix::from_pairs(head.classes(), &data.labels, &predicted);
    Ok(Evaluation {
        accuracy: confusion.accuracy(),
        macro_f1: confusion.macro_f1(),
        confusion,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::Rng;

    fn random_case(rng: &mut ChaCha8Rng, classes: usize, width: usize, k: usize) -> (ProbeHead, FeatureBatch) {
        let head = ProbeHead {
            weights: Array2::from_shape_fn((classes, width), |_| rng.random_range(-1.0..1.0)),
            bias: Array1::from_shape_fn(classes, |_| rng.random_range(-1.0..1.0)),
        };
        let features = Array2::from_shape_fn((k, width), |_| rng.random_range(-1.0..1.0));
        let labels = (0..k).map(|_| rng.random_range(0..classes)).collect();
        (head, FeatureBatch::new(features, labels).unwrap())
    }

    #[test]
    fn uniform_head_gives_uniform_rows() {
        let head = ProbeHead::zeros(3, 4);
        let p = forward(&head, Array2::from_elem((2, 4), 0.7).view()).unwrap();
        for v in p.iter() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn huge_logits_stay_finite() {
        let head = ProbeHead {
            weights: array![[1000.0], [0.0]],
            bias: Array1::zeros(2),
        };
        let p = forward(&head, array![[1.0]].view()).unwrap();
        assert_eq!(p.row(0).to_vec(), vec![1.0, 0.0]);
    }

    #[test]
    fn rows_normalized_and_shift_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let (mut head, batch) = random_case(&mut rng, 5, 7, 9);
            let p = forward(&head, batch.features.view()).unwrap();
            for row in p.rows() {
                assert!((row.sum() - 1.0).abs() < 1e-9);
            }
            head.bias += 123.456;
            let q = forward(&head, batch.features.view()).unwrap();
            for (a, b) in p.iter().zip(q.iter()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn uniform_objective_closed_form() {
        let batch = FeatureBatch::new(Array2::from_elem((4, 3), 1.0), vec![0, 1, 1, 0]).unwrap();
        let v = objective(&ProbeHead::zeros(2, 3), &batch, 0.0).unwrap();
        assert!((v - 4.0 * 0.5f64.ln()).abs() < 1e-12);
        assert!((v + 2.7726).abs() < 1e-4);
    }

    #[test]
    fn confident_head_near_zero_objective_and_gradient() {
        let head = ProbeHead {
            weights: array![[50.0, 0.0], [0.0, 50.0]],
            bias: Array1::zeros(2),
        };
        let batch = FeatureBatch::new(array![[1.0, 0.0], [0.0, 1.0]], vec![0, 1]).unwrap();
        let v = objective(&head, &batch, 0.0).unwrap();
        assert!(v < 0.0 && v > -1e-20);
        assert!(gradient(&head, &batch, 0.0).unwrap().norm() < 1e-6);
    }

    #[test]
    fn objective_matches_direct_evaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let (head, batch) = random_case(&mut rng, 4, 6, 5);
            let mut expected = 0.0;
            for (k, &y) in batch.labels.iter().enumerate() {
                let z: Vec<f64> = (0..4)
                    .map(|c| {
                        head.bias[c] + (0..6).map(|j| head.weights[[c, j]] * batch.features[[k, j]]).sum::<f64>()
                    })
                    .collect();
                let denom: f64 = z.iter().map(|v| v.exp()).sum();
                expected += (z[y].exp() / denom).ln();
            }
            let got = objective(&head, &batch, 0.0).unwrap();
            assert!((got - expected).abs() < 1e-10 * expected.abs().max(1.0));
        }
    }

    #[test]
    fn zero_features_give_bias_only_gradient() {
        let head = ProbeHead::zeros(3, 2);
        let batch = FeatureBatch::new(Array2::zeros((2, 2)), vec![0, 2]).unwrap();
        let g = gradient(&head, &batch, 0.0).unwrap();
        assert!(g.weights.iter().all(|&v| v == 0.0));
        let third = 1.0 / 3.0;
        let expected = [2.0 * third - 1.0, 2.0 * third, 2.0 * third - 1.0];
        for (a, b) in g.bias.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn errors_on_mismatch() {
        let head = ProbeHead::zeros(2, 3);
        let bad = FeatureBatch::new(Array2::zeros((1, 4)), vec![0]).unwrap();
        assert!(matches!(objective(&head, &bad, 0.0), Err(ProbeError::WidthMismatch { .. })));
        let label = FeatureBatch::new(Array2::zeros((1, 3)), vec![2]).unwrap();
        assert!(matches!(gradient(&head, &label, 0.0), Err(ProbeError::LabelOutOfRange { .. })));
        assert!(FeatureBatch::new(Array2::zeros((2, 3)), vec![0]).is_err());
        let empty = FeatureBatch::new(Array2::zeros((0, 3)), vec![]).unwrap();
        assert_eq!(evaluate(&head, &empty), Err(ProbeError::Empty));
    }

    #[test]
    fn zero_epochs_return_initial_head() {
        let batch = FeatureBatch::new(array![[1.0, 2.0], [3.0, 4.0]], vec![0, 1]).unwrap();
        let cfg = TrainConfig { epochs: 0, ..Default::default() };
        let out = train(&batch, 2, &cfg).unwrap();
        assert_eq!(out.head, ProbeHead::zeros(2, 2));
        assert_eq!(out.history.len(), 1);
    }

    #[test]
    fn separable_data_is_learned_deterministically() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 200;
        let mut feats = Array2::zeros((n, 4));
        let mut labels = Vec::new();
        for i in 0..n {
            let y = i % 2;
            for j in 0..4 {
                feats[[i, j]] = rng.random_range(-1.0..1.0);
            }
            // margin of at least 0.2 along the first axis
            let a: f64 = feats[[i, 0]];
            feats[[i, 0]] = if y == 1 { 0.2 + a.abs() } else { -0.2 - a.abs() };
            labels.push(y);
        }
        let data = FeatureBatch::new(feats, labels).unwrap();
        let cfg = TrainConfig { learning_rate: 0.1, epochs: 20, ..Default::default() };
        let a = train(&data, 2, &cfg).unwrap();
        let b = train(&data, 2, &cfg).unwrap();
        assert_eq!(a.head, b.head);
        assert!(evaluate(&a.head, &data).unwrap().accuracy >= 0.99);
        assert!(a.history.last().unwrap() > &a.history[0]);
    }

    #[test]
    fn centered_training_folds_into_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (_, mut batch) = random_case(&mut rng, 3, 6, 40);
        batch.features += 5.0;
        let cfg = TrainConfig { epochs: 5, learning_rate: 0.05, ..Default::default() };
        let folded = train_centered(&batch, 3, &cfg).unwrap();
        let mean = batch.features.mean_axis(Axis(0)).unwrap();
        let centered = FeatureBatch::new(&batch.features - &mean, batch.labels.clone()).unwrap();
        let plain = train(&centered, 3, &cfg).unwrap();
        let a = folded.head.logits(batch.features.view()).unwrap();
        let b = plain.head.logits(centered.features.view()).unwrap();
        for (x, y) in a.iter().zip(b.iter()) {
            assert!((x - y).abs() < 1e-9);
        }
        let v = objective(&folded.head, &batch, 0.0).unwrap();
        assert!((v - folded.history.last().unwrap()).abs() < 1e-9 * v.abs().max(1.0));
    }

    #[test]
    fn diverging_run_aborts() {
        let data = FeatureBatch::new(array![[1e200], [-1e200]], vec![0, 1]).unwrap();
        let cfg = TrainConfig { learning_rate: 1e200, epochs: 3, ..Default::default() };
        assert!(matches!(train(&data, 2, &cfg), Err(ProbeError::Diverged { .. })));
    }

    #[test]
    fn metrics_from_confusion() {
        let all = ConfusionMatrix { counts: vec![vec![3, 0], vec![0, 2]] };
        assert_eq!((all.accuracy(), all.macro_f1()), (1.0, 1.0));
        let half = ConfusionMatrix { counts: vec![vec![1, 1], vec![1, 1]] };
        assert_eq!((half.accuracy(), half.macro_f1()), (0.5, 0.5));
        let absent = ConfusionMatrix { counts: vec![vec![2, 0, 0], vec![0, 2, 0], vec![0, 0, 0]] };
        assert_eq!(absent.f1(2), 0.0);
        assert_eq!(absent.macro_f1(), 2.0 / 3.0);
    }

    #[test]
    fn argmax_ties_pick_lowest() {
        let head = ProbeHead::zeros(4, 1);
        assert_eq!(head.predict(array![[1.0], [2.0]].view()).unwrap(), vec![0, 0]);
    }

    #[test]
    fn head_bytes_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (head, _) = random_case(&mut rng, 3, 5, 1);
        let bytes = head.to_bytes();
        assert_eq!(bytes.len(), 28 + 8 * 18);
        assert_eq!(ProbeHead::from_bytes(&bytes).unwrap(), head);
        assert!(ProbeHead::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[8] = 9;
        assert!(ProbeHead::from_bytes(&bad).is_err());
    }
}
