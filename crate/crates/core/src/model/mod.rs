//! One-hidden-layer classifier with a single normalization layer.
//!
//! Layer sequence: `affine(w1, b1) → normalize → scale/shift(gamma, beta) →
//! ReLU → affine(w2, b2) → softmax`. Parameters split into three disjoint
//! sets: the normalization affine pair `{gamma, beta}`, the weights
//! `{w1, b1, w2, b2}`, and the running statistics, which are not counted as
//! parameters.

mod checkpoint;
mod grad;
mod train;

use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;
use crate::seed;

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use grad::{GradScope, Gradients, Loss, WeightGrads};
pub use train::TrainConfig;

/// Normalization epsilon added to every variance.
pub const NORM_EPS: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchSpec {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub num_classes: usize,
}

impl Default for ArchSpec {
    fn default() -> Self {
        Self { input_dim: 256, hidden_dim: 512, num_classes: 10 }
    }
}

impl ArchSpec {
    pub fn new(input_dim: usize, hidden_dim: usize, num_classes: usize) -> Result<Self> {
        if input_dim == 0 || hidden_dim == 0 || num_classes == 0 {
            return Err(Error::InvalidArch(format!(
                "all dimensions must be >= 1, got ({input_dim}, {hidden_dim}, {num_classes})"
            )));
        }
        Ok(Self { input_dim, hidden_dim, num_classes })
    }

    /// Trainable parameters: both affine layers plus gamma and beta.
    pub fn total_params(&self) -> usize {
        let (d, h, c) = (self.input_dim, self.hidden_dim, self.num_classes);
        d * h + h + 2 * h + h * c + c
    }

    pub fn norm_affine_params(&self) -> usize {
        2 * self.hidden_dim
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormMode {
    RunningStats,
    BatchStats,
}

/// Classifier parameters and running normalization statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp<T> {
    pub(crate) arch: ArchSpec,
    pub(crate) w1: Matrix<T>,
    pub(crate) b1: Vec<T>,
    pub(crate) gamma: Vec<T>,
    pub(crate) beta: Vec<T>,
    pub(crate) running_mean: Vec<T>,
    pub(crate) running_var: Vec<T>,
    pub(crate) w2: Matrix<T>,
    pub(crate) b2: Vec<T>,
}

/// Output of a forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchPredictions<T> {
    pub probs: Matrix<T>,
    pub predicted_labels: Vec<usize>,
    pub confidences: Vec<T>,
}

impl<T: Scalar> BatchPredictions<T> {
    pub fn from_probs(probs: Matrix<T>) -> Self {
        let mut predicted_labels = Vec::with_capacity(probs.rows());
        let mut confidences = Vec::with_capacity(probs.rows());
        for i in 0..probs.rows() {
            let (arg, max) = argmax(probs.row(i));
            predicted_labels.push(arg);
            confidences.push(max);
        }
        Self { probs, predicted_labels, confidences }
    }

    pub fn len(&self) -> usize {
        self.predicted_labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.predicted_labels.is_empty()
    }

    /// Mean Shannon entropy of the rows, in nats (`0 · ln 0 = 0`).
    pub fn entropy(&self) -> T {
        entropy_loss(self)
    }

    /// Keeps only the first `n` rows.
    pub fn truncate(&mut self, n: usize) {
        if n >= self.len() {
            return;
        }
        let cols = self.probs.cols();
        let data = self.probs.as_slice()[..n * cols].to_vec();
        self.probs = Matrix::from_vec(n, cols, data);
        self.predicted_labels.truncate(n);
        self.confidences.truncate(n);
    }
}

/// Index and value of the row maximum; ties go to the lowest index.
pub(crate) fn argmax<T: Scalar>(row: &[T]) -> (usize, T) {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    (best, row[best])
}

pub fn entropy_loss<T: Scalar>(preds: &BatchPredictions<T>) -> T {
    let rows = preds.probs.rows();
    if rows == 0 {
        return T::zero();
    }
    let total: T = (0..rows).map(|i| row_entropy(preds.probs.row(i))).sum();
    total / T::lit(rows as f64)
}

pub(crate) fn row_entropy<T: Scalar>(row: &[T]) -> T {
    -row.iter()
        .filter(|&&p| p > T::zero())
        .map(|&p| p * p.ln())
        .sum::<T>()
}

/// Intermediate activations kept for the backward pass.
pub(crate) struct ForwardCache<T> {
    pub(crate) xhat: Matrix<T>,
    pub(crate) inv_std: Vec<T>,
    pub(crate) batch_mean: Vec<T>,
    pub(crate) batch_var: Vec<T>,
    pub(crate) pre_relu: Matrix<T>,
    pub(crate) hidden: Matrix<T>,
    pub(crate) probs: Matrix<T>,
}

/// Labeled examples, one row per item.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledSet<T> {
    pub inputs: Matrix<T>,
    pub labels: Vec<usize>,
}

impl<T: Scalar> LabeledSet<T> {
    pub fn new(inputs: Matrix<T>, labels: Vec<usize>) -> Result<Self> {
        if inputs.rows() != labels.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} inputs but {} labels",
                inputs.rows(),
                labels.len()
            )));
        }
        Ok(Self { inputs, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn subset(&self, idx: &[usize]) -> Self {
        let rows: Vec<&[T]> = idx.iter().map(|&i| self.inputs.row(i)).collect();
        Self {
            inputs: Matrix::from_rows(&rows),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
        }
    }
}

impl<T: Scalar> Mlp<T> {
    /// Glorot-uniform weights, zero biases, identity normalization.
    pub fn init(arch: ArchSpec, seed: u64) -> Self {
        let mut rng = seed::rng(seed::derive(seed, 0, seed::Purpose::Init));
        let mut glorot = |fan_in: usize, fan_out: usize| {
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let dist = Uniform::new_inclusive(-limit, limit).expect("finite bounds");
            let data = (0..fan_in * fan_out).map(|_| T::lit(dist.sample(&mut rng))).collect();
            Matrix::from_vec(fan_in, fan_out, data)
        };
        let w1 = glorot(arch.input_dim, arch.hidden_dim);
        let w2 = glorot(arch.hidden_dim, arch.num_classes);
        let h = arch.hidden_dim;
        Self {
            arch,
            w1,
            b1: vec![T::zero(); h],
            gamma: vec![T::one(); h],
            beta: vec![T::zero(); h],
            running_mean: vec![T::zero(); h],
            running_var: vec![T::one(); h],
            w2,
            b2: vec![T::zero(); arch.num_classes],
        }
    }

    pub fn arch(&self) -> ArchSpec {
        self.arch
    }

    pub fn w1(&self) -> &Matrix<T> {
        &self.w1
    }

    pub fn b1(&self) -> &[T] {
        &self.b1
    }

    pub fn w2(&self) -> &Matrix<T> {
        &self.w2
    }

    pub fn b2(&self) -> &[T] {
        &self.b2
    }

    pub fn gamma(&self) -> &[T] {
        &self.gamma
    }

    pub fn beta(&self) -> &[T] {
        &self.beta
    }

    pub fn running_mean(&self) -> &[T] {
        &self.running_mean
    }

    pub fn running_var(&self) -> &[T] {
        &self.running_var
    }

    pub fn w1_mut(&mut self) -> &mut Matrix<T> {
        &mut self.w1
    }

    pub fn b1_mut(&mut self) -> &mut [T] {
        &mut self.b1
    }

    pub fn gamma_mut(&mut self) -> &mut [T] {
        &mut self.gamma
    }

    pub fn beta_mut(&mut self) -> &mut [T] {
        &mut self.beta
    }

    pub fn w2_mut(&mut self) -> &mut Matrix<T> {
        &mut self.w2
    }

    pub fn b2_mut(&mut self) -> &mut [T] {
        &mut self.b2
    }

    /// Replaces the running statistics; variances are floored at the
    /// normalization epsilon.
    pub fn set_running_stats(&mut self, mean: Vec<T>, var: Vec<T>) -> Result<()> {
        let h = self.arch.hidden_dim;
        if mean.len() != h || var.len() != h {
            return Err(Error::ShapeMismatch(format!("running stats must have length {h}")));
        }
        let floor = T::lit(NORM_EPS);
        self.running_mean = mean;
        self.running_var = var.into_iter().map(|v| v.max(floor)).collect();
        Ok(())
    }

    /// `(total, norm_affine)`; running statistics are excluded from both.
    pub fn param_counts(&self) -> (usize, usize) {
        (self.arch.total_params(), self.arch.norm_affine_params())
    }

    /// Concatenation of `w1, b1, w2, b2` in that order.
    pub fn weight_vector(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.arch.total_params() - self.arch.norm_affine_params());
        out.extend_from_slice(self.w1.as_slice());
        out.extend_from_slice(&self.b1);
        out.extend_from_slice(self.w2.as_slice());
        out.extend_from_slice(&self.b2);
        out
    }

    pub fn all_finite(&self) -> bool {
        self.w1.all_finite()
            && self.w2.all_finite()
            && [&self.b1, &self.gamma, &self.beta, &self.running_mean, &self.running_var, &self.b2]
                .iter()
                .all(|v| v.iter().all(|x| x.is_finite()))
    }

    pub(crate) fn check_batch(&self, batch: &Matrix<T>, mode: NormMode) -> Result<()> {
        if batch.rows() == 0 {
            return Err(Error::EmptyBatch);
        }
        if batch.cols() != self.arch.input_dim {
            return Err(Error::ShapeMismatch(format!(
                "batch has {} columns, model expects {}",
                batch.cols(),
                self.arch.input_dim
            )));
        }
        if mode == NormMode::BatchStats && batch.rows() < 2 {
            return Err(Error::DegenerateBatch(batch.rows()));
        }
        Ok(())
    }

    pub fn forward(&self, batch: &Matrix<T>, mode: NormMode) -> Result<BatchPredictions<T>> {
        Ok(BatchPredictions::from_probs(self.forward_cached(batch, mode)?.probs))
    }

    /// First-layer pre-activations `batch · w1 + b1`.
    pub(crate) fn pre_norm(&self, batch: &Matrix<T>) -> Matrix<T> {
        let mut z = batch.matmul(&self.w1);
        for i in 0..z.rows() {
            for (v, &b) in z.row_mut(i).iter_mut().zip(&self.b1) {
                *v += b;
            }
        }
        z
    }

    pub(crate) fn forward_cached(&self, batch: &Matrix<T>, mode: NormMode) -> Result<ForwardCache<T>> {
        self.check_batch(batch, mode)?;
        let n = batch.rows();
        let h = self.arch.hidden_dim;
        let z = self.pre_norm(batch);
        let (batch_mean, batch_var) = column_moments(&z);
        let (mean, var) = match mode {
            NormMode::BatchStats => (&batch_mean, &batch_var),
            NormMode::RunningStats => (&self.running_mean, &self.running_var),
        };
        let eps = T::lit(NORM_EPS);
        let inv_std: Vec<T> = var.iter().map(|&v| (v + eps).sqrt().recip()).collect();

        let mut xhat = Matrix::zeros(n, h);
        let mut pre_relu = Matrix::zeros(n, h);
        let mut hidden = Matrix::zeros(n, h);
        for i in 0..n {
            let zr = z.row(i);
            let xr = xhat.row_mut(i);
            for j in 0..h {
                xr[j] = (zr[j] - mean[j]) * inv_std[j];
            }
            let xr = xhat.row(i).to_vec();
            let yr = pre_relu.row_mut(i);
            for j in 0..h {
                yr[j] = self.gamma[j] * xr[j] + self.beta[j];
            }
            let yr = pre_relu.row(i).to_vec();
            for (a, y) in hidden.row_mut(i).iter_mut().zip(yr) {
                *a = if y > T::zero() { y } else { T::zero() };
            }
        }

        let mut probs = hidden.matmul(&self.w2);
        for i in 0..n {
            let row = probs.row_mut(i);
            for (v, &b) in row.iter_mut().zip(&self.b2) {
                *v += b;
            }
            softmax_in_place(row);
        }
        Ok(ForwardCache { xhat, inv_std, batch_mean, batch_var, pre_relu, hidden, probs })
    }

    /// Fraction of items whose running-statistics prediction differs from
    /// the label.
    pub fn evaluate(&self, data: &LabeledSet<T>) -> Result<f64> {
        if data.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let mut wrong = 0usize;
        for start in (0..data.len()).step_by(256) {
            let end = (start + 256).min(data.len());
            let idx: Vec<usize> = (start..end).collect();
            let chunk = data.subset(&idx);
            let preds = self.forward(&chunk.inputs, NormMode::RunningStats)?;
            wrong += preds
                .predicted_labels
                .iter()
                .zip(&chunk.labels)
                .filter(|(p, t)| p != t)
                .count();
        }
        Ok(wrong as f64 / data.len() as f64)
    }
}

/// Per-column mean and biased variance.
pub(crate) fn column_moments<T: Scalar>(z: &Matrix<T>) -> (Vec<T>, Vec<T>) {
    let n = T::lit(z.rows() as f64);
    let mean: Vec<T> = z.col_sums().into_iter().map(|s| s / n).collect();
    let mut var = vec![T::zero(); z.cols()];
    for i in 0..z.rows() {
        for ((v, &x), &m) in var.iter_mut().zip(z.row(i)).zip(&mean) {
            let d = x - m;
            *v += d * d;
        }
    }
    var.iter_mut().for_each(|v| *v /= n);
    (mean, var)
}

pub(crate) fn softmax_in_place<T: Scalar>(row: &mut [T]) {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    let mut sum = T::zero();
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

#[cfg(test)]
mod tests {
    use rand::Rng as _;

    use super::*;

    fn batch(n: usize, d: usize, seed: u64) -> Matrix<f64> {
        let mut rng = seed::rng(seed);
        let data = (0..n * d).map(|_| rng.random::<f64>()).collect();
        Matrix::from_vec(n, d, data)
    }

    #[test]
    fn default_arch_counts() {
        let m = Mlp::<f64>::init(ArchSpec::default(), 7);
        let (total, affine) = m.param_counts();
        assert_eq!((total, affine), (137_738, 1_024));
        assert!((affine as f64 / total as f64) < 0.01);
    }

    #[test]
    fn small_arch_counts_by_hand() {
        // 4·8 + 8 + 2·8 + 8·2 + 2
        let m = Mlp::<f64>::init(ArchSpec::new(4, 8, 2).unwrap(), 3);
        assert_eq!(m.param_counts(), (74, 16));
        assert_eq!(m.gamma(), &[1.0; 8]);
        assert_eq!(m.beta(), &[0.0; 8]);
        assert_eq!(m.running_var(), &[1.0; 8]);
    }

    #[test]
    fn zero_dimension_rejected() {
        assert!(matches!(ArchSpec::new(0, 8, 2), Err(Error::InvalidArch(_))));
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        let a = Mlp::<f64>::init(ArchSpec::default(), 7);
        let b = Mlp::<f64>::init(ArchSpec::default(), 7);
        assert_eq!(a, b);
        assert_ne!(a, Mlp::<f64>::init(ArchSpec::default(), 8));
        let limit = (6.0f64 / (256.0 + 512.0)).sqrt();
        assert!(a.w1().as_slice().iter().all(|w| w.abs() <= limit));
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let m = Mlp::<f64>::init(ArchSpec::new(8, 16, 4).unwrap(), 1);
        let x = batch(5, 8, 2);
        for mode in [NormMode::RunningStats, NormMode::BatchStats] {
            let p = m.forward(&x, mode).unwrap();
            for i in 0..5 {
                let s: f64 = p.probs.row(i).iter().sum();
                assert!((s - 1.0).abs() < 1e-9);
                assert_eq!(p.confidences[i], p.probs.get(i, p.predicted_labels[i]));
            }
        }
    }

    #[test]
    fn zero_output_layer_gives_uniform_rows() {
        let mut m = Mlp::<f64>::init(ArchSpec::default(), 1);
        m.w2_mut().as_mut_slice().iter_mut().for_each(|w| *w = 0.0);
        m.b2_mut().iter_mut().for_each(|b| *b = 0.0);
        let p = m.forward(&batch(3, 256, 9), NormMode::RunningStats).unwrap();
        for i in 0..3 {
            assert!(p.probs.row(i).iter().all(|&v| (v - 0.1).abs() < 1e-12));
            assert!((p.confidences[i] - 0.1).abs() < 1e-12);
            // all tied: lowest index wins
            assert_eq!(p.predicted_labels[i], 0);
        }
    }

    #[test]
    fn norm_modes_disagree_on_shifted_batch() {
        let m = Mlp::<f64>::init(ArchSpec::new(8, 16, 4).unwrap(), 11);
        let x = batch(6, 8, 12);
        let a = m.forward(&x, NormMode::RunningStats).unwrap();
        let b = m.forward(&x, NormMode::BatchStats).unwrap();
        assert_ne!(a.probs, b.probs);
    }

    #[test]
    fn batch_stats_reject_single_row() {
        let m = Mlp::<f64>::init(ArchSpec::new(4, 8, 2).unwrap(), 1);
        let err = m.forward(&batch(1, 4, 1), NormMode::BatchStats).unwrap_err();
        assert!(err.to_string().contains("degenerate batch statistics"));
        assert!(m.forward(&batch(1, 4, 1), NormMode::RunningStats).is_ok());
    }

    #[test]
    fn entropy_of_known_rows() {
        let onehot = BatchPredictions::from_probs(Matrix::from_vec(1, 10, {
            let mut v = vec![0.0f64; 10];
            v[3] = 1.0;
            v
        }));
        assert_eq!(onehot.entropy(), 0.0);
        let uniform = BatchPredictions::from_probs(Matrix::from_vec(1, 10, vec![0.1f64; 10]));
        assert!((uniform.entropy() - 10f64.ln()).abs() < 1e-12);
        let mut both = vec![0.0f64; 10];
        both[0] = 1.0;
        both.extend(vec![0.1; 10]);
        let mixed = BatchPredictions::from_probs(Matrix::from_vec(2, 10, both));
        assert!((mixed.entropy() - 1.151_292_546_497_023).abs() < 1e-9);
    }

    #[test]
    fn f32_model_runs() {
        let m = Mlp::<f32>::init(ArchSpec::new(4, 8, 3).unwrap(), 5);
        let x = Matrix::from_vec(2, 4, vec![0.1f32, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8]);
        let p = m.forward(&x, NormMode::BatchStats).unwrap();
        let s: f32 = p.probs.row(0).iter().sum();
        assert!((s - 1.0).abs() < 1e-5);
    }
}
