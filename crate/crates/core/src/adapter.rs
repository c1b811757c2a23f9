//! Online test-time adaptation: each incoming batch is normalized with its
//! own statistics, predicted, and then used for entropy-minimization steps
//! on `gamma`/`beta` only.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::model::{BatchPredictions, GradScope, Loss, Mlp, NormMode};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum StatsMode {
    /// Batch statistics replace the running statistics outright.
    UseBatchStats,
    /// Running statistics are pulled toward each batch's statistics by
    /// `momentum` and then used as constants.
    BlendEma { momentum: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdapterConfig {
    pub batch_size: usize,
    pub lr: f64,
    pub steps_per_batch: usize,
    pub stats_mode: StatsMode,
}

impl Default for AdapterConfig {
    fn default() -> Self {
        Self { batch_size: 16, lr: 1e-3, steps_per_batch: 1, stats_mode: StatsMode::UseBatchStats }
    }
}

impl AdapterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(Error::InvalidConfig("adapter batch_size must be >= 2".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidConfig("adapter lr must be > 0".into()));
        }
        if self.steps_per_batch == 0 {
            return Err(Error::InvalidConfig("adapter steps_per_batch must be >= 1".into()));
        }
        if let StatsMode::BlendEma { momentum } = self.stats_mode {
            if !(0.0..=1.0).contains(&momentum) {
                return Err(Error::InvalidConfig("blend momentum must lie in [0, 1]".into()));
            }
        }
        Ok(())
    }
}

/// The live adapted model. Its weights (`w1, b1, w2, b2`) always equal
/// those of the model it was created or last reset from.
#[derive(Clone, Debug)]
pub struct Adapter<T> {
    model: Mlp<T>,
    config: AdapterConfig,
    batches_seen: u64,
}

impl<T: Scalar> Adapter<T> {
    pub fn new(deployed: &Mlp<T>, config: AdapterConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { model: deployed.clone(), config, batches_seen: 0 })
    }

    pub fn model(&self) -> &Mlp<T> {
        &self.model
    }

    pub fn config(&self) -> &AdapterConfig {
        &self.config
    }

    pub fn batches_seen(&self) -> u64 {
        self.batches_seen
    }

    /// Restarts from `deployed`, keeping the configuration.
    pub fn reset(&mut self, deployed: &Mlp<T>) {
        self.model = deployed.clone();
        self.batches_seen = 0;
    }

    fn norm_mode(&self) -> NormMode {
        match self.config.stats_mode {
            StatsMode::UseBatchStats => NormMode::BatchStats,
            StatsMode::BlendEma { .. } => NormMode::RunningStats,
        }
    }

    fn pad(&self, batch: &Matrix<T>) -> Result<Matrix<T>> {
        let want = self.config.batch_size;
        match batch.rows() {
            0 => Err(Error::EmptyBatch),
            n if n > want => Err(Error::ShapeMismatch(format!("batch of {n} exceeds adapter batch size {want}"))),
            n if n == want => Ok(batch.clone()),
            n => {
                let mut data = batch.as_slice().to_vec();
                let last = batch.row(n - 1).to_vec();
                for _ in n..want {
                    data.extend_from_slice(&last);
                }
                Ok(Matrix::from_vec(want, batch.cols(), data))
            }
        }
    }

    /// Predictions the adapter would make right now, without adapting.
    pub fn predict(&self, batch: &Matrix<T>) -> Result<BatchPredictions<T>> {
        let padded = self.pad(batch)?;
        let mut model = self.model.clone();
        self.blend_stats(&mut model, &padded)?;
        let mut preds = model.forward(&padded, self.norm_mode())?;
        preds.truncate(batch.rows());
        Ok(preds)
    }

    fn blend_stats(&self, model: &mut Mlp<T>, padded: &Matrix<T>) -> Result<()> {
        if let StatsMode::BlendEma { momentum } = self.config.stats_mode {
            let z = model.pre_norm(padded);
            let (bm, bv) = crate::model::column_moments(&z);
            let m = T::lit(momentum);
            let keep = T::one() - m;
            let mean = model.running_mean().iter().zip(&bm).map(|(&r, &b)| keep * r + m * b).collect();
            let var = model.running_var().iter().zip(&bv).map(|(&r, &b)| keep * r + m * b).collect();
            model.set_running_stats(mean, var)?;
        }
        Ok(())
    }

    /// Predicts `batch` and then adapts on it. A batch shorter than the
    /// configured size is padded by repeating its last row; predictions for
    /// pad rows are dropped. The returned predictions come from the forward
    /// pass before any update.
    pub fn adapt_and_predict(&mut self, batch: &Matrix<T>) -> Result<BatchPredictions<T>> {
        let padded = self.pad(batch)?;
        let mode = self.norm_mode();
        let mut next = self.model.clone();
        self.blend_stats(&mut next, &padded)?;
        let lr = T::lit(self.config.lr);

        let mut returned = None;
        for _ in 0..self.config.steps_per_batch {
            let cache = next.forward_cached(&padded, mode)?;
            if !cache.probs.all_finite() {
                return Err(Error::AdaptationDiverged);
            }
            let grads = next.backward_from_cache(&padded, mode, Loss::Entropy, GradScope::NormAffineOnly, &cache);
            if returned.is_none() {
                returned = Some(BatchPredictions::from_probs(cache.probs));
            }
            next.sgd_step(&grads, lr).map_err(|_| Error::AdaptationDiverged)?;
        }
        if !next.all_finite() {
            return Err(Error::AdaptationDiverged);
        }
        self.model = next;
        self.batches_seen += 1;
        let mut preds = returned.expect("at least one step");
        preds.truncate(batch.rows());
        Ok(preds)
    }
}
