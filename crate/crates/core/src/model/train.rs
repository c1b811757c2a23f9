use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{GradScope, LabeledSet, Loss, Mlp, NormMode};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::seed::{self, Purpose};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Weight of the newest batch in the running-statistics moving average.
    pub momentum: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { epochs: 30, batch_size: 32, lr: 0.05, momentum: 0.1, seed: 0 }
    }
}

impl<T: Scalar> Mlp<T> {
    /// Mini-batch SGD with cross-entropy over all parameters, batch
    /// statistics in the forward pass, and a moving-average update of the
    /// running statistics after each batch. Returns the final training error
    /// measured with running statistics.
    ///
    /// A trailing batch of a single item is skipped since it has no batch
    /// variance.
    pub fn train(&mut self, data: &LabeledSet<T>, cfg: &TrainConfig) -> Result<f64> {
        if data.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if cfg.batch_size < 2 {
            return Err(Error::InvalidConfig("training batch size must be >= 2".into()));
        }
        let c = self.arch.num_classes;
        if let Some(&label) = data.labels.iter().find(|&&l| l >= c) {
            return Err(Error::LabelOutOfRange { label, num_classes: c });
        }
        if cfg.epochs == 0 {
            return self.evaluate(data);
        }

        let lr = T::lit(cfg.lr);
        let mut order: Vec<usize> = (0..data.len()).collect();
        for epoch in 0..cfg.epochs {
            let mut rng = seed::rng(seed::derive(cfg.seed, epoch as u64, Purpose::Shuffle));
            order.shuffle(&mut rng);
            for chunk in order.chunks(cfg.batch_size) {
                if chunk.len() < 2 {
                    continue;
                }
                let batch = data.subset(chunk);
                self.supervised_step(&batch, lr, cfg.momentum)?;
            }
        }
        self.evaluate(data)
    }

    /// One cross-entropy step on `batch` plus the running-statistics update.
    pub(crate) fn supervised_step(&mut self, batch: &LabeledSet<T>, lr: T, momentum: f64) -> Result<()> {
        let loss = Loss::CrossEntropy(&batch.labels);
        let cache = self.forward_cached(&batch.inputs, NormMode::BatchStats)?;
        let value = super::grad::loss_from_probs(&cache.probs, loss);
        if !value.is_finite() {
            return Err(Error::Diverged("training loss"));
        }
        let grads = self.backward_from_cache(
            &batch.inputs,
            NormMode::BatchStats,
            loss,
            GradScope::AllWeightsAndAffine,
            &cache,
        );
        self.sgd_step(&grads, lr)?;

        let m = T::lit(momentum);
        let keep = T::one() - m;
        let n = batch.len() as f64;
        let unbias = T::lit(n / (n - 1.0));
        for j in 0..self.arch.hidden_dim {
            self.running_mean[j] = keep * self.running_mean[j] + m * cache.batch_mean[j];
            self.running_var[j] = keep * self.running_var[j] + m * cache.batch_var[j] * unbias;
        }
        Ok(())
    }

    /// Replaces the running statistics with the exact moments of the
    /// first-layer activations over `data`.
    pub fn recompute_running_stats(&mut self, data: &LabeledSet<T>) -> Result<()> {
        if data.is_empty() {
            return Err(Error::EmptyDataset);
        }
        self.check_batch(&data.inputs, NormMode::RunningStats)?;
        let z = self.pre_norm(&data.inputs);
        let (mean, var) = super::column_moments(&z);
        let n = data.len() as f64;
        let var = if n > 1.0 {
            let unbias = T::lit(n / (n - 1.0));
            var.into_iter().map(|v| v * unbias).collect()
        } else {
            var
        };
        self.set_running_stats(mean, var)
    }
}
