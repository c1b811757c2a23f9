//! Training of the deployed base classifier on clean glyphs.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::forge::gen_base_dataset;
use crate::model::{ArchSpec, Mlp, TrainConfig};
use crate::seed::{self, Purpose};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaseTrainingConfig {
    pub arch: ArchSpec,
    pub train_per_class: usize,
    pub heldout_per_class: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub momentum: f64,
}

impl Default for BaseTrainingConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            arch: ArchSpec::default(),
            train_per_class: 500,
            heldout_per_class: 200,
            epochs: t.epochs,
            batch_size: t.batch_size,
            lr: t.lr,
            momentum: t.momentum,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub seed: u64,
    pub train_error: f64,
    pub heldout_error: f64,
    pub total_params: usize,
    pub norm_affine_params: usize,
    pub norm_affine_fraction: f64,
}

/// Trains a fresh model; everything derives from `seed`.
pub fn train_base_model(cfg: &BaseTrainingConfig, seed: u64) -> Result<(Mlp<f64>, TrainingReport)> {
    let train = gen_base_dataset(seed::derive(seed, 0, Purpose::Dataset), cfg.train_per_class);
    let heldout = gen_base_dataset(seed::derive(seed, 1, Purpose::Dataset), cfg.heldout_per_class);
    let mut model = Mlp::init(cfg.arch, seed);
    let tc = TrainConfig {
        epochs: cfg.epochs,
        batch_size: cfg.batch_size,
        lr: cfg.lr,
        momentum: cfg.momentum,
        seed: seed::derive(seed, 0, Purpose::Shuffle),
    };
    let train_error = model.train(&train, &tc)?;
    let heldout_error = model.evaluate(&heldout)?;
    let (total_params, norm_affine_params) = model.param_counts();
    Ok((
        model,
        TrainingReport {
            seed,
            train_error,
            heldout_error,
            total_params,
            norm_affine_params,
            norm_affine_fraction: norm_affine_params as f64 / total_params as f64,
        },
    ))
}
