//! Interval-boundary monitoring and targeted fine-tuning.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::adapter::Adapter;
use crate::error::{Error, Result};
use crate::forge::{Image, ShiftKind};
use crate::ledger::{CulpritReport, Ledger};
use crate::matrix::Matrix;
use crate::model::{LabeledSet, Mlp};
use crate::seed::{self, Purpose};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TriggerMode {
    Automatic,
    Manual,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ControllerConfig {
    pub theta: f64,
    pub trigger_mode: TriggerMode,
    pub finetune_epochs: usize,
    pub finetune_lr: f64,
    pub finetune_batch: usize,
    pub mix_clean_fraction: f64,
    /// Number of culprit groups whose samples are used.
    pub top_k: usize,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            theta: 0.2,
            trigger_mode: TriggerMode::Automatic,
            finetune_epochs: 40,
            finetune_lr: 0.003,
            finetune_batch: 8,
            mix_clean_fraction: 0.5,
            top_k: 1,
        }
    }
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return Err(Error::InvalidConfig("theta must lie in (0, 1)".into()));
        }
        if !(self.finetune_lr > 0.0 && self.finetune_lr.is_finite()) {
            return Err(Error::InvalidConfig("finetune_lr must be > 0".into()));
        }
        if self.finetune_batch < 2 {
            return Err(Error::InvalidConfig("finetune_batch must be >= 2".into()));
        }
        if !(0.0..1.0).contains(&self.mix_clean_fraction) {
            return Err(Error::InvalidConfig("mix_clean_fraction must lie in [0, 1)".into()));
        }
        if self.top_k == 0 {
            return Err(Error::InvalidConfig("top_k must be >= 1".into()));
        }
        Ok(())
    }

    /// `(culprit, clean)` items per fine-tune batch.
    pub fn batch_split(&self) -> (usize, usize) {
        let clean = ((self.finetune_batch as f64 * self.mix_clean_fraction).round() as usize).min(self.finetune_batch - 1);
        (self.finetune_batch - clean, clean)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Decision {
    Keep,
    FineTune(CulpritReport),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecisionLogEntry {
    pub interval: u32,
    pub proxy_rate: Option<f64>,
    pub decision: &'static str,
    pub culprit: Option<ShiftKind>,
    pub samples: usize,
}

/// Validated images by item id, with their expert labels.
pub type RelabeledStore = BTreeMap<u64, (Image, usize)>;

#[derive(Clone, Debug)]
pub struct Controller {
    config: ControllerConfig,
    since: u32,
    log: Vec<DecisionLogEntry>,
}

impl Controller {
    pub fn new(config: ControllerConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { config, since: 1, log: Vec::new() })
    }

    pub fn config(&self) -> &ControllerConfig {
        &self.config
    }

    /// First interval whose records count towards the next culprit.
    pub fn since(&self) -> u32 {
        self.since
    }

    pub fn log(&self) -> &[DecisionLogEntry] {
        &self.log
    }

    /// Keep unless the interval's mismatch rate exceeds `theta` and a tagged
    /// culprit exists since the last fine-tune. Ledger errors mean Keep.
    pub fn end_of_interval(&mut self, ledger: &Ledger, interval: u32) -> Decision {
        let rate = ledger.interval_proxy_rate(interval).ok().map(|(r, _, _)| r);
        let decision = match rate {
            Some(r) if r > self.config.theta => match ledger.culprit_analysis(self.since) {
                Ok(report) => Decision::FineTune(report),
                Err(_) => Decision::Keep,
            },
            _ => Decision::Keep,
        };
        let (label, culprit, samples) = match &decision {
            Decision::Keep => ("keep", None, 0),
            Decision::FineTune(r) => ("finetune", Some(r.dominant_kind), r.top_k_ids(self.config.top_k).len()),
        };
        self.log.push(DecisionLogEntry { interval, proxy_rate: rate, decision: label, culprit, samples });
        decision
    }

    /// Records that the decision for `interval` was acted upon; later
    /// culprit analyses only look at subsequent intervals.
    pub fn mark_fine_tuned(&mut self, interval: u32) {
        self.since = interval + 1;
    }

    /// Downgrades the last logged decision when a manual trigger was not
    /// confirmed.
    pub fn mark_unconfirmed(&mut self) {
        if let Some(last) = self.log.last_mut() {
            last.decision = "pending";
        }
    }
}

/// Everything a fine-tune trained on.
#[derive(Clone, Debug, PartialEq)]
pub struct FineTuneSet {
    pub culprit_ids: Vec<u64>,
    pub clean_indices: Vec<usize>,
}

/// Full-parameter cross-entropy fine-tuning on the culprit samples, each
/// batch topped up with a seeded draw from `clean_reserve`; running
/// statistics are then recomputed over everything trained on.
pub fn fine_tune(
    model: &Mlp<f64>,
    culprit: &CulpritReport,
    store: &RelabeledStore,
    clean_reserve: &LabeledSet<f64>,
    config: &ControllerConfig,
    seed: u64,
) -> Result<(Mlp<f64>, FineTuneSet)> {
    let ids = culprit.top_k_ids(config.top_k);
    if ids.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut rows = Vec::with_capacity(ids.len());
    let mut labels = Vec::with_capacity(ids.len());
    for id in &ids {
        let (img, label) = store.get(id).ok_or(Error::UnresolvableId(*id))?;
        rows.push(img.pixels());
        labels.push(*label);
    }
    let culprits = LabeledSet::new(Matrix::from_rows(&rows), labels)?;
    let (per_batch, clean_per_batch) = config.batch_split();
    if clean_per_batch > 0 && clean_reserve.is_empty() {
        return Err(Error::EmptyDataset);
    }

    let mut tuned = model.clone();
    let lr = config.finetune_lr;
    let mut order: Vec<usize> = (0..culprits.len()).collect();
    let mut clean_used = Vec::new();
    for epoch in 0..config.finetune_epochs {
        let mut rng = seed::rng(seed::derive(seed, epoch as u64, Purpose::FineTune));
        order.shuffle(&mut rng);
        for chunk in order.chunks(per_batch) {
            let clean: Vec<usize> = (0..clean_per_batch).map(|_| rng.random_range(0..clean_reserve.len())).collect();
            if chunk.len() + clean.len() < 2 {
                continue;
            }
            let mut batch = culprits.subset(chunk);
            let extra = clean_reserve.subset(&clean);
            let mut data = batch.inputs.into_vec();
            data.extend_from_slice(extra.inputs.as_slice());
            batch.labels.extend_from_slice(&extra.labels);
            let batch = LabeledSet::new(Matrix::from_vec(batch.labels.len(), culprits.inputs.cols(), data), batch.labels)?;
            tuned.supervised_step(&batch, lr, 0.0)?;
            clean_used.extend(clean);
        }
    }
    if !tuned.all_finite() {
        return Err(Error::Diverged("fine-tuned parameters"));
    }
    clean_used.sort_unstable();
    clean_used.dedup();
    let mut stats_rows: Vec<&[f64]> = (0..culprits.len()).map(|i| culprits.inputs.row(i)).collect();
    stats_rows.extend(clean_used.iter().map(|&i| clean_reserve.inputs.row(i)));
    let stats_labels = vec![0; stats_rows.len()];
    tuned.recompute_running_stats(&LabeledSet::new(Matrix::from_rows(&stats_rows), stats_labels)?)?;
    Ok((tuned, FineTuneSet { culprit_ids: ids, clean_indices: clean_used }))
}

/// Resets the live adapter onto the newly deployed model.
pub fn deploy(new_model: &Mlp<f64>, adapter: &mut Adapter<f64>) {
    adapter.reset(new_model);
}
