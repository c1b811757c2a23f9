//! Scenario definitions, the three compared arms, and replication.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adapter::{Adapter, AdapterConfig};
use crate::controller::{self, Controller, ControllerConfig, Decision, DecisionLogEntry, RelabeledStore, TriggerMode};
use crate::error::{Error, Result};
use crate::forge::{gen_base_dataset, gen_stream, CorruptionParams, ExemplarBank, ShiftKind, ShiftSpec, StreamItem, StreamPlan};
use crate::ledger::Ledger;
use crate::matrix::Matrix;
use crate::model::{LabeledSet, Mlp, NormMode};
use crate::oracle::{ExemplarTagger, Expert, TagMode};
use crate::seed::{self, Purpose};
use crate::selector::{selection_success_rate, BudgetState, Decision as Pick, SelectionSummary, Selector, SelectorConfig, Strategy};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Arm {
    #[serde(rename = "offline")]
    Offline,
    #[serde(rename = "tta")]
    TtaOnly,
    #[serde(rename = "tta-saf")]
    TtaSaf,
}

impl Arm {
    pub const ALL: [Arm; 3] = [Arm::Offline, Arm::TtaOnly, Arm::TtaSaf];

    pub fn name(self) -> &'static str {
        match self {
            Arm::Offline => "offline",
            Arm::TtaOnly => "tta",
            Arm::TtaSaf => "tta-saf",
        }
    }
}

impl std::fmt::Display for Arm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Arm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "offline" => Ok(Arm::Offline),
            "tta" | "tta-only" => Ok(Arm::TtaOnly),
            "tta-saf" | "saf" => Ok(Arm::TtaSaf),
            _ => Err(Error::InvalidConfig(format!("unknown arm `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioSpec {
    pub name: String,
    pub intervals: usize,
    pub items_per_interval: usize,
    pub schedule: Vec<ShiftSpec>,
    /// Chance that an item of a shifted interval actually carries the shift.
    pub shift_probability: f64,
    pub corruption: CorruptionParams,
    pub selector: SelectorConfig,
    pub adapter: AdapterConfig,
    pub controller: ControllerConfig,
    pub oracle_mode: TagMode,
    /// Needed to act on fine-tune decisions in manual trigger mode.
    pub confirm_finetune: bool,
    /// Clean labeled glyphs per replication available for fine-tune mixing.
    pub clean_reserve: usize,
    pub exemplars_per_group: usize,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        scenario_1()
    }
}

fn base_spec(name: &str, schedule: Vec<ShiftSpec>) -> ScenarioSpec {
    ScenarioSpec {
        name: name.into(),
        intervals: schedule.len(),
        items_per_interval: 240,
        schedule,
        shift_probability: 1.0,
        corruption: CorruptionParams::default(),
        selector: SelectorConfig::default(),
        adapter: AdapterConfig::default(),
        controller: ControllerConfig::default(),
        oracle_mode: TagMode::Provenance,
        confirm_finetune: false,
        clean_reserve: 500,
        exemplars_per_group: crate::forge::DEFAULT_EXEMPLARS,
    }
}

/// Seven clean intervals of 240 items.
pub fn scenario_1() -> ScenarioSpec {
    base_spec("scenario-1", vec![ShiftSpec::NONE; 7])
}

/// A clean interval, then Fog, Snow and Frost at severity 5, two intervals each.
pub fn scenario_2() -> ScenarioSpec {
    let s5 = |k| ShiftSpec::new(k, 5).expect("valid");
    base_spec(
        "scenario-2",
        vec![
            ShiftSpec::NONE,
            s5(ShiftKind::Fog),
            s5(ShiftKind::Fog),
            s5(ShiftKind::Snow),
            s5(ShiftKind::Snow),
            s5(ShiftKind::Frost),
            s5(ShiftKind::Frost),
        ],
    )
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        if self.intervals == 0 || self.items_per_interval == 0 {
            return Err(Error::InvalidConfig("intervals and items_per_interval must be >= 1".into()));
        }
        if self.schedule.len() != self.intervals {
            return Err(Error::InvalidConfig(format!(
                "schedule has {} entries for {} intervals",
                self.schedule.len(),
                self.intervals
            )));
        }
        if !(0.0..=1.0).contains(&self.shift_probability) {
            return Err(Error::InvalidConfig("shift_probability must lie in [0, 1]".into()));
        }
        if self.clean_reserve == 0 && self.controller.mix_clean_fraction > 0.0 {
            return Err(Error::InvalidConfig("clean_reserve must be >= 1 when mixing clean samples".into()));
        }
        if self.oracle_mode == TagMode::Exemplar && self.exemplars_per_group == 0 {
            return Err(Error::InvalidConfig("exemplars_per_group must be >= 1".into()));
        }
        self.selector.validate()?;
        self.adapter.validate()?;
        self.controller.validate()
    }

    pub fn total_items(&self) -> usize {
        self.intervals * self.items_per_interval
    }

    pub fn allocated_per_interval(&self) -> usize {
        self.selector.allocation(self.items_per_interval)
    }

    /// 1-based indices of intervals whose schedule entry is a shift.
    pub fn shifted_intervals(&self) -> Vec<u32> {
        self.schedule.iter().enumerate().filter(|(_, s)| s.is_shifted()).map(|(i, _)| i as u32 + 1).collect()
    }

    pub fn stream_plan(&self) -> StreamPlan {
        StreamPlan {
            items_per_interval: self.items_per_interval,
            schedule: self.schedule.clone(),
            shift_probability: self.shift_probability,
            corruption: self.corruption.clone(),
        }
    }
}

/// The stable seed of replication `r`.
pub fn replication_seed(base_seed: u64, r: usize) -> u64 {
    seed::derive(base_seed, r as u64, Purpose::Replication)
}

pub fn replication_stream(spec: &ScenarioSpec, rep_seed: u64) -> Vec<StreamItem> {
    gen_stream(&spec.stream_plan(), seed::derive(rep_seed, 0, Purpose::Stream))
}

/// State shared read-only by every replication of a run.
#[derive(Clone, Debug)]
pub struct RunContext {
    pub spec: ScenarioSpec,
    pub base_model: Mlp<f64>,
    pub expert: Expert,
}

impl RunContext {
    pub fn new(spec: ScenarioSpec, base_model: Mlp<f64>, base_seed: u64) -> Result<Self> {
        spec.validate()?;
        let expert = match spec.oracle_mode {
            TagMode::Provenance => Expert::Provenance,
            TagMode::Exemplar => {
                let bank_seed = seed::derive(base_seed, 0, Purpose::Exemplars);
                let bank = ExemplarBank::build(bank_seed, spec.exemplars_per_group, &spec.corruption);
                Expert::Exemplar(ExemplarTagger::new(&bank, seed::derive(base_seed, 1, Purpose::CleanReserve)))
            }
        };
        Ok(Self { spec, base_model, expert })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IntervalSelection {
    pub summary: SelectionSummary,
    /// Records the expert appended for the interval.
    pub validated: usize,
    pub success_rate: f64,
}

#[derive(Clone, Debug)]
pub struct ArmResult {
    pub arm: Arm,
    /// True error over all items of each interval.
    pub errors: Vec<f64>,
    pub finetune_events: usize,
    pub selections: Vec<IntervalSelection>,
    pub decisions: Vec<DecisionLogEntry>,
    pub ledger: Ledger,
}

impl ArmResult {
    /// Whether every interval kept within its allocation and validated
    /// exactly what it consumed.
    pub fn budget_consistent(&self) -> bool {
        self.selections
            .iter()
            .all(|s| s.summary.consumed <= s.summary.allocated && s.validated == s.summary.consumed)
    }
}

fn batch_matrix(items: &[StreamItem]) -> Matrix<f64> {
    let rows: Vec<&[f64]> = items.iter().map(|it| it.image.pixels()).collect();
    Matrix::from_rows(&rows)
}

fn clean_reserve(spec: &ScenarioSpec, rep_seed: u64) -> LabeledSet<f64> {
    let per_class = spec.clean_reserve.div_ceil(crate::forge::NUM_CLASSES);
    let full = gen_base_dataset(seed::derive(rep_seed, 0, Purpose::CleanReserve), per_class.max(1));
    let idx: Vec<usize> = (0..spec.clean_reserve.min(full.len())).collect();
    full.subset(&idx)
}

/// Runs one arm over one replication's stream.
pub fn run_arm(ctx: &RunContext, arm: Arm, rep_seed: u64, stream: &[StreamItem]) -> Result<ArmResult> {
    let spec = &ctx.spec;
    let ipi = spec.items_per_interval;
    if stream.len() != spec.total_items() {
        return Err(Error::ShapeMismatch(format!("stream has {} items, expected {}", stream.len(), spec.total_items())));
    }
    let mut model = ctx.base_model.clone();
    let mut adapter = Adapter::new(&model, spec.adapter.clone())?;
    let mut selector = Selector::new(spec.selector.clone(), ipi, seed::derive(rep_seed, 0, Purpose::Selector))?;
    let mut controller = Controller::new(spec.controller.clone())?;
    let mut ledger = Ledger::new();
    let mut store = RelabeledStore::new();
    let reserve = if arm == Arm::TtaSaf && spec.controller.mix_clean_fraction > 0.0 {
        clean_reserve(spec, rep_seed)
    } else {
        LabeledSet::new(Matrix::zeros(0, model.arch().input_dim), Vec::new())?
    };

    let mut errors = Vec::with_capacity(spec.intervals);
    let mut selections = Vec::new();
    let mut finetune_events = 0;

    for (k, interval_items) in stream.chunks(ipi).enumerate() {
        let interval = k as u32 + 1;
        let mut wrong = 0usize;
        let mut confidences = Vec::with_capacity(ipi);
        let mut oracle_budget = BudgetState::new(selector.budget().allocated);
        let mut validated = 0;
        for batch in interval_items.chunks(spec.adapter.batch_size) {
            let x = batch_matrix(batch);
            let preds = match arm {
                Arm::Offline => model.forward(&x, NormMode::RunningStats)?,
                Arm::TtaOnly | Arm::TtaSaf => adapter.adapt_and_predict(&x)?,
            };
            for (i, item) in batch.iter().enumerate() {
                let predicted = preds.predicted_labels[i];
                wrong += usize::from(predicted != item.provenance().true_label);
                if arm != Arm::TtaSaf {
                    continue;
                }
                let confidence = preds.confidences[i];
                confidences.push((item.id, confidence));
                if selector.offer(item.id, confidence)? == Pick::Select {
                    let (verdict, record) = ctx.expert.process_selected(item, predicted, &mut oracle_budget)?;
                    ledger.append(record)?;
                    store.insert(item.id, (item.image.clone(), verdict.true_label));
                    validated += 1;
                }
            }
        }
        errors.push(wrong as f64 / interval_items.len() as f64);
        if arm != Arm::TtaSaf {
            continue;
        }

        let summary = selector.end_interval();
        let success_rate = if summary.allocated == 0 {
            0.0
        } else {
            selection_success_rate(&summary.selected_ids, &confidences, summary.allocated)?
        };
        selections.push(IntervalSelection { summary, validated, success_rate });

        // No later interval would be served by a fine-tuned model.
        if k + 1 == spec.intervals {
            continue;
        }
        if let Decision::FineTune(report) = controller.end_of_interval(&ledger, interval) {
            if spec.controller.trigger_mode == TriggerMode::Manual && !spec.confirm_finetune {
                controller.mark_unconfirmed();
                continue;
            }
            let ft_seed = seed::derive(rep_seed, interval as u64, Purpose::FineTune);
            let (tuned, _) = controller::fine_tune(&model, &report, &store, &reserve, &spec.controller, ft_seed)?;
            model = tuned;
            controller::deploy(&model, &mut adapter);
            controller.mark_fine_tuned(interval);
            finetune_events += 1;
        }
    }

    Ok(ArmResult { arm, errors, finetune_events, selections, decisions: controller.log().to_vec(), ledger })
}

/// All requested arms on one replication's shared stream.
pub fn run_replication(ctx: &RunContext, arms: &[Arm], rep: usize, base_seed: u64) -> Result<Vec<ArmResult>> {
    let rep_seed = replication_seed(base_seed, rep);
    let stream = replication_stream(&ctx.spec, rep_seed);
    arms.iter().map(|&arm| run_arm(ctx, arm, rep_seed, &stream)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArmSummary {
    pub arm: Arm,
    pub mean_error: Vec<f64>,
    pub std_error: Vec<f64>,
    pub finetune_events: usize,
    /// Mean over replications of the error averaged over shifted intervals.
    pub shifted_mean_error: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub scenario: String,
    pub n_reps: usize,
    pub base_seed: u64,
    pub shifted_intervals: Vec<u32>,
    pub arms: Vec<ArmSummary>,
    /// Mean windowing success per interval (TTA+SAF arm only).
    pub selection_success: Option<Vec<f64>>,
    pub finetune_events_total: usize,
    /// Largest number of fine-tunes in a single replication.
    pub finetune_events_max: usize,
    pub budget_violations: usize,
    pub offline_over_saf: Option<f64>,
    pub tta_over_saf: Option<f64>,
}

impl AggregateReport {
    pub fn arm(&self, arm: Arm) -> Option<&ArmSummary> {
        self.arms.iter().find(|a| a.arm == arm)
    }
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn in_order<T: Send>(n_reps: usize, f: impl Fn(usize) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
    // Collecting an indexed parallel iterator preserves replication order.
    (0..n_reps).into_par_iter().map(f).collect()
}

/// Runs `n_reps` replications (in parallel on the current rayon pool) and
/// folds them in replication order.
pub fn replicate(ctx: &RunContext, arms: &[Arm], n_reps: usize, base_seed: u64) -> Result<AggregateReport> {
    let runs = replicate_runs(ctx, arms, n_reps, base_seed)?;
    Ok(aggregate(&ctx.spec, arms, &runs, base_seed))
}

/// Per-replication results, in replication order.
pub fn replicate_runs(ctx: &RunContext, arms: &[Arm], n_reps: usize, base_seed: u64) -> Result<Vec<Vec<ArmResult>>> {
    if n_reps == 0 {
        return Err(Error::InvalidConfig("n_reps must be >= 1".into()));
    }
    if arms.is_empty() {
        return Err(Error::InvalidConfig("at least one arm is required".into()));
    }
    in_order(n_reps, |r| run_replication(ctx, arms, r, base_seed))
}

pub fn aggregate(spec: &ScenarioSpec, arms: &[Arm], runs: &[Vec<ArmResult>], base_seed: u64) -> AggregateReport {
    let shifted = spec.shifted_intervals();
    let mut summaries = Vec::new();
    let mut budget_violations = 0;
    let mut events_total = 0;
    let mut events_max = 0;
    let mut selection_success = None;
    for (a, &arm) in arms.iter().enumerate() {
        let results: Vec<&ArmResult> = runs.iter().map(|r| &r[a]).collect();
        let (mean_error, std_error) = (0..spec.intervals)
            .map(|k| mean_std(&results.iter().map(|r| r.errors[k]).collect::<Vec<_>>()))
            .unzip();
        let shifted_mean_error = (!shifted.is_empty()).then(|| {
            let per_rep: Vec<f64> = results
                .iter()
                .map(|r| shifted.iter().map(|&i| r.errors[i as usize - 1]).sum::<f64>() / shifted.len() as f64)
                .collect();
            mean_std(&per_rep).0
        });
        let events: usize = results.iter().map(|r| r.finetune_events).sum();
        if arm == Arm::TtaSaf {
            events_total += events;
            events_max = results.iter().map(|r| r.finetune_events).max().unwrap_or(0);
            budget_violations += results.iter().filter(|r| !r.budget_consistent()).count();
            selection_success = Some(
                (0..spec.intervals)
                    .map(|k| mean_std(&results.iter().map(|r| r.selections[k].success_rate).collect::<Vec<_>>()).0)
                    .collect(),
            );
        }
        summaries.push(ArmSummary { arm, mean_error, std_error, finetune_events: events, shifted_mean_error });
    }
    let shifted_of = |arm| summaries.iter().find(|s: &&ArmSummary| s.arm == arm).and_then(|s| s.shifted_mean_error);
    let ratio = |num: Option<f64>, den: Option<f64>| match (num, den) {
        (Some(n), Some(d)) if d > 0.0 => Some(n / d),
        _ => None,
    };
    let saf = shifted_of(Arm::TtaSaf);
    AggregateReport {
        scenario: spec.name.clone(),
        n_reps: runs.len(),
        base_seed,
        shifted_intervals: shifted,
        offline_over_saf: ratio(shifted_of(Arm::Offline), saf),
        tta_over_saf: ratio(shifted_of(Arm::TtaOnly), saf),
        arms: summaries,
        selection_success,
        finetune_events_total: events_total,
        finetune_events_max: events_max,
        budget_violations,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionComparison {
    pub n_reps: usize,
    pub windowing: Vec<f64>,
    pub random: Vec<f64>,
    pub shifted_intervals: Vec<u32>,
}

/// Runs the TTA+SAF pipeline with a windowing and with a random selector
/// on identical streams and averages the per-interval success rates.
pub fn compare_selection(ctx: &RunContext, n_reps: usize, base_seed: u64) -> Result<SelectionComparison> {
    if n_reps == 0 {
        return Err(Error::InvalidConfig("n_reps must be >= 1".into()));
    }
    let with = |strategy| {
        let mut c = ctx.clone();
        c.spec.selector.strategy = strategy;
        c
    };
    let (win, rnd) = (with(Strategy::Windowing), with(Strategy::Random));
    let runs = in_order(n_reps, |r| {
        let rep_seed = replication_seed(base_seed, r);
        let stream = replication_stream(&ctx.spec, rep_seed);
        let w = run_arm(&win, Arm::TtaSaf, rep_seed, &stream)?;
        let x = run_arm(&rnd, Arm::TtaSaf, rep_seed, &stream)?;
        Ok((w, x))
    })?;
    let mean_rate = |pick: &dyn Fn(&(ArmResult, ArmResult)) -> &ArmResult| -> Vec<f64> {
        (0..ctx.spec.intervals)
            .map(|k| mean_std(&runs.iter().map(|r| pick(r).selections[k].success_rate).collect::<Vec<_>>()).0)
            .collect()
    };
    Ok(SelectionComparison {
        n_reps,
        windowing: mean_rate(&|r| &r.0),
        random: mean_rate(&|r| &r.1),
        shifted_intervals: ctx.spec.shifted_intervals(),
    })
}
