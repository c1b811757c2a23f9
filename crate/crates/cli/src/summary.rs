use augtta::scenario::{AggregateReport, ArmSummary, SelectionComparison};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionTable {
    pub windowing: Vec<f64>,
    pub random: Vec<f64>,
}

impl From<&SelectionComparison> for SelectionTable {
    fn from(c: &SelectionComparison) -> Self {
        Self { windowing: c.windowing.clone(), random: c.random.clone() }
    }
}

/// JSON summary written by `replicate` and `compare-selection` and read
/// back by `report`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub command: String,
    pub scenario: String,
    pub n_reps: usize,
    pub base_seed: u64,
    pub intervals: usize,
    pub shifted_intervals: Vec<u32>,
    pub arms: Vec<ArmSummary>,
    pub finetune_events_total: usize,
    pub finetune_events_max: usize,
    pub budget_violations: usize,
    pub offline_over_saf: Option<f64>,
    pub tta_over_saf: Option<f64>,
    pub norm_affine_fraction: f64,
    pub selection: Option<SelectionTable>,
    pub config: RunConfig,
}

impl Summary {
    pub fn from_report(
        command: &str,
        report: Option<&AggregateReport>,
        selection: Option<&SelectionComparison>,
        norm_affine_fraction: f64,
        config: &RunConfig,
    ) -> Self {
        Self {
            command: command.into(),
            scenario: config.scenario.name.clone(),
            n_reps: config.reps,
            base_seed: config.seed,
            intervals: config.scenario.intervals,
            shifted_intervals: config.scenario.shifted_intervals(),
            arms: report.map(|r| r.arms.clone()).unwrap_or_default(),
            finetune_events_total: report.map_or(0, |r| r.finetune_events_total),
            finetune_events_max: report.map_or(0, |r| r.finetune_events_max),
            budget_violations: report.map_or(0, |r| r.budget_violations),
            offline_over_saf: report.and_then(|r| r.offline_over_saf),
            tta_over_saf: report.and_then(|r| r.tta_over_saf),
            norm_affine_fraction,
            selection: selection.map(SelectionTable::from),
            config: config.clone(),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        for a in &self.arms {
            if a.mean_error.len() != self.intervals || a.std_error.len() != self.intervals {
                return Err(format!("arm {} has {} intervals, expected {}", a.arm, a.mean_error.len(), self.intervals));
            }
        }
        if let Some(s) = &self.selection {
            if s.windowing.len() != self.intervals || s.random.len() != self.intervals {
                return Err("selection series length differs from interval count".into());
            }
        }
        Ok(())
    }
}
