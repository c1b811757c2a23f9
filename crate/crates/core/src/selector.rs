//! Budgeted, irrevocable on-the-fly selection of low-confidence items.

use std::collections::VecDeque;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::{self, Rng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Windowing,
    Random,
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "windowing" => Ok(Self::Windowing),
            "random" => Ok(Self::Random),
            _ => Err(Error::InvalidConfig(format!("unknown selector strategy `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectorConfig {
    pub strategy: Strategy,
    pub budget_fraction: f64,
    pub window_len: usize,
    pub percentile: f64,
    pub pacing_slack: usize,
}

impl Default for SelectorConfig {
    fn default() -> Self {
        Self { strategy: Strategy::Windowing, budget_fraction: 0.10, window_len: 60, percentile: 0.10, pacing_slack: 4 }
    }
}

impl SelectorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.budget_fraction > 0.0 && self.budget_fraction <= 1.0) {
            return Err(Error::InvalidConfig("budget_fraction must lie in (0, 1]".into()));
        }
        if self.window_len < 2 {
            return Err(Error::InvalidConfig("window_len must be >= 2".into()));
        }
        if !(self.percentile > 0.0 && self.percentile < 1.0) {
            return Err(Error::InvalidConfig("percentile must lie in (0, 1)".into()));
        }
        Ok(())
    }

    /// Units available per interval.
    pub fn allocation(&self, items_per_interval: usize) -> usize {
        // Guard against 0.1 * 240 = 24.000000000000004.
        let raw = self.budget_fraction * items_per_interval as f64;
        let rounded = raw.round();
        if (raw - rounded).abs() < 1e-9 { rounded as usize } else { raw.ceil() as usize }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BudgetState {
    pub allocated: usize,
    pub consumed: usize,
}

impl BudgetState {
    pub fn new(allocated: usize) -> Self {
        Self { allocated, consumed: 0 }
    }

    pub fn remaining(&self) -> usize {
        self.allocated - self.consumed
    }

    pub fn charge(&mut self) -> Result<()> {
        if self.consumed >= self.allocated {
            return Err(Error::BudgetOverrun { consumed: self.consumed, allocated: self.allocated });
        }
        self.consumed += 1;
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Decision {
    Select,
    Skip,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionSummary {
    pub selected_ids: Vec<u64>,
    pub consumed: usize,
    pub allocated: usize,
}

#[derive(Clone, Debug)]
pub struct Selector {
    config: SelectorConfig,
    items_per_interval: usize,
    budget: BudgetState,
    window: VecDeque<f64>,
    items_seen: usize,
    selected: Vec<u64>,
    rng: Rng,
}

impl Selector {
    /// `seed` drives the random strategy only.
    pub fn new(config: SelectorConfig, items_per_interval: usize, seed: u64) -> Result<Self> {
        config.validate()?;
        if items_per_interval == 0 {
            return Err(Error::InvalidConfig("items_per_interval must be >= 1".into()));
        }
        let allocated = config.allocation(items_per_interval);
        Ok(Self {
            window: VecDeque::with_capacity(config.window_len),
            config,
            items_per_interval,
            budget: BudgetState::new(allocated),
            items_seen: 0,
            selected: Vec::new(),
            rng: seed::rng(seed),
        })
    }

    pub fn config(&self) -> &SelectorConfig {
        &self.config
    }

    pub fn budget(&self) -> BudgetState {
        self.budget
    }

    pub fn items_seen(&self) -> usize {
        self.items_seen
    }

    pub fn window(&self) -> &VecDeque<f64> {
        &self.window
    }

    /// Nearest-rank quantile of the buffered confidences; `None` when empty.
    pub fn threshold(&self) -> Option<f64> {
        if self.window.is_empty() {
            return None;
        }
        let mut sorted: Vec<f64> = self.window.iter().copied().collect();
        sorted.sort_by(f64::total_cmp);
        let rank = (self.config.percentile * sorted.len() as f64).ceil().max(1.0) as usize;
        Some(sorted[rank - 1])
    }

    fn pacing_allowance(&self) -> usize {
        let alloc = self.budget.allocated;
        (alloc * self.items_seen).div_ceil(self.items_per_interval) + self.config.pacing_slack
    }

    pub fn offer(&mut self, item_id: u64, confidence: f64) -> Result<Decision> {
        if self.items_seen >= self.items_per_interval {
            return Err(Error::IntervalClosed(self.items_seen));
        }
        self.items_seen += 1;
        let has_budget = self.budget.consumed < self.budget.allocated;
        let select = match self.config.strategy {
            Strategy::Windowing => {
                let below = confidence <= self.threshold().unwrap_or(0.5);
                if self.window.len() == self.config.window_len {
                    self.window.pop_front();
                }
                self.window.push_back(confidence);
                has_budget && self.budget.consumed < self.pacing_allowance() && below
            }
            Strategy::Random => {
                // Draw unconditionally so the sequence does not depend on budget state.
                let u: f64 = self.rng.random();
                has_budget && u < self.config.budget_fraction
            }
        };
        if select {
            self.budget.consumed += 1;
            self.selected.push(item_id);
            Ok(Decision::Select)
        } else {
            Ok(Decision::Skip)
        }
    }

    pub fn end_interval(&mut self) -> SelectionSummary {
        self.window.clear();
        self.items_seen = 0;
        let summary = SelectionSummary {
            selected_ids: std::mem::take(&mut self.selected),
            consumed: self.budget.consumed,
            allocated: self.budget.allocated,
        };
        self.budget.consumed = 0;
        summary
    }
}

/// Fraction of the `allocated` lowest-confidence items (ties by lower id)
/// that were selected.
pub fn selection_success_rate(selected_ids: &[u64], confidences: &[(u64, f64)], allocated: usize) -> Result<f64> {
    if allocated == 0 {
        return Err(Error::ZeroAllocation);
    }
    let mut ranked = confidences.to_vec();
    ranked.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    let bottom: std::collections::HashSet<u64> = ranked.iter().take(allocated).map(|&(id, _)| id).collect();
    let mut hits: Vec<u64> = selected_ids.iter().copied().filter(|id| bottom.contains(id)).collect();
    hits.sort_unstable();
    hits.dedup();
    Ok(hits.len() as f64 / allocated as f64)
}
