//! Simulated reliable expert: validates selected predictions, relabels
//! mismatches and tags their distribution shift.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::forge::{nearest_template, render_glyph, ExemplarBank, Image, ShiftKind, ShiftSpec, StreamItem, NUM_CLASSES};
use crate::ledger::LedgerRecord;
use crate::seed::{self, Purpose};
use crate::selector::BudgetState;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Verdict {
    pub item_id: u64,
    pub is_match: bool,
    pub predicted_label: usize,
    pub true_label: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TagMode {
    Provenance,
    Exemplar,
}

impl std::str::FromStr for TagMode {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "provenance" => Ok(Self::Provenance),
            "exemplar" | "nearest-exemplar" => Ok(Self::Exemplar),
            _ => Err(crate::Error::InvalidConfig(format!("unknown oracle mode `{s}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ShiftTag {
    pub spec: ShiftSpec,
    pub method: TagMode,
}

/// Least-squares decomposition `y = alpha * t + beta + r` of an image
/// against a clean template.
#[derive(Clone, Debug)]
struct Decomposition {
    alpha: f64,
    beta: f64,
    rest: Vec<f64>,
}

fn decompose(y: &[f64], t: &[f64]) -> Decomposition {
    let n = y.len() as f64;
    let mt = t.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut cov, mut var) = (0.0, 0.0);
    for (&a, &b) in t.iter().zip(y) {
        cov += (a - mt) * (b - my);
        var += (a - mt) * (a - mt);
    }
    let alpha = if var > 0.0 { cov / var } else { 1.0 };
    let beta = my - alpha * mt;
    let rest = y.iter().zip(t).map(|(&yy, &tt)| yy - alpha * tt - beta).collect();
    Decomposition { alpha, beta, rest }
}

fn residual_energy(y: &[f64], t: &[f64]) -> f64 {
    y.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / y.len() as f64
}

/// Nearest-exemplar shift tagger.
///
/// Every exemplar is decomposed against its own nearest template; the
/// corruption part (`alpha - 1`, `beta`, `r`) is then re-applied to the
/// probe's template so that differing glyph shapes do not dominate the
/// distance. A probe whose own residual is within the 95th percentile of
/// clean residuals, or which is explained better by "no corruption" than by
/// any exemplar, is tagged `(None, 0)`.
#[derive(Clone, Debug)]
pub struct ExemplarTagger {
    exemplars: Vec<(ShiftSpec, Decomposition)>,
    clean_threshold: f64,
}

pub const CLEAN_CALIBRATION: usize = 200;

impl ExemplarTagger {
    pub fn new(bank: &ExemplarBank, calibration_seed: u64) -> Self {
        let exemplars = bank
            .groups()
            .flat_map(|(spec, imgs)| {
                imgs.iter().map(move |im| {
                    let (_, t) = nearest_template(im);
                    (spec, decompose(im.pixels(), t.pixels()))
                })
            })
            .collect();
        let mut clean: Vec<f64> = (0..CLEAN_CALIBRATION as u64)
            .map(|i| {
                let s = seed::derive(calibration_seed, i, Purpose::CleanReserve);
                let im = render_glyph((i % NUM_CLASSES as u64) as usize, s);
                let (_, t) = nearest_template(&im);
                residual_energy(im.pixels(), t.pixels())
            })
            .collect();
        clean.sort_by(f64::total_cmp);
        let rank = (0.95 * clean.len() as f64).ceil() as usize;
        Self { exemplars, clean_threshold: clean[rank - 1] }
    }

    pub fn clean_threshold(&self) -> f64 {
        self.clean_threshold
    }

    pub fn tag(&self, image: &Image) -> ShiftSpec {
        let (_, t) = nearest_template(image);
        let (y, t) = (image.pixels(), t.pixels());
        let own = residual_energy(y, t);
        if own <= self.clean_threshold {
            return ShiftSpec::NONE;
        }
        let mut best = (own, ShiftSpec::NONE);
        for (spec, d) in &self.exemplars {
            let mut dist = 0.0;
            for j in 0..y.len() {
                let predicted = t[j] * d.alpha + d.beta + d.rest[j];
                dist += (y[j] - predicted) * (y[j] - predicted);
            }
            dist /= y.len() as f64;
            // Strict comparison keeps the earliest (kind, severity) on ties.
            if dist < best.0 {
                best = (dist, *spec);
            }
        }
        best.1
    }
}

#[derive(Clone, Debug)]
pub enum Expert {
    Provenance,
    Exemplar(ExemplarTagger),
}

impl Expert {
    pub fn mode(&self) -> TagMode {
        match self {
            Expert::Provenance => TagMode::Provenance,
            Expert::Exemplar(_) => TagMode::Exemplar,
        }
    }

    pub fn validate(&self, item: &StreamItem, predicted_label: usize) -> Verdict {
        let true_label = item.provenance().true_label;
        Verdict { item_id: item.id, is_match: predicted_label == true_label, predicted_label, true_label }
    }

    pub fn tag_shift(&self, item: &StreamItem) -> ShiftTag {
        let spec = match self {
            Expert::Provenance => item.provenance().shift,
            Expert::Exemplar(tagger) => tagger.tag(&item.image),
        };
        ShiftTag { spec, method: self.mode() }
    }

    /// Charges one budget unit and returns the verdict with its ledger
    /// record. Matches are recorded too, tagged `(None, 0)`.
    pub fn process_selected(
        &self,
        item: &StreamItem,
        predicted_label: usize,
        budget: &mut BudgetState,
    ) -> Result<(Verdict, LedgerRecord)> {
        budget.charge()?;
        let verdict = self.validate(item, predicted_label);
        let spec = if verdict.is_match { ShiftSpec::NONE } else { self.tag_shift(item).spec };
        let record = LedgerRecord {
            interval: item.interval,
            item_id: item.id,
            predicted_label,
            true_label: verdict.true_label,
            is_match: verdict.is_match,
            kind: spec.kind(),
            severity: spec.severity(),
            image_ref: item.id,
        };
        debug_assert!(record.kind != ShiftKind::None || record.severity == 0);
        Ok((verdict, record))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forge::{corrupt, render_glyph, Provenance};
    use crate::Error;

    fn item(shift: ShiftSpec, label: usize) -> StreamItem {
        let img = corrupt(&render_glyph(label, 11), shift, 12);
        StreamItem::new(9, 2, img, Provenance { true_label: label, shift })
    }

    #[test]
    fn verdicts() {
        let it = item(ShiftSpec::NONE, 3);
        assert!(Expert::Provenance.validate(&it, 3).is_match);
        assert!(!Expert::Provenance.validate(&it, 4).is_match);
    }

    #[test]
    fn process_charges_and_records() {
        let fog5 = ShiftSpec::new(ShiftKind::Fog, 5).unwrap();
        let snow5 = ShiftSpec::new(ShiftKind::Snow, 5).unwrap();
        let mut b = BudgetState { allocated: 24, consumed: 23 };
        let (v, r) = Expert::Provenance.process_selected(&item(fog5, 3), 3, &mut b).unwrap();
        assert!(v.is_match);
        assert_eq!(b.consumed, 24);
        assert_eq!((r.kind, r.severity), (ShiftKind::None, 0));
        assert!(matches!(
            Expert::Provenance.process_selected(&item(fog5, 3), 3, &mut b),
            Err(Error::BudgetOverrun { .. })
        ));

        let mut b = BudgetState::new(24);
        let (v, r) = Expert::Provenance.process_selected(&item(snow5, 7), 1, &mut b).unwrap();
        assert!(!v.is_match);
        assert_eq!((r.kind, r.severity, r.true_label, r.predicted_label), (ShiftKind::Snow, 5, 7, 1));
        assert_eq!(r.image_ref, 9);
    }

    #[test]
    fn provenance_tag_passes_through() {
        let fog5 = ShiftSpec::new(ShiftKind::Fog, 5).unwrap();
        let tag = Expert::Provenance.tag_shift(&item(fog5, 0));
        assert_eq!(tag.spec, fog5);
        assert_eq!(tag.method, TagMode::Provenance);
    }
}
