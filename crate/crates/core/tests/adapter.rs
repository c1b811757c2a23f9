mod common;

use augtta::adapter::{Adapter, AdapterConfig};
use augtta::forge::{corrupt, render_glyph, ShiftKind, ShiftSpec};
use augtta::{GradScope, Loss, Mat, NormMode};

fn shifted_batch(seed: u64, n: usize) -> (Mat, Vec<usize>) {
    let kind = ShiftKind::CORRUPTIONS[(seed % 5) as usize];
    let shift = ShiftSpec::new(kind, 1 + (seed / 5 % 5) as u8).unwrap();
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let id = seed * 1000 + i as u64;
            corrupt(&render_glyph(i % 10, id), shift, id).pixels().to_vec()
        })
        .collect();
    (Mat::from_rows(&rows), (0..n).map(|i| i % 10).collect())
}

#[test]
fn only_norm_affine_parameters_ever_move() {
    let base = common::base_model();
    let mut a = Adapter::new(base, AdapterConfig::default()).unwrap();
    for s in 0..500 {
        a.adapt_and_predict(&shifted_batch(s, 16).0).unwrap();
    }
    let m = a.model();
    assert_eq!(a.batches_seen(), 500);
    for (x, y) in [(m.w1().as_slice(), base.w1().as_slice()), (m.b1(), base.b1()), (m.w2().as_slice(), base.w2().as_slice()), (m.b2(), base.b2())] {
        assert!(x.iter().zip(y).all(|(p, q)| p.to_bits() == q.to_bits()));
    }
    assert_eq!(m.running_mean(), base.running_mean());
    assert_eq!(m.running_var(), base.running_var());
    assert_ne!(m.gamma(), base.gamma());

    let all = |x: &augtta::Model| [x.weight_vector(), x.gamma().to_vec(), x.beta().to_vec()].concat();
    let changed = all(m).iter().zip(all(base)).filter(|(p, q)| p.to_bits() != q.to_bits()).count();
    assert!(changed > 0);
    let (total, _) = m.param_counts();
    assert!((changed as f64 / total as f64) < 0.01, "{changed}/{total}");
}

/// Entropy of the same batch, same batch statistics, after one small step.
#[test]
fn single_step_descends_on_most_shifted_batches() {
    let base = common::base_model();
    let cfg = AdapterConfig { lr: 1e-4, ..Default::default() };
    let descended = (0..100u64)
        .filter(|&s| {
            let (batch, _) = shifted_batch(10_000 + s, 16);
            let before = base.loss(&batch, NormMode::BatchStats, Loss::Entropy).unwrap();
            let mut a = Adapter::new(base, cfg.clone()).unwrap();
            a.adapt_and_predict(&batch).unwrap();
            let after = a.model().loss(&batch, NormMode::BatchStats, Loss::Entropy).unwrap();
            after <= before + 1e-8
        })
        .count();
    assert!(descended >= 95, "{descended}/100");
}

#[test]
fn entropy_gradient_is_restricted_to_affine() {
    let base = common::base_model();
    let (batch, _) = shifted_batch(3, 16);
    let g = base.backward(&batch, NormMode::BatchStats, Loss::Entropy, GradScope::NormAffineOnly).unwrap();
    assert!(g.weights.is_none());
    assert_eq!(g.gamma.len() + g.beta.len(), 1024);
}

#[test]
fn tta_beats_frozen_model_on_severe_fog() {
    let base = common::base_model();
    let fog = ShiftSpec::new(ShiftKind::Fog, 5).unwrap();
    let rows: Vec<Vec<f64>> = (0..240u64).map(|i| corrupt(&render_glyph((i % 10) as usize, 50_000 + i), fog, i).pixels().to_vec()).collect();
    let labels: Vec<usize> = (0..240).map(|i| i % 10).collect();
    let frozen = base.forward(&Mat::from_rows(&rows), NormMode::RunningStats).unwrap();
    let offline_err = frozen.predicted_labels.iter().zip(&labels).filter(|(p, l)| p != l).count();
    let mut a = Adapter::new(base, AdapterConfig::default()).unwrap();
    let mut tta_err = 0;
    for (chunk, lab) in rows.chunks(16).zip(labels.chunks(16)) {
        let p = a.adapt_and_predict(&Mat::from_rows(chunk)).unwrap();
        tta_err += p.predicted_labels.iter().zip(lab).filter(|(p, l)| p != l).count();
    }
    assert!(tta_err < offline_err, "tta {tta_err} offline {offline_err}");
}

#[test]
fn reset_discards_adaptation() {
    let base = common::base_model();
    let mut a = Adapter::new(base, AdapterConfig::default()).unwrap();
    let (batch, _) = shifted_batch(1, 16);
    let fresh = a.predict(&batch).unwrap();
    for s in 0..20 {
        a.adapt_and_predict(&shifted_batch(s, 16).0).unwrap();
    }
    assert_ne!(a.predict(&batch).unwrap(), fresh);
    a.reset(base);
    assert_eq!(a.batches_seen(), 0);
    assert_eq!(a.predict(&batch).unwrap(), fresh);
}
