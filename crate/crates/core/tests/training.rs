mod common;

use augtta::base::{train_base_model, BaseTrainingConfig};
use augtta::forge::{corrupt, gen_base_dataset, Image, ShiftKind, ShiftSpec};
use augtta::model::Mlp;
use augtta::{ArchSpec, Dataset, Mat, TrainConfig};

#[test]
fn default_training_generalizes_to_held_out_glyphs() {
    let model = common::base_model();
    let heldout = gen_base_dataset(0xD00D, 100);
    let err = model.evaluate(&heldout).unwrap();
    assert!(err <= 0.05, "clean held-out error {err}");
}

#[test]
fn retraining_with_same_config_is_byte_identical() {
    let cfg = BaseTrainingConfig { train_per_class: 20, heldout_per_class: 5, epochs: 2, ..Default::default() };
    let (a, ra) = train_base_model(&cfg, 11).unwrap();
    let (b, rb) = train_base_model(&cfg, 11).unwrap();
    assert_eq!(a.to_bytes(), b.to_bytes());
    assert_eq!(ra, rb);
    let (c, _) = train_base_model(&cfg, 12).unwrap();
    assert_ne!(a.to_bytes(), c.to_bytes());
}

#[test]
fn zero_epochs_leaves_the_model_untouched() {
    let data = gen_base_dataset(3, 5);
    let mut m = Mlp::<f64>::init(ArchSpec::default(), 1);
    let before = m.clone();
    m.train(&data, &TrainConfig { epochs: 0, ..Default::default() }).unwrap();
    assert_eq!(m, before);
}

fn corrupted_set(base: &Dataset, shift: ShiftSpec) -> Dataset {
    let rows: Vec<Vec<f64>> = (0..base.len())
        .map(|i| corrupt(&Image::new(base.inputs.row(i).to_vec()).unwrap(), shift, 77 + i as u64).pixels().to_vec())
        .collect();
    Dataset::new(Mat::from_rows(&rows), base.labels.clone()).unwrap()
}

/// Offline error rises with severity (slack 0.02 per step), severity 1 costs
/// at most 0.1, and severity 5 pushes error above 0.5, for every kind.
#[test]
fn offline_degradation_is_monotone_in_severity() {
    let model = common::base_model();
    let test = gen_base_dataset(0xBEEF, 200);
    let clean = model.evaluate(&test).unwrap();
    for kind in ShiftKind::CORRUPTIONS {
        let mut errs = vec![clean];
        for s in 1..=5 {
            errs.push(model.evaluate(&corrupted_set(&test, ShiftSpec::new(kind, s).unwrap())).unwrap());
        }
        for w in errs.windows(2) {
            assert!(w[1] >= w[0] - 0.02, "{kind}: {errs:?}");
        }
        assert!(errs[1] - errs[0] <= 0.1, "{kind} s1: {errs:?}");
        assert!(errs[5] > 0.5, "{kind} s5: {errs:?}");
    }
}
