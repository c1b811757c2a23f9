use std::collections::HashSet;

use augtta::forge::{
    build_exemplar_bank, gen_base_dataset, gen_stream, render_glyph, ShiftKind, ShiftSpec, StreamPlan, NUM_CLASSES,
};
use augtta::scenario::{replication_seed, replication_stream, scenario_1, scenario_2};

fn image_keys(rows: impl Iterator<Item = Vec<f64>>) -> HashSet<Vec<u64>> {
    rows.map(|r| r.iter().map(|v| v.to_bits()).collect()).collect()
}

#[test]
fn base_dataset_size_balance_and_determinism() {
    let d = gen_base_dataset(5, 500);
    assert_eq!(d.len(), 5000);
    for c in 0..NUM_CLASSES {
        assert_eq!(d.labels.iter().filter(|&&l| l == c).count(), 500);
    }
    assert_eq!(d, gen_base_dataset(5, 500));
}

#[test]
fn disjoint_seeds_give_disjoint_images() {
    let a = gen_base_dataset(1, 100);
    let b = gen_base_dataset(2, 100);
    let ka = image_keys((0..a.len()).map(|i| a.inputs.row(i).to_vec()));
    let kb = image_keys((0..b.len()).map(|i| b.inputs.row(i).to_vec()));
    assert_eq!(ka.len(), a.len());
    assert!(ka.is_disjoint(&kb));
}

#[test]
fn scenario_streams_follow_their_schedules() {
    let s2 = scenario_2();
    let items = replication_stream(&s2, 9);
    assert_eq!(items.len(), 1680);
    for (k, chunk) in items.chunks(240).enumerate() {
        assert!(chunk.iter().all(|it| it.interval == k as u32 + 1));
        assert!(chunk.iter().all(|it| it.provenance().shift == s2.schedule[k]));
    }
    let fog5 = ShiftSpec::new(ShiftKind::Fog, 5).unwrap();
    assert!(items[240..720].iter().all(|it| it.provenance().shift == fog5));
    assert!(items.iter().enumerate().all(|(i, it)| it.id == i as u64));
    assert!(items.iter().all(|it| it.image.pixels().iter().all(|v| (0.0..=1.0).contains(v))));

    let s1 = replication_stream(&scenario_1(), 9);
    assert!(s1.iter().all(|it| it.provenance().shift == ShiftSpec::NONE));
}

#[test]
fn streams_are_deterministic_and_replications_independent() {
    let s2 = scenario_2();
    let a = replication_stream(&s2, replication_seed(0, 0));
    assert_eq!(a, replication_stream(&s2, replication_seed(0, 0)));
    let b = replication_stream(&s2, replication_seed(0, 1));
    let ka = image_keys(a.iter().map(|it| it.image.pixels().to_vec()));
    let kb = image_keys(b.iter().map(|it| it.image.pixels().to_vec()));
    assert!(ka.is_disjoint(&kb));
}

#[test]
fn partial_shift_probability_mixes_clean_items() {
    let fog = ShiftSpec::new(ShiftKind::Fog, 3).unwrap();
    let plan = StreamPlan {
        items_per_interval: 400,
        schedule: vec![fog],
        shift_probability: 0.5,
        corruption: Default::default(),
    };
    let shifted = gen_stream(&plan, 4).iter().filter(|it| it.provenance().shift == fog).count();
    assert!((150..=250).contains(&shifted), "{shifted}");
}

#[test]
fn exemplar_bank_is_complete_and_deterministic() {
    let bank = build_exemplar_bank(3);
    assert_eq!(bank.len(), 25);
    assert!(bank.groups().all(|(s, imgs)| s.is_shifted() && imgs.len() == 20));
    assert_eq!(bank, build_exemplar_bank(3));
    assert_ne!(bank, build_exemplar_bank(4));
}

#[test]
fn nearest_template_classifies_jittered_glyphs() {
    let hits = (0..1000u64)
        .filter(|&i| {
            let class = (i % 10) as usize;
            augtta::forge::nearest_template(&render_glyph(class, 10_000 + i)).0 == class
        })
        .count();
    assert!(hits >= 950, "{hits}/1000");
}
