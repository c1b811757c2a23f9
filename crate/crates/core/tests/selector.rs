use augtta::selector::{selection_success_rate, BudgetState, Decision, Selector, SelectorConfig, Strategy};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};

fn run(cfg: &SelectorConfig, seed: u64, confs: &[f64]) -> Vec<u64> {
    let mut s = Selector::new(cfg.clone(), confs.len(), seed).unwrap();
    for (i, &c) in confs.iter().enumerate() {
        s.offer(i as u64, c).unwrap();
    }
    s.end_interval().selected_ids
}

/// 24 low items, one at a random offset in each block of ten; the rest are
/// high and untied (exactly tied highs would pass the `<=` test whenever the
/// window holds fewer lows than the quantile rank).
fn low_stream(seed: u64) -> (Vec<f64>, Vec<u64>) {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut confs: Vec<f64> = (0..240).map(|_| rng.random_range(0.85..0.95)).collect();
    let low: Vec<u64> = (0..24).map(|k| (k * 10 + rng.random_range(0..10)) as u64).collect();
    for &i in &low {
        confs[i as usize] = 0.01;
    }
    (confs, low)
}

#[test]
fn windowing_finds_the_low_confidence_items() {
    let cfg = SelectorConfig::default();
    let hits: Vec<usize> = (0..50)
        .map(|seed| {
            let (confs, low) = low_stream(seed);
            run(&cfg, seed, &confs).iter().filter(|id| low.contains(id)).count()
        })
        .collect();
    let mean = hits.iter().sum::<usize>() as f64 / hits.len() as f64;
    assert!(mean >= 20.0, "{hits:?}");
    assert!(hits.iter().all(|&h| h >= 16), "{hits:?}");
}

#[test]
fn random_strategy_hits_the_hypergeometric_mean() {
    let cfg = SelectorConfig { strategy: Strategy::Random, ..Default::default() };
    let (confs, _) = low_stream(3);
    let pairs: Vec<(u64, f64)> = confs.iter().enumerate().map(|(i, &c)| (i as u64, c)).collect();
    let rates: Vec<f64> = (0..100)
        .map(|seed| selection_success_rate(&run(&cfg, seed, &confs), &pairs, 24).unwrap())
        .collect();
    let mean = rates.iter().sum::<f64>() / rates.len() as f64;
    assert!((mean - 0.10).abs() <= 0.05, "{mean}");
}

#[test]
fn constant_stream_is_capped_by_pacing() {
    let cfg = SelectorConfig::default();
    let mut s = Selector::new(cfg.clone(), 240, 0).unwrap();
    for i in 0..240usize {
        s.offer(i as u64, 0.99).unwrap();
        let allowance = (24 * (i + 1)).div_ceil(240) + cfg.pacing_slack;
        assert!(s.budget().consumed <= allowance.min(24));
    }
}

#[test]
fn budget_state_rejects_overrun() {
    let mut b = BudgetState::new(2);
    b.charge().unwrap();
    b.charge().unwrap();
    assert!(b.charge().is_err());
    assert_eq!(b.remaining(), 0);
}

fn strategy() -> impl proptest::strategy::Strategy<Value = Strategy> {
    prop_oneof![Just(Strategy::Windowing), Just(Strategy::Random)]
}

proptest! {
    #[test]
    fn never_exceeds_allocation(
        confs in prop::collection::vec(0.0f64..1.0, 1..400),
        frac in 0.01f64..1.0,
        strat in strategy(),
        seed in any::<u64>(),
    ) {
        let cfg = SelectorConfig { strategy: strat, budget_fraction: frac, ..Default::default() };
        let alloc = cfg.allocation(confs.len());
        let picked = run(&cfg, seed, &confs);
        prop_assert!(picked.len() <= alloc);
    }

    /// Decisions on a prefix do not depend on what comes after it.
    #[test]
    fn decisions_are_irrevocable_and_deterministic(
        confs in prop::collection::vec(0.0f64..1.0, 2..300),
        cut in 0.0f64..1.0,
        strat in strategy(),
        seed in any::<u64>(),
    ) {
        let cfg = SelectorConfig { strategy: strat, ..Default::default() };
        let n = confs.len();
        let k = ((n as f64 * cut) as usize).max(1);
        let mut full = Selector::new(cfg.clone(), n, seed).unwrap();
        let mut prefix = Selector::new(cfg.clone(), n, seed).unwrap();
        let a: Vec<Decision> = confs.iter().enumerate().map(|(i, &c)| full.offer(i as u64, c).unwrap()).collect();
        let b: Vec<Decision> = confs[..k].iter().enumerate().map(|(i, &c)| prefix.offer(i as u64, c).unwrap()).collect();
        prop_assert_eq!(&a[..k], &b[..]);
        prop_assert_eq!(run(&cfg, seed, &confs), run(&cfg, seed, &confs));
    }
}
