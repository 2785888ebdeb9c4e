use gossip_bandits::env::{
    assign_agents, best_arm_covered, build_instance, is_partition, max_sticky_size, sample_sticky_sets, sticky_size_for,
    MeanRange, StickyConfig, StickyMode,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn sticky_size_formula() {
    assert_eq!(sticky_size_for(5, 20, 25, 1.0, 0.1).unwrap(), 16);
    assert!(sticky_size_for(5, 20, 25, 1.0, 0.0).is_err());
    assert!(sticky_size_for(5, 20, 25, 1.0, 1.0).is_err());
    assert_eq!(max_sticky_size(20, 5, None), 18);
    assert_eq!(max_sticky_size(20, 5, Some(5)), 17);
    assert_eq!(max_sticky_size(20, 5, Some(2)), 15);
}

// Coverage fails when some group misses its best arm in every member's set.
fn exact_failure(k: usize, s: usize, per_group: usize, m: usize) -> f64 {
    let miss = 1.0 - s as f64 / k as f64;
    1.0 - (1.0 - miss.powi(per_group as i32)).powi(m as i32)
}

#[test]
fn random_failure_rate_matches_exact_probability() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let inst = build_instance(5, 20, MeanRange::unit(), &mut rng).unwrap();
    let assign = assign_agents(25, 5, None, None, &mut rng).unwrap();
    let trials = 20_000;
    for s in [4usize, 8] {
        let cfg = StickyConfig { size: s, gamma: 0.1, mode: StickyMode::RandomUniform };
        let fails = (0..trials)
            .filter(|_| !sample_sticky_sets(&inst, &assign, &cfg, &mut rng).unwrap().assumption_holds)
            .count();
        let p = exact_failure(20, s, 5, 5);
        let rate = fails as f64 / trials as f64;
        let sigma = (p * (1.0 - p) / trials as f64).sqrt();
        assert!((rate - p).abs() <= 4.0 * sigma, "S={s}: rate {rate} exact {p}");
    }
}

#[test]
fn random_sets_have_distinct_arms() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let inst = build_instance(2, 10, MeanRange::unit(), &mut rng).unwrap();
    let assign = assign_agents(6, 2, None, None, &mut rng).unwrap();
    let cfg = StickyConfig { size: 5, gamma: 0.1, mode: StickyMode::RandomUniform };
    for _ in 0..200 {
        let draw = sample_sticky_sets(&inst, &assign, &cfg, &mut rng).unwrap();
        for set in &draw.sets {
            let mut d = set.clone();
            d.sort_unstable();
            d.dedup();
            assert_eq!(d.len(), 5);
            assert!(d.iter().all(|&a| a < 10));
        }
        assert_eq!(draw.assumption_holds, best_arm_covered(&inst, &assign, &draw.sets));
    }
}

#[test]
fn partition_mode_covers_each_group() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let inst = build_instance(5, 20, MeanRange::unit(), &mut rng).unwrap();
    let assign = assign_agents(25, 5, None, Some(5), &mut rng).unwrap();
    let cfg = StickyConfig { size: 4, gamma: 0.1, mode: StickyMode::Partition };
    let draw = sample_sticky_sets(&inst, &assign, &cfg, &mut rng).unwrap();
    assert!(is_partition(20, &assign, &draw.sets));
    assert!(draw.assumption_holds);

    let bad = StickyConfig { size: 3, gamma: 0.1, mode: StickyMode::Partition };
    assert!(sample_sticky_sets(&inst, &assign, &bad, &mut rng).is_err());
}
