mod common;

use common::{runs_strategy, with_success};
use optstop_core::policy::tree::stats_on_trie;
use optstop_core::policy::{delta_value, DEFAULT_NODE_LIMIT};
use optstop_core::{
    brute_force_optimal, build_trie, delta, evaluate_rule, find_stopping_rule, DiscretizedRun,
    FixedThreshold,
};
use proptest::prelude::*;

const LIMIT: usize = 64;

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn search_is_within_epsilon_of_brute_force(runs in with_success(6, 5)) {
        let trie = build_trie(&runs, None).unwrap();
        let bf = brute_force_optimal(&runs, None, LIMIT).unwrap();
        for eps in [0.5, 0.01, 1e-6] {
            let found = find_stopping_rule(&trie, eps).unwrap();
            prop_assert!(found.stats.ratio * (1.0 + eps) >= bf.r_star * (1.0 - 1e-12));
            prop_assert!(found.stats.ratio <= bf.r_star * (1.0 + 1e-12));
            // refinement lands on the optimum whatever epsilon was
            prop_assert!(found.stats.ratio >= bf.r_star * (1.0 - 1e-12));
        }
    }

    #[test]
    fn delta_sign_brackets_best_ratio(runs in with_success(6, 5)) {
        let trie = build_trie(&runs, None).unwrap();
        let r_star = brute_force_optimal(&runs, None, LIMIT).unwrap().r_star;
        prop_assert!(delta_value(&trie, 0.9 * r_star) > 0.0);
        prop_assert!(delta_value(&trie, 1.1 * r_star) < 0.0);
        prop_assert!(delta_value(&trie, r_star).abs() <= 1e-12);
    }

    #[test]
    fn delta_at_zero_and_monotone(runs in runs_strategy(6, 5)) {
        let trie = build_trie(&runs, None).unwrap();
        prop_assert_eq!(delta_value(&trie, 0.0), trie.total_success_mass());
        let grid: Vec<f64> = (0..50).map(|i| i as f64 * 0.05).collect();
        let values: Vec<f64> = grid.iter().map(|&r| delta_value(&trie, r)).collect();
        for w in values.windows(2) {
            prop_assert!(w[1] <= w[0]);
        }
    }

    #[test]
    fn delta_matches_its_maximizer(runs in runs_strategy(6, 5), r in 0.0f64..2.0) {
        let trie = build_trie(&runs, None).unwrap();
        let (value, tree) = delta(&trie, r);
        let on_trie = stats_on_trie(&trie, &tree);
        let played = evaluate_rule(&tree, &runs, None).unwrap();
        prop_assert!(close(on_trie.q, played.q) && close(on_trie.c, played.c));
        prop_assert!(close(value, played.q - r * played.c));
    }

    #[test]
    fn duplicating_runs_changes_nothing(runs in with_success(4, 4)) {
        let doubled: Vec<DiscretizedRun> = runs.iter().chain(runs.iter()).cloned().collect();
        let a = brute_force_optimal(&runs, None, LIMIT).unwrap();
        let b = brute_force_optimal(&doubled, None, LIMIT).unwrap();
        prop_assert!(close(a.r_star, b.r_star));
        let fa = find_stopping_rule(&build_trie(&runs, None).unwrap(), 1e-9).unwrap();
        let fb = find_stopping_rule(&build_trie(&doubled, None).unwrap(), 1e-9).unwrap();
        prop_assert!(close(fa.stats.ratio, fb.stats.ratio));
    }

    #[test]
    fn optimum_dominates_fixed_thresholds(runs in with_success(6, 5)) {
        let bf = brute_force_optimal(&runs, None, LIMIT).unwrap();
        let horizon = runs.iter().map(|r| r.len()).max().unwrap();
        for t in 1..=horizon {
            let fixed = evaluate_rule(&FixedThreshold::new(t).unwrap(), &runs, None).unwrap();
            prop_assert!(fixed.ratio <= bf.r_star * (1.0 + 1e-12));
        }
        let random = evaluate_rule(&FixedThreshold::never(), &runs, None).unwrap();
        prop_assert!(random.ratio <= bf.r_star * (1.0 + 1e-12));
    }

    #[test]
    fn explicit_weights_are_respected(runs in with_success(5, 4), raw in prop::collection::vec(1u32..10, 5)) {
        let raw = &raw[..runs.len()];
        let total: f64 = raw.iter().map(|&x| x as f64).sum();
        let weights: Vec<f64> = raw.iter().map(|&x| x as f64 / total).collect();
        let trie = build_trie(&runs, Some(&weights)).unwrap();
        let bf = brute_force_optimal(&runs, Some(&weights), LIMIT).unwrap();
        let found = find_stopping_rule(&trie, 1e-9).unwrap();
        prop_assert!(found.stats.ratio * (1.0 + 1e-9) >= bf.r_star * (1.0 - 1e-12));
    }
}

#[test]
fn default_node_limit_guards_enumeration() {
    let runs: Vec<DiscretizedRun> = (1..=3u16)
        .map(|b| DiscretizedRun::unit(vec![optstop_core::Token::Bucket(b); 8]))
        .collect();
    assert!(brute_force_optimal(&runs, None, DEFAULT_NODE_LIMIT).is_err());
}
