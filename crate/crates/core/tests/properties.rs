use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use recourse_core::causal::CausalRuleSet;
use recourse_core::cost::{compute_weighted_lp, standard_cost, Norm};
use recourse_core::rules::DecisionRuleSet;
use recourse_core::schema::{changed_indices, state_diff, Dataset, Weights};
use recourse_core::search::{search, CostMode, SearchOutcome, SearchParams};
use recourse_core::synth::{random_world, uniform_rows, WorldParams};

fn config() -> ProptestConfig {
    ProptestConfig {
        cases: 64,
        ..ProptestConfig::default()
    }
}

fn norm() -> impl Strategy<Value = Norm> {
    prop_oneof![Just(Norm::L0), Just(Norm::L1), Just(Norm::L2)]
}

fn summary(o: &SearchOutcome) -> Vec<(String, u64)> {
    o.results()
        .iter()
        .map(|r| (r.state.to_string(), r.cost.total.to_bits()))
        .collect()
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn diff_is_symmetric(seed in any::<u64>(), a in 0usize..40, b in 0usize..40) {
        let w = random_world(seed, &WorldParams { rows: 40, ..WorldParams::default() });
        let rows = w.data.rows();
        let (x, y) = (&rows[a], &rows[b]);
        let d = state_diff(&w.schema, x, y).unwrap();
        prop_assert_eq!(&d, &state_diff(&w.schema, y, x).unwrap());
        prop_assert!(state_diff(&w.schema, x, x).unwrap().is_empty());
        prop_assert_eq!(d.len(), changed_indices(x, y).len());
    }

    #[test]
    fn adding_causal_rules_only_removes_consistent_states(seed in any::<u64>(), cut in 0usize..4) {
        let w = random_world(seed, &WorldParams { causal_rules: 4, ..WorldParams::default() });
        let all = w.causal.rules().to_vec();
        let fewer = CausalRuleSet::new(&w.schema, all[..cut.min(all.len())].to_vec()).unwrap();
        for s in uniform_rows(seed ^ 1, &w.schema, 50) {
            if w.causal.is_causally_consistent(&s) {
                prop_assert!(fewer.is_causally_consistent(&s));
            }
        }
    }

    #[test]
    fn ledger_partitions_changed_features(seed in any::<u64>()) {
        let w = random_world(seed, &WorldParams::default());
        let weights = w.schema.weights();
        let states = uniform_rows(seed ^ 2, &w.schema, 30);
        for pair in states.windows(2) {
            let (s0, s) = (&pair[0], &pair[1]);
            let ledger = w.causal.label_changes(s0, s, &weights);
            let mut joined: Vec<usize> = ledger.direct.iter().chain(&ledger.induced).copied().collect();
            joined.sort_unstable();
            prop_assert_eq!(joined, changed_indices(s0, s));
            for &i in &ledger.induced {
                prop_assert!(w.causal.rules().iter().any(|r| r.consequent.index() == i));
                prop_assert_eq!(ledger.adjusted_weights.get(i), 0.0);
            }
            for &i in &ledger.direct {
                prop_assert_eq!(ledger.adjusted_weights.get(i), weights.get(i));
            }
        }
    }

    #[test]
    fn search_ignores_rule_and_candidate_order(seed in any::<u64>(), n in norm(), k in 1usize..5) {
        let w = random_world(seed, &WorldParams { decision_rules: 3, ..WorldParams::default() });
        let Some(s0) = w.adverse_rows().into_iter().next() else { return Ok(()); };
        let weights = w.schema.weights();
        let params = SearchParams::new(n, k, CostMode::Refined);
        let base = search(&w.schema, &s0, &w.decision, &w.causal, w.data.rows(), &weights, params).unwrap();

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rules = w.decision.rules.clone();
        rules.shuffle(&mut rng);
        let q = DecisionRuleSet::new("bad", "good", rules).unwrap();
        let mut causal = w.causal.rules().to_vec();
        causal.shuffle(&mut rng);
        let c = CausalRuleSet::new(&w.schema, causal).unwrap();
        let mut cands = w.data.rows().to_vec();
        cands.shuffle(&mut rng);
        let shuffled = search(&w.schema, &s0, &q, &c, &cands, &weights, params).unwrap();
        prop_assert_eq!(summary(&base), summary(&shuffled));
    }

    #[test]
    fn without_causal_rules_both_modes_agree(seed in any::<u64>(), n in norm(), k in 1usize..5) {
        let w = random_world(seed, &WorldParams::default());
        let Some(s0) = w.adverse_rows().into_iter().next() else { return Ok(()); };
        let c = CausalRuleSet::empty(&w.schema);
        let weights = w.schema.weights();
        let run = |mode| search(&w.schema, &s0, &w.decision, &c, w.data.rows(), &weights, SearchParams::new(n, k, mode)).unwrap();
        prop_assert_eq!(summary(&run(CostMode::Refined)), summary(&run(CostMode::Standard)));
    }

    #[test]
    fn refined_cost_never_exceeds_standard(seed in any::<u64>(), n in norm()) {
        let w = random_world(seed, &WorldParams::default());
        let weights = w.schema.weights();
        let states = uniform_rows(seed ^ 3, &w.schema, 30);
        for pair in states.windows(2) {
            let ledger = w.causal.label_changes(&pair[0], &pair[1], &weights);
            let refined = compute_weighted_lp(&w.schema, &pair[0], &pair[1], &ledger.adjusted_weights, n).unwrap();
            let full = standard_cost(&w.schema, &pair[0], &pair[1], n).unwrap();
            prop_assert!(refined.total <= full.total + 1e-12);
        }
    }

    #[test]
    fn zero_weight_features_are_invisible(seed in any::<u64>(), n in norm(), f in 0usize..8) {
        let w = random_world(seed, &WorldParams::default());
        let f = f % w.schema.len();
        let mut weights: Vec<f64> = w.schema.weights().0;
        weights[f] = 0.0;
        let weights = Weights(weights);
        let states = uniform_rows(seed ^ 4, &w.schema, 20);
        let s0 = &states[0];
        for s in &states[1..] {
            let mut values = s.values().to_vec();
            values[f] = s0.get(f);
            let masked = w.schema.state(values).unwrap();
            let a = compute_weighted_lp(&w.schema, s0, s, &weights, n).unwrap().total;
            let b = compute_weighted_lp(&w.schema, s0, &masked, &weights, n).unwrap().total;
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }

    #[test]
    fn unit_l0_counts_changed_features(seed in any::<u64>()) {
        let w = random_world(seed, &WorldParams::default());
        let ones = Weights(vec![1.0; w.schema.len()]);
        let states = uniform_rows(seed ^ 5, &w.schema, 20);
        for pair in states.windows(2) {
            let cost = compute_weighted_lp(&w.schema, &pair[0], &pair[1], &ones, Norm::L0).unwrap();
            let diff = state_diff(&w.schema, &pair[0], &pair[1]).unwrap();
            prop_assert_eq!(cost.total, diff.len() as f64);
        }
    }

    #[test]
    fn dataset_csv_round_trip(seed in any::<u64>()) {
        let w = random_world(seed, &WorldParams { rows: 25, ..WorldParams::default() });
        let mut buf = Vec::new();
        w.data.write_csv(&mut buf).unwrap();
        let back = Dataset::read_csv(buf.as_slice(), w.schema.clone(), Some("label")).unwrap();
        prop_assert_eq!(back.rows(), w.data.rows());
        prop_assert_eq!(back.labels(), w.data.labels());
    }
}
