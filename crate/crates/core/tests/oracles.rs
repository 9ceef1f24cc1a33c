//! Cross-checks of the production pipeline against the brute-force
//! references in `testkit`.

use incsynth::automaton::{accepts, translate};
use incsynth::compose::{compose_system, Limits};
use incsynth::formula::eval_finite;
use incsynth::incremental::{run, single_pass, RunConfig};
use incsynth::mrp::{extract_policy, induced_mc, max_reach_prob, reach_prob_mc, ViConfig};
use incsynth::product::product_mdp;
use incsynth::testkit::*;
use incsynth::LabelSet;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Nonempty words up to `max_len`; products always read at least the
/// initial label.
fn words(letters: &[LabelSet], max_len: usize) -> Vec<Vec<LabelSet>> {
    let mut out = Vec::new();
    let mut frontier = vec![Vec::new()];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for w in &frontier {
            for l in letters {
                let mut w2: Vec<LabelSet> = w.clone();
                w2.push(l.clone());
                next.push(w2);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dfa_agrees_with_trace_semantics(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (sys, _) = random_instance(&mut rng, SystemShape::default());
        let atoms = system_atoms(&sys);
        let chosen: Vec<_> = rand::seq::SliceRandom::choose_multiple(&atoms[..], &mut rng, 3).cloned().collect();
        let f = random_formula(&mut rng, &chosen, 3);
        let dfa = translate(&f).unwrap();
        let letters: Vec<LabelSet> = (0..1u32 << chosen.len())
            .map(|m| chosen.iter().enumerate().filter(|(i, _)| m >> i & 1 == 1).map(|(_, a)| a.clone()).collect())
            .collect();
        for w in words(&letters, 4) {
            prop_assert_eq!(accepts(&dfa, &w), eval_finite(&f, &w), "formula {} word {:?}", f, w);
        }
    }

    #[test]
    fn composition_matches_cartesian_scan(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sys = random_system(&mut rng, SystemShape::default());
        let agents: Vec<u32> = (1..=sys.num_agents()).collect();
        let m = compose_system(&sys, &agents, Limits::default()).unwrap();
        let (states, transitions) = brute_force_compose(&sys, &agents);
        prop_assert_eq!((m.num_states(), m.num_transitions()), (states, transitions));
        prop_assert!(m.stochasticity_violation(1e-9).is_none());
    }

    #[test]
    fn value_iteration_matches_policy_enumeration(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (sys, f) = random_instance(&mut rng, SystemShape::default());
        let agents: Vec<u32> = (1..=sys.num_agents()).collect();
        let a = compose_system(&sys, &agents, Limits::default()).unwrap();
        let p = product_mdp(&a, &translate(&f).unwrap(), Limits::default()).unwrap();
        let x = max_reach_prob(&p.model, ViConfig::default()).unwrap();
        if let Some(best) = exhaustive_max_reach(&p.model, 1 << 14) {
            prop_assert!((best - x[p.model.initial()]).abs() < 1e-8, "{} vs {}", best, x[p.model.initial()]);
        }
        // the extracted policy attains the value, checked exactly
        let mc = induced_mc(&p.model, &extract_policy(&p.model, &x)).unwrap();
        let exact = mc_reach_exact(&mc)[mc.initial()];
        prop_assert!((exact - x[p.model.initial()]).abs() < 1e-8);
        let iterated = reach_prob_mc(&mc, ViConfig::default()).unwrap()[mc.initial()];
        prop_assert!((exact - iterated).abs() < 1e-8);
    }

    #[test]
    fn incremental_without_pruning_matches_single_pass(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (sys, f) = random_instance(&mut rng, SystemShape::default());
        let whole = single_pass(&sys, &f, ViConfig::default(), Limits::default()).unwrap();
        let cfg = RunConfig { minimize: false, ..Default::default() };
        let r = run(&sys, &f, &cfg).unwrap();
        prop_assert!((r.best_value - whole.value()).abs() < 1e-8, "{} vs {}", r.best_value, whole.value());
        prop_assert!(r.monotonicity_violations().is_empty(), "{:?}", r.monotonicity_violations());
    }

    #[test]
    fn pruning_with_zero_floor_keeps_the_value(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (sys, f) = random_instance(&mut rng, SystemShape::default());
        let a = sys.plant_model();
        let p = product_mdp(&a, &translate(&f).unwrap(), Limits::default()).unwrap();
        let x = max_reach_prob(&p.model, ViConfig::default()).unwrap();
        let (pruned, report) = incsynth::incremental::minimize(&a, &p, &x, 0.0);
        prop_assert_eq!(report.pruned_actions, 0);
        let q = product_mdp(&pruned, &translate(&f).unwrap(), Limits::default()).unwrap();
        let y = max_reach_prob(&q.model, ViConfig::default()).unwrap();
        prop_assert!((x[p.model.initial()] - y[q.model.initial()]).abs() < 1e-8);
    }
}

/// Pruning against the best verified value may remove the only action of a
/// state that is reached by chance, which lowers the final optimum.
#[test]
fn pruning_by_best_value_can_lose_the_optimum() {
    let (sys, f) = pruning_counterexample();
    let whole = single_pass(&sys, &f, ViConfig::default(), Limits::default()).unwrap();
    assert!((whole.value() - 0.8875).abs() < 1e-8, "{}", whole.value());
    let plain = run(&sys, &f, &RunConfig { minimize: false, ..Default::default() }).unwrap();
    assert!((plain.best_value - whole.value()).abs() < 1e-8);
    let pruned = run(&sys, &f, &RunConfig::default()).unwrap();
    let report = pruned.traces[0].minimize.expect("first iteration prunes");
    assert!(report.deadlocked > 0);
    assert!(pruned.best_value < whole.value() - 0.1, "{}", pruned.best_value);
}
