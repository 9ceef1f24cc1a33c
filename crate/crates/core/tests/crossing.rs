use incsynth::compose::{compose_system, Limits};
use incsynth::crossing::gen_crossing;
use incsynth::incremental::{run, Outcome, RunConfig};
use incsynth::models::ModelSize;
use incsynth::mrp::{extract_policy, induced_mc, max_reach_prob, reach_prob_mc, ViConfig};
use incsynth::product::product_mdp;
use incsynth::translate;

#[test]
fn single_pass_product_matches_reported_size_and_value() {
    let (sys, f) = gen_crossing(5);
    assert!(sys.validate().is_empty());
    let dfa = translate(&f).unwrap();
    assert_eq!(dfa.num_states(), 3);
    let m = compose_system(&sys, &[1, 2, 3, 4, 5], Limits::default()).unwrap();
    let p = product_mdp(&m, &dfa, Limits::default()).unwrap();
    assert_eq!((p.model.num_states(), p.model.num_transitions()), (1004, 26898));
    let x = max_reach_prob(&p.model, ViConfig::default()).unwrap();
    assert!((x[p.model.initial()] - 0.8).abs() < 5e-4, "{}", x[0]);
    let pol = extract_policy(&p.model, &x);
    let mc = induced_mc(&p.model, &pol).unwrap();
    let y = reach_prob_mc(&mc, ViConfig::default()).unwrap();
    assert!((y[0] - x[p.model.initial()]).abs() < 1e-8);
}

fn size(states: usize, transitions: usize) -> ModelSize {
    ModelSize { states, transitions }
}

#[test]
fn incremental_run_without_threshold() {
    let (sys, f) = gen_crossing(5);
    let res = run(&sys, &f, &RunConfig::default()).unwrap();
    assert_eq!(res.outcome, Outcome::Success);
    let verif: Vec<f64> = res.traces.iter().filter_map(|t| t.verif_value).collect();
    let expected = [0.463, 0.566, 0.627, 0.667];
    assert_eq!(verif.len(), 4);
    for (v, e) in verif.iter().zip(expected) {
        assert!((v - e).abs() < 5e-4, "{verif:?}");
    }
    assert!((res.best_value - 0.8).abs() < 5e-4);
    assert_eq!(res.traces.len(), 5);
    assert_eq!(res.largest_synthesis_product(), size(266, 4474));
    assert_eq!(res.largest_verification_model(), Some(size(405, 6125)));
    assert!(res.monotonicity_violations().is_empty());
}

#[test]
fn incremental_run_with_threshold() {
    let (sys, f) = gen_crossing(5);
    let cfg = RunConfig { threshold: Some(0.65), ..Default::default() };
    let res = run(&sys, &f, &cfg).unwrap();
    assert_eq!(res.outcome, Outcome::Success);
    assert_eq!(res.traces.len(), 4);
    assert!((res.best_value - 0.667).abs() < 5e-4);
    assert_eq!(res.largest_synthesis_product(), size(99, 680));

    let cfg = RunConfig { threshold: Some(0.9), ..Default::default() };
    let res = run(&sys, &f, &cfg).unwrap();
    assert_eq!(res.outcome, Outcome::Fail);
    assert!(res.traces.last().unwrap().synth_value < 0.9);
}
