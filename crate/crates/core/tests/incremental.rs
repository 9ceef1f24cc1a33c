use std::ops::ControlFlow;

use incsynth::compose::Limits;
use incsynth::crossing::gen_crossing;
use incsynth::incremental::{
    run, run_with, single_pass, verify_policy, AgentOrder, Outcome, RunConfig, RunError, CSV_HEADER,
};
use incsynth::mrp::{PolicyFile, ViConfig};
use incsynth::testkit::{random_instance, SystemShape};
use incsynth::Formula;
use rand::SeedableRng;

#[test]
fn zero_agents_degenerates_to_single_pass() {
    let (mut sys, _) = gen_crossing(1);
    sys.agents.clear();
    let f = Formula::parse("F T.c4").unwrap();
    let r = run(&sys, &f, &RunConfig::default()).unwrap();
    assert_eq!(r.outcome, Outcome::Success);
    assert_eq!(r.traces.len(), 1);
    assert!((r.best_value - 1.0).abs() < 1e-9);
    let whole = single_pass(&sys, &f, ViConfig::default(), Limits::default()).unwrap();
    assert_eq!(whole.product_size(), r.traces[0].p_size);
}

#[test]
fn raf_is_reproducible_per_seed() {
    let (sys, f) = gen_crossing(4);
    let cfg = RunConfig { order: AgentOrder::Raf, seed: 7, ..Default::default() };
    let order = |cfg: &RunConfig| run(&sys, &f, cfg).unwrap().traces.iter().map(|t| t.new_agents.clone()).collect::<Vec<_>>();
    assert_eq!(order(&cfg), order(&cfg));
    let r = run(&sys, &f, &cfg).unwrap();
    assert!((r.best_value - 0.8).abs() < 5e-4);
}

#[test]
fn stopping_early_keeps_the_recorded_best() {
    let (sys, f) = gen_crossing(5);
    let r = run_with(&sys, &f, &RunConfig::default(), |t| {
        if t.iteration == 2 { ControlFlow::Break(()) } else { ControlFlow::Continue(()) }
    })
    .unwrap();
    assert_eq!(r.outcome, Outcome::ExhaustedAnytime);
    assert_eq!(r.traces.len(), 2);
    assert_eq!(r.best_value, r.traces[1].best_value);
    let best = r.best.as_ref().unwrap();
    let check = verify_policy(&sys, &f, &best.to_file(&sys), ViConfig::default(), Limits::default()).unwrap();
    assert!((check.value - r.best_value).abs() < 1e-8);
}

#[test]
fn batch_of_everything_finishes_in_two_iterations() {
    let (sys, f) = gen_crossing(3);
    let r = run(&sys, &f, &RunConfig { batch: 3, ..Default::default() }).unwrap();
    assert!(r.traces.len() <= 2);
}

#[test]
fn config_is_validated() {
    let (sys, f) = gen_crossing(1);
    assert!(matches!(run(&sys, &f, &RunConfig { threshold: Some(1.5), ..Default::default() }), Err(RunError::BadThreshold(_))));
    assert!(matches!(run(&sys, &f, &RunConfig { batch: 0, ..Default::default() }), Err(RunError::BadBatch)));
}

#[test]
fn failures_are_confirmed_by_the_full_system() {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    let mut failures = 0;
    for _ in 0..150 {
        let (sys, f) = random_instance(&mut rng, SystemShape::default());
        let whole = single_pass(&sys, &f, ViConfig::default(), Limits::default()).unwrap().value();
        for thr in [0.3, 0.6, 0.9] {
            let r = run(&sys, &f, &RunConfig { threshold: Some(thr), ..Default::default() }).unwrap();
            match r.outcome {
                Outcome::Fail => {
                    failures += 1;
                    assert!(whole < thr, "failed at {thr} but full optimum is {whole}");
                }
                Outcome::Success => assert!(r.best_value >= thr),
                Outcome::ExhaustedAnytime => unreachable!(),
            }
        }
    }
    assert!(failures > 0);
}

#[test]
fn csv_has_one_row_per_iteration() {
    let (sys, f) = gen_crossing(2);
    let r = run(&sys, &f, &RunConfig::default()).unwrap();
    let csv = r.to_csv();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], CSV_HEADER);
    assert_eq!(lines.len(), r.traces.len() + 1);
    assert!(lines.iter().all(|l| l.split(',').count() == 13));
}

#[test]
fn policy_files_round_trip_and_reject_strangers() {
    let (sys, f) = gen_crossing(2);
    let r = run(&sys, &f, &RunConfig::default()).unwrap();
    let file = r.best.unwrap().to_file(&sys);
    let back = PolicyFile::from_json(&file.to_json()).unwrap();
    assert_eq!(back, file);
    let stranger = PolicyFile { agents: vec![9], ..back };
    assert!(verify_policy(&sys, &f, &stranger, ViConfig::default(), Limits::default()).is_err());
}
