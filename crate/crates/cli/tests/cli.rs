use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_incsynth"))
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("binary runs")
}

fn text(bytes: &[u8]) -> String {
    String::from_utf8_lossy(bytes).into_owned()
}

fn crossing(dir: &TempDir, n: u32) -> (PathBuf, PathBuf) {
    let model = dir.path().join("crossing.json");
    let o = run(bin().args(["gen-crossing", "--pedestrians", &n.to_string(), "--out"]).arg(&model));
    assert!(o.status.success(), "{}", text(&o.stderr));
    (model.clone(), model.with_extension("ltl"))
}

fn synth(model: &Path, formula: &Path) -> Command {
    let mut c = bin();
    c.arg("synth").arg("--model").arg(model).arg("--formula").arg(formula);
    c
}

#[test]
fn gen_crossing_writes_system_and_formula() {
    let dir = TempDir::new().unwrap();
    let (model, formula) = crossing(&dir, 2);
    let sys = incsynth::models::load_system(&model).unwrap();
    assert_eq!(sys.num_agents(), 2);
    let f = std::fs::read_to_string(formula).unwrap();
    assert!(f.contains(" U "), "{f}");

    let other = dir.path().join("mission.txt");
    let o = run(bin().args(["gen-crossing", "--pedestrians", "1", "--out"]).arg(&model).arg("--formula-out").arg(&other));
    assert!(o.status.success());
    assert!(other.exists());
}

#[test]
fn synth_single_pass_and_incremental_agree_on_a_small_crossing() {
    let dir = TempDir::new().unwrap();
    let (model, formula) = crossing(&dir, 3);
    let sp = run(synth(&model, &formula).arg("--single-pass"));
    let inc = run(synth(&model, &formula).arg("--stats"));
    assert!(sp.status.success() && inc.status.success());
    let prob = |o: &Output| text(&o.stdout).lines().find_map(|l| l.strip_prefix("probability: ").map(str::to_string));
    assert_eq!(prob(&sp), prob(&inc));
    let stats = text(&inc.stdout);
    assert!(stats.contains("verification:"), "{stats}");
    assert!(stats.contains("iter"), "{stats}");
}

#[test]
fn trace_csv_and_report_json_are_written() {
    let dir = TempDir::new().unwrap();
    let (model, formula) = crossing(&dir, 2);
    let csv = dir.path().join("trace.csv");
    let json = dir.path().join("report.json");
    let o = run(synth(&model, &formula).arg("--trace-csv").arg(&csv).arg("--report-json").arg(&json));
    assert!(o.status.success());
    let csv = std::fs::read_to_string(csv).unwrap();
    assert_eq!(csv.lines().next().unwrap(), incsynth::incremental::CSV_HEADER);
    assert_eq!(csv.lines().count(), 3);
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(json).unwrap()).unwrap();
    assert_eq!(report["mode"], "incremental");
    assert_eq!(report["iterations"].as_array().unwrap().len(), 2);
}

#[test]
fn emitted_policy_verifies_to_the_same_value() {
    let dir = TempDir::new().unwrap();
    let (model, formula) = crossing(&dir, 3);
    let policy = dir.path().join("policy.json");
    let o = run(synth(&model, &formula).arg("--emit-policy").arg(&policy));
    assert!(o.status.success());
    let synth_out = text(&o.stdout);
    let v = run(bin()
        .arg("verify")
        .arg("--model")
        .arg(&model)
        .arg("--formula")
        .arg(&formula)
        .arg("--policy")
        .arg(&policy)
        .args(["--simulate", "2000", "--seed", "3"]));
    assert!(v.status.success(), "{}", text(&v.stderr));
    let out = text(&v.stdout);
    let line = |s: &str| s.lines().find(|l| l.starts_with("probability:")).map(str::to_string);
    assert_eq!(line(&out), line(&synth_out));
    assert!(out.contains("simulated:"), "{out}");
}

#[test]
fn anytime_stop_keeps_the_best_policy() {
    let dir = TempDir::new().unwrap();
    let (model, formula) = crossing(&dir, 3);
    let csv = dir.path().join("trace.csv");
    let o = run(synth(&model, &formula).args(["--max-iterations", "1"]).arg("--trace-csv").arg(&csv));
    assert_eq!(o.status.code(), Some(0));
    assert!(text(&o.stdout).contains("outcome: stopped"), "{}", text(&o.stdout));
    assert_eq!(std::fs::read_to_string(csv).unwrap().lines().count(), 2);
}

#[test]
fn infeasible_threshold_exits_with_one() {
    let dir = TempDir::new().unwrap();
    let (model, formula) = crossing(&dir, 2);
    let o = run(synth(&model, &formula).args(["--threshold", "0.999"]));
    assert_eq!(o.status.code(), Some(1));
    let o = run(synth(&model, &formula).args(["--threshold", "0.999", "--single-pass"]));
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn bad_inputs_exit_with_two() {
    let dir = TempDir::new().unwrap();
    let (model, formula) = crossing(&dir, 1);
    let missing = run(&mut synth(&dir.path().join("nope.json"), &formula));
    assert_eq!(missing.status.code(), Some(2));
    assert!(text(&missing.stderr).contains("nope.json"));

    let unknown = run(bin().arg("synth").arg("--model").arg(&model).args(["--formula-str", "F T.nowhere"]));
    assert_eq!(unknown.status.code(), Some(2), "{}", text(&unknown.stderr));

    let safety = run(bin().arg("synth").arg("--model").arg(&model).args(["--formula-str", "!F T.c4"]));
    assert_eq!(safety.status.code(), Some(2), "{}", text(&safety.stderr));

    let threshold = run(synth(&model, &formula).args(["--threshold", "1.5"]));
    assert_eq!(threshold.status.code(), Some(2));

    std::fs::write(dir.path().join("broken.json"), "{").unwrap();
    let broken = run(&mut synth(&dir.path().join("broken.json"), &formula));
    assert_eq!(broken.status.code(), Some(2));
}

#[test]
fn state_cap_exits_with_three() {
    let dir = TempDir::new().unwrap();
    let (model, formula) = crossing(&dir, 3);
    let o = run(synth(&model, &formula).args(["--single-pass", "--max-states", "10"]));
    assert_eq!(o.status.code(), Some(3));
    assert!(text(&o.stderr).contains("10"), "{}", text(&o.stderr));
}

#[test]
fn translate_prints_states_and_dot() {
    let dir = TempDir::new().unwrap();
    let dot = dir.path().join("dfa.dot");
    let o = run(bin().args(["translate", "--formula-str", "!T.col U T.end", "--dot"]).arg(&dot));
    assert!(o.status.success());
    let out = text(&o.stdout);
    assert!(out.contains("states: 3"), "{out}");
    assert!(out.contains("(accepting)"));
    assert!(std::fs::read_to_string(dot).unwrap().starts_with("digraph"));
}
