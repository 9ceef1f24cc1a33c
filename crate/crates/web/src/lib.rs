//! WebAssembly bindings for the static demo page in `www/`.
//!
//! Each exported function takes plain strings and numbers and returns a JSON
//! document; errors become rejected calls carrying a message.

use incsynth::crossing::gen_crossing;
use incsynth::formula::parse_checked;
use incsynth::incremental::{run, single_pass, AgentOrder, RunConfig};
use incsynth::models::{parse_system, system_to_json};
use incsynth::mrp::clamp_report;
use incsynth::{translate, Formula};
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

/// Pedestrian count above which the page refuses to build a crossing; the
/// single-pass product grows roughly fivefold per pedestrian.
pub const MAX_PEDESTRIANS: u32 = 6;

/// Automaton for a formula: states, guarded edges and Graphviz text.
pub fn automaton(formula: &str) -> Result<Value, String> {
    let f = Formula::parse(formula.trim()).map_err(|e| e.to_string())?;
    let dfa = translate(&f).map_err(|e| e.to_string())?;
    let states: Vec<Value> = (0..dfa.num_states())
        .map(|q| {
            let edges: Vec<Value> =
                dfa.edges(q).iter().map(|(g, t)| json!({ "guard": g.to_string(), "target": t })).collect();
            json!({
                "id": q,
                "residual": dfa.state_name(q),
                "initial": q == dfa.initial(),
                "accepting": dfa.is_accepting(q),
                "edges": edges,
            })
        })
        .collect();
    Ok(json!({ "formula": f.to_string(), "states": states, "dot": dfa.to_dot() }))
}

/// The crossing benchmark with `pedestrians` agents, as model JSON and
/// formula text.
pub fn crossing_instance(pedestrians: u32) -> Result<Value, String> {
    if !(1..=MAX_PEDESTRIANS).contains(&pedestrians) {
        return Err(format!("pedestrians must be between 1 and {MAX_PEDESTRIANS}"));
    }
    let (sys, f) = gen_crossing(pedestrians);
    Ok(json!({ "model": system_to_json(&sys), "formula": f.to_string() }))
}

/// Runs the incremental loop and the single-pass baseline on a system file
/// and a formula. A negative or NaN threshold means none.
pub fn synthesize(model: &str, formula: &str, threshold: f64, order: &str, seed: u64) -> Result<Value, String> {
    let sys = parse_system(model).map_err(|e| e.to_string())?;
    let f = parse_checked(formula.trim(), sys.num_agents(), sys.env.propositions()).map_err(|e| e.to_string())?;
    let order: AgentOrder = order.parse()?;
    let threshold = (threshold >= 0.0).then_some(threshold);
    let cfg = RunConfig { threshold, order, seed, ..RunConfig::default() };
    let res = run(&sys, &f, &cfg).map_err(|e| e.to_string())?;
    let whole = single_pass(&sys, &f, cfg.vi, cfg.limits).map_err(|e| e.to_string())?;

    let size = |s: incsynth::models::ModelSize| json!({ "states": s.states, "transitions": s.transitions });
    let iterations: Vec<Value> = res
        .traces
        .iter()
        .map(|t| {
            json!({
                "iteration": t.iteration,
                "agents": t.agents,
                "synth": t.synth_value,
                "verif": t.verif_value,
                "best": t.best_value,
                "product": size(t.p_size),
                "verification": t.verif_mc_size.map(size),
                "pruned": t.minimize.map(|m| m.pruned_actions),
                "ms": (t.t_synth + t.t_verif + t.t_min).as_secs_f64() * 1e3,
            })
        })
        .collect();
    Ok(json!({
        "outcome": res.outcome.to_string(),
        "probability": clamp_report(res.best_value),
        "iterations": iterations,
        "single_pass": {
            "probability": clamp_report(whole.value()),
            "product": size(whole.product_size()),
            "ms": (whole.t_compose + whole.t_product + whole.t_solve).as_secs_f64() * 1e3,
        },
    }))
}

fn to_js(r: Result<Value, String>) -> Result<String, JsError> {
    r.map(|v| v.to_string()).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = translateFormula)]
pub fn translate_formula(formula: &str) -> Result<String, JsError> {
    to_js(automaton(formula))
}

#[wasm_bindgen(js_name = crossingInstance)]
pub fn crossing_instance_js(pedestrians: u32) -> Result<String, JsError> {
    to_js(crossing_instance(pedestrians))
}

#[wasm_bindgen(js_name = synthesize)]
pub fn synthesize_js(model: &str, formula: &str, threshold: f64, order: &str, seed: u64) -> Result<String, JsError> {
    to_js(synthesize(model, formula, threshold, order, seed))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn automaton_lists_three_states_for_the_abbreviated_mission() {
        let v = automaton("!T.col U T.end").unwrap();
        assert_eq!(v["states"].as_array().unwrap().len(), 3);
        assert!(v["dot"].as_str().unwrap().starts_with("digraph"));
        assert!(automaton("G T.a").is_err());
    }

    #[test]
    fn crossing_round_trips_through_synthesize() {
        let inst = crossing_instance(3).unwrap();
        let v = synthesize(inst["model"].as_str().unwrap(), inst["formula"].as_str().unwrap(), -1.0, "saf", 0).unwrap();
        assert_eq!(v["outcome"], "success");
        assert_eq!(v["iterations"].as_array().unwrap().len(), 3);
        let (inc, sp) = (v["probability"].as_f64().unwrap(), v["single_pass"]["probability"].as_f64().unwrap());
        assert!((inc - sp).abs() < 1e-8);
    }

    #[test]
    fn bad_inputs_are_messages() {
        assert!(crossing_instance(0).is_err());
        assert!(synthesize("{", "F T.a", -1.0, "saf", 0).is_err());
        let inst = crossing_instance(1).unwrap();
        let model = inst["model"].as_str().unwrap();
        assert!(synthesize(model, "F T.nowhere", -1.0, "saf", 0).unwrap_err().contains("nowhere"));
        assert!(synthesize(model, "F T.c4", -1.0, "sideways", 0).is_err());
    }
}
