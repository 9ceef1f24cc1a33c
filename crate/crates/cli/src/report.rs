//! Run summaries for the terminal and for JSON export.

use std::fmt::Write;
use std::time::Duration;

use incsynth::incremental::{RunResult, SinglePass};
use incsynth::models::ModelSize;
use incsynth::mrp::clamp_report;
use serde::Serialize;

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Size {
    pub states: usize,
    pub transitions: usize,
}

impl From<ModelSize> for Size {
    fn from(s: ModelSize) -> Self {
        Size { states: s.states, transitions: s.transitions }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Iteration {
    pub iteration: usize,
    pub agents: Vec<u32>,
    pub synth: f64,
    pub verif: Option<f64>,
    pub best: f64,
    pub a: Size,
    pub p: Size,
    pub v: Option<Size>,
    pub pruned_actions: Option<usize>,
    pub t_synth_ms: f64,
    pub t_verif_ms: f64,
    pub t_min_ms: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub mode: &'static str,
    pub outcome: String,
    pub probability: f64,
    pub total_ms: f64,
    /// Stage name and wall time in milliseconds.
    pub stages: Vec<(String, f64)>,
    pub largest_synthesis_product: Size,
    pub largest_verification_model: Option<Size>,
    pub iterations: Vec<Iteration>,
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

impl BenchReport {
    pub fn single_pass(sp: &SinglePass, total: Duration) -> Self {
        BenchReport {
            mode: "single-pass",
            outcome: "success".into(),
            probability: clamp_report(sp.value()),
            total_ms: ms(total),
            stages: vec![
                ("compose".into(), ms(sp.t_compose)),
                ("product".into(), ms(sp.t_product)),
                ("solve".into(), ms(sp.t_solve)),
            ],
            largest_synthesis_product: sp.product_size().into(),
            largest_verification_model: None,
            iterations: Vec::new(),
        }
    }

    pub fn incremental(r: &RunResult, total: Duration) -> Self {
        let iterations: Vec<Iteration> = r
            .traces
            .iter()
            .map(|t| Iteration {
                iteration: t.iteration,
                agents: t.agents.clone(),
                synth: t.synth_value,
                verif: t.verif_value,
                best: t.best_value,
                a: t.a_size.into(),
                p: t.p_size.into(),
                v: t.verif_mc_size.map(Size::from),
                pruned_actions: t.minimize.map(|m| m.pruned_actions),
                t_synth_ms: ms(t.t_synth),
                t_verif_ms: ms(t.t_verif),
                t_min_ms: ms(t.t_min),
            })
            .collect();
        let sum = |f: fn(&Iteration) -> f64| iterations.iter().map(f).sum::<f64>();
        BenchReport {
            mode: "incremental",
            outcome: r.outcome.to_string(),
            probability: clamp_report(r.best_value),
            total_ms: ms(total),
            stages: vec![
                ("synthesis".into(), sum(|i| i.t_synth_ms)),
                ("verification".into(), sum(|i| i.t_verif_ms)),
                ("minimization".into(), sum(|i| i.t_min_ms)),
            ],
            largest_synthesis_product: r.largest_synthesis_product().into(),
            largest_verification_model: r.largest_verification_model().map(Size::from),
            iterations,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn summary(&self, detailed: bool) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "mode: {}", self.mode);
        let _ = writeln!(s, "outcome: {}", self.outcome);
        let _ = writeln!(s, "probability: {:.6}", self.probability);
        let p = self.largest_synthesis_product;
        let _ = writeln!(s, "largest synthesis product: {} states, {} transitions", p.states, p.transitions);
        if let Some(v) = self.largest_verification_model {
            let _ = writeln!(s, "largest verification model: {} states, {} transitions", v.states, v.transitions);
        }
        let _ = writeln!(s, "time: {:.1} ms", self.total_ms);
        if !detailed {
            return s;
        }
        for (name, t) in &self.stages {
            let _ = writeln!(s, "  {name}: {t:.1} ms");
        }
        if !self.iterations.is_empty() {
            let _ = writeln!(s, "{:>4} {:<12} {:>9} {:>9} {:>9} {:>14} {:>14} {:>14}", "iter", "agents", "synth", "verif", "best", "A", "P", "V");
            for it in &self.iterations {
                let agents: Vec<String> = it.agents.iter().map(u32::to_string).collect();
                let verif = it.verif.map_or("-".to_string(), |v| format!("{v:.6}"));
                let size = |x: Size| format!("{}/{}", x.states, x.transitions);
                let _ = writeln!(
                    s,
                    "{:>4} {:<12} {:>9.6} {:>9} {:>9.6} {:>14} {:>14} {:>14}",
                    it.iteration,
                    agents.join(","),
                    it.synth,
                    verif,
                    it.best,
                    size(it.a),
                    size(it.p),
                    it.v.map_or("-".to_string(), size)
                );
            }
        }
        s
    }
}
