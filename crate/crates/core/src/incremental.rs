//! The incremental synthesis loop: synthesize against a growing subset of
//! agents, verify each policy against all of them, keep the best one, and
//! prune the composed model between iterations.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::ops::ControlFlow;
use std::time::Duration;
#[cfg(not(all(target_arch = "wasm32", target_os = "unknown")))]
use std::time::Instant;

#[cfg(all(target_arch = "wasm32", target_os = "unknown"))]
use web_time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::automaton::{translate, Dfa, TranslateError};
use crate::compose::{compose_mdp_mcs, BuildError, Limits};
use crate::formula::{initial_agent_set, Formula};
use crate::models::{Builder, Mc, Mdp, ModelSize, System};
use crate::mrp::{
    extract_policy, induced_mc, max_reach_prob, reach_prob_mc, MrpError, Policy, PolicyFile, ViConfig,
};
use crate::product::{product_mc_joint, product_mdp, Product};

/// Slack for the monotonicity checks on value sequences.
pub const MONOTONE_SLACK: f64 = 1e-9;

/// Actions are pruned only when their value is below `p_min` by more than
/// this, so that truncation error in value iteration cannot remove an
/// optimal action.
pub const PRUNE_SLACK: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AgentOrder {
    /// Random agent first.
    Raf,
    /// Smallest agent first, by states plus transitions.
    #[default]
    Saf,
}

impl std::str::FromStr for AgentOrder {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "raf" => Ok(AgentOrder::Raf),
            "saf" => Ok(AgentOrder::Saf),
            other => Err(format!("unknown agent order `{other}` (expected raf or saf)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunConfig {
    pub threshold: Option<f64>,
    pub order: AgentOrder,
    pub seed: u64,
    /// New agents added per iteration.
    pub batch: usize,
    pub vi: ViConfig,
    pub limits: Limits,
    pub minimize: bool,
    /// Re-solve each pruned model and record its value in the trace.
    pub check_minimization: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            threshold: None,
            order: AgentOrder::Saf,
            seed: 0,
            batch: 1,
            vi: ViConfig::default(),
            limits: Limits::default(),
            minimize: true,
            check_minimization: false,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("threshold must lie in (0, 1], got {0}")]
    BadThreshold(f64),
    #[error("batch size must be at least 1")]
    BadBatch,
    #[error(transparent)]
    Translate(#[from] TranslateError),
    #[error(transparent)]
    Build(#[from] BuildError),
    #[error(transparent)]
    Mrp(#[from] MrpError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct MinimizeReport {
    pub pruned_actions: usize,
    /// Reachable states left without any action.
    pub deadlocked: usize,
    pub before: ModelSize,
    pub after: ModelSize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationTrace {
    pub iteration: usize,
    pub agents: Vec<u32>,
    pub new_agents: Vec<u32>,
    pub synth_value: f64,
    pub verif_value: Option<f64>,
    /// Value of the best policy so far against all agents.
    pub best_value: f64,
    pub a_size: ModelSize,
    pub p_size: ModelSize,
    /// The induced chain composed with the remaining agents.
    pub verif_mc_size: Option<ModelSize>,
    /// That chain's product with the automaton.
    pub verif_product_size: Option<ModelSize>,
    pub minimize: Option<MinimizeReport>,
    /// Value of the pruned model, when requested.
    pub resynth_value: Option<f64>,
    pub t_synth: Duration,
    pub t_verif: Duration,
    pub t_min: Duration,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    Fail,
    ExhaustedAnytime,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Outcome::Success => "success",
            Outcome::Fail => "fail",
            Outcome::ExhaustedAnytime => "stopped",
        })
    }
}

/// A synthesized policy together with the product it is defined on.
#[derive(Debug, Clone)]
pub struct BestPolicy {
    pub iteration: usize,
    pub agents: Vec<u32>,
    pub product: Product<Mdp>,
    pub policy: Policy,
    pub value: f64,
}

impl BestPolicy {
    pub fn to_file(&self, sys: &System) -> PolicyFile {
        let model = &self.product.model;
        PolicyFile::from_policy(self.agents.clone(), model, &self.policy, |s| sys.describe(model.desc(s)))
    }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub outcome: Outcome,
    pub best: Option<BestPolicy>,
    pub best_value: f64,
    pub traces: Vec<IterationTrace>,
}

impl RunResult {
    pub fn largest_synthesis_product(&self) -> ModelSize {
        largest(self.traces.iter().map(|t| t.p_size))
    }

    pub fn largest_verification_model(&self) -> Option<ModelSize> {
        self.traces.iter().filter_map(|t| t.verif_mc_size).max_by_key(|s| (s.states, s.transitions))
    }

    /// Violations of the two monotonicity guarantees: synthesis values never
    /// increase and best values never decrease.
    pub fn monotonicity_violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        for w in self.traces.windows(2) {
            if w[1].synth_value > w[0].synth_value + MONOTONE_SLACK {
                out.push(format!(
                    "synthesis value rose from {} to {} at iteration {}",
                    w[0].synth_value, w[1].synth_value, w[1].iteration
                ));
            }
            if w[1].best_value < w[0].best_value - MONOTONE_SLACK {
                out.push(format!(
                    "best value fell from {} to {} at iteration {}",
                    w[0].best_value, w[1].best_value, w[1].iteration
                ));
            }
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(CSV_HEADER);
        s.push('\n');
        for t in &self.traces {
            let agents: Vec<String> = t.agents.iter().map(u32::to_string).collect();
            let opt = |v: Option<String>| v.unwrap_or_default();
            s.push_str(&format!(
                "{},{},{:.6},{},{},{},{},{},{},{},{:.3},{:.3},{:.3}\n",
                t.iteration,
                agents.join(";"),
                t.synth_value,
                opt(t.verif_value.map(|v| format!("{v:.6}"))),
                t.a_size.states,
                t.a_size.transitions,
                t.p_size.states,
                t.p_size.transitions,
                opt(t.verif_mc_size.map(|v| v.states.to_string())),
                opt(t.verif_mc_size.map(|v| v.transitions.to_string())),
                ms(t.t_synth),
                ms(t.t_verif),
                ms(t.t_min),
            ));
        }
        s
    }
}

pub const CSV_HEADER: &str =
    "iter,agents,synth_p,verif_p,A_states,A_trans,P_states,P_trans,V_states,V_trans,t_synth_ms,t_verif_ms,t_min_ms";

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

fn largest(sizes: impl Iterator<Item = ModelSize>) -> ModelSize {
    sizes.max_by_key(|s| (s.states, s.transitions)).unwrap_or_default()
}

/// Picks the next `batch` agents from `remaining`.
pub fn select_next_agents(
    remaining: &[u32],
    sizes: &HashMap<u32, ModelSize>,
    rule: AgentOrder,
    batch: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<u32> {
    match rule {
        AgentOrder::Saf => {
            let mut order = remaining.to_vec();
            order.sort_by_key(|i| {
                let s = sizes.get(i).copied().unwrap_or_default();
                (s.states + s.transitions, *i)
            });
            order.truncate(batch);
            order
        }
        AgentOrder::Raf => remaining.choose_multiple(rng, batch.min(remaining.len())).copied().collect(),
    }
}

/// Removes every action whose backup value falls below `p_min` (less
/// [`PRUNE_SLACK`]) in all product copies of its state, then drops states no
/// longer reachable.
/// Transition probabilities are left untouched.
pub fn minimize(a: &Mdp, p: &Product<Mdp>, x: &[f64], p_min: f64) -> (Mdp, MinimizeReport) {
    let mut copies: Vec<Vec<usize>> = vec![Vec::new(); a.num_states()];
    for s in 0..p.model.num_states() {
        copies[p.origin(s).0].push(s);
    }
    let mut report = MinimizeReport { before: a.size(), ..Default::default() };
    let allowed: Vec<Vec<u32>> = (0..a.num_states())
        .map(|sa| {
            let keep: Vec<u32> = a
                .choices(sa)
                .map(|c| c.action)
                .filter(|&act| {
                    copies[sa].iter().any(|&ps| p.model.choice(ps, act).map_or(0.0, |c| c.expect(x)) >= p_min - PRUNE_SLACK)
                })
                .collect();
            report.pruned_actions += a.choices(sa).count() - keep.len();
            keep
        })
        .collect();

    let mut b = Builder::default();
    let mut ids: HashMap<u32, u32> = HashMap::new();
    let mut order = Vec::new();
    let mut add = |s: u32, b: &mut Builder, order: &mut Vec<u32>| -> u32 {
        *ids.entry(s).or_insert_with(|| {
            order.push(s);
            b.add_state(a.label(s as usize).clone(), a.desc(s as usize).clone(), a.is_final(s as usize))
        })
    };
    add(a.initial() as u32, &mut b, &mut order);
    let mut next = 0;
    while next < order.len() {
        let s = order[next] as usize;
        next += 1;
        b.open_row();
        if allowed[s].is_empty() && a.has_choices(s) {
            report.deadlocked += 1;
        }
        for &act in &allowed[s] {
            let c = a.choice(s, act).expect("allowed actions are enabled");
            b.open_choice(act);
            for (t, q) in c.iter() {
                let id = add(t, &mut b, &mut order);
                b.push(id, q);
            }
        }
    }
    let out = b.into_mdp(0, a.actions().clone());
    report.after = out.size();
    (out, report)
}

/// Runs the incremental loop to completion.
pub fn run(sys: &System, f: &Formula, cfg: &RunConfig) -> Result<RunResult, RunError> {
    run_with(sys, f, cfg, |_| ControlFlow::Continue(()))
}

/// As [`run`], calling `observe` after every iteration; returning `Break`
/// stops the run and keeps the best policy found so far.
pub fn run_with(
    sys: &System,
    f: &Formula,
    cfg: &RunConfig,
    mut observe: impl FnMut(&IterationTrace) -> ControlFlow<()>,
) -> Result<RunResult, RunError> {
    if let Some(t) = cfg.threshold {
        if !(t > 0.0 && t <= 1.0) {
            return Err(RunError::BadThreshold(t));
        }
    }
    if cfg.batch == 0 {
        return Err(RunError::BadBatch);
    }
    let dfa = translate(f)?;
    let n = sys.num_agents();
    let agent_models: HashMap<u32, Mc> = (1..=n).map(|i| (i, sys.agent_model(i))).collect();
    let sizes: HashMap<u32, ModelSize> = agent_models.iter().map(|(&i, m)| (i, m.size())).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut remaining: Vec<u32> = (1..=n).collect();
    let mut new_agents: Vec<u32> =
        initial_agent_set(f, n).map_err(TranslateError::from)?.into_iter().collect();
    if new_agents.is_empty() && n > 0 {
        new_agents = select_next_agents(&remaining, &sizes, cfg.order, cfg.batch, &mut rng);
    }

    let mut included: Vec<u32> = Vec::new();
    let mut a = sys.plant_model();
    let mut best: Option<BestPolicy> = None;
    let mut best_value = 0.0;
    let mut traces = Vec::new();

    for iteration in 1.. {
        let t0 = Instant::now();
        remaining.retain(|i| !new_agents.contains(i));
        included.extend(&new_agents);
        let refs: Vec<&Mc> = new_agents.iter().map(|i| &agent_models[i]).collect();
        a = compose_mdp_mcs(&a, &refs, cfg.limits)?;
        let p = product_mdp(&a, &dfa, cfg.limits)?;
        let x = max_reach_prob(&p.model, cfg.vi)?;
        let policy = extract_policy(&p.model, &x);
        let synth = x[p.model.initial()];
        let t_synth = t0.elapsed();

        let mut trace = IterationTrace {
            iteration,
            agents: included.clone(),
            new_agents: new_agents.clone(),
            synth_value: synth,
            verif_value: None,
            best_value,
            a_size: a.size(),
            p_size: p.model.size(),
            verif_mc_size: None,
            verif_product_size: None,
            minimize: None,
            resynth_value: None,
            t_synth,
            t_verif: Duration::ZERO,
            t_min: Duration::ZERO,
        };
        let candidate = |p: Product<Mdp>, policy: Policy, value: f64| BestPolicy {
            iteration,
            agents: included.clone(),
            product: p,
            policy,
            value,
        };

        if let Some(thr) = cfg.threshold {
            if synth < thr {
                traces.push(trace);
                return Ok(RunResult { outcome: Outcome::Fail, best, best_value, traces });
            }
        }
        if remaining.is_empty() {
            trace.best_value = synth;
            traces.push(trace);
            return Ok(RunResult {
                outcome: Outcome::Success,
                best: Some(candidate(p, policy, synth)),
                best_value: synth,
                traces,
            });
        }

        // verification against all agents
        let t1 = Instant::now();
        let induced = induced_mc(&p.model, &policy)?;
        let rest: Vec<&Mc> = remaining.iter().map(|i| &agent_models[i]).collect();
        let (v, full) = product_mc_joint(&induced, &rest, &dfa, cfg.limits)?;
        let verif = reach_prob_mc(&v.model, cfg.vi)?[v.model.initial()];
        trace.t_verif = t1.elapsed();
        trace.verif_value = Some(verif);
        trace.verif_mc_size = Some(full);
        trace.verif_product_size = Some(v.model.size());

        if verif > best_value {
            best_value = verif;
            best = Some(candidate(p.clone(), policy, verif));
        }
        trace.best_value = best_value;
        if cfg.threshold.is_some_and(|thr| best_value >= thr) {
            traces.push(trace);
            return Ok(RunResult { outcome: Outcome::Success, best, best_value, traces });
        }

        new_agents = select_next_agents(&remaining, &sizes, cfg.order, cfg.batch, &mut rng);
        if cfg.minimize {
            let t2 = Instant::now();
            let p_min = cfg.threshold.unwrap_or(best_value);
            let (pruned, report) = minimize(&a, &p, &x, p_min);
            a = pruned;
            trace.minimize = Some(report);
            trace.t_min = t2.elapsed();
            if cfg.check_minimization {
                let q = product_mdp(&a, &dfa, cfg.limits)?;
                trace.resynth_value = Some(max_reach_prob(&q.model, cfg.vi)?[q.model.initial()]);
            }
        }

        let stop = observe(&trace);
        traces.push(trace);
        if stop.is_break() {
            return Ok(RunResult { outcome: Outcome::ExhaustedAnytime, best, best_value, traces });
        }
    }
    unreachable!("the loop returns once every agent is included")
}

/// Solves the full system in one pass: plant and all agents composed, one
/// product, one value iteration.
pub fn single_pass(sys: &System, f: &Formula, vi: ViConfig, limits: Limits) -> Result<SinglePass, RunError> {
    let dfa = translate(f)?;
    let t0 = Instant::now();
    let agents: Vec<u32> = (1..=sys.num_agents()).collect();
    let models: Vec<Mc> = agents.iter().map(|&i| sys.agent_model(i)).collect();
    let refs: Vec<&Mc> = models.iter().collect();
    let a = compose_mdp_mcs(&sys.plant_model(), &refs, limits)?;
    let t_compose = t0.elapsed();
    let p = product_mdp(&a, &dfa, limits)?;
    let t_product = t0.elapsed() - t_compose;
    let t1 = Instant::now();
    let x = max_reach_prob(&p.model, vi)?;
    let policy = extract_policy(&p.model, &x);
    let t_solve = t1.elapsed();
    let value = x[p.model.initial()];
    Ok(SinglePass {
        a_size: a.size(),
        dfa_states: dfa.num_states(),
        best: BestPolicy { iteration: 1, agents, product: p, policy, value },
        t_compose,
        t_product,
        t_solve,
    })
}

#[derive(Debug, Clone)]
pub struct SinglePass {
    pub a_size: ModelSize,
    pub dfa_states: usize,
    pub best: BestPolicy,
    pub t_compose: Duration,
    pub t_product: Duration,
    pub t_solve: Duration,
}

impl SinglePass {
    pub fn value(&self) -> f64 {
        self.best.value
    }

    pub fn product_size(&self) -> ModelSize {
        self.best.product.model.size()
    }

    pub fn total_time(&self) -> Duration {
        self.t_compose + self.t_product + self.t_solve
    }
}

#[derive(Debug, thiserror::Error)]
pub enum VerifyError {
    #[error("policy refers to agent {0}, which the system does not have")]
    UnknownAgent(u32),
    #[error(transparent)]
    Run(#[from] RunError),
}

/// Outcome of checking a stored policy against the full system.
#[derive(Debug, Clone)]
pub struct Verification {
    pub value: f64,
    /// Induced chain over the full system, product with the automaton.
    pub chain: Mc,
}

/// Evaluates a stored policy against every agent: the product it was
/// synthesized on is rebuilt, the policy induces a chain there, and the
/// remaining agents and the automaton are composed on top.
pub fn verify_policy(
    sys: &System,
    f: &Formula,
    file: &PolicyFile,
    vi: ViConfig,
    limits: Limits,
) -> Result<Verification, VerifyError> {
    let n = sys.num_agents();
    let mut seen = BTreeSet::new();
    for &i in &file.agents {
        if i == 0 || i > n || !seen.insert(i) {
            return Err(VerifyError::UnknownAgent(i));
        }
    }
    let dfa: Dfa = translate(f).map_err(RunError::from)?;
    let models: HashMap<u32, Mc> = (1..=n).map(|i| (i, sys.agent_model(i))).collect();
    let subset: Vec<&Mc> = file.agents.iter().map(|i| &models[i]).collect();
    let a = compose_mdp_mcs(&sys.plant_model(), &subset, limits).map_err(RunError::from)?;
    let p = product_mdp(&a, &dfa, limits).map_err(RunError::from)?;
    let m = &p.model;
    let mut bad_action = None;
    let induced = crate::mrp::induced_mc_by(
        m,
        |s| {
            let entry = file.policy.get(&sys.describe(m.desc(s)))?;
            Some(entry.as_ref().and_then(|name| {
                let id = m.action_id(name);
                if id.is_none() {
                    bad_action.get_or_insert_with(|| (s, name.clone()));
                }
                id
            }))
        },
        |s| sys.describe(m.desc(s)),
    )
    .map_err(RunError::from)?;
    if let Some((s, action)) = bad_action {
        return Err(RunError::from(MrpError::UnavailableAction { state: sys.describe(m.desc(s)), action }).into());
    }
    let rest: Vec<&Mc> = (1..=n).filter(|i| !seen.contains(i)).map(|i| &models[&i]).collect();
    let (v, _) = product_mc_joint(&induced, &rest, &dfa, limits).map_err(RunError::from)?;
    let value = reach_prob_mc(&v.model, vi).map_err(RunError::from)?[v.model.initial()];
    Ok(Verification { value, chain: v.model })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn saf_orders_by_size_then_index() {
        let sizes = HashMap::from([
            (1, ModelSize { states: 3, transitions: 7 }),
            (2, ModelSize { states: 3, transitions: 5 }),
            (3, ModelSize { states: 3, transitions: 5 }),
        ]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(select_next_agents(&[1, 2, 3], &sizes, AgentOrder::Saf, 2, &mut rng), vec![2, 3]);
        assert_eq!(select_next_agents(&[1, 3], &sizes, AgentOrder::Saf, 1, &mut rng), vec![3]);
    }

    #[test]
    fn raf_draws_without_replacement() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut got = select_next_agents(&[4, 5, 6], &HashMap::new(), AgentOrder::Raf, 5, &mut rng);
        got.sort_unstable();
        assert_eq!(got, vec![4, 5, 6]);
    }

    #[test]
    fn order_names_parse() {
        assert_eq!("SAF".parse::<AgentOrder>(), Ok(AgentOrder::Saf));
        assert!("xyz".parse::<AgentOrder>().is_err());
    }
}
