//! Maximal reachability probabilities, policy extraction, induced chains and
//! Monte Carlo estimation.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::models::{ActionId, Builder, Mc, Mdp};

/// Values below this are reported as zero.
pub const REPORT_EPSILON: f64 = 1e-12;

/// Slack used when comparing an action's backup with the optimal value.
const OPTIMAL_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViConfig {
    /// Stop once no value changes by this much in one sweep.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for ViConfig {
    fn default() -> Self {
        ViConfig { tol: 1e-10, max_iter: 1_000_000 }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MrpError {
    #[error("value iteration did not converge after {iterations} sweeps (last change {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("policy has no entry for {} reachable state(s), e.g. {}", .states.len(), .states.first().map(String::as_str).unwrap_or("?"))]
    MissingPolicy { states: Vec<String> },
    #[error("policy chooses action `{action}` which is not available at state {state}")]
    UnavailableAction { state: String, action: String },
}

pub fn clamp_report(p: f64) -> f64 {
    if p < REPORT_EPSILON {
        0.0
    } else {
        p.min(1.0)
    }
}

/// Maximal probability of reaching the final set, per state.
pub fn max_reach_prob(p: &Mdp, cfg: ViConfig) -> Result<Vec<f64>, MrpError> {
    max_reach_prob_observed(p, cfg, |_| {})
}

/// As [`max_reach_prob`], calling `observe` with the iterate after every sweep.
pub fn max_reach_prob_observed(
    p: &Mdp,
    cfg: ViConfig,
    mut observe: impl FnMut(&[f64]),
) -> Result<Vec<f64>, MrpError> {
    let n = p.num_states();
    let mut x: Vec<f64> = (0..n).map(|s| if p.is_final(s) { 1.0 } else { 0.0 }).collect();
    let open: Vec<usize> = (0..n).filter(|&s| !p.is_final(s) && p.has_choices(s)).collect();
    let mut residual = f64::INFINITY;
    for _ in 0..cfg.max_iter {
        residual = 0.0;
        for &s in &open {
            let v = p.choices(s).map(|c| c.expect(&x)).fold(0.0, f64::max).min(1.0);
            residual = residual.max(v - x[s]);
            if v > x[s] {
                x[s] = v;
            }
        }
        observe(&x);
        if residual < cfg.tol {
            return Ok(x);
        }
    }
    Err(MrpError::NotConverged { iterations: cfg.max_iter, residual })
}

/// Probability of reaching the final set in a Markov chain, per state.
pub fn reach_prob_mc(m: &Mc, cfg: ViConfig) -> Result<Vec<f64>, MrpError> {
    let n = m.num_states();
    let mut x: Vec<f64> = (0..n).map(|s| if m.is_final(s) { 1.0 } else { 0.0 }).collect();
    let open: Vec<usize> = (0..n).filter(|&s| !m.is_final(s)).collect();
    let mut residual = f64::INFINITY;
    for _ in 0..cfg.max_iter {
        residual = 0.0;
        for &s in &open {
            let v = m.row(s).expect(&x).min(1.0);
            residual = residual.max((v - x[s]).abs());
            x[s] = v;
        }
        if residual < cfg.tol {
            return Ok(x);
        }
    }
    Err(MrpError::NotConverged { iterations: cfg.max_iter, residual })
}

/// Deterministic stationary policy over the states of one MDP. `None` means
/// the state is left as an absorbing halt.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    pub actions: Arc<[String]>,
    pub choice: Vec<Option<ActionId>>,
}

impl Policy {
    pub fn action_name(&self, s: usize) -> Option<&str> {
        self.choice[s].map(|a| &*self.actions[a as usize])
    }
}

/// Optimal policy for the values `x`.
///
/// Among the actions whose backup matches `x`, states with positive value
/// prefer one that moves toward states already known to reach the final set;
/// this rules out optimal-looking self-loops that never make progress. Ties
/// otherwise go to the smallest action name.
pub fn extract_policy(p: &Mdp, x: &[f64]) -> Policy {
    let n = p.num_states();
    let optimal = |s: usize| p.choices(s).filter(move |c| c.expect(x) >= x[s] - OPTIMAL_SLACK);
    let mut choice: Vec<Option<ActionId>> = vec![None; n];
    let mut done: Vec<bool> = (0..n).map(|s| p.is_final(s)).collect();
    let mut changed = true;
    while changed {
        changed = false;
        for s in 0..n {
            if done[s] || x[s] <= 0.0 {
                continue;
            }
            let pick = optimal(s).find(|c| c.iter().any(|(t, q)| q > 0.0 && done[t as usize]));
            if let Some(c) = pick {
                choice[s] = Some(c.action);
                done[s] = true;
                changed = true;
            }
        }
    }
    for (s, slot) in choice.iter_mut().enumerate() {
        if slot.is_none() {
            let first = if p.is_final(s) { p.choices(s).next() } else { optimal(s).next() };
            *slot = first.or_else(|| p.choices(s).next()).map(|c| c.action);
        }
    }
    Policy { actions: p.actions().clone(), choice }
}

/// Markov chain induced by `pol` on the states reachable under it.
pub fn induced_mc(p: &Mdp, pol: &Policy) -> Result<Mc, MrpError> {
    induced_mc_by(p, |s| Some(pol.choice[s]), |s| format!("#{s}"))
}

/// Induced chain with decisions supplied by `decide`: `None` marks a missing
/// entry, `Some(None)` a halt. `name` renders states for error messages.
pub fn induced_mc_by(
    p: &Mdp,
    mut decide: impl FnMut(usize) -> Option<Option<ActionId>>,
    name: impl Fn(usize) -> String,
) -> Result<Mc, MrpError> {
    let mut b = Builder::default();
    let mut ids: HashMap<u32, u32> = HashMap::new();
    let mut order: Vec<u32> = Vec::new();
    let mut missing = Vec::new();
    let mut add = |s: u32, b: &mut Builder, order: &mut Vec<u32>| -> u32 {
        *ids.entry(s).or_insert_with(|| {
            order.push(s);
            b.add_state(p.label(s as usize).clone(), p.desc(s as usize).clone(), p.is_final(s as usize))
        })
    };
    add(p.initial() as u32, &mut b, &mut order);
    let mut next = 0;
    while next < order.len() {
        let s = order[next];
        let me = next as u32;
        next += 1;
        b.open_row();
        b.open_choice(0);
        let decision = match decide(s as usize) {
            Some(d) => d,
            None if p.is_final(s as usize) || !p.has_choices(s as usize) => None,
            None => {
                missing.push(name(s as usize));
                None
            }
        };
        match decision {
            None => b.push(me, 1.0),
            Some(a) => {
                let c = p.choice(s as usize, a).ok_or_else(|| MrpError::UnavailableAction {
                    state: name(s as usize),
                    action: p.action_name(a).to_string(),
                })?;
                for (t, q) in c.iter() {
                    let id = add(t, &mut b, &mut order);
                    b.push(id, q);
                }
            }
        }
    }
    if !missing.is_empty() {
        return Err(MrpError::MissingPolicy { states: missing });
    }
    Ok(b.into_mc(0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimEstimate {
    pub estimate: f64,
    pub stderr: f64,
    pub runs: u64,
    /// Runs cut off by the horizon before their outcome was settled.
    pub undecided: u64,
}

/// Fraction of `runs` seeded random walks that hit the final set within
/// `horizon` steps. Walks stop early once the final set becomes unreachable.
pub fn simulate(m: &Mc, runs: u64, horizon: u64, seed: u64) -> SimEstimate {
    let n = m.num_states();
    let mut pred: Vec<Vec<u32>> = vec![Vec::new(); n];
    for s in 0..n {
        for (t, q) in m.row(s).iter() {
            if q > 0.0 {
                pred[t as usize].push(s as u32);
            }
        }
    }
    let mut live: Vec<bool> = (0..n).map(|s| m.is_final(s)).collect();
    let mut stack: Vec<usize> = (0..n).filter(|&s| live[s]).collect();
    while let Some(t) = stack.pop() {
        for &s in &pred[t] {
            if !live[s as usize] {
                live[s as usize] = true;
                stack.push(s as usize);
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut hits, mut undecided) = (0u64, 0u64);
    for _ in 0..runs {
        let mut s = m.initial();
        let mut steps = 0;
        loop {
            if m.is_final(s) {
                hits += 1;
                break;
            }
            if !live[s] {
                break;
            }
            if steps == horizon {
                undecided += 1;
                break;
            }
            let row = m.row(s);
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            let mut pick = row.targets[row.targets.len() - 1];
            for (t, q) in row.iter() {
                acc += q;
                if u < acc {
                    pick = t;
                    break;
                }
            }
            s = pick as usize;
            steps += 1;
        }
    }
    let est = if runs == 0 { 0.0 } else { hits as f64 / runs as f64 };
    let stderr = if runs == 0 { 0.0 } else { (est * (1.0 - est) / runs as f64).sqrt() };
    SimEstimate { estimate: est, stderr, runs, undecided }
}

/// On-disk policy: the agents the policy was synthesized for and one entry
/// per product state, keyed by its description. `null` marks a halt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyFile {
    pub agents: Vec<u32>,
    pub policy: BTreeMap<String, Option<String>>,
}

impl PolicyFile {
    /// Entries for every state of `p`, using `key` to describe states.
    pub fn from_policy(agents: Vec<u32>, p: &Mdp, pol: &Policy, key: impl Fn(usize) -> String) -> PolicyFile {
        let policy = (0..p.num_states()).map(|s| (key(s), pol.action_name(s).map(str::to_string))).collect();
        PolicyFile { agents, policy }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("policy serializes")
    }

    pub fn from_json(text: &str) -> Result<PolicyFile, serde_json::Error> {
        serde_json::from_str(text)
    }
}
