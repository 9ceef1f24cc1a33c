//! Product of a model with the mission automaton.
//!
//! The initial product state pairs the model's initial state with the
//! automaton state reached by reading the model's initial label; every later
//! step reads the label of the successor.

use rustc_hash::FxHashMap as HashMap;

use crate::automaton::Dfa;
use crate::compose::{cap_error, BuildError, Joint, KeyIndex, Limits, Source};
use crate::models::{Builder, Mc, Mdp, ModelSize};
use crate::LabelSet;

/// A product model together with the `(model state, automaton state)` pair
/// behind each of its states.
#[derive(Debug, Clone)]
pub struct Product<M> {
    pub model: M,
    pub origin: Vec<(u32, u32)>,
}

impl<M> Product<M> {
    pub fn origin(&self, s: usize) -> (usize, usize) {
        let (m, q) = self.origin[s];
        (m as usize, q as usize)
    }
}

fn build<S: Source>(m: &S, dfa: &Dfa, limits: Limits) -> Result<(Builder, Vec<(u32, u32)>), BuildError> {
    let mut b = Builder::default();
    let mut index: HashMap<(u32, u32), u32> = HashMap::default();
    let mut origin: Vec<(u32, u32)> = Vec::new();
    // automaton successor of q after reading the label of model state s
    let mut step_memo: HashMap<(u32, u32), u32> = HashMap::default();
    let mut step = |q: u32, s: u32| -> u32 {
        *step_memo.entry((q, s)).or_insert_with(|| dfa.step(q as usize, m.label(s as usize)) as u32)
    };
    let mut intern = |key: (u32, u32), b: &mut Builder, origin: &mut Vec<(u32, u32)>| -> Result<u32, BuildError> {
        if let Some(&id) = index.get(&key) {
            return Ok(id);
        }
        if b.num_states() >= limits.max_states {
            return Err(BuildError::StateCap {
                what: "product",
                cap: limits.max_states,
                partial: ModelSize { states: b.num_states(), transitions: b.num_transitions() },
            });
        }
        let (s, q) = (key.0 as usize, key.1);
        let id = b.add_state(m.label(s).clone(), m.desc(s).with_automaton(q), dfa.is_accepting(q as usize));
        index.insert(key, id);
        origin.push(key);
        Ok(id)
    };

    let m0 = m.initial() as u32;
    let q0 = step(dfa.initial() as u32, m0);
    intern((m0, q0), &mut b, &mut origin)?;
    let mut next = 0;
    while next < origin.len() {
        let (s, q) = origin[next];
        next += 1;
        b.open_row();
        for choice in m.rows(s as usize) {
            b.open_choice(choice.action);
            for (t, p) in choice.iter() {
                let id = intern((t, step(q, t)), &mut b, &mut origin)?;
                b.push(id, p);
            }
        }
    }
    Ok((b, origin))
}

pub fn product_mdp(m: &Mdp, dfa: &Dfa, limits: Limits) -> Result<Product<Mdp>, BuildError> {
    let (b, origin) = build(m, dfa, limits)?;
    Ok(Product { model: b.into_mdp(0, m.actions().clone()), origin })
}

pub fn product_mc(m: &Mc, dfa: &Dfa, limits: Limits) -> Result<Product<Mc>, BuildError> {
    let (b, origin) = build(m, dfa, limits)?;
    Ok(Product { model: b.into_mc(0), origin })
}

/// Product of `base ⊗ agents` with `dfa`, built in one pass without
/// materializing the composition. Also returns the size the composition
/// itself would have: its reachable states and their transitions.
pub fn product_mc_joint(
    base: &Mc,
    agents: &[&Mc],
    dfa: &Dfa,
    limits: Limits,
) -> Result<(Product<Mc>, ModelSize), BuildError> {
    let joint = Joint { base, agents };
    let mut states: KeyIndex<Vec<u32>> = KeyIndex::default();
    let mut labels: Vec<LabelSet> = Vec::new();
    let mut expanded: Vec<bool> = Vec::new();
    let mut joint_transitions = 0;
    let mut origin: Vec<(u32, u32)> = Vec::new();
    // indexed by joint state * automaton size + automaton state
    let nq = dfa.num_states();
    const UNSEEN: u32 = u32::MAX;
    let mut step_memo: Vec<u32> = Vec::new();
    let mut pair_id: Vec<u32> = Vec::new();
    let mut b = Builder::default();

    let init = joint.initial_key();
    states.intern(&init[..]);
    labels.push(joint.label(&init));
    expanded.push(false);
    step_memo.resize(nq, UNSEEN);
    pair_id.resize(nq, UNSEEN);
    let q0 = dfa.step(dfa.initial(), &labels[0]) as u32;
    origin.push((0, q0));
    pair_id[q0 as usize] = 0;
    b.add_state(labels[0].clone(), joint.desc(&init).with_automaton(q0), dfa.is_accepting(q0 as usize));

    let mut next = 0;
    while next < origin.len() {
        let (j, q) = origin[next];
        next += 1;
        let key = states.keys[j as usize].clone();
        b.open_row();
        let mut out = 0;
        joint.successors(&key, |action, step| {
            let Some((succ, p)) = step else {
                b.open_choice(action);
                return Ok(());
            };
            out += 1;
            let (t, new) = states.intern(succ);
            if new {
                labels.push(joint.label(succ));
                expanded.push(false);
                step_memo.resize(step_memo.len() + nq, UNSEEN);
                pair_id.resize(pair_id.len() + nq, UNSEEN);
            }
            let slot = t as usize * nq + q as usize;
            if step_memo[slot] == UNSEEN {
                step_memo[slot] = dfa.step(q as usize, &labels[t as usize]) as u32;
            }
            let tq = step_memo[slot];
            let pslot = t as usize * nq + tq as usize;
            let new = pair_id[pslot] == UNSEEN;
            if new {
                pair_id[pslot] = origin.len() as u32;
                origin.push((t, tq));
            }
            let id = pair_id[pslot];
            if new {
                if b.num_states() >= limits.max_states {
                    return Err(cap_error("verification product", limits.max_states, &b));
                }
                let desc = joint.desc(succ).with_automaton(tq);
                b.add_state(labels[t as usize].clone(), desc, dfa.is_accepting(tq as usize));
            }
            b.push(id, p);
            Ok(())
        })?;
        if !expanded[j as usize] {
            expanded[j as usize] = true;
            joint_transitions += out;
        }
    }
    let joint_size = ModelSize { states: states.len(), transitions: joint_transitions };
    Ok((Product { model: b.into_mc(0), origin }, joint_size))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::automaton::translate;
    use crate::compose::compose_system;
    use crate::crossing::gen_crossing;
    use crate::formula::Formula;

    #[test]
    fn initial_state_reads_the_initial_label() {
        let (sys, _) = gen_crossing(1);
        let m = compose_system(&sys, &[1], Limits::default()).unwrap();
        // satisfied by the very first label, so the initial product state is final
        let dfa = translate(&Formula::parse("T.c0").unwrap()).unwrap();
        let p = product_mdp(&m, &dfa, Limits::default()).unwrap();
        assert!(p.model.is_final(p.model.initial()));
        let dfa = translate(&Formula::parse("X T.c0").unwrap()).unwrap();
        let p = product_mdp(&m, &dfa, Limits::default()).unwrap();
        assert!(!p.model.is_final(p.model.initial()));
    }

    #[test]
    fn origins_are_distinct_pairs() {
        let (sys, f) = gen_crossing(2);
        let m = compose_system(&sys, &[1, 2], Limits::default()).unwrap();
        let p = product_mdp(&m, &translate(&f).unwrap(), Limits::default()).unwrap();
        let mut pairs = p.origin.clone();
        pairs.sort_unstable();
        pairs.dedup();
        assert_eq!(pairs.len(), p.model.num_states());
        assert!(p.model.stochasticity_violation(1e-12).is_none());
    }

    #[test]
    fn one_pass_verification_matches_two_steps() {
        use crate::compose::compose_mc_mcs;
        use crate::mrp::{extract_policy, induced_mc, max_reach_prob, reach_prob_mc, ViConfig};
        let (sys, f) = gen_crossing(3);
        let dfa = translate(&f).unwrap();
        let m = compose_system(&sys, &[1], Limits::default()).unwrap();
        let p = product_mdp(&m, &dfa, Limits::default()).unwrap();
        let x = max_reach_prob(&p.model, ViConfig::default()).unwrap();
        let mc = induced_mc(&p.model, &extract_policy(&p.model, &x)).unwrap();
        let (a2, a3) = (sys.agent_model(2), sys.agent_model(3));
        let full = compose_mc_mcs(&mc, &[&a2, &a3], Limits::default()).unwrap();
        let two = product_mc(&full, &dfa, Limits::default()).unwrap();
        let (one, joint) = product_mc_joint(&mc, &[&a2, &a3], &dfa, Limits::default()).unwrap();
        assert_eq!(joint, full.size());
        assert_eq!(one.model.size(), two.model.size());
        let v1 = reach_prob_mc(&one.model, ViConfig::default()).unwrap()[0];
        let v2 = reach_prob_mc(&two.model, ViConfig::default()).unwrap()[0];
        assert!((v1 - v2).abs() < 1e-12);
    }
}
