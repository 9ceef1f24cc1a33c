//! Synchronous parallel composition of a plant (or an already composed
//! model) with agent Markov chains. Only states reachable from the joint
//! initial state are materialized.

use rustc_hash::FxHashMap as HashMap;

use crate::models::{ActionId, Builder, Choice, Mc, Mdp, ModelSize, StateDesc, System};
use crate::LabelSet;

/// Resource caps for explicit model construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Limits {
    pub max_states: usize,
}

impl Default for Limits {
    fn default() -> Self {
        Limits { max_states: 20_000_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BuildError {
    #[error("{what} exceeded the cap of {cap} states (explored {partial} before stopping)")]
    StateCap { what: &'static str, cap: usize, partial: ModelSize },
}

pub(crate) trait Source {
    fn initial(&self) -> usize;
    fn rows(&self, s: usize) -> Vec<Choice<'_>>;
    fn label(&self, s: usize) -> &crate::LabelSet;
    fn desc(&self, s: usize) -> &crate::models::StateDesc;
    fn is_final(&self, s: usize) -> bool;
}

impl Source for Mdp {
    fn initial(&self) -> usize {
        Mdp::initial(self)
    }
    fn rows(&self, s: usize) -> Vec<Choice<'_>> {
        self.choices(s).collect()
    }
    fn label(&self, s: usize) -> &crate::LabelSet {
        Mdp::label(self, s)
    }
    fn desc(&self, s: usize) -> &crate::models::StateDesc {
        Mdp::desc(self, s)
    }
    fn is_final(&self, s: usize) -> bool {
        Mdp::is_final(self, s)
    }
}

impl Source for Mc {
    fn initial(&self) -> usize {
        Mc::initial(self)
    }
    fn rows(&self, s: usize) -> Vec<Choice<'_>> {
        vec![self.row(s)]
    }
    fn label(&self, s: usize) -> &crate::LabelSet {
        Mc::label(self, s)
    }
    fn desc(&self, s: usize) -> &crate::models::StateDesc {
        Mc::desc(self, s)
    }
    fn is_final(&self, s: usize) -> bool {
        Mc::is_final(self, s)
    }
}

/// A base model running in lockstep with agent chains. Joint states are
/// keyed `[base, agent_1, ...]`.
pub(crate) struct Joint<'a, B> {
    pub(crate) base: &'a B,
    pub(crate) agents: &'a [&'a Mc],
}

impl<B: Source> Joint<'_, B> {
    pub(crate) fn initial_key(&self) -> Vec<u32> {
        let mut init = vec![self.base.initial() as u32];
        init.extend(self.agents.iter().map(|a| a.initial() as u32));
        init
    }

    pub(crate) fn label(&self, key: &[u32]) -> LabelSet {
        let base = self.base.label(key[0] as usize);
        let agents = self.agents.iter().zip(&key[1..]).flat_map(|(ag, &s)| ag.label(s as usize).iter());
        base.iter().chain(agents).cloned().collect()
    }

    pub(crate) fn desc(&self, key: &[u32]) -> StateDesc {
        let mut desc = self.base.desc(key[0] as usize).clone();
        for (ag, &s) in self.agents.iter().zip(&key[1..]) {
            desc.agents.extend_from_slice(&ag.desc(s as usize).agents);
        }
        desc
    }

    pub(crate) fn is_final(&self, key: &[u32]) -> bool {
        self.base.is_final(key[0] as usize)
    }

    /// Calls `emit(action, None)` as each base choice opens, then
    /// `emit(action, Some((successor, prob)))` for every joint successor of
    /// positive probability. If some agent is stuck the state gets no
    /// choices at all.
    pub(crate) fn successors<E>(
        &self,
        key: &[u32],
        mut emit: impl FnMut(ActionId, Option<(&[u32], f64)>) -> Result<(), E>,
    ) -> Result<(), E> {
        let k = self.agents.len();
        let rows: Vec<Choice<'_>> = self.agents.iter().zip(&key[1..]).map(|(a, &s)| a.row(s as usize)).collect();
        if rows.iter().any(|r| r.targets.is_empty()) {
            return Ok(());
        }
        let mut cursor = vec![0usize; k];
        let mut succ = vec![0u32; k + 1];
        for choice in self.base.rows(key[0] as usize) {
            emit(choice.action, None)?;
            for (t, p) in choice.iter() {
                cursor.iter_mut().for_each(|c| *c = 0);
                succ[0] = t;
                'combos: loop {
                    let mut prob = p;
                    for (j, (r, &c)) in rows.iter().zip(&cursor).enumerate() {
                        prob *= r.probs[c];
                        succ[j + 1] = r.targets[c];
                    }
                    if prob > 0.0 {
                        emit(choice.action, Some((&succ, prob)))?;
                    }
                    let mut j = k;
                    loop {
                        if j == 0 {
                            break 'combos;
                        }
                        j -= 1;
                        cursor[j] += 1;
                        if cursor[j] < rows[j].targets.len() {
                            continue 'combos;
                        }
                        cursor[j] = 0;
                    }
                }
            }
        }
        Ok(())
    }
}

/// Dense ids for keys in discovery order.
#[derive(Debug)]
pub(crate) struct KeyIndex<K> {
    index: HashMap<K, u32>,
    pub(crate) keys: Vec<K>,
}

impl<K> Default for KeyIndex<K> {
    fn default() -> Self {
        KeyIndex { index: HashMap::default(), keys: Vec::new() }
    }
}

impl<K: Eq + std::hash::Hash + Clone> KeyIndex<K> {
    /// Id of `key` and whether it was just added.
    pub(crate) fn intern<Q>(&mut self, key: &Q) -> (u32, bool)
    where
        K: std::borrow::Borrow<Q>,
        Q: Eq + std::hash::Hash + ToOwned<Owned = K> + ?Sized,
    {
        if let Some(&id) = self.index.get(key) {
            return (id, false);
        }
        let id = self.keys.len() as u32;
        self.index.insert(key.to_owned(), id);
        self.keys.push(key.to_owned());
        (id, true)
    }

    pub(crate) fn len(&self) -> usize {
        self.keys.len()
    }
}

pub(crate) fn cap_error(what: &'static str, cap: usize, b: &Builder) -> BuildError {
    BuildError::StateCap { what, cap, partial: ModelSize { states: b.num_states(), transitions: b.num_transitions() } }
}

fn compose<B: Source>(base: &B, agents: &[&Mc], limits: Limits) -> Result<Builder, BuildError> {
    let joint = Joint { base, agents };
    let mut idx: KeyIndex<Vec<u32>> = KeyIndex::default();
    let mut b = Builder::default();
    let init = joint.initial_key();
    idx.intern(&init[..]);
    b.add_state(joint.label(&init), joint.desc(&init), joint.is_final(&init));

    let mut next = 0;
    while next < idx.len() {
        let key = idx.keys[next].clone();
        next += 1;
        b.open_row();
        joint.successors(&key, |action, step| {
            match step {
                None => b.open_choice(action),
                Some((succ, p)) => {
                    let (id, new) = idx.intern(succ);
                    if new {
                        if b.num_states() >= limits.max_states {
                            return Err(cap_error("composition", limits.max_states, &b));
                        }
                        b.add_state(joint.label(succ), joint.desc(succ), joint.is_final(succ));
                    }
                    b.push(id, p);
                }
            }
            Ok(())
        })?;
    }
    Ok(b)
}

/// `base ⊗ agents[0] ⊗ ...`: actions come from `base`, probabilities multiply.
pub fn compose_mdp_mcs(base: &Mdp, agents: &[&Mc], limits: Limits) -> Result<Mdp, BuildError> {
    let initial = 0;
    Ok(compose(base, agents, limits)?.into_mdp(initial, base.actions().clone()))
}

/// Composition of a Markov chain with further agents.
pub fn compose_mc_mcs(base: &Mc, agents: &[&Mc], limits: Limits) -> Result<Mc, BuildError> {
    Ok(compose(base, agents, limits)?.into_mc(0))
}

/// Plant composed with the agents at the given 1-based indices, in order.
pub fn compose_system(sys: &System, agents: &[u32], limits: Limits) -> Result<Mdp, BuildError> {
    let plant = sys.plant_model();
    let models: Vec<Mc> = agents.iter().map(|&i| sys.agent_model(i)).collect();
    let refs: Vec<&Mc> = models.iter().collect();
    compose_mdp_mcs(&plant, &refs, limits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crossing::gen_crossing;

    #[test]
    fn crossing_with_one_pedestrian() {
        let (sys, _) = gen_crossing(1);
        let m = compose_system(&sys, &[1], Limits::default()).unwrap();
        // 3 plant cells times 3 pedestrian cells, all reachable
        assert_eq!(m.num_states(), 9);
        assert!(m.stochasticity_violation(1e-12).is_none());
        assert_eq!(m.desc(m.initial()).agent_vertex(1), Some(1));
    }

    #[test]
    fn cap_reports_partial_size() {
        let (sys, _) = gen_crossing(3);
        let err = compose_system(&sys, &[1, 2, 3], Limits { max_states: 10 }).unwrap_err();
        let BuildError::StateCap { cap, partial, .. } = err;
        assert_eq!(cap, 10);
        assert_eq!(partial.states, 10);
    }

    #[test]
    fn composing_in_steps_equals_composing_at_once() {
        let (sys, _) = gen_crossing(3);
        let at_once = compose_system(&sys, &[1, 2, 3], Limits::default()).unwrap();
        let m2 = sys.agent_model(2);
        let m3 = sys.agent_model(3);
        let first = compose_system(&sys, &[1], Limits::default()).unwrap();
        let stepped = compose_mdp_mcs(&first, &[&m2, &m3], Limits::default()).unwrap();
        assert_eq!(at_once.size(), stepped.size());
    }
}
