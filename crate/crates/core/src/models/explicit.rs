//! Explicit-state MDPs and Markov chains stored as compressed sparse rows.

use std::fmt;
use std::sync::Arc;

use crate::label::LabelSet;

pub type ActionId = u32;

/// Stochasticity tolerance for every row.
pub const ROW_SUM_TOLERANCE: f64 = 1e-9;

/// Where a state of a composed or product model comes from.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct StateDesc {
    /// Plant vertex, absent for agent-only chains.
    pub plant: Option<u32>,
    /// `(agent index, vertex)` in composition order.
    pub agents: Vec<(u32, u32)>,
    /// Automaton states, innermost product first.
    pub automaton: Vec<u32>,
}

impl StateDesc {
    pub fn plant(vertex: u32) -> Self {
        StateDesc { plant: Some(vertex), ..Default::default() }
    }

    pub fn agent(index: u32, vertex: u32) -> Self {
        StateDesc { agents: vec![(index, vertex)], ..Default::default() }
    }

    /// Appends the agent components of `other`.
    pub fn join(&self, other: &StateDesc) -> StateDesc {
        let mut out = self.clone();
        out.agents.extend_from_slice(&other.agents);
        out
    }

    pub fn with_automaton(&self, q: u32) -> StateDesc {
        let mut out = self.clone();
        out.automaton.push(q);
        out
    }

    pub fn agent_vertex(&self, index: u32) -> Option<u32> {
        self.agents.iter().find(|(i, _)| *i == index).map(|(_, v)| *v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ModelSize {
    pub states: usize,
    pub transitions: usize,
}

impl fmt::Display for ModelSize {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} states / {} transitions", self.states, self.transitions)
    }
}

/// Shared row storage: states own a range of choices, choices own a range of
/// transitions.
#[derive(Debug, Clone)]
pub(crate) struct Sparse {
    initial: u32,
    choice_start: Vec<u32>,
    trans_start: Vec<u32>,
    targets: Vec<u32>,
    probs: Vec<f64>,
    labels: Vec<LabelSet>,
    desc: Vec<StateDesc>,
    finals: Vec<bool>,
}

impl Sparse {
    fn num_states(&self) -> usize {
        self.labels.len()
    }

    fn choices(&self, s: usize) -> std::ops::Range<usize> {
        self.choice_start[s] as usize..self.choice_start[s + 1] as usize
    }

    fn row(&self, c: usize) -> (&[u32], &[f64]) {
        let r = self.trans_start[c] as usize..self.trans_start[c + 1] as usize;
        (&self.targets[r.clone()], &self.probs[r])
    }
}

/// Incremental construction in state-index order: states may be added at any
/// time, but rows must be opened for state 0, 1, 2, ... in sequence.
#[derive(Debug, Default)]
pub(crate) struct Builder {
    choice_start: Vec<u32>,
    trans_start: Vec<u32>,
    targets: Vec<u32>,
    probs: Vec<f64>,
    labels: Vec<LabelSet>,
    desc: Vec<StateDesc>,
    finals: Vec<bool>,
    choice_action: Vec<ActionId>,
}

impl Builder {
    pub(crate) fn add_state(&mut self, label: LabelSet, desc: StateDesc, is_final: bool) -> u32 {
        self.labels.push(label);
        self.desc.push(desc);
        self.finals.push(is_final);
        (self.labels.len() - 1) as u32
    }

    pub(crate) fn num_states(&self) -> usize {
        self.labels.len()
    }

    pub(crate) fn num_transitions(&self) -> usize {
        self.targets.len()
    }

    pub(crate) fn open_row(&mut self) {
        self.choice_start.push(self.trans_start.len() as u32);
    }

    pub(crate) fn open_choice(&mut self, action: ActionId) {
        self.trans_start.push(self.targets.len() as u32);
        self.choice_action.push(action);
    }

    pub(crate) fn push(&mut self, target: u32, prob: f64) {
        self.targets.push(target);
        self.probs.push(prob);
    }

    fn finish(mut self, initial: u32) -> (Sparse, Vec<ActionId>) {
        assert_eq!(self.choice_start.len(), self.labels.len(), "every state needs an opened row");
        self.choice_start.push(self.trans_start.len() as u32);
        self.trans_start.push(self.targets.len() as u32);
        let core = Sparse {
            initial,
            choice_start: self.choice_start,
            trans_start: self.trans_start,
            targets: self.targets,
            probs: self.probs,
            labels: self.labels,
            desc: self.desc,
            finals: self.finals,
        };
        (core, self.choice_action)
    }

    pub(crate) fn into_mdp(self, initial: u32, actions: Arc<[String]>) -> Mdp {
        let (core, choice_action) = self.finish(initial);
        Mdp { core, actions, choice_action }
    }

    pub(crate) fn into_mc(self, initial: u32) -> Mc {
        let (core, _) = self.finish(initial);
        debug_assert!((0..core.num_states()).all(|s| core.choices(s).len() == 1));
        Mc { core }
    }
}

/// One enabled action at a state and its distribution.
#[derive(Debug, Clone, Copy)]
pub struct Choice<'a> {
    pub action: ActionId,
    pub targets: &'a [u32],
    pub probs: &'a [f64],
}

impl Choice<'_> {
    pub fn iter(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        self.targets.iter().copied().zip(self.probs.iter().copied())
    }

    /// Expected value of `x` after taking this choice.
    pub fn expect(&self, x: &[f64]) -> f64 {
        self.iter().map(|(t, p)| p * x[t as usize]).sum()
    }
}

/// Markov decision process with labels, state descriptions and a final set.
/// Action ids index a shared, name-sorted action table.
#[derive(Debug, Clone)]
pub struct Mdp {
    core: Sparse,
    actions: Arc<[String]>,
    choice_action: Vec<ActionId>,
}

impl Mdp {
    pub fn num_states(&self) -> usize {
        self.core.num_states()
    }

    pub fn num_transitions(&self) -> usize {
        self.core.targets.len()
    }

    pub fn num_choices(&self) -> usize {
        self.choice_action.len()
    }

    pub fn size(&self) -> ModelSize {
        ModelSize { states: self.num_states(), transitions: self.num_transitions() }
    }

    pub fn initial(&self) -> usize {
        self.core.initial as usize
    }

    pub fn actions(&self) -> &Arc<[String]> {
        &self.actions
    }

    pub fn action_name(&self, a: ActionId) -> &str {
        &self.actions[a as usize]
    }

    pub fn action_id(&self, name: &str) -> Option<ActionId> {
        self.actions.binary_search_by(|a| a.as_str().cmp(name)).ok().map(|i| i as ActionId)
    }

    /// Enabled choices at `s`, in ascending action order.
    pub fn choices(&self, s: usize) -> impl Iterator<Item = Choice<'_>> + '_ {
        self.core.choices(s).map(move |c| {
            let (targets, probs) = self.core.row(c);
            Choice { action: self.choice_action[c], targets, probs }
        })
    }

    pub fn choice(&self, s: usize, action: ActionId) -> Option<Choice<'_>> {
        self.choices(s).find(|c| c.action == action)
    }

    pub fn has_choices(&self, s: usize) -> bool {
        !self.core.choices(s).is_empty()
    }

    pub fn label(&self, s: usize) -> &LabelSet {
        &self.core.labels[s]
    }

    pub fn desc(&self, s: usize) -> &StateDesc {
        &self.core.desc[s]
    }

    pub fn is_final(&self, s: usize) -> bool {
        self.core.finals[s]
    }

    pub fn finals(&self) -> &[bool] {
        &self.core.finals
    }

    /// First `(state, action, row sum)` whose distribution is not stochastic.
    pub fn stochasticity_violation(&self, tol: f64) -> Option<(usize, ActionId, f64)> {
        (0..self.num_states()).find_map(|s| {
            self.choices(s).find_map(|c| {
                let sum: f64 = c.probs.iter().sum();
                ((sum - 1.0).abs() > tol).then_some((s, c.action, sum))
            })
        })
    }
}

/// Discrete-time Markov chain with labels, descriptions and a final set.
#[derive(Debug, Clone)]
pub struct Mc {
    core: Sparse,
}

impl Mc {
    pub fn num_states(&self) -> usize {
        self.core.num_states()
    }

    pub fn num_transitions(&self) -> usize {
        self.core.targets.len()
    }

    pub fn size(&self) -> ModelSize {
        ModelSize { states: self.num_states(), transitions: self.num_transitions() }
    }

    pub fn initial(&self) -> usize {
        self.core.initial as usize
    }

    pub fn row(&self, s: usize) -> Choice<'_> {
        let (targets, probs) = self.core.row(s);
        Choice { action: 0, targets, probs }
    }

    pub fn label(&self, s: usize) -> &LabelSet {
        &self.core.labels[s]
    }

    pub fn desc(&self, s: usize) -> &StateDesc {
        &self.core.desc[s]
    }

    pub fn is_final(&self, s: usize) -> bool {
        self.core.finals[s]
    }

    pub fn finals(&self) -> &[bool] {
        &self.core.finals
    }

    pub fn stochasticity_violation(&self, tol: f64) -> Option<(usize, f64)> {
        (0..self.num_states()).find_map(|s| {
            let sum: f64 = self.row(s).probs.iter().sum();
            ((sum - 1.0).abs() > tol).then_some((s, sum))
        })
    }
}
