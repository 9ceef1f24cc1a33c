use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt;
use std::sync::Arc;

use super::explicit::{Builder, Mc, Mdp, StateDesc, ROW_SUM_TOLERANCE};
use crate::formula::{AtomicProp, Entity};
use crate::label::LabelSet;

pub type VertexId = u32;

/// Environment graph: named vertices, an edge relation and one proposition
/// per vertex.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EnvGraph {
    vertices: Vec<String>,
    index: HashMap<String, VertexId>,
    edges: BTreeSet<(VertexId, VertexId)>,
    labels: Vec<Arc<str>>,
}

impl EnvGraph {
    /// Builds a graph whose vertices are labelled by their own names.
    pub fn new(vertices: impl IntoIterator<Item = impl Into<String>>) -> Self {
        let vertices: Vec<String> = vertices.into_iter().map(Into::into).collect();
        let labels = vertices.iter().map(|v| Arc::from(v.as_str())).collect();
        let index = vertices.iter().enumerate().map(|(i, v)| (v.clone(), i as VertexId)).collect();
        EnvGraph { vertices, index, edges: BTreeSet::new(), labels }
    }

    pub fn add_edge(&mut self, from: VertexId, to: VertexId) {
        self.edges.insert((from, to));
    }

    pub fn set_label(&mut self, v: VertexId, prop: &str) {
        self.labels[v as usize] = Arc::from(prop);
    }

    pub fn vertex(&self, name: &str) -> Option<VertexId> {
        self.index.get(name).copied()
    }

    pub fn name(&self, v: VertexId) -> &str {
        &self.vertices[v as usize]
    }

    pub fn label(&self, v: VertexId) -> &Arc<str> {
        &self.labels[v as usize]
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn vertices(&self) -> &[String] {
        &self.vertices
    }

    pub fn has_edge(&self, from: VertexId, to: VertexId) -> bool {
        self.edges.contains(&(from, to))
    }

    pub fn edges(&self) -> impl Iterator<Item = (VertexId, VertexId)> + '_ {
        self.edges.iter().copied()
    }

    /// Distinct environment propositions.
    pub fn propositions(&self) -> BTreeSet<&str> {
        self.labels.iter().map(|l| &**l).collect()
    }
}

/// Deterministic plant: at most one successor per (state, action).
#[derive(Debug, Clone, PartialEq)]
pub struct Ts {
    pub initial: VertexId,
    pub transitions: Vec<(VertexId, String, VertexId)>,
}

/// Probabilistic plant.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantMdp {
    pub initial: VertexId,
    pub transitions: Vec<(VertexId, String, VertexId, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Plant {
    Ts(Ts),
    Mdp(PlantMdp),
}

impl Plant {
    pub fn initial(&self) -> VertexId {
        match self {
            Plant::Ts(t) => t.initial,
            Plant::Mdp(m) => m.initial,
        }
    }

    /// Transitions with TS entries lifted to probability one.
    pub fn weighted(&self) -> Vec<(VertexId, &str, VertexId, f64)> {
        match self {
            Plant::Ts(t) => t.transitions.iter().map(|(f, a, to)| (*f, a.as_str(), *to, 1.0)).collect(),
            Plant::Mdp(m) => m.transitions.iter().map(|(f, a, to, p)| (*f, a.as_str(), *to, *p)).collect(),
        }
    }
}

/// An uncontrolled agent moving along the environment graph.
#[derive(Debug, Clone, PartialEq)]
pub struct Agent {
    pub name: String,
    pub initial: VertexId,
    pub transitions: Vec<(VertexId, VertexId, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct System {
    pub env: EnvGraph,
    pub plant: Plant,
    /// Agent `i` (1-based) is `agents[i - 1]`.
    pub agents: Vec<Agent>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Diagnostic {
    DuplicateVertex { name: String },
    UnknownVertex { context: String, name: String },
    MissingLabel { vertex: String },
    MissingInitial { component: String },
    EdgeNotInGraph { component: String, from: String, to: String },
    BadProbability { component: String, from: String, to: String, prob: f64 },
    Stochasticity { component: String, state: String, action: Option<String>, sum: f64 },
    Nondeterministic { state: String, action: String, successors: usize },
    DuplicateTransition { component: String, from: String, to: String },
    Deadlock { state: String },
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Diagnostic::DuplicateVertex { name } => write!(f, "vertex `{name}` declared twice"),
            Diagnostic::UnknownVertex { context, name } => write!(f, "{context}: unknown vertex `{name}`"),
            Diagnostic::MissingLabel { vertex } => write!(f, "vertex `{vertex}` has no label"),
            Diagnostic::MissingInitial { component } => write!(f, "{component}: missing initial state"),
            Diagnostic::EdgeNotInGraph { component, from, to } => {
                write!(f, "{component}: transition {from} -> {to} is not an environment edge")
            }
            Diagnostic::BadProbability { component, from, to, prob } => {
                write!(f, "{component}: transition {from} -> {to} has probability {prob} outside [0, 1]")
            }
            Diagnostic::Stochasticity { component, state, action: Some(a), sum } => {
                write!(f, "{component}: row ({state}, {a}) sums to {sum}, expected 1")
            }
            Diagnostic::Stochasticity { component, state, action: None, sum } => {
                write!(f, "{component}: row of state {state} sums to {sum}, expected 1")
            }
            Diagnostic::Nondeterministic { state, action, successors } => {
                write!(f, "plant: ({state}, {action}) has {successors} successors in a deterministic plant")
            }
            Diagnostic::DuplicateTransition { component, from, to } => {
                write!(f, "{component}: transition {from} -> {to} listed twice")
            }
            Diagnostic::Deadlock { state } => write!(f, "plant: reachable state {state} has no available action"),
        }
    }
}

impl System {
    pub fn num_agents(&self) -> u32 {
        self.agents.len() as u32
    }

    pub fn agent(&self, index: u32) -> &Agent {
        &self.agents[index as usize - 1]
    }

    pub fn plant_prop(&self, v: VertexId) -> AtomicProp {
        AtomicProp::new(Entity::Plant, self.env.label(v).clone())
    }

    pub fn agent_prop(&self, index: u32, v: VertexId) -> AtomicProp {
        AtomicProp::new(Entity::Agent(index), self.env.label(v).clone())
    }

    /// Union of the identity-tagged labels of a plant vertex and agent vertices.
    pub fn joint_label(&self, plant: VertexId, agents: &[(u32, VertexId)]) -> LabelSet {
        std::iter::once(self.plant_prop(plant))
            .chain(agents.iter().map(|&(i, v)| self.agent_prop(i, v)))
            .collect()
    }

    /// Checks every structural and stochastic invariant, reporting all
    /// violations at once.
    pub fn validate(&self) -> Vec<Diagnostic> {
        let mut out = Vec::new();
        let env = &self.env;
        let name = |v: VertexId| env.name(v).to_string();

        // plant
        let mut rows: BTreeMap<(VertexId, &str), Vec<(VertexId, f64)>> = BTreeMap::new();
        for (from, action, to, prob) in self.plant.weighted() {
            if !env.has_edge(from, to) {
                out.push(Diagnostic::EdgeNotInGraph { component: "plant".into(), from: name(from), to: name(to) });
            }
            if !(0.0..=1.0).contains(&prob) {
                out.push(Diagnostic::BadProbability { component: "plant".into(), from: name(from), to: name(to), prob });
            }
            let row = rows.entry((from, action)).or_default();
            if row.iter().any(|(t, _)| *t == to) {
                out.push(Diagnostic::DuplicateTransition {
                    component: format!("plant action {action}"),
                    from: name(from),
                    to: name(to),
                });
            }
            row.push((to, prob));
        }
        for ((from, action), row) in &rows {
            if matches!(self.plant, Plant::Ts(_)) && row.len() > 1 {
                out.push(Diagnostic::Nondeterministic {
                    state: name(*from),
                    action: action.to_string(),
                    successors: row.len(),
                });
            }
            let sum: f64 = row.iter().map(|(_, p)| p).sum();
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                out.push(Diagnostic::Stochasticity {
                    component: "plant".into(),
                    state: name(*from),
                    action: Some(action.to_string()),
                    sum,
                });
            }
        }
        let initial = self.plant.initial();
        if initial as usize >= env.num_vertices() {
            out.push(Diagnostic::MissingInitial { component: "plant".into() });
        } else {
            let mut seen = BTreeSet::from([initial]);
            let mut queue = VecDeque::from([initial]);
            while let Some(v) = queue.pop_front() {
                let mut any = false;
                for ((from, _), row) in rows.range((v, "")..) {
                    if *from != v {
                        break;
                    }
                    any = true;
                    for (t, p) in row {
                        if *p > 0.0 && seen.insert(*t) {
                            queue.push_back(*t);
                        }
                    }
                }
                if !any {
                    out.push(Diagnostic::Deadlock { state: name(v) });
                }
            }
        }

        // agents
        for (k, agent) in self.agents.iter().enumerate() {
            let component = format!("agent {} ({})", k + 1, agent.name);
            if agent.initial as usize >= env.num_vertices() {
                out.push(Diagnostic::MissingInitial { component: component.clone() });
            }
            let mut states = BTreeSet::from([agent.initial]);
            let mut sums: BTreeMap<VertexId, f64> = BTreeMap::new();
            let mut seen_edges = BTreeSet::new();
            for &(from, to, prob) in &agent.transitions {
                states.insert(from);
                states.insert(to);
                if !env.has_edge(from, to) {
                    out.push(Diagnostic::EdgeNotInGraph { component: component.clone(), from: name(from), to: name(to) });
                }
                if !(0.0..=1.0).contains(&prob) {
                    out.push(Diagnostic::BadProbability { component: component.clone(), from: name(from), to: name(to), prob });
                }
                if !seen_edges.insert((from, to)) {
                    out.push(Diagnostic::DuplicateTransition { component: component.clone(), from: name(from), to: name(to) });
                }
                *sums.entry(from).or_default() += prob;
            }
            for s in states {
                if s as usize >= env.num_vertices() {
                    continue;
                }
                let sum = sums.get(&s).copied().unwrap_or(0.0);
                if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                    out.push(Diagnostic::Stochasticity { component: component.clone(), state: name(s), action: None, sum });
                }
            }
        }
        out
    }

    /// The plant as an MDP over its reachable vertices. Actions are sorted by
    /// name.
    pub fn plant_model(&self) -> Mdp {
        let weighted = self.plant.weighted();
        let names: BTreeSet<&str> = weighted.iter().map(|(_, a, _, _)| *a).collect();
        let actions: Arc<[String]> = names.iter().map(|a| a.to_string()).collect::<Vec<_>>().into();
        let mut rows: BTreeMap<VertexId, BTreeMap<u32, Vec<(VertexId, f64)>>> = BTreeMap::new();
        for (from, action, to, prob) in weighted {
            if prob > 0.0 {
                let a = actions.binary_search_by(|x| x.as_str().cmp(action)).unwrap() as u32;
                rows.entry(from).or_default().entry(a).or_default().push((to, prob));
            }
        }
        let mut b = Builder::default();
        let mut ids: HashMap<VertexId, u32> = HashMap::new();
        let init = self.plant.initial();
        ids.insert(init, b.add_state(LabelSet::singleton(self.plant_prop(init)), StateDesc::plant(init), false));
        let mut order = vec![init];
        let mut next = 0;
        while next < order.len() {
            let v = order[next];
            next += 1;
            b.open_row();
            for (a, row) in rows.get(&v).into_iter().flatten() {
                b.open_choice(*a);
                for &(to, p) in row {
                    let id = *ids.entry(to).or_insert_with(|| {
                        order.push(to);
                        b.add_state(LabelSet::singleton(self.plant_prop(to)), StateDesc::plant(to), false)
                    });
                    b.push(id, p);
                }
            }
        }
        b.into_mdp(0, actions)
    }

    /// Agent `index` as a Markov chain over its reachable vertices.
    pub fn agent_model(&self, index: u32) -> Mc {
        let agent = self.agent(index);
        let mut rows: BTreeMap<VertexId, Vec<(VertexId, f64)>> = BTreeMap::new();
        for &(from, to, p) in &agent.transitions {
            if p > 0.0 {
                rows.entry(from).or_default().push((to, p));
            }
        }
        let mut b = Builder::default();
        let mut ids: HashMap<VertexId, u32> = HashMap::new();
        let init = agent.initial;
        let mk = |v: VertexId| (LabelSet::singleton(self.agent_prop(index, v)), StateDesc::agent(index, v));
        let (l, d) = mk(init);
        ids.insert(init, b.add_state(l, d, false));
        let mut order = vec![init];
        let mut next = 0;
        while next < order.len() {
            let v = order[next];
            next += 1;
            b.open_row();
            b.open_choice(0);
            for &(to, p) in rows.get(&v).into_iter().flatten() {
                let id = *ids.entry(to).or_insert_with(|| {
                    order.push(to);
                    let (l, d) = mk(to);
                    b.add_state(l, d, false)
                });
                b.push(id, p);
            }
        }
        b.into_mc(0)
    }

    /// Human-readable `T:c0 1:c1 q0` rendering of a state description.
    pub fn describe(&self, d: &StateDesc) -> String {
        let mut parts = Vec::new();
        if let Some(v) = d.plant {
            parts.push(format!("T:{}", self.env.name(v)));
        }
        let mut agents = d.agents.clone();
        agents.sort();
        parts.extend(agents.iter().map(|(i, v)| format!("{i}:{}", self.env.name(*v))));
        parts.extend(d.automaton.iter().map(|q| format!("q{q}")));
        parts.join(" ")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::ModelSize;

    fn line() -> System {
        let mut env = EnvGraph::new(["a", "b"]);
        env.set_label(0, "pa");
        env.set_label(1, "pb");
        for (f, t) in [(0, 0), (0, 1), (1, 1), (1, 0)] {
            env.add_edge(f, t);
        }
        let plant = Ts { initial: 0, transitions: vec![(0, "go".into(), 1), (1, "stay".into(), 1)] };
        let agent = Agent { name: "x".into(), initial: 1, transitions: vec![(1, 0, 0.5), (1, 1, 0.5), (0, 0, 1.0)] };
        System { env, plant: Plant::Ts(plant), agents: vec![agent] }
    }

    #[test]
    fn valid_system_has_no_diagnostics() {
        assert!(line().validate().is_empty());
    }

    #[test]
    fn short_agent_row_is_reported() {
        let mut sys = line();
        sys.agents[0].transitions[0].2 = 0.4;
        let d = sys.validate();
        assert!(matches!(&d[..], [Diagnostic::Stochasticity { action: None, .. }]), "{d:?}");
    }

    #[test]
    fn missing_edge_and_deadlock_are_reported() {
        let mut sys = line();
        sys.plant = Plant::Ts(Ts { initial: 0, transitions: vec![(0, "go".into(), 1)] });
        sys.env = {
            let mut env = EnvGraph::new(["a", "b"]);
            env.set_label(0, "pa");
            env.set_label(1, "pb");
            env.add_edge(0, 0);
            env.add_edge(1, 1);
            env.add_edge(1, 0);
            env
        };
        let d = sys.validate();
        assert!(d.iter().any(|d| matches!(d, Diagnostic::EdgeNotInGraph { .. })));
        assert!(d.contains(&Diagnostic::Deadlock { state: "b".into() }));
    }

    #[test]
    fn ts_with_two_successors_is_nondeterministic() {
        let mut sys = line();
        if let Plant::Ts(ts) = &mut sys.plant {
            ts.transitions.push((0, "go".into(), 0));
        }
        assert!(sys.validate().iter().any(|d| matches!(d, Diagnostic::Nondeterministic { successors: 2, .. })));
    }

    #[test]
    fn plant_and_agent_models_keep_reachable_states() {
        let sys = line();
        let p = sys.plant_model();
        assert_eq!(p.size(), ModelSize { states: 2, transitions: 2 });
        assert_eq!(&*p.actions()[0], "go");
        let m = sys.agent_model(1);
        assert_eq!(m.num_states(), 2);
        assert!(m.label(m.initial()).contains(&AtomicProp::agent(1, "pb")));
    }
}
