//! Independent reference implementations and random instance generators.
//! Slow and simple on purpose; used only by tests.

use std::collections::{BTreeSet, HashSet};

use rand::seq::SliceRandom;
use rand::Rng;

use crate::formula::{AtomicProp, Formula};
use crate::models::{Agent, EnvGraph, Mc, Mdp, Plant, PlantMdp, System, Ts};

/// Reachability probabilities of a finite chain given row by row, solved
/// exactly by Gaussian elimination on the states that can reach `finals`.
pub fn solve_reach(n: usize, finals: &[bool], rows: &dyn Fn(usize) -> Vec<(usize, f64)>) -> Vec<f64> {
    let succ: Vec<Vec<(usize, f64)>> = (0..n).map(rows).collect();
    let mut live = finals.to_vec();
    let mut grew = true;
    while grew {
        grew = false;
        for s in 0..n {
            if !live[s] && succ[s].iter().any(|&(t, p)| p > 0.0 && live[t]) {
                live[s] = true;
                grew = true;
            }
        }
    }
    let unknown: Vec<usize> = (0..n).filter(|&s| live[s] && !finals[s]).collect();
    let mut pos = vec![usize::MAX; n];
    for (i, &s) in unknown.iter().enumerate() {
        pos[s] = i;
    }
    let k = unknown.len();
    // (I - P_uu) x = P_uF 1
    let mut a = vec![vec![0.0; k + 1]; k];
    for (i, &s) in unknown.iter().enumerate() {
        a[i][i] += 1.0;
        for &(t, p) in &succ[s] {
            if finals[t] {
                a[i][k] += p;
            } else if pos[t] != usize::MAX {
                a[i][pos[t]] -= p;
            }
        }
    }
    for col in 0..k {
        let piv = (col..k).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, piv);
        let d = a[col][col];
        for v in &mut a[col][col..=k] {
            *v /= d;
        }
        let pivot = a[col].clone();
        for (r, row) in a.iter_mut().enumerate() {
            if r != col && row[col] != 0.0 {
                let f = row[col];
                for (v, p) in row[col..=k].iter_mut().zip(&pivot[col..=k]) {
                    *v -= f * p;
                }
            }
        }
    }
    (0..n)
        .map(|s| if finals[s] { 1.0 } else if pos[s] != usize::MAX { a[pos[s]][k] } else { 0.0 })
        .collect()
}

/// Exact reachability probability from the initial state of `m`.
pub fn mc_reach_exact(m: &Mc) -> Vec<f64> {
    solve_reach(m.num_states(), m.finals(), &|s| m.row(s).iter().map(|(t, p)| (t as usize, p)).collect())
}

/// Best value at the initial state over every deterministic stationary
/// policy, or `None` when there are more than `max_policies` of them.
/// States without actions are treated as absorbing.
pub fn exhaustive_max_reach(m: &Mdp, max_policies: u64) -> Option<f64> {
    let n = m.num_states();
    let options: Vec<Vec<u32>> = (0..n)
        .map(|s| if m.is_final(s) { Vec::new() } else { m.choices(s).map(|c| c.action).collect() })
        .collect();
    let mut count: u64 = 1;
    for o in &options {
        count = count.checked_mul(o.len().max(1) as u64)?;
        if count > max_policies {
            return None;
        }
    }
    let mut pick = vec![0usize; n];
    let mut best: f64 = 0.0;
    loop {
        let rows = |s: usize| -> Vec<(usize, f64)> {
            match options[s].get(pick[s]) {
                Some(&a) => m.choice(s, a).unwrap().iter().map(|(t, p)| (t as usize, p)).collect(),
                None => vec![(s, 1.0)],
            }
        };
        best = best.max(solve_reach(n, m.finals(), &rows)[m.initial()]);
        let mut s = 0;
        loop {
            if s == n {
                return Some(best);
            }
            pick[s] += 1;
            if pick[s] < options[s].len() {
                break;
            }
            pick[s] = 0;
            s += 1;
        }
    }
}

/// Number of deterministic stationary policies of `m`, saturating.
pub fn policy_count(m: &Mdp) -> u64 {
    (0..m.num_states())
        .filter(|&s| !m.is_final(s))
        .fold(1u64, |acc, s| acc.saturating_mul(m.choices(s).count().max(1) as u64))
}

/// Reachable joint states and `(state, action, successor)` triples of the
/// plant composed with `agents`, found by scanning the full Cartesian
/// product of vertex tuples until no new state appears.
pub fn brute_force_compose(sys: &System, agents: &[u32]) -> (usize, usize) {
    let nv = sys.env.num_vertices() as u32;
    let k = agents.len();
    let plant = sys.plant.weighted();
    let actions: BTreeSet<&str> = plant.iter().map(|t| t.1).collect();
    let plant_p = |f: u32, a: &str, t: u32| -> f64 {
        plant.iter().filter(|x| x.0 == f && x.1 == a && x.2 == t).map(|x| x.3).sum()
    };
    let agent_p = |i: u32, f: u32, t: u32| -> f64 {
        sys.agent(i).transitions.iter().filter(|x| x.0 == f && x.1 == t).map(|x| x.2).sum()
    };
    let mut all: Vec<Vec<u32>> = vec![Vec::new()];
    for _ in 0..=k {
        all = all
            .into_iter()
            .flat_map(|prefix| {
                (0..nv).map(move |v| {
                    let mut p = prefix.clone();
                    p.push(v);
                    p
                })
            })
            .collect();
    }
    let prob = |s: &[u32], a: &str, t: &[u32]| -> f64 {
        let mut p = plant_p(s[0], a, t[0]);
        for j in 0..k {
            if p == 0.0 {
                break;
            }
            p *= agent_p(agents[j], s[j + 1], t[j + 1]);
        }
        p
    };
    let mut init = vec![sys.plant.initial()];
    init.extend(agents.iter().map(|&i| sys.agent(i).initial));
    let mut reached: HashSet<Vec<u32>> = HashSet::from([init]);
    loop {
        let before = reached.len();
        let snapshot: Vec<Vec<u32>> = reached.iter().cloned().collect();
        for s in &snapshot {
            for t in &all {
                if !reached.contains(t) && actions.iter().any(|a| prob(s, a, t) > 0.0) {
                    reached.insert(t.clone());
                }
            }
        }
        if reached.len() == before {
            break;
        }
    }
    let transitions = reached
        .iter()
        .map(|s| actions.iter().map(|a| all.iter().filter(|t| prob(s, a, t) > 0.0).count()).sum::<usize>())
        .sum();
    (reached.len(), transitions)
}

#[derive(Debug, Clone, Copy)]
pub struct SystemShape {
    pub max_vertices: u32,
    pub max_agents: u32,
    pub max_plant_states: u32,
    pub max_actions: u32,
}

impl Default for SystemShape {
    fn default() -> Self {
        SystemShape { max_vertices: 4, max_agents: 2, max_plant_states: 3, max_actions: 2 }
    }
}

/// Random distribution over `support`, rounded to tenths so rows sum to one
/// exactly in decimal.
fn random_row(rng: &mut impl Rng, support: &[u32]) -> Vec<(u32, f64)> {
    let mut parts = vec![1u32; support.len()];
    for _ in support.len()..10 {
        parts[rng.gen_range(0..support.len())] += 1;
    }
    support.iter().zip(parts).map(|(&t, p)| (t, p as f64 / 10.0)).collect()
}

fn random_subset(rng: &mut impl Rng, from: &[u32], max: usize) -> Vec<u32> {
    let k = rng.gen_range(1..=max.min(from.len()));
    let mut v: Vec<u32> = from.choose_multiple(rng, k).copied().collect();
    v.sort_unstable();
    v
}

/// A small random system that passes validation.
pub fn random_system(rng: &mut impl Rng, shape: SystemShape) -> System {
    let nv = rng.gen_range(2..=shape.max_vertices.max(2));
    let vertices: Vec<u32> = (0..nv).collect();
    let mut env = EnvGraph::new((0..nv).map(|v| format!("v{v}")));
    // a few vertices may share a proposition
    for v in 0..nv {
        let prop = if rng.gen_bool(0.25) { format!("p{}", rng.gen_range(0..nv)) } else { format!("p{v}") };
        env.set_label(v, &prop);
    }
    let np = rng.gen_range(2.min(shape.max_plant_states)..=shape.max_plant_states.min(nv));
    let plant_states: Vec<u32> = vertices.choose_multiple(rng, np as usize).copied().collect();
    let actions: Vec<String> = (0..shape.max_actions).map(|a| ["a", "b", "c", "d"][a as usize % 4].to_string()).collect();
    let deterministic = rng.gen_bool(0.5);
    let mut ts = Vec::new();
    let mut mdp = Vec::new();
    for &s in &plant_states {
        let avail = random_subset(rng, &(0..shape.max_actions).collect::<Vec<_>>(), shape.max_actions as usize);
        for a in avail {
            if deterministic {
                // favour moving on over staying put
                let t = if rng.gen_bool(0.7) {
                    *plant_states.iter().filter(|&&t| t != s).collect::<Vec<_>>().choose(rng).map_or(&s, |t| *t)
                } else {
                    s
                };
                ts.push((s, actions[a as usize].clone(), t));
            } else {
                let support = random_subset(rng, &plant_states, 2);
                for (t, p) in random_row(rng, &support) {
                    mdp.push((s, actions[a as usize].clone(), t, p));
                }
            }
        }
    }
    let initial = plant_states[0];
    let plant = if deterministic {
        Plant::Ts(Ts { initial, transitions: ts })
    } else {
        Plant::Mdp(PlantMdp { initial, transitions: mdp })
    };
    let na = if rng.gen_bool(0.1) { 0 } else { rng.gen_range(1..=shape.max_agents) };
    let agents = (1..=na)
        .map(|i| {
            let states = random_subset(rng, &vertices, nv as usize);
            let mut transitions = Vec::new();
            for &s in &states {
                let support = random_subset(rng, &states, 3);
                for (t, p) in random_row(rng, &support) {
                    transitions.push((s, t, p));
                }
            }
            Agent { name: format!("agent{i}"), initial: *states.choose(rng).unwrap(), transitions }
        })
        .collect();
    for (f, _, t, _) in plant_edges(&plant) {
        env.add_edge(f, t);
    }
    let mut sys = System { env, plant, agents };
    let agent_edges: Vec<(u32, u32)> =
        sys.agents.iter().flat_map(|a| a.transitions.iter().map(|&(f, t, _)| (f, t))).collect();
    for (f, t) in agent_edges {
        sys.env.add_edge(f, t);
    }
    debug_assert!(sys.validate().is_empty(), "{:?}", sys.validate());
    sys
}

fn plant_edges(p: &Plant) -> Vec<(u32, String, u32, f64)> {
    p.weighted().into_iter().map(|(f, a, t, q)| (f, a.to_string(), t, q)).collect()
}

/// Atoms that can be true somewhere in `sys`.
pub fn system_atoms(sys: &System) -> Vec<AtomicProp> {
    let mut out = BTreeSet::new();
    for (f, _, t, _) in sys.plant.weighted() {
        out.insert(sys.plant_prop(f));
        out.insert(sys.plant_prop(t));
    }
    for i in 1..=sys.num_agents() {
        for &(f, t, _) in &sys.agent(i).transitions {
            out.insert(sys.agent_prop(i, f));
            out.insert(sys.agent_prop(i, t));
        }
    }
    out.into_iter().collect()
}

/// Random co-safe formula of bounded depth over `atoms`. Negation is only
/// placed over boolean combinations of atoms.
pub fn random_formula(rng: &mut impl Rng, atoms: &[AtomicProp], depth: u32) -> Formula {
    fn boolean(rng: &mut impl Rng, atoms: &[AtomicProp], depth: u32) -> Formula {
        if depth == 0 || rng.gen_bool(0.4) {
            return match rng.gen_range(0..10) {
                0 => Formula::True,
                1 => Formula::not(Formula::atom(atoms.choose(rng).unwrap().clone())),
                _ => Formula::atom(atoms.choose(rng).unwrap().clone()),
            };
        }
        match rng.gen_range(0..3) {
            0 => Formula::not(boolean(rng, atoms, depth - 1)),
            1 => Formula::and(boolean(rng, atoms, depth - 1), boolean(rng, atoms, depth - 1)),
            _ => Formula::or(boolean(rng, atoms, depth - 1), boolean(rng, atoms, depth - 1)),
        }
    }
    if depth == 0 || rng.gen_bool(0.15) {
        return boolean(rng, atoms, 1);
    }
    match rng.gen_range(0..6) {
        0 => Formula::and(random_formula(rng, atoms, depth - 1), random_formula(rng, atoms, depth - 1)),
        1 => Formula::or(random_formula(rng, atoms, depth - 1), random_formula(rng, atoms, depth - 1)),
        2 => Formula::next(random_formula(rng, atoms, depth - 1)),
        3 => Formula::eventually(random_formula(rng, atoms, depth - 1)),
        _ => Formula::until(random_formula(rng, atoms, depth - 1), random_formula(rng, atoms, depth - 1)),
    }
}

/// A randomized crossing within `shape`: the plant drives along a line of
/// cells while agents wander over random chains with absorbing cells. The
/// mission is to reach the last cell without sharing a cell with any agent
/// first.
pub fn random_corridor(rng: &mut impl Rng, shape: SystemShape) -> (System, Formula) {
    use crate::formula::AtomicProp as Ap;
    let n = rng.gen_range(3..=shape.max_vertices.max(3));
    let mut env = EnvGraph::new((0..n).map(|v| format!("v{v}")));
    for v in 0..n {
        env.set_label(v, &format!("p{v}"));
    }
    let last = n - 1;
    // stops along the road: start, maybe one interior cell, goal
    let mid = rng.gen_range(1..last);
    let stops = if shape.max_plant_states >= 3 { vec![0, mid, last] } else { vec![0, last] };
    let slip = rng.gen_bool(0.4);
    let mut transitions = Vec::new();
    for w in stops.windows(2) {
        let (s, t) = (w[0], w[1]);
        if rng.gen_bool(0.7) {
            transitions.push((s, "wait".to_string(), s, 1.0));
        }
        if slip {
            let q = [0.7, 0.8, 0.9][rng.gen_range(0..3)];
            transitions.push((s, "go".to_string(), t, q));
            transitions.push((s, "go".to_string(), s, 1.0 - q));
        } else {
            transitions.push((s, "go".to_string(), t, 1.0));
        }
    }
    transitions.push((last, "wait".to_string(), last, 1.0));
    let plant = if slip {
        Plant::Mdp(PlantMdp { initial: 0, transitions })
    } else {
        Plant::Ts(Ts { initial: 0, transitions: transitions.into_iter().map(|(f, a, t, _)| (f, a, t)).collect() })
    };
    let na = rng.gen_range(1..=shape.max_agents.max(1));
    let cells: Vec<u32> = (0..n).collect();
    let agents: Vec<Agent> = (1..=na)
        .map(|i| {
            // every agent can cross the plant's interior stop
            let mut mine = random_subset(rng, &cells, 2);
            if !mine.contains(&mid) {
                mine.push(mid);
                mine.sort_unstable();
            }
            let mut transitions = Vec::new();
            for &c in &mine {
                if c != mid && rng.gen_bool(0.4) {
                    transitions.push((c, c, 1.0));
                } else {
                    let support = random_subset(rng, &mine, 3);
                    transitions.extend(random_row(rng, &support).into_iter().map(|(t, p)| (c, t, p)));
                }
            }
            let initial = *mine.iter().find(|&&c| c != 0 && c != last).unwrap_or(&mine[0]);
            Agent { name: format!("agent{i}"), initial, transitions }
        })
        .collect();
    for (f, _, t, _) in plant_edges(&plant) {
        env.add_edge(f, t);
    }
    for a in &agents {
        for &(f, t, _) in &a.transitions {
            env.add_edge(f, t);
        }
    }
    let sys = System { env, plant, agents };
    let cell = |v: u32| format!("p{v}");
    // meeting at the goal cell is harmless since the goal is checked first
    let v = if stops.len() == 3 { mid } else { 0 };
    let i = rng.gen_range(1..=na);
    let bad = Formula::and(Formula::atom(Ap::plant(cell(v).as_str())), Formula::atom(Ap::agent(i, cell(v).as_str())));
    let goal = Formula::atom(Ap::plant(cell(last).as_str()));
    let f = if rng.gen_bool(0.8) {
        Formula::until(Formula::not(bad), goal)
    } else {
        Formula::until(Formula::not(bad), Formula::next(goal))
    };
    debug_assert!(sys.validate().is_empty(), "{:?}", sys.validate());
    (sys, f)
}

/// A random system with a random formula over at most three of its atoms.
/// Half of the instances are corridors; most others follow the "avoid meeting an agent until reaching a goal"
/// shape, the rest are unstructured.
pub fn random_instance(rng: &mut impl Rng, shape: SystemShape) -> (System, Formula) {
    use crate::formula::Entity;
    if shape.max_vertices >= 3 && rng.gen_bool(0.5) {
        return random_corridor(rng, shape);
    }
    let sys = random_system(rng, shape);
    let atoms = system_atoms(&sys);
    let plant: Vec<&AtomicProp> = atoms.iter().filter(|a| a.entity == Entity::Plant).collect();
    let agents: Vec<&AtomicProp> = atoms.iter().filter(|a| a.entity != Entity::Plant).collect();
    let meet: Vec<(&AtomicProp, &AtomicProp)> = plant
        .iter()
        .flat_map(|p| agents.iter().filter(move |a| a.prop == p.prop).map(move |a| (*p, *a)))
        .collect();
    let atom = |a: &AtomicProp| Formula::atom(a.clone());
    if let (Some(&(tp, ap)), true) = (meet.choose(rng), rng.gen_bool(0.7)) {
        let start = sys.plant_prop(sys.plant.initial());
        let goals: Vec<&&AtomicProp> = plant.iter().filter(|g| g.prop != tp.prop && **g != &start).collect();
        let goal = goals.choose(rng).copied().or_else(|| plant.choose(rng)).unwrap();
        let bad = Formula::and(atom(tp), atom(ap));
        let f = match rng.gen_range(0..4) {
            0 | 1 => Formula::until(Formula::not(bad), atom(goal)),
            2 => Formula::until(Formula::not(bad), Formula::and(atom(goal), Formula::next(atom(tp)))),
            _ => Formula::eventually(Formula::and(atom(goal), Formula::not(atom(ap)))),
        };
        return (sys, f);
    }
    let mut chosen: Vec<AtomicProp> = plant.choose_multiple(rng, 2).map(|a| (*a).clone()).collect();
    if let Some(a) = agents.choose(rng) {
        chosen.push((*a).clone());
    }
    let f = random_formula(rng, &chosen, 3);
    (sys, f)
}

/// A three-cell corridor on which pruning by the best verified value cuts
/// the only action of a state that the optimal policy can still reach.
/// The second agent never affects the mission; it only forces a second
/// iteration.
pub fn pruning_counterexample() -> (System, Formula) {
    use crate::formula::AtomicProp as Ap;
    let mut env = EnvGraph::new(["v0", "v1", "v2"]);
    for v in 0..3 {
        env.set_label(v, &format!("p{v}"));
    }
    let plant = PlantMdp {
        initial: 0,
        transitions: vec![
            (0, "go".into(), 1, 0.9),
            (0, "go".into(), 0, 0.1),
            (1, "go".into(), 2, 0.7),
            (1, "go".into(), 1, 0.3),
            (2, "wait".into(), 2, 1.0),
        ],
    };
    let agents = vec![
        Agent { name: "agent1".into(), initial: 1, transitions: vec![(1, 1, 0.4), (1, 2, 0.6), (2, 2, 1.0)] },
        Agent {
            name: "agent2".into(),
            initial: 1,
            transitions: vec![(0, 0, 1.0), (1, 0, 0.3), (1, 1, 0.4), (1, 2, 0.3), (2, 2, 1.0)],
        },
    ];
    for (f, t) in [(0, 0), (0, 1), (1, 0), (1, 1), (1, 2), (2, 2)] {
        env.add_edge(f, t);
    }
    let sys = System { env, plant: Plant::Mdp(plant), agents };
    let col = Formula::and(Formula::atom(Ap::plant("p1")), Formula::atom(Ap::agent(1, "p1")));
    (sys, Formula::until(Formula::not(col), Formula::next(Formula::atom(Ap::plant("p2")))))
}
