//! The pedestrian-crossing benchmark: a car drives over a five-cell road
//! while pedestrians walk across it.

use crate::formula::{AtomicProp, Formula};
use crate::models::{Agent, EnvGraph, Plant, System, Ts};

const CELLS: u32 = 5;

/// Builds the crossing system with `pedestrians` agents and its mission
/// "reach c4 without sharing a cell with any pedestrian first".
///
/// All pedestrians but the last walk forward and stop at c3; the last one
/// may turn back.
pub fn gen_crossing(pedestrians: u32) -> (System, Formula) {
    assert!(pedestrians >= 1, "at least one pedestrian");
    let mut env = EnvGraph::new((0..CELLS).map(|j| format!("c{j}")));
    let plant = Ts {
        initial: 0,
        transitions: vec![
            (0, "wait".into(), 0),
            (0, "go".into(), 2),
            (2, "wait".into(), 2),
            (2, "go".into(), 4),
            (4, "wait".into(), 4),
        ],
    };
    let forward = vec![(1, 1, 0.6), (1, 2, 0.4), (2, 2, 0.2), (2, 3, 0.8), (3, 3, 1.0)];
    let oscillating =
        vec![(1, 1, 0.6), (1, 2, 0.4), (2, 2, 0.2), (2, 3, 0.4), (2, 1, 0.4), (3, 3, 0.6), (3, 2, 0.4)];
    let agents: Vec<Agent> = (1..=pedestrians)
        .map(|i| Agent {
            name: format!("pedestrian{i}"),
            initial: 1,
            transitions: if i == pedestrians { oscillating.clone() } else { forward.clone() },
        })
        .collect();
    for (f, _, t) in &plant.transitions {
        env.add_edge(*f, *t);
    }
    for a in &agents {
        for &(f, t, _) in &a.transitions {
            env.add_edge(f, t);
        }
    }
    let sys = System { env, plant: Plant::Ts(plant), agents };
    (sys, crossing_formula(pedestrians))
}

/// `!col U T.c4` where `col` is any pedestrian sharing the car's cell.
pub fn crossing_formula(pedestrians: u32) -> Formula {
    let col = Formula::any((1..=pedestrians).flat_map(|i| {
        (0..CELLS).map(move |j| {
            let cell = format!("c{j}");
            Formula::and(
                Formula::atom(AtomicProp::plant(cell.as_str())),
                Formula::atom(AtomicProp::agent(i, cell.as_str())),
            )
        })
    }));
    Formula::until(Formula::not(col), Formula::atom(AtomicProp::plant("c4")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_size_is_valid() {
        for n in 1..=6 {
            let (sys, f) = gen_crossing(n);
            assert!(sys.validate().is_empty());
            assert_eq!(f.atoms().len(), 5 + 5 * n as usize);
        }
    }

    #[test]
    fn only_the_last_pedestrian_turns_back() {
        let (sys, _) = gen_crossing(3);
        let back = |i: u32| sys.agent(i).transitions.iter().any(|&(f, t, _)| t < f);
        assert_eq!((back(1), back(2), back(3)), (false, false, true));
    }
}
