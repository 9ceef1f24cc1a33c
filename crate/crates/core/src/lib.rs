//! Incremental synthesis of plant control policies that maximize the
//! probability of satisfying a syntactically co-safe LTL mission while
//! independent probabilistic agents share the environment.

pub mod automaton;
pub mod compose;
pub mod crossing;
pub mod formula;
pub mod incremental;
pub mod label;
pub mod models;
pub mod mrp;
pub mod product;
#[cfg(any(test, feature = "testkit"))]
pub mod testkit;

pub use automaton::{accepts, eval_guard, translate, Dfa, Guard};
pub use formula::{AtomicProp, Entity, Formula};
pub use label::LabelSet;
pub use models::{Mc, Mdp, System};
