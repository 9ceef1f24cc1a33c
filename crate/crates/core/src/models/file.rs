//! JSON system description files.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::system::{Agent, Diagnostic, EnvGraph, Plant, PlantMdp, System, Ts, VertexId};

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed system file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid system ({} problems):\n{}", .0.len(), render(.0))]
    Invalid(Vec<Diagnostic>),
}

fn render(ds: &[Diagnostic]) -> String {
    ds.iter().map(|d| format!("  - {d}")).collect::<Vec<_>>().join("\n")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemFile {
    pub environment: EnvFile,
    pub plant: PlantFile,
    #[serde(default)]
    pub agents: Vec<AgentFile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvFile {
    pub vertices: Vec<String>,
    pub edges: Vec<(String, String)>,
    pub labels: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlantKind {
    Ts,
    Mdp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantFile {
    #[serde(rename = "type")]
    pub kind: PlantKind,
    pub initial: String,
    pub transitions: Vec<PlantTransition>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantTransition {
    pub from: String,
    pub action: String,
    pub to: String,
    #[serde(default = "one")]
    pub prob: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentFile {
    pub name: String,
    pub initial: String,
    pub transitions: Vec<AgentTransition>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentTransition {
    pub from: String,
    pub to: String,
    pub prob: f64,
}

impl SystemFile {
    /// Resolves names and validates, reporting every problem found.
    pub fn into_system(self) -> Result<System, ModelError> {
        let mut diags = Vec::new();
        let mut seen = std::collections::BTreeSet::new();
        for v in &self.environment.vertices {
            if !seen.insert(v.as_str()) {
                diags.push(Diagnostic::DuplicateVertex { name: v.clone() });
            }
        }
        let mut env = EnvGraph::new(self.environment.vertices.iter().cloned());
        let lookup = |ctx: &str, name: &str, diags: &mut Vec<Diagnostic>| -> Option<VertexId> {
            let v = env_lookup(&self.environment.vertices, name);
            if v.is_none() {
                diags.push(Diagnostic::UnknownVertex { context: ctx.to_string(), name: name.to_string() });
            }
            v
        };
        let mut edges = Vec::new();
        for (a, b) in &self.environment.edges {
            if let (Some(x), Some(y)) = (lookup("edge", a, &mut diags), lookup("edge", b, &mut diags)) {
                edges.push((x, y));
            }
        }
        let mut labels = Vec::new();
        for (v, prop) in &self.environment.labels {
            if let Some(x) = lookup("label", v, &mut diags) {
                labels.push((x, prop.clone()));
            }
        }
        for v in &self.environment.vertices {
            if !self.environment.labels.contains_key(v) {
                diags.push(Diagnostic::MissingLabel { vertex: v.clone() });
            }
        }

        let plant_init = lookup("plant initial", &self.plant.initial, &mut diags);
        let mut plant_tr = Vec::new();
        for t in &self.plant.transitions {
            let from = lookup("plant transition", &t.from, &mut diags);
            let to = lookup("plant transition", &t.to, &mut diags);
            if let (Some(f), Some(to)) = (from, to) {
                plant_tr.push((f, t.action.clone(), to, t.prob));
            }
        }
        if self.plant.kind == PlantKind::Ts {
            for t in &self.plant.transitions {
                if t.prob != 1.0 {
                    diags.push(Diagnostic::Stochasticity {
                        component: "plant".into(),
                        state: t.from.clone(),
                        action: Some(t.action.clone()),
                        sum: t.prob,
                    });
                }
            }
        }

        let mut agents = Vec::new();
        for (k, a) in self.agents.iter().enumerate() {
            let ctx = format!("agent {} ({})", k + 1, a.name);
            let init = lookup(&ctx, &a.initial, &mut diags);
            let mut tr = Vec::new();
            for t in &a.transitions {
                let from = lookup(&ctx, &t.from, &mut diags);
                let to = lookup(&ctx, &t.to, &mut diags);
                if let (Some(f), Some(to)) = (from, to) {
                    tr.push((f, to, t.prob));
                }
            }
            agents.push((a.name.clone(), init, tr));
        }

        if !diags.is_empty() {
            return Err(ModelError::Invalid(diags));
        }
        for (x, y) in edges {
            env.add_edge(x, y);
        }
        for (v, prop) in labels {
            env.set_label(v, &prop);
        }
        let initial = plant_init.expect("checked");
        let plant = match self.plant.kind {
            PlantKind::Ts => Plant::Ts(Ts {
                initial,
                transitions: plant_tr.into_iter().map(|(f, a, t, _)| (f, a, t)).collect(),
            }),
            PlantKind::Mdp => Plant::Mdp(PlantMdp { initial, transitions: plant_tr }),
        };
        let agents = agents
            .into_iter()
            .map(|(name, init, transitions)| Agent { name, initial: init.expect("checked"), transitions })
            .collect();
        let sys = System { env, plant, agents };
        let diags = sys.validate();
        if diags.is_empty() {
            Ok(sys)
        } else {
            Err(ModelError::Invalid(diags))
        }
    }

    pub fn from_system(sys: &System) -> SystemFile {
        let env = &sys.env;
        let n = |v: VertexId| env.name(v).to_string();
        let environment = EnvFile {
            vertices: env.vertices().to_vec(),
            edges: env.edges().map(|(a, b)| (n(a), n(b))).collect(),
            labels: (0..env.num_vertices() as VertexId).map(|v| (n(v), env.label(v).to_string())).collect(),
        };
        let kind = match sys.plant {
            Plant::Ts(_) => PlantKind::Ts,
            Plant::Mdp(_) => PlantKind::Mdp,
        };
        let plant = PlantFile {
            kind,
            initial: n(sys.plant.initial()),
            transitions: sys
                .plant
                .weighted()
                .into_iter()
                .map(|(f, a, t, p)| PlantTransition { from: n(f), action: a.to_string(), to: n(t), prob: p })
                .collect(),
        };
        let agents = sys
            .agents
            .iter()
            .map(|a| AgentFile {
                name: a.name.clone(),
                initial: n(a.initial),
                transitions: a
                    .transitions
                    .iter()
                    .map(|&(f, t, p)| AgentTransition { from: n(f), to: n(t), prob: p })
                    .collect(),
            })
            .collect();
        SystemFile { environment, plant, agents }
    }
}

fn env_lookup(vertices: &[String], name: &str) -> Option<VertexId> {
    vertices.iter().position(|v| v == name).map(|i| i as VertexId)
}

pub fn parse_system(text: &str) -> Result<System, ModelError> {
    serde_json::from_str::<SystemFile>(text)?.into_system()
}

pub fn load_system(path: impl AsRef<Path>) -> Result<System, ModelError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|source| ModelError::Io { path: path.display().to_string(), source })?;
    parse_system(&text)
}

pub fn system_to_json(sys: &System) -> String {
    serde_json::to_string_pretty(&SystemFile::from_system(sys)).expect("system serializes")
}

pub fn save_system(sys: &System, path: impl AsRef<Path>) -> Result<(), ModelError> {
    let path = path.as_ref();
    std::fs::write(path, system_to_json(sys))
        .map_err(|source| ModelError::Io { path: path.display().to_string(), source })
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = r#"{
      "environment": {
        "vertices": ["a", "b"],
        "edges": [["a", "b"], ["b", "b"], ["b", "a"]],
        "labels": {"a": "pa", "b": "pb"}
      },
      "plant": {"type": "ts", "initial": "a",
                "transitions": [{"from": "a", "action": "go", "to": "b"},
                                {"from": "b", "action": "go", "to": "b"}]},
      "agents": [{"name": "x", "initial": "b",
                  "transitions": [{"from": "b", "to": "a", "prob": 0.25},
                                  {"from": "b", "to": "b", "prob": 0.75},
                                  {"from": "a", "to": "b", "prob": 1.0}]}]
    }"#;

    #[test]
    fn parses_and_round_trips() {
        let sys = parse_system(SMALL).unwrap();
        assert_eq!(sys.num_agents(), 1);
        assert_eq!(sys.env.vertex("b"), Some(1));
        let again = parse_system(&system_to_json(&sys)).unwrap();
        assert_eq!(SystemFile::from_system(&again), SystemFile::from_system(&sys));
    }

    #[test]
    fn collects_every_problem() {
        let bad = SMALL.replace(r#""initial": "a""#, r#""initial": "zz""#).replace("0.25", "0.5");
        let Err(ModelError::Invalid(d)) = parse_system(&bad) else { panic!("expected diagnostics") };
        assert!(d.iter().any(|d| matches!(d, Diagnostic::UnknownVertex { name, .. } if name == "zz")));
        // the row sum is only checked once names resolve, so this one is
        // reported on a second pass after the fix
        let bad = SMALL.replace("0.25", "0.5");
        let Err(ModelError::Invalid(d)) = parse_system(&bad) else { panic!("expected diagnostics") };
        assert!(matches!(&d[..], [Diagnostic::Stochasticity { sum, .. }] if (*sum - 1.25).abs() < 1e-12));
    }

    #[test]
    fn ts_rejects_fractional_probability() {
        let bad = SMALL.replace(r#""action": "go", "to": "b"}"#, r#""action": "go", "to": "b", "prob": 0.5}"#);
        assert!(matches!(parse_system(&bad), Err(ModelError::Invalid(_))));
    }

    #[test]
    fn unknown_field_is_a_json_error() {
        let bad = SMALL.replacen(r#""plant": {"#, r#""plant": {"colour": 1, "#, 1);
        assert!(matches!(parse_system(&bad), Err(ModelError::Json(_))));
    }
}
