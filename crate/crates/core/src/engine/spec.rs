//! Compiled workflow: one gate chain per task plus cross-task edges.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ActorKind, Automation, Quorum};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateKind {
    Consult,
    Execute,
    Validate,
    Notify,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Gate {
    pub kind: GateKind,
    pub actor_id: String,
    /// Further Responsible actors working alongside the executor.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub assistants: Vec<String>,
}

impl Gate {
    pub fn new(kind: GateKind, actor_id: impl Into<String>) -> Self {
        Gate {
            kind,
            actor_id: actor_id.into(),
            assistants: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActorRef {
    pub id: String,
    pub name: String,
    pub kind: ActorKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskChain {
    pub task_id: String,
    pub task_name: String,
    /// Name of the artifact the Execute gate yields; versions are `artifact@vN`.
    pub artifact: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub automation: Option<Automation>,
    pub gates: Vec<Gate>,
}

impl TaskChain {
    pub fn gates_of(&self, kind: GateKind) -> impl Iterator<Item = &Gate> {
        self.gates.iter().filter(move |g| g.kind == kind)
    }

    pub fn executor(&self) -> Option<&Gate> {
        self.gates_of(GateKind::Execute).next()
    }

    pub fn consultants(&self) -> impl Iterator<Item = &str> {
        self.gates_of(GateKind::Consult).map(|g| g.actor_id.as_str())
    }

    pub fn validators(&self) -> impl Iterator<Item = &str> {
        self.gates_of(GateKind::Validate).map(|g| g.actor_id.as_str())
    }

    pub fn notified(&self) -> impl Iterator<Item = &str> {
        self.gates_of(GateKind::Notify).map(|g| g.actor_id.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkflowSpec {
    pub phase: String,
    #[serde(default = "default_true")]
    pub audit_enabled: bool,
    #[serde(default)]
    pub quorum: Quorum,
    #[serde(default)]
    pub re_consult_on_reject: bool,
    pub actors: Vec<ActorRef>,
    pub chains: Vec<TaskChain>,
    /// `(prerequisite, dependent)` pairs.
    #[serde(default)]
    pub edges: Vec<(String, String)>,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SpecError {
    #[error("workflow has no task chains")]
    Empty,
    #[error("duplicate chain for task `{0}`")]
    DuplicateTask(String),
    #[error("chain `{task}` references unknown actor `{actor}`")]
    UnknownActor { task: String, actor: String },
    #[error("edge references unknown task `{0}`")]
    UnknownTask(String),
    #[error("chain `{0}` must have exactly one Execute gate")]
    ExecuteGateCount(String),
    #[error("chain `{0}` gates are not ordered Consult* -> Execute -> Validate* -> Notify*")]
    GateOrder(String),
    #[error("workflow edges form a cycle through `{0}`")]
    Cycle(String),
    #[error("chain `{0}` lets an LLM agent execute without a human Validate gate")]
    UnsupervisedAgent(String),
}

impl WorkflowSpec {
    pub fn chain(&self, task_id: &str) -> Option<&TaskChain> {
        self.chains.iter().find(|c| c.task_id == task_id)
    }

    pub fn actor_kind(&self, actor_id: &str) -> Option<ActorKind> {
        self.actors.iter().find(|a| a.id == actor_id).map(|a| a.kind)
    }

    pub fn is_human(&self, actor_id: &str) -> bool {
        self.actor_kind(actor_id) == Some(ActorKind::Human)
    }

    pub fn is_agent(&self, actor_id: &str) -> bool {
        self.actor_kind(actor_id) == Some(ActorKind::LlmAgent)
    }

    /// True when an LLM agent executes the chain or assists its executor.
    pub fn agent_executes(&self, chain: &TaskChain) -> bool {
        chain.executor().is_some_and(|g| {
            self.is_agent(&g.actor_id) || g.assistants.iter().any(|a| self.is_agent(a))
        })
    }

    /// Whether a human Validate gate follows the Execute gate.
    pub fn has_human_validator(&self, chain: &TaskChain) -> bool {
        let Some(exec) = chain.gates.iter().position(|g| g.kind == GateKind::Execute) else {
            return false;
        };
        chain.gates[exec + 1..]
            .iter()
            .any(|g| g.kind == GateKind::Validate && self.is_human(&g.actor_id))
    }

    pub fn prerequisites<'a>(&'a self, task_id: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.edges
            .iter()
            .filter(move |(_, to)| to == task_id)
            .map(|(from, _)| from.as_str())
    }

    pub fn dependents<'a>(&'a self, task_id: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.edges
            .iter()
            .filter(move |(from, _)| from == task_id)
            .map(|(_, to)| to.as_str())
    }

    /// Structural well-formedness: ids, gate order, acyclic edges.
    pub fn check_structure(&self) -> Result<(), SpecError> {
        if self.chains.is_empty() {
            return Err(SpecError::Empty);
        }
        let actors: HashSet<&str> = self.actors.iter().map(|a| a.id.as_str()).collect();
        let mut tasks = HashSet::new();
        for chain in &self.chains {
            if !tasks.insert(chain.task_id.as_str()) {
                return Err(SpecError::DuplicateTask(chain.task_id.clone()));
            }
            for gate in &chain.gates {
                for actor in std::iter::once(&gate.actor_id).chain(&gate.assistants) {
                    if !actors.contains(actor.as_str()) {
                        return Err(SpecError::UnknownActor {
                            task: chain.task_id.clone(),
                            actor: actor.clone(),
                        });
                    }
                }
            }
            if chain.gates_of(GateKind::Execute).count() != 1 {
                return Err(SpecError::ExecuteGateCount(chain.task_id.clone()));
            }
            if !chain.gates.windows(2).all(|w| w[0].kind <= w[1].kind) {
                return Err(SpecError::GateOrder(chain.task_id.clone()));
            }
        }
        for (from, to) in &self.edges {
            for t in [from, to] {
                if !tasks.contains(t.as_str()) {
                    return Err(SpecError::UnknownTask(t.clone()));
                }
            }
        }
        self.check_acyclic()
    }

    /// Structure plus the runtime oversight rule: every LLM execution must
    /// be followed by a human Validate gate. Runs refuse specs that fail this.
    pub fn check_runnable(&self) -> Result<(), SpecError> {
        self.check_structure()?;
        for chain in &self.chains {
            if self.agent_executes(chain) && !self.has_human_validator(chain) {
                return Err(SpecError::UnsupervisedAgent(chain.task_id.clone()));
            }
        }
        Ok(())
    }

    fn check_acyclic(&self) -> Result<(), SpecError> {
        let mut indegree: HashMap<&str, usize> =
            self.chains.iter().map(|c| (c.task_id.as_str(), 0)).collect();
        for (_, to) in &self.edges {
            *indegree.entry(to.as_str()).or_default() += 1;
        }
        let mut ready: Vec<&str> = self
            .chains
            .iter()
            .map(|c| c.task_id.as_str())
            .filter(|t| indegree[t] == 0)
            .collect();
        let mut seen = 0;
        while let Some(task) = ready.pop() {
            seen += 1;
            for next in self.dependents(task) {
                let d = indegree.get_mut(next).expect("edge target checked");
                *d -= 1;
                if *d == 0 {
                    ready.push(next);
                }
            }
        }
        if seen == self.chains.len() {
            Ok(())
        } else {
            let stuck = self
                .chains
                .iter()
                .find(|c| indegree[c.task_id.as_str()] > 0)
                .map(|c| c.task_id.clone())
                .unwrap_or_default();
            Err(SpecError::Cycle(stuck))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(gates: Vec<Gate>) -> WorkflowSpec {
        WorkflowSpec {
            phase: "p".into(),
            audit_enabled: true,
            quorum: Quorum::All,
            re_consult_on_reject: false,
            actors: vec![
                ActorRef {
                    id: "h".into(),
                    name: "H".into(),
                    kind: ActorKind::Human,
                },
                ActorRef {
                    id: "g".into(),
                    name: "G".into(),
                    kind: ActorKind::LlmAgent,
                },
            ],
            chains: vec![TaskChain {
                task_id: "t".into(),
                task_name: "T".into(),
                artifact: "t:doc".into(),
                automation: None,
                gates,
            }],
            edges: vec![],
        }
    }

    #[test]
    fn gate_order_is_enforced() {
        let s = spec(vec![
            Gate::new(GateKind::Execute, "h"),
            Gate::new(GateKind::Consult, "g"),
        ]);
        assert_eq!(s.check_structure(), Err(SpecError::GateOrder("t".into())));
    }

    #[test]
    fn unsupervised_agent_is_not_runnable() {
        let s = spec(vec![Gate::new(GateKind::Execute, "g")]);
        assert!(s.check_structure().is_ok());
        assert_eq!(s.check_runnable(), Err(SpecError::UnsupervisedAgent("t".into())));
        let s = spec(vec![
            Gate::new(GateKind::Execute, "g"),
            Gate::new(GateKind::Validate, "h"),
        ]);
        assert!(s.check_runnable().is_ok());
    }

    #[test]
    fn empty_spec_is_rejected() {
        let mut s = spec(vec![]);
        s.chains.clear();
        assert_eq!(s.check_structure(), Err(SpecError::Empty));
    }
}
