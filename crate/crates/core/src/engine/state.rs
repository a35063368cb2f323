//! Run state and the pure transition function.
//!
//! Every mutation of a run goes through [`apply_event`], which returns the
//! new state plus the audit event bodies the transition produced. Replaying
//! a log feeds the same actions back through it.

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use super::audit::{sha256_hex, EventBody, EventType};
use super::spec::{GateKind, SpecError, TaskChain, WorkflowSpec};
use crate::model::Quorum;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskStatus {
    Pending,
    Ready,
    Consulting,
    Executing,
    AwaitingValidation,
    Complete,
    Failed,
}

impl TaskStatus {
    pub fn is_terminal(self) -> bool {
        matches!(self, TaskStatus::Complete | TaskStatus::Failed)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsultationEntry {
    pub actor_id: String,
    pub content: String,
    pub mandatory: bool,
}

impl ConsultationEntry {
    pub fn digest(&self) -> String {
        sha256_hex(&self.content)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConsultationBundle {
    pub entries: Vec<ConsultationEntry>,
}

impl ConsultationBundle {
    pub fn has(&self, actor_id: &str) -> bool {
        self.entries.iter().any(|e| e.actor_id == actor_id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactVersion {
    /// `artifact@vN`, N counting every version produced for the task.
    pub name: String,
    pub revision: u32,
    pub actor_id: String,
    pub digest: String,
    pub content: String,
    pub metadata: Value,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Approve,
    Reject,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerdictRecord {
    pub actor_id: String,
    pub verdict: Verdict,
    pub revision: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comment: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskState {
    pub status: TaskStatus,
    pub revision: u32,
    pub artifact_versions: Vec<ArtifactVersion>,
    pub consultation: ConsultationBundle,
    /// Approvals collected for the current revision.
    pub approvals: Vec<String>,
    pub verdicts: Vec<VerdictRecord>,
}

impl TaskState {
    fn new(status: TaskStatus) -> Self {
        TaskState {
            status,
            revision: 0,
            artifact_versions: Vec::new(),
            consultation: ConsultationBundle::default(),
            approvals: Vec::new(),
            verdicts: Vec::new(),
        }
    }

    pub fn latest_artifact(&self) -> Option<&ArtifactVersion> {
        self.artifact_versions.last()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunState {
    pub run_id: String,
    pub tasks: IndexMap<String, TaskState>,
}

impl RunState {
    pub fn task(&self, task_id: &str) -> Option<&TaskState> {
        self.tasks.get(task_id)
    }

    pub fn status(&self, task_id: &str) -> Option<TaskStatus> {
        self.tasks.get(task_id).map(|t| t.status)
    }

    pub fn is_finished(&self) -> bool {
        self.tasks.values().all(|t| t.status.is_terminal())
    }

    pub fn all_complete(&self) -> bool {
        self.tasks.values().all(|t| t.status == TaskStatus::Complete)
    }
}

/// Commands that drive a run forward.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum Action {
    BeginConsult {
        task_id: String,
    },
    RecordConsult {
        task_id: String,
        actor_id: String,
        content: String,
    },
    /// Moves on without the remaining (advisory) consultations; only
    /// allowed when a human executes.
    StartExecution {
        task_id: String,
    },
    ProduceArtifact {
        task_id: String,
        actor_id: String,
        content: String,
        metadata: Value,
    },
    Verdict {
        task_id: String,
        actor_id: String,
        verdict: Verdict,
        comment: Option<String>,
    },
    Fail {
        task_id: String,
        reason: String,
    },
}

impl Action {
    pub fn task_id(&self) -> &str {
        match self {
            Action::BeginConsult { task_id }
            | Action::RecordConsult { task_id, .. }
            | Action::StartExecution { task_id }
            | Action::ProduceArtifact { task_id, .. }
            | Action::Verdict { task_id, .. }
            | Action::Fail { task_id, .. } => task_id,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Action::BeginConsult { .. } => "begin_consult",
            Action::RecordConsult { .. } => "record_consult",
            Action::StartExecution { .. } => "start_execution",
            Action::ProduceArtifact { .. } => "produce_artifact",
            Action::Verdict { verdict: Verdict::Approve, .. } => "approve",
            Action::Verdict { verdict: Verdict::Reject, .. } => "reject",
            Action::Fail { .. } => "fail",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EngineError {
    #[error("unknown task `{0}`")]
    UnknownTask(String),
    #[error("illegal transition: task `{task}` is {status:?}, cannot {action}")]
    IllegalTransition {
        task: String,
        status: TaskStatus,
        action: &'static str,
    },
    #[error("actor `{actor}` holds no Accountable gate on `{task}`")]
    UnauthorizedVerdict { task: String, actor: String },
    #[error("actor `{actor}` has no {gate:?} gate on `{task}`")]
    UnauthorizedActor {
        task: String,
        actor: String,
        gate: GateKind,
    },
    #[error("task `{task}` is missing mandatory consultation from {}", .missing.join(", "))]
    MissingConsultation { task: String, missing: Vec<String> },
    #[error("task `{task}` is executed by {expected}; supply {expected} work")]
    WrongWorkSource { task: String, expected: &'static str },
    #[error("adapter failed on `{task}` after {attempts} attempt(s): {message}")]
    AdapterFailure {
        task: String,
        attempts: u32,
        message: String,
    },
    #[error(transparent)]
    Spec(#[from] SpecError),
}

/// Creates the initial state: tasks without prerequisites are Ready.
pub fn start_run(
    spec: &WorkflowSpec,
    run_id: &str,
) -> Result<(RunState, Vec<EventBody>), EngineError> {
    spec.check_runnable()?;
    let spec_digest = sha256_hex(serde_json::to_vec(spec).expect("spec serializes"));
    let mut events = vec![EventBody::new(
        EventType::RunStarted,
        json!({ "phase": spec.phase, "tasks": spec.chains.len(), "spec_digest": spec_digest }),
    )];
    let mut tasks = IndexMap::new();
    for chain in &spec.chains {
        let root = spec.prerequisites(&chain.task_id).next().is_none();
        let status = if root { TaskStatus::Ready } else { TaskStatus::Pending };
        tasks.insert(chain.task_id.clone(), TaskState::new(status));
    }
    for chain in &spec.chains {
        if tasks[&chain.task_id].status == TaskStatus::Ready {
            events.push(EventBody::new(EventType::TaskReady, json!({})).task(&chain.task_id));
        }
    }
    Ok((
        RunState {
            run_id: run_id.to_string(),
            tasks,
        },
        events,
    ))
}

/// Mandatory consultations still outstanding for `task`.
pub fn missing_consultations(spec: &WorkflowSpec, chain: &TaskChain, task: &TaskState) -> Vec<String> {
    if !spec.agent_executes(chain) {
        return Vec::new();
    }
    chain
        .consultants()
        .filter(|c| !task.consultation.has(c))
        .map(str::to_string)
        .collect()
}

/// The pure transition function.
pub fn apply_event(
    spec: &WorkflowSpec,
    state: &RunState,
    action: &Action,
) -> Result<(RunState, Vec<EventBody>), EngineError> {
    let task_id = action.task_id();
    let chain = spec
        .chain(task_id)
        .ok_or_else(|| EngineError::UnknownTask(task_id.to_string()))?;
    let current = state
        .task(task_id)
        .ok_or_else(|| EngineError::UnknownTask(task_id.to_string()))?;
    let illegal = || EngineError::IllegalTransition {
        task: task_id.to_string(),
        status: current.status,
        action: action.name(),
    };

    let mut next = state.clone();
    let mut events = Vec::new();
    let executor = chain.executor().expect("runnable spec has an executor");

    match action {
        Action::BeginConsult { .. } => {
            if current.status != TaskStatus::Ready {
                return Err(illegal());
            }
            let consultants: Vec<&str> = chain.consultants().collect();
            let task = next.tasks.get_mut(task_id).expect("task exists");
            task.status = TaskStatus::Consulting;
            events.push(
                EventBody::new(EventType::ConsultRequested, json!({ "consultants": consultants }))
                    .task(task_id),
            );
            if consultants.is_empty() {
                start_execution(chain, task, &mut events);
            }
        }
        Action::RecordConsult {
            actor_id, content, ..
        } => {
            if current.status != TaskStatus::Consulting {
                return Err(illegal());
            }
            if !chain.consultants().any(|c| c == actor_id) {
                return Err(EngineError::UnauthorizedActor {
                    task: task_id.to_string(),
                    actor: actor_id.clone(),
                    gate: GateKind::Consult,
                });
            }
            if current.consultation.has(actor_id) {
                return Err(illegal());
            }
            let mandatory = spec.agent_executes(chain);
            let entry = ConsultationEntry {
                actor_id: actor_id.clone(),
                content: content.clone(),
                mandatory,
            };
            events.push(
                EventBody::new(
                    EventType::ConsultRecorded,
                    json!({ "content": content, "digest": entry.digest(), "mandatory": mandatory }),
                )
                .task(task_id)
                .actor(actor_id),
            );
            let task = next.tasks.get_mut(task_id).expect("task exists");
            task.consultation.entries.push(entry);
            if chain.consultants().all(|c| task.consultation.has(c)) {
                start_execution(chain, task, &mut events);
            }
        }
        Action::StartExecution { .. } => {
            if current.status != TaskStatus::Consulting {
                return Err(illegal());
            }
            let missing = missing_consultations(spec, chain, current);
            if !missing.is_empty() {
                return Err(EngineError::MissingConsultation {
                    task: task_id.to_string(),
                    missing,
                });
            }
            let task = next.tasks.get_mut(task_id).expect("task exists");
            start_execution(chain, task, &mut events);
        }
        Action::ProduceArtifact {
            actor_id,
            content,
            metadata,
            ..
        } => {
            if current.status == TaskStatus::Consulting {
                let missing = missing_consultations(spec, chain, current);
                if !missing.is_empty() {
                    return Err(EngineError::MissingConsultation {
                        task: task_id.to_string(),
                        missing,
                    });
                }
            }
            if current.status != TaskStatus::Executing {
                return Err(illegal());
            }
            if &executor.actor_id != actor_id {
                return Err(EngineError::UnauthorizedActor {
                    task: task_id.to_string(),
                    actor: actor_id.clone(),
                    gate: GateKind::Execute,
                });
            }
            let task = next.tasks.get_mut(task_id).expect("task exists");
            let version = ArtifactVersion {
                name: format!("{}@v{}", chain.artifact, task.artifact_versions.len() + 1),
                revision: task.revision,
                actor_id: actor_id.clone(),
                digest: sha256_hex(content),
                content: content.clone(),
                metadata: metadata.clone(),
            };
            events.push(
                EventBody::new(
                    EventType::ArtifactProduced,
                    json!({
                        "version": version.name,
                        "revision": version.revision,
                        "digest": version.digest,
                        "content": version.content,
                        "metadata": version.metadata,
                    }),
                )
                .task(task_id)
                .actor(actor_id),
            );
            let name = version.name.clone();
            task.artifact_versions.push(version);
            let validators: Vec<&str> = chain.validators().collect();
            if validators.is_empty() {
                complete(spec, &mut next, task_id, &mut events);
            } else {
                task.status = TaskStatus::AwaitingValidation;
                events.push(
                    EventBody::new(
                        EventType::ValidationRequested,
                        json!({ "version": name, "validators": validators }),
                    )
                    .task(task_id),
                );
            }
        }
        Action::Verdict {
            actor_id,
            verdict,
            comment,
            ..
        } => {
            if current.status != TaskStatus::AwaitingValidation {
                return Err(illegal());
            }
            if !chain.validators().any(|v| v == actor_id) {
                return Err(EngineError::UnauthorizedVerdict {
                    task: task_id.to_string(),
                    actor: actor_id.clone(),
                });
            }
            if current.approvals.contains(actor_id) {
                return Err(illegal());
            }
            let mut payload = json!({ "verdict": verdict, "revision": current.revision });
            if let Some(c) = comment {
                payload["comment"] = json!(c);
            }
            events.push(
                EventBody::new(EventType::VerdictRecorded, payload)
                    .task(task_id)
                    .actor(actor_id),
            );
            let task = next.tasks.get_mut(task_id).expect("task exists");
            task.verdicts.push(VerdictRecord {
                actor_id: actor_id.clone(),
                verdict: *verdict,
                revision: task.revision,
                comment: comment.clone(),
            });
            match verdict {
                Verdict::Approve => {
                    task.approvals.push(actor_id.clone());
                    if approval_complete(spec, chain, &task.approvals) {
                        complete(spec, &mut next, task_id, &mut events);
                    }
                }
                Verdict::Reject => {
                    task.revision += 1;
                    task.approvals.clear();
                    if spec.re_consult_on_reject && chain.consultants().next().is_some() {
                        task.status = TaskStatus::Consulting;
                        task.consultation.entries.clear();
                        let consultants: Vec<&str> = chain.consultants().collect();
                        events.push(
                            EventBody::new(
                                EventType::ConsultRequested,
                                json!({ "consultants": consultants, "revision": task.revision }),
                            )
                            .task(task_id),
                        );
                    } else {
                        start_execution(chain, task, &mut events);
                    }
                }
            }
        }
        Action::Fail { reason, .. } => {
            if matches!(
                current.status,
                TaskStatus::Pending | TaskStatus::Complete | TaskStatus::Failed
            ) {
                return Err(illegal());
            }
            next.tasks.get_mut(task_id).expect("task exists").status = TaskStatus::Failed;
            events.push(EventBody::new(EventType::TaskFailed, json!({ "reason": reason })).task(task_id));
        }
    }
    Ok((next, events))
}

fn start_execution(chain: &TaskChain, task: &mut TaskState, events: &mut Vec<EventBody>) {
    let executor = chain.executor().expect("runnable spec has an executor");
    task.status = TaskStatus::Executing;
    events.push(
        EventBody::new(EventType::ExecutionStarted, json!({ "revision": task.revision }))
            .task(&chain.task_id)
            .actor(&executor.actor_id),
    );
}

/// Whether the approvals satisfy the quorum. LLM-executed work also needs
/// at least one human approver regardless of quorum.
fn approval_complete(spec: &WorkflowSpec, chain: &TaskChain, approvals: &[String]) -> bool {
    let quorum = match spec.quorum {
        Quorum::All => chain.validators().all(|v| approvals.iter().any(|a| a == v)),
        Quorum::Any => !approvals.is_empty(),
    };
    let human_ok = !spec.agent_executes(chain) || approvals.iter().any(|a| spec.is_human(a));
    quorum && human_ok
}

fn complete(spec: &WorkflowSpec, state: &mut RunState, task_id: &str, events: &mut Vec<EventBody>) {
    let chain = spec.chain(task_id).expect("chain exists");
    let task = state.tasks.get_mut(task_id).expect("task exists");
    task.status = TaskStatus::Complete;
    let version = task
        .latest_artifact()
        .map(|v| v.name.clone())
        .unwrap_or_default();
    events.push(
        EventBody::new(
            EventType::TaskCompleted,
            json!({ "revision": task.revision, "version": version }),
        )
        .task(task_id),
    );
    for actor in chain.notified() {
        events.push(
            EventBody::new(EventType::Notified, json!({ "version": version }))
                .task(task_id)
                .actor(actor),
        );
    }
    for dependent in &spec.chains {
        let id = dependent.task_id.as_str();
        if !spec.dependents(task_id).any(|d| d == id) {
            continue;
        }
        let ready = spec
            .prerequisites(id)
            .all(|p| state.status(p) == Some(TaskStatus::Complete));
        let dep = state.tasks.get_mut(id).expect("task exists");
        if ready && dep.status == TaskStatus::Pending {
            dep.status = TaskStatus::Ready;
            events.push(EventBody::new(EventType::TaskReady, json!({})).task(id));
        }
    }
}
