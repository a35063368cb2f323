//! A live run: state, spec and the audit log that is its source of truth.

use chrono::{DateTime, Duration, SecondsFormat, TimeZone, Utc};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use thiserror::Error;

use super::adapter::{AgentAdapter, PriorVersion, Purpose, TaskContext};
use super::audit::{AuditEvent, AuditLog, EventBody, EventType};
use super::spec::WorkflowSpec;
use super::state::{
    apply_event, missing_consultations, start_run, Action, EngineError, RunState, TaskStatus,
    Verdict,
};

pub trait Clock: Send {
    fn now(&mut self) -> DateTime<Utc>;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&mut self) -> DateTime<Utc> {
        Utc::now()
    }
}

/// Advances by a fixed step on every reading; used for byte-reproducible logs.
#[derive(Debug, Clone)]
pub struct LogicalClock {
    next: DateTime<Utc>,
    step: Duration,
}

impl LogicalClock {
    pub fn new(start: DateTime<Utc>, step: Duration) -> Self {
        LogicalClock { next: start, step }
    }
}

impl Default for LogicalClock {
    fn default() -> Self {
        LogicalClock::new(
            Utc.with_ymd_and_hms(2025, 1, 1, 0, 0, 0).unwrap(),
            Duration::seconds(1),
        )
    }
}

impl Clock for LogicalClock {
    fn now(&mut self) -> DateTime<Utc> {
        let now = self.next;
        self.next += self.step;
        now
    }
}

/// Records which consultation inputs the agent was given, whatever the
/// adapter itself reports.
fn stamp_consultation(metadata: Value, ctx: &TaskContext) -> Value {
    let mut metadata = match metadata {
        Value::Object(map) => map,
        Value::Null => Map::new(),
        other => Map::from_iter([("adapter_metadata".to_string(), other)]),
    };
    let digests = ctx
        .consultation
        .iter()
        .map(|e| json!({ "actor_id": e.actor_id, "digest": e.digest() }))
        .collect();
    metadata.insert("consultation_digests".into(), Value::Array(digests));
    Value::Object(metadata)
}

fn stamp(t: DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::Millis, true)
}

/// A task waiting on its accountable actors.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PendingApproval {
    pub run_id: String,
    pub task_id: String,
    pub artifact_version: String,
    pub responsible_actor: String,
    /// Accountable actors who have not approved the current revision yet.
    pub accountable_actors: Vec<String>,
    pub requested_at: String,
}

/// Who does the Responsible work for an Execute gate.
pub enum Work<'a> {
    Agent(&'a dyn AgentAdapter),
    Operator(String),
}

pub struct Run {
    spec: WorkflowSpec,
    state: RunState,
    log: AuditLog,
    clock: Box<dyn Clock>,
}

impl std::fmt::Debug for Run {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Run")
            .field("run_id", &self.state.run_id)
            .field("events", &self.log.events().len())
            .finish()
    }
}

impl Run {
    pub fn start(spec: WorkflowSpec, run_id: &str, clock: Box<dyn Clock>) -> Result<Self, EngineError> {
        let (state, bodies) = start_run(&spec, run_id)?;
        let mut run = Run {
            spec,
            state,
            log: AuditLog::new(run_id),
            clock,
        };
        run.record(bodies);
        Ok(run)
    }

    pub fn run_id(&self) -> &str {
        &self.state.run_id
    }

    pub fn spec(&self) -> &WorkflowSpec {
        &self.spec
    }

    pub fn state(&self) -> &RunState {
        &self.state
    }

    pub fn events(&self) -> &[AuditEvent] {
        self.log.events()
    }

    pub fn log(&self) -> &AuditLog {
        &self.log
    }

    fn record(&mut self, bodies: Vec<EventBody>) -> usize {
        let first = self.log.events().len();
        for body in bodies {
            let ts = stamp(self.clock.now());
            self.log.append(body, ts);
        }
        first
    }

    /// Applies one action; on success returns the events it appended.
    pub fn apply(&mut self, action: Action) -> Result<&[AuditEvent], EngineError> {
        let (next, bodies) = apply_event(&self.spec, &self.state, &action)?;
        self.state = next;
        let first = self.record(bodies);
        Ok(&self.log.events()[first..])
    }

    pub fn verdict(
        &mut self,
        task_id: &str,
        actor_id: &str,
        verdict: Verdict,
        comment: Option<String>,
    ) -> Result<&[AuditEvent], EngineError> {
        self.apply(Action::Verdict {
            task_id: task_id.to_string(),
            actor_id: actor_id.to_string(),
            verdict,
            comment,
        })
    }

    /// Builds what an agent sees when working on `task_id`.
    pub fn task_context(&self, task_id: &str, actor_id: &str, purpose: Purpose) -> Option<TaskContext> {
        let chain = self.spec.chain(task_id)?;
        let task = self.state.task(task_id)?;
        Some(TaskContext {
            run_id: self.state.run_id.clone(),
            task_id: task_id.to_string(),
            task_name: chain.task_name.clone(),
            artifact: chain.artifact.clone(),
            actor_id: actor_id.to_string(),
            purpose,
            revision: task.revision,
            attempt: 0,
            consultation: match purpose {
                Purpose::Execute => task.consultation.entries.clone(),
                Purpose::Consult => Vec::new(),
            },
            prior_versions: task
                .artifact_versions
                .iter()
                .map(|v| PriorVersion {
                    name: v.name.clone(),
                    digest: v.digest.clone(),
                    content: v.content.clone(),
                })
                .collect(),
            feedback: task
                .verdicts
                .iter()
                .filter(|v| v.verdict == Verdict::Reject)
                .filter_map(|v| v.comment.clone())
                .collect(),
        })
    }

    /// Runs the Execute gate of `task_id`.
    ///
    /// LLM executors are invoked through the adapter, retried up to
    /// `retry_budget` extra times; on exhaustion the task fails. Human
    /// executors supply their artifact as operator content.
    pub fn execute_responsible(
        &mut self,
        task_id: &str,
        work: Work<'_>,
        retry_budget: u32,
    ) -> Result<&[AuditEvent], EngineError> {
        let chain = self
            .spec
            .chain(task_id)
            .ok_or_else(|| EngineError::UnknownTask(task_id.to_string()))?;
        let task = self
            .state
            .task(task_id)
            .ok_or_else(|| EngineError::UnknownTask(task_id.to_string()))?;
        let executor = chain.executor().expect("runnable spec").actor_id.clone();

        if matches!(task.status, TaskStatus::Consulting | TaskStatus::Executing) {
            let missing = missing_consultations(&self.spec, chain, task);
            if !missing.is_empty() {
                return Err(EngineError::MissingConsultation {
                    task: task_id.to_string(),
                    missing,
                });
            }
        }
        if task.status != TaskStatus::Executing {
            return Err(EngineError::IllegalTransition {
                task: task_id.to_string(),
                status: task.status,
                action: "execute_responsible",
            });
        }

        let agent_executor = self.spec.is_agent(&executor);
        let (content, metadata) = match work {
            Work::Operator(content) => {
                if agent_executor {
                    return Err(EngineError::WrongWorkSource {
                        task: task_id.to_string(),
                        expected: "agent",
                    });
                }
                (content, serde_json::json!({ "source": "operator" }))
            }
            Work::Agent(adapter) => {
                if !agent_executor {
                    return Err(EngineError::WrongWorkSource {
                        task: task_id.to_string(),
                        expected: "operator",
                    });
                }
                let mut ctx = self
                    .task_context(task_id, &executor, Purpose::Execute)
                    .expect("task exists");
                match invoke_with_retries(adapter, &mut ctx, retry_budget) {
                    Ok(draft) => (draft.content, stamp_consultation(draft.metadata, &ctx)),
                    Err((attempts, message)) => {
                        self.apply(Action::Fail {
                            task_id: task_id.to_string(),
                            reason: format!("adapter failed after {attempts} attempt(s): {message}"),
                        })?;
                        return Err(EngineError::AdapterFailure {
                            task: task_id.to_string(),
                            attempts,
                            message,
                        });
                    }
                }
            }
        };
        self.apply(Action::ProduceArtifact {
            task_id: task_id.to_string(),
            actor_id: executor,
            content,
            metadata,
        })
    }

    /// Asks an LLM consultant for its input and records it.
    pub fn consult_agent(
        &mut self,
        task_id: &str,
        actor_id: &str,
        adapter: &dyn AgentAdapter,
        retry_budget: u32,
    ) -> Result<&[AuditEvent], EngineError> {
        let mut ctx = self
            .task_context(task_id, actor_id, Purpose::Consult)
            .ok_or_else(|| EngineError::UnknownTask(task_id.to_string()))?;
        match invoke_with_retries(adapter, &mut ctx, retry_budget) {
            Ok(draft) => self.apply(Action::RecordConsult {
                task_id: task_id.to_string(),
                actor_id: actor_id.to_string(),
                content: draft.content,
            }),
            Err((attempts, message)) => {
                self.apply(Action::Fail {
                    task_id: task_id.to_string(),
                    reason: format!("consultant `{actor_id}` failed after {attempts} attempt(s): {message}"),
                })?;
                Err(EngineError::AdapterFailure {
                    task: task_id.to_string(),
                    attempts,
                    message,
                })
            }
        }
    }

    pub fn pending_approvals(&self) -> Vec<PendingApproval> {
        self.spec
            .chains
            .iter()
            .filter_map(|chain| {
                let task = self.state.task(&chain.task_id)?;
                if task.status != TaskStatus::AwaitingValidation {
                    return None;
                }
                let artifact = task.latest_artifact()?;
                let requested_at = self
                    .log
                    .events()
                    .iter()
                    .rev()
                    .find(|e| {
                        e.kind == EventType::ValidationRequested
                            && e.task_id.as_deref() == Some(chain.task_id.as_str())
                    })
                    .map(|e| e.timestamp.clone())
                    .unwrap_or_default();
                Some(PendingApproval {
                    run_id: self.state.run_id.clone(),
                    task_id: chain.task_id.clone(),
                    artifact_version: artifact.name.clone(),
                    responsible_actor: artifact.actor_id.clone(),
                    accountable_actors: chain
                        .validators()
                        .filter(|v| !task.approvals.iter().any(|a| a == v))
                        .map(str::to_string)
                        .collect(),
                    requested_at,
                })
            })
            .collect()
    }
}

fn invoke_with_retries(
    adapter: &dyn AgentAdapter,
    ctx: &mut TaskContext,
    retry_budget: u32,
) -> Result<super::adapter::ArtifactDraft, (u32, String)> {
    let mut last = String::new();
    for attempt in 0..=retry_budget {
        ctx.attempt = attempt;
        match adapter.invoke(ctx) {
            Ok(draft) => return Ok(draft),
            Err(e) => last = e.to_string(),
        }
    }
    Err((retry_budget + 1, last))
}

#[derive(Debug, Error, PartialEq)]
pub enum ReplayError {
    #[error("log is empty")]
    Empty,
    #[error("event {seq}: {reason}")]
    Mismatch { seq: u64, reason: String },
    #[error("event {seq}: {source}")]
    Rejected { seq: u64, source: EngineError },
}

fn field<'a>(event: &'a AuditEvent, key: &str) -> Result<&'a Value, ReplayError> {
    event.payload.get(key).ok_or_else(|| ReplayError::Mismatch {
        seq: event.seq,
        reason: format!("payload lacks `{key}`"),
    })
}

fn text(event: &AuditEvent, key: &str) -> Result<String, ReplayError> {
    field(event, key)?
        .as_str()
        .map(str::to_string)
        .ok_or_else(|| ReplayError::Mismatch {
            seq: event.seq,
            reason: format!("`{key}` is not a string"),
        })
}

fn required<'a>(event: &'a AuditEvent, value: &'a Option<String>, what: &str) -> Result<String, ReplayError> {
    value.clone().ok_or_else(|| ReplayError::Mismatch {
        seq: event.seq,
        reason: format!("missing {what}"),
    })
}

/// Reconstructs the action that opened an event group.
fn action_of(event: &AuditEvent) -> Result<Action, ReplayError> {
    let task_id = required(event, &event.task_id, "task_id")?;
    Ok(match event.kind {
        EventType::ConsultRequested => Action::BeginConsult { task_id },
        EventType::ConsultRecorded => Action::RecordConsult {
            task_id,
            actor_id: required(event, &event.actor_id, "actor_id")?,
            content: text(event, "content")?,
        },
        EventType::ExecutionStarted => Action::StartExecution { task_id },
        EventType::ArtifactProduced => Action::ProduceArtifact {
            task_id,
            actor_id: required(event, &event.actor_id, "actor_id")?,
            content: text(event, "content")?,
            metadata: field(event, "metadata")?.clone(),
        },
        EventType::VerdictRecorded => Action::Verdict {
            task_id,
            actor_id: required(event, &event.actor_id, "actor_id")?,
            verdict: serde_json::from_value(field(event, "verdict")?.clone()).map_err(|e| {
                ReplayError::Mismatch {
                    seq: event.seq,
                    reason: e.to_string(),
                }
            })?,
            comment: event
                .payload
                .get("comment")
                .and_then(Value::as_str)
                .map(str::to_string),
        },
        EventType::TaskFailed => Action::Fail {
            task_id,
            reason: text(event, "reason")?,
        },
        other => {
            return Err(ReplayError::Mismatch {
                seq: event.seq,
                reason: format!("{other:?} cannot start a transition"),
            })
        }
    })
}

/// Rebuilds the final run state from `events` by feeding the recorded
/// actions back through [`apply_event`]; every regenerated event must
/// match the log exactly.
pub fn replay(spec: &WorkflowSpec, events: &[AuditEvent]) -> Result<RunState, ReplayError> {
    let first = events.first().ok_or(ReplayError::Empty)?;
    let (mut state, bodies) = start_run(spec, &first.run_id).map_err(|source| ReplayError::Rejected {
        seq: first.seq,
        source,
    })?;
    let mut pos = 0;
    let expect = |bodies: Vec<EventBody>, pos: &mut usize| -> Result<(), ReplayError> {
        for body in bodies {
            let logged = events.get(*pos).ok_or_else(|| ReplayError::Mismatch {
                seq: *pos as u64 + 1,
                reason: "log ends early".into(),
            })?;
            if logged.body() != body {
                return Err(ReplayError::Mismatch {
                    seq: logged.seq,
                    reason: format!("expected {:?}, log has {:?}", body.kind, logged.kind),
                });
            }
            *pos += 1;
        }
        Ok(())
    };
    expect(bodies, &mut pos)?;
    while pos < events.len() {
        let event = &events[pos];
        let action = action_of(event)?;
        let (next, bodies) = apply_event(spec, &state, &action)
            .map_err(|source| ReplayError::Rejected { seq: event.seq, source })?;
        state = next;
        expect(bodies, &mut pos)?;
    }
    Ok(state)
}
