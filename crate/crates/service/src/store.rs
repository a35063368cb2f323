use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::Duration;

use matrixgate::engine::{
    placeholder_content, AgentAdapter, AuditEvent, Decision, DriveReport, Driver, HumanDesk,
    PendingApproval, Run, RunState, SystemClock, WorkflowSpec,
};
use matrixgate::MatrixBundle;
use serde::Serialize;
use tokio::sync::watch;

use crate::{ApiError, Config};

const ADAPTER_TIMEOUT: Duration = Duration::from_secs(60);

/// Answers consultation and authoring requests with placeholders when
/// configured to; verdicts always come from the API.
struct ServiceDesk {
    simulate_inputs: bool,
}

impl HumanDesk for ServiceDesk {
    fn consult(&mut self, run: &Run, task_id: &str, actor_id: &str) -> Option<String> {
        self.simulate_inputs
            .then(|| placeholder_content(run, task_id, actor_id, "input"))
    }

    fn produce(&mut self, run: &Run, task_id: &str, actor_id: &str) -> Option<String> {
        self.simulate_inputs
            .then(|| placeholder_content(run, task_id, actor_id, "artifact"))
    }

    fn review(&mut self, _: &Run, _: &str, _: &str) -> Option<Decision> {
        None
    }
}

pub(crate) struct RunSlot {
    run: Mutex<Run>,
    last_seq: watch::Sender<u64>,
}

impl RunSlot {
    pub(crate) fn lock(&self) -> MutexGuard<'_, Run> {
        self.run.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub(crate) fn subscribe(&self) -> watch::Receiver<u64> {
        self.last_seq.subscribe()
    }
}

/// Summary returned by the run endpoints.
#[derive(Debug, Clone, Serialize)]
pub struct RunView {
    pub run_id: String,
    pub phase: String,
    pub finished: bool,
    pub last_seq: u64,
    pub audit_enabled: bool,
    pub tasks: Vec<TaskView>,
    pub pending_approvals: Vec<PendingApproval>,
    pub failed: Vec<String>,
    pub stranded: Vec<String>,
    pub state: RunState,
}

#[derive(Debug, Clone, Serialize)]
pub struct TaskView {
    pub task_id: String,
    pub status: matrixgate::engine::TaskStatus,
    pub revision: u32,
    pub executor: Option<String>,
    pub artifact: Option<String>,
}

impl RunView {
    pub(crate) fn of(run: &Run, report: Option<&DriveReport>) -> Self {
        let spec = run.spec();
        let tasks = spec
            .chains
            .iter()
            .filter_map(|chain| {
                let task = run.state().task(&chain.task_id)?;
                Some(TaskView {
                    task_id: chain.task_id.clone(),
                    status: task.status,
                    revision: task.revision,
                    executor: chain.executor().map(|g| g.actor_id.clone()),
                    artifact: task.artifact_versions.last().map(|v| v.name.clone()),
                })
            })
            .collect();
        let stranded = match report {
            Some(r) => r.stranded.clone(),
            None => matrixgate::engine::stranded(run),
        };
        let failed = run
            .state()
            .tasks
            .iter()
            .filter(|(_, t)| t.status == matrixgate::engine::TaskStatus::Failed)
            .map(|(id, _)| id.clone())
            .collect();
        let finished = run
            .state()
            .tasks
            .iter()
            .all(|(id, t)| t.status.is_terminal() || stranded.contains(id));
        RunView {
            run_id: run.run_id().to_string(),
            phase: spec.phase.clone(),
            finished,
            last_seq: run.log().last_seq(),
            audit_enabled: spec.audit_enabled,
            tasks,
            pending_approvals: run.pending_approvals(),
            failed,
            stranded,
            state: run.state().clone(),
        }
    }
}

struct Inner {
    config: Config,
    adapter: Arc<dyn AgentAdapter>,
    bundles: Mutex<BTreeMap<String, Arc<MatrixBundle>>>,
    runs: Mutex<BTreeMap<String, Arc<RunSlot>>>,
    next_bundle: AtomicU64,
    next_run: AtomicU64,
}

/// Shared service state: uploaded bundles and live runs, in memory.
#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

impl AppState {
    pub fn new(config: Config) -> Result<Self, String> {
        let adapter = config.adapter.build(ADAPTER_TIMEOUT)?;
        Ok(Self::with_adapter(config, adapter))
    }

    pub fn with_adapter(config: Config, adapter: Arc<dyn AgentAdapter>) -> Self {
        AppState {
            inner: Arc::new(Inner {
                config,
                adapter,
                bundles: Mutex::default(),
                runs: Mutex::default(),
                next_bundle: AtomicU64::new(1),
                next_run: AtomicU64::new(1),
            }),
        }
    }

    pub fn config(&self) -> &Config {
        &self.inner.config
    }

    pub(crate) fn add_bundle(&self, bundle: MatrixBundle) -> String {
        let id = format!("bundle-{}", self.inner.next_bundle.fetch_add(1, Ordering::Relaxed));
        lock(&self.inner.bundles).insert(id.clone(), Arc::new(bundle));
        id
    }

    pub(crate) fn bundle(&self, id: &str) -> Result<Arc<MatrixBundle>, ApiError> {
        lock(&self.inner.bundles)
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found("bundle", id))
    }

    pub(crate) fn slot(&self, id: &str) -> Result<Arc<RunSlot>, ApiError> {
        lock(&self.inner.runs)
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found("run", id))
    }

    pub(crate) fn slots(&self) -> Vec<Arc<RunSlot>> {
        lock(&self.inner.runs).values().cloned().collect()
    }

    /// Starts a run, drives it as far as it goes and registers it.
    pub(crate) fn start_run(&self, spec: WorkflowSpec) -> Result<RunView, ApiError> {
        let run_id = format!("run-{}", self.inner.next_run.fetch_add(1, Ordering::Relaxed));
        let run = Run::start(spec, &run_id, Box::new(SystemClock))?;
        let (tx, _) = watch::channel(0);
        let slot = Arc::new(RunSlot {
            run: Mutex::new(run),
            last_seq: tx,
        });
        let view = self.mutate(&slot, |_| Ok(()))?;
        lock(&self.inner.runs).insert(run_id, slot);
        Ok(view)
    }

    /// Applies `change` under the run lock, then drives, persists and
    /// wakes pollers. Returns the events appended by `change` itself.
    pub(crate) fn mutate_with<T>(
        &self,
        slot: &RunSlot,
        change: impl FnOnce(&mut Run) -> Result<T, ApiError>,
    ) -> Result<(T, RunView), ApiError> {
        let mut run = slot.lock();
        let before = run.log().last_seq();
        let result = change(&mut run);
        // A rejected change appends nothing; still drive in case an
        // earlier request left work behind.
        let report = Driver::new(self.inner.adapter.as_ref())
            .retry_budget(self.inner.config.retry_budget)
            .drive(&mut run, &mut ServiceDesk {
                simulate_inputs: self.inner.config.simulate_human_inputs,
            });
        if run.log().last_seq() != before {
            self.persist(&run);
            slot.last_seq.send_replace(run.log().last_seq());
        }
        let value = result?;
        let report = report?;
        Ok((value, RunView::of(&run, Some(&report))))
    }

    pub(crate) fn mutate(
        &self,
        slot: &RunSlot,
        change: impl FnOnce(&mut Run) -> Result<(), ApiError>,
    ) -> Result<RunView, ApiError> {
        self.mutate_with(slot, change).map(|((), view)| view)
    }

    fn persist(&self, run: &Run) {
        if !run.spec().audit_enabled {
            return;
        }
        let dir = self.audit_dir();
        let path = dir.join(format!("{}.jsonl", run.run_id()));
        let written = std::fs::create_dir_all(&dir)
            .and_then(|()| matrixgate::io::write_audit_log(&path, run.events()));
        if let Err(e) = written {
            eprintln!("matrixgate: cannot write {}: {e}", path.display());
        }
    }

    pub fn audit_dir(&self) -> PathBuf {
        self.inner.config.data_dir.join("runs")
    }
}

pub(crate) fn events_since(run: &Run, since_seq: u64) -> Vec<AuditEvent> {
    run.log().since(since_seq).to_vec()
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}
