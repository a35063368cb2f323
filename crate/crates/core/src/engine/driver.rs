//! Drives a run as far as it can go without outside input.
//!
//! Agents are invoked through an [`AgentAdapter`]; anything a human must
//! provide (consultation, their own artifacts, verdicts) is asked of a
//! [`HumanDesk`]. A desk that answers `None` leaves the run blocked on
//! that input.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::adapter::AgentAdapter;
use super::run::{Run, Work};
use super::state::{Action, EngineError, TaskStatus, Verdict};

pub const DEFAULT_RETRY_BUDGET: u32 = 2;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Decision {
    pub verdict: Verdict,
    pub comment: Option<String>,
}

impl Decision {
    pub fn approve() -> Self {
        Decision {
            verdict: Verdict::Approve,
            comment: None,
        }
    }

    pub fn reject(comment: impl Into<String>) -> Self {
        Decision {
            verdict: Verdict::Reject,
            comment: Some(comment.into()),
        }
    }
}

pub trait HumanDesk {
    /// Input from a consulted human, or `None` to wait.
    fn consult(&mut self, run: &Run, task_id: &str, actor_id: &str) -> Option<String>;
    /// Artifact content from a responsible human, or `None` to wait.
    fn produce(&mut self, run: &Run, task_id: &str, actor_id: &str) -> Option<String>;
    /// A validator's verdict on the latest artifact, or `None` to wait.
    fn review(&mut self, run: &Run, task_id: &str, actor_id: &str) -> Option<Decision>;
}

/// Supplies placeholder human content and approves everything.
#[derive(Debug, Default, Clone)]
pub struct AutoApprove;

pub fn placeholder_content(run: &Run, task_id: &str, actor_id: &str, what: &str) -> String {
    let revision = run.state().task(task_id).map_or(0, |t| t.revision);
    format!("{what} for {task_id} by {actor_id} (revision {revision})")
}

impl HumanDesk for AutoApprove {
    fn consult(&mut self, run: &Run, task_id: &str, actor_id: &str) -> Option<String> {
        Some(placeholder_content(run, task_id, actor_id, "input"))
    }

    fn produce(&mut self, run: &Run, task_id: &str, actor_id: &str) -> Option<String> {
        Some(placeholder_content(run, task_id, actor_id, "artifact"))
    }

    fn review(&mut self, _: &Run, _: &str, _: &str) -> Option<Decision> {
        Some(Decision::approve())
    }
}

/// Seeded reviewers that reject a fraction of submissions, at most
/// `max_rejections` times per task.
#[derive(Debug, Clone)]
pub struct SimulatedDesk {
    rng: ChaCha8Rng,
    reject_rate: f64,
    max_rejections: u32,
}

impl SimulatedDesk {
    pub fn new(seed: u64, reject_rate: f64, max_rejections: u32) -> Self {
        SimulatedDesk {
            rng: ChaCha8Rng::seed_from_u64(seed),
            reject_rate,
            max_rejections,
        }
    }
}

impl HumanDesk for SimulatedDesk {
    fn consult(&mut self, run: &Run, task_id: &str, actor_id: &str) -> Option<String> {
        let nonce: u32 = self.rng.random();
        Some(format!(
            "{} #{nonce:08x}",
            placeholder_content(run, task_id, actor_id, "input")
        ))
    }

    fn produce(&mut self, run: &Run, task_id: &str, actor_id: &str) -> Option<String> {
        Some(placeholder_content(run, task_id, actor_id, "artifact"))
    }

    fn review(&mut self, run: &Run, task_id: &str, actor_id: &str) -> Option<Decision> {
        let revision = run.state().task(task_id).map_or(0, |t| t.revision);
        if revision < self.max_rejections && self.rng.random_bool(self.reject_rate) {
            Some(Decision::reject(format!("{actor_id} requests changes")))
        } else {
            Some(Decision::approve())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DriveStatus {
    /// No task can make further progress: each is Complete, Failed, or
    /// stranded behind a failed prerequisite.
    Finished,
    /// Waiting on input the desk did not provide.
    Blocked,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DriveReport {
    pub status: DriveStatus,
    pub actions: usize,
    pub failed: Vec<String>,
    /// Pending tasks that can never start because a prerequisite failed.
    pub stranded: Vec<String>,
}

/// Pending tasks with a failed or stranded prerequisite, in chain order.
pub fn stranded(run: &Run) -> Vec<String> {
    let spec = run.spec();
    let mut out: Vec<String> = Vec::new();
    loop {
        let before = out.len();
        for chain in &spec.chains {
            let id = &chain.task_id;
            if out.contains(id) || run.state().status(id) != Some(TaskStatus::Pending) {
                continue;
            }
            let blocked = spec.prerequisites(id).any(|p| {
                run.state().status(p) == Some(TaskStatus::Failed) || out.iter().any(|s| s == p)
            });
            if blocked {
                out.push(id.clone());
            }
        }
        if out.len() == before {
            break;
        }
    }
    spec.chains
        .iter()
        .map(|c| c.task_id.clone())
        .filter(|id| out.contains(id))
        .collect()
}

pub struct Driver<'a> {
    adapter: &'a dyn AgentAdapter,
    retry_budget: u32,
}

impl<'a> Driver<'a> {
    pub fn new(adapter: &'a dyn AgentAdapter) -> Self {
        Driver {
            adapter,
            retry_budget: DEFAULT_RETRY_BUDGET,
        }
    }

    pub fn retry_budget(mut self, retries: u32) -> Self {
        self.retry_budget = retries;
        self
    }

    /// Applies actions until the run finishes or nothing more can happen.
    pub fn drive(&self, run: &mut Run, desk: &mut dyn HumanDesk) -> Result<DriveReport, EngineError> {
        let mut actions = 0;
        loop {
            let mut progressed = false;
            let task_ids: Vec<String> = run.spec().chains.iter().map(|c| c.task_id.clone()).collect();
            for task_id in &task_ids {
                while self.step(run, desk, task_id)? {
                    actions += 1;
                    progressed = true;
                }
            }
            if !progressed {
                break;
            }
        }
        let failed: Vec<String> = run
            .state()
            .tasks
            .iter()
            .filter(|(_, t)| t.status == TaskStatus::Failed)
            .map(|(id, _)| id.clone())
            .collect();
        let stranded = stranded(run);
        let settled = run
            .state()
            .tasks
            .iter()
            .all(|(id, t)| t.status.is_terminal() || stranded.contains(id));
        let status = if settled {
            DriveStatus::Finished
        } else {
            DriveStatus::Blocked
        };
        Ok(DriveReport {
            status,
            actions,
            failed,
            stranded,
        })
    }

    /// Performs at most one action on `task_id`; returns whether it did.
    fn step(&self, run: &mut Run, desk: &mut dyn HumanDesk, task_id: &str) -> Result<bool, EngineError> {
        let Some(task) = run.state().task(task_id) else {
            return Ok(false);
        };
        let chain = run.spec().chain(task_id).expect("chain exists").clone();
        let executor = chain.executor().expect("runnable").actor_id.clone();
        match task.status {
            TaskStatus::Ready => {
                run.apply(Action::BeginConsult {
                    task_id: task_id.to_string(),
                })?;
                Ok(true)
            }
            TaskStatus::Consulting => {
                let outstanding: Vec<String> = chain
                    .consultants()
                    .filter(|c| !task.consultation.has(c))
                    .map(str::to_string)
                    .collect();
                for actor in &outstanding {
                    if run.spec().is_agent(actor) {
                        return match run.consult_agent(task_id, actor, self.adapter, self.retry_budget) {
                            Ok(_) | Err(EngineError::AdapterFailure { .. }) => Ok(true),
                            Err(e) => Err(e),
                        };
                    }
                    if let Some(content) = desk.consult(run, task_id, actor) {
                        run.apply(Action::RecordConsult {
                            task_id: task_id.to_string(),
                            actor_id: actor.clone(),
                            content,
                        })?;
                        return Ok(true);
                    }
                }
                // Humans executing may proceed without advisory input.
                if !outstanding.is_empty() && run.spec().is_human(&executor) {
                    run.apply(Action::StartExecution {
                        task_id: task_id.to_string(),
                    })?;
                    return Ok(true);
                }
                Ok(false)
            }
            TaskStatus::Executing => {
                if run.spec().is_agent(&executor) {
                    match run.execute_responsible(task_id, Work::Agent(self.adapter), self.retry_budget) {
                        Ok(_) | Err(EngineError::AdapterFailure { .. }) => Ok(true),
                        Err(e) => Err(e),
                    }
                } else if let Some(content) = desk.produce(run, task_id, &executor) {
                    run.execute_responsible(task_id, Work::Operator(content), self.retry_budget)?;
                    Ok(true)
                } else {
                    Ok(false)
                }
            }
            TaskStatus::AwaitingValidation => {
                let remaining: Vec<String> = chain
                    .validators()
                    .filter(|v| !task.approvals.iter().any(|a| a == v))
                    .map(str::to_string)
                    .collect();
                for actor in remaining {
                    if let Some(decision) = desk.review(run, task_id, &actor) {
                        run.verdict(task_id, &actor, decision.verdict, decision.comment)?;
                        return Ok(true);
                    }
                }
                Ok(false)
            }
            TaskStatus::Pending | TaskStatus::Complete | TaskStatus::Failed => Ok(false),
        }
    }
}
