//! The nine-step implementation guideline as a staged pipeline, from an
//! authored bundle to a validated [`WorkflowSpec`].
//!
//! Step 7 failures stop the pipeline: reassigning responsibilities is a
//! human decision, and a [`Pipeline`] session counts resubmissions. Step 9
//! failures are repaired mechanically (enable audit logging, add human
//! Validate gates) for a bounded number of redesign rounds.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constraints::{self, Finding, Severity, ValidationError, ValidationReport};
use crate::engine::spec::{ActorRef, Gate, GateKind, TaskChain, WorkflowSpec};
use crate::model::{
    actors_with_role, Actor, Automation, CellPolicy, MatrixBundle, ModelError, ResolvedMatrix,
    Role, Task, TrustworthyRequirement, ValidationMode,
};
use crate::packs::{self, PackContext, PackError, ScopeRequest};

pub const DEFAULT_THRESHOLD: f64 = 0.7;
pub const DEFAULT_MAX_ITERATIONS: u32 = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub mode: ValidationMode,
    pub threshold: f64,
    pub max_iterations: u32,
    pub policy: CellPolicy,
    /// Overrides provenance-based pack selection when set.
    pub packs: Option<Vec<String>>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            mode: ValidationMode::PaperCompat,
            threshold: DEFAULT_THRESHOLD,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            policy: CellPolicy::Strict,
            packs: None,
        }
    }
}

impl PipelineConfig {
    /// Defaults overlaid with whatever the bundle's own config sets.
    pub fn for_bundle(bundle: &MatrixBundle) -> Self {
        let c = &bundle.config;
        let d = PipelineConfig::default();
        PipelineConfig {
            mode: c.mode.unwrap_or(d.mode),
            threshold: c.proficiency_threshold.unwrap_or(d.threshold),
            max_iterations: c.max_iterations.unwrap_or(d.max_iterations),
            policy: c.cell_policy.unwrap_or(d.policy),
            packs: c.packs.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AutomationDecision {
    pub task_id: String,
    pub decision: Automation,
    pub rationale: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub candidate_agent: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepStatus {
    Passed,
    Warning,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u8,
    pub name: String,
    pub status: StepStatus,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub findings: Vec<Finding>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl StepRecord {
    fn new(step: u8, name: &str) -> Self {
        StepRecord {
            step,
            name: name.to_string(),
            status: StepStatus::Passed,
            findings: Vec::new(),
            notes: Vec::new(),
        }
    }

    fn note(mut self, note: impl Into<String>) -> Self {
        self.notes.push(note.into());
        self
    }

    fn with_findings(mut self, findings: Vec<Finding>) -> Self {
        self.status = if findings.iter().any(Finding::is_error) {
            StepStatus::Failed
        } else if findings.is_empty() {
            StepStatus::Passed
        } else {
            StepStatus::Warning
        };
        self.findings = findings;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Iterations {
    pub step7_loop: u32,
    pub step9_loop: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineOutcome {
    pub steps: Vec<StepRecord>,
    pub decisions: Vec<AutomationDecision>,
    pub report: ValidationReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workflow: Option<WorkflowSpec>,
    pub iterations_used: Iterations,
}

impl PipelineOutcome {
    pub fn is_valid(&self) -> bool {
        self.workflow.is_some()
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Pack(#[from] PackError),
    #[error("matrix has {} error finding(s); fix assignments before creating workflows", .0.errors().count())]
    InvalidMatrix(Box<ValidationReport>),
    #[error("step {step} still fails after {iterations} iteration(s)")]
    MaxIterationsExceeded {
        step: u8,
        iterations: u32,
        findings: Vec<Finding>,
    },
}

impl From<ValidationError> for PipelineError {
    fn from(e: ValidationError) -> Self {
        match e {
            ValidationError::Model(m) => PipelineError::Model(m),
            ValidationError::Pack(p) => PipelineError::Pack(p),
        }
    }
}

/// Lowest proficiency the agent has over the task's requirements, or
/// `None` if it lacks one of them.
fn coverage(agent: &Actor, task: &Task) -> Option<f64> {
    task.required_capabilities
        .iter()
        .map(|c| agent.capabilities.get(c).copied())
        .try_fold(1.0f64, |acc, p| p.map(|p| acc.min(p)))
}

/// Decides per task whether an LLM agent can take it over.
pub fn identify_automation_candidates(tasks: &[Task], agents: &[Actor]) -> Vec<AutomationDecision> {
    tasks
        .iter()
        .map(|task| {
            let decision = |decision, rationale: String, candidate: Option<String>| AutomationDecision {
                task_id: task.id.clone(),
                decision,
                rationale,
                candidate_agent: candidate,
            };
            if !task.artefact_based {
                return decision(Automation::HumanOnly, "task is not artefact-based".into(), None);
            }
            if task.stakeholder_facing {
                return decision(
                    Automation::AssistOnly,
                    "stakeholder-facing task: agents may assist but not automate it".into(),
                    None,
                );
            }
            let best = agents
                .iter()
                .filter(|a| a.is_agent())
                .filter_map(|a| coverage(a, task).map(|p| (a, p)))
                .fold(None::<(&Actor, f64)>, |best, (a, p)| match best {
                    Some((_, bp)) if bp >= p => best,
                    _ => Some((a, p)),
                });
            match best {
                Some((agent, p)) => decision(
                    Automation::Automatable,
                    format!("covered by `{}` at proficiency {p:.2}", agent.id),
                    Some(agent.id.clone()),
                ),
                None => decision(Automation::AssistOnly, "no capable agent".into(), None),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProficiencyOutcome {
    pub passed: bool,
    pub decision: AutomationDecision,
    pub finding: Option<Finding>,
}

/// Confirms the candidate agent clears `threshold` on every required
/// capability; otherwise demotes the task to assist-only with a warning.
pub fn proficiency_check(
    decision: &AutomationDecision,
    agents: &[Actor],
    tasks: &[Task],
    threshold: f64,
) -> ProficiencyOutcome {
    let pass = || ProficiencyOutcome {
        passed: true,
        decision: decision.clone(),
        finding: None,
    };
    if decision.decision != Automation::Automatable {
        return pass();
    }
    let agent = decision
        .candidate_agent
        .as_deref()
        .and_then(|id| agents.iter().find(|a| a.id == id));
    let task = tasks.iter().find(|t| t.id == decision.task_id);
    let proficiency = match (agent, task) {
        (Some(agent), Some(task)) => coverage(agent, task),
        _ => None,
    };
    if proficiency.is_some_and(|p| p >= threshold) {
        return pass();
    }
    let agent_id = decision.candidate_agent.clone().unwrap_or_default();
    let shown = proficiency.map_or("none".to_string(), |p| format!("{p:.2}"));
    let finding = Finding::new(
        "STEP5-PROFICIENCY",
        Severity::Warning,
        format!("agent `{agent_id}` proficiency {shown} is below threshold {threshold:.2}; task demoted to assist-only"),
        &[TrustworthyRequirement::TechnicalRobustnessSafety],
    )
    .on_task(decision.task_id.clone())
    .by_actor(agent_id);
    ProficiencyOutcome {
        passed: false,
        decision: AutomationDecision {
            decision: Automation::AssistOnly,
            rationale: format!("demoted: {}", finding.message),
            ..decision.clone()
        },
        finding: Some(finding),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisOptions {
    pub mode: ValidationMode,
    pub policy: CellPolicy,
}

/// Compiles one gate chain per task:
/// Consult (each C) -> Execute (R) -> Validate (each A) -> Notify (each I).
pub fn synthesize_workflow(
    bundle: &MatrixBundle,
    decisions: &[AutomationDecision],
    options: &SynthesisOptions,
) -> Result<WorkflowSpec, PipelineError> {
    let matrix = bundle.resolve(options.policy)?;
    let report = constraints::validate_resolved(bundle, &matrix, options.mode, &[])?;
    if !report.is_valid() {
        return Err(PipelineError::InvalidMatrix(Box::new(report)));
    }
    let holders = |task: &str, role| -> Vec<String> {
        actors_with_role(&matrix, task, role)
            .expect("task exists")
            .into_iter()
            .map(str::to_string)
            .collect()
    };
    let chains = bundle
        .tasks
        .iter()
        .map(|task| {
            let mut gates: Vec<Gate> = holders(&task.id, Role::C)
                .into_iter()
                .map(|a| Gate::new(GateKind::Consult, a))
                .collect();
            let mut responsible = holders(&task.id, Role::R).into_iter();
            let mut execute = Gate::new(GateKind::Execute, responsible.next().expect("C1 holds"));
            execute.assistants = responsible.collect();
            gates.push(execute);
            gates.extend(holders(&task.id, Role::A).into_iter().map(|a| Gate::new(GateKind::Validate, a)));
            gates.extend(holders(&task.id, Role::I).into_iter().map(|a| Gate::new(GateKind::Notify, a)));
            TaskChain {
                task_id: task.id.clone(),
                task_name: task.name.clone(),
                artifact: format!("{}:{}", task.id, task.output_artifact_type),
                automation: decisions
                    .iter()
                    .find(|d| d.task_id == task.id)
                    .map(|d| d.decision),
                gates,
            }
        })
        .collect();
    let edges = bundle
        .tasks
        .iter()
        .flat_map(|t| t.depends_on.iter().map(move |d| (d.clone(), t.id.clone())))
        .collect();
    Ok(WorkflowSpec {
        phase: bundle.phase_name.clone(),
        audit_enabled: bundle.config.audit_enabled.unwrap_or(true),
        quorum: bundle.config.quorum.unwrap_or_default(),
        re_consult_on_reject: bundle.config.re_consult_on_reject.unwrap_or(false),
        actors: bundle
            .actors
            .iter()
            .map(|a| ActorRef {
                id: a.id.clone(),
                name: a.name.clone(),
                kind: a.kind,
            })
            .collect(),
        chains,
        edges,
    })
}

/// Applies the mechanical fixes for workflow findings. Returns whether
/// anything changed.
fn strengthen(workflow: &mut WorkflowSpec, bundle: &MatrixBundle, matrix: &ResolvedMatrix, findings: &[Finding]) -> bool {
    let mut changed = false;
    for f in findings.iter().filter(|f| f.is_error()) {
        match f.rule_id.as_str() {
            "AIA-D4" | "AIA-P3" if !workflow.audit_enabled => {
                workflow.audit_enabled = true;
                changed = true;
            }
            "AIA-D3" | "AIA-P4" => {
                let Some(task) = f.task_id.as_deref() else { continue };
                let humans: Vec<String> = actors_with_role(matrix, task, Role::A)
                    .unwrap_or_default()
                    .into_iter()
                    .filter(|a| bundle.actor(a).is_some_and(Actor::is_human))
                    .map(str::to_string)
                    .collect();
                let Some(chain) = workflow.chains.iter_mut().find(|c| c.task_id == task) else {
                    continue;
                };
                for human in humans {
                    if chain.validators().any(|v| v == human) {
                        continue;
                    }
                    let at = chain
                        .gates
                        .iter()
                        .position(|g| g.kind == GateKind::Notify)
                        .unwrap_or(chain.gates.len());
                    chain.gates.insert(at, Gate::new(GateKind::Validate, human));
                    changed = true;
                }
            }
            _ => {}
        }
    }
    changed
}

/// Runs Steps 1-9 over successive submissions of a bundle.
pub struct Pipeline {
    config: PipelineConfig,
    failed_step7: u32,
}

impl Pipeline {
    pub fn new(config: PipelineConfig) -> Self {
        Pipeline {
            config,
            failed_step7: 0,
        }
    }

    /// Runs the pipeline on a (possibly amended) bundle. Each earlier
    /// submission that stopped at Step 7 counts as one reassignment loop.
    pub fn submit(&mut self, bundle: &MatrixBundle) -> Result<PipelineOutcome, PipelineError> {
        let step7_loop = self.failed_step7;
        if step7_loop > self.config.max_iterations {
            return Err(PipelineError::MaxIterationsExceeded {
                step: 7,
                iterations: step7_loop,
                findings: Vec::new(),
            });
        }
        let outcome = execute(bundle, &self.config, step7_loop)?;
        if outcome.workflow.is_none() {
            self.failed_step7 += 1;
        }
        Ok(outcome)
    }
}

/// One-shot pipeline run.
pub fn run_pipeline(bundle: &MatrixBundle, config: &PipelineConfig) -> Result<PipelineOutcome, PipelineError> {
    Pipeline::new(config.clone()).submit(bundle)
}

fn execute(bundle: &MatrixBundle, config: &PipelineConfig, step7_loop: u32) -> Result<PipelineOutcome, PipelineError> {
    let mut steps = Vec::new();
    let mut warnings = Vec::new();

    // Steps 1-2: admission.
    bundle.check()?;
    steps.push(
        StepRecord::new(1, "list artefact-based tasks")
            .note(format!("{} tasks admitted", bundle.tasks.len())),
    );
    let humans = bundle.actors.iter().filter(|a| a.is_human()).count();
    steps.push(StepRecord::new(2, "list human actors and LLM agents").note(format!(
        "{humans} human actor(s), {} LLM agent(s)",
        bundle.actors.len() - humans
    )));

    // Step 3: applicable constraints.
    let pack_ids = constraints::with_core(
        &config
            .packs
            .clone()
            .unwrap_or_else(|| packs::applicable_packs(&bundle.actors)),
    );
    for id in &pack_ids {
        packs::pack(id).ok_or_else(|| PackError::UnknownPack(id.clone()))?;
    }
    steps.push(StepRecord::new(3, "list applicable regulatory constraints").note(pack_ids.join(", ")));

    // Step 4: automation candidates.
    let agents: Vec<Actor> = bundle.agents().cloned().collect();
    let initial = identify_automation_candidates(&bundle.tasks, &agents);
    let automatable = initial.iter().filter(|d| d.decision == Automation::Automatable).count();
    steps.push(
        StepRecord::new(4, "identify automatable tasks")
            .note(format!("{automatable} of {} tasks automatable", initial.len())),
    );

    // Step 5: proficiency.
    let mut decisions = Vec::with_capacity(initial.len());
    let mut step5 = Vec::new();
    for d in &initial {
        let checked = proficiency_check(d, &agents, &bundle.tasks, config.threshold);
        step5.extend(checked.finding);
        decisions.push(checked.decision);
    }
    warnings.extend(step5.iter().cloned());
    steps.push(StepRecord::new(5, "confirm agent proficiency").with_findings(step5));

    // Step 6: the authored matrix, cross-checked against the analysis.
    let matrix = bundle.resolve(config.policy)?;
    let step6: Vec<Finding> = decisions
        .iter()
        .filter(|d| d.decision == Automation::Automatable)
        .filter_map(|d| {
            let agent = d.candidate_agent.as_deref()?;
            (matrix.role_of(&d.task_id, agent) != Some(Role::R)).then(|| {
                Finding::new(
                    "STEP6-MISMATCH",
                    Severity::Warning,
                    format!(
                        "capability analysis picks `{agent}` for `{}` but the matrix does not make it Responsible",
                        d.task_id
                    ),
                    &[TrustworthyRequirement::Transparency],
                )
                .on_task(d.task_id.clone())
                .by_actor(agent)
            })
        })
        .collect();
    warnings.extend(step6.iter().cloned());
    steps.push(
        StepRecord::new(6, "assign R/A/C/I")
            .note(format!("matrix taken as authored ({} policy)", config.policy))
            .with_findings(step6),
    );

    // Step 7: constraints and matrix-scoped compliance rules.
    let step7 = constraints::validate_resolved(bundle, &matrix, config.mode, &pack_ids)?;
    steps.push(StepRecord::new(7, "check assignments against constraints").with_findings(step7.findings.clone()));
    let mut report = step7.clone();
    report.findings.extend(warnings.iter().cloned());
    report.sort(matrix.task_ids(), matrix.actor_ids());
    if !step7.is_valid() {
        return Ok(PipelineOutcome {
            steps,
            decisions,
            report,
            workflow: None,
            iterations_used: Iterations {
                step7_loop,
                step9_loop: 0,
            },
        });
    }

    // Steps 8-9: synthesize, check, strengthen.
    let options = SynthesisOptions {
        mode: config.mode,
        policy: config.policy,
    };
    let mut workflow = synthesize_workflow(bundle, &decisions, &options)?;
    steps.push(
        StepRecord::new(8, "create workflows")
            .note(format!("{} task chains", workflow.chains.len())),
    );
    let mut step9_loop = 0;
    let step9_findings = loop {
        let ctx = PackContext {
            bundle,
            matrix: &matrix,
            mode: config.mode,
            workflow: Some(&workflow),
        };
        let mut findings = Vec::new();
        for id in &pack_ids {
            let pack = packs::pack(id).expect("checked in step 3");
            findings.extend(packs::evaluate_pack(&pack, &ctx, ScopeRequest::Workflow)?);
        }
        let failed = findings.iter().any(Finding::is_error);
        steps.push(StepRecord::new(9, "check workflows against constraints").with_findings(findings.clone()));
        if !failed {
            break findings;
        }
        step9_loop += 1;
        if step9_loop > config.max_iterations || !strengthen(&mut workflow, bundle, &matrix, &findings) {
            return Err(PipelineError::MaxIterationsExceeded {
                step: 9,
                iterations: step9_loop,
                findings,
            });
        }
        steps.push(
            StepRecord::new(8, "redesign workflows")
                .note(format!("redesign round {step9_loop}")),
        );
    };

    report.findings.extend(step9_findings);
    report.workflow_checked = true;
    report.sort(matrix.task_ids(), matrix.actor_ids());
    Ok(PipelineOutcome {
        steps,
        decisions,
        report,
        workflow: Some(workflow),
        iterations_used: Iterations {
            step7_loop,
            step9_loop,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Provenance, RaciMatrix};

    #[test]
    fn no_capable_agent_means_assist_only() {
        let tasks = vec![Task::new("t", "T").requiring("quantum")];
        let agents = vec![Actor::agent("a", "A", Provenance::ThirdParty).with_capability("x", 1.0)];
        let d = identify_automation_candidates(&tasks, &agents);
        assert_eq!(d[0].decision, Automation::AssistOnly);
        assert_eq!(d[0].rationale, "no capable agent");
        assert_eq!(d[0].candidate_agent, None);
    }

    #[test]
    fn highest_proficiency_wins_ties_go_to_declaration_order() {
        let tasks = vec![Task::new("t", "T").requiring("x")];
        let agents = vec![
            Actor::agent("low", "L", Provenance::ThirdParty).with_capability("x", 0.8),
            Actor::agent("high", "H", Provenance::ThirdParty).with_capability("x", 0.9),
            Actor::agent("tie", "T", Provenance::ThirdParty).with_capability("x", 0.9),
        ];
        let d = identify_automation_candidates(&tasks, &agents);
        assert_eq!(d[0].candidate_agent.as_deref(), Some("high"));
    }

    #[test]
    fn proficiency_threshold_demotes() {
        let tasks = vec![Task::new("t", "T").requiring("x")];
        let agents = vec![Actor::agent("a", "A", Provenance::ThirdParty).with_capability("x", 0.5)];
        let d = identify_automation_candidates(&tasks, &agents).remove(0);
        let out = proficiency_check(&d, &agents, &tasks, 0.7);
        assert!(!out.passed);
        assert_eq!(out.decision.decision, Automation::AssistOnly);
        assert_eq!(out.finding.unwrap().rule_id, "STEP5-PROFICIENCY");
        assert!(proficiency_check(&d, &agents, &tasks, 0.0).passed);
    }

    #[test]
    fn human_only_chain_auto_validates() {
        let bundle = MatrixBundle::new(
            "p",
            vec![Actor::human("h", "H")],
            vec![Task::new("t", "T")],
            RaciMatrix::new().assign("t", "h", Role::R),
        )
        .unwrap();
        let wf = synthesize_workflow(
            &bundle,
            &[],
            &SynthesisOptions {
                mode: ValidationMode::PaperCompat,
                policy: CellPolicy::Strict,
            },
        )
        .unwrap();
        assert_eq!(wf.chains[0].gates, vec![Gate::new(GateKind::Execute, "h")]);
    }

    #[test]
    fn c1_error_blocks_synthesis() {
        let bundle = MatrixBundle::new(
            "p",
            vec![Actor::human("h", "H")],
            vec![Task::new("t", "T")],
            RaciMatrix::new().assign("t", "h", Role::A),
        )
        .unwrap();
        let err = synthesize_workflow(
            &bundle,
            &[],
            &SynthesisOptions {
                mode: ValidationMode::PaperCompat,
                policy: CellPolicy::Strict,
            },
        )
        .unwrap_err();
        assert!(matches!(err, PipelineError::InvalidMatrix(_)));
    }
}
