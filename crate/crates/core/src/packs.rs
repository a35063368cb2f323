//! Code-defined compliance rule packs and requirement coverage.
//!
//! Three packs ship: `framework-core` (the framework constraints),
//! `aia-deployer` and `aia-provider`. A rule is either matrix-scoped or
//! workflow-scoped; workflow rules need a compiled [`WorkflowSpec`].

use std::collections::{BTreeMap, HashSet};

use serde::Serialize;
use thiserror::Error;

use crate::constraints::{self, actor_kinds, rows, Finding, Severity, ValidationReport};
use crate::engine::spec::WorkflowSpec;
use crate::model::{
    Actor, MatrixBundle, Provenance, ResolvedMatrix, Role, TrustworthyRequirement, ValidationMode,
};

pub const FRAMEWORK_CORE: &str = "framework-core";
pub const AIA_DEPLOYER: &str = "aia-deployer";
pub const AIA_PROVIDER: &str = "aia-provider";

/// Attached verbatim to every coverage report.
pub const COVERAGE_DISCLAIMER: &str = "\"Satisfied\" means no encoded rule was violated; it is not a determination of legal compliance.";

use TrustworthyRequirement as Req;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PackError {
    #[error("unknown rule pack `{0}`")]
    UnknownPack(String),
    #[error("pack `{0}` has workflow-scoped rules but no workflow was supplied")]
    MissingWorkflow(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleScope {
    Matrix,
    Workflow,
}

/// Which rule scopes a caller wants evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScopeRequest {
    Matrix,
    Workflow,
    All,
}

impl ScopeRequest {
    fn includes(self, scope: RuleScope) -> bool {
        matches!(
            (self, scope),
            (ScopeRequest::All, _)
                | (ScopeRequest::Matrix, RuleScope::Matrix)
                | (ScopeRequest::Workflow, RuleScope::Workflow)
        )
    }
}

/// Everything a rule predicate may inspect.
pub struct PackContext<'a> {
    pub bundle: &'a MatrixBundle,
    pub matrix: &'a ResolvedMatrix,
    pub mode: ValidationMode,
    pub workflow: Option<&'a WorkflowSpec>,
}

/// One rule violation before it is stamped with the rule's id and tags.
pub struct Hit {
    pub task_id: Option<String>,
    pub actor_id: Option<String>,
    pub message: String,
}

impl Hit {
    fn task(task: &str, message: String) -> Self {
        Hit {
            task_id: Some(task.to_string()),
            actor_id: None,
            message,
        }
    }

    fn actor(mut self, actor: &str) -> Self {
        self.actor_id = Some(actor.to_string());
        self
    }
}

impl From<Finding> for Hit {
    fn from(f: Finding) -> Self {
        Hit {
            task_id: f.task_id,
            actor_id: f.actor_id,
            message: f.message,
        }
    }
}

#[derive(Clone, Copy)]
pub enum Predicate {
    Matrix(fn(&PackContext) -> Vec<Hit>),
    Workflow(fn(&PackContext, &WorkflowSpec) -> Vec<Hit>),
}

#[derive(Clone, Serialize)]
pub struct Rule {
    pub id: &'static str,
    pub description: &'static str,
    pub scope: RuleScope,
    pub severity: Severity,
    pub requirements: Vec<TrustworthyRequirement>,
    #[serde(skip)]
    pub predicate: Predicate,
}

impl Rule {
    fn matrix(
        id: &'static str,
        severity: Severity,
        requirements: &[Req],
        description: &'static str,
        predicate: fn(&PackContext) -> Vec<Hit>,
    ) -> Self {
        Rule {
            id,
            description,
            scope: RuleScope::Matrix,
            severity,
            requirements: requirements.to_vec(),
            predicate: Predicate::Matrix(predicate),
        }
    }

    fn workflow(
        id: &'static str,
        severity: Severity,
        requirements: &[Req],
        description: &'static str,
        predicate: fn(&PackContext, &WorkflowSpec) -> Vec<Hit>,
    ) -> Self {
        Rule {
            id,
            description,
            scope: RuleScope::Workflow,
            severity,
            requirements: requirements.to_vec(),
            predicate: Predicate::Workflow(predicate),
        }
    }

    fn finding(&self, hit: Hit) -> Finding {
        Finding {
            rule_id: self.id.to_string(),
            severity: self.severity,
            task_id: hit.task_id,
            actor_id: hit.actor_id,
            message: hit.message,
            requirements: self.requirements.iter().copied().collect(),
        }
    }
}

#[derive(Clone, Serialize)]
pub struct RulePack {
    pub id: &'static str,
    pub rules: Vec<Rule>,
}

impl RulePack {
    /// Panics if a rule carries no requirement tag or ids repeat.
    pub fn new(id: &'static str, rules: Vec<Rule>) -> Self {
        let mut ids = HashSet::new();
        for rule in &rules {
            assert!(
                !rule.requirements.is_empty(),
                "rule {} carries no requirement tag",
                rule.id
            );
            assert!(ids.insert(rule.id), "rule id {} repeats in {id}", rule.id);
        }
        RulePack { id, rules }
    }

    pub fn has_workflow_rules(&self) -> bool {
        self.rules.iter().any(|r| r.scope == RuleScope::Workflow)
    }
}

pub fn framework_core() -> RulePack {
    RulePack::new(
        FRAMEWORK_CORE,
        vec![
            Rule::matrix(
                "C1",
                Severity::Error,
                &[Req::Accountability],
                "every task has at least one Responsible assignment",
                |ctx| constraints::check_c1(ctx.matrix).into_iter().map(Hit::from).collect(),
            ),
            Rule::matrix(
                "C2",
                Severity::Error,
                &[Req::Accountability, Req::HumanAgencyOversight],
                "every task has an Accountable assignment unless LLM agents have no influence and a human is Responsible",
                |ctx| {
                    constraints::check_c2(ctx.matrix, &ctx.bundle.actors, ctx.mode)
                        .into_iter()
                        .map(Hit::from)
                        .collect()
                },
            ),
            Rule::matrix(
                "C3",
                Severity::Error,
                &[Req::HumanAgencyOversight, Req::Accountability],
                "no LLM agent is Responsible unless a human is Accountable",
                |ctx| {
                    constraints::check_c3(ctx.matrix, &ctx.bundle.actors)
                        .into_iter()
                        .map(Hit::from)
                        .collect()
                },
            ),
        ],
    )
}

/// Tasks where an agent matching `agent_filter` holds R or A without a human A.
fn agent_work_without_human_a(ctx: &PackContext, agent_filter: impl Fn(&Actor) -> bool) -> Vec<Hit> {
    let kinds = actor_kinds(ctx.matrix, &ctx.bundle.actors);
    rows(ctx.matrix, &kinds)
        .filter(|row| !row.human_holds(Role::A))
        .filter_map(|row| {
            let (agent, role) = row.cells.iter().find_map(|(id, _, cell)| {
                let actor = ctx.bundle.actor(id)?;
                match cell {
                    Some(role @ (Role::R | Role::A)) if actor.is_agent() && agent_filter(actor) => {
                        Some((*id, *role))
                    }
                    _ => None,
                }
            })?;
            Some(
                Hit::task(
                    row.task_id,
                    format!(
                        "LLM agent `{agent}` holds {role} on `{}` with no human Accountable to oversee it",
                        row.task_id
                    ),
                )
                .actor(agent),
            )
        })
        .collect()
}

fn unsupervised_execution(workflow: &WorkflowSpec, agent_filter: impl Fn(&str) -> bool) -> Vec<Hit> {
    workflow
        .chains
        .iter()
        .filter(|chain| {
            let exec = chain.executor();
            let agent_involved = exec.is_some_and(|g| {
                std::iter::once(&g.actor_id)
                    .chain(&g.assistants)
                    .any(|a| workflow.is_agent(a) && agent_filter(a))
            });
            agent_involved && !workflow.has_human_validator(chain)
        })
        .map(|chain| {
            let exec = chain.executor().map(|g| g.actor_id.as_str()).unwrap_or("-");
            Hit::task(
                &chain.task_id,
                format!(
                    "Execute gate of `{}` involves an LLM agent and is not followed by a human Validate gate",
                    chain.task_id
                ),
            )
            .actor(exec)
        })
        .collect()
}

fn audit_disabled(workflow: &WorkflowSpec) -> Vec<Hit> {
    if workflow.audit_enabled {
        Vec::new()
    } else {
        vec![Hit {
            task_id: None,
            actor_id: None,
            message: "audit logging is disabled for this workflow".to_string(),
        }]
    }
}

pub fn aia_deployer() -> RulePack {
    RulePack::new(
        AIA_DEPLOYER,
        vec![
            Rule::matrix(
                "AIA-D1",
                Severity::Error,
                &[Req::HumanAgencyOversight],
                "human oversight: an LLM agent holding R or A requires a human Accountable on the task",
                |ctx| agent_work_without_human_a(ctx, |_| true),
            ),
            Rule::matrix(
                "AIA-D2",
                Severity::Warning,
                &[Req::Accountability],
                "accountability for outputs should rest with humans, not LLM agents",
                |ctx| {
                    let kinds = actor_kinds(ctx.matrix, &ctx.bundle.actors);
                    rows(ctx.matrix, &kinds)
                        .flat_map(|row| {
                            row.holders(Role::A)
                                .filter(|(_, k)| *k == crate::model::ActorKind::LlmAgent)
                                .map(|(id, _)| {
                                    Hit::task(
                                        row.task_id,
                                        format!("LLM agent `{id}` is Accountable for `{}`", row.task_id),
                                    )
                                    .actor(id)
                                })
                                .collect::<Vec<_>>()
                        })
                        .collect()
                },
            ),
            Rule::workflow(
                "AIA-D3",
                Severity::Error,
                &[Req::HumanAgencyOversight, Req::Transparency],
                "every LLM Execute gate is followed by a human Validate gate before completion",
                |_, wf| unsupervised_execution(wf, |_| true),
            ),
            Rule::workflow(
                "AIA-D4",
                Severity::Error,
                &[Req::Accountability, Req::Transparency],
                "deployer record-keeping: workflow audit logging is enabled",
                |_, wf| audit_disabled(wf),
            ),
        ],
    )
}

fn in_house(ctx: &PackContext, actor_id: &str) -> bool {
    ctx.bundle
        .actor(actor_id)
        .is_some_and(|a| a.provenance == Provenance::InHouse)
}

pub fn aia_provider() -> RulePack {
    RulePack::new(
        AIA_PROVIDER,
        vec![
            Rule::matrix(
                "AIA-P1",
                Severity::Error,
                &[Req::HumanAgencyOversight, Req::Accountability],
                "provider human oversight: in-house LLM agents holding R or A require a human Accountable",
                |ctx| agent_work_without_human_a(ctx, |a| a.provenance == Provenance::InHouse),
            ),
            Rule::matrix(
                "AIA-P2",
                Severity::Warning,
                &[Req::TechnicalRobustnessSafety, Req::Transparency],
                "technical documentation: in-house LLM agents declare their capabilities",
                |ctx| {
                    ctx.bundle
                        .agents()
                        .filter(|a| a.provenance == Provenance::InHouse && a.capabilities.is_empty())
                        .map(|a| Hit {
                            task_id: None,
                            actor_id: Some(a.id.clone()),
                            message: format!("in-house LLM agent `{}` declares no capabilities", a.id),
                        })
                        .collect()
                },
            ),
            Rule::workflow(
                "AIA-P3",
                Severity::Error,
                &[Req::Accountability, Req::Transparency],
                "provider record-keeping: workflow audit logging is enabled",
                |_, wf| audit_disabled(wf),
            ),
            Rule::workflow(
                "AIA-P4",
                Severity::Error,
                &[Req::HumanAgencyOversight],
                "in-house LLM execution is followed by a human Validate gate",
                |ctx, wf| unsupervised_execution(wf, |a| in_house(ctx, a)),
            ),
        ],
    )
}

/// All built-in packs in canonical order.
pub fn builtin_packs() -> Vec<RulePack> {
    vec![framework_core(), aia_deployer(), aia_provider()]
}

pub fn pack(id: &str) -> Option<RulePack> {
    builtin_packs().into_iter().find(|p| p.id == id)
}

/// Packs that apply given the actors' provenance.
pub fn applicable_packs(actors: &[Actor]) -> Vec<String> {
    let mut packs = vec![FRAMEWORK_CORE.to_string()];
    if actors
        .iter()
        .any(|a| a.is_agent() && a.provenance == Provenance::ThirdParty)
    {
        packs.push(AIA_DEPLOYER.to_string());
    }
    if actors
        .iter()
        .any(|a| a.is_agent() && a.provenance == Provenance::InHouse)
    {
        packs.push(AIA_PROVIDER.to_string());
    }
    packs
}

/// Evaluates the rules of `pack` in the requested scopes.
pub fn evaluate_pack(
    pack: &RulePack,
    ctx: &PackContext,
    scope: ScopeRequest,
) -> Result<Vec<Finding>, PackError> {
    let mut findings = Vec::new();
    for rule in pack.rules.iter().filter(|r| scope.includes(r.scope)) {
        let hits = match rule.predicate {
            Predicate::Matrix(check) => check(ctx),
            Predicate::Workflow(check) => {
                let workflow = ctx
                    .workflow
                    .ok_or_else(|| PackError::MissingWorkflow(pack.id.to_string()))?;
                check(ctx, workflow)
            }
        };
        findings.extend(hits.into_iter().map(|h| rule.finding(h)));
    }
    Ok(findings)
}

/// Outcome per requirement in a coverage report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Coverage {
    NotExercised,
    Satisfied,
    Violated,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageReport {
    pub coverage: BTreeMap<TrustworthyRequirement, Coverage>,
    pub disclaimer: &'static str,
}

/// Maps each requirement to whether the rules that ran for `report`
/// exercised it and whether any error finding violated it.
pub fn requirement_coverage(report: &ValidationReport) -> CoverageReport {
    let mut active = HashSet::new();
    for id in &report.packs {
        let Some(pack) = pack(id) else { continue };
        for rule in &pack.rules {
            if rule.scope == RuleScope::Matrix || report.workflow_checked {
                active.extend(rule.requirements.iter().copied());
            }
        }
    }
    let violated: HashSet<_> = report
        .errors()
        .flat_map(|f| f.requirements.iter().copied())
        .collect();
    let coverage = TrustworthyRequirement::ALL
        .into_iter()
        .map(|req| {
            let verdict = if violated.contains(&req) {
                Coverage::Violated
            } else if active.contains(&req) {
                Coverage::Satisfied
            } else {
                Coverage::NotExercised
            };
            (req, verdict)
        })
        .collect();
    CoverageReport {
        coverage,
        disclaimer: COVERAGE_DISCLAIMER,
    }
}
