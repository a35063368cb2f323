//! The three framework constraints and the validation report they feed.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::model::{
    ActorKind, MatrixBundle, ModelError, RequirementSet, ResolvedMatrix, Role,
    TrustworthyRequirement, ValidationMode,
};
use crate::packs::{self, PackError, ScopeRequest};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Error,
    Warning,
    Info,
}

impl Severity {
    pub fn as_str(self) -> &'static str {
        match self {
            Severity::Error => "error",
            Severity::Warning => "warning",
            Severity::Info => "info",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    pub rule_id: String,
    pub severity: Severity,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub actor_id: Option<String>,
    pub message: String,
    pub requirements: RequirementSet,
}

impl Finding {
    pub fn new(
        rule_id: &str,
        severity: Severity,
        message: impl Into<String>,
        requirements: &[TrustworthyRequirement],
    ) -> Self {
        assert!(!rule_id.is_empty(), "finding without a rule id");
        Finding {
            rule_id: rule_id.to_string(),
            severity,
            task_id: None,
            actor_id: None,
            message: message.into(),
            requirements: requirements.iter().copied().collect(),
        }
    }

    pub fn on_task(mut self, task: impl Into<String>) -> Self {
        self.task_id = Some(task.into());
        self
    }

    pub fn by_actor(mut self, actor: impl Into<String>) -> Self {
        self.actor_id = Some(actor.into());
        self
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportStatus {
    Valid,
    Invalid,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "ReportDocument", from = "ReportDocument")]
pub struct ValidationReport {
    pub mode: ValidationMode,
    pub packs: Vec<String>,
    pub findings: Vec<Finding>,
    /// Whether workflow-scoped rules of `packs` were evaluated too.
    pub workflow_checked: bool,
}

#[derive(Serialize, Deserialize)]
struct ReportDocument {
    mode: ValidationMode,
    packs: Vec<String>,
    status: ReportStatus,
    findings: Vec<Finding>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    workflow_checked: bool,
}

impl From<ValidationReport> for ReportDocument {
    fn from(r: ValidationReport) -> Self {
        ReportDocument {
            status: r.status(),
            mode: r.mode,
            packs: r.packs,
            findings: r.findings,
            workflow_checked: r.workflow_checked,
        }
    }
}

impl From<ReportDocument> for ValidationReport {
    fn from(d: ReportDocument) -> Self {
        ValidationReport {
            mode: d.mode,
            packs: d.packs,
            findings: d.findings,
            workflow_checked: d.workflow_checked,
        }
    }
}

impl ValidationReport {
    pub fn new(mode: ValidationMode, packs: Vec<String>) -> Self {
        ValidationReport {
            mode,
            packs,
            findings: Vec::new(),
            workflow_checked: false,
        }
    }

    pub fn status(&self) -> ReportStatus {
        if self.findings.iter().any(Finding::is_error) {
            ReportStatus::Invalid
        } else {
            ReportStatus::Valid
        }
    }

    pub fn is_valid(&self) -> bool {
        self.status() == ReportStatus::Valid
    }

    pub fn errors(&self) -> impl Iterator<Item = &Finding> {
        self.findings.iter().filter(|f| f.is_error())
    }

    /// Orders findings by task declaration order (task-less findings
    /// last), then rule id, then actor declaration order.
    pub fn sort(&mut self, task_ids: &[String], actor_ids: &[String]) {
        let position = |ids: &[String], id: &Option<String>| {
            id.as_ref()
                .and_then(|id| ids.iter().position(|x| x == id))
                .unwrap_or(usize::MAX)
        };
        self.findings.sort_by(|a, b| {
            position(task_ids, &a.task_id)
                .cmp(&position(task_ids, &b.task_id))
                .then_with(|| a.rule_id.cmp(&b.rule_id))
                .then_with(|| position(actor_ids, &a.actor_id).cmp(&position(actor_ids, &b.actor_id)))
                .then_with(|| a.message.cmp(&b.message))
                .then(Ordering::Equal)
        });
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ValidationError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Pack(#[from] PackError),
}

/// Per-task view of one resolved row, split by actor kind.
pub(crate) struct RowView<'a> {
    pub task_id: &'a str,
    pub cells: Vec<(&'a str, ActorKind, Option<Role>)>,
}

impl RowView<'_> {
    pub fn holders(&self, role: Role) -> impl Iterator<Item = (&str, ActorKind)> {
        self.cells
            .iter()
            .filter(move |(_, _, cell)| *cell == Some(role))
            .map(|(id, kind, _)| (*id, *kind))
    }

    pub fn human_holds(&self, role: Role) -> bool {
        self.holders(role).any(|(_, k)| k == ActorKind::Human)
    }

    pub fn first_agent_holding(&self, role: Role) -> Option<&str> {
        self.holders(role)
            .find(|(_, k)| *k == ActorKind::LlmAgent)
            .map(|(id, _)| id)
    }
}

pub(crate) fn rows<'a>(
    matrix: &'a ResolvedMatrix,
    kinds: &'a [ActorKind],
) -> impl Iterator<Item = RowView<'a>> {
    matrix.task_ids().iter().enumerate().map(move |(t, task_id)| RowView {
        task_id,
        cells: matrix
            .actor_ids()
            .iter()
            .zip(kinds)
            .zip(matrix.row(t))
            .map(|((id, kind), cell)| (id.as_str(), *kind, *cell))
            .collect(),
    })
}

pub(crate) fn actor_kinds(matrix: &ResolvedMatrix, bundle_actors: &[crate::model::Actor]) -> Vec<ActorKind> {
    matrix
        .actor_ids()
        .iter()
        .map(|id| {
            bundle_actors
                .iter()
                .find(|a| &a.id == id)
                .map(|a| a.kind)
                .unwrap_or(ActorKind::Human)
        })
        .collect()
}

/// Every task needs at least one responsible actor.
pub fn check_c1(matrix: &ResolvedMatrix) -> Vec<Finding> {
    (0..matrix.task_ids().len())
        .filter(|&t| !matrix.row(t).contains(&Some(Role::R)))
        .map(|t| {
            let task = &matrix.task_ids()[t];
            Finding::new(
                "C1",
                Severity::Error,
                format!("task `{task}` has no Responsible assignment"),
                &[TrustworthyRequirement::Accountability],
            )
            .on_task(task.clone())
        })
        .collect()
}

/// Every task needs an accountable actor unless LLM agents have no
/// influence on its output and a human does the work.
pub fn check_c2(
    matrix: &ResolvedMatrix,
    actors: &[crate::model::Actor],
    mode: ValidationMode,
) -> Vec<Finding> {
    let kinds = actor_kinds(matrix, actors);
    rows(matrix, &kinds)
        .filter(|row| row.holders(Role::A).next().is_none())
        .filter(|row| {
            let human_r = row.human_holds(Role::R);
            let exception = match mode {
                ValidationMode::Strict => {
                    human_r
                        && row.cells.iter().all(|(_, kind, cell)| {
                            *kind == ActorKind::Human || matches!(cell, None | Some(Role::I))
                        })
                }
                ValidationMode::PaperCompat => human_r,
            };
            !exception
        })
        .map(|row| {
            let why = match (mode, row.human_holds(Role::R)) {
                (_, false) => "no human holds Responsible",
                (ValidationMode::Strict, true) => {
                    "an LLM agent holds a role other than Informed"
                }
                (ValidationMode::PaperCompat, true) => unreachable!(),
            };
            Finding::new(
                "C2",
                Severity::Error,
                format!(
                    "task `{}` has no Accountable assignment and the exception does not hold: {why}",
                    row.task_id
                ),
                &[
                    TrustworthyRequirement::Accountability,
                    TrustworthyRequirement::HumanAgencyOversight,
                ],
            )
            .on_task(row.task_id)
        })
        .collect()
}

/// No LLM agent may be responsible for a task without a human accountable.
pub fn check_c3(matrix: &ResolvedMatrix, actors: &[crate::model::Actor]) -> Vec<Finding> {
    let kinds = actor_kinds(matrix, actors);
    rows(matrix, &kinds)
        .filter_map(|row| {
            let agent = row.first_agent_holding(Role::R)?;
            if row.human_holds(Role::A) {
                return None;
            }
            Some(
                Finding::new(
                    "C3",
                    Severity::Error,
                    format!(
                        "LLM agent `{agent}` is Responsible for `{}` but no human is Accountable",
                        row.task_id
                    ),
                    &[
                        TrustworthyRequirement::HumanAgencyOversight,
                        TrustworthyRequirement::Accountability,
                    ],
                )
                .on_task(row.task_id)
                .by_actor(agent),
            )
        })
        .collect()
}

/// Resolves the bundle with its configured cell policy and evaluates the
/// matrix-scoped rules of every requested pack. `framework-core` (C1-C3)
/// always runs.
pub fn validate_matrix(
    bundle: &MatrixBundle,
    mode: ValidationMode,
    packs: &[String],
) -> Result<ValidationReport, ValidationError> {
    let policy = bundle.config.cell_policy.unwrap_or_default();
    let matrix = bundle.resolve(policy)?;
    validate_resolved(bundle, &matrix, mode, packs)
}

/// Same as [`validate_matrix`] for a matrix already resolved by the caller.
pub fn validate_resolved(
    bundle: &MatrixBundle,
    matrix: &ResolvedMatrix,
    mode: ValidationMode,
    packs: &[String],
) -> Result<ValidationReport, ValidationError> {
    let pack_ids = with_core(packs);
    let mut report = ValidationReport::new(mode, pack_ids.clone());
    for id in &pack_ids {
        let pack = packs::pack(id).ok_or_else(|| PackError::UnknownPack(id.clone()))?;
        let ctx = packs::PackContext {
            bundle,
            matrix,
            mode,
            workflow: None,
        };
        report
            .findings
            .extend(packs::evaluate_pack(&pack, &ctx, ScopeRequest::Matrix)?);
    }
    report.sort(matrix.task_ids(), matrix.actor_ids());
    Ok(report)
}

/// Puts `framework-core` first and drops duplicates, keeping caller order otherwise.
pub(crate) fn with_core(packs: &[String]) -> Vec<String> {
    let mut out = vec![packs::FRAMEWORK_CORE.to_string()];
    for p in packs {
        if !out.contains(p) {
            out.push(p.clone());
        }
    }
    out
}
