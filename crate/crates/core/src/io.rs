//! On-disk formats: bundle JSON, rendered reports, workflow specs and
//! JSON Lines audit logs.
//!
//! Bundles serialize in canonical form: keys in declaration order,
//! optional fields omitted rather than written as null, and alternative
//! cells written `I/C`.

use std::fmt::Write as _;
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constraints::ValidationReport;
use crate::engine::audit::{self, AuditEvent, ChainStatus};
use crate::engine::spec::WorkflowSpec;
use crate::model::{
    Actor, ActorKind, BundleConfig, MatrixBundle, ModelError, Provenance, RaciMatrix, RoleSet, Task,
};

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("reference error: {0}")]
    Reference(String),
    #[error("STEP1-ARTEFACT: task `{0}` is not artefact-based")]
    Step1Violation(String),
    #[error("invalid bundle: {0}")]
    Invalid(ModelError),
}

impl ParseError {
    /// Short machine-readable kind, used in API error bodies.
    pub fn kind(&self) -> &'static str {
        match self {
            ParseError::Syntax { .. } => "syntax",
            ParseError::Reference(_) => "reference",
            ParseError::Step1Violation(_) => "step1_violation",
            ParseError::Invalid(_) => "invalid",
        }
    }
}

impl From<serde_json::Error> for ParseError {
    fn from(e: serde_json::Error) -> Self {
        ParseError::Syntax {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        }
    }
}

impl From<ModelError> for ParseError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::UnknownTask(_)
            | ModelError::UnknownActor(_)
            | ModelError::UnknownDependency { .. } => ParseError::Reference(e.to_string()),
            ModelError::Step1Violation(task) => ParseError::Step1Violation(task),
            other => ParseError::Invalid(other),
        }
    }
}

fn is_false(b: &bool) -> bool {
    !*b
}

fn is_not_applicable(p: &Provenance) -> bool {
    *p == Provenance::NotApplicable
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ActorDoc {
    id: String,
    name: String,
    kind: ActorKind,
    #[serde(default, skip_serializing_if = "is_not_applicable")]
    provenance: Provenance,
    #[serde(default, skip_serializing_if = "IndexMap::is_empty")]
    capabilities: IndexMap<String, f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TaskDoc {
    id: String,
    name: String,
    artefact_based: bool,
    #[serde(default, skip_serializing_if = "is_false")]
    stakeholder_facing: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    required_capabilities: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    depends_on: Vec<String>,
    output_artifact_type: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BundleDoc {
    phase: String,
    actors: Vec<ActorDoc>,
    tasks: Vec<TaskDoc>,
    matrix: IndexMap<String, IndexMap<String, RoleSet>>,
    #[serde(default, skip_serializing_if = "BundleConfig::is_empty")]
    config: BundleConfig,
}

/// Parses and admits a bundle document.
pub fn parse_bundle(text: &str) -> Result<MatrixBundle, ParseError> {
    parse_bundle_bytes(text.as_bytes())
}

/// Byte-level entry point; invalid UTF-8 is reported as a syntax error.
pub fn parse_bundle_bytes(bytes: &[u8]) -> Result<MatrixBundle, ParseError> {
    let doc: BundleDoc = serde_json::from_slice(bytes)?;
    let actors = doc
        .actors
        .into_iter()
        .map(|a| Actor {
            id: a.id,
            name: a.name,
            kind: a.kind,
            provenance: a.provenance,
            capabilities: a.capabilities,
        })
        .collect();
    let tasks = doc
        .tasks
        .into_iter()
        .map(|t| Task {
            id: t.id,
            name: t.name,
            artefact_based: t.artefact_based,
            stakeholder_facing: t.stakeholder_facing,
            required_capabilities: t.required_capabilities,
            depends_on: t.depends_on,
            output_artifact_type: t.output_artifact_type,
        })
        .collect();
    let mut matrix = RaciMatrix::new();
    for (task, row) in doc.matrix {
        for (actor, cell) in row {
            matrix.set(task.clone(), actor, cell);
        }
    }
    let bundle = MatrixBundle {
        phase_name: doc.phase,
        actors,
        tasks,
        matrix,
        config: doc.config,
    };
    bundle.check()?;
    Ok(bundle)
}

/// Canonical pretty JSON with a trailing newline.
pub fn serialize_bundle(bundle: &MatrixBundle) -> String {
    let mut matrix = IndexMap::new();
    for task in &bundle.tasks {
        let row: IndexMap<String, RoleSet> = bundle
            .actors
            .iter()
            .filter_map(|a| {
                let cell = bundle.matrix.get(&task.id, &a.id);
                (!cell.is_empty()).then(|| (a.id.clone(), cell))
            })
            .collect();
        matrix.insert(task.id.clone(), row);
    }
    let doc = BundleDoc {
        phase: bundle.phase_name.clone(),
        actors: bundle
            .actors
            .iter()
            .map(|a| ActorDoc {
                id: a.id.clone(),
                name: a.name.clone(),
                kind: a.kind,
                provenance: a.provenance,
                capabilities: a.capabilities.clone(),
            })
            .collect(),
        tasks: bundle
            .tasks
            .iter()
            .map(|t| TaskDoc {
                id: t.id.clone(),
                name: t.name.clone(),
                artefact_based: t.artefact_based,
                stakeholder_facing: t.stakeholder_facing,
                required_capabilities: t.required_capabilities.clone(),
                depends_on: t.depends_on.clone(),
                output_artifact_type: t.output_artifact_type.clone(),
            })
            .collect(),
        matrix,
        config: bundle.config.clone(),
    };
    let mut out = serde_json::to_string_pretty(&doc).expect("bundle serializes");
    out.push('\n');
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Text,
    Json,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "text" => Ok(ReportFormat::Text),
            "json" => Ok(ReportFormat::Json),
            other => Err(format!("unknown format `{other}`")),
        }
    }
}

pub fn render_report(report: &ValidationReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(report).expect("report serializes");
            s.push('\n');
            s
        }
        ReportFormat::Text => render_text(report),
    }
}

fn render_text(report: &ValidationReport) -> String {
    let mut out = String::new();
    if report.findings.is_empty() {
        out.push_str("OK: 0 findings\n");
        return out;
    }
    for f in &report.findings {
        let tags: Vec<&str> = f.requirements.iter().map(|r| r.label()).collect();
        let _ = writeln!(
            out,
            "{} {} {} {} {} [{}]",
            f.rule_id,
            f.severity.as_str(),
            f.task_id.as_deref().unwrap_or("-"),
            f.actor_id.as_deref().unwrap_or("-"),
            f.message,
            tags.join(", ")
        );
    }
    let errors = report.errors().count();
    let n = report.findings.len();
    let plural = if n == 1 { "" } else { "s" };
    let verdict = if errors == 0 { "OK" } else { "INVALID" };
    let _ = writeln!(out, "{verdict}: {n} finding{plural} ({errors} error{})", if errors == 1 { "" } else { "s" });
    out
}

pub fn serialize_workflow(spec: &WorkflowSpec) -> String {
    let mut s = serde_json::to_string_pretty(spec).expect("workflow serializes");
    s.push('\n');
    s
}

pub fn parse_workflow(text: &str) -> Result<WorkflowSpec, ParseError> {
    let spec: WorkflowSpec = serde_json::from_str(text)?;
    spec.check_structure()
        .map_err(|e| ParseError::Reference(e.to_string()))?;
    Ok(spec)
}

pub fn write_audit_log(path: &Path, events: &[AuditEvent]) -> std::io::Result<()> {
    std::fs::write(path, audit::to_jsonl(events))
}

pub fn read_audit_log(path: &Path) -> std::io::Result<Result<Vec<AuditEvent>, (usize, serde_json::Error)>> {
    let text = std::fs::read_to_string(path)?;
    Ok(audit::parse_jsonl(&text))
}

/// Verifies an audit log file without trusting its parse.
pub fn verify_audit_file(path: &Path) -> std::io::Result<ChainStatus> {
    Ok(audit::verify_audit_text(&std::fs::read(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraints::{Finding, Severity};
    use crate::model::{TrustworthyRequirement, ValidationMode};

    const MINIMAL: &str = r#"{
        "phase": "p",
        "actors": [{"id": "h", "name": "H", "kind": "human"}],
        "tasks": [{"id": "t", "name": "T", "artefact_based": true, "output_artifact_type": "doc"}],
        "matrix": {"t": {"h": "R"}}
    }"#;

    #[test]
    fn minimal_bundle_parses_and_omits_empty_optionals() {
        let b = parse_bundle(MINIMAL).unwrap();
        let text = serialize_bundle(&b);
        assert!(!text.contains("null"));
        assert!(!text.contains("config"));
        assert!(!text.contains("capabilities"));
        assert!(!text.contains("depends_on"));
        assert_eq!(parse_bundle(&text).unwrap(), b);
    }

    #[test]
    fn unknown_keys_are_syntax_errors() {
        let text = MINIMAL.replacen("\"phase\": \"p\",", "\"phase\": \"p\", \"extra\": 1,", 1);
        assert!(matches!(parse_bundle(&text), Err(ParseError::Syntax { line: 2, .. })));
    }

    #[test]
    fn undeclared_actor_is_a_reference_error() {
        let text = MINIMAL.replace(r#"{"h": "R"}"#, r#"{"h": "R", "QA": "C"}"#);
        assert!(matches!(parse_bundle(&text), Err(ParseError::Reference(_))));
    }

    #[test]
    fn non_artefact_task_is_a_step1_violation() {
        let text = MINIMAL.replace("\"artefact_based\": true", "\"artefact_based\": false");
        assert!(matches!(parse_bundle(&text), Err(ParseError::Step1Violation(t)) if t == "t"));
    }

    #[test]
    fn garbage_is_located() {
        let err = parse_bundle_bytes(b"{\n  \xff").unwrap_err();
        assert!(matches!(err, ParseError::Syntax { line: 2, .. }), "{err:?}");
        assert!(matches!(parse_bundle(""), Err(ParseError::Syntax { .. })));
    }

    #[test]
    fn bad_role_string_is_rejected() {
        let text = MINIMAL.replace(r#""R""#, r#""R/A""#);
        assert!(matches!(parse_bundle(&text), Err(ParseError::Syntax { .. })));
    }

    #[test]
    fn text_rendering() {
        let empty = ValidationReport::new(ValidationMode::PaperCompat, vec![]);
        assert_eq!(render_report(&empty, ReportFormat::Text), "OK: 0 findings\n");

        let mut report = ValidationReport::new(ValidationMode::Strict, vec!["framework-core".into()]);
        report.findings.push(
            Finding::new("C1", Severity::Error, "no R", &[TrustworthyRequirement::Accountability])
                .on_task("t"),
        );
        let text = render_report(&report, ReportFormat::Text);
        assert_eq!(
            text,
            "C1 error t - no R [Accountability]\nINVALID: 1 finding (1 error)\n"
        );
        let json: serde_json::Value =
            serde_json::from_str(&render_report(&report, ReportFormat::Json)).unwrap();
        assert_eq!(json["findings"][0]["rule_id"], "C1");
        assert_eq!(json["status"], "invalid");
    }
}
