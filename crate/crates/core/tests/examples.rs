//! Every example runs and shows what it claims to.

#[allow(dead_code)]
mod validate_devops {
    include!("../examples/validate_devops.rs");
}
#[allow(dead_code)]
mod compliance_coverage {
    include!("../examples/compliance_coverage.rs");
}
#[allow(dead_code)]
mod automation_pipeline {
    include!("../examples/automation_pipeline.rs");
}
#[allow(dead_code)]
mod simulated_run {
    include!("../examples/simulated_run.rs");
}
#[allow(dead_code)]
mod audit_tamper {
    include!("../examples/audit_tamper.rs");
}
#[allow(dead_code)]
mod custom_adapter {
    include!("../examples/custom_adapter.rs");
}
#[allow(dead_code)]
mod review_desk {
    include!("../examples/review_desk.rs");
}

use matrixgate::engine::{ChainStatus, DriveStatus, TaskStatus};
use matrixgate::packs::Coverage;
use matrixgate::TrustworthyRequirement;

#[test]
fn validate_devops_example() {
    let (compat, strict) = validate_devops::run_example().unwrap();
    assert!(compat.is_valid() && compat.findings.is_empty());
    assert_eq!(strict.findings.len(), 1);
}

#[test]
fn compliance_coverage_example() {
    let (clean, broken) = compliance_coverage::run_example().unwrap();
    let oversight = TrustworthyRequirement::HumanAgencyOversight;
    assert_eq!(clean.coverage[&oversight], Coverage::Satisfied);
    assert_eq!(broken.coverage[&oversight], Coverage::Violated);
}

#[test]
fn automation_pipeline_example() {
    let outcome = automation_pipeline::run_example().unwrap();
    assert_eq!(outcome.workflow.unwrap().chains.len(), 6);
}

#[test]
fn simulated_run_example() {
    let (run, report) = simulated_run::run_example().unwrap();
    assert_eq!(report.status, DriveStatus::Finished);
    assert!(run.state().all_complete());
}

#[test]
fn audit_tamper_example() {
    assert!(matches!(audit_tamper::run_example().unwrap(), ChainStatus::CorruptAt(_)));
}

#[test]
fn custom_adapter_example() {
    let run = custom_adapter::run_example().unwrap();
    let backlog = run.state().task("create_product_backlog").unwrap();
    let artifact = backlog.latest_artifact().unwrap();
    assert!(artifact.content.contains("drawing on"));
    assert!(artifact.metadata["consultation_digests"].is_array());
}

#[test]
fn review_desk_example() {
    let run = review_desk::run_example().unwrap();
    let backlog = run.state().task("create_product_backlog").unwrap();
    assert_eq!(backlog.status, TaskStatus::Complete);
    assert_eq!(backlog.revision, 1);
    assert_eq!(backlog.artifact_versions.len(), 2);
}
