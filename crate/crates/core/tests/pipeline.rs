mod support;

use matrixgate::engine::GateKind;
use matrixgate::model::{Automation, BundleConfig};
use matrixgate::pipeline::{Pipeline, PipelineConfig, PipelineError, StepStatus};
use matrixgate::{run_pipeline, RoleSet};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use support::*;

fn config_for(bundle: &matrixgate::MatrixBundle) -> PipelineConfig {
    PipelineConfig::for_bundle(bundle)
}

#[test]
fn c3_violation_stops_at_step_seven() {
    let mut bundle = golden();
    bundle.matrix.set("sprint_planning", "scrum_master", RoleSet::default());
    let outcome = run_pipeline(&bundle, &config_for(&bundle)).unwrap();
    assert!(outcome.workflow.is_none());
    assert!(!outcome.report.is_valid());
    assert!(outcome.report.findings.iter().any(|f| f.rule_id == "C3"));
    let last = outcome.steps.last().unwrap();
    assert_eq!((last.step, last.status), (7, StepStatus::Failed));
}

#[test]
fn resubmission_counts_reassignment_loops() {
    let good = golden();
    let mut bad = good.clone();
    bad.matrix.set("sprint_planning", "scrum_master", RoleSet::default());
    let mut session = Pipeline::new(config_for(&good));
    assert!(session.submit(&bad).unwrap().workflow.is_none());
    assert!(session.submit(&bad).unwrap().workflow.is_none());
    let fixed = session.submit(&good).unwrap();
    assert!(fixed.workflow.is_some());
    assert_eq!(fixed.iterations_used.step7_loop, 2);
}

#[test]
fn reassignment_loop_is_bounded() {
    let mut bad = golden();
    bad.matrix.set("sprint_planning", "scrum_master", RoleSet::default());
    let config = PipelineConfig {
        max_iterations: 1,
        ..config_for(&bad)
    };
    let mut session = Pipeline::new(config);
    session.submit(&bad).unwrap();
    session.submit(&bad).unwrap();
    assert!(matches!(
        session.submit(&bad),
        Err(PipelineError::MaxIterationsExceeded { step: 7, .. })
    ));
}

#[test]
fn disabled_audit_is_repaired_in_step_nine() {
    let mut bundle = golden();
    bundle.config.audit_enabled = Some(false);
    let outcome = run_pipeline(&bundle, &config_for(&bundle)).unwrap();
    let workflow = outcome.workflow.unwrap();
    assert!(workflow.audit_enabled);
    assert_eq!(outcome.iterations_used.step9_loop, 1);
    let nine: Vec<_> = outcome.steps.iter().filter(|s| s.step == 9).collect();
    assert_eq!(nine.len(), 2);
    assert!(nine[0].findings.iter().any(|f| f.rule_id == "AIA-D4"));
    assert_eq!(nine[1].status, StepStatus::Passed);
}

#[test]
fn zero_iterations_cannot_repair() {
    let mut bundle = golden();
    bundle.config = BundleConfig {
        audit_enabled: Some(false),
        max_iterations: Some(0),
        ..bundle.config.clone()
    };
    let err = run_pipeline(&bundle, &config_for(&bundle)).unwrap_err();
    assert!(matches!(err, PipelineError::MaxIterationsExceeded { step: 9, .. }), "{err:?}");
}

#[test]
fn step_eight_never_precedes_a_clean_step_seven() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100 {
        let bundle = random_valid_bundle(&mut rng);
        let outcome = run_pipeline(&bundle, &config_for(&bundle)).unwrap();
        let seven = outcome.steps.iter().position(|s| s.step == 7).unwrap();
        assert_ne!(outcome.steps[seven].status, StepStatus::Failed);
        assert!(outcome.steps[..seven].iter().all(|s| s.step < 7));
        assert!(outcome.iterations_used.step9_loop <= config_for(&bundle).max_iterations);
    }
}

#[test]
fn pipeline_is_deterministic() {
    let bundle = golden();
    let a = serde_json::to_string(&run_pipeline(&bundle, &config_for(&bundle)).unwrap()).unwrap();
    let b = serde_json::to_string(&run_pipeline(&bundle, &config_for(&bundle)).unwrap()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn authored_matrix_disagreeing_with_analysis_is_flagged() {
    let mut bundle = golden();
    // Hand the backlog to the owner; the analysis still picks agent A.
    bundle.matrix.set("create_product_backlog", "product_owner", "R".parse().unwrap());
    bundle.matrix.set("create_product_backlog", "llm_agent_a", "C".parse().unwrap());
    bundle.matrix.set("create_product_backlog", "business_analyst", "A".parse().unwrap());
    let outcome = run_pipeline(&bundle, &config_for(&bundle)).unwrap();
    let mismatch: Vec<_> = outcome
        .report
        .findings
        .iter()
        .filter(|f| f.rule_id == "STEP6-MISMATCH")
        .collect();
    assert_eq!(mismatch.len(), 1);
    assert_eq!(mismatch[0].task_id.as_deref(), Some("create_product_backlog"));
    assert!(outcome.report.is_valid());
}

#[test]
fn low_proficiency_is_demoted_with_a_warning() {
    let mut bundle = golden();
    let agent = bundle.actors.iter_mut().find(|a| a.id == "llm_agent_c").unwrap();
    agent.capabilities.insert("scrum_sprint_planning".into(), 0.5);
    let outcome = run_pipeline(&bundle, &config_for(&bundle)).unwrap();
    let sprint = outcome.decisions.iter().find(|d| d.task_id == "sprint_planning").unwrap();
    assert_eq!(sprint.decision, Automation::AssistOnly);
    assert!(outcome
        .report
        .findings
        .iter()
        .any(|f| f.rule_id == "STEP5-PROFICIENCY" && f.task_id.as_deref() == Some("sprint_planning")));
}

#[test]
fn synthesized_workflows_supervise_every_llm_execution() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..300 {
        let bundle = random_valid_bundle(&mut rng);
        let workflow = workflow_for(&bundle);
        for chain in &workflow.chains {
            if workflow.agent_executes(chain) {
                let exec = chain.gates.iter().position(|g| g.kind == GateKind::Execute).unwrap();
                assert!(chain.gates[exec..]
                    .iter()
                    .any(|g| g.kind == GateKind::Validate && workflow.is_human(&g.actor_id)));
            }
        }
        workflow.check_runnable().unwrap();
    }
}
