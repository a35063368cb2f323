mod support;

use matrixgate::engine::{
    replay, verify_audit_chain, Action, AutoApprove, ChainStatus, ConsultationEntry, Decision,
    DriveStatus, Driver, EngineError, EventType, HumanDesk, LogicalClock, MockAgent, Purpose, Run,
    TaskContext, TaskStatus, Verdict, Work,
};
use matrixgate::engine::adapter::AgentAdapter;
use sha2::{Digest, Sha256};
use support::*;

/// Supplies human content but never reviews, so runs stop at each gate.
struct Holding;

impl HumanDesk for Holding {
    fn consult(&mut self, _: &Run, task: &str, actor: &str) -> Option<String> {
        Some(format!("{actor} on {task}"))
    }
    fn produce(&mut self, _: &Run, task: &str, _: &str) -> Option<String> {
        Some(format!("{task} draft"))
    }
    fn review(&mut self, _: &Run, _: &str, _: &str) -> Option<Decision> {
        None
    }
}

fn devops_run() -> Run {
    Run::start(workflow_for(&golden()), "t1", Box::new(LogicalClock::default())).unwrap()
}

/// Drives the run, approving every earlier task, until `task` awaits validation.
fn advance_to(run: &mut Run, task: &str) {
    let agent = MockAgent::new();
    loop {
        Driver::new(&agent).drive(run, &mut Holding).unwrap();
        if run.state().status(task) == Some(TaskStatus::AwaitingValidation) {
            return;
        }
        let pending = run.pending_approvals();
        assert!(!pending.is_empty(), "run stalled before {task}");
        for p in pending {
            for actor in p.accountable_actors {
                run.verdict(&p.task_id, &actor, Verdict::Approve, None).unwrap();
            }
        }
    }
}

fn sha(s: &str) -> String {
    Sha256::digest(s.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

#[test]
fn only_the_root_task_starts_ready() {
    let run = devops_run();
    let ready: Vec<&str> = run
        .state()
        .tasks
        .iter()
        .filter(|(_, t)| t.status == TaskStatus::Ready)
        .map(|(id, _)| id.as_str())
        .collect();
    assert_eq!(ready, ["requirements_elicitation"]);
    assert_eq!(run.events()[0].kind, EventType::RunStarted);
}

#[test]
fn analyst_approval_completes_features_and_notifies_informed() {
    let mut run = devops_run();
    advance_to(&mut run, "create_features_user_stories");
    let events = run
        .verdict("create_features_user_stories", "business_analyst", Verdict::Approve, None)
        .unwrap()
        .to_vec();
    assert_eq!(run.state().status("create_features_user_stories"), Some(TaskStatus::Complete));
    let notified: Vec<&str> = events
        .iter()
        .filter(|e| e.kind == EventType::Notified)
        .filter_map(|e| e.actor_id.as_deref())
        .collect();
    assert_eq!(notified, ["product_owner", "scrum_master"]);
}

#[test]
fn owner_rejection_returns_backlog_to_execution() {
    let mut run = devops_run();
    advance_to(&mut run, "create_product_backlog");
    assert_eq!(run.state().task("create_product_backlog").unwrap().revision, 0);
    run.verdict(
        "create_product_backlog",
        "product_owner",
        Verdict::Reject,
        Some("split epics".into()),
    )
    .unwrap();
    let task = run.state().task("create_product_backlog").unwrap();
    assert_eq!(task.status, TaskStatus::Executing);
    assert_eq!(task.revision, 1);
}

#[test]
fn scrum_master_cannot_approve_the_backlog() {
    let mut run = devops_run();
    advance_to(&mut run, "create_product_backlog");
    let err = run
        .verdict("create_product_backlog", "scrum_master", Verdict::Approve, None)
        .unwrap_err();
    assert!(matches!(err, EngineError::UnauthorizedVerdict { .. }), "{err:?}");
}

#[test]
fn repeated_approval_on_complete_task_is_illegal() {
    let mut run = devops_run();
    advance_to(&mut run, "create_features_user_stories");
    run.verdict("create_features_user_stories", "business_analyst", Verdict::Approve, None)
        .unwrap();
    let err = run
        .verdict("create_features_user_stories", "business_analyst", Verdict::Approve, None)
        .unwrap_err();
    assert!(matches!(err, EngineError::IllegalTransition { status: TaskStatus::Complete, .. }));
}

#[test]
fn agent_execution_without_consultation_is_refused() {
    let mut run = devops_run();
    advance_to(&mut run, "requirements_elicitation");
    run.verdict("requirements_elicitation", "product_owner", Verdict::Approve, None)
        .unwrap();
    let agent = MockAgent::new();
    // Roadmap is human-executed with no validator; completing it readies features.
    run.apply(Action::BeginConsult { task_id: "create_product_roadmap".into() }).unwrap();
    run.apply(Action::StartExecution { task_id: "create_product_roadmap".into() }).unwrap();
    run.execute_responsible("create_product_roadmap", Work::Operator("roadmap".into()), 2)
        .unwrap();
    run.apply(Action::BeginConsult { task_id: "create_features_user_stories".into() }).unwrap();
    let err = run
        .execute_responsible("create_features_user_stories", Work::Agent(&agent), 2)
        .unwrap_err();
    match err {
        EngineError::MissingConsultation { missing, .. } => assert_eq!(missing, ["llm_agent_a"]),
        other => panic!("{other:?}"),
    }
}

#[test]
fn human_operator_content_passes_through() {
    let mut run = devops_run();
    run.apply(Action::BeginConsult { task_id: "requirements_elicitation".into() }).unwrap();
    run.apply(Action::StartExecution { task_id: "requirements_elicitation".into() }).unwrap();
    let events = run
        .execute_responsible("requirements_elicitation", Work::Operator("spec-v1".into()), 2)
        .unwrap()
        .to_vec();
    let produced = events.iter().find(|e| e.kind == EventType::ArtifactProduced).unwrap();
    assert_eq!(produced.payload["content"], "spec-v1");
    assert_eq!(produced.payload["digest"], sha("spec-v1"));
}

#[test]
fn mock_agent_lists_every_consultation_digest() {
    let entries = vec![
        ConsultationEntry { actor_id: "business_analyst".into(), content: "prioritise auth".into(), mandatory: true },
        ConsultationEntry { actor_id: "scrum_master".into(), content: "velocity 30".into(), mandatory: true },
    ];
    let ctx = TaskContext {
        run_id: "r".into(),
        task_id: "create_product_backlog".into(),
        task_name: "Create product backlog".into(),
        artifact: "create_product_backlog:product_backlog".into(),
        actor_id: "llm_agent_a".into(),
        purpose: Purpose::Execute,
        revision: 0,
        attempt: 0,
        consultation: entries.clone(),
        prior_versions: vec![],
        feedback: vec![],
    };
    let draft = MockAgent::new().invoke(&ctx).unwrap();
    let listed = draft.metadata["consultation_digests"].as_array().unwrap();
    assert_eq!(listed.len(), 2);
    for (entry, got) in entries.iter().zip(listed) {
        assert_eq!(got["actor_id"], entry.actor_id.as_str());
        assert_eq!(got["digest"], sha(&entry.content));
    }
    assert_eq!(MockAgent::new().invoke(&ctx).unwrap(), draft);
}

#[test]
fn auto_approved_table_run_completes_and_verifies() {
    let mut run = devops_run();
    let report = Driver::new(&MockAgent::new()).drive(&mut run, &mut AutoApprove).unwrap();
    assert_eq!(report.status, DriveStatus::Finished);
    assert!(run.state().all_complete());
    assert_eq!(verify_audit_chain(run.events()), ChainStatus::Intact);
    assert_eq!(&replay(run.spec(), run.events()).unwrap(), run.state());
    let completed: Vec<&str> = run
        .events()
        .iter()
        .filter(|e| e.kind == EventType::TaskCompleted)
        .filter_map(|e| e.task_id.as_deref())
        .collect();
    let order: Vec<&str> = DEVOPS_MATRIX.iter().map(|(t, _)| *t).collect();
    assert_eq!(completed, order);
}

#[test]
fn payload_tamper_is_blamed_on_its_event() {
    let mut run = devops_run();
    Driver::new(&MockAgent::new()).drive(&mut run, &mut AutoApprove).unwrap();
    let mut events = run.events().to_vec();
    events[4].payload = serde_json::json!({ "forged": true });
    assert_eq!(verify_audit_chain(&events), ChainStatus::CorruptAt(5));
    assert_eq!(verify_audit_chain(&[]), ChainStatus::Intact);
}

#[test]
fn every_byte_of_a_table_run_log_is_tamper_evident() {
    let mut run = devops_run();
    Driver::new(&MockAgent::new()).drive(&mut run, &mut AutoApprove).unwrap();
    let jsonl = run.log().to_jsonl().into_bytes();
    let missed: Vec<usize> = (0..jsonl.len()).filter(|&p| !tamper_detected(&jsonl, p)).collect();
    assert!(missed.is_empty(), "{} undetected positions, first {:?}", missed.len(), missed.first());
}

#[test]
fn dropping_adapter_fails_the_task_after_retries() {
    struct Down;
    impl AgentAdapter for Down {
        fn invoke(&self, _: &TaskContext) -> Result<matrixgate::engine::ArtifactDraft, matrixgate::engine::AdapterError> {
            Err(matrixgate::engine::AdapterError::Unavailable("offline".into()))
        }
    }
    let mut run = devops_run();
    let report = Driver::new(&Down).retry_budget(2).drive(&mut run, &mut AutoApprove).unwrap();
    assert_eq!(report.status, DriveStatus::Finished);
    assert_eq!(report.failed, ["requirements_elicitation"]);
    assert_eq!(report.stranded.len(), 5);
    let failed = run.events().iter().find(|e| e.kind == EventType::TaskFailed).unwrap();
    assert!(failed.payload["reason"].as_str().unwrap().contains("3 attempt(s)"));
}
