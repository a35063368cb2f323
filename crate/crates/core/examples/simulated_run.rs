// Run the compiled workflow with mock agents and seeded reviewers who
// sometimes send work back, then rebuild the state from the audit log.
//
// `cargo run -p matrixgate --example simulated_run`

use matrixgate::engine::{
    replay, verify_audit_chain, ChainStatus, DriveReport, Driver, LogicalClock, MockAgent, Run,
    SimulatedDesk,
};
use matrixgate::pipeline::PipelineConfig;
use matrixgate::run_pipeline;

pub fn run_example() -> Result<(Run, DriveReport), Box<dyn std::error::Error>> {
    let bundle = matrixgate::io::parse_bundle(matrixgate::DEVOPS_PLANNING)?;
    let workflow = run_pipeline(&bundle, &PipelineConfig::for_bundle(&bundle))?
        .workflow
        .ok_or("bundle did not validate")?;

    let mut run = Run::start(workflow, "demo", Box::new(LogicalClock::default()))?;
    let agent = MockAgent::new();
    let mut reviewers = SimulatedDesk::new(42, 0.4, 1);
    let report = Driver::new(&agent).drive(&mut run, &mut reviewers)?;

    for e in run.events() {
        println!(
            "{:>3} {:<20} {:<30} {}",
            e.seq,
            format!("{:?}", e.kind),
            e.task_id.as_deref().unwrap_or(""),
            e.actor_id.as_deref().unwrap_or("")
        );
    }
    for (task, state) in &run.state().tasks {
        println!("{task}: {:?}, revision {}", state.status, state.revision);
    }
    assert_eq!(verify_audit_chain(run.events()), ChainStatus::Intact);
    assert_eq!(&replay(run.spec(), run.events())?, run.state());
    println!("{:?}; chain intact; replay matches", report.status);
    Ok((run, report))
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example().map(|_| ())
}
