// Steps 1 to 9 on the shipped bundle: automation decisions, checks and the
// compiled gate chains.
//
// `cargo run -p matrixgate --example automation_pipeline`

use matrixgate::pipeline::{PipelineConfig, PipelineOutcome};
use matrixgate::run_pipeline;

pub fn run_example() -> Result<PipelineOutcome, Box<dyn std::error::Error>> {
    let bundle = matrixgate::io::parse_bundle(matrixgate::DEVOPS_PLANNING)?;
    let outcome = run_pipeline(&bundle, &PipelineConfig::for_bundle(&bundle))?;

    for step in &outcome.steps {
        println!("step {} {:<40} {:?} {}", step.step, step.name, step.status, step.notes.join("; "));
    }
    println!();
    for d in &outcome.decisions {
        let agent = d.candidate_agent.as_deref().unwrap_or("-");
        println!("{:<30} {:<12} {:<12} {}", d.task_id, format!("{:?}", d.decision), agent, d.rationale);
    }
    if let Some(workflow) = &outcome.workflow {
        println!();
        for chain in &workflow.chains {
            let gates: Vec<String> = chain
                .gates
                .iter()
                .map(|g| format!("{:?}({})", g.kind, g.actor_id))
                .collect();
            println!("{}: {}", chain.task_id, gates.join(" -> "));
        }
    }
    Ok(outcome)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example().map(|_| ())
}
