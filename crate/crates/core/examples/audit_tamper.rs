// Edit one byte of a finished run's audit log and let the verifier find it.
//
// `cargo run -p matrixgate --example audit_tamper`

use matrixgate::engine::{verify_audit_text, AutoApprove, ChainStatus, Driver, LogicalClock, MockAgent, Run};
use matrixgate::pipeline::PipelineConfig;
use matrixgate::run_pipeline;

pub fn run_example() -> Result<ChainStatus, Box<dyn std::error::Error>> {
    let bundle = matrixgate::io::parse_bundle(matrixgate::DEVOPS_PLANNING)?;
    let workflow = run_pipeline(&bundle, &PipelineConfig::for_bundle(&bundle))?
        .workflow
        .ok_or("bundle did not validate")?;
    let mut run = Run::start(workflow, "tamper", Box::new(LogicalClock::default()))?;
    Driver::new(&MockAgent::new()).drive(&mut run, &mut AutoApprove)?;

    let log = run.log().to_jsonl();
    println!("{} events, {} bytes: {:?}", run.events().len(), log.len(), verify_audit_text(log.as_bytes()));

    // Quietly approve-wash a verdict: change "approve" to "apprOve" in the
    // first verdict line.
    let line = log.lines().position(|l| l.contains("\"VerdictRecorded\"")).ok_or("no verdict")?;
    let offset: usize = log.lines().take(line).map(|l| l.len() + 1).sum();
    let at = offset + log.lines().nth(line).unwrap().find("approve").unwrap() + 4;
    let mut forged = log.into_bytes();
    forged[at] = b'O';
    let status = verify_audit_text(&forged);
    println!("after editing line {}: {status:?}", line + 1);
    Ok(status)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example().map(|_| ())
}
