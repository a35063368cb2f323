// A scripted reviewer: the product owner rejects the first backlog draft
// with a comment, and the agent sees that feedback on its second attempt.
//
// `cargo run -p matrixgate --example review_desk`

use matrixgate::engine::{placeholder_content, Decision, Driver, HumanDesk, LogicalClock, MockAgent, Purpose, Run};
use matrixgate::pipeline::PipelineConfig;
use matrixgate::run_pipeline;

struct OwnerWantsSmallerEpics {
    rejected: bool,
}

impl HumanDesk for OwnerWantsSmallerEpics {
    fn consult(&mut self, run: &Run, task: &str, actor: &str) -> Option<String> {
        Some(placeholder_content(run, task, actor, "input"))
    }

    fn produce(&mut self, run: &Run, task: &str, actor: &str) -> Option<String> {
        Some(placeholder_content(run, task, actor, "artifact"))
    }

    fn review(&mut self, _: &Run, task: &str, actor: &str) -> Option<Decision> {
        if task == "create_product_backlog" && actor == "product_owner" && !self.rejected {
            self.rejected = true;
            return Some(Decision::reject("split the epics before sprint planning"));
        }
        Some(Decision::approve())
    }
}

pub fn run_example() -> Result<Run, Box<dyn std::error::Error>> {
    let bundle = matrixgate::io::parse_bundle(matrixgate::DEVOPS_PLANNING)?;
    let workflow = run_pipeline(&bundle, &PipelineConfig::for_bundle(&bundle))?
        .workflow
        .ok_or("bundle did not validate")?;
    let mut run = Run::start(workflow, "review", Box::new(LogicalClock::default()))?;
    let mut desk = OwnerWantsSmallerEpics { rejected: false };
    Driver::new(&MockAgent::new()).drive(&mut run, &mut desk)?;

    let backlog = run.state().task("create_product_backlog").ok_or("no backlog")?;
    println!("backlog: {:?}, revision {}", backlog.status, backlog.revision);
    for v in &backlog.artifact_versions {
        println!("  {} by {} digest {}", v.name, v.actor_id, &v.digest[..12]);
    }
    let ctx = run
        .task_context("create_product_backlog", "llm_agent_a", Purpose::Execute)
        .ok_or("no context")?;
    println!("feedback the agent saw: {:?}", ctx.feedback);
    Ok(run)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example().map(|_| ())
}
