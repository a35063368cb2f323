// Plug in your own agent: anything implementing `AgentAdapter` can hold a
// Responsible or Consulted gate. This one drafts text from its inputs.
//
// `cargo run -p matrixgate --example custom_adapter`

use matrixgate::engine::{
    AdapterError, AgentAdapter, ArtifactDraft, AutoApprove, Driver, LogicalClock, Purpose, Run,
    TaskContext,
};
use matrixgate::pipeline::PipelineConfig;
use matrixgate::run_pipeline;
use serde_json::json;

struct Templater;

impl AgentAdapter for Templater {
    fn invoke(&self, ctx: &TaskContext) -> Result<ArtifactDraft, AdapterError> {
        let content = match ctx.purpose {
            Purpose::Consult => format!("{} suggests reusing last quarter's {}", ctx.actor_id, ctx.artifact),
            Purpose::Execute => {
                let inputs: Vec<&str> = ctx.consultation.iter().map(|c| c.content.as_str()).collect();
                format!("{} r{} drawing on: {}", ctx.task_name, ctx.revision, inputs.join(" | "))
            }
        };
        Ok(ArtifactDraft {
            content,
            metadata: json!({ "adapter": "templater" }),
        })
    }
}

pub fn run_example() -> Result<Run, Box<dyn std::error::Error>> {
    let bundle = matrixgate::io::parse_bundle(matrixgate::DEVOPS_PLANNING)?;
    let workflow = run_pipeline(&bundle, &PipelineConfig::for_bundle(&bundle))?
        .workflow
        .ok_or("bundle did not validate")?;
    let mut run = Run::start(workflow, "templater", Box::new(LogicalClock::default()))?;
    Driver::new(&Templater).drive(&mut run, &mut AutoApprove)?;
    for (task, state) in &run.state().tasks {
        if let Some(artifact) = state.latest_artifact() {
            println!("{task} [{}] {}", artifact.name, artifact.content);
            println!("    metadata {}", artifact.metadata);
        }
    }
    Ok(run)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example().map(|_| ())
}
