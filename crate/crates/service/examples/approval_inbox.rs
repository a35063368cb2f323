// Drives the HTTP API in-process: upload the DevOps planning bundle, start
// a run, then work through the approval inbox as each accountable human.
//
// `cargo run -p matrixgate-service --example approval_inbox`

use std::error::Error;
use std::sync::Arc;

use axum::body::Body;
use axum::http::Request;
use axum::Router;
use http_body_util::BodyExt;
use matrixgate::engine::MockAgent;
use matrixgate_service::{router, AppState, Config};
use serde_json::{json, Value};
use tower::ServiceExt;

async fn call(app: &Router, req: Request<Body>) -> Result<(u16, Value), Box<dyn Error>> {
    let resp = app.clone().oneshot(req).await?;
    let status = resp.status().as_u16();
    let bytes = resp.into_body().collect().await?.to_bytes();
    Ok((status, serde_json::from_slice(&bytes)?))
}

fn post(uri: &str, actor: Option<&str>, body: String) -> Request<Body> {
    let mut req = Request::post(uri).header("content-type", "application/json");
    if let Some(actor) = actor {
        req = req.header("x-actor-id", actor);
    }
    req.body(Body::from(body)).expect("request builds")
}

/// Returns the number of verdicts posted.
pub async fn run_example() -> Result<usize, Box<dyn Error>> {
    let data = tempfile::tempdir()?;
    let config = Config {
        data_dir: data.path().to_path_buf(),
        simulate_human_inputs: true,
        ..Config::default()
    };
    let app = router(AppState::with_adapter(config, Arc::new(MockAgent::new())));

    let (_, bundle) = call(&app, post("/bundles", None, matrixgate::DEVOPS_PLANNING.into())).await?;
    let id = bundle["bundle_id"].as_str().ok_or("no bundle id")?;
    let (_, report) = call(&app, post(&format!("/bundles/{id}/validate"), None, String::new())).await?;
    println!("{id}: {} with {} finding(s)", report["status"], report["findings"].as_array().map_or(0, Vec::len));

    let (_, run) = call(&app, post("/runs", None, json!({ "bundle_id": id }).to_string())).await?;
    let run_id = run["run_id"].as_str().ok_or("no run id")?.to_string();

    let mut verdicts = 0;
    loop {
        let (_, inbox) = call(&app, Request::get("/approvals").body(Body::empty())?).await?;
        let Some(item) = inbox.as_array().and_then(|a| a.first()).cloned() else {
            break;
        };
        let task = item["task_id"].as_str().ok_or("no task")?;
        let actor = item["accountable_actors"][0].as_str().ok_or("no actor")?;
        let uri = format!("/approvals/{run_id}/{task}");
        let (status, _) = call(&app, post(&uri, Some(actor), json!({ "verdict": "approve" }).to_string())).await?;
        println!("{actor} approved {} -> {status}", item["artifact_version"]);
        verdicts += 1;
    }

    let (_, events) = call(&app, Request::get(format!("/runs/{run_id}/events?since_seq=0")).body(Body::empty())?).await?;
    let kinds: Vec<&str> = events["events"]
        .as_array()
        .ok_or("no events")?
        .iter()
        .filter_map(|e| e["type"].as_str())
        .collect();
    println!("{} events, last {:?}", kinds.len(), kinds.last());
    Ok(verdicts)
}

#[tokio::main]
async fn main() -> Result<(), Box<dyn Error>> {
    run_example().await?;
    Ok(())
}
