use std::time::Duration;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::IntoResponse;
use axum::routing::{get, post};
use axum::{Json, Router};
use matrixgate::engine::{Action, AuditEvent, EngineError, GateKind, TaskStatus, Verdict, WorkflowSpec, Work};
use matrixgate::model::{CellPolicy, ValidationMode};
use matrixgate::packs::{applicable_packs, builtin_packs};
use matrixgate::pipeline::{Pipeline, PipelineConfig};
use matrixgate::{validate_matrix, MatrixBundle};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::store::{events_since, AppState, RunView};
use crate::ApiError;

pub const ACTOR_HEADER: &str = "x-actor-id";
/// Upper bound on a single long-poll wait.
pub const MAX_POLL: Duration = Duration::from_secs(30);

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/bundles", post(upload_bundle))
        .route("/bundles/{id}", get(get_bundle))
        .route("/bundles/{id}/validate", post(validate))
        .route("/bundles/{id}/pipeline", post(pipeline))
        .route("/runs", post(create_run))
        .route("/runs/{id}", get(get_run))
        .route("/runs/{id}/workflow", get(get_workflow))
        .route("/runs/{id}/events", get(get_events))
        .route("/runs/{id}/tasks/{task}/consultations", post(post_consultation))
        .route("/runs/{id}/tasks/{task}/artifacts", post(post_artifact))
        .route("/approvals", get(list_approvals))
        .route("/approvals/{run}/{task}", post(post_verdict))
        .route("/packs", get(list_packs))
        .with_state(state)
}

type ApiResult<T> = Result<T, ApiError>;

fn parse_body<T: DeserializeOwned>(body: &[u8]) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("invalid request body: {e}")))
}

fn parse_opt<T: std::str::FromStr<Err = String>>(value: Option<&str>) -> ApiResult<Option<T>> {
    value.map(str::parse).transpose().map_err(ApiError::bad_request)
}

fn split_packs(list: &str) -> Vec<String> {
    list.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect()
}

/// Resolves the acting identity: the header wins, a differing body value is an error.
fn actor_id(headers: &HeaderMap, body: Option<&str>) -> ApiResult<String> {
    let header = match headers.get(ACTOR_HEADER) {
        Some(v) => Some(
            v.to_str()
                .map_err(|_| ApiError::bad_request("X-Actor-Id is not valid text"))?
                .to_string(),
        ),
        None => None,
    };
    match (header, body) {
        (Some(h), Some(b)) if h != b => Err(ApiError::bad_request(format!(
            "X-Actor-Id `{h}` does not match actor_id `{b}`"
        ))),
        (Some(h), _) => Ok(h),
        (None, Some(b)) => Ok(b.to_string()),
        (None, None) => Err(ApiError::bad_request("missing X-Actor-Id header or actor_id")),
    }
}

/// Runs blocking engine work (adapter calls may block) off the async pool.
async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
}

#[derive(Serialize)]
struct BundleSummary<'a> {
    bundle_id: &'a str,
    phase_name: &'a str,
    actors: usize,
    tasks: usize,
    applicable_packs: Vec<String>,
}

fn summary<'a>(id: &'a str, bundle: &'a MatrixBundle) -> BundleSummary<'a> {
    BundleSummary {
        bundle_id: id,
        phase_name: &bundle.phase_name,
        actors: bundle.actors.len(),
        tasks: bundle.tasks.len(),
        applicable_packs: applicable_packs(&bundle.actors),
    }
}

async fn upload_bundle(State(state): State<AppState>, body: Bytes) -> ApiResult<impl IntoResponse> {
    let bundle = matrixgate::io::parse_bundle_bytes(&body)?;
    let id = state.add_bundle(bundle.clone());
    let body = serde_json::to_value(summary(&id, &bundle)).expect("summary serializes");
    Ok((StatusCode::CREATED, Json(body)))
}

async fn get_bundle(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    let bundle = state.bundle(&id)?;
    let document: Value = serde_json::from_str(&matrixgate::io::serialize_bundle(&bundle)).expect("bundle document is JSON");
    Ok(Json(json!({
        "summary": summary(&id, &bundle),
        "bundle": document,
    })))
}

#[derive(Deserialize, Default)]
struct ValidateQuery {
    mode: Option<String>,
    packs: Option<String>,
    policy: Option<String>,
}

async fn validate(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<ValidateQuery>,
) -> ApiResult<impl IntoResponse> {
    let bundle = state.bundle(&id)?;
    let mode: ValidationMode = parse_opt(q.mode.as_deref())?
        .or(bundle.config.mode)
        .unwrap_or_default();
    let packs = q
        .packs
        .as_deref()
        .map(split_packs)
        .or_else(|| bundle.config.packs.clone())
        .unwrap_or_else(|| applicable_packs(&bundle.actors));
    let report = match parse_opt::<CellPolicy>(q.policy.as_deref())? {
        Some(policy) => {
            let mut b = (*bundle).clone();
            b.config.cell_policy = Some(policy);
            validate_matrix(&b, mode, &packs)?
        }
        None => validate_matrix(&bundle, mode, &packs)?,
    };
    Ok(Json(report))
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct PipelineOverrides {
    mode: Option<String>,
    threshold: Option<f64>,
    max_iterations: Option<u32>,
    policy: Option<String>,
    packs: Option<Vec<String>>,
}

impl PipelineOverrides {
    fn apply(self, bundle: &MatrixBundle) -> ApiResult<PipelineConfig> {
        let mut config = PipelineConfig::for_bundle(bundle);
        if let Some(mode) = parse_opt(self.mode.as_deref())? {
            config.mode = mode;
        }
        if let Some(policy) = parse_opt(self.policy.as_deref())? {
            config.policy = policy;
        }
        if let Some(t) = self.threshold {
            if !(0.0..=1.0).contains(&t) {
                return Err(ApiError::bad_request("threshold must lie in [0, 1]"));
            }
            config.threshold = t;
        }
        if let Some(n) = self.max_iterations {
            config.max_iterations = n;
        }
        if self.packs.is_some() {
            config.packs = self.packs;
        }
        Ok(config)
    }
}

async fn pipeline(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<impl IntoResponse> {
    let bundle = state.bundle(&id)?;
    let overrides: PipelineOverrides = if body.iter().all(u8::is_ascii_whitespace) {
        PipelineOverrides::default()
    } else {
        parse_body(&body)?
    };
    let config = overrides.apply(&bundle)?;
    let outcome = Pipeline::new(config).submit(&bundle)?;
    Ok(Json(outcome))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateRun {
    bundle_id: Option<String>,
    workflow: Option<WorkflowSpec>,
}

async fn create_run(State(state): State<AppState>, body: Bytes) -> ApiResult<impl IntoResponse> {
    let req: CreateRun = parse_body(&body)?;
    let spec = match (req.bundle_id, req.workflow) {
        (Some(_), Some(_)) => return Err(ApiError::bad_request("give either bundle_id or workflow, not both")),
        (None, None) => return Err(ApiError::bad_request("missing bundle_id or workflow")),
        (None, Some(spec)) => spec,
        (Some(id), None) => {
            let bundle = state.bundle(&id)?;
            let outcome = Pipeline::new(PipelineConfig::for_bundle(&bundle)).submit(&bundle)?;
            match outcome.workflow {
                Some(spec) => spec,
                None => {
                    let mut err = ApiError::new(
                        StatusCode::UNPROCESSABLE_ENTITY,
                        "invalid_matrix",
                        format!("bundle `{id}` does not compile to a workflow"),
                    );
                    err.detail = Some(serde_json::to_value(&outcome.report).expect("report serializes"));
                    return Err(err);
                }
            }
        }
    };
    let view = blocking(move || state.start_run(spec)).await?;
    Ok((StatusCode::CREATED, Json(view)))
}

async fn get_run(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<RunView>> {
    let slot = state.slot(&id)?;
    let run = slot.lock();
    Ok(Json(RunView::of(&run, None)))
}

async fn get_workflow(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<WorkflowSpec>> {
    let slot = state.slot(&id)?;
    let run = slot.lock();
    Ok(Json(run.spec().clone()))
}

#[derive(Deserialize)]
struct EventsQuery {
    #[serde(default)]
    since_seq: u64,
    #[serde(default)]
    timeout_ms: u64,
}

#[derive(Serialize)]
struct EventsPage {
    run_id: String,
    last_seq: u64,
    events: Vec<AuditEvent>,
}

/// Events with `seq > since_seq`. With `timeout_ms`, waits for new events
/// before answering with an empty page.
async fn get_events(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<EventsQuery>,
) -> ApiResult<Json<EventsPage>> {
    let slot = state.slot(&id)?;
    let mut rx = slot.subscribe();
    let deadline = tokio::time::Instant::now() + Duration::from_millis(q.timeout_ms).min(MAX_POLL);
    loop {
        {
            let run = slot.lock();
            let events = events_since(&run, q.since_seq);
            if !events.is_empty() || tokio::time::Instant::now() >= deadline {
                return Ok(Json(EventsPage {
                    run_id: id,
                    last_seq: run.log().last_seq(),
                    events,
                }));
            }
            rx.mark_unchanged();
        }
        if tokio::time::timeout_at(deadline, rx.changed()).await.is_err() {
            let run = slot.lock();
            return Ok(Json(EventsPage {
                run_id: id,
                last_seq: run.log().last_seq(),
                events: events_since(&run, q.since_seq),
            }));
        }
    }
}

#[derive(Deserialize)]
struct ApprovalsQuery {
    actor: Option<String>,
}

async fn list_approvals(State(state): State<AppState>, Query(q): Query<ApprovalsQuery>) -> impl IntoResponse {
    let mut pending = Vec::new();
    for slot in state.slots() {
        let run = slot.lock();
        pending.extend(
            run.pending_approvals()
                .into_iter()
                .filter(|p| q.actor.as_ref().is_none_or(|a| p.accountable_actors.contains(a))),
        );
    }
    Json(pending)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct VerdictBody {
    actor_id: Option<String>,
    verdict: Verdict,
    comment: Option<String>,
}

#[derive(Serialize)]
struct MutationResponse {
    events: Vec<AuditEvent>,
    run: RunView,
}

async fn post_verdict(
    State(state): State<AppState>,
    Path((run_id, task_id)): Path<(String, String)>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<Json<MutationResponse>> {
    let req: VerdictBody = parse_body(&body)?;
    let actor = actor_id(&headers, req.actor_id.as_deref())?;
    let slot = state.slot(&run_id)?;
    let (events, run) = blocking(move || {
        state.mutate_with(&slot, |run| {
            Ok(run.verdict(&task_id, &actor, req.verdict, req.comment)?.to_vec())
        })
    })
    .await?;
    Ok(Json(MutationResponse { events, run }))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ContentBody {
    actor_id: Option<String>,
    content: String,
}

async fn post_consultation(
    State(state): State<AppState>,
    Path((run_id, task_id)): Path<(String, String)>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<impl IntoResponse> {
    let req: ContentBody = parse_body(&body)?;
    let actor = actor_id(&headers, req.actor_id.as_deref())?;
    let slot = state.slot(&run_id)?;
    let (events, run) = blocking(move || {
        state.mutate_with(&slot, |run| {
            let action = Action::RecordConsult {
                task_id,
                actor_id: actor,
                content: req.content,
            };
            Ok(run.apply(action)?.to_vec())
        })
    })
    .await?;
    Ok((StatusCode::CREATED, Json(MutationResponse { events, run })))
}

/// A human Responsible submits the artifact. Advisory consultations still
/// outstanding are skipped, as the engine allows for human executors.
async fn post_artifact(
    State(state): State<AppState>,
    Path((run_id, task_id)): Path<(String, String)>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<impl IntoResponse> {
    let req: ContentBody = parse_body(&body)?;
    let actor = actor_id(&headers, req.actor_id.as_deref())?;
    let slot = state.slot(&run_id)?;
    let retries = state.config().retry_budget;
    let (events, run) = blocking(move || {
        state.mutate_with(&slot, |run| {
            let chain = run
                .spec()
                .chain(&task_id)
                .ok_or_else(|| EngineError::UnknownTask(task_id.clone()))?;
            let executor = chain.executor().map(|g| g.actor_id.as_str());
            if executor != Some(actor.as_str()) {
                return Err(EngineError::UnauthorizedActor {
                    task: task_id.clone(),
                    actor,
                    gate: GateKind::Execute,
                }
                .into());
            }
            let mut appended = Vec::new();
            if run.state().status(&task_id) == Some(TaskStatus::Consulting) {
                appended.extend_from_slice(run.apply(Action::StartExecution { task_id: task_id.clone() })?);
            }
            appended.extend_from_slice(run.execute_responsible(&task_id, Work::Operator(req.content), retries)?);
            Ok(appended)
        })
    })
    .await?;
    Ok((StatusCode::CREATED, Json(MutationResponse { events, run })))
}

async fn list_packs() -> Json<Value> {
    Json(json!({ "packs": builtin_packs() }))
}
