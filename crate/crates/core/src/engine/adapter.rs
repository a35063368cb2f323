//! Agent adapters: the contract between the engine and whatever produces
//! an LLM agent's work.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use super::audit::sha256_hex;
use super::state::ConsultationEntry;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Purpose {
    /// Produce the task's artifact as its Responsible actor.
    Execute,
    /// Provide input as a Consulted actor.
    Consult,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PriorVersion {
    pub name: String,
    pub digest: String,
    pub content: String,
}

/// Everything an agent is given when invoked. This is also the HTTP
/// request body for live adapters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskContext {
    pub run_id: String,
    pub task_id: String,
    pub task_name: String,
    pub artifact: String,
    pub actor_id: String,
    pub purpose: Purpose,
    pub revision: u32,
    pub attempt: u32,
    pub consultation: Vec<ConsultationEntry>,
    pub prior_versions: Vec<PriorVersion>,
    /// Reviewer comments on rejected revisions, oldest first.
    pub feedback: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactDraft {
    pub content: String,
    #[serde(default)]
    pub metadata: Value,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AdapterError {
    #[error("agent unavailable: {0}")]
    Unavailable(String),
    #[error("agent returned HTTP {0}")]
    Status(u16),
    #[error("malformed agent response: {0}")]
    Malformed(String),
}

pub trait AgentAdapter: Send + Sync {
    fn invoke(&self, ctx: &TaskContext) -> Result<ArtifactDraft, AdapterError>;
}

/// Deterministic stand-in for an LLM agent.
///
/// Output content is the SHA-256 of the context (attempt excluded) and the
/// metadata lists the digest of every consultation entry it was given.
/// Failures can be injected at a seeded rate.
#[derive(Debug, Clone, Default)]
pub struct MockAgent {
    failure_rate: f64,
    seed: u64,
}

impl MockAgent {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_failures(mut self, rate: f64, seed: u64) -> Self {
        self.failure_rate = rate;
        self.seed = seed;
        self
    }

    fn should_fail(&self, ctx: &TaskContext) -> bool {
        if self.failure_rate <= 0.0 {
            return false;
        }
        let key = format!(
            "{}|{}|{}|{:?}|{}|{}",
            self.seed, ctx.run_id, ctx.task_id, ctx.purpose, ctx.revision, ctx.attempt
        );
        let digest = sha256_hex(key);
        let draw = u64::from_str_radix(&digest[..16], 16).expect("hex digest");
        (draw as f64 / u64::MAX as f64) < self.failure_rate
    }

    pub fn input_digest(ctx: &TaskContext) -> String {
        let mut stable = ctx.clone();
        stable.attempt = 0;
        sha256_hex(serde_json::to_vec(&stable).expect("context serializes"))
    }
}

impl AgentAdapter for MockAgent {
    fn invoke(&self, ctx: &TaskContext) -> Result<ArtifactDraft, AdapterError> {
        if self.should_fail(ctx) {
            return Err(AdapterError::Unavailable(format!(
                "injected failure on attempt {}",
                ctx.attempt
            )));
        }
        let digest = Self::input_digest(ctx);
        let consultation: Vec<Value> = ctx
            .consultation
            .iter()
            .map(|e| json!({ "actor_id": e.actor_id, "digest": e.digest() }))
            .collect();
        let prior: Vec<&str> = ctx.prior_versions.iter().map(|p| p.digest.as_str()).collect();
        Ok(ArtifactDraft {
            content: digest.clone(),
            metadata: json!({
                "adapter": "mock",
                "agent": ctx.actor_id,
                "input_digest": digest,
                "consultation_digests": consultation,
                "prior_versions": prior,
            }),
        })
    }
}

/// Live agent reached over HTTP: POST the [`TaskContext`] as JSON, expect
/// `{content, metadata}` back.
pub struct HttpAdapter {
    url: String,
    client: reqwest::blocking::Client,
}

impl HttpAdapter {
    pub fn new(url: impl Into<String>, timeout: Duration) -> Result<Self, AdapterError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| AdapterError::Unavailable(e.to_string()))?;
        Ok(HttpAdapter {
            url: url.into(),
            client,
        })
    }
}

impl AgentAdapter for HttpAdapter {
    fn invoke(&self, ctx: &TaskContext) -> Result<ArtifactDraft, AdapterError> {
        let response = self
            .client
            .post(&self.url)
            .json(ctx)
            .send()
            .map_err(|e| AdapterError::Unavailable(e.to_string()))?;
        let status = response.status();
        if !status.is_success() {
            return Err(AdapterError::Status(status.as_u16()));
        }
        let body = response
            .text()
            .map_err(|e| AdapterError::Malformed(e.to_string()))?;
        serde_json::from_str(&body).map_err(|e| AdapterError::Malformed(e.to_string()))
    }
}
