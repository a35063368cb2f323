//! Local HTTP API over the matrixgate engine.
//!
//! Bundles are uploaded and kept in memory; runs are driven by a
//! background worker per request and their audit logs persisted as JSON
//! Lines under the data directory. Every state change goes through the
//! engine's transition function.
//!
//! Identity is declared, not authenticated: callers name themselves with
//! the `X-Actor-Id` header (or `actor_id` in the body). Do not expose this
//! service beyond a trusted network.

mod api;
mod error;
mod store;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use matrixgate::engine::{AgentAdapter, HttpAdapter, MockAgent};

pub use api::router;
pub use error::ApiError;
pub use store::{AppState, RunView, TaskView};

pub const DEFAULT_PORT: u16 = 8080;
pub const PORT_ENV: &str = "MATRIXGATE_PORT";
pub const DATA_DIR_ENV: &str = "MATRIXGATE_DATA_DIR";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AdapterChoice {
    Mock,
    Http(String),
}

impl std::str::FromStr for AdapterChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mock" => Ok(AdapterChoice::Mock),
            _ => match s.strip_prefix("http:") {
                Some(rest) if rest.starts_with("//") => Ok(AdapterChoice::Http(s.to_string())),
                Some(rest) if !rest.is_empty() => Ok(AdapterChoice::Http(rest.to_string())),
                _ => Err(format!("adapter must be `mock` or `http:URL`, got `{s}`")),
            },
        }
    }
}

impl AdapterChoice {
    pub fn build(&self, timeout: Duration) -> Result<Arc<dyn AgentAdapter>, String> {
        match self {
            AdapterChoice::Mock => Ok(Arc::new(MockAgent::new())),
            AdapterChoice::Http(url) => HttpAdapter::new(url.clone(), timeout)
                .map(|a| Arc::new(a) as Arc<dyn AgentAdapter>)
                .map_err(|e| e.to_string()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Config {
    pub port: u16,
    pub data_dir: PathBuf,
    pub adapter: AdapterChoice,
    pub retry_budget: u32,
    /// Fill in human consultation and human-authored artifacts with
    /// placeholder text so runs only wait on verdicts.
    pub simulate_human_inputs: bool,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            port: DEFAULT_PORT,
            data_dir: PathBuf::from("matrixgate-data"),
            adapter: AdapterChoice::Mock,
            retry_budget: matrixgate::engine::driver::DEFAULT_RETRY_BUDGET,
            simulate_human_inputs: false,
        }
    }
}

impl Config {
    /// Defaults overridden by `MATRIXGATE_PORT` and `MATRIXGATE_DATA_DIR`.
    pub fn from_env() -> Result<Self, String> {
        let mut config = Config::default();
        if let Ok(port) = std::env::var(PORT_ENV) {
            config.port = port
                .parse()
                .map_err(|_| format!("{PORT_ENV} must be a port number, got `{port}`"))?;
        }
        if let Ok(dir) = std::env::var(DATA_DIR_ENV) {
            config.data_dir = PathBuf::from(dir);
        }
        Ok(config)
    }
}

/// Binds `127.0.0.1:<port>` and serves until the task is dropped.
pub async fn serve(config: Config) -> std::io::Result<()> {
    let addr = SocketAddr::from(([127, 0, 0, 1], config.port));
    let listener = tokio::net::TcpListener::bind(addr).await?;
    serve_on(listener, config).await
}

pub async fn serve_on(listener: tokio::net::TcpListener, config: Config) -> std::io::Result<()> {
    let state = AppState::new(config).map_err(std::io::Error::other)?;
    axum::serve(listener, router(state)).await
}
