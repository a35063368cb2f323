//! Validate RACI responsibility assignments between humans and LLM
//! agents, then run them as human-in-the-loop workflows.
//!
//! The flow is: parse a [`model::MatrixBundle`] ([`io`]), check it against
//! the framework constraints and compliance packs ([`constraints`],
//! [`packs`]), compile it into a gate graph ([`pipeline`]) and execute that
//! graph with accountable-human approval gates and a hash-chained audit
//! trail ([`engine`]).

pub mod constraints;
pub mod engine;
pub mod io;
pub mod model;
pub mod packs;
pub mod pipeline;

pub use constraints::{validate_matrix, Finding, ReportStatus, Severity, ValidationReport};
pub use model::{
    actors_with_role, resolve_cell, Actor, ActorKind, CellPolicy, MatrixBundle, Provenance,
    RaciMatrix, ResolvedMatrix, Role, RoleSet, TrustworthyRequirement, ValidationMode,
};
pub use pipeline::{run_pipeline, PipelineConfig, PipelineOutcome};

/// The DevOps planning bundle shipped with the crate, in canonical form.
pub const DEVOPS_PLANNING: &str = include_str!("../examples/devops-planning.json");
