//! Event-sourced execution of compiled workflows.
//!
//! Runs are single-writer: every change goes through
//! [`state::apply_event`], and the hash-chained [`audit::AuditLog`] it
//! feeds is enough to rebuild the final state with [`run::replay`].

pub mod adapter;
pub mod audit;
pub mod driver;
pub mod run;
pub mod spec;
pub mod state;

pub use adapter::{AdapterError, AgentAdapter, ArtifactDraft, HttpAdapter, MockAgent, Purpose, TaskContext};
pub use audit::{verify_audit_chain, verify_audit_text, AuditEvent, AuditLog, ChainStatus, EventType};
pub use driver::{
    placeholder_content, stranded, AutoApprove, Decision, DriveReport, DriveStatus, Driver, HumanDesk,
    SimulatedDesk,
};
pub use run::{replay, Clock, LogicalClock, PendingApproval, ReplayError, Run, SystemClock, Work};
pub use spec::{ActorRef, Gate, GateKind, SpecError, TaskChain, WorkflowSpec};
pub use state::{
    apply_event, start_run, Action, ArtifactVersion, ConsultationBundle, ConsultationEntry,
    EngineError, RunState, TaskState, TaskStatus, Verdict,
};
