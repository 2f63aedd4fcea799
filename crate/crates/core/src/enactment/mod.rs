//! The execution layer: drives a session through the intervention points,
//! applies policy decisions and records the explanation trace.

mod approval;
mod engine;
mod formatter;
mod playbook;
mod session;
mod tools;
mod trace;

use std::sync::atomic::{AtomicU64, Ordering};

use thiserror::Error;

pub use approval::{ApprovalDecision, ApprovalRequest, ApprovalStatus};
pub use engine::{
    Engine, EngineBuilder, EngineObserver, ExecutionReport, GateOutcome, IntentOutcome,
};
pub use formatter::{
    format_output, BasicFormatter, FormatResult, FormatterError, FormatterModel,
    ScriptedFormatter,
};
pub use playbook::{has_playbook, inject_playbook, render_playbook};
pub use session::{ExecutionPlan, FinalOutput, Session, SessionId, SessionPhase};
pub use tools::{
    enrich_tools, extract_calls, scan_code_for_tools, AppliedGuide, Invocation, PlannedCall,
    RecordingExecutor, RegistryError, ToolDefinition, ToolExecutor, ToolRegistry,
};
pub use trace::{
    from_ndjson, to_ndjson, FailurePosture, TraceCheckpoint, TraceDetail, TraceEvent,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EnactmentError {
    #[error("illegal transition {from} -> {to}")]
    IllegalTransition { from: SessionPhase, to: SessionPhase },
    #[error("session is {actual}, expected {expected}")]
    WrongPhase { expected: SessionPhase, actual: SessionPhase },
    #[error("unknown session {0}")]
    UnknownSession(SessionId),
    #[error("session {0} already exists")]
    DuplicateSession(SessionId),
    #[error("unknown approval request {0}")]
    UnknownRequest(String),
    #[error("approval request {0} is already resolved")]
    AlreadyResolved(String),
}

/// Where session and approval identifiers come from.
#[derive(Debug)]
pub enum IdSource {
    Random,
    /// UUID-formatted counter values, for reproducible traces.
    Sequential(AtomicU64),
}

impl IdSource {
    pub fn sequential() -> Self {
        IdSource::Sequential(AtomicU64::new(1))
    }

    pub fn next(&self) -> String {
        match self {
            IdSource::Random => uuid::Uuid::new_v4().to_string(),
            IdSource::Sequential(n) => {
                uuid::Uuid::from_u128(u128::from(n.fetch_add(1, Ordering::SeqCst))).to_string()
            }
        }
    }
}
