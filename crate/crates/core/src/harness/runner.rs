use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::agent::{AgentInput, ScriptedAgent};
use crate::enactment::{
    ApprovalDecision, ApprovalRequest, EnactmentError, Engine, GateOutcome, SessionId, SessionPhase,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HarnessError {
    #[error("agent script exhausted at step {step}")]
    ScriptExhausted { step: usize },
    #[error(transparent)]
    Enactment(#[from] EnactmentError),
}

/// Decides approval requests on behalf of a human. `None` leaves the request
/// pending and pauses the run.
pub trait ApprovalHandler {
    fn decide(&self, request: &ApprovalRequest) -> Option<(ApprovalDecision, String)>;
}

/// Leaves every request to someone else.
#[derive(Debug, Default, Clone, Copy)]
pub struct NoHandler;

impl ApprovalHandler for NoHandler {
    fn decide(&self, _: &ApprovalRequest) -> Option<(ApprovalDecision, String)> {
        None
    }
}

/// Scripted approval decisions keyed by tool name.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptedDecision {
    pub tool: String,
    pub decision: ApprovalDecision,
    #[serde(default = "default_actor")]
    pub actor: String,
}

fn default_actor() -> String {
    "harness".into()
}

impl ApprovalHandler for Vec<ScriptedDecision> {
    fn decide(&self, request: &ApprovalRequest) -> Option<(ApprovalDecision, String)> {
        self.iter()
            .find(|d| d.tool == request.tool_name)
            .map(|d| (d.decision, d.actor.clone()))
    }
}

/// Position of a run inside the agent script.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cursor {
    /// Index of the step whose code was submitted last.
    pub step: Option<usize>,
    /// Final response of that step, if it ends the session.
    pub response: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Drive {
    Paused(ApprovalRequest),
    Finished(SessionPhase),
}

/// Drives one session through every checkpoint with a scripted agent. A run
/// can stop at an approval pause and be resumed later from its cursor.
pub struct SessionRunner<'a> {
    pub engine: &'a Engine,
    pub agent: &'a ScriptedAgent,
    pub approvals: &'a dyn ApprovalHandler,
}

impl SessionRunner<'_> {
    fn submit_next(&self, id: &SessionId, cursor: &mut Cursor) -> Result<(), HarnessError> {
        let index = cursor.step.map_or(0, |s| s + 1);
        let session = self.engine.session(id)?;
        let input = AgentInput { system_prompt: &session.system_prompt, tools: &session.tools };
        let Some(emission) = self.agent.emit(index, input) else {
            self.engine.fail(id, &format!("agent script exhausted at step {index}"))?;
            return Err(HarnessError::ScriptExhausted { step: index });
        };
        cursor.step = Some(index);
        cursor.response = emission.response;
        self.engine.submit_code(id, &emission.code)?;
        Ok(())
    }

    fn decide(&self, request: &ApprovalRequest) -> Result<bool, HarnessError> {
        match self.approvals.decide(request) {
            Some((decision, actor)) => {
                match self.engine.resolve_approval(&request.id, decision, &actor) {
                    Ok(_) | Err(EnactmentError::AlreadyResolved(_)) => Ok(true),
                    Err(e) => Err(e.into()),
                }
            }
            None => Ok(false),
        }
    }

    /// Advances the session until it ends or waits on a human.
    pub fn drive(&self, id: &SessionId, cursor: &mut Cursor) -> Result<Drive, HarnessError> {
        loop {
            let phase = self.engine.phase(id)?;
            match phase {
                SessionPhase::Created => {
                    self.engine.checkpoint_intent(id)?;
                }
                SessionPhase::Planning => {
                    self.engine.prepare_tools(id)?;
                }
                SessionPhase::ToolPrep => self.submit_next(id, cursor)?,
                SessionPhase::CodeGenerated => {
                    if let GateOutcome::Pause(request) = self.engine.gate_execution(id)? {
                        if !self.decide(&request)? {
                            return Ok(Drive::Paused(request));
                        }
                    }
                }
                SessionPhase::AwaitingApproval => {
                    // resolved concurrently: the phase has moved on
                    let Some(request) =
                        self.engine.approvals_for(id).into_iter().find(ApprovalRequest::is_pending)
                    else {
                        continue;
                    };
                    if !self.decide(&request)? {
                        return Ok(Drive::Paused(request));
                    }
                }
                SessionPhase::Executing => {
                    let report = self.engine.execute_pending(id)?;
                    if report.remaining > 0 {
                        continue;
                    }
                    match cursor.response.clone() {
                        Some(response) => {
                            self.engine.respond(id, &response)?;
                        }
                        None => self.submit_next(id, cursor)?,
                    }
                }
                SessionPhase::Responding => unreachable!("respond completes the session"),
                terminal => return Ok(Drive::Finished(terminal)),
            }
        }
    }
}
