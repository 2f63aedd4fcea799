use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::agent::ScriptedAgent;
use super::runner::{Cursor, Drive, HarnessError, ScriptedDecision, SessionRunner};
use crate::enactment::{Engine, FinalOutput, SessionId, SessionPhase, TraceDetail, TraceEvent};
use crate::policy::PolicyId;
use crate::trigger::MatchContext;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ResponsePredicate {
    #[default]
    Any,
    Equals { text: String },
    Contains { text: String },
    NotContains { text: String },
    JsonEquals { value: Value },
}

impl ResponsePredicate {
    pub fn check(&self, output: Option<&FinalOutput>) -> bool {
        let text = output.map(FinalOutput::as_text).unwrap_or_default();
        match self {
            ResponsePredicate::Any => true,
            ResponsePredicate::Equals { text: t } => &text == t,
            ResponsePredicate::Contains { text: t } => text.contains(t.as_str()),
            ResponsePredicate::NotContains { text: t } => !text.contains(t.as_str()),
            ResponsePredicate::JsonEquals { value } => {
                matches!(output, Some(FinalOutput::Json(v)) if v == value)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expected {
    pub terminal_phase: SessionPhase,
    /// Tools invoked, in order.
    pub tool_invocations: Vec<String>,
    #[serde(default)]
    pub response_predicate: ResponsePredicate,
}

/// One scripted task with its expected observable result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub id: String,
    pub user_input: String,
    #[serde(default)]
    pub intent: Option<String>,
    #[serde(default)]
    pub app_id: Option<String>,
    #[serde(default)]
    pub state: Value,
    /// Narrows the configuration's policies to these ids when present.
    #[serde(default)]
    pub policy_set: Option<Vec<PolicyId>>,
    pub agent: ScriptedAgent,
    #[serde(default)]
    pub approvals: Vec<ScriptedDecision>,
    pub expected: Expected,
}

impl Scenario {
    pub fn context(&self) -> MatchContext {
        MatchContext {
            intent: self.intent.clone(),
            app_id: self.app_id.clone(),
            state: self.state.clone(),
            ..MatchContext::new(self.user_input.clone())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioOutcome {
    pub scenario: String,
    pub session: SessionId,
    pub terminal_phase: SessionPhase,
    pub tool_log: Vec<String>,
    /// Final output, or the block message for blocked sessions.
    pub output: Option<FinalOutput>,
    #[serde(skip)]
    pub trace: Vec<TraceEvent>,
    pub passed: bool,
    pub failures: Vec<String>,
}

/// Tool names of the invocation events in a trace, in order.
pub fn tool_log(trace: &[TraceEvent]) -> Vec<String> {
    trace
        .iter()
        .filter_map(|e| match &e.detail {
            TraceDetail::ToolInvoked { tool_name, .. } => Some(tool_name.clone()),
            _ => None,
        })
        .collect()
}

/// Compares an outcome with the scenario's expectations.
pub fn check_expectations(expected: &Expected, outcome: &ScenarioOutcome) -> Vec<String> {
    let mut failures = Vec::new();
    if outcome.terminal_phase != expected.terminal_phase {
        failures.push(format!(
            "terminal phase {} (expected {})",
            outcome.terminal_phase, expected.terminal_phase
        ));
    }
    if outcome.tool_log != expected.tool_invocations {
        failures.push(format!(
            "tools {:?} (expected {:?})",
            outcome.tool_log, expected.tool_invocations
        ));
    }
    if !expected.response_predicate.check(outcome.output.as_ref()) {
        failures.push(format!("response {:?} fails {:?}", outcome.output, expected.response_predicate));
    }
    failures
}

/// Runs a scenario in a fresh session. Approval requests without a scripted
/// decision leave the session paused, which is then its terminal phase for
/// the purpose of the comparison.
pub fn run_scenario(sc: &Scenario, engine: &Engine) -> Result<ScenarioOutcome, HarnessError> {
    let id = engine.create_session(sc.context());
    let runner = SessionRunner { engine, agent: &sc.agent, approvals: &sc.approvals };
    let terminal_phase = match runner.drive(&id, &mut Cursor::default())? {
        Drive::Paused(_) => SessionPhase::AwaitingApproval,
        Drive::Finished(phase) => phase,
    };
    Ok(outcome_of(sc, engine, &id, terminal_phase)?)
}

pub(crate) fn outcome_of(
    sc: &Scenario,
    engine: &Engine,
    id: &SessionId,
    terminal_phase: SessionPhase,
) -> Result<ScenarioOutcome, crate::enactment::EnactmentError> {
    let session = engine.session(id)?;
    let output = session
        .output
        .clone()
        .or_else(|| session.block_message.clone().map(FinalOutput::Text));
    let mut outcome = ScenarioOutcome {
        scenario: sc.id.clone(),
        session: id.clone(),
        terminal_phase,
        tool_log: tool_log(&session.trace),
        output,
        trace: session.trace,
        passed: false,
        failures: Vec::new(),
    };
    outcome.failures = check_expectations(&sc.expected, &outcome);
    outcome.passed = outcome.failures.is_empty();
    Ok(outcome)
}
