//! A deterministic stand-in for the LLM agent, plus scenario and suite
//! runners used to measure the effect of policy sets.

mod agent;
mod metrics;
mod runner;
mod scenario;
mod suite;

pub use agent::{AgentInput, AgentStep, Cue, Emission, ScriptedAgent, Switch};
pub use metrics::{
    compute_metrics, sample_std_dev, success_rate_pct, ConfigMetrics, ConfigRuns, Delta,
    MetricsError, MetricsSummary,
};
pub use runner::{
    ApprovalHandler, Cursor, Drive, HarnessError, NoHandler, ScriptedDecision, SessionRunner,
};
pub use scenario::{
    check_expectations, run_scenario, tool_log, Expected, ResponsePredicate, Scenario,
    ScenarioOutcome,
};
pub use suite::{
    fixture_executor, run_suite, FormatterFixtures, ScenarioRecord, Suite, SuiteConfig, SuiteError, SuiteResult,
    ToolFixture, CONFIG_FILE,
};
