use std::fmt::Write;

use serde::Serialize;

use govgate_core::enactment::{TraceDetail, TraceEvent};
use govgate_core::harness::{Delta, SuiteResult};

/// The serde name of a unit enum value.
fn snake(v: impl Serialize) -> String {
    match serde_json::to_value(v) {
        Ok(serde_json::Value::String(s)) => s,
        Ok(other) => other.to_string(),
        Err(_) => "?".into(),
    }
}

fn opt(v: Option<impl ToString>) -> String {
    v.map_or_else(|| "none".into(), |v| v.to_string())
}

/// Human summary of a suite run: one line per configuration, deltas, then
/// per-scenario pass counts.
pub fn report(suite: &str, repetitions: usize, results: &[SuiteResult], deltas: &[Delta]) -> String {
    let mut out = String::new();
    let scenarios = results.first().map_or(0, |r| r.scenarios);
    let _ = writeln!(out, "suite {suite}: {scenarios} scenarios, {repetitions} run(s) per configuration");
    let width = results.iter().map(|r| r.config.len()).max().unwrap_or(6).max(6);
    let _ = writeln!(out, "{:<width$}  {:>7}  {:>6}  {:>5}  passes per run", "config", "SR", "mean", "std");
    for r in results {
        let passes: Vec<String> = r.per_run_passes.iter().map(ToString::to_string).collect();
        let _ = writeln!(
            out,
            "{:<width$}  {:>6.1}%  {:>6.1}  {:>5.1}  {}",
            r.config,
            r.metrics.success_rate_pct,
            r.metrics.mean_passes,
            r.metrics.std_dev,
            passes.join(",")
        );
    }
    for d in deltas {
        let _ = writeln!(out, "{} vs {}: {:+.1} pp", d.to, d.from, d.pp);
    }
    if let Some(first) = results.first() {
        let _ = writeln!(out);
        let id_width = first.per_scenario.keys().map(String::len).max().unwrap_or(8).max(8);
        let mut header = format!("{:<id_width$}", "scenario");
        for r in results {
            let _ = write!(header, "  {:>width$}", r.config);
        }
        let _ = writeln!(out, "{}", header.trim_end());
        for id in first.per_scenario.keys() {
            let mut line = format!("{id:<id_width$}");
            for r in results {
                let passed = r.per_scenario.get(id).copied().unwrap_or(0);
                let _ = write!(line, "  {:>width$}", format!("{passed}/{}", r.runs));
            }
            let _ = writeln!(out, "{line}");
        }
    }
    out
}

fn describe(detail: &TraceDetail) -> String {
    match detail {
        TraceDetail::SessionCreated { user_input } => format!("session created: {user_input:?}"),
        TraceDetail::PhaseChanged { from, to } => format!("phase {from} -> {to}"),
        TraceDetail::GuardsEvaluated { blocked_by } => format!("guards evaluated, blocked by {}", opt(blocked_by.as_ref())),
        TraceDetail::IntentBlocked { policy_id, block_message } => {
            format!("blocked by {}: {block_message}", opt(policy_id.as_ref()))
        }
        TraceDetail::PlaybookEvaluated { selected } => format!("playbook selected: {}", opt(selected.as_ref())),
        TraceDetail::PlaybookInjected { policy_id } => format!("playbook {policy_id} injected"),
        TraceDetail::ResolverFailed { kind, error, posture } => {
            format!("resolver failed for {kind} ({}): {error}", snake(posture))
        }
        TraceDetail::ToolsEnriched { guides } => format!("{} tool guide(s) applied", guides.len()),
        TraceDetail::CodeScanned { tools } => format!("code calls [{}]", tools.join(", ")),
        TraceDetail::ApprovalRequested { request_id, policy_id, tool_name } => {
            format!("approval {request_id} requested for {tool_name} by {policy_id}")
        }
        TraceDetail::ApprovalAutoApproved { request_id, policy_id, tool_name } => {
            format!("approval {request_id} auto-approved for {tool_name} by {policy_id}")
        }
        TraceDetail::ApprovalResolved { request_id, decision, actor } => {
            format!("approval {request_id} resolved: {} by {actor}", snake(decision))
        }
        TraceDetail::ExecutionCleared { tools } => format!("cleared to run [{}]", tools.join(", ")),
        TraceDetail::ToolInvoked { tool_name, arguments, ok } => {
            format!("{tool_name}({arguments}) {}", if *ok { "ok" } else { "failed" })
        }
        TraceDetail::OutputFormatted { policy_id, mode, diagnostic } => {
            let mut s = format!("output formatted by {}", opt(policy_id.as_ref()));
            if let Some(m) = mode {
                let _ = write!(s, " ({})", snake(m));
            }
            if let Some(d) = diagnostic {
                let _ = write!(s, ": {d}");
            }
            s
        }
        TraceDetail::SessionFailed { reason } => format!("session failed: {reason}"),
    }
}

/// One line per event, grouped under a header per session.
pub fn trace(events: &[TraceEvent]) -> String {
    let mut out = String::new();
    let mut current = None;
    for e in events {
        if current != Some(&e.session) {
            let _ = writeln!(out, "session {}", e.session);
            current = Some(&e.session);
        }
        let at = e.at.format("%H:%M:%S%.3f");
        let _ = writeln!(out, "{:>4}  {at}  {:<20}  {}", e.sequence, snake(e.checkpoint), describe(&e.detail));
        if let Some(d) = &e.decision {
            let _ = writeln!(
                out,
                "{:>4}  {:<12}  {:<20}  {} decision: {}, selected {}",
                "",
                "",
                "",
                d.kind,
                snake(d.phase),
                opt(d.selected.as_ref())
            );
        }
    }
    out
}
