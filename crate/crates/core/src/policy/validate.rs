use serde::{Deserialize, Serialize};

use super::{
    FormatMode, OutputFormatterPayload, Policy, PolicyKind, PolicyPayload, TargetField, Trigger,
    MAX_PRIORITY,
};

/// A broken invariant: which field, and which rule it breaks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub field: String,
    pub rule: String,
}

impl Violation {
    pub fn new(field: impl Into<String>, rule: impl Into<String>) -> Self {
        Self { field: field.into(), rule: rule.into() }
    }

    /// True when the violation concerns one of the policy's triggers.
    pub fn is_trigger(&self) -> bool {
        self.field.starts_with("triggers")
    }
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.field, self.rule)
    }
}

/// Checks every invariant of a policy. An empty result means the policy is
/// valid.
pub fn validate_policy(p: &Policy) -> Vec<Violation> {
    let mut out = Vec::new();

    if let Some(rule) = p.id.check() {
        out.push(Violation::new("id", rule));
    }
    if !(0..=MAX_PRIORITY).contains(&p.priority) {
        out.push(Violation::new("priority", "must be in [0,100]"));
    }
    if p.triggers.is_empty() && p.kind() != PolicyKind::ToolApproval {
        out.push(Violation::new("triggers", "required for kind≠ToolApproval"));
    }
    for (i, trigger) in p.triggers.iter().enumerate() {
        check_trigger(i, trigger, p.kind(), &mut out);
    }

    match &p.payload {
        PolicyPayload::IntentGuard(g) => {
            if g.block_message.trim().is_empty() {
                out.push(Violation::new("block_message", "must be nonempty"));
            }
        }
        PolicyPayload::Playbook(pb) => {
            if pb.content.trim().is_empty() {
                out.push(Violation::new("content", "must be nonempty"));
            }
            if let Some(steps) = &pb.steps {
                if steps.is_empty() {
                    out.push(Violation::new("steps", "must be nonempty when present"));
                }
                for (i, step) in steps.iter().enumerate() {
                    if step.instruction.trim().is_empty() {
                        out.push(Violation::new(
                            format!("steps[{i}].instruction"),
                            "must be nonempty",
                        ));
                    }
                    if let Some(tools) = &step.allowed_tools {
                        if tools.iter().any(|t| t.trim().is_empty()) {
                            out.push(Violation::new(
                                format!("steps[{i}].allowed_tools"),
                                "tool names must be nonempty",
                            ));
                        }
                    }
                }
            }
        }
        PolicyPayload::ToolGuide(g) => {
            if g.tool_names.is_empty() {
                out.push(Violation::new("tools", "must be nonempty"));
            }
            if g.tool_names.iter().any(|t| t.trim().is_empty()) {
                out.push(Violation::new("tools", "tool names must be nonempty"));
            }
            if g.guidance.trim().is_empty() {
                out.push(Violation::new("guidance", "must be nonempty"));
            }
        }
        PolicyPayload::ToolApproval(a) => {
            if a.tool_patterns.is_empty() {
                out.push(Violation::new("patterns", "must be nonempty"));
            }
            for (i, pattern) in a.tool_patterns.iter().enumerate() {
                if pattern.is_empty() {
                    out.push(Violation::new(format!("patterns[{i}]"), "must be nonempty"));
                } else if pattern
                    .chars()
                    .any(|c| c.is_whitespace() || matches!(c, '?' | '[' | ']' | '{' | '}' | '\\'))
                {
                    out.push(Violation::new(
                        format!("patterns[{i}]"),
                        "glob may contain only literal characters and '*'",
                    ));
                }
            }
        }
        PolicyPayload::OutputFormatter(f) => check_formatter(f, &mut out),
    }
    out
}

fn check_trigger(i: usize, trigger: &Trigger, kind: PolicyKind, out: &mut Vec<Violation>) {
    let field = |name: &str| format!("triggers[{i}].{name}");
    match trigger {
        Trigger::NaturalLanguage(t) => {
            if t.queries.is_empty() {
                out.push(Violation::new(field("queries"), "must be nonempty"));
            }
            if t.queries.iter().any(|q| q.trim().is_empty()) {
                out.push(Violation::new(field("queries"), "queries must be nonempty strings"));
            }
            if !(0.0..=1.0).contains(&t.threshold) {
                out.push(Violation::new(field("threshold"), "threshold out of [0,1]"));
            }
        }
        Trigger::Keyword(t) => {
            if t.keywords.is_empty() {
                out.push(Violation::new(field("keywords"), "must be nonempty"));
            }
            if t.keywords.iter().any(|k| k.trim().is_empty()) {
                out.push(Violation::new(field("keywords"), "keywords must be nonempty strings"));
            }
        }
        Trigger::Application(t) => {
            if t.app_id.is_empty() {
                out.push(Violation::new(field("app_id"), "must be nonempty"));
            }
        }
        Trigger::State(t) => {
            if t.path.is_empty() || t.path.split('.').any(str::is_empty) {
                out.push(Violation::new(field("path"), "must be a nonempty dotted path"));
            }
            if t.operator == super::StateOperator::Regex && regex::Regex::new(&t.value).is_err() {
                out.push(Violation::new(field("value"), "regex does not compile"));
            }
        }
        Trigger::Tool(t) => {
            if t.tool_name.is_empty() {
                out.push(Violation::new(field("tool_name"), "must be nonempty"));
            }
        }
    }
    if kind == PolicyKind::OutputFormatter {
        if let Some(target) = trigger.target() {
            if !matches!(target, TargetField::UserInput | TargetField::FinalResponse) {
                out.push(Violation::new(
                    field("target"),
                    "output formatters may target only user_input or final_response",
                ));
            }
        }
    }
}

fn check_formatter(f: &OutputFormatterPayload, out: &mut Vec<Violation>) {
    match f.mode {
        FormatMode::Template => {
            if f.template.is_none() {
                out.push(Violation::new("template", "required when mode=template"));
            }
            if f.schema.is_some() {
                out.push(Violation::new("schema", "allowed only when mode=json_schema"));
            }
        }
        FormatMode::Markdown => {
            if f.template.is_some() {
                out.push(Violation::new("template", "allowed only when mode=template"));
            }
            if f.schema.is_some() {
                out.push(Violation::new("schema", "allowed only when mode=json_schema"));
            }
        }
        FormatMode::JsonSchema => {
            if f.template.is_some() {
                out.push(Violation::new("template", "allowed only when mode=template"));
            }
            match &f.schema {
                None => out.push(Violation::new("schema", "required when mode=json_schema")),
                Some(schema) => {
                    if let Err(e) = jsonschema::validator_for(schema) {
                        out.push(Violation::new("schema", format!("invalid JSON schema: {e}")));
                    }
                }
            }
        }
    }
}
