//! Markdown policy files.
//!
//! ```text
//! ---
//! id: capability-boundaries
//! kind: playbook
//! priority: 90
//! triggers:
//!   - type: natural_language
//!     queries: ["what is the time to fill for this role"]
//!     threshold: 0.65
//! ---
//! Decline requests no available API can answer.
//! ```
//!
//! The file is `---\n`, a YAML map, `\n---\n`, then a markdown body. The body
//! is the playbook content for playbooks, the guidance text for tool guides,
//! and a free-form description for every other kind.

use serde::de::DeserializeOwned;
use serde_yaml::{Mapping, Value};
use thiserror::Error;

use super::{
    validate_policy, FormatMode, GuidePlacement, IntentGuardPayload, OutputFormatterPayload,
    PlaybookPayload, PlaybookStep, Policy, PolicyId, PolicyKind, PolicyPayload,
    ToolApprovalPayload, ToolGuidePayload, Trigger,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("malformed front matter: {0}")]
    MalformedFrontMatter(String),
    #[error("unknown policy kind `{0}`")]
    UnknownKind(String),
    #[error("unknown front-matter key `{0}`")]
    UnknownKey(String),
    #[error("missing required field `{0}`")]
    MissingRequiredField(String),
    #[error("invalid trigger: {0}")]
    InvalidTrigger(String),
    #[error("invalid field `{field}`: {rule}")]
    InvalidField { field: String, rule: String },
}

const COMMON_KEYS: &[&str] = &["id", "kind", "priority", "enabled", "triggers"];

fn kind_keys(kind: PolicyKind) -> &'static [&'static str] {
    match kind {
        PolicyKind::IntentGuard => &["block_message"],
        PolicyKind::Playbook => &["steps"],
        PolicyKind::ToolGuide => &["tools", "placement"],
        PolicyKind::ToolApproval => &["patterns", "auto_approve"],
        PolicyKind::OutputFormatter => &["mode", "template", "schema"],
    }
}

/// Splits a policy file into its YAML front matter and trimmed body.
fn split(text: &str) -> Result<(&str, &str), ParseError> {
    let rest = text.strip_prefix("---\n").ok_or_else(|| {
        ParseError::MalformedFrontMatter("file must start with a `---` line".into())
    })?;
    if let Some(body) = rest.strip_prefix("---\n") {
        return Ok(("", body.trim()));
    }
    if rest == "---" {
        return Ok(("", ""));
    }
    if let Some(at) = rest.find("\n---\n") {
        return Ok((&rest[..at], rest[at + 5..].trim()));
    }
    if let Some(yaml) = rest.strip_suffix("\n---") {
        return Ok((yaml, ""));
    }
    Err(ParseError::MalformedFrontMatter("no closing `---` line".into()))
}

fn malformed(key: &str, e: impl std::fmt::Display) -> ParseError {
    ParseError::MalformedFrontMatter(format!("`{key}`: {e}"))
}

fn take<T: DeserializeOwned>(map: &mut Mapping, key: &str) -> Result<Option<T>, ParseError> {
    match map.remove(key) {
        None | Some(Value::Null) => Ok(None),
        Some(v) => serde_yaml::from_value(v).map(Some).map_err(|e| malformed(key, e)),
    }
}

fn require<T: DeserializeOwned>(map: &mut Mapping, key: &str) -> Result<T, ParseError> {
    take(map, key)?.ok_or_else(|| ParseError::MissingRequiredField(key.to_owned()))
}

/// Parses and validates a policy file.
pub fn parse_policy_file(text: &str) -> Result<Policy, ParseError> {
    let policy = parse_policy_unchecked(text)?;
    if let Some(v) = validate_policy(&policy).into_iter().next() {
        return Err(if v.is_trigger() {
            ParseError::InvalidTrigger(v.rule)
        } else if v.rule.starts_with("required") {
            ParseError::MissingRequiredField(v.field)
        } else {
            ParseError::InvalidField { field: v.field, rule: v.rule }
        });
    }
    Ok(policy)
}

/// Parses a policy file without checking the invariants reported by
/// [`validate_policy`]. Structural errors are still reported.
pub fn parse_policy_unchecked(text: &str) -> Result<Policy, ParseError> {
    let normalized;
    let text = if text.contains("\r\n") {
        normalized = text.replace("\r\n", "\n");
        normalized.as_str()
    } else {
        text
    };
    let (yaml, body) = split(text)?;

    let mut map = if yaml.trim().is_empty() {
        Mapping::new()
    } else {
        match serde_yaml::from_str::<Value>(yaml) {
            Ok(Value::Mapping(m)) => m,
            Ok(_) => {
                return Err(ParseError::MalformedFrontMatter(
                    "front matter must be a YAML map".into(),
                ))
            }
            Err(e) => return Err(ParseError::MalformedFrontMatter(e.to_string())),
        }
    };

    let kind_name: String = require(&mut map, "kind")?;
    let kind: PolicyKind = kind_name.parse().map_err(ParseError::UnknownKind)?;

    let allowed = kind_keys(kind);
    for key in map.keys() {
        let name = key.as_str().ok_or_else(|| {
            ParseError::MalformedFrontMatter("front-matter keys must be strings".into())
        })?;
        if !COMMON_KEYS.contains(&name) && !allowed.contains(&name) {
            return Err(ParseError::UnknownKey(name.to_owned()));
        }
    }

    let id: String = require(&mut map, "id")?;
    let priority: i64 = require(&mut map, "priority")?;
    let enabled: bool = take(&mut map, "enabled")?.unwrap_or(true);

    let raw_triggers: Vec<Value> = take(&mut map, "triggers")?.unwrap_or_default();
    let mut triggers = Vec::with_capacity(raw_triggers.len());
    for (i, raw) in raw_triggers.into_iter().enumerate() {
        let trigger: Trigger = serde_yaml::from_value(raw)
            .map_err(|e| ParseError::InvalidTrigger(format!("triggers[{i}]: {e}")))?;
        triggers.push(trigger);
    }

    let mut description = String::new();
    let payload = match kind {
        PolicyKind::IntentGuard => PolicyPayload::IntentGuard(IntentGuardPayload {
            block_message: require(&mut map, "block_message")?,
        }),
        PolicyKind::Playbook => {
            if body.is_empty() {
                return Err(ParseError::MissingRequiredField("content".into()));
            }
            PolicyPayload::Playbook(PlaybookPayload {
                content: body.to_owned(),
                steps: take::<Vec<PlaybookStep>>(&mut map, "steps")?,
            })
        }
        PolicyKind::ToolGuide => {
            let tool_names = require(&mut map, "tools")?;
            if body.is_empty() {
                return Err(ParseError::MissingRequiredField("guidance".into()));
            }
            PolicyPayload::ToolGuide(ToolGuidePayload {
                tool_names,
                guidance: body.to_owned(),
                placement: take::<GuidePlacement>(&mut map, "placement")?.unwrap_or_default(),
            })
        }
        PolicyKind::ToolApproval => PolicyPayload::ToolApproval(ToolApprovalPayload {
            tool_patterns: require(&mut map, "patterns")?,
            auto_approve: take(&mut map, "auto_approve")?.unwrap_or(false),
        }),
        PolicyKind::OutputFormatter => {
            let mode: FormatMode = require(&mut map, "mode")?;
            let template: Option<String> = take(&mut map, "template")?;
            let schema = match map.remove("schema") {
                None | Some(Value::Null) => None,
                Some(v) => Some(serde_json::to_value(v).map_err(|e| malformed("schema", e))?),
            };
            PolicyPayload::OutputFormatter(OutputFormatterPayload { mode, template, schema })
        }
    };
    if matches!(
        kind,
        PolicyKind::IntentGuard | PolicyKind::ToolApproval | PolicyKind::OutputFormatter
    ) {
        description = body.to_owned();
    }

    Ok(Policy {
        id: PolicyId::new(id),
        priority,
        enabled,
        triggers,
        description,
        payload,
    })
}

fn yaml<T: serde::Serialize>(value: &T) -> Value {
    // every type serialized here is a plain tree of maps, lists and scalars
    serde_yaml::to_value(value).expect("policy fields serialize to YAML")
}

/// Renders a policy in the file format accepted by [`parse_policy_file`].
pub fn serialize_policy(p: &Policy) -> String {
    let mut map = Mapping::new();
    map.insert("id".into(), p.id.as_str().into());
    map.insert("kind".into(), p.kind().as_str().into());
    map.insert("priority".into(), p.priority.into());
    map.insert("enabled".into(), p.enabled.into());
    if !p.triggers.is_empty() {
        map.insert("triggers".into(), yaml(&p.triggers));
    }

    let body = match &p.payload {
        PolicyPayload::IntentGuard(g) => {
            map.insert("block_message".into(), g.block_message.as_str().into());
            p.description.as_str()
        }
        PolicyPayload::Playbook(pb) => {
            if let Some(steps) = &pb.steps {
                map.insert("steps".into(), yaml(steps));
            }
            pb.content.as_str()
        }
        PolicyPayload::ToolGuide(g) => {
            map.insert("tools".into(), yaml(&g.tool_names));
            map.insert("placement".into(), yaml(&g.placement));
            g.guidance.as_str()
        }
        PolicyPayload::ToolApproval(a) => {
            map.insert("patterns".into(), yaml(&a.tool_patterns));
            map.insert("auto_approve".into(), a.auto_approve.into());
            p.description.as_str()
        }
        PolicyPayload::OutputFormatter(f) => {
            map.insert("mode".into(), yaml(&f.mode));
            if let Some(t) = &f.template {
                map.insert("template".into(), t.as_str().into());
            }
            if let Some(s) = &f.schema {
                map.insert("schema".into(), yaml(s));
            }
            p.description.as_str()
        }
    };

    let front = serde_yaml::to_string(&Value::Mapping(map)).expect("mapping serializes");
    let mut out = String::with_capacity(front.len() + body.len() + 16);
    out.push_str("---\n");
    out.push_str(front.trim_end_matches('\n'));
    out.push_str("\n---\n");
    let body = body.trim();
    if !body.is_empty() {
        out.push_str(body);
        out.push('\n');
    }
    out
}
