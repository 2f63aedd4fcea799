//! Typed policy schemas: the five policy kinds, the trigger union and the
//! kind-specific payloads.
//!
//! Policies are plain values. Construction never fails; [`validate_policy`]
//! reports every broken invariant as a [`Violation`], and the file parser in
//! [`format`] refuses to produce a policy that does not validate.

mod format;
mod glob;
mod validate;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use format::{parse_policy_file, parse_policy_unchecked, serialize_policy, ParseError};
pub use glob::glob_match;
pub use validate::{validate_policy, Violation};

/// Highest allowed priority. Larger numbers take precedence.
pub const MAX_PRIORITY: i64 = 100;
/// Longest allowed policy id.
pub const MAX_ID_LEN: usize = 128;

/// Identifier of a policy, unique within a store.
///
/// Well-formed ids are nonempty, at most 128 characters and drawn from
/// `[a-z0-9-_]`. The newtype does not enforce this on construction so that
/// malformed ids can flow into [`validate_policy`] and be reported.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PolicyId(String);

impl PolicyId {
    pub fn new(value: impl Into<String>) -> Self {
        Self(value.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Returns the rule the id breaks, if any.
    pub fn check(&self) -> Option<&'static str> {
        if self.0.is_empty() {
            Some("must be nonempty")
        } else if self.0.len() > MAX_ID_LEN {
            Some("must be at most 128 characters")
        } else if !self
            .0
            .bytes()
            .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'-' || b == b'_')
        {
            Some("must match [a-z0-9-_]")
        } else {
            None
        }
    }
}

impl fmt::Display for PolicyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for PolicyId {
    fn from(value: &str) -> Self {
        Self(value.to_owned())
    }
}

impl From<String> for PolicyId {
    fn from(value: String) -> Self {
        Self(value)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    IntentGuard,
    Playbook,
    ToolGuide,
    ToolApproval,
    OutputFormatter,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 5] = [
        PolicyKind::IntentGuard,
        PolicyKind::Playbook,
        PolicyKind::ToolGuide,
        PolicyKind::ToolApproval,
        PolicyKind::OutputFormatter,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PolicyKind::IntentGuard => "intent_guard",
            PolicyKind::Playbook => "playbook",
            PolicyKind::ToolGuide => "tool_guide",
            PolicyKind::ToolApproval => "tool_approval",
            PolicyKind::OutputFormatter => "output_formatter",
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PolicyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PolicyKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| s.to_owned())
    }
}

/// Contextual field a trigger is evaluated against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetField {
    #[default]
    UserInput,
    Intent,
    SubTask,
    FinalResponse,
}

impl TargetField {
    pub const ALL: [TargetField; 4] = [
        TargetField::UserInput,
        TargetField::Intent,
        TargetField::SubTask,
        TargetField::FinalResponse,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KeywordMode {
    And,
    #[default]
    Or,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateOperator {
    Eq,
    Contains,
    Regex,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToolStage {
    Pre,
    Post,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NaturalLanguageTrigger {
    pub queries: Vec<String>,
    pub threshold: f64,
    #[serde(default)]
    pub target: TargetField,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KeywordTrigger {
    pub keywords: Vec<String>,
    #[serde(default)]
    pub mode: KeywordMode,
    #[serde(default)]
    pub case_sensitive: bool,
    #[serde(default)]
    pub fuzzy_max_edits: u32,
    #[serde(default)]
    pub target: TargetField,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApplicationTrigger {
    pub app_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateTrigger {
    pub path: String,
    pub operator: StateOperator,
    pub value: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToolTrigger {
    pub tool_name: String,
    pub stage: ToolStage,
}

/// A matching rule attached to a policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Trigger {
    NaturalLanguage(NaturalLanguageTrigger),
    Keyword(KeywordTrigger),
    Application(ApplicationTrigger),
    State(StateTrigger),
    Tool(ToolTrigger),
}

impl Trigger {
    /// Every trigger except natural-language similarity is decided without a
    /// model and takes part in the first matching phase.
    pub fn is_deterministic(&self) -> bool {
        !matches!(self, Trigger::NaturalLanguage(_))
    }

    pub fn type_name(&self) -> &'static str {
        match self {
            Trigger::NaturalLanguage(_) => "natural_language",
            Trigger::Keyword(_) => "keyword",
            Trigger::Application(_) => "application",
            Trigger::State(_) => "state",
            Trigger::Tool(_) => "tool",
        }
    }

    /// The contextual field this trigger reads, for triggers that have one.
    pub fn target(&self) -> Option<TargetField> {
        match self {
            Trigger::NaturalLanguage(t) => Some(t.target),
            Trigger::Keyword(t) => Some(t.target),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlaybookStep {
    pub instruction: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_outcome: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub allowed_tools: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlaybookPayload {
    /// Markdown guidance; the policy file body.
    pub content: String,
    pub steps: Option<Vec<PlaybookStep>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntentGuardPayload {
    pub block_message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GuidePlacement {
    #[default]
    Append,
    Prepend,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolGuidePayload {
    pub tool_names: Vec<String>,
    /// Guidance text; the policy file body.
    pub guidance: String,
    pub placement: GuidePlacement,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolApprovalPayload {
    /// Globs over tool names. Only literal characters and `*` are allowed.
    pub tool_patterns: Vec<String>,
    pub auto_approve: bool,
}

impl ToolApprovalPayload {
    pub fn covers(&self, tool_name: &str) -> bool {
        self.tool_patterns.iter().any(|p| glob_match(p, tool_name))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FormatMode {
    Template,
    Markdown,
    JsonSchema,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputFormatterPayload {
    pub mode: FormatMode,
    pub template: Option<String>,
    pub schema: Option<serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolicyPayload {
    IntentGuard(IntentGuardPayload),
    Playbook(PlaybookPayload),
    ToolGuide(ToolGuidePayload),
    ToolApproval(ToolApprovalPayload),
    OutputFormatter(OutputFormatterPayload),
}

impl PolicyPayload {
    pub fn kind(&self) -> PolicyKind {
        match self {
            PolicyPayload::IntentGuard(_) => PolicyKind::IntentGuard,
            PolicyPayload::Playbook(_) => PolicyKind::Playbook,
            PolicyPayload::ToolGuide(_) => PolicyKind::ToolGuide,
            PolicyPayload::ToolApproval(_) => PolicyKind::ToolApproval,
            PolicyPayload::OutputFormatter(_) => PolicyKind::OutputFormatter,
        }
    }
}

/// A typed governance primitive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    pub id: PolicyId,
    pub priority: i64,
    pub enabled: bool,
    pub triggers: Vec<Trigger>,
    /// Free-form markdown kept from the file body for kinds whose payload
    /// does not live in the body (guards, approvals, formatters).
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
    pub payload: PolicyPayload,
}

impl Policy {
    pub fn kind(&self) -> PolicyKind {
        self.payload.kind()
    }

    /// One-line human summary used when presenting candidates to a resolver.
    pub fn summary(&self) -> String {
        let text = match &self.payload {
            PolicyPayload::IntentGuard(p) => p.block_message.as_str(),
            PolicyPayload::Playbook(p) => p.content.as_str(),
            PolicyPayload::ToolGuide(p) => p.guidance.as_str(),
            _ => self.description.as_str(),
        };
        let first = text.lines().map(str::trim).find(|l| !l.is_empty()).unwrap_or("");
        format!("{} ({}): {}", self.id, self.kind(), first.trim_start_matches('#').trim())
    }

    pub fn as_playbook(&self) -> Option<&PlaybookPayload> {
        match &self.payload {
            PolicyPayload::Playbook(p) => Some(p),
            _ => None,
        }
    }

    pub fn as_intent_guard(&self) -> Option<&IntentGuardPayload> {
        match &self.payload {
            PolicyPayload::IntentGuard(p) => Some(p),
            _ => None,
        }
    }

    pub fn as_tool_guide(&self) -> Option<&ToolGuidePayload> {
        match &self.payload {
            PolicyPayload::ToolGuide(p) => Some(p),
            _ => None,
        }
    }

    pub fn as_tool_approval(&self) -> Option<&ToolApprovalPayload> {
        match &self.payload {
            PolicyPayload::ToolApproval(p) => Some(p),
            _ => None,
        }
    }

    pub fn as_output_formatter(&self) -> Option<&OutputFormatterPayload> {
        match &self.payload {
            PolicyPayload::OutputFormatter(p) => Some(p),
            _ => None,
        }
    }

    /// Iterates over the natural-language triggers, in declared order.
    pub fn nl_triggers(&self) -> impl Iterator<Item = &NaturalLanguageTrigger> {
        self.triggers.iter().filter_map(|t| match t {
            Trigger::NaturalLanguage(nl) => Some(nl),
            _ => None,
        })
    }
}
