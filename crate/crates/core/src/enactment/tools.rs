use std::collections::HashMap;

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use super::session::SessionId;
use crate::policy::{GuidePlacement, PolicyId};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolDefinition {
    pub name: String,
    pub description: String,
    /// JSON schema of the tool's arguments.
    #[serde(default)]
    pub parameters: Value,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RegistryError {
    #[error("duplicate tool name {0:?}")]
    DuplicateName(String),
    #[error("invalid registry document: {0}")]
    Parse(String),
}

/// The immutable catalogue of tools available to agents. Sessions only ever
/// receive copies.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ToolRegistry {
    tools: Vec<ToolDefinition>,
}

impl ToolRegistry {
    pub fn new(tools: Vec<ToolDefinition>) -> Result<Self, RegistryError> {
        let mut seen = std::collections::HashSet::new();
        for t in &tools {
            if !seen.insert(t.name.as_str()) {
                return Err(RegistryError::DuplicateName(t.name.clone()));
            }
        }
        Ok(Self { tools })
    }

    pub fn from_json(text: &str) -> Result<Self, RegistryError> {
        let tools = serde_json::from_str(text).map_err(|e| RegistryError::Parse(e.to_string()))?;
        Self::new(tools)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.tools).expect("tool definitions serialize")
    }

    pub fn tools(&self) -> &[ToolDefinition] {
        &self.tools
    }

    pub fn names(&self) -> Vec<String> {
        self.tools.iter().map(|t| t.name.clone()).collect()
    }

    pub fn get(&self, name: &str) -> Option<&ToolDefinition> {
        self.tools.iter().find(|t| t.name == name)
    }
}

/// A tool guide resolved against its payload, ready to be applied.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AppliedGuide {
    pub policy_id: PolicyId,
    pub tool_name: String,
    pub guidance: String,
    pub placement: GuidePlacement,
}

fn guidance_block(g: &AppliedGuide) -> String {
    format!("[policy guidance {}]: {}", g.policy_id, g.guidance)
}

/// Returns copies of `tools` with guidance added to their descriptions.
///
/// `guides` must already be in precedence order. Appended blocks follow the
/// description in that order; prepended blocks precede it in that order.
pub fn enrich_tools(tools: &[ToolDefinition], guides: &[AppliedGuide]) -> Vec<ToolDefinition> {
    tools
        .iter()
        .map(|tool| {
            let mine = || guides.iter().filter(|g| g.tool_name == tool.name);
            let mut parts: Vec<String> = mine()
                .filter(|g| g.placement == GuidePlacement::Prepend)
                .map(guidance_block)
                .collect();
            parts.push(tool.description.clone());
            parts.extend(
                mine().filter(|g| g.placement == GuidePlacement::Append).map(guidance_block),
            );
            ToolDefinition { description: parts.join("\n\n"), ..tool.clone() }
        })
        .collect()
}

fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_'
}

fn is_ident(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_'
}

/// A tool call found in generated code.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannedCall {
    pub tool: String,
    #[serde(default)]
    pub arguments: Value,
}

/// Every identifier token directly followed by `(`, with the byte offset just
/// past the parenthesis.
fn call_sites(code: &str) -> Vec<(&str, usize)> {
    let mut out = Vec::new();
    let chars: Vec<(usize, char)> = code.char_indices().collect();
    let mut i = 0;
    while i < chars.len() {
        let (start, c) = chars[i];
        let prev_ident = i > 0 && is_ident(chars[i - 1].1);
        if !is_ident_start(c) || prev_ident {
            i += 1;
            continue;
        }
        let mut j = i;
        while j < chars.len() && is_ident(chars[j].1) {
            j += 1;
        }
        let end = chars.get(j).map_or(code.len(), |x| x.0);
        let mut k = j;
        while k < chars.len() && chars[k].1.is_whitespace() {
            k += 1;
        }
        if chars.get(k).is_some_and(|x| x.1 == '(') {
            out.push((&code[start..end], chars[k].0 + 1));
        }
        i = j;
    }
    out
}

/// Names of registered tools invoked in `code`, in first-occurrence order.
///
/// A name counts when it is a whole identifier token followed by `(`, with
/// optional whitespace in between.
pub fn scan_code_for_tools(code: &str, registry: &[ToolDefinition]) -> Vec<String> {
    extract_calls(code, registry).into_iter().map(|c| c.tool).collect()
}

/// Like [`scan_code_for_tools`] but also captures the argument text of the
/// first call to each tool. Arguments that parse as JSON are kept as such;
/// anything else is recorded as `{"raw": text}`.
pub fn extract_calls(code: &str, registry: &[ToolDefinition]) -> Vec<PlannedCall> {
    let mut out: Vec<PlannedCall> = Vec::new();
    for (name, args_start) in call_sites(code) {
        if !registry.iter().any(|t| t.name == name) || out.iter().any(|c| c.tool == name) {
            continue;
        }
        let raw = argument_text(&code[args_start..]).trim();
        let arguments = if raw.is_empty() {
            Value::Object(Default::default())
        } else {
            serde_json::from_str(raw).unwrap_or_else(|_| serde_json::json!({ "raw": raw }))
        };
        out.push(PlannedCall { tool: name.to_owned(), arguments });
    }
    out
}

/// Text up to the parenthesis closing an already opened call.
fn argument_text(rest: &str) -> &str {
    let mut depth = 1usize;
    let mut quote: Option<char> = None;
    let mut escaped = false;
    for (i, c) in rest.char_indices() {
        if let Some(q) = quote {
            if escaped {
                escaped = false;
            } else if c == '\\' {
                escaped = true;
            } else if c == q {
                quote = None;
            }
            continue;
        }
        match c {
            '"' | '\'' => quote = Some(c),
            '(' | '[' | '{' => depth += 1,
            ')' | ']' | '}' => {
                depth -= 1;
                if depth == 0 {
                    return &rest[..i];
                }
            }
            _ => {}
        }
    }
    rest
}

/// Runs tools on behalf of sessions.
pub trait ToolExecutor: Send + Sync {
    fn execute(&self, session: &SessionId, call: &PlannedCall) -> Result<Value, String>;
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Invocation {
    pub session: SessionId,
    pub tool: String,
    pub arguments: Value,
}

/// Fake executor: records every invocation and returns canned results.
#[derive(Debug, Default)]
pub struct RecordingExecutor {
    responses: HashMap<String, Value>,
    failing: Vec<String>,
    log: Mutex<Vec<Invocation>>,
}

impl RecordingExecutor {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_response(mut self, tool: impl Into<String>, value: Value) -> Self {
        self.responses.insert(tool.into(), value);
        self
    }

    /// Makes `tool` report an error whenever it runs.
    pub fn with_failure(mut self, tool: impl Into<String>) -> Self {
        self.failing.push(tool.into());
        self
    }

    pub fn invocations(&self) -> Vec<Invocation> {
        self.log.lock().clone()
    }

    pub fn invocations_for(&self, session: &SessionId) -> Vec<Invocation> {
        self.log.lock().iter().filter(|i| &i.session == session).cloned().collect()
    }

    pub fn count(&self, session: &SessionId, tool: &str) -> usize {
        self.log.lock().iter().filter(|i| &i.session == session && i.tool == tool).count()
    }
}

impl ToolExecutor for RecordingExecutor {
    fn execute(&self, session: &SessionId, call: &PlannedCall) -> Result<Value, String> {
        self.log.lock().push(Invocation {
            session: session.clone(),
            tool: call.tool.clone(),
            arguments: call.arguments.clone(),
        });
        if self.failing.contains(&call.tool) {
            return Err(format!("{} failed", call.tool));
        }
        Ok(self.responses.get(&call.tool).cloned().unwrap_or(Value::Null))
    }
}
