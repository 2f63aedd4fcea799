use std::collections::HashMap;

use serde::Serialize;
use serde_json::Value;
use thiserror::Error;

use super::session::FinalOutput;
use crate::policy::{FormatMode, OutputFormatterPayload, PolicyId};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FormatterError {
    #[error("formatter model failed: {0}")]
    Model(String),
    #[error("output does not satisfy the schema: {0}")]
    SchemaValidationFailed(String),
}

/// The model behind markdown restructuring and schema extraction.
pub trait FormatterModel: Send + Sync {
    fn restructure(&self, response: &str) -> Result<String, FormatterError>;
    fn extract(&self, response: &str, schema: &Value) -> Result<Value, FormatterError>;
}

/// Deterministic formatter model.
///
/// Markdown restructuring turns each non-empty line into a bullet.
/// Extraction parses the response as JSON.
#[derive(Debug, Default, Clone, Copy)]
pub struct BasicFormatter;

impl FormatterModel for BasicFormatter {
    fn restructure(&self, response: &str) -> Result<String, FormatterError> {
        Ok(response
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(|l| format!("- {}", l.trim_start_matches("- ")))
            .collect::<Vec<_>>()
            .join("\n"))
    }

    fn extract(&self, response: &str, _schema: &Value) -> Result<Value, FormatterError> {
        serde_json::from_str(response.trim()).map_err(|e| FormatterError::Model(e.to_string()))
    }
}

/// Formatter model with canned outputs keyed by the response text.
#[derive(Debug, Default, Clone)]
pub struct ScriptedFormatter {
    markdown: HashMap<String, String>,
    extracted: HashMap<String, Value>,
}

impl ScriptedFormatter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_markdown(mut self, response: impl Into<String>, out: impl Into<String>) -> Self {
        self.markdown.insert(response.into(), out.into());
        self
    }

    pub fn with_extraction(mut self, response: impl Into<String>, out: Value) -> Self {
        self.extracted.insert(response.into(), out);
        self
    }
}

impl FormatterModel for ScriptedFormatter {
    fn restructure(&self, response: &str) -> Result<String, FormatterError> {
        self.markdown
            .get(response)
            .cloned()
            .ok_or_else(|| FormatterError::Model("no scripted markdown".into()))
    }

    fn extract(&self, response: &str, _schema: &Value) -> Result<Value, FormatterError> {
        self.extracted
            .get(response)
            .cloned()
            .ok_or_else(|| FormatterError::Model("no scripted extraction".into()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FormatResult {
    pub output: FinalOutput,
    pub policy_id: Option<PolicyId>,
    pub mode: Option<FormatMode>,
    /// Set when formatting failed and the response passed through.
    pub diagnostic: Option<String>,
}

fn validate(schema: &Value, doc: &Value) -> Result<(), FormatterError> {
    let validator = jsonschema::validator_for(schema)
        .map_err(|e| FormatterError::SchemaValidationFailed(e.to_string()))?;
    let first = validator
        .iter_errors(doc)
        .next()
        .map(|e| format!("{} at {}", e, e.instance_path()));
    match first {
        None => Ok(()),
        Some(msg) => Err(FormatterError::SchemaValidationFailed(msg)),
    }
}

/// Applies the selected formatter, if any, to the final response. Failures
/// fall back to the unformatted response with a diagnostic.
pub fn format_output(
    response: &str,
    _user_input: &str,
    selected: Option<(&PolicyId, &OutputFormatterPayload)>,
    model: &dyn FormatterModel,
) -> FormatResult {
    let Some((id, payload)) = selected else {
        return FormatResult {
            output: FinalOutput::Text(response.to_owned()),
            policy_id: None,
            mode: None,
            diagnostic: None,
        };
    };
    let attempt = match payload.mode {
        FormatMode::Template => Ok(FinalOutput::Text(payload.template.clone().unwrap_or_default())),
        FormatMode::Markdown => model.restructure(response).map(FinalOutput::Text),
        FormatMode::JsonSchema => {
            let schema = payload.schema.clone().unwrap_or(Value::Bool(true));
            model
                .extract(response, &schema)
                .and_then(|doc| validate(&schema, &doc).map(|_| FinalOutput::Json(doc)))
        }
    };
    let (output, diagnostic) = match attempt {
        Ok(out) => (out, None),
        Err(e) => (FinalOutput::Text(response.to_owned()), Some(e.to_string())),
    };
    FormatResult { output, policy_id: Some(id.clone()), mode: Some(payload.mode), diagnostic }
}
