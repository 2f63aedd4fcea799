//! Evaluation of single triggers against a session's context.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::embed::{cosine_similarity, EmbeddingProvider, SimilarityError};
use crate::policy::{
    ApplicationTrigger, KeywordMode, KeywordTrigger, NaturalLanguageTrigger, StateOperator,
    StateTrigger, TargetField, ToolStage, ToolTrigger, Trigger,
};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ToolSighting {
    pub tool_name: String,
    pub stage: ToolStage,
}

/// The contextual fields triggers read.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MatchContext {
    pub user_input: String,
    #[serde(default)]
    pub intent: Option<String>,
    #[serde(default)]
    pub sub_task: Option<String>,
    #[serde(default)]
    pub final_response: Option<String>,
    #[serde(default)]
    pub app_id: Option<String>,
    /// Structured agent state, addressed by dotted paths.
    #[serde(default)]
    pub state: Value,
    #[serde(default)]
    pub tools_seen: Vec<ToolSighting>,
}

impl MatchContext {
    pub fn new(user_input: impl Into<String>) -> Self {
        Self { user_input: user_input.into(), ..Self::default() }
    }

    pub fn field(&self, target: TargetField) -> Option<&str> {
        match target {
            TargetField::UserInput => Some(&self.user_input),
            TargetField::Intent => self.intent.as_deref(),
            TargetField::SubTask => self.sub_task.as_deref(),
            TargetField::FinalResponse => self.final_response.as_deref(),
        }
    }

    /// Resolves a dotted path in `state`. Object keys and array indices are
    /// both accepted as segments; only scalar leaves produce a value.
    pub fn state_value(&self, path: &str) -> Option<String> {
        let mut node = &self.state;
        for segment in path.split('.') {
            node = match node {
                Value::Object(map) => map.get(segment)?,
                Value::Array(items) => items.get(segment.parse::<usize>().ok()?)?,
                _ => return None,
            };
        }
        match node {
            Value::String(s) => Some(s.clone()),
            Value::Number(n) => Some(n.to_string()),
            Value::Bool(b) => Some(b.to_string()),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriggerOutcome {
    pub matched: bool,
    /// Similarity score, present only for natural-language triggers.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matched_query: Option<String>,
}

impl TriggerOutcome {
    pub fn hit() -> Self {
        Self { matched: true, score: None, matched_query: None }
    }

    pub fn miss() -> Self {
        Self { matched: false, score: None, matched_query: None }
    }

    fn from_bool(matched: bool) -> Self {
        Self { matched, score: None, matched_query: None }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TriggerError {
    #[error("context has no value for target field {0:?}")]
    MissingTargetField(TargetField),
    #[error(transparent)]
    Similarity(#[from] SimilarityError),
}

/// Levenshtein distance over Unicode scalar values.
pub fn edit_distance(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let substitution = prev[j] + usize::from(ca != cb);
            cur[j + 1] = substitution.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

fn words(text: &str) -> Vec<&str> {
    text.split_whitespace()
        .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()))
        .filter(|w| !w.is_empty())
        .collect()
}

fn keyword_found(keyword: &str, text: &str, max_edits: usize) -> bool {
    if text.contains(keyword) {
        return true;
    }
    if max_edits == 0 {
        return false;
    }
    let needle = words(keyword);
    if needle.is_empty() {
        return false;
    }
    let needle = needle.join(" ");
    let span = keyword.split_whitespace().count().max(1);
    let hay = words(text);
    hay.windows(span)
        .any(|w| edit_distance(&w.join(" "), &needle) <= max_edits)
}

pub fn eval_keyword(t: &KeywordTrigger, ctx: &MatchContext) -> TriggerOutcome {
    let Some(text) = ctx.field(t.target) else {
        return TriggerOutcome::miss();
    };
    if text.is_empty() {
        return TriggerOutcome::miss();
    }
    let folded;
    let text = if t.case_sensitive {
        text
    } else {
        folded = text.to_lowercase();
        &folded
    };
    let max_edits = t.fuzzy_max_edits as usize;
    let mut found = t.keywords.iter().map(|k| {
        if t.case_sensitive {
            keyword_found(k, text, max_edits)
        } else {
            keyword_found(&k.to_lowercase(), text, max_edits)
        }
    });
    let matched = match t.mode {
        KeywordMode::And => !t.keywords.is_empty() && found.all(|f| f),
        KeywordMode::Or => found.any(|f| f),
    };
    TriggerOutcome::from_bool(matched)
}

/// Scores a natural-language trigger by the best cosine similarity between
/// any of its queries and the target field.
pub fn eval_natural_language(
    t: &NaturalLanguageTrigger,
    ctx: &MatchContext,
    embedder: &dyn EmbeddingProvider,
) -> Result<TriggerOutcome, TriggerError> {
    let text = ctx.field(t.target).ok_or(TriggerError::MissingTargetField(t.target))?;
    let target = embedder.embed(text);
    let mut best: Option<(f64, &str)> = None;
    for query in &t.queries {
        let score = match cosine_similarity(&embedder.embed(query), &target) {
            Ok(s) => s.max(0.0),
            Err(SimilarityError::ZeroVector) => 0.0,
            Err(e) => return Err(e.into()),
        };
        if best.is_none_or(|(b, _)| score > b) {
            best = Some((score, query));
        }
    }
    Ok(match best {
        Some((score, query)) => TriggerOutcome {
            matched: score >= t.threshold,
            score: Some(score),
            matched_query: Some(query.to_owned()),
        },
        None => TriggerOutcome { matched: false, score: Some(0.0), matched_query: None },
    })
}

pub fn eval_state(t: &StateTrigger, ctx: &MatchContext) -> TriggerOutcome {
    let Some(actual) = ctx.state_value(&t.path) else {
        return TriggerOutcome::miss();
    };
    let matched = match t.operator {
        StateOperator::Eq => actual == t.value,
        StateOperator::Contains => actual.contains(&t.value),
        // validation rejects patterns that do not compile
        StateOperator::Regex => regex::Regex::new(&t.value).is_ok_and(|re| re.is_match(&actual)),
    };
    TriggerOutcome::from_bool(matched)
}

pub fn eval_application(t: &ApplicationTrigger, ctx: &MatchContext) -> TriggerOutcome {
    TriggerOutcome::from_bool(ctx.app_id.as_deref() == Some(t.app_id.as_str()))
}

pub fn eval_tool(t: &ToolTrigger, ctx: &MatchContext) -> TriggerOutcome {
    TriggerOutcome::from_bool(
        ctx.tools_seen
            .iter()
            .any(|s| s.tool_name == t.tool_name && s.stage == t.stage),
    )
}

/// Evaluates any trigger. A natural-language trigger whose target field is
/// absent does not match.
pub fn evaluate(
    trigger: &Trigger,
    ctx: &MatchContext,
    embedder: &dyn EmbeddingProvider,
) -> Result<TriggerOutcome, TriggerError> {
    Ok(match trigger {
        Trigger::Keyword(t) => eval_keyword(t, ctx),
        Trigger::Application(t) => eval_application(t, ctx),
        Trigger::State(t) => eval_state(t, ctx),
        Trigger::Tool(t) => eval_tool(t, ctx),
        Trigger::NaturalLanguage(t) => match eval_natural_language(t, ctx, embedder) {
            Err(TriggerError::MissingTargetField(_)) => TriggerOutcome::miss(),
            other => other?,
        },
    })
}

/// Evaluates a trigger that needs no embedder. Returns `None` for
/// natural-language triggers.
pub fn evaluate_deterministic(trigger: &Trigger, ctx: &MatchContext) -> Option<TriggerOutcome> {
    match trigger {
        Trigger::Keyword(t) => Some(eval_keyword(t, ctx)),
        Trigger::Application(t) => Some(eval_application(t, ctx)),
        Trigger::State(t) => Some(eval_state(t, ctx)),
        Trigger::Tool(t) => Some(eval_tool(t, ctx)),
        Trigger::NaturalLanguage(_) => None,
    }
}
