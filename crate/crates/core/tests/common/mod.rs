//! Shared fixtures and independent oracles for the integration tests.
#![allow(dead_code)]

use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use govgate_core::policy::*;

pub fn suite_dir(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../suites").join(name)
}

pub const VOCAB: &[&str] = &[
    "delete", "contact", "crm", "record", "invoice", "total", "average", "vendor", "job",
    "candidate", "time", "fill", "source", "skill", "provider", "care", "primary", "search",
    "database", "drop", "report", "quarter", "region", "sales", "refund", "ticket", "user",
    "account", "balance", "policy", "approval", "export", "import", "schedule", "meeting",
    "doctor", "network", "plan", "budget", "forecast",
];

/// Text that stresses YAML quoting: indicators, reserved scalars, unicode.
const AWKWARD: &[&str] = &[
    "yes", "no", "null", "~", "true", "0.5", "123", "-dash", "key: value", "# not a comment",
    "'single'", "\"double\"", "a: b: c", "@at", "`tick`", "{brace}", "[list]", "%pct", "!bang",
    "&anchor", "*star", "|pipe", ">fold", "tab\there", "émigré", "日本語", "--- rule",
];

pub fn words(rng: &mut ChaCha8Rng, min: usize, max: usize) -> String {
    let n = rng.gen_range(min..=max);
    (0..n).map(|_| *VOCAB.choose(rng).unwrap()).collect::<Vec<_>>().join(" ")
}

/// A nonempty single-line string with no surrounding whitespace.
fn phrase(rng: &mut ChaCha8Rng) -> String {
    let mut parts = vec![words(rng, 1, 4)];
    if rng.gen_bool(0.4) {
        parts.push((*AWKWARD.choose(rng).unwrap()).to_owned());
    }
    parts.shuffle(rng);
    parts.join(" ").trim().to_owned()
}

/// Multi-line markdown body, already trimmed as the parser would return it.
fn body(rng: &mut ChaCha8Rng) -> String {
    let lines = rng.gen_range(1..=4);
    let mut out: Vec<String> = Vec::new();
    for i in 0..lines {
        let line = match rng.gen_range(0..5) {
            0 if i == 0 => format!("# {}", phrase(rng)),
            1 => format!("- {}", phrase(rng)),
            2 => String::new(),
            _ => phrase(rng),
        };
        out.push(line);
    }
    let text = out.join("\n").trim().to_owned();
    if text.is_empty() {
        phrase(rng)
    } else {
        text
    }
}

fn target(rng: &mut ChaCha8Rng, kind: PolicyKind) -> TargetField {
    let pool: &[TargetField] = if kind == PolicyKind::OutputFormatter {
        &[TargetField::UserInput, TargetField::FinalResponse]
    } else {
        &TargetField::ALL
    };
    *pool.choose(rng).unwrap()
}

fn threshold(rng: &mut ChaCha8Rng) -> f64 {
    match rng.gen_range(0..4) {
        0 => 0.0,
        1 => 1.0,
        2 => (rng.gen_range(0..=100) as f64) / 100.0,
        _ => rng.gen::<f64>(),
    }
}

pub fn random_trigger(rng: &mut ChaCha8Rng, kind: PolicyKind) -> Trigger {
    match rng.gen_range(0..5) {
        0 => Trigger::NaturalLanguage(NaturalLanguageTrigger {
            queries: (0..rng.gen_range(1..=3)).map(|_| phrase(rng)).collect(),
            threshold: threshold(rng),
            target: target(rng, kind),
        }),
        1 => Trigger::Keyword(KeywordTrigger {
            keywords: (0..rng.gen_range(1..=3)).map(|_| phrase(rng)).collect(),
            mode: if rng.gen() { KeywordMode::And } else { KeywordMode::Or },
            case_sensitive: rng.gen(),
            fuzzy_max_edits: rng.gen_range(0..=2),
            target: target(rng, kind),
        }),
        2 => Trigger::Application(ApplicationTrigger { app_id: words(rng, 1, 1) }),
        3 => {
            let operator =
                *[StateOperator::Eq, StateOperator::Contains, StateOperator::Regex].choose(rng).unwrap();
            let value = match operator {
                StateOperator::Regex => (*["^a+$", "x|y", r"\d{3}", "(?i)crm", ".*"].choose(rng).unwrap()).into(),
                _ => phrase(rng),
            };
            let path = (0..rng.gen_range(1..=3)).map(|_| words(rng, 1, 1)).collect::<Vec<_>>().join(".");
            Trigger::State(StateTrigger { path, operator, value })
        }
        _ => Trigger::Tool(ToolTrigger {
            tool_name: format!("{}_{}", words(rng, 1, 1), words(rng, 1, 1)),
            stage: if rng.gen() { ToolStage::Pre } else { ToolStage::Post },
        }),
    }
}

const SCHEMAS: &[&str] = &[
    r#"{"type":"object","properties":{"total":{"type":"number"}},"required":["total"]}"#,
    r#"{"type":"array","items":{"type":"string"},"minItems":1}"#,
    r#"{"type":"object","properties":{"name":{"type":"string","maxLength":40},"tags":{"type":"array"}},"additionalProperties":false}"#,
];

pub fn random_policy(rng: &mut ChaCha8Rng, index: usize) -> Policy {
    let kind = *PolicyKind::ALL.choose(rng).unwrap();
    let ntriggers = match kind {
        PolicyKind::ToolApproval => rng.gen_range(0..=2),
        _ => rng.gen_range(1..=3),
    };
    let triggers = (0..ntriggers).map(|_| random_trigger(rng, kind)).collect();
    let described = |rng: &mut ChaCha8Rng| if rng.gen() { body(rng) } else { String::new() };
    let (payload, description) = match kind {
        PolicyKind::IntentGuard => (
            PolicyPayload::IntentGuard(IntentGuardPayload { block_message: phrase(rng) }),
            described(rng),
        ),
        PolicyKind::Playbook => {
            let steps = rng.gen_bool(0.5).then(|| {
                (0..rng.gen_range(1..=3))
                    .map(|_| PlaybookStep {
                        instruction: phrase(rng),
                        expected_outcome: rng.gen_bool(0.5).then(|| phrase(rng)),
                        allowed_tools: rng
                            .gen_bool(0.5)
                            .then(|| (0..rng.gen_range(0..=2)).map(|_| words(rng, 1, 1)).collect()),
                    })
                    .collect()
            });
            (PolicyPayload::Playbook(PlaybookPayload { content: body(rng), steps }), String::new())
        }
        PolicyKind::ToolGuide => (
            PolicyPayload::ToolGuide(ToolGuidePayload {
                tool_names: (0..rng.gen_range(1..=3)).map(|_| words(rng, 1, 1)).collect(),
                guidance: body(rng),
                placement: if rng.gen() { GuidePlacement::Append } else { GuidePlacement::Prepend },
            }),
            String::new(),
        ),
        PolicyKind::ToolApproval => (
            PolicyPayload::ToolApproval(ToolApprovalPayload {
                tool_patterns: (0..rng.gen_range(1..=3))
                    .map(|_| match rng.gen_range(0..3) {
                        0 => "*".to_owned(),
                        1 => format!("{}_*", words(rng, 1, 1)),
                        _ => format!("{}_{}", words(rng, 1, 1), words(rng, 1, 1)),
                    })
                    .collect(),
                auto_approve: rng.gen(),
            }),
            described(rng),
        ),
        PolicyKind::OutputFormatter => {
            let payload = match rng.gen_range(0..3) {
                0 => OutputFormatterPayload {
                    mode: FormatMode::Template,
                    template: Some(if rng.gen() { phrase(rng) } else { format!("{}\n\n{}", body(rng), phrase(rng)) }),
                    schema: None,
                },
                1 => OutputFormatterPayload { mode: FormatMode::Markdown, template: None, schema: None },
                _ => OutputFormatterPayload {
                    mode: FormatMode::JsonSchema,
                    template: None,
                    schema: Some(serde_json::from_str(SCHEMAS.choose(rng).unwrap()).unwrap()),
                },
            };
            (PolicyPayload::OutputFormatter(payload), described(rng))
        }
    };
    Policy {
        id: PolicyId::new(format!("p{index:04}-{}", words(rng, 1, 1))),
        priority: rng.gen_range(0..=100),
        enabled: rng.gen_bool(0.9),
        triggers,
        description,
        payload,
    }
}

/// A policy of `kind` whose only triggers are natural-language ones over
/// vocabulary words, so that searches produce many overlaps and exact ties.
pub fn random_semantic_policy(rng: &mut ChaCha8Rng, index: usize, kind: PolicyKind) -> Policy {
    let triggers = (0..rng.gen_range(1..=2))
        .map(|_| {
            Trigger::NaturalLanguage(NaturalLanguageTrigger {
                queries: (0..rng.gen_range(1..=3)).map(|_| words(rng, 1, 5)).collect(),
                threshold: (rng.gen_range(0..=60) as f64) / 100.0,
                target: TargetField::UserInput,
            })
        })
        .collect();
    let payload = match kind {
        PolicyKind::IntentGuard => {
            PolicyPayload::IntentGuard(IntentGuardPayload { block_message: "blocked".into() })
        }
        PolicyKind::Playbook => {
            PolicyPayload::Playbook(PlaybookPayload { content: words(rng, 2, 6), steps: None })
        }
        _ => PolicyPayload::OutputFormatter(OutputFormatterPayload {
            mode: FormatMode::Markdown,
            template: None,
            schema: None,
        }),
    };
    Policy {
        id: PolicyId::new(format!("s{index:04}")),
        priority: rng.gen_range(0..=100),
        enabled: rng.gen_bool(0.9),
        triggers,
        description: String::new(),
        payload,
    }
}

/// Reference bag-of-words embedding: FNV-1a 64 token hashes into `dim`
/// buckets, L2-normalized.
pub fn oracle_embed(text: &str, dim: usize) -> Vec<f64> {
    let mut v = vec![0.0f64; dim];
    let mut token = String::new();
    let flush = |token: &mut String, v: &mut Vec<f64>| {
        if token.is_empty() {
            return;
        }
        let mut h: u64 = 14_695_981_039_346_656_037;
        for b in token.as_bytes() {
            h ^= u64::from(*b);
            h = h.wrapping_mul(1_099_511_628_211);
        }
        v[(h % dim as u64) as usize] += 1.0;
        token.clear();
    };
    for c in text.chars() {
        if c.is_alphanumeric() {
            token.extend(c.to_lowercase());
        } else {
            flush(&mut token, &mut v);
        }
    }
    flush(&mut token, &mut v);
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in &mut v {
            *x /= norm;
        }
    }
    v
}

pub fn oracle_cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleHit {
    pub id: String,
    pub score: f64,
    pub query: String,
}

/// Brute-force semantic search over plain policy values.
pub fn brute_force(
    policies: &[Policy],
    text: &str,
    kind: PolicyKind,
    top_k: usize,
    threshold: f64,
) -> Vec<OracleHit> {
    let q = oracle_embed(text, 256);
    let mut hits = Vec::new();
    for p in policies.iter().filter(|p| p.enabled && p.kind() == kind) {
        let mut best: Option<OracleHit> = None;
        for t in &p.triggers {
            let Trigger::NaturalLanguage(nl) = t else { continue };
            for query in &nl.queries {
                let score = oracle_cosine(&oracle_embed(query, 256), &q);
                if score < threshold || score < nl.threshold {
                    continue;
                }
                if best.as_ref().is_none_or(|b| score > b.score) {
                    best = Some(OracleHit { id: p.id.to_string(), score, query: query.clone() });
                }
            }
        }
        hits.extend(best);
    }
    hits.sort_by(|a, b| b.score.partial_cmp(&a.score).unwrap().then_with(|| a.id.cmp(&b.id)));
    hits.truncate(top_k);
    hits
}

/// Compares store hits with oracle hits: identical ids and queries in the same
/// order, scores within `tol`.
pub fn hits_agree(got: &[govgate_core::store::SearchHit], want: &[OracleHit], tol: f64) -> Result<(), String> {
    if got.len() != want.len() {
        return Err(format!("{} hits, oracle has {}", got.len(), want.len()));
    }
    for (i, (g, w)) in got.iter().zip(want).enumerate() {
        if g.policy_id.as_str() != w.id || g.matched_query != w.query || (g.score - w.score).abs() > tol {
            return Err(format!("hit {i}: {} {} {:?} vs {} {} {:?}", g.policy_id, g.score, g.matched_query, w.id, w.score, w.query));
        }
    }
    Ok(())
}
