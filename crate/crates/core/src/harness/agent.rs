use serde::{Deserialize, Serialize};

use crate::enactment::ToolDefinition;

/// Something the agent can notice in its inputs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Cue {
    PromptContains { text: String },
    ToolDescriptionContains { tool: String, text: String },
}

/// Alternative emission used instead of the step's own when `when` is
/// present in the inputs. A switch without a response continues the session.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Switch {
    pub when: Cue,
    #[serde(default)]
    pub code: String,
    #[serde(default)]
    pub response: Option<String>,
}

fn yes() -> bool {
    true
}

/// One turn of the agent: code to run and, when the turn ends the session,
/// the final response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentStep {
    #[serde(default = "yes")]
    pub reads_prompt_directives: bool,
    #[serde(default)]
    pub code: String,
    #[serde(default)]
    pub response: Option<String>,
    #[serde(default)]
    pub switches: Vec<Switch>,
}

impl AgentStep {
    pub fn new(code: impl Into<String>, response: Option<&str>) -> Self {
        Self {
            reads_prompt_directives: true,
            code: code.into(),
            response: response.map(Into::into),
            switches: Vec::new(),
        }
    }

    pub fn with_switch(mut self, switch: Switch) -> Self {
        self.switches.push(switch);
        self
    }
}

/// What the agent sees when it takes a turn.
#[derive(Debug, Clone, Copy)]
pub struct AgentInput<'a> {
    pub system_prompt: &'a str,
    pub tools: &'a [ToolDefinition],
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Emission {
    pub code: String,
    pub response: Option<String>,
    /// Index of the switch that applied, if any.
    pub switch: Option<usize>,
}

impl Cue {
    fn present(&self, input: AgentInput<'_>, reads_prompt: bool) -> bool {
        match self {
            Cue::PromptContains { text } => reads_prompt && input.system_prompt.contains(text.as_str()),
            Cue::ToolDescriptionContains { tool, text } => input
                .tools
                .iter()
                .any(|t| &t.name == tool && t.description.contains(text.as_str())),
        }
    }
}

/// A deterministic stand-in for an LLM agent.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptedAgent {
    pub steps: Vec<AgentStep>,
}

impl ScriptedAgent {
    pub fn new(steps: Vec<AgentStep>) -> Self {
        Self { steps }
    }

    /// A single turn that runs no tools and answers `response`.
    pub fn answering(response: &str) -> Self {
        Self::new(vec![AgentStep::new("", Some(response))])
    }

    /// Emission of step `index`, or `None` once the script is exhausted. The
    /// first switch whose cue is present wins.
    pub fn emit(&self, index: usize, input: AgentInput<'_>) -> Option<Emission> {
        let step = self.steps.get(index)?;
        let hit = step
            .switches
            .iter()
            .position(|s| s.when.present(input, step.reads_prompt_directives));
        Some(match hit {
            Some(i) => Emission {
                code: step.switches[i].code.clone(),
                response: step.switches[i].response.clone(),
                switch: hit,
            },
            None => Emission { code: step.code.clone(), response: step.response.clone(), switch: None },
        })
    }
}
