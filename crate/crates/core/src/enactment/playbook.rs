use crate::policy::{PlaybookPayload, PolicyId};

const OPEN: &str = "<policy:playbook id=";
const CLOSE: &str = "</policy:playbook>";

/// Renders a playbook as a delimited block.
pub fn render_playbook(id: &PolicyId, pb: &PlaybookPayload) -> String {
    let mut block = format!("{OPEN}{id}>\n{}", pb.content.trim_end());
    let steps = pb.steps.as_deref().unwrap_or_default();
    if !steps.is_empty() {
        block.push('\n');
        for (i, step) in steps.iter().enumerate() {
            block.push_str(&format!("\n{}. {}", i + 1, step.instruction));
            if let Some(outcome) = &step.expected_outcome {
                block.push_str(&format!("\n   Expected outcome: {outcome}"));
            }
            if let Some(tools) = &step.allowed_tools {
                block.push_str(&format!("\n   Allowed tools: {}", tools.join(", ")));
            }
        }
    }
    block.push('\n');
    block.push_str(CLOSE);
    block
}

/// Appends the playbook block to `system_prompt`. A prompt that already
/// holds a playbook block is returned unchanged.
pub fn inject_playbook(system_prompt: &str, id: &PolicyId, pb: &PlaybookPayload) -> String {
    if has_playbook(system_prompt) {
        return system_prompt.to_owned();
    }
    format!("{system_prompt}\n\n{}", render_playbook(id, pb))
}

pub fn has_playbook(prompt: &str) -> bool {
    prompt.contains(OPEN)
}
