//! Prompt templates for the refinement and grounding models.
//!
//! The templates are the fixed interface contract with the models: golden
//! files under `tests/golden/` pin them byte-for-byte, and the grounding
//! system prompt embeds the exact wire grammar the `action` module parses
//! (including the verbatim null-action string). Instructions are
//! substituted verbatim at the placeholder, with no escaping.

use alloc::string::String;

/// System prompt for the instruction refinement model.
pub const REFINEMENT_SYSTEM_PROMPT: &str = "You are a helpful GUI assistant.";

/// User-prompt template for the refinement model; `{instruction}` is the
/// substitution placeholder.
pub const REFINEMENT_USER_TEMPLATE: &str = "\
You are given a task description and a screenshot of a GUI. The task can be completed with only one click.
You need to find out the target to click, and then refine the task description to let user easily locate the target on the screen.
Possible refinements include adding location information, describing visual features (color, size, text, icon shape, ...), clarifying ambiguous terms, etc.

Only reply with the refined description. Do not add explanations.

Task: {instruction}";

/// System prompt for the grounding model, including the answer format and
/// the exact null-action string.
pub const GROUNDING_SYSTEM_PROMPT: &str = "\
You are a GUI agent. You are given a task and a screenshot of the screen. You need to perform pyautogui click/moveTo action to complete the task, and then provide the bouding box of the target object. The answer format is `pyautogui.click(x=?, y=?), <|box_start|>(x1,y1),(x2,y2)<|box_end|>`. If the task is infeasible (e.g., the task is already completed, the target does not exist in the image, or the instruction is unrelated to the screenshot), output a null action exactly as follows: `pyautogui.click(x=0, y=0), <|box_start|>(0,0),(0,0)<|box_end|>`.";

/// User-prompt template for the grounding model; `{refined_instruction}`
/// is the substitution placeholder.
pub const GROUNDING_USER_TEMPLATE: &str = "\
Please complete the following tasks by clicking using `pyautogui.click` and returning the bounding box:
Task: {refined_instruction}";

/// Raised when an empty instruction reaches a prompt builder.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EmptyInstructionError;

impl core::fmt::Display for EmptyInstructionError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str("instruction must be non-empty")
    }
}

/// Instantiates the refinement user prompt for an instruction.
pub fn refinement_user_prompt(instruction: &str) -> Result<String, EmptyInstructionError> {
    if instruction.is_empty() {
        return Err(EmptyInstructionError);
    }
    Ok(REFINEMENT_USER_TEMPLATE.replace("{instruction}", instruction))
}

/// Instantiates the grounding user prompt for a (refined) instruction.
pub fn grounding_user_prompt(refined: &str) -> Result<String, EmptyInstructionError> {
    if refined.is_empty() {
        return Err(EmptyInstructionError);
    }
    Ok(GROUNDING_USER_TEMPLATE.replace("{refined_instruction}", refined))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn refinement_prompt_substitutes_at_tail() {
        let p = refinement_user_prompt("launch a new file explorer").unwrap();
        assert!(p.ends_with("Task: launch a new file explorer"));
        assert!(p.starts_with("You are given a task description"));
    }

    #[test]
    fn grounding_prompt_substitutes_at_tail() {
        let p = grounding_user_prompt("click on the 'New Window' option").unwrap();
        assert!(p.ends_with("Task: click on the 'New Window' option"));
    }

    #[test]
    fn empty_instruction_rejected() {
        assert_eq!(refinement_user_prompt(""), Err(EmptyInstructionError));
        assert_eq!(grounding_user_prompt(""), Err(EmptyInstructionError));
    }

    #[test]
    fn substitution_is_verbatim() {
        let tricky = "line one\nline two with `backticks` and {instruction}";
        let p = grounding_user_prompt(tricky).unwrap();
        assert!(p.contains(tricky));
    }

    #[test]
    fn null_action_string_in_system_prompt_parses() {
        // The system prompt promises an exact null-action string; keep the
        // grammar and the prompt in lockstep.
        let quoted = "`pyautogui.click(x=0, y=0), <|box_start|>(0,0),(0,0)<|box_end|>`";
        assert!(GROUNDING_SYSTEM_PROMPT.contains(quoted));
        let a = crate::action::parse_grounding_output(quoted, crate::action::ParseMode::Lenient)
            .unwrap();
        assert!(a.is_null());
    }
}
