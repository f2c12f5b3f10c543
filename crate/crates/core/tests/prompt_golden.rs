//! Pins the prompt templates byte-for-byte against the golden files. The
//! templates are a model-facing contract; any drift is a breaking change.

use zoomground_core::prompt;

#[test]
fn refinement_prompts_match_golden() {
    assert_eq!(
        prompt::REFINEMENT_SYSTEM_PROMPT,
        include_str!("golden/refinement_system.txt")
    );
    assert_eq!(
        prompt::REFINEMENT_USER_TEMPLATE,
        include_str!("golden/refinement_user.txt")
    );
}

#[test]
fn grounding_prompts_match_golden() {
    assert_eq!(
        prompt::GROUNDING_SYSTEM_PROMPT,
        include_str!("golden/grounding_system.txt")
    );
    assert_eq!(
        prompt::GROUNDING_USER_TEMPLATE,
        include_str!("golden/grounding_user.txt")
    );
}

#[test]
fn golden_templates_have_exactly_one_placeholder() {
    assert_eq!(
        prompt::REFINEMENT_USER_TEMPLATE.matches("{instruction}").count(),
        1
    );
    assert_eq!(
        prompt::GROUNDING_USER_TEMPLATE
            .matches("{refined_instruction}")
            .count(),
        1
    );
}
