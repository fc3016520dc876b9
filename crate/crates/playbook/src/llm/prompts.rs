//! Versioned prompt templates for every agent role, shipped as asset files
//! with `{{name}}` placeholders, plus the glue that assembles user messages.

pub const PLANNER_SYSTEM_TEMPLATE: &str = include_str!("prompt_assets/planner_system.txt");
pub const PUT_EXAMPLE: &str = include_str!("prompt_assets/put_example.txt");
pub const CONCLUSION_SUCCESS: &str = include_str!("prompt_assets/conclusion_success.txt");
pub const CONCLUSION_FAILURE: &str = include_str!("prompt_assets/conclusion_failure.txt");
pub const BUILDER_SYSTEM: &str = include_str!("prompt_assets/builder_system.txt");
pub const BUILDER_CLASSIFY: &str = include_str!("prompt_assets/builder_classify.txt");
pub const BUILDER_BASE_TEMPLATE: &str = include_str!("prompt_assets/builder_base.txt");
pub const BUILDER_CASE1: &str = include_str!("prompt_assets/builder_case1.txt");
pub const BUILDER_CASE2: &str = include_str!("prompt_assets/builder_case2.txt");
pub const BUILDER_CASE3: &str = include_str!("prompt_assets/builder_case3.txt");
pub const BUILDER_CASE4: &str = include_str!("prompt_assets/builder_case4.txt");
pub const BUILDER_CASE5: &str = include_str!("prompt_assets/builder_case5.txt");
pub const CONSOLIDATOR_SYSTEM_TEMPLATE: &str = include_str!("prompt_assets/consolidator_system.txt");
pub const FORMULATOR_SYSTEM: &str = include_str!("prompt_assets/formulator_system.txt");
pub const SKILL_FRAMING_TEMPLATE: &str = include_str!("prompt_assets/skill_framing.txt");
pub const REFLECTION_FRAMING_TEMPLATE: &str = include_str!("prompt_assets/reflection_framing.txt");

/// Replaces each `{{name}}` with its value. Panics in debug builds if a
/// placeholder in the template has no substitution.
pub fn fill(template: &str, substitutions: &[(&str, &str)]) -> String {
    let mut out = template.to_string();
    for (name, value) in substitutions {
        out = out.replace(&format!("{{{{{name}}}}}"), value);
    }
    debug_assert!(
        !has_placeholder(&out) || substitutions.is_empty(),
        "unfilled placeholder remains after substitution"
    );
    out
}

fn has_placeholder(text: &str) -> bool {
    let mut rest = text;
    while let Some(pos) = rest.find("{{") {
        let tail = &rest[pos + 2..];
        if let Some(end) = tail.find("}}") {
            let name = &tail[..end];
            if !name.is_empty() && name.chars().all(|c| c.is_ascii_lowercase() || c == '_') {
                return true;
            }
            rest = &tail[end + 2..];
        } else {
            return false;
        }
    }
    false
}

pub fn planner_system() -> String {
    fill(PLANNER_SYSTEM_TEMPLATE, &[("example", PUT_EXAMPLE.trim_end())])
}

pub fn builder_base(n_max: usize) -> String {
    fill(BUILDER_BASE_TEMPLATE, &[("n_max", &n_max.to_string())])
}

pub fn builder_case(case_index: u8) -> &'static str {
    match case_index {
        1 => BUILDER_CASE1,
        2 => BUILDER_CASE2,
        3 => BUILDER_CASE3,
        4 => BUILDER_CASE4,
        _ => BUILDER_CASE5,
    }
}

pub fn consolidator_system(n_max: usize) -> String {
    fill(CONSOLIDATOR_SYSTEM_TEMPLATE, &[("n_max", &n_max.to_string())])
}

pub fn skill_framing(context: &str, code: &str) -> String {
    fill(
        SKILL_FRAMING_TEMPLATE,
        &[("context", context.trim_end()), ("code", code.trim_end())],
    )
}

pub fn reflection_framing(reflection: &str) -> String {
    fill(REFLECTION_FRAMING_TEMPLATE, &[("reflection", reflection.trim_end())])
}

/// The planner's opening user message: knowledge (rules or manual), an
/// optional retrieved skill/reflection, then the observation and task.
pub fn planner_task_message(
    knowledge_label: &str,
    knowledge: &str,
    retrieved: Option<&str>,
    observation: &str,
    task: &str,
) -> String {
    let mut out = format!("[{knowledge_label}]\n{knowledge}\n\n");
    if let Some(retrieved) = retrieved {
        out.push_str(retrieved.trim_end());
        out.push_str("\n\n");
    }
    out.push_str(&format!(
        "[Initial observation and the task]\n{observation}\nYour task is to: {task}"
    ));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn planner_system_embeds_example_and_leaves_no_placeholders() {
        let system = planner_system();
        assert!(system.contains("find some spraybottle"));
        assert!(system.contains("### Understanding of the observation:"));
        assert!(!has_placeholder(&system));
    }

    #[test]
    fn capacity_placeholder_is_filled() {
        let base = builder_base(12);
        assert!(base.contains("maximum of 12 rules"));
        let consolidator = consolidator_system(7);
        assert!(consolidator.contains("maximum of 7 rules"));
        assert!(!has_placeholder(&consolidator));
    }

    #[test]
    fn assembled_task_message_orders_sections() {
        let message = planner_task_message(
            "Current rules",
            "### rule_0 (Special Mechanism)\nrule: text",
            Some("Here is the code for a relevant skill:\n..."),
            "You are in the middle of a room. Looking quickly around you, you see shelf_1.",
            "put some mug in shelf.",
        );
        let rules_at = message.find("[Current rules]").unwrap();
        let skill_at = message.find("relevant skill").unwrap();
        let obs_at = message.find("[Initial observation and the task]").unwrap();
        let task_at = message.find("Your task is to: put some mug in shelf.").unwrap();
        assert!(rules_at < skill_at && skill_at < obs_at && obs_at < task_at);
    }

    #[test]
    fn every_case_prompt_is_distinct() {
        let cases: Vec<&str> = (1..=5).map(builder_case).collect();
        for (i, a) in cases.iter().enumerate() {
            for b in cases.iter().skip(i + 1) {
                assert_ne!(a, b);
            }
        }
        assert!(builder_case(4).contains("cannot write down any \"Success Process\""));
        assert!(builder_case(1).starts_with("**Rules for Success**"));
    }
}
