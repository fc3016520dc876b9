//! The formulator agent: turns the final rule set into a categorized
//! Markdown manual. The LLM proposes the categorization and introductions;
//! rule bodies are spliced in mechanically from the store so the manual is
//! always faithful to the rules.

use crate::llm::{Backend, BackendError, ChatSession};
use crate::rulestore::{Rule, RuleStore};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManualCategory {
    pub name: String,
    pub introduction: String,
    pub rule_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manual {
    pub overview: String,
    pub categories: Vec<ManualCategory>,
    pub rendered: String,
}

#[derive(Debug, Error)]
pub enum FormulateError {
    #[error("the rule store is empty; there is nothing to formulate")]
    EmptyStore,
    #[error("no Markdown block in the formulator response after {attempts} attempts")]
    Format { attempts: u32 },
    #[error(transparent)]
    Backend(#[from] BackendError),
}

#[derive(Debug, Clone)]
pub struct FormulateOutcome {
    pub manual: Manual,
    /// Re-prompts and repairs that were needed along the way.
    pub log: Vec<String>,
}

const MANUAL_TITLE: &str = "Manual of Rules";
const MISC_CATEGORY: &str = "Misc";
const MISC_INTRODUCTION: &str =
    "Further rules that do not fit the categories above but are still in effect.";

/// Asks the formulator for a categorized manual, checks that the proposed
/// categories partition the live rules, and renders the final Markdown with
/// the rule bodies spliced from the store.
///
/// A response without a Markdown block earns one re-prompt, then the run
/// fails. A response violating the partition earns one re-prompt with the
/// violation list, then is repaired mechanically (duplicates dropped,
/// missing rules appended under a final category) with the repair logged.
pub fn formulate(
    store: &RuleStore,
    session: &mut ChatSession,
    backend: &mut dyn Backend,
) -> Result<FormulateOutcome, FormulateError> {
    if store.count() == 0 {
        return Err(FormulateError::EmptyStore);
    }
    let mut log = Vec::new();
    let opening = format!(
        "[Current rules]\n{}\n\nPlease write the manual now.",
        store.render_for_prompt(false)
    );

    let response = session.send(backend, opening)?;
    let mut block = match extract_markdown_block(&response) {
        Some(block) => block,
        None => {
            log.push("formulator response had no Markdown block; re-prompted".to_string());
            let retry = session.send(
                backend,
                "Your response must contain the manual within one '```markdown' and '```' block. Please output the manual again.",
            )?;
            extract_markdown_block(&retry).ok_or(FormulateError::Format { attempts: 2 })?
        }
    };

    let mut parsed = parse_manual(&block);
    if let Some(violations) = partition_violations(store, &parsed) {
        log.push(format!("manual categorization violated the partition: {violations}; re-prompted"));
        let retry = session.send(
            backend,
            format!(
                "The manual must place each rule in exactly one category ({violations}). Please output the corrected manual within one '```markdown' and '```' block."
            ),
        )?;
        if let Some(new_block) = extract_markdown_block(&retry) {
            block = new_block;
            parsed = parse_manual(&block);
        }
        if let Some(still) = partition_violations(store, &parsed) {
            repair_partition(store, &mut parsed);
            log.push(format!("manual still violated the partition ({still}); repaired mechanically"));
        }
    }

    let mut manual = parsed;
    manual.rendered = render_markdown(&manual, store);
    Ok(FormulateOutcome { manual, log })
}

/// The first fenced block in the response (the fence may open with
/// "```markdown" or a bare "```").
fn extract_markdown_block(response: &str) -> Option<String> {
    crate::llm::extract_code_block(response)
}

/// Reads the manual structure out of Markdown: an optional "# " title, the
/// overview paragraph, then "## " categories whose introductions run until
/// their first `**rule_N**` line. Fenced code inside the manual is skipped
/// when looking for structure.
pub fn parse_manual(markdown: &str) -> Manual {
    let mut overview_lines: Vec<&str> = Vec::new();
    let mut categories: Vec<ManualCategory> = Vec::new();
    let mut in_fence = false;
    for line in markdown.lines() {
        if line.trim_start().starts_with("```") {
            in_fence = !in_fence;
            continue;
        }
        if in_fence {
            continue;
        }
        if let Some(name) = line.strip_prefix("## ") {
            categories.push(ManualCategory {
                name: name.trim().to_string(),
                introduction: String::new(),
                rule_ids: Vec::new(),
            });
            continue;
        }
        let ids = scan_rule_markers(line);
        match categories.last_mut() {
            None => {
                if !line.starts_with('#') {
                    overview_lines.push(line);
                }
            }
            Some(category) => {
                if !ids.is_empty() {
                    category.rule_ids.extend(ids);
                } else if category.rule_ids.is_empty() {
                    category.introduction.push_str(line);
                    category.introduction.push('\n');
                }
            }
        }
    }
    for category in &mut categories {
        category.introduction = category.introduction.trim().to_string();
    }
    Manual {
        overview: overview_lines.join("\n").trim().to_string(),
        categories,
        rendered: String::new(),
    }
}

/// `**rule_<k>**` markers on one line, in order.
fn scan_rule_markers(line: &str) -> Vec<String> {
    let mut ids = Vec::new();
    let mut rest = line;
    while let Some(at) = rest.find("**rule_") {
        let tail = &rest[at + 2..];
        let digits: String = tail["rule_".len()..]
            .chars()
            .take_while(|c| c.is_ascii_digit())
            .collect();
        let after = &tail["rule_".len() + digits.len()..];
        if !digits.is_empty() && after.starts_with("**") {
            ids.push(format!("rule_{digits}"));
        }
        rest = &rest[at + 2..];
    }
    ids
}

/// `None` when the manual's ids exactly partition the store's live ids;
/// otherwise a human-readable description of what is missing, duplicated, or
/// unknown.
pub fn partition_violations(store: &RuleStore, manual: &Manual) -> Option<String> {
    let live: BTreeSet<String> = store.rules().map(Rule::rule_id).collect();
    let mut seen: BTreeSet<String> = BTreeSet::new();
    let mut duplicated: BTreeSet<String> = BTreeSet::new();
    let mut unknown: BTreeSet<String> = BTreeSet::new();
    for category in &manual.categories {
        for id in &category.rule_ids {
            if !live.contains(id) {
                unknown.insert(id.clone());
            } else if !seen.insert(id.clone()) {
                duplicated.insert(id.clone());
            }
        }
    }
    let missing: Vec<String> = live.difference(&seen).cloned().collect();
    let empty_categories: Vec<&str> = manual
        .categories
        .iter()
        .filter(|c| c.rule_ids.is_empty())
        .map(|c| c.name.as_str())
        .collect();
    let mut problems = Vec::new();
    if !missing.is_empty() {
        problems.push(format!("missing: {}", missing.join(", ")));
    }
    if !duplicated.is_empty() {
        problems.push(format!(
            "in more than one place: {}",
            duplicated.into_iter().collect::<Vec<_>>().join(", ")
        ));
    }
    if !unknown.is_empty() {
        problems.push(format!(
            "not in the rule system: {}",
            unknown.into_iter().collect::<Vec<_>>().join(", ")
        ));
    }
    if !empty_categories.is_empty() {
        problems.push(format!("empty categories: {}", empty_categories.join(", ")));
    }
    if problems.is_empty() {
        None
    } else {
        Some(problems.join("; "))
    }
}

/// Forces the partition to hold: drops ids that are unknown or already
/// placed, drops categories left empty, and appends any missing rules under
/// a final catch-all category.
pub fn repair_partition(store: &RuleStore, manual: &mut Manual) {
    let live: BTreeSet<String> = store.rules().map(Rule::rule_id).collect();
    let mut seen: BTreeSet<String> = BTreeSet::new();
    for category in &mut manual.categories {
        category
            .rule_ids
            .retain(|id| live.contains(id) && seen.insert(id.clone()));
    }
    manual.categories.retain(|c| !c.rule_ids.is_empty());
    let missing: Vec<String> = store
        .rules()
        .map(Rule::rule_id)
        .filter(|id| !seen.contains(id))
        .collect();
    if !missing.is_empty() {
        manual.categories.push(ManualCategory {
            name: MISC_CATEGORY.to_string(),
            introduction: MISC_INTRODUCTION.to_string(),
            rule_ids: missing,
        });
    }
}

/// Deterministic Markdown rendering: fixed title, the overview, then each
/// category as an H2 with its introduction and rule blocks. Rule content and
/// examples come verbatim from the store; validation logs never appear.
pub fn render_markdown(manual: &Manual, store: &RuleStore) -> String {
    let mut out = format!("# {MANUAL_TITLE}\n");
    if !manual.overview.is_empty() {
        out.push_str(&format!("\n{}\n", manual.overview.trim_end()));
    }
    for category in &manual.categories {
        out.push_str(&format!("\n## {}\n", category.name));
        if !category.introduction.is_empty() {
            out.push_str(&format!("\n{}\n", category.introduction.trim_end()));
        }
        out.push('\n');
        for id in &category.rule_ids {
            let Some(rule) = crate::rulestore::parse_rule_id(id).and_then(|k| store.get(k)) else {
                continue;
            };
            out.push_str(&format!(
                "- **{}** ({}): {}\n",
                rule.rule_id(),
                rule.rule_type,
                rule.content.trim_end()
            ));
            if !rule.example.trim().is_empty() {
                out.push_str("\n  Example:\n\n  ```python\n");
                for line in rule.example.trim_end().lines() {
                    out.push_str("  ");
                    out.push_str(line);
                    out.push('\n');
                }
                out.push_str("  ```\n");
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{prompts, ScriptedBackend, ScriptedResponse};
    use crate::rulestore::RuleType;

    fn four_rule_store() -> RuleStore {
        let mut store = RuleStore::new();
        store.seed_rule(
            RuleType::SpecialMechanism,
            "At the initial observation, the agent can only observe receptacles.",
            "",
            "Provided by User.",
        );
        store.seed_rule(
            RuleType::UsefulHelperMethod,
            "Use find_object to locate an object among receptacles.",
            "def find_object(agent, recep_to_check, object_name):\n    pass",
            "Essential helper method provided by User.",
        );
        store.seed_rule(
            RuleType::SuccessProcess,
            "If the task is to put some object on some receptacle, first find it, then place it.",
            "",
            "Provided by User.",
        );
        store.seed_rule(
            RuleType::CorrectedError,
            "When heating an object, the agent must be at the microwave.",
            "agent.heat_with('mug_1', 'microwave_1')",
            "Validated in epoch_3.",
        );
        store
    }

    fn manual_block(body: &str) -> String {
        format!("Some analysis first.\n\n```markdown\n{body}\n```\n")
    }

    fn good_manual_body() -> &'static str {
        "# Manual of Rules\n\nThese rules cover search and appliance use.\n\n## Navigation and Search\n\nFind things before acting on them.\n\n- **rule_0**\n- **rule_1**\n\n## Task Completion\n\nFollow the processes.\n\n- **rule_2**\n- **rule_3**\n"
    }

    #[test]
    fn formulate_parses_categories_and_splices_rule_bodies() {
        let store = four_rule_store();
        let mut backend = ScriptedBackend::from_responses(vec![ScriptedResponse::expecting(
            manual_block(good_manual_body()),
            "Please write the manual now.",
        )]);
        let mut session = ChatSession::new("formulator", prompts::FORMULATOR_SYSTEM);
        let outcome = formulate(&store, &mut session, &mut backend).unwrap();
        assert!(outcome.log.is_empty());
        let manual = &outcome.manual;
        assert_eq!(manual.categories.len(), 2);
        assert_eq!(manual.categories[0].name, "Navigation and Search");
        assert_eq!(manual.categories[0].rule_ids, vec!["rule_0", "rule_1"]);
        for rule in store.rules() {
            assert!(
                manual.rendered.contains(rule.content.trim_end()),
                "rule body must appear verbatim: {}",
                rule.content
            );
        }
        assert!(manual.rendered.contains("find_object(agent"));
        assert!(!manual.rendered.to_lowercase().contains("validat"));
    }

    #[test]
    fn missing_rule_is_reprompted_then_repaired_under_misc() {
        let store = four_rule_store();
        let incomplete = "# Manual\n\nOverview.\n\n## Only Category\n\nIntro.\n\n- **rule_0**\n- **rule_1**\n- **rule_2**\n";
        let mut backend = ScriptedBackend::from_responses(vec![
            ScriptedResponse::plain(manual_block(incomplete)),
            ScriptedResponse::expecting(manual_block(incomplete), "missing: rule_3"),
        ]);
        let mut session = ChatSession::new("formulator", prompts::FORMULATOR_SYSTEM);
        let outcome = formulate(&store, &mut session, &mut backend).unwrap();
        assert_eq!(outcome.log.len(), 2);
        let manual = &outcome.manual;
        let last = manual.categories.last().unwrap();
        assert_eq!(last.name, "Misc");
        assert_eq!(last.rule_ids, vec!["rule_3"]);
        assert!(partition_violations(&store, manual).is_none());
    }

    #[test]
    fn duplicate_placement_keeps_the_first_occurrence_after_repair() {
        let store = four_rule_store();
        let duplicated = "## A\n\nIntro A.\n\n- **rule_0**\n- **rule_1**\n- **rule_2**\n- **rule_3**\n\n## B\n\nIntro B.\n\n- **rule_1**\n";
        let mut backend = ScriptedBackend::from_responses(vec![
            ScriptedResponse::plain(manual_block(duplicated)),
            ScriptedResponse::plain(manual_block(duplicated)),
        ]);
        let mut session = ChatSession::new("formulator", prompts::FORMULATOR_SYSTEM);
        let outcome = formulate(&store, &mut session, &mut backend).unwrap();
        let manual = &outcome.manual;
        // Category B lost its only rule and was dropped.
        assert_eq!(manual.categories.len(), 1);
        assert_eq!(manual.categories[0].rule_ids.len(), 4);
        assert!(partition_violations(&store, manual).is_none());
    }

    #[test]
    fn no_fence_after_reprompt_is_a_hard_error() {
        let store = four_rule_store();
        let mut backend = ScriptedBackend::from_responses(vec![
            ScriptedResponse::plain("no manual here"),
            ScriptedResponse::expecting("still no manual", "must contain the manual"),
        ]);
        let mut session = ChatSession::new("formulator", prompts::FORMULATOR_SYSTEM);
        match formulate(&store, &mut session, &mut backend) {
            Err(FormulateError::Format { attempts: 2 }) => {}
            other => panic!("expected a format error, got {other:?}"),
        }
    }

    #[test]
    fn empty_store_is_rejected() {
        let store = RuleStore::new();
        let mut backend = ScriptedBackend::from_responses(vec![]);
        let mut session = ChatSession::new("formulator", prompts::FORMULATOR_SYSTEM);
        assert!(matches!(
            formulate(&store, &mut session, &mut backend),
            Err(FormulateError::EmptyStore)
        ));
    }

    #[test]
    fn single_rule_store_yields_a_single_category_manual() {
        let mut store = RuleStore::new();
        store.seed_rule(RuleType::SuccessProcess, "Do the thing.", "", "seed");
        let body = "# Manual\n\nOne rule.\n\n## Everything\n\nThe only category.\n\n- **rule_0**\n";
        let mut backend =
            ScriptedBackend::from_responses(vec![ScriptedResponse::plain(manual_block(body))]);
        let mut session = ChatSession::new("formulator", prompts::FORMULATOR_SYSTEM);
        let outcome = formulate(&store, &mut session, &mut backend).unwrap();
        assert_eq!(outcome.manual.categories.len(), 1);
        assert_eq!(outcome.manual.categories[0].rule_ids, vec!["rule_0"]);
    }

    #[test]
    fn rendering_is_idempotent_on_structure() {
        let store = four_rule_store();
        let manual = Manual {
            overview: "These rules cover search and appliance use.".to_string(),
            categories: vec![
                ManualCategory {
                    name: "Navigation and Search".to_string(),
                    introduction: "Find things before acting on them.".to_string(),
                    rule_ids: vec!["rule_0".to_string(), "rule_1".to_string()],
                },
                ManualCategory {
                    name: "Task Completion".to_string(),
                    introduction: "Follow the processes.".to_string(),
                    rule_ids: vec!["rule_2".to_string(), "rule_3".to_string()],
                },
            ],
            rendered: String::new(),
        };
        let rendered = render_markdown(&manual, &store);
        let reparsed = parse_manual(&rendered);
        let rerendered = render_markdown(&reparsed, &store);
        assert_eq!(rendered, rerendered);
        assert_eq!(reparsed.overview, manual.overview);
        assert_eq!(reparsed.categories.len(), 2);
        assert_eq!(reparsed.categories[1].rule_ids, manual.categories[1].rule_ids);
    }

    #[test]
    fn code_fences_inside_the_manual_do_not_confuse_the_parser() {
        let text = "# T\n\nOverview.\n\n## Cat\n\nIntro.\n\n- **rule_0**\n\n  ```python\n  ## not a heading\n  x = \"**rule_9**\"\n  ```\n";
        let manual = parse_manual(text);
        assert_eq!(manual.categories.len(), 1);
        assert_eq!(manual.categories[0].rule_ids, vec!["rule_0"]);
    }
}
