//! The rule-building agent: case classification, case-conditioned rule
//! management, and the consolidator that merges or deletes rules once the
//! store exceeds capacity.

use crate::llm::{parse_rule_ops, prompts, Backend, BackendError, ChatSession};
use crate::planner::{EpisodeOutcome, TrajectoryRecord};
use crate::rulestore::{
    parse_rule_id, OpOutcome, OpPolicy, RuleOp, RuleStore, RuleType, TrajectoryArchive,
};
use serde::{Deserialize, Serialize};
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Case {
    Case1DirectSuccess,
    Case2IndirectSuccessImperfectRules,
    Case3IndirectSuccessImperfectAgent,
    Case4FailureImperfectRules,
    Case5FailureImperfectAgent,
}

impl Case {
    pub fn index(&self) -> u8 {
        match self {
            Case::Case1DirectSuccess => 1,
            Case::Case2IndirectSuccessImperfectRules => 2,
            Case::Case3IndirectSuccessImperfectAgent => 3,
            Case::Case4FailureImperfectRules => 4,
            Case::Case5FailureImperfectAgent => 5,
        }
    }
}

impl fmt::Display for Case {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Case {}", self.index())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Fault {
    ImperfectRules,
    ImperfectAgent,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseLabel {
    pub case: Case,
    pub fault_rationale: String,
}

/// The pure five-row mapping from outcome and fault attribution to the case.
pub fn case_for(outcome: EpisodeOutcome, fault: Fault) -> Case {
    match (outcome, fault) {
        (EpisodeOutcome::DirectSuccess, _) => Case::Case1DirectSuccess,
        (EpisodeOutcome::IndirectSuccess, Fault::ImperfectRules) => {
            Case::Case2IndirectSuccessImperfectRules
        }
        (EpisodeOutcome::IndirectSuccess, Fault::ImperfectAgent) => {
            Case::Case3IndirectSuccessImperfectAgent
        }
        (EpisodeOutcome::Failure, Fault::ImperfectRules) => Case::Case4FailureImperfectRules,
        (EpisodeOutcome::Failure, Fault::ImperfectAgent) => Case::Case5FailureImperfectAgent,
    }
}

/// Scans a classification response for the concluding fault token; the last
/// mention wins, since the instructions say to conclude with it. Returns
/// `None` when neither token appears.
pub fn scan_fault_token(response: &str) -> Option<Fault> {
    let lower = response.to_lowercase();
    let rules_at = lower.rfind("imperfect rules");
    let agent_at = lower.rfind("imperfect agent");
    match (rules_at, agent_at) {
        (Some(r), Some(a)) => Some(if r > a { Fault::ImperfectRules } else { Fault::ImperfectAgent }),
        (Some(_), None) => Some(Fault::ImperfectRules),
        (None, Some(_)) => Some(Fault::ImperfectAgent),
        (None, None) => None,
    }
}

fn trajectory_block(record: &TrajectoryRecord) -> String {
    format!(
        "[The current trajectory of {}]\n{}",
        record.episode_id,
        record.render_for_builder()
    )
}

/// Classifies the episode. Direct successes short-circuit to Case 1 without
/// an LLM call; otherwise the classify prompt is sent with the trajectory and
/// the response is scanned for the fault token. Returned log lines record
/// ambiguous responses that fell back to Imperfect Rules.
pub fn classify_case(
    record: &TrajectoryRecord,
    session: &mut ChatSession,
    backend: &mut dyn Backend,
) -> Result<(CaseLabel, Vec<String>), BackendError> {
    if record.outcome == EpisodeOutcome::DirectSuccess {
        return Ok((
            CaseLabel {
                case: Case::Case1DirectSuccess,
                fault_rationale: String::new(),
            },
            Vec::new(),
        ));
    }
    let message = format!("{}\n{}", trajectory_block(record), prompts::BUILDER_CLASSIFY);
    let response = session.send(backend, message)?;
    let mut log = Vec::new();
    let fault = match scan_fault_token(&response) {
        Some(fault) => fault,
        None => {
            log.push(format!(
                "{}: classification response carries neither *Imperfect Rules* nor *Imperfect Agent*; defaulting to Imperfect Rules",
                record.episode_id
            ));
            Fault::ImperfectRules
        }
    };
    Ok((
        CaseLabel {
            case: case_for(record.outcome, fault),
            fault_rationale: response,
        },
        log,
    ))
}

/// What a management or consolidation session did to the store.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManageOutcome {
    pub ledger: Vec<OpOutcome>,
    pub diagnostics: Vec<String>,
    pub log: Vec<String>,
    pub exchanges: u32,
    /// The agent never called stop_generating; the loop was cut off.
    pub forced_stop: bool,
}

fn policy_for_case(case: Case, allow_delete: bool) -> OpPolicy {
    let (forbidden, context) = match case {
        Case::Case1DirectSuccess
        | Case::Case2IndirectSuccessImperfectRules
        | Case::Case3IndirectSuccessImperfectAgent => (
            vec![RuleType::UnsolvedError],
            format!("{case} (successful episodes cannot record unresolved errors)"),
        ),
        Case::Case4FailureImperfectRules => (
            vec![RuleType::SuccessProcess, RuleType::UsefulHelperMethod],
            format!("{case} (a failed task cannot contribute success rules)"),
        ),
        Case::Case5FailureImperfectAgent => (Vec::new(), case.to_string()),
    };
    OpPolicy {
        forbidden_write_types: forbidden,
        allow_delete,
        context,
    }
}

fn op_result_line(outcome: &OpOutcome) -> String {
    use crate::rulestore::OpStatus;
    let name = outcome.op.op_name();
    match &outcome.status {
        OpStatus::Applied { rule_id: Some(id) } => format!("- {name} -> applied ({id})"),
        OpStatus::Applied { rule_id: None } => format!("- {name} -> ok"),
        OpStatus::Rejected { reason } => format!("- {name} -> rejected: {reason}"),
    }
}

const CONTINUE_INSTRUCTION: &str = "If you have more rule_system calls to make, write them within \"```python\" and \"```\"; otherwise call rule_system.stop_generating().";

/// Runs the case-conditioned rule management loop: base instructions plus
/// the case prompt, then up to `op_budget` exchanges of rule ops, each
/// answered with per-op results, until the agent calls stop_generating.
///
/// `archive` answers any get_trajectory calls inline; pass `None` to report
/// the archive as unavailable.
#[allow(clippy::too_many_arguments)]
pub fn manage_rules(
    record: &TrajectoryRecord,
    case: &CaseLabel,
    store: &mut RuleStore,
    archive: Option<&TrajectoryArchive>,
    session: &mut ChatSession,
    backend: &mut dyn Backend,
    n_max: usize,
    op_budget: u32,
    allow_delete: bool,
) -> Result<ManageOutcome, BackendError> {
    let policy = policy_for_case(case.case, allow_delete);
    let mut message = String::new();
    // Case 1 skips classification, so the trajectory is not in the session
    // yet and must open the management message.
    if session.exchange_count() == 0 {
        message.push_str(&trajectory_block(record));
        message.push('\n');
    }
    message.push_str(&format!(
        "[Current rules]\n{}\n\nThe trajectory is identified as {}. {}\n\n{}",
        store.render_for_prompt(true),
        case.case,
        prompts::builder_base(n_max),
        prompts::builder_case(case.case.index()),
    ));
    run_op_loop(
        &record.episode_id,
        message,
        store,
        archive,
        session,
        backend,
        op_budget,
        &policy,
        false,
    )
}

/// Consolidation pass: presented with the full rule rendering (validation
/// logs included), the agent may update, delete, or fetch trajectories until
/// it stops. If the store is still over capacity afterwards, a deterministic
/// fallback deletes expendable rules (oldest Unsolved Errors, then oldest
/// phenomena/mechanisms, and so on) until the store fits.
pub fn consolidate(
    label: &str,
    store: &mut RuleStore,
    archive: &TrajectoryArchive,
    session: &mut ChatSession,
    backend: &mut dyn Backend,
    n_max: usize,
    op_budget: u32,
) -> Result<ManageOutcome, BackendError> {
    let policy = OpPolicy {
        // The consolidator merges and prunes; it may not mint new rules.
        forbidden_write_types: RuleType::ALL.to_vec(),
        allow_delete: true,
        context: "consolidation (update_rule, delete_rule, and get_interactions only)"
            .to_string(),
    };
    let message = format!(
        "The rule system has grown past {n_max} rules. Here are the current rules:\n\n[Current rules]\n{}\n\nPlease merge or delete rules until at most {n_max} remain.",
        store.render_for_prompt(true)
    );
    let mut outcome = run_op_loop(
        label,
        message,
        store,
        Some(archive),
        session,
        backend,
        op_budget,
        &policy,
        true,
    )?;
    if store.over_capacity(n_max) {
        let deleted = fallback_deletions(label, store, n_max);
        outcome.log.push(format!(
            "{label}: still over capacity after consolidation; fallback deleted [{}]",
            deleted.join(", ")
        ));
        outcome.forced_stop = true;
    }
    Ok(outcome)
}

/// Deletion order when consolidation fails to bring the store to capacity:
/// least-load-bearing types first, oldest rule first within a type.
const FALLBACK_ORDER: [RuleType; 6] = [
    RuleType::UnsolvedError,
    RuleType::SpecialPhenomenon,
    RuleType::SpecialMechanism,
    RuleType::CorrectedError,
    RuleType::UsefulHelperMethod,
    RuleType::SuccessProcess,
];

fn fallback_deletions(label: &str, store: &mut RuleStore, n_max: usize) -> Vec<String> {
    let policy = OpPolicy {
        forbidden_write_types: Vec::new(),
        allow_delete: true,
        context: "consolidation fallback".to_string(),
    };
    let mut deleted = Vec::new();
    for rule_type in FALLBACK_ORDER {
        while store.count() > n_max {
            // BTreeMap iteration is id-ascending, so the first match is the
            // oldest rule of the type.
            let Some(oldest) = store
                .rules()
                .find(|rule| rule.rule_type == rule_type)
                .map(|rule| rule.rule_id())
            else {
                break;
            };
            store.apply_op(
                label,
                &RuleOp::DeleteRule { rule_id: oldest.clone() },
                &policy,
            );
            deleted.push(oldest);
        }
        if store.count() <= n_max {
            break;
        }
    }
    deleted
}

/// Rejects deletes that would complete a merge of two Success Process (or
/// two Useful Helper Method) rules: an exchange that updates one rule of the
/// type may not also delete another rule of that same type.
fn merge_guard_reason(store: &RuleStore, ops: &[RuleOp], delete_id: &str) -> Option<String> {
    let protected = [RuleType::SuccessProcess, RuleType::UsefulHelperMethod];
    let deleted_type = parse_rule_id(delete_id)
        .and_then(|id| store.get(id))
        .map(|rule| rule.rule_type)?;
    if !protected.contains(&deleted_type) {
        return None;
    }
    let updates_same_type = ops.iter().any(|op| match op {
        RuleOp::UpdateRule { rule_id, .. } => {
            rule_id != delete_id
                && parse_rule_id(rule_id)
                    .and_then(|id| store.get(id))
                    .is_some_and(|rule| rule.rule_type == deleted_type)
        }
        _ => false,
    });
    updates_same_type.then(|| {
        format!(
            "cannot merge two rules of type \"{deleted_type}\": this exchange updates another \"{deleted_type}\" rule, so deleting {delete_id} would complete a forbidden merge"
        )
    })
}

#[allow(clippy::too_many_arguments)]
fn run_op_loop(
    episode_id: &str,
    opening_message: String,
    store: &mut RuleStore,
    archive: Option<&TrajectoryArchive>,
    session: &mut ChatSession,
    backend: &mut dyn Backend,
    op_budget: u32,
    policy: &OpPolicy,
    guard_merges: bool,
) -> Result<ManageOutcome, BackendError> {
    let mut outcome = ManageOutcome {
        ledger: Vec::new(),
        diagnostics: Vec::new(),
        log: Vec::new(),
        exchanges: 0,
        forced_stop: false,
    };
    let mut message = opening_message;
    let mut stopped = false;
    while !stopped && outcome.exchanges < op_budget {
        let response = session.send(backend, message.clone())?;
        outcome.exchanges += 1;
        let parsed = parse_rule_ops(&response);
        outcome.diagnostics.extend(parsed.diagnostics);

        let mut result_lines = Vec::new();
        let mut trajectory_requests: Vec<String> = Vec::new();
        for op in &parsed.ops {
            if matches!(op, RuleOp::StopGenerating) {
                outcome
                    .ledger
                    .push(store.apply_op(episode_id, op, policy));
                stopped = true;
                break;
            }
            let applied = if guard_merges {
                if let RuleOp::DeleteRule { rule_id } = op {
                    match merge_guard_reason(store, &parsed.ops, rule_id) {
                        Some(reason) => store.reject_op(episode_id, op, &reason),
                        None => store.apply_op(episode_id, op, policy),
                    }
                } else {
                    store.apply_op(episode_id, op, policy)
                }
            } else {
                store.apply_op(episode_id, op, policy)
            };
            if let RuleOp::GetTrajectory { episode_ids } = op {
                trajectory_requests.extend(episode_ids.iter().cloned());
            }
            result_lines.push(op_result_line(&applied));
            outcome.ledger.push(applied);
        }
        if stopped {
            break;
        }

        let mut next = String::new();
        if !trajectory_requests.is_empty() {
            match archive {
                Some(archive) => {
                    next.push_str(&archive.render_request(&trajectory_requests));
                    next.push('\n');
                }
                None => next.push_str("(The interaction archive is not available here.)\n"),
            }
        }
        if result_lines.is_empty() {
            next.push_str("No rule_system calls were found in your response.\n");
        } else {
            next.push_str("Results of your rule_system calls:\n");
            next.push_str(&result_lines.join("\n"));
            next.push('\n');
        }
        next.push_str(CONTINUE_INSTRUCTION);
        message = next;
    }
    if !stopped {
        outcome.forced_stop = true;
        outcome.log.push(format!(
            "{episode_id}: op budget of {op_budget} exchanges spent without stop_generating; forcing stop"
        ));
    }
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{ScriptedBackend, ScriptedResponse};
    use crate::planner::{Cycle, EpisodeOutcome};
    use crate::rulestore::OpStatus;
    use crate::textworld::{sample_tasks, TaskType};

    fn record(outcome: EpisodeOutcome) -> TrajectoryRecord {
        let task = sample_tasks(TaskType::Heat, 1, 3).remove(0);
        TrajectoryRecord {
            episode_id: "epoch_3".to_string(),
            task,
            initial_observation: "You are in the middle of a room.".to_string(),
            cycles: vec![Cycle {
                turn: crate::llm::PlannerTurn {
                    analysis: "a".into(),
                    related_rules: vec![],
                    overall_plan: "p".into(),
                    code: "pass\n".into(),
                },
                response_raw: "resp".to_string(),
                feedback: "obs_1: ...".to_string(),
                error: outcome == EpisodeOutcome::IndirectSuccess,
            }],
            conclusion: "done".to_string(),
            outcome,
            reward: if outcome == EpisodeOutcome::Failure { -1 } else { 1 },
            actions_taken: 1,
        }
    }

    fn builder_session() -> ChatSession {
        ChatSession::new("builder/epoch_3", prompts::BUILDER_SYSTEM)
    }

    #[test]
    fn direct_success_classifies_without_an_llm_call() {
        let mut backend = ScriptedBackend::from_responses(vec![]);
        let mut session = builder_session();
        let (label, log) =
            classify_case(&record(EpisodeOutcome::DirectSuccess), &mut session, &mut backend)
                .unwrap();
        assert_eq!(label.case, Case::Case1DirectSuccess);
        assert!(log.is_empty());
        assert_eq!(session.exchange_count(), 0);
    }

    #[test]
    fn fault_token_scan_takes_the_last_mention() {
        assert_eq!(
            scan_fault_token("Maybe *Imperfect Agent*... no: *Imperfect Rules*."),
            Some(Fault::ImperfectRules)
        );
        assert_eq!(
            scan_fault_token("the conclusion is that the fault stems from *Imperfect Agent*."),
            Some(Fault::ImperfectAgent)
        );
        assert_eq!(scan_fault_token("inconclusive"), None);
    }

    #[test]
    fn ambiguous_classification_defaults_to_imperfect_rules_and_logs() {
        let mut backend =
            ScriptedBackend::from_responses(vec![ScriptedResponse::plain("no verdict here")]);
        let mut session = builder_session();
        let (label, log) =
            classify_case(&record(EpisodeOutcome::Failure), &mut session, &mut backend).unwrap();
        assert_eq!(label.case, Case::Case4FailureImperfectRules);
        assert_eq!(log.len(), 1);
        assert!(log[0].contains("defaulting to Imperfect Rules"));
    }

    #[test]
    fn case_mapping_covers_the_five_row_table() {
        use EpisodeOutcome::*;
        use Fault::*;
        assert_eq!(case_for(DirectSuccess, ImperfectRules), Case::Case1DirectSuccess);
        assert_eq!(case_for(DirectSuccess, ImperfectAgent), Case::Case1DirectSuccess);
        assert_eq!(
            case_for(IndirectSuccess, ImperfectRules),
            Case::Case2IndirectSuccessImperfectRules
        );
        assert_eq!(
            case_for(IndirectSuccess, ImperfectAgent),
            Case::Case3IndirectSuccessImperfectAgent
        );
        assert_eq!(case_for(Failure, ImperfectRules), Case::Case4FailureImperfectRules);
        assert_eq!(case_for(Failure, ImperfectAgent), Case::Case5FailureImperfectAgent);
    }

    #[test]
    fn case4_rejects_success_writes_but_accepts_unsolved_error() {
        let mut store = RuleStore::new();
        let mut backend = ScriptedBackend::from_responses(vec![ScriptedResponse::plain(
            "```python\nrule_system.write_rule(rule=\"If the task is to heat, microwave it.\", type=\"Success Process\", example=\"\", validation_record=\"epoch_3\")\nrule_system.write_rule(rule=\"When heating fails at the shelf, the agent must stand at the microwave.\", type=\"Unresolved Error\", example=\"\", validation_record=\"epoch_3\")\nrule_system.stop_generating()\n```",
        )]);
        let mut session = builder_session();
        let label = CaseLabel {
            case: Case::Case4FailureImperfectRules,
            fault_rationale: "*Imperfect Rules*".to_string(),
        };
        let rec = record(EpisodeOutcome::Failure);
        let outcome = manage_rules(
            &rec, &label, &mut store, None, &mut session, &mut backend, 12, 5, false,
        )
        .unwrap();
        assert_eq!(outcome.ledger.len(), 3);
        assert!(matches!(outcome.ledger[0].status, OpStatus::Rejected { .. }));
        assert!(outcome.ledger[1].status.is_applied());
        assert!(!outcome.forced_stop);
        assert_eq!(store.count(), 1);
        assert_eq!(store.rules().next().unwrap().rule_type, RuleType::UnsolvedError);
    }

    #[test]
    fn success_cases_reject_unsolved_error_writes() {
        let mut store = RuleStore::new();
        let mut backend = ScriptedBackend::from_responses(vec![ScriptedResponse::plain(
            "```python\nrule_system.write_rule(rule=\"Something unresolved.\", type=\"Unresolved Error\", example=\"\", validation_record=\"epoch_3\")\nrule_system.stop_generating()\n```",
        )]);
        let mut session = builder_session();
        let label = CaseLabel {
            case: Case::Case2IndirectSuccessImperfectRules,
            fault_rationale: "*Imperfect Rules*".to_string(),
        };
        let rec = record(EpisodeOutcome::IndirectSuccess);
        let outcome = manage_rules(
            &rec, &label, &mut store, None, &mut session, &mut backend, 12, 5, false,
        )
        .unwrap();
        assert!(matches!(outcome.ledger[0].status, OpStatus::Rejected { .. }));
        assert_eq!(store.count(), 0);
    }

    #[test]
    fn budget_exhaustion_forces_a_logged_stop() {
        let mut store = RuleStore::new();
        let endless = ScriptedResponse::plain(
            "```python\nrule_system.write_rule(rule=\"When heating, go to the microwave first.\", type=\"Corrected Error\", example=\"\", validation_record=\"epoch_3\")\n```",
        );
        let mut backend = ScriptedBackend::from_responses(vec![
            endless.clone(),
            endless.clone(),
            endless.clone(),
        ]);
        let mut session = builder_session();
        let label = CaseLabel {
            case: Case::Case2IndirectSuccessImperfectRules,
            fault_rationale: "*Imperfect Rules*".to_string(),
        };
        let rec = record(EpisodeOutcome::IndirectSuccess);
        let outcome = manage_rules(
            &rec, &label, &mut store, None, &mut session, &mut backend, 12, 3, false,
        )
        .unwrap();
        assert!(outcome.forced_stop);
        assert_eq!(outcome.exchanges, 3);
        assert_eq!(store.count(), 3);
        assert!(outcome.log[0].contains("forcing stop"));
    }

    fn seeded_store(counts: &[(RuleType, usize)]) -> RuleStore {
        let mut store = RuleStore::new();
        for (rule_type, n) in counts {
            for i in 0..*n {
                store.seed_rule(
                    *rule_type,
                    &format!("{rule_type} rule {i}"),
                    "",
                    "seeded for test",
                );
            }
        }
        store
    }

    #[test]
    fn consolidation_answers_get_trajectory_inline_and_reaches_capacity() {
        let mut store = seeded_store(&[
            (RuleType::UnsolvedError, 3),
            (RuleType::CorrectedError, 2),
            (RuleType::SuccessProcess, 2),
        ]);
        let mut archive = TrajectoryArchive::default();
        archive.insert("epoch_1", "[Interaction history of epoch_1]\nagent did things".to_string());
        let mut backend = ScriptedBackend::from_responses(vec![
            ScriptedResponse::plain("```python\nrule_system.get_interactions(\"epoch_1\")\n```"),
            ScriptedResponse::expecting(
                "```python\nrule_system.update_rule(\"rule_3\", rule=\"Merged corrected errors.\")\nrule_system.delete_rule(\"rule_4\")\nrule_system.delete_rule(\"rule_0\")\nrule_system.stop_generating()\n```",
                "agent did things",
            ),
        ]);
        let mut session = ChatSession::new("consolidation_0", prompts::consolidator_system(5));
        let outcome = consolidate(
            "consolidation_0",
            &mut store,
            &archive,
            &mut session,
            &mut backend,
            5,
            5,
        )
        .unwrap();
        assert_eq!(store.count(), 5);
        assert!(!outcome.forced_stop);
        assert!(outcome.ledger.iter().all(|o| o.status.is_applied()));
        assert!(store.get(4).is_none());
        assert!(store.get(3).unwrap().content.contains("Merged"));
    }

    #[test]
    fn consolidator_cannot_write_new_rules() {
        let mut store = seeded_store(&[(RuleType::CorrectedError, 3)]);
        let mut backend = ScriptedBackend::from_responses(vec![ScriptedResponse::plain(
            "```python\nrule_system.write_rule(rule=\"A brand new rule.\", type=\"Success Process\")\nrule_system.delete_rule(\"rule_0\")\nrule_system.delete_rule(\"rule_1\")\nrule_system.stop_generating()\n```",
        )]);
        let mut session = ChatSession::new("consolidation_0", prompts::consolidator_system(2));
        let outcome = consolidate(
            "consolidation_0",
            &mut store,
            &TrajectoryArchive::default(),
            &mut session,
            &mut backend,
            2,
            5,
        )
        .unwrap();
        assert!(matches!(outcome.ledger[0].status, OpStatus::Rejected { .. }));
        assert_eq!(store.count(), 1);
    }

    #[test]
    fn merge_of_two_success_process_rules_is_rejected() {
        let mut store = seeded_store(&[(RuleType::SuccessProcess, 2), (RuleType::CorrectedError, 2)]);
        let mut backend = ScriptedBackend::from_responses(vec![ScriptedResponse::plain(
            "```python\nrule_system.update_rule(\"rule_0\", rule=\"Combined success process.\")\nrule_system.delete_rule(\"rule_1\")\nrule_system.stop_generating()\n```",
        )]);
        let mut session = ChatSession::new("consolidation_0", prompts::consolidator_system(3));
        let outcome = consolidate(
            "consolidation_0",
            &mut store,
            &TrajectoryArchive::default(),
            &mut session,
            &mut backend,
            3,
            5,
        )
        .unwrap();
        let delete = outcome
            .ledger
            .iter()
            .find(|o| matches!(o.op, RuleOp::DeleteRule { .. }))
            .unwrap();
        match &delete.status {
            OpStatus::Rejected { reason } => {
                assert!(reason.contains("cannot merge two rules of type \"Success Process\""))
            }
            other => panic!("expected the merge delete to be rejected, got {other:?}"),
        }
        // rule_1 survives; the fallback prunes the corrected errors instead.
        assert!(store.get(1).is_some());
        assert!(store.count() <= 3);
    }

    #[test]
    fn deleting_a_success_process_without_a_merge_is_allowed() {
        let mut store = seeded_store(&[(RuleType::SuccessProcess, 2)]);
        let mut backend = ScriptedBackend::from_responses(vec![ScriptedResponse::plain(
            "```python\nrule_system.delete_rule(\"rule_1\")\nrule_system.stop_generating()\n```",
        )]);
        let mut session = ChatSession::new("consolidation_0", prompts::consolidator_system(1));
        let outcome = consolidate(
            "consolidation_0",
            &mut store,
            &TrajectoryArchive::default(),
            &mut session,
            &mut backend,
            1,
            5,
        )
        .unwrap();
        assert!(outcome.ledger.iter().all(|o| o.status.is_applied()));
        assert_eq!(store.count(), 1);
    }

    #[test]
    fn fallback_deletes_oldest_unsolved_errors_first() {
        let mut store = seeded_store(&[
            (RuleType::SuccessProcess, 4),
            (RuleType::UnsolvedError, 3),
            (RuleType::SpecialPhenomenon, 2),
        ]);
        // The scripted consolidator stops immediately without fixing anything.
        let mut backend = ScriptedBackend::from_responses(vec![ScriptedResponse::plain(
            "```python\nrule_system.stop_generating()\n```",
        )]);
        let mut session = ChatSession::new("consolidation_0", prompts::consolidator_system(6));
        let outcome = consolidate(
            "consolidation_0",
            &mut store,
            &TrajectoryArchive::default(),
            &mut session,
            &mut backend,
            6,
            5,
        )
        .unwrap();
        assert_eq!(store.count(), 6);
        assert!(outcome.forced_stop);
        // All three unsolved errors (ids 4..6) went; the phenomena and
        // success processes survive.
        assert!(store.rules().all(|r| r.rule_type != RuleType::UnsolvedError));
        assert_eq!(
            store.rules().filter(|r| r.rule_type == RuleType::SuccessProcess).count(),
            4
        );
    }

    #[test]
    fn replaying_the_ledger_reproduces_the_store() {
        let base = seeded_store(&[(RuleType::SuccessProcess, 1)]);
        let mut store = base.clone();
        let mut backend = ScriptedBackend::from_responses(vec![ScriptedResponse::plain(
            "```python\nrule_system.update_rule(\"rule_0\", rule=\"Updated process.\")\nrule_system.write_rule(rule=\"Heat at the microwave, not the shelf.\", type=\"Corrected Error\", example=\"agent.heat_with('mug_1', 'microwave_1')\", validation_record=\"epoch_3\")\nrule_system.stop_generating()\n```",
        )]);
        let mut session = builder_session();
        let label = CaseLabel {
            case: Case::Case2IndirectSuccessImperfectRules,
            fault_rationale: "*Imperfect Rules*".to_string(),
        };
        let rec = record(EpisodeOutcome::IndirectSuccess);
        let outcome = manage_rules(
            &rec, &label, &mut store, None, &mut session, &mut backend, 12, 5, false,
        )
        .unwrap();
        let replayed = crate::rulestore::replay_ledger(&base, &outcome.ledger);
        assert_eq!(replayed.rules_snapshot(), store.rules_snapshot());
    }
}
