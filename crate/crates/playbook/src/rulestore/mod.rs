//! The persistent rule system the builder maintains.
//!
//! Rules have four attributes (type, content, example, validation log) and a
//! `rule_<k>` id that is assigned sequentially and never reused, even after
//! deletion. All mutation flows through [`RuleOp`]s so that every accepted
//! *and* rejected operation lands in an audit ledger with its reason.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;

/// The six rule categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RuleType {
    SpecialPhenomenon,
    SpecialMechanism,
    UsefulHelperMethod,
    SuccessProcess,
    CorrectedError,
    UnsolvedError,
}

impl RuleType {
    pub const ALL: [RuleType; 6] = [
        RuleType::SpecialPhenomenon,
        RuleType::SpecialMechanism,
        RuleType::UsefulHelperMethod,
        RuleType::SuccessProcess,
        RuleType::CorrectedError,
        RuleType::UnsolvedError,
    ];

    pub fn display_name(&self) -> &'static str {
        match self {
            RuleType::SpecialPhenomenon => "Special Phenomenon",
            RuleType::SpecialMechanism => "Special Mechanism",
            RuleType::UsefulHelperMethod => "Useful Helper Method",
            RuleType::SuccessProcess => "Success Process",
            RuleType::CorrectedError => "Corrected Error",
            RuleType::UnsolvedError => "Unsolved Error",
        }
    }

    /// Lenient parse of the type strings agents actually write: casing and
    /// the "Unresolved Error" / plural "Phenomena" / merged
    /// "Special Phenomena/Mechanism" variants are all accepted.
    pub fn parse(text: &str) -> Option<RuleType> {
        let lowered = text.trim().to_lowercase();
        let has = |needle: &str| lowered.contains(needle);
        if has("phenomen") {
            return Some(RuleType::SpecialPhenomenon);
        }
        if has("mechanism") {
            return Some(RuleType::SpecialMechanism);
        }
        if has("helper") {
            return Some(RuleType::UsefulHelperMethod);
        }
        if has("success") {
            return Some(RuleType::SuccessProcess);
        }
        if has("corrected") {
            return Some(RuleType::CorrectedError);
        }
        if has("unsolved") || has("unresolved") {
            return Some(RuleType::UnsolvedError);
        }
        None
    }
}

impl fmt::Display for RuleType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.display_name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rule {
    /// Numeric part of the `rule_<k>` id.
    pub id: u32,
    pub rule_type: RuleType,
    /// The rule statement itself; by convention it begins with its scope
    /// ("If the task is to ...", "When the agent ...").
    pub content: String,
    pub example: String,
    pub validation_log: String,
}

impl Rule {
    pub fn rule_id(&self) -> String {
        format!("rule_{}", self.id)
    }
}

/// `"rule_7"` -> `7`.
pub fn parse_rule_id(text: &str) -> Option<u32> {
    text.trim().strip_prefix("rule_")?.parse().ok()
}

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

/// One operation an agent asked for. Field payloads stay raw strings here —
/// validation (unknown ids, bad type names) happens at apply time so that a
/// bad request becomes a *rejected op with a reason*, not a parse failure.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum RuleOp {
    WriteRule {
        rule_type: String,
        content: String,
        example: String,
        validation_log: String,
    },
    UpdateRule {
        rule_id: String,
        rule_type: Option<String>,
        content: Option<String>,
        example: Option<String>,
        validation_log: Option<String>,
    },
    DeleteRule {
        rule_id: String,
    },
    /// Request to see archived trajectories; the caller resolves it against
    /// the archive and feeds the rendering back into the conversation.
    GetTrajectory {
        episode_ids: Vec<String>,
    },
    StopGenerating,
}

impl RuleOp {
    pub fn op_name(&self) -> &'static str {
        match self {
            RuleOp::WriteRule { .. } => "write_rule",
            RuleOp::UpdateRule { .. } => "update_rule",
            RuleOp::DeleteRule { .. } => "delete_rule",
            RuleOp::GetTrajectory { .. } => "get_trajectory",
            RuleOp::StopGenerating => "stop_generating",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum OpStatus {
    /// Applied; for writes carries the id that was assigned.
    Applied { rule_id: Option<String> },
    Rejected { reason: String },
}

impl OpStatus {
    pub fn is_applied(&self) -> bool {
        matches!(self, OpStatus::Applied { .. })
    }
}

/// Ledger entry: what was asked, what happened, and under which episode.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpOutcome {
    pub episode_id: String,
    pub op: RuleOp,
    pub status: OpStatus,
}

/// Mechanical guard rails for one batch of ops. The builder derives these
/// from the active case; the consolidator uses its own.
#[derive(Debug, Clone, Default)]
pub struct OpPolicy {
    /// Types that may not be *written* under the current case (updates of
    /// existing rules of these types stay legal).
    pub forbidden_write_types: Vec<RuleType>,
    pub allow_delete: bool,
    /// Human-readable tag for rejection reasons, e.g. "Case 4".
    pub context: String,
}

// ---------------------------------------------------------------------------
// Store
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleStore {
    rules: BTreeMap<u32, Rule>,
    next_id: u32,
    audit: Vec<OpOutcome>,
}

impl RuleStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn count(&self) -> usize {
        self.rules.len()
    }

    /// Strictly more rules than the cap: a store sitting exactly at `n_max`
    /// is *not* over capacity.
    pub fn over_capacity(&self, n_max: usize) -> bool {
        self.rules.len() > n_max
    }

    pub fn get(&self, id: u32) -> Option<&Rule> {
        self.rules.get(&id)
    }

    /// Rules in id order.
    pub fn rules(&self) -> impl Iterator<Item = &Rule> {
        self.rules.values()
    }

    pub fn audit(&self) -> &[OpOutcome] {
        &self.audit
    }

    /// Directly seeds a rule (used for the initial fixture); still assigns
    /// ids sequentially.
    pub fn seed_rule(
        &mut self,
        rule_type: RuleType,
        content: &str,
        example: &str,
        validation_log: &str,
    ) -> u32 {
        let id = self.next_id;
        self.next_id += 1;
        self.rules.insert(
            id,
            Rule {
                id,
                rule_type,
                content: content.to_string(),
                example: example.to_string(),
                validation_log: validation_log.to_string(),
            },
        );
        id
    }

    /// Applies one op under a policy, recording the outcome in the audit
    /// ledger. `GetTrajectory` and `StopGenerating` are accepted untouched —
    /// they do not mutate the store.
    pub fn apply_op(&mut self, episode_id: &str, op: &RuleOp, policy: &OpPolicy) -> OpOutcome {
        let status = self.try_apply(op, policy);
        let outcome = OpOutcome {
            episode_id: episode_id.to_string(),
            op: op.clone(),
            status,
        };
        self.audit.push(outcome.clone());
        outcome
    }

    /// Records an op as rejected without attempting it, for constraints
    /// enforced by the calling agent rather than the store (e.g. the
    /// consolidator's merge guard).
    pub fn reject_op(&mut self, episode_id: &str, op: &RuleOp, reason: &str) -> OpOutcome {
        let outcome = OpOutcome {
            episode_id: episode_id.to_string(),
            op: op.clone(),
            status: OpStatus::Rejected { reason: reason.to_string() },
        };
        self.audit.push(outcome.clone());
        outcome
    }

    fn try_apply(&mut self, op: &RuleOp, policy: &OpPolicy) -> OpStatus {
        let reject = |reason: String| OpStatus::Rejected { reason };
        match op {
            RuleOp::WriteRule {
                rule_type,
                content,
                example,
                validation_log,
            } => {
                let Some(parsed) = RuleType::parse(rule_type) else {
                    return reject(format!("unknown rule type {rule_type:?}"));
                };
                if policy.forbidden_write_types.contains(&parsed) {
                    return reject(format!(
                        "writing a \"{parsed}\" rule is not allowed under {}",
                        policy.context
                    ));
                }
                if content.trim().is_empty() {
                    return reject("rule content may not be empty".to_string());
                }
                let id = self.next_id;
                self.next_id += 1;
                self.rules.insert(
                    id,
                    Rule {
                        id,
                        rule_type: parsed,
                        content: content.clone(),
                        example: example.clone(),
                        validation_log: validation_log.clone(),
                    },
                );
                OpStatus::Applied {
                    rule_id: Some(format!("rule_{id}")),
                }
            }
            RuleOp::UpdateRule {
                rule_id,
                rule_type,
                content,
                example,
                validation_log,
            } => {
                let Some(id) = parse_rule_id(rule_id) else {
                    return reject(format!("malformed rule id {rule_id:?}"));
                };
                let parsed_type = match rule_type {
                    Some(text) => match RuleType::parse(text) {
                        Some(parsed) => Some(parsed),
                        None => return reject(format!("unknown rule type {text:?}")),
                    },
                    None => None,
                };
                let Some(rule) = self.rules.get_mut(&id) else {
                    return reject(format!("no rule with id {rule_id:?}"));
                };
                if let Some(parsed) = parsed_type {
                    rule.rule_type = parsed;
                }
                if let Some(content) = content {
                    rule.content = content.clone();
                }
                if let Some(example) = example {
                    rule.example = example.clone();
                }
                if let Some(log) = validation_log {
                    rule.validation_log = log.clone();
                }
                OpStatus::Applied {
                    rule_id: Some(rule_id.clone()),
                }
            }
            RuleOp::DeleteRule { rule_id } => {
                if !policy.allow_delete {
                    return reject(format!(
                        "delete_rule is not permitted under {}",
                        policy.context
                    ));
                }
                let Some(id) = parse_rule_id(rule_id) else {
                    return reject(format!("malformed rule id {rule_id:?}"));
                };
                if self.rules.remove(&id).is_none() {
                    return reject(format!("no rule with id {rule_id:?}"));
                }
                OpStatus::Applied {
                    rule_id: Some(rule_id.clone()),
                }
            }
            RuleOp::GetTrajectory { .. } | RuleOp::StopGenerating => {
                OpStatus::Applied { rule_id: None }
            }
        }
    }

    /// Deterministic text rendering for prompts, ordered by id.
    pub fn render_for_prompt(&self, include_validation_logs: bool) -> String {
        if self.rules.is_empty() {
            return "(no rules recorded yet)".to_string();
        }
        let mut out = String::new();
        for rule in self.rules.values() {
            if !out.is_empty() {
                out.push('\n');
            }
            out.push_str(&format!("### {} ({})\n", rule.rule_id(), rule.rule_type));
            out.push_str(&format!("rule: {}\n", rule.content));
            if rule.example.trim().is_empty() {
                out.push_str("example: (none)\n");
            } else {
                out.push_str(&format!("example:\n{}\n", rule.example.trim_end()));
            }
            if include_validation_logs {
                out.push_str(&format!("validation_record: {}\n", rule.validation_log));
            }
        }
        out
    }

    pub fn snapshot(&self) -> String {
        serde_json::to_string_pretty(self).expect("rule store serializes")
    }

    /// The live rules alone, for comparing store contents irrespective of
    /// audit history.
    pub fn rules_snapshot(&self) -> Vec<Rule> {
        self.rules.values().cloned().collect()
    }

    pub fn restore(snapshot: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(snapshot)
    }

    /// Rules whose text cites a rule id that is no longer live. References
    /// are plain text (deletions don't cascade), so this is a report, not an
    /// integrity constraint. Returns (citing rule, dangling id) pairs.
    pub fn lint_dangling_references(&self) -> Vec<(String, String)> {
        let mut report = Vec::new();
        for rule in self.rules.values() {
            let text = format!("{} {} {}", rule.content, rule.example, rule.validation_log);
            for cited in scan_rule_mentions(&text) {
                if cited != rule.id && !self.rules.contains_key(&cited) {
                    let pair = (rule.rule_id(), format!("rule_{cited}"));
                    if !report.contains(&pair) {
                        report.push(pair);
                    }
                }
            }
        }
        report
    }
}

/// Re-applies the applied ops of a ledger onto a base store under a
/// permissive policy. Because rule ids are issued sequentially from the
/// store's counter, replaying onto the pre-ledger snapshot reproduces the
/// post-ledger store exactly.
pub fn replay_ledger(base: &RuleStore, ledger: &[OpOutcome]) -> RuleStore {
    let permissive = OpPolicy {
        forbidden_write_types: Vec::new(),
        allow_delete: true,
        context: "ledger replay".to_string(),
    };
    let mut store = base.clone();
    for outcome in ledger {
        if outcome.status.is_applied() {
            store.apply_op(&outcome.episode_id, &outcome.op, &permissive);
        }
    }
    store
}

/// All `rule_<digits>` mentions in free text, in order of appearance.
fn scan_rule_mentions(text: &str) -> Vec<u32> {
    let bytes = text.as_bytes();
    let mut found = Vec::new();
    let mut i = 0;
    while let Some(at) = text[i..].find("rule_") {
        let start = i + at;
        let digits_at = start + "rule_".len();
        // Skip mentions embedded in a longer identifier, e.g. `my_rule_3`.
        let standalone = start == 0
            || !(bytes[start - 1].is_ascii_alphanumeric() || bytes[start - 1] == b'_');
        let digits: String = text[digits_at..]
            .chars()
            .take_while(|c| c.is_ascii_digit())
            .collect();
        if standalone && !digits.is_empty() {
            if let Ok(id) = digits.parse() {
                found.push(id);
            }
        }
        i = digits_at;
    }
    found
}

// ---------------------------------------------------------------------------
// Trajectory archive
// ---------------------------------------------------------------------------

/// Renders of past episodes, exactly as the builder saw them, addressable by
/// `epoch_<n>` id for `get_trajectory` requests.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrajectoryArchive {
    episodes: BTreeMap<String, String>,
    order: Vec<String>,
}

impl TrajectoryArchive {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, episode_id: &str, rendered: String) {
        if !self.episodes.contains_key(episode_id) {
            self.order.push(episode_id.to_string());
        }
        self.episodes.insert(episode_id.to_string(), rendered);
    }

    pub fn get(&self, episode_id: &str) -> Option<&str> {
        self.episodes.get(episode_id).map(|s| s.as_str())
    }

    pub fn episode_ids(&self) -> &[String] {
        &self.order
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// Resolves a `get_trajectory` request. Ids are normalized (`epoch2` and
    /// `epoch_2` both resolve); unknown ids yield an apology line rather than
    /// an error so the conversation can continue.
    pub fn render_request(&self, episode_ids: &[String]) -> String {
        let mut sections = Vec::new();
        for raw in episode_ids {
            let id = normalize_episode_id(raw);
            match self.episodes.get(&id) {
                Some(rendered) => {
                    sections.push(format!("[Interaction history of {id}]\n{rendered}"))
                }
                None => sections.push(format!("[No archived trajectory for {}]", raw.trim())),
            }
        }
        sections.join("\n\n")
    }
}

/// `"epoch2"`/`" epoch_2 "` -> `"epoch_2"`.
pub fn normalize_episode_id(raw: &str) -> String {
    let trimmed = raw.trim();
    if let Some(rest) = trimmed.strip_prefix("epoch_") {
        return format!("epoch_{rest}");
    }
    if let Some(rest) = trimmed.strip_prefix("epoch") {
        return format!("epoch_{rest}");
    }
    trimmed.to_string()
}
