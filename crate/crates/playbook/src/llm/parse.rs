//! Parsers for structured agent responses: the planner's four-segment turn
//! and the builder/consolidator `rule_system.<fn>(...)` call blocks.
//!
//! Both parsers are deliberately lenient: agents are untrusted text
//! generators, so anything semantically wrong becomes a per-call diagnostic
//! or a rejected op downstream, never a crash. Only a missing code fence in a
//! planner turn is a hard format failure.

use crate::rulestore::RuleOp;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
#[error("response format error: {0}")]
pub struct ResponseFormatError(pub String);

/// One planner cycle: three thought segments plus the executable plan.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlannerTurn {
    pub analysis: String,
    pub related_rules: Vec<String>,
    pub overall_plan: String,
    pub code: String,
}

/// The first complete fenced code block's body, if the text has one.
pub fn extract_code_block(raw: &str) -> Option<String> {
    first_fenced_block(raw).map(|(_, code)| code)
}

/// Extracts the first complete fenced code block. Returns (before, code).
fn first_fenced_block(raw: &str) -> Option<(String, String)> {
    let mut before = String::new();
    let mut code = String::new();
    let mut state = 0; // 0 = before fence, 1 = inside, 2 = done
    for line in raw.lines() {
        match state {
            0 => {
                if line.trim_start().starts_with("```") {
                    state = 1;
                } else {
                    before.push_str(line);
                    before.push('\n');
                }
            }
            1 => {
                if line.trim() == "```" {
                    state = 2;
                } else {
                    code.push_str(line);
                    code.push('\n');
                }
            }
            _ => break,
        }
    }
    if state == 2 {
        Some((before, code))
    } else {
        None
    }
}

/// Heading heuristic: markdown heading, bold label, or a short label line
/// ending with a colon.
fn looks_like_heading(line: &str) -> bool {
    let trimmed = line.trim();
    trimmed.starts_with('#')
        || (trimmed.starts_with("**") && trimmed.len() < 120)
        || (trimmed.ends_with(':') && trimmed.len() < 80)
}

fn normalized_heading(line: &str) -> String {
    line.trim()
        .trim_matches(|c: char| c == '#' || c == '*' || c == ':' || c.is_whitespace())
        .to_lowercase()
}

pub fn scan_rule_ids(text: &str) -> Vec<String> {
    let mut seen = Vec::new();
    let bytes = text.as_bytes();
    let mut i = 0;
    while let Some(pos) = text[i..].find("rule_") {
        let start = i + pos;
        let mut end = start + "rule_".len();
        while end < bytes.len() && bytes[end].is_ascii_digit() {
            end += 1;
        }
        if end > start + "rule_".len() {
            let token = text[start..end].to_string();
            if !seen.contains(&token) {
                seen.push(token);
            }
        }
        i = end;
    }
    seen
}

/// Splits a planner response into analysis / related rules / plan / code.
/// Rule references are collected from the whole thought text (tolerating
/// missing "Rules to consider" headings); the first fenced block is the code.
pub fn parse_planner_response(raw: &str) -> Result<PlannerTurn, ResponseFormatError> {
    let (before, code) = first_fenced_block(raw)
        .ok_or_else(|| ResponseFormatError("no fenced code block found".to_string()))?;
    if code.trim().is_empty() {
        return Err(ResponseFormatError("fenced code block is empty".to_string()));
    }

    let mut rules_heading: Option<usize> = None;
    let mut plan_heading: Option<usize> = None;
    let lines: Vec<&str> = before.lines().collect();
    for (idx, line) in lines.iter().enumerate() {
        if !looks_like_heading(line) {
            continue;
        }
        let name = normalized_heading(line);
        if rules_heading.is_none()
            && (name.contains("rules to consider") || name.contains("related rules"))
        {
            rules_heading = Some(idx);
        }
        if plan_heading.is_none()
            && (name.contains("plan for the task") || name.contains("overall plan"))
        {
            plan_heading = Some(idx);
        }
    }

    let analysis_end = rules_heading.or(plan_heading).unwrap_or(lines.len());
    let analysis = lines[..analysis_end].join("\n").trim().to_string();
    let overall_plan = match plan_heading {
        Some(idx) => lines[idx + 1..].join("\n").trim().to_string(),
        None => String::new(),
    };
    Ok(PlannerTurn {
        analysis,
        related_rules: scan_rule_ids(&before),
        overall_plan,
        code,
    })
}

// ---------------------------------------------------------------------------
// rule_system call parsing
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RuleOpParse {
    pub ops: Vec<RuleOp>,
    /// Per-call problems (unknown function, malformed syntax); parsing always
    /// continues with the next call.
    pub diagnostics: Vec<String>,
}

struct Cursor<'a> {
    text: &'a [u8],
    pos: usize,
}

#[derive(Debug)]
struct Arg {
    name: Option<String>,
    value: String,
}

impl<'a> Cursor<'a> {
    fn new(text: &'a str) -> Self {
        Cursor { text: text.as_bytes(), pos: 0 }
    }

    fn peek(&self) -> Option<u8> {
        self.text.get(self.pos).copied()
    }

    fn bump(&mut self) -> Option<u8> {
        let b = self.peek();
        if b.is_some() {
            self.pos += 1;
        }
        b
    }

    fn skip_trivia(&mut self) {
        loop {
            match self.peek() {
                Some(b) if (b as char).is_whitespace() => {
                    self.pos += 1;
                }
                Some(b'#') => {
                    while let Some(b) = self.peek() {
                        self.pos += 1;
                        if b == b'\n' {
                            break;
                        }
                    }
                }
                _ => break,
            }
        }
    }

    fn ident(&mut self) -> Option<String> {
        let start = self.pos;
        match self.peek() {
            Some(b) if b.is_ascii_alphabetic() || b == b'_' => {}
            _ => return None,
        }
        while let Some(b) = self.peek() {
            if b.is_ascii_alphanumeric() || b == b'_' {
                self.pos += 1;
            } else {
                break;
            }
        }
        Some(String::from_utf8_lossy(&self.text[start..self.pos]).into_owned())
    }

    /// Parses a Python-style string literal at the cursor (handles f/r
    /// prefixes, single and triple quotes, standard escapes).
    fn string_literal(&mut self) -> Result<String, String> {
        let mut raw_mode = false;
        while let Some(b) = self.peek() {
            match b {
                b'f' | b'F' | b'b' | b'B' => {
                    self.pos += 1;
                }
                b'r' | b'R' => {
                    raw_mode = true;
                    self.pos += 1;
                }
                _ => break,
            }
        }
        let quote = match self.peek() {
            Some(q @ (b'\'' | b'"')) => q,
            _ => return Err("expected a string literal".to_string()),
        };
        let triple = self.text[self.pos..].starts_with(&[quote, quote, quote]);
        self.pos += if triple { 3 } else { 1 };
        let mut out = String::new();
        loop {
            if triple {
                if self.text[self.pos..].starts_with(&[quote, quote, quote]) {
                    self.pos += 3;
                    return Ok(out);
                }
            } else if self.peek() == Some(quote) {
                self.pos += 1;
                return Ok(out);
            }
            match self.bump() {
                None => return Err("unterminated string literal".to_string()),
                Some(b'\n') if !triple => {
                    return Err("newline in single-quoted string".to_string())
                }
                Some(b'\\') if !raw_mode => match self.bump() {
                    Some(b'n') => out.push('\n'),
                    Some(b't') => out.push('\t'),
                    Some(b'r') => out.push('\r'),
                    Some(b'\\') => out.push('\\'),
                    Some(b'\'') => out.push('\''),
                    Some(b'"') => out.push('"'),
                    Some(other) => {
                        out.push('\\');
                        out.push(other as char);
                    }
                    None => return Err("unterminated string literal".to_string()),
                },
                Some(b) => {
                    // Reassemble multi-byte UTF-8 sequences.
                    if b < 0x80 {
                        out.push(b as char);
                    } else {
                        let len = utf8_len(b);
                        let start = self.pos - 1;
                        let end = (start + len).min(self.text.len());
                        out.push_str(&String::from_utf8_lossy(&self.text[start..end]));
                        self.pos = end;
                    }
                }
            }
        }
    }

    /// Value that is not a string literal: raw text up to a top-level comma
    /// or closing paren.
    fn bare_value(&mut self) -> Result<String, String> {
        let start = self.pos;
        let mut depth = 0usize;
        loop {
            match self.peek() {
                None => return Err("unterminated argument".to_string()),
                Some(b'(') | Some(b'[') | Some(b'{') => {
                    depth += 1;
                    self.pos += 1;
                }
                Some(b')') | Some(b']') | Some(b'}') if depth > 0 => {
                    depth -= 1;
                    self.pos += 1;
                }
                Some(b')') | Some(b',') => {
                    let text = String::from_utf8_lossy(&self.text[start..self.pos]);
                    return Ok(text.trim().to_string());
                }
                Some(_) => {
                    self.pos += 1;
                }
            }
        }
    }

    /// Parses `(` args `)` starting at the open paren.
    fn call_args(&mut self) -> Result<Vec<Arg>, String> {
        self.skip_trivia();
        if self.peek() != Some(b'(') {
            return Err("expected '(' after function name".to_string());
        }
        self.pos += 1;
        let mut args = Vec::new();
        loop {
            self.skip_trivia();
            match self.peek() {
                None => return Err("unterminated call".to_string()),
                Some(b')') => {
                    self.pos += 1;
                    return Ok(args);
                }
                Some(b',') => {
                    self.pos += 1;
                }
                _ => {
                    let checkpoint = self.pos;
                    let mut name = None;
                    if let Some(ident) = self.ident() {
                        self.skip_trivia();
                        if self.peek() == Some(b'=')
                            && self.text.get(self.pos + 1) != Some(&b'=')
                        {
                            self.pos += 1;
                            self.skip_trivia();
                            name = Some(ident);
                        } else {
                            self.pos = checkpoint;
                        }
                    }
                    let value = match self.peek() {
                        Some(b'\'') | Some(b'"') => self.string_literal()?,
                        Some(b) if b.is_ascii_alphabetic() => {
                            // Could be a prefixed string (f'...') or a bare token.
                            let save = self.pos;
                            match self.string_literal() {
                                Ok(s) => s,
                                Err(_) => {
                                    self.pos = save;
                                    self.bare_value()?
                                }
                            }
                        }
                        _ => self.bare_value()?,
                    };
                    args.push(Arg { name, value });
                }
            }
        }
    }
}

fn utf8_len(first: u8) -> usize {
    if first >= 0xF0 {
        4
    } else if first >= 0xE0 {
        3
    } else {
        2
    }
}

fn arg_lookup(args: &[Arg], names: &[&str], position: usize) -> Option<String> {
    for arg in args {
        if let Some(name) = &arg.name {
            if names.contains(&name.as_str()) {
                return Some(arg.value.clone());
            }
        }
    }
    let positional: Vec<&Arg> = args.iter().filter(|a| a.name.is_none()).collect();
    positional.get(position).map(|a| a.value.clone())
}

fn split_episode_ids(raw: &str) -> Vec<String> {
    raw.split(',')
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect()
}

fn op_from_call(name: &str, args: &[Arg]) -> Result<RuleOp, String> {
    match name {
        "write_rule" => Ok(RuleOp::WriteRule {
            content: arg_lookup(args, &["rule", "content"], 0).unwrap_or_default(),
            rule_type: arg_lookup(args, &["type", "rule_type"], 1).unwrap_or_default(),
            example: arg_lookup(args, &["example"], 2).unwrap_or_default(),
            validation_log: arg_lookup(args, &["validation_record", "validation_log"], 3)
                .unwrap_or_default(),
        }),
        "update_rule" => Ok(RuleOp::UpdateRule {
            rule_id: arg_lookup(args, &["rule_id"], 0).unwrap_or_default(),
            content: arg_lookup(args, &["rule", "content"], 1),
            rule_type: arg_lookup(args, &["type", "rule_type"], 2),
            example: arg_lookup(args, &["example"], 3),
            validation_log: arg_lookup(args, &["validation_record", "validation_log"], 4),
        }),
        "delete_rule" => Ok(RuleOp::DeleteRule {
            rule_id: arg_lookup(args, &["rule_id"], 0).unwrap_or_default(),
        }),
        "get_trajectory" | "get_interactions" => Ok(RuleOp::GetTrajectory {
            episode_ids: split_episode_ids(
                &arg_lookup(args, &["epoch_ids", "episode_ids"], 0).unwrap_or_default(),
            ),
        }),
        "stop_generating" => Ok(RuleOp::StopGenerating),
        other => Err(format!("unknown rule_system function '{other}'")),
    }
}

fn all_fenced_blocks(raw: &str) -> Vec<String> {
    let mut blocks = Vec::new();
    let mut current: Option<String> = None;
    for line in raw.lines() {
        match &mut current {
            None => {
                if line.trim_start().starts_with("```") {
                    current = Some(String::new());
                }
            }
            Some(buf) => {
                if line.trim() == "```" {
                    blocks.push(std::mem::take(buf));
                    current = None;
                } else {
                    buf.push_str(line);
                    buf.push('\n');
                }
            }
        }
    }
    blocks
}

/// Scans text for `rule_system.<fn>(...)` calls, skipping string literals and
/// comments so echoed prompt text cannot produce phantom ops. Prefers fenced
/// code blocks when present.
pub fn parse_rule_ops(raw: &str) -> RuleOpParse {
    let mut source = String::new();
    for block in all_fenced_blocks(raw) {
        source.push_str(&block);
        source.push('\n');
    }
    let mut result = RuleOpParse::default();
    if source.trim().is_empty() {
        source = raw.to_string();
        if raw.contains("rule_system.") {
            result
                .diagnostics
                .push("rule ops found outside a fenced code block".to_string());
        }
    }

    let mut cursor = Cursor::new(&source);
    let needle = b"rule_system.";
    while cursor.pos < cursor.text.len() {
        match cursor.peek() {
            Some(b'#') => {
                while let Some(b) = cursor.bump() {
                    if b == b'\n' {
                        break;
                    }
                }
            }
            Some(b'\'') | Some(b'"') => {
                // Skip string literals so quoted mentions are ignored.
                if cursor.string_literal().is_err() {
                    cursor.pos += 1;
                }
            }
            Some(_) if cursor.text[cursor.pos..].starts_with(needle) => {
                cursor.pos += needle.len();
                let Some(fn_name) = cursor.ident() else {
                    result
                        .diagnostics
                        .push("rule_system. not followed by a function name".to_string());
                    continue;
                };
                match cursor.call_args() {
                    Ok(args) => match op_from_call(&fn_name, &args) {
                        Ok(op) => result.ops.push(op),
                        Err(diag) => result.diagnostics.push(diag),
                    },
                    Err(diag) => {
                        result
                            .diagnostics
                            .push(format!("malformed call to {fn_name}: {diag}"));
                    }
                }
            }
            _ => {
                cursor.pos += 1;
            }
        }
    }
    result
}

fn quote_py(text: &str) -> String {
    let mut out = String::with_capacity(text.len() + 2);
    out.push('"');
    for ch in text.chars() {
        match ch {
            '\\' => out.push_str("\\\\"),
            '"' => out.push_str("\\\""),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            '\r' => out.push_str("\\r"),
            other => out.push(other),
        }
    }
    out.push('"');
    out
}

/// Canonical call text for an op list; `parse_rule_ops(render_rule_ops(ops))`
/// reproduces the ops exactly.
pub fn render_rule_ops(ops: &[RuleOp]) -> String {
    let mut out = String::from("```python\n");
    for op in ops {
        match op {
            RuleOp::WriteRule { rule_type, content, example, validation_log } => {
                out.push_str(&format!(
                    "rule_system.write_rule(rule={}, type={}, example={}, validation_record={})\n",
                    quote_py(content),
                    quote_py(rule_type),
                    quote_py(example),
                    quote_py(validation_log)
                ));
            }
            RuleOp::UpdateRule { rule_id, rule_type, content, example, validation_log } => {
                let mut parts = vec![format!("rule_id={}", quote_py(rule_id))];
                if let Some(content) = content {
                    parts.push(format!("rule={}", quote_py(content)));
                }
                if let Some(rule_type) = rule_type {
                    parts.push(format!("type={}", quote_py(rule_type)));
                }
                if let Some(example) = example {
                    parts.push(format!("example={}", quote_py(example)));
                }
                if let Some(log) = validation_log {
                    parts.push(format!("validation_record={}", quote_py(log)));
                }
                out.push_str(&format!("rule_system.update_rule({})\n", parts.join(", ")));
            }
            RuleOp::DeleteRule { rule_id } => {
                out.push_str(&format!("rule_system.delete_rule(rule_id={})\n", quote_py(rule_id)));
            }
            RuleOp::GetTrajectory { episode_ids } => {
                out.push_str(&format!(
                    "rule_system.get_trajectory(epoch_ids={})\n",
                    quote_py(&episode_ids.join(","))
                ));
            }
            RuleOp::StopGenerating => {
                out.push_str("rule_system.stop_generating()\n");
            }
        }
    }
    out.push_str("```\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEAT_PLANNER_RESPONSE: &str = concat!(
        "### Understanding of the observation:\n",
        "The agent is in a room with numerous cabinets, appliances, and surfaces. The task is to heat a mug.\n",
        "\n",
        "### Rules to consider:\n",
        "- **rule_0**: Ensure all receptacles and surfaces are considered when searching for the mug.\n",
        "- **rule_1**: Use the 'find_object' method to search for the mug.\n",
        "- **rule_2**: After finding the mug, heat it and then put it in a cabinet.\n",
        "- **rule_3**: Open closed receptacles to search for objects.\n",
        "\n",
        "### Plan for the task:\n",
        "1. Use the 'find_object' method to search for a mug in all receptacles and surfaces.\n",
        "2. Once the mug is found, take it.\n",
        "\n",
        "Here is the code for the task:\n",
        "```python\n",
        "# [Step 1] Define the helper method 'find_object' as provided in rule_1\n",
        "x = 1\n",
        "```\n",
    );

    #[test]
    fn planner_response_splits_into_four_segments() {
        let turn = parse_planner_response(HEAT_PLANNER_RESPONSE).unwrap();
        assert!(turn.analysis.starts_with("### Understanding of the observation:"));
        assert!(turn.analysis.contains("heat a mug"));
        assert!(!turn.analysis.contains("rule_0"));
        assert_eq!(turn.related_rules, vec!["rule_0", "rule_1", "rule_2", "rule_3"]);
        assert!(turn.overall_plan.starts_with("1. Use the 'find_object' method"));
        assert!(turn.overall_plan.contains("Here is the code for the task:"));
        assert!(turn.code.starts_with("# [Step 1] Define the helper method"));
        assert!(turn.code.contains("x = 1"));
    }

    #[test]
    fn rule_tokens_collected_from_prose_without_heading() {
        let raw = "I will follow rule_2 and also rule_0 here, and rule_2 again.\n```python\npass\n```\n";
        let turn = parse_planner_response(raw).unwrap();
        assert_eq!(turn.related_rules, vec!["rule_2", "rule_0"]);
        assert_eq!(turn.overall_plan, "");
        assert!(turn.analysis.contains("rule_2"));
    }

    #[test]
    fn missing_code_fence_is_a_parse_failure() {
        assert!(parse_planner_response("").is_err());
        assert!(parse_planner_response("just some text\nwith no code").is_err());
        assert!(parse_planner_response("unclosed\n```python\nx = 1\n").is_err());
    }

    const BUILDER_RESPONSE: &str = concat!(
        "Potential Rules:\n",
        "1. *Corrected Error*: When attempting to use an appliance, the agent must be at its location.\n",
        "\n",
        "Codes:\n",
        "```python\n",
        "# Update the existing 'Success Process' rule to include the precondition for using appliances\n",
        "rule_system.update_rule(\n",
        "    rule_id='rule_2',\n",
        "    rule=\"If the task is to heat an object and put it in a receptacle, the agent must first find the object.\",\n",
        "    example=\"\"\"# For example, to heat a mug and put it in a cabinet:\n",
        "# [Step 1] Use 'find_object' method to search all receptacles\n",
        "# [Step 2] Take the mug\"\"\",\n",
        "    validation_record=\"Updated to include the precondition for using appliances based on epoch_1.\"\n",
        ")\n",
        "\n",
        "# Write a new 'Corrected Error' rule for the precondition of using appliances\n",
        "rule_system.write_rule(\n",
        "    rule=\"Before using an appliance (e.g., microwave), the agent must go to the location of the appliance.\",\n",
        "    type=\"Corrected Error\",\n",
        "    example=\"\"\"# Corrective code:\n",
        "observation = agent.go_to('microwave_1')\n",
        "observation = agent.heat_with('mug_1', 'microwave_1')\"\"\",\n",
        "    validation_record=\"Derived from the error and correction in epoch_1.\"\n",
        ")\n",
        "\n",
        "rule_system.stop_generating()\n",
        "```\n",
    );

    #[test]
    fn builder_block_parses_to_three_ops_in_order() {
        let parsed = parse_rule_ops(BUILDER_RESPONSE);
        assert!(parsed.diagnostics.is_empty(), "{:?}", parsed.diagnostics);
        assert_eq!(parsed.ops.len(), 3);
        match &parsed.ops[0] {
            RuleOp::UpdateRule { rule_id, content, rule_type, example, validation_log } => {
                assert_eq!(rule_id, "rule_2");
                assert!(content.as_ref().unwrap().starts_with("If the task is to heat"));
                assert_eq!(*rule_type, None);
                assert!(example.as_ref().unwrap().contains("# [Step 2] Take the mug"));
                assert!(validation_log.as_ref().unwrap().contains("epoch_1"));
            }
            other => panic!("expected update, got {other:?}"),
        }
        match &parsed.ops[1] {
            RuleOp::WriteRule { rule_type, content, example, .. } => {
                assert_eq!(rule_type, "Corrected Error");
                assert!(content.starts_with("Before using an appliance"));
                assert!(example.contains("agent.heat_with('mug_1', 'microwave_1')"));
            }
            other => panic!("expected write, got {other:?}"),
        }
        assert_eq!(parsed.ops[2], RuleOp::StopGenerating);
    }

    #[test]
    fn get_interactions_alias_and_comma_split() {
        let raw = "```python\nrule_system.get_interactions(\"epoch_0,epoch2\")\n```";
        let parsed = parse_rule_ops(raw);
        assert_eq!(
            parsed.ops,
            vec![RuleOp::GetTrajectory {
                episode_ids: vec!["epoch_0".to_string(), "epoch2".to_string()]
            }]
        );
    }

    #[test]
    fn only_stop_generating() {
        let parsed = parse_rule_ops("```python\nrule_system.stop_generating()\n```");
        assert_eq!(parsed.ops, vec![RuleOp::StopGenerating]);
        assert!(parsed.diagnostics.is_empty());
    }

    #[test]
    fn unknown_function_and_malformed_call_become_diagnostics() {
        let raw = concat!(
            "```python\n",
            "rule_system.score_rule(rule_id='rule_1', score=5)\n",
            "rule_system.delete_rule(rule_id='rule_3'\n", // unterminated call
            "```\n",
        );
        let parsed = parse_rule_ops(raw);
        assert!(parsed.ops.is_empty());
        assert_eq!(parsed.diagnostics.len(), 2);
        assert!(parsed.diagnostics[0].contains("score_rule"));
        assert!(parsed.diagnostics[1].contains("delete_rule"));
    }

    #[test]
    fn quoted_mentions_are_not_phantom_ops() {
        let raw = concat!(
            "```python\n",
            "# you can call rule_system.update_rule for one rule\n",
            "note = 'call rule_system.delete_rule to delete another'\n",
            "rule_system.stop_generating()\n",
            "```\n",
        );
        let parsed = parse_rule_ops(raw);
        assert_eq!(parsed.ops, vec![RuleOp::StopGenerating]);
    }

    #[test]
    fn ops_outside_fence_still_parse_with_diagnostic() {
        let raw = "rule_system.delete_rule(rule_id='rule_9')";
        let parsed = parse_rule_ops(raw);
        assert_eq!(parsed.ops, vec![RuleOp::DeleteRule { rule_id: "rule_9".to_string() }]);
        assert_eq!(parsed.diagnostics, vec!["rule ops found outside a fenced code block"]);
    }

    #[test]
    fn render_parse_round_trip() {
        let ops = vec![
            RuleOp::WriteRule {
                rule_type: "Success Process".to_string(),
                content: "line one\nline \"two\" with \\ backslash".to_string(),
                example: "\tindented\nand 'quoted'".to_string(),
                validation_log: String::new(),
            },
            RuleOp::UpdateRule {
                rule_id: "rule_4".to_string(),
                rule_type: None,
                content: Some(String::new()),
                example: None,
                validation_log: Some("epoch_2".to_string()),
            },
            RuleOp::DeleteRule { rule_id: "rule_0".to_string() },
            RuleOp::GetTrajectory {
                episode_ids: vec!["epoch_0".to_string(), "epoch_7".to_string()],
            },
            RuleOp::StopGenerating,
        ];
        let rendered = render_rule_ops(&ops);
        let parsed = parse_rule_ops(&rendered);
        assert!(parsed.diagnostics.is_empty(), "{:?}", parsed.diagnostics);
        assert_eq!(parsed.ops, ops);
    }
}
