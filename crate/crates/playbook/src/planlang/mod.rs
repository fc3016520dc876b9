//! The plan-script language: a small, indentation-blocked imperative
//! language the planner writes its plans in, executed directly against the
//! text world.
//!
//! See `docs/plan-language.md` for the grammar. The important behavioural
//! points:
//!
//! * `agent.<action>(...)` steps the environment and evaluates to the full
//!   observation text; `agent.holding`/`agent.location` read state;
//! * `assert cond, f'...'` stops the cycle with the (lazily evaluated)
//!   message as the execution error;
//! * bindings and `def`s persist across cycles of one episode, so a replan
//!   can call helpers from an earlier cycle;
//! * budgets: at most 200 statements per cycle, 1000 iterations per loop and
//!   50 environment actions per episode.

pub mod ast;
mod interp;
mod lexer;
mod parser;

pub use ast::{Program, Span};
pub use interp::{
    scan_object_ids, truthy, value_eq, value_repr, value_str, EpisodeSession, ExecutionTrace,
    Terminal, TraceEvent, Value, MAX_LOOP_ITERATIONS,
};
pub use parser::{parse, MAX_STATEMENTS};

use std::fmt;

/// A syntax-level rejection with a 1-based source position.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub struct ParseError {
    pub line: u32,
    pub col: u32,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "Syntax error at line {}, column {}: {}",
            self.line, self.col, self.message
        )
    }
}

/// Renders a cycle's outcome the way the planner sees it:
///
/// ```text
/// obs_1: Act: agent.go_to('cabinet_1'). Obs: cabinet_1 is closed. ...
/// Execution error:
/// <message>
/// Current state: You are at cabinet_1 and holding nothing.
/// ```
///
/// The error block appears only for assertion/runtime terminals.
pub fn format_feedback(trace: &ExecutionTrace) -> String {
    let mut lines = Vec::new();
    for event in &trace.events {
        lines.push(format!(
            "obs_{}: Act: {}. Obs: {}",
            event.index, event.call, event.observation
        ));
    }
    match &trace.terminal {
        Terminal::AssertionFailed(message) | Terminal::RuntimeError(message) => {
            lines.push("Execution error:".to_string());
            lines.push(message.clone());
        }
        _ => {}
    }
    lines.push(format!("Current state: {}", trace.state_summary));
    lines.join("\n")
}

/// Feedback for a cycle that never executed (the script failed to parse).
pub fn format_error_feedback(message: &str, state_summary: &str) -> String {
    format!("Execution error:\n{message}\nCurrent state: {state_summary}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::textworld::{sample_tasks, TaskType};

    fn fresh_session() -> EpisodeSession {
        let task = sample_tasks(TaskType::Put, 1, 0xbeef).remove(0);
        EpisodeSession::new(task)
    }

    fn run(session: &mut EpisodeSession, source: &str) -> ExecutionTrace {
        let program = parse(source).expect("test script parses");
        session.execute(&program)
    }

    #[test]
    fn parse_reports_position_of_missing_expression() {
        let err = parse("x = ").unwrap_err();
        assert_eq!((err.line, err.col), (1, 5));
        assert_eq!(
            err.to_string(),
            format!("Syntax error at line 1, column 5: {}", err.message)
        );
    }

    #[test]
    fn nested_function_definitions_are_rejected() {
        let err = parse("def outer():\n    def inner():\n        pass\n").unwrap_err();
        assert!(err.message.contains("may not nest"), "{}", err.message);
    }

    #[test]
    fn statement_cap_is_enforced() {
        let mut source = String::new();
        for i in 0..201 {
            source.push_str(&format!("x{i} = {i}\n"));
        }
        let err = parse(&source).unwrap_err();
        assert!(err.message.contains("limit of 200"), "{}", err.message);
    }

    #[test]
    fn builtins_resolve_inside_function_bodies() {
        let mut session = fresh_session();
        let source = concat!(
            "def measure(observation, name):\n",
            "    ids = get_object_with_id(observation, name)\n",
            "    return len(ids)\n",
            "count = measure('On shelf_1, you see mug_1 and mug_2.', 'mug')\n",
            "assert count == 2, f'unexpected count {count}'\n",
        );
        let trace = run(&mut session, source);
        assert_eq!(trace.terminal, Terminal::Completed, "{:?}", trace.terminal);
    }

    #[test]
    fn user_bindings_shadow_builtins() {
        let mut session = fresh_session();
        let source = concat!(
            "def len(x):\n",
            "    return 42\n",
            "assert len([1, 2]) == 42\n",
        );
        let trace = run(&mut session, source);
        assert_eq!(trace.terminal, Terminal::Completed, "{:?}", trace.terminal);
    }

    #[test]
    fn arithmetic_lists_and_fstrings_evaluate() {
        let mut session = fresh_session();
        let source = concat!(
            "total = 0\n",
            "items = [3, 5, -2]\n",
            "for n in items:\n",
            "    total = total + n * 2\n",
            "words = 'alpha beta gamma'.split()\n",
            "note = f'total={total} first={words[0]} tail={items[1:]}'\n",
        );
        let trace = run(&mut session, source);
        assert_eq!(trace.terminal, Terminal::Completed);
        let globals = session.globals_snapshot();
        assert_eq!(globals["total"], "12");
        assert_eq!(globals["note"], "'total=12 first=alpha tail=[5, -2]'");
    }

    #[test]
    fn assert_message_is_lazy_and_interpolated() {
        let mut session = fresh_session();
        // A passing assert may reference names that do not exist.
        let ok = run(&mut session, "x = 1\nassert x == 1, f'bad {ghost}'\n");
        assert_eq!(ok.terminal, Terminal::Completed);
        let fail = run(
            &mut session,
            "recep_to_check = ['cabinet_1', 'shelf_2']\n\
             assert False, f'Error in [Step 1]: nothing in/on {recep_to_check}.'\n",
        );
        assert_eq!(
            fail.terminal,
            Terminal::AssertionFailed(
                "Error in [Step 1]: nothing in/on ['cabinet_1', 'shelf_2'].".to_string()
            )
        );
    }

    #[test]
    fn runtime_errors_carry_positions_and_abort_the_cycle() {
        let mut session = fresh_session();
        let trace = run(&mut session, "x = 1\ny = missing_name\nz = 2\n");
        match &trace.terminal {
            Terminal::RuntimeError(message) => {
                assert!(message.contains("line 2"), "{message}");
                assert!(message.contains("'missing_name' is not defined"), "{message}");
            }
            other => panic!("expected runtime error, got {other:?}"),
        }
        assert!(!session.globals_snapshot().contains_key("z"));
    }

    #[test]
    fn non_list_iteration_is_a_runtime_error() {
        let mut session = fresh_session();
        let trace = run(&mut session, "for c in 'abc':\n    pass\n");
        match trace.terminal {
            Terminal::RuntimeError(message) => {
                assert!(message.contains("only lists"), "{message}")
            }
            other => panic!("expected runtime error, got {other:?}"),
        }
    }

    #[test]
    fn recursion_is_rejected_at_runtime() {
        let mut session = fresh_session();
        let trace = run(
            &mut session,
            "def loop_forever(n):\n    return loop_forever(n)\nloop_forever(1)\n",
        );
        match trace.terminal {
            Terminal::RuntimeError(message) => {
                assert!(message.contains("recursive call"), "{message}")
            }
            other => panic!("expected runtime error, got {other:?}"),
        }
    }

    #[test]
    fn loop_iteration_cap_applies() {
        let mut session = fresh_session();
        let source = concat!(
            "big = [0]\n",
            "for _ in [1, 2, 3, 4, 5, 6, 7, 8, 9, 10]:\n",
            "    big = big + big\n",
            "for x in big:\n",
            "    pass\n",
        );
        let trace = run(&mut session, source);
        match trace.terminal {
            Terminal::RuntimeError(message) => {
                assert!(message.contains("loop iteration limit"), "{message}")
            }
            other => panic!("expected runtime error, got {other:?}"),
        }
    }

    #[test]
    fn bindings_and_functions_persist_across_cycles() {
        let mut session = fresh_session();
        let first = run(
            &mut session,
            "def double(n):\n    return n * 2\nseen = [1]\n",
        );
        assert_eq!(first.terminal, Terminal::Completed);
        let second = run(&mut session, "seen.append(double(21))\n");
        assert_eq!(second.terminal, Terminal::Completed);
        assert_eq!(session.globals_snapshot()["seen"], "[1, 42]");
    }

    #[test]
    fn budget_exhausts_after_event_fifty() {
        let mut session = fresh_session();
        let receps: Vec<String> = session
            .world()
            .state()
            .receptacles
            .iter()
            .map(|r| format!("'{}'", r.id))
            .collect();
        // Ping-pong between receptacles forever; the env cap must cut it off.
        let source = format!(
            "spots = [{}, {}]\nfor i in [{}]:\n    for spot in spots:\n        observation = agent.go_to(spot)\n",
            receps[0],
            receps[1],
            (0..60).map(|i| i.to_string()).collect::<Vec<_>>().join(", ")
        );
        let trace = run(&mut session, &source);
        assert_eq!(trace.terminal, Terminal::BudgetExhausted);
        assert_eq!(trace.events.len(), 50);
        assert_eq!(trace.events.last().unwrap().index, 50);
        assert!(session.world().done());
        assert_eq!(session.world().reward(), -1);
    }

    #[test]
    fn observation_indices_continue_across_cycles() {
        let mut session = fresh_session();
        let first_id = session.world().state().receptacles[0].id.clone();
        let second_id = session.world().state().receptacles[1].id.clone();
        let a = run(&mut session, &format!("observation = agent.go_to('{first_id}')\n"));
        assert_eq!(a.events[0].index, 1);
        let b = run(&mut session, &format!("observation = agent.go_to('{second_id}')\n"));
        assert_eq!(b.events[0].index, 2);
    }

    #[test]
    fn feedback_format_matches_the_trajectory_layout() {
        let mut session = fresh_session();
        let closed = session
            .world()
            .state()
            .receptacles
            .iter()
            .find(|r| r.openable && !r.open)
            .map(|r| r.id.clone())
            .expect("sampled bathroom has a closed cabinet");
        let trace = run(
            &mut session,
            &format!("observation = agent.go_to('{closed}')\nassert False, 'boom'\n"),
        );
        let feedback = format_feedback(&trace);
        let expected_first = format!(
            "obs_1: Act: agent.go_to('{closed}'). Obs: {closed} is closed. You are at {closed} and holding nothing."
        );
        let lines: Vec<&str> = feedback.lines().collect();
        assert_eq!(lines[0], expected_first);
        assert_eq!(lines[1], "Execution error:");
        assert_eq!(lines[2], "boom");
        assert_eq!(
            lines[3],
            format!("Current state: You are at {closed} and holding nothing.")
        );
    }

    #[test]
    fn scan_object_ids_finds_tokens_in_order() {
        assert_eq!(
            scan_object_ids("On shelf_1, you see cellphone_2, and cellphone_1.", "cellphone"),
            vec!["cellphone_2".to_string(), "cellphone_1".to_string()]
        );
        // Substring occurrences count, mirroring a plain regex scan.
        assert_eq!(
            scan_object_ids("In cabinet_3, you see box_3, and tissuebox_2.", "box"),
            vec!["box_3".to_string(), "box_2".to_string()]
        );
        assert_eq!(scan_object_ids("you see nothing.", "mug"), Vec::<String>::new());
        assert_eq!(scan_object_ids("mug_12 mug_ mug", "mug"), vec!["mug_12".to_string()]);
    }

    #[test]
    fn skill_functions_predefine_without_running_statements() {
        let mut session = fresh_session();
        let skill = parse(
            "def shout(word):\n    return word + '!'\nobservation = agent.go_to('cabinet_1')\n",
        )
        .unwrap();
        session.define_functions(&skill);
        // The go_to in the skill body must NOT have run.
        assert_eq!(session.world().actions_taken(), 0);
        let trace = run(&mut session, "x = shout('go')\n");
        assert_eq!(trace.terminal, Terminal::Completed);
        assert_eq!(session.globals_snapshot()["x"], "'go!'");
    }
}
