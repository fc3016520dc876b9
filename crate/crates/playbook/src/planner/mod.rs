//! The planning agent loop: assemble the prompt, iterate thought/code/
//! feedback cycles against the environment, categorize the outcome, and
//! elicit a conclusion for the libraries and the rule builder.

use crate::llm::{
    parse_planner_response, prompts, Backend, BackendError, ChatSession, PlannerTurn,
};
use crate::planlang::{self, format_error_feedback, format_feedback, EpisodeSession, Terminal};
use crate::textworld::TaskSpec;
use serde::{Deserialize, Serialize};
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeBudget {
    pub max_replans: u32,
    pub max_actions: u32,
}

impl Default for EpisodeBudget {
    fn default() -> Self {
        EpisodeBudget { max_replans: 3, max_actions: 50 }
    }
}

impl EpisodeBudget {
    pub fn max_cycles(&self) -> u32 {
        self.max_replans + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EpisodeOutcome {
    DirectSuccess,
    IndirectSuccess,
    Failure,
}

impl EpisodeOutcome {
    pub fn is_success(&self) -> bool {
        !matches!(self, EpisodeOutcome::Failure)
    }
}

impl fmt::Display for EpisodeOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EpisodeOutcome::DirectSuccess => "Direct Success",
            EpisodeOutcome::IndirectSuccess => "Indirect Success",
            EpisodeOutcome::Failure => "Failure",
        })
    }
}

/// One thought/code/feedback cycle.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cycle {
    pub turn: PlannerTurn,
    /// The planner's full response text, as the builder will see it.
    pub response_raw: String,
    pub feedback: String,
    /// Terminal was an assertion failure, runtime error, or parse failure.
    pub error: bool,
}

/// Complete record of one episode, in the shape the builder consumes:
/// observation, task, cycles, conclusion, outcome.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub episode_id: String,
    pub task: TaskSpec,
    pub initial_observation: String,
    pub cycles: Vec<Cycle>,
    pub conclusion: String,
    pub outcome: EpisodeOutcome,
    pub reward: i32,
    pub actions_taken: u32,
}

impl TrajectoryRecord {
    /// Cycles that ended in an assertion, runtime, or parse failure.
    pub fn error_steps(&self) -> u32 {
        self.cycles.iter().filter(|c| c.error).count() as u32
    }

    /// The text rendering the builder and the trajectory archive see.
    pub fn render_for_builder(&self) -> String {
        let mut out = format!(
            "[Initial observation and the task]\n{}\nYour task is to: {}\n",
            self.initial_observation, self.task.text
        );
        for (i, cycle) in self.cycles.iter().enumerate() {
            let label = if i == 0 { "[Planner]" } else { "[Planner's replanning]" };
            out.push_str(&format!("\n{label}\n{}\n", cycle.response_raw.trim_end()));
            out.push_str(&format!("\n[Feedback]\n{}\n", cycle.feedback.trim_end()));
        }
        if !self.conclusion.is_empty() {
            out.push_str(&format!("\n[Planner's conclusion]\n{}\n", self.conclusion.trim_end()));
        }
        out.push_str(&format!(
            "\n[Result]\n{}. Reward: {}. Error steps: {}.\n",
            self.outcome,
            self.reward,
            self.error_steps()
        ));
        out
    }

    /// Structural check of the Eq. 2 shape: non-empty cycle list, each
    /// executed cycle carrying code and feedback, outcome consistent with the
    /// reward sign.
    pub fn structurally_valid(&self) -> bool {
        if self.cycles.is_empty() {
            return false;
        }
        if (self.outcome == EpisodeOutcome::Failure) != (self.reward == -1) {
            return false;
        }
        self.cycles
            .iter()
            .all(|c| !c.feedback.is_empty() && (c.error || !c.turn.code.trim().is_empty()))
    }
}

/// Everything an episode run needs besides the session and backend.
#[derive(Debug, Clone)]
pub struct EpisodeSetup<'a> {
    pub task: &'a TaskSpec,
    /// "Current rules" during building, "Manual" during testing.
    pub knowledge_label: &'a str,
    pub knowledge: &'a str,
    /// Pre-framed skill or reflection text, if any was retrieved.
    pub retrieved: Option<String>,
    pub budget: EpisodeBudget,
}

const FORMAT_REPROMPT: &str = "Your response does not follow the output format instructions. \
Respond with the section headings described in the system prompt and include your plan code \
between \"```python\" and \"```\".";

const FORMAT_ERROR_FEEDBACK: &str = "response format error";

/// Runs the cycle loop until the episode ends or the cycle budget is spent.
/// Returns the record *without* a conclusion; callers follow up with
/// [`conclude`]. Backend failures abort (the harness checkpoints).
pub fn run_episode(
    episode_id: &str,
    setup: &EpisodeSetup<'_>,
    session: &mut ChatSession,
    backend: &mut dyn Backend,
) -> Result<TrajectoryRecord, BackendError> {
    let mut env = EpisodeSession::new(setup.task.clone());
    let initial_observation = env.initial_observation();
    let mut message = prompts::planner_task_message(
        setup.knowledge_label,
        setup.knowledge,
        setup.retrieved.as_deref(),
        &initial_observation,
        &setup.task.text,
    );

    let mut cycles = Vec::new();
    let mut final_reward: Option<i32> = None;
    for _ in 0..setup.budget.max_cycles() {
        let mut response = session.send(backend, message.clone())?;
        let turn = match parse_planner_response(&response) {
            Ok(turn) => Some(turn),
            Err(_) => {
                // One re-prompt, then the cycle counts as an error step.
                response = session.send(backend, FORMAT_REPROMPT)?;
                parse_planner_response(&response).ok()
            }
        };
        let Some(turn) = turn else {
            let feedback = FORMAT_ERROR_FEEDBACK.to_string();
            cycles.push(Cycle {
                turn: PlannerTurn {
                    analysis: response.clone(),
                    related_rules: Vec::new(),
                    overall_plan: String::new(),
                    code: String::new(),
                },
                response_raw: response,
                feedback: feedback.clone(),
                error: true,
            });
            message = format_error_feedback(FORMAT_ERROR_FEEDBACK, &env.world().state().summary());
            continue;
        };

        let (feedback, error) = match planlang::parse(&turn.code) {
            Err(parse_error) => (
                format_error_feedback(&parse_error.to_string(), &env.world().state().summary()),
                true,
            ),
            Ok(program) => {
                let trace = env.execute(&program);
                let error = trace.terminal.is_error();
                match trace.terminal {
                    Terminal::EpisodeDone(reward) => final_reward = Some(reward),
                    Terminal::BudgetExhausted => final_reward = Some(env.world().reward()),
                    _ => {}
                }
                (format_feedback(&trace), error)
            }
        };
        cycles.push(Cycle { turn, response_raw: response, feedback: feedback.clone(), error });
        if final_reward.is_some() {
            break;
        }
        message = feedback;
    }

    let reward = final_reward.unwrap_or(-1);
    let actions_taken = env.world().actions_taken();
    let mut record = TrajectoryRecord {
        episode_id: episode_id.to_string(),
        task: setup.task.clone(),
        initial_observation,
        cycles,
        conclusion: String::new(),
        outcome: EpisodeOutcome::Failure,
        reward,
        actions_taken,
    };
    record.outcome = categorize_result(&record);
    Ok(record)
}

/// Direct Success / Indirect Success / Failure from the reward and the error
/// cycles.
pub fn categorize_result(record: &TrajectoryRecord) -> EpisodeOutcome {
    if record.reward != 1 {
        EpisodeOutcome::Failure
    } else if record.error_steps() == 0 {
        EpisodeOutcome::DirectSuccess
    } else {
        EpisodeOutcome::IndirectSuccess
    }
}

/// Asks the planner for its conclusion (organized code on success, reflection
/// on failure) and stores it on the record.
pub fn conclude(
    record: &mut TrajectoryRecord,
    session: &mut ChatSession,
    backend: &mut dyn Backend,
) -> Result<(), BackendError> {
    let prompt = if record.outcome.is_success() {
        prompts::CONCLUSION_SUCCESS
    } else {
        prompts::CONCLUSION_FAILURE
    };
    record.conclusion = session.send(backend, prompt)?;
    Ok(())
}
