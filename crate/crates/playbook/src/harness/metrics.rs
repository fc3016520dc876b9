//! Per-type and overall result accounting for the test stage, plus the
//! episode ledger rows shared by every stage's run log.

use crate::planner::{EpisodeOutcome, TrajectoryRecord};
use crate::textworld::TaskType;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// One completed episode, as recorded in run logs and metrics.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub episode_id: String,
    pub task_type: TaskType,
    pub task_text: String,
    pub outcome: EpisodeOutcome,
    pub reward: i32,
    pub error_steps: u32,
    pub actions: u32,
    pub cycles: u32,
    /// "Case N" during building; empty in the test stage.
    pub case: String,
}

impl EpisodeSummary {
    pub fn from_record(record: &TrajectoryRecord, case: &str) -> Self {
        EpisodeSummary {
            episode_id: record.episode_id.clone(),
            task_type: record.task.task_type,
            task_text: record.task.text.clone(),
            outcome: record.outcome,
            reward: record.reward,
            error_steps: record.error_steps(),
            actions: record.actions_taken,
            cycles: record.cycles.len() as u32,
            case: case.to_string(),
        }
    }

    pub fn succeeded(&self) -> bool {
        self.outcome.is_success()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypeMetrics {
    pub successes: u32,
    pub total: u32,
}

impl TypeMetrics {
    pub fn rate(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            f64::from(self.successes) / f64::from(self.total)
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Keyed by task-type display name; insertion in the canonical
    /// Put/Clean/Heat/Cool/Examine/Put two order is restored on render.
    pub per_type: BTreeMap<String, TypeMetrics>,
    pub successes: u32,
    pub total: u32,
    pub success_rate: f64,
    pub avg_error_steps: f64,
    pub episodes: Vec<EpisodeSummary>,
}

impl Metrics {
    pub fn from_episodes(episodes: Vec<EpisodeSummary>) -> Self {
        let mut per_type: BTreeMap<String, TypeMetrics> = BTreeMap::new();
        let mut successes = 0u32;
        let mut error_steps = 0u32;
        for episode in &episodes {
            let slot = per_type
                .entry(episode.task_type.display_name().to_string())
                .or_default();
            slot.total += 1;
            if episode.succeeded() {
                slot.successes += 1;
                successes += 1;
            }
            error_steps += episode.error_steps;
        }
        let total = episodes.len() as u32;
        Metrics {
            per_type,
            successes,
            total,
            success_rate: if total == 0 {
                0.0
            } else {
                f64::from(successes) / f64::from(total)
            },
            avg_error_steps: if total == 0 {
                0.0
            } else {
                f64::from(error_steps) / f64::from(total)
            },
            episodes,
        }
    }

    /// Success-rate table in the canonical column order, one header line
    /// and one value line, plus the overall summary lines.
    pub fn table(&self) -> String {
        let mut headers = Vec::new();
        let mut values = Vec::new();
        for task_type in TaskType::ALL {
            let name = task_type.display_name();
            let cell = self.per_type.get(name).copied().unwrap_or_default();
            headers.push(name.to_string());
            values.push(format!("{}/{}", cell.successes, cell.total));
        }
        headers.push("ALL".to_string());
        values.push(format!("{}/{}", self.successes, self.total));
        format!(
            "{}\n{}\nSuccess rate: {:.3}\nAvg. error steps: {:.3}",
            headers.join(" & "),
            values.join(" & "),
            self.success_rate,
            self.avg_error_steps,
        )
    }

    /// Canonical byte representation used for replay equality checks.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("metrics serialize")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn summary(task_type: TaskType, outcome: EpisodeOutcome, error_steps: u32) -> EpisodeSummary {
        EpisodeSummary {
            episode_id: "test_0".to_string(),
            task_type,
            task_text: "task".to_string(),
            outcome,
            reward: if outcome == EpisodeOutcome::Failure { -1 } else { 1 },
            error_steps,
            actions: 10,
            cycles: error_steps + 1,
            case: String::new(),
        }
    }

    #[test]
    fn nine_of_ten_is_point_nine() {
        let mut episodes = Vec::new();
        for i in 0..10 {
            let outcome = if i == 0 {
                EpisodeOutcome::Failure
            } else {
                EpisodeOutcome::DirectSuccess
            };
            episodes.push(summary(TaskType::Put, outcome, 0));
        }
        let metrics = Metrics::from_episodes(episodes);
        assert_eq!(metrics.success_rate, 0.9);
        assert_eq!(metrics.successes, 9);
    }

    #[test]
    fn error_cycles_count_into_the_average() {
        let episodes = vec![
            summary(TaskType::Put, EpisodeOutcome::IndirectSuccess, 2),
            summary(TaskType::Clean, EpisodeOutcome::DirectSuccess, 0),
        ];
        let metrics = Metrics::from_episodes(episodes);
        assert_eq!(metrics.avg_error_steps, 1.0);
    }

    #[test]
    fn table_has_the_canonical_column_order() {
        let episodes = vec![
            summary(TaskType::PutTwo, EpisodeOutcome::DirectSuccess, 0),
            summary(TaskType::Put, EpisodeOutcome::Failure, 4),
        ];
        let metrics = Metrics::from_episodes(episodes);
        let table = metrics.table();
        let header = table.lines().next().unwrap();
        assert_eq!(header, "Put & Clean & Heat & Cool & Examine & Put two & ALL");
        let values = table.lines().nth(1).unwrap();
        assert_eq!(values, "0/1 & 0/0 & 0/0 & 0/0 & 0/0 & 1/1 & 1/2");
    }

    #[test]
    fn empty_metrics_are_all_zero() {
        let metrics = Metrics::from_episodes(Vec::new());
        assert_eq!(metrics.success_rate, 0.0);
        assert_eq!(metrics.avg_error_steps, 0.0);
    }
}
