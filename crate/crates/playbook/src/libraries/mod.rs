//! Skill and reflection libraries: per task type, the latest successful
//! episode's organized code (skill) or the latest failed episode's
//! reflection, retrieved for new episodes of the same or the most similar
//! type.

use crate::llm::{extract_code_block, prompts};
use crate::planner::TrajectoryRecord;
use crate::textworld::TaskType;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkillEntry {
    pub task_type: TaskType,
    pub code: String,
    pub source_episode: String,
    /// The source episode's initial observation and task line, shown with
    /// the code so the planner can judge how transferable it is.
    pub context: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReflectionEntry {
    pub task_type: TaskType,
    pub reflection: String,
    pub source_episode: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Retrieved {
    Skill(SkillEntry),
    Reflection(ReflectionEntry),
    Nothing,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Libraries {
    skills: BTreeMap<TaskType, SkillEntry>,
    reflections: BTreeMap<TaskType, ReflectionEntry>,
}

impl Libraries {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn skill(&self, task_type: TaskType) -> Option<&SkillEntry> {
        self.skills.get(&task_type)
    }

    pub fn reflection(&self, task_type: TaskType) -> Option<&ReflectionEntry> {
        self.reflections.get(&task_type)
    }

    pub fn skill_count(&self) -> usize {
        self.skills.len()
    }

    pub fn reflection_count(&self) -> usize {
        self.reflections.len()
    }

    /// Files the episode's conclusion: successful episodes contribute their
    /// organized code block as the type's skill, failed episodes contribute
    /// the whole conclusion as the type's reflection. Either way the newest
    /// episode of a type wins. Returns an anomaly note when a successful
    /// conclusion carries no code block (nothing is stored then).
    pub fn save_from_conclusion(&mut self, record: &TrajectoryRecord) -> Option<String> {
        let task_type = record.task.task_type;
        if record.outcome.is_success() {
            match extract_code_block(&record.conclusion) {
                Some(code) => {
                    self.skills.insert(
                        task_type,
                        SkillEntry {
                            task_type,
                            code,
                            source_episode: record.episode_id.clone(),
                            context: format!(
                                "{}\nThe task is to: {}",
                                record.initial_observation.trim_end(),
                                record.task.text
                            ),
                        },
                    );
                    None
                }
                None => Some(format!(
                    "episode {}: successful conclusion has no code block; skill not updated",
                    record.episode_id
                )),
            }
        } else {
            self.reflections.insert(
                task_type,
                ReflectionEntry {
                    task_type,
                    reflection: record.conclusion.clone(),
                    source_episode: record.episode_id.clone(),
                },
            );
            None
        }
    }

    /// Exact-type skill, else the most similar type's skill (token overlap
    /// over type names, lexicographic tie-break), else the exact type's
    /// reflection, else nothing.
    pub fn retrieve(&self, task_type: TaskType) -> Retrieved {
        if let Some(skill) = self.skills.get(&task_type) {
            return Retrieved::Skill(skill.clone());
        }
        if let Some(skill) = self.most_similar_skill(task_type) {
            return Retrieved::Skill(skill.clone());
        }
        if let Some(reflection) = self.reflections.get(&task_type) {
            return Retrieved::Reflection(reflection.clone());
        }
        Retrieved::Nothing
    }

    fn most_similar_skill(&self, task_type: TaskType) -> Option<&SkillEntry> {
        let target = task_type.name_tokens();
        self.skills
            .values()
            .map(|entry| (similarity(&target, &entry.task_type.name_tokens()), entry))
            .max_by(|(a_score, a_entry), (b_score, b_entry)| {
                a_score.partial_cmp(b_score).unwrap().then(
                    // Prefer the lexicographically smaller name, so reverse.
                    b_entry
                        .task_type
                        .display_name()
                        .cmp(&a_entry.task_type.display_name()),
                )
            })
            .map(|(_, entry)| entry)
    }

    /// The retrieval result wrapped in its prompt framing, ready to splice
    /// into the planner's opening message.
    pub fn framed_for_prompt(&self, task_type: TaskType) -> Option<String> {
        match self.retrieve(task_type) {
            Retrieved::Skill(skill) => Some(prompts::skill_framing(&skill.context, &skill.code)),
            Retrieved::Reflection(reflection) => {
                Some(prompts::reflection_framing(&reflection.reflection))
            }
            Retrieved::Nothing => None,
        }
    }
}

/// Token-overlap similarity over lowercase name tokens (Jaccard).
fn similarity(a: &[&str], b: &[&str]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let a: std::collections::BTreeSet<_> = a.iter().collect();
    let b: std::collections::BTreeSet<_> = b.iter().collect();
    let inter = a.intersection(&b).count() as f64;
    let union = a.union(&b).count() as f64;
    inter / union
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::planner::EpisodeOutcome;
    use crate::textworld::sample_tasks;

    fn record(task_type: TaskType, episode: &str, outcome: EpisodeOutcome, conclusion: &str) -> TrajectoryRecord {
        let task = sample_tasks(task_type, 1, 7).remove(0);
        TrajectoryRecord {
            episode_id: episode.to_string(),
            task,
            initial_observation: "You are in the middle of a room.".to_string(),
            cycles: Vec::new(),
            conclusion: conclusion.to_string(),
            outcome,
            reward: if outcome == EpisodeOutcome::Failure { -1 } else { 1 },
            actions_taken: 0,
        }
    }

    #[test]
    fn latest_success_of_a_type_replaces_the_previous_skill() {
        let mut libs = Libraries::new();
        let first = record(
            TaskType::Put,
            "epoch_0",
            EpisodeOutcome::DirectSuccess,
            "### Organized code block:\n```python\nfirst = 1\n```",
        );
        let second = record(
            TaskType::Put,
            "epoch_5",
            EpisodeOutcome::IndirectSuccess,
            "### Organized code block:\n```python\nsecond = 2\n```",
        );
        assert!(libs.save_from_conclusion(&first).is_none());
        assert!(libs.save_from_conclusion(&second).is_none());
        assert_eq!(libs.skill_count(), 1);
        let skill = libs.skill(TaskType::Put).unwrap();
        assert_eq!(skill.code, "second = 2\n");
        assert_eq!(skill.source_episode, "epoch_5");
    }

    #[test]
    fn success_without_code_block_is_an_anomaly_and_stores_nothing() {
        let mut libs = Libraries::new();
        let rec = record(
            TaskType::Put,
            "epoch_1",
            EpisodeOutcome::DirectSuccess,
            "I succeeded but forgot the code.",
        );
        let note = libs.save_from_conclusion(&rec).unwrap();
        assert!(note.contains("epoch_1"));
        assert!(libs.skill(TaskType::Put).is_none());
    }

    #[test]
    fn put_two_falls_back_to_the_put_skill() {
        let mut libs = Libraries::new();
        let put = record(
            TaskType::Put,
            "epoch_0",
            EpisodeOutcome::DirectSuccess,
            "```python\nput_code = True\n```",
        );
        let heat = record(
            TaskType::Heat,
            "epoch_1",
            EpisodeOutcome::DirectSuccess,
            "```python\nheat_code = True\n```",
        );
        libs.save_from_conclusion(&put);
        libs.save_from_conclusion(&heat);
        match libs.retrieve(TaskType::PutTwo) {
            Retrieved::Skill(skill) => assert_eq!(skill.task_type, TaskType::Put),
            other => panic!("expected the Put skill, got {other:?}"),
        }
    }

    #[test]
    fn reflection_serves_only_its_own_type_when_no_skills_exist() {
        let mut libs = Libraries::new();
        let fail = record(
            TaskType::Examine,
            "epoch_2",
            EpisodeOutcome::Failure,
            "I failed because the lamp was elsewhere.",
        );
        libs.save_from_conclusion(&fail);
        match libs.retrieve(TaskType::Examine) {
            Retrieved::Reflection(r) => assert_eq!(r.source_episode, "epoch_2"),
            other => panic!("expected the reflection, got {other:?}"),
        }
        assert_eq!(libs.retrieve(TaskType::Cool), Retrieved::Nothing);
    }

    #[test]
    fn any_skill_beats_the_exact_reflection() {
        let mut libs = Libraries::new();
        libs.save_from_conclusion(&record(
            TaskType::Examine,
            "epoch_2",
            EpisodeOutcome::Failure,
            "reflection text",
        ));
        libs.save_from_conclusion(&record(
            TaskType::Heat,
            "epoch_3",
            EpisodeOutcome::DirectSuccess,
            "```python\nheat = 1\n```",
        ));
        match libs.retrieve(TaskType::Examine) {
            Retrieved::Skill(skill) => assert_eq!(skill.task_type, TaskType::Heat),
            other => panic!("expected a skill fallback, got {other:?}"),
        }
    }

    #[test]
    fn framing_wraps_skill_with_context_and_code() {
        let mut libs = Libraries::new();
        libs.save_from_conclusion(&record(
            TaskType::Put,
            "epoch_0",
            EpisodeOutcome::DirectSuccess,
            "```python\nfind_object('mug')\n```",
        ));
        let framed = libs.framed_for_prompt(TaskType::Put).unwrap();
        assert!(framed.starts_with("Here is the code for a relevant skill:"));
        assert!(framed.contains("The task is to: "));
        assert!(framed.contains("find_object('mug')"));
        assert!(framed.contains("potential randomness"));
    }

    #[test]
    fn libraries_round_trip_through_serde() {
        let mut libs = Libraries::new();
        libs.save_from_conclusion(&record(
            TaskType::Clean,
            "epoch_4",
            EpisodeOutcome::DirectSuccess,
            "```python\nclean = 1\n```",
        ));
        let json = serde_json::to_string(&libs).unwrap();
        let back: Libraries = serde_json::from_str(&json).unwrap();
        assert_eq!(libs, back);
    }
}
