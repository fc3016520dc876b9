//! Deterministic task and world sampling.
//!
//! A `TaskSpec` is tiny (type, goal names, seed); the full room is regrown
//! from it on demand, so fixtures stay small and replay never has to persist
//! world state. All randomness is drawn from a `ChaCha8Rng` seeded by the
//! task seed, in a fixed draw order — the same spec always grows the same
//! room.

use super::{
    kind_is_openable, AgentLocation, GoalParams, ObjectState, Receptacle, TaskSpec, TaskType,
    WorldState,
};
use crate::derive_seed;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;

/// Kind inventory for one room flavour: `(kind, min_count, max_count)`.
type RoomPlan = &'static [(&'static str, u32, u32)];

const BATHROOM: RoomPlan = &[
    ("cabinet", 2, 4),
    ("countertop", 1, 1),
    ("drawer", 1, 2),
    ("garbagecan", 1, 1),
    ("shelf", 1, 3),
    ("sidetable", 0, 1),
    ("sinkbasin", 1, 2),
    ("toilet", 1, 2),
    ("towelholder", 1, 1),
];

const KITCHEN: RoomPlan = &[
    ("cabinet", 3, 7),
    ("coffeemachine", 1, 1),
    ("countertop", 1, 2),
    ("diningtable", 1, 1),
    ("drawer", 1, 3),
    ("fridge", 1, 1),
    ("garbagecan", 1, 1),
    ("microwave", 1, 1),
    ("shelf", 1, 3),
    ("sidetable", 0, 1),
    ("sinkbasin", 1, 2),
    ("stoveburner", 2, 3),
    ("toaster", 1, 1),
];

const BEDROOM: RoomPlan = &[
    ("armchair", 0, 1),
    ("bed", 1, 1),
    ("cabinet", 1, 4),
    ("desk", 1, 1),
    ("drawer", 2, 4),
    ("dresser", 1, 1),
    ("garbagecan", 1, 1),
    ("safe", 0, 1),
    ("shelf", 2, 5),
    ("sidetable", 1, 2),
    ("sofa", 1, 1),
];

fn room_plan(task_type: TaskType) -> RoomPlan {
    match task_type {
        TaskType::Put => BATHROOM,
        TaskType::Clean | TaskType::Heat | TaskType::Cool => KITCHEN,
        TaskType::Examine | TaskType::PutTwo => BEDROOM,
    }
}

/// `(goal object candidates, goal target candidates)` per task family.
fn goal_pools(task_type: TaskType) -> (&'static [&'static str], &'static [&'static str]) {
    match task_type {
        TaskType::Put => (
            &["spraybottle", "soapbar", "candle", "cloth", "toiletpaper"],
            &["toilet", "cabinet", "countertop", "shelf", "garbagecan"],
        ),
        TaskType::Clean => (
            &["soapbar", "cloth", "apple", "lettuce", "tomato", "mug"],
            &["cabinet", "countertop", "shelf", "diningtable", "sidetable"],
        ),
        TaskType::Heat => (
            &["mug", "apple", "potato", "tomato", "egg", "bread", "cup"],
            &["cabinet", "countertop", "shelf", "diningtable"],
        ),
        TaskType::Cool => (
            &["mug", "apple", "potato", "tomato", "pan", "cup", "plate"],
            &["cabinet", "countertop", "shelf", "diningtable"],
        ),
        TaskType::Examine => (
            &["book", "cd", "pen", "pencil", "statue", "watch"],
            &["desklamp"],
        ),
        TaskType::PutTwo => (
            &["pillow", "cellphone", "book", "watch", "candle", "creditcard"],
            &["sofa", "bed", "desk", "shelf", "sidetable", "dresser"],
        ),
    }
}

const DISTRACTORS: &[&str] = &[
    "box", "tissuebox", "keychain", "candle", "cloth", "egg", "apple", "statue", "watch", "pen",
    "soapbar", "mug", "plate", "cup",
];

fn task_text(task_type: TaskType, goal: &GoalParams) -> String {
    match task_type {
        TaskType::Put => format!("put some {} in/on {}.", goal.object, goal.target),
        TaskType::Clean => format!("clean some {} and put it in {}.", goal.object, goal.target),
        TaskType::Heat => format!("heat some {} and put it in {}.", goal.object, goal.target),
        TaskType::Cool => format!("cool some {} and put it in {}.", goal.object, goal.target),
        TaskType::Examine => format!("look at {} under the desklamp.", goal.object),
        TaskType::PutTwo => format!("put two {} in {}.", goal.object, goal.target),
    }
}

/// Samples `count` tasks of one family. Each task's own seed is derived from
/// `seed` by label, so build and test splits never collide as long as their
/// root labels differ.
pub fn sample_tasks(task_type: TaskType, count: u32, seed: u64) -> Vec<TaskSpec> {
    let (objects, targets) = goal_pools(task_type);
    (0..count)
        .map(|i| {
            let task_seed = derive_seed(seed, &format!("{task_type:?}/{i}"));
            let mut rng = ChaCha8Rng::seed_from_u64(task_seed);
            let goal = GoalParams {
                object: objects[rng.gen_range(0..objects.len())].to_string(),
                target: targets[rng.gen_range(0..targets.len())].to_string(),
            };
            let text = task_text(task_type, &goal);
            TaskSpec {
                task_type,
                goal,
                seed: task_seed,
                text,
            }
        })
        .collect()
}

/// Regrows the room for a task. Guarantees: the goal object exists (twice for
/// Put-two), the target kind and any required appliance exist, and the goal
/// predicate is false at episode start.
pub fn generate_world(task: &TaskSpec) -> WorldState {
    let mut rng = ChaCha8Rng::seed_from_u64(task.seed ^ 0x77_6f_72_6c_64);
    let plan = room_plan(task.task_type);

    // Receptacle counts, in the plan's (alphabetical) kind order.
    let mut counts: Vec<(&str, u32)> = plan
        .iter()
        .map(|&(kind, lo, hi)| (kind, rng.gen_range(lo..=hi)))
        .collect();
    if task.task_type != TaskType::Examine {
        if let Some(entry) = counts.iter_mut().find(|(kind, _)| *kind == task.goal.target) {
            entry.1 = entry.1.max(1);
        }
    }

    // Ids within a kind run high-to-low, matching how the room introduces
    // itself ("cabinet_4, cabinet_3, ..., cabinet_1").
    let mut receptacles = Vec::new();
    for (kind, count) in &counts {
        for index in (1..=*count).rev() {
            let openable = kind_is_openable(kind);
            receptacles.push(Receptacle {
                id: format!("{kind}_{index}"),
                kind: kind.to_string(),
                openable,
                open: false,
                contents: Vec::new(),
            });
        }
    }
    for recep in receptacles.iter_mut() {
        if recep.openable {
            recep.open = rng.gen_bool(0.25);
        }
    }

    let mut object_states = BTreeMap::new();
    let place = |receptacles: &mut Vec<Receptacle>,
                     object_states: &mut BTreeMap<String, ObjectState>,
                     rng: &mut ChaCha8Rng,
                     object_id: String,
                     exclude_kind: Option<&str>| {
        let slots: Vec<usize> = receptacles
            .iter()
            .enumerate()
            .filter(|(_, r)| Some(r.kind.as_str()) != exclude_kind)
            .map(|(i, _)| i)
            .collect();
        let slot = slots[rng.gen_range(0..slots.len())];
        receptacles[slot].contents.push(object_id.clone());
        object_states.insert(object_id, ObjectState::default());
    };

    // Goal objects. Placement-only goals keep the object away from the target
    // kind so no episode starts solved.
    let exclude = match task.task_type {
        TaskType::Put | TaskType::PutTwo => Some(task.goal.target.as_str()),
        _ => None,
    };
    let goal_copies = if task.task_type == TaskType::PutTwo { 2 } else { 1 };
    for copy in 1..=goal_copies {
        place(
            &mut receptacles,
            &mut object_states,
            &mut rng,
            format!("{}_{copy}", task.goal.object),
            exclude,
        );
    }
    if task.task_type == TaskType::Examine {
        place(
            &mut receptacles,
            &mut object_states,
            &mut rng,
            "desklamp_1".to_string(),
            None,
        );
    }

    // Distractors: a few unrelated objects scattered anywhere, including odd
    // spots, so searching stays non-trivial.
    let mut pool: Vec<&str> = DISTRACTORS
        .iter()
        .copied()
        .filter(|name| *name != task.goal.object)
        .collect();
    pool.shuffle(&mut rng);
    let distractor_count = rng.gen_range(2..=5usize);
    for name in pool.iter().take(distractor_count) {
        let copies = rng.gen_range(1..=2u32);
        for copy in 1..=copies {
            place(
                &mut receptacles,
                &mut object_states,
                &mut rng,
                format!("{name}_{copy}"),
                None,
            );
        }
    }

    WorldState {
        receptacles,
        agent_location: AgentLocation::Middle,
        holding: None,
        object_states,
    }
}

// ---------------------------------------------------------------------------
// Fixture serialization
// ---------------------------------------------------------------------------

/// One JSON record per line.
pub fn tasks_to_jsonl(tasks: &[TaskSpec]) -> String {
    let mut out = String::new();
    for task in tasks {
        out.push_str(&serde_json::to_string(task).expect("task serializes"));
        out.push('\n');
    }
    out
}

pub fn tasks_from_jsonl(text: &str) -> Result<Vec<TaskSpec>, serde_json::Error> {
    text.lines()
        .filter(|line| !line.trim().is_empty())
        .map(serde_json::from_str)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::textworld::{check_goal, TextWorld};

    #[test]
    fn sampling_is_deterministic() {
        let a = sample_tasks(TaskType::Heat, 6, 42);
        let b = sample_tasks(TaskType::Heat, 6, 42);
        assert_eq!(a, b);
        let worlds_a: Vec<_> = a.iter().map(generate_world).collect();
        let worlds_b: Vec<_> = b.iter().map(generate_world).collect();
        assert_eq!(worlds_a, worlds_b);
    }

    #[test]
    fn worlds_contain_goal_objects_and_appliances() {
        for task_type in TaskType::ALL {
            for task in sample_tasks(task_type, 8, 7) {
                let world = generate_world(&task);
                let copies = world
                    .object_states
                    .keys()
                    .filter(|id| super::super::object_name(id) == task.goal.object)
                    .count();
                let needed = if task_type == TaskType::PutTwo { 2 } else { 1 };
                assert!(copies >= needed, "{task:?} missing goal object");
                let has_kind =
                    |kind: &str| world.receptacles.iter().any(|r| r.kind == kind);
                match task_type {
                    TaskType::Heat => assert!(has_kind("microwave")),
                    TaskType::Cool => assert!(has_kind("fridge")),
                    TaskType::Clean => assert!(has_kind("sinkbasin")),
                    TaskType::Examine => {
                        assert!(world.object_states.contains_key("desklamp_1"))
                    }
                    TaskType::Put | TaskType::PutTwo => {
                        assert!(has_kind(&task.goal.target), "{task:?} lacks target")
                    }
                }
                assert!(!check_goal(&world, &task), "{task:?} starts solved");
            }
        }
    }

    #[test]
    fn initial_observation_lists_kinds_ascending_ids_descending() {
        let task = sample_tasks(TaskType::Put, 1, 0).remove(0);
        let world = TextWorld::new(task);
        let obs = world.initial_observation();
        assert!(obs.starts_with("You are in the middle of a room. Looking quickly around you, you see "));
        let ids: Vec<&str> = world
            .state()
            .receptacles
            .iter()
            .map(|r| r.id.as_str())
            .collect();
        let mut sorted = ids.clone();
        sorted.sort_by(|a, b| {
            let (ka, na) = a.rsplit_once('_').unwrap();
            let (kb, nb) = b.rsplit_once('_').unwrap();
            ka.cmp(kb)
                .then(nb.parse::<u32>().unwrap().cmp(&na.parse::<u32>().unwrap()))
        });
        assert_eq!(ids, sorted);
    }

    #[test]
    fn fixtures_round_trip_through_jsonl() {
        let tasks = sample_tasks(TaskType::PutTwo, 4, 99);
        let text = tasks_to_jsonl(&tasks);
        assert_eq!(tasks_from_jsonl(&text).unwrap(), tasks);
    }
}
