//! Embedded household text world.
//!
//! A partially observable room: the agent stands in the middle, walks to
//! receptacles, opens them, moves objects around and manipulates object state
//! (clean/hot/cold/lit). Observations are short English sentences; an action
//! whose precondition fails (or that would leave the world unchanged) degrades
//! to `"Nothing happens."` instead of erroring, and the episode ends with a
//! reward of `+1` the moment the goal predicate flips true, or `-1` when the
//! action budget runs out.

mod sampler;

pub use sampler::{generate_world, sample_tasks, tasks_from_jsonl, tasks_to_jsonl};

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;

/// Hard per-episode action budget: the environment refuses further steps and
/// emits the failure reward once this many actions have executed.
pub const MAX_ACTIONS: u32 = 50;

// ---------------------------------------------------------------------------
// Task model
// ---------------------------------------------------------------------------

/// The six household task families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TaskType {
    Put,
    Clean,
    Heat,
    Cool,
    Examine,
    PutTwo,
}

impl TaskType {
    pub const ALL: [TaskType; 6] = [
        TaskType::Put,
        TaskType::Clean,
        TaskType::Heat,
        TaskType::Cool,
        TaskType::Examine,
        TaskType::PutTwo,
    ];

    /// Human-facing name, as used in metrics tables ("Put two", not "PutTwo").
    pub fn display_name(&self) -> &'static str {
        match self {
            TaskType::Put => "Put",
            TaskType::Clean => "Clean",
            TaskType::Heat => "Heat",
            TaskType::Cool => "Cool",
            TaskType::Examine => "Examine",
            TaskType::PutTwo => "Put two",
        }
    }

    /// Lower-case word tokens of the type name, used for similarity lookups.
    pub fn name_tokens(&self) -> Vec<&'static str> {
        match self {
            TaskType::Put => vec!["put"],
            TaskType::Clean => vec!["clean"],
            TaskType::Heat => vec!["heat"],
            TaskType::Cool => vec!["cool"],
            TaskType::Examine => vec!["examine"],
            TaskType::PutTwo => vec!["put", "two"],
        }
    }
}

impl fmt::Display for TaskType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.display_name())
    }
}

/// What the episode is about: which object name matters and where it must end
/// up. For `Examine` the target names the lamp kind rather than a receptacle.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoalParams {
    pub object: String,
    pub target: String,
}

/// A sampled task: everything needed to regenerate its world deterministically.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub task_type: TaskType,
    pub goal: GoalParams,
    pub seed: u64,
    pub text: String,
}

// ---------------------------------------------------------------------------
// World state
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Receptacle {
    /// Unique id such as `cabinet_3`.
    pub id: String,
    /// Kind prefix such as `cabinet`.
    pub kind: String,
    pub openable: bool,
    pub open: bool,
    /// Object ids currently in/on this receptacle, in insertion order.
    pub contents: Vec<String>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectState {
    pub clean: bool,
    pub hot: bool,
    pub cold: bool,
    pub lit: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum AgentLocation {
    /// Where every episode starts: not at any receptacle.
    Middle,
    At(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorldState {
    /// Receptacles in presentation order (kind ascending, index descending),
    /// which is also the order the initial observation lists them in.
    pub receptacles: Vec<Receptacle>,
    pub agent_location: AgentLocation,
    pub holding: Option<String>,
    /// Per-object state flags; every object in the world has an entry.
    pub object_states: BTreeMap<String, ObjectState>,
}

impl WorldState {
    pub fn receptacle(&self, id: &str) -> Option<&Receptacle> {
        self.receptacles.iter().find(|r| r.id == id)
    }

    fn receptacle_mut(&mut self, id: &str) -> Option<&mut Receptacle> {
        self.receptacles.iter_mut().find(|r| r.id == id)
    }

    /// The receptacle currently holding `object_id`, if any.
    pub fn receptacle_of(&self, object_id: &str) -> Option<&Receptacle> {
        self.receptacles
            .iter()
            .find(|r| r.contents.iter().any(|o| o == object_id))
    }

    /// `"You are at cabinet_1 and holding nothing."`
    pub fn summary(&self) -> String {
        let held = self.holding.as_deref().unwrap_or("nothing");
        match &self.agent_location {
            AgentLocation::Middle => {
                format!("You are in the middle of the room and holding {held}.")
            }
            AgentLocation::At(id) => format!("You are at {id} and holding {held}."),
        }
    }

    /// Stable content digest, used by tests to detect hidden state changes.
    pub fn digest(&self) -> [u8; 32] {
        use sha2::{Digest, Sha256};
        let encoded = serde_json::to_vec(self).expect("world state serializes");
        let mut hasher = Sha256::new();
        hasher.update(&encoded);
        hasher.finalize().into()
    }
}

/// `"mug_1"` -> `"mug"`. Ids without a numeric suffix name themselves.
pub fn object_name(id: &str) -> &str {
    match id.rfind('_') {
        Some(pos) if id[pos + 1..].chars().all(|c| c.is_ascii_digit())
            && !id[pos + 1..].is_empty() =>
        {
            &id[..pos]
        }
        _ => id,
    }
}

// ---------------------------------------------------------------------------
// Actions
// ---------------------------------------------------------------------------

/// The nine primitive actions the agent can issue.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum EnvAction {
    GoTo(String),
    Open(String),
    Close(String),
    TakeFrom(String, String),
    PutInOrOn(String, String),
    Use(String),
    CleanWith(String, String),
    HeatWith(String, String),
    CoolWith(String, String),
}

impl EnvAction {
    /// Renders the action the way trajectories quote it:
    /// `agent.go_to('cabinet_1')`.
    pub fn render_call(&self) -> String {
        match self {
            EnvAction::GoTo(r) => format!("agent.go_to('{r}')"),
            EnvAction::Open(r) => format!("agent.open('{r}')"),
            EnvAction::Close(r) => format!("agent.close('{r}')"),
            EnvAction::TakeFrom(o, r) => format!("agent.take_from('{o}', '{r}')"),
            EnvAction::PutInOrOn(o, r) => format!("agent.put_in_or_on('{o}', '{r}')"),
            EnvAction::Use(o) => format!("agent.use('{o}')"),
            EnvAction::CleanWith(o, r) => format!("agent.clean_with('{o}', '{r}')"),
            EnvAction::HeatWith(o, r) => format!("agent.heat_with('{o}', '{r}')"),
            EnvAction::CoolWith(o, r) => format!("agent.cool_with('{o}', '{r}')"),
        }
    }
}

/// Outcome of one environment step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionResult {
    /// Bare action observation, e.g. `"You take mug_1 from shelf_1."` or
    /// `"Nothing happens."`.
    pub observation: String,
    /// `"You are at shelf_1 and holding mug_1."`
    pub state_summary: String,
    pub done: bool,
    /// `0` while the episode is live; `+1`/`-1` exactly once, when it ends.
    pub reward: i32,
}

impl ActionResult {
    /// The full text handed back to the planner for this step.
    pub fn rendered(&self) -> String {
        let mut text = format!("{} {}", self.observation, self.state_summary);
        if self.done {
            let verdict = if self.reward > 0 { "True" } else { "False" };
            text.push_str(&format!(" This epoch is done. Succeed: {verdict}"));
        }
        text
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum EnvError {
    #[error("the episode already ended; reset the environment before stepping")]
    EpisodeOver,
    #[error("action budget of {0} exhausted")]
    BudgetExhausted(u32),
}

// ---------------------------------------------------------------------------
// Goal predicate
// ---------------------------------------------------------------------------

/// Pure goal check. Placement-style goals require the object to sit in a
/// receptacle of the target kind; Clean/Heat/Cool additionally require the
/// matching state flag; Examine only requires the object to have been lit up
/// (which `use` records on whatever the agent is holding).
pub fn check_goal(state: &WorldState, task: &TaskSpec) -> bool {
    let wanted = task.goal.object.as_str();
    let target = task.goal.target.as_str();
    let placed_ids = || {
        state
            .receptacles
            .iter()
            .filter(|r| r.kind == target)
            .flat_map(|r| r.contents.iter())
            .filter(|id| object_name(id) == wanted)
    };
    let flag = |id: &str, pick: fn(&ObjectState) -> bool| {
        state.object_states.get(id).map(pick).unwrap_or(false)
    };
    match task.task_type {
        TaskType::Put => placed_ids().next().is_some(),
        TaskType::Clean => placed_ids().any(|id| flag(id, |s| s.clean)),
        TaskType::Heat => placed_ids().any(|id| flag(id, |s| s.hot)),
        TaskType::Cool => placed_ids().any(|id| flag(id, |s| s.cold)),
        TaskType::Examine => state
            .object_states
            .iter()
            .any(|(id, s)| object_name(id) == wanted && s.lit),
        TaskType::PutTwo => placed_ids().count() >= 2,
    }
}

// ---------------------------------------------------------------------------
// Transition function
// ---------------------------------------------------------------------------

const OPENABLE_KINDS: [&str; 5] = ["cabinet", "drawer", "fridge", "microwave", "safe"];

pub(crate) fn kind_is_openable(kind: &str) -> bool {
    OPENABLE_KINDS.contains(&kind)
}

fn is_lamp(id: &str) -> bool {
    object_name(id).ends_with("lamp")
}

/// Joins names the way observations do: `"a, b, and c"` (the `", and"` also
/// appears in the two-element case), or `"nothing"` when empty.
pub fn render_list(items: &[String]) -> String {
    match items {
        [] => "nothing".to_string(),
        [only] => only.clone(),
        [init @ .., last] => format!("{}, and {}", init.join(", "), last),
    }
}

fn look_at(recep: &Receptacle) -> String {
    if recep.openable && !recep.open {
        return format!("{} is closed.", recep.id);
    }
    let preposition = if recep.openable { "In" } else { "On" };
    format!(
        "{preposition} {}, you see {}.",
        recep.id,
        render_list(&recep.contents)
    )
}

/// Applies `action` to `state`, mutating it in place. Rules:
///
/// * preconditions that fail leave the state untouched and observe
///   `"Nothing happens."` — and so does any action whose effect would be a
///   no-op, which keeps "Nothing happens" equivalent to "state unchanged";
/// * the goal predicate is evaluated only after a successful `put_in_or_on`
///   or `use`, and ends the episode with reward `+1`.
pub fn execute_action(state: &mut WorldState, task: &TaskSpec, action: &EnvAction) -> ActionResult {
    let before = state.clone();
    let observation = attempt(state, action);
    let observation = match observation {
        Some(text) if *state != before => text,
        _ => {
            *state = before;
            "Nothing happens.".to_string()
        }
    };

    let mut done = false;
    let mut reward = 0;
    let goal_relevant = matches!(action, EnvAction::PutInOrOn(..) | EnvAction::Use(..));
    if goal_relevant && observation != "Nothing happens." && check_goal(state, task) {
        done = true;
        reward = 1;
    }

    ActionResult {
        observation,
        state_summary: state.summary(),
        done,
        reward,
    }
}

/// Tries to apply the action, returning its observation on success and `None`
/// on a precondition failure. May mutate `state`; the caller reverts no-ops.
fn attempt(state: &mut WorldState, action: &EnvAction) -> Option<String> {
    match action {
        EnvAction::GoTo(recep_id) => {
            state.receptacle(recep_id)?;
            if state.agent_location == AgentLocation::At(recep_id.clone()) {
                return None;
            }
            state.agent_location = AgentLocation::At(recep_id.clone());
            Some(look_at(state.receptacle(recep_id).expect("checked above")))
        }
        EnvAction::Open(recep_id) => {
            if state.agent_location != AgentLocation::At(recep_id.clone()) {
                return None;
            }
            let recep = state.receptacle_mut(recep_id)?;
            if !recep.openable || recep.open {
                return None;
            }
            recep.open = true;
            Some(format!(
                "You open {}. In {}, you see {}.",
                recep_id,
                recep_id,
                render_list(&state.receptacle(recep_id).expect("just opened").contents)
            ))
        }
        EnvAction::Close(recep_id) => {
            if state.agent_location != AgentLocation::At(recep_id.clone()) {
                return None;
            }
            let recep = state.receptacle_mut(recep_id)?;
            if !recep.openable || !recep.open {
                return None;
            }
            recep.open = false;
            Some(format!("You close {recep_id}."))
        }
        EnvAction::TakeFrom(object_id, recep_id) => {
            if state.agent_location != AgentLocation::At(recep_id.clone())
                || state.holding.is_some()
            {
                return None;
            }
            let recep = state.receptacle_mut(recep_id)?;
            let slot = recep.contents.iter().position(|o| o == object_id)?;
            recep.contents.remove(slot);
            state.holding = Some(object_id.clone());
            Some(format!("You take {object_id} from {recep_id}."))
        }
        EnvAction::PutInOrOn(object_id, recep_id) => {
            if state.agent_location != AgentLocation::At(recep_id.clone())
                || state.holding.as_deref() != Some(object_id.as_str())
            {
                return None;
            }
            let recep = state.receptacle_mut(recep_id)?;
            recep.contents.push(object_id.clone());
            state.holding = None;
            Some(format!("You put {object_id} in/on {recep_id}."))
        }
        EnvAction::Use(object_id) => {
            if !is_lamp(object_id) {
                return None;
            }
            let here = match &state.agent_location {
                AgentLocation::At(id) => id.clone(),
                AgentLocation::Middle => return None,
            };
            let nearby = state
                .receptacle(&here)
                .map(|r| r.contents.iter().any(|o| o == object_id))
                .unwrap_or(false);
            if !nearby {
                return None;
            }
            if let Some(lamp_state) = state.object_states.get_mut(object_id) {
                lamp_state.lit = true;
            }
            if let Some(held) = state.holding.clone() {
                if let Some(held_state) = state.object_states.get_mut(&held) {
                    held_state.lit = true;
                }
            }
            Some(format!("You turn on {object_id}."))
        }
        EnvAction::CleanWith(object_id, recep_id) => {
            appliance_step(state, object_id, recep_id, &["sinkbasin", "bathtubbasin"], |s| {
                s.clean = true;
            })
            .then(|| format!("You clean {object_id} using {recep_id}."))
        }
        EnvAction::HeatWith(object_id, recep_id) => {
            appliance_step(state, object_id, recep_id, &["microwave"], |s| {
                s.hot = true;
                s.cold = false;
            })
            .then(|| format!("You heat {object_id} using {recep_id}."))
        }
        EnvAction::CoolWith(object_id, recep_id) => {
            appliance_step(state, object_id, recep_id, &["fridge"], |s| {
                s.cold = true;
                s.hot = false;
            })
            .then(|| format!("You cool {object_id} using {recep_id}."))
        }
    }
}

/// Shared precondition for clean/heat/cool: the agent stands at an appliance
/// of the right kind and the object is accessible (held, or inside that
/// appliance). On success applies `effect` to the object's state flags.
fn appliance_step(
    state: &mut WorldState,
    object_id: &str,
    recep_id: &str,
    kinds: &[&str],
    effect: fn(&mut ObjectState),
) -> bool {
    if state.agent_location != AgentLocation::At(recep_id.to_string()) {
        return false;
    }
    let Some(recep) = state.receptacle(recep_id) else {
        return false;
    };
    if !kinds.contains(&recep.kind.as_str()) {
        return false;
    }
    let accessible = state.holding.as_deref() == Some(object_id)
        || recep.contents.iter().any(|o| o == object_id);
    if !accessible {
        return false;
    }
    match state.object_states.get_mut(object_id) {
        Some(flags) => {
            effect(flags);
            true
        }
        None => false,
    }
}

// ---------------------------------------------------------------------------
// Episode wrapper
// ---------------------------------------------------------------------------

/// One live episode: a world plus budget and termination bookkeeping.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TextWorld {
    state: WorldState,
    task: TaskSpec,
    max_actions: u32,
    actions_taken: u32,
    done: bool,
    reward: i32,
}

impl TextWorld {
    pub fn new(task: TaskSpec) -> Self {
        let state = generate_world(&task);
        TextWorld {
            state,
            task,
            max_actions: MAX_ACTIONS,
            actions_taken: 0,
            done: false,
            reward: 0,
        }
    }

    #[cfg(test)]
    pub(crate) fn with_state(task: TaskSpec, state: WorldState) -> Self {
        TextWorld {
            state,
            task,
            max_actions: MAX_ACTIONS,
            actions_taken: 0,
            done: false,
            reward: 0,
        }
    }

    /// `"You are in the middle of a room. Looking quickly around you, you see
    /// cabinet_4, cabinet_3, ..., and toilet_1."`
    pub fn initial_observation(&self) -> String {
        let ids: Vec<String> = self.state.receptacles.iter().map(|r| r.id.clone()).collect();
        format!(
            "You are in the middle of a room. Looking quickly around you, you see {}.",
            render_list(&ids)
        )
    }

    pub fn state(&self) -> &WorldState {
        &self.state
    }

    pub fn task(&self) -> &TaskSpec {
        &self.task
    }

    pub fn done(&self) -> bool {
        self.done
    }

    /// Episode reward: `0` until the episode ends.
    pub fn reward(&self) -> i32 {
        self.reward
    }

    pub fn actions_taken(&self) -> u32 {
        self.actions_taken
    }

    pub fn actions_remaining(&self) -> u32 {
        self.max_actions.saturating_sub(self.actions_taken)
    }

    /// Executes one action. Stepping a finished episode is an error; stepping
    /// past the action budget ends the episode with reward `-1` and reports
    /// `BudgetExhausted`.
    pub fn step(&mut self, action: &EnvAction) -> Result<ActionResult, EnvError> {
        if self.done {
            return Err(EnvError::EpisodeOver);
        }
        if self.actions_taken >= self.max_actions {
            self.done = true;
            self.reward = -1;
            return Err(EnvError::BudgetExhausted(self.max_actions));
        }
        self.actions_taken += 1;
        let result = execute_action(&mut self.state, &self.task, action);
        if result.done {
            self.done = true;
            self.reward = result.reward;
        }
        Ok(result)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture_task() -> TaskSpec {
        TaskSpec {
            task_type: TaskType::Put,
            goal: GoalParams {
                object: "spraybottle".into(),
                target: "toilet".into(),
            },
            seed: 11,
            text: "put some spraybottle in/on toilet.".into(),
        }
    }

    fn recep(id: &str, openable: bool, open: bool, contents: &[&str]) -> Receptacle {
        Receptacle {
            id: id.to_string(),
            kind: object_name(id).to_string(),
            openable,
            open,
            contents: contents.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn fixture_state() -> WorldState {
        let receptacles = vec![
            recep("cabinet_2", true, false, &["spraybottle_1"]),
            recep("cabinet_1", true, false, &[]),
            recep("countertop_1", false, false, &["soapbar_1"]),
            recep("toilet_1", false, false, &[]),
        ];
        let mut object_states = BTreeMap::new();
        object_states.insert("spraybottle_1".to_string(), ObjectState::default());
        object_states.insert("soapbar_1".to_string(), ObjectState::default());
        WorldState {
            receptacles,
            agent_location: AgentLocation::Middle,
            holding: None,
            object_states,
        }
    }

    #[test]
    fn go_to_closed_receptacle_reports_closed() {
        let mut world = TextWorld::with_state(fixture_task(), fixture_state());
        let result = world.step(&EnvAction::GoTo("cabinet_1".into())).unwrap();
        assert_eq!(result.observation, "cabinet_1 is closed.");
        assert_eq!(result.state_summary, "You are at cabinet_1 and holding nothing.");
        assert_eq!(
            result.rendered(),
            "cabinet_1 is closed. You are at cabinet_1 and holding nothing."
        );
    }

    #[test]
    fn open_reveals_contents() {
        let mut world = TextWorld::with_state(fixture_task(), fixture_state());
        world.step(&EnvAction::GoTo("cabinet_2".into())).unwrap();
        let result = world.step(&EnvAction::Open("cabinet_2".into())).unwrap();
        assert_eq!(
            result.observation,
            "You open cabinet_2. In cabinet_2, you see spraybottle_1."
        );
    }

    #[test]
    fn unknown_tokens_degrade_to_nothing_happens() {
        let mut world = TextWorld::with_state(fixture_task(), fixture_state());
        let before = world.state().digest();
        let result = world.step(&EnvAction::GoTo("portal_9".into())).unwrap();
        assert_eq!(result.observation, "Nothing happens.");
        assert_eq!(world.state().digest(), before);
    }

    #[test]
    fn goal_fires_on_put_and_emits_reward_once() {
        let mut world = TextWorld::with_state(fixture_task(), fixture_state());
        for action in [
            EnvAction::GoTo("cabinet_2".into()),
            EnvAction::Open("cabinet_2".into()),
            EnvAction::TakeFrom("spraybottle_1".into(), "cabinet_2".into()),
            EnvAction::GoTo("toilet_1".into()),
        ] {
            let result = world.step(&action).unwrap();
            assert!(!result.done, "premature end on {action:?}");
        }
        let result = world
            .step(&EnvAction::PutInOrOn("spraybottle_1".into(), "toilet_1".into()))
            .unwrap();
        assert!(result.done);
        assert_eq!(result.reward, 1);
        assert_eq!(
            result.rendered(),
            "You put spraybottle_1 in/on toilet_1. You are at toilet_1 and holding nothing. \
             This epoch is done. Succeed: True"
        );
        assert_eq!(world.step(&EnvAction::GoTo("cabinet_1".into())), Err(EnvError::EpisodeOver));
    }

    #[test]
    fn budget_exhaustion_fails_the_episode() {
        let mut world = TextWorld::with_state(fixture_task(), fixture_state());
        let hop = [EnvAction::GoTo("cabinet_1".into()), EnvAction::GoTo("toilet_1".into())];
        for i in 0..MAX_ACTIONS {
            world.step(&hop[(i % 2) as usize]).unwrap();
        }
        assert_eq!(
            world.step(&EnvAction::GoTo("cabinet_1".into())),
            Err(EnvError::BudgetExhausted(MAX_ACTIONS))
        );
        assert!(world.done());
        assert_eq!(world.reward(), -1);
    }

    #[test]
    fn clean_goal_requires_both_flag_and_placement() {
        let task = TaskSpec {
            task_type: TaskType::Clean,
            goal: GoalParams {
                object: "soapbar".into(),
                target: "cabinet".into(),
            },
            seed: 3,
            text: "clean some soapbar and put it in cabinet.".into(),
        };
        let mut state = fixture_state();
        state
            .receptacles
            .push(recep("sinkbasin_1", false, false, &[]));
        // Flag set but object still at the sink: goal must stay false.
        state.object_states.get_mut("soapbar_1").unwrap().clean = true;
        let recep_index = state
            .receptacles
            .iter()
            .position(|r| r.id == "countertop_1")
            .unwrap();
        assert!(!check_goal(&state, &task));
        // Move it into a cabinet: now the goal holds.
        let soap = state.receptacles[recep_index].contents.pop().unwrap();
        state
            .receptacle_mut("cabinet_1")
            .unwrap()
            .contents
            .push(soap);
        assert!(check_goal(&state, &task));
    }

    #[test]
    fn heat_requires_colocation_with_the_appliance() {
        let task = TaskSpec {
            task_type: TaskType::Heat,
            goal: GoalParams {
                object: "mug".into(),
                target: "cabinet".into(),
            },
            seed: 5,
            text: "heat some mug and put it in cabinet.".into(),
        };
        let mut state = fixture_state();
        state.receptacles.push(recep("shelf_1", false, false, &[]));
        state.receptacles.push(recep("microwave_1", true, true, &[]));
        state.object_states.insert("mug_1".to_string(), ObjectState::default());
        state.agent_location = AgentLocation::At("shelf_1".into());
        state.holding = Some("mug_1".into());
        let mut world = TextWorld::with_state(task, state);

        let miss = world
            .step(&EnvAction::HeatWith("mug_1".into(), "microwave_1".into()))
            .unwrap();
        assert_eq!(
            miss.rendered(),
            "Nothing happens. You are at shelf_1 and holding mug_1."
        );

        world.step(&EnvAction::GoTo("microwave_1".into())).unwrap();
        let hit = world
            .step(&EnvAction::HeatWith("mug_1".into(), "microwave_1".into()))
            .unwrap();
        assert_eq!(hit.observation, "You heat mug_1 using microwave_1.");
        assert!(world.state().object_states["mug_1"].hot);
    }

    #[test]
    fn examine_goal_needs_the_object_in_hand_while_using_the_lamp() {
        let task = TaskSpec {
            task_type: TaskType::Examine,
            goal: GoalParams {
                object: "book".into(),
                target: "desklamp".into(),
            },
            seed: 9,
            text: "look at book under the desklamp.".into(),
        };
        let mut state = fixture_state();
        state.receptacles.push(recep("desk_1", false, false, &["desklamp_1", "book_1"]));
        state.object_states.insert("desklamp_1".to_string(), ObjectState::default());
        state.object_states.insert("book_1".to_string(), ObjectState::default());
        let mut world = TextWorld::with_state(task, state);

        world.step(&EnvAction::GoTo("desk_1".into())).unwrap();
        let unheld = world.step(&EnvAction::Use("desklamp_1".into())).unwrap();
        assert!(!unheld.done, "lamp on without the book in hand must not finish");

        world
            .step(&EnvAction::TakeFrom("book_1".into(), "desk_1".into()))
            .unwrap();
        let held = world.step(&EnvAction::Use("desklamp_1".into())).unwrap();
        assert!(held.done);
        assert_eq!(held.reward, 1);
        assert_eq!(held.observation, "You turn on desklamp_1.");
    }

    #[test]
    fn list_rendering_keeps_the_comma_before_and() {
        assert_eq!(render_list(&[]), "nothing");
        assert_eq!(render_list(&["mug_1".into()]), "mug_1");
        assert_eq!(render_list(&["box_3".into(), "tissuebox_2".into()]), "box_3, and tissuebox_2");
        assert_eq!(
            render_list(&["candle_1".into(), "cloth_2".into(), "soapbar_1".into()]),
            "candle_1, cloth_2, and soapbar_1"
        );
    }

    #[test]
    fn object_name_strips_only_numeric_suffixes() {
        assert_eq!(object_name("mug_1"), "mug");
        assert_eq!(object_name("spraybottle_12"), "spraybottle");
        assert_eq!(object_name("desklamp_2"), "desklamp");
        assert_eq!(object_name("oddity"), "oddity");
        assert_eq!(object_name("mug_"), "mug_");
    }
}
