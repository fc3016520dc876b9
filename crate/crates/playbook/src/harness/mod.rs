//! Stage orchestration: build → formulate → test, with checkpointed
//! resumption, line-delimited run logs, offline replay, and the four
//! ablation toggles.

pub mod config;
pub mod metrics;
pub mod runlog;

pub use config::{Ablation, BackendChoice, BackendKind, ConfigError, RunConfig, RunPaths};
pub use metrics::{EpisodeSummary, Metrics, TypeMetrics};
pub use runlog::{LogRecord, RunLog};

use crate::builder::{classify_case, consolidate, manage_rules, Case, CaseLabel, ManageOutcome};
use crate::derive_seed;
use crate::formulator::{formulate, FormulateError, Manual};
use crate::libraries::Libraries;
use crate::llm::{
    prompts, Backend, BackendError, ChatSession, HttpBackend, HttpConfig, RecordingBackend,
    ReplayBackend, ReplayRecord,
};
use crate::persona::persona_backend;
use crate::planner::{conclude, run_episode, EpisodeBudget, EpisodeSetup, TrajectoryRecord};
use crate::rulestore::{RuleStore, RuleType, TrajectoryArchive};
use crate::text_hash;
use crate::textworld::{sample_tasks, TaskSpec, TaskType};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("backend failure: {0}")]
    Backend(#[from] BackendError),
    #[error("formulation failed: {0}")]
    Formulate(#[from] FormulateError),
    #[error("i/o failure on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("artifact problem: {0}")]
    Artifact(String),
    #[error("test stage mutated frozen state: {0}")]
    IsolationViolated(String),
    #[error(
        "build aborted after {completed} completed episodes; resume from checkpoint {checkpoint}: {source}"
    )]
    Aborted {
        completed: usize,
        checkpoint: String,
        #[source]
        source: BackendError,
    },
    #[error("replay refused: {0}")]
    ReplayRefused(String),
    #[error("replay diverged at session {session}, exchange {exchange}: {detail}")]
    Divergence {
        session: String,
        exchange: usize,
        detail: String,
    },
    #[error("replayed {artifact} does not match the recorded {artifact}")]
    ArtifactMismatch { artifact: String },
    #[error("internal: {0}")]
    Internal(String),
}

fn io_err(path: &Path, source: std::io::Error) -> HarnessError {
    HarnessError::Io { path: path.display().to_string(), source }
}

fn log_err(source: std::io::Error) -> HarnessError {
    HarnessError::Io { path: "(run log)".to_string(), source }
}

// ---------------------------------------------------------------------------
// Initial rules and schedules
// ---------------------------------------------------------------------------

const INITIAL_MECHANISM: &str = "At the initial observation of the environment, the agent can \
only observe receptacles, such as cabinet_1, countertop_1. The agent needs to go to the \
receptacle to view objects in or on it, even for open receptacles.";

const INITIAL_HELPER: &str = "If there are multiple receptacles to be searched, the agent can \
write and use the 'find_object' method as shown in the example.";

const INITIAL_HELPER_EXAMPLE: &str = "# Define helper method to find the object that is needed
def find_object(agent, recep_to_check, object_name):
    for receptacle in recep_to_check:
        observation = agent.go_to(receptacle)
        # Check if we need to open the receptacle. If we do, open it.
        if 'closed' in observation:
            observation = agent.open(receptacle)
        # Check if the object is in/on the receptacle.
        if object_name in observation:
            object_ids = get_object_with_id(observation, object_name)
            return object_ids, receptacle
    return None, None";

const INITIAL_PROCESS: &str = "If the task is to put some object on some receptacle, first use \
'find_object' method in rule_1 to search all receptacles, take the object, then go to the \
target receptacle and put the object.";

const INITIAL_PROCESS_EXAMPLE: &str = "# For example, to put some spraybottle on toilet:
# [Step 1] Use 'find_object' method in rule_1 to search all receptacles
recep_to_check = ...
object_ids, receptacle_with_spraybottle = find_object(agent, recep_to_check, 'spraybottle')
# [Step 2] Take the spraybottle
# [Step 3] Go to a toilet and put the spraybottle on it
# If the toilet is closed, open it first.";

/// The three user-provided rules every run starts from: the observation
/// mechanism, the `find_object` helper, and the Put success process.
pub fn initial_store() -> RuleStore {
    let mut store = RuleStore::new();
    store.seed_rule(RuleType::SpecialMechanism, INITIAL_MECHANISM, "", "Provided by User.");
    store.seed_rule(
        RuleType::UsefulHelperMethod,
        INITIAL_HELPER,
        INITIAL_HELPER_EXAMPLE,
        "Essential helper method provided by User.",
    );
    store.seed_rule(
        RuleType::SuccessProcess,
        INITIAL_PROCESS,
        INITIAL_PROCESS_EXAMPLE,
        "Provided by User.",
    );
    store
}

/// Samples `build_tasks_per_type` tasks per type and shuffles the combined
/// schedule; both draws come from labeled derivations of the root seed.
pub fn build_schedule(config: &RunConfig) -> Vec<TaskSpec> {
    schedule(config, "build", config.build_tasks_per_type)
}

/// Held-out test tasks: same construction, disjoint seed labels.
pub fn test_schedule(config: &RunConfig) -> Vec<TaskSpec> {
    schedule(config, "test", config.test_tasks_per_type)
}

fn schedule(config: &RunConfig, stage: &str, per_type: u32) -> Vec<TaskSpec> {
    let mut tasks = Vec::new();
    for task_type in TaskType::ALL {
        let seed = derive_seed(
            config.root_seed,
            &format!("{stage}/tasks/{}", task_type.display_name()),
        );
        tasks.extend(sample_tasks(task_type, per_type, seed));
    }
    let mut rng =
        ChaCha8Rng::seed_from_u64(derive_seed(config.root_seed, &format!("{stage}/shuffle")));
    tasks.shuffle(&mut rng);
    tasks
}

// ---------------------------------------------------------------------------
// Backends
// ---------------------------------------------------------------------------

/// Creates per-session backends; the test stage uses one per episode so
/// episodes can run concurrently.
pub trait BackendFactory: Sync {
    fn create(&self) -> Box<dyn Backend>;
}

/// Factory driven by the run configuration.
pub struct ConfigFactory {
    choice: BackendChoice,
}

impl ConfigFactory {
    pub fn new(choice: BackendChoice) -> Self {
        ConfigFactory { choice }
    }
}

impl BackendFactory for ConfigFactory {
    fn create(&self) -> Box<dyn Backend> {
        make_backend(&self.choice)
    }
}

/// Factory serving recorded exchanges; every instance shares the same
/// validated record set.
pub struct ReplayFactory {
    records: std::sync::Arc<Vec<ReplayRecord>>,
}

impl BackendFactory for ReplayFactory {
    fn create(&self) -> Box<dyn Backend> {
        Box::new(
            ReplayBackend::load(self.records.as_ref().clone())
                .expect("records were validated when the factory was built"),
        )
    }
}

pub fn make_backend(choice: &BackendChoice) -> Box<dyn Backend> {
    match choice.kind {
        BackendKind::Scripted => Box::new(persona_backend()),
        BackendKind::Http => {
            let http = HttpConfig {
                base_url: choice.endpoint.clone(),
                api_key: std::env::var(&choice.api_key_env).ok(),
                model: choice.model.clone(),
                ..HttpConfig::default()
            };
            Box::new(HttpBackend::new(http))
        }
    }
}

/// Mutable-borrow adapter so stage internals can wrap a caller's backend in
/// a [`RecordingBackend`] without taking ownership.
struct BorrowedBackend<'a>(&'a mut dyn Backend);

impl Backend for BorrowedBackend<'_> {
    fn name(&self) -> &'static str {
        self.0.name()
    }

    fn complete(
        &mut self,
        session_id: &str,
        messages: &[crate::llm::ChatMessage],
    ) -> Result<String, BackendError> {
        self.0.complete(session_id, messages)
    }
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

/// Everything needed to resume an aborted build from the last episode
/// boundary. Partial work from the aborted episode is deliberately dropped:
/// the episode re-runs from scratch on resume.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub semantic_hash: String,
    pub next_index: usize,
    pub epoch_counter: usize,
    pub consolidation_counter: usize,
    pub store: String,
    pub libraries: Libraries,
    pub archive: TrajectoryArchive,
    pub streaks: BTreeMap<TaskType, u32>,
    pub solved: BTreeSet<TaskType>,
    pub episodes: Vec<EpisodeSummary>,
    /// Trajectories awaiting the deferred builder pass (offline mode).
    pub pending: Vec<TrajectoryRecord>,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<(), HarnessError> {
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent).map_err(|e| io_err(path, e))?;
            }
        }
        let text = serde_json::to_string_pretty(self).expect("checkpoint serializes");
        std::fs::write(path, text).map_err(|e| io_err(path, e))
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| HarnessError::Artifact(format!("checkpoint {}: {e}", path.display())))
    }
}

// ---------------------------------------------------------------------------
// Build stage
// ---------------------------------------------------------------------------

#[derive(Debug)]
pub struct BuildArtifacts {
    pub store: RuleStore,
    pub libraries: Libraries,
    pub archive: TrajectoryArchive,
    pub episodes: Vec<EpisodeSummary>,
    pub solved: BTreeSet<TaskType>,
}

struct BuildState {
    next_index: usize,
    epoch_counter: usize,
    consolidation_counter: usize,
    store: RuleStore,
    libraries: Libraries,
    archive: TrajectoryArchive,
    streaks: BTreeMap<TaskType, u32>,
    solved: BTreeSet<TaskType>,
    episodes: Vec<EpisodeSummary>,
    pending: Vec<TrajectoryRecord>,
    /// Rule rendering frozen at stage start, used by offline mode.
    initial_render: String,
}

impl BuildState {
    fn fresh() -> Self {
        let store = initial_store();
        let initial_render = store.render_for_prompt(false);
        BuildState {
            next_index: 0,
            epoch_counter: 0,
            consolidation_counter: 0,
            store,
            libraries: Libraries::new(),
            archive: TrajectoryArchive::new(),
            streaks: BTreeMap::new(),
            solved: BTreeSet::new(),
            episodes: Vec::new(),
            pending: Vec::new(),
            initial_render,
        }
    }

    fn from_checkpoint(checkpoint: Checkpoint, config: &RunConfig) -> Result<Self, HarnessError> {
        if checkpoint.semantic_hash != config.semantic_hash() {
            return Err(HarnessError::Artifact(
                "checkpoint was produced under a different configuration (semantic hash mismatch)"
                    .to_string(),
            ));
        }
        let store = RuleStore::restore(&checkpoint.store)
            .map_err(|e| HarnessError::Artifact(format!("checkpoint store: {e}")))?;
        Ok(BuildState {
            next_index: checkpoint.next_index,
            epoch_counter: checkpoint.epoch_counter,
            consolidation_counter: checkpoint.consolidation_counter,
            store,
            libraries: checkpoint.libraries,
            archive: checkpoint.archive,
            streaks: checkpoint.streaks,
            solved: checkpoint.solved,
            episodes: checkpoint.episodes,
            pending: checkpoint.pending,
            initial_render: initial_store().render_for_prompt(false),
        })
    }

    fn to_checkpoint(&self, config: &RunConfig) -> Checkpoint {
        Checkpoint {
            semantic_hash: config.semantic_hash(),
            next_index: self.next_index,
            epoch_counter: self.epoch_counter,
            consolidation_counter: self.consolidation_counter,
            store: self.store.snapshot(),
            libraries: self.libraries.clone(),
            archive: self.archive.clone(),
            streaks: self.streaks.clone(),
            solved: self.solved.clone(),
            episodes: self.episodes.clone(),
            pending: self.pending.clone(),
        }
    }
}

/// Runs the build stage. On a backend hard error the last episode-boundary
/// checkpoint is left at `config.paths.checkpoint` and
/// [`HarnessError::Aborted`] is returned; passing the loaded checkpoint as
/// `resume_from` continues the run.
pub fn build_stage(
    config: &RunConfig,
    backend: &mut dyn Backend,
    log: &mut RunLog,
    resume_from: Option<Checkpoint>,
) -> Result<BuildArtifacts, HarnessError> {
    let schedule = build_schedule(config);
    let mut state = match resume_from {
        Some(checkpoint) => BuildState::from_checkpoint(checkpoint, config)?,
        None => BuildState::fresh(),
    };
    let mut recording = RecordingBackend::new(BorrowedBackend(backend));
    log.note(format!(
        "build stage: {} scheduled tasks, starting at index {}",
        schedule.len(),
        state.next_index
    ))
    .map_err(log_err)?;
    state.to_checkpoint(config).save(&config.paths.checkpoint)?;

    while state.next_index < schedule.len() {
        let task = &schedule[state.next_index];
        if state.solved.contains(&task.task_type) {
            log.note(format!(
                "skipping schedule index {}: task type {} already solved",
                state.next_index,
                task.task_type.display_name()
            ))
            .map_err(log_err)?;
            state.next_index += 1;
            continue;
        }
        let result = run_build_episode(config, &mut recording, log, &mut state, task);
        drain_exchanges(&mut recording, log)?;
        match result {
            Ok(()) => {
                state.next_index += 1;
                state.to_checkpoint(config).save(&config.paths.checkpoint)?;
            }
            Err(HarnessError::Backend(source)) => {
                return Err(HarnessError::Aborted {
                    completed: state.episodes.len(),
                    checkpoint: config.paths.checkpoint.display().to_string(),
                    source,
                });
            }
            Err(other) => return Err(other),
        }
    }

    if config.ablation.offline_mode && !state.pending.is_empty() {
        log.note(format!(
            "offline mode: deferred builder pass over {} trajectories",
            state.pending.len()
        ))
        .map_err(log_err)?;
        while !state.pending.is_empty() {
            let record = state.pending[0].clone();
            let result = builder_pass(config, &mut recording, log, &mut state, &record);
            drain_exchanges(&mut recording, log)?;
            match result {
                Ok(case) => {
                    state.pending.remove(0);
                    if let Some(summary) = state
                        .episodes
                        .iter_mut()
                        .find(|s| s.episode_id == record.episode_id)
                    {
                        summary.case = case;
                    }
                    log.append(LogRecord::StoreSnapshot {
                        episode_id: record.episode_id.clone(),
                        store: state.store.snapshot(),
                    })
                    .map_err(log_err)?;
                    state.to_checkpoint(config).save(&config.paths.checkpoint)?;
                }
                Err(HarnessError::Backend(source)) => {
                    return Err(HarnessError::Aborted {
                        completed: state.episodes.len(),
                        checkpoint: config.paths.checkpoint.display().to_string(),
                        source,
                    });
                }
                Err(other) => return Err(other),
            }
        }
    }

    log.append(LogRecord::StoreSnapshot {
        episode_id: "final".to_string(),
        store: state.store.snapshot(),
    })
    .map_err(log_err)?;
    let libraries_json =
        serde_json::to_string_pretty(&state.libraries).expect("libraries serialize");
    log.append(LogRecord::Libraries { libraries: libraries_json.clone() }).map_err(log_err)?;

    std::fs::write(&config.paths.store, state.store.snapshot())
        .map_err(|e| io_err(&config.paths.store, e))?;
    std::fs::write(&config.paths.libraries, &libraries_json)
        .map_err(|e| io_err(&config.paths.libraries, e))?;

    Ok(BuildArtifacts {
        store: state.store,
        libraries: state.libraries,
        archive: state.archive,
        episodes: state.episodes,
        solved: state.solved,
    })
}

fn drain_exchanges<B: Backend>(
    recording: &mut RecordingBackend<B>,
    log: &mut RunLog,
) -> Result<(), HarnessError> {
    for exchange in recording.take_records() {
        log.append(LogRecord::Exchange { exchange }).map_err(log_err)?;
    }
    Ok(())
}

fn run_build_episode(
    config: &RunConfig,
    backend: &mut dyn Backend,
    log: &mut RunLog,
    state: &mut BuildState,
    task: &TaskSpec,
) -> Result<(), HarnessError> {
    let episode_id = format!("epoch_{}", state.epoch_counter);
    let knowledge = if config.ablation.offline_mode {
        state.initial_render.clone()
    } else {
        state.store.render_for_prompt(false)
    };
    let retrieved = if config.ablation.no_libraries {
        None
    } else {
        state.libraries.framed_for_prompt(task.task_type)
    };
    let setup = EpisodeSetup {
        task,
        knowledge_label: "Current rules",
        knowledge: &knowledge,
        retrieved,
        budget: EpisodeBudget {
            max_replans: config.max_replans,
            max_actions: config.max_actions,
        },
    };
    let mut session =
        ChatSession::new(format!("planner/{episode_id}"), prompts::planner_system());
    let mut record = run_episode(&episode_id, &setup, &mut session, backend)?;
    conclude(&mut record, &mut session, backend)?;
    state.epoch_counter += 1;
    state.archive.insert(&episode_id, record.render_for_builder());
    if !config.ablation.no_libraries {
        if let Some(anomaly) = state.libraries.save_from_conclusion(&record) {
            log.note(anomaly).map_err(log_err)?;
        }
    }

    // Streak bookkeeping drives the per-type early stop.
    let streak = state.streaks.entry(task.task_type).or_insert(0);
    if record.outcome.is_success() {
        *streak += 1;
    } else {
        *streak = 0;
    }
    if *streak >= config.early_stop_streak {
        state.solved.insert(task.task_type);
        log.note(format!(
            "task type {} solved: {} successes in a row",
            task.task_type.display_name(),
            streak
        ))
        .map_err(log_err)?;
    }

    let case = if config.ablation.offline_mode {
        state.pending.push(record.clone());
        String::new()
    } else {
        builder_pass(config, backend, log, state, &record)?
    };
    let summary = EpisodeSummary::from_record(&record, &case);
    log.append(LogRecord::Episode { summary: summary.clone() }).map_err(log_err)?;
    state.episodes.push(summary);
    if !config.ablation.offline_mode {
        log.append(LogRecord::StoreSnapshot {
            episode_id: episode_id.clone(),
            store: state.store.snapshot(),
        })
        .map_err(log_err)?;
    }
    Ok(())
}

fn builder_pass(
    config: &RunConfig,
    backend: &mut dyn Backend,
    log: &mut RunLog,
    state: &mut BuildState,
    record: &TrajectoryRecord,
) -> Result<String, HarnessError> {
    builder_pass_impl(
        config,
        backend,
        log,
        &mut state.store,
        &state.archive,
        &mut state.consolidation_counter,
        record,
    )
}

/// One builder pass over a finished trajectory: classify (unless ablated),
/// manage rules, then consolidate if the store went over capacity.
fn builder_pass_impl(
    config: &RunConfig,
    backend: &mut dyn Backend,
    log: &mut RunLog,
    store: &mut RuleStore,
    archive: &TrajectoryArchive,
    consolidation_counter: &mut usize,
    record: &TrajectoryRecord,
) -> Result<String, HarnessError> {
    let mut session = ChatSession::new(
        format!("builder/{}", record.episode_id),
        prompts::BUILDER_SYSTEM,
    );
    let label = if config.ablation.no_case_prompts {
        CaseLabel {
            case: Case::Case2IndirectSuccessImperfectRules,
            fault_rationale: String::new(),
        }
    } else {
        let (label, notes) = classify_case(record, &mut session, backend)?;
        for note in notes {
            log.note(format!("{}: {note}", record.episode_id)).map_err(log_err)?;
        }
        label
    };
    let outcome = manage_rules(
        record,
        &label,
        store,
        Some(archive),
        &mut session,
        backend,
        config.n_max,
        config.op_budget,
        false,
    )?;
    log_manage_outcome(log, &record.episode_id, &outcome)?;

    if store.over_capacity(config.n_max) {
        let consolidation_id = format!("consolidation_{}", consolidation_counter);
        *consolidation_counter += 1;
        let mut consolidation_session =
            ChatSession::new(&consolidation_id, prompts::consolidator_system(config.n_max));
        let outcome = consolidate(
            &consolidation_id,
            store,
            archive,
            &mut consolidation_session,
            backend,
            config.n_max,
            config.op_budget,
        )?;
        log_manage_outcome(log, &consolidation_id, &outcome)?;
    }
    Ok(label.case.to_string())
}

fn log_manage_outcome(
    log: &mut RunLog,
    episode_id: &str,
    outcome: &ManageOutcome,
) -> Result<(), HarnessError> {
    log.append(LogRecord::Ops {
        episode_id: episode_id.to_string(),
        ledger: outcome.ledger.clone(),
        notes: outcome.log.clone(),
        forced_stop: outcome.forced_stop,
    })
    .map_err(log_err)
}

// ---------------------------------------------------------------------------
// Formulate stage
// ---------------------------------------------------------------------------

pub fn formulate_stage(
    config: &RunConfig,
    store: &RuleStore,
    backend: &mut dyn Backend,
    log: &mut RunLog,
) -> Result<Manual, HarnessError> {
    let mut recording = RecordingBackend::new(BorrowedBackend(backend));
    let mut session = ChatSession::new("formulator", prompts::FORMULATOR_SYSTEM);
    let result = formulate(store, &mut session, &mut recording);
    drain_exchanges(&mut recording, log)?;
    let outcome = result?;
    for note in &outcome.log {
        log.note(format!("formulator: {note}")).map_err(log_err)?;
    }
    log.append(LogRecord::Manual { text: outcome.manual.rendered.clone() }).map_err(log_err)?;
    std::fs::write(&config.paths.manual, &outcome.manual.rendered)
        .map_err(|e| io_err(&config.paths.manual, e))?;
    Ok(outcome.manual)
}

// ---------------------------------------------------------------------------
// Test stage
// ---------------------------------------------------------------------------

/// Evaluates the frozen store/manual/libraries over the held-out schedule.
/// Episodes run concurrently up to `config.test_parallelism` when the
/// `parallel` feature is enabled; results are aggregated in schedule order
/// either way, so the metrics and run log are identical across modes.
pub fn test_stage(
    config: &RunConfig,
    store: &RuleStore,
    libraries: &Libraries,
    manual: Option<&Manual>,
    factory: &dyn BackendFactory,
    log: &mut RunLog,
) -> Result<Metrics, HarnessError> {
    let store_hash_before = text_hash(&store.snapshot());
    let libraries_json = serde_json::to_string(libraries).expect("libraries serialize");
    let libraries_hash_before = text_hash(&libraries_json);

    let (knowledge_label, knowledge) = match manual {
        Some(manual) => ("Manual", manual.rendered.clone()),
        None => ("Current rules", store.render_for_prompt(false)),
    };
    let schedule = test_schedule(config);
    log.note(format!("test stage: {} tasks", schedule.len())).map_err(log_err)?;

    let run_one = |index: usize,
                   task: &TaskSpec|
     -> Result<(EpisodeSummary, Vec<ReplayRecord>), BackendError> {
        let episode_id = format!("test_{index}");
        let retrieved = if config.ablation.no_libraries {
            None
        } else {
            libraries.framed_for_prompt(task.task_type)
        };
        let setup = EpisodeSetup {
            task,
            knowledge_label,
            knowledge: &knowledge,
            retrieved,
            budget: EpisodeBudget {
                max_replans: config.max_replans,
                max_actions: config.max_actions,
            },
        };
        let mut backend = RecordingBackend::new(factory.create());
        let mut session =
            ChatSession::new(format!("planner/{episode_id}"), prompts::planner_system());
        let record = run_episode(&episode_id, &setup, &mut session, &mut backend)?;
        Ok((EpisodeSummary::from_record(&record, ""), backend.take_records()))
    };

    let results = run_indexed(&schedule, config.test_parallelism, run_one)?;

    let mut episodes = Vec::with_capacity(results.len());
    for (summary, exchanges) in results {
        for exchange in exchanges {
            log.append(LogRecord::Exchange { exchange }).map_err(log_err)?;
        }
        log.append(LogRecord::Episode { summary: summary.clone() }).map_err(log_err)?;
        episodes.push(summary);
    }
    let metrics = Metrics::from_episodes(episodes);
    log.append(LogRecord::Metrics { metrics: metrics.clone() }).map_err(log_err)?;
    std::fs::write(&config.paths.metrics, metrics.canonical_json())
        .map_err(|e| io_err(&config.paths.metrics, e))?;

    if text_hash(&store.snapshot()) != store_hash_before {
        return Err(HarnessError::IsolationViolated("rule store changed".to_string()));
    }
    let libraries_json_after = serde_json::to_string(libraries).expect("libraries serialize");
    if text_hash(&libraries_json_after) != libraries_hash_before {
        return Err(HarnessError::IsolationViolated("libraries changed".to_string()));
    }
    Ok(metrics)
}

/// Maps `run_one` over the schedule, in parallel when compiled and asked
/// for, collecting results in schedule order.
fn run_indexed<T: Send>(
    schedule: &[TaskSpec],
    parallelism: usize,
    run_one: impl Fn(usize, &TaskSpec) -> Result<T, BackendError> + Sync,
) -> Result<Vec<T>, HarnessError> {
    #[cfg(feature = "parallel")]
    {
        if parallelism > 1 {
            use rayon::prelude::*;
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(parallelism)
                .build()
                .map_err(|e| HarnessError::Internal(format!("thread pool: {e}")))?;
            let results: Result<Vec<T>, BackendError> = pool.install(|| {
                schedule
                    .par_iter()
                    .enumerate()
                    .map(|(index, task)| run_one(index, task))
                    .collect()
            });
            return results.map_err(HarnessError::from);
        }
    }
    let _ = parallelism;
    let mut results = Vec::with_capacity(schedule.len());
    for (index, task) in schedule.iter().enumerate() {
        results.push(run_one(index, task)?);
    }
    Ok(results)
}

// ---------------------------------------------------------------------------
// Full pipeline
// ---------------------------------------------------------------------------

#[derive(Debug)]
pub struct RunSummary {
    pub build: BuildArtifacts,
    pub manual: Option<Manual>,
    pub metrics: Metrics,
}

/// Opens the run log and writes the leading config record.
pub fn start_log(config: &RunConfig) -> Result<RunLog, HarnessError> {
    let mut log =
        RunLog::create(&config.paths.run_log).map_err(|e| io_err(&config.paths.run_log, e))?;
    log.append(LogRecord::Config {
        semantic_hash: config.semantic_hash(),
        config: config.clone(),
    })
    .map_err(log_err)?;
    Ok(log)
}

/// build → formulate (unless ablated) → test, in one process with one
/// replayable run log.
pub fn run_all(config: &RunConfig) -> Result<RunSummary, HarnessError> {
    config.validate()?;
    let mut log = start_log(config)?;
    let mut backend = make_backend(&config.backend);

    log.append(LogRecord::Stage { name: "build".to_string() }).map_err(log_err)?;
    let build = build_stage(config, backend.as_mut(), &mut log, None)?;

    let manual = if config.ablation.no_formulation {
        None
    } else {
        log.append(LogRecord::Stage { name: "formulate".to_string() }).map_err(log_err)?;
        Some(formulate_stage(config, &build.store, backend.as_mut(), &mut log)?)
    };

    log.append(LogRecord::Stage { name: "test".to_string() }).map_err(log_err)?;
    let factory = ConfigFactory::new(config.backend.clone());
    let metrics = test_stage(
        config,
        &build.store,
        &build.libraries,
        manual.as_ref(),
        &factory,
        &mut log,
    )?;
    Ok(RunSummary { build, manual, metrics })
}

// ---------------------------------------------------------------------------
// Replay
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReplayReport {
    pub exchanges: usize,
    pub stages: Vec<String>,
    pub store_checked: bool,
    pub manual_checked: bool,
    pub metrics_checked: bool,
}

/// Re-executes the stages recorded in the log against the recorded
/// exchanges and asserts byte-equality of the final store, manual, and
/// metrics. Any divergence is reported at the first mismatching exchange.
pub fn replay(config: &RunConfig, log_path: &Path) -> Result<ReplayReport, HarnessError> {
    let records = RunLog::load(log_path).map_err(|e| io_err(log_path, e))?;
    let Some(LogRecord::Config { semantic_hash, config: logged_config }) = records.first() else {
        return Err(HarnessError::ReplayRefused(
            "run log does not start with a config record".to_string(),
        ));
    };
    if config.semantic_hash() != *semantic_hash {
        return Err(HarnessError::ReplayRefused(format!(
            "config hash mismatch: log was recorded under {}, requested config hashes to {}",
            semantic_hash,
            config.semantic_hash()
        )));
    }
    let mut replay_config = logged_config.clone();
    replay_config.paths = config.paths.clone();
    replay_config.test_parallelism = 1;

    let stages: Vec<String> = records
        .iter()
        .filter_map(|r| match r {
            LogRecord::Stage { name } => Some(name.clone()),
            _ => None,
        })
        .collect();
    if stages.is_empty() {
        return Err(HarnessError::ReplayRefused(
            "run log records no stages to replay".to_string(),
        ));
    }
    let exchanges = runlog::exchanges(&records);
    let exchange_count = exchanges.len();
    let mut backend = ReplayBackend::load(exchanges.clone()).map_err(map_divergence)?;
    let mut new_log = RunLog::in_memory();

    let mut store: Option<RuleStore> = None;
    let mut libraries: Option<Libraries> = None;
    let mut manual: Option<Manual> = None;
    let mut metrics: Option<Metrics> = None;

    for stage in &stages {
        match stage.as_str() {
            "build" => {
                let build = build_stage(&replay_config, &mut backend, &mut new_log, None)
                    .map_err(map_divergence_harness)?;
                store = Some(build.store);
                libraries = Some(build.libraries);
            }
            "formulate" => {
                let store_ref = materialize_store(&mut store, &records)?;
                let outcome =
                    formulate_stage(&replay_config, store_ref, &mut backend, &mut new_log)
                        .map_err(map_divergence_harness)?;
                manual = Some(outcome);
            }
            "test" => {
                materialize_store(&mut store, &records)?;
                if libraries.is_none() {
                    let json = runlog::last_libraries(&records).ok_or_else(|| {
                        HarnessError::ReplayRefused(
                            "log records a test stage but no libraries".to_string(),
                        )
                    })?;
                    libraries = Some(serde_json::from_str(json).map_err(|e| {
                        HarnessError::Artifact(format!("logged libraries: {e}"))
                    })?);
                }
                if manual.is_none() {
                    if let Some(text) = runlog::last_manual(&records) {
                        // Only the rendered text feeds the planner prompt.
                        manual = Some(Manual {
                            overview: String::new(),
                            categories: Vec::new(),
                            rendered: text.to_string(),
                        });
                    }
                }
                let factory = ReplayFactory { records: std::sync::Arc::new(exchanges.clone()) };
                let result = test_stage(
                    &replay_config,
                    store.as_ref().expect("store materialized above"),
                    libraries.as_ref().expect("libraries materialized above"),
                    manual.as_ref(),
                    &factory,
                    &mut new_log,
                )
                .map_err(map_divergence_harness)?;
                metrics = Some(result);
            }
            other => {
                return Err(HarnessError::ReplayRefused(format!("unknown stage '{other}'")))
            }
        }
    }

    let mut report = ReplayReport {
        exchanges: exchange_count,
        stages,
        store_checked: false,
        manual_checked: false,
        metrics_checked: false,
    };
    if let (Some(store), Some(expected)) = (&store, runlog::last_store_snapshot(&records)) {
        if store.snapshot() != expected {
            return Err(HarnessError::ArtifactMismatch { artifact: "store".to_string() });
        }
        report.store_checked = true;
    }
    if let (Some(manual), Some(expected)) = (&manual, runlog::last_manual(&records)) {
        if manual.rendered != expected {
            return Err(HarnessError::ArtifactMismatch { artifact: "manual".to_string() });
        }
        report.manual_checked = true;
    }
    if let (Some(metrics), Some(expected)) = (&metrics, runlog::last_metrics(&records)) {
        if metrics.canonical_json() != expected.canonical_json() {
            return Err(HarnessError::ArtifactMismatch { artifact: "metrics".to_string() });
        }
        report.metrics_checked = true;
    }
    Ok(report)
}

/// Store for a replayed stage: the replayed build's output when present,
/// otherwise the last snapshot recorded in the log.
fn materialize_store<'a>(
    store: &'a mut Option<RuleStore>,
    records: &[LogRecord],
) -> Result<&'a RuleStore, HarnessError> {
    if store.is_none() {
        let snapshot = runlog::last_store_snapshot(records).ok_or_else(|| {
            HarnessError::ReplayRefused("log records no rule-store snapshot".to_string())
        })?;
        *store = Some(
            RuleStore::restore(snapshot)
                .map_err(|e| HarnessError::Artifact(format!("logged store: {e}")))?,
        );
    }
    Ok(store.as_ref().expect("just materialized"))
}

/// Exchange-level mismatches surface as structured divergences naming the
/// session and exchange index.
fn map_divergence(err: BackendError) -> HarnessError {
    match err {
        BackendError::ReplayMiss { session, exchange, prompt_hash } => HarnessError::Divergence {
            session,
            exchange,
            detail: format!("no recorded response for this transcript (prompt hash {prompt_hash})"),
        },
        BackendError::CorruptRecord { exchange, detail } => HarnessError::Divergence {
            session: "(record validation)".to_string(),
            exchange,
            detail,
        },
        other => HarnessError::Backend(other),
    }
}

fn map_divergence_harness(err: HarnessError) -> HarnessError {
    match err {
        HarnessError::Backend(inner) => map_divergence(inner),
        HarnessError::Aborted { source, .. } => map_divergence(source),
        HarnessError::Formulate(FormulateError::Backend(inner)) => map_divergence(inner),
        other => other,
    }
}
