//! Run configuration: every knob of the pipeline in one serializable
//! structure, loadable from a TOML file with environment overrides for the
//! endpoint settings.

use crate::text_hash;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config file {path}: {source}")]
    Read {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse config file {path}: {source}")]
    Parse {
        path: String,
        #[source]
        source: toml::de::Error,
    },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    /// The deterministic synthetic personas; no network.
    Scripted,
    /// An OpenAI-compatible chat-completions endpoint.
    Http,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendChoice {
    pub kind: BackendKind,
    pub endpoint: String,
    pub model: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
}

impl Default for BackendChoice {
    fn default() -> Self {
        BackendChoice {
            kind: BackendKind::Scripted,
            endpoint: "http://localhost:8000/v1/chat/completions".to_string(),
            model: "gpt-4-turbo".to_string(),
            api_key_env: "PLAYBOOK_API_KEY".to_string(),
        }
    }
}

/// The four ablation toggles. Each disables exactly one mechanism;
/// everything else runs unchanged.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Ablation {
    /// Skip the skill/reflection libraries entirely (no retrieval at
    /// planning time, nothing saved from conclusions).
    pub no_libraries: bool,
    /// Skip case classification and always use the Case-2 management
    /// prompt path.
    pub no_case_prompts: bool,
    /// Run every episode against the frozen initial rules, then feed all
    /// trajectories to the builder sequentially afterwards.
    pub offline_mode: bool,
    /// Skip manual formulation; the test stage sees the raw rule rendering.
    pub no_formulation: bool,
}

impl Ablation {
    pub fn any(&self) -> bool {
        self.no_libraries || self.no_case_prompts || self.offline_mode || self.no_formulation
    }
}

/// Output artifact locations, all rooted in `out_dir` by default.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunPaths {
    pub out_dir: PathBuf,
    pub store: PathBuf,
    pub libraries: PathBuf,
    pub manual: PathBuf,
    pub run_log: PathBuf,
    pub checkpoint: PathBuf,
    pub metrics: PathBuf,
}

impl Default for RunPaths {
    fn default() -> Self {
        RunPaths::rooted(Path::new("out"))
    }
}

impl RunPaths {
    pub fn rooted(out_dir: &Path) -> Self {
        RunPaths {
            out_dir: out_dir.to_path_buf(),
            store: out_dir.join("store.json"),
            libraries: out_dir.join("libraries.json"),
            manual: out_dir.join("manual.md"),
            run_log: out_dir.join("runlog.jsonl"),
            checkpoint: out_dir.join("checkpoint.json"),
            metrics: out_dir.join("metrics.json"),
        }
    }

    fn all(&self) -> [&PathBuf; 6] {
        [
            &self.store,
            &self.libraries,
            &self.manual,
            &self.run_log,
            &self.checkpoint,
            &self.metrics,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// Single root seed; every component seed is derived from it by
    /// labeled hashing.
    pub root_seed: u64,
    /// Rule-store capacity; consolidation triggers strictly above this.
    pub n_max: usize,
    /// Replanning budget per episode (cycles = replans + 1).
    pub max_replans: u32,
    /// Environment action budget per episode.
    pub max_actions: u32,
    /// Build tasks sampled per task type.
    pub build_tasks_per_type: u32,
    /// Consecutive successes after which a task type counts as solved.
    pub early_stop_streak: u32,
    /// Test tasks sampled per task type (held-out seed range).
    pub test_tasks_per_type: u32,
    /// Builder/consolidator exchange budget before a forced stop.
    pub op_budget: u32,
    /// Maximum concurrent test episodes (1 = sequential even with the
    /// parallel feature compiled in).
    pub test_parallelism: usize,
    pub backend: BackendChoice,
    pub ablation: Ablation,
    pub paths: RunPaths,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            root_seed: 7,
            n_max: 12,
            max_replans: 3,
            max_actions: 50,
            build_tasks_per_type: 6,
            early_stop_streak: 3,
            test_tasks_per_type: 4,
            op_budget: 5,
            test_parallelism: 4,
            backend: BackendChoice::default(),
            ablation: Ablation::default(),
            paths: RunPaths::default(),
        }
    }
}

/// The fields that shape the dialogue and learning, hashed into the run log
/// so replays refuse a mismatched configuration. Paths and endpoint details
/// are deliberately excluded: they do not affect what the agents say.
#[derive(Serialize)]
struct SemanticView<'a> {
    root_seed: u64,
    n_max: usize,
    max_replans: u32,
    max_actions: u32,
    build_tasks_per_type: u32,
    early_stop_streak: u32,
    test_tasks_per_type: u32,
    op_budget: u32,
    ablation: &'a Ablation,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.display().to_string(),
            source,
        })?;
        let config: RunConfig = toml::from_str(&text).map_err(|source| ConfigError::Parse {
            path: path.display().to_string(),
            source,
        })?;
        config.validate()?;
        Ok(config)
    }

    /// Re-roots every artifact path under `out_dir`.
    pub fn with_out_dir(mut self, out_dir: &Path) -> Self {
        self.paths = RunPaths::rooted(out_dir);
        self
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        for (name, value) in [
            ("n_max", self.n_max as u64),
            ("max_replans", self.max_replans as u64),
            ("max_actions", self.max_actions as u64),
            ("build_tasks_per_type", self.build_tasks_per_type as u64),
            ("early_stop_streak", self.early_stop_streak as u64),
            ("test_tasks_per_type", self.test_tasks_per_type as u64),
            ("op_budget", self.op_budget as u64),
            ("test_parallelism", self.test_parallelism as u64),
        ] {
            if value == 0 {
                return Err(ConfigError::Invalid(format!("{name} must be positive")));
            }
        }
        let mut seen = BTreeSet::new();
        for path in self.paths.all() {
            if !seen.insert(path.clone()) {
                return Err(ConfigError::Invalid(format!(
                    "artifact paths must be distinct; {} is used twice",
                    path.display()
                )));
            }
        }
        Ok(())
    }

    /// Overrides endpoint settings from the environment:
    /// `PLAYBOOK_ENDPOINT` and `PLAYBOOK_MODEL` replace their config
    /// counterparts when set. (The API key is always read from the
    /// environment variable named by `api_key_env`.)
    pub fn apply_env_overrides(&mut self, get: impl Fn(&str) -> Option<String>) {
        if let Some(endpoint) = get("PLAYBOOK_ENDPOINT") {
            self.backend.endpoint = endpoint;
        }
        if let Some(model) = get("PLAYBOOK_MODEL") {
            self.backend.model = model;
        }
        if let Some(var) = get("PLAYBOOK_API_KEY_ENV") {
            self.backend.api_key_env = var;
        }
    }

    /// Hash of the semantics-affecting fields; recorded in run logs and
    /// checked on replay and checkpoint resume.
    pub fn semantic_hash(&self) -> String {
        let view = SemanticView {
            root_seed: self.root_seed,
            n_max: self.n_max,
            max_replans: self.max_replans,
            max_actions: self.max_actions,
            build_tasks_per_type: self.build_tasks_per_type,
            early_stop_streak: self.early_stop_streak,
            test_tasks_per_type: self.test_tasks_per_type,
            op_budget: self.op_budget,
            ablation: &self.ablation,
        };
        text_hash(&serde_json::to_string(&view).expect("config view serializes"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid_and_matches_protocol_constants() {
        let config = RunConfig::default();
        config.validate().unwrap();
        assert_eq!(config.n_max, 12);
        assert_eq!(config.max_replans, 3);
        assert_eq!(config.max_actions, 50);
        assert_eq!(config.build_tasks_per_type, 6);
        assert_eq!(config.early_stop_streak, 3);
        assert_eq!(config.op_budget, 5);
    }

    #[test]
    fn toml_round_trip_preserves_every_field() {
        let mut config = RunConfig::default();
        config.root_seed = 99;
        config.ablation.offline_mode = true;
        config.backend.kind = BackendKind::Http;
        let text = toml::to_string(&config).unwrap();
        let back: RunConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, config);
    }

    #[test]
    fn partial_toml_fills_defaults() {
        let config: RunConfig = toml::from_str("root_seed = 5\nn_max = 10\n").unwrap();
        assert_eq!(config.root_seed, 5);
        assert_eq!(config.n_max, 10);
        assert_eq!(config.max_replans, 3);
    }

    #[test]
    fn zero_budget_and_duplicate_paths_are_rejected() {
        let mut config = RunConfig::default();
        config.max_replans = 0;
        assert!(config.validate().is_err());

        let mut config = RunConfig::default();
        config.paths.manual = config.paths.store.clone();
        let err = config.validate().unwrap_err();
        assert!(err.to_string().contains("distinct"), "{err}");
    }

    #[test]
    fn env_overrides_replace_endpoint_settings() {
        let mut config = RunConfig::default();
        config.apply_env_overrides(|name| match name {
            "PLAYBOOK_ENDPOINT" => Some("https://example.test/v1".to_string()),
            "PLAYBOOK_MODEL" => Some("test-model".to_string()),
            _ => None,
        });
        assert_eq!(config.backend.endpoint, "https://example.test/v1");
        assert_eq!(config.backend.model, "test-model");
    }

    #[test]
    fn semantic_hash_ignores_paths_but_not_n_max() {
        let base = RunConfig::default();
        let mut moved = base.clone();
        moved.paths = RunPaths::rooted(Path::new("elsewhere"));
        assert_eq!(base.semantic_hash(), moved.semantic_hash());

        let mut tweaked = base.clone();
        tweaked.n_max = 11;
        assert_ne!(base.semantic_hash(), tweaked.semantic_hash());
    }
}
