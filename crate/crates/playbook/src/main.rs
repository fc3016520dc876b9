//! Command-line front end: `run` drives the whole pipeline, while `build`,
//! `formulate`, and `test` expose the individual stages and `replay`
//! re-verifies a recorded run log.

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use playbook::formulator::Manual;
use playbook::harness::{
    build_stage, formulate_stage, initial_store, make_backend, replay, run_all, start_log,
    test_stage, BackendKind, Checkpoint, ConfigFactory, LogRecord, RunConfig,
};
use playbook::libraries::Libraries;
use playbook::rulestore::RuleStore;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(
    name = "playbook",
    version,
    about = "Self-building agent playbooks for a household text world"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run build, formulate, and test back to back with one run log.
    Run(CommonArgs),
    /// Interact with the environment and grow the rule store.
    Build {
        #[command(flatten)]
        common: CommonArgs,
        /// Continue from the checkpoint left by an interrupted build.
        /// The run log starts fresh; artifacts come out identical.
        #[arg(long)]
        resume: bool,
    },
    /// Compile the rule store into the Markdown manual.
    Formulate {
        #[command(flatten)]
        common: CommonArgs,
        /// Rule-store snapshot to formulate (defaults to the build output).
        #[arg(long)]
        store: Option<PathBuf>,
    },
    /// Evaluate the frozen artifacts on the held-out task set.
    Test {
        #[command(flatten)]
        common: CommonArgs,
        /// Rule-store snapshot (defaults to the build output).
        #[arg(long)]
        store: Option<PathBuf>,
        /// Libraries file (defaults to the build output; empty if absent).
        #[arg(long)]
        libraries: Option<PathBuf>,
        /// Manual to plan from (defaults to the formulate output; raw rules
        /// are used if absent).
        #[arg(long)]
        manual: Option<PathBuf>,
    },
    /// Re-run a recorded log offline and verify the artifacts match.
    Replay {
        #[command(flatten)]
        common: CommonArgs,
        /// Run log to replay (defaults to the `run`/`build` log).
        #[arg(long)]
        log: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BackendArg {
    /// Deterministic built-in personas; no network.
    Scripted,
    /// OpenAI-compatible chat completions endpoint.
    Http,
}

#[derive(Args)]
struct CommonArgs {
    /// TOML configuration file; built-in defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory for artifacts and the run log.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Root seed; every sampled task and tie-break derives from it.
    #[arg(long)]
    seed: Option<u64>,
    /// Which backend fills the LLM seat.
    #[arg(long, value_enum)]
    backend: Option<BackendArg>,
    /// Chat-completions URL for the http backend.
    #[arg(long)]
    endpoint: Option<String>,
    /// Model name sent to the http backend.
    #[arg(long)]
    model: Option<String>,
    /// Concurrent episodes in the test stage.
    #[arg(long)]
    parallelism: Option<usize>,
    /// Disable the skill/reflection libraries.
    #[arg(long)]
    no_libraries: bool,
    /// Skip case classification; always use the Case-2 management prompt.
    #[arg(long)]
    no_case_prompts: bool,
    /// Plan every build episode from the initial rules, deferring all rule
    /// management until the end.
    #[arg(long)]
    offline_mode: bool,
    /// Skip the manual; the test stage reads raw rules instead.
    #[arg(long)]
    no_formulation: bool,
}

impl CommonArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut config = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(out) = &self.out {
            config = config.with_out_dir(out);
        }
        if let Some(seed) = self.seed {
            config.root_seed = seed;
        }
        if let Some(backend) = self.backend {
            config.backend.kind = match backend {
                BackendArg::Scripted => BackendKind::Scripted,
                BackendArg::Http => BackendKind::Http,
            };
        }
        if let Some(endpoint) = &self.endpoint {
            config.backend.endpoint = endpoint.clone();
        }
        if let Some(model) = &self.model {
            config.backend.model = model.clone();
        }
        if let Some(parallelism) = self.parallelism {
            config.test_parallelism = parallelism;
        }
        config.ablation.no_libraries |= self.no_libraries;
        config.ablation.no_case_prompts |= self.no_case_prompts;
        config.ablation.offline_mode |= self.offline_mode;
        config.ablation.no_formulation |= self.no_formulation;
        config.apply_env_overrides(|key| std::env::var(key).ok());
        config.validate()?;
        Ok(config)
    }
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run(common) => cmd_run(&common.resolve()?),
        Command::Build { common, resume } => cmd_build(&common.resolve()?, resume),
        Command::Formulate { common, store } => {
            cmd_formulate(&common.resolve()?, store.as_deref())
        }
        Command::Test { common, store, libraries, manual } => cmd_test(
            &common.resolve()?,
            store.as_deref(),
            libraries.as_deref(),
            manual.as_deref(),
        ),
        Command::Replay { common, log } => cmd_replay(&common.resolve()?, log.as_deref()),
    }
}

fn cmd_run(config: &RunConfig) -> Result<()> {
    let summary = run_all(config)?;
    println!(
        "build: {} episodes, {} rules, {} task types solved",
        summary.build.episodes.len(),
        summary.build.store.count(),
        summary.build.solved.len()
    );
    match &summary.manual {
        Some(manual) => println!(
            "manual: {} categories -> {}",
            manual.categories.len(),
            config.paths.manual.display()
        ),
        None => println!("manual: skipped (no_formulation)"),
    }
    println!("{}", summary.metrics.table());
    println!("run log: {}", config.paths.run_log.display());
    Ok(())
}

fn cmd_build(config: &RunConfig, resume: bool) -> Result<()> {
    let resume_from = if resume {
        Some(Checkpoint::load(&config.paths.checkpoint).with_context(|| {
            format!("no resumable checkpoint at {}", config.paths.checkpoint.display())
        })?)
    } else {
        None
    };
    let mut log = start_log(config)?;
    log.append(LogRecord::Stage { name: "build".to_string() })?;
    let mut backend = make_backend(&config.backend);
    let artifacts = build_stage(config, backend.as_mut(), &mut log, resume_from)?;
    println!(
        "build: {} episodes, {} rules, {} task types solved",
        artifacts.episodes.len(),
        artifacts.store.count(),
        artifacts.solved.len()
    );
    println!("store: {}", config.paths.store.display());
    println!("libraries: {}", config.paths.libraries.display());
    println!("run log: {}", config.paths.run_log.display());
    Ok(())
}

fn cmd_formulate(config: &RunConfig, store_path: Option<&Path>) -> Result<()> {
    let store_path = store_path.unwrap_or(&config.paths.store);
    let store = load_store(store_path)?;
    let mut config = config.clone();
    config.paths.run_log = stage_log_path(&config.paths.run_log, "formulate");
    let mut log = start_log(&config)?;
    // Recording the input makes this log self-contained for replay.
    log.append(LogRecord::StoreSnapshot {
        episode_id: "input".to_string(),
        store: store.snapshot(),
    })?;
    log.append(LogRecord::Stage { name: "formulate".to_string() })?;
    let mut backend = make_backend(&config.backend);
    let manual = formulate_stage(&config, &store, backend.as_mut(), &mut log)?;
    println!(
        "manual: {} categories covering {} rules -> {}",
        manual.categories.len(),
        manual.categories.iter().map(|c| c.rule_ids.len()).sum::<usize>(),
        config.paths.manual.display()
    );
    println!("run log: {}", config.paths.run_log.display());
    Ok(())
}

fn cmd_test(
    config: &RunConfig,
    store_path: Option<&Path>,
    libraries_path: Option<&Path>,
    manual_path: Option<&Path>,
) -> Result<()> {
    let store_path = store_path.unwrap_or(&config.paths.store);
    let store = load_store(store_path)?;
    let libraries = match libraries_path {
        Some(path) => load_libraries(path)?,
        None if config.paths.libraries.exists() => load_libraries(&config.paths.libraries)?,
        None => {
            println!("libraries: none found, testing without retrieval");
            Libraries::new()
        }
    };
    let manual = match manual_path {
        Some(path) => Some(load_manual(path)?),
        None if config.ablation.no_formulation => None,
        None if config.paths.manual.exists() => Some(load_manual(&config.paths.manual)?),
        None => {
            println!("manual: none found, testing against raw rules");
            None
        }
    };

    let mut config = config.clone();
    config.paths.run_log = stage_log_path(&config.paths.run_log, "test");
    let mut log = start_log(&config)?;
    log.append(LogRecord::StoreSnapshot {
        episode_id: "input".to_string(),
        store: store.snapshot(),
    })?;
    log.append(LogRecord::Libraries {
        libraries: serde_json::to_string_pretty(&libraries)?,
    })?;
    if let Some(manual) = &manual {
        log.append(LogRecord::Manual { text: manual.rendered.clone() })?;
    }
    log.append(LogRecord::Stage { name: "test".to_string() })?;
    let factory = ConfigFactory::new(config.backend.clone());
    let metrics = test_stage(&config, &store, &libraries, manual.as_ref(), &factory, &mut log)?;
    println!("{}", metrics.table());
    println!("metrics: {}", config.paths.metrics.display());
    println!("run log: {}", config.paths.run_log.display());
    Ok(())
}

fn cmd_replay(config: &RunConfig, log_path: Option<&Path>) -> Result<()> {
    let log_path = log_path.unwrap_or(&config.paths.run_log).to_path_buf();
    // Re-run into a scratch directory so a divergence cannot clobber the
    // original artifacts mid-verification.
    let scratch = config.paths.out_dir.join("replay");
    let replay_config = config.clone().with_out_dir(&scratch);
    let report = replay(&replay_config, &log_path)?;
    println!(
        "replay ok: {} exchanges across stages [{}]",
        report.exchanges,
        report.stages.join(", ")
    );
    for (artifact, checked) in [
        ("store", report.store_checked),
        ("manual", report.manual_checked),
        ("metrics", report.metrics_checked),
    ] {
        if checked {
            println!("{artifact}: byte-identical");
        }
    }
    Ok(())
}

fn stage_log_path(run_log: &Path, stage: &str) -> PathBuf {
    let stem = run_log
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "runlog".to_string());
    run_log.with_file_name(format!("{stem}-{stage}.jsonl"))
}

fn load_store(path: &Path) -> Result<RuleStore> {
    if !path.exists() {
        println!("store: none found at {}, using the initial rules", path.display());
        return Ok(initial_store());
    }
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading rule store {}", path.display()))?;
    RuleStore::restore(&text).with_context(|| format!("parsing rule store {}", path.display()))
}

fn load_libraries(path: &Path) -> Result<Libraries> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading libraries {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing libraries {}", path.display()))
}

fn load_manual(path: &Path) -> Result<Manual> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading manual {}", path.display()))?;
    Ok(Manual { overview: String::new(), categories: Vec::new(), rendered: text })
}
