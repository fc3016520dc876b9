//! Line-delimited run log: one self-describing JSON record per line, with
//! no timestamps or machine-local data, so two identical runs produce
//! byte-identical logs and a recorded run can be replayed offline.

use super::config::RunConfig;
use super::metrics::{EpisodeSummary, Metrics};
use crate::llm::ReplayRecord;
use crate::rulestore::OpOutcome;
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum LogRecord {
    /// Always the first line: the full configuration and its semantic hash.
    Config {
        semantic_hash: String,
        config: RunConfig,
    },
    /// Free-form progress note (skips, repairs, forced stops, anomalies).
    Note { text: String },
    /// Marks the start of a pipeline stage ("build", "formulate", "test").
    Stage { name: String },
    /// One LLM exchange, hash-chained for replay.
    Exchange { exchange: ReplayRecord },
    /// One completed episode.
    Episode { summary: EpisodeSummary },
    /// One rule-management pass (builder or consolidator ops ledger).
    Ops {
        episode_id: String,
        ledger: Vec<OpOutcome>,
        notes: Vec<String>,
        forced_stop: bool,
    },
    /// Rule-store snapshot after an episode's management completed.
    StoreSnapshot { episode_id: String, store: String },
    /// Final skill/reflection libraries (serialized JSON).
    Libraries { libraries: String },
    /// The formulated manual, byte-exact.
    Manual { text: String },
    /// Test-stage metrics.
    Metrics { metrics: Metrics },
}

/// Append-only writer that mirrors records in memory. File output is
/// optional so stages can run log-complete in tests without touching disk.
pub struct RunLog {
    file: Option<BufWriter<File>>,
    records: Vec<LogRecord>,
}

impl RunLog {
    /// Creates (truncating) the log file at `path`.
    pub fn create(path: &Path) -> std::io::Result<Self> {
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent)?;
            }
        }
        Ok(RunLog {
            file: Some(BufWriter::new(File::create(path)?)),
            records: Vec::new(),
        })
    }

    pub fn in_memory() -> Self {
        RunLog { file: None, records: Vec::new() }
    }

    pub fn append(&mut self, record: LogRecord) -> std::io::Result<()> {
        if let Some(file) = self.file.as_mut() {
            let line = serde_json::to_string(&record).expect("log record serializes");
            file.write_all(line.as_bytes())?;
            file.write_all(b"\n")?;
            file.flush()?;
        }
        self.records.push(record);
        Ok(())
    }

    pub fn note(&mut self, text: impl Into<String>) -> std::io::Result<()> {
        self.append(LogRecord::Note { text: text.into() })
    }

    pub fn records(&self) -> &[LogRecord] {
        &self.records
    }

    /// Parses a log file back into records; malformed lines are an error
    /// naming the line number.
    pub fn load(path: &Path) -> std::io::Result<Vec<LogRecord>> {
        let reader = BufReader::new(File::open(path)?);
        let mut records = Vec::new();
        for (index, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let record: LogRecord = serde_json::from_str(&line).map_err(|e| {
                std::io::Error::new(
                    std::io::ErrorKind::InvalidData,
                    format!("run log line {}: {e}", index + 1),
                )
            })?;
            records.push(record);
        }
        Ok(records)
    }
}

/// Convenience accessors over a loaded log.
pub fn exchanges(records: &[LogRecord]) -> Vec<ReplayRecord> {
    records
        .iter()
        .filter_map(|r| match r {
            LogRecord::Exchange { exchange } => Some(exchange.clone()),
            _ => None,
        })
        .collect()
}

pub fn last_store_snapshot(records: &[LogRecord]) -> Option<&str> {
    records.iter().rev().find_map(|r| match r {
        LogRecord::StoreSnapshot { store, .. } => Some(store.as_str()),
        _ => None,
    })
}

pub fn last_manual(records: &[LogRecord]) -> Option<&str> {
    records.iter().rev().find_map(|r| match r {
        LogRecord::Manual { text } => Some(text.as_str()),
        _ => None,
    })
}

pub fn last_metrics(records: &[LogRecord]) -> Option<&Metrics> {
    records.iter().rev().find_map(|r| match r {
        LogRecord::Metrics { metrics } => Some(metrics),
        _ => None,
    })
}

pub fn last_libraries(records: &[LogRecord]) -> Option<&str> {
    records.iter().rev().find_map(|r| match r {
        LogRecord::Libraries { libraries } => Some(libraries.as_str()),
        _ => None,
    })
}
