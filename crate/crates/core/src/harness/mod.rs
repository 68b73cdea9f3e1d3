//! Command line, presets, metrics files and stability summaries.

pub mod cli;
pub mod metrics;
pub mod summary;

use std::fs;
use std::path::PathBuf;

use thiserror::Error;

use crate::knowledge::AgentId;
use crate::runtime::{run_group, EpochSink, GroupOutcome, NullSink, RuntimeError, TransportConfig};

pub use cli::{parse_cli, Preset, RunRequest};
pub use metrics::{read_metrics, write_metrics, CsvSink, RunManifest, CSV_HEADER};
pub use summary::{summarize, StabilityOptions, StabilityReport};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Clap(#[from] clap::Error),
    #[error("usage: {0}")]
    Usage(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("malformed metrics: {0}")]
    Malformed(String),
    #[error("empty stability window{}", .0.map(|a| format!(" for agent {a}")).unwrap_or_default())]
    EmptyWindow(Option<AgentId>),
    #[error(transparent)]
    Runtime(#[from] RuntimeError),
}

impl HarnessError {
    /// Process exit code: 2 for usage errors, 3 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Clap(e) => e.exit_code(),
            HarnessError::Usage(_) => 2,
            _ => 3,
        }
    }
}

/// Result of [`execute`].
#[derive(Debug)]
pub struct RunSummary {
    pub outcome: GroupOutcome,
    pub stability: Option<StabilityReport>,
    pub manifest: PathBuf,
}

fn timestamp() -> String {
    chrono::Utc::now().to_rfc3339()
}

/// Runs a resolved request: opens every output file first, streams the
/// metrics, then writes the manifest and the stability summary.
pub fn execute(req: &RunRequest) -> Result<RunSummary, HarnessError> {
    let group = &req.group;
    let dir = &req.out_dir;
    fs::create_dir_all(dir)?;

    let local: Vec<AgentId> = match &group.transport {
        TransportConfig::Tcp {
            local: Some(id), ..
        } => vec![*id],
        _ => group.agents.iter().map(|a| a.agent_id).collect(),
    };
    let mut sinks: Vec<Box<dyn EpochSink + Send>> = Vec::with_capacity(group.agents.len());
    let mut files = Vec::new();
    for a in &group.agents {
        if local.contains(&a.agent_id) {
            let path = metrics::agent_csv_path(dir, a.agent_id);
            sinks.push(Box::new(CsvSink::create(&path)?));
            files.push(path);
        } else {
            sinks.push(Box::new(NullSink));
        }
    }

    let mut manifest = RunManifest {
        config: group.clone(),
        started_at: timestamp(),
        finished_at: None,
        version: env!("CARGO_PKG_VERSION").to_owned(),
        agent_files: files,
    };
    let manifest_path = metrics::write_manifest(dir, &manifest)?;

    let outcome = run_group(group, sinks)?;
    manifest.finished_at = Some(timestamp());
    metrics::write_manifest(dir, &manifest)?;

    let share_epoch = group.agents[0].threshold;
    let records: Vec<_> = outcome
        .agents
        .iter()
        .filter(|a| !a.records.is_empty())
        .map(|a| a.records.clone())
        .collect();
    let stability = match summarize(
        &records,
        share_epoch,
        group.agents[0].step_cap,
        req.stability,
    ) {
        Ok(report) => {
            fs::write(
                dir.join("summary.json"),
                serde_json::to_string_pretty(&report)? + "\n",
            )?;
            Some(report)
        }
        Err(HarnessError::EmptyWindow(agent)) => {
            log::warn!(
                "no stability summary: empty window{}",
                agent.map(|a| format!(" for agent {a}")).unwrap_or_default()
            );
            None
        }
        Err(e) => return Err(e),
    };

    Ok(RunSummary {
        outcome,
        stability,
        manifest: manifest_path,
    })
}
