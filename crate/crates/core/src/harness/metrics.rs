//! Per-agent CSV metrics and the run manifest.

use std::fs::{self, File};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::knowledge::AgentId;
use crate::runtime::{EpochRecord, EpochSink, GroupConfig, UpdateKind};

pub const CSV_HEADER: &str =
    "epoch,episode_return,loss,update_kind,packets_received,packets_sent,packets_averaged";

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn agent_csv_path(dir: &Path, id: AgentId) -> PathBuf {
    dir.join(format!("agent_{}.csv", id.0))
}

#[derive(Debug, Serialize, Deserialize)]
struct Row {
    epoch: u64,
    episode_return: u32,
    loss: f64,
    update_kind: UpdateKind,
    packets_received: u64,
    packets_sent: u64,
    packets_averaged: u64,
}

impl Row {
    fn of(r: &EpochRecord) -> Self {
        Self {
            epoch: r.epoch,
            episode_return: r.episode_return,
            loss: r.loss,
            update_kind: r.update_kind,
            packets_received: r.packets_received,
            packets_sent: r.packets_sent,
            packets_averaged: r.packets_averaged,
        }
    }

    fn into_record(self, agent_id: AgentId) -> EpochRecord {
        EpochRecord {
            agent_id,
            epoch: self.epoch,
            episode_return: self.episode_return,
            loss: self.loss,
            update_kind: self.update_kind,
            packets_received: self.packets_received,
            packets_sent: self.packets_sent,
            packets_averaged: self.packets_averaged,
        }
    }
}

fn csv_writer<W: std::io::Write>(out: W) -> Result<csv::Writer<W>, csv::Error> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(CSV_HEADER.split(','))?;
    w.flush()?;
    Ok(w)
}

/// The exact bytes a [`CsvSink`] produces for `records`.
pub fn csv_bytes(records: &[EpochRecord]) -> Vec<u8> {
    let mut w = csv_writer(Vec::new()).expect("in-memory csv");
    for r in records {
        w.serialize(Row::of(r)).expect("in-memory csv");
    }
    w.into_inner().expect("in-memory csv")
}

/// Streaming per-agent writer; every record is flushed as it arrives so a
/// crashed run leaves a readable prefix.
#[derive(Debug)]
pub struct CsvSink {
    path: PathBuf,
    writer: csv::Writer<File>,
    error: Option<csv::Error>,
}

impl CsvSink {
    /// Creates the file and writes the header.
    pub fn create(path: impl Into<PathBuf>) -> Result<Self, HarnessError> {
        let path = path.into();
        let writer = csv_writer(File::create(&path)?)?;
        Ok(Self {
            path,
            writer,
            error: None,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// First write error, if any occurred.
    pub fn take_error(&mut self) -> Option<csv::Error> {
        self.error.take()
    }
}

impl EpochSink for CsvSink {
    fn record(&mut self, record: &EpochRecord) {
        if self.error.is_some() {
            return;
        }
        let res = self
            .writer
            .serialize(Row::of(record))
            .and_then(|_| self.writer.flush().map_err(csv::Error::from));
        if let Err(e) = res {
            log::error!("cannot write {}: {e}", self.path.display());
            self.error = Some(e);
        }
    }
}

/// Writes complete record sets, one `agent_<id>.csv` per agent.
pub fn write_metrics(
    records: &[Vec<EpochRecord>],
    dir: &Path,
) -> Result<Vec<PathBuf>, HarnessError> {
    fs::create_dir_all(dir)?;
    let mut paths = Vec::with_capacity(records.len());
    for (i, recs) in records.iter().enumerate() {
        let id = recs
            .first()
            .map(|r| r.agent_id)
            .unwrap_or(AgentId(i as u32 + 1));
        let path = agent_csv_path(dir, id);
        let mut sink = CsvSink::create(&path)?;
        for r in recs {
            sink.record(r);
        }
        if let Some(e) = sink.take_error() {
            return Err(e.into());
        }
        paths.push(path);
    }
    Ok(paths)
}

/// Parses a metrics CSV written by [`CsvSink`].
pub fn read_metrics(path: &Path, agent_id: AgentId) -> Result<Vec<EpochRecord>, HarnessError> {
    let mut reader = csv::Reader::from_path(path)?;
    let header: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    if header.join(",") != CSV_HEADER {
        return Err(HarnessError::Malformed(format!(
            "{}: unexpected header",
            path.display()
        )));
    }
    reader
        .deserialize::<Row>()
        .map(|row| Ok(row?.into_record(agent_id)))
        .collect()
}

/// Enough information to repeat a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: GroupConfig,
    pub started_at: String,
    pub finished_at: Option<String>,
    pub version: String,
    pub agent_files: Vec<PathBuf>,
}

pub fn write_manifest(dir: &Path, manifest: &RunManifest) -> Result<PathBuf, HarnessError> {
    let path = dir.join(MANIFEST_FILE);
    let json = serde_json::to_string_pretty(manifest)?;
    fs::write(&path, json + "\n")?;
    Ok(path)
}

pub fn read_manifest(dir: &Path) -> Result<RunManifest, HarnessError> {
    let text = fs::read_to_string(dir.join(MANIFEST_FILE))?;
    Ok(serde_json::from_str(&text)?)
}
