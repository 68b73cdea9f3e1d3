//! Stability of reward curves after knowledge sharing starts.
//!
//! An agent is called stable when at least `threshold` of the epochs in its
//! evaluation window reached the maximum return (`step_cap`). The window
//! starts `burn_in` epochs after `share_epoch` and runs to the last record.

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::knowledge::AgentId;
use crate::runtime::EpochRecord;

pub const DEFAULT_STABILITY_THRESHOLD: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityOptions {
    /// Epochs skipped after `share_epoch`; `None` means 10% of the
    /// post-share epochs.
    pub burn_in: Option<u64>,
    pub threshold: f64,
}

impl Default for StabilityOptions {
    fn default() -> Self {
        Self {
            burn_in: None,
            threshold: DEFAULT_STABILITY_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentStability {
    pub agent_id: AgentId,
    pub share_epoch: u64,
    /// First and last epoch of the window (inclusive).
    pub window: (u64, u64),
    pub window_len: usize,
    pub fraction_at_max: f64,
    pub stable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub step_cap: u32,
    pub threshold: f64,
    pub agents: Vec<AgentStability>,
}

impl StabilityReport {
    pub fn stable_count(&self) -> usize {
        self.agents.iter().filter(|a| a.stable).count()
    }
}

pub fn summarize_agent(
    records: &[EpochRecord],
    share_epoch: u64,
    step_cap: u32,
    opts: StabilityOptions,
) -> Result<AgentStability, HarnessError> {
    let agent_id = records
        .first()
        .map(|r| r.agent_id)
        .ok_or(HarnessError::EmptyWindow(None))?;
    let last = records.iter().map(|r| r.epoch).max().unwrap_or(0);
    let burn_in = opts
        .burn_in
        .unwrap_or_else(|| last.saturating_sub(share_epoch) / 10);
    let start = share_epoch + burn_in + 1;
    let window: Vec<&EpochRecord> = records.iter().filter(|r| r.epoch >= start).collect();
    if window.is_empty() {
        return Err(HarnessError::EmptyWindow(Some(agent_id)));
    }
    let at_max = window
        .iter()
        .filter(|r| r.episode_return == step_cap)
        .count();
    let fraction_at_max = at_max as f64 / window.len() as f64;
    Ok(AgentStability {
        agent_id,
        share_epoch,
        window: (start, last),
        window_len: window.len(),
        fraction_at_max,
        stable: fraction_at_max >= opts.threshold,
    })
}

pub fn summarize(
    records: &[Vec<EpochRecord>],
    share_epoch: u64,
    step_cap: u32,
    opts: StabilityOptions,
) -> Result<StabilityReport, HarnessError> {
    let agents = records
        .iter()
        .map(|r| summarize_agent(r, share_epoch, step_cap, opts))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(StabilityReport {
        step_cap,
        threshold: opts.threshold,
        agents,
    })
}
