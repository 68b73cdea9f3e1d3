//! Per-agent training loops, the group launcher and the two baselines.
//!
//! Epochs are counted from 1. An agent learns alone for its first
//! `threshold` epochs; afterwards every epoch's gradient is shared and the
//! model only moves at epochs divisible by `minibatch`, using the weighted
//! average of everything collected since the previous update.

mod agent;
mod group;
mod sync;

use std::fmt;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::a2c::{self, A2cError};
use crate::environment::{CartPole, Environment};
use crate::knowledge::{AgentId, KnowledgeError, WeightingMode};
use crate::neural::{
    init_params, GradientVector, LossCoefficients, NeuralError, ParameterVector, ShapeDescriptor,
    ShapeSpec,
};
use crate::transport::TransportError;

pub use agent::{run_agent_ddal, run_single, DdalAgent, Generated};
pub use group::{deterministic_schedule, run_group};
pub use sync::run_group_sync;

#[derive(Debug, Error)]
pub enum RuntimeError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("agent {agent}, epoch {epoch}: {source}")]
    Learning {
        agent: AgentId,
        epoch: u64,
        #[source]
        source: A2cError,
    },
    #[error("agent {agent}, epoch {epoch}: {source}")]
    Update {
        agent: AgentId,
        epoch: u64,
        #[source]
        source: NeuralError,
    },
    #[error("agent {agent}, epoch {epoch}: {source}")]
    Knowledge {
        agent: AgentId,
        epoch: u64,
        #[source]
        source: KnowledgeError,
    },
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error("agent {agent} stopped by fault injection at epoch {epoch}")]
    InjectedFault { agent: AgentId, epoch: u64 },
    #[error("synchronous run aborted because agent {0} failed")]
    PeerAborted(AgentId),
    #[error("worker thread of agent {0} panicked")]
    WorkerPanic(AgentId),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

/// What an epoch did to the agent's parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UpdateKind {
    Local,
    Averaged,
    None,
}

impl UpdateKind {
    pub fn as_str(self) -> &'static str {
        match self {
            UpdateKind::Local => "local",
            UpdateKind::Averaged => "averaged",
            UpdateKind::None => "none",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "local" => Some(UpdateKind::Local),
            "averaged" => Some(UpdateKind::Averaged),
            "none" => Some(UpdateKind::None),
            _ => None,
        }
    }
}

impl fmt::Display for UpdateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Per-epoch metrics of one agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub agent_id: AgentId,
    pub epoch: u64,
    pub episode_return: u32,
    pub loss: f64,
    pub update_kind: UpdateKind,
    pub packets_received: u64,
    pub packets_sent: u64,
    pub packets_averaged: u64,
}

/// Receives records as they are produced.
pub trait EpochSink {
    fn record(&mut self, record: &EpochRecord);
}

/// Sink that ignores everything.
#[derive(Debug, Default, Clone, Copy)]
pub struct NullSink;

impl EpochSink for NullSink {
    fn record(&mut self, _: &EpochRecord) {}
}

impl EpochSink for Vec<EpochRecord> {
    fn record(&mut self, record: &EpochRecord) {
        self.push(record.clone());
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    pub agent_id: AgentId,
    pub total_epochs: u64,
    /// Number of initial epochs trained without sharing.
    pub threshold: u64,
    /// Sharing-phase update period, in epochs.
    pub minibatch: u64,
    /// Transitions per epoch.
    pub k: usize,
    pub step_cap: u32,
    pub gamma: f64,
    pub lr: f64,
    pub seed: u64,
    pub weighting: WeightingMode,
    pub relevance: f64,
    pub shape: ShapeSpec,
    pub coefficients: LossCoefficients,
    /// Cap on packets averaged per update; `None` drains everything.
    #[serde(default)]
    pub max_drain: Option<usize>,
    /// Apply the own gradient locally on sharing-phase epochs that are not
    /// update epochs. Off by default.
    #[serde(default)]
    pub local_updates_during_sharing: bool,
    /// Test hook: the agent fails when it reaches this epoch.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fail_at_epoch: Option<u64>,
}

impl AgentConfig {
    pub fn new(agent_id: AgentId, seed: u64) -> Self {
        Self {
            agent_id,
            total_epochs: 1000,
            threshold: 500,
            minibatch: 100,
            k: 120,
            step_cap: 100,
            gamma: 0.99,
            lr: 1e-3,
            seed,
            weighting: WeightingMode::Uniform,
            relevance: 1.0,
            shape: ShapeSpec::default(),
            coefficients: LossCoefficients::default(),
            max_drain: None,
            local_updates_during_sharing: false,
            fail_at_epoch: None,
        }
    }

    pub fn validate(&self) -> Result<(), RuntimeError> {
        let bad = |msg: String| {
            Err(RuntimeError::Config(format!(
                "agent {}: {msg}",
                self.agent_id
            )))
        };
        if self.agent_id.0 == 0 {
            return bad("agent ids start at 1".into());
        }
        if self.threshold > self.total_epochs {
            return bad(format!(
                "threshold {} exceeds total epochs {}",
                self.threshold, self.total_epochs
            ));
        }
        if self.minibatch == 0 {
            return bad("minibatch must be at least 1".into());
        }
        if self.k == 0 {
            return bad("k must be at least 1".into());
        }
        if self.step_cap == 0 {
            return bad("step cap must be at least 1".into());
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad(format!("gamma {} outside (0, 1]", self.gamma));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("learning rate {} must be positive", self.lr));
        }
        if !(self.relevance > 0.0 && self.relevance.is_finite()) {
            return bad(format!("relevance {} must be positive", self.relevance));
        }
        if self.max_drain == Some(0) {
            return bad("max drain must be at least 1".into());
        }
        ShapeDescriptor::new(self.shape.clone())
            .map_err(|e| RuntimeError::Config(e.to_string()))?;
        Ok(())
    }

    pub fn is_sharing_epoch(&self, epoch: u64) -> bool {
        epoch > self.threshold
    }

    pub fn is_update_epoch(&self, epoch: u64) -> bool {
        self.is_sharing_epoch(epoch) && epoch.is_multiple_of(self.minibatch)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunMode {
    Ddal,
    Single,
    Sync,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheduler {
    Concurrent,
    Deterministic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeerAddr {
    pub id: AgentId,
    pub addr: SocketAddr,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "backend")]
pub enum TransportConfig {
    Inproc,
    Tcp {
        /// Listening address of each agent. Agents without an entry bind an
        /// ephemeral loopback port (only possible when they run locally).
        peers: Vec<PeerAddr>,
        /// Run only this agent in the current process.
        #[serde(default)]
        local: Option<AgentId>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupConfig {
    pub mode: RunMode,
    pub scheduler: Scheduler,
    pub transport: TransportConfig,
    pub agents: Vec<AgentConfig>,
    pub out_dir: Option<PathBuf>,
}

impl GroupConfig {
    pub fn n(&self) -> u32 {
        self.agents.len() as u32
    }

    pub fn validate(&self) -> Result<(), RuntimeError> {
        if self.agents.is_empty() {
            return Err(RuntimeError::Config(
                "a group needs at least one agent".into(),
            ));
        }
        for (i, a) in self.agents.iter().enumerate() {
            if a.agent_id != AgentId(i as u32 + 1) {
                return Err(RuntimeError::Config(format!(
                    "agent ids must be 1..=n in order; position {} holds {}",
                    i + 1,
                    a.agent_id
                )));
            }
            a.validate()?;
            if a.shape != self.agents[0].shape {
                return Err(RuntimeError::Config(
                    "all agents must share one network shape".into(),
                ));
            }
        }
        if self.mode == RunMode::Sync
            && self
                .agents
                .iter()
                .any(|a| a.total_epochs != self.agents[0].total_epochs)
        {
            return Err(RuntimeError::Config(
                "synchronous runs need equal epoch counts".into(),
            ));
        }
        if let TransportConfig::Tcp { peers, local } = &self.transport {
            for p in peers {
                if p.id.0 == 0 || p.id.0 > self.n() {
                    return Err(RuntimeError::Config(format!(
                        "peer {} is not in the group",
                        p.id
                    )));
                }
            }
            if let Some(local) = local {
                let id = local;
                if id.0 == 0 || id.0 > self.n() {
                    return Err(RuntimeError::Config(format!(
                        "local agent {id} is not in the group"
                    )));
                }
                if self.scheduler == Scheduler::Deterministic {
                    return Err(RuntimeError::Config(
                        "the deterministic scheduler runs every agent in one process".into(),
                    ));
                }
                for id in 1..=self.n() {
                    if id != local.0 && !peers.iter().any(|p| p.id.0 == id) {
                        return Err(RuntimeError::Config(format!(
                            "remote agent {id} needs a --peer address"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Everything one agent produced during a run.
#[derive(Debug)]
pub struct AgentOutcome {
    pub agent_id: AgentId,
    pub records: Vec<EpochRecord>,
    pub final_params: ParameterVector,
    pub error: Option<RuntimeError>,
    /// Packets still waiting in the store or mailbox when the run ended.
    pub pending_at_shutdown: usize,
    pub send_failures: u64,
    pub decode_errors: u64,
}

impl AgentOutcome {
    pub fn completed(&self) -> bool {
        self.error.is_none()
    }
}

#[derive(Debug)]
pub struct GroupOutcome {
    pub agents: Vec<AgentOutcome>,
}

impl GroupOutcome {
    pub fn all_completed(&self) -> bool {
        self.agents.iter().all(AgentOutcome::completed)
    }
}

/// Output of one epoch's experience collection and gradient computation.
#[derive(Debug, Clone)]
pub struct EpochOutput {
    pub episode_return: u32,
    pub loss: f64,
    pub grad: GradientVector,
}

/// The A2C learner of one agent: its environment, parameters and RNG.
#[derive(Debug)]
pub struct Learner<E: Environment = CartPole> {
    cfg: AgentConfig,
    env: E,
    params: ParameterVector,
    rng: ChaCha8Rng,
}

impl<E: Environment> Learner<E> {
    /// Seeds the agent's RNG with `cfg.seed` and draws initial parameters
    /// from it before anything else.
    pub fn new(cfg: AgentConfig, env: E) -> Result<Self, RuntimeError> {
        cfg.validate()?;
        let shape = ShapeDescriptor::shared(cfg.shape.clone())
            .map_err(|e| RuntimeError::Config(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let params = init_params(shape, &mut rng);
        Ok(Self {
            cfg,
            env,
            params,
            rng,
        })
    }

    pub fn config(&self) -> &AgentConfig {
        &self.cfg
    }

    pub fn id(&self) -> AgentId {
        self.cfg.agent_id
    }

    pub fn shape(&self) -> &Arc<ShapeDescriptor> {
        self.params.shape()
    }

    pub fn params(&self) -> &ParameterVector {
        &self.params
    }

    pub fn set_params(&mut self, params: ParameterVector) {
        self.params = params;
    }

    pub fn run_epoch(&mut self, epoch: u64) -> Result<EpochOutput, RuntimeError> {
        if self.cfg.fail_at_epoch == Some(epoch) {
            return Err(RuntimeError::InjectedFault {
                agent: self.cfg.agent_id,
                epoch,
            });
        }
        let wrap = |source| RuntimeError::Learning {
            agent: self.cfg.agent_id,
            epoch,
            source,
        };
        let batch = a2c::collect_experiences(
            &self.env,
            &self.params,
            self.cfg.k,
            self.cfg.step_cap,
            &mut self.rng,
        )
        .map_err(wrap)?;
        let out = a2c::epoch_gradients(&batch, &self.params, self.cfg.gamma, self.cfg.coefficients)
            .map_err(wrap)?;
        Ok(EpochOutput {
            episode_return: batch.reported_return as u32,
            loss: out.loss,
            grad: out.grad,
        })
    }

    pub fn apply(&mut self, grad: &GradientVector, epoch: u64) -> Result<(), RuntimeError> {
        self.params
            .apply_gradient(grad, self.cfg.lr)
            .map_err(|source| RuntimeError::Update {
                agent: self.cfg.agent_id,
                epoch,
                source,
            })
    }
}

fn local_record(id: AgentId, epoch: u64, out: &EpochOutput) -> EpochRecord {
    EpochRecord {
        agent_id: id,
        epoch,
        episode_return: out.episode_return,
        loss: out.loss,
        update_kind: UpdateKind::Local,
        packets_received: 0,
        packets_sent: 0,
        packets_averaged: 0,
    }
}
