use log::{error, info};

use super::{
    local_record, AgentConfig, AgentOutcome, EpochRecord, EpochSink, Learner, RuntimeError,
    UpdateKind,
};
use crate::environment::Environment;
use crate::knowledge::{annotate, weighted_average, KnowledgeStore};
use crate::neural::GradientVector;
use crate::transport::{Mailbox, PeerDirectory};

/// First half of an epoch: what was learned and shared before the
/// (possible) averaged update.
#[derive(Debug, Clone)]
pub struct Generated {
    pub epoch: u64,
    pub episode_return: u32,
    pub loss: f64,
    pub update_kind: UpdateKind,
    pub packets_sent: u64,
}

/// One agent running the decentralised loop against its own mailbox and
/// peer directory.
pub struct DdalAgent<'a, E: Environment> {
    learner: Learner<E>,
    store: KnowledgeStore,
    mailbox: &'a mut Mailbox,
    directory: &'a PeerDirectory,
    epoch: u64,
}

impl<'a, E: Environment> DdalAgent<'a, E> {
    pub fn new(
        cfg: AgentConfig,
        env: E,
        mailbox: &'a mut Mailbox,
        directory: &'a PeerDirectory,
    ) -> Result<Self, RuntimeError> {
        if mailbox.owner() != cfg.agent_id || directory.owner() != cfg.agent_id {
            return Err(RuntimeError::Config(format!(
                "agent {} wired to the transport of another agent",
                cfg.agent_id
            )));
        }
        Ok(Self {
            learner: Learner::new(cfg, env)?,
            store: KnowledgeStore::new(),
            mailbox,
            directory,
            epoch: 0,
        })
    }

    pub fn config(&self) -> &AgentConfig {
        self.learner.config()
    }

    pub fn learner(&self) -> &Learner<E> {
        &self.learner
    }

    pub fn epochs_done(&self) -> u64 {
        self.epoch
    }

    pub fn finished(&self) -> bool {
        self.epoch >= self.config().total_epochs
    }

    /// Collects experience and computes the epoch gradient. Before the
    /// threshold the gradient is applied at once; afterwards it is tagged,
    /// kept in the own store and sent to every peer.
    pub fn generate(&mut self) -> Result<Generated, RuntimeError> {
        let epoch = self.epoch + 1;
        let out = self.learner.run_epoch(epoch)?;
        let cfg = self.learner.config().clone();
        let mut generated = Generated {
            epoch,
            episode_return: out.episode_return,
            loss: out.loss,
            update_kind: UpdateKind::Local,
            packets_sent: 0,
        };

        if !cfg.is_sharing_epoch(epoch) {
            self.learner.apply(&out.grad, epoch)?;
        } else {
            let local = (cfg.local_updates_during_sharing && !cfg.is_update_epoch(epoch))
                .then(|| out.grad.clone());
            let packet = annotate(out.grad, cfg.agent_id, epoch, cfg.relevance, cfg.weighting)
                .map_err(|source| RuntimeError::Knowledge {
                    agent: cfg.agent_id,
                    epoch,
                    source,
                })?;
            let report = self.directory.broadcast(&packet);
            generated.packets_sent = report.delivered as u64;
            self.store.store(packet);
            match local {
                Some(grad) => self.learner.apply(&grad, epoch)?,
                None => generated.update_kind = UpdateKind::None,
            }
        }
        self.epoch = epoch;
        Ok(generated)
    }

    /// Second half of an epoch: on update epochs, pull everything received,
    /// average it with the own pending gradients and apply the result.
    pub fn consolidate(&mut self, generated: Generated) -> Result<EpochRecord, RuntimeError> {
        let cfg = self.learner.config();
        let id = cfg.agent_id;
        let epoch = generated.epoch;
        let mut record = EpochRecord {
            agent_id: id,
            epoch,
            episode_return: generated.episode_return,
            loss: generated.loss,
            update_kind: generated.update_kind,
            packets_received: 0,
            packets_sent: generated.packets_sent,
            packets_averaged: 0,
        };
        if cfg.is_update_epoch(epoch) {
            record.packets_received = self.mailbox.drain_into(&mut self.store).moved as u64;
            let packets = match cfg.max_drain {
                Some(max) => self.store.drain_up_to(max),
                None => self.store.drain(),
            };
            let average: GradientVector =
                weighted_average(&packets).map_err(|source| RuntimeError::Knowledge {
                    agent: id,
                    epoch,
                    source,
                })?;
            self.learner.apply(&average, epoch)?;
            record.update_kind = UpdateKind::Averaged;
            record.packets_averaged = packets.len() as u64;
        }
        Ok(record)
    }

    pub fn step(&mut self) -> Result<EpochRecord, RuntimeError> {
        let generated = self.generate()?;
        self.consolidate(generated)
    }

    /// Packets left in the own store.
    pub fn pending(&self) -> usize {
        self.store.len()
    }

    pub(crate) fn into_outcome(
        self,
        records: Vec<EpochRecord>,
        error: Option<RuntimeError>,
    ) -> AgentOutcome {
        AgentOutcome {
            agent_id: self.learner.id(),
            records,
            final_params: self.learner.params().clone(),
            error,
            pending_at_shutdown: self.store.len(),
            send_failures: self.directory.send_failures(),
            decode_errors: self.mailbox.decode_errors(),
        }
    }
}

/// Runs one agent to completion. Errors stop this agent only; they are
/// reported in the outcome.
pub fn run_agent_ddal<E: Environment>(
    cfg: AgentConfig,
    env: E,
    mailbox: &mut Mailbox,
    directory: &PeerDirectory,
    sink: &mut dyn EpochSink,
) -> Result<AgentOutcome, RuntimeError> {
    let mut agent = DdalAgent::new(cfg, env, mailbox, directory)?;
    let mut records = Vec::with_capacity(agent.config().total_epochs as usize);
    let mut failure = None;
    while !agent.finished() {
        match agent.step() {
            Ok(rec) => {
                sink.record(&rec);
                records.push(rec);
            }
            Err(e) => {
                error!("agent {} stopped: {e}", agent.config().agent_id);
                failure = Some(e);
                break;
            }
        }
    }
    if failure.is_none() {
        info!(
            "agent {} finished {} epochs",
            agent.config().agent_id,
            agent.epochs_done()
        );
    }
    Ok(agent.into_outcome(records, failure))
}

/// Plain local A2C: collect, differentiate, update, every epoch.
pub fn run_single<E: Environment>(
    cfg: AgentConfig,
    env: E,
    sink: &mut dyn EpochSink,
) -> Result<AgentOutcome, RuntimeError> {
    let mut learner = Learner::new(cfg, env)?;
    let id = learner.id();
    let total = learner.config().total_epochs;
    let mut records = Vec::with_capacity(total as usize);
    let mut failure = None;
    for epoch in 1..=total {
        let step = learner
            .run_epoch(epoch)
            .and_then(|out| learner.apply(&out.grad, epoch).map(|_| out));
        match step {
            Ok(out) => {
                let rec = local_record(id, epoch, &out);
                sink.record(&rec);
                records.push(rec);
            }
            Err(e) => {
                error!("agent {id} stopped: {e}");
                failure = Some(e);
                break;
            }
        }
    }
    Ok(AgentOutcome {
        agent_id: id,
        records,
        final_params: learner.params().clone(),
        error: failure,
        pending_at_shutdown: 0,
        send_failures: 0,
        decode_errors: 0,
    })
}
