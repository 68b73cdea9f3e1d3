use std::collections::BTreeMap;
use std::net::{SocketAddr, TcpListener};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use log::info;

use super::agent::{run_agent_ddal, run_single, DdalAgent, Generated};
use super::sync::run_group_sync;
use super::{
    AgentOutcome, EpochRecord, EpochSink, GroupConfig, GroupOutcome, RunMode, RuntimeError,
    Scheduler, TransportConfig,
};
use crate::environment::CartPole;
use crate::knowledge::AgentId;
use crate::neural::ShapeDescriptor;
use crate::transport::tcp::{self, TcpLink, TcpListenerHandle, TcpOptions};
use crate::transport::{inproc_group, Mailbox, PeerDirectory, PeerLink};

/// Boxed per-agent sink usable from worker threads.
pub type SendSink = Box<dyn EpochSink + Send>;

struct Wiring {
    ids: Vec<AgentId>,
    mailboxes: Vec<Mailbox>,
    directories: Vec<PeerDirectory>,
    _listeners: Vec<TcpListenerHandle>,
}

fn wire_transport(
    group: &GroupConfig,
    shape: &Arc<ShapeDescriptor>,
    local: &[AgentId],
    synchronous: bool,
) -> Result<Wiring, RuntimeError> {
    match &group.transport {
        TransportConfig::Inproc => {
            let (mailboxes, directories) = inproc_group(group.n(), shape);
            Ok(Wiring {
                ids: (1..=group.n()).map(AgentId).collect(),
                mailboxes,
                directories,
                _listeners: Vec::new(),
            })
        }
        TransportConfig::Tcp { peers, .. } => {
            let declared: BTreeMap<AgentId, SocketAddr> =
                peers.iter().map(|p| (p.id, p.addr)).collect();
            let mut addrs = declared.clone();
            let mut mailboxes = Vec::new();
            let mut listeners = Vec::new();
            for &id in local {
                let bind = declared
                    .get(&id)
                    .copied()
                    .unwrap_or_else(|| SocketAddr::from(([127, 0, 0, 1], 0)));
                let listener = TcpListener::bind(bind)?;
                let mailbox = Mailbox::new(id, Arc::clone(shape));
                let handle = tcp::listen(listener, mailbox.sender(), synchronous)?;
                info!("agent {id} listening on {}", handle.local_addr());
                addrs.insert(id, handle.local_addr());
                mailboxes.push(mailbox);
                listeners.push(handle);
            }
            let opts = TcpOptions {
                synchronous,
                connect_timeout: Duration::from_secs(if local.len() == 1 { 60 } else { 10 }),
                ..TcpOptions::default()
            };
            let mut directories = Vec::new();
            for &id in local {
                let links = (1..=group.n())
                    .map(AgentId)
                    .filter(|&peer| peer != id)
                    .map(|peer| {
                        let addr = addrs.get(&peer).copied().ok_or_else(|| {
                            RuntimeError::Config(format!("no address for agent {peer}"))
                        })?;
                        Ok(Box::new(TcpLink::connect(peer, addr, opts)) as Box<dyn PeerLink>)
                    })
                    .collect::<Result<Vec<_>, RuntimeError>>()?;
                directories.push(PeerDirectory::new(id, links)?);
            }
            Ok(Wiring {
                ids: local.to_vec(),
                mailboxes,
                directories,
                _listeners: listeners,
            })
        }
    }
}

fn local_agents(group: &GroupConfig) -> Vec<AgentId> {
    match &group.transport {
        TransportConfig::Tcp {
            local: Some(id), ..
        } => vec![*id],
        _ => (1..=group.n()).map(AgentId).collect(),
    }
}

fn group_shape(group: &GroupConfig) -> Result<Arc<ShapeDescriptor>, RuntimeError> {
    ShapeDescriptor::shared(group.agents[0].shape.clone())
        .map_err(|e| RuntimeError::Config(e.to_string()))
}

/// Runs a whole group according to its mode and scheduler. `sinks` holds one
/// sink per agent (index `id - 1`); sinks of agents hosted elsewhere are
/// left untouched.
pub fn run_group(
    group: &GroupConfig,
    mut sinks: Vec<SendSink>,
) -> Result<GroupOutcome, RuntimeError> {
    group.validate()?;
    if sinks.len() != group.agents.len() {
        return Err(RuntimeError::Config(format!(
            "{} sinks for {} agents",
            sinks.len(),
            group.agents.len()
        )));
    }
    match (group.mode, group.scheduler) {
        (RunMode::Single, Scheduler::Deterministic) => {
            let agents = group
                .agents
                .iter()
                .zip(sinks.iter_mut())
                .map(|(cfg, sink)| run_single(cfg.clone(), CartPole, sink.as_mut()))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(GroupOutcome { agents })
        }
        (RunMode::Single, Scheduler::Concurrent) => {
            let results: Vec<Result<AgentOutcome, RuntimeError>> = thread::scope(|s| {
                let handles: Vec<_> = group
                    .agents
                    .iter()
                    .zip(sinks.iter_mut())
                    .map(|(cfg, sink)| {
                        let cfg = cfg.clone();
                        s.spawn(move || run_single(cfg, CartPole, sink.as_mut()))
                    })
                    .collect();
                join_all(handles, group.agents.iter().map(|a| a.agent_id))
            });
            Ok(GroupOutcome {
                agents: results.into_iter().collect::<Result<_, _>>()?,
            })
        }
        (RunMode::Sync, _) => run_group_sync(group, sinks),
        (RunMode::Ddal, Scheduler::Deterministic) => deterministic_schedule(group, sinks),
        (RunMode::Ddal, Scheduler::Concurrent) => run_concurrent(group, sinks),
    }
}

fn join_all<'s, I>(
    handles: Vec<thread::ScopedJoinHandle<'s, Result<AgentOutcome, RuntimeError>>>,
    ids: I,
) -> Vec<Result<AgentOutcome, RuntimeError>>
where
    I: Iterator<Item = AgentId>,
{
    handles
        .into_iter()
        .zip(ids)
        .map(|(h, id)| h.join().unwrap_or(Err(RuntimeError::WorkerPanic(id))))
        .collect()
}

fn run_concurrent(
    group: &GroupConfig,
    mut sinks: Vec<SendSink>,
) -> Result<GroupOutcome, RuntimeError> {
    let shape = group_shape(group)?;
    let local = local_agents(group);
    let mut wiring = wire_transport(group, &shape, &local, false)?;
    let ids = wiring.ids.clone();

    let mut local_sinks: Vec<&mut SendSink> = Vec::new();
    for (i, sink) in sinks.iter_mut().enumerate() {
        if ids.contains(&AgentId(i as u32 + 1)) {
            local_sinks.push(sink);
        }
    }

    let results = thread::scope(|s| {
        let handles: Vec<_> = wiring
            .mailboxes
            .iter_mut()
            .zip(&wiring.directories)
            .zip(local_sinks)
            .zip(&ids)
            .map(|(((mailbox, directory), sink), id)| {
                let cfg = group.agents[id.0 as usize - 1].clone();
                thread::Builder::new()
                    .name(format!("ddal-agent-{id}"))
                    .spawn_scoped(s, move || {
                        let out = run_agent_ddal(cfg, CartPole, mailbox, directory, sink.as_mut());
                        directory.close();
                        out
                    })
                    .expect("spawn agent thread")
            })
            .collect();
        join_all(handles, ids.iter().copied())
    });

    let mut agents = Vec::with_capacity(results.len());
    for (res, mailbox) in results.into_iter().zip(wiring.mailboxes.iter_mut()) {
        let mut outcome = res?;
        outcome.pending_at_shutdown += mailbox.discard_pending();
        agents.push(outcome);
    }
    Ok(GroupOutcome { agents })
}

/// Single-threaded round-robin execution of a ddal group.
///
/// Each round first lets agents 1..n (in order) collect, compute and share
/// their epoch, then lets agents 1..n perform their update step. Delivery is
/// synchronous, so every run is a pure function of the configuration.
pub fn deterministic_schedule(
    group: &GroupConfig,
    mut sinks: Vec<SendSink>,
) -> Result<GroupOutcome, RuntimeError> {
    group.validate()?;
    let shape = group_shape(group)?;
    let ids: Vec<AgentId> = (1..=group.n()).map(AgentId).collect();
    let mut wiring = wire_transport(group, &shape, &ids, true)?;
    let n = ids.len();

    let outcomes: Vec<AgentOutcome> = {
        let mut agents = Vec::with_capacity(n);
        for ((mailbox, directory), cfg) in wiring
            .mailboxes
            .iter_mut()
            .zip(&wiring.directories)
            .zip(&group.agents)
        {
            agents.push(DdalAgent::new(cfg.clone(), CartPole, mailbox, directory)?);
        }
        let mut records: Vec<Vec<EpochRecord>> = vec![Vec::new(); n];
        let mut errors: Vec<Option<RuntimeError>> = (0..n).map(|_| None).collect();

        loop {
            let mut generated: Vec<Option<Generated>> = vec![None; n];
            for (i, agent) in agents.iter_mut().enumerate() {
                if errors[i].is_some() || agent.finished() {
                    continue;
                }
                match agent.generate() {
                    Ok(g) => generated[i] = Some(g),
                    Err(e) => {
                        log::error!("agent {} stopped: {e}", ids[i]);
                        errors[i] = Some(e);
                    }
                }
            }
            if generated.iter().all(Option::is_none) {
                break;
            }
            for (i, agent) in agents.iter_mut().enumerate() {
                let Some(g) = generated[i].take() else {
                    continue;
                };
                match agent.consolidate(g) {
                    Ok(rec) => {
                        sinks[i].record(&rec);
                        records[i].push(rec);
                    }
                    Err(e) => {
                        log::error!("agent {} stopped: {e}", ids[i]);
                        errors[i] = Some(e);
                    }
                }
            }
        }

        agents
            .into_iter()
            .zip(records)
            .zip(errors)
            .map(|((agent, recs), err)| agent.into_outcome(recs, err))
            .collect()
    };

    for d in &wiring.directories {
        d.close();
    }
    let mut agents = outcomes;
    for (outcome, mailbox) in agents.iter_mut().zip(wiring.mailboxes.iter_mut()) {
        outcome.pending_at_shutdown += mailbox.discard_pending();
    }
    Ok(GroupOutcome { agents })
}
