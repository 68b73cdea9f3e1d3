//! Non-blocking delivery of gradient packets between agents.
//!
//! Each agent owns one [`Mailbox`]. Peers push into it through a
//! [`PeerLink`]: either directly in-process or over a framed TCP connection
//! whose listener forwards raw frames into the same mailbox. The owner moves
//! mailbox contents into its knowledge store at update time.

pub mod tcp;
pub mod wire;

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc::{self, Receiver, Sender};
use std::sync::Arc;

use log::{debug, warn};
use thiserror::Error;

use crate::knowledge::{AgentId, GradientPacket, KnowledgeStore};
use crate::neural::ShapeDescriptor;

pub use wire::{decode, encode, WireError};

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("mailbox of agent {0} is gone")]
    Disconnected(AgentId),
    #[error("connection to agent {0} is down")]
    LinkDown(AgentId),
    #[error(transparent)]
    Wire(#[from] WireError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("agent {0} cannot link to itself")]
    SelfLink(AgentId),
    #[error("agent {0} appears twice in the peer directory")]
    DuplicatePeer(AgentId),
    #[error("peer directory of agent {owner} is missing agent {missing}")]
    MissingPeer { owner: AgentId, missing: AgentId },
}

/// Item waiting in a mailbox.
#[derive(Debug, Clone)]
pub enum Inbound {
    /// Already-decoded packet (in-process delivery).
    Packet(GradientPacket),
    /// Raw wire frame (network delivery); decoded by the owner.
    Frame(Vec<u8>),
}

/// Producer handle of a mailbox; cheap to clone and safe to share.
#[derive(Debug, Clone)]
pub struct MailboxSender {
    owner: AgentId,
    tx: Sender<Inbound>,
}

impl MailboxSender {
    pub fn owner(&self) -> AgentId {
        self.owner
    }

    pub fn deliver(&self, item: Inbound) -> Result<(), TransportError> {
        self.tx
            .send(item)
            .map_err(|_| TransportError::Disconnected(self.owner))
    }
}

/// Outcome of moving a mailbox into a knowledge store.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DrainReport {
    pub moved: usize,
    pub rejected: usize,
}

/// Unbounded multi-producer, single-consumer inbox of one agent.
#[derive(Debug)]
pub struct Mailbox {
    owner: AgentId,
    shape: Arc<ShapeDescriptor>,
    tx: Sender<Inbound>,
    rx: Receiver<Inbound>,
    decode_errors: u64,
}

impl Mailbox {
    pub fn new(owner: AgentId, shape: Arc<ShapeDescriptor>) -> Self {
        let (tx, rx) = mpsc::channel();
        Self {
            owner,
            shape,
            tx,
            rx,
            decode_errors: 0,
        }
    }

    pub fn owner(&self) -> AgentId {
        self.owner
    }

    pub fn sender(&self) -> MailboxSender {
        MailboxSender {
            owner: self.owner,
            tx: self.tx.clone(),
        }
    }

    /// Total packets discarded as malformed over the mailbox's lifetime.
    pub fn decode_errors(&self) -> u64 {
        self.decode_errors
    }

    /// Moves everything currently queued into `store` without blocking.
    /// Malformed frames and packets of the wrong shape are dropped.
    pub fn drain_into(&mut self, store: &mut KnowledgeStore) -> DrainReport {
        let mut report = DrainReport::default();
        while let Ok(item) = self.rx.try_recv() {
            let packet = match item {
                Inbound::Packet(p) => {
                    if p.grad.shape() == &self.shape && p.grad.is_finite() {
                        Ok(p)
                    } else {
                        Err(WireError::ShapeMismatch {
                            expected: self.shape.param_count(),
                            actual: p.grad.len(),
                        })
                    }
                }
                Inbound::Frame(bytes) => wire::decode(&bytes, &self.shape),
            };
            match packet {
                Ok(p) => {
                    store.store(p);
                    report.moved += 1;
                }
                Err(e) => {
                    warn!("agent {}: dropping inbound packet: {e}", self.owner);
                    report.rejected += 1;
                }
            }
        }
        self.decode_errors += report.rejected as u64;
        report
    }

    /// Empties the mailbox without storing anything; returns how many items
    /// were still queued.
    pub fn discard_pending(&mut self) -> usize {
        self.rx.try_iter().count()
    }
}

/// One directed connection to a peer's mailbox.
pub trait PeerLink: Send + Sync {
    fn peer(&self) -> AgentId;

    /// Hands the packet over for delivery without waiting for the receiver
    /// to consume it.
    fn send(&self, packet: &GradientPacket) -> Result<(), TransportError>;

    /// Failures detected after `send` already returned (queued links).
    fn deferred_failures(&self) -> u64 {
        0
    }

    /// Flushes and releases the link. Sends after `close` fail.
    fn close(&self) {}
}

/// Direct in-process link. Gradients are rounded to the wire's 32-bit
/// precision so both backends deliver identical values.
#[derive(Debug, Clone)]
pub struct InProcLink {
    target: MailboxSender,
}

impl InProcLink {
    pub fn new(target: MailboxSender) -> Self {
        Self { target }
    }
}

impl PeerLink for InProcLink {
    fn peer(&self) -> AgentId {
        self.target.owner
    }

    fn send(&self, packet: &GradientPacket) -> Result<(), TransportError> {
        self.target.deliver(Inbound::Packet(packet.narrowed()))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BroadcastReport {
    pub delivered: usize,
    pub failed: usize,
}

/// Links from one agent to every other agent of its group.
pub struct PeerDirectory {
    owner: AgentId,
    links: Vec<Box<dyn PeerLink>>,
    failures: AtomicU64,
}

impl std::fmt::Debug for PeerDirectory {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PeerDirectory")
            .field("owner", &self.owner)
            .field("peers", &self.peers())
            .finish()
    }
}

impl PeerDirectory {
    pub fn new(owner: AgentId, links: Vec<Box<dyn PeerLink>>) -> Result<Self, TransportError> {
        let mut seen = Vec::with_capacity(links.len());
        for link in &links {
            let peer = link.peer();
            if peer == owner {
                return Err(TransportError::SelfLink(owner));
            }
            if seen.contains(&peer) {
                return Err(TransportError::DuplicatePeer(peer));
            }
            seen.push(peer);
        }
        Ok(Self {
            owner,
            links,
            failures: AtomicU64::new(0),
        })
    }

    /// Directory with no peers (a group of one).
    pub fn empty(owner: AgentId) -> Self {
        Self {
            owner,
            links: Vec::new(),
            failures: AtomicU64::new(0),
        }
    }

    /// Checks that agents `1..=group_size` other than the owner are present.
    pub fn check_roster(&self, group_size: u32) -> Result<(), TransportError> {
        let peers = self.peers();
        for id in (1..=group_size).map(AgentId) {
            if id != self.owner && !peers.contains(&id) {
                return Err(TransportError::MissingPeer {
                    owner: self.owner,
                    missing: id,
                });
            }
        }
        Ok(())
    }

    pub fn owner(&self) -> AgentId {
        self.owner
    }

    pub fn peers(&self) -> Vec<AgentId> {
        self.links.iter().map(|l| l.peer()).collect()
    }

    pub fn len(&self) -> usize {
        self.links.len()
    }

    pub fn is_empty(&self) -> bool {
        self.links.is_empty()
    }

    pub fn send(&self, peer: AgentId, packet: &GradientPacket) -> Result<(), TransportError> {
        let link =
            self.links
                .iter()
                .find(|l| l.peer() == peer)
                .ok_or(TransportError::MissingPeer {
                    owner: self.owner,
                    missing: peer,
                })?;
        let res = link.send(packet);
        if res.is_err() {
            self.failures.fetch_add(1, Ordering::Relaxed);
        }
        res
    }

    /// Sends a copy to every peer; a failing peer never affects the others.
    pub fn broadcast(&self, packet: &GradientPacket) -> BroadcastReport {
        let mut report = BroadcastReport::default();
        for link in &self.links {
            match link.send(packet) {
                Ok(()) => report.delivered += 1,
                Err(e) => {
                    debug!("agent {} -> {}: send failed: {e}", self.owner, link.peer());
                    self.failures.fetch_add(1, Ordering::Relaxed);
                    report.failed += 1;
                }
            }
        }
        report
    }

    /// Immediate plus deferred send failures.
    pub fn send_failures(&self) -> u64 {
        self.failures.load(Ordering::Relaxed)
            + self
                .links
                .iter()
                .map(|l| l.deferred_failures())
                .sum::<u64>()
    }

    pub fn close(&self) {
        for link in &self.links {
            link.close();
        }
    }
}

/// Mailboxes and fully connected in-process directories for agents `1..=n`.
pub fn inproc_group(n: u32, shape: &Arc<ShapeDescriptor>) -> (Vec<Mailbox>, Vec<PeerDirectory>) {
    let mailboxes: Vec<Mailbox> = (1..=n)
        .map(|i| Mailbox::new(AgentId(i), Arc::clone(shape)))
        .collect();
    let directories = (1..=n)
        .map(|i| {
            let links = mailboxes
                .iter()
                .filter(|mb| mb.owner() != AgentId(i))
                .map(|mb| Box::new(InProcLink::new(mb.sender())) as Box<dyn PeerLink>)
                .collect();
            PeerDirectory::new(AgentId(i), links).expect("roster is well formed")
        })
        .collect();
    (mailboxes, directories)
}
