//! Decentralized asynchronous learning for advantage actor-critic agents on
//! CartPole.
//!
//! Each agent trains its own policy and value networks. After a warm-up
//! threshold, agents exchange per-epoch gradients over a transport and
//! periodically apply a weighted average of everything they have collected.

pub mod a2c;
pub mod environment;
pub mod harness;
pub mod knowledge;
pub mod neural;
pub mod runtime;
pub mod transport;
