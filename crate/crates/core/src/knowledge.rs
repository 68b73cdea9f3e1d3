//! Gradient packets, the per-agent knowledge store and the two-term weighted
//! gradient average.

use std::collections::VecDeque;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::neural::{GradientVector, NeuralError};

/// 1-based agent index within a group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AgentId(pub u32);

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KnowledgeError {
    #[error("relevance must be positive and finite, got {0}")]
    InvalidRelevance(f64),
    #[error("training-experience weight must be positive and finite, got {0}")]
    InvalidExperience(f64),
    #[error("sender epoch must be at least 1")]
    ZeroEpoch,
    #[error("agent ids start at 1")]
    InvalidSender,
    #[error("cannot average an empty set of gradients")]
    NoPackets,
    #[error("gradient contains non-finite values")]
    NonFiniteGradient,
    #[error(transparent)]
    Neural(#[from] NeuralError),
}

/// How the training-experience weight `T` of a packet is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightingMode {
    /// `T = 1` for every packet.
    #[default]
    Uniform,
    /// `T` = the sender's epoch count.
    Experience,
}

/// One epoch's gradient, tagged with its weighting information.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientPacket {
    pub sender_id: AgentId,
    pub sender_epoch: u64,
    /// Training-experience weight `T`.
    pub experience: f64,
    /// Relevance weight `R`.
    pub relevance: f64,
    pub grad: GradientVector,
}

impl GradientPacket {
    /// Same packet with the gradient rounded to 32-bit precision.
    pub fn narrowed(&self) -> Self {
        Self {
            grad: self.grad.narrowed(),
            ..self.clone()
        }
    }
}

pub fn annotate(
    grad: GradientVector,
    sender_id: AgentId,
    sender_epoch: u64,
    relevance: f64,
    mode: WeightingMode,
) -> Result<GradientPacket, KnowledgeError> {
    if !(relevance > 0.0 && relevance.is_finite()) {
        return Err(KnowledgeError::InvalidRelevance(relevance));
    }
    if sender_epoch == 0 {
        return Err(KnowledgeError::ZeroEpoch);
    }
    if sender_id.0 == 0 {
        return Err(KnowledgeError::InvalidSender);
    }
    if !grad.is_finite() {
        return Err(KnowledgeError::NonFiniteGradient);
    }
    let experience = match mode {
        WeightingMode::Uniform => 1.0,
        WeightingMode::Experience => sender_epoch as f64,
    };
    Ok(GradientPacket {
        sender_id,
        sender_epoch,
        experience,
        relevance,
        grad,
    })
}

/// Pending gradients of one agent: its own post-threshold gradients and those
/// received from peers, in arrival order.
#[derive(Debug, Default, Clone)]
pub struct KnowledgeStore {
    pending: VecDeque<GradientPacket>,
}

impl KnowledgeStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn store(&mut self, packet: GradientPacket) {
        self.pending.push_back(packet);
    }

    /// Removes and returns everything pending.
    pub fn drain(&mut self) -> Vec<GradientPacket> {
        self.pending.drain(..).collect()
    }

    /// Removes and returns at most `max` of the oldest packets.
    pub fn drain_up_to(&mut self, max: usize) -> Vec<GradientPacket> {
        let n = max.min(self.pending.len());
        self.pending.drain(..n).collect()
    }

    pub fn len(&self) -> usize {
        self.pending.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pending.is_empty()
    }
}

/// Combined weight of each packet, `(T_j / sum T + R_j / sum R) / 2`.
pub fn combined_weights(packets: &[GradientPacket]) -> Result<Vec<f64>, KnowledgeError> {
    if packets.is_empty() {
        return Err(KnowledgeError::NoPackets);
    }
    let (t_sum, r_sum) = weight_sums(packets)?;
    Ok(packets
        .iter()
        .map(|p| 0.5 * (p.experience / t_sum + p.relevance / r_sum))
        .collect())
}

fn weight_sums(packets: &[GradientPacket]) -> Result<(f64, f64), KnowledgeError> {
    let mut t_sum = 0.0;
    let mut r_sum = 0.0;
    for p in packets {
        if !(p.experience > 0.0 && p.experience.is_finite()) {
            return Err(KnowledgeError::InvalidExperience(p.experience));
        }
        if !(p.relevance > 0.0 && p.relevance.is_finite()) {
            return Err(KnowledgeError::InvalidRelevance(p.relevance));
        }
        t_sum += p.experience;
        r_sum += p.relevance;
    }
    Ok((t_sum, r_sum))
}

/// `g = 1/2 * (sum_j T_j/sum(T) g_j + sum_j R_j/sum(R) g_j)`.
pub fn weighted_average(packets: &[GradientPacket]) -> Result<GradientVector, KnowledgeError> {
    let first = packets.first().ok_or(KnowledgeError::NoPackets)?;
    let shape = Arc::clone(first.grad.shape());
    if packets.iter().any(|p| p.grad.shape() != &shape) {
        return Err(NeuralError::ShapeMismatch.into());
    }
    let (t_sum, r_sum) = weight_sums(packets)?;

    let len = shape.param_count();
    let mut by_experience = vec![0.0; len];
    let mut by_relevance = vec![0.0; len];
    for p in packets {
        let wt = p.experience / t_sum;
        let wr = p.relevance / r_sum;
        for ((e, r), g) in by_experience
            .iter_mut()
            .zip(by_relevance.iter_mut())
            .zip(p.grad.as_slice())
        {
            *e += wt * g;
            *r += wr * g;
        }
    }
    let values = by_experience
        .iter()
        .zip(&by_relevance)
        .map(|(e, r)| 0.5 * (e + r))
        .collect();
    Ok(GradientVector::from_values(shape, values)?)
}
