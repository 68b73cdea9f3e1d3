//! Advantage actor-critic: experience collection, one-step TD advantages and
//! per-epoch gradients.

use rand::Rng;
use thiserror::Error;

use crate::environment::{EnvError, EnvState, Environment, Observable, Transition};
use crate::neural::{self, LossCoefficients, LossGradient, NeuralError, ParameterVector, Sample};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum A2cError {
    #[error("k must be at least 1")]
    ZeroBatch,
    #[error("step cap must be at least 1")]
    ZeroStepCap,
    #[error("discount must lie in (0, 1], got {0}")]
    InvalidGamma(f64),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Neural(#[from] NeuralError),
}

/// Transitions gathered during one epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochBatch<S = EnvState> {
    pub transitions: Vec<Transition<S>>,
    /// Returns of episodes that finished inside the batch.
    pub episode_returns: Vec<f64>,
    /// Return of the first episode of the batch, cut short if the batch
    /// ended before it did.
    pub reported_return: f64,
}

impl<S> EpochBatch<S> {
    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }
}

/// Runs capped episodes under the current policy until `k` transitions exist.
///
/// Every call starts a fresh episode. Reaching `step_cap` marks the last
/// transition terminal; the batch cut-off at the `k`-th transition does not.
pub fn collect_experiences<E, R>(
    env: &E,
    params: &ParameterVector,
    k: usize,
    step_cap: u32,
    rng: &mut R,
) -> Result<EpochBatch<E::State>, A2cError>
where
    E: Environment,
    R: Rng + ?Sized,
{
    if k == 0 {
        return Err(A2cError::ZeroBatch);
    }
    if step_cap == 0 {
        return Err(A2cError::ZeroStepCap);
    }
    let mut transitions = Vec::with_capacity(k);
    let mut episode_returns = Vec::new();
    let mut state = env.reset(rng);
    let mut steps = 0u32;
    let mut episode_return = 0.0;

    while transitions.len() < k {
        let probs = neural::policy_forward(params, &state.observation())?;
        let action = neural::sample_action(probs, rng);
        let outcome = env.step(&state, action)?;
        steps += 1;
        episode_return += outcome.reward;
        let terminal = outcome.terminal || env.is_terminal(&outcome.next, steps, step_cap);
        transitions.push(Transition {
            state,
            action,
            reward: outcome.reward,
            next_state: outcome.next,
            terminal,
        });
        if terminal {
            episode_returns.push(episode_return);
            episode_return = 0.0;
            steps = 0;
            if transitions.len() < k {
                state = env.reset(rng);
            }
        } else {
            state = outcome.next;
        }
    }

    let reported_return = episode_returns.first().copied().unwrap_or(episode_return);
    Ok(EpochBatch {
        transitions,
        episode_returns,
        reported_return,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Advantages {
    pub advantages: Vec<f64>,
    pub targets: Vec<f64>,
}

/// `target = r + gamma * V(s')` (or `r` at a terminal `s'`), `A = target - V(s)`.
pub fn compute_advantages<S: Observable>(
    batch: &EpochBatch<S>,
    params: &ParameterVector,
    gamma: f64,
) -> Result<Advantages, A2cError> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(A2cError::InvalidGamma(gamma));
    }
    advantages_unchecked(batch, params, gamma)
}

fn advantages_unchecked<S: Observable>(
    batch: &EpochBatch<S>,
    params: &ParameterVector,
    gamma: f64,
) -> Result<Advantages, A2cError> {
    let mut advantages = Vec::with_capacity(batch.len());
    let mut targets = Vec::with_capacity(batch.len());
    for t in &batch.transitions {
        let target = if t.terminal {
            t.reward
        } else {
            t.reward + gamma * neural::value_forward(params, &t.next_state.observation())?
        };
        let v = neural::value_forward(params, &t.state.observation())?;
        targets.push(target);
        advantages.push(target - v);
    }
    Ok(Advantages {
        advantages,
        targets,
    })
}

/// Pairs each transition with its advantage and value target.
pub fn annotate_batch<S: Observable>(batch: &EpochBatch<S>, adv: &Advantages) -> Vec<Sample> {
    batch
        .transitions
        .iter()
        .zip(adv.advantages.iter().zip(&adv.targets))
        .map(|(t, (&advantage, &value_target))| Sample {
            obs: t.state.observation(),
            action: t.action,
            advantage,
            value_target,
        })
        .collect()
}

/// Average loss over the batch and its gradient (policy block then value block).
pub fn epoch_gradients<S: Observable>(
    batch: &EpochBatch<S>,
    params: &ParameterVector,
    gamma: f64,
    coefficients: LossCoefficients,
) -> Result<LossGradient, A2cError> {
    let adv = compute_advantages(batch, params, gamma)?;
    let samples = annotate_batch(batch, &adv);
    Ok(neural::backward(params, &samples, coefficients)?)
}
