//! CartPole-v0 dynamics behind a small environment interface.
//!
//! Every agent owns its own environment instance; nothing here is shared
//! between workers.

use std::f64::consts::PI;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Width of the observation vector fed to the networks.
pub const OBS_DIM: usize = 4;

/// Flat observation handed to the policy and value networks.
pub type Observation = [f64; OBS_DIM];

pub const GRAVITY: f64 = 9.8;
pub const CART_MASS: f64 = 1.0;
pub const POLE_MASS: f64 = 0.1;
/// Half of the pole length.
pub const POLE_HALF_LENGTH: f64 = 0.5;
pub const FORCE_MAG: f64 = 10.0;
pub const TAU: f64 = 0.02;

pub const X_THRESHOLD: f64 = 2.4;
/// 12 degrees.
pub const THETA_THRESHOLD_RADIANS: f64 = 12.0 * 2.0 * PI / 360.0;

/// Half-width of the uniform range used for initial states.
pub const INIT_RANGE: f64 = 0.05;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("cannot step from terminal state {0:?}")]
    SteppedTerminal(EnvState),
}

/// Binary CartPole action.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    Left = 0,
    Right = 1,
}

impl Action {
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        match index {
            0 => Some(Action::Left),
            1 => Some(Action::Right),
            _ => None,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Action::Left => Action::Right,
            Action::Right => Action::Left,
        }
    }
}

/// Anything that can be turned into a network input.
pub trait Observable {
    fn observation(&self) -> Observation;
}

/// Cart position/velocity and pole angle/angular velocity.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EnvState {
    pub x: f64,
    pub x_dot: f64,
    pub theta: f64,
    pub theta_dot: f64,
}

impl EnvState {
    pub const fn new(x: f64, x_dot: f64, theta: f64, theta_dot: f64) -> Self {
        Self {
            x,
            x_dot,
            theta,
            theta_dot,
        }
    }

    pub fn from_array(v: [f64; 4]) -> Self {
        Self::new(v[0], v[1], v[2], v[3])
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.x, self.x_dot, self.theta, self.theta_dot]
    }

    /// True when the cart and pole are inside the failure bounds.
    pub fn within_bounds(&self) -> bool {
        self.x.abs() <= X_THRESHOLD && self.theta.abs() <= THETA_THRESHOLD_RADIANS
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    /// Reflection through the track centre.
    pub fn mirrored(&self) -> Self {
        Self::new(-self.x, -self.x_dot, -self.theta, -self.theta_dot)
    }
}

impl Observable for EnvState {
    fn observation(&self) -> Observation {
        self.to_array()
    }
}

/// One (s, a, r, s', terminal) experience.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition<S = EnvState> {
    pub state: S,
    pub action: Action,
    pub reward: f64,
    pub next_state: S,
    pub terminal: bool,
}

/// Result of a single dynamics step. `terminal` only reflects the state
/// bounds; the step cap is applied by [`Environment::is_terminal`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome<S = EnvState> {
    pub next: S,
    pub reward: f64,
    pub terminal: bool,
}

/// Minimal episodic environment interface.
pub trait Environment {
    type State: Observable + Copy + fmt::Debug;

    fn reset<R: Rng + ?Sized>(&self, rng: &mut R) -> Self::State;

    fn step(
        &self,
        state: &Self::State,
        action: Action,
    ) -> Result<StepOutcome<Self::State>, EnvError>;

    fn is_terminal(&self, state: &Self::State, steps_elapsed: u32, step_cap: u32) -> bool;
}

/// Classic cart-pole balancing task with the v0 constants.
#[derive(Debug, Clone, Copy, Default)]
pub struct CartPole;

impl CartPole {
    pub fn new() -> Self {
        CartPole
    }

    /// Maps four draws in `[-1, 1]` onto the initial-state box.
    pub fn state_from_draws(draws: [f64; 4]) -> EnvState {
        EnvState::from_array(draws.map(|d| INIT_RANGE * d))
    }

    /// Explicit Euler update without any bounds check.
    pub fn integrate(state: &EnvState, action: Action) -> EnvState {
        let total_mass = CART_MASS + POLE_MASS;
        let polemass_length = POLE_MASS * POLE_HALF_LENGTH;
        let force = match action {
            Action::Right => FORCE_MAG,
            Action::Left => -FORCE_MAG,
        };
        let (sin_theta, cos_theta) = state.theta.sin_cos();

        let temp =
            (force + polemass_length * state.theta_dot * state.theta_dot * sin_theta) / total_mass;
        let theta_acc = (GRAVITY * sin_theta - cos_theta * temp)
            / (POLE_HALF_LENGTH * (4.0 / 3.0 - POLE_MASS * cos_theta * cos_theta / total_mass));
        let x_acc = temp - polemass_length * theta_acc * cos_theta / total_mass;

        EnvState {
            x: state.x + TAU * state.x_dot,
            x_dot: state.x_dot + TAU * x_acc,
            theta: state.theta + TAU * state.theta_dot,
            theta_dot: state.theta_dot + TAU * theta_acc,
        }
    }
}

impl Environment for CartPole {
    type State = EnvState;

    fn reset<R: Rng + ?Sized>(&self, rng: &mut R) -> EnvState {
        let mut draws = [0.0; 4];
        for d in draws.iter_mut() {
            *d = rng.gen_range(-1.0..=1.0);
        }
        Self::state_from_draws(draws)
    }

    fn step(&self, state: &EnvState, action: Action) -> Result<StepOutcome, EnvError> {
        if !state.within_bounds() {
            return Err(EnvError::SteppedTerminal(*state));
        }
        let next = Self::integrate(state, action);
        Ok(StepOutcome {
            next,
            reward: 1.0,
            terminal: !next.within_bounds(),
        })
    }

    fn is_terminal(&self, state: &EnvState, steps_elapsed: u32, step_cap: u32) -> bool {
        !state.within_bounds() || steps_elapsed >= step_cap
    }
}
