//! Cart-pole balancing with the classic Euler-integrated dynamics.
//!
//! Observation: `[x, x_dot, angle, angle_vel]`. Reward is +1 on every step.
//! The episode terminates when `|angle| > 12 deg` or `|x| > 2.4` and is
//! truncated after 500 steps.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{EnvName, EnvObservation, EnvSpec, Environment, EpisodeClock, StepResult};
use crate::error::Result;

pub(crate) const MAX_STEPS: u32 = 500;

const GRAVITY: f64 = 9.8;
const MASS_CART: f64 = 1.0;
const MASS_POLE: f64 = 0.1;
const TOTAL_MASS: f64 = MASS_CART + MASS_POLE;
const HALF_LENGTH: f64 = 0.5;
const POLE_MASS_LENGTH: f64 = MASS_POLE * HALF_LENGTH;
const FORCE_MAG: f64 = 10.0;
const DT: f64 = 0.02;
pub const ANGLE_THRESHOLD: f64 = 12.0 * 2.0 * std::f64::consts::PI / 360.0;
pub const X_THRESHOLD: f64 = 2.4;

#[derive(Debug, Clone, Default)]
pub struct CartPole {
    state: [f64; 4],
    clock: EpisodeClock,
}

impl CartPole {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn state(&self) -> [f64; 4] {
        self.state
    }

    /// Starts an episode from an explicit state.
    pub fn reset_to(&mut self, state: [f64; 4]) -> EnvObservation {
        self.state = state;
        self.clock.start();
        EnvObservation(state.to_vec())
    }
}

/// One Euler step of the cart-pole equations of motion.
pub(crate) fn dynamics(state: [f64; 4], action: usize) -> [f64; 4] {
    let [x, x_dot, angle, angle_vel] = state;
    let force = if action == 1 { FORCE_MAG } else { -FORCE_MAG };
    let (sin, cos) = angle.sin_cos();
    let temp = (force + POLE_MASS_LENGTH * angle_vel * angle_vel * sin) / TOTAL_MASS;
    let angle_acc = (GRAVITY * sin - cos * temp)
        / (HALF_LENGTH * (4.0 / 3.0 - MASS_POLE * cos * cos / TOTAL_MASS));
    let x_acc = temp - POLE_MASS_LENGTH * angle_acc * cos / TOTAL_MASS;
    [
        x + DT * x_dot,
        x_dot + DT * x_acc,
        angle + DT * angle_vel,
        angle_vel + DT * angle_acc,
    ]
}

impl Environment for CartPole {
    fn spec(&self) -> EnvSpec {
        EnvName::Cartpole.spec()
    }

    fn reset(&mut self, seed: u64) -> EnvObservation {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let state = [(); 4].map(|_| rng.random_range(-0.05..=0.05));
        self.reset_to(state)
    }

    fn step(&mut self, action: usize) -> Result<StepResult> {
        self.clock.check(EnvName::Cartpole, action, 2)?;
        self.state = dynamics(self.state, action);
        let [x, _, angle, _] = self.state;
        let terminated = x.abs() > X_THRESHOLD || angle.abs() > ANGLE_THRESHOLD;
        let truncated = self.clock.tick(MAX_STEPS) && !terminated;
        self.clock.finish_if(terminated || truncated);
        Ok(StepResult {
            observation: EnvObservation(self.state.to_vec()),
            reward: 1.0,
            terminated,
            truncated,
        })
    }
}
