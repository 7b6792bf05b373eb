//! A planar lunar lander on flat ground.
//!
//! This is a self-contained rigid-body model rather than a physics-engine
//! simulation. The body is a point mass with an orientation; the two feet sit
//! at `(-LEG_SPREAD, 0)` and `(+LEG_SPREAD, 0)` in the body frame, so `y` is
//! the height of the feet line above the ground when upright. Units are
//! viewport units and seconds.
//!
//! Per step (`dt = 0.02`):
//! - gravity changes `vy` by `-1.62 * dt`;
//! - the main engine (action 2) adds `0.3` to the velocity along the body up axis;
//! - the side engines (actions 1 and 3) add `0.03` along the body lateral axis
//!   and kick the angular velocity by `+0.05` / `-0.05` rad/s;
//! - positions integrate with the updated velocities.
//!
//! Ground contact happens when a foot reaches `y <= 0`. Touching the ground
//! tilted by more than `MAX_CONTACT_TILT` or moving down faster than
//! `CRASH_SPEED` puts the hull on the ground: a crash. Otherwise the feet hold
//! the body up, vertical velocity is cancelled, friction slows the slide and
//! the body settles level.
//!
//! Observation: `[x, y, vx, vy, angle, angular_velocity, left_contact, right_contact]`.
//!
//! Reward per step is `potential(s') - potential(s) - fuel` where
//! `potential = -100 |pos| - 100 |vel| - 100 |angle| + 10 * legs_in_contact`
//! and fuel costs 0.3 per main-engine step and 0.03 per side-engine step.
//! A landing (both feet down, speed below 0.05) adds +100 and terminates; a
//! crash or leaving `|x| <= 1` adds -100 and terminates. Success depends on the
//! observation alone. Episodes are truncated after 1000 steps.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{EnvName, EnvObservation, EnvSpec, Environment, EpisodeClock, StepResult};
use crate::error::Result;

pub(crate) const MAX_STEPS: u32 = 1000;

pub const DT: f64 = 0.02;
pub const GRAVITY: f64 = 1.62;
pub const MAIN_ENGINE_DV: f64 = 0.3;
pub const SIDE_ENGINE_DV: f64 = 0.03;
pub const SIDE_ENGINE_KICK: f64 = 0.05;
pub const MAIN_FUEL: f64 = 0.3;
pub const SIDE_FUEL: f64 = 0.03;
pub const REST_SPEED: f64 = 0.05;
pub const LEG_SPREAD: f64 = 0.2;
pub const CONTACT_EPS: f64 = 0.005;
pub const CRASH_SPEED: f64 = 0.5;
pub const MAX_CONTACT_TILT: f64 = 0.4;
pub const GROUND_FRICTION: f64 = 0.8;
pub const SETTLE_RATE: f64 = 0.7;
pub const X_LIMIT: f64 = 1.0;
pub const Y_CEILING: f64 = 2.0;
pub const MAX_SPEED: f64 = 3.0;
pub const MAX_SPIN: f64 = 5.0;
pub const LANDING_BONUS: f64 = 100.0;
pub const CRASH_PENALTY: f64 = -100.0;

pub const NOOP: usize = 0;
pub const LEFT: usize = 1;
pub const MAIN: usize = 2;
pub const RIGHT: usize = 3;

/// Full lander state; identical to the observation.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LanderState {
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
    pub angle: f64,
    pub spin: f64,
    pub left_contact: bool,
    pub right_contact: bool,
}

impl LanderState {
    pub fn observation(&self) -> EnvObservation {
        EnvObservation(vec![
            self.x,
            self.y,
            self.vx,
            self.vy,
            self.angle,
            self.spin,
            f64::from(u8::from(self.left_contact)),
            f64::from(u8::from(self.right_contact)),
        ])
    }

    pub fn potential(&self) -> f64 {
        -100.0 * self.x.hypot(self.y) - 100.0 * self.vx.hypot(self.vy) - 100.0 * self.angle.abs()
            + 10.0 * (f64::from(u8::from(self.left_contact)) + f64::from(u8::from(self.right_contact)))
    }

    fn foot_heights(&self) -> (f64, f64) {
        let lift = LEG_SPREAD * self.angle.sin();
        (self.y - lift, self.y + lift)
    }
}

/// Landing test on an observation vector.
pub fn is_landed(obs: &[f64]) -> bool {
    obs[6] > 0.5 && obs[7] > 0.5 && obs[2].hypot(obs[3]) < REST_SPEED
}

#[derive(Debug, Clone, Default)]
pub struct PlanarLander {
    state: LanderState,
    clock: EpisodeClock,
}

impl PlanarLander {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn state(&self) -> LanderState {
        self.state
    }

    pub fn reset_to(&mut self, state: LanderState) -> EnvObservation {
        self.state = state;
        self.clock.start();
        state.observation()
    }
}

fn wrap_angle(a: f64) -> f64 {
    let mut a = (a + PI) % (2.0 * PI);
    if a < 0.0 {
        a += 2.0 * PI;
    }
    a - PI
}

/// Advances the state by one step; returns the new state, fuel spent and
/// whether the hull hit the ground.
pub(crate) fn dynamics(s: LanderState, action: usize) -> (LanderState, f64, bool) {
    let mut n = s;
    let (sin, cos) = s.angle.sin_cos();
    let fuel = match action {
        MAIN => {
            n.vx += -sin * MAIN_ENGINE_DV;
            n.vy += cos * MAIN_ENGINE_DV;
            MAIN_FUEL
        }
        LEFT | RIGHT => {
            let dir = if action == LEFT { 1.0 } else { -1.0 };
            n.vx += dir * cos * SIDE_ENGINE_DV;
            n.vy += dir * sin * SIDE_ENGINE_DV;
            n.spin += dir * SIDE_ENGINE_KICK;
            SIDE_FUEL
        }
        _ => {
            debug_assert_eq!(action, NOOP);
            0.0
        }
    };
    n.vy -= GRAVITY * DT;
    n.vx = n.vx.clamp(-MAX_SPEED, MAX_SPEED);
    n.vy = n.vy.clamp(-MAX_SPEED, MAX_SPEED);
    n.spin = n.spin.clamp(-MAX_SPIN, MAX_SPIN);
    n.x += n.vx * DT;
    n.y += n.vy * DT;
    n.angle = wrap_angle(n.angle + n.spin * DT);
    if n.y > Y_CEILING {
        n.y = Y_CEILING;
        n.vy = n.vy.min(0.0);
    }

    let (left, right) = n.foot_heights();
    let lowest = left.min(right);
    let mut hull_contact = false;
    if lowest <= 0.0 {
        if n.angle.abs() > MAX_CONTACT_TILT || -n.vy > CRASH_SPEED {
            hull_contact = true;
        } else {
            n.y -= lowest;
            n.vy = n.vy.max(0.0);
            n.vx *= GROUND_FRICTION;
            n.angle *= SETTLE_RATE;
            n.spin = 0.0;
        }
    }
    let (left, right) = n.foot_heights();
    n.left_contact = left <= CONTACT_EPS;
    n.right_contact = right <= CONTACT_EPS;
    (n, fuel, hull_contact)
}

impl Environment for PlanarLander {
    fn spec(&self) -> EnvSpec {
        EnvName::PlanarLander.spec()
    }

    fn reset(&mut self, seed: u64) -> EnvObservation {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let state = LanderState {
            x: rng.random_range(-0.3..=0.3),
            y: 1.4,
            vx: rng.random_range(-0.3..=0.3),
            vy: rng.random_range(-0.3..=0.0),
            angle: rng.random_range(-0.1..=0.1),
            spin: rng.random_range(-0.1..=0.1),
            left_contact: false,
            right_contact: false,
        };
        self.reset_to(state)
    }

    fn step(&mut self, action: usize) -> Result<StepResult> {
        self.clock.check(EnvName::PlanarLander, action, 4)?;
        let before = self.state;
        let (after, fuel, hull_contact) = dynamics(before, action);
        self.state = after;
        let observation = after.observation();
        let mut reward = after.potential() - before.potential() - fuel;
        let crashed = hull_contact || after.x.abs() > X_LIMIT;
        let landed = !crashed && is_landed(&observation.0);
        if crashed {
            reward += CRASH_PENALTY;
        } else if landed {
            reward += LANDING_BONUS;
        }
        let terminated = crashed || landed;
        let truncated = self.clock.tick(MAX_STEPS) && !terminated;
        self.clock.finish_if(terminated || truncated);
        Ok(StepResult {
            observation,
            reward,
            terminated,
            truncated,
        })
    }
}
