//! Mountain car with a sparse goal reward.
//!
//! Reward is 0 on every transition except the one that reaches
//! `position >= 0.5`, which pays +1 and terminates. Episodes are truncated
//! after 200 steps.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{EnvName, EnvObservation, EnvSpec, Environment, EpisodeClock, StepResult};
use crate::error::Result;

pub(crate) const MAX_STEPS: u32 = 200;

pub const MIN_POSITION: f64 = -1.2;
pub const MAX_POSITION: f64 = 0.6;
pub const MAX_SPEED: f64 = 0.07;
pub const GOAL_POSITION: f64 = 0.5;
const FORCE: f64 = 0.001;
const GRAVITY: f64 = 0.0025;

#[derive(Debug, Clone, Default)]
pub struct SparseMountainCar {
    position: f64,
    velocity: f64,
    clock: EpisodeClock,
}

impl SparseMountainCar {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn reset_to(&mut self, position: f64, velocity: f64) -> EnvObservation {
        self.position = position;
        self.velocity = velocity;
        self.clock.start();
        self.observation()
    }

    fn observation(&self) -> EnvObservation {
        EnvObservation(vec![self.position, self.velocity])
    }
}

impl Environment for SparseMountainCar {
    fn spec(&self) -> EnvSpec {
        EnvName::SparseMountaincar.spec()
    }

    fn reset(&mut self, seed: u64) -> EnvObservation {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.reset_to(rng.random_range(-0.6..=-0.4), 0.0)
    }

    fn step(&mut self, action: usize) -> Result<StepResult> {
        self.clock.check(EnvName::SparseMountaincar, action, 3)?;
        self.velocity += (action as f64 - 1.0) * FORCE - GRAVITY * (3.0 * self.position).cos();
        self.velocity = self.velocity.clamp(-MAX_SPEED, MAX_SPEED);
        self.position = (self.position + self.velocity).clamp(MIN_POSITION, MAX_POSITION);
        if self.position == MIN_POSITION && self.velocity < 0.0 {
            self.velocity = 0.0;
        }
        let terminated = self.position >= GOAL_POSITION;
        let truncated = self.clock.tick(MAX_STEPS) && !terminated;
        self.clock.finish_if(terminated || truncated);
        Ok(StepResult {
            observation: self.observation(),
            reward: if terminated { 1.0 } else { 0.0 },
            terminated,
            truncated,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reset_range() {
        let mut env = SparseMountainCar::new();
        for seed in 0..50 {
            let obs = env.reset(seed);
            assert!((-0.6..=-0.4).contains(&obs.0[0]));
            assert_eq!(obs.0[1], 0.0);
        }
    }

    #[test]
    fn push_right_from_valley_floor() {
        let mut env = SparseMountainCar::new();
        env.reset_to(-0.5, 0.0);
        let r = env.step(2).unwrap();
        let v = 0.001 - 0.0025 * (-1.5f64).cos();
        assert!((r.observation.0[1] - v).abs() < 1e-15);
        assert!((v - 0.000823).abs() < 1e-6);
        assert!((r.observation.0[0] - (-0.5 + v)).abs() < 1e-15);
        assert_eq!(r.reward, 0.0);
    }

    #[test]
    fn reaching_goal_pays_one_and_terminates() {
        let mut env = SparseMountainCar::new();
        env.reset_to(0.49, 0.05);
        let r = env.step(1).unwrap();
        assert!(r.terminated && !r.truncated);
        assert_eq!(r.reward, 1.0);
    }

    #[test]
    fn left_wall_stops_the_car() {
        let mut env = SparseMountainCar::new();
        env.reset_to(-1.19, -0.05);
        let r = env.step(0).unwrap();
        assert_eq!(r.observation.0, vec![MIN_POSITION, 0.0]);
    }

    #[test]
    fn truncates_at_200() {
        let mut env = SparseMountainCar::new();
        env.reset(0);
        for t in 1..=200 {
            let r = env.step(1).unwrap();
            assert_eq!(r.reward, 0.0);
            assert_eq!(r.truncated, t == 200);
            assert!(!r.terminated);
        }
    }

    #[test]
    fn energy_pumping_reaches_goal_with_reward_iff_terminal() {
        let mut env = SparseMountainCar::new();
        let mut obs = env.reset(5);
        loop {
            let a = if obs.0[1] >= 0.0 { 2 } else { 0 };
            let r = env.step(a).unwrap();
            assert_eq!(r.reward == 1.0, r.terminated);
            assert!(r.reward == 0.0 || r.reward == 1.0);
            let o = &r.observation.0;
            assert!((MIN_POSITION..=MAX_POSITION).contains(&o[0]));
            assert!(o[1].abs() <= MAX_SPEED);
            obs = r.observation.clone();
            if r.done() {
                assert!(r.terminated, "the bang-bang policy should reach the goal");
                break;
            }
        }
    }
}
