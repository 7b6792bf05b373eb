//! The three benchmark environments behind one stepping interface.
//!
//! Every environment is deterministic given the reset seed and the action
//! sequence. Stepping a finished (or never reset) episode is a usage error.

mod cartpole;
mod lander;
mod mountain_car;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use cartpole::CartPole;
pub use lander::PlanarLander;
pub use mountain_car::SparseMountainCar;

/// Fixed-length observation vector.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvObservation(pub Vec<f64>);

impl EnvObservation {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub observation: EnvObservation,
    pub reward: f64,
    /// Reached a terminal state: no bootstrapping past this transition.
    pub terminated: bool,
    /// Hit the time limit; the value of the next state still counts.
    pub truncated: bool,
}

impl StepResult {
    pub fn done(&self) -> bool {
        self.terminated || self.truncated
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvName {
    Cartpole,
    SparseMountaincar,
    PlanarLander,
}

impl EnvName {
    pub const ALL: [EnvName; 3] = [
        EnvName::Cartpole,
        EnvName::SparseMountaincar,
        EnvName::PlanarLander,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            EnvName::Cartpole => "cartpole",
            EnvName::SparseMountaincar => "sparse_mountaincar",
            EnvName::PlanarLander => "planar_lander",
        }
    }
}

impl fmt::Display for EnvName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EnvName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EnvName::ALL
            .into_iter()
            .find(|e| e.as_str() == s)
            .ok_or_else(|| Error::config(format!("unknown environment `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnvSpec {
    pub name: EnvName,
    pub action_count: usize,
    pub obs_dim: usize,
    pub max_episode_steps: u32,
}

pub fn env_spec(name: &str) -> Result<EnvSpec> {
    Ok(name.parse::<EnvName>()?.spec())
}

impl EnvName {
    pub fn spec(self) -> EnvSpec {
        let (action_count, obs_dim, max_episode_steps) = match self {
            EnvName::Cartpole => (2, 4, cartpole::MAX_STEPS),
            EnvName::SparseMountaincar => (3, 2, mountain_car::MAX_STEPS),
            EnvName::PlanarLander => (4, 8, lander::MAX_STEPS),
        };
        EnvSpec {
            name: self,
            action_count,
            obs_dim,
            max_episode_steps,
        }
    }

    pub fn make(self) -> Env {
        match self {
            EnvName::Cartpole => Env::Cartpole(CartPole::new()),
            EnvName::SparseMountaincar => Env::SparseMountaincar(SparseMountainCar::new()),
            EnvName::PlanarLander => Env::PlanarLander(PlanarLander::new()),
        }
    }
}

pub trait Environment {
    fn spec(&self) -> EnvSpec;

    fn reset(&mut self, seed: u64) -> EnvObservation;

    fn step(&mut self, action: usize) -> Result<StepResult>;
}

/// Any of the benchmark environments.
#[derive(Debug, Clone)]
pub enum Env {
    Cartpole(CartPole),
    SparseMountaincar(SparseMountainCar),
    PlanarLander(PlanarLander),
}

impl Environment for Env {
    fn spec(&self) -> EnvSpec {
        match self {
            Env::Cartpole(e) => e.spec(),
            Env::SparseMountaincar(e) => e.spec(),
            Env::PlanarLander(e) => e.spec(),
        }
    }

    fn reset(&mut self, seed: u64) -> EnvObservation {
        match self {
            Env::Cartpole(e) => e.reset(seed),
            Env::SparseMountaincar(e) => e.reset(seed),
            Env::PlanarLander(e) => e.reset(seed),
        }
    }

    fn step(&mut self, action: usize) -> Result<StepResult> {
        match self {
            Env::Cartpole(e) => e.step(action),
            Env::SparseMountaincar(e) => e.step(action),
            Env::PlanarLander(e) => e.step(action),
        }
    }
}

/// Shared episode bookkeeping.
#[derive(Debug, Clone, Default)]
pub(crate) struct EpisodeClock {
    steps: u32,
    active: bool,
}

impl EpisodeClock {
    pub fn start(&mut self) {
        self.steps = 0;
        self.active = true;
    }

    pub fn check(&self, name: EnvName, action: usize, action_count: usize) -> Result<()> {
        if !self.active {
            return Err(Error::usage(format!(
                "{name}: step called on a finished or unstarted episode"
            )));
        }
        if action >= action_count {
            return Err(Error::usage(format!(
                "{name}: action {action} out of range (0..{action_count})"
            )));
        }
        Ok(())
    }

    /// Advances the clock; returns whether the time limit was reached.
    pub fn tick(&mut self, limit: u32) -> bool {
        self.steps += 1;
        self.steps >= limit
    }

    pub fn finish_if(&mut self, done: bool) {
        if done {
            self.active = false;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_table() {
        let c = env_spec("cartpole").unwrap();
        assert_eq!((c.action_count, c.obs_dim, c.max_episode_steps), (2, 4, 500));
        let m = env_spec("sparse_mountaincar").unwrap();
        assert_eq!((m.action_count, m.obs_dim, m.max_episode_steps), (3, 2, 200));
        let l = env_spec("planar_lander").unwrap();
        assert_eq!((l.action_count, l.obs_dim, l.max_episode_steps), (4, 8, 1000));
    }

    #[test]
    fn unknown_env_is_config_error() {
        assert!(matches!(env_spec("pong"), Err(Error::Config(_))));
    }

    #[test]
    fn determinism_across_all_envs() {
        for name in EnvName::ALL {
            let run = || {
                let mut env = name.make();
                let mut trace = vec![env.reset(42).0];
                let n = name.spec().action_count;
                for t in 0..300 {
                    let r = env.step((t * 7 + t / 3) % n).unwrap();
                    trace.push(r.observation.0.clone());
                    trace.push(vec![r.reward]);
                    if r.done() {
                        trace.push(env.reset(43 + t as u64).0);
                    }
                }
                trace
                    .into_iter()
                    .flatten()
                    .map(f64::to_bits)
                    .collect::<Vec<_>>()
            };
            assert_eq!(run(), run(), "{name}");
        }
    }

    #[test]
    fn stepping_before_reset_or_after_end_is_usage_error() {
        for name in EnvName::ALL {
            let mut env = name.make();
            assert!(matches!(env.step(0), Err(Error::Usage(_))));
            env.reset(1);
            let n = name.spec().action_count;
            assert!(matches!(env.step(n), Err(Error::Usage(_))));
            loop {
                if env.step(0).unwrap().done() {
                    break;
                }
            }
            assert!(matches!(env.step(0), Err(Error::Usage(_))));
        }
    }
}
