//! Stationary error-seeking exploration for deep Q-learning.
//!
//! An exploitation network is trained with dueling double DQN. A second
//! network learns to predict the exploitation network's absolute TD-error,
//! conditioned on the exploitation parameters, and the behavior policy acts
//! greedily on a blend of both.

pub mod cli;
pub mod config;
pub mod curves;
pub mod envs;
pub mod error;
pub mod exploit;
pub mod explore;
pub mod nn;
pub mod replay;
pub mod rng;
pub mod snapshot;
pub mod tabular;
pub mod trainer;

pub use error::{Error, Result};
