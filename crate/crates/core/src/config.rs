//! Run configuration: the JSON file schema, its resolution into a
//! [`RunConfig`], and the small derivation formulas behind it.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::envs::EnvName;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    See,
    EpsGreedy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    #[default]
    None,
    NoConditioning,
    NoMaxUpdate,
    NoMixing,
}

impl Ablation {
    pub const ALL: [Ablation; 4] = [
        Ablation::None,
        Ablation::NoConditioning,
        Ablation::NoMaxUpdate,
        Ablation::NoMixing,
    ];

    /// Label used for curve files; the full method is `see`.
    pub fn label(self) -> &'static str {
        match self {
            Ablation::None => "see",
            Ablation::NoConditioning => "no_conditioning",
            Ablation::NoMaxUpdate => "no_max_update",
            Ablation::NoMixing => "no_mixing",
        }
    }
}

/// On-disk configuration. Target rates may be given per update or per
/// environment step; the exploration transition batch may be given directly
/// or derived from `batch_size / param_batch_size`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub env: EnvName,
    pub algorithm: Algorithm,
    #[serde(default)]
    pub ablation: Ablation,
    pub total_steps: u64,
    pub warm_up_steps: u64,
    pub update_frequency: u64,
    pub hidden_dims: Vec<usize>,
    pub gamma: f64,
    pub batch_size: usize,
    pub gradient_clip: f64,
    pub transition_buffer_size: usize,
    pub exploit_lr: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exploit_tau_per_update: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exploit_tau_per_timestep: Option<f64>,

    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explore_lr: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explore_tau_per_update: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explore_tau_per_timestep: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explore_discount: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mixture: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probe_count: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub param_batch_size: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub param_buffer_size: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explore_transition_batch_size: Option<usize>,

    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon_start: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon_end: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon_decay_steps: Option<u64>,

    #[serde(default = "default_eval_interval")]
    pub eval_interval: u64,
    #[serde(default = "default_eval_episodes")]
    pub eval_episodes: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_eval_interval() -> u64 {
    2000
}

fn default_eval_episodes() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExploreConfig {
    pub lr: f64,
    /// Target rate applied once per update block.
    pub tau: f64,
    pub discount: f64,
    /// Weight of the exploration values in the behavior policy.
    pub mixture: f64,
    pub probe_count: usize,
    pub param_batch_size: usize,
    pub param_buffer_size: usize,
    pub transition_batch_size: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub decay_steps: u64,
}

impl EpsilonSchedule {
    /// Linear decay from `start` to `end` over `decay_steps`, then flat.
    pub fn value(&self, step: u64) -> f64 {
        if step >= self.decay_steps {
            return self.end;
        }
        let frac = step as f64 / self.decay_steps as f64;
        self.start + (self.end - self.start) * frac
    }
}

/// Fully resolved run parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub env: EnvName,
    pub algorithm: Algorithm,
    pub ablation: Ablation,
    pub total_steps: u64,
    pub warm_up_steps: u64,
    pub update_frequency: u64,
    pub hidden_dims: Vec<usize>,
    pub gamma: f64,
    pub batch_size: usize,
    pub gradient_clip: f64,
    pub transition_buffer_size: usize,
    pub exploit_lr: f64,
    /// Target rate applied once per update block.
    pub exploit_tau: f64,
    pub explore: Option<ExploreConfig>,
    pub epsilon: Option<EpsilonSchedule>,
    pub eval_interval: u64,
    pub eval_episodes: usize,
    pub seed: u64,
}

/// Per-update target rate equivalent to applying `tau_per_timestep` once per
/// environment step for `update_frequency` steps.
pub fn tau_from_per_timestep(tau_per_timestep: f64, update_frequency: u64) -> Result<f64> {
    if !(0.0..=1.0).contains(&tau_per_timestep) {
        return Err(Error::config(format!(
            "per-timestep tau must lie in [0, 1], got {tau_per_timestep}"
        )));
    }
    if update_frequency == 0 {
        return Err(Error::config("update frequency must be positive"));
    }
    Ok(-(update_frequency as f64 * (-tau_per_timestep).ln_1p()).exp_m1())
}

/// Inverse of [`tau_from_per_timestep`].
pub fn tau_per_timestep_from(tau: f64, update_frequency: u64) -> Result<f64> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::config(format!("tau must lie in [0, 1], got {tau}")));
    }
    if update_frequency == 0 {
        return Err(Error::config("update frequency must be positive"));
    }
    Ok(1.0 - (1.0 - tau).powf(1.0 / update_frequency as f64))
}

/// Transitions per exploration update when `total_batch` pairs are split
/// across `param_batch` snapshots.
pub fn exploration_batch_split(total_batch: usize, param_batch: usize) -> Result<usize> {
    if total_batch == 0 || param_batch == 0 {
        return Err(Error::config("batch sizes must be positive"));
    }
    if !total_batch.is_multiple_of(param_batch) {
        return Err(Error::config(format!(
            "batch size {total_batch} is not a multiple of the parameter batch size {param_batch}"
        )));
    }
    Ok(total_batch / param_batch)
}

/// Maps a mean return onto a 0..100 scale per environment.
pub fn normalized_score(env: &str, mean_return: f64) -> Result<f64> {
    let env: EnvName = env.parse()?;
    Ok(score_weight(env) * mean_return)
}

pub fn score_weight(env: EnvName) -> f64 {
    match env {
        EnvName::SparseMountaincar => 100.0,
        EnvName::Cartpole => 0.2,
        EnvName::PlanarLander => 0.5,
    }
}

fn resolve_tau(name: &str, per_update: Option<f64>, per_timestep: Option<f64>, uf: u64) -> Result<f64> {
    match (per_update, per_timestep) {
        (Some(t), None) => {
            if !(0.0..=1.0).contains(&t) {
                return Err(Error::config(format!("{name}_tau_per_update must lie in [0, 1], got {t}")));
            }
            Ok(t)
        }
        (None, Some(pt)) => {
            let t = tau_from_per_timestep(pt, uf)?;
            log::info!("{name} tau per update derived from per-timestep {pt} and update frequency {uf}: {t}");
            Ok(t)
        }
        (Some(_), Some(_)) => Err(Error::config(format!(
            "give either {name}_tau_per_update or {name}_tau_per_timestep, not both"
        ))),
        (None, None) => Err(Error::config(format!(
            "missing {name}_tau_per_update or {name}_tau_per_timestep"
        ))),
    }
}

fn require<T>(value: Option<T>, key: &str, algorithm: &str) -> Result<T> {
    value.ok_or_else(|| Error::config(format!("`{key}` is required for {algorithm}")))
}

fn positive(value: f64, key: &str) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::config(format!("`{key}` must be positive, got {value}")))
    }
}

fn nonzero(value: u64, key: &str) -> Result<()> {
    if value == 0 {
        Err(Error::config(format!("`{key}` must be positive")))
    } else {
        Ok(())
    }
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::config(format!("invalid config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn resolve(&self) -> Result<RunConfig> {
        let uf = self.update_frequency;
        nonzero(uf, "update_frequency")?;
        nonzero(self.total_steps, "total_steps")?;
        nonzero(self.batch_size as u64, "batch_size")?;
        nonzero(self.transition_buffer_size as u64, "transition_buffer_size")?;
        nonzero(self.eval_interval, "eval_interval")?;
        nonzero(self.eval_episodes as u64, "eval_episodes")?;
        if self.hidden_dims.contains(&0) {
            return Err(Error::config("hidden layer sizes must be positive"));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::config(format!("gamma must lie in [0, 1), got {}", self.gamma)));
        }
        positive(self.gradient_clip, "gradient_clip")?;
        positive(self.exploit_lr, "exploit_lr")?;
        let exploit_tau = resolve_tau(
            "exploit",
            self.exploit_tau_per_update,
            self.exploit_tau_per_timestep,
            uf,
        )?;

        let see_keys = [
            ("explore_lr", self.explore_lr.is_some()),
            ("explore_tau_per_update", self.explore_tau_per_update.is_some()),
            ("explore_tau_per_timestep", self.explore_tau_per_timestep.is_some()),
            ("explore_discount", self.explore_discount.is_some()),
            ("mixture", self.mixture.is_some()),
            ("probe_count", self.probe_count.is_some()),
            ("param_batch_size", self.param_batch_size.is_some()),
            ("param_buffer_size", self.param_buffer_size.is_some()),
            ("explore_transition_batch_size", self.explore_transition_batch_size.is_some()),
        ];
        let eps_keys = [
            ("epsilon_start", self.epsilon_start.is_some()),
            ("epsilon_end", self.epsilon_end.is_some()),
            ("epsilon_decay_steps", self.epsilon_decay_steps.is_some()),
        ];
        let stray = |keys: &[(&str, bool)], algorithm: &str| -> Result<()> {
            match keys.iter().find(|(_, set)| *set) {
                Some((key, _)) => Err(Error::config(format!("`{key}` does not apply to {algorithm}"))),
                None => Ok(()),
            }
        };

        let (explore, epsilon) = match self.algorithm {
            Algorithm::See => {
                stray(&eps_keys, "see")?;
                let lr = require(self.explore_lr, "explore_lr", "see")?;
                positive(lr, "explore_lr")?;
                let tau = resolve_tau(
                    "explore",
                    self.explore_tau_per_update,
                    self.explore_tau_per_timestep,
                    uf,
                )?;
                let discount = require(self.explore_discount, "explore_discount", "see")?;
                if !(0.0..=1.0).contains(&discount) {
                    return Err(Error::config(format!("explore_discount must lie in [0, 1], got {discount}")));
                }
                let mixture = require(self.mixture, "mixture", "see")?;
                if !(0.0..=1.0).contains(&mixture) {
                    return Err(Error::config(format!("mixture must lie in [0, 1], got {mixture}")));
                }
                let probe_count = require(self.probe_count, "probe_count", "see")?;
                let param_batch_size = require(self.param_batch_size, "param_batch_size", "see")?;
                let param_buffer_size = require(self.param_buffer_size, "param_buffer_size", "see")?;
                nonzero(probe_count as u64, "probe_count")?;
                nonzero(param_batch_size as u64, "param_batch_size")?;
                nonzero(param_buffer_size as u64, "param_buffer_size")?;
                let transition_batch_size = match self.explore_transition_batch_size {
                    Some(b) => {
                        nonzero(b as u64, "explore_transition_batch_size")?;
                        b
                    }
                    None => {
                        let b = exploration_batch_split(self.batch_size, param_batch_size)?;
                        log::info!(
                            "exploration transition batch derived from {} / {param_batch_size}: {b}",
                            self.batch_size
                        );
                        b
                    }
                };
                let explore = ExploreConfig {
                    lr,
                    tau,
                    discount,
                    mixture,
                    probe_count,
                    param_batch_size,
                    param_buffer_size,
                    transition_batch_size,
                };
                (Some(explore), None)
            }
            Algorithm::EpsGreedy => {
                stray(&see_keys, "eps_greedy")?;
                if self.ablation != Ablation::None {
                    return Err(Error::config("ablations apply to see only"));
                }
                let start = self.epsilon_start.unwrap_or(1.0);
                let end = require(self.epsilon_end, "epsilon_end", "eps_greedy")?;
                let decay_steps = require(self.epsilon_decay_steps, "epsilon_decay_steps", "eps_greedy")?;
                for (key, v) in [("epsilon_start", start), ("epsilon_end", end)] {
                    if !(0.0..=1.0).contains(&v) {
                        return Err(Error::config(format!("{key} must lie in [0, 1], got {v}")));
                    }
                }
                nonzero(decay_steps, "epsilon_decay_steps")?;
                (None, Some(EpsilonSchedule { start, end, decay_steps }))
            }
        };

        Ok(RunConfig {
            env: self.env,
            algorithm: self.algorithm,
            ablation: self.ablation,
            total_steps: self.total_steps,
            warm_up_steps: self.warm_up_steps,
            update_frequency: uf,
            hidden_dims: self.hidden_dims.clone(),
            gamma: self.gamma,
            batch_size: self.batch_size,
            gradient_clip: self.gradient_clip,
            transition_buffer_size: self.transition_buffer_size,
            exploit_lr: self.exploit_lr,
            exploit_tau,
            explore,
            epsilon,
            eval_interval: self.eval_interval,
            eval_episodes: self.eval_episodes,
            seed: self.seed,
        })
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        ConfigFile::load(path)?.resolve()
    }

    /// The resolved values in file form, with every derived quantity spelled
    /// out. Resolving it again gives back `self`.
    pub fn to_file(&self) -> ConfigFile {
        let e = self.explore.as_ref();
        ConfigFile {
            env: self.env,
            algorithm: self.algorithm,
            ablation: self.ablation,
            total_steps: self.total_steps,
            warm_up_steps: self.warm_up_steps,
            update_frequency: self.update_frequency,
            hidden_dims: self.hidden_dims.clone(),
            gamma: self.gamma,
            batch_size: self.batch_size,
            gradient_clip: self.gradient_clip,
            transition_buffer_size: self.transition_buffer_size,
            exploit_lr: self.exploit_lr,
            exploit_tau_per_update: Some(self.exploit_tau),
            exploit_tau_per_timestep: None,
            explore_lr: e.map(|e| e.lr),
            explore_tau_per_update: e.map(|e| e.tau),
            explore_tau_per_timestep: None,
            explore_discount: e.map(|e| e.discount),
            mixture: e.map(|e| e.mixture),
            probe_count: e.map(|e| e.probe_count),
            param_batch_size: e.map(|e| e.param_batch_size),
            param_buffer_size: e.map(|e| e.param_buffer_size),
            explore_transition_batch_size: e.map(|e| e.transition_batch_size),
            epsilon_start: self.epsilon.map(|s| s.start),
            epsilon_end: self.epsilon.map(|s| s.end),
            epsilon_decay_steps: self.epsilon.map(|s| s.decay_steps),
            eval_interval: self.eval_interval,
            eval_episodes: self.eval_episodes,
            seed: self.seed,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("config serializes")
    }

    pub fn explore(&self) -> Result<&ExploreConfig> {
        self.explore
            .as_ref()
            .ok_or_else(|| Error::config("run has no exploration settings"))
    }
}
