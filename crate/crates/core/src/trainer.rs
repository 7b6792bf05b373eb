//! Training loop for SEE and the epsilon-greedy baseline.
//!
//! After a warm-up of uniformly random actions the loop repeats one cycle:
//! `update_frequency` environment interactions, the same number of
//! exploitation updates, one push of the exploitation parameters into the
//! parameter buffer, the same number of exploration updates (SEE only) and a
//! soft update of both target networks. Every `eval_interval` steps the
//! greedy exploitation policy is evaluated on separate environments.

use std::fmt;
use std::ops::ControlFlow;

use rand::{Rng, RngCore};
use rand_chacha::ChaCha8Rng;

use crate::config::{score_weight, Ablation, Algorithm, RunConfig};
use crate::envs::{Env, EnvName, EnvObservation, Environment};
use crate::error::{Error, Result};
use crate::exploit::{greedy_action, obs_matrix, DuelingArch, ExploitationNet};
use crate::explore::{Backup, ExplorationArch, ExplorationNet};
use crate::nn::ParameterVector;
use crate::replay::{ParameterBuffer, Transition, TransitionBuffer};
use crate::rng::{mix_seed, stream_rng, CountingRng, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Metric {
    TrainReturn,
    TrainLength,
    EvalReturn,
    EvalScore,
    ExploitLoss,
    ExploreLoss,
}

impl Metric {
    pub const ALL: [Metric; 6] = [
        Metric::TrainReturn,
        Metric::TrainLength,
        Metric::EvalReturn,
        Metric::EvalScore,
        Metric::ExploitLoss,
        Metric::ExploreLoss,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::TrainReturn => "train_return",
            Metric::TrainLength => "train_length",
            Metric::EvalReturn => "eval_return",
            Metric::EvalScore => "eval_score",
            Metric::ExploitLoss => "exploit_loss",
            Metric::ExploreLoss => "explore_loss",
        }
    }

    pub fn parse(s: &str) -> Option<Metric> {
        Metric::ALL.into_iter().find(|m| m.as_str() == s)
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One scalar observation at an environment step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsRecord {
    pub step: u64,
    pub metric: Metric,
    pub value: f64,
}

/// Index of the best blended value `(1 - mixture) * q + mixture * error_pred`.
pub fn behavior_action(q: &[f32], error_pred: &[f32], mixture: f64) -> usize {
    let m = mixture as f32;
    let blended: Vec<f32> = q
        .iter()
        .zip(error_pred)
        .map(|(&q, &d)| (1.0 - m) * q + m * d)
        .collect();
    greedy_action(&blended)
}

/// Uniform action with probability `epsilon`, else the greedy one.
pub fn eps_greedy_action<R: Rng + ?Sized>(q: &[f32], epsilon: f64, rng: &mut R) -> usize {
    if rng.random::<f64>() < epsilon {
        rng.random_range(0..q.len())
    } else {
        greedy_action(q)
    }
}

/// What an ablation changes in the loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Variant {
    /// Keep a parameter buffer and condition on past snapshots.
    pub conditioning: bool,
    pub backup: Backup,
    /// Blend both values every step; otherwise alternate whole episodes.
    pub mixing: bool,
}

pub fn apply_ablation(ablation: Ablation) -> Variant {
    let full = Variant {
        conditioning: true,
        backup: Backup::Max,
        mixing: true,
    };
    match ablation {
        Ablation::None => full,
        Ablation::NoConditioning => Variant {
            conditioning: false,
            ..full
        },
        Ablation::NoMaxUpdate => Variant {
            backup: Backup::Sum,
            ..full
        },
        Ablation::NoMixing => Variant {
            mixing: false,
            ..full
        },
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub mean_return: f64,
    pub returns: Vec<f64>,
}

/// Seed of evaluation episode `episode` in evaluation round `round`.
pub fn eval_seed(run_seed: u64, round: u64, episode: u64) -> u64 {
    mix_seed(&[run_seed, round, episode])
}

/// Greedy rollouts of `params` on fresh environments, stepped in lockstep.
pub fn evaluate(
    arch: &DuelingArch,
    params: &ParameterVector<f32>,
    env: EnvName,
    seeds: &[u64],
) -> Result<Evaluation> {
    if seeds.is_empty() {
        return Err(Error::usage("evaluation needs at least one episode"));
    }
    let mut envs: Vec<Env> = seeds.iter().map(|_| env.make()).collect();
    let mut obs: Vec<EnvObservation> = envs
        .iter_mut()
        .zip(seeds)
        .map(|(e, &s)| e.reset(s))
        .collect();
    let mut returns = vec![0.0; seeds.len()];
    let mut live: Vec<usize> = (0..seeds.len()).collect();
    let a = arch.action_count;
    while !live.is_empty() {
        let x = obs_matrix::<f32>(live.iter().map(|&i| &obs[i]));
        let (q, _) = arch.q_batch(&params.0, &x, live.len())?;
        let mut still = Vec::with_capacity(live.len());
        for (k, &i) in live.iter().enumerate() {
            let step = envs[i].step(greedy_action(&q[k * a..(k + 1) * a]))?;
            returns[i] += step.reward;
            if !step.done() {
                still.push(i);
            }
            obs[i] = step.observation;
        }
        live = still;
    }
    let mean_return = returns.iter().sum::<f64>() / returns.len() as f64;
    Ok(Evaluation {
        mean_return,
        returns,
    })
}

/// Final state of a run.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub exploit: ExploitationNet<f32>,
    pub explore: Option<ExplorationNet<f32>>,
    pub steps: u64,
    pub stopped_early: bool,
    /// Draws taken from the action generator during warm-up.
    pub warm_up_action_draws: u64,
    /// Draws taken from the action generator in total.
    pub action_draws: u64,
    pub param_pushes: u64,
    pub exploit_updates: u64,
    pub explore_updates: u64,
}

struct Episode {
    obs: EnvObservation,
    ret: f64,
    len: u64,
    /// Episodes finished since warm-up ended.
    index: u64,
}

struct Run<'a, F> {
    cfg: &'a RunConfig,
    variant: Variant,
    env: Env,
    exploit: ExploitationNet<f32>,
    explore: Option<ExplorationNet<f32>>,
    transitions: TransitionBuffer,
    params: Option<ParameterBuffer<f32>>,
    actions: CountingRng<ChaCha8Rng>,
    episode_seeds: ChaCha8Rng,
    episode: Episode,
    step: u64,
    eval_round: u64,
    param_pushes: u64,
    exploit_updates: u64,
    explore_updates: u64,
    sink: F,
}

/// Runs training to completion or until `sink` breaks.
pub fn train<F>(cfg: &RunConfig, sink: F) -> Result<TrainOutcome>
where
    F: FnMut(&MetricsRecord) -> ControlFlow<()>,
{
    let mut run = Run::new(cfg, sink)?;
    let mut stopped_early = false;
    let mut warm_up_action_draws = 0;
    while run.step < cfg.total_steps {
        let left = cfg.total_steps - run.step;
        let flow = if run.step < cfg.warm_up_steps {
            let n = left.min(cfg.warm_up_steps - run.step);
            let flow = run.warm_up(n)?;
            warm_up_action_draws = run.actions.calls();
            flow
        } else {
            run.cycle(left.min(cfg.update_frequency))?
        };
        if flow.is_break() {
            stopped_early = true;
            break;
        }
    }
    Ok(TrainOutcome {
        steps: run.step,
        stopped_early,
        warm_up_action_draws,
        action_draws: run.actions.calls(),
        param_pushes: run.param_pushes,
        exploit_updates: run.exploit_updates,
        explore_updates: run.explore_updates,
        exploit: run.exploit,
        explore: run.explore,
    })
}

/// Collects every record in memory.
pub fn train_collect(cfg: &RunConfig) -> Result<(TrainOutcome, Vec<MetricsRecord>)> {
    let mut records = Vec::new();
    let outcome = train(cfg, |r| {
        records.push(*r);
        ControlFlow::Continue(())
    })?;
    Ok((outcome, records))
}

fn relabel(step: u64, e: Error) -> Error {
    match e {
        Error::Divergence { step: update, detail } => Error::Divergence {
            step,
            detail: format!("{detail} (gradient step {update})"),
        },
        other => other,
    }
}

impl<'a, F> Run<'a, F>
where
    F: FnMut(&MetricsRecord) -> ControlFlow<()>,
{
    fn new(cfg: &'a RunConfig, sink: F) -> Result<Self> {
        let spec = cfg.env.spec();
        let arch = DuelingArch::new(spec.obs_dim, cfg.hidden_dims.clone(), spec.action_count)?;
        let exploit = ExploitationNet::new(
            arch.clone(),
            cfg.gamma,
            cfg.exploit_lr,
            cfg.gradient_clip,
            &mut stream_rng(cfg.seed, Stream::ExploitInit),
        )?;
        let variant = apply_ablation(cfg.ablation);
        let (explore, params) = match cfg.algorithm {
            Algorithm::See => {
                let e = cfg.explore()?;
                let arch = ExplorationArch::new(arch, e.probe_count, cfg.hidden_dims.clone())?;
                let net = ExplorationNet::new(
                    arch,
                    e.discount,
                    cfg.gamma,
                    e.lr,
                    cfg.gradient_clip,
                    variant.backup,
                    &mut stream_rng(cfg.seed, Stream::ExploreInit),
                )?;
                let params = if variant.conditioning {
                    Some(ParameterBuffer::new(
                        e.param_buffer_size,
                        stream_rng(cfg.seed, Stream::ParameterSampling),
                    )?)
                } else {
                    None
                };
                (Some(net), params)
            }
            Algorithm::EpsGreedy => {
                if cfg.epsilon.is_none() {
                    return Err(Error::config("eps_greedy run without an epsilon schedule"));
                }
                (None, None)
            }
        };
        let transitions = TransitionBuffer::new(
            cfg.transition_buffer_size,
            stream_rng(cfg.seed, Stream::TransitionSampling),
        )?;
        let mut episode_seeds = stream_rng(cfg.seed, Stream::EpisodeSeeds);
        let mut env = cfg.env.make();
        let obs = env.reset(episode_seeds.next_u64());
        Ok(Self {
            cfg,
            variant,
            env,
            exploit,
            explore,
            transitions,
            params,
            actions: CountingRng::new(stream_rng(cfg.seed, Stream::Actions)),
            episode_seeds,
            episode: Episode {
                obs,
                ret: 0.0,
                len: 0,
                index: 0,
            },
            step: 0,
            eval_round: 0,
            param_pushes: 0,
            exploit_updates: 0,
            explore_updates: 0,
            sink,
        })
    }

    fn emit(&mut self, metric: Metric, value: f64) -> ControlFlow<()> {
        (self.sink)(&MetricsRecord {
            step: self.step,
            metric,
            value,
        })
    }

    /// One environment step with `action`; handles episode ends and
    /// scheduled evaluations.
    fn interact(&mut self, action: usize) -> Result<ControlFlow<()>> {
        let result = self.env.step(action)?;
        self.step += 1;
        self.episode.ret += result.reward;
        self.episode.len += 1;
        let done = result.done();
        self.transitions.push(Transition {
            s: std::mem::replace(&mut self.episode.obs, result.observation.clone()),
            a: action,
            r: result.reward,
            s_next: result.observation,
            terminated: result.terminated,
            truncated: result.truncated,
        });
        let mut flow = ControlFlow::Continue(());
        if done {
            let (ret, len) = (self.episode.ret, self.episode.len);
            flow = self.emit(Metric::TrainReturn, ret);
            if flow.is_continue() {
                flow = self.emit(Metric::TrainLength, len as f64);
            }
            if self.step > self.cfg.warm_up_steps {
                self.episode.index += 1;
            }
            let seed = self.episode_seeds.next_u64();
            self.episode.obs = self.env.reset(seed);
            self.episode.ret = 0.0;
            self.episode.len = 0;
        }
        if flow.is_continue() && self.step.is_multiple_of(self.cfg.eval_interval) {
            flow = self.evaluate()?;
        }
        Ok(flow)
    }

    fn evaluate(&mut self) -> Result<ControlFlow<()>> {
        let seeds: Vec<u64> = (0..self.cfg.eval_episodes as u64)
            .map(|i| eval_seed(self.cfg.seed, self.eval_round, i))
            .collect();
        self.eval_round += 1;
        let eval = evaluate(&self.exploit.arch, &self.exploit.online, self.cfg.env, &seeds)?;
        let flow = self.emit(Metric::EvalReturn, eval.mean_return);
        if flow.is_break() {
            return Ok(flow);
        }
        Ok(self.emit(Metric::EvalScore, score_weight(self.cfg.env) * eval.mean_return))
    }

    fn warm_up(&mut self, n: u64) -> Result<ControlFlow<()>> {
        let actions = self.cfg.env.spec().action_count;
        for _ in 0..n {
            let a = self.actions.random_range(0..actions);
            if self.interact(a)?.is_break() {
                return Ok(ControlFlow::Break(()));
            }
        }
        Ok(ControlFlow::Continue(()))
    }

    fn q_values(&self) -> Result<Vec<f32>> {
        self.exploit.q_values(&self.exploit.online, &self.episode.obs)
    }

    fn cycle(&mut self, n: u64) -> Result<ControlFlow<()>> {
        // Both networks are frozen while interacting, so the embedding of the
        // live parameters is computed once per block.
        let embedding = match &self.explore {
            Some(net) => Some(net.fingerprint_embed(&self.exploit.online)?),
            None => None,
        };
        for _ in 0..n {
            let q = self.q_values()?;
            let action = match (&self.explore, &embedding) {
                (Some(net), Some(e)) => {
                    let error_pred = net.error_with_embedding(&self.episode.obs, e)?;
                    let mixture = self.cfg.explore()?.mixture;
                    if self.variant.mixing {
                        behavior_action(&q, &error_pred, mixture)
                    } else if self.episode.index.is_multiple_of(2) {
                        greedy_action(&q)
                    } else {
                        greedy_action(&error_pred)
                    }
                }
                _ => {
                    let eps = self.cfg.epsilon.expect("checked in new").value(self.step);
                    eps_greedy_action(&q, eps, &mut self.actions)
                }
            };
            if self.interact(action)?.is_break() {
                return Ok(ControlFlow::Break(()));
            }
        }
        self.update_block(n)
    }

    fn update_block(&mut self, n: u64) -> Result<ControlFlow<()>> {
        let step = self.step;
        let mut exploit_loss = 0.0;
        for _ in 0..n {
            let batch = self.transitions.sample(self.cfg.batch_size)?;
            exploit_loss += self.exploit.update(&batch).map_err(|e| relabel(step, e))?;
        }
        self.exploit_updates += n;
        if let Some(params) = &mut self.params {
            params.push(&self.exploit.online);
            self.param_pushes += 1;
        }

        let mut explore_loss = None;
        if let Some(net) = &mut self.explore {
            let e = self.cfg.explore()?;
            let mut total = 0.0;
            for _ in 0..n {
                let loss = match &mut self.params {
                    Some(params) => {
                        let transitions = self.transitions.sample(e.transition_batch_size)?;
                        let snapshots = params.sample(e.param_batch_size)?;
                        net.update(&transitions, &snapshots)
                    }
                    None => {
                        let transitions = self
                            .transitions
                            .sample(e.transition_batch_size * e.param_batch_size)?;
                        net.update(&transitions, &[&self.exploit.online])
                    }
                };
                total += loss.map_err(|err| relabel(step, err))?;
            }
            self.explore_updates += n;
            net.soft_update_target(e.tau)?;
            explore_loss = Some(total / n as f64);
        }
        self.exploit.soft_update_target(self.cfg.exploit_tau)?;

        if self.emit(Metric::ExploitLoss, exploit_loss / n as f64).is_break() {
            return Ok(ControlFlow::Break(()));
        }
        if let Some(loss) = explore_loss {
            return Ok(self.emit(Metric::ExploreLoss, loss));
        }
        Ok(ControlFlow::Continue(()))
    }
}
