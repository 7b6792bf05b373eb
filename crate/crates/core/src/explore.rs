//! Exploration objective.
//!
//! The exploration network predicts, per action, the absolute TD-error the
//! exploitation network makes, conditioned on the exploitation parameters.
//! Those parameters are embedded by fingerprinting: a bank of learnable
//! probe states is pushed through the exploitation network and the resulting
//! Q-vectors are concatenated. The embedding is appended to the observation
//! and fed to a plain ReLU MLP with one output per action.
//!
//! Parameter layout of `explore_params`: the probe bank first (`probe_count x obs_dim`,
//! row-major), then the MLP parameters.
//!
//! Training uses the max-reward backup `max(r, gamma * next)` with a
//! double-Q next value, over the cross product of a transition batch and a
//! batch of exploitation snapshots.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::envs::EnvObservation;
use crate::error::{Error, Result};
use crate::exploit::{greedy_action, obs_matrix, DuelingArch};
use crate::nn::{
    clip_gradients, polyak_update, AdamState, ForwardTrace, MlpSpec, ParameterVector, Scalar,
};
use crate::replay::Transition;

/// Scale of the initial probe states (standard normal entries times this).
pub const PROBE_INIT_SCALE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExplorationArch {
    pub exploit: DuelingArch,
    pub probe_count: usize,
    pub mlp: MlpSpec,
}

impl ExplorationArch {
    pub fn new(exploit: DuelingArch, probe_count: usize, hidden_dims: Vec<usize>) -> Result<Self> {
        if probe_count == 0 {
            return Err(Error::config("probe count must be positive"));
        }
        let input = exploit.obs_dim + probe_count * exploit.action_count;
        let mlp = MlpSpec::new(input, hidden_dims, exploit.action_count)?;
        Ok(Self {
            exploit,
            probe_count,
            mlp,
        })
    }

    pub fn obs_dim(&self) -> usize {
        self.exploit.obs_dim
    }

    pub fn action_count(&self) -> usize {
        self.exploit.action_count
    }

    pub fn embedding_dim(&self) -> usize {
        self.probe_count * self.exploit.action_count
    }

    pub fn probe_len(&self) -> usize {
        self.probe_count * self.exploit.obs_dim
    }

    pub fn param_count(&self) -> usize {
        self.probe_len() + self.mlp.param_count()
    }

    /// `(probe bank, mlp parameters)`.
    pub fn split<'a, T>(&self, explore_params: &'a [T]) -> (&'a [T], &'a [T]) {
        explore_params.split_at(self.probe_len())
    }

    pub fn init_params<T: Scalar, R: Rng + ?Sized>(&self, rng: &mut R) -> ParameterVector<T> {
        let mut explore_params = Vec::with_capacity(self.param_count());
        for _ in 0..self.probe_len() {
            let z: f64 = rng.sample(StandardNormal);
            explore_params.push(T::of(z * PROBE_INIT_SCALE));
        }
        explore_params.extend(self.mlp.init_params::<T, R>(rng).0);
        ParameterVector(explore_params)
    }

    fn check_explore_params<T>(&self, explore_params: &[T]) -> Result<()> {
        if explore_params.len() != self.param_count() {
            return Err(Error::config(format!(
                "exploration parameters have {} entries, expected {}",
                explore_params.len(),
                self.param_count()
            )));
        }
        Ok(())
    }

    /// Fingerprint of `exploit_params` under the probe bank of `explore_params`, with the trace
    /// needed to push gradients back into the probe states.
    pub fn fingerprint_traced<T: Scalar>(
        &self,
        explore_params: &[T],
        exploit_params: &[T],
    ) -> Result<(Vec<T>, ForwardTrace<T>)> {
        self.check_explore_params(explore_params)?;
        let (probes, _) = self.split(explore_params);
        self.exploit.q_batch(exploit_params, probes, self.probe_count)
    }

    /// Concatenated Q-vectors of the probe states, in probe order.
    pub fn fingerprint<T: Scalar>(&self, explore_params: &[T], exploit_params: &[T]) -> Result<Vec<T>> {
        Ok(self.fingerprint_traced(explore_params, exploit_params)?.0)
    }

    /// Rows `[s_i, embedding]` for every observation row in `states`.
    fn inputs<T: Scalar>(&self, states: &[T], embedding: &[T], out: &mut Vec<T>) {
        for s in states.chunks_exact(self.obs_dim()) {
            out.extend_from_slice(s);
            out.extend_from_slice(embedding);
        }
    }

    /// Predicted values for `states` (row-major) under a precomputed embedding.
    pub fn error_batch<T: Scalar>(&self, explore_params: &[T], states: &[T], embedding: &[T]) -> Result<Vec<T>> {
        self.check_explore_params(explore_params)?;
        if embedding.len() != self.embedding_dim() {
            return Err(Error::Internal("embedding has the wrong length".into()));
        }
        let rows = states.len() / self.obs_dim();
        let mut x = Vec::with_capacity(rows * self.mlp.input_dim);
        self.inputs(states, embedding, &mut x);
        let (_, mlp) = self.split(explore_params);
        Ok(self.mlp.forward(mlp, &x, rows)?.into_output())
    }

    /// One predicted absolute TD-error per action for `(s, exploit_params)`.
    pub fn error_values<T: Scalar>(&self, explore_params: &[T], s: &[T], exploit_params: &[T]) -> Result<Vec<T>> {
        let e = self.fingerprint(explore_params, exploit_params)?;
        self.error_batch(explore_params, s, &e)
    }
}

/// Absolute TD-error of the snapshot `exploit_params` on one transition, without a
/// target network. Terminal transitions drop the bootstrap term.
pub fn exploration_reward<T: Scalar>(
    arch: &DuelingArch,
    exploit_params: &[T],
    gamma: f64,
    t: &Transition,
) -> Result<T> {
    let q = arch.q_values(exploit_params, &obs_matrix::<T>([&t.s]))?;
    let next = if t.terminated {
        None
    } else {
        Some(arch.q_values(exploit_params, &obs_matrix::<T>([&t.s_next]))?)
    };
    Ok(td_magnitude(T::of(t.r), T::of(gamma), q[t.a], next.as_deref()))
}

fn td_magnitude<T: Scalar>(r: T, gamma: T, q_sa: T, q_next: Option<&[T]>) -> T {
    let boot = q_next.map_or(T::zero(), |q| {
        gamma * q.iter().copied().fold(T::neg_infinity(), T::max)
    });
    (r + boot - q_sa).abs()
}

/// How the exploration target combines reward and bootstrap.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Backup {
    /// `max(r, gamma * next)`.
    Max,
    /// `r + gamma * next` (ablation).
    Sum,
}

/// Exploration target. `error_online_next` selects the action and
/// `error_target_next` evaluates it; terminal transitions return `reward`.
pub fn max_update_target<T: Scalar>(
    reward: T,
    gamma: T,
    terminated: bool,
    error_online_next: &[T],
    error_target_next: &[T],
    backup: Backup,
) -> T {
    if terminated {
        return reward;
    }
    let boot = gamma * error_target_next[greedy_action(error_online_next)];
    match backup {
        Backup::Max => reward.max(boot),
        Backup::Sum => reward + boot,
    }
}

/// A transition batch crossed with a batch of exploitation snapshots.
///
/// Repeated snapshots (same allocation) are merged and weighted by their
/// multiplicity, so the loss is exactly the mean over all
/// `transitions x snapshots` pairs.
#[derive(Debug, Clone)]
pub struct PairBatch<'a, T> {
    pub transitions: Vec<&'a Transition>,
    pub snapshots: Vec<&'a ParameterVector<T>>,
    pub counts: Vec<usize>,
    pub draws: usize,
}

impl<'a, T: Scalar> PairBatch<'a, T> {
    pub fn new(transitions: &[&'a Transition], snapshots: &[&'a ParameterVector<T>]) -> Result<Self> {
        if transitions.is_empty() || snapshots.is_empty() {
            return Err(Error::usage(
                "exploration update needs non-empty transition and snapshot batches",
            ));
        }
        let mut distinct: Vec<&'a ParameterVector<T>> = Vec::new();
        let mut counts = Vec::new();
        for &s in snapshots {
            match distinct.iter().position(|d| std::ptr::eq(*d, s)) {
                Some(i) => counts[i] += 1,
                None => {
                    distinct.push(s);
                    counts.push(1);
                }
            }
        }
        Ok(Self {
            transitions: transitions.to_vec(),
            snapshots: distinct,
            counts,
            draws: snapshots.len(),
        })
    }

    pub fn pair_count(&self) -> usize {
        self.transitions.len() * self.draws
    }
}

/// Exploration rewards and targets for a [`PairBatch`], snapshot-major
/// (`j * transitions + i`).
#[derive(Debug, Clone)]
pub struct PairTargets<T> {
    pub rewards: Vec<T>,
    pub targets: Vec<T>,
}

#[derive(Debug, Clone)]
pub struct ExplorationNet<T = f32> {
    pub arch: ExplorationArch,
    pub online: ParameterVector<T>,
    pub target: ParameterVector<T>,
    pub adam: AdamState<T>,
    /// Discount of the exploration objective.
    pub gamma: f64,
    /// Discount of the exploitation objective, used inside the reward.
    pub exploit_gamma: f64,
    pub clip: f64,
    pub backup: Backup,
}

impl<T: Scalar> ExplorationNet<T> {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng + ?Sized>(
        arch: ExplorationArch,
        gamma: f64,
        exploit_gamma: f64,
        lr: f64,
        clip: f64,
        backup: Backup,
        rng: &mut R,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&gamma) {
            return Err(Error::config(format!("exploration discount must lie in [0, 1], got {gamma}")));
        }
        if !(clip > 0.0) {
            return Err(Error::config("gradient clip value must be positive"));
        }
        let online: ParameterVector<T> = arch.init_params(rng);
        let adam = AdamState::new(online.len(), lr)?;
        Ok(Self {
            target: online.clone(),
            online,
            arch,
            adam,
            gamma,
            exploit_gamma,
            clip,
            backup,
        })
    }

    pub fn fingerprint_embed(&self, exploit_params: &ParameterVector<T>) -> Result<Vec<T>> {
        self.arch.fingerprint(&self.online.0, &exploit_params.0)
    }

    pub fn error_values(
        &self,
        explore_params: &ParameterVector<T>,
        s: &EnvObservation,
        exploit_params: &ParameterVector<T>,
    ) -> Result<Vec<T>> {
        self.arch
            .error_values(&explore_params.0, &obs_matrix::<T>([s]), &exploit_params.0)
    }

    /// Online predictions for one observation under a cached embedding.
    pub fn error_with_embedding(&self, s: &EnvObservation, embedding: &[T]) -> Result<Vec<T>> {
        self.arch
            .error_batch(&self.online.0, &obs_matrix::<T>([s]), embedding)
    }

    pub fn exploration_reward(&self, exploit_params: &ParameterVector<T>, t: &Transition) -> Result<T> {
        exploration_reward(&self.arch.exploit, &exploit_params.0, self.exploit_gamma, t)
    }

    /// Target of one `(transition, exploit_params)` pair given its exploration reward.
    pub fn max_update_target(&self, t: &Transition, exploit_params: &ParameterVector<T>, reward: T) -> Result<T> {
        if t.terminated {
            return Ok(reward);
        }
        let online = self.error_values(&self.online, &t.s_next, exploit_params)?;
        let target = self.error_values(&self.target, &t.s_next, exploit_params)?;
        Ok(max_update_target(
            reward,
            T::of(self.gamma),
            false,
            &online,
            &target,
            self.backup,
        ))
    }

    /// Rewards and targets for every pair under the current online and
    /// target parameters.
    pub fn pair_targets(&self, batch: &PairBatch<'_, T>) -> Result<PairTargets<T>> {
        let arch = &self.arch;
        let exploit = &arch.exploit;
        let a = arch.action_count();
        let n = batch.transitions.len();
        let states = obs_matrix::<T>(batch.transitions.iter().map(|t| &t.s));
        let next = obs_matrix::<T>(batch.transitions.iter().map(|t| &t.s_next));
        let mut both = states.clone();
        both.extend_from_slice(&next);
        let gamma_q = T::of(self.exploit_gamma);
        let gamma_d = T::of(self.gamma);

        let mut rewards = Vec::with_capacity(n * batch.snapshots.len());
        let mut targets = Vec::with_capacity(n * batch.snapshots.len());
        for exploit_params in &batch.snapshots {
            let (q, _) = exploit.q_batch(&exploit_params.0, &both, 2 * n)?;
            let e_online = arch.fingerprint(&self.online.0, &exploit_params.0)?;
            let e_target = arch.fingerprint(&self.target.0, &exploit_params.0)?;
            let d_online = arch.error_batch(&self.online.0, &next, &e_online)?;
            let d_target = arch.error_batch(&self.target.0, &next, &e_target)?;
            for (i, t) in batch.transitions.iter().enumerate() {
                let q_next = (!t.terminated).then(|| &q[(n + i) * a..(n + i + 1) * a]);
                let r = td_magnitude(T::of(t.r), gamma_q, q[i * a + t.a], q_next);
                rewards.push(r);
                targets.push(max_update_target(
                    r,
                    gamma_d,
                    t.terminated,
                    &d_online[i * a..(i + 1) * a],
                    &d_target[i * a..(i + 1) * a],
                    self.backup,
                ));
            }
        }
        Ok(PairTargets { rewards, targets })
    }

    /// Mean squared error over all pairs for fixed targets, and its gradient
    /// with respect to `explore_params` (MLP weights and probe states).
    pub fn loss_and_grad(
        &self,
        explore_params: &ParameterVector<T>,
        batch: &PairBatch<'_, T>,
        targets: &[T],
    ) -> Result<(T, ParameterVector<T>)> {
        let arch = &self.arch;
        arch.check_explore_params(&explore_params.0)?;
        let a = arch.action_count();
        let obs_dim = arch.obs_dim();
        let n = batch.transitions.len();
        let rows = n * batch.snapshots.len();
        if targets.len() != rows {
            return Err(Error::Internal("one target per distinct pair expected".into()));
        }
        let states = obs_matrix::<T>(batch.transitions.iter().map(|t| &t.s));

        let mut probe_traces = Vec::with_capacity(batch.snapshots.len());
        let mut x = Vec::with_capacity(rows * arch.mlp.input_dim);
        for exploit_params in &batch.snapshots {
            let (e, trace) = arch.fingerprint_traced(&explore_params.0, &exploit_params.0)?;
            arch.inputs(&states, &e, &mut x);
            probe_traces.push(trace);
        }
        let (_, mlp_params) = arch.split(&explore_params.0);
        let trace = arch.mlp.forward(mlp_params, &x, rows)?;
        let out = trace.output();

        let total = T::of(batch.pair_count() as f64);
        let two = T::of(2.0);
        let mut loss = T::zero();
        let mut d_out = vec![T::zero(); rows * a];
        for (j, &count) in batch.counts.iter().enumerate() {
            let weight = T::of(count as f64) / total;
            for (i, t) in batch.transitions.iter().enumerate() {
                let row = j * n + i;
                let err = out[row * a + t.a] - targets[row];
                loss = loss + weight * err * err;
                d_out[row * a + t.a] = two * weight * err;
            }
        }

        let mut grad = ParameterVector::zeros(explore_params.len());
        let (g_probes, g_mlp) = grad.0.split_at_mut(arch.probe_len());
        let d_x = arch
            .mlp
            .backward_into(mlp_params, &trace, &d_out, Some(g_mlp), true)?
            .expect("input gradient requested");
        let width = arch.mlp.input_dim;
        for (j, exploit_params) in batch.snapshots.iter().enumerate() {
            let mut d_embed = vec![T::zero(); arch.embedding_dim()];
            for i in 0..n {
                let row = &d_x[(j * n + i) * width..(j * n + i + 1) * width];
                for (d, &g) in d_embed.iter_mut().zip(&row[obs_dim..]) {
                    *d = *d + g;
                }
            }
            let d_probes = arch
                .exploit
                .q_backward(&exploit_params.0, &probe_traces[j], &d_embed, None, true)?
                .expect("input gradient requested");
            for (g, d) in g_probes.iter_mut().zip(d_probes) {
                *g = *g + d;
            }
        }
        Ok((loss, grad))
    }

    /// One gradient step over the `transitions x snapshots` cross product.
    /// Returns the loss before the step. Snapshots are only read.
    pub fn update(
        &mut self,
        transitions: &[&Transition],
        snapshots: &[&ParameterVector<T>],
    ) -> Result<f64> {
        if let Some(t) = transitions.iter().find(|t| t.a >= self.arch.action_count()) {
            return Err(Error::usage(format!("action {} out of range", t.a)));
        }
        let batch = PairBatch::new(transitions, snapshots)?;
        let targets = self.pair_targets(&batch)?;
        let (loss, mut grad) = self.loss_and_grad(&self.online, &batch, &targets.targets)?;
        if !loss.is_finite() {
            return Err(Error::Divergence {
                step: self.adam.step_count + 1,
                detail: format!("exploration loss is {loss:?}"),
            });
        }
        clip_gradients(&mut grad.0, T::of(self.clip));
        self.adam.step(&mut self.online.0, &grad.0)?;
        Ok(loss.as_f64())
    }

    pub fn soft_update_target(&mut self, tau: f64) -> Result<()> {
        polyak_update(&mut self.target, &self.online, tau)
    }
}
