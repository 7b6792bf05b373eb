//! Exploitation objective: dueling double DQN over environment observations.

use rand::Rng;

use crate::envs::EnvObservation;
use crate::error::{Error, Result};
use crate::nn::{
    clip_gradients, dueling_backward_into, dueling_combine_into, polyak_update, AdamState,
    ForwardTrace, MlpSpec, ParameterVector, Scalar,
};
use crate::replay::Transition;

/// Shared-torso dueling network.
///
/// The torso is a ReLU MLP; its last linear layer emits `1 + action_count`
/// values, the state value followed by the advantages (two linear heads on
/// the same features are one linear layer with concatenated outputs).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DuelingArch {
    pub obs_dim: usize,
    pub action_count: usize,
    pub mlp: MlpSpec,
}

impl DuelingArch {
    pub fn new(obs_dim: usize, hidden_dims: Vec<usize>, action_count: usize) -> Result<Self> {
        if action_count == 0 {
            return Err(Error::config("action count must be positive"));
        }
        let mlp = MlpSpec::new(obs_dim, hidden_dims, action_count + 1)?;
        Ok(Self {
            obs_dim,
            action_count,
            mlp,
        })
    }

    pub fn param_count(&self) -> usize {
        self.mlp.param_count()
    }

    /// Q-values for `batch` observations, row-major `batch x action_count`.
    pub fn q_batch<T: Scalar>(
        &self,
        params: &[T],
        inputs: &[T],
        batch: usize,
    ) -> Result<(Vec<T>, ForwardTrace<T>)> {
        let trace = self.mlp.forward(params, inputs, batch)?;
        let heads = self.action_count + 1;
        let mut q = vec![T::zero(); batch * self.action_count];
        for (row, out) in trace.output().chunks_exact(heads).zip(q.chunks_exact_mut(self.action_count)) {
            dueling_combine_into(row[0], &row[1..], out);
        }
        Ok((q, trace))
    }

    /// Backpropagates `dq` (`batch x action_count`) through the dueling head
    /// and the torso. See [`MlpSpec::backward_into`] for the accumulation rules.
    pub fn q_backward<T: Scalar>(
        &self,
        params: &[T],
        trace: &ForwardTrace<T>,
        dq: &[T],
        param_grad: Option<&mut [T]>,
        want_input_grad: bool,
    ) -> Result<Option<Vec<T>>> {
        let batch = trace.batch();
        if dq.len() != batch * self.action_count {
            return Err(Error::Internal("q gradient has the wrong shape".into()));
        }
        let heads = self.action_count + 1;
        let mut d_heads = vec![T::zero(); batch * heads];
        for (d, out) in dq.chunks_exact(self.action_count).zip(d_heads.chunks_exact_mut(heads)) {
            dueling_backward_into(d, out);
        }
        self.mlp
            .backward_into(params, trace, &d_heads, param_grad, want_input_grad)
    }

    pub fn q_values<T: Scalar>(&self, params: &[T], s: &[T]) -> Result<Vec<T>> {
        Ok(self.q_batch(params, s, 1)?.0)
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn greedy_action<T: PartialOrd + Copy>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// `r` at terminal transitions, else `r + gamma * q_target_next[argmax q_online_next]`.
pub fn double_q_target<T: Scalar>(
    reward: T,
    gamma: T,
    terminated: bool,
    q_online_next: &[T],
    q_target_next: &[T],
) -> T {
    if terminated {
        return reward;
    }
    reward + gamma * q_target_next[greedy_action(q_online_next)]
}

/// Packs observations into a row-major matrix.
pub fn obs_matrix<'a, T: Scalar>(rows: impl IntoIterator<Item = &'a EnvObservation>) -> Vec<T> {
    rows.into_iter()
        .flat_map(|o| o.0.iter().map(|&v| T::of(v)))
        .collect()
}

#[derive(Debug, Clone)]
pub struct ExploitationNet<T = f32> {
    pub arch: DuelingArch,
    pub online: ParameterVector<T>,
    pub target: ParameterVector<T>,
    pub adam: AdamState<T>,
    pub gamma: f64,
    pub clip: f64,
}

impl<T: Scalar> ExploitationNet<T> {
    pub fn new<R: Rng + ?Sized>(
        arch: DuelingArch,
        gamma: f64,
        lr: f64,
        clip: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if !(0.0..1.0).contains(&gamma) {
            return Err(Error::config(format!("discount must lie in [0, 1), got {gamma}")));
        }
        if !(clip > 0.0) {
            return Err(Error::config("gradient clip value must be positive"));
        }
        let online: ParameterVector<T> = arch.mlp.init_params(rng);
        let adam = AdamState::new(online.len(), lr)?;
        Ok(Self {
            target: online.clone(),
            online,
            arch,
            adam,
            gamma,
            clip,
        })
    }

    pub fn q_values(&self, params: &ParameterVector<T>, s: &EnvObservation) -> Result<Vec<T>> {
        self.arch.q_values(&params.0, &obs_matrix::<T>([s]))
    }

    pub fn greedy_action(&self, params: &ParameterVector<T>, s: &EnvObservation) -> Result<usize> {
        Ok(greedy_action(&self.q_values(params, s)?))
    }

    /// Double-DQN target of one transition under the current online and target
    /// parameters.
    pub fn double_dqn_target(&self, t: &Transition) -> Result<T> {
        if t.terminated {
            return Ok(T::of(t.r));
        }
        let qo = self.q_values(&self.online, &t.s_next)?;
        let qt = self.q_values(&self.target, &t.s_next)?;
        Ok(double_q_target(T::of(t.r), T::of(self.gamma), false, &qo, &qt))
    }

    /// Batch targets; mirrors [`Self::double_dqn_target`].
    fn targets(&self, batch: &[&Transition]) -> Result<Vec<T>> {
        let n = batch.len();
        let next = obs_matrix::<T>(batch.iter().map(|t| &t.s_next));
        let (qo, _) = self.arch.q_batch(&self.online.0, &next, n)?;
        let (qt, _) = self.arch.q_batch(&self.target.0, &next, n)?;
        let a = self.arch.action_count;
        let gamma = T::of(self.gamma);
        Ok(batch
            .iter()
            .enumerate()
            .map(|(i, t)| {
                double_q_target(
                    T::of(t.r),
                    gamma,
                    t.terminated,
                    &qo[i * a..(i + 1) * a],
                    &qt[i * a..(i + 1) * a],
                )
            })
            .collect())
    }

    /// Mean squared TD loss and its gradient with respect to the online
    /// parameters for fixed targets.
    pub fn loss_and_grad(
        &self,
        params: &ParameterVector<T>,
        batch: &[&Transition],
        targets: &[T],
    ) -> Result<(T, ParameterVector<T>)> {
        let n = batch.len();
        let a = self.arch.action_count;
        let x = obs_matrix::<T>(batch.iter().map(|t| &t.s));
        let (q, trace) = self.arch.q_batch(&params.0, &x, n)?;
        let scale = T::of(1.0 / n as f64);
        let two = T::of(2.0);
        let mut loss = T::zero();
        let mut dq = vec![T::zero(); n * a];
        for (i, t) in batch.iter().enumerate() {
            let err = q[i * a + t.a] - targets[i];
            loss = loss + err * err * scale;
            dq[i * a + t.a] = two * err * scale;
        }
        let mut grad = ParameterVector::zeros(params.len());
        self.arch
            .q_backward(&params.0, &trace, &dq, Some(&mut grad.0), false)?;
        Ok((loss, grad))
    }

    /// One gradient step on the mean squared double-DQN loss. Returns the
    /// loss before the step. The target parameters are not touched.
    pub fn update(&mut self, batch: &[&Transition]) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::usage("exploitation update needs a non-empty batch"));
        }
        if let Some(t) = batch.iter().find(|t| t.a >= self.arch.action_count) {
            return Err(Error::usage(format!("action {} out of range", t.a)));
        }
        let targets = self.targets(batch)?;
        let (loss, mut grad) = self.loss_and_grad(&self.online, batch, &targets)?;
        if !loss.is_finite() {
            return Err(Error::Divergence {
                step: self.adam.step_count + 1,
                detail: format!("exploitation loss is {loss:?}"),
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
