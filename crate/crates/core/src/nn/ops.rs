use super::mlp::ParameterVector;
use super::scalar::Scalar;
use crate::error::{Error, Result};

/// Elementwise clamp into `[-clip_value, clip_value]`.
pub fn clip_gradients<T: Scalar>(grads: &mut [T], clip_value: T) {
    debug_assert!(clip_value > T::zero());
    for g in grads {
        *g = g.max(-clip_value).min(clip_value);
    }
}

/// `target = (1 - tau) * target + tau * online`.
pub fn polyak_update<T: Scalar>(
    target: &mut ParameterVector<T>,
    online: &ParameterVector<T>,
    tau: f64,
) -> Result<()> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::config(format!("tau must lie in [0, 1], got {tau}")));
    }
    if target.len() != online.len() {
        return Err(Error::Internal(format!(
            "target has {} parameters, online has {}",
            target.len(),
            online.len()
        )));
    }
    let keep = T::of(1.0 - tau);
    let take = T::of(tau);
    for (t, &o) in target.0.iter_mut().zip(&online.0) {
        *t = keep * *t + take * o;
    }
    Ok(())
}

/// `q[a] = value + advantages[a] - mean(advantages)`, written into `q`.
pub fn dueling_combine_into<T: Scalar>(value: T, advantages: &[T], q: &mut [T]) {
    debug_assert_eq!(advantages.len(), q.len());
    let mean = advantages.iter().copied().sum::<T>() / T::of(advantages.len() as f64);
    for (q, &a) in q.iter_mut().zip(advantages) {
        *q = value + (a - mean);
    }
}

pub fn dueling_combine<T: Scalar>(value: T, advantages: &[T]) -> Vec<T> {
    assert!(!advantages.is_empty(), "dueling head needs at least one action");
    let mut q = vec![T::zero(); advantages.len()];
    dueling_combine_into(value, advantages, &mut q);
    q
}

/// Chain rule through [`dueling_combine`]: given `dL/dq`, fills
/// `[dL/dvalue, dL/dadvantages...]`.
pub fn dueling_backward_into<T: Scalar>(dq: &[T], d_head: &mut [T]) {
    debug_assert_eq!(d_head.len(), dq.len() + 1);
    let total = dq.iter().copied().sum::<T>();
    let mean = total / T::of(dq.len() as f64);
    d_head[0] = total;
    for (d, &g) in d_head[1..].iter_mut().zip(dq) {
        *d = g - mean;
    }
}
