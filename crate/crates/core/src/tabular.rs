//! Tabular max-reward value iteration on small deterministic MDPs.
//!
//! Uses the same backup as the exploration network, with the online and
//! target tables identical. Handy as a reference for what the exploration
//! values converge to.

use crate::error::{Error, Result};
use crate::explore::{max_update_target, Backup};

/// Deterministic MDP. `next[s][a] == None` marks a terminating action.
#[derive(Debug, Clone, PartialEq)]
pub struct DeterministicMdp {
    pub next: Vec<Vec<Option<usize>>>,
    pub reward: Vec<Vec<f64>>,
}

impl DeterministicMdp {
    pub fn new(next: Vec<Vec<Option<usize>>>, reward: Vec<Vec<f64>>) -> Result<Self> {
        let n = next.len();
        if n == 0 || reward.len() != n {
            return Err(Error::config("mdp needs matching, non-empty transition and reward tables"));
        }
        let actions = next[0].len();
        for (row, rew) in next.iter().zip(&reward) {
            if row.len() != actions || rew.len() != actions || actions == 0 {
                return Err(Error::config("every state needs the same positive action count"));
            }
            if row.iter().flatten().any(|&s| s >= n) {
                return Err(Error::config("transition to an unknown state"));
            }
        }
        Ok(Self { next, reward })
    }

    pub fn state_count(&self) -> usize {
        self.next.len()
    }

    pub fn action_count(&self) -> usize {
        self.next[0].len()
    }
}

/// One synchronous sweep. `q == None` means no future values exist yet, so
/// every entry becomes its immediate reward.
fn sweep(mdp: &DeterministicMdp, gamma: f64, backup: Backup, q: Option<&[Vec<f64>]>) -> Vec<Vec<f64>> {
    (0..mdp.state_count())
        .map(|s| {
            (0..mdp.action_count())
                .map(|a| {
                    let r = mdp.reward[s][a];
                    match (mdp.next[s][a], q) {
                        (Some(s2), Some(q)) => {
                            max_update_target(r, gamma, false, &q[s2], &q[s2], backup)
                        }
                        _ => r,
                    }
                })
                .collect()
        })
        .collect()
}

/// Action values after exactly `horizon` sweeps: the best over action
/// sequences of at most `horizon` steps.
pub fn finite_horizon_values(
    mdp: &DeterministicMdp,
    gamma: f64,
    horizon: usize,
    backup: Backup,
) -> Result<Vec<Vec<f64>>> {
    if horizon == 0 {
        return Err(Error::config("horizon must be positive"));
    }
    let mut q = sweep(mdp, gamma, backup, None);
    for _ in 1..horizon {
        q = sweep(mdp, gamma, backup, Some(&q));
    }
    Ok(q)
}

/// Sweeps until no entry moves by more than `tol`. Returns the values and
/// the number of sweeps.
pub fn value_iteration(
    mdp: &DeterministicMdp,
    gamma: f64,
    backup: Backup,
    tol: f64,
    max_sweeps: usize,
) -> Result<(Vec<Vec<f64>>, usize)> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::config(format!("discount must lie in [0, 1], got {gamma}")));
    }
    let mut q = sweep(mdp, gamma, backup, None);
    for k in 1..max_sweeps {
        let next = sweep(mdp, gamma, backup, Some(&q));
        let moved = next
            .iter()
            .flatten()
            .zip(q.iter().flatten())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        q = next;
        if moved <= tol {
            return Ok((q, k + 1));
        }
    }
    Err(Error::Internal(format!("value iteration did not settle in {max_sweeps} sweeps")))
}

/// State values: the best action value per state.
pub fn state_values(q: &[Vec<f64>]) -> Vec<f64> {
    q.iter()
        .map(|row| row.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain(rewards: &[f64]) -> DeterministicMdp {
        let n = rewards.len();
        let next = (0..n).map(|s| vec![(s + 1 < n).then_some(s + 1)]).collect();
        let reward = rewards.iter().map(|&r| vec![r]).collect();
        DeterministicMdp::new(next, reward).unwrap()
    }

    #[test]
    fn chain_propagates_largest_discounted_reward() {
        let mdp = chain(&[0.0, 1.0, 0.0, 5.0, 0.0]);
        let (q, _) = value_iteration(&mdp, 0.9, Backup::Max, 0.0, 100).unwrap();
        let v = state_values(&q);
        assert!((v[0] - 0.9f64.powi(3) * 5.0).abs() < 1e-12);
        assert_eq!(v[3], 5.0);
        assert_eq!(v[4], 0.0);
    }

    #[test]
    fn sum_backup_is_discounted_return() {
        let mdp = chain(&[1.0, 1.0, 1.0]);
        let (q, _) = value_iteration(&mdp, 0.5, Backup::Sum, 0.0, 100).unwrap();
        assert_eq!(state_values(&q)[0], 1.75);
    }

    #[test]
    fn finite_horizon_truncates() {
        let mdp = chain(&[0.0, 0.0, 3.0]);
        assert_eq!(state_values(&finite_horizon_values(&mdp, 1.0, 2, Backup::Max).unwrap())[0], 0.0);
        assert_eq!(state_values(&finite_horizon_values(&mdp, 1.0, 3, Backup::Max).unwrap())[0], 3.0);
    }

    #[test]
    fn rejects_bad_tables() {
        assert!(DeterministicMdp::new(vec![], vec![]).is_err());
        assert!(DeterministicMdp::new(vec![vec![Some(3)]], vec![vec![0.0]]).is_err());
        assert!(DeterministicMdp::new(vec![vec![None, None], vec![None]], vec![vec![0.0; 2], vec![0.0]]).is_err());
    }
}
