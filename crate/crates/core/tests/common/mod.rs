//! Oracles shared by the integration tests and the acceptance run.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use see_core::envs::EnvObservation;
use see_core::exploit::DuelingArch;
use see_core::explore::{ExplorationArch, ExplorationNet, PairBatch};
use see_core::nn::{MlpSpec, ParameterVector};
use see_core::replay::Transition;
use see_core::tabular::DeterministicMdp;
use see_core::explore::Backup;

pub const FD_STEP: f64 = 1e-5;
pub const FD_RTOL: f64 = 1e-4;

#[derive(Debug, Default, Clone, Copy)]
pub struct FdReport {
    pub checked: usize,
    /// Derivative below 1e-8 in magnitude.
    pub tiny: usize,
    /// The perturbation crossed a ReLU kink (one-sided slopes disagree).
    pub kinks: usize,
    pub worst: f64,
}

impl FdReport {
    pub fn merge(&mut self, o: FdReport) {
        self.checked += o.checked;
        self.tiny += o.tiny;
        self.kinks += o.kinks;
        self.worst = self.worst.max(o.worst);
    }

    pub fn total(&self) -> usize {
        self.checked + self.tiny + self.kinks
    }
}

/// Compares `analytic` against central differences of `f` around `x`.
/// Returns an error naming the first mismatching component.
pub fn fd_check(
    f: &dyn Fn(&[f64]) -> f64,
    x: &[f64],
    analytic: &[f64],
) -> Result<FdReport, String> {
    assert_eq!(x.len(), analytic.len());
    let mut report = FdReport::default();
    let mut probe = x.to_vec();
    let f0 = f(x);
    for i in 0..x.len() {
        probe[i] = x[i] + FD_STEP;
        let up = f(&probe);
        probe[i] = x[i] - FD_STEP;
        let down = f(&probe);
        probe[i] = x[i];
        let central = (up - down) / (2.0 * FD_STEP);
        let fwd = (up - f0) / FD_STEP;
        let bwd = (f0 - down) / FD_STEP;
        let scale = analytic[i].abs().max(central.abs());
        if scale < 1e-8 {
            report.tiny += 1;
            continue;
        }
        if (fwd - bwd).abs() > 1e-3 * fwd.abs().max(bwd.abs()) + 1e-7 {
            report.kinks += 1;
            continue;
        }
        let rel = (analytic[i] - central).abs() / scale;
        report.worst = report.worst.max(rel);
        if rel > FD_RTOL {
            return Err(format!(
                "component {i}: analytic {} vs finite difference {central} (relative {rel:.2e})",
                analytic[i]
            ));
        }
        report.checked += 1;
    }
    Ok(report)
}

fn normal_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0) * scale).collect()
}

/// One random plain MLP case: gradients of `sum(c * output)` with respect to
/// parameters and inputs.
pub fn mlp_case(seed: u64, input: usize, hidden: Vec<usize>, output: usize, batch: usize) -> Result<FdReport, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spec = MlpSpec::new(input, hidden, output).unwrap();
    let params: ParameterVector<f64> = spec.init_params(&mut rng);
    let x = normal_vec(&mut rng, batch * input, 1.0);
    let c = normal_vec(&mut rng, batch * output, 1.0);
    let trace = spec.forward(&params.0, &x, batch).unwrap();
    let (g_params, g_input) = spec.backward(&params.0, &trace, &c).unwrap();
    let objective = |p: &[f64], x: &[f64]| -> f64 {
        let out = spec.forward(p, x, batch).unwrap().into_output();
        out.iter().zip(&c).map(|(o, c)| o * c).sum()
    };
    let mut report = fd_check(&|p| objective(p, &x), &params.0, &g_params.0)?;
    report.merge(fd_check(&|xi| objective(&params.0, xi), &x, &g_input)?);
    Ok(report)
}

/// One random dueling case with a random architecture.
pub fn dueling_case(seed: u64) -> Result<FdReport, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let obs = rng.random_range(1..=5);
    let actions = rng.random_range(2..=4);
    let hidden: Vec<usize> = (0..rng.random_range(1..=2)).map(|_| rng.random_range(3..=8)).collect();
    let batch = rng.random_range(1..=4);
    let arch = DuelingArch::new(obs, hidden, actions).unwrap();
    let params: ParameterVector<f64> = arch.mlp.init_params(&mut rng);
    let x = normal_vec(&mut rng, batch * obs, 1.0);
    let c = normal_vec(&mut rng, batch * actions, 1.0);
    let (_, trace) = arch.q_batch(&params.0, &x, batch).unwrap();
    let mut g_params = vec![0.0; params.len()];
    let g_input = arch
        .q_backward(&params.0, &trace, &c, Some(&mut g_params), true)
        .unwrap()
        .unwrap();
    let objective = |p: &[f64], x: &[f64]| -> f64 {
        let (q, _) = arch.q_batch(p, x, batch).unwrap();
        q.iter().zip(&c).map(|(q, c)| q * c).sum()
    };
    let mut report = fd_check(&|p| objective(p, &x), &params.0, &g_params)?;
    report.merge(fd_check(&|xi| objective(&params.0, xi), &x, &g_input)?);
    Ok(report)
}

pub fn random_transition(rng: &mut ChaCha8Rng, obs: usize, actions: usize) -> Transition {
    Transition {
        s: EnvObservation(normal_vec(rng, obs, 1.0)),
        a: rng.random_range(0..actions),
        r: rng.random_range(-2.0..2.0),
        s_next: EnvObservation(normal_vec(rng, obs, 1.0)),
        terminated: rng.random_bool(0.2),
        truncated: false,
    }
}

/// One random exploration-loss case: gradient with respect to all of
/// `explore_params` (probe states and MLP) for fixed targets, over a cross product
/// with repeated snapshots.
pub fn exploration_case(seed: u64) -> Result<FdReport, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let obs = rng.random_range(1..=4);
    let actions = rng.random_range(2..=3);
    let hidden: Vec<usize> = (0..rng.random_range(1..=2)).map(|_| rng.random_range(3..=6)).collect();
    let probes = rng.random_range(1..=3);
    let exploit = DuelingArch::new(obs, hidden.clone(), actions).unwrap();
    let arch = ExplorationArch::new(exploit.clone(), probes, hidden).unwrap();
    let net: ExplorationNet<f64> = ExplorationNet::new(arch, 0.9, 0.99, 1e-3, 10.0, Backup::Max, &mut rng).unwrap();
    // Larger probe scale so the probe path carries real signal.
    let mut explore_params = net.online.clone();
    for v in &mut explore_params.0[..net.arch.probe_len()] {
        *v = rng.random_range(-1.0..1.0);
    }
    let exploit_param_sets: Vec<ParameterVector<f64>> = (0..2).map(|_| exploit.mlp.init_params(&mut rng)).collect();
    let ts: Vec<Transition> = (0..rng.random_range(1..=3)).map(|_| random_transition(&mut rng, obs, actions)).collect();
    let refs: Vec<&Transition> = ts.iter().collect();
    let snaps = [&exploit_param_sets[0], &exploit_param_sets[1], &exploit_param_sets[0]];
    let batch = PairBatch::new(&refs, &snaps).unwrap();
    let targets: Vec<f64> = (0..ts.len() * 2).map(|_| rng.random_range(0.0..2.0)).collect();
    let (_, grad) = net.loss_and_grad(&explore_params, &batch, &targets).unwrap();
    let f = |w: &[f64]| -> f64 {
        net.loss_and_grad(&ParameterVector(w.to_vec()), &batch, &targets).unwrap().0
    };
    fd_check(&f, &explore_params.0, &grad.0)
}

/// Random deterministic MDP. With `acyclic`, actions only move to
/// higher-numbered states and the last state always terminates.
pub fn random_mdp(rng: &mut ChaCha8Rng, acyclic: bool) -> DeterministicMdp {
    let n = rng.random_range(2..=8);
    let a = rng.random_range(1..=3);
    let mut next = Vec::with_capacity(n);
    let mut reward = Vec::with_capacity(n);
    for s in 0..n {
        let row: Vec<Option<usize>> = (0..a)
            .map(|_| {
                if rng.random_bool(0.15) || (acyclic && s + 1 == n) {
                    None
                } else if acyclic {
                    Some(rng.random_range(s + 1..n))
                } else {
                    Some(rng.random_range(0..n))
                }
            })
            .collect();
        next.push(row);
        reward.push(
            (0..a)
                .map(|_| if rng.random_bool(0.4) { 0.0 } else { rng.random_range(-1.0..3.0) })
                .collect(),
        );
    }
    DeterministicMdp::new(next, reward).unwrap()
}

/// Brute force: the best over every action sequence of at most `depth`
/// steps from `s` of `max_t gamma^t r_t`, by explicit path enumeration.
pub fn enumerate_paths(mdp: &DeterministicMdp, s: usize, gamma: f64, depth: usize) -> f64 {
    fn walk(mdp: &DeterministicMdp, s: usize, gamma: f64, left: usize, t: i32, best_so_far: f64, out: &mut f64) {
        for a in 0..mdp.action_count() {
            let here = best_so_far.max(gamma.powi(t) * mdp.reward[s][a]);
            match mdp.next[s][a] {
                Some(s2) if left > 1 => walk(mdp, s2, gamma, left - 1, t + 1, here, out),
                _ => *out = out.max(here),
            }
        }
    }
    let mut out = f64::NEG_INFINITY;
    walk(mdp, s, gamma, depth, 0, f64::NEG_INFINITY, &mut out);
    out
}
