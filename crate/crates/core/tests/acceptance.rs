//! Acceptance run. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails. Arguments that do not start with `-`
//! select criteria by substring.

mod common;

use std::io::Write;
use std::ops::ControlFlow;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use see_core::cli;
use see_core::config::{
    exploration_batch_split, normalized_score, tau_from_per_timestep, tau_per_timestep_from, ConfigFile,
    RunConfig,
};
use see_core::curves::parse_aggregate;
use see_core::envs::EnvObservation;
use see_core::exploit::{greedy_action, DuelingArch, ExploitationNet};
use see_core::explore::{max_update_target, Backup, ExplorationArch, ExplorationNet, PairBatch};
use see_core::nn::ParameterVector;
use see_core::replay::Transition;
use see_core::tabular::{finite_horizon_values, state_values, value_iteration};
use see_core::trainer::{behavior_action, train, Metric};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

const SEEDS: u64 = 5;

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn load(name: &str, seed: u64) -> RunConfig {
    let mut file = ConfigFile::load(&configs_dir().join(name)).expect("shipped config loads");
    file.seed = seed;
    file.resolve().expect("shipped config resolves")
}

fn progress(line: String) {
    println!("    {line}");
    let _ = std::io::stdout().flush();
}

fn within(elapsed: Duration, limit: Duration, what: &str) -> Result<(), String> {
    if elapsed > limit {
        Err(format!("{what} took {elapsed:.1?}, limit {limit:?}"))
    } else {
        Ok(())
    }
}

fn gradient_correctness() -> Outcome {
    let start = Instant::now();
    let mut dueling = common::FdReport::default();
    let mut explore = common::FdReport::default();
    for seed in 0..20 {
        dueling.merge(common::dueling_case(1000 + seed).map_err(|e| format!("dueling case {seed}: {e}"))?);
        explore.merge(common::exploration_case(2000 + seed).map_err(|e| format!("exploration case {seed}: {e}"))?);
    }
    within(start.elapsed(), Duration::from_secs(60), "gradient checks")?;
    for (name, r) in [("dueling", &dueling), ("exploration", &explore)] {
        if r.checked == 0 || r.kinks * 10 > r.total() {
            return Err(format!("{name}: too few components checked ({r:?})"));
        }
    }
    Ok(format!(
        "dueling {} partials (worst rel {:.1e}), exploration incl. probes {} partials (worst rel {:.1e}); {} kink and {} zero components skipped; {:.1?}",
        dueling.checked,
        dueling.worst,
        explore.checked,
        explore.worst,
        dueling.kinks + explore.kinks,
        dueling.tiny + explore.tiny,
        start.elapsed()
    ))
}

fn tabular_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    let mut mdps = 0;
    for i in 0..20 {
        let acyclic = i % 2 == 0;
        let mdp = common::random_mdp(&mut rng, acyclic);
        let gamma = 0.9;
        let v = if acyclic {
            let (q, _) = value_iteration(&mdp, gamma, Backup::Max, 0.0, 1000).map_err(|e| e.to_string())?;
            state_values(&q)
        } else {
            value_iteration(&mdp, gamma, Backup::Max, 1e-12, 100_000).map_err(|e| format!("mdp {i}: {e}"))?;
            state_values(&finite_horizon_values(&mdp, gamma, 12, Backup::Max).map_err(|e| e.to_string())?)
        };
        for (s, value) in v.iter().enumerate() {
            let want = common::enumerate_paths(&mdp, s, gamma, 12);
            worst = worst.max((value - want).abs());
        }
        mdps += 1;
    }
    within(start.elapsed(), Duration::from_secs(10), "tabular oracle")?;
    if worst > 1e-9 {
        return Err(format!("max deviation {worst:.2e}"));
    }
    Ok(format!("{mdps} random MDPs, max deviation {worst:.1e}, {:.1?}", start.elapsed()))
}

fn formulas() -> Outcome {
    let pt = tau_per_timestep_from(0.3421, 63).map_err(|e| e.to_string())?;
    if (pt - 0.0066).abs() > 5e-4 {
        return Err(format!("per-timestep tau {pt}"));
    }
    let forward = tau_from_per_timestep(pt, 63).map_err(|e| e.to_string())?;
    if (forward - 0.3421).abs() > 1e-12 {
        return Err(format!("round trip gave {forward}"));
    }
    let split = exploration_batch_split(128, 32).map_err(|e| e.to_string())?;
    if split != 4 {
        return Err(format!("batch split {split}"));
    }
    for (env, ret) in [("sparse_mountaincar", 1.0), ("cartpole", 500.0), ("planar_lander", 200.0)] {
        let score = normalized_score(env, ret).map_err(|e| e.to_string())?;
        if score != 100.0 {
            return Err(format!("normalized_score({env}, {ret}) = {score}"));
        }
    }
    Ok(format!("tau per timestep {pt:.5}, split 4, scores 100/100/100"))
}

fn behavior_invariants() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let arch = DuelingArch::new(8, vec![256, 256], 4).unwrap();
    let exploit: ExploitationNet<f32> = ExploitationNet::new(arch.clone(), 0.99, 7e-4, 10.0, &mut rng).unwrap();
    let earch = ExplorationArch::new(arch, 12, vec![256, 256]).unwrap();
    let explore: ExplorationNet<f32> =
        ExplorationNet::new(earch, 0.9724, 0.99, 0.00851, 10.0, Backup::Max, &mut rng).unwrap();
    let e = explore.fingerprint_embed(&exploit.online).unwrap();
    for i in 0..10_000 {
        let s = EnvObservation((0..8).map(|_| rng.random_range(-3.0..3.0)).collect());
        let q = exploit.q_values(&exploit.online, &s).unwrap();
        let d = explore.error_with_embedding(&s, &e).unwrap();
        if behavior_action(&q, &d, 0.0) != greedy_action(&q) {
            return Err(format!("mixture 0 differs from exploitation greedy at state {i}"));
        }
        if behavior_action(&q, &d, 1.0) != greedy_action(&d) {
            return Err(format!("mixture 1 differs from exploration greedy at state {i}"));
        }
    }

    let small = DuelingArch::new(8, vec![32, 32], 4).unwrap();
    let net: ExplorationNet<f32> = ExplorationNet::new(
        ExplorationArch::new(small.clone(), 4, vec![32, 32]).unwrap(),
        0.9724,
        0.99,
        1e-3,
        10.0,
        Backup::Max,
        &mut rng,
    )
    .unwrap();
    let mut pairs = 0;
    while pairs < 100_000 {
        let exploit_param_sets: Vec<ParameterVector<f32>> = (0..4)
            .map(|_| {
                let mut p: ParameterVector<f32> = small.mlp.init_params(&mut rng);
                let scale = rng.random_range(0.1f32..10.0);
                p.0.iter_mut().for_each(|v| *v *= scale);
                p
            })
            .collect();
        let ts: Vec<Transition> = (0..25).map(|_| common::random_transition(&mut rng, 8, 4)).collect();
        let refs: Vec<&Transition> = ts.iter().collect();
        let snaps: Vec<&ParameterVector<f32>> = exploit_param_sets.iter().collect();
        let pt = net
            .pair_targets(&PairBatch::new(&refs, &snaps).unwrap())
            .map_err(|e| e.to_string())?;
        for (r, y) in pt.rewards.iter().zip(&pt.targets) {
            if r.is_nan() || *r < 0.0 || y.is_nan() || y < r {
                return Err(format!("reward {r} target {y}"));
            }
        }
        pairs += pt.rewards.len();
    }
    for _ in 0..100_000 {
        let r: f64 = rng.random_range(0.0..5.0);
        let online: Vec<f64> = (0..4).map(|_| rng.random_range(-5.0..5.0)).collect();
        let target: Vec<f64> = (0..4).map(|_| rng.random_range(-5.0..5.0)).collect();
        let y = max_update_target(r, 0.9724, rng.random_bool(0.2), &online, &target, Backup::Max);
        if y < r {
            return Err(format!("target {y} below reward {r}"));
        }
    }
    Ok(format!("10^4 states at both mixture bounds, {pairs} fuzzed reward/target pairs, 10^5 random targets"))
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = configs_dir().join("cartpole_see.json");
    let mut csvs = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        let start = Instant::now();
        let code = cli::run([
            "see",
            "train",
            "--config",
            config.to_str().unwrap(),
            "--seed",
            "0",
            "--total-steps",
            "20000",
            "--out",
            out.to_str().unwrap(),
        ]);
        if code != 0 {
            return Err(format!("train exited with {code}"));
        }
        within(start.elapsed(), Duration::from_secs(300), "a 20k-step run")?;
        progress(format!("run {run}: {:.1?}", start.elapsed()));
        csvs.push(std::fs::read(out.join("seed_0.csv")).map_err(|e| e.to_string())?);
    }
    if csvs[0] != csvs[1] {
        return Err("metrics CSVs differ".into());
    }
    Ok(format!("two 20k-step CartPole runs, identical {}-byte CSVs", csvs[0].len()))
}

/// First step at which the evaluation return satisfies `hit`, if any.
fn first_hit(cfg: &RunConfig, hit: impl Fn(f64) -> bool) -> Result<Option<u64>, String> {
    let mut found = None;
    train(cfg, |r| {
        if r.metric == Metric::EvalReturn && hit(r.value) {
            found = Some(r.step);
            return ControlFlow::Break(());
        }
        ControlFlow::Continue(())
    })
    .map_err(|e| e.to_string())?;
    Ok(found)
}

fn learning_cartpole() -> Outcome {
    let mut summary = Vec::new();
    let mut ok = true;
    let mut mean_steps = Vec::new();
    for (name, file) in [("see", "cartpole_see.json"), ("eps_greedy", "cartpole_eps_greedy.json")] {
        let mut hits = Vec::new();
        for seed in 0..SEEDS {
            let cfg = load(file, seed);
            let start = Instant::now();
            let hit = first_hit(&cfg, |v| v >= 400.0)?;
            progress(format!("cartpole {name} seed {seed}: {hit:?} ({:.0?})", start.elapsed()));
            hits.push(hit);
        }
        let reached: Vec<u64> = hits.iter().flatten().copied().collect();
        ok &= reached.len() >= 3;
        let mean = if reached.is_empty() {
            f64::NAN
        } else {
            reached.iter().sum::<u64>() as f64 / reached.len() as f64
        };
        mean_steps.push(mean);
        summary.push(format!("{name} {}/{SEEDS} reached 400 (mean first step {mean:.0})", reached.len()));
    }
    summary.push(format!(
        "soft report: SEE {} the baseline in mean steps to 400",
        if mean_steps[0] < mean_steps[1] { "ahead of" } else { "not ahead of" }
    ));
    let text = summary.join("; ");
    if ok {
        Ok(text)
    } else {
        Err(text)
    }
}

fn learning_mountaincar() -> Outcome {
    let mut reached_goal = 0;
    let mut positive_final = 0;
    for seed in 0..SEEDS {
        let cfg = load("sparse_mountaincar_see.json", seed);
        let start = Instant::now();
        let mut first_goal = None;
        let mut last_eval = f64::NAN;
        train(&cfg, |r| {
            match r.metric {
                Metric::TrainReturn if r.value > 0.0 && first_goal.is_none() => first_goal = Some(r.step),
                Metric::EvalReturn => last_eval = r.value,
                _ => {}
            }
            ControlFlow::Continue(())
        })
        .map_err(|e| e.to_string())?;
        progress(format!(
            "mountaincar seed {seed}: first goal {first_goal:?}, final eval {last_eval} ({:.0?})",
            start.elapsed()
        ));
        reached_goal += usize::from(first_goal.is_some());
        positive_final += usize::from(last_eval > 0.0);
    }
    let text = format!("goal reached in {reached_goal}/{SEEDS} seeds, final eval > 0 in {positive_final}/{SEEDS}");
    if reached_goal >= 3 && positive_final >= 2 {
        Ok(text)
    } else {
        Err(text)
    }
}

fn learning_lander() -> Outcome {
    let mut reached = 0;
    for seed in 0..SEEDS {
        let cfg = load("planar_lander_see.json", seed);
        let start = Instant::now();
        let hit = first_hit(&cfg, |v| v > 0.0)?;
        progress(format!("lander seed {seed}: {hit:?} ({:.0?})", start.elapsed()));
        reached += usize::from(hit.is_some());
    }
    let text = format!("positive mean eval return within 300k steps in {reached}/{SEEDS} seeds");
    if reached >= 3 {
        Ok(text)
    } else {
        Err(text)
    }
}

fn ablation_harness() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = configs_dir().join("planar_lander_see.json");
    let start = Instant::now();
    let code = cli::run([
        "see",
        "ablate",
        "--config",
        config.to_str().unwrap(),
        "--seeds",
        "1",
        "--total-steps",
        "50000",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    if code != 0 {
        return Err(format!("ablate exited with {code}"));
    }
    let mut finals = Vec::new();
    for label in ["see", "no_conditioning", "no_max_update", "no_mixing"] {
        let path = dir.path().join(label).join("aggregate.csv");
        let text = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
        let rows = parse_aggregate(&text).map_err(|e| e.to_string())?;
        let evals: Vec<_> = rows.iter().filter(|r| r.metric == "eval_return").collect();
        let steps: Vec<u64> = evals.iter().map(|r| r.step).collect();
        let expected: Vec<u64> = (1..=25).map(|i| i * 2000).collect();
        if steps != expected {
            return Err(format!("{label}: evaluation steps {steps:?}"));
        }
        let sidecar = ConfigFile::load(&dir.path().join(label).join("seed_0.config.json")).map_err(|e| e.to_string())?;
        if sidecar.ablation.label() != label {
            return Err(format!("{label}: sidecar says {}", sidecar.ablation.label()));
        }
        finals.push(format!("{label} {:.1}", evals.last().unwrap().mean));
    }
    Ok(format!("4 variants x 50k steps, final eval return: {} ({:.0?})", finals.join(", "), start.elapsed()))
}

fn main() {
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let criteria: [Criterion; 9] = [
        ("gradient correctness", gradient_correctness),
        ("max-bellman tabular oracle", tabular_oracle),
        ("formula reproduction", formulas),
        ("behavior-policy invariants", behavior_invariants),
        ("determinism", determinism),
        ("learning, dense unshaped reward (cartpole)", learning_cartpole),
        ("learning, sparse reward (sparse_mountaincar)", learning_mountaincar),
        ("learning, shaped reward (planar_lander)", learning_lander),
        ("ablation harness", ablation_harness),
    ];
    let mut failed = 0;
    let mut ran = 0;
    for (name, check) in criteria {
        if !filters.is_empty() && !filters.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        ran += 1;
        println!("criterion: {name}");
        let _ = std::io::stdout().flush();
        let start = Instant::now();
        match check() {
            Ok(detail) => println!("PASS {name}: {detail} [{:.1?}]", start.elapsed()),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail} [{:.1?}]", start.elapsed());
            }
        }
        let _ = std::io::stdout().flush();
    }
    println!("acceptance: {} of {ran} criteria passed", ran - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
