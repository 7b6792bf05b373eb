//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 for usage or configuration errors, 2 when
//! training diverges.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::ops::ControlFlow;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::config::{score_weight, Ablation, Algorithm, ConfigFile, RunConfig};
use crate::curves::{aggregate, parse_curve, write_aggregate, CurveWriter};
use crate::error::{Error, Result};
use crate::snapshot::{Snapshot, SnapshotKind};
use crate::trainer::{eval_seed, evaluate, train, Metric, TrainOutcome};

/// Metrics summarized across seeds.
pub const AGGREGATED: [Metric; 2] = [Metric::EvalReturn, Metric::EvalScore];

#[derive(Debug, Parser)]
#[command(name = "see", about = "Error-seeking exploration experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train one run and write its curve, resolved config and parameters.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the seed in the config.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        #[arg(long)]
        total_steps: Option<u64>,
    },
    /// Train several seeds and write their mean curve.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seeds: u64,
        #[arg(long, default_value_t = 0)]
        first_seed: u64,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        #[arg(long)]
        total_steps: Option<u64>,
    },
    /// Sweep the full method and its three ablations, one directory each.
    Ablate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 1)]
        seeds: u64,
        #[arg(long, default_value_t = 0)]
        first_seed: u64,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        #[arg(long)]
        total_steps: Option<u64>,
    },
    /// Greedy evaluation of a saved exploitation snapshot.
    Evaluate {
        #[arg(long)]
        snapshot: PathBuf,
        #[arg(long, default_value_t = 10)]
        episodes: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_divergence() {
                2
            } else {
                1
            }
        }
    }
}

fn load_config(path: &Path, total_steps: Option<u64>) -> Result<ConfigFile> {
    let mut file = ConfigFile::load(path)?;
    if let Some(t) = total_steps {
        file.total_steps = t;
    }
    Ok(file)
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Train {
            config,
            seed,
            out,
            total_steps,
        } => {
            let mut file = load_config(&config, total_steps)?;
            if let Some(s) = seed {
                file.seed = s;
            }
            let cfg = file.resolve()?;
            std::fs::create_dir_all(&out)?;
            let outcome = run_seed(&cfg, &out)?;
            println!(
                "seed {} finished after {} steps; curve in {}",
                cfg.seed,
                outcome.steps,
                curve_path(&out, cfg.seed).display()
            );
            Ok(())
        }
        Command::Sweep {
            config,
            seeds,
            first_seed,
            out,
            total_steps,
        } => {
            let file = load_config(&config, total_steps)?;
            sweep(&file, first_seed, seeds, &out)?;
            println!("aggregate in {}", out.join("aggregate.csv").display());
            Ok(())
        }
        Command::Ablate {
            config,
            seeds,
            first_seed,
            out,
            total_steps,
        } => {
            let file = load_config(&config, total_steps)?;
            if file.algorithm != Algorithm::See {
                return Err(Error::config("ablate needs a see config"));
            }
            for ablation in Ablation::ALL {
                let mut variant = file.clone();
                variant.ablation = ablation;
                let dir = out.join(ablation.label());
                sweep(&variant, first_seed, seeds, &dir)?;
                println!("{}: {}", ablation.label(), dir.join("aggregate.csv").display());
            }
            Ok(())
        }
        Command::Evaluate {
            snapshot,
            episodes,
            seed,
        } => {
            let snap = Snapshot::load(&snapshot)?;
            if snap.kind != SnapshotKind::Exploit {
                return Err(Error::usage("evaluate needs an exploitation snapshot"));
            }
            if episodes == 0 {
                return Err(Error::usage("episodes must be positive"));
            }
            let arch = snap.exploit_arch()?;
            let seeds: Vec<u64> = (0..episodes).map(|i| eval_seed(seed, 0, i)).collect();
            let eval = evaluate(&arch, &snap.params, snap.env, &seeds)?;
            println!("env {}", snap.env);
            println!("mean_return {}", eval.mean_return);
            println!("score {}", score_weight(snap.env) * eval.mean_return);
            for r in &eval.returns {
                println!("return {r}");
            }
            Ok(())
        }
    }
}

pub fn curve_path(dir: &Path, seed: u64) -> PathBuf {
    dir.join(format!("seed_{seed}.csv"))
}

/// Trains `cfg` and writes `seed_<N>.csv`, `seed_<N>.config.json` and the
/// final parameters (`seed_<N>.exploit.bin`, plus `seed_<N>.explore.bin` for
/// SEE) into `dir`.
pub fn run_seed(cfg: &RunConfig, dir: &Path) -> Result<TrainOutcome> {
    let seed = cfg.seed;
    std::fs::write(dir.join(format!("seed_{seed}.config.json")), cfg.to_json())?;
    let mut writer = CurveWriter::new(BufWriter::new(File::create(curve_path(dir, seed))?), seed)?;
    let mut failure = None;
    let outcome = train(cfg, |r| match writer.write(r) {
        Ok(()) => ControlFlow::Continue(()),
        Err(e) => {
            failure = Some(e);
            ControlFlow::Break(())
        }
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    writer.finish()?.flush()?;
    Snapshot::exploit(cfg.env, &outcome.exploit.arch, &outcome.exploit.online)
        .save(&dir.join(format!("seed_{seed}.exploit.bin")))?;
    if let Some(net) = &outcome.explore {
        Snapshot::explore(cfg.env, &net.arch, &net.online)
            .save(&dir.join(format!("seed_{seed}.explore.bin")))?;
    }
    Ok(outcome)
}

/// Runs seeds `first..first + count` into `dir` and writes `aggregate.csv`.
pub fn sweep(file: &ConfigFile, first: u64, count: u64, dir: &Path) -> Result<()> {
    if count == 0 {
        return Err(Error::usage("need at least one seed"));
    }
    std::fs::create_dir_all(dir)?;
    let mut runs = Vec::new();
    for seed in first..first + count {
        let mut f = file.clone();
        f.seed = seed;
        let cfg = f.resolve()?;
        run_seed(&cfg, dir)?;
        let text = std::fs::read_to_string(curve_path(dir, seed))?;
        runs.push(parse_curve(&text)?);
    }
    let rows = aggregate(&runs, &AGGREGATED);
    let mut out = BufWriter::new(File::create(dir.join("aggregate.csv"))?);
    write_aggregate(&mut out, &rows)?;
    out.flush()?;
    Ok(())
}
