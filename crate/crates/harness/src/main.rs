use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use symmrl::check::{cmd_check, Target};
use symmrl::error::{EXIT_OK, EXIT_RUNTIME, EXIT_VALIDATION};
use symmrl::eval::{cmd_eval, format_rows, EvalOptions};
use symmrl::plot::cmd_plot;
use symmrl::train::cmd_train;
use symmrl::{HarnessError, Overrides, RunConfig};
use symmrl_core::ppo::{Algo, EvalModes};

/// Symmetry-aware PPO experiments.
///
/// SYMMRL_THREADS caps the worker threads (default: all cores).
#[derive(Debug, Parser)]
#[command(name = "symmrl", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum AlgoArg {
    Ppo,
    Ppoaug,
    Ppoeqic,
}

impl From<AlgoArg> for Algo {
    fn from(a: AlgoArg) -> Self {
        match a {
            AlgoArg::Ppo => Algo::Ppo,
            AlgoArg::Ppoaug => Algo::PpoAug,
            AlgoArg::Ppoeqic => Algo::PpoEqic,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Left,
    Right,
    Both,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum TargetArg {
    Env,
    Network,
    Gradients,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train every configured seed, then evaluate the final policies.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Run only this seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum)]
        algo: Option<AlgoArg>,
        /// mirror_goal, toy_door or phase_hopper.
        #[arg(long)]
        env: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate checkpoints in both modes with paired random numbers.
    Eval {
        /// Repeat to aggregate seeds.
        #[arg(long, required = true)]
        ckpt: Vec<PathBuf>,
        /// Episodes per mode.
        #[arg(long, default_value_t = 200)]
        episodes: usize,
        #[arg(long, value_enum, default_value_t = ModeArg::Both)]
        mode: ModeArg,
        /// Also evaluate on the distribution-shifted environment.
        #[arg(long)]
        ood: bool,
        /// Act with the policy mean.
        #[arg(long)]
        deterministic: bool,
        /// Directory for eval CSVs and the summary.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Episodes per mode and split to save as trajectory CSVs (needs --out).
        #[arg(long, default_value_t = 0)]
        trajectories: usize,
    },
    /// Run a certificate suite; exits 2 if any check fails.
    Check {
        #[arg(value_enum)]
        target: TargetArg,
    },
    /// Learning curves from every train.csv under a directory.
    Plot {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn configure_threads() -> Result<(), HarnessError> {
    let Ok(raw) = std::env::var("SYMMRL_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| HarnessError::config("SYMMRL_THREADS", format!("expected a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| HarnessError::config("SYMMRL_THREADS", e.to_string()))
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    configure_threads()?;
    match cli.command {
        Command::Train { config, seed, algo, env, out } => {
            let overrides = Overrides {
                algo: algo.map(Algo::from),
                env,
                seed,
                out_dir: out,
            };
            let cfg = RunConfig::load(&config, &overrides)?;
            let res = cmd_train(&cfg)?;
            println!("{}", res.dir.display());
            for s in &res.seeds {
                let t = s.outcome;
                let f = |v: Option<f64>| v.map_or("-".into(), |x| format!("{x:.4}"));
                println!(
                    "seed {}: iterations {} env_steps {} highest_return {} final_return {} samples_to_threshold {} mean_sr {:.3}",
                    s.seed,
                    t.iterations,
                    t.env_steps,
                    f(t.highest_return),
                    f(t.final_return),
                    t.samples_to_threshold.map_or("-".into(), |v| v.to_string()),
                    s.nominal.mean_sr,
                );
            }
        }
        Command::Eval { ckpt, episodes, mode, ood, deterministic, out, trajectories } => {
            let opts = EvalOptions {
                episodes,
                modes: match mode {
                    ModeArg::Left => EvalModes::Left,
                    ModeArg::Right => EvalModes::Right,
                    ModeArg::Both => EvalModes::Both,
                },
                ood,
                deterministic,
            };
            if trajectories > 0 && out.is_none() {
                return Err(HarnessError::config("trajectories", "requires --out"));
            }
            let res = cmd_eval(&ckpt, &opts, out.as_deref(), trajectories)?;
            print!("{}", format_rows(&res.rows));
        }
        Command::Check { target } => {
            cmd_check(match target {
                TargetArg::Env => Target::Env,
                TargetArg::Network => Target::Network,
                TargetArg::Gradients => Target::Gradients,
            })?;
        }
        Command::Plot { input, out } => {
            for p in cmd_plot(&input, &out)? {
                println!("{}", p.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            let code = if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
            return ExitCode::from(code as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let code = e.exit_code();
            debug_assert!((EXIT_VALIDATION..=EXIT_RUNTIME).contains(&code));
            ExitCode::from(code as u8)
        }
    }
}
