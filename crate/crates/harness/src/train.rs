//! `train`: one independent run per seed, each writing into its own
//! directory, followed by a paired evaluation of the final policy.
//!
//! Layout: `<out>/<env>_<algo>/config.toml`, `summary.csv`, and per seed
//! `seed_<N>/{config.toml, train.csv, eval.csv, summary.csv, final.json,
//! checkpoints/iter_<K>.json, run.log}`. Only `run.log` carries wall-clock
//! time; every other byte is a function of the config and the seed.

use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use symmrl_core::exec::Execution;
use symmrl_core::ppo::{make_agent, EvalModes, IterationStats, Trainer};
use symmrl_core::rng::{stream, STREAM_INIT};

use crate::checkpoint::Checkpoint;
use crate::config::RunConfig;
use crate::error::{HarnessError, Result};
use crate::eval::{evaluate_policy, summarize, EvalOptions};
use crate::report::{
    write_eval_csv, write_summary_csv, write_train_csv, Aggregate, Header, SplitSummary, SummaryRow, TrainingOutcome,
};

#[derive(Debug, Clone)]
pub struct SeedResult {
    pub seed: u64,
    pub dir: PathBuf,
    pub rows: Vec<IterationStats>,
    pub outcome: TrainingOutcome,
    pub nominal: SplitSummary,
    pub ood: Option<SplitSummary>,
}

#[derive(Debug, Clone)]
pub struct TrainResult {
    pub dir: PathBuf,
    pub seeds: Vec<SeedResult>,
}

struct RunLog(File, PathBuf);

impl RunLog {
    fn line(&mut self, msg: &str) -> Result<()> {
        let t = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0);
        writeln!(self.0, "[{t:.3}] {msg}").map_err(|e| HarnessError::io(&self.1, e))
    }
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| HarnessError::io(path, e))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| HarnessError::io(path, e))
}

/// Runs every seed (concurrently on the rayon pool) and writes the
/// cross-seed summary.
pub fn cmd_train(cfg: &RunConfig) -> Result<TrainResult> {
    cfg.validate()?;
    let dir = cfg.experiment_dir();
    create_dir(&dir)?;
    write(&dir.join("config.toml"), &cfg.to_toml())?;
    let seeds: Vec<SeedResult> = cfg.seeds.par_iter().map(|&seed| run_seed(cfg, seed)).collect::<Result<_>>()?;

    let mut rows: Vec<SummaryRow> = seeds.iter().map(|s| seed_row(cfg, s)).collect::<Result<_>>()?;
    if seeds.len() > 1 {
        let nominal: Vec<SplitSummary> = seeds.iter().map(|s| s.nominal.clone()).collect();
        let ood: Vec<SplitSummary> = seeds.iter().filter_map(|s| s.ood.clone()).collect();
        rows.push(SummaryRow {
            label: "all".into(),
            episodes_per_mode: cfg.eval.episodes,
            nominal: Aggregate::of(&nominal)?,
            ood: (!ood.is_empty()).then(|| Aggregate::of(&ood)).transpose()?,
            training: None,
        });
    }
    let header = Header {
        kind: "summary",
        algo: cfg.algo,
        env: cfg.env.name().into(),
        seed: None,
        config_hash: cfg.hash(),
    };
    write_summary_csv(&dir.join("summary.csv"), &header, &rows)?;
    Ok(TrainResult { dir, seeds })
}

fn seed_row(cfg: &RunConfig, s: &SeedResult) -> Result<SummaryRow> {
    Ok(SummaryRow {
        label: format!("seed_{}", s.seed),
        episodes_per_mode: cfg.eval.episodes,
        nominal: Aggregate::of(std::slice::from_ref(&s.nominal))?,
        ood: s.ood.as_ref().map(|o| Aggregate::of(std::slice::from_ref(o))).transpose()?,
        training: Some(s.outcome),
    })
}

/// The config restricted to one seed; its snapshot reruns exactly this job.
pub fn seed_config(cfg: &RunConfig, seed: u64) -> RunConfig {
    RunConfig {
        seeds: vec![seed],
        ..cfg.clone()
    }
}

fn run_seed(cfg: &RunConfig, seed: u64) -> Result<SeedResult> {
    let job = seed_config(cfg, seed);
    let hash = job.hash();
    let dir = cfg.experiment_dir().join(format!("seed_{seed}"));
    let ck_dir = dir.join("checkpoints");
    create_dir(&ck_dir)?;
    write(&dir.join("config.toml"), &job.to_toml())?;
    let log_path = dir.join("run.log");
    let mut log = RunLog(File::create(&log_path).map_err(|e| HarnessError::io(&log_path, e))?, log_path);
    let context = |what: String| format!("{}/{} seed {seed}: {what}", cfg.env.name(), cfg.algo);
    let header = |kind| Header {
        kind,
        algo: cfg.algo,
        env: cfg.env.name().into(),
        seed: Some(seed),
        config_hash: hash.clone(),
    };

    let env = cfg.env.build_restricted(cfg.train_mode.restriction());
    let agent = make_agent(cfg.algo, env.symmetry(), &cfg.net, &cfg.ppo, &mut stream(seed, STREAM_INIT))
        .map_err(|source| HarnessError::Training {
            context: context("building agent".into()),
            source,
        })?;
    let mut trainer = Trainer::new(agent, env, seed, Execution::default());
    let iterations = cfg.iterations();
    log.line(&format!("start: {iterations} iterations, config_hash {hash}"))?;

    let checkpoint = |t: &Trainer| Checkpoint::new(&t.agent, cfg.env.clone(), cfg.train_mode, seed, t.env_steps(), hash.clone());
    let mut rows = Vec::with_capacity(iterations);
    let mut failure = None;
    for it in 1..=iterations {
        match trainer.iterate() {
            Ok(stats) => rows.push(stats),
            Err(source) => {
                failure = Some(HarnessError::Training {
                    context: context(format!("iteration {it}")),
                    source,
                });
                break;
            }
        }
        if cfg.save_interval > 0 && it % cfg.save_interval == 0 {
            checkpoint(&trainer).save(&ck_dir.join(format!("iter_{it:06}.json")))?;
        }
        if it % 10 == 0 || it == iterations {
            let r = rows.last().expect("row pushed above");
            log.line(&format!("iteration {it}: env_steps {} return {:.4}", r.env_steps, r.return_mean))?;
        }
    }
    // Keep the partial report of a failed run for diagnosis.
    write_train_csv(&dir.join("train.csv"), &header("train"), &rows)?;
    if let Some(err) = failure {
        log.line(&format!("failed: {err}"))?;
        return Err(err);
    }
    checkpoint(&trainer).save(&dir.join("final.json"))?;

    let opts = EvalOptions {
        episodes: cfg.eval.episodes,
        modes: EvalModes::Both,
        ood: cfg.eval.ood,
        deterministic: cfg.eval.deterministic,
    };
    let traces = evaluate_policy(&trainer.agent.policy, &cfg.env, &opts, seed)?;
    let (sets, nominal, ood) = summarize(&traces)?;
    write_eval_csv(&dir.join("eval.csv"), &header("eval"), &sets)?;
    let result = SeedResult {
        seed,
        dir: dir.clone(),
        outcome: TrainingOutcome::of(&rows, cfg.return_threshold),
        rows,
        nominal,
        ood,
    };
    write_summary_csv(&dir.join("summary.csv"), &header("summary"), &[seed_row(cfg, &result)?])?;
    log.line("done")?;
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use symmrl_core::envs::{EnvSpec, MirrorGoalParams};
    use symmrl_core::ppo::{Algo, NetConfig, PpoConfig};

    fn small(out: &Path, algo: Algo, steps: usize) -> RunConfig {
        let env = EnvSpec::MirrorGoal(MirrorGoalParams {
            horizon: 40,
            ..MirrorGoalParams::default()
        });
        let mut cfg = RunConfig::new(algo, env);
        cfg.net = NetConfig {
            mlp_hidden: vec![8],
            emlp_hidden: vec![4],
            ..NetConfig::default()
        };
        cfg.ppo = PpoConfig {
            num_envs: 2,
            steps_per_env: 32,
            minibatch_size: 32,
            epochs: 1,
            ..PpoConfig::default()
        };
        cfg.total_env_steps = steps;
        cfg.seeds = vec![0, 1];
        cfg.eval.episodes = 3;
        cfg.eval.ood = true;
        cfg.save_interval = 2;
        cfg.return_threshold = Some(-1e9);
        cfg.out_dir = out.to_path_buf();
        cfg
    }

    #[test]
    fn zero_steps_writes_only_the_initial_evaluation() {
        let dir = tempfile::tempdir().unwrap();
        let res = cmd_train(&small(dir.path(), Algo::PpoEqic, 0)).unwrap();
        let seed = &res.seeds[0];
        assert!(seed.rows.is_empty());
        assert_eq!(seed.outcome.samples_to_threshold, None);
        let train = fs::read_to_string(seed.dir.join("train.csv")).unwrap();
        assert_eq!(train.lines().count(), 2);
        assert!(seed.dir.join("eval.csv").exists() && seed.dir.join("final.json").exists());
        assert_eq!(fs::read_dir(seed.dir.join("checkpoints")).unwrap().count(), 0);
    }

    #[test]
    fn artifacts_carry_schema_and_hash_and_checkpoints_follow_interval() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small(dir.path(), Algo::Ppo, 4 * 64 + 10);
        let res = cmd_train(&cfg).unwrap();
        let seed = &res.seeds[1];
        assert_eq!(seed.rows.len(), 4);
        // Iterations in which no episode finished carry no return yet.
        let first_finite = seed.rows.iter().find(|r| r.return_mean.is_finite()).map(|r| r.env_steps);
        assert!(first_finite.is_some());
        assert_eq!(seed.outcome.samples_to_threshold, first_finite);
        let hash = seed_config(&cfg, 1).hash();
        for f in ["train.csv", "eval.csv", "summary.csv"] {
            let first = fs::read_to_string(seed.dir.join(f)).unwrap().lines().next().unwrap().to_string();
            assert!(first.starts_with("# schema=1 "), "{f}: {first}");
            assert!(first.ends_with(&format!("config_hash={hash}")), "{f}: {first}");
        }
        let mut cks: Vec<String> = fs::read_dir(seed.dir.join("checkpoints"))
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .collect();
        cks.sort();
        assert_eq!(cks, ["iter_000002.json", "iter_000004.json"]);
        let ck = Checkpoint::load(&seed.dir.join("final.json")).unwrap();
        assert_eq!((ck.iteration(), ck.env_steps, ck.config_hash.as_str()), (4, 256, hash.as_str()));
        // The per-seed snapshot reproduces the per-seed hash.
        let snap = RunConfig::load(&seed.dir.join("config.toml"), &Default::default()).unwrap();
        assert_eq!(snap.hash(), hash);
        let summary = fs::read_to_string(res.dir.join("summary.csv")).unwrap();
        assert_eq!(summary.lines().count(), 2 + 3);
    }
}
