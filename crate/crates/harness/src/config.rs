//! Run configuration: one TOML file, every field defaulted except `algo`
//! and `env`, which may also come from the command line.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use symmrl_core::envs::{EnvSpec, Mode};
use symmrl_core::ppo::{Algo, NetConfig, PpoConfig};

use crate::error::{HarnessError, Result};

/// Which initial modes training may draw.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainMode {
    #[default]
    Both,
    Right,
    Left,
}

impl TrainMode {
    pub fn restriction(self) -> Option<Mode> {
        match self {
            TrainMode::Both => None,
            TrainMode::Right => Some(Mode::Right),
            TrainMode::Left => Some(Mode::Left),
        }
    }
}

/// Evaluation run after training (also used as the `eval` defaults).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Episodes per mode.
    pub episodes: usize,
    /// Also evaluate on the distribution-shifted variant of the env.
    pub ood: bool,
    /// Act with the policy mean instead of sampling.
    pub deterministic: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            episodes: 200,
            ood: false,
            deterministic: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub algo: Algo,
    /// `name` selects the environment; other keys override its parameters.
    pub env: EnvSpec,
    #[serde(default)]
    pub net: NetConfig,
    #[serde(default)]
    pub ppo: PpoConfig,
    /// Training budget; rounded down to whole iterations.
    #[serde(default = "default_total_env_steps")]
    pub total_env_steps: usize,
    /// Root seeds, one independent run each.
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub train_mode: TrainMode,
    #[serde(default)]
    pub eval: EvalConfig,
    /// Checkpoint every this many iterations; 0 keeps only the final one.
    #[serde(default)]
    pub save_interval: usize,
    /// Training return that defines samples-to-threshold in the summary.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub return_threshold: Option<f64>,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
}

fn default_total_env_steps() -> usize {
    1_000_000
}

fn default_seeds() -> Vec<u64> {
    vec![0, 1, 2]
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("runs")
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub algo: Option<Algo>,
    pub env: Option<String>,
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
}

impl RunConfig {
    /// Defaults for everything except the algorithm and environment.
    pub fn new(algo: Algo, env: EnvSpec) -> Self {
        Self {
            algo,
            env,
            net: NetConfig::default(),
            ppo: PpoConfig::default(),
            total_env_steps: default_total_env_steps(),
            seeds: default_seeds(),
            train_mode: TrainMode::default(),
            eval: EvalConfig::default(),
            save_interval: 0,
            return_threshold: None,
            out_dir: default_out_dir(),
        }
    }

    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::parse(&text, path, overrides)
    }

    /// Parses TOML text, applies `overrides` and validates.
    pub fn parse(text: &str, path: &Path, overrides: &Overrides) -> Result<Self> {
        let parse_err = |message: String| HarnessError::ConfigParse {
            path: path.to_path_buf(),
            message,
        };
        let mut table: toml::Table = toml::from_str(text).map_err(|e| parse_err(e.to_string()))?;
        if let Some(algo) = overrides.algo {
            table.insert("algo".into(), toml::Value::String(algo.as_str().into()));
        }
        if let Some(name) = &overrides.env {
            EnvSpec::from_name(name).map_err(|e| HarnessError::config("env.name", e.to_string()))?;
            // Parameter overrides only make sense for the environment they were written for.
            let same = table
                .get("env")
                .and_then(|e| e.get("name"))
                .and_then(|n| n.as_str())
                == Some(name.as_str());
            if !same {
                let mut env = toml::Table::new();
                env.insert("name".into(), toml::Value::String(name.clone()));
                table.insert("env".into(), toml::Value::Table(env));
            }
        }
        for key in ["algo", "env"] {
            if !table.contains_key(key) {
                return Err(HarnessError::config(key, format!("required (set it in the file or pass --{key})")));
            }
        }
        let mut cfg: RunConfig = table.try_into().map_err(|e: toml::de::Error| parse_err(e.to_string()))?;
        if let Some(seed) = overrides.seed {
            cfg.seeds = vec![seed];
        }
        if let Some(out) = &overrides.out_dir {
            cfg.out_dir = out.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, reason: &str| Err(HarnessError::config(field, reason));
        let p = &self.ppo;
        let pos = |v: f64| v.is_finite() && v > 0.0;
        let nonneg = |v: f64| v.is_finite() && v >= 0.0;
        if !(p.gamma > 0.0 && p.gamma <= 1.0) {
            return bad("ppo.gamma", "must lie in (0, 1]");
        }
        if !(0.0..=1.0).contains(&p.lambda) {
            return bad("ppo.lambda", "must lie in [0, 1]");
        }
        if !pos(p.clip) {
            return bad("ppo.clip", "must be positive and finite");
        }
        if p.epochs == 0 {
            return bad("ppo.epochs", "must be at least 1");
        }
        if p.minibatch_size == 0 {
            return bad("ppo.minibatch_size", "must be at least 1");
        }
        if !pos(p.lr) {
            return bad("ppo.lr", "must be positive and finite");
        }
        if !nonneg(p.entropy_coef) {
            return bad("ppo.entropy_coef", "must be non-negative and finite");
        }
        if !nonneg(p.value_coef) {
            return bad("ppo.value_coef", "must be non-negative and finite");
        }
        if p.num_envs == 0 {
            return bad("ppo.num_envs", "must be at least 1");
        }
        if p.steps_per_env == 0 {
            return bad("ppo.steps_per_env", "must be at least 1");
        }
        if p.max_grad_norm.is_nan() || p.max_grad_norm <= 0.0 {
            return bad("ppo.max_grad_norm", "must be positive (inf disables clipping)");
        }
        let n = &self.net;
        if n.mlp_hidden.is_empty() || n.mlp_hidden.contains(&0) {
            return bad("net.mlp_hidden", "needs at least one layer, all widths positive");
        }
        if n.emlp_hidden.is_empty() || n.emlp_hidden.contains(&0) {
            return bad("net.emlp_hidden", "needs at least one layer, all multiplicities positive");
        }
        if !pos(n.init_scale) {
            return bad("net.init_scale", "must be positive and finite");
        }
        if !n.init_log_std.is_finite() {
            return bad("net.init_log_std", "must be finite");
        }
        if !pos(n.aug_output_scale) {
            return bad("net.aug_output_scale", "must be positive and finite");
        }
        if let Err((field, reason)) = self.env.validate() {
            return bad(&format!("env.{field}"), reason);
        }
        if self.seeds.is_empty() {
            return bad("seeds", "needs at least one seed");
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            return bad("seeds", "must not repeat");
        }
        if self.eval.episodes == 0 {
            return bad("eval.episodes", "must be at least 1");
        }
        if self.return_threshold.is_some_and(|t| !t.is_finite()) {
            return bad("return_threshold", "must be finite");
        }
        Ok(())
    }

    /// Whole iterations that fit in the step budget.
    pub fn iterations(&self) -> usize {
        self.total_env_steps / self.ppo.steps_per_iteration()
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run configs serialize to TOML")
    }

    /// SHA-256 of the canonical TOML form, ignoring `out_dir` so that the
    /// same experiment written to two places hashes identically.
    pub fn hash(&self) -> String {
        let canonical = RunConfig {
            out_dir: PathBuf::new(),
            ..self.clone()
        };
        let digest = Sha256::digest(canonical.to_toml().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// `<out_dir>/<env>_<algo>`.
    pub fn experiment_dir(&self) -> PathBuf {
        self.out_dir.join(format!("{}_{}", self.env.name(), self.algo))
    }
}
