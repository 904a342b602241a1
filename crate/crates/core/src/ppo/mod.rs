//! Proximal policy optimization with three symmetry treatments sharing one
//! rollout and update engine.
//!
//! * [`Algo::Ppo`]: unconstrained MLP actor and critic.
//! * [`Algo::PpoAug`]: the same networks, a near-zero initial policy mean,
//!   and every sampled minibatch extended by its images under the group.
//! * [`Algo::PpoEqic`]: equivariant actor and invariant critic.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::PpoError;

mod agent;
mod buffer;
mod gradcheck;
mod loss;
mod policy;
mod rollout;
mod train;

pub use agent::{make_agent, Agent, AgentState};
pub use buffer::{
    augment_minibatch, compute_gae, transform_batch, Batch, EpisodeSummary, RolloutBuffer,
    Transition,
};
pub use gradcheck::{gradient_checks, random_batch, GradientCheck, FD_STEP, GRADIENT_TOLERANCE};
pub use loss::{per_sample_losses, LossWeights, PerSampleLosses, UpdateReport};
pub use policy::{
    policy_equivariance_error, value_invariance_error, Critic, GaussianPolicy, LOG_2PI,
};
pub use rollout::{
    collect_rollout, evaluate_paired, mirror_element, run_episode, EpisodeTrace, EvalModes, Worker,
};
pub use train::{IterationStats, Trainer};

/// Which variant to train.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algo {
    Ppo,
    PpoAug,
    PpoEqic,
}

impl Algo {
    pub const ALL: [Algo; 3] = [Algo::Ppo, Algo::PpoAug, Algo::PpoEqic];

    pub fn as_str(self) -> &'static str {
        match self {
            Algo::Ppo => "ppo",
            Algo::PpoAug => "ppoaug",
            Algo::PpoEqic => "ppoeqic",
        }
    }
}

impl fmt::Display for Algo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algo {
    type Err = PpoError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ppo" => Ok(Algo::Ppo),
            "ppoaug" => Ok(Algo::PpoAug),
            "ppoeqic" => Ok(Algo::PpoEqic),
            other => Err(PpoError::UnknownAlgo(other.to_string())),
        }
    }
}

/// Optimization hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoConfig {
    pub gamma: f64,
    pub lambda: f64,
    pub clip: f64,
    pub epochs: usize,
    pub minibatch_size: usize,
    pub lr: f64,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub num_envs: usize,
    pub steps_per_env: usize,
    pub normalize_advantages: bool,
    /// Global gradient-norm bound per minibatch step; `inf` disables it.
    pub max_grad_norm: f64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            lambda: 0.95,
            clip: 0.2,
            epochs: 4,
            minibatch_size: 256,
            lr: 3e-4,
            entropy_coef: 0.0,
            value_coef: 0.5,
            num_envs: 16,
            steps_per_env: 512,
            normalize_advantages: true,
            max_grad_norm: 0.5,
        }
    }
}

impl PpoConfig {
    pub fn steps_per_iteration(&self) -> usize {
        self.num_envs * self.steps_per_env
    }
}

/// Network sizes and initialization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetConfig {
    /// Hidden widths of the unconstrained MLPs.
    pub mlp_hidden: Vec<usize>,
    /// Copies of the regular representation per equivariant hidden layer.
    pub emlp_hidden: Vec<usize>,
    pub init_scale: f64,
    pub init_log_std: f64,
    /// Factor applied to the policy output layer for `ppoaug`.
    pub aug_output_scale: f64,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            mlp_hidden: vec![64, 64],
            emlp_hidden: vec![32, 32],
            init_scale: 1.0,
            init_log_std: -0.5,
            aug_output_scale: 0.01,
        }
    }
}
