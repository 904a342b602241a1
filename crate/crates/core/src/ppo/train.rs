use serde::{Deserialize, Serialize};

use super::agent::Agent;
use super::policy::{policy_equivariance_error, value_invariance_error};
use super::rollout::{collect_rollout, Worker};
use crate::envs::SymmetricEnv;
use crate::error::PpoError;
use crate::exec::Execution;
use crate::rng::{stream, worker_stream, SimRng, STREAM_CHECK, STREAM_UPDATER};

/// States sampled per iteration for the symmetry residuals.
const CHECK_SAMPLES: usize = 64;

/// One row of the training report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationStats {
    pub iteration: usize,
    /// Environment steps consumed so far.
    pub env_steps: usize,
    /// Mean return of episodes finished in this iteration; carried over
    /// from the previous iteration if none finished.
    pub return_mean: f64,
    pub return_std: f64,
    pub surrogate_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub policy_equiv_error: f64,
    pub value_inv_error: f64,
}

/// Alternates rollout collection and PPO updates for one seed.
#[derive(Debug)]
pub struct Trainer {
    pub agent: Agent,
    env: Box<dyn SymmetricEnv>,
    workers: Vec<Worker>,
    updater_rng: SimRng,
    check_rng: SimRng,
    exec: Execution,
    env_steps: usize,
    last_return: (f64, f64),
}

impl Trainer {
    /// Worker `w` draws from the root seed's worker stream `w`; the
    /// updater and the symmetry checks have their own streams.
    pub fn new(agent: Agent, env: Box<dyn SymmetricEnv>, root_seed: u64, exec: Execution) -> Self {
        let workers = (0..agent.config.num_envs)
            .map(|w| Worker::new(env.as_ref(), worker_stream(root_seed, w), None))
            .collect();
        Self {
            agent,
            env,
            workers,
            updater_rng: stream(root_seed, STREAM_UPDATER),
            check_rng: stream(root_seed, STREAM_CHECK),
            exec,
            env_steps: 0,
            last_return: (f64::NAN, f64::NAN),
        }
    }

    pub fn env(&self) -> &dyn SymmetricEnv {
        self.env.as_ref()
    }

    pub fn env_steps(&self) -> usize {
        self.env_steps
    }

    /// Symmetry residuals of the current actor and critic.
    pub fn symmetry_residuals(&mut self) -> Result<(f64, f64), PpoError> {
        let spec = self.env.symmetry();
        let pe = policy_equivariance_error(&self.agent.policy, spec, CHECK_SAMPLES, &mut self.check_rng)?;
        let ve = value_invariance_error(&self.agent.critic, spec, CHECK_SAMPLES, &mut self.check_rng)?;
        Ok((pe, ve))
    }

    /// Collects one rollout, updates the agent and reports.
    pub fn iterate(&mut self) -> Result<IterationStats, PpoError> {
        let cfg = self.agent.config.clone();
        let mut buffer = collect_rollout(
            &self.agent.policy,
            &self.agent.critic,
            self.env.as_ref(),
            &mut self.workers,
            cfg.steps_per_env,
            self.exec,
        )?;
        self.env_steps += buffer.len();
        if !buffer.episodes.is_empty() {
            let n = buffer.episodes.len() as f64;
            let mean = buffer.episodes.iter().map(|e| e.episodic_return).sum::<f64>() / n;
            let var = buffer.episodes.iter().map(|e| (e.episodic_return - mean).powi(2)).sum::<f64>() / n;
            self.last_return = (mean, var.sqrt());
        }
        buffer.compute_advantages(cfg.gamma, cfg.lambda);
        let report = self.agent.update(&mut buffer, &mut self.updater_rng)?;
        let (pe, ve) = self.symmetry_residuals()?;
        Ok(IterationStats {
            iteration: self.agent.iteration,
            env_steps: self.env_steps,
            return_mean: self.last_return.0,
            return_std: self.last_return.1,
            surrogate_loss: report.surrogate_loss,
            value_loss: report.value_loss,
            entropy: report.entropy,
            approx_kl: report.approx_kl,
            policy_equiv_error: pe,
            value_inv_error: ve,
        })
    }
}
