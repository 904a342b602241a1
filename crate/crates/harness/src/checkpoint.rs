//! JSON checkpoints: the agent state plus everything needed to rebuild
//! its architecture and to recognise a file written by another version.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use symmrl_core::envs::{EnvSpec, SymmetricEnv};
use symmrl_core::group::RepresentationDoc;
use symmrl_core::nn::ReadoutMode;
use symmrl_core::ppo::{Agent, AgentState, Algo, NetConfig, PpoConfig};

use crate::config::TrainMode;
use crate::error::{HarnessError, Result};

/// Bumped whenever the checkpoint or report layout changes.
pub const SCHEMA_VERSION: u32 = 1;

/// Architecture summary, checked against the rebuilt environment on load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkMeta {
    pub state_rep: RepresentationDoc,
    pub action_rep: RepresentationDoc,
    /// Hidden widths (`ppo`, `ppoaug`) or regular-representation copies (`ppoeqic`).
    pub hidden: Vec<usize>,
    /// Output constraint of actor and critic; absent for unconstrained networks.
    pub actor_readout: Option<ReadoutMode>,
    pub critic_readout: Option<ReadoutMode>,
    pub num_params: usize,
}

impl NetworkMeta {
    pub fn of(agent: &Agent) -> Self {
        let eqic = agent.algo == Algo::PpoEqic;
        Self {
            state_rep: agent.spec.rep_state.to_doc(),
            action_rep: agent.spec.rep_action.to_doc(),
            hidden: if eqic { agent.net.emlp_hidden.clone() } else { agent.net.mlp_hidden.clone() },
            actor_readout: eqic.then_some(ReadoutMode::Equivariant),
            critic_readout: eqic.then_some(ReadoutMode::Invariant),
            num_params: agent.num_params(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub schema_version: u32,
    pub config_hash: String,
    pub algo: Algo,
    pub env: EnvSpec,
    pub net: NetConfig,
    pub ppo: PpoConfig,
    pub train_mode: TrainMode,
    pub root_seed: u64,
    pub env_steps: usize,
    pub network: NetworkMeta,
    pub agent: AgentState,
}

impl Checkpoint {
    pub fn new(agent: &Agent, env: EnvSpec, train_mode: TrainMode, root_seed: u64, env_steps: usize, config_hash: String) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            config_hash,
            algo: agent.algo,
            env,
            net: agent.net.clone(),
            ppo: agent.config.clone(),
            train_mode,
            root_seed,
            env_steps,
            network: NetworkMeta::of(agent),
            agent: agent.state(),
        }
    }

    pub fn iteration(&self) -> usize {
        self.agent.iteration
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self).expect("checkpoints serialize to JSON");
        text.push('\n');
        fs::write(path, text).map_err(|e| HarnessError::io(path, e))
    }

    /// Reads a checkpoint, refusing other schema versions before looking at
    /// the remaining fields.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        let malformed = |message: String| HarnessError::Malformed {
            path: path.to_path_buf(),
            what: "checkpoint",
            message,
        };
        let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| malformed(e.to_string()))?;
        match value.get("schema_version").and_then(|v| v.as_u64()) {
            Some(v) if v == u64::from(SCHEMA_VERSION) => {}
            Some(v) => {
                return Err(HarnessError::SchemaMismatch {
                    path: path.to_path_buf(),
                    reason: format!("schema_version {v}, expected {SCHEMA_VERSION}"),
                })
            }
            None => {
                return Err(HarnessError::SchemaMismatch {
                    path: path.to_path_buf(),
                    reason: "no schema_version".into(),
                })
            }
        }
        serde_json::from_value(value).map_err(|e| malformed(e.to_string()))
    }

    /// Rebuilds the agent, verifying that the environment still has the
    /// representations the checkpoint was trained with.
    pub fn restore(&self, env: &dyn SymmetricEnv, path: &Path) -> Result<Agent> {
        let mismatch = |reason: String| HarnessError::SchemaMismatch {
            path: path.to_path_buf(),
            reason,
        };
        let spec = env.symmetry();
        if spec.rep_state.to_doc() != self.network.state_rep || spec.rep_action.to_doc() != self.network.action_rep {
            return Err(mismatch(format!("representations differ from environment {}", env.name())));
        }
        let agent = Agent::restore(spec, &self.net, &self.ppo, &self.agent).map_err(|e| mismatch(e.to_string()))?;
        if agent.algo != self.algo {
            return Err(mismatch(format!("agent state is {}, header says {}", agent.algo, self.algo)));
        }
        if agent.num_params() != self.network.num_params {
            return Err(mismatch(format!(
                "{} parameters, header says {}",
                agent.num_params(),
                self.network.num_params
            )));
        }
        Ok(agent)
    }
}
