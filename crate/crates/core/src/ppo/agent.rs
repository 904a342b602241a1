use rand::Rng;
use serde::{Deserialize, Serialize};

use super::policy::{Critic, GaussianPolicy};
use super::{Algo, NetConfig, PpoConfig};
use crate::autodiff::Adam;
use crate::error::PpoError;
use crate::group::SymmetrySpec;
use crate::nn::{Activation, EmlpNetwork, MlpNetwork, Network, ReadoutMode};

/// Actor, critic and optimizer state for one training run.
///
/// The optimizer sees one flat vector laid out as
/// `[policy mean | policy log_std | critic]`.
#[derive(Debug, Clone)]
pub struct Agent {
    pub algo: Algo,
    pub policy: GaussianPolicy,
    pub critic: Critic,
    pub optimizer: Adam,
    pub spec: SymmetrySpec,
    pub config: PpoConfig,
    pub net: NetConfig,
    /// Number of minibatches passed through augmentation.
    pub augment_calls: u64,
    /// Completed updates.
    pub iteration: usize,
}

/// Serializable parameters and optimizer moments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub algo: Algo,
    pub policy_params: Vec<f64>,
    pub log_std: Vec<f64>,
    pub critic_params: Vec<f64>,
    pub adam_first_moment: Vec<f64>,
    pub adam_second_moment: Vec<f64>,
    pub adam_steps: u64,
    pub iteration: usize,
}

fn mlp_dims(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut dims = Vec::with_capacity(hidden.len() + 2);
    dims.push(input);
    dims.extend_from_slice(hidden);
    dims.push(output);
    dims
}

/// Builds the actor/critic pair for `algo`.
///
/// * `ppo`: MLPs, one `log_std` per action dimension.
/// * `ppoaug`: MLPs with the policy output layer scaled by
///   `net.aug_output_scale`, `log_std` tied across action orbits.
/// * `ppoeqic`: equivariant actor, invariant critic, tied `log_std`.
pub fn make_agent<R: Rng + ?Sized>(
    algo: Algo,
    spec: &SymmetrySpec,
    net: &NetConfig,
    config: &PpoConfig,
    rng: &mut R,
) -> Result<Agent, PpoError> {
    let (sd, ad) = (spec.state_dim(), spec.action_dim());
    let (policy, critic) = match algo {
        Algo::Ppo | Algo::PpoAug => {
            let mut actor = MlpNetwork::new(&mlp_dims(sd, &net.mlp_hidden, ad), Activation::Tanh, net.init_scale, rng);
            let value = MlpNetwork::new(&mlp_dims(sd, &net.mlp_hidden, 1), Activation::Tanh, net.init_scale, rng);
            let policy = if algo == Algo::PpoAug {
                actor.scale_output_layer(net.aug_output_scale);
                GaussianPolicy::orbit_tied(Network::Mlp(actor), &spec.rep_action, net.init_log_std)
            } else {
                GaussianPolicy::untied(Network::Mlp(actor), net.init_log_std)
            };
            (policy, Critic::new(Network::Mlp(value)))
        }
        Algo::PpoEqic => {
            let actor = EmlpNetwork::build(spec, &net.emlp_hidden, ReadoutMode::Equivariant, net.init_scale, rng)?;
            let value = EmlpNetwork::build(spec, &net.emlp_hidden, ReadoutMode::Invariant, net.init_scale, rng)?;
            (
                GaussianPolicy::orbit_tied(Network::Emlp(actor), &spec.rep_action, net.init_log_std),
                Critic::new(Network::Emlp(value)),
            )
        }
    };
    let n = policy.mean.num_params() + policy.log_std.len() + critic.value.num_params();
    Ok(Agent {
        algo,
        policy,
        critic,
        optimizer: Adam::new(n, config.lr),
        spec: spec.clone(),
        config: config.clone(),
        net: net.clone(),
        augment_calls: 0,
        iteration: 0,
    })
}

impl Agent {
    /// `(policy mean, log_std, critic)` parameter counts.
    pub fn param_split(&self) -> (usize, usize, usize) {
        (
            self.policy.mean.num_params(),
            self.policy.log_std.len(),
            self.critic.value.num_params(),
        )
    }

    pub fn num_params(&self) -> usize {
        let (a, b, c) = self.param_split();
        a + b + c
    }

    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        out.extend_from_slice(self.policy.mean.params());
        out.extend_from_slice(&self.policy.log_std);
        out.extend_from_slice(self.critic.value.params());
        out
    }

    pub fn set_flat_params(&mut self, params: &[f64]) {
        let (a, b, c) = self.param_split();
        assert_eq!(params.len(), a + b + c, "flat parameter length");
        self.policy.mean.params_mut().copy_from_slice(&params[..a]);
        self.policy.log_std.copy_from_slice(&params[a..a + b]);
        self.critic.value.params_mut().copy_from_slice(&params[a + b..]);
    }

    pub fn state(&self) -> AgentState {
        AgentState {
            algo: self.algo,
            policy_params: self.policy.mean.params().to_vec(),
            log_std: self.policy.log_std.clone(),
            critic_params: self.critic.value.params().to_vec(),
            adam_first_moment: self.optimizer.first_moment.clone(),
            adam_second_moment: self.optimizer.second_moment.clone(),
            adam_steps: self.optimizer.steps,
            iteration: self.iteration,
        }
    }

    /// Rebuilds an agent from saved state; the architecture comes from
    /// `spec` and `net`.
    pub fn restore(
        spec: &SymmetrySpec,
        net: &NetConfig,
        config: &PpoConfig,
        state: &AgentState,
    ) -> Result<Agent, PpoError> {
        let mut rng = crate::rng::stream(0, 0);
        let mut agent = make_agent(state.algo, spec, net, config, &mut rng)?;
        let (a, b, c) = agent.param_split();
        let lens = (state.policy_params.len(), state.log_std.len(), state.critic_params.len());
        if lens != (a, b, c) || state.adam_first_moment.len() != a + b + c || state.adam_second_moment.len() != a + b + c {
            return Err(crate::error::NetworkError::ParameterCount {
                expected: a + b + c,
                got: lens.0 + lens.1 + lens.2,
            }
            .into());
        }
        let mut flat = state.policy_params.clone();
        flat.extend_from_slice(&state.log_std);
        flat.extend_from_slice(&state.critic_params);
        agent.set_flat_params(&flat);
        agent.optimizer.first_moment = state.adam_first_moment.clone();
        agent.optimizer.second_moment = state.adam_second_moment.clone();
        agent.optimizer.steps = state.adam_steps;
        agent.iteration = state.iteration;
        Ok(agent)
    }
}
