use nalgebra::DMatrix;
use rand::Rng;

use super::agent::{make_agent, Agent};
use super::buffer::Batch;
use super::loss::LossWeights;
use super::{Algo, NetConfig, PpoConfig};
use crate::autodiff::{finite_difference, max_relative_error};
use crate::error::PpoError;
use crate::group::SymmetrySpec;
use crate::rng::SimRng;

/// Largest accepted relative error between tape and central-difference gradients.
pub const GRADIENT_TOLERANCE: f64 = 1e-4;
/// Central-difference step.
pub const FD_STEP: f64 = 1e-6;
/// Below this magnitude errors are measured absolutely.
const RELATIVE_FLOOR: f64 = 1e-6;

/// Worst relative gradient error of one loss term for one agent class.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientCheck {
    pub algo: Algo,
    pub loss: &'static str,
    pub max_relative_error: f64,
}

impl GradientCheck {
    pub fn passed(&self) -> bool {
        self.max_relative_error < GRADIENT_TOLERANCE
    }
}

const LOSSES: [(LossWeights, &str); 3] = [
    (LossWeights::SURROGATE, "surrogate"),
    (LossWeights::VALUE, "value"),
    (LossWeights::ENTROPY, "entropy"),
];

/// A small agent with random widths and log-std.
fn random_agent(algo: Algo, spec: &SymmetrySpec, rng: &mut SimRng) -> Result<Agent, PpoError> {
    let net = NetConfig {
        mlp_hidden: vec![rng.random_range(3..7)],
        emlp_hidden: vec![rng.random_range(2..4)],
        init_log_std: rng.random_range(-1.0..0.5),
        ..NetConfig::default()
    };
    make_agent(algo, spec, &net, &PpoConfig::default(), rng)
}

/// States and actions in `[-1, 1]`, old log-probs near the current ones so
/// that both clipped and unclipped ratios occur.
pub fn random_batch(agent: &Agent, n: usize, rng: &mut SimRng) -> Result<Batch, PpoError> {
    let states = DMatrix::from_fn(n, agent.spec.state_dim(), |_, _| rng.random_range(-1.0..1.0));
    let actions = DMatrix::from_fn(n, agent.spec.action_dim(), |_, _| rng.random_range(-1.0..1.0));
    let means = agent.policy.mean_batch(&states)?;
    let mut old_log_probs = Vec::with_capacity(n);
    for i in 0..n {
        let m: Vec<f64> = means.row(i).iter().copied().collect();
        let a: Vec<f64> = actions.row(i).iter().copied().collect();
        old_log_probs.push(agent.policy.log_prob_given_mean(&m, &a) + rng.random_range(-0.3..0.3));
    }
    Ok(Batch {
        states,
        actions,
        old_log_probs,
        advantages: (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
        returns: (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
    })
}

/// Compares tape gradients of every loss term against central differences
/// for every agent class, over `repetitions` random instances each.
/// Reports the worst error per `(algo, loss)`.
pub fn gradient_checks(spec: &SymmetrySpec, repetitions: usize, rng: &mut SimRng) -> Result<Vec<GradientCheck>, PpoError> {
    let mut out = Vec::new();
    for algo in Algo::ALL {
        let mut worst = [0.0f64; LOSSES.len()];
        for _ in 0..repetitions {
            let agent = random_agent(algo, spec, rng)?;
            let n = rng.random_range(3..9);
            let batch = random_batch(&agent, n, rng)?;
            let p = agent.flat_params();
            for (k, (w, _)) in LOSSES.iter().enumerate() {
                let (_, analytic) = agent.loss_and_grad(&p, &batch, *w)?;
                let numeric = finite_difference(&p, FD_STEP, |q| agent.loss_at(q, &batch, *w).total);
                worst[k] = worst[k].max(max_relative_error(&analytic, &numeric, RELATIVE_FLOOR));
            }
        }
        out.extend(LOSSES.iter().zip(worst).map(|((_, loss), e)| GradientCheck {
            algo,
            loss,
            max_relative_error: e,
        }));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{make_phase_hopper, SymmetricEnv};
    use crate::rng::stream;

    #[test]
    fn every_algo_and_loss_is_reported_and_passes() {
        let env = make_phase_hopper();
        let checks = gradient_checks(env.symmetry(), 2, &mut stream(7, 0)).unwrap();
        assert_eq!(checks.len(), 9);
        for c in checks {
            assert!(c.passed(), "{c:?}");
        }
    }
}
