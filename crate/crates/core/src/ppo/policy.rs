use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::autodiff::{LinearCombination, Tape, Var};
use crate::error::NetworkError;
use crate::group::{max_abs_diff, Representation, SymmetrySpec};
use crate::nn::Network;

/// `ln 2π`.
pub const LOG_2PI: f64 = 1.837_877_066_409_345_5;

/// Diagonal Gaussian policy with a state-independent log standard deviation.
///
/// Action dimensions in the same tie group share one `log_std` entry.
/// Tying across the orbits of the action representation keeps the density
/// equivariant whenever the mean is.
#[derive(Debug, Clone)]
pub struct GaussianPolicy {
    pub mean: Network,
    /// One entry per tie group.
    pub log_std: Vec<f64>,
    ties: Vec<usize>,
    tie_plan: Arc<LinearCombination>,
}

impl GaussianPolicy {
    /// `ties[i]` is the tie group of action dimension `i`; groups are `0..K`.
    pub fn new(mean: Network, ties: Vec<usize>, init_log_std: f64) -> Self {
        assert_eq!(ties.len(), mean.output_dim(), "one tie label per action dimension");
        let groups = ties.iter().max().map_or(0, |m| m + 1);
        let tie_plan = Arc::new(LinearCombination {
            rows: 1,
            cols: ties.len(),
            num_coefficients: groups,
            terms: ties.iter().enumerate().map(|(i, &k)| (k, 0, i, 1.0)).collect(),
        });
        Self {
            mean,
            log_std: vec![init_log_std; groups],
            ties,
            tie_plan,
        }
    }

    /// Independent `log_std` per action dimension.
    pub fn untied(mean: Network, init_log_std: f64) -> Self {
        let ties = (0..mean.output_dim()).collect();
        Self::new(mean, ties, init_log_std)
    }

    /// `log_std` shared within each coordinate orbit of `rep_action`.
    pub fn orbit_tied(mean: Network, rep_action: &Representation, init_log_std: f64) -> Self {
        Self::new(mean, rep_action.coordinate_orbits(), init_log_std)
    }

    pub fn ties(&self) -> &[usize] {
        &self.ties
    }

    pub fn action_dim(&self) -> usize {
        self.ties.len()
    }

    pub fn log_std_per_dim(&self) -> Vec<f64> {
        self.ties.iter().map(|&k| self.log_std[k]).collect()
    }

    pub fn mean_batch(&self, states: &DMatrix<f64>) -> Result<DMatrix<f64>, NetworkError> {
        self.mean.forward_batch(states)
    }

    /// `log π(a | s)` for a known mean.
    pub fn log_prob_given_mean(&self, mean: &[f64], action: &[f64]) -> f64 {
        let mut lp = 0.0;
        for (i, &k) in self.ties.iter().enumerate() {
            let ls = self.log_std[k];
            let z = (action[i] - mean[i]) * (-ls).exp();
            lp += -0.5 * z * z - ls - 0.5 * LOG_2PI;
        }
        lp
    }

    pub fn log_prob(&self, state: &[f64], action: &[f64]) -> Result<f64, NetworkError> {
        let mean = self.mean.forward(state)?;
        Ok(self.log_prob_given_mean(&mean, action))
    }

    /// Differential entropy of the action distribution.
    pub fn entropy(&self) -> f64 {
        self.log_std_per_dim()
            .iter()
            .map(|ls| ls + 0.5 * (1.0 + LOG_2PI))
            .sum()
    }

    /// Expands a `1×K` tied row to `1×A`.
    pub(crate) fn expand_log_std(&self, tape: &mut Tape, tied: Var) -> Var {
        tape.combine(tied, self.tie_plan.clone())
    }

    /// Per-sample `log π(a | s)` as an `n×1` node, given the `n×A` mean and
    /// the expanded `1×A` log standard deviation.
    pub(crate) fn log_prob_tape(&self, tape: &mut Tape, mean: Var, log_std: Var, actions: Var) -> Var {
        let n = tape.value(mean).nrows();
        let diff = tape.sub(actions, mean);
        let neg = tape.neg(log_std);
        let inv_std = tape.exp(neg);
        let inv_std = tape.broadcast_rows(inv_std, n);
        let z = tape.mul(diff, inv_std);
        let z2 = tape.square(z);
        let quad = tape.sum_cols(z2);
        let quad = tape.scale(quad, -0.5);
        let total_log_std = tape.sum_cols(log_std);
        let total_log_std = tape.broadcast_rows(total_log_std, n);
        let lp = tape.sub(quad, total_log_std);
        tape.add_scalar(lp, -0.5 * self.action_dim() as f64 * LOG_2PI)
    }

    /// Entropy as a `1×1` node of the expanded log standard deviation.
    pub(crate) fn entropy_tape(&self, tape: &mut Tape, log_std: Var) -> Var {
        let s = tape.sum_cols(log_std);
        tape.add_scalar(s, 0.5 * self.action_dim() as f64 * (1.0 + LOG_2PI))
    }
}

/// State-value function.
#[derive(Debug, Clone)]
pub struct Critic {
    pub value: Network,
}

impl Critic {
    pub fn new(value: Network) -> Self {
        assert_eq!(value.output_dim(), 1, "a critic outputs one value");
        Self { value }
    }

    pub fn values(&self, states: &DMatrix<f64>) -> Result<Vec<f64>, NetworkError> {
        Ok(self.value.forward_batch(states)?.iter().copied().collect())
    }
}

fn normal_states<R: Rng + ?Sized>(rng: &mut R, n: usize, dim: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, dim, |_, _| rng.sample(StandardNormal))
}

fn transform_rows(x: &DMatrix<f64>, rho: &DMatrix<f64>) -> DMatrix<f64> {
    x * rho.transpose()
}

/// Max over `samples` states `s ~ N(0, I)` and all `g` of
/// `‖ρ_A(g)·μ(s) − μ(ρ_S(g)·s)‖∞`.
pub fn policy_equivariance_error<R: Rng + ?Sized>(
    policy: &GaussianPolicy,
    spec: &SymmetrySpec,
    samples: usize,
    rng: &mut R,
) -> Result<f64, NetworkError> {
    let x = normal_states(rng, samples, spec.state_dim());
    let mean = policy.mean_batch(&x)?;
    let mut worst = 0.0f64;
    for g in spec.group.elements() {
        let lhs = transform_rows(&mean, spec.rep_action.matrix(g));
        let rhs = policy.mean_batch(&transform_rows(&x, spec.rep_state.matrix(g)))?;
        worst = worst.max(max_abs_diff(lhs.as_slice(), rhs.as_slice()));
    }
    Ok(worst)
}

/// Max over `samples` states `s ~ N(0, I)` and all `g` of `|V(ρ_S(g)·s) − V(s)|`.
pub fn value_invariance_error<R: Rng + ?Sized>(
    critic: &Critic,
    spec: &SymmetrySpec,
    samples: usize,
    rng: &mut R,
) -> Result<f64, NetworkError> {
    let x = normal_states(rng, samples, spec.state_dim());
    let v = critic.values(&x)?;
    let mut worst = 0.0f64;
    for g in spec.group.elements() {
        let vg = critic.values(&transform_rows(&x, spec.rep_state.matrix(g)))?;
        worst = worst.max(max_abs_diff(&v, &vg));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{finite_difference, grad, max_relative_error};
    use crate::group::{permutation_matrix, sign_flip};
    use crate::nn::{Activation, MlpNetwork};
    use crate::rng::stream;

    fn mlp(dims: &[usize], seed: u64) -> Network {
        Network::Mlp(MlpNetwork::new(dims, Activation::Tanh, 1.0, &mut stream(seed, 0)))
    }

    #[test]
    fn log_prob_matches_closed_form() {
        let policy = GaussianPolicy::untied(mlp(&[3, 4, 2], 1), -0.5);
        let mean = [0.3, -0.2];
        let a = [0.5, 0.1];
        let sigma = (-0.5f64).exp();
        let expected: f64 = (0..2)
            .map(|i| {
                let z = (a[i] - mean[i]) / sigma;
                -0.5 * z * z - sigma.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
            })
            .sum();
        assert!((policy.log_prob_given_mean(&mean, &a) - expected).abs() < 1e-14);
        let entropy = 2.0 * (0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E).ln() + sigma.ln());
        assert!((policy.entropy() - entropy).abs() < 1e-14);
    }

    #[test]
    fn tape_log_prob_agrees_and_differentiates() {
        let policy = GaussianPolicy::untied(mlp(&[3, 4, 2], 2), -0.3);
        let means = DMatrix::from_row_slice(2, 2, &[0.1, 0.2, -0.4, 0.3]);
        let actions = DMatrix::from_row_slice(2, 2, &[0.0, 0.5, -0.2, 0.1]);
        let f = |ls: &[f64]| {
            let mut tape = Tape::new();
            let row = tape.constant(DMatrix::from_row_slice(1, 2, ls));
            let m = tape.constant(means.clone());
            let a = tape.constant(actions.clone());
            let lp = policy.log_prob_tape(&mut tape, m, row, a);
            let s = tape.mean(lp);
            tape.scalar(s)
        };
        let (v, g) = grad(&[-0.3, -0.7], |tape, row| {
            let m = tape.constant(means.clone());
            let a = tape.constant(actions.clone());
            let lp = policy.log_prob_tape(tape, m, row, a);
            tape.mean(lp)
        })
        .unwrap();
        let mut manual = GaussianPolicy::untied(mlp(&[3, 4, 2], 2), 0.0);
        manual.log_std = vec![-0.3, -0.7];
        let direct = 0.5
            * (manual.log_prob_given_mean(&[0.1, 0.2], &[0.0, 0.5])
                + manual.log_prob_given_mean(&[-0.4, 0.3], &[-0.2, 0.1]));
        assert!((v - direct).abs() < 1e-12);
        let numeric = finite_difference(&[-0.3, -0.7], 1e-6, f);
        assert!(max_relative_error(&g, &numeric, 1e-8) < 1e-6);
    }

    #[test]
    fn orbit_ties_follow_the_action_representation() {
        let swap = SymmetrySpec::reflection(sign_flip(&[1.0, 1.0]), permutation_matrix(&[1, 0])).unwrap();
        let policy = GaussianPolicy::orbit_tied(mlp(&[2, 2], 3), &swap.rep_action, -0.5);
        assert_eq!(policy.log_std.len(), 1);
        let flip = SymmetrySpec::reflection(sign_flip(&[1.0, 1.0]), sign_flip(&[-1.0, 1.0])).unwrap();
        let policy = GaussianPolicy::orbit_tied(mlp(&[2, 2], 3), &flip.rep_action, -0.5);
        assert_eq!(policy.log_std.len(), 2);
    }

    #[test]
    fn zero_mean_policy_has_zero_equivariance_error() {
        let spec = SymmetrySpec::reflection(sign_flip(&[-1.0, 1.0, 1.0]), sign_flip(&[-1.0, 1.0])).unwrap();
        let mut net = mlp(&[3, 8, 2], 4);
        net.params_mut().iter_mut().for_each(|p| *p = 0.0);
        let policy = GaussianPolicy::untied(net, 0.0);
        assert_eq!(policy_equivariance_error(&policy, &spec, 50, &mut stream(0, 1)).unwrap(), 0.0);
        let generic = GaussianPolicy::untied(mlp(&[3, 8, 2], 5), 0.0);
        assert!(policy_equivariance_error(&generic, &spec, 50, &mut stream(0, 1)).unwrap() > 1e-3);
    }

    #[test]
    fn constant_critic_is_invariant() {
        let spec = SymmetrySpec::reflection(sign_flip(&[-1.0, 1.0, 1.0]), sign_flip(&[-1.0, 1.0])).unwrap();
        let mut net = mlp(&[3, 8, 1], 6);
        let n = net.num_params();
        net.params_mut().iter_mut().enumerate().for_each(|(i, p)| *p = if i + 1 == n { 2.5 } else { 0.0 });
        let critic = Critic::new(net);
        assert_eq!(value_invariance_error(&critic, &spec, 50, &mut stream(0, 2)).unwrap(), 0.0);
        let generic = Critic::new(mlp(&[3, 8, 1], 7));
        assert!(value_invariance_error(&generic, &spec, 50, &mut stream(0, 2)).unwrap() > 1e-3);
    }
}
