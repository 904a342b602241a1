use rand::Rng;

use super::{Mode, SymmetricEnv};
use crate::error::EnvError;
use crate::group::max_abs_diff;
use crate::rng::SimRng;

/// Residual bound for the transition and reward conditions.
pub const SYMMETRY_TOLERANCE: f64 = 1e-9;

/// Resets drawn per sampled transition for the balance estimate.
const RESETS_PER_SAMPLE: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct SymmetryReport {
    pub samples: usize,
    pub resets: usize,
    /// Max ∞-norm of `step(g⊳s, g⊳a; g⊳n) − g⊳step(s, a; n)`.
    pub transition_residual: f64,
    /// Max `|r(g⊳s, g⊳a) − r(s, a)|`.
    pub reward_residual: f64,
    pub termination_mismatches: usize,
    /// `|P̂(right) − 0.5|` over the resets.
    pub initial_balance_deviation: f64,
    /// Allowed balance deviation: the larger of 0.01 and 2.5 binomial standard errors.
    pub balance_tolerance: f64,
}

impl SymmetryReport {
    pub fn transition_ok(&self) -> bool {
        self.transition_residual <= SYMMETRY_TOLERANCE && self.termination_mismatches == 0
    }

    pub fn reward_ok(&self) -> bool {
        self.reward_residual <= SYMMETRY_TOLERANCE
    }

    pub fn balance_ok(&self) -> bool {
        self.initial_balance_deviation <= self.balance_tolerance
    }

    pub fn passed(&self) -> bool {
        self.transition_ok() && self.reward_ok() && self.balance_ok()
    }

    /// Names of the violated conditions.
    pub fn failures(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        if !self.transition_ok() {
            out.push("transition");
        }
        if !self.reward_ok() {
            out.push("reward");
        }
        if !self.balance_ok() {
            out.push("initial_balance");
        }
        out
    }
}

/// Checks transition, reward and initial-state invariance of `env` with
/// common random numbers: each sampled transition is replayed from the
/// mirrored state and action with the transported noise vector.
pub fn check_symmetric_mdp(
    env: &dyn SymmetricEnv,
    samples: usize,
    rng: &mut SimRng,
) -> Result<SymmetryReport, EnvError> {
    let spec = env.symmetry();
    let group = &spec.group;
    let action_dim = env.action_dim();
    let mut transition_residual: f64 = 0.0;
    let mut reward_residual: f64 = 0.0;
    let mut termination_mismatches = 0;

    for _ in 0..samples {
        let s = env.sample_state(rng);
        let a: Vec<f64> = (0..action_dim).map(|_| rng.random_range(-1.5..1.5)).collect();
        let n = env.sample_noise(rng);
        let out = env.step(&s, &a, &n);
        for g in group.non_identity() {
            let gs = spec.rep_state.act(g, &s)?;
            let ga = spec.rep_action.act(g, &a)?;
            let gn = env.transport_noise(g, &n)?;
            let mirrored = env.step(&gs, &ga, &gn);
            let expected = spec.rep_state.act(g, &out.next_state)?;
            transition_residual = transition_residual.max(max_abs_diff(&mirrored.next_state, &expected));
            let dr = (mirrored.reward - out.reward).abs();
            reward_residual = reward_residual.max(if dr.is_nan() { f64::INFINITY } else { dr });
            if mirrored.terminated != out.terminated {
                termination_mismatches += 1;
            }
        }
    }

    let resets = (samples * RESETS_PER_SAMPLE).max(1);
    let right = (0..resets)
        .filter(|_| env.mode_of(&env.reset(rng)) == Mode::Right)
        .count();
    let initial_balance_deviation = (right as f64 / resets as f64 - 0.5).abs();
    let balance_tolerance = f64::max(0.01, 2.5 * 0.5 / (resets as f64).sqrt());

    Ok(SymmetryReport {
        samples,
        resets,
        transition_residual,
        reward_residual,
        termination_mismatches,
        initial_balance_deviation,
        balance_tolerance,
    })
}
