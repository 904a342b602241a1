use std::f64::consts::TAU;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{clip_unit, mirror_of, EnergySample, Mode, StepOutcome, SymmetricEnv};
use crate::error::EnvError;
use crate::group::{permutation_matrix, sign_flip, GroupElement, SymmetrySpec};
use crate::rng::SimRng;

/// A two-footed hopper driven by a gait phase `ψ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhaseHopperParams {
    pub dt: f64,
    /// Gait period `T` in seconds.
    pub period: f64,
    pub horizon: usize,
    pub lift_gain: f64,
    pub gravity: f64,
    pub thrust_gain: f64,
    pub drag: f64,
    /// Foot-load time constant.
    pub load_tau: f64,
    pub target_speed: f64,
    pub target_height: f64,
    pub height_weight: f64,
    pub stepping_weight: f64,
    pub action_cost: f64,
    pub noise_std: f64,
    pub fall_height: f64,
    pub max_height: f64,
    pub start_height_spread: f64,
    pub start_speed_spread: f64,
}

impl Default for PhaseHopperParams {
    fn default() -> Self {
        Self {
            dt: 0.02,
            period: 0.8,
            horizon: 400,
            lift_gain: 1.0,
            gravity: 0.8,
            thrust_gain: 2.0,
            drag: 0.5,
            load_tau: 0.1,
            target_speed: 1.0,
            target_height: 1.0,
            height_weight: 0.5,
            stepping_weight: 0.5,
            action_cost: 0.01,
            noise_std: 0.02,
            fall_height: 0.3,
            max_height: 2.0,
            start_height_spread: 0.05,
            start_speed_spread: 0.0,
        }
    }
}

impl PhaseHopperParams {
    pub fn shifted(&self) -> Self {
        Self {
            start_height_spread: 0.3,
            start_speed_spread: 0.5,
            ..self.clone()
        }
    }
}

/// State `(z, v, load_L, load_R, cos 2πψ, sin 2πψ)`, action = per-foot force.
/// The reflection swaps the feet and shifts `ψ` by half a period, which
/// negates the phase encoding, so no state is fixed by it.
#[derive(Debug, Clone)]
pub struct PhaseHopper {
    params: PhaseHopperParams,
    symmetry: SymmetrySpec,
}

/// Stance weights `(left, right)` for a phase encoding: the left foot is in
/// stance during the first half-cycle, the right during the second.
fn stance(sin_phase: f64) -> (f64, f64) {
    (sin_phase.max(0.0), (-sin_phase).max(0.0))
}

impl PhaseHopper {
    pub fn new(params: PhaseHopperParams) -> Self {
        let state = permutation_matrix(&[0, 1, 3, 2, 4, 5])
            * sign_flip(&[1.0, 1.0, 1.0, 1.0, -1.0, -1.0]);
        let action = permutation_matrix(&[1, 0]);
        let symmetry = SymmetrySpec::reflection(state, action).expect("swap with half-period shift is an involution");
        Self { params, symmetry }
    }

    pub fn params(&self) -> &PhaseHopperParams {
        &self.params
    }

    /// `ψ ∈ [0, 1)` from the encoding.
    pub fn phase(state: &[f64]) -> f64 {
        (state[5].atan2(state[4]) / TAU).rem_euclid(1.0)
    }

    fn encode_phase(psi: f64) -> (f64, f64) {
        let a = TAU * psi;
        (a.cos(), a.sin())
    }
}

impl SymmetricEnv for PhaseHopper {
    fn name(&self) -> &str {
        "phase_hopper"
    }

    fn symmetry(&self) -> &SymmetrySpec {
        &self.symmetry
    }

    fn noise_dim(&self) -> usize {
        2
    }

    fn horizon(&self) -> usize {
        self.params.horizon
    }

    fn reset_mode(&self, mode: Mode, rng: &mut SimRng) -> Vec<f64> {
        let p = &self.params;
        let z = p.target_height + p.start_height_spread * rng.random_range(-1.0..=1.0);
        let v = p.start_speed_spread * rng.random_range(-1.0..=1.0);
        let psi = rng.random_range(0.5..1.0);
        let (c, s) = Self::encode_phase(psi);
        mirror_of(&self.symmetry, vec![z, v, 0.0, 0.0, c, s], mode)
    }

    /// Left while `ψ ∈ [0, 0.5)`.
    fn mode_of(&self, state: &[f64]) -> Mode {
        if Self::phase(state) < 0.5 {
            Mode::Left
        } else {
            Mode::Right
        }
    }

    fn sample_state(&self, rng: &mut SimRng) -> Vec<f64> {
        let (c, s) = Self::encode_phase(rng.random_range(0.0..1.0));
        vec![
            rng.random_range(0.3..1.5),
            rng.random_range(-1.0..2.0),
            rng.random_range(0.0..1.0),
            rng.random_range(0.0..1.0),
            c,
            s,
        ]
    }

    fn step(&self, state: &[f64], action: &[f64], noise: &[f64]) -> StepOutcome {
        let p = &self.params;
        let (z, v, load_l, load_r, c, s) = (state[0], state[1], state[2], state[3], state[4], state[5]);
        let (fl, fr) = (clip_unit(action[0]), clip_unit(action[1]));
        let (pl, pr) = (fl.max(0.0), fr.max(0.0));
        let (stance_l, stance_r) = stance(s);
        let kick = p.noise_std * p.dt.sqrt();

        let z1 = (z + (p.lift_gain * (pl + pr) - p.gravity) * p.dt + kick * noise[0])
            .clamp(0.0, p.max_height);
        let thrust = p.thrust_gain * (pl * stance_l + pr * stance_r);
        let v1 = v + (thrust - p.drag * v) * p.dt + kick * noise[1];
        let rate = p.dt / p.load_tau;
        let load_l1 = load_l + (pl - load_l) * rate;
        let load_r1 = load_r + (pr - load_r) * rate;
        let delta = TAU * p.dt / p.period;
        let (cd, sd) = (delta.cos(), delta.sin());
        let c1 = c * cd - s * sd;
        let s1 = s * cd + c * sd;

        // Reward the loaded foot that matches the current half-cycle.
        let stepping = (stance_l - stance_r) * load_l1 + (stance_r - stance_l) * load_r1;
        let reward = (-(v1 - p.target_speed).abs() - p.height_weight * (z1 - p.target_height).abs()
            + p.stepping_weight * stepping
            - p.action_cost * (fl * fl + fr * fr))
            * p.dt;

        StepOutcome {
            next_state: vec![z1, v1, load_l1, load_r1, c1, s1],
            reward,
            terminated: z1 < p.fall_height,
            commanded: p.target_speed,
            actual: v1,
            energy: EnergySample {
                torque: vec![fl, fr],
                joint_velocity: vec![(load_l1 - load_l) / p.dt, (load_r1 - load_r) / p.dt],
                base_speed: v1.abs(),
            },
        }
    }

    fn transport_noise(&self, _g: GroupElement, noise: &[f64]) -> Result<Vec<f64>, EnvError> {
        // Height and forward-speed noise are both invariant.
        Ok(noise.to_vec())
    }

    /// Upright and moving forward.
    fn is_success(&self, state: &[f64]) -> bool {
        state[0] >= self.params.fall_height && state[1] > 0.5 * self.params.target_speed
    }
}
