use std::f64::consts::{FRAC_PI_2, FRAC_PI_3};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{clip_unit, mirror_of, EnergySample, Mode, StepOutcome, SymmetricEnv};
use crate::error::EnvError;
use crate::group::{sign_flip, GroupElement, SymmetrySpec};
use crate::rng::SimRng;

/// A point agent pushes a hinged door open and walks through the doorway.
/// The hinge side (handedness) is the task mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToyDoorParams {
    pub dt: f64,
    pub horizon: usize,
    pub damping: f64,
    pub noise_std: f64,
    /// Forward position of the door plane.
    pub door_y: f64,
    /// The doorway spans `|x| < door_half_width`.
    pub door_half_width: f64,
    /// Angular acceleration per unit push at full lever arm.
    pub push_gain: f64,
    pub door_damping: f64,
    /// Opening angle (rad) from which the doorway is passable.
    pub pass_angle: f64,
    /// Opening angle (rad) required for success.
    pub success_angle: f64,
    /// Forward position the agent must pass for success.
    pub success_y: f64,
    pub target_speed: f64,
    pub action_cost: f64,
    pub success_bonus: f64,
    pub start_x_spread: f64,
    pub start_y: f64,
    pub start_y_spread: f64,
    pub x_limit: f64,
}

impl Default for ToyDoorParams {
    fn default() -> Self {
        Self {
            dt: 0.05,
            horizon: 300,
            damping: 1.0,
            noise_std: 0.02,
            door_y: 1.0,
            door_half_width: 0.5,
            push_gain: 4.0,
            door_damping: 1.0,
            pass_angle: 1.1,
            success_angle: FRAC_PI_3,
            success_y: 1.2,
            target_speed: 0.5,
            action_cost: 0.01,
            success_bonus: 5.0,
            start_x_spread: 0.3,
            start_y: 0.0,
            start_y_spread: 0.1,
            x_limit: 1.0,
        }
    }
}

impl ToyDoorParams {
    pub fn shifted(&self) -> Self {
        Self {
            start_x_spread: (self.start_x_spread * 1.5).min(self.x_limit),
            start_y: self.start_y - 0.4,
            ..self.clone()
        }
    }

    fn contact_y(&self) -> f64 {
        self.door_y - 0.05
    }
}

/// State `(x, y, ẋ, ẏ, θ, θ̇, h)` with handedness `h ∈ {−1, +1}`; the hinge
/// sits at `x = −h·w`, so pushing near `x = +h·w` opens the door fastest and
/// the door opens towards `h·θ > 0`. The reflection negates
/// `(x, ẋ, θ, θ̇, h)` and the lateral force.
#[derive(Debug, Clone)]
pub struct ToyDoor {
    params: ToyDoorParams,
    symmetry: SymmetrySpec,
}

impl ToyDoor {
    pub fn new(params: ToyDoorParams) -> Self {
        let symmetry = SymmetrySpec::reflection(
            sign_flip(&[-1.0, 1.0, -1.0, 1.0, -1.0, -1.0, -1.0]),
            sign_flip(&[-1.0, 1.0]),
        )
        .expect("sign flips are involutions");
        Self { params, symmetry }
    }

    pub fn params(&self) -> &ToyDoorParams {
        &self.params
    }
}

impl SymmetricEnv for ToyDoor {
    fn name(&self) -> &str {
        "toy_door"
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
        let x = rng.random_range(-p.start_x_spread..=p.start_x_spread);
        let y = p.start_y + rng.random_range(-p.start_y_spread..=p.start_y_spread);
        let right = vec![x, y, 0.0, 0.0, 0.0, 0.0, 1.0];
        mirror_of(&self.symmetry, right, mode)
    }

    fn mode_of(&self, state: &[f64]) -> Mode {
        if state[6] > 0.0 {
            Mode::Right
        } else {
            Mode::Left
        }
    }

    fn sample_state(&self, rng: &mut SimRng) -> Vec<f64> {
        let p = &self.params;
        let h = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let y = if rng.random_bool(0.3) {
            p.contact_y()
        } else {
            rng.random_range(-0.5..1.6)
        };
        vec![
            rng.random_range(-p.x_limit..p.x_limit),
            y,
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            h * rng.random_range(0.0..FRAC_PI_2),
            rng.random_range(-2.0..2.0),
            h,
        ]
    }

    fn step(&self, state: &[f64], action: &[f64], noise: &[f64]) -> StepOutcome {
        let p = &self.params;
        let (x, y, vx, vy, theta, omega, h) = (
            state[0], state[1], state[2], state[3], state[4], state[5], state[6],
        );
        let (ax, ay) = (clip_unit(action[0]), clip_unit(action[1]));
        let kick = p.noise_std * p.dt.sqrt();
        let vx1 = vx + (ax - p.damping * vx) * p.dt + kick * noise[0];
        let mut vy1 = vy + (ay - p.damping * vy) * p.dt + kick * noise[1];
        let x1 = (x + vx1 * p.dt).clamp(-p.x_limit, p.x_limit);
        let mut y1 = y + vy1 * p.dt;

        let opening = h * theta;
        let in_doorway = x1.abs() < p.door_half_width;
        let passable = in_doorway && opening >= p.pass_angle;
        let contact_y = p.contact_y();
        let mut pushing = 0.0;
        if y <= contact_y && y1 > contact_y && !passable {
            y1 = contact_y;
            vy1 = 0.0;
            if in_doorway {
                // Lever arm measured from the hinge at x = −h·w, normalized to [0, 1].
                let lever = ((h * x1 + p.door_half_width) / (2.0 * p.door_half_width)).clamp(0.0, 1.0);
                pushing = ay.max(0.0) * lever;
            }
        }

        let mut omega1 = omega + (h * p.push_gain * pushing - p.door_damping * omega) * p.dt;
        let mut theta1 = theta + omega1 * p.dt;
        let opening1 = h * theta1;
        if opening1 < 0.0 {
            theta1 = 0.0;
            omega1 = 0.0;
        } else if opening1 > FRAC_PI_2 {
            theta1 = h * FRAC_PI_2;
            omega1 = 0.0;
        }

        let next_state = vec![x1, y1, vx1, vy1, theta1, omega1, h];
        let success = self.is_success(&next_state);
        let mut reward = (-(vy1 - p.target_speed).abs() - p.action_cost * (ax * ax + ay * ay)) * p.dt;
        if success {
            reward += p.success_bonus;
        }
        StepOutcome {
            terminated: success,
            reward,
            commanded: p.target_speed,
            actual: vy1,
            energy: EnergySample {
                torque: vec![ax, ay],
                joint_velocity: vec![vx1, vy1],
                base_speed: vx1.hypot(vy1),
            },
            next_state,
        }
    }

    fn transport_noise(&self, g: GroupElement, noise: &[f64]) -> Result<Vec<f64>, EnvError> {
        if g.is_identity() {
            Ok(noise.to_vec())
        } else {
            Ok(vec![-noise[0], noise[1]])
        }
    }

    fn is_success(&self, state: &[f64]) -> bool {
        state[6] * state[4] > self.params.success_angle && state[1] > self.params.success_y
    }
}
