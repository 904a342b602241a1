use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{clip_unit, mirror_of, EnergySample, Mode, StepOutcome, SymmetricEnv};
use crate::error::EnvError;
use crate::group::{sign_flip, GroupElement, SymmetrySpec};
use crate::rng::SimRng;

/// Planar point mass that must reach a goal placed left or right of the start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MirrorGoalParams {
    /// Lateral goal distance `d`; the goal sits at `(±d, goal_forward)`.
    pub goal_offset: f64,
    pub goal_forward: f64,
    pub dt: f64,
    pub horizon: usize,
    pub damping: f64,
    pub noise_std: f64,
    /// Start position is uniform in `[-spread, spread]²`.
    pub start_spread: f64,
    pub goal_tolerance: f64,
    pub action_cost: f64,
    /// Extra drag applied only while moving in `+x`. Nonzero values break the symmetry.
    pub asymmetric_friction: f64,
}

impl Default for MirrorGoalParams {
    fn default() -> Self {
        Self {
            goal_offset: 1.0,
            goal_forward: 0.5,
            dt: 0.05,
            horizon: 200,
            damping: 1.0,
            noise_std: 0.02,
            start_spread: 0.1,
            goal_tolerance: 0.05,
            action_cost: 0.01,
            asymmetric_friction: 0.0,
        }
    }
}

impl MirrorGoalParams {
    pub fn shifted(&self) -> Self {
        Self {
            goal_offset: self.goal_offset * 1.5,
            start_spread: self.start_spread * 2.0,
            ..self.clone()
        }
    }
}

/// State `(x, y, ẋ, ẏ, gx, gy)`, action = planar force in `[-1, 1]²`.
/// The reflection negates `(x, ẋ, gx)` and the lateral force.
#[derive(Debug, Clone)]
pub struct MirrorGoal {
    params: MirrorGoalParams,
    symmetry: SymmetrySpec,
}

impl MirrorGoal {
    pub fn new(params: MirrorGoalParams) -> Self {
        let symmetry = SymmetrySpec::reflection(
            sign_flip(&[-1.0, 1.0, -1.0, 1.0, -1.0, 1.0]),
            sign_flip(&[-1.0, 1.0]),
        )
        .expect("sign flips are involutions");
        Self { params, symmetry }
    }

    pub fn params(&self) -> &MirrorGoalParams {
        &self.params
    }

    fn goal_distance(state: &[f64]) -> f64 {
        (state[0] - state[4]).hypot(state[1] - state[5])
    }
}

impl SymmetricEnv for MirrorGoal {
    fn name(&self) -> &str {
        "mirror_goal"
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
        let s = self.params.start_spread;
        let x = rng.random_range(-s..=s);
        let y = rng.random_range(-s..=s);
        let right = vec![
            x,
            y,
            0.0,
            0.0,
            self.params.goal_offset,
            self.params.goal_forward,
        ];
        mirror_of(&self.symmetry, right, mode)
    }

    fn mode_of(&self, state: &[f64]) -> Mode {
        if state[4] > 0.0 {
            Mode::Right
        } else {
            Mode::Left
        }
    }

    fn sample_state(&self, rng: &mut SimRng) -> Vec<f64> {
        let d = self.params.goal_offset;
        vec![
            rng.random_range(-1.5..1.5),
            rng.random_range(-1.0..1.5),
            rng.random_range(-1.5..1.5),
            rng.random_range(-1.5..1.5),
            if rng.random_bool(0.5) { d } else { -d },
            self.params.goal_forward,
        ]
    }

    fn step(&self, state: &[f64], action: &[f64], noise: &[f64]) -> StepOutcome {
        let p = &self.params;
        let (x, y, vx, vy) = (state[0], state[1], state[2], state[3]);
        let (ax, ay) = (clip_unit(action[0]), clip_unit(action[1]));
        let kick = p.noise_std * p.dt.sqrt();
        let drag_x = p.damping * vx + p.asymmetric_friction * vx.max(0.0);
        let vx1 = vx + (ax - drag_x) * p.dt + kick * noise[0];
        let vy1 = vy + (ay - p.damping * vy) * p.dt + kick * noise[1];
        let next_state = vec![x + vx1 * p.dt, y + vy1 * p.dt, vx1, vy1, state[4], state[5]];
        let dist = Self::goal_distance(&next_state);
        let reward = -dist * p.dt - p.action_cost * (ax * ax + ay * ay) * p.dt;
        StepOutcome {
            terminated: dist < p.goal_tolerance,
            reward,
            commanded: 0.0,
            actual: dist,
            energy: EnergySample {
                torque: vec![ax, ay],
                joint_velocity: vec![vx1, vy1],
                base_speed: vx1.hypot(vy1),
            },
            next_state,
        }
    }

    fn transport_noise(&self, g: GroupElement, noise: &[f64]) -> Result<Vec<f64>, EnvError> {
        // Velocity noise is reflected like the velocity it perturbs.
        if g.is_identity() {
            Ok(noise.to_vec())
        } else {
            Ok(vec![-noise[0], noise[1]])
        }
    }

    fn is_success(&self, state: &[f64]) -> bool {
        Self::goal_distance(state) < self.params.goal_tolerance
    }
}
