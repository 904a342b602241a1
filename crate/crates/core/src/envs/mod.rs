//! Small environments whose dynamics, rewards and initial distributions are
//! invariant under a reflection of the state and action spaces.
//!
//! All stochasticity enters through reset sampling and an explicit per-step
//! noise vector. Because the noise can be transported by the group action,
//! the symmetry conditions can be checked pathwise with common random
//! numbers instead of by density estimates.

use std::fmt;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::EnvError;
use crate::group::{GroupElement, SymmetrySpec};
use crate::rng::SimRng;

mod check;
mod door;
mod hopper;
mod mirror_goal;

pub use check::{check_symmetric_mdp, SymmetryReport, SYMMETRY_TOLERANCE};
pub use door::{ToyDoor, ToyDoorParams};
pub use hopper::{PhaseHopper, PhaseHopperParams};
pub use mirror_goal::{MirrorGoal, MirrorGoalParams};

/// Which of the two mirrored task modes an episode belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Left,
    Right,
}

impl Mode {
    pub fn mirrored(self) -> Mode {
        match self {
            Mode::Left => Mode::Right,
            Mode::Right => Mode::Left,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Left => "left",
            Mode::Right => "right",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Per-step actuator data used by the cost-of-transport metric.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergySample {
    pub torque: Vec<f64>,
    pub joint_velocity: Vec<f64>,
    pub base_speed: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub next_state: Vec<f64>,
    pub reward: f64,
    pub terminated: bool,
    /// Commanded value of the tracked signal.
    pub commanded: f64,
    /// Achieved value of the tracked signal.
    pub actual: f64,
    pub energy: EnergySample,
}

pub trait SymmetricEnv: Send + Sync + fmt::Debug {
    fn name(&self) -> &str;

    fn symmetry(&self) -> &SymmetrySpec;

    /// Length of the per-step noise vector.
    fn noise_dim(&self) -> usize;

    /// Maximum episode length in steps.
    fn horizon(&self) -> usize;

    /// Initial state in the given mode. Implementations draw the left mode
    /// as the mirror image of the right mode under the same random draws.
    fn reset_mode(&self, mode: Mode, rng: &mut SimRng) -> Vec<f64>;

    fn mode_of(&self, state: &[f64]) -> Mode;

    /// A state from a broad region of the state space, for symmetry checks.
    fn sample_state(&self, rng: &mut SimRng) -> Vec<f64>;

    fn step(&self, state: &[f64], action: &[f64], noise: &[f64]) -> StepOutcome;

    /// Noise vector that drives the mirrored transition.
    fn transport_noise(&self, g: GroupElement, noise: &[f64]) -> Result<Vec<f64>, EnvError>;

    fn is_success(&self, state: &[f64]) -> bool;

    /// If set, resets always use this mode.
    fn mode_restriction(&self) -> Option<Mode> {
        None
    }

    fn state_dim(&self) -> usize {
        self.symmetry().state_dim()
    }

    fn action_dim(&self) -> usize {
        self.symmetry().action_dim()
    }

    fn reset(&self, rng: &mut SimRng) -> Vec<f64> {
        let mode = match self.mode_restriction() {
            Some(m) => m,
            None if rng.random_bool(0.5) => Mode::Right,
            None => Mode::Left,
        };
        self.reset_mode(mode, rng)
    }

    fn sample_noise(&self, rng: &mut SimRng) -> Vec<f64> {
        (0..self.noise_dim()).map(|_| rng.sample(StandardNormal)).collect()
    }
}

/// Mirror image of a right-mode draw, shared by the bundled environments.
pub(crate) fn mirror_of(spec: &SymmetrySpec, state: Vec<f64>, mode: Mode) -> Vec<f64> {
    match mode {
        Mode::Right => state,
        Mode::Left => spec
            .rep_state
            .act(GroupElement(1), &state)
            .expect("state dimension matches representation"),
    }
}

/// Restricts resets to a single mode (single-side training).
#[derive(Debug)]
pub struct ModeRestricted {
    inner: Box<dyn SymmetricEnv>,
    mode: Mode,
}

impl ModeRestricted {
    pub fn new(inner: Box<dyn SymmetricEnv>, mode: Mode) -> Self {
        Self { inner, mode }
    }
}

impl SymmetricEnv for ModeRestricted {
    fn name(&self) -> &str {
        self.inner.name()
    }
    fn symmetry(&self) -> &SymmetrySpec {
        self.inner.symmetry()
    }
    fn noise_dim(&self) -> usize {
        self.inner.noise_dim()
    }
    fn horizon(&self) -> usize {
        self.inner.horizon()
    }
    fn reset_mode(&self, mode: Mode, rng: &mut SimRng) -> Vec<f64> {
        self.inner.reset_mode(mode, rng)
    }
    fn mode_of(&self, state: &[f64]) -> Mode {
        self.inner.mode_of(state)
    }
    fn sample_state(&self, rng: &mut SimRng) -> Vec<f64> {
        self.inner.sample_state(rng)
    }
    fn step(&self, state: &[f64], action: &[f64], noise: &[f64]) -> StepOutcome {
        self.inner.step(state, action, noise)
    }
    fn transport_noise(&self, g: GroupElement, noise: &[f64]) -> Result<Vec<f64>, EnvError> {
        self.inner.transport_noise(g, noise)
    }
    fn is_success(&self, state: &[f64]) -> bool {
        self.inner.is_success(state)
    }
    fn mode_restriction(&self) -> Option<Mode> {
        Some(self.mode)
    }
}

/// Declarative environment selection with per-environment parameter overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum EnvSpec {
    MirrorGoal(MirrorGoalParams),
    ToyDoor(ToyDoorParams),
    PhaseHopper(PhaseHopperParams),
}

impl EnvSpec {
    pub const NAMES: [&'static str; 3] = ["mirror_goal", "toy_door", "phase_hopper"];

    /// Default parameters for a named environment.
    pub fn from_name(name: &str) -> Result<Self, EnvError> {
        match name {
            "mirror_goal" => Ok(EnvSpec::MirrorGoal(MirrorGoalParams::default())),
            "toy_door" => Ok(EnvSpec::ToyDoor(ToyDoorParams::default())),
            "phase_hopper" => Ok(EnvSpec::PhaseHopper(PhaseHopperParams::default())),
            other => Err(EnvError::UnknownEnv(other.to_string())),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            EnvSpec::MirrorGoal(_) => "mirror_goal",
            EnvSpec::ToyDoor(_) => "toy_door",
            EnvSpec::PhaseHopper(_) => "phase_hopper",
        }
    }

    /// Distribution-shifted variant used for out-of-distribution evaluation.
    pub fn shifted(&self) -> Self {
        match self {
            EnvSpec::MirrorGoal(p) => EnvSpec::MirrorGoal(p.shifted()),
            EnvSpec::ToyDoor(p) => EnvSpec::ToyDoor(p.shifted()),
            EnvSpec::PhaseHopper(p) => EnvSpec::PhaseHopper(p.shifted()),
        }
    }

    pub fn build(&self) -> Box<dyn SymmetricEnv> {
        match self {
            EnvSpec::MirrorGoal(p) => Box::new(MirrorGoal::new(p.clone())),
            EnvSpec::ToyDoor(p) => Box::new(ToyDoor::new(p.clone())),
            EnvSpec::PhaseHopper(p) => Box::new(PhaseHopper::new(p.clone())),
        }
    }

    /// Checks parameter ranges. On failure returns the offending field name
    /// and the violated requirement.
    pub fn validate(&self) -> Result<(), (&'static str, &'static str)> {
        const POS: &str = "must be positive and finite";
        const NONNEG: &str = "must be non-negative and finite";
        let pos = |v: f64| v.is_finite() && v > 0.0;
        let nonneg = |v: f64| v.is_finite() && v >= 0.0;
        let checks: Vec<(&'static str, bool, &'static str)> = match self {
            EnvSpec::MirrorGoal(p) => vec![
                ("dt", pos(p.dt), POS),
                ("horizon", p.horizon > 0, POS),
                ("goal_offset", pos(p.goal_offset), POS),
                ("goal_forward", p.goal_forward.is_finite(), "must be finite"),
                ("damping", nonneg(p.damping), NONNEG),
                ("noise_std", nonneg(p.noise_std), NONNEG),
                ("start_spread", nonneg(p.start_spread), NONNEG),
                ("goal_tolerance", nonneg(p.goal_tolerance), NONNEG),
                ("action_cost", nonneg(p.action_cost), NONNEG),
                ("asymmetric_friction", nonneg(p.asymmetric_friction), NONNEG),
            ],
            EnvSpec::ToyDoor(p) => vec![
                ("dt", pos(p.dt), POS),
                ("horizon", p.horizon > 0, POS),
                ("damping", nonneg(p.damping), NONNEG),
                ("noise_std", nonneg(p.noise_std), NONNEG),
                ("door_y", pos(p.door_y), POS),
                ("door_half_width", pos(p.door_half_width), POS),
                ("push_gain", nonneg(p.push_gain), NONNEG),
                ("door_damping", nonneg(p.door_damping), NONNEG),
                ("pass_angle", pos(p.pass_angle), POS),
                ("success_angle", pos(p.success_angle), POS),
                ("success_y", p.success_y.is_finite(), "must be finite"),
                ("target_speed", nonneg(p.target_speed), NONNEG),
                ("action_cost", nonneg(p.action_cost), NONNEG),
                ("success_bonus", nonneg(p.success_bonus), NONNEG),
                ("start_x_spread", nonneg(p.start_x_spread), NONNEG),
                ("start_y", p.start_y.is_finite(), "must be finite"),
                ("start_y_spread", nonneg(p.start_y_spread), NONNEG),
                ("x_limit", pos(p.x_limit), POS),
            ],
            EnvSpec::PhaseHopper(p) => vec![
                ("dt", pos(p.dt), POS),
                ("period", pos(p.period), POS),
                ("horizon", p.horizon > 0, POS),
                ("lift_gain", nonneg(p.lift_gain), NONNEG),
                ("gravity", nonneg(p.gravity), NONNEG),
                ("thrust_gain", nonneg(p.thrust_gain), NONNEG),
                ("drag", nonneg(p.drag), NONNEG),
                ("load_tau", pos(p.load_tau), POS),
                ("target_speed", nonneg(p.target_speed), NONNEG),
                ("target_height", pos(p.target_height), POS),
                ("height_weight", nonneg(p.height_weight), NONNEG),
                ("stepping_weight", nonneg(p.stepping_weight), NONNEG),
                ("action_cost", nonneg(p.action_cost), NONNEG),
                ("noise_std", nonneg(p.noise_std), NONNEG),
                ("fall_height", nonneg(p.fall_height), NONNEG),
                ("max_height", pos(p.max_height), POS),
                ("start_height_spread", nonneg(p.start_height_spread), NONNEG),
                ("start_speed_spread", nonneg(p.start_speed_spread), NONNEG),
            ],
        };
        match checks.into_iter().find(|c| !c.1) {
            Some((field, _, reason)) => Err((field, reason)),
            None => Ok(()),
        }
    }

    /// Builds the environment, optionally restricted to one mode.
    pub fn build_restricted(&self, mode: Option<Mode>) -> Box<dyn SymmetricEnv> {
        match mode {
            Some(m) => Box::new(ModeRestricted::new(self.build(), m)),
            None => self.build(),
        }
    }
}

pub fn make_mirror_goal() -> MirrorGoal {
    MirrorGoal::new(MirrorGoalParams::default())
}

pub fn make_toy_door() -> ToyDoor {
    ToyDoor::new(ToyDoorParams::default())
}

pub fn make_phase_hopper() -> PhaseHopper {
    PhaseHopper::new(PhaseHopperParams::default())
}

/// `mirror_goal` with extra friction on positive lateral velocity only,
/// which breaks the transition symmetry.
pub fn make_broken_mirror_goal(friction: f64) -> MirrorGoal {
    MirrorGoal::new(MirrorGoalParams {
        asymmetric_friction: friction,
        ..MirrorGoalParams::default()
    })
}

pub(crate) fn clip_unit(x: f64) -> f64 {
    x.clamp(-1.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn env_spec_round_trips_through_names() {
        for name in EnvSpec::NAMES {
            let spec = EnvSpec::from_name(name).unwrap();
            assert_eq!(spec.name(), name);
            assert_eq!(spec.build().name(), name);
        }
        assert!(matches!(EnvSpec::from_name("cartpole"), Err(EnvError::UnknownEnv(_))));
    }

    #[test]
    fn restricted_env_always_resets_in_its_mode() {
        let env = EnvSpec::from_name("toy_door").unwrap().build_restricted(Some(Mode::Right));
        let mut rng = stream(0, 0);
        for _ in 0..200 {
            let s = env.reset(&mut rng);
            assert_eq!(env.mode_of(&s), Mode::Right);
        }
    }

    #[test]
    fn env_spec_accepts_partial_overrides() {
        let json = r#"{"name": "mirror_goal", "horizon": 50}"#;
        let spec: EnvSpec = serde_json::from_str(json).unwrap();
        match spec {
            EnvSpec::MirrorGoal(p) => {
                assert_eq!(p.horizon, 50);
                assert_eq!(p.goal_offset, 1.0);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn validation_names_the_bad_field() {
        for name in EnvSpec::NAMES {
            assert_eq!(EnvSpec::from_name(name).unwrap().validate(), Ok(()));
            assert_eq!(EnvSpec::from_name(name).unwrap().shifted().validate(), Ok(()));
        }
        let bad = EnvSpec::MirrorGoal(MirrorGoalParams { dt: -0.1, ..MirrorGoalParams::default() });
        assert_eq!(bad.validate(), Err(("dt", "must be positive and finite")));
        let bad = EnvSpec::PhaseHopper(PhaseHopperParams { horizon: 0, ..PhaseHopperParams::default() });
        assert_eq!(bad.validate().unwrap_err().0, "horizon");
    }
}
