//! `check`: executable symmetry and gradient certificates.

use std::fmt;

use symmrl_core::envs::{check_symmetric_mdp, make_broken_mirror_goal, EnvSpec, SymmetricEnv, SYMMETRY_TOLERANCE};
use symmrl_core::ppo::{
    gradient_checks, make_agent, policy_equivariance_error, value_invariance_error, Algo, NetConfig, PpoConfig,
    GRADIENT_TOLERANCE,
};
use symmrl_core::rng::{stream, STREAM_CHECK, STREAM_INIT};

use crate::error::{HarnessError, Result};

pub const ENV_SAMPLES: usize = 10_000;
pub const NETWORK_STATES: usize = 1000;
pub const NETWORK_TOLERANCE: f64 = 1e-10;
pub const GRADIENT_REPETITIONS: usize = 20;
/// Asymmetric friction of the fixture that must fail the env check.
pub const BROKEN_FRICTION: f64 = 0.5;
/// Transition residual the broken fixture must exceed.
pub const BROKEN_MIN_RESIDUAL: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    Env,
    Network,
    Gradients,
}

/// One measured residual against its bound.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckLine {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    /// Fixtures built to violate the property pass when the residual exceeds the bound.
    pub expect_violation: bool,
}

impl CheckLine {
    pub fn passed(&self) -> bool {
        if self.expect_violation {
            self.value > self.tolerance
        } else {
            self.value <= self.tolerance
        }
    }
}

impl fmt::Display for CheckLine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rel = if self.expect_violation { ">" } else { "<=" };
        let verdict = if self.passed() { "PASS" } else { "FAIL" };
        write!(f, "{verdict} {:<48} {:.3e} {rel} {:.1e}", self.name, self.value, self.tolerance)
    }
}

fn line(name: String, value: f64, tolerance: f64) -> CheckLine {
    CheckLine {
        name,
        value,
        tolerance,
        expect_violation: false,
    }
}

fn env_err(context: &str, e: impl Into<symmrl_core::PpoError>) -> HarnessError {
    HarnessError::Training {
        context: context.into(),
        source: e.into(),
    }
}

fn env_lines(env: &dyn SymmetricEnv, label: &str, out: &mut Vec<CheckLine>) -> Result<()> {
    let r = check_symmetric_mdp(env, ENV_SAMPLES, &mut stream(0, STREAM_CHECK)).map_err(|e| env_err(label, e))?;
    out.push(line(format!("{label}: transition residual"), r.transition_residual, SYMMETRY_TOLERANCE));
    out.push(line(format!("{label}: reward residual"), r.reward_residual, SYMMETRY_TOLERANCE));
    out.push(line(format!("{label}: termination mismatches"), r.termination_mismatches as f64, 0.0));
    out.push(line(format!("{label}: initial balance |P(right) - 1/2|"), r.initial_balance_deviation, r.balance_tolerance));
    Ok(())
}

pub fn run(target: Target) -> Result<Vec<CheckLine>> {
    let mut out = Vec::new();
    match target {
        Target::Env => {
            for name in EnvSpec::NAMES {
                let env = EnvSpec::from_name(name).expect("bundled name").build();
                env_lines(env.as_ref(), name, &mut out)?;
            }
            let broken = make_broken_mirror_goal(BROKEN_FRICTION);
            let r = check_symmetric_mdp(&broken, ENV_SAMPLES, &mut stream(0, STREAM_CHECK))
                .map_err(|e| env_err("broken fixture", e))?;
            out.push(CheckLine {
                name: "broken_mirror_goal fixture: transition residual".into(),
                value: r.transition_residual,
                tolerance: BROKEN_MIN_RESIDUAL,
                expect_violation: true,
            });
        }
        Target::Network => {
            for name in EnvSpec::NAMES {
                let env = EnvSpec::from_name(name).expect("bundled name").build();
                let spec = env.symmetry();
                for seed in 0..3 {
                    let ctx = format!("{name} seed {seed}");
                    let agent = make_agent(Algo::PpoEqic, spec, &NetConfig::default(), &PpoConfig::default(), &mut stream(seed, STREAM_INIT))
                        .map_err(|e| env_err(&ctx, e))?;
                    let mut rng = stream(seed, STREAM_CHECK);
                    let pe = policy_equivariance_error(&agent.policy, spec, NETWORK_STATES, &mut rng).map_err(|e| env_err(&ctx, e))?;
                    let ve = value_invariance_error(&agent.critic, spec, NETWORK_STATES, &mut rng).map_err(|e| env_err(&ctx, e))?;
                    out.push(line(format!("{ctx}: policy equivariance"), pe, NETWORK_TOLERANCE));
                    out.push(line(format!("{ctx}: value invariance"), ve, NETWORK_TOLERANCE));
                }
            }
        }
        Target::Gradients => {
            for name in EnvSpec::NAMES {
                let env = EnvSpec::from_name(name).expect("bundled name").build();
                let checks = gradient_checks(env.symmetry(), GRADIENT_REPETITIONS, &mut stream(0, STREAM_CHECK))
                    .map_err(|e| env_err(name, e))?;
                for c in checks {
                    out.push(line(format!("{name} {} {}: max relative error", c.algo, c.loss), c.max_relative_error, GRADIENT_TOLERANCE));
                }
            }
        }
    }
    Ok(out)
}

/// Prints every line and fails with the number of violated checks.
pub fn cmd_check(target: Target) -> Result<Vec<CheckLine>> {
    let lines = run(target)?;
    for l in &lines {
        println!("{l}");
    }
    let failed = lines.iter().filter(|l| !l.passed()).count();
    if failed > 0 {
        return Err(HarnessError::CheckFailed { failed });
    }
    Ok(lines)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn violation_fixtures_invert_the_verdict() {
        let mut l = line("x".into(), 0.5, 1e-3);
        assert!(!l.passed());
        l.expect_violation = true;
        assert!(l.passed());
        assert!(l.to_string().starts_with("PASS x"));
    }

    #[test]
    fn network_check_passes_for_fresh_agents() {
        let lines = run(Target::Network).unwrap();
        assert_eq!(lines.len(), 3 * 3 * 2);
        assert!(lines.iter().all(CheckLine::passed));
    }
}
