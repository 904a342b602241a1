//! Evaluation quantities: success rate, symmetry index, tracking error,
//! cost of transport and seed aggregation.

use serde::{Deserialize, Serialize};

use crate::envs::{EnergySample, Mode};
use crate::error::MetricError;

/// One evaluation episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRecord {
    pub mode: Mode,
    pub success: bool,
    pub episodic_return: f64,
    /// Mean absolute tracking error over the episode.
    pub tracking_error: f64,
    pub energy: Vec<EnergySample>,
}

impl EvalRecord {
    pub fn cost_of_transport(&self) -> Result<f64, MetricError> {
        cost_of_transport(&self.energy)
    }
}

/// `2|x_R − x_L| / (x_R + x_L) · 100`.
///
/// Undefined (not zero) when both inputs are zero.
pub fn symmetry_index(x_right: f64, x_left: f64) -> Result<f64, MetricError> {
    if !(x_right.is_finite() && x_left.is_finite()) || x_right < 0.0 || x_left < 0.0 {
        return Err(MetricError::InvalidInput);
    }
    let total = x_right + x_left;
    if total == 0.0 {
        return Err(MetricError::BothZero);
    }
    Ok(2.0 * (x_right - x_left).abs() / total * 100.0)
}

/// Positive mechanical work over all actuators and steps, divided by the
/// accumulated base speed.
pub fn cost_of_transport(trace: &[EnergySample]) -> Result<f64, MetricError> {
    let mut work = 0.0;
    let mut distance = 0.0;
    for step in trace {
        if step.torque.len() != step.joint_velocity.len() {
            return Err(MetricError::LengthMismatch(step.torque.len(), step.joint_velocity.len()));
        }
        work += step
            .torque
            .iter()
            .zip(&step.joint_velocity)
            .map(|(t, w)| (t * w).max(0.0))
            .sum::<f64>();
        distance += step.base_speed.abs();
    }
    if distance == 0.0 {
        return Err(MetricError::ZeroDisplacement);
    }
    Ok(work / distance)
}

/// Fraction of successful episodes, optionally restricted to one mode.
pub fn success_rate(records: &[EvalRecord], mode: Option<Mode>) -> Result<f64, MetricError> {
    let (hits, total) = records
        .iter()
        .filter(|r| mode.is_none_or(|m| r.mode == m))
        .fold((0usize, 0usize), |(h, n), r| (h + r.success as usize, n + 1));
    if total == 0 {
        return Err(MetricError::EmptyFilter);
    }
    Ok(hits as f64 / total as f64)
}

pub fn tracking_error(commanded: &[f64], actual: &[f64]) -> Result<f64, MetricError> {
    if commanded.len() != actual.len() {
        return Err(MetricError::LengthMismatch(commanded.len(), actual.len()));
    }
    if commanded.is_empty() {
        return Err(MetricError::EmptyFilter);
    }
    let total: f64 = commanded.iter().zip(actual).map(|(c, a)| (c - a).abs()).sum();
    Ok(total / commanded.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeedAggregate {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub max: f64,
}

pub fn aggregate_seeds(values: &[f64]) -> Result<SeedAggregate, MetricError> {
    if values.is_empty() {
        return Err(MetricError::EmptyFilter);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(SeedAggregate { mean, std: var.sqrt(), max })
}
