use nalgebra::DMatrix;
use rand::seq::SliceRandom;

use super::agent::Agent;
use super::buffer::{augment_minibatch, Batch, RolloutBuffer};
use super::Algo;
use crate::autodiff::{Tape, Var};
use crate::error::{NetworkError, PpoError};
use crate::rng::SimRng;

/// Coefficients of `w_s·surrogate + w_v·value − w_e·entropy`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub surrogate: f64,
    pub value: f64,
    pub entropy: f64,
}

impl LossWeights {
    pub const SURROGATE: LossWeights = LossWeights { surrogate: 1.0, value: 0.0, entropy: 0.0 };
    pub const VALUE: LossWeights = LossWeights { surrogate: 0.0, value: 1.0, entropy: 0.0 };
    pub const ENTROPY: LossWeights = LossWeights { surrogate: 0.0, value: 0.0, entropy: 1.0 };
}

/// Scalar loss terms of one minibatch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossValues {
    pub total: f64,
    /// `−mean(min(ρ·A, clip(ρ)·A))`.
    pub surrogate: f64,
    /// `mean((V − R)²)`.
    pub value: f64,
    pub entropy: f64,
    /// `mean((ρ − 1) − ln ρ)`.
    pub approx_kl: f64,
    /// Fraction of samples with `|ρ − 1| > ε`.
    pub clip_fraction: f64,
}

/// Mean loss terms over the minibatches of one update.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct UpdateReport {
    pub surrogate_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    pub minibatches: usize,
}

struct LossGraph {
    total: Var,
    surrogate: Var,
    value: Var,
    entropy: Var,
    log_prob: Var,
}

impl Agent {
    fn record_loss(
        &self,
        tape: &mut Tape,
        rows: (Var, Var, Var),
        batch: &Batch,
        weights: LossWeights,
    ) -> LossGraph {
        let (policy_row, log_std_row, critic_row) = rows;
        let n = batch.len();
        let eps = self.config.clip;
        let states = tape.constant(batch.states.clone());
        let actions = tape.constant(batch.actions.clone());
        let old = tape.constant(DMatrix::from_column_slice(n, 1, &batch.old_log_probs));
        let adv = tape.constant(DMatrix::from_column_slice(n, 1, &batch.advantages));
        let ret = tape.constant(DMatrix::from_column_slice(n, 1, &batch.returns));

        let mean = self.policy.mean.forward_tape(tape, policy_row, states);
        let log_std = self.policy.expand_log_std(tape, log_std_row);
        let log_prob = self.policy.log_prob_tape(tape, mean, log_std, actions);
        let log_ratio = tape.sub(log_prob, old);
        let ratio = tape.exp(log_ratio);
        let unclipped = tape.mul(ratio, adv);
        let clipped = tape.clamp(ratio, 1.0 - eps, 1.0 + eps);
        let clipped = tape.mul(clipped, adv);
        let objective = tape.min(unclipped, clipped);
        let objective = tape.mean(objective);
        let surrogate = tape.neg(objective);

        let v = self.critic.value.forward_tape(tape, critic_row, states);
        let err = tape.sub(v, ret);
        let err = tape.square(err);
        let value = tape.mean(err);

        let entropy = self.policy.entropy_tape(tape, log_std);

        let s = tape.scale(surrogate, weights.surrogate);
        let vl = tape.scale(value, weights.value);
        let e = tape.scale(entropy, -weights.entropy);
        let total = tape.add(s, vl);
        let total = tape.add(total, e);
        LossGraph {
            total,
            surrogate,
            value,
            entropy,
            log_prob,
        }
    }

    fn loss_values(&self, tape: &Tape, graph: &LossGraph, batch: &Batch) -> LossValues {
        let lp = tape.value(graph.log_prob);
        let n = batch.len().max(1) as f64;
        let (mut kl, mut clipped) = (0.0, 0usize);
        for (i, old) in batch.old_log_probs.iter().enumerate() {
            let log_r = lp[(i, 0)] - old;
            kl += log_r.exp() - 1.0 - log_r;
            if (log_r.exp() - 1.0).abs() > self.config.clip {
                clipped += 1;
            }
        }
        LossValues {
            total: tape.scalar(graph.total),
            surrogate: tape.scalar(graph.surrogate),
            value: tape.scalar(graph.value),
            entropy: tape.scalar(graph.entropy),
            approx_kl: kl / n,
            clip_fraction: clipped as f64 / n,
        }
    }

    fn rows(&self, tape: &mut Tape, params: &[f64], differentiable: bool) -> (Var, Var, Var) {
        let (a, b, _) = self.param_split();
        let mut row = |s: &[f64]| {
            let m = DMatrix::from_row_slice(1, s.len(), s);
            if differentiable {
                tape.param(m)
            } else {
                tape.constant(m)
            }
        };
        (row(&params[..a]), row(&params[a..a + b]), row(&params[a + b..]))
    }

    /// Loss terms and gradient of the weighted total with respect to the
    /// flat parameter vector `params`.
    pub fn loss_and_grad(
        &self,
        params: &[f64],
        batch: &Batch,
        weights: LossWeights,
    ) -> Result<(LossValues, Vec<f64>), PpoError> {
        let mut tape = Tape::new();
        let rows = self.rows(&mut tape, params, true);
        let graph = self.record_loss(&mut tape, rows, batch, weights);
        let values = self.loss_values(&tape, &graph, batch);
        let grads = tape.backward(graph.total)?;
        let mut flat = Vec::with_capacity(params.len());
        for (v, len) in [(rows.0, self.param_split().0), (rows.1, self.param_split().1), (rows.2, self.param_split().2)] {
            match grads.wrt(v) {
                Some(g) => flat.extend(g.iter().copied()),
                None => flat.extend(std::iter::repeat_n(0.0, len)),
            }
        }
        Ok((values, flat))
    }

    /// Weighted total loss at `params`, without recording gradients.
    pub fn loss_at(&self, params: &[f64], batch: &Batch, weights: LossWeights) -> LossValues {
        let mut tape = Tape::new();
        let rows = self.rows(&mut tape, params, false);
        let graph = self.record_loss(&mut tape, rows, batch, weights);
        self.loss_values(&tape, &graph, batch)
    }

    /// One PPO update over a sealed buffer: `epochs` passes of shuffled
    /// minibatches, augmented for `ppoaug`, each followed by an Adam step.
    pub fn update(&mut self, buffer: &mut RolloutBuffer, rng: &mut SimRng) -> Result<UpdateReport, PpoError> {
        let batch = buffer.to_batch(self.config.normalize_advantages)?;
        let weights = LossWeights {
            surrogate: 1.0,
            value: self.config.value_coef,
            entropy: self.config.entropy_coef,
        };
        let mut report = UpdateReport::default();
        let mut order: Vec<usize> = (0..batch.len()).collect();
        let size = self.config.minibatch_size.max(1);
        let mut params = self.flat_params();
        for epoch in 0..self.config.epochs {
            order.shuffle(rng);
            for chunk in order.chunks(size) {
                let mut mb = batch.select(chunk);
                if self.algo == Algo::PpoAug {
                    mb = augment_minibatch(&mb, &self.spec);
                    self.augment_calls += 1;
                }
                let (values, grads) = self.loss_and_grad(&params, &mb, weights)?;
                if !values.total.is_finite() || grads.iter().any(|g| !g.is_finite()) {
                    return Err(PpoError::NonFiniteLoss {
                        iteration: self.iteration,
                        epoch,
                        surrogate: values.surrogate,
                        value: values.value,
                        entropy: values.entropy,
                    });
                }
                let grads = clip_global_norm(grads, self.config.max_grad_norm);
                self.optimizer.step(&mut params, &grads);
                self.set_flat_params(&params);
                report.surrogate_loss += values.surrogate;
                report.value_loss += values.value;
                report.entropy += values.entropy;
                report.approx_kl += values.approx_kl;
                report.clip_fraction += values.clip_fraction;
                report.minibatches += 1;
            }
        }
        if report.minibatches > 0 {
            let m = report.minibatches as f64;
            report.surrogate_loss /= m;
            report.value_loss /= m;
            report.entropy /= m;
            report.approx_kl /= m;
            report.clip_fraction /= m;
        }
        self.iteration += 1;
        Ok(report)
    }
}

/// Rescales `grads` so its Euclidean norm is at most `max_norm`.
fn clip_global_norm(mut grads: Vec<f64>, max_norm: f64) -> Vec<f64> {
    let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        let scale = max_norm / norm;
        grads.iter_mut().for_each(|g| *g *= scale);
    }
    grads
}

/// Per-sample loss terms at the agent's current parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct PerSampleLosses {
    /// `−min(ρ·A, clip(ρ)·A)`.
    pub surrogate: Vec<f64>,
    /// `(V − R)²`.
    pub value: Vec<f64>,
    pub log_prob: Vec<f64>,
}

pub fn per_sample_losses(agent: &Agent, batch: &Batch) -> Result<PerSampleLosses, NetworkError> {
    let means = agent.policy.mean_batch(&batch.states)?;
    let values = agent.critic.values(&batch.states)?;
    let eps = agent.config.clip;
    let mut out = PerSampleLosses {
        surrogate: Vec::with_capacity(batch.len()),
        value: Vec::with_capacity(batch.len()),
        log_prob: Vec::with_capacity(batch.len()),
    };
    for (i, v) in values.iter().enumerate() {
        let mean: Vec<f64> = means.row(i).iter().copied().collect();
        let action: Vec<f64> = batch.actions.row(i).iter().copied().collect();
        let lp = agent.policy.log_prob_given_mean(&mean, &action);
        let ratio = (lp - batch.old_log_probs[i]).exp();
        let a = batch.advantages[i];
        out.surrogate.push(-(ratio * a).min(ratio.clamp(1.0 - eps, 1.0 + eps) * a));
        out.value.push((v - batch.returns[i]).powi(2));
        out.log_prob.push(lp);
    }
    Ok(out)
}
