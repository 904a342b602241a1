use nalgebra::DMatrix;

use crate::error::PpoError;
use crate::group::{GroupElement, SymmetrySpec};

/// One environment step as seen by the learner.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    /// Sampled action before the environment clips it.
    pub action: Vec<f64>,
    pub reward: f64,
    /// Successor state before any reset.
    pub next_state: Vec<f64>,
    pub terminated: bool,
    /// Episode cut at the horizon without terminating.
    pub truncated: bool,
    /// `log π(a | s)` under the behavior policy.
    pub log_prob: f64,
    /// `V(s)` at collection time.
    pub value: f64,
    /// `V(s′)` at collection time.
    pub next_value: f64,
}

impl Transition {
    pub fn done(&self) -> bool {
        self.terminated || self.truncated
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeSummary {
    pub episodic_return: f64,
    pub length: usize,
    pub success: bool,
}

/// Generalized advantage estimates and returns for one trajectory segment.
///
/// `δ_t = r_t + γ·V′_t·(1 − terminated_t) − V_t` and
/// `A_t = δ_t + γλ·(1 − done_t)·A_{t+1}`, with `A` zero past the segment.
/// `next_values[t]` is the value of the successor of step `t`, so a
/// segment cut mid-episode is bootstrapped and a truncated episode keeps
/// its tail value.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    next_values: &[f64],
    terminated: &[bool],
    done: &[bool],
    gamma: f64,
    lambda: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    assert!(
        values.len() == n && next_values.len() == n && terminated.len() == n && done.len() == n,
        "trace arrays must have equal length"
    );
    let mut adv = vec![0.0; n];
    let mut next = 0.0;
    for t in (0..n).rev() {
        let bootstrap = if terminated[t] { 0.0 } else { gamma * next_values[t] };
        let delta = rewards[t] + bootstrap - values[t];
        let carry = if done[t] { 0.0 } else { gamma * lambda * next };
        adv[t] = delta + carry;
        next = adv[t];
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, returns)
}

/// Transitions per rollout worker plus derived advantages.
#[derive(Debug, Clone, Default)]
pub struct RolloutBuffer {
    pub workers: Vec<Vec<Transition>>,
    /// Episodes that finished during collection.
    pub episodes: Vec<EpisodeSummary>,
    advantages: Option<Vec<Vec<f64>>>,
    returns: Option<Vec<Vec<f64>>>,
    /// `(mean, std)` used for advantage normalization, if applied.
    pub advantage_normalization: Option<(f64, f64)>,
}

impl RolloutBuffer {
    pub fn new(workers: Vec<Vec<Transition>>, episodes: Vec<EpisodeSummary>) -> Self {
        Self {
            workers,
            episodes,
            ..Self::default()
        }
    }

    pub fn len(&self) -> usize {
        self.workers.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn transitions(&self) -> impl Iterator<Item = &Transition> {
        self.workers.iter().flatten()
    }

    /// Seals the buffer by computing advantages and returns per worker.
    pub fn compute_advantages(&mut self, gamma: f64, lambda: f64) {
        let (adv, ret): (Vec<_>, Vec<_>) = self
            .workers
            .iter()
            .map(|trace| {
                let r: Vec<f64> = trace.iter().map(|t| t.reward).collect();
                let v: Vec<f64> = trace.iter().map(|t| t.value).collect();
                let nv: Vec<f64> = trace.iter().map(|t| t.next_value).collect();
                let term: Vec<bool> = trace.iter().map(|t| t.terminated).collect();
                let done: Vec<bool> = trace.iter().map(Transition::done).collect();
                compute_gae(&r, &v, &nv, &term, &done, gamma, lambda)
            })
            .unzip();
        self.advantages = Some(adv);
        self.returns = Some(ret);
    }

    pub fn advantages(&self) -> Option<&[Vec<f64>]> {
        self.advantages.as_deref()
    }

    pub fn returns(&self) -> Option<&[Vec<f64>]> {
        self.returns.as_deref()
    }

    /// Flattens the sealed buffer, worker-major. With `normalize`, advantages
    /// are shifted and scaled to zero mean and unit standard deviation.
    pub fn to_batch(&mut self, normalize: bool) -> Result<Batch, PpoError> {
        let (Some(adv), Some(ret)) = (&self.advantages, &self.returns) else {
            return Err(PpoError::AdvantagesMissing);
        };
        let mut advantages: Vec<f64> = adv.iter().flatten().copied().collect();
        let returns: Vec<f64> = ret.iter().flatten().copied().collect();
        self.advantage_normalization = None;
        if normalize && !advantages.is_empty() {
            let n = advantages.len() as f64;
            let mean = advantages.iter().sum::<f64>() / n;
            let std = (advantages.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n).sqrt();
            let denom = std + 1e-8;
            advantages.iter_mut().for_each(|a| *a = (*a - mean) / denom);
            self.advantage_normalization = Some((mean, std));
        }
        let rows: Vec<&Transition> = self.transitions().collect();
        let n = rows.len();
        let sd = rows.first().map_or(0, |t| t.state.len());
        let ad = rows.first().map_or(0, |t| t.action.len());
        Ok(Batch {
            states: DMatrix::from_fn(n, sd, |i, j| rows[i].state[j]),
            actions: DMatrix::from_fn(n, ad, |i, j| rows[i].action[j]),
            old_log_probs: rows.iter().map(|t| t.log_prob).collect(),
            advantages,
            returns,
        })
    }
}

/// Learner-side samples, one row per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub states: DMatrix<f64>,
    pub actions: DMatrix<f64>,
    pub old_log_probs: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.old_log_probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn select(&self, rows: &[usize]) -> Batch {
        Batch {
            states: self.states.select_rows(rows),
            actions: self.actions.select_rows(rows),
            old_log_probs: rows.iter().map(|&i| self.old_log_probs[i]).collect(),
            advantages: rows.iter().map(|&i| self.advantages[i]).collect(),
            returns: rows.iter().map(|&i| self.returns[i]).collect(),
        }
    }

    fn append(&mut self, other: Batch) {
        let n = self.len();
        let m = other.len();
        let stack = |a: &DMatrix<f64>, b: &DMatrix<f64>| {
            DMatrix::from_fn(n + m, a.ncols(), |i, j| if i < n { a[(i, j)] } else { b[(i - n, j)] })
        };
        self.states = stack(&self.states, &other.states);
        self.actions = stack(&self.actions, &other.actions);
        self.old_log_probs.extend(other.old_log_probs);
        self.advantages.extend(other.advantages);
        self.returns.extend(other.returns);
    }
}

/// Image of a batch under `g`: states and actions are transformed, while
/// log-probabilities, advantages and returns are carried over.
pub fn transform_batch(batch: &Batch, spec: &SymmetrySpec, g: GroupElement) -> Batch {
    Batch {
        states: &batch.states * spec.rep_state.matrix(g).transpose(),
        actions: &batch.actions * spec.rep_action.matrix(g).transpose(),
        ..batch.clone()
    }
}

/// The batch followed by its image under every non-identity group element.
pub fn augment_minibatch(batch: &Batch, spec: &SymmetrySpec) -> Batch {
    let mut out = batch.clone();
    for g in spec.group.non_identity() {
        out.append(transform_batch(batch, spec, g));
    }
    out
}
