use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use super::buffer::{EpisodeSummary, RolloutBuffer, Transition};
use super::policy::{Critic, GaussianPolicy};
use crate::envs::{EnergySample, Mode, SymmetricEnv};
use crate::error::{EnvError, PpoError};
use crate::exec::Execution;
use crate::group::GroupElement;
use crate::metrics::{tracking_error, EvalRecord};
use crate::rng::{episode_stream, SimRng};

/// The group element that carries the right mode onto the left mode.
pub fn mirror_element(env: &dyn SymmetricEnv) -> Option<GroupElement> {
    env.symmetry().group.non_identity().next()
}

/// One rollout lane: an environment state and its private random stream.
///
/// With `mirror = Some(g)` every random draw (reset mode, action noise,
/// environment noise) is transported by `g`, so a mirrored worker sharing
/// a seed with a plain one replays its mirror image.
#[derive(Debug, Clone)]
pub struct Worker {
    pub state: Vec<f64>,
    pub rng: SimRng,
    pub mirror: Option<GroupElement>,
    episode_return: f64,
    episode_len: usize,
}

fn draw_mode(env: &dyn SymmetricEnv, rng: &mut SimRng) -> Mode {
    match env.mode_restriction() {
        Some(m) => m,
        None if rng.random_bool(0.5) => Mode::Right,
        None => Mode::Left,
    }
}

impl Worker {
    pub fn new(env: &dyn SymmetricEnv, mut rng: SimRng, mirror: Option<GroupElement>) -> Self {
        let state = Self::reset_state(env, &mut rng, mirror);
        Self {
            state,
            rng,
            mirror,
            episode_return: 0.0,
            episode_len: 0,
        }
    }

    fn reset_state(env: &dyn SymmetricEnv, rng: &mut SimRng, mirror: Option<GroupElement>) -> Vec<f64> {
        let mode = draw_mode(env, rng);
        let mode = if mirror.is_some() { mode.mirrored() } else { mode };
        env.reset_mode(mode, rng)
    }

    fn noise(&mut self, env: &dyn SymmetricEnv, policy: &GaussianPolicy) -> Result<(Vec<f64>, Vec<f64>), EnvError> {
        let eps: Vec<f64> = (0..policy.action_dim()).map(|_| self.rng.sample(StandardNormal)).collect();
        let env_noise = env.sample_noise(&mut self.rng);
        match self.mirror {
            None => Ok((eps, env_noise)),
            Some(g) => Ok((
                env.symmetry().rep_action.act(g, &eps)?,
                env.transport_noise(g, &env_noise)?,
            )),
        }
    }
}

struct StepRecord {
    transition: Transition,
    finished: Option<EpisodeSummary>,
}

fn state_matrix<'a>(rows: impl ExactSizeIterator<Item = &'a Vec<f64>>, dim: usize) -> DMatrix<f64> {
    let rows: Vec<&Vec<f64>> = rows.collect();
    DMatrix::from_fn(rows.len(), dim, |i, j| rows[i][j])
}

/// Collects `steps_per_env` transitions from every worker.
///
/// Policy and critic are evaluated once per step for all workers; the
/// environment steps fan out according to `exec`. Episodes that end are
/// reset in place, so workers carry state across calls.
pub fn collect_rollout(
    policy: &GaussianPolicy,
    critic: &Critic,
    env: &dyn SymmetricEnv,
    workers: &mut [Worker],
    steps_per_env: usize,
    exec: Execution,
) -> Result<RolloutBuffer, PpoError> {
    let sd = env.state_dim();
    let std: Vec<f64> = policy.log_std_per_dim().iter().map(|l| l.exp()).collect();
    let horizon = env.horizon();
    let mut traces: Vec<Vec<Transition>> = workers.iter().map(|_| Vec::with_capacity(steps_per_env)).collect();
    let mut episodes = Vec::new();

    for _ in 0..steps_per_env {
        let states = state_matrix(workers.iter().map(|w| &w.state), sd);
        let means = policy.mean_batch(&states)?;
        let values = critic.values(&states)?;
        let mut records: Vec<Option<Result<StepRecord, EnvError>>> = workers.iter().map(|_| None).collect();
        let mut pairs: Vec<(&mut Worker, &mut Option<Result<StepRecord, EnvError>>)> =
            workers.iter_mut().zip(records.iter_mut()).collect();
        exec.for_each_mut(&mut pairs, |i, (worker, slot)| {
            let mean: Vec<f64> = means.row(i).iter().copied().collect();
            **slot = Some(step_worker(worker, env, policy, &mean, &std, values[i], horizon));
        });
        drop(pairs);
        let mut next_states = Vec::with_capacity(workers.len());
        for (trace, rec) in traces.iter_mut().zip(records) {
            let rec = rec.expect("every worker stepped")?;
            next_states.push(rec.transition.next_state.clone());
            if let Some(ep) = rec.finished {
                episodes.push(ep);
            }
            trace.push(rec.transition);
        }
        let next_values = critic.values(&state_matrix(next_states.iter(), sd))?;
        for (trace, v) in traces.iter_mut().zip(next_values) {
            trace.last_mut().expect("pushed above").next_value = v;
        }
    }
    Ok(RolloutBuffer::new(traces, episodes))
}

fn step_worker(
    worker: &mut Worker,
    env: &dyn SymmetricEnv,
    policy: &GaussianPolicy,
    mean: &[f64],
    std: &[f64],
    value: f64,
    horizon: usize,
) -> Result<StepRecord, EnvError> {
    let (eps, noise) = worker.noise(env, policy)?;
    let action: Vec<f64> = mean.iter().zip(std).zip(&eps).map(|((m, s), e)| m + s * e).collect();
    let log_prob = policy.log_prob_given_mean(mean, &action);
    let out = env.step(&worker.state, &action, &noise);
    worker.episode_return += out.reward;
    worker.episode_len += 1;
    let terminated = out.terminated;
    let truncated = !terminated && worker.episode_len >= horizon;
    let finished = (terminated || truncated).then(|| EpisodeSummary {
        episodic_return: worker.episode_return,
        length: worker.episode_len,
        success: env.is_success(&out.next_state),
    });
    let state = std::mem::take(&mut worker.state);
    worker.state = if finished.is_some() {
        worker.episode_return = 0.0;
        worker.episode_len = 0;
        Worker::reset_state(env, &mut worker.rng, worker.mirror)
    } else {
        out.next_state.clone()
    };
    Ok(StepRecord {
        transition: Transition {
            state,
            action,
            reward: out.reward,
            next_state: out.next_state,
            terminated,
            truncated,
            log_prob,
            value,
            next_value: 0.0,
        },
        finished,
    })
}

/// A full evaluation episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeTrace {
    pub mode: Mode,
    pub states: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
    pub rewards: Vec<f64>,
    pub dones: Vec<bool>,
    pub commanded: Vec<f64>,
    pub actual: Vec<f64>,
    pub energy: Vec<EnergySample>,
    pub success: bool,
}

impl EpisodeTrace {
    pub fn episodic_return(&self) -> f64 {
        self.rewards.iter().sum()
    }

    pub fn to_record(&self) -> EvalRecord {
        EvalRecord {
            mode: self.mode,
            success: self.success,
            episodic_return: self.episodic_return(),
            tracking_error: tracking_error(&self.commanded, &self.actual).unwrap_or(f64::NAN),
            energy: self.energy.clone(),
        }
    }
}

/// Runs one episode from `env.reset_mode(mode, rng)`.
///
/// Deterministic episodes act with the policy mean. With `mirror = Some(g)`
/// action and environment noise are transported by `g`; starting the left
/// mode with the seed of a right-mode episode then replays its mirror image.
/// Success is true if any visited state satisfies the task predicate.
pub fn run_episode(
    policy: &GaussianPolicy,
    env: &dyn SymmetricEnv,
    mode: Mode,
    mirror: Option<GroupElement>,
    rng: &mut SimRng,
    deterministic: bool,
) -> Result<EpisodeTrace, PpoError> {
    let std: Vec<f64> = policy.log_std_per_dim().iter().map(|l| l.exp()).collect();
    let mut state = env.reset_mode(mode, rng);
    let mut trace = EpisodeTrace {
        mode,
        states: Vec::new(),
        actions: Vec::new(),
        rewards: Vec::new(),
        dones: Vec::new(),
        commanded: Vec::new(),
        actual: Vec::new(),
        energy: Vec::new(),
        success: false,
    };
    for t in 0..env.horizon() {
        let mean = policy.mean.forward(&state)?;
        let mut eps: Vec<f64> = (0..policy.action_dim()).map(|_| rng.sample(StandardNormal)).collect();
        let mut noise = env.sample_noise(rng);
        if let Some(g) = mirror {
            eps = env.symmetry().rep_action.act(g, &eps).map_err(EnvError::from)?;
            noise = env.transport_noise(g, &noise)?;
        }
        let action: Vec<f64> = if deterministic {
            mean
        } else {
            mean.iter().zip(&std).zip(&eps).map(|((m, s), e)| m + s * e).collect()
        };
        let out = env.step(&state, &action, &noise);
        trace.success |= env.is_success(&out.next_state);
        let done = out.terminated || t + 1 == env.horizon();
        trace.states.push(std::mem::replace(&mut state, out.next_state));
        trace.actions.push(action);
        trace.rewards.push(out.reward);
        trace.dones.push(done);
        trace.commanded.push(out.commanded);
        trace.actual.push(out.actual);
        trace.energy.push(out.energy);
        if out.terminated {
            break;
        }
    }
    Ok(trace)
}

/// Modes covered by an evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalModes {
    Left,
    Right,
    Both,
}

/// Runs `episodes` evaluation episodes per requested mode.
///
/// Episode `i` of each mode draws from the same stream; the left-mode
/// episode transports that stream's draws through the mirror element, so
/// the two modes are coupled by common random numbers.
pub fn evaluate_paired(
    policy: &GaussianPolicy,
    env: &dyn SymmetricEnv,
    episodes: usize,
    modes: EvalModes,
    root_seed: u64,
    deterministic: bool,
    exec: Execution,
) -> Result<Vec<EpisodeTrace>, PpoError> {
    let mirror = mirror_element(env);
    let jobs: Vec<(usize, Mode)> = (0..episodes)
        .flat_map(|i| {
            let right = matches!(modes, EvalModes::Right | EvalModes::Both).then_some((i, Mode::Right));
            let left = matches!(modes, EvalModes::Left | EvalModes::Both).then_some((i, Mode::Left));
            right.into_iter().chain(left)
        })
        .collect();
    exec.map(&jobs, |_, &(i, mode)| {
        let mut rng = episode_stream(root_seed, i);
        let transport = if mode == Mode::Left { mirror } else { None };
        run_episode(policy, env, mode, transport, &mut rng, deterministic)
    })
    .into_iter()
    .collect()
}
