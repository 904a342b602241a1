//! Rollout collection and one PPO update, sequential vs rayon.
//!
//! Build with `--no-default-features` to see both arms run sequentially.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use symmrl_core::envs::{EnvSpec, SymmetricEnv};
use symmrl_core::exec::Execution;
use symmrl_core::ppo::{collect_rollout, make_agent, Algo, NetConfig, PpoConfig, Worker};
use symmrl_core::rng::{stream, worker_stream, STREAM_INIT};

const WORKERS: usize = 16;
const STEPS: usize = 128;

fn workers(env: &dyn SymmetricEnv) -> Vec<Worker> {
    (0..WORKERS).map(|w| Worker::new(env, worker_stream(0, w), None)).collect()
}

fn rollout(c: &mut Criterion) {
    let mut group = c.benchmark_group("rollout");
    group.sample_size(10);
    for name in ["mirror_goal", "phase_hopper"] {
        let env = EnvSpec::from_name(name).unwrap().build();
        for algo in [Algo::Ppo, Algo::PpoEqic] {
            let agent =
                make_agent(algo, env.symmetry(), &NetConfig::default(), &PpoConfig::default(), &mut stream(0, STREAM_INIT))
                    .unwrap();
            for exec in [Execution::Sequential, Execution::Parallel] {
                let id = BenchmarkId::new(format!("{name}/{algo}"), format!("{exec:?}"));
                group.bench_function(id, |b| {
                    b.iter_batched(
                        || workers(env.as_ref()),
                        |mut ws| collect_rollout(&agent.policy, &agent.critic, env.as_ref(), &mut ws, STEPS, exec).unwrap(),
                        criterion::BatchSize::LargeInput,
                    )
                });
            }
        }
    }
    group.finish();
}

fn update(c: &mut Criterion) {
    let mut group = c.benchmark_group("update");
    group.sample_size(10);
    let env = EnvSpec::from_name("mirror_goal").unwrap().build();
    let cfg = PpoConfig {
        num_envs: WORKERS,
        steps_per_env: STEPS,
        epochs: 1,
        ..PpoConfig::default()
    };
    for algo in Algo::ALL {
        let agent = make_agent(algo, env.symmetry(), &NetConfig::default(), &cfg, &mut stream(0, STREAM_INIT)).unwrap();
        let mut ws = workers(env.as_ref());
        let mut buffer =
            collect_rollout(&agent.policy, &agent.critic, env.as_ref(), &mut ws, STEPS, Execution::Parallel).unwrap();
        buffer.compute_advantages(cfg.gamma, cfg.lambda);
        group.bench_function(algo.as_str(), |b| {
            b.iter_batched(
                || (agent.clone(), buffer.clone(), stream(0, 1)),
                |(mut a, mut buf, mut rng)| a.update(&mut buf, &mut rng).unwrap(),
                criterion::BatchSize::LargeInput,
            )
        });
    }
    group.finish();
}

criterion_group!(benches, rollout, update);
criterion_main!(benches);
