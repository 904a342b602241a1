use nalgebra::DMatrix;
use symmrl_core::envs::{EnvSpec, SymmetricEnv};
use symmrl_core::exec::Execution;
use symmrl_core::group::GroupElement;
use symmrl_core::ppo::{
    collect_rollout, gradient_checks, make_agent, per_sample_losses, policy_equivariance_error, random_batch,
    transform_batch, value_invariance_error, Agent, Algo, NetConfig, PpoConfig, Trainer, Worker,
};
use symmrl_core::rng::{stream, worker_stream, STREAM_INIT};

const ENVS: [&str; 3] = ["mirror_goal", "toy_door", "phase_hopper"];

fn agent(algo: Algo, env: &dyn SymmetricEnv, seed: u64) -> Agent {
    make_agent(algo, env.symmetry(), &NetConfig::default(), &PpoConfig::default(), &mut stream(seed, STREAM_INIT)).unwrap()
}

#[test]
fn fresh_ppoeqic_is_exactly_equivariant_on_1000_states() {
    for name in ENVS {
        let env = EnvSpec::from_name(name).unwrap().build();
        for seed in 0..3 {
            let a = agent(Algo::PpoEqic, env.as_ref(), seed);
            let pe = policy_equivariance_error(&a.policy, env.symmetry(), 1000, &mut stream(seed, 11)).unwrap();
            let ve = value_invariance_error(&a.critic, env.symmetry(), 1000, &mut stream(seed, 12)).unwrap();
            assert!(pe <= 1e-10, "{name}: {pe:e}");
            assert!(ve <= 1e-10, "{name}: {ve:e}");
        }
    }
}

#[test]
fn trained_ppoeqic_stays_exactly_equivariant() {
    let spec = EnvSpec::from_name("toy_door").unwrap();
    let env = spec.build();
    let cfg = PpoConfig {
        num_envs: 2,
        steps_per_env: 128,
        lr: 3e-3,
        ..PpoConfig::default()
    };
    let a = make_agent(Algo::PpoEqic, env.symmetry(), &NetConfig::default(), &cfg, &mut stream(1, STREAM_INIT)).unwrap();
    let before = a.flat_params();
    let mut t = Trainer::new(a, env, 1, Execution::Parallel);
    for _ in 0..5 {
        t.iterate().unwrap();
    }
    assert_ne!(t.agent.flat_params(), before);
    let sym = t.env().symmetry().clone();
    assert!(policy_equivariance_error(&t.agent.policy, &sym, 1000, &mut stream(1, 11)).unwrap() <= 1e-10);
    assert!(value_invariance_error(&t.agent.critic, &sym, 1000, &mut stream(1, 12)).unwrap() <= 1e-10);
}

/// `max_s ‖μ(g⊳s) − g⊳μ(s)‖∞` over `states`.
fn equivariance_gap(a: &Agent, env: &dyn SymmetricEnv, states: &[Vec<f64>]) -> f64 {
    let spec = env.symmetry();
    let g = GroupElement(1);
    let x = DMatrix::from_fn(states.len(), env.state_dim(), |i, j| states[i][j]);
    let gx = &x * spec.rep_state.matrix(g).transpose();
    let lhs = a.policy.mean_batch(&gx).unwrap();
    let rhs = a.policy.mean_batch(&x).unwrap() * spec.rep_action.matrix(g).transpose();
    (lhs - rhs).amax()
}

#[test]
fn ppoaug_initial_gap_is_one_hundredth_of_unscaled() {
    for name in ENVS {
        let env = EnvSpec::from_name(name).unwrap().build();
        let mut rng = stream(9, 9);
        let starts: Vec<Vec<f64>> = (0..1000).map(|_| env.reset(&mut rng)).collect();
        let broad: Vec<Vec<f64>> = (0..1000).map(|_| env.sample_state(&mut rng)).collect();
        for seed in 0..3 {
            let aug = agent(Algo::PpoAug, env.as_ref(), seed);
            let plain = agent(Algo::Ppo, env.as_ref(), seed);
            for states in [&starts, &broad] {
                // Same draws, output layer scaled by 0.01: the gap scales with it.
                let (a, p) = (equivariance_gap(&aug, env.as_ref(), states), equivariance_gap(&plain, env.as_ref(), states));
                assert!((a - 0.01 * p).abs() <= 1e-12 * p, "{name} seed {seed}: {a} vs {p}");
                assert!(p > 0.1, "{name} seed {seed}: unconstrained gap {p}");
            }
        }
    }
}

#[test]
fn augmented_copies_have_identical_losses_under_equivariant_agent() {
    let g = GroupElement(1);
    for name in ENVS {
        let env = EnvSpec::from_name(name).unwrap().build();
        let a = agent(Algo::PpoEqic, env.as_ref(), 3);
        // Synthetic samples.
        let batch = random_batch(&a, 1000, &mut stream(3, 5)).unwrap();
        let orig = per_sample_losses(&a, &batch).unwrap();
        let mirrored = per_sample_losses(&a, &transform_batch(&batch, env.symmetry(), g)).unwrap();
        for (x, y) in [(&orig.surrogate, &mirrored.surrogate), (&orig.value, &mirrored.value), (&orig.log_prob, &mirrored.log_prob)] {
            let worst = x.iter().zip(y.iter()).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
            assert!(worst <= 1e-10, "{name}: {worst:e}");
        }
        // Samples collected from the certified environment.
        let mut workers: Vec<Worker> = (0..4).map(|w| Worker::new(env.as_ref(), worker_stream(3, w), None)).collect();
        let mut buffer =
            collect_rollout(&a.policy, &a.critic, env.as_ref(), &mut workers, 250, Execution::Sequential).unwrap();
        buffer.compute_advantages(0.99, 0.95);
        let batch = buffer.to_batch(true).unwrap();
        assert_eq!(batch.len(), 1000);
        let orig = per_sample_losses(&a, &batch).unwrap();
        let mirrored = per_sample_losses(&a, &transform_batch(&batch, env.symmetry(), g)).unwrap();
        let worst = orig
            .surrogate
            .iter()
            .zip(&mirrored.surrogate)
            .chain(orig.value.iter().zip(&mirrored.value))
            .map(|(p, q)| (p - q).abs())
            .fold(0.0, f64::max);
        assert!(worst <= 1e-10, "{name}: {worst:e}");
    }
}

#[test]
fn augmented_copies_differ_for_unconstrained_agent() {
    let env = EnvSpec::from_name("mirror_goal").unwrap().build();
    let a = agent(Algo::Ppo, env.as_ref(), 3);
    let batch = random_batch(&a, 100, &mut stream(3, 5)).unwrap();
    let orig = per_sample_losses(&a, &batch).unwrap();
    let mirrored = per_sample_losses(&a, &transform_batch(&batch, env.symmetry(), GroupElement(1))).unwrap();
    let worst = orig.value.iter().zip(&mirrored.value).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
    assert!(worst > 1e-3);
}

#[test]
fn all_losses_pass_finite_difference_checks_20_repetitions() {
    for name in ENVS {
        let env = EnvSpec::from_name(name).unwrap().build();
        for c in gradient_checks(env.symmetry(), 20, &mut stream(17, 0)).unwrap() {
            assert!(c.passed(), "{name} {} {}: {:e}", c.algo, c.loss, c.max_relative_error);
        }
    }
}

