//! Symmetry-aware proximal policy optimization on small symmetric MDPs.
//!
//! Three policy-optimization variants share one rollout/update engine:
//! plain PPO with unconstrained MLPs, PPO with symmetric minibatch
//! augmentation, and PPO with an equivariant actor and invariant critic
//! whose weights are constrained to intertwiner bases.

pub mod autodiff;
pub mod envs;
pub mod equivariant;
pub mod error;
pub mod exec;
pub mod group;
pub mod metrics;
pub mod nn;
pub mod ppo;
pub mod rng;

pub use error::{AutodiffError, EnvError, GroupError, MetricError, NetworkError, PpoError};
pub use group::{GroupElement, Representation, SymmetrySpec};
