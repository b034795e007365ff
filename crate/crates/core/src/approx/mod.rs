//! Small dense networks, a Gaussian policy and PPO with GAE.

pub mod adam;
pub mod checkpoint;
pub mod mlp;
pub mod normalizer;
pub mod policy;
pub mod ppo;
pub mod rollout;

pub use adam::Adam;
pub use checkpoint::{file_sha256, Checkpoint, CheckpointError};
pub use mlp::{Mlp, Scalar};
pub use normalizer::RunningNorm;
pub use policy::{PolicyNet, ValueNet, HIDDEN};
pub use ppo::{gae, Learner, PpoConfig, RolloutBatch, UpdateStats};
pub use rollout::{Env, EpisodeSummary, Transition, VecCollector};
