//! PPO with episodic reward revision, the training loop and baseline agents.

pub mod agent;
pub mod necsa;
pub mod ppo;
pub mod train;

use thiserror::Error;

pub use agent::{AgentKind, Features};
pub use necsa::{abstract_state, necsa_revise, EpisodicTable, NecsaConfig};
pub use ppo::{gae_advantages, ppo_loss, PpoConfig};
pub use train::{
    evaluate, load_learner, train, AgentSpec, EpisodeLog, EvalEpisode, Learner, NumericDump, TrainObserver,
    TrainOutcome, Transition, UpdateStats,
};

use crate::env::EnvError;
use crate::nn::checkpoint::CheckpointError;
use crate::nn::NnError;
use crate::scenario::ScenarioError;

#[derive(Debug, Error)]
pub enum RlError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("unknown agent kind `{0}`")]
    UnknownAgent(String),
    #[error("length mismatch: {rewards} rewards, {values} values, {dones} done flags")]
    LengthMismatch {
        rewards: usize,
        values: usize,
        dones: usize,
    },
    #[error("non-finite loss or gradient in update {}", .0.update)]
    Numeric(Box<NumericDump>),
    #[error("{0} has no trainable policy")]
    NoPolicy(AgentKind),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("observer: {0}")]
    Observer(String),
}
