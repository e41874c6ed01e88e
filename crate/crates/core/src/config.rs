//! One document holding every setting of a run.

use serde::{Deserialize, Serialize};

use crate::env::{ChannelConfig, EpisodeConfig, UavConfig};
use crate::nn::AdamConfig;
use crate::rl::{AgentKind, PpoConfig, RlError};
use crate::scenario::ScenarioConfig;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NnConfig {
    pub hidden: usize,
    pub mogrifier_rounds: usize,
    pub log_std_init: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
}

impl Default for NnConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        Self {
            hidden: 64,
            mogrifier_rounds: 5,
            log_std_init: -0.5,
            adam_beta1: adam.beta1,
            adam_beta2: adam.beta2,
            adam_eps: adam.eps,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RlConfig {
    pub agent: AgentKind,
    /// Root of every training-side random stream.
    pub seed: u64,
    /// Episodes between checkpoints; 0 writes only the final one.
    pub checkpoint_every: usize,
    pub ppo: PpoConfig,
}

impl Default for RlConfig {
    fn default() -> Self {
        Self {
            agent: AgentKind::Eppo,
            seed: 0,
            checkpoint_every: 0,
            ppo: PpoConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub scenario: ScenarioConfig,
    pub channel: ChannelConfig,
    pub uav: UavConfig,
    pub env: EpisodeConfig,
    pub nn: NnConfig,
    pub rl: RlConfig,
}

impl RunConfig {
    /// The 100 m desk-scale setup: 2x2 blocks, 16 IRS elements, pure
    /// line-of-sight channels and 100-slot episodes.
    pub fn toy() -> Self {
        let mut cfg = Self {
            scenario: ScenarioConfig::toy(),
            ..Self::default()
        };
        cfg.channel.pure_los = true;
        cfg.env.horizon = 100;
        cfg.env.d_max = 10.0;
        cfg.rl.ppo.episodes = 300;
        cfg
    }

    pub fn validate(&self) -> Result<(), RlError> {
        self.scenario
            .validate()
            .map_err(|e| RlError::Config(format!("scenario: {e}")))?;
        self.rl.ppo.validate()?;
        if self.nn.hidden == 0 {
            return Err(RlError::Config("nn.hidden: must be >= 1".into()));
        }
        Ok(())
    }
}
