use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::RlError;
use crate::env::PhaseMode;

/// The three enhancements layered on top of plain PPO.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Features {
    /// Revise rewards with episodic state scores.
    pub necsa: bool,
    /// Set IRS phases in closed form instead of learning them.
    pub phase_control: bool,
    /// Mogrifier LSTM actor instead of an MLP.
    pub mogrifier: bool,
}

impl Features {
    pub const ALL: Features = Features {
        necsa: true,
        phase_control: true,
        mogrifier: true,
    };

    pub fn phase_mode(&self) -> PhaseMode {
        if self.phase_control {
            PhaseMode::Optimal
        } else {
            PhaseMode::FromAction
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    Random,
    Hover,
    PpoVanilla,
    PpoNecsa,
    PpoPhasectl,
    PpoMogrifier,
    Eppo,
}

impl AgentKind {
    pub const ALL: [AgentKind; 7] = [
        AgentKind::PpoVanilla,
        AgentKind::PpoNecsa,
        AgentKind::PpoPhasectl,
        AgentKind::PpoMogrifier,
        AgentKind::Eppo,
        AgentKind::Random,
        AgentKind::Hover,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            AgentKind::Random => "random",
            AgentKind::Hover => "hover",
            AgentKind::PpoVanilla => "ppo_vanilla",
            AgentKind::PpoNecsa => "ppo_necsa",
            AgentKind::PpoPhasectl => "ppo_phasectl",
            AgentKind::PpoMogrifier => "ppo_mogrifier",
            AgentKind::Eppo => "eppo",
        }
    }

    /// Enhancements used by a learning agent; `None` for fixed policies.
    pub fn features(&self) -> Option<Features> {
        let base = Features::default();
        match self {
            AgentKind::Random | AgentKind::Hover => None,
            AgentKind::PpoVanilla => Some(base),
            AgentKind::PpoNecsa => Some(Features { necsa: true, ..base }),
            AgentKind::PpoPhasectl => Some(Features {
                phase_control: true,
                ..base
            }),
            AgentKind::PpoMogrifier => Some(Features {
                mogrifier: true,
                ..base
            }),
            AgentKind::Eppo => Some(Features::ALL),
        }
    }

    /// Fixed policies act with closed-form phases.
    pub fn phase_mode(&self) -> PhaseMode {
        self.features().unwrap_or(Features::ALL).phase_mode()
    }

    pub fn is_learning(&self) -> bool {
        self.features().is_some()
    }
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AgentKind {
    type Err = RlError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AgentKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| RlError::UnknownAgent(s.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for k in AgentKind::ALL {
            assert_eq!(k.name().parse::<AgentKind>().unwrap(), k);
            let json = serde_json::to_string(&k).unwrap();
            assert_eq!(json, format!("\"{}\"", k.name()));
        }
        assert!("sac".parse::<AgentKind>().is_err());
    }

    #[test]
    fn ablations_toggle_one_feature() {
        for k in [AgentKind::PpoNecsa, AgentKind::PpoPhasectl, AgentKind::PpoMogrifier] {
            let f = k.features().unwrap();
            assert_eq!([f.necsa, f.phase_control, f.mogrifier].iter().filter(|x| **x).count(), 1);
        }
    }
}
