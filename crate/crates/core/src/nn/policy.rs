//! Gaussian actor with an optional (mogrifier) LSTM trunk, and an MLP critic.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::graph::{Graph, Mat, Var};
use super::layers::{Dense, LstmState, MogrifierLstm};
use super::params::{ParamId, ParamStore};
use super::NnError;

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 1.0;

/// Actor body between the input layer and the mean head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trunk {
    /// A second tanh dense layer.
    Mlp,
    /// LSTM cell preceded by `rounds` mogrifier rounds (0 gives a plain LSTM).
    Recurrent { rounds: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyConfig {
    pub obs_dim: usize,
    pub action_dim: usize,
    pub hidden: usize,
    pub trunk: Trunk,
    pub log_std_init: f64,
}

/// Recurrent carry for one stream; empty vectors for an MLP trunk.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RecurrentState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl RecurrentState {
    pub fn zeros(hidden: usize) -> Self {
        Self {
            h: vec![0.0; hidden],
            c: vec![0.0; hidden],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActOutput {
    pub mean: Vec<f64>,
    pub log_std: Vec<f64>,
    pub value: f64,
    pub next: RecurrentState,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActorCritic {
    pub config: PolicyConfig,
    pub input: Dense,
    pub mlp: Option<Dense>,
    pub lstm: Option<MogrifierLstm>,
    pub mean_head: Dense,
    pub log_std: ParamId,
    pub critic: [Dense; 3],
}

fn row(values: &[f64]) -> Mat {
    Mat::from_shape_vec((1, values.len()), values.to_vec()).expect("row shape")
}

impl ActorCritic {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, config: PolicyConfig, rng: &mut R) -> Self {
        let PolicyConfig {
            obs_dim,
            action_dim,
            hidden,
            ..
        } = config;
        let input = Dense::new(store, "actor.in", obs_dim, hidden, 1.0, rng);
        let (mlp, lstm) = match config.trunk {
            Trunk::Mlp => (Some(Dense::new(store, "actor.mlp", hidden, hidden, 1.0, rng)), None),
            Trunk::Recurrent { rounds } => (
                None,
                Some(MogrifierLstm::new(store, "actor.lstm", hidden, hidden, rounds, rng)),
            ),
        };
        let mean_head = Dense::new(store, "actor.mean", hidden, action_dim, 0.01, rng);
        let log_std = store.add("actor.log_std", Mat::from_elem((1, action_dim), config.log_std_init));
        let critic = [
            Dense::new(store, "critic.l0", obs_dim, hidden, 1.0, rng),
            Dense::new(store, "critic.l1", hidden, hidden, 1.0, rng),
            Dense::new(store, "critic.out", hidden, 1, 1.0, rng),
        ];
        Self {
            config,
            input,
            mlp,
            lstm,
            mean_head,
            log_std,
            critic,
        }
    }

    pub fn is_recurrent(&self) -> bool {
        self.lstm.is_some()
    }

    pub fn initial_state(&self) -> RecurrentState {
        if self.is_recurrent() {
            RecurrentState::zeros(self.config.hidden)
        } else {
            RecurrentState::default()
        }
    }

    /// One actor step on a `batch × obs_dim` input. Returns the mean and the
    /// advanced state (unchanged for an MLP trunk).
    pub fn actor_step(
        &self,
        g: &mut Graph,
        obs: Var,
        state: Option<LstmState>,
    ) -> Result<(Var, Option<LstmState>), NnError> {
        let z = self.input.forward(g, obs)?;
        let x = g.tanh(z);
        let (features, next) = match (&self.mlp, &self.lstm, state) {
            (Some(dense), _, _) => {
                let z = dense.forward(g, x)?;
                (g.tanh(z), None)
            }
            (None, Some(lstm), Some(state)) => {
                let next = lstm.step(g, x, state)?;
                (next.h, Some(next))
            }
            _ => {
                return Err(NnError::Shape {
                    op: "actor_step",
                    left: g.shape(obs),
                    right: (0, 0),
                })
            }
        };
        let z = self.mean_head.forward(g, features)?;
        Ok((g.tanh(z), next))
    }

    /// Clamped log standard deviation, `1 × action_dim`.
    pub fn log_std(&self, g: &mut Graph) -> Var {
        let p = g.param(self.log_std);
        g.clamp(p, LOG_STD_MIN, LOG_STD_MAX)
    }

    /// State value for each row of a `batch × obs_dim` input.
    pub fn value(&self, g: &mut Graph, obs: Var) -> Result<Var, NnError> {
        let z = self.critic[0].forward(g, obs)?;
        let a = g.tanh(z);
        let z = self.critic[1].forward(g, a)?;
        let a = g.tanh(z);
        self.critic[2].forward(g, a)
    }

    /// Single-observation forward pass used while acting.
    pub fn act(&self, store: &ParamStore, obs: &[f64], state: &RecurrentState) -> Result<ActOutput, NnError> {
        let mut g = Graph::new(store);
        let x = g.input(row(obs));
        let lstm_state = if self.is_recurrent() {
            Some(LstmState {
                h: g.input(row(&state.h)),
                c: g.input(row(&state.c)),
            })
        } else {
            None
        };
        let (mean, next) = self.actor_step(&mut g, x, lstm_state)?;
        let log_std = self.log_std(&mut g);
        let value = self.value(&mut g, x)?;
        let next = match next {
            Some(s) => RecurrentState {
                h: g.value(s.h).iter().copied().collect(),
                c: g.value(s.c).iter().copied().collect(),
            },
            None => RecurrentState::default(),
        };
        Ok(ActOutput {
            mean: g.value(mean).iter().copied().collect(),
            log_std: g.value(log_std).iter().copied().collect(),
            value: g.scalar(value),
            next,
        })
    }
}

/// Diagonal Gaussian log-density of each row of `actions`: `batch × 1`.
pub fn gaussian_log_prob(g: &mut Graph, mean: Var, log_std: Var, actions: Mat) -> Result<Var, NnError> {
    let dim = g.shape(mean).1;
    let a = g.input(actions);
    let diff = g.sub(a, mean)?;
    let neg = g.scale(log_std, -1.0);
    let inv_std = g.exp(neg);
    let z = g.mul(diff, inv_std)?;
    let sq = g.square(z);
    let half = g.scale(sq, -0.5);
    let terms = g.sub(half, log_std)?;
    let per_row = g.sum_cols(terms);
    Ok(g.add_scalar(per_row, -0.5 * dim as f64 * (2.0 * PI).ln()))
}

/// Differential entropy of the diagonal Gaussian, `1 × 1`.
pub fn gaussian_entropy(g: &mut Graph, log_std: Var) -> Var {
    let dim = g.shape(log_std).1;
    let total = g.sum(log_std);
    g.add_scalar(total, 0.5 * dim as f64 * (1.0 + (2.0 * PI).ln()))
}

/// Plain-float version of [`gaussian_log_prob`] for a single action.
pub fn log_prob(mean: &[f64], log_std: &[f64], action: &[f64]) -> f64 {
    mean.iter()
        .zip(log_std)
        .zip(action)
        .map(|((m, s), a)| {
            let z = (a - m) / s.exp();
            -0.5 * z * z - s - 0.5 * (2.0 * PI).ln()
        })
        .sum()
}
