//! Advantage estimation and the clipped-surrogate actor-critic loss.

use serde::{Deserialize, Serialize};

use super::necsa::NecsaConfig;
use super::RlError;
use crate::nn::policy::{gaussian_entropy, gaussian_log_prob};
use crate::nn::{ActorCritic, Graph, LstmState, Mat, NnError, Var};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PpoConfig {
    pub clip_epsilon: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    /// Optimisation epochs per update.
    pub epochs: usize,
    /// Transitions collected before each update.
    pub batch_size: usize,
    /// Transitions per gradient step; 0 uses the whole buffer.
    pub minibatch_size: usize,
    pub critic_weight: f64,
    pub entropy_weight: f64,
    pub learning_rate: f64,
    pub episodes: usize,
    /// Truncated backpropagation length for recurrent actors.
    pub bptt_len: usize,
    /// Global gradient-norm ceiling; 0 disables clipping.
    pub max_grad_norm: f64,
    /// Multiplier applied to environment rewards before learning.
    pub reward_scale: f64,
    pub necsa: NecsaConfig,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            clip_epsilon: 0.02,
            gamma: 0.99,
            gae_lambda: 0.95,
            epochs: 10,
            batch_size: 1024,
            minibatch_size: 256,
            critic_weight: 0.5,
            entropy_weight: 0.01,
            learning_rate: 3e-4,
            episodes: 3000,
            bptt_len: 16,
            max_grad_norm: 0.5,
            reward_scale: 1e-5,
            necsa: NecsaConfig::default(),
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<(), RlError> {
        let bad = |field: &str, reason: &str| Err(RlError::Config(format!("{field}: {reason}")));
        if !(self.clip_epsilon > 0.0 && self.clip_epsilon < 1.0) {
            return bad("clip_epsilon", "must lie in (0, 1)");
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma", "must lie in (0, 1]");
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return bad("gae_lambda", "must lie in [0, 1]");
        }
        if self.epochs == 0 {
            return bad("epochs", "must be >= 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size", "must be >= 1");
        }
        if self.bptt_len == 0 {
            return bad("bptt_len", "must be >= 1");
        }
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return bad("learning_rate", "must be > 0");
        }
        if self.max_grad_norm.is_nan() || self.max_grad_norm < 0.0 {
            return bad("max_grad_norm", "must be >= 0");
        }
        if !(self.reward_scale > 0.0 && self.reward_scale.is_finite()) {
            return bad("reward_scale", "must be positive and finite");
        }
        if self.necsa.bins == 0 || self.necsa.order == 0 {
            return bad("necsa", "bins and order must be >= 1");
        }
        if self.necsa.weight.is_nan() || self.necsa.weight < 0.0 {
            return bad("necsa.weight", "must be >= 0");
        }
        for (field, v) in [
            ("critic_weight", self.critic_weight),
            ("entropy_weight", self.entropy_weight),
        ] {
            if !v.is_finite() {
                return bad(field, "must be finite");
            }
        }
        Ok(())
    }
}

/// Generalised advantage estimates and value targets.
///
/// `values[t]` is `V(s_t)`; `bootstrap` is `V` of the state after the last
/// transition, ignored when that transition ends an episode.
pub fn gae_advantages(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    bootstrap: f64,
    gamma: f64,
    lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>), RlError> {
    let n = rewards.len();
    if values.len() != n || dones.len() != n {
        return Err(RlError::LengthMismatch {
            rewards: n,
            values: values.len(),
            dones: dones.len(),
        });
    }
    let mut adv = vec![0.0; n];
    let mut running = 0.0;
    for t in (0..n).rev() {
        let next_value = if t + 1 < n { values[t + 1] } else { bootstrap };
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * next_value * live - values[t];
        running = delta + gamma * lambda * live * running;
        adv[t] = running;
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((adv, returns))
}

/// Shifts and scales to zero mean and unit (population) variance.
pub fn normalize(xs: &mut [f64]) {
    if xs.is_empty() {
        return;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    for x in xs.iter_mut() {
        *x = if std > 1e-12 { (*x - mean) / std } else { *x - mean };
    }
}

/// `min(ρA, clip(ρ, 1−ε, 1+ε)A)` for one sample.
pub fn clipped_surrogate(ratio: f64, advantage: f64, epsilon: f64) -> f64 {
    (ratio * advantage).min(ratio.clamp(1.0 - epsilon, 1.0 + epsilon) * advantage)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossTerms {
    pub actor: f64,
    pub critic: f64,
    pub entropy: f64,
    pub total: f64,
}

/// Per-sample inputs to the loss, as plain numbers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossSample {
    pub new_log_prob: f64,
    pub old_log_prob: f64,
    pub advantage: f64,
    pub value_target: f64,
    pub value: f64,
    pub entropy: f64,
}

/// Scalar reference for the minimised loss.
pub fn ppo_loss(samples: &[LossSample], cfg: &PpoConfig) -> LossTerms {
    let n = samples.len() as f64;
    let mut terms = LossTerms::default();
    for s in samples {
        let ratio = (s.new_log_prob - s.old_log_prob).exp();
        terms.actor -= clipped_surrogate(ratio, s.advantage, cfg.clip_epsilon) / n;
        terms.critic += 0.5 * (s.value_target - s.value).powi(2) / n;
        terms.entropy += s.entropy / n;
    }
    terms.total = terms.actor + cfg.critic_weight * terms.critic - cfg.entropy_weight * terms.entropy;
    terms
}

/// One time step of a padded minibatch: each row is one chunk.
#[derive(Debug, Clone, PartialEq)]
pub struct StepBatch {
    pub obs: Mat,
    pub actions: Mat,
    pub old_log_prob: Mat,
    pub advantage: Mat,
    pub value_target: Mat,
    /// 1 for real samples, 0 for padding.
    pub mask: Mat,
}

/// A minibatch of equal-length (padded) chunks, time-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceBatch {
    pub steps: Vec<StepBatch>,
    /// Recurrent carry at the start of each chunk; `rows × hidden`.
    pub h0: Mat,
    pub c0: Mat,
}

impl SequenceBatch {
    pub fn samples(&self) -> f64 {
        self.steps.iter().map(|s| s.mask.sum()).sum()
    }
}

pub struct LossGraph {
    pub total: Var,
    pub actor: Var,
    pub critic: Var,
    pub entropy: Var,
    /// `batch × 1` log-probabilities under the current parameters, per step.
    pub log_probs: Vec<Var>,
}

fn column(g: &mut Graph, m: &Mat) -> Var {
    g.input(m.clone())
}

/// Builds the loss over a sequence batch, replaying the actor from each
/// chunk's stored carry.
pub fn ppo_loss_graph(
    g: &mut Graph,
    net: &ActorCritic,
    batch: &SequenceBatch,
    cfg: &PpoConfig,
) -> Result<LossGraph, NnError> {
    let n = batch.samples().max(1.0);
    let log_std = net.log_std(g);
    let mut state = if net.is_recurrent() {
        Some(LstmState {
            h: g.input(batch.h0.clone()),
            c: g.input(batch.c0.clone()),
        })
    } else {
        None
    };
    let mut actor: Option<Var> = None;
    let mut critic: Option<Var> = None;
    let mut log_probs = Vec::with_capacity(batch.steps.len());
    let add = |g: &mut Graph, acc: Option<Var>, v: Var| -> Result<Var, NnError> {
        match acc {
            Some(a) => g.add(a, v),
            None => Ok(v),
        }
    };
    for step in &batch.steps {
        let obs = g.input(step.obs.clone());
        let (mean, next) = net.actor_step(g, obs, state)?;
        state = next;
        let lp = gaussian_log_prob(g, mean, log_std, step.actions.clone())?;
        log_probs.push(lp);
        let old = column(g, &step.old_log_prob);
        let diff = g.sub(lp, old)?;
        let ratio = g.exp(diff);
        let adv = column(g, &step.advantage);
        let unclipped = g.mul(ratio, adv)?;
        let clipped_ratio = g.clamp(ratio, 1.0 - cfg.clip_epsilon, 1.0 + cfg.clip_epsilon);
        let clipped = g.mul(clipped_ratio, adv)?;
        let surrogate = g.minimum(unclipped, clipped)?;
        let term = g.weighted_sum(surrogate, &step.mask * (-1.0 / n))?;
        actor = Some(add(g, actor, term)?);

        let value = net.value(g, obs)?;
        let target = column(g, &step.value_target);
        let err = g.sub(target, value)?;
        let sq = g.square(err);
        let term = g.weighted_sum(sq, &step.mask * (0.5 / n))?;
        critic = Some(add(g, critic, term)?);
    }
    let zero = || Mat::zeros((1, 1));
    let actor = actor.unwrap_or_else(|| g.input(zero()));
    let critic = critic.unwrap_or_else(|| g.input(zero()));
    let entropy = gaussian_entropy(g, log_std);
    let weighted_critic = g.scale(critic, cfg.critic_weight);
    let weighted_entropy = g.scale(entropy, -cfg.entropy_weight);
    let total = g.add(actor, weighted_critic)?;
    let total = g.add(total, weighted_entropy)?;
    Ok(LossGraph {
        total,
        actor,
        critic,
        entropy,
        log_probs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lambda_zero_is_td_error() {
        let r = [1.0, 2.0, 3.0];
        let v = [0.5, 0.25, 0.125];
        let (adv, _) = gae_advantages(&r, &v, &[false, false, false], 2.0, 0.9, 0.0).unwrap();
        assert!((adv[0] - (1.0 + 0.9 * 0.25 - 0.5)).abs() < 1e-15);
        assert!((adv[2] - (3.0 + 0.9 * 2.0 - 0.125)).abs() < 1e-15);
    }

    #[test]
    fn undiscounted_reward_to_go() {
        let r = [1.0, 2.0, 3.0];
        let (adv, ret) = gae_advantages(&r, &[0.0; 3], &[false, false, true], 9.0, 1.0, 1.0).unwrap();
        assert_eq!(adv, vec![6.0, 5.0, 3.0]);
        assert_eq!(ret, adv);
    }

    #[test]
    fn done_cuts_the_trace() {
        let (adv, _) =
            gae_advantages(&[1.0, 1.0], &[0.0, 0.0], &[true, false], 0.0, 1.0, 1.0).unwrap();
        assert_eq!(adv, vec![1.0, 1.0]);
    }

    #[test]
    fn length_mismatch() {
        assert!(gae_advantages(&[1.0], &[], &[false], 0.0, 0.9, 0.9).is_err());
    }

    #[test]
    fn surrogate_examples() {
        assert_eq!(clipped_surrogate(1.0, 2.0, 0.2), 2.0);
        assert!((clipped_surrogate(1.4, 2.0, 0.2) - 2.4).abs() < 1e-15);
        assert!((clipped_surrogate(0.5, -1.0, 0.2) + 0.8).abs() < 1e-15);
    }

    #[test]
    fn unit_ratio_actor_term_is_negative_mean_advantage() {
        let samples: Vec<LossSample> = [1.0, -3.0, 0.5]
            .iter()
            .map(|&a| LossSample {
                new_log_prob: -1.2,
                old_log_prob: -1.2,
                advantage: a,
                value_target: 0.0,
                value: 0.0,
                entropy: 0.0,
            })
            .collect();
        let t = ppo_loss(&samples, &PpoConfig::default());
        assert!((t.actor - 0.5).abs() < 1e-15);
    }

    #[test]
    fn normalize_moments() {
        let mut xs = vec![1.0, 2.0, 4.0, 8.0];
        normalize(&mut xs);
        let mean: f64 = xs.iter().sum::<f64>() / 4.0;
        let var: f64 = xs.iter().map(|x| x * x).sum::<f64>() / 4.0;
        assert!(mean.abs() < 1e-15);
        assert!((var - 1.0).abs() < 1e-12);
    }
}
