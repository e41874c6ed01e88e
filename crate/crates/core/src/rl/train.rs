//! The collection/update loop, evaluation rollouts and checkpoint plumbing.

use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::agent::{AgentKind, Features};
use super::necsa::{EpisodeTracker, EpisodicTable};
use super::ppo::{gae_advantages, normalize, ppo_loss_graph, LossTerms, SequenceBatch, StepBatch};
use super::RlError;
use crate::config::RunConfig;
use crate::env::{Env, EpisodeSummary, PhaseMode, SlotRecord};
use crate::nn::checkpoint::{self, CheckpointManifest};
use crate::nn::policy::{log_prob, PolicyConfig, RecurrentState, Trunk};
use crate::nn::{ActorCritic, Adam, AdamConfig, Graph, Mat, ParamStore};
use crate::rng::{SeedTree, StreamRng, EXPLORATION, MINIBATCH, POLICY_INIT};
use crate::scenario::City;

/// A fixed policy or PPO with a chosen set of enhancements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentSpec {
    Random,
    Hover,
    Ppo(Features),
}

impl From<AgentKind> for AgentSpec {
    fn from(kind: AgentKind) -> Self {
        match (kind, kind.features()) {
            (_, Some(f)) => AgentSpec::Ppo(f),
            (AgentKind::Hover, None) => AgentSpec::Hover,
            _ => AgentSpec::Random,
        }
    }
}

impl AgentSpec {
    pub fn phase_mode(&self) -> PhaseMode {
        match self {
            AgentSpec::Ppo(f) => f.phase_mode(),
            _ => PhaseMode::Optimal,
        }
    }

    pub fn features(&self) -> Option<Features> {
        match self {
            AgentSpec::Ppo(f) => Some(*f),
            _ => None,
        }
    }
}

/// One stored step of experience.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: Vec<f64>,
    /// Sampled action before clipping.
    pub action: Vec<f64>,
    pub log_prob: f64,
    pub value: f64,
    /// Scaled environment reward.
    pub raw_reward: f64,
    pub revised_reward: f64,
    pub next_state: Vec<f64>,
    pub done: bool,
    /// Recurrent carry the actor saw at this step.
    pub carry: RecurrentState,
    /// First step of an episode.
    pub first: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub episode: usize,
    pub env_seed: u64,
    #[serde(flatten)]
    pub summary: EpisodeSummary,
    /// Sum of the (scaled, revised) rewards the learner saw.
    pub learning_return: f64,
    pub updates: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct UpdateStats {
    pub update: usize,
    pub transitions: usize,
    /// Loss terms averaged over the final epoch's minibatches.
    pub loss: LossTerms,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    pub grad_norm: f64,
}

/// Everything needed to diagnose a non-finite update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NumericDump {
    pub update: usize,
    pub epoch: usize,
    pub minibatch: usize,
    pub loss: LossTerms,
    pub grad_norm: f64,
    pub transitions: Vec<Transition>,
    pub advantages: Vec<f64>,
    pub value_targets: Vec<f64>,
    pub old_log_probs: Vec<f64>,
}

/// Callbacks fired while training.
pub trait TrainObserver {
    fn on_episode(&mut self, _log: &EpisodeLog) -> Result<(), RlError> {
        Ok(())
    }

    fn on_update(&mut self, _stats: &UpdateStats) -> Result<(), RlError> {
        Ok(())
    }

    /// Fired every `checkpoint_every` episodes and after the last episode.
    fn on_checkpoint(&mut self, _episode: usize, _learner: &Learner) -> Result<(), RlError> {
        Ok(())
    }
}

impl TrainObserver for () {}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub episodes: Vec<EpisodeLog>,
    pub updates: Vec<UpdateStats>,
    pub learner: Option<Learner>,
    /// Transitions collected since the last update.
    pub pending: Vec<Transition>,
}

/// Actor-critic parameters, optimiser state and the PPO update.
#[derive(Debug, Clone)]
pub struct Learner {
    pub net: ActorCritic,
    pub store: ParamStore,
    pub features: Features,
    adam: Adam,
    ppo: super::PpoConfig,
    minibatch_rng: StreamRng,
    updates: usize,
}

fn policy_config(cfg: &RunConfig, features: Features, obs_dim: usize, action_dim: usize) -> PolicyConfig {
    PolicyConfig {
        obs_dim,
        action_dim,
        hidden: cfg.nn.hidden,
        trunk: if features.mogrifier {
            Trunk::Recurrent {
                rounds: cfg.nn.mogrifier_rounds,
            }
        } else {
            Trunk::Mlp
        },
        log_std_init: cfg.nn.log_std_init,
    }
}

struct Chunk {
    start: usize,
    len: usize,
}

/// Splits the buffer at episode starts, then into pieces of at most `max_len`.
fn chunks(buffer: &[Transition], max_len: usize) -> Vec<Chunk> {
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..=buffer.len() {
        let boundary = i == buffer.len() || buffer[i].first || i - start == max_len;
        if boundary {
            out.push(Chunk { start, len: i - start });
            start = i;
        }
    }
    out
}

impl Learner {
    pub fn new(cfg: &RunConfig, features: Features, obs_dim: usize, action_dim: usize) -> Self {
        let seeds = SeedTree::new(cfg.rl.seed);
        let mut init = seeds.stream(POLICY_INIT);
        let mut store = ParamStore::default();
        let net = ActorCritic::new(&mut store, policy_config(cfg, features, obs_dim, action_dim), &mut init);
        let adam = Adam::new(
            AdamConfig {
                lr: cfg.rl.ppo.learning_rate,
                beta1: cfg.nn.adam_beta1,
                beta2: cfg.nn.adam_beta2,
                eps: cfg.nn.adam_eps,
            },
            &store,
        );
        Self {
            net,
            store,
            features,
            adam,
            ppo: cfg.rl.ppo,
            minibatch_rng: seeds.stream(MINIBATCH),
            updates: 0,
        }
    }

    pub fn updates(&self) -> usize {
        self.updates
    }

    pub fn initial_state(&self) -> RecurrentState {
        self.net.initial_state()
    }

    pub fn hyperparameters(&self) -> serde_json::Value {
        serde_json::json!({
            "policy": self.net.config,
            "features": self.features,
            "ppo": self.ppo,
            "adam": self.adam.config,
        })
    }

    pub fn save(&self, dir: &Path) -> Result<CheckpointManifest, RlError> {
        Ok(checkpoint::save(dir, &self.store, self.updates as u64, self.hyperparameters())?)
    }

    /// Rebuilds the learner for `cfg` and loads parameters from `dir`.
    pub fn load(
        dir: &Path,
        cfg: &RunConfig,
        features: Features,
        obs_dim: usize,
        action_dim: usize,
    ) -> Result<Self, RlError> {
        let mut learner = Self::new(cfg, features, obs_dim, action_dim);
        let manifest = checkpoint::load_into(dir, &mut learner.store)?;
        learner.updates = manifest.step as usize;
        Ok(learner)
    }

    fn bootstrap_value(&self, obs: &[f64]) -> Result<f64, RlError> {
        let mut g = Graph::new(&self.store);
        let x = g.input(Mat::from_shape_vec((1, obs.len()), obs.to_vec()).expect("row"));
        let v = self.net.value(&mut g, x)?;
        Ok(g.scalar(v))
    }

    fn assemble(
        &self,
        buffer: &[Transition],
        chunks: &[&Chunk],
        old_log_probs: &[f64],
        advantages: &[f64],
        targets: &[f64],
    ) -> SequenceBatch {
        let rows = chunks.len();
        let len = chunks.iter().map(|c| c.len).max().unwrap_or(0);
        let cfg = &self.net.config;
        let hidden = if self.net.is_recurrent() { cfg.hidden } else { 0 };
        let mut h0 = Mat::zeros((rows, hidden));
        let mut c0 = Mat::zeros((rows, hidden));
        for (r, c) in chunks.iter().enumerate() {
            let carry = &buffer[c.start].carry;
            for k in 0..hidden {
                h0[[r, k]] = carry.h[k];
                c0[[r, k]] = carry.c[k];
            }
        }
        let steps = (0..len)
            .map(|t| {
                let mut s = StepBatch {
                    obs: Mat::zeros((rows, cfg.obs_dim)),
                    actions: Mat::zeros((rows, cfg.action_dim)),
                    old_log_prob: Mat::zeros((rows, 1)),
                    advantage: Mat::zeros((rows, 1)),
                    value_target: Mat::zeros((rows, 1)),
                    mask: Mat::zeros((rows, 1)),
                };
                for (r, c) in chunks.iter().enumerate() {
                    if t >= c.len {
                        continue;
                    }
                    let i = c.start + t;
                    let tr = &buffer[i];
                    for (k, v) in tr.state.iter().enumerate() {
                        s.obs[[r, k]] = *v;
                    }
                    for (k, v) in tr.action.iter().enumerate() {
                        s.actions[[r, k]] = *v;
                    }
                    s.old_log_prob[[r, 0]] = old_log_probs.get(i).copied().unwrap_or(0.0);
                    s.advantage[[r, 0]] = advantages.get(i).copied().unwrap_or(0.0);
                    s.value_target[[r, 0]] = targets.get(i).copied().unwrap_or(0.0);
                    s.mask[[r, 0]] = 1.0;
                }
                s
            })
            .collect();
        SequenceBatch { steps, h0, c0 }
    }

    /// Log-probabilities of the stored actions under the current parameters,
    /// replaying each chunk from its stored carry.
    fn current_log_probs(&self, buffer: &[Transition], chunks: &[Chunk]) -> Result<Vec<f64>, RlError> {
        let refs: Vec<&Chunk> = chunks.iter().collect();
        let batch = self.assemble(buffer, &refs, &[], &[], &[]);
        let mut g = Graph::new(&self.store);
        let loss = ppo_loss_graph(&mut g, &self.net, &batch, &self.ppo)?;
        let mut out = vec![0.0; buffer.len()];
        for (t, lp) in loss.log_probs.iter().enumerate() {
            let values = g.value(*lp);
            for (r, c) in chunks.iter().enumerate() {
                if t < c.len {
                    out[c.start + t] = values[[r, 0]];
                }
            }
        }
        Ok(out)
    }

    /// K epochs of clipped-surrogate optimisation over `buffer`.
    pub fn update(&mut self, buffer: &[Transition]) -> Result<UpdateStats, RlError> {
        let cfg = self.ppo;
        let n = buffer.len();
        let last = buffer.last().ok_or_else(|| RlError::Config("update on empty buffer".into()))?;
        let bootstrap = if last.done {
            0.0
        } else {
            self.bootstrap_value(&last.next_state)?
        };
        let rewards: Vec<f64> = buffer.iter().map(|t| t.revised_reward).collect();
        let values: Vec<f64> = buffer.iter().map(|t| t.value).collect();
        let dones: Vec<bool> = buffer.iter().map(|t| t.done).collect();
        let (mut advantages, targets) =
            gae_advantages(&rewards, &values, &dones, bootstrap, cfg.gamma, cfg.gae_lambda)?;
        normalize(&mut advantages);

        let chunks = chunks(buffer, cfg.bptt_len);
        let old_log_probs = self.current_log_probs(buffer, &chunks)?;
        let minibatch = if cfg.minibatch_size == 0 { n } else { cfg.minibatch_size };

        let mut stats = UpdateStats {
            update: self.updates,
            transitions: n,
            ..UpdateStats::default()
        };
        let mut order: Vec<usize> = (0..chunks.len()).collect();
        for epoch in 0..cfg.epochs {
            order.shuffle(&mut self.minibatch_rng);
            let mut groups: Vec<Vec<&Chunk>> = vec![Vec::new()];
            let mut filled = 0;
            for &k in &order {
                if filled >= minibatch {
                    groups.push(Vec::new());
                    filled = 0;
                }
                groups.last_mut().expect("nonempty").push(&chunks[k]);
                filled += chunks[k].len;
            }
            let mut epoch_loss = LossTerms::default();
            let (mut kl, mut clipped, mut grad_norm) = (0.0, 0.0, 0.0);
            for (mb, group) in groups.iter().enumerate() {
                let batch = self.assemble(buffer, group, &old_log_probs, &advantages, &targets);
                let count = batch.samples();
                let (terms, grads, batch_kl, batch_clipped) = {
                    let mut g = Graph::new(&self.store);
                    let loss = ppo_loss_graph(&mut g, &self.net, &batch, &cfg)?;
                    let terms = LossTerms {
                        actor: g.scalar(loss.actor),
                        critic: g.scalar(loss.critic),
                        entropy: g.scalar(loss.entropy),
                        total: g.scalar(loss.total),
                    };
                    let (mut kl, mut clipped) = (0.0, 0.0);
                    for (lp, step) in loss.log_probs.iter().zip(&batch.steps) {
                        for ((new, old), m) in g.value(*lp).iter().zip(&step.old_log_prob).zip(&step.mask) {
                            if *m > 0.0 {
                                let d = old - new;
                                kl += d;
                                if ((new - old).exp() - 1.0).abs() > cfg.clip_epsilon {
                                    clipped += 1.0;
                                }
                            }
                        }
                    }
                    let grads = if terms.total.is_finite() {
                        Some(g.backward(loss.total)?)
                    } else {
                        None
                    };
                    (terms, grads, kl, clipped)
                };
                self.store.zero_grad();
                if let Some(grads) = &grads {
                    self.store.accumulate(grads);
                }
                let norm = self.store.grad_norm();
                if grads.is_none() || !norm.is_finite() {
                    let members: Vec<usize> = group
                        .iter()
                        .flat_map(|c| c.start..c.start + c.len)
                        .collect();
                    return Err(RlError::Numeric(Box::new(NumericDump {
                        update: self.updates,
                        epoch,
                        minibatch: mb,
                        loss: terms,
                        grad_norm: norm,
                        transitions: members.iter().map(|&i| buffer[i].clone()).collect(),
                        advantages: members.iter().map(|&i| advantages[i]).collect(),
                        value_targets: members.iter().map(|&i| targets[i]).collect(),
                        old_log_probs: members.iter().map(|&i| old_log_probs[i]).collect(),
                    })));
                }
                if cfg.max_grad_norm > 0.0 && norm > cfg.max_grad_norm {
                    self.store.scale_grads(cfg.max_grad_norm / norm);
                }
                self.adam.update(&mut self.store);
                let w = count / n as f64;
                epoch_loss.actor += w * terms.actor;
                epoch_loss.critic += w * terms.critic;
                epoch_loss.entropy += w * terms.entropy;
                epoch_loss.total += w * terms.total;
                kl += batch_kl;
                clipped += batch_clipped;
                grad_norm += norm / groups.len() as f64;
            }
            stats.loss = epoch_loss;
            stats.approx_kl = kl / n as f64;
            stats.clip_fraction = clipped / n as f64;
            stats.grad_norm = grad_norm;
        }
        self.store.zero_grad();
        self.updates += 1;
        Ok(stats)
    }
}

struct Decision {
    action: Vec<f64>,
    log_prob: f64,
    value: f64,
    next: RecurrentState,
}

fn decide(
    spec: AgentSpec,
    learner: Option<&Learner>,
    obs: &[f64],
    carry: &RecurrentState,
    action_dim: usize,
    greedy: bool,
    rng: &mut StreamRng,
) -> Result<Decision, RlError> {
    let fixed = |action: Vec<f64>| Decision {
        action,
        log_prob: 0.0,
        value: 0.0,
        next: RecurrentState::default(),
    };
    match (spec, learner) {
        (AgentSpec::Hover, _) => Ok(fixed(vec![0.0; action_dim])),
        (AgentSpec::Random, _) => Ok(fixed((0..action_dim).map(|_| rng.random_range(-1.0..=1.0)).collect())),
        (AgentSpec::Ppo(_), Some(l)) => {
            let out = l.net.act(&l.store, obs, carry)?;
            let action: Vec<f64> = if greedy {
                out.mean.clone()
            } else {
                out.mean
                    .iter()
                    .zip(&out.log_std)
                    .map(|(m, s)| {
                        let z: f64 = rng.sample(StandardNormal);
                        m + s.exp() * z
                    })
                    .collect()
            };
            Ok(Decision {
                log_prob: log_prob(&out.mean, &out.log_std, &action),
                action,
                value: out.value,
                next: out.next,
            })
        }
        (AgentSpec::Ppo(_), None) => Err(RlError::Config("learning agent without parameters".into())),
    }
}

fn build_env(cfg: &RunConfig, spec: AgentSpec) -> Result<Env, RlError> {
    let city = Arc::new(City::new(cfg.scenario.clone())?);
    Ok(Env::new(city, cfg.channel, cfg.uav, cfg.env, spec.phase_mode())?)
}

/// Runs the collection/update loop for `cfg.rl.ppo.episodes` episodes.
pub fn train(cfg: &RunConfig, spec: AgentSpec, observer: &mut dyn TrainObserver) -> Result<TrainOutcome, RlError> {
    cfg.validate()?;
    let ppo = cfg.rl.ppo;
    let seeds = SeedTree::new(cfg.rl.seed);
    let mut env = build_env(cfg, spec)?;
    let (obs_dim, action_dim) = (env.observation_dim(), env.action_dim());
    let mut explore = seeds.stream(EXPLORATION);
    let mut learner = spec.features().map(|f| Learner::new(cfg, f, obs_dim, action_dim));
    let necsa = spec.features().is_some_and(|f| f.necsa);
    let mut table = EpisodicTable::default();
    let mut buffer: Vec<Transition> = Vec::with_capacity(ppo.batch_size);
    let mut episodes = Vec::with_capacity(ppo.episodes);
    let mut updates = Vec::new();

    for episode in 0..ppo.episodes {
        let env_seed = seeds.child("episode", episode as u64).root();
        let mut obs = env.reset(env_seed);
        let mut carry = learner.as_ref().map(Learner::initial_state).unwrap_or_default();
        let mut tracker = necsa.then(|| EpisodeTracker::new(ppo.necsa, obs_dim, ppo.gamma, &obs));
        let mut learning_return = 0.0;
        let mut first = true;
        loop {
            let d = decide(spec, learner.as_ref(), &obs, &carry, action_dim, false, &mut explore)?;
            let step = env.step(&d.action)?;
            let reward = step.record.breakdown.reward * ppo.reward_scale;
            let revised = match tracker.as_mut() {
                Some(t) => t.step(&table, reward, &step.observation),
                None => reward,
            };
            learning_return += revised;
            if let Some(l) = learner.as_mut() {
                buffer.push(Transition {
                    state: std::mem::take(&mut obs),
                    action: d.action,
                    log_prob: d.log_prob,
                    value: d.value,
                    raw_reward: reward,
                    revised_reward: revised,
                    next_state: step.observation.clone(),
                    done: step.done,
                    carry: std::mem::take(&mut carry),
                    first,
                });
                if buffer.len() >= ppo.batch_size {
                    let stats = l.update(&buffer)?;
                    buffer.clear();
                    observer.on_update(&stats)?;
                    updates.push(stats);
                }
            }
            first = false;
            obs = step.observation;
            carry = d.next;
            if step.done {
                break;
            }
        }
        if let Some(t) = tracker {
            t.finish(&mut table);
        }
        let log = EpisodeLog {
            episode,
            env_seed,
            summary: env.summary(),
            learning_return,
            updates: updates.len(),
        };
        observer.on_episode(&log)?;
        episodes.push(log);
        let last = episode + 1 == ppo.episodes;
        let periodic = cfg.rl.checkpoint_every > 0 && (episode + 1) % cfg.rl.checkpoint_every == 0;
        if let Some(l) = learner.as_ref() {
            if last || periodic {
                observer.on_checkpoint(episode, l)?;
            }
        }
    }
    Ok(TrainOutcome {
        episodes,
        updates,
        learner,
        pending: buffer,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalEpisode {
    pub log: EpisodeLog,
    pub slots: Vec<SlotRecord>,
}

/// Rolls out `episodes` episodes, acting with the policy mean.
pub fn evaluate(
    cfg: &RunConfig,
    spec: AgentSpec,
    learner: Option<&Learner>,
    episodes: usize,
    seed: u64,
) -> Result<Vec<EvalEpisode>, RlError> {
    let seeds = SeedTree::new(seed);
    let mut env = build_env(cfg, spec)?;
    let action_dim = env.action_dim();
    let mut explore = seeds.stream(EXPLORATION);
    let mut out = Vec::with_capacity(episodes);
    for episode in 0..episodes {
        let env_seed = seeds.child("eval", episode as u64).root();
        let mut obs = env.reset(env_seed);
        let mut carry = learner.map(Learner::initial_state).unwrap_or_default();
        let mut slots = Vec::with_capacity(cfg.env.horizon);
        let mut learning_return = 0.0;
        loop {
            let d = decide(spec, learner, &obs, &carry, action_dim, true, &mut explore)?;
            let step = env.step(&d.action)?;
            learning_return += step.record.breakdown.reward * cfg.rl.ppo.reward_scale;
            slots.push(step.record);
            obs = step.observation;
            carry = d.next;
            if step.done {
                break;
            }
        }
        out.push(EvalEpisode {
            log: EpisodeLog {
                episode,
                env_seed,
                summary: env.summary(),
                learning_return,
                updates: learner.map_or(0, Learner::updates),
            },
            slots,
        });
    }
    Ok(out)
}

/// Builds the learner shape for `cfg`/`spec` and loads a checkpoint into it.
pub fn load_learner(dir: &Path, cfg: &RunConfig, spec: AgentSpec) -> Result<Learner, RlError> {
    let features = spec
        .features()
        .ok_or(RlError::NoPolicy(cfg.rl.agent))?;
    let env = build_env(cfg, spec)?;
    Learner::load(dir, cfg, features, env.observation_dim(), env.action_dim())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(agent: AgentKind) -> RunConfig {
        let mut cfg = RunConfig::toy();
        cfg.rl.agent = agent;
        cfg.nn.hidden = 8;
        cfg.env.horizon = 5;
        cfg.rl.ppo.episodes = 1;
        cfg
    }

    #[test]
    fn no_update_below_batch_size() {
        let cfg = tiny(AgentKind::Eppo);
        let out = train(&cfg, AgentKind::Eppo.into(), &mut ()).unwrap();
        assert!(out.updates.is_empty());
        assert_eq!(out.pending.len(), 5);
        assert!(out.pending[0].first && out.pending[4].done);
    }

    #[test]
    fn chunking_respects_episode_starts() {
        let mk = |first| Transition {
            state: vec![],
            action: vec![],
            log_prob: 0.0,
            value: 0.0,
            raw_reward: 0.0,
            revised_reward: 0.0,
            next_state: vec![],
            done: false,
            carry: RecurrentState::default(),
            first,
        };
        let buf: Vec<Transition> = [false, false, true, false, false, false, false]
            .into_iter()
            .map(mk)
            .collect();
        let lens: Vec<usize> = chunks(&buf, 3).iter().map(|c| c.len).collect();
        assert_eq!(lens, vec![2, 3, 2]);
    }

    #[test]
    fn update_runs_and_is_finite() {
        let mut cfg = tiny(AgentKind::Eppo);
        cfg.env.horizon = 20;
        cfg.rl.ppo.episodes = 3;
        cfg.rl.ppo.batch_size = 32;
        cfg.rl.ppo.minibatch_size = 16;
        cfg.rl.ppo.epochs = 2;
        let out = train(&cfg, AgentKind::Eppo.into(), &mut ()).unwrap();
        assert_eq!(out.updates.len(), 1);
        assert!(out.updates[0].loss.total.is_finite());
        assert!(out.learner.unwrap().store.all_finite());
    }
}
