//! The decision process: observation assembly, round-robin TDMA service,
//! fairness-weighted rate/energy reward and episode bookkeeping.

use std::collections::VecDeque;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{
    self, angles_at, path_loss_db, ChannelError, Fading, IrsGeometry, LinkBudget, PathLossModel,
    PhaseShifts,
};
use crate::geom::Vec3;
use crate::rng::{SeedTree, StreamRng, CHANNEL, UAV_INIT, USERS};
use crate::scenario::{City, UserTrack};
use crate::uav::{self, EnergyModel, FlightEnvelope, UavState};

#[derive(Debug, Error, PartialEq)]
pub enum EnvError {
    #[error("episode finished; call reset first")]
    EpisodeFinished,
    #[error("action has {got} entries, expected {expected}")]
    ActionDimension { expected: usize, got: usize },
    #[error("fairness of an empty rate vector is undefined")]
    EmptyRates,
    #[error("energy must be positive, got {0}")]
    NonPositiveEnergy(f64),
    #[error("invalid episode config: {0}")]
    Config(String),
    #[error(transparent)]
    Channel(#[from] ChannelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelConfig {
    pub irs: IrsGeometry,
    pub path_loss: PathLossModel,
    pub link: LinkBudget,
    pub rician_k: f64,
    /// Use deterministic line-of-sight channels instead of Rician draws.
    pub pure_los: bool,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            irs: IrsGeometry::default(),
            path_loss: PathLossModel::default(),
            link: LinkBudget::default(),
            rician_k: 10.0,
            pure_los: false,
        }
    }
}

impl ChannelConfig {
    pub fn fading(&self) -> Fading {
        if self.pure_los {
            Fading::PureLos
        } else {
            Fading::Rician(self.rician_k)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UavConfig {
    pub energy: EnergyModel,
    /// Slot duration, seconds.
    pub slot_duration: f64,
}

impl Default for UavConfig {
    fn default() -> Self {
        Self {
            energy: EnergyModel::default(),
            slot_duration: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EpisodeConfig {
    /// Slots per episode.
    pub horizon: usize,
    /// Largest per-slot flight distance, meters.
    pub d_max: f64,
    /// Out-of-bounds penalty.
    pub penalty: f64,
    /// Number of served users, taken from the front of the scenario's list.
    pub users: usize,
    /// Slots of history behind each user's running rate; 0 = whole episode.
    pub rate_window: usize,
    /// Observe every user's position instead of only the served one.
    pub observe_all_users: bool,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self {
            horizon: 300,
            d_max: 30.0,
            penalty: 0.04,
            users: 1,
            rate_window: 0,
            observe_all_users: false,
        }
    }
}

/// How the IRS phases are chosen each slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseMode {
    /// Closed-form co-phasing from positions; actions are 3-D displacements.
    Optimal,
    /// The agent outputs one extra action entry per element, mapped to `π·a`.
    FromAction,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub rate: f64,
    pub energy: f64,
    pub fairness: f64,
    pub penalty: f64,
    pub los: bool,
    pub reward: f64,
}

/// Everything logged about one slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotRecord {
    pub t: usize,
    pub served_user: usize,
    pub position: Vec3,
    pub displacement: Vec3,
    pub violated: bool,
    pub breakdown: RewardBreakdown,
    /// Fairness-weighted rate per joule for the slot.
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub observation: Vec<f64>,
    pub record: SlotRecord,
    pub done: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub cumulative_reward: f64,
    pub avg_rate_per_user: Vec<f64>,
    pub cumulative_energy: f64,
    pub sum_objective: f64,
    pub mean_penalty: f64,
    pub jain: f64,
    pub slots: usize,
}

/// `(Σr)² / (n·Σr²)`; an all-zero vector scores the worst case `1/n`.
pub fn jain_index(rates: &[f64]) -> Result<f64, EnvError> {
    if rates.is_empty() {
        return Err(EnvError::EmptyRates);
    }
    let n = rates.len() as f64;
    let sum: f64 = rates.iter().sum();
    let sum_sq: f64 = rates.iter().map(|r| r * r).sum();
    if sum_sq == 0.0 {
        return Ok(1.0 / n);
    }
    Ok((sum * sum / (n * sum_sq)).clamp(1.0 / n, 1.0))
}

/// `ξ·Σr / E` with `ξ` the Jain index of `rates`.
pub fn objective_ratio(rates: &[f64], energy: f64) -> Result<f64, EnvError> {
    let xi = jain_index(rates)?;
    fairness_ratio(xi, rates.iter().sum(), energy)
}

/// `ξ·Σr / E` for a fairness value computed elsewhere.
pub fn fairness_ratio(xi: f64, rate_sum: f64, energy: f64) -> Result<f64, EnvError> {
    if energy.is_nan() || energy <= 0.0 {
        return Err(EnvError::NonPositiveEnergy(energy));
    }
    Ok(xi * rate_sum / energy)
}

#[derive(Debug, Clone, Default)]
struct RunningRate {
    window: VecDeque<(usize, f64)>,
    sum: f64,
}

impl RunningRate {
    fn push(&mut self, t: usize, rate: f64, horizon: usize) {
        self.window.push_back((t, rate));
        self.sum += rate;
        if horizon > 0 {
            while let Some(&(t0, r0)) = self.window.front() {
                if t0 + horizon <= t {
                    self.window.pop_front();
                    self.sum -= r0;
                } else {
                    break;
                }
            }
        }
    }

    fn mean(&self) -> f64 {
        if self.window.is_empty() {
            0.0
        } else {
            self.sum / self.window.len() as f64
        }
    }
}

#[derive(Debug, Clone, Default)]
struct EpisodeTotals {
    reward: f64,
    energy: f64,
    objective: f64,
    penalty: f64,
    rate_sum: Vec<f64>,
    served: Vec<usize>,
}

/// One environment instance; single owner, cheap to clone the shared city.
#[derive(Debug, Clone)]
pub struct Env {
    city: Arc<City>,
    channel: ChannelConfig,
    uav_cfg: UavConfig,
    cfg: EpisodeConfig,
    phase_mode: PhaseMode,
    envelope: FlightEnvelope,
    uav: UavState,
    users: Vec<UserTrack>,
    t: usize,
    active: bool,
    running: Vec<RunningRate>,
    totals: EpisodeTotals,
    user_rng: StreamRng,
    channel_rng: StreamRng,
}

impl Env {
    pub fn new(
        city: Arc<City>,
        channel: ChannelConfig,
        uav_cfg: UavConfig,
        cfg: EpisodeConfig,
        phase_mode: PhaseMode,
    ) -> Result<Self, EnvError> {
        if cfg.horizon == 0 {
            return Err(EnvError::Config("horizon must be >= 1".into()));
        }
        if cfg.penalty.is_nan() || cfg.penalty < 0.0 {
            return Err(EnvError::Config("penalty must be >= 0".into()));
        }
        if cfg.d_max.is_nan() || cfg.d_max < 0.0 {
            return Err(EnvError::Config("d_max must be >= 0".into()));
        }
        if cfg.users == 0 || cfg.users > city.config.user_initial_positions.len() {
            return Err(EnvError::Config(format!(
                "users = {} but the scenario lists {} initial positions",
                cfg.users,
                city.config.user_initial_positions.len()
            )));
        }
        if uav_cfg.slot_duration.is_nan() || uav_cfg.slot_duration <= 0.0 {
            return Err(EnvError::Config("slot_duration must be > 0".into()));
        }
        uav_cfg
            .energy
            .validate()
            .map_err(|e| EnvError::Config(e.to_string()))?;
        channel.irs.validate()?;
        let envelope = FlightEnvelope::from_scenario(&city.config);
        let seeds = SeedTree::new(0);
        Ok(Self {
            envelope,
            uav: UavState {
                position: envelope.midpoint(),
                last_action: Vec3::ZERO,
                slot_duration: uav_cfg.slot_duration,
            },
            users: Vec::new(),
            t: 0,
            active: false,
            running: Vec::new(),
            totals: EpisodeTotals::default(),
            user_rng: seeds.stream(USERS),
            channel_rng: seeds.stream(CHANNEL),
            city,
            channel,
            uav_cfg,
            cfg,
            phase_mode,
        })
    }

    pub fn city(&self) -> &City {
        &self.city
    }

    pub fn config(&self) -> &EpisodeConfig {
        &self.cfg
    }

    pub fn channel_config(&self) -> &ChannelConfig {
        &self.channel
    }

    pub fn envelope(&self) -> &FlightEnvelope {
        &self.envelope
    }

    pub fn uav(&self) -> &UavState {
        &self.uav
    }

    pub fn users(&self) -> &[UserTrack] {
        &self.users
    }

    pub fn slot(&self) -> usize {
        self.t
    }

    pub fn phase_mode(&self) -> PhaseMode {
        self.phase_mode
    }

    pub fn observation_dim(&self) -> usize {
        if self.cfg.observe_all_users {
            3 + 3 * self.cfg.users
        } else {
            6
        }
    }

    pub fn action_dim(&self) -> usize {
        match self.phase_mode {
            PhaseMode::Optimal => 3,
            PhaseMode::FromAction => 3 + self.channel.irs.elements(),
        }
    }

    fn served_user(&self, t: usize) -> usize {
        t % self.cfg.users
    }

    /// Starts a new episode with the UAV placed uniformly in the envelope.
    pub fn reset(&mut self, seed: u64) -> Vec<f64> {
        let seeds = SeedTree::new(seed);
        let mut placement = seeds.stream(UAV_INIT);
        self.user_rng = seeds.stream(USERS);
        self.channel_rng = seeds.stream(CHANNEL);
        let (lo, hi) = (self.envelope.min, self.envelope.max);
        let position = Vec3::new(
            placement.random_range(lo.x..=hi.x),
            placement.random_range(lo.y..=hi.y),
            placement.random_range(lo.z..=hi.z),
        );
        self.uav = UavState {
            position,
            last_action: Vec3::ZERO,
            slot_duration: self.uav_cfg.slot_duration,
        };
        let city = Arc::clone(&self.city);
        self.users = city.config.user_initial_positions[..self.cfg.users]
            .iter()
            .map(|&p| city.place_user(p, &mut self.user_rng))
            .collect();
        self.t = 0;
        self.active = true;
        self.running = vec![RunningRate::default(); self.cfg.users];
        self.totals = EpisodeTotals {
            rate_sum: vec![0.0; self.cfg.users],
            served: vec![0; self.cfg.users],
            ..EpisodeTotals::default()
        };
        self.observe()
    }

    /// Observation for the slot about to be played.
    pub fn observe(&self) -> Vec<f64> {
        let mut obs = Vec::with_capacity(self.observation_dim());
        obs.extend(self.envelope.normalize(self.uav.position));
        let user_norm = |p: Vec3| -> [f64; 3] {
            let c = &self.city.config;
            let n = |v: f64, lo: f64, hi: f64| ((v - lo) / (hi - lo)).clamp(0.0, 1.0);
            [
                n(p.x, c.area_x_min, c.area_x_max),
                n(p.y, c.area_y_min, c.area_y_max),
                n(p.z, 0.0, c.alt_max),
            ]
        };
        if self.cfg.observe_all_users {
            for u in &self.users {
                obs.extend(user_norm(u.position));
            }
        } else if let Some(u) = self.users.get(self.served_user(self.t)) {
            obs.extend(user_norm(u.position));
        } else {
            obs.extend([0.0; 3]);
        }
        obs
    }

    pub fn is_done(&self) -> bool {
        !self.active
    }

    pub fn step(&mut self, action: &[f64]) -> Result<StepOutcome, EnvError> {
        if !self.active {
            return Err(EnvError::EpisodeFinished);
        }
        if action.len() != self.action_dim() {
            return Err(EnvError::ActionDimension {
                expected: self.action_dim(),
                got: action.len(),
            });
        }
        let dt = self.uav_cfg.slot_duration;
        let displacement = uav::scale_action([action[0], action[1], action[2]], self.cfg.d_max);
        let before = self.uav.position;
        let (next, violated) = uav::apply_action(&self.uav, displacement, &self.envelope);
        self.uav = next;
        let flown = self.uav.position - before;

        let city = Arc::clone(&self.city);
        for u in self.users.iter_mut() {
            *u = city.step_user(*u, dt, &mut self.user_rng);
        }

        let served = self.served_user(self.t);
        let su = city.config.su_position;
        let irs = self.uav.position;
        let user = self.users[served].position;

        let geom = &self.channel.irs;
        let phases = match self.phase_mode {
            PhaseMode::Optimal => channel::optimal_phases(geom, su, irs, user)?,
            PhaseMode::FromAction => PhaseShifts::wrapped(
                action[3..].iter().map(|a| std::f64::consts::PI * a.clamp(-1.0, 1.0)),
            ),
        };
        // Channels are drawn every slot so the stream advances identically
        // whether or not the links are blocked.
        let (az_si, el_si) = angles_at(irs, su)?;
        let (az_ie, el_ie) = angles_at(irs, user)?;
        let fading = self.channel.fading();
        let loss_si = path_loss_db(&self.channel.path_loss, irs.distance(su))?;
        let loss_ie = path_loss_db(&self.channel.path_loss, irs.distance(user))?;
        let g = channel::sample_channel(geom, loss_si, fading, az_si, el_si, &mut self.channel_rng);
        let h = channel::sample_channel(geom, loss_ie, fading, az_ie, el_ie, &mut self.channel_rng);

        let los = city.is_los(su, irs) && city.is_los(irs, user);
        let rate = if los {
            channel::achievable_rate(&self.channel.link, &g, &phases, &h)?
        } else {
            0.0
        };
        let energy = uav::propulsion_energy(&self.uav_cfg.energy, flown, dt)
            .map_err(|e| EnvError::Config(e.to_string()))?;

        self.running[served].push(self.t, rate, self.cfg.rate_window);
        let averages: Vec<f64> = self.running.iter().map(RunningRate::mean).collect();
        let fairness = jain_index(&averages)?;
        let penalty = if violated { self.cfg.penalty } else { 0.0 };
        let reward = if los { fairness * rate / energy - penalty } else { 0.0 };
        let objective = fairness_ratio(fairness, rate, energy)?;

        let record = SlotRecord {
            t: self.t,
            served_user: served,
            position: irs,
            displacement: flown,
            violated,
            breakdown: RewardBreakdown {
                rate,
                energy,
                fairness,
                penalty: if los { penalty } else { 0.0 },
                los,
                reward,
            },
            objective,
        };

        let totals = &mut self.totals;
        totals.reward += reward;
        totals.energy += energy;
        totals.objective += objective;
        totals.penalty += record.breakdown.penalty;
        totals.rate_sum[served] += rate;
        totals.served[served] += 1;

        self.t += 1;
        let done = self.t >= self.cfg.horizon;
        if done {
            self.active = false;
        }
        Ok(StepOutcome {
            observation: self.observe(),
            record,
            done,
        })
    }

    /// Totals for the episode so far.
    pub fn summary(&self) -> EpisodeSummary {
        let totals = &self.totals;
        let avg: Vec<f64> = totals
            .rate_sum
            .iter()
            .zip(&totals.served)
            .map(|(s, &n)| if n == 0 { 0.0 } else { s / n as f64 })
            .collect();
        let jain = jain_index(&avg).unwrap_or(1.0);
        EpisodeSummary {
            cumulative_reward: totals.reward,
            cumulative_energy: totals.energy,
            sum_objective: totals.objective,
            mean_penalty: if self.t == 0 { 0.0 } else { totals.penalty / self.t as f64 },
            jain,
            avg_rate_per_user: avg,
            slots: self.t,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::ScenarioConfig;

    fn env_with(cfg: EpisodeConfig, pure_los: bool) -> Env {
        let city = Arc::new(City::new(ScenarioConfig::default()).unwrap());
        let channel = ChannelConfig {
            pure_los,
            ..ChannelConfig::default()
        };
        Env::new(city, channel, UavConfig::default(), cfg, PhaseMode::Optimal).unwrap()
    }

    #[test]
    fn jain_examples() {
        assert!((jain_index(&[2.0, 2.0, 2.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((jain_index(&[7.5, 0.0, 0.0]).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!((jain_index(&[1.0, 2.0, 3.0]).unwrap() - 6.0 / 7.0).abs() < 1e-15);
        assert_eq!(jain_index(&[0.0, 0.0]).unwrap(), 0.5);
        assert_eq!(jain_index(&[]), Err(EnvError::EmptyRates));
    }

    #[test]
    fn objective_examples() {
        assert_eq!(objective_ratio(&[0.0, 0.0, 0.0], 10.0).unwrap(), 0.0);
        assert_eq!(objective_ratio(&[6.0], 3.0).unwrap(), 2.0);
        assert_eq!(objective_ratio(&[1.0, 1.0], 2.0).unwrap(), 1.0);
        assert_eq!(objective_ratio(&[1.0], 0.0), Err(EnvError::NonPositiveEnergy(0.0)));
    }

    #[test]
    fn reset_is_deterministic_and_normalized() {
        let mut env = env_with(EpisodeConfig::default(), false);
        let a = env.reset(42);
        let b = env.reset(42);
        assert_eq!(a, b);
        assert_eq!(a.len(), 6);
        assert!(a.iter().all(|v| (0.0..=1.0).contains(v)));
        assert_ne!(env.reset(43), a);
    }

    #[test]
    fn stepping_a_finished_episode_fails() {
        let cfg = EpisodeConfig {
            horizon: 2,
            ..EpisodeConfig::default()
        };
        let mut env = env_with(cfg, true);
        env.reset(0);
        assert!(!env.step(&[0.0; 3]).unwrap().done);
        assert!(env.step(&[0.0; 3]).unwrap().done);
        assert_eq!(env.step(&[0.0; 3]), Err(EnvError::EpisodeFinished));
    }

    #[test]
    fn wrong_action_length_is_rejected() {
        let mut env = env_with(EpisodeConfig::default(), true);
        env.reset(0);
        assert_eq!(
            env.step(&[0.0; 4]),
            Err(EnvError::ActionDimension { expected: 3, got: 4 })
        );
    }

    #[test]
    fn reward_matches_breakdown() {
        let mut env = env_with(EpisodeConfig::default(), true);
        env.reset(5);
        for _ in 0..300 {
            let out = env.step(&[0.3, -0.2, 0.1]).unwrap();
            let b = out.record.breakdown;
            if b.los {
                assert_eq!(b.fairness, 1.0);
                let want = b.rate / b.energy - if out.record.violated { 0.04 } else { 0.0 };
                assert_eq!(b.reward, want);
            } else {
                assert_eq!(b.reward, 0.0);
                assert_eq!(b.rate, 0.0);
            }
        }
    }

    #[test]
    fn multi_user_observation_and_round_robin() {
        let cfg = EpisodeConfig {
            users: 3,
            observe_all_users: true,
            horizon: 9,
            ..EpisodeConfig::default()
        };
        let mut env = env_with(cfg, true);
        let obs = env.reset(1);
        assert_eq!(obs.len(), 12);
        for t in 0..9 {
            let out = env.step(&[0.0; 3]).unwrap();
            assert_eq!(out.record.served_user, t % 3);
            let f = out.record.breakdown.fairness;
            assert!((1.0 / 3.0 - 1e-12..=1.0 + 1e-12).contains(&f));
        }
        assert_eq!(env.summary().slots, 9);
    }

    #[test]
    fn too_many_users_is_a_config_error() {
        let city = Arc::new(City::new(ScenarioConfig::default()).unwrap());
        let cfg = EpisodeConfig {
            users: 4,
            ..EpisodeConfig::default()
        };
        assert!(matches!(
            Env::new(city, ChannelConfig::default(), UavConfig::default(), cfg, PhaseMode::Optimal),
            Err(EnvError::Config(_))
        ));
    }

    #[test]
    fn running_rate_window() {
        let mut r = RunningRate::default();
        r.push(0, 3.0, 2);
        r.push(1, 5.0, 2);
        assert_eq!(r.mean(), 4.0);
        r.push(2, 7.0, 2);
        assert_eq!(r.mean(), 6.0);
        let mut all = RunningRate::default();
        for t in 0..4 {
            all.push(t, t as f64, 0);
        }
        assert_eq!(all.mean(), 1.5);
    }
}
