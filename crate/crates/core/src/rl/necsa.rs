//! Grid state abstraction and the episodic score table used to revise rewards.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NecsaConfig {
    /// Grid cells per observation dimension.
    pub bins: usize,
    /// Number of consecutive observations forming one pattern.
    pub order: usize,
    /// Weight of the score added to the reward.
    pub weight: f64,
}

impl Default for NecsaConfig {
    fn default() -> Self {
        Self {
            bins: 5,
            order: 1,
            weight: 0.2,
        }
    }
}

pub type StateKey = Vec<i32>;

/// Grid cell of one observation; components are clamped into `[0, 1]`.
pub fn discretize(obs: &[f64], bins: usize) -> Vec<i32> {
    let top = bins.saturating_sub(1) as i32;
    obs.iter()
        .map(|&v| ((v.clamp(0.0, 1.0) * bins as f64).floor() as i32).min(top))
        .collect()
}

/// Key for the newest `order` observations in `history` (oldest first).
/// Missing history is padded with `-1` cells.
pub fn abstract_state<'a, I>(history: I, obs_dim: usize, bins: usize, order: usize) -> StateKey
where
    I: IntoIterator<Item = &'a [f64]>,
    I::IntoIter: DoubleEndedIterator,
{
    let recent: Vec<&[f64]> = history.into_iter().rev().take(order).collect();
    let mut key = Vec::with_capacity(order * obs_dim);
    for _ in recent.len()..order {
        key.extend(std::iter::repeat_n(-1, obs_dim));
    }
    for obs in recent.iter().rev() {
        key.extend(discretize(obs, bins));
    }
    key
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyStats {
    pub visits: u64,
    pub mean_return: f64,
}

/// Running mean of recorded episode returns per abstract state.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EpisodicTable {
    entries: BTreeMap<StateKey, KeyStats>,
    min: f64,
    max: f64,
}

impl EpisodicTable {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, key: &[i32]) -> Option<&KeyStats> {
        self.entries.get(key)
    }

    /// Smallest and largest mean return in the table.
    pub fn range(&self) -> Option<(f64, f64)> {
        (!self.entries.is_empty()).then_some((self.min, self.max))
    }

    pub fn record(&mut self, key: StateKey, ret: f64) {
        let was_empty = self.entries.is_empty();
        let stats = self.entries.entry(key).or_insert(KeyStats {
            visits: 0,
            mean_return: f64::NAN,
        });
        let old = stats.mean_return;
        stats.visits += 1;
        stats.mean_return = if stats.visits == 1 {
            ret
        } else {
            old + (ret - old) / stats.visits as f64
        };
        let new = stats.mean_return;
        if was_empty {
            (self.min, self.max) = (new, new);
        } else if old == self.min || old == self.max {
            self.refresh_range();
        } else {
            self.min = self.min.min(new);
            self.max = self.max.max(new);
        }
    }

    fn refresh_range(&mut self) {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for s in self.entries.values() {
            lo = lo.min(s.mean_return);
            hi = hi.max(s.mean_return);
        }
        self.min = lo;
        self.max = hi;
    }

    /// Min-max normalised mean return; 0.5 for unknown keys or a flat table.
    pub fn score(&self, key: &[i32]) -> f64 {
        match (self.entries.get(key), self.range()) {
            (Some(stats), Some((lo, hi))) if hi > lo => (stats.mean_return - lo) / (hi - lo),
            _ => 0.5,
        }
    }
}

pub fn necsa_revise(reward: f64, score: f64, weight: f64) -> f64 {
    if weight == 0.0 {
        reward
    } else {
        reward + weight * score
    }
}

/// Per-episode bookkeeping: observation history, visited keys and the
/// discounted return accumulated so far.
#[derive(Debug, Clone)]
pub struct EpisodeTracker {
    config: NecsaConfig,
    obs_dim: usize,
    history: VecDeque<Vec<f64>>,
    visited: BTreeSet<StateKey>,
    discounted_return: f64,
    discount: f64,
    gamma: f64,
}

impl EpisodeTracker {
    pub fn new(config: NecsaConfig, obs_dim: usize, gamma: f64, first_obs: &[f64]) -> Self {
        let mut t = Self {
            config,
            obs_dim,
            history: VecDeque::with_capacity(config.order.max(1)),
            visited: BTreeSet::new(),
            discounted_return: 0.0,
            discount: 1.0,
            gamma,
        };
        t.push(first_obs);
        t
    }

    fn push(&mut self, obs: &[f64]) -> StateKey {
        if self.history.len() == self.config.order.max(1) {
            self.history.pop_front();
        }
        self.history.push_back(obs.to_vec());
        let key = abstract_state(
            self.history.iter().map(Vec::as_slice),
            self.obs_dim,
            self.config.bins,
            self.config.order,
        );
        self.visited.insert(key.clone());
        key
    }

    /// Registers the next observation and reward; returns the revised reward.
    pub fn step(&mut self, table: &EpisodicTable, reward: f64, next_obs: &[f64]) -> f64 {
        self.discounted_return += self.discount * reward;
        self.discount *= self.gamma;
        let key = self.push(next_obs);
        necsa_revise(reward, table.score(&key), self.config.weight)
    }

    pub fn discounted_return(&self) -> f64 {
        self.discounted_return
    }

    /// Writes the episode's return once for every distinct key it visited.
    pub fn finish(self, table: &mut EpisodicTable) {
        let ret = self.discounted_return;
        for key in self.visited {
            table.record(key, ret);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn boundary_bins() {
        assert_eq!(discretize(&[0.0, 0.999, 1.0, 0.2], 5), vec![0, 4, 4, 1]);
    }

    #[test]
    fn padding_for_short_history() {
        let a = [0.1, 0.9];
        let key = abstract_state([&a[..]], 2, 5, 2);
        assert_eq!(key, vec![-1, -1, 0, 4]);
    }

    #[test]
    fn score_conventions() {
        let mut t = EpisodicTable::default();
        assert_eq!(t.score(&[0]), 0.5);
        t.record(vec![0], 1.0);
        assert_eq!(t.score(&[0]), 0.5);
        t.record(vec![1], 3.0);
        assert_eq!(t.score(&[0]), 0.0);
        assert_eq!(t.score(&[1]), 1.0);
        assert_eq!(necsa_revise(2.0, t.score(&[1]), 0.2), 2.2);
        assert_eq!(necsa_revise(2.0, t.score(&[9]), 0.2), 2.1);
    }

    #[test]
    fn zero_weight_is_identity() {
        assert_eq!(necsa_revise(-0.0, 0.7, 0.0).to_bits(), (-0.0f64).to_bits());
    }
}
