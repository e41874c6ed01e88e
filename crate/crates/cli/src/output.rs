//! File formats written by the commands.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use airs_core::config::RunConfig;
use airs_core::env::SlotRecord;
use airs_core::rl::{EpisodeLog, UpdateStats};
use airs_core::rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::{CliError, CODE_HASH};

pub const MANIFEST: &str = "manifest.json";
pub const METRICS: &str = "metrics.csv";
pub const EPISODES: &str = "episodes.jsonl";
pub const UPDATES: &str = "updates.csv";
pub const SLOTS: &str = "slots.csv";
pub const TRAJECTORY: &str = "trajectory.csv";
pub const NAN_DUMP: &str = "nan_dump.json";
pub const CHECKPOINTS: &str = "checkpoints";

pub fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    Ok(BufWriter::new(file))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w).map_err(|e| CliError::io(path, e))?;
    w.flush().map_err(|e| CliError::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedLedger {
    pub root: u64,
    pub streams: Vec<String>,
    pub episode_seed: String,
    pub eval_seed: String,
}

impl SeedLedger {
    pub fn new(root: u64) -> Self {
        Self {
            root,
            streams: [
                rng::CITY,
                rng::USERS,
                rng::CHANNEL,
                rng::UAV_INIT,
                rng::POLICY_INIT,
                rng::EXPLORATION,
                rng::MINIBATCH,
            ]
            .iter()
            .map(|s| s.to_string())
            .collect(),
            episode_seed: "SeedTree(root).child(\"episode\", n)".into(),
            eval_seed: "SeedTree(root).child(\"eval\", n)".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunStatus {
    pub state: String,
    pub episodes_completed: usize,
    pub updates: usize,
    pub final_checkpoint: Option<String>,
}

/// Everything needed to reproduce a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub command: String,
    pub code_hash: String,
    pub agent: String,
    pub config: RunConfig,
    pub seeds: SeedLedger,
    pub hyperparameters: Value,
    pub status: RunStatus,
}

impl Manifest {
    pub fn new(command: &str, cfg: &RunConfig, hyperparameters: Value) -> Self {
        Self {
            format_version: 1,
            command: command.into(),
            code_hash: CODE_HASH.into(),
            agent: cfg.rl.agent.name().into(),
            config: cfg.clone(),
            seeds: SeedLedger::new(cfg.rl.seed),
            hyperparameters,
            status: RunStatus {
                state: "running".into(),
                episodes_completed: 0,
                updates: 0,
                final_checkpoint: None,
            },
        }
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Shortest round-trip decimal form, so equal values always print equally.
pub fn num(x: f64) -> String {
    format!("{x}")
}

pub fn metrics_header(users: usize) -> Vec<String> {
    let mut h = vec!["episode".to_string(), "cumulative_reward".to_string()];
    h.extend((0..users).map(|u| format!("avg_rate_user_{u}")));
    h.extend(["cumulative_energy", "sum_F_t", "mean_penalty", "jain"].map(String::from));
    h
}

pub fn metrics_row(log: &EpisodeLog) -> Vec<String> {
    let s = &log.summary;
    let mut row = vec![log.episode.to_string(), num(s.cumulative_reward)];
    row.extend(s.avg_rate_per_user.iter().map(|r| num(*r)));
    row.extend([num(s.cumulative_energy), num(s.sum_objective), num(s.mean_penalty), num(s.jain)]);
    row
}

pub const UPDATE_HEADER: [&str; 9] = [
    "update",
    "transitions",
    "actor_loss",
    "critic_loss",
    "entropy",
    "total_loss",
    "approx_kl",
    "clip_fraction",
    "grad_norm",
];

pub fn update_row(u: &UpdateStats) -> Vec<String> {
    vec![
        u.update.to_string(),
        u.transitions.to_string(),
        num(u.loss.actor),
        num(u.loss.critic),
        num(u.loss.entropy),
        num(u.loss.total),
        num(u.approx_kl),
        num(u.clip_fraction),
        num(u.grad_norm),
    ]
}

pub const SLOT_HEADER: [&str; 10] = [
    "episode",
    "t",
    "served_user",
    "rate_bps",
    "energy_j",
    "jain",
    "reward",
    "F_t",
    "los",
    "violated",
];

pub fn slot_row(episode: usize, s: &SlotRecord) -> Vec<String> {
    let b = &s.breakdown;
    vec![
        episode.to_string(),
        s.t.to_string(),
        s.served_user.to_string(),
        num(b.rate),
        num(b.energy),
        num(b.fairness),
        num(b.reward),
        num(s.objective),
        u8::from(b.los).to_string(),
        u8::from(s.violated).to_string(),
    ]
}

pub const TRAJECTORY_HEADER: [&str; 10] = ["episode", "t", "x", "y", "z", "ax", "ay", "az", "energy_joules", "violated"];

pub fn trajectory_row(episode: usize, s: &SlotRecord) -> Vec<String> {
    let (p, d) = (s.position, s.displacement);
    vec![
        episode.to_string(),
        s.t.to_string(),
        num(p.x),
        num(p.y),
        num(p.z),
        num(d.x),
        num(d.y),
        num(d.z),
        num(s.breakdown.energy),
        u8::from(s.violated).to_string(),
    ]
}
