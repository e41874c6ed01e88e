use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::Command;

use airs_core::config::RunConfig;
use airs_core::nn::checkpoint;
use airs_core::rl::{
    evaluate, load_learner, train, AgentKind, AgentSpec, EpisodeLog, Features, Learner, RlError, TrainObserver,
    UpdateStats,
};
use serde_json::json;

use crate::config::ENV_PREFIX;
use crate::output::{self, Manifest};
use crate::CliError;

type CsvOut = csv::Writer<BufWriter<File>>;

fn csv_out(path: &Path) -> Result<CsvOut, CliError> {
    Ok(csv::Writer::from_writer(output::create(path)?))
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

struct RunWriter {
    out: PathBuf,
    metrics: CsvOut,
    episodes: BufWriter<File>,
    updates: CsvOut,
    last_checkpoint: Option<String>,
    label: String,
    total: usize,
    quiet: bool,
}

impl RunWriter {
    fn new(out: &Path, cfg: &RunConfig, quiet: bool) -> Result<Self, CliError> {
        let mut metrics = csv_out(&out.join(output::METRICS))?;
        metrics.write_record(output::metrics_header(cfg.env.users))?;
        let mut updates = csv_out(&out.join(output::UPDATES))?;
        updates.write_record(output::UPDATE_HEADER)?;
        Ok(Self {
            out: out.to_path_buf(),
            metrics,
            episodes: output::create(&out.join(output::EPISODES))?,
            updates,
            last_checkpoint: None,
            label: cfg.rl.agent.name().to_string(),
            total: cfg.rl.ppo.episodes,
            quiet,
        })
    }

    fn record(&mut self, log: &EpisodeLog) -> Result<(), CliError> {
        self.metrics.write_record(output::metrics_row(log))?;
        serde_json::to_writer(&mut self.episodes, log)?;
        let path = self.out.join(output::EPISODES);
        writeln!(self.episodes).map_err(|e| CliError::io(&path, e))
    }

    fn flush(&mut self) -> Result<(), CliError> {
        let path = self.out.join(output::EPISODES);
        self.metrics.flush().map_err(|e| CliError::io(&self.out.join(output::METRICS), e))?;
        self.updates.flush().map_err(|e| CliError::io(&self.out.join(output::UPDATES), e))?;
        self.episodes.flush().map_err(|e| CliError::io(&path, e))
    }
}

fn observer_err(e: CliError) -> RlError {
    RlError::Observer(e.to_string())
}

impl TrainObserver for RunWriter {
    fn on_episode(&mut self, log: &EpisodeLog) -> Result<(), RlError> {
        self.record(log).map_err(observer_err)?;
        let stride = (self.total / 10).max(1);
        if !self.quiet && (log.episode + 1).is_multiple_of(stride) {
            eprintln!(
                "[{}] episode {}/{}  reward {:.4e}  energy {:.1}  jain {:.3}  updates {}",
                self.label,
                log.episode + 1,
                self.total,
                log.summary.cumulative_reward,
                log.summary.cumulative_energy,
                log.summary.jain,
                log.updates
            );
        }
        Ok(())
    }

    fn on_update(&mut self, stats: &UpdateStats) -> Result<(), RlError> {
        self.updates
            .write_record(output::update_row(stats))
            .map_err(|e| observer_err(e.into()))
    }

    fn on_checkpoint(&mut self, episode: usize, learner: &Learner) -> Result<(), RlError> {
        let name = format!("{}/episode_{:05}", output::CHECKPOINTS, episode + 1);
        learner.save(&self.out.join(&name))?;
        self.last_checkpoint = Some(name);
        Ok(())
    }
}

fn base_hyperparameters(cfg: &RunConfig) -> serde_json::Value {
    let spec = AgentSpec::from(cfg.rl.agent);
    json!({
        "features": cfg.rl.agent.features(),
        "phase_mode": spec.phase_mode(),
        "ppo": cfg.rl.ppo,
        "nn": cfg.nn,
    })
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub episodes: Vec<EpisodeLog>,
    pub updates: usize,
    pub final_checkpoint: Option<PathBuf>,
}

/// Trains `cfg.rl.agent` and writes the manifest, metrics, update log and
/// checkpoints under `out`.
pub fn run_train(cfg: &RunConfig, out: &Path, quiet: bool) -> Result<TrainReport, CliError> {
    cfg.validate()?;
    ensure_dir(out)?;
    let manifest_path = out.join(output::MANIFEST);
    let mut manifest = Manifest::new("train", cfg, base_hyperparameters(cfg));
    output::write_json(&manifest_path, &manifest)?;

    let mut writer = RunWriter::new(out, cfg, quiet)?;
    let result = train(cfg, AgentSpec::from(cfg.rl.agent), &mut writer);
    writer.flush()?;
    match result {
        Ok(outcome) => {
            if let Some(learner) = &outcome.learner {
                manifest.hyperparameters["learner"] = learner.hyperparameters();
            }
            manifest.status.state = "completed".into();
            manifest.status.episodes_completed = outcome.episodes.len();
            manifest.status.updates = outcome.updates.len();
            manifest.status.final_checkpoint = writer.last_checkpoint.clone();
            output::write_json(&manifest_path, &manifest)?;
            Ok(TrainReport {
                updates: outcome.updates.len(),
                episodes: outcome.episodes,
                final_checkpoint: writer.last_checkpoint.map(|c| out.join(c)),
            })
        }
        Err(RlError::Numeric(dump)) => {
            let dump_path = out.join(output::NAN_DUMP);
            output::write_json(&dump_path, &dump)?;
            manifest.status.state = "numeric_abort".into();
            manifest.status.updates = dump.update;
            manifest.status.final_checkpoint = writer.last_checkpoint.clone();
            output::write_json(&manifest_path, &manifest)?;
            Err(CliError::Numeric(dump_path))
        }
        Err(e) => {
            manifest.status.state = "failed".into();
            output::write_json(&manifest_path, &manifest)?;
            Err(e.into())
        }
    }
}

/// Features stored with a checkpoint, so evaluation rebuilds the same network.
pub fn checkpoint_features(dir: &Path) -> Result<Features, CliError> {
    let manifest = checkpoint::read_manifest(dir).map_err(RlError::from)?;
    let features = manifest
        .hyperparameters
        .get("features")
        .cloned()
        .ok_or_else(|| CliError::Config(format!("{}: checkpoint does not record its features", dir.display())))?;
    Ok(serde_json::from_value(features)?)
}

/// The run manifest two levels above a checkpoint directory, if present.
pub fn run_manifest_for_checkpoint(dir: &Path) -> Option<Manifest> {
    let path = dir.parent()?.parent()?.join(output::MANIFEST);
    Manifest::read(&path).ok()
}

/// Greedy rollouts of a checkpointed policy or a baseline. Writes a summary
/// in the training metrics format plus per-slot and trajectory tables.
pub fn run_eval(
    cfg: &RunConfig,
    checkpoint: Option<&Path>,
    episodes: usize,
    out: &Path,
) -> Result<Vec<EpisodeLog>, CliError> {
    cfg.validate()?;
    let (spec, learner, agent) = match checkpoint {
        Some(dir) => {
            let features = checkpoint_features(dir)?;
            let spec = AgentSpec::Ppo(features);
            let agent = AgentKind::ALL
                .into_iter()
                .find(|k| k.features() == Some(features))
                .map_or_else(|| "custom".to_string(), |k| k.name().to_string());
            (spec, Some(load_learner(dir, cfg, spec)?), agent)
        }
        None if cfg.rl.agent.is_learning() => {
            return Err(CliError::Config(format!(
                "agent {} needs --checkpoint to evaluate",
                cfg.rl.agent
            )))
        }
        None => (AgentSpec::from(cfg.rl.agent), None, cfg.rl.agent.name().to_string()),
    };

    ensure_dir(out)?;
    let rolled = evaluate(cfg, spec, learner.as_ref(), episodes, cfg.rl.seed)?;

    let mut metrics = csv_out(&out.join(output::METRICS))?;
    metrics.write_record(output::metrics_header(cfg.env.users))?;
    let mut slots = csv_out(&out.join(output::SLOTS))?;
    slots.write_record(output::SLOT_HEADER)?;
    let mut traj = csv_out(&out.join(output::TRAJECTORY))?;
    traj.write_record(output::TRAJECTORY_HEADER)?;
    let jsonl_path = out.join(output::EPISODES);
    let mut jsonl = output::create(&jsonl_path)?;
    for ep in &rolled {
        metrics.write_record(output::metrics_row(&ep.log))?;
        serde_json::to_writer(&mut jsonl, &ep.log)?;
        writeln!(jsonl).map_err(|e| CliError::io(&jsonl_path, e))?;
        for s in &ep.slots {
            slots.write_record(output::slot_row(ep.log.episode, s))?;
            traj.write_record(output::trajectory_row(ep.log.episode, s))?;
        }
    }
    metrics.flush().map_err(|e| CliError::io(out, e))?;
    slots.flush().map_err(|e| CliError::io(out, e))?;
    traj.flush().map_err(|e| CliError::io(out, e))?;
    jsonl.flush().map_err(|e| CliError::io(&jsonl_path, e))?;

    let mut hyper = base_hyperparameters(cfg);
    hyper["features"] = json!(spec.features());
    hyper["checkpoint"] = json!(checkpoint.map(|p| p.display().to_string()));
    if let Some(l) = &learner {
        hyper["learner"] = l.hyperparameters();
    }
    let mut manifest = Manifest::new("eval", cfg, hyper);
    manifest.agent = agent;
    manifest.status.state = "completed".into();
    manifest.status.episodes_completed = rolled.len();
    output::write_json(&out.join(output::MANIFEST), &manifest)?;
    Ok(rolled.into_iter().map(|e| e.log).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Series {
    Reward,
    Rate,
    Energy,
    Penalty,
    Fairness,
}

impl Series {
    pub const ALL: [Series; 5] = [Series::Reward, Series::Rate, Series::Energy, Series::Penalty, Series::Fairness];

    pub fn name(self) -> &'static str {
        match self {
            Series::Reward => "reward",
            Series::Rate => "rate",
            Series::Energy => "energy",
            Series::Penalty => "penalty",
            Series::Fairness => "fairness",
        }
    }
}

impl std::str::FromStr for Series {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Series::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| format!("unknown series `{s}` (expected reward, rate, energy, penalty or fairness)"))
    }
}

/// Metrics table of one run, keyed by column name.
#[derive(Debug, Clone)]
pub struct MetricsTable {
    pub run: String,
    pub episodes: Vec<u64>,
    pub columns: BTreeMap<String, Vec<f64>>,
}

impl MetricsTable {
    pub fn read(run_dir: &Path) -> Result<Self, CliError> {
        let run = run_dir.display().to_string();
        let path = run_dir.join(output::METRICS);
        let mut reader = csv::Reader::from_path(&path).map_err(|e| CliError::Run {
            run: run.clone(),
            message: format!("cannot read {}: {e}", path.display()),
        })?;
        let headers: Vec<String> = reader.headers()?.iter().map(String::from).collect();
        let mut columns: BTreeMap<String, Vec<f64>> = headers.iter().map(|h| (h.clone(), Vec::new())).collect();
        for record in reader.records() {
            let record = record?;
            for (h, cell) in headers.iter().zip(record.iter()) {
                let v: f64 = cell.parse().map_err(|_| CliError::Run {
                    run: run.clone(),
                    message: format!("column {h}: `{cell}` is not a number"),
                })?;
                columns.get_mut(h).unwrap().push(v);
            }
        }
        let episodes = columns
            .remove("episode")
            .ok_or_else(|| CliError::Run {
                run: run.clone(),
                message: "metrics have no episode column".into(),
            })?
            .into_iter()
            .map(|e| e as u64)
            .collect();
        Ok(Self { run, episodes, columns })
    }

    fn column(&self, name: &str) -> Result<Vec<f64>, CliError> {
        self.columns.get(name).cloned().ok_or_else(|| CliError::Run {
            run: self.run.clone(),
            message: format!("missing series column `{name}`"),
        })
    }

    /// Values of one plot series per episode. The rate series averages the
    /// per-user columns.
    pub fn series(&self, series: Series) -> Result<Vec<f64>, CliError> {
        match series {
            Series::Reward => self.column("cumulative_reward"),
            Series::Energy => self.column("cumulative_energy"),
            Series::Penalty => self.column("mean_penalty"),
            Series::Fairness => self.column("jain"),
            Series::Rate => {
                let users: Vec<&Vec<f64>> = self
                    .columns
                    .iter()
                    .filter(|(k, _)| k.starts_with("avg_rate_user_"))
                    .map(|(_, v)| v)
                    .collect();
                if users.is_empty() {
                    return Err(CliError::Run {
                        run: self.run.clone(),
                        message: "missing series column `avg_rate_user_*`".into(),
                    });
                }
                Ok((0..self.episodes.len())
                    .map(|i| users.iter().map(|c| c[i]).sum::<f64>() / users.len() as f64)
                    .collect())
            }
        }
    }
}

/// Trailing moving average; the first `window - 1` points average what is
/// available so far.
pub fn moving_average(xs: &[f64], window: usize) -> Vec<f64> {
    let window = window.max(1);
    (0..xs.len())
        .map(|i| {
            let n = (i + 1).min(window);
            xs[i + 1 - n..=i].iter().sum::<f64>() / n as f64
        })
        .collect()
}

fn run_names(runs: &[PathBuf]) -> Vec<String> {
    let short: Vec<String> = runs
        .iter()
        .map(|r| {
            r.file_name()
                .map_or_else(|| r.display().to_string(), |n| n.to_string_lossy().into_owned())
        })
        .collect();
    let unique = short.iter().collect::<std::collections::BTreeSet<_>>().len() == short.len();
    if unique {
        short
    } else {
        runs.iter().map(|r| r.display().to_string()).collect()
    }
}

/// Writes `<out>/<series>.csv` with an episode column and one smoothed
/// column per run, aligned on episode index.
pub fn run_plotdata(runs: &[PathBuf], series: &[Series], window: usize, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    if window == 0 {
        return Err(CliError::Config("--window must be at least 1".into()));
    }
    if runs.is_empty() {
        return Err(CliError::Config("--runs needs at least one run directory".into()));
    }
    let tables = runs.iter().map(|r| MetricsTable::read(r)).collect::<Result<Vec<_>, _>>()?;
    let names = run_names(runs);
    ensure_dir(out)?;
    let mut written = Vec::new();
    for &s in series {
        let mut rows: BTreeMap<u64, Vec<Option<f64>>> = BTreeMap::new();
        for (i, table) in tables.iter().enumerate() {
            let smooth = moving_average(&table.series(s)?, window);
            for (ep, v) in table.episodes.iter().zip(smooth) {
                rows.entry(*ep).or_insert_with(|| vec![None; tables.len()])[i] = Some(v);
            }
        }
        let path = out.join(format!("{}.csv", s.name()));
        let mut w = csv_out(&path)?;
        let mut header = vec!["episode".to_string()];
        header.extend(names.iter().cloned());
        w.write_record(&header)?;
        for (ep, vals) in rows {
            let mut rec = vec![ep.to_string()];
            rec.extend(vals.into_iter().map(|v| v.map_or_else(String::new, output::num)));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| CliError::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub agent: AgentKind,
    pub seeds: usize,
    pub reward: f64,
    pub rate: f64,
    pub energy: f64,
    pub jain: f64,
}

/// Final-window means of one run.
pub fn final_window(table: &MetricsTable, window: usize) -> Result<[f64; 4], CliError> {
    let n = table.episodes.len();
    if n == 0 {
        return Err(CliError::Run {
            run: table.run.clone(),
            message: "no episodes recorded".into(),
        });
    }
    let from = n.saturating_sub(window.max(1));
    let mean = |xs: Vec<f64>| xs[from..].iter().sum::<f64>() / (n - from) as f64;
    Ok([
        mean(table.series(Series::Reward)?),
        mean(table.series(Series::Rate)?),
        mean(table.series(Series::Energy)?),
        mean(table.series(Series::Fairness)?),
    ])
}

pub struct AblateOptions<'a> {
    pub seeds: &'a [u64],
    pub window: usize,
    /// Run every (agent, seed) pair as a separate process of this executable.
    pub parallel: Option<&'a Path>,
    pub quiet: bool,
}

fn run_dir(out: &Path, agent: AgentKind, seed: u64) -> PathBuf {
    out.join(agent.name()).join(format!("seed_{seed}"))
}

/// Trains every agent of the roster on the same seeds and tabulates the
/// final-window means, one row per agent.
pub fn run_ablate(cfg: &RunConfig, out: &Path, opts: &AblateOptions) -> Result<Vec<AblationRow>, CliError> {
    cfg.validate()?;
    if opts.seeds.is_empty() {
        return Err(CliError::Config("ablation needs at least one seed".into()));
    }
    ensure_dir(out)?;
    let base_path = out.join("base_config.json");
    output::write_json(&base_path, cfg)?;

    let jobs: Vec<(AgentKind, u64)> = AgentKind::ALL
        .into_iter()
        .flat_map(|a| opts.seeds.iter().map(move |&s| (a, s)))
        .collect();
    match opts.parallel {
        None => {
            for &(agent, seed) in &jobs {
                let mut run_cfg = cfg.clone();
                run_cfg.rl.agent = agent;
                run_cfg.rl.seed = seed;
                run_train(&run_cfg, &run_dir(out, agent, seed), opts.quiet)?;
            }
        }
        Some(exe) => {
            let children = jobs
                .iter()
                .map(|&(agent, seed)| {
                    let mut cmd = Command::new(exe);
                    cmd.arg("train")
                        .arg("--config")
                        .arg(&base_path)
                        .args(["--agent", agent.name(), "--seed", &seed.to_string()])
                        .arg("--out")
                        .arg(run_dir(out, agent, seed));
                    if opts.quiet {
                        cmd.arg("--quiet");
                    }
                    for (k, _) in std::env::vars() {
                        if k.starts_with(ENV_PREFIX) {
                            cmd.env_remove(k);
                        }
                    }
                    cmd.spawn().map(|c| (agent, seed, c)).map_err(|e| CliError::io(exe, e))
                })
                .collect::<Result<Vec<_>, _>>()?;
            for (agent, seed, mut child) in children {
                let status = child.wait().map_err(|e| CliError::io(exe, e))?;
                if !status.success() {
                    return Err(CliError::Run {
                        run: run_dir(out, agent, seed).display().to_string(),
                        message: format!("training exited with {status}"),
                    });
                }
            }
        }
    }

    let mut per_seed = csv_out(&out.join("ablation_per_seed.csv"))?;
    per_seed.write_record(["agent", "seed", "final_reward", "final_rate", "final_energy", "final_jain"])?;
    let mut rows = Vec::new();
    for agent in AgentKind::ALL {
        let mut acc = [0.0; 4];
        for &seed in opts.seeds {
            let table = MetricsTable::read(&run_dir(out, agent, seed))?;
            let vals = final_window(&table, opts.window)?;
            let mut rec = vec![agent.name().to_string(), seed.to_string()];
            rec.extend(vals.iter().map(|v| output::num(*v)));
            per_seed.write_record(&rec)?;
            for k in 0..4 {
                acc[k] += vals[k] / opts.seeds.len() as f64;
            }
        }
        rows.push(AblationRow {
            agent,
            seeds: opts.seeds.len(),
            reward: acc[0],
            rate: acc[1],
            energy: acc[2],
            jain: acc[3],
        });
    }
    per_seed.flush().map_err(|e| CliError::io(out, e))?;

    let mut table = csv_out(&out.join("ablation.csv"))?;
    table.write_record(["agent", "seeds", "final_reward", "final_rate", "final_energy", "final_jain"])?;
    for r in &rows {
        table.write_record([
            r.agent.name().to_string(),
            r.seeds.to_string(),
            output::num(r.reward),
            output::num(r.rate),
            output::num(r.energy),
            output::num(r.jain),
        ])?;
    }
    table.flush().map_err(|e| CliError::io(out, e))?;
    Ok(rows)
}
