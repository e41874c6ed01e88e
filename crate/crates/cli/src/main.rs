use std::path::PathBuf;
use std::process::ExitCode;

use airs_cli::commands::{self, AblateOptions, Series};
use airs_cli::config::{self, Preset};
use airs_cli::{CliError, CODE_HASH};
use airs_core::config::RunConfig;
use airs_core::rl::AgentKind;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "airs", version, about = "Train and evaluate UAV-carried IRS agents")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args)]
struct ConfigArgs {
    /// JSON document with scenario/channel/uav/env/nn/rl sections.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Base values for anything the config file leaves out.
    #[arg(long, default_value = "default")]
    preset: Preset,
    /// Dotted-path override, e.g. `rl.ppo.clip_epsilon=0.2`. Repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    agent: Option<AgentKind>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train one agent.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        quiet: bool,
    },
    /// Roll out a checkpoint or a baseline with the greedy policy.
    Eval {
        /// Checkpoint directory; its run manifest supplies the config
        /// unless --config is given.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, default_value_t = 1)]
        episodes: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Emit smoothed per-episode series of several runs as CSV.
    Plotdata {
        #[arg(long, num_args = 1.., required = true)]
        runs: Vec<PathBuf>,
        #[arg(long, num_args = 1.., default_values = ["reward"])]
        series: Vec<Series>,
        #[arg(long, default_value_t = 20)]
        window: usize,
        #[arg(long, default_value = "plotdata")]
        out: PathBuf,
    },
    /// Train the whole agent roster on shared seeds and compare.
    Ablate {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        episodes: Option<usize>,
        /// Seeds shared by every agent; defaults to the config seed.
        #[arg(long, num_args = 1.., value_delimiter = ',')]
        seeds: Vec<u64>,
        /// Episodes at the end of each run that enter the table.
        #[arg(long, default_value_t = 50)]
        window: usize,
        /// Run agents as independent processes.
        #[arg(long)]
        parallel: bool,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        quiet: bool,
    },
}

fn resolve(args: &ConfigArgs, base: Option<RunConfig>, episodes: Option<usize>) -> Result<RunConfig, CliError> {
    let env = config::env_overrides(std::env::vars());
    let base = base.unwrap_or_else(|| args.preset.config());
    let mut cfg = config::resolve(base, args.config.as_deref(), &env, &args.overrides)?;
    if let Some(seed) = args.seed {
        cfg.rl.seed = seed;
    }
    if let Some(agent) = args.agent {
        cfg.rl.agent = agent;
    }
    if let Some(n) = episodes {
        cfg.rl.ppo.episodes = n;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Cmd::Train { cfg, episodes, out, quiet } => {
            let cfg = resolve(&cfg, None, episodes)?;
            let report = commands::run_train(&cfg, &out, quiet)?;
            let tail = &report.episodes[report.episodes.len().saturating_sub(50)..];
            let mean = tail.iter().map(|l| l.summary.cumulative_reward).sum::<f64>() / tail.len().max(1) as f64;
            println!(
                "{}: {} episodes, {} updates, final-50 mean reward {:.6e}",
                cfg.rl.agent,
                report.episodes.len(),
                report.updates,
                mean
            );
            if let Some(c) = report.final_checkpoint {
                println!("checkpoint: {}", c.display());
            }
        }
        Cmd::Eval { checkpoint, cfg, episodes, out } => {
            let base = match (&checkpoint, &cfg.config) {
                (Some(dir), None) => commands::run_manifest_for_checkpoint(dir).map(|m| m.config),
                _ => None,
            };
            let run_cfg = resolve(&cfg, base, None)?;
            let logs = commands::run_eval(&run_cfg, checkpoint.as_deref(), episodes, &out)?;
            println!("episode,cumulative_reward,cumulative_energy,sum_F_t,jain");
            for l in &logs {
                let s = &l.summary;
                println!("{},{},{},{},{}", l.episode, s.cumulative_reward, s.cumulative_energy, s.sum_objective, s.jain);
            }
        }
        Cmd::Plotdata { runs, series, window, out } => {
            for path in commands::run_plotdata(&runs, &series, window, &out)? {
                println!("{}", path.display());
            }
        }
        Cmd::Ablate { cfg, episodes, seeds, window, parallel, out, quiet } => {
            let run_cfg = resolve(&cfg, None, episodes)?;
            let seeds = if seeds.is_empty() { vec![run_cfg.rl.seed] } else { seeds };
            let exe = std::env::current_exe().map_err(|e| CliError::io(&out, e))?;
            let opts = AblateOptions {
                seeds: &seeds,
                window,
                parallel: parallel.then_some(exe.as_path()),
                quiet,
            };
            let rows = commands::run_ablate(&run_cfg, &out, &opts)?;
            println!("{:<14} {:>14} {:>14} {:>12} {:>8}", "agent", "reward", "rate", "energy", "jain");
            for r in rows {
                println!(
                    "{:<14} {:>14.6e} {:>14.6e} {:>12.1} {:>8.4}",
                    r.agent.name(),
                    r.reward,
                    r.rate,
                    r.energy,
                    r.jain
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("airs {}: error: {e}", &CODE_HASH[..12]);
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
