mod serve;

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use harvest_core::harness::{
    compute_report, replay_log, run_curriculum, run_episode, BaselineMode, CurriculumOptions, HubOptions, NullObserver,
};
use harvest_core::{RunConfig, ScenarioId};
use tracing_subscriber::EnvFilter;

#[derive(Parser)]
#[command(name = "sim", version, about = "Commons Harvest simulator and resilience tools")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the episodes of one scenario.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// E1..E9, or E0/baseline for undisrupted episodes.
        #[arg(long)]
        scenario: ScenarioId,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Number of episodes; defaults to the config's episodes_per_scenario.
        #[arg(long)]
        episodes: Option<u32>,
        #[arg(long)]
        force: bool,
    },
    /// Run baseline episodes and then every configured scenario in order.
    Curriculum {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, conflicts_with = "resume")]
        force: bool,
        /// Continue an interrupted run from its manifest.
        #[arg(long)]
        resume: bool,
    },
    /// Score run directories and write heatmaps and summaries.
    Report {
        #[arg(long, num_args = 1.., required = true)]
        runs: Vec<PathBuf>,
        #[arg(long, default_value = "shared")]
        baseline: BaselineMode,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        force: bool,
    },
    /// Host live sessions over WebSocket.
    Serve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Directory for session logs.
        #[arg(long, default_value = "sessions")]
        out: PathBuf,
        #[arg(long)]
        force: bool,
    },
    /// Re-simulate a log and verify every recorded event.
    Replay {
        #[arg(long)]
        log: PathBuf,
        /// Print the world snapshot after every tick as JSON lines.
        #[arg(long)]
        states: bool,
    },
}

fn load_config(path: &Path, seed: Option<u64>) -> Result<RunConfig> {
    let mut cfg = RunConfig::from_file(path).with_context(|| format!("loading {}", path.display()))?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    for w in cfg.validate()? {
        tracing::warn!("{w}");
    }
    Ok(cfg)
}

fn run(
    config: &Path,
    scenario: ScenarioId,
    seed: Option<u64>,
    out: &Path,
    episodes: Option<u32>,
    force: bool,
) -> Result<()> {
    let cfg = load_config(config, seed)?;
    let spec = cfg.scenario_spec(scenario)?;
    let stage = if scenario.is_baseline() {
        "baseline".to_string()
    } else {
        scenario.to_string()
    };
    let dir = out.join(&stage);
    if dir.exists() && std::fs::read_dir(&dir)?.next().is_some() {
        if !force {
            bail!("{} already exists; pass --force to overwrite", dir.display());
        }
        std::fs::remove_dir_all(&dir)?;
    }
    std::fs::create_dir_all(&dir)?;
    let client = (!cfg.llm_slots().is_empty()).then(|| cfg.llm_client());
    let mut llm_agents = match &client {
        Some(c) => cfg.build_llm_agents(c, Some(&out.join("memory")))?,
        None => Vec::new(),
    };
    let n = episodes.unwrap_or(if scenario.is_baseline() {
        cfg.baseline_episodes
    } else {
        cfg.episodes_per_scenario
    });
    for index in 0..n {
        let path = dir.join(format!("episode_{index:03}.jsonl"));
        let setup = cfg.episode_setup(&spec, index, Some(path.clone()))?;
        let mut policies = cfg.policies(setup.seed, &mut llm_agents, |_| None)?;
        let outcome = run_episode(&setup, &mut policies, &mut NullObserver)?;
        let scores: Vec<String> = outcome.summary.scores.iter().map(u32::to_string).collect();
        println!(
            "{} {} ticks, valid={}, scores [{}]",
            path.display(),
            outcome.summary.ticks_completed,
            outcome.summary.valid,
            scores.join(", ")
        );
    }
    Ok(())
}

fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("warn")))
        .with_writer(std::io::stderr)
        .init();
    match Cli::parse().command {
        Command::Run {
            config,
            scenario,
            seed,
            out,
            episodes,
            force,
        } => run(&config, scenario, seed, &out, episodes, force),
        Command::Curriculum {
            config,
            out,
            seed,
            force,
            resume,
        } => {
            let cfg = load_config(&config, seed)?;
            let opts = CurriculumOptions {
                force,
                resume,
                client: None,
            };
            let outcome = run_curriculum(&cfg, &out, &opts)?;
            println!(
                "{}: ran [{}], skipped [{}], {} reflections, {} network calls",
                outcome.out_dir.display(),
                outcome.stages_run.join(", "),
                outcome.stages_skipped.join(", "),
                outcome.reflections.len(),
                outcome.network_calls
            );
            Ok(())
        }
        Command::Report {
            runs,
            baseline,
            out,
            force,
        } => {
            let report = compute_report(&runs, baseline, &out, force)?;
            for w in &report.evaluation.warnings {
                eprintln!("warning: {w}");
            }
            for (group, result) in &report.evaluation.groups {
                let cells: Vec<String> = result
                    .scenarios
                    .iter()
                    .map(|(id, b)| format!("{id}={:.3}", b.rho))
                    .collect();
                println!("{group}: {}", cells.join(" "));
            }
            println!("wrote {} files to {}", report.files.len(), out.display());
            Ok(())
        }
        Command::Serve {
            config,
            port,
            host,
            out,
            force,
        } => {
            let cfg = load_config(&config, None)?;
            std::fs::create_dir_all(&out)?;
            let opts = HubOptions {
                out_dir: Some(out),
                force,
                client: None,
            };
            serve::serve(cfg, opts, &host, port)
        }
        Command::Replay { log, states } => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            let mut write_err = None;
            let outcome = replay_log(&log, &mut |w| {
                if states && write_err.is_none() {
                    let line = serde_json::to_string(&w.snapshot()).expect("snapshot serializes");
                    if let Err(e) = writeln!(lock, "{line}") {
                        write_err = Some(e);
                    }
                }
            })?;
            if let Some(e) = write_err {
                return Err(e.into());
            }
            eprintln!(
                "{}: replayed {} ticks of {}, final state matches, valid={}",
                log.display(),
                outcome.ticks,
                outcome.header.episode_id,
                outcome.valid
            );
            Ok(())
        }
    }
}
