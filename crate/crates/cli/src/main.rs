//! Command-line front end: collect expert data, train offline, deploy with or
//! without daily fine-tuning, and run the three-controller comparison.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use raceway::io;
use raceway::pipeline::{self, compute_metrics, EpisodeTrace, MetricsRow};
use raceway::{Agent, Error, Result, RunConfig, SeedPlan};

#[derive(Parser)]
#[command(
    name = "raceway",
    version,
    about = "pH control of a raceway photobioreactor with an offline-trained DDPG agent"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured global seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the PI expert on the training season and write the dataset.
    Collect {
        #[command(flatten)]
        common: Common,
        /// Days to simulate (default: experiment.train_days).
        #[arg(long)]
        days: Option<u32>,
    },
    /// Train an agent offline on a collected dataset.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: PathBuf,
        /// Epochs to run (default: agent.offline_epochs).
        #[arg(long)]
        epochs: Option<usize>,
        /// Continue from this checkpoint with policy-gradient epochs.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Run a trained agent on the test season.
    Deploy {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Initial contents of the rolling buffer; required with --fine-tune.
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Days to simulate (default: experiment.test_days).
        #[arg(long)]
        days: Option<u32>,
        /// Retrain on the rolling buffer at the end of every day.
        #[arg(long)]
        fine_tune: bool,
    },
    /// Collect, train, and compare PID, RL and RL-FT on identical test days.
    Compare {
        #[command(flatten)]
        common: Common,
    },
    /// Print the effective configuration as TOML.
    ShowConfig {
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

struct Setup {
    config: RunConfig,
    seeds: SeedPlan,
    out: PathBuf,
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

fn setup(common: &Common) -> Result<Setup> {
    let mut config = load_config(common.config.as_deref())?;
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(out) = &common.out {
        config.out_dir = out.clone();
    }
    fs::create_dir_all(&config.out_dir)?;
    Ok(Setup { seeds: SeedPlan::from_global(config.seed), out: config.out_dir.clone(), config })
}

fn save_trace(path: &Path, trace: &EpisodeTrace) -> Result<()> {
    io::save(path, |w| io::write_trace(w, trace))
}

fn summary(row: &MetricsRow) -> String {
    format!("{:<6} iae={:.3} cce={:.3}", row.controller.to_string(), row.iae, row.cce)
}

fn collect(common: &Common, days: Option<u32>) -> Result<()> {
    let s = setup(common)?;
    let scenario = s.config.scenario();
    let days = days.unwrap_or(scenario.train_days);
    let inputs = scenario.build_days(&scenario.train_season, days, s.seeds.weather_train);
    let (dataset, trace) = pipeline::collect_pid_dataset(&scenario, &inputs, s.seeds.plant)?;
    io::save(&s.out.join("dataset.csv"), |w| io::write_dataset(w, &dataset))?;
    save_trace(&s.out.join("trace_pid.csv"), &trace)?;
    println!("collected {} transitions over {days} day(s); {}", dataset.len(), summary(&compute_metrics(&trace)));
    Ok(())
}

fn train(common: &Common, dataset: &Path, epochs: Option<usize>, resume: Option<&Path>) -> Result<()> {
    let s = setup(common)?;
    let data = io::read_dataset(io::open(dataset)?)?;
    let (agent, history) = match resume {
        Some(ckpt) => {
            let mut agent = Agent::from_text(&fs::read_to_string(ckpt)?)?;
            let epochs = epochs.unwrap_or(agent.config.offline_epochs);
            let history = pipeline::train_more(&mut agent, &data, epochs, s.seeds.replay)?;
            (agent, history)
        }
        None => {
            let mut agent_cfg = s.config.agent.clone();
            if let Some(e) = epochs {
                agent_cfg.offline_epochs = e;
            }
            pipeline::offline_train(&data, &agent_cfg, &s.config.observation, s.seeds.agent_init, s.seeds.replay)?
        }
    };
    fs::write(s.out.join("agent.ckpt"), agent.to_text())?;
    io::save(&s.out.join("loss.csv"), |w| io::write_loss_curve(w, &history))?;
    match history.last() {
        Some(last) => println!(
            "trained {} epoch(s) on {} transitions; final critic_loss={:.6} actor_metric={:.6}",
            history.len(),
            data.len(),
            last.critic_loss,
            last.actor_metric
        ),
        None => println!("trained 0 epochs; checkpoint holds the initial agent"),
    }
    Ok(())
}

fn deploy(
    common: &Common,
    checkpoint: &Path,
    dataset: Option<&Path>,
    days: Option<u32>,
    fine_tune: bool,
) -> Result<()> {
    let s = setup(common)?;
    let agent = Agent::from_text(&fs::read_to_string(checkpoint)?)?;
    let data = match dataset {
        Some(p) => io::read_dataset(io::open(p)?)?,
        None if fine_tune => {
            return Err(Error::InvalidParameter("--fine-tune needs --dataset to seed the rolling buffer".into()))
        }
        None => Vec::new(),
    };
    let scenario = s.config.scenario();
    let days = days.unwrap_or(scenario.test_days);
    let inputs = scenario.build_days(&scenario.test_season, days, s.seeds.weather_test);
    let run = pipeline::deploy(&agent, &scenario, &inputs, &data, fine_tune, s.seeds.plant, s.seeds.replay)?;
    let name = if fine_tune { "rl-ft" } else { "rl" };
    save_trace(&s.out.join(format!("trace_{name}.csv")), &run.trace)?;
    fs::write(s.out.join(format!("agent_{name}.ckpt")), run.agent.to_text())?;
    println!("{}", summary(&compute_metrics(&run.trace)));
    Ok(())
}

fn compare(common: &Common) -> Result<()> {
    let s = setup(common)?;
    let c = pipeline::compare_experiment(&s.config.scenario(), &s.config.agent, s.config.seed)?;
    io::save(&s.out.join("metrics.csv"), |w| io::write_metrics(w, &c.rows))?;
    for trace in &c.traces {
        save_trace(&s.out.join(format!("trace_{}.csv", trace.controller.to_string().to_lowercase())), trace)?;
    }
    io::save(&s.out.join("loss.csv"), |w| io::write_loss_curve(w, &c.offline_history))?;
    println!("seed {}: {} training transitions", c.seed, c.dataset_len);
    for row in &c.rows {
        println!("{}", summary(row));
    }
    println!("ordering {}", if c.ordering_holds() { "holds" } else { "does not hold" });
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Collect { common, days } => collect(&common, days),
        Command::Train { common, dataset, epochs, resume } => train(&common, &dataset, epochs, resume.as_deref()),
        Command::Deploy { common, checkpoint, dataset, days, fine_tune } => {
            deploy(&common, &checkpoint, dataset.as_deref(), days, fine_tune)
        }
        Command::Compare { common } => compare(&common),
        Command::ShowConfig { config } => {
            print!("{}", load_config(config.as_deref())?.to_toml());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.class());
            ExitCode::FAILURE
        }
    }
}
