use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use pvctl::ppo::PolicyMode;

#[derive(Debug, Parser)]
#[command(name = "pvctl", version, about = "Train and evaluate reinforcement-learning PV inverter controllers")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a policy and write checkpoint.json, metrics.csv and config.json.
    Train(TrainArgs),
    /// Run a checkpoint deterministically and write a summary plus traces.
    Eval(EvalArgs),
    /// Run a checkpoint and the MPPT baseline on the same scenarios.
    Compare(EvalArgs),
    /// Write a random radial feeder as a grid file.
    GenFeeder(GenFeederArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Grid file (JSON).
    #[arg(long)]
    pub grid: Option<PathBuf>,
    /// Start from a saved run config; other flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Weight of the solar reward term. [default: 0.1]
    #[arg(long)]
    pub mu: Option<f64>,
    /// Half-width of the voltage band, p.u. [default: 0.05]
    #[arg(long)]
    pub delta: Option<f64>,
    /// PPO iterations. [default: 50]
    #[arg(long)]
    pub iters: Option<usize>,
    /// Environment steps per update, rounded up to whole episodes. [default: 2048]
    #[arg(long)]
    pub steps_per_update: Option<usize>,
    /// [default: decentralized]
    #[arg(long, value_parser = ["decentralized", "centralized"])]
    pub mode: Option<String>,
    /// Rollout threads; results do not depend on it. [default: 1]
    #[arg(long)]
    pub workers: Option<usize>,
}

impl TrainArgs {
    pub fn mode(&self) -> Option<PolicyMode> {
        self.mode.as_deref().map(|m| m.parse().expect("clap restricts the values"))
    }
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub grid: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// A count of sampled scenarios, `peak` (every panel at full output) or
    /// `no-pv`.
    #[arg(long, default_value = "20")]
    pub scenarios: ScenarioSpec,
    /// First scenario seed; scenario i uses seed + i.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Override the checkpoint's solar weight.
    #[arg(long)]
    pub mu: Option<f64>,
    /// Override the checkpoint's voltage band.
    #[arg(long)]
    pub delta: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScenarioSpec {
    Sampled(usize),
    Peak,
    NoPv,
}

impl FromStr for ScenarioSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "peak" => Ok(ScenarioSpec::Peak),
            "no-pv" => Ok(ScenarioSpec::NoPv),
            _ => match s.parse::<usize>() {
                Ok(0) => Err("need at least one scenario".into()),
                Ok(n) => Ok(ScenarioSpec::Sampled(n)),
                Err(_) => Err(format!("expected a count, `peak` or `no-pv`, got `{s}`")),
            },
        }
    }
}

#[derive(Debug, Args)]
pub struct GenFeederArgs {
    /// Buses including the substation.
    #[arg(long)]
    pub buses: usize,
    /// Buses with an inverter.
    #[arg(long)]
    pub controllable: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output grid file.
    #[arg(long)]
    pub out: PathBuf,
}
