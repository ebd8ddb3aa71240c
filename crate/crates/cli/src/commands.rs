use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, Context};
use serde::{Deserialize, Serialize};

use pvctl::env::{write_trace, EnvConfig};
use pvctl::grid::{load_network, GridError, NetworkModel, Scenario, SyntheticFeederConfig};
use pvctl::ppo::{
    evaluate, evaluate_mppt, evaluation_scenarios, write_metrics, Checkpoint, EvalSummary, PpoError, TrainConfig,
    Trainer,
};

use crate::args::{EvalArgs, GenFeederArgs, ScenarioSpec, TrainArgs};
use crate::report;
use crate::CliError;

type Result<T> = std::result::Result<T, CliError>;

fn usage(e: impl Into<anyhow::Error>) -> CliError {
    CliError::Usage(e.into())
}

fn runtime(e: impl Into<anyhow::Error>) -> CliError {
    CliError::Runtime(e.into())
}

fn classify(e: PpoError) -> CliError {
    match e {
        PpoError::Config(_) | PpoError::Checkpoint(_) => usage(e),
        PpoError::Io { .. } => usage(e),
        _ => runtime(e),
    }
}

/// Resolved settings of a training run, saved as `config.json` in the run directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub grid: PathBuf,
    pub out: PathBuf,
    pub train: TrainConfig,
}

fn load_grid(path: &Path) -> Result<NetworkModel> {
    load_network(path).map_err(usage)
}

fn resolve(args: &TrainArgs) -> Result<RunConfig> {
    let base: Option<RunConfig> = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("cannot read config {}", path.display()))
                .map_err(usage)?;
            Some(
                serde_json::from_str(&text)
                    .with_context(|| format!("invalid config {}", path.display()))
                    .map_err(usage)?,
            )
        }
        None => None,
    };
    let grid = args
        .grid
        .clone()
        .or_else(|| base.as_ref().map(|b| b.grid.clone()))
        .ok_or_else(|| usage(anyhow!("--grid is required")))?;
    let out = args
        .out
        .clone()
        .or_else(|| base.as_ref().map(|b| b.out.clone()))
        .ok_or_else(|| usage(anyhow!("--out is required")))?;
    let mut train = base.map(|b| b.train).unwrap_or_default();
    if let Some(s) = args.seed {
        train.seed = s;
    }
    if let Some(mu) = args.mu {
        train.env.reward.mu = mu;
    }
    if let Some(delta) = args.delta {
        train.env.reward.delta = delta;
    }
    if let Some(n) = args.iters {
        train.iterations = n;
    }
    if let Some(n) = args.steps_per_update {
        train.ppo.steps_per_update = n;
    }
    if let Some(mode) = args.mode() {
        train.ppo.mode = mode;
    }
    if let Some(w) = args.workers {
        train.workers = w;
    }
    Ok(RunConfig { grid, out, train })
}

pub fn train(args: &TrainArgs) -> Result<()> {
    let run = resolve(args)?;
    let model = load_grid(&run.grid)?;
    run.train.validate(model.num_agents()).map_err(classify)?;

    fs::create_dir_all(&run.out)
        .with_context(|| format!("cannot create {}", run.out.display()))
        .map_err(runtime)?;
    report::write_json(&run.out.join("config.json"), &run).map_err(runtime)?;

    let start = Instant::now();
    let mut trainer = Trainer::new(&model, run.train.clone()).map_err(classify)?;
    let metrics = trainer
        .run(run.train.iterations, |m| {
            eprintln!(
                "iter {:>4}  reward {:>9.4}  max|1-V| {:.4}  kl {:.5}  {:.1}s",
                m.iteration,
                m.mean_episode_reward,
                m.max_voltage_deviation,
                m.mean_kl,
                start.elapsed().as_secs_f64()
            );
        })
        .map_err(classify)?;

    let mut csv = report::create(&run.out.join("metrics.csv")).map_err(runtime)?;
    write_metrics(&metrics, &mut csv).map_err(runtime)?;
    drop(csv);
    let ckpt = trainer.checkpoint();
    ckpt.save(&run.out.join("checkpoint.json")).map_err(runtime)?;

    let counts = ckpt.parameter_counts;
    println!(
        "trained {} iterations ({} env steps); actor parameters {}, critic parameters {}, constraint violations {}",
        trainer.iterations_done(),
        trainer.env_steps(),
        counts.actors,
        counts.critic,
        trainer.constraint_violations()
    );
    println!("wrote {}", run.out.display());
    Ok(())
}

struct EvalSetup {
    model: NetworkModel,
    checkpoint: Checkpoint,
    env: EnvConfig,
    scenarios: Vec<Scenario>,
}

fn eval_setup(args: &EvalArgs) -> Result<EvalSetup> {
    let model = load_grid(&args.grid)?;
    let checkpoint = Checkpoint::load(&args.checkpoint).map_err(classify)?;
    checkpoint.check_model(&model).map_err(classify)?;
    let mut env = checkpoint.config.env.clone();
    if let Some(mu) = args.mu {
        env.reward.mu = mu;
    }
    if let Some(delta) = args.delta {
        env.reward.delta = delta;
    }
    env.validate(model.num_agents()).map_err(|e| usage(anyhow!(e)))?;
    let scenarios = match args.scenarios {
        ScenarioSpec::Sampled(n) => evaluation_scenarios(&model, &env.sampler, args.seed, n),
        ScenarioSpec::Peak => vec![Scenario::peak_pv(&model)],
        ScenarioSpec::NoPv => vec![Scenario::no_pv(&model)],
    };
    Ok(EvalSetup {
        model,
        checkpoint,
        env,
        scenarios,
    })
}

fn print_summary(label: &str, s: &EvalSummary) {
    println!(
        "{label:<5} episodes {}  mean reward {:.4}  max|1-V| {:.4}  max V {:.4}  mean P/p_env {:.4}  median P/p_env {:.4}",
        s.episodes, s.mean_episode_reward, s.max_deviation, s.max_voltage, s.mean_power_ratio, s.median_power_ratio
    );
}

pub fn eval(args: &EvalArgs) -> Result<()> {
    let setup = eval_setup(args)?;
    let policy = setup.checkpoint.policy().map_err(classify)?;
    let (summary, stats) = evaluate(&setup.model, &setup.env, &policy, &setup.scenarios, true).map_err(classify)?;

    report::write_json(&args.out.join("summary.json"), &summary).map_err(runtime)?;
    for (i, st) in stats.iter().enumerate() {
        let mut w = report::create(&args.out.join("traces").join(format!("episode_{i:04}.csv"))).map_err(runtime)?;
        write_trace(&st.trace, &mut w).map_err(runtime)?;
    }
    print_summary("rl", &summary);
    Ok(())
}

#[derive(Serialize)]
struct Comparison<'a> {
    rl: &'a EvalSummary,
    mppt: &'a EvalSummary,
}

pub fn compare(args: &EvalArgs) -> Result<()> {
    let setup = eval_setup(args)?;
    let policy = setup.checkpoint.policy().map_err(classify)?;
    let (rl, rl_stats) = evaluate(&setup.model, &setup.env, &policy, &setup.scenarios, false).map_err(classify)?;
    let (mppt, mppt_stats) = evaluate_mppt(&setup.model, &setup.env, &setup.scenarios, false).map_err(classify)?;

    let out = &args.out;
    report::write_json(&out.join("summary.json"), &Comparison { rl: &rl, mppt: &mppt }).map_err(runtime)?;
    report::write_voltage_profile(&out.join("voltage_profile.csv"), &setup.model, &rl_stats, &mppt_stats)
        .map_err(runtime)?;
    report::write_power_ratios(&out.join("power_ratio.csv"), &setup.model, &rl_stats, &mppt_stats)
        .map_err(runtime)?;
    report::write_histogram(&out.join("ratio_histogram.csv"), &rl_stats, &mppt_stats).map_err(runtime)?;
    print_summary("rl", &rl);
    print_summary("mppt", &mppt);
    Ok(())
}

pub fn gen_feeder(args: &GenFeederArgs) -> Result<()> {
    let doc = SyntheticFeederConfig::new(args.buses, args.controllable)
        .generate_file(args.seed)
        .map_err(|e| match e {
            GridError::InvalidSize(_) => usage(e),
            other => runtime(other),
        })?;
    report::write_text(&args.out, &doc.to_json()).map_err(runtime)?;
    println!(
        "wrote {} ({} buses, {} inverters)",
        args.out.display(),
        args.buses,
        args.controllable
    );
    Ok(())
}
