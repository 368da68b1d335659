use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use sigctl::harness::{self, ExperimentConfig};
use sigctl::reward::RewardMode;

#[derive(Parser)]
#[command(name = "sigctl", version, about = "Traffic-signal control experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a scenario bundle (network, flows, config) under <out>/scenario.
    Generate(Common),
    /// Train a shared policy on randomized scenarios.
    Train(Common),
    /// Evaluate a trained checkpoint over the configured seeds.
    Eval(Common),
    /// Evaluate a heuristic controller (random | fixed-time | max-pressure).
    Baseline(Common),
    /// Print encoder and head parameter counts.
    EncoderInfo(Common),
}

#[derive(Args)]
struct Common {
    /// TOML experiment config; defaults apply to omitted keys.
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// dqn | a2c | random | fixed-time | max-pressure
    #[arg(long)]
    head: Option<String>,
    /// pressure | log-distance
    #[arg(long)]
    reward_mode: Option<RewardMode>,
    /// Comma-separated features to disable: pe,gamma,jaccard,prior
    #[arg(long)]
    ablate: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Training decision steps.
    #[arg(long)]
    steps: Option<usize>,
    /// Evaluation seeds, comma-separated.
    #[arg(long, value_delimiter = ',')]
    eval_seeds: Option<Vec<u64>>,
}

impl Common {
    fn resolve(&self) -> anyhow::Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
            None => ExperimentConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(h) = &self.head {
            cfg.head = h.clone();
        }
        if let Some(m) = self.reward_mode {
            cfg.reward_mode = m;
        }
        if let Some(a) = &self.ablate {
            cfg.ablate = a.split(',').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect();
        }
        if let Some(o) = &self.out {
            cfg.out = o.clone();
        }
        if let Some(c) = &self.checkpoint {
            cfg.checkpoint = Some(c.clone());
        }
        if let Some(n) = self.steps {
            cfg.decision_steps = n;
        }
        if let Some(s) = &self.eval_seeds {
            cfg.eval_seeds = s.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Generate(c) => {
            let dir = harness::cmd_generate(&c.resolve()?)?;
            println!("scenario written to {}", dir.display());
        }
        Command::Train(c) => {
            let cfg = c.resolve()?;
            let report = harness::cmd_train(&cfg)?;
            let last = report.log.last().map_or(f64::NAN, |r| r.mean_reward);
            println!(
                "trained {} decision steps over {} episodes; last reward {last:.4}; checkpoint {}",
                report.log.len(),
                report.episodes,
                report.checkpoint.display()
            );
        }
        Command::Eval(c) => print!("{}", harness::cmd_eval(&c.resolve()?)?.table()),
        Command::Baseline(c) => print!("{}", harness::cmd_baseline(&c.resolve()?)?.table()),
        Command::EncoderInfo(c) => print!("{}", harness::cmd_encoder_info(&c.resolve()?)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
