//! Experiment configuration, command implementations, metrics and CSV export.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::policy::baseline;
use crate::agents::{
    evaluate_with, train, Agent, AgentConfig, AgentError, Env, EnvConfig, EvalRow, GreedyPolicy, HeadKind, Policy,
    TrainConfig, TrainLogRow,
};
use crate::domainrand::{DomainConfig, DomainError, Scenario};
use crate::encoder::Encoder;
use crate::encoding::{EncodingConfig, FeatureFlags};
use crate::reward::{RewardConfig, RewardMode};
use crate::sim::TrajectoryRow;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("cannot parse config: {0}")]
    Toml(#[from] toml::de::Error),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io { path: path.to_path_buf(), source }
}

fn write_file(path: &Path, contents: &str) -> Result<(), HarnessError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    std::fs::write(path, contents).map_err(io_err(path))
}

/// Everything a command needs; written next to its outputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// `dqn`, `a2c`, or a baseline: `random`, `fixed-time`, `max-pressure`.
    pub head: String,
    pub reward_mode: RewardMode,
    /// Disabled features among `pe`, `gamma`, `jaccard`, `prior`.
    pub ablate: Vec<String>,
    pub ds: f64,
    pub episode_s: f64,
    pub out: PathBuf,
    /// Scenario bundle directory; generated from `domain` when absent.
    pub scenario: Option<PathBuf>,
    pub decision_steps: usize,
    pub checkpoint_every: usize,
    /// Checkpoint evaluated by `eval`; defaults to `<out>/checkpoint.bin`.
    pub checkpoint: Option<PathBuf>,
    pub eval_seeds: Vec<u64>,
    pub record_trajectories: bool,
    pub ma_window: usize,
    pub domain: DomainConfig,
    pub agent: AgentConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            head: "dqn".into(),
            reward_mode: RewardMode::LogDistance,
            ablate: Vec::new(),
            ds: crate::encoding::DEFAULT_DS,
            episode_s: 3600.0,
            out: PathBuf::from("runs/default"),
            scenario: None,
            decision_steps: 3000,
            checkpoint_every: 0,
            checkpoint: None,
            eval_seeds: vec![0, 1, 2, 3, 4],
            record_trajectories: false,
            ma_window: 100,
            domain: DomainConfig::default(),
            agent: AgentConfig::default(),
        }
    }
}

/// What drives the signals.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Controller {
    Learned(HeadKind),
    Baseline(String),
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        self.controller()?;
        self.flags()?;
        if self.ma_window == 0 {
            return Err(HarnessError::Config("ma_window must be at least 1".into()));
        }
        self.domain.validate(self.ds)?;
        Ok(())
    }

    pub fn controller(&self) -> Result<Controller, HarnessError> {
        match self.head.as_str() {
            "dqn" => Ok(Controller::Learned(HeadKind::Dqn)),
            "a2c" => Ok(Controller::Learned(HeadKind::A2c)),
            other => {
                baseline(other).map_err(|e| HarnessError::Config(e.to_string()))?;
                Ok(Controller::Baseline(other.to_string()))
            }
        }
    }

    pub fn flags(&self) -> Result<FeatureFlags, HarnessError> {
        FeatureFlags::with_ablations(&self.ablate.join(",")).map_err(HarnessError::Config)
    }

    pub fn encoding(&self) -> Result<EncodingConfig, HarnessError> {
        Ok(EncodingConfig { ds: self.ds, flags: self.flags()?, ..EncodingConfig::default() })
    }

    pub fn env_config(&self) -> Result<EnvConfig, HarnessError> {
        Ok(EnvConfig {
            episode_s: self.episode_s,
            reward: RewardConfig { mode: self.reward_mode, ..RewardConfig::default() },
            encoding: self.encoding()?,
            ..EnvConfig::default()
        })
    }

    pub fn train_config(&self) -> Result<TrainConfig, HarnessError> {
        let Controller::Learned(head) = self.controller()? else {
            return Err(HarnessError::Config(format!("'{}' is not a trainable head", self.head)));
        };
        Ok(TrainConfig {
            decision_steps: self.decision_steps,
            seed: self.seed,
            domain: self.domain.clone(),
            env: self.env_config()?,
            agent: AgentConfig { head, ..self.agent },
            checkpoint_every: self.checkpoint_every,
        })
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.checkpoint.clone().unwrap_or_else(|| self.out.join("checkpoint.bin"))
    }

    /// Scenario evaluated under `seed`.
    pub fn scenario_for(&self, seed: u64) -> Result<Scenario, HarnessError> {
        Ok(match &self.scenario {
            Some(dir) => Scenario::load(dir)?,
            None => Scenario::generate(&self.domain.clone().with_seed(seed))?,
        })
    }

    fn write_record(&self) -> Result<(), HarnessError> {
        write_file(&self.out.join("config.toml"), &self.to_toml())
    }
}

/// Formats with six significant digits, shortest round-trip form.
pub fn fmt6(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x.is_nan() { "nan".into() } else if x == 0.0 { "0".into() } else { format!("{x}") };
    }
    let r: f64 = format!("{x:.5e}").parse().expect("formatted float parses");
    format!("{r}")
}

/// Trailing mean; the first `window - 1` points average what is available.
pub fn moving_average(series: &[f64], window: usize) -> Result<Vec<f64>, HarnessError> {
    if window == 0 {
        return Err(HarnessError::Config("moving-average window must be at least 1".into()));
    }
    let mut out = Vec::with_capacity(series.len());
    let mut sum = 0.0;
    for i in 0..series.len() {
        sum += series[i];
        if i >= window {
            sum -= series[i - window];
        }
        out.push(sum / (i + 1).min(window) as f64);
    }
    Ok(out)
}

/// Mean and sample standard deviation (0 for fewer than two values).
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub const TICK_HEADER: &str = "decision_step,time_s,travel_time,queue_length,waiting_time,throughput,standing,reward";

/// Per-tick metrics rounded to the CSV precision.
pub fn rounded(row: &EvalRow) -> EvalRow {
    let r = |x: f64| fmt6(x).parse::<f64>().expect("round trip");
    EvalRow {
        travel_time: r(row.travel_time),
        queue_length: r(row.queue_length),
        waiting_time: r(row.waiting_time),
        time_s: r(row.time_s),
        reward: r(row.reward),
        ..row.clone()
    }
}

pub fn ticks_csv(rows: &[EvalRow]) -> String {
    let mut s = String::from(TICK_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            r.decision_step,
            fmt6(r.time_s),
            fmt6(r.travel_time),
            fmt6(r.queue_length),
            fmt6(r.waiting_time),
            r.throughput,
            r.standing,
            fmt6(r.reward)
        );
    }
    s
}

pub fn parse_ticks_csv(text: &str) -> Result<Vec<EvalRow>, HarnessError> {
    let bad = |l: &str| HarnessError::Config(format!("malformed metrics row '{l}'"));
    text.lines()
        .skip(1)
        .filter(|l| !l.is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != 8 {
                return Err(bad(l));
            }
            let num = |i: usize| f[i].parse::<f64>().map_err(|_| bad(l));
            let int = |i: usize| f[i].parse::<usize>().map_err(|_| bad(l));
            Ok(EvalRow {
                decision_step: int(0)?,
                time_s: num(1)?,
                travel_time: num(2)?,
                queue_length: num(3)?,
                waiting_time: num(4)?,
                throughput: int(5)?,
                standing: int(6)?,
                reward: num(7)?,
            })
        })
        .collect()
}

/// One seed's episode metrics, computed from CSV-precision rows so the
/// summary can be re-derived from the file alone.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub travel_time: f64,
    pub queue_length: f64,
    pub waiting_time: f64,
    pub throughput: f64,
    pub standing: f64,
    pub reward: f64,
}

pub const METRICS: [&str; 6] = ["travel_time", "queue_length", "waiting_time", "throughput", "standing", "reward"];

impl SeedSummary {
    pub fn from_rows(rows: &[EvalRow]) -> Self {
        let rows: Vec<EvalRow> = rows.iter().map(rounded).collect();
        let n = rows.len().max(1) as f64;
        let last = rows.last();
        Self {
            travel_time: last.map_or(0.0, |r| r.travel_time),
            queue_length: rows.iter().map(|r| r.queue_length).sum::<f64>() / n,
            waiting_time: last.map_or(0.0, |r| r.waiting_time),
            throughput: rows.iter().map(|r| r.throughput as f64).sum(),
            standing: rows.iter().map(|r| r.standing as f64).sum::<f64>() / n,
            reward: rows.iter().map(|r| r.reward).sum::<f64>() / n,
        }
    }

    pub fn get(&self, metric: &str) -> f64 {
        match metric {
            "travel_time" => self.travel_time,
            "queue_length" => self.queue_length,
            "waiting_time" => self.waiting_time,
            "throughput" => self.throughput,
            "standing" => self.standing,
            "reward" => self.reward,
            other => panic!("unknown metric {other}"),
        }
    }
}

/// Mean ± standard deviation of every metric across seeds.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepSummary {
    pub policy: String,
    pub seeds: Vec<u64>,
    pub per_seed: Vec<SeedSummary>,
}

impl SweepSummary {
    pub fn stat(&self, metric: &str) -> (f64, f64) {
        mean_std(&self.per_seed.iter().map(|s| s.get(metric)).collect::<Vec<_>>())
    }

    pub fn csv(&self) -> String {
        let mut s = String::from("metric,mean,std,n\n");
        for m in METRICS {
            let (mean, std) = self.stat(m);
            let _ = writeln!(s, "{m},{},{},{}", fmt6(mean), fmt6(std), self.per_seed.len());
        }
        s
    }

    pub fn table(&self) -> String {
        let mut s = format!("policy: {}\nseeds: {:?}\n", self.policy, self.seeds);
        for m in METRICS {
            let (mean, std) = self.stat(m);
            let _ = writeln!(s, "{m:<13} {mean:.2} ± {std:.2}");
        }
        s
    }
}

/// Per-intersection metrics after every tick.
#[derive(Clone, Debug, PartialEq)]
pub struct IntersectionRow {
    pub time_s: f64,
    pub intersection_id: usize,
    pub queue_len: usize,
    pub standing: usize,
    pub waiting_time_s: f64,
    pub throughput: u64,
    pub travel_time_s: f64,
}

fn intersection_rows(env: &Env, prev_discharged: &mut Vec<u64>) -> Vec<IntersectionRow> {
    let net = env.network();
    let state = env.sim().state();
    if prev_discharged.is_empty() {
        prev_discharged.resize(net.intersections().len(), 0);
    }
    net.intersections()
        .iter()
        .map(|x| {
            let standing_on = |l: &crate::network::LaneId| state.lanes[l.index()].iter().filter(|v| v.is_standing()).count();
            let queue_len: usize = x.incoming.iter().map(standing_on).sum();
            let discharged: u64 = x.incoming.iter().map(|l| state.lane_discharged[l.index()]).sum();
            let v = x.id.index();
            let row = IntersectionRow {
                time_s: state.clock,
                intersection_id: v,
                queue_len,
                standing: queue_len + x.outgoing.iter().map(standing_on).sum::<usize>(),
                waiting_time_s: x.incoming.iter().map(|l| state.lane_waiting_s[l.index()]).sum(),
                throughput: discharged - prev_discharged[v],
                travel_time_s: env.mean_travel_time(),
            };
            prev_discharged[v] = discharged;
            row
        })
        .collect()
}

pub fn intersections_csv(rows: &[IntersectionRow]) -> String {
    let mut s = String::from("time_s,intersection_id,queue_len,standing,waiting_time_s,throughput,travel_time_s\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            fmt6(r.time_s),
            r.intersection_id,
            r.queue_len,
            r.standing,
            fmt6(r.waiting_time_s),
            r.throughput,
            fmt6(r.travel_time_s)
        );
    }
    s
}

pub fn trajectory_csv(rows: &[TrajectoryRow]) -> String {
    let mut s = String::from("time_s,vehicle_id,lane_id,pos_m,speed\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{},{},{}", fmt6(r.time_s), r.vehicle_id, r.lane_id, fmt6(r.pos_m), fmt6(r.speed));
    }
    s
}

pub fn train_log_csv(log: &[TrainLogRow], window: usize) -> Result<String, HarnessError> {
    let ma = moving_average(&log.iter().map(|r| r.mean_reward).collect::<Vec<_>>(), window)?;
    let mut s = format!("decision_step,mean_reward,mean_queue,loss,epsilon,mean_reward_ma{window}\n");
    for (r, m) in log.iter().zip(ma) {
        let loss = r.loss.map(fmt6).unwrap_or_default();
        let _ = writeln!(s, "{},{},{},{},{},{}", r.decision_step, fmt6(r.mean_reward), fmt6(r.mean_queue), loss, fmt6(r.epsilon), fmt6(m));
    }
    Ok(s)
}

/// Outputs of one evaluated seed.
#[derive(Clone, Debug)]
pub struct SeedRun {
    pub seed: u64,
    pub ticks: Vec<EvalRow>,
    pub intersections: Vec<IntersectionRow>,
    pub trajectory: Vec<TrajectoryRow>,
}

/// Evaluates one seed with the policy produced by `make`.
pub fn run_seed(
    cfg: &ExperimentConfig,
    env_cfg: EnvConfig,
    seed: u64,
    policy: &mut dyn Policy,
) -> Result<SeedRun, HarnessError> {
    let scenario = cfg.scenario_for(seed)?;
    let mut env = Env::from_scenario(&scenario, env_cfg)?;
    env.sim_mut().record_trajectories(cfg.record_trajectories);
    let mut inter = Vec::new();
    let mut prev = Vec::new();
    let mut last_env_traj = Vec::new();
    let (ticks, _) = evaluate_with(env, policy, seed, &mut |env, _| {
        inter.extend(intersection_rows(env, &mut prev));
        if cfg.record_trajectories && env.is_over() {
            last_env_traj = env.sim().trajectory().to_vec();
        }
    })?;
    Ok(SeedRun { seed, ticks, intersections: inter, trajectory: last_env_traj })
}

/// Runs every seed, concurrently when cores allow; results keep seed order.
pub fn sweep<F>(seeds: &[u64], run: F) -> Result<Vec<SeedRun>, HarnessError>
where
    F: Fn(u64) -> Result<SeedRun, HarnessError> + Sync,
{
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).max(1);
    let mut results = Vec::with_capacity(seeds.len());
    for chunk in seeds.chunks(workers) {
        if chunk.len() == 1 {
            results.push(run(chunk[0]));
            continue;
        }
        std::thread::scope(|s| {
            let run = &run;
            let handles: Vec<_> = chunk.iter().map(|&seed| s.spawn(move || run(seed))).collect();
            for h in handles {
                results.push(h.join().expect("evaluation worker panicked"));
            }
        });
    }
    results.into_iter().collect()
}

fn write_sweep(cfg: &ExperimentConfig, policy: &str, runs: &[SeedRun]) -> Result<SweepSummary, HarnessError> {
    for r in runs {
        write_file(&cfg.out.join(format!("ticks_seed{}.csv", r.seed)), &ticks_csv(&r.ticks))?;
        write_file(&cfg.out.join(format!("intersections_seed{}.csv", r.seed)), &intersections_csv(&r.intersections))?;
        if cfg.record_trajectories {
            write_file(&cfg.out.join(format!("trajectory_seed{}.csv", r.seed)), &trajectory_csv(&r.trajectory))?;
        }
    }
    let summary = SweepSummary {
        policy: policy.to_string(),
        seeds: runs.iter().map(|r| r.seed).collect(),
        per_seed: runs.iter().map(|r| SeedSummary::from_rows(&r.ticks)).collect(),
    };
    write_file(&cfg.out.join("summary.csv"), &summary.csv())?;
    write_file(&cfg.out.join("summary.txt"), &summary.table())?;
    cfg.write_record()?;
    Ok(summary)
}

/// Writes a scenario bundle to `<out>/scenario`.
pub fn cmd_generate(cfg: &ExperimentConfig) -> Result<PathBuf, HarnessError> {
    cfg.validate()?;
    let scenario = Scenario::generate(&cfg.domain.clone().with_seed(cfg.seed))?;
    let dir = cfg.out.join("scenario");
    scenario.save(&dir)?;
    cfg.write_record()?;
    Ok(dir)
}

pub struct TrainReport {
    pub checkpoint: PathBuf,
    pub log: Vec<TrainLogRow>,
    pub episodes: usize,
    pub agent: Agent,
}

/// Trains and writes `checkpoint.bin`, `train_log.csv` and `config.toml`.
pub fn cmd_train(cfg: &ExperimentConfig) -> Result<TrainReport, HarnessError> {
    cfg.validate()?;
    let tc = cfg.train_config()?;
    std::fs::create_dir_all(&cfg.out).map_err(io_err(&cfg.out))?;
    let out = train(&tc, Some(&cfg.out))?;
    let checkpoint = cfg.out.join("checkpoint.bin");
    out.agent.save(&checkpoint)?;
    write_file(&cfg.out.join("train_log.csv"), &train_log_csv(&out.log, cfg.ma_window)?)?;
    cfg.write_record()?;
    Ok(TrainReport { checkpoint, log: out.log, episodes: out.episodes, agent: out.agent })
}

/// Evaluates a checkpoint over `eval_seeds`.
pub fn cmd_eval(cfg: &ExperimentConfig) -> Result<SweepSummary, HarnessError> {
    cfg.validate()?;
    let agent = Agent::load(&cfg.checkpoint_path(), cfg.seed)?;
    eval_agent(cfg, &agent)
}

/// Evaluates an in-memory agent; the encoding it was trained with is used.
pub fn eval_agent(cfg: &ExperimentConfig, agent: &Agent) -> Result<SweepSummary, HarnessError> {
    let env_cfg = EnvConfig { encoding: agent.encoding, ..cfg.env_config()? };
    let runs = sweep(&cfg.eval_seeds, |seed| run_seed(cfg, env_cfg, seed, &mut GreedyPolicy { agent }))?;
    write_sweep(cfg, &format!("learned-{}", agent.kind().name()), &runs)
}

/// Evaluates the configured baseline over `eval_seeds`.
pub fn cmd_baseline(cfg: &ExperimentConfig) -> Result<SweepSummary, HarnessError> {
    cfg.validate()?;
    let Controller::Baseline(name) = cfg.controller()? else {
        return Err(HarnessError::Config(format!("'{}' is not a baseline", cfg.head)));
    };
    let env_cfg = cfg.env_config()?;
    let runs = sweep(&cfg.eval_seeds, |seed| {
        let mut p = baseline(&name)?;
        run_seed(cfg, env_cfg, seed, p.as_mut())
    })?;
    write_sweep(cfg, &name, &runs)
}

/// Parameter counts per encoder level and for the policy head.
pub fn encoder_info(agent: &Agent) -> String {
    let mut s = String::new();
    let levels = Encoder::param_counts(&agent.store);
    let enc: usize = levels.iter().map(|l| l.1).sum();
    for (name, n) in &levels {
        let _ = writeln!(s, "{name:<18} {n}");
    }
    let _ = writeln!(s, "{:<18} {}", format!("{} head", agent.kind().name()), agent.store.num_scalars() - enc);
    let _ = writeln!(s, "{:<18} {}", "total", agent.store.num_scalars());
    s
}

/// `encoder-info`: from the configured checkpoint when it exists, else a fresh agent.
pub fn cmd_encoder_info(cfg: &ExperimentConfig) -> Result<String, HarnessError> {
    let path = cfg.checkpoint_path();
    let agent = if path.exists() {
        Agent::load(&path, cfg.seed)?
    } else {
        let head = match cfg.controller()? {
            Controller::Learned(h) => h,
            Controller::Baseline(_) => HeadKind::Dqn,
        };
        Agent::new(AgentConfig { head, ..cfg.agent }, cfg.encoding()?, cfg.seed)?
    };
    Ok(encoder_info(&agent))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moving_average_examples() {
        assert_eq!(moving_average(&[1.0, 2.0, 3.0], 2).unwrap(), vec![1.0, 1.5, 2.5]);
        assert_eq!(moving_average(&[4.0, 5.0, 6.0], 1).unwrap(), vec![4.0, 5.0, 6.0]);
        assert_eq!(moving_average(&[2.0; 5], 3).unwrap(), vec![2.0; 5]);
        assert!(moving_average(&[1.0], 0).is_err());
    }

    #[test]
    fn six_significant_digits() {
        assert_eq!(fmt6(123.456789), "123.457");
        assert_eq!(fmt6(0.000123456789), "0.000123457");
        assert_eq!(fmt6(-2.0), "-2");
        assert_eq!(fmt6(0.0), "0");
    }

    #[test]
    fn mean_std_examples() {
        assert_eq!(mean_std(&[2.0, 4.0]), (3.0, 2f64.sqrt()));
        assert_eq!(mean_std(&[5.0]), (5.0, 0.0));
    }

    #[test]
    fn config_round_trip_and_overrides() {
        let cfg = ExperimentConfig::from_toml("seed = 4\nhead = \"max-pressure\"\nablate = [\"gamma\"]\n[domain]\nvehicle_pool = [100, 200]\n").unwrap();
        assert_eq!(cfg.seed, 4);
        assert_eq!(cfg.controller().unwrap(), Controller::Baseline("max-pressure".into()));
        assert!(!cfg.flags().unwrap().gamma);
        assert_eq!(cfg.domain.vehicle_pool, (100, 200));
        assert_eq!(ExperimentConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
        assert!(ExperimentConfig::from_toml("head = \"oracle\"").is_err());
        assert!(ExperimentConfig::from_toml("ablate = [\"speed\"]").is_err());
        assert!(ExperimentConfig::from_toml("bogus = 1").is_err());
        assert!(cfg.train_config().is_err());
    }

    #[test]
    fn tick_csv_round_trip() {
        let rows = vec![EvalRow {
            decision_step: 0,
            time_s: 110.0,
            travel_time: 45.123456789,
            queue_length: 2.5,
            waiting_time: 3.25,
            throughput: 4,
            standing: 3,
            reward: -0.0123456789,
        }];
        let back = parse_ticks_csv(&ticks_csv(&rows)).unwrap();
        assert_eq!(back[0], rounded(&rows[0]));
        assert_eq!(SeedSummary::from_rows(&back), SeedSummary::from_rows(&rows));
    }
}
