use std::sync::Arc;

use sigctl::agents::{evaluate, Agent, AgentConfig, Env, EnvConfig, GreedyPolicy, HeadKind, MaxPressurePolicy};
use sigctl::domainrand::{DomainConfig, Scenario};
use sigctl::encoding::EncodingConfig;
use sigctl::harness::{self, mean_std, parse_ticks_csv, ExperimentConfig, SeedSummary, METRICS};
use sigctl::network::RoadNetwork;

fn small_cfg(out: &std::path::Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig { out: out.to_path_buf(), episode_s: 500.0, eval_seeds: vec![3, 4, 5], ..ExperimentConfig::default() };
    cfg.domain.vehicle_pool = (300, 400);
    cfg
}

#[test]
fn summary_recomputes_from_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig { head: "fixed-time".into(), ..small_cfg(dir.path()) };
    let summary = harness::cmd_baseline(&cfg).unwrap();
    let per_seed: Vec<SeedSummary> = cfg
        .eval_seeds
        .iter()
        .map(|s| {
            let text = std::fs::read_to_string(dir.path().join(format!("ticks_seed{s}.csv"))).unwrap();
            SeedSummary::from_rows(&parse_ticks_csv(&text).unwrap())
        })
        .collect();
    assert_eq!(per_seed, summary.per_seed);
    let csv = std::fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    for (line, metric) in csv.lines().skip(1).zip(METRICS) {
        let f: Vec<&str> = line.split(',').collect();
        assert_eq!(f[0], metric);
        let xs: Vec<f64> = per_seed.iter().map(|s| s.get(metric)).collect();
        // Independent mean and sample standard deviation.
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let std = (xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)).sqrt();
        let (m, s) = mean_std(&xs);
        assert!((m - mean).abs() <= 1e-12 * mean.abs().max(1.0));
        assert!((s - std).abs() <= 1e-12 * std.abs().max(1.0));
        assert_eq!(f[1], harness::fmt6(m));
        assert_eq!(f[2], harness::fmt6(s));
    }
    let record = ExperimentConfig::load(&dir.path().join("config.toml")).unwrap();
    assert_eq!(record, cfg);
}

#[test]
fn zero_demand_metrics_are_zero() {
    let net = Scenario::generate(&DomainConfig::single_four_way().with_seed(2)).unwrap().network;
    let env = Env::new(Arc::clone(&net), vec![], EnvConfig::default()).unwrap();
    let (rows, s) = evaluate(env, &mut MaxPressurePolicy, 0).unwrap();
    assert!(rows.len() <= 1);
    for r in &rows {
        assert_eq!((r.travel_time, r.queue_length, r.waiting_time, r.throughput, r.standing, r.reward), (0.0, 0.0, 0.0, 0, 0, 0.0));
    }
    assert_eq!((s.travel_time, s.queue_length, s.waiting_time, s.throughput, s.standing), (0.0, 0.0, 0.0, 0.0, 0.0));
}

#[test]
fn one_checkpoint_runs_on_one_and_eight_intersections() {
    let dir = tempfile::tempdir().unwrap();
    let agent = Agent::new(AgentConfig { latent: 16, heads: 2, ..AgentConfig::default() }, EncodingConfig::default(), 5).unwrap();
    let path = dir.path().join("agent.bin");
    agent.save(&path).unwrap();
    let loaded = Agent::load(&path, 0).unwrap();
    for domain in [DomainConfig::single_four_way(), DomainConfig::grid(2, 4)] {
        let sc = Scenario::generate(&DomainConfig { vehicle_pool: (200, 200), ..domain }.with_seed(8)).unwrap();
        let env = Env::from_scenario(&sc, EnvConfig { episode_s: 300.0, ..EnvConfig::default() }).unwrap();
        let n = env.num_agents();
        let (rows, _) = evaluate(env, &mut GreedyPolicy { agent: &loaded }, 0).unwrap();
        assert_eq!(rows.len(), 20, "{n} intersections");
    }
}

#[test]
fn checkpoint_shape_mismatch_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let a2c = Agent::new(AgentConfig { head: HeadKind::A2c, latent: 16, heads: 2, ..AgentConfig::default() }, EncodingConfig::default(), 1).unwrap();
    let path = dir.path().join("a2c.bin");
    a2c.save(&path).unwrap();
    // Loading works, but the encoder was built for 18-wide segment features.
    let agent = Agent::load(&path, 0).unwrap();
    let net = Arc::new(RoadNetwork::clone(&Scenario::generate(&DomainConfig::single_four_way().with_seed(1)).unwrap().network));
    let env = Env::new(net, vec![], EnvConfig { encoding: EncodingConfig { pe_dim: 8, ..EncodingConfig::default() }, ..EnvConfig::default() }).unwrap();
    let graphs = env.observe();
    assert!(agent.scores(&graphs.iter().collect::<Vec<_>>()).is_err());
    // A truncated checkpoint fails to load.
    let bytes = std::fs::read(&path).unwrap();
    std::fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
    assert!(Agent::load(&path, 0).is_err());
    // `eval` on a missing checkpoint reports an error rather than training.
    let cfg = ExperimentConfig { checkpoint: Some(dir.path().join("missing.bin")), ..small_cfg(dir.path()) };
    assert!(harness::cmd_eval(&cfg).is_err());
}

#[test]
fn generate_writes_valid_bundles() {
    let dir = tempfile::tempdir().unwrap();
    for (rows, cols, expect) in [(1, 1, 1), (3, 3, 9)] {
        let cfg = ExperimentConfig { seed: 4, domain: DomainConfig::grid(rows, cols), ..small_cfg(&dir.path().join(format!("g{rows}"))) };
        let bundle = harness::cmd_generate(&cfg).unwrap();
        let sc = Scenario::load(&bundle).unwrap();
        assert_eq!(sc.network.intersections().len(), expect);
        assert!(sc.network.validate().is_empty());
        for f in &sc.flows {
            assert!(sigctl::sim::shortest_path(&sc.network, f.origin, f.destination).unwrap().is_some());
        }
        let again = harness::cmd_generate(&cfg).unwrap();
        assert_eq!(std::fs::read(bundle.join("flows.json")).unwrap(), std::fs::read(again.join("flows.json")).unwrap());
    }
}

#[test]
fn bad_config_is_rejected() {
    assert!(ExperimentConfig::from_toml("ma_window = 0").is_err());
    assert!(ExperimentConfig::from_toml("head = \"oracle\"").is_err());
    assert!(ExperimentConfig::from_toml("ablate = [\"colour\"]").is_err());
    assert!(ExperimentConfig::from_toml("unknown_key = 1").is_err());
    assert!(harness::moving_average(&[1.0], 0).is_err());
}
