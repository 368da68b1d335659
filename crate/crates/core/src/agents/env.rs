//! Decision-tick environment over the microsimulator, plus per-tick metrics.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::AgentError;
use crate::domainrand::{flows_to_vehicles, Scenario};
use crate::encoding::{EncodingConfig, StateEncoder, StateGraph};
use crate::network::{IntersectionId, RoadNetwork};
use crate::reward::{all_rewards, global_reward, RewardConfig};
use crate::sim::{Simulation, Vehicle, ACTION_PERSISTENCE_S};

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvConfig {
    pub dt: f64,
    pub decision_interval_s: f64,
    /// Simulated seconds run before the first decision.
    pub warmup_s: f64,
    pub episode_s: f64,
    pub reward: RewardConfig,
    pub encoding: EncodingConfig,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            dt: 1.0,
            decision_interval_s: ACTION_PERSISTENCE_S,
            warmup_s: 100.0,
            episode_s: 3600.0,
            reward: RewardConfig::default(),
            encoding: EncodingConfig::default(),
        }
    }
}

/// Result of one decision tick.
#[derive(Clone, Debug, PartialEq)]
pub struct TickOutcome {
    /// Per-intersection rewards in id order.
    pub rewards: Vec<f64>,
    /// Per-agent training signal after global aggregation.
    pub signals: Vec<f64>,
    /// Every vehicle of the scenario has arrived.
    pub done: bool,
    /// The episode horizon was reached.
    pub truncated: bool,
    pub arrived: usize,
}

pub struct Env {
    sim: Simulation,
    encoder: StateEncoder,
    config: EnvConfig,
    total_vehicles: usize,
    ticks: usize,
}

impl Env {
    pub fn new(network: Arc<RoadNetwork>, vehicles: Vec<Vehicle>, config: EnvConfig) -> Result<Self, AgentError> {
        if config.decision_interval_s < ACTION_PERSISTENCE_S {
            return Err(AgentError::Config(format!(
                "decision interval {} below action persistence {}",
                config.decision_interval_s, ACTION_PERSISTENCE_S
            )));
        }
        if !(config.dt > 0.0) || config.episode_s < config.warmup_s {
            return Err(AgentError::Config("bad time settings".into()));
        }
        let encoder = StateEncoder::new(Arc::clone(&network), config.encoding)?;
        let total_vehicles = vehicles.len();
        let mut sim = Simulation::new(network);
        sim.schedule(vehicles)?;
        sim.run(config.warmup_s, config.dt)?;
        Ok(Self { sim, encoder, config, total_vehicles, ticks: 0 })
    }

    pub fn from_scenario(scenario: &Scenario, config: EnvConfig) -> Result<Self, AgentError> {
        Self::new(Arc::clone(&scenario.network), flows_to_vehicles(&scenario.flows), config)
    }

    pub fn network(&self) -> &Arc<RoadNetwork> {
        self.sim.network()
    }

    pub fn sim(&self) -> &Simulation {
        &self.sim
    }

    pub fn sim_mut(&mut self) -> &mut Simulation {
        &mut self.sim
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn clock(&self) -> f64 {
        self.sim.state().clock
    }

    pub fn ticks(&self) -> usize {
        self.ticks
    }

    pub fn total_vehicles(&self) -> usize {
        self.total_vehicles
    }

    pub fn num_agents(&self) -> usize {
        self.network().intersections().len()
    }

    pub fn phase_counts(&self) -> Vec<usize> {
        let net = self.network();
        net.intersections().iter().map(|x| net.phases_at(x.id).len()).collect()
    }

    pub fn all_arrived(&self) -> bool {
        self.sim.state().arrivals.len() == self.total_vehicles
    }

    pub fn is_over(&self) -> bool {
        self.all_arrived() || self.clock() + 1e-9 >= self.config.episode_s
    }

    /// One state graph per intersection, in id order.
    pub fn observe(&self) -> Vec<StateGraph> {
        self.network().intersections().iter().map(|x| self.encoder.encode(self.sim.state(), x.id)).collect()
    }

    /// Applies one local phase index per intersection and advances one tick.
    pub fn step(&mut self, actions: &[usize]) -> Result<TickOutcome, AgentError> {
        let net = Arc::clone(self.network());
        if actions.len() != net.intersections().len() {
            return Err(AgentError::Config(format!("{} actions for {} intersections", actions.len(), net.intersections().len())));
        }
        for (v, &a) in actions.iter().enumerate() {
            let phases = net.phases_at(IntersectionId::from(v));
            let phase = *phases.get(a).ok_or(AgentError::BadAction { action: a, phases: phases.len() })?;
            self.sim.apply_action(IntersectionId::from(v), phase)?;
        }
        let before = self.sim.state().arrivals.len();
        let horizon = (self.clock() + self.config.decision_interval_s).min(self.config.episode_s);
        while self.clock() + 1e-9 < horizon && !self.all_arrived() {
            self.sim.step(self.config.dt)?;
        }
        self.ticks += 1;
        let rewards = all_rewards(&net, self.sim.state(), &self.config.reward);
        let signals = global_reward(&rewards, self.config.reward.global_mode).map_err(|e| AgentError::Config(e.to_string()))?;
        Ok(TickOutcome {
            rewards,
            signals,
            done: self.all_arrived(),
            truncated: self.clock() + 1e-9 >= self.config.episode_s,
            arrived: self.sim.state().arrivals.len() - before,
        })
    }

    /// Mean over intersections of standing vehicles on their incoming lanes.
    pub fn queue_length(&self) -> f64 {
        let net = self.network();
        let state = self.sim.state();
        let n = net.intersections().len().max(1);
        let total: usize = net
            .intersections()
            .iter()
            .flat_map(|x| x.incoming.iter())
            .map(|l| state.lanes[l.index()].iter().filter(|v| v.is_standing()).count())
            .sum();
        total as f64 / n as f64
    }

    pub fn standing(&self) -> usize {
        self.sim.state().vehicles().filter(|v| v.is_standing()).count()
    }

    /// Mean travel time of arrived vehicles, 0 if none.
    pub fn mean_travel_time(&self) -> f64 {
        let a = &self.sim.state().arrivals;
        if a.is_empty() {
            return 0.0;
        }
        a.iter().map(|x| x.arrive_time - x.depart_time).sum::<f64>() / a.len() as f64
    }

    /// Mean accumulated standing time over vehicles that entered the network.
    pub fn mean_waiting_time(&self) -> f64 {
        let s = self.sim.state();
        let n = s.arrivals.len() + s.on_network();
        if n == 0 {
            return 0.0;
        }
        let total: f64 = s.arrivals.iter().map(|a| a.waiting_s).sum::<f64>() + s.vehicles().map(|v| v.waiting_s).sum::<f64>();
        total / n as f64
    }
}

/// Metrics recorded after every decision tick of an evaluation episode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub decision_step: usize,
    pub time_s: f64,
    pub travel_time: f64,
    pub queue_length: f64,
    pub waiting_time: f64,
    pub throughput: usize,
    pub standing: usize,
    pub reward: f64,
}

/// Episode averages of the per-tick metrics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub travel_time: f64,
    pub queue_length: f64,
    pub waiting_time: f64,
    pub throughput: f64,
    pub standing: f64,
    pub reward: f64,
    pub arrived: usize,
    pub en_route: usize,
}

impl EpisodeSummary {
    pub fn from_rows(rows: &[EvalRow], env: &Env) -> Self {
        let n = rows.len().max(1) as f64;
        let mean = |f: &dyn Fn(&EvalRow) -> f64| rows.iter().map(f).sum::<f64>() / n;
        let arrived = env.sim().state().arrivals.len();
        Self {
            // Final cumulative mean over all arrivals.
            travel_time: env.mean_travel_time(),
            queue_length: mean(&|r| r.queue_length),
            waiting_time: env.mean_waiting_time(),
            throughput: mean(&|r| r.throughput as f64),
            standing: mean(&|r| r.standing as f64),
            reward: mean(&|r| r.reward),
            arrived,
            en_route: env.total_vehicles() - arrived,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::fixtures::four_way;
    use crate::network::LaneId;

    fn env(vehicles: Vec<Vehicle>) -> Env {
        let net = Arc::new(RoadNetwork::try_from(four_way(100.0)).unwrap());
        Env::new(net, vehicles, EnvConfig { episode_s: 400.0, ..EnvConfig::default() }).unwrap()
    }

    #[test]
    fn zero_demand_metrics_are_zero() {
        let mut e = env(vec![]);
        assert!(e.is_over());
        let out = e.step(&[1]).unwrap();
        assert_eq!(out.rewards, vec![0.0]);
        assert!(out.done);
        assert_eq!((e.queue_length(), e.standing(), e.mean_travel_time(), e.mean_waiting_time()), (0.0, 0, 0.0, 0.0));
    }

    #[test]
    fn ticks_advance_ten_seconds_after_warmup() {
        let v: Vec<Vehicle> = (0..20).map(|i| Vehicle::new(i, vec![LaneId(0), LaneId(6)], 90.0 + 15.0 * i as f64)).collect();
        let mut e = env(v);
        assert_eq!(e.clock(), 100.0);
        assert_eq!(e.observe().len(), 1);
        e.step(&[0]).unwrap();
        assert_eq!(e.clock(), 110.0);
        assert!(matches!(e.step(&[4]), Err(AgentError::BadAction { action: 4, phases: 4 })));
        while !e.is_over() {
            e.step(&[0]).unwrap();
        }
        assert!(e.all_arrived());
        assert!(e.mean_travel_time() > 0.0);
    }
}
