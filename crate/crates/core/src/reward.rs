//! Rewards: classic movement pressure and the log-distance variant that
//! breaks pressure's translation and scale degeneracy.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::{IntersectionId, LaneId, MovementId, RoadNetwork};
use crate::sim::SimState;

pub const DEFAULT_EPSILON: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum RewardError {
    #[error("no agents to average over")]
    NoAgents,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RewardMode {
    Pressure,
    LogDistance,
}

impl std::str::FromStr for RewardMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "pressure" => Ok(Self::Pressure),
            "log-distance" => Ok(Self::LogDistance),
            other => Err(format!("unknown reward mode '{other}' (pressure | log-distance)")),
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GlobalMode {
    Identical,
    TeamAverage,
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardConfig {
    pub epsilon: f64,
    pub mode: RewardMode,
    pub global_mode: GlobalMode,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self { epsilon: DEFAULT_EPSILON, mode: RewardMode::LogDistance, global_mode: GlobalMode::TeamAverage }
    }
}

fn density(net: &RoadNetwork, state: &SimState, lane: LaneId) -> f64 {
    state.lanes[lane.index()].len() as f64 / net.lane(lane).length_m
}

/// Incoming minus outgoing vehicle density (vehicles per meter) of a movement.
pub fn pressure(net: &RoadNetwork, state: &SimState, m: MovementId) -> f64 {
    let mv = net.movement(m);
    density(net, state, mv.in_lane) - density(net, state, mv.out_lane)
}

/// Sum over a lane's vehicles of `log(pos / length + eps)`, with `pos` the
/// distance to the intersection the lane feeds.
pub fn log_energy(net: &RoadNetwork, state: &SimState, lane: LaneId, eps: f64) -> f64 {
    let len = net.lane(lane).length_m;
    state.lanes[lane.index()].iter().map(|v| (v.pos_m / len + eps).ln()).sum()
}

pub fn log_pressure(net: &RoadNetwork, state: &SimState, v: IntersectionId, eps: f64) -> f64 {
    net.movements_at(v)
        .iter()
        .map(|&m| {
            let mv = net.movement(m);
            log_energy(net, state, mv.in_lane, eps) / net.lane(mv.in_lane).length_m
                - log_energy(net, state, mv.out_lane, eps) / net.lane(mv.out_lane).length_m
        })
        .sum()
}

/// Negated absolute balance of intersection `v`; never positive.
pub fn reward(net: &RoadNetwork, state: &SimState, v: IntersectionId, config: &RewardConfig) -> f64 {
    let total = match config.mode {
        RewardMode::LogDistance => log_pressure(net, state, v, config.epsilon),
        RewardMode::Pressure => net.movements_at(v).iter().map(|&m| pressure(net, state, m)).sum(),
    };
    -total.abs()
}

/// Per-agent training signals from per-agent rewards.
pub fn global_reward(rewards: &[f64], mode: GlobalMode) -> Result<Vec<f64>, RewardError> {
    if rewards.is_empty() {
        return Err(RewardError::NoAgents);
    }
    Ok(match mode {
        GlobalMode::Identical => rewards.to_vec(),
        GlobalMode::TeamAverage => {
            let mean = rewards.iter().sum::<f64>() / rewards.len() as f64;
            vec![mean; rewards.len()]
        }
    })
}

/// Rewards of every intersection in id order.
pub fn all_rewards(net: &RoadNetwork, state: &SimState, config: &RewardConfig) -> Vec<f64> {
    net.intersections().iter().map(|x| reward(net, state, x.id, config)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::fixtures::{corridor, four_way};
    use crate::sim::{Simulation, Vehicle};
    use std::sync::Arc;

    fn sim(def: crate::network::NetworkDef) -> Simulation {
        Simulation::new(Arc::new(RoadNetwork::try_from(def).unwrap()))
    }

    fn fill(sim: &mut Simulation, lane: u32, route: &[u32], positions: &[f64], id0: u32) {
        for (k, &p) in positions.iter().enumerate() {
            let r = route.iter().map(|&l| LaneId(l)).collect();
            sim.place(Vehicle::new(id0 + k as u32, r, 0.0), p, 0.0).unwrap();
        }
        assert!(route[0] == lane);
    }

    #[test]
    fn pressure_examples() {
        let mut s = sim(corridor());
        let net = Arc::clone(s.network());
        assert_eq!(pressure(&net, s.state(), MovementId(0)), 0.0);
        let ins: Vec<f64> = (0..10).map(|k| 5.0 + 9.0 * k as f64).collect();
        fill(&mut s, 0, &[0, 1], &ins, 0);
        let outs: Vec<f64> = (0..5).map(|k| 10.0 + 15.0 * k as f64).collect();
        fill(&mut s, 1, &[1, 2], &outs, 100);
        assert!((pressure(&net, s.state(), MovementId(0)) - 0.05).abs() < 1e-15);
    }

    #[test]
    fn log_energy_examples() {
        let mut s = sim(corridor());
        let net = Arc::clone(s.network());
        assert_eq!(log_energy(&net, s.state(), LaneId(0), DEFAULT_EPSILON), 0.0);
        fill(&mut s, 0, &[0, 1], &[100.0], 0);
        let e = log_energy(&net, s.state(), LaneId(0), DEFAULT_EPSILON);
        assert!((e - (1.0f64 + 1e-6).ln()).abs() < 1e-15 && e.abs() < 1e-5);

        let at = |p: f64| {
            let mut s = sim(corridor());
            fill(&mut s, 0, &[0, 1], &[p], 0);
            let net = Arc::clone(s.network());
            (pressure(&net, s.state(), MovementId(0)), log_energy(&net, s.state(), LaneId(0), DEFAULT_EPSILON))
        };
        let (p50, e50) = at(50.0);
        let (p80, e80) = at(80.0);
        assert_eq!(p50, p80);
        assert!((e50 - (0.5f64 + 1e-6).ln()).abs() < 1e-15);
        assert!((e80 - (0.8f64 + 1e-6).ln()).abs() < 1e-15);
    }

    #[test]
    fn log_pressure_hand_fixture() {
        // Corridor intersection B: movements 1→2, 1→5, 3→2, all 100 m lanes.
        let mut s = sim(corridor());
        fill(&mut s, 1, &[1, 2], &[20.0, 60.0], 0);
        fill(&mut s, 3, &[3, 2], &[50.0], 10);
        fill(&mut s, 2, &[2], &[90.0], 20);
        let net = Arc::clone(s.network());
        let eps = 1e-6;
        let e1 = (0.2f64 + eps).ln() + (0.6f64 + eps).ln();
        let e3 = (0.5f64 + eps).ln();
        let e2 = (0.9f64 + eps).ln();
        let e5 = 0.0;
        let expect = (e1 - e2) / 100.0 + (e1 - e5) / 100.0 + (e3 - e2) / 100.0;
        let got = log_pressure(&net, s.state(), IntersectionId(1), eps);
        assert!((got - expect).abs() < 1e-14, "{got} vs {expect}");
        let cfg = RewardConfig::default();
        assert_eq!(reward(&net, s.state(), IntersectionId(1), &cfg), -expect.abs());
    }

    #[test]
    fn empty_and_symmetric_states_are_balanced() {
        let s = sim(four_way(100.0));
        let net = Arc::clone(s.network());
        for mode in [RewardMode::Pressure, RewardMode::LogDistance] {
            let cfg = RewardConfig { mode, ..RewardConfig::default() };
            assert_eq!(reward(&net, s.state(), IntersectionId(0), &cfg), 0.0);
        }
        // Identical placements on the in and out lane of the single corridor-A movement 0→1 and 0→4.
        let mut s = sim(corridor());
        fill(&mut s, 0, &[0, 1], &[30.0], 0);
        fill(&mut s, 1, &[1, 2], &[30.0], 1);
        fill(&mut s, 4, &[4], &[30.0], 2);
        let net = Arc::clone(s.network());
        assert_eq!(log_pressure(&net, s.state(), IntersectionId(0), DEFAULT_EPSILON), 0.0);
    }

    #[test]
    fn equal_pressure_different_log_reward() {
        let build = |p: f64| {
            let mut s = sim(corridor());
            fill(&mut s, 0, &[0, 1], &[p], 0);
            s
        };
        let (a, b) = (build(50.0), build(80.0));
        let net = Arc::clone(a.network());
        let press = RewardConfig { mode: RewardMode::Pressure, ..RewardConfig::default() };
        let log = RewardConfig::default();
        let v = IntersectionId(0);
        assert_eq!(reward(&net, a.state(), v, &press), reward(&net, b.state(), v, &press));
        assert_ne!(reward(&net, a.state(), v, &log), reward(&net, b.state(), v, &log));
    }

    #[test]
    fn scale_witness() {
        let build = |k: usize| {
            let mut s = sim(corridor());
            let pos: Vec<f64> = (0..k).map(|i| 10.0 + 8.0 * i as f64).collect();
            fill(&mut s, 0, &[0, 1], &pos, 0);
            let out: Vec<f64> = (0..k / 2).map(|i| 40.0 + 8.0 * i as f64).collect();
            fill(&mut s, 1, &[1, 2], &out, 100);
            s
        };
        let (a, b) = (build(4), build(8));
        let net = Arc::clone(a.network());
        let pa = pressure(&net, a.state(), MovementId(0));
        let pb = pressure(&net, b.state(), MovementId(0));
        assert!((pb - 2.0 * pa).abs() < 1e-15);
        let ea = log_energy(&net, a.state(), LaneId(0), DEFAULT_EPSILON);
        let eb = log_energy(&net, b.state(), LaneId(0), DEFAULT_EPSILON);
        assert!((eb - 2.0 * ea).abs() > 1e-6);
    }

    #[test]
    fn global_reward_examples() {
        assert_eq!(global_reward(&[-1.0, -3.0], GlobalMode::TeamAverage).unwrap(), vec![-2.0, -2.0]);
        assert_eq!(global_reward(&[-4.5], GlobalMode::TeamAverage).unwrap(), vec![-4.5]);
        assert_eq!(global_reward(&[-1.0, -3.0], GlobalMode::Identical).unwrap(), vec![-1.0, -3.0]);
        assert_eq!(global_reward(&[], GlobalMode::TeamAverage), Err(RewardError::NoAgents));
        let a = global_reward(&[-0.1, -0.7, -0.3], GlobalMode::TeamAverage).unwrap()[0];
        let b = global_reward(&[-0.3, -0.1, -0.7], GlobalMode::TeamAverage).unwrap()[0];
        assert!((a - b).abs() < 1e-12);
        assert!("log-distance".parse::<RewardMode>().is_ok() && "x".parse::<RewardMode>().is_err());
    }
}
