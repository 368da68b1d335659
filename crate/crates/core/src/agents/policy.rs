//! Joint-action policies: heuristics and the greedy learned policy.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{argmax, Agent, AgentError, Env};
use crate::network::{IntersectionId, RoadNetwork};
use crate::reward::pressure;
use crate::sim::SimState;

pub const FIXED_TIME_GREEN_S: f64 = 30.0;

/// Chooses one local phase index per intersection at each decision tick.
pub trait Policy {
    fn name(&self) -> String;
    fn act(&mut self, env: &Env, rng: &mut ChaCha8Rng) -> Result<Vec<usize>, AgentError>;
}

pub fn random_action<R: Rng + ?Sized>(phases: usize, rng: &mut R) -> usize {
    rng.random_range(0..phases)
}

/// Phase shown after `elapsed_s` seconds of a fixed cycle.
pub fn fixed_time_action(elapsed_s: f64, phases: usize, green_s: f64) -> usize {
    ((elapsed_s / green_s + 1e-9).floor() as usize) % phases
}

/// Phase maximizing the summed pressure of its green movements; ties go to
/// the lowest index.
pub fn max_pressure_action(net: &RoadNetwork, state: &SimState, v: IntersectionId) -> usize {
    let scores: Vec<f64> = net
        .phases_at(v)
        .iter()
        .map(|&p| net.phase(p).green_set().into_iter().map(|m| pressure(net, state, m)).sum())
        .collect();
    argmax(&scores)
}

#[derive(Clone, Debug, Default)]
pub struct RandomPolicy;

impl Policy for RandomPolicy {
    fn name(&self) -> String {
        "random".into()
    }

    fn act(&mut self, env: &Env, rng: &mut ChaCha8Rng) -> Result<Vec<usize>, AgentError> {
        Ok(env.phase_counts().into_iter().map(|n| random_action(n, rng)).collect())
    }
}

/// Cycles through every intersection's phases with a fixed green duration,
/// counted from the first decision.
#[derive(Clone, Debug)]
pub struct FixedTimePolicy {
    pub green_s: f64,
    start: Option<f64>,
}

impl FixedTimePolicy {
    pub fn new(green_s: f64) -> Self {
        Self { green_s, start: None }
    }
}

impl Default for FixedTimePolicy {
    fn default() -> Self {
        Self::new(FIXED_TIME_GREEN_S)
    }
}

impl Policy for FixedTimePolicy {
    fn name(&self) -> String {
        "fixed-time".into()
    }

    fn act(&mut self, env: &Env, _rng: &mut ChaCha8Rng) -> Result<Vec<usize>, AgentError> {
        let start = *self.start.get_or_insert(env.clock());
        let elapsed = env.clock() - start;
        Ok(env.phase_counts().into_iter().map(|n| fixed_time_action(elapsed, n, self.green_s)).collect())
    }
}

#[derive(Clone, Debug, Default)]
pub struct MaxPressurePolicy;

impl Policy for MaxPressurePolicy {
    fn name(&self) -> String {
        "max-pressure".into()
    }

    fn act(&mut self, env: &Env, _rng: &mut ChaCha8Rng) -> Result<Vec<usize>, AgentError> {
        let net = env.network();
        Ok(net.intersections().iter().map(|x| max_pressure_action(net, env.sim().state(), x.id)).collect())
    }
}

/// Frozen learned policy: argmax of Q-values or of policy logits.
#[derive(Clone, Debug)]
pub struct GreedyPolicy<'a> {
    pub agent: &'a Agent,
}

impl Policy for GreedyPolicy<'_> {
    fn name(&self) -> String {
        format!("learned-{}", self.agent.kind().name())
    }

    fn act(&mut self, env: &Env, _rng: &mut ChaCha8Rng) -> Result<Vec<usize>, AgentError> {
        let graphs = env.observe();
        let refs: Vec<_> = graphs.iter().collect();
        Ok(self.agent.scores(&refs)?.iter().map(|s| argmax(s)).collect())
    }
}

/// Parses a baseline name into a boxed policy.
pub fn baseline(name: &str) -> Result<Box<dyn Policy + Send>, AgentError> {
    match name {
        "random" => Ok(Box::new(RandomPolicy)),
        "fixed-time" | "fixed_time" | "fixedtime" => Ok(Box::new(FixedTimePolicy::default())),
        "max-pressure" | "max_pressure" | "maxpressure" => Ok(Box::new(MaxPressurePolicy)),
        other => Err(AgentError::Config(format!("unknown baseline '{other}' (random | fixed-time | max-pressure)"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::fixtures::{corridor, four_way};
    use crate::network::LaneId;
    use crate::sim::{Simulation, Vehicle};
    use rand::SeedableRng;
    use std::sync::Arc;

    #[test]
    fn fixed_time_cycle() {
        let seq: Vec<usize> = (0..12).map(|k| fixed_time_action(k as f64 * 10.0, 4, 30.0)).collect();
        assert_eq!(seq, vec![0, 0, 0, 1, 1, 1, 2, 2, 2, 3, 3, 3]);
        assert_eq!(fixed_time_action(120.0, 4, 30.0), 0);
    }

    #[test]
    fn max_pressure_examples() {
        let sim = Simulation::new(Arc::new(RoadNetwork::try_from(four_way(100.0)).unwrap()));
        assert_eq!(max_pressure_action(sim.network(), sim.state(), IntersectionId(0)), 0);
        // Corridor intersection B: lane 3 is served only by its second phase.
        let mut sim = Simulation::new(Arc::new(RoadNetwork::try_from(corridor()).unwrap()));
        let net = Arc::clone(sim.network());
        for i in 0..6 {
            sim.place(Vehicle::new(i, vec![LaneId(3), LaneId(2)], 0.0), 5.0 + 8.0 * i as f64, 0.0).unwrap();
        }
        let v = IntersectionId(1);
        let mut best = (f64::NEG_INFINITY, 0);
        for (k, &p) in net.phases_at(v).iter().enumerate() {
            let s: f64 = net.phase(p).green_set().iter().map(|&m| pressure(&net, sim.state(), m)).sum();
            if s > best.0 {
                best = (s, k);
            }
        }
        let got = max_pressure_action(&net, sim.state(), v);
        assert_eq!(got, best.1);
        assert_eq!(got, 1);
    }

    #[test]
    fn baseline_names() {
        for n in ["random", "fixed-time", "max-pressure"] {
            assert_eq!(baseline(n).unwrap().name(), n);
        }
        assert!(baseline("oracle").is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(random_action(3, &mut rng) < 3);
    }
}
