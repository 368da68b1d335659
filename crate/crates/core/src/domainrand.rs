//! Domain randomization: random grid road networks and Beta-distributed demand.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, ContinuousCDF};
use thiserror::Error;

use crate::network::{
    Intersection, IntersectionId, Lane, LaneId, Movement, MovementId, NetworkDef, NetworkError, Phase, PhaseId,
    RoadNetwork, SignalState,
};
use crate::sim::{shortest_path, SimError, Vehicle, MIN_HEADWAY_M};

#[derive(Debug, Error)]
pub enum DomainError {
    #[error("invalid domain config: {0}")]
    Config(String),
    #[error("sampled ranges cannot produce a connected network: {0}")]
    Disconnected(NetworkError),
    #[error("no routable origin/destination pair in the network")]
    NoFeasiblePair,
    #[error("beta parameters out of range: alpha={0}, beta={1}")]
    BadBeta(f64, f64),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed scenario file: {0}")]
    Json(#[from] serde_json::Error),
}

/// The configuration distribution that scenarios are drawn from. Every range is
/// inclusive and sampled uniformly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DomainConfig {
    pub grid_rows: (u32, u32),
    pub grid_cols: (u32, u32),
    pub lane_length_range: (f64, f64),
    pub approaches_per_intersection: (u32, u32),
    pub lanes_per_approach: (u32, u32),
    pub vehicle_pool: (u32, u32),
    pub flow_count_range: (u32, u32),
    pub t_max: f64,
    pub speed_limit: f64,
    pub seed: u64,
}

impl Default for DomainConfig {
    fn default() -> Self {
        Self {
            grid_rows: (1, 1),
            grid_cols: (1, 1),
            lane_length_range: (50.0, 200.0),
            approaches_per_intersection: (3, 4),
            lanes_per_approach: (1, 2),
            vehicle_pool: (600, 1800),
            flow_count_range: (4, 12),
            t_max: 3600.0,
            speed_limit: 13.89,
            seed: 0,
        }
    }
}

impl DomainConfig {
    /// A single four-way intersection, one lane per approach.
    pub fn single_four_way() -> Self {
        Self {
            grid_rows: (1, 1),
            grid_cols: (1, 1),
            approaches_per_intersection: (4, 4),
            lanes_per_approach: (1, 1),
            ..Self::default()
        }
    }

    pub fn grid(rows: u32, cols: u32) -> Self {
        Self { grid_rows: (rows, rows), grid_cols: (cols, cols), ..Self::default() }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Checks the ranges; `ds` is the segment length the scenario will be encoded with.
    pub fn validate(&self, ds: f64) -> Result<(), DomainError> {
        let bad = |s: &str| Err(DomainError::Config(s.to_string()));
        let ranges = [
            ("grid_rows", self.grid_rows),
            ("grid_cols", self.grid_cols),
            ("approaches_per_intersection", self.approaches_per_intersection),
            ("lanes_per_approach", self.lanes_per_approach),
            ("vehicle_pool", self.vehicle_pool),
            ("flow_count_range", self.flow_count_range),
        ];
        for (name, (lo, hi)) in ranges {
            if lo > hi {
                return Err(DomainError::Config(format!("{name}: empty range {lo}..={hi}")));
            }
        }
        if self.grid_rows.0 == 0 || self.grid_cols.0 == 0 {
            return bad("grid needs at least one row and column");
        }
        if self.lanes_per_approach.0 == 0 || self.flow_count_range.0 == 0 {
            return bad("lanes_per_approach and flow_count_range must start at 1");
        }
        if self.approaches_per_intersection.0 < 2 || self.approaches_per_intersection.1 > 4 {
            return bad("approaches_per_intersection must lie within 2..=4");
        }
        let (lo, hi) = self.lane_length_range;
        if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
            return bad("lane_length_range is empty");
        }
        if lo < ds || ds < MIN_HEADWAY_M {
            return Err(DomainError::Config(format!(
                "need vehicle spacing {MIN_HEADWAY_M} <= ds {ds} <= shortest lane {lo}"
            )));
        }
        if !(self.t_max > 0.0) {
            return bad("t_max must be positive");
        }
        if !(self.speed_limit > 0.0) {
            return bad("speed_limit must be positive");
        }
        Ok(())
    }
}

fn uniform_u32(rng: &mut impl Rng, (lo, hi): (u32, u32)) -> u32 {
    rng.random_range(lo..=hi)
}

fn uniform_f64(rng: &mut impl Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

const N: usize = 0;
const E: usize = 1;
const S: usize = 2;
const W: usize = 3;

#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Turn {
    Right,
    Through,
    Left,
}

impl Turn {
    fn target(self, from: usize) -> usize {
        match self {
            Turn::Right => (from + 3) % 4,
            Turn::Through => (from + 2) % 4,
            Turn::Left => (from + 1) % 4,
        }
    }
}

/// Per intersection and approach: incoming and outgoing lanes, innermost first.
#[derive(Clone, Default)]
struct Approach {
    present: bool,
    incoming: Vec<LaneId>,
    outgoing: Vec<LaneId>,
}

/// Sample a rectangular grid network. Internal roads connect 4-neighbours with
/// lanes in both directions; boundary approaches are entry/exit lanes, some of
/// which are removed to produce three-way intersections.
pub fn sample_network(config: &DomainConfig, rng: &mut impl Rng) -> Result<RoadNetwork, DomainError> {
    let rows = uniform_u32(rng, config.grid_rows) as usize;
    let cols = uniform_u32(rng, config.grid_cols) as usize;
    let n_int = rows * cols;
    let at = |r: usize, c: usize| r * cols + c;
    let neighbour = |r: usize, c: usize, d: usize| -> Option<usize> {
        match d {
            N if r > 0 => Some(at(r - 1, c)),
            E if c + 1 < cols => Some(at(r, c + 1)),
            S if r + 1 < rows => Some(at(r + 1, c)),
            W if c > 0 => Some(at(r, c - 1)),
            _ => None,
        }
    };

    // Which approaches exist.
    let mut present = vec![[false; 4]; n_int];
    for r in 0..rows {
        for c in 0..cols {
            let v = at(r, c);
            let target = uniform_u32(rng, config.approaches_per_intersection) as usize;
            let mut boundary = Vec::new();
            for d in 0..4 {
                if neighbour(r, c, d).is_some() {
                    present[v][d] = true;
                } else {
                    boundary.push(d);
                }
            }
            let internal = 4 - boundary.len();
            let keep = target.saturating_sub(internal).min(boundary.len());
            // Drop boundary approaches uniformly at random until `keep` remain.
            while boundary.len() > keep {
                let i = rng.random_range(0..boundary.len());
                boundary.remove(i);
            }
            for d in boundary {
                present[v][d] = true;
            }
        }
    }

    let mut lanes: Vec<Lane> = Vec::new();
    let mut approaches = vec![vec![Approach::default(); 4]; n_int];
    let add_lanes = |lanes: &mut Vec<Lane>, count: usize, len: f64, up: Option<usize>, down: Option<usize>| {
        (0..count)
            .map(|_| {
                let id = LaneId::from(lanes.len());
                lanes.push(Lane {
                    id,
                    length_m: len,
                    speed_limit: config.speed_limit,
                    upstream: up.map(IntersectionId::from),
                    downstream: down.map(IntersectionId::from),
                });
                id
            })
            .collect::<Vec<_>>()
    };

    for r in 0..rows {
        for c in 0..cols {
            let v = at(r, c);
            for d in 0..4 {
                if !present[v][d] {
                    continue;
                }
                approaches[v][d].present = true;
                match neighbour(r, c, d) {
                    // Each internal road is created once, from its north/west end.
                    Some(u) if d == S || d == E => {
                        let len = uniform_f64(rng, config.lane_length_range);
                        let back = (d + 2) % 4;
                        let n_out = uniform_u32(rng, config.lanes_per_approach) as usize;
                        let n_in = uniform_u32(rng, config.lanes_per_approach) as usize;
                        let out = add_lanes(&mut lanes, n_out, len, Some(v), Some(u));
                        let inn = add_lanes(&mut lanes, n_in, len, Some(u), Some(v));
                        approaches[v][d].outgoing = out.clone();
                        approaches[u][back].incoming = out;
                        approaches[v][d].incoming = inn.clone();
                        approaches[u][back].outgoing = inn;
                    }
                    Some(_) => {}
                    None => {
                        let len = uniform_f64(rng, config.lane_length_range);
                        let n_in = uniform_u32(rng, config.lanes_per_approach) as usize;
                        let n_out = uniform_u32(rng, config.lanes_per_approach) as usize;
                        approaches[v][d].incoming = add_lanes(&mut lanes, n_in, len, None, Some(v));
                        approaches[v][d].outgoing = add_lanes(&mut lanes, n_out, len, Some(v), None);
                    }
                }
            }
        }
    }

    let mut intersections = Vec::with_capacity(n_int);
    let mut movements: Vec<Movement> = Vec::new();
    let mut phases: Vec<Phase> = Vec::new();
    for (v, aps) in approaches.iter().enumerate() {
        let owner = IntersectionId::from(v);
        intersections.push(Intersection {
            id: owner,
            incoming: aps.iter().flat_map(|a| a.incoming.iter().copied()).collect(),
            outgoing: aps.iter().flat_map(|a| a.outgoing.iter().copied()).collect(),
        });
        // (approach, turn) for each movement of this intersection
        let mut kinds: Vec<(usize, Turn)> = Vec::new();
        let first_movement = movements.len();
        for (a, ap) in aps.iter().enumerate() {
            if !ap.present || ap.incoming.is_empty() {
                continue;
            }
            let available: Vec<Turn> = [Turn::Right, Turn::Through, Turn::Left]
                .into_iter()
                .filter(|t| {
                    let tgt = &aps[t.target(a)];
                    tgt.present && !tgt.outgoing.is_empty()
                })
                .collect();
            let k = ap.incoming.len();
            let base = |j: usize, t: Turn| match t {
                Turn::Left => j == 0,
                Turn::Right => j + 1 == k,
                Turn::Through => true,
            };
            // Lanes whose usual turns are all unavailable serve every available turn.
            let serves = |j: usize, t: Turn| base(j, t) || !available.iter().any(|&u| base(j, u));
            // (in lane index, turn, out lane) pairs; every outgoing lane of a
            // target approach is reached by at least one incoming lane.
            let mut pairs: Vec<(usize, Turn, LaneId)> = Vec::new();
            for &t in &available {
                let lanes_for: Vec<usize> = (0..k).filter(|&j| serves(j, t)).collect();
                let outs = &aps[t.target(a)].outgoing;
                if lanes_for.len() >= outs.len() {
                    for (i, &j) in lanes_for.iter().enumerate() {
                        pairs.push((j, t, outs[i.min(outs.len() - 1)]));
                    }
                } else {
                    for (i, &o) in outs.iter().enumerate() {
                        pairs.push((lanes_for[i.min(lanes_for.len() - 1)], t, o));
                    }
                }
            }
            pairs.sort();
            for (j, t, out_lane) in pairs {
                movements.push(Movement {
                    id: MovementId::from(movements.len()),
                    in_lane: ap.incoming[j],
                    out_lane,
                    owner,
                });
                kinds.push((a, t));
            }
        }
        for signals in phase_plan(&kinds) {
            let signals: BTreeMap<MovementId, SignalState> = signals
                .into_iter()
                .enumerate()
                .map(|(i, s)| (MovementId::from(first_movement + i), s))
                .collect();
            phases.push(Phase { id: PhaseId::from(phases.len()), owner, signals });
        }
    }

    let def = NetworkDef { lanes, intersections, movements, phases };
    RoadNetwork::try_from(def).map_err(DomainError::Disconnected)
}

/// Four-phase scheme per axis pair: through with permitted right and left
/// turns, then protected left. An axis with a single approach gets one phase
/// serving all of its movements.
fn phase_plan(kinds: &[(usize, Turn)]) -> Vec<Vec<SignalState>> {
    use SignalState::*;
    let mut plan = Vec::new();
    for axis in [[N, S], [E, W]] {
        let served: Vec<usize> = axis.iter().copied().filter(|a| kinds.iter().any(|(k, _)| k == a)).collect();
        if served.is_empty() {
            continue;
        }
        if served.len() == 2 {
            let thru: Vec<SignalState> = kinds
                .iter()
                .map(|(a, t)| match (axis.contains(a), t) {
                    (true, Turn::Through) => Protected,
                    (true, Turn::Right | Turn::Left) => Permitted,
                    _ => Prohibited,
                })
                .collect();
            let left: Vec<SignalState> = kinds
                .iter()
                .map(|(a, t)| if axis.contains(a) && *t == Turn::Left { Protected } else { Prohibited })
                .collect();
            for p in [thru, left] {
                if p.iter().any(|s| s.is_green()) {
                    plan.push(p);
                }
            }
        } else {
            plan.push(
                kinds
                    .iter()
                    .map(|(a, t)| match (axis.contains(a), t) {
                        (true, Turn::Right) => Permitted,
                        (true, _) => Protected,
                        _ => Prohibited,
                    })
                    .collect(),
            );
        }
    }
    plan
}

/// A traffic flow: a route and the departure times of its vehicles.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowSpec {
    pub origin: LaneId,
    pub destination: LaneId,
    pub route: Vec<LaneId>,
    pub vehicle_count: u32,
    pub alpha: f64,
    pub beta: f64,
    pub departures: Vec<f64>,
}

/// `count` departure times `t_max * b` with `b ~ Beta(alpha, beta)`, sorted,
/// drawn by inverse-CDF from the given stream.
pub fn beta_departures(
    alpha: f64,
    beta: f64,
    count: usize,
    t_max: f64,
    rng: &mut impl Rng,
) -> Result<Vec<f64>, DomainError> {
    let dist = Beta::new(alpha, beta).map_err(|_| DomainError::BadBeta(alpha, beta))?;
    let mut out: Vec<f64> = (0..count)
        .map(|_| {
            let u: f64 = rng.random();
            (t_max * dist.inverse_cdf(u)).clamp(0.0, t_max)
        })
        .collect();
    out.sort_by(f64::total_cmp);
    Ok(out)
}

/// Split `total` vehicles equally over `flows`, remainder to the first flows.
pub fn split_pool(total: u32, flows: usize) -> Vec<u32> {
    let base = total / flows as u32;
    let rem = (total % flows as u32) as usize;
    (0..flows).map(|i| base + u32::from(i < rem)).collect()
}

pub fn sample_flows(
    network: &RoadNetwork,
    config: &DomainConfig,
    rng: &mut impl Rng,
) -> Result<Vec<FlowSpec>, DomainError> {
    let mut feasible = Vec::new();
    for o in network.source_lanes() {
        for d in network.sink_lanes() {
            if let Some(route) = shortest_path(network, o, d)? {
                feasible.push((o, d, route));
            }
        }
    }
    if feasible.is_empty() {
        return Err(DomainError::NoFeasiblePair);
    }
    let n_flows = uniform_u32(rng, config.flow_count_range) as usize;
    let pool = uniform_u32(rng, config.vehicle_pool);
    let counts = split_pool(pool, n_flows);
    let mut flows = Vec::with_capacity(n_flows);
    for count in counts {
        let (o, d, route) = feasible[rng.random_range(0..feasible.len())].clone();
        let alpha = rng.random_range(1.0..=10.0);
        let beta = rng.random_range(1.0..=10.0);
        // Each flow draws its departures from its own stream.
        let mut stream = ChaCha8Rng::seed_from_u64(rng.next_u64());
        let departures = beta_departures(alpha, beta, count as usize, config.t_max, &mut stream)?;
        flows.push(FlowSpec { origin: o, destination: d, route, vehicle_count: count, alpha, beta, departures });
    }
    Ok(flows)
}

/// Vehicles for every scheduled departure, ids assigned in flow order.
pub fn flows_to_vehicles(flows: &[FlowSpec]) -> Vec<Vehicle> {
    let mut id = 0u32;
    let mut out = Vec::new();
    for f in flows {
        for &t in &f.departures {
            out.push(Vehicle::new(id, f.route.clone(), t));
            id += 1;
        }
    }
    out
}

/// A generated scenario: static network plus demand, with the config that made it.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub config: DomainConfig,
    pub network: Arc<RoadNetwork>,
    pub flows: Vec<FlowSpec>,
}

impl Scenario {
    pub fn generate(config: &DomainConfig) -> Result<Self, DomainError> {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let network = sample_network(config, &mut rng)?;
        let flows = sample_flows(&network, config, &mut rng)?;
        Ok(Self { config: config.clone(), network: Arc::new(network), flows })
    }

    pub fn vehicle_count(&self) -> u32 {
        self.flows.iter().map(|f| f.vehicle_count).sum()
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<(), DomainError> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        self.network.save(dir.join("network.json"))?;
        std::fs::write(dir.join("flows.json"), serde_json::to_string_pretty(&self.flows)?)?;
        std::fs::write(dir.join("config.json"), serde_json::to_string_pretty(&self.config)?)?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self, DomainError> {
        let dir = dir.as_ref();
        let network = RoadNetwork::load(dir.join("network.json"))?;
        let flows: Vec<FlowSpec> = serde_json::from_str(&std::fs::read_to_string(dir.join("flows.json"))?)?;
        let config: DomainConfig = serde_json::from_str(&std::fs::read_to_string(dir.join("config.json"))?)?;
        Ok(Self { config, network: Arc::new(network), flows })
    }
}
