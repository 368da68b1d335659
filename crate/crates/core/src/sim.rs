//! Discrete-time microscopic traffic simulator.
//!
//! Vehicles are points on one-dimensional lanes. Each tick every lane is swept
//! front to back with a deterministic safe-speed car-following rule; the front
//! vehicle may cross the stop line when its next movement shows green and the
//! next lane has room at its entry.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::{IntersectionId, LaneId, MovementId, NetworkError, PhaseId, RoadNetwork};

/// Front-to-front jam spacing between consecutive vehicles on a lane.
pub const MIN_HEADWAY_M: f64 = 7.5;
pub const MAX_ACCEL: f64 = 3.0;
pub const MAX_DECEL: f64 = 3.0;
/// A moving front vehicle at or below this position has crossed the stop line.
pub const CROSSING_THRESHOLD_M: f64 = 1.0;
pub const STANDING_SPEED: f64 = 0.1;
pub const YELLOW_S: f64 = 3.0;
pub const ALL_RED_S: f64 = 2.0;
pub const ACTION_PERSISTENCE_S: f64 = 10.0;

const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("time step must be positive, got {0}")]
    BadTimeStep(f64),
    #[error("phase {phase} does not belong to intersection {intersection}")]
    ForeignPhase { phase: PhaseId, intersection: IntersectionId },
    #[error("action at intersection {intersection} after {elapsed:.3} s; {ACTION_PERSISTENCE_S} s required")]
    PrematureAction { intersection: IntersectionId, elapsed: f64 },
    #[error("vehicle {vehicle} has an invalid route: {reason}")]
    BadRoute { vehicle: u32, reason: String },
    #[error(transparent)]
    Network(#[from] NetworkError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Vehicle {
    pub id: u32,
    pub route: Vec<LaneId>,
    pub route_index: usize,
    /// Distance to the downstream intersection centre.
    pub pos_m: f64,
    pub speed: f64,
    pub depart_time: f64,
    pub arrive_time: Option<f64>,
    /// Accumulated time spent below the standing threshold.
    pub waiting_s: f64,
}

impl Vehicle {
    pub fn new(id: u32, route: Vec<LaneId>, depart_time: f64) -> Self {
        Self { id, route, route_index: 0, pos_m: 0.0, speed: 0.0, depart_time, arrive_time: None, waiting_s: 0.0 }
    }

    pub fn lane(&self) -> LaneId {
        self.route[self.route_index]
    }

    pub fn is_standing(&self) -> bool {
        self.speed < STANDING_SPEED
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Interval {
    Green,
    Yellow,
    AllRed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignalController {
    pub intersection: IntersectionId,
    pub active_phase: PhaseId,
    pub interval: Interval,
    pub interval_elapsed: f64,
    pub pending_phase: Option<PhaseId>,
    /// Time since the last phase change was requested.
    pub since_action: f64,
}

impl SignalController {
    pub fn new(intersection: IntersectionId, initial: PhaseId) -> Self {
        Self {
            intersection,
            active_phase: initial,
            interval: Interval::Green,
            interval_elapsed: 0.0,
            pending_phase: None,
            since_action: ACTION_PERSISTENCE_S,
        }
    }

    /// Request `phase`. Re-selecting the active phase leaves the controller untouched;
    /// any other phase starts yellow, then all-red, then green on the new phase.
    pub fn apply_action(&mut self, phase: PhaseId, network: &RoadNetwork) -> Result<(), SimError> {
        let owner = network.phases().get(phase.index()).map(|p| p.owner);
        if owner != Some(self.intersection) {
            return Err(SimError::ForeignPhase { phase, intersection: self.intersection });
        }
        if self.since_action + TIME_EPS < ACTION_PERSISTENCE_S {
            return Err(SimError::PrematureAction { intersection: self.intersection, elapsed: self.since_action });
        }
        if phase == self.active_phase && self.pending_phase.is_none() {
            return Ok(());
        }
        self.interval = Interval::Yellow;
        self.interval_elapsed = 0.0;
        self.pending_phase = Some(phase);
        self.since_action = 0.0;
        Ok(())
    }

    /// Whether vehicles of `movement` may pass the stop line right now.
    pub fn allows(&self, movement: MovementId, network: &RoadNetwork) -> bool {
        let active = network.phase(self.active_phase).signal(movement).is_green();
        match (self.interval, self.pending_phase) {
            (Interval::Green, _) => active,
            (_, Some(next)) => active && network.phase(next).signal(movement).is_green(),
            (_, None) => false,
        }
    }

    /// The phase the controller is showing or transitioning to.
    pub fn target_phase(&self) -> PhaseId {
        self.pending_phase.unwrap_or(self.active_phase)
    }

    fn advance(&mut self, dt: f64) {
        self.since_action += dt;
        self.interval_elapsed += dt;
        loop {
            match self.interval {
                Interval::Yellow if self.interval_elapsed + TIME_EPS >= YELLOW_S => {
                    self.interval = Interval::AllRed;
                    self.interval_elapsed -= YELLOW_S;
                }
                Interval::AllRed if self.interval_elapsed + TIME_EPS >= ALL_RED_S => {
                    self.interval = Interval::Green;
                    self.interval_elapsed -= ALL_RED_S;
                    if let Some(p) = self.pending_phase.take() {
                        self.active_phase = p;
                    }
                }
                _ => break,
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Arrival {
    pub vehicle: u32,
    pub depart_time: f64,
    pub arrive_time: f64,
    pub waiting_s: f64,
}

#[derive(Clone, Debug)]
pub struct SimState {
    pub clock: f64,
    /// Vehicles per lane, front (closest to the stop line) first.
    pub lanes: Vec<VecDeque<Vehicle>>,
    pub controllers: Vec<SignalController>,
    /// Not-yet-inserted vehicles ordered by scheduled departure.
    pub pending: VecDeque<Vehicle>,
    pub inserted: u64,
    pub arrivals: Vec<Arrival>,
    /// Cumulative vehicles that crossed the stop line at the end of each lane.
    pub lane_discharged: Vec<u64>,
    /// Cumulative vehicle-seconds spent standing on each lane.
    pub lane_waiting_s: Vec<f64>,
}

impl SimState {
    pub fn vehicles(&self) -> impl Iterator<Item = &Vehicle> {
        self.lanes.iter().flat_map(|q| q.iter())
    }

    pub fn on_network(&self) -> usize {
        self.lanes.iter().map(VecDeque::len).sum()
    }

    /// Deterministic digest of the dynamic state.
    pub fn fingerprint(&self) -> u64 {
        let mut h = std::collections::hash_map::DefaultHasher::new();
        self.clock.to_bits().hash(&mut h);
        for q in &self.lanes {
            q.len().hash(&mut h);
            for v in q {
                v.id.hash(&mut h);
                v.pos_m.to_bits().hash(&mut h);
                v.speed.to_bits().hash(&mut h);
            }
        }
        for c in &self.controllers {
            c.active_phase.hash(&mut h);
            c.pending_phase.hash(&mut h);
            c.interval_elapsed.to_bits().hash(&mut h);
        }
        self.pending.len().hash(&mut h);
        self.arrivals.len().hash(&mut h);
        h.finish()
    }
}

#[derive(Copy, Clone, Debug, PartialEq)]
pub struct Crossing {
    pub vehicle: u32,
    pub movement: MovementId,
}

#[derive(Clone, Debug, Default)]
pub struct StepReport {
    pub crossings: Vec<Crossing>,
    pub inserted: usize,
    pub arrived: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub time_s: f64,
    pub vehicle_id: u32,
    pub lane_id: LaneId,
    pub pos_m: f64,
    pub speed: f64,
}

/// Highest speed from which the vehicle can stop within `dist` meters braking
/// at [`MAX_DECEL`] in steps of `dt`.
fn stopping_speed(dist: f64, dt: f64) -> f64 {
    if dist.is_infinite() {
        return f64::INFINITY;
    }
    let b = MAX_DECEL * dt;
    let n = ((1.0 + 8.0 * dist / (b * dt)).sqrt() - 1.0) / 2.0;
    n * b
}

#[derive(Clone, Debug)]
pub struct Simulation {
    network: Arc<RoadNetwork>,
    state: SimState,
    record: bool,
    trajectory: Vec<TrajectoryRow>,
}

impl Simulation {
    /// A simulation with every controller green on its intersection's first phase.
    pub fn new(network: Arc<RoadNetwork>) -> Self {
        let controllers = network
            .intersections()
            .iter()
            .map(|x| SignalController::new(x.id, network.phases_at(x.id)[0]))
            .collect();
        let n = network.lanes().len();
        let state = SimState {
            clock: 0.0,
            lanes: vec![VecDeque::new(); n],
            controllers,
            pending: VecDeque::new(),
            inserted: 0,
            arrivals: Vec::new(),
            lane_discharged: vec![0; n],
            lane_waiting_s: vec![0.0; n],
        };
        Self { network, state, record: false, trajectory: Vec::new() }
    }

    pub fn network(&self) -> &Arc<RoadNetwork> {
        &self.network
    }

    pub fn state(&self) -> &SimState {
        &self.state
    }

    pub fn state_mut(&mut self) -> &mut SimState {
        &mut self.state
    }

    pub fn record_trajectories(&mut self, on: bool) {
        self.record = on;
    }

    pub fn trajectory(&self) -> &[TrajectoryRow] {
        &self.trajectory
    }

    /// Queue vehicles for insertion. Routes must follow movements and departures
    /// are kept sorted by (time, id).
    pub fn schedule(&mut self, vehicles: impl IntoIterator<Item = Vehicle>) -> Result<(), SimError> {
        for v in vehicles {
            self.check_route(&v)?;
            self.state.pending.push_back(v);
        }
        self.state
            .pending
            .make_contiguous()
            .sort_by(|a, b| a.depart_time.total_cmp(&b.depart_time).then(a.id.cmp(&b.id)));
        Ok(())
    }

    fn check_route(&self, v: &Vehicle) -> Result<(), SimError> {
        let bad = |reason: String| SimError::BadRoute { vehicle: v.id, reason };
        if v.route.is_empty() {
            return Err(bad("empty route".into()));
        }
        for l in &v.route {
            if l.index() >= self.network.lanes().len() {
                return Err(bad(format!("unknown lane {l}")));
            }
        }
        for w in v.route.windows(2) {
            if self.network.movement_between(w[0], w[1]).is_none() {
                return Err(bad(format!("no movement {} -> {}", w[0], w[1])));
            }
        }
        Ok(())
    }

    /// Place a vehicle directly on a lane; used to build fixtures.
    pub fn place(&mut self, mut v: Vehicle, pos_m: f64, speed: f64) -> Result<(), SimError> {
        self.check_route(&v)?;
        v.pos_m = pos_m;
        v.speed = speed;
        let q = &mut self.state.lanes[v.lane().index()];
        let at = q.iter().position(|o| o.pos_m > pos_m).unwrap_or(q.len());
        q.insert(at, v);
        self.state.inserted += 1;
        Ok(())
    }

    pub fn apply_action(&mut self, v: IntersectionId, phase: PhaseId) -> Result<(), SimError> {
        let net = Arc::clone(&self.network);
        self.state.controllers[v.index()].apply_action(phase, &net)
    }

    /// Advance the simulation by `dt` seconds.
    pub fn step(&mut self, dt: f64) -> Result<StepReport, SimError> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(SimError::BadTimeStep(dt));
        }
        let net = Arc::clone(&self.network);
        let st = &mut self.state;
        let t_end = st.clock + dt;
        let mut report = StepReport::default();

        let n = st.lanes.len();
        let mut entry_free: Vec<bool> = (0..n)
            .map(|l| {
                let len = net.lanes()[l].length_m;
                st.lanes[l].back().map_or(true, |v| v.pos_m <= len - MIN_HEADWAY_M + TIME_EPS)
            })
            .collect();

        // (from lane, to lane or exit, movement)
        let mut crossing: Vec<(usize, Option<LaneId>, Option<MovementId>)> = Vec::new();

        for l in 0..n {
            let lane = &net.lanes()[l];
            let mut leader_pos: Option<f64> = None;
            for idx in 0..st.lanes[l].len() {
                let veh = &st.lanes[l][idx];
                let mut room = match leader_pos {
                    Some(lp) => (veh.pos_m - (lp + MIN_HEADWAY_M)).max(0.0),
                    None => f64::INFINITY,
                };
                let mut target: Option<(Option<LaneId>, Option<MovementId>)> = None;
                if idx == 0 {
                    if veh.route_index + 1 == veh.route.len() {
                        target = Some((None, None));
                    } else {
                        let next = veh.route[veh.route_index + 1];
                        let m = net
                            .movement_between(LaneId::from(l), next)
                            .expect("routes are checked on scheduling");
                        let ctrl = &st.controllers[lane.downstream.expect("lane with movement has downstream").index()];
                        if ctrl.allows(m, &net) && entry_free[next.index()] {
                            target = Some((Some(next), Some(m)));
                        }
                    }
                }
                if target.is_none() {
                    room = room.min((veh.pos_m - CROSSING_THRESHOLD_M).max(0.0));
                }
                let desired = lane.speed_limit.min(stopping_speed(room, dt));
                let mut v = desired.min(veh.speed + MAX_ACCEL * dt);
                v = v.max(veh.speed - MAX_DECEL * dt);
                v = v.min(room / dt).min(lane.speed_limit).max(0.0);
                let new_pos = veh.pos_m - v * dt;

                let veh = &mut st.lanes[l][idx];
                veh.speed = v;
                match target {
                    Some((to, m)) if v > 0.0 && new_pos <= CROSSING_THRESHOLD_M => {
                        crossing.push((l, to, m));
                        if let Some(to) = to {
                            entry_free[to.index()] = false;
                        }
                        leader_pos = Some(new_pos);
                    }
                    _ => {
                        veh.pos_m = new_pos;
                        leader_pos = Some(new_pos);
                    }
                }
            }
        }

        for (l, to, m) in crossing {
            let mut veh = st.lanes[l].pop_front().expect("crossing vehicle is at the front");
            st.lane_discharged[l] += 1;
            match (to, m) {
                (Some(to), Some(m)) => {
                    report.crossings.push(Crossing { vehicle: veh.id, movement: m });
                    let next = net.lane(to);
                    veh.route_index += 1;
                    veh.pos_m = next.length_m;
                    veh.speed = veh.speed.min(next.speed_limit);
                    st.lanes[to.index()].push_back(veh);
                }
                _ => {
                    veh.arrive_time = Some(t_end);
                    st.arrivals.push(Arrival {
                        vehicle: veh.id,
                        depart_time: veh.depart_time,
                        arrive_time: t_end,
                        waiting_s: veh.waiting_s,
                    });
                    report.arrived += 1;
                }
            }
        }

        for (l, q) in st.lanes.iter_mut().enumerate() {
            for v in q.iter_mut() {
                if v.is_standing() {
                    v.waiting_s += dt;
                    st.lane_waiting_s[l] += dt;
                }
            }
        }

        // Insert due departures whose entry lane has room; blocked ones keep waiting.
        let mut i = 0;
        while i < st.pending.len() {
            if st.pending[i].depart_time >= t_end {
                break;
            }
            let first = st.pending[i].route[0];
            let lane = net.lane(first);
            let q = &st.lanes[first.index()];
            let gap = q.back().map_or(f64::INFINITY, |r| lane.length_m - (r.pos_m + MIN_HEADWAY_M));
            if gap >= -TIME_EPS {
                let mut v = st.pending.remove(i).expect("index in range");
                v.pos_m = lane.length_m;
                v.speed = lane.speed_limit.min(stopping_speed(gap.max(0.0), dt)).min(gap.max(0.0) / dt);
                st.lanes[first.index()].push_back(v);
                st.inserted += 1;
                report.inserted += 1;
            } else {
                i += 1;
            }
        }

        for c in &mut st.controllers {
            c.advance(dt);
        }
        st.clock = t_end;

        if self.record {
            for (l, q) in st.lanes.iter().enumerate() {
                for v in q {
                    self.trajectory.push(TrajectoryRow {
                        time_s: t_end,
                        vehicle_id: v.id,
                        lane_id: LaneId::from(l),
                        pos_m: v.pos_m,
                        speed: v.speed,
                    });
                }
            }
        }
        Ok(report)
    }

    pub fn run(&mut self, seconds: f64, dt: f64) -> Result<(), SimError> {
        let end = self.state.clock + seconds;
        while self.state.clock + TIME_EPS < end {
            self.step(dt)?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StandingCounts {
    pub total: usize,
    pub per_lane: Vec<usize>,
}

pub fn standing_vehicle_count(state: &SimState) -> StandingCounts {
    let per_lane: Vec<usize> = state.lanes.iter().map(|q| q.iter().filter(|v| v.is_standing()).count()).collect();
    StandingCounts { total: per_lane.iter().sum(), per_lane }
}

#[derive(Copy, Clone, PartialEq)]
struct Frontier {
    cost: f64,
    lane: LaneId,
}

impl Eq for Frontier {}

impl Ord for Frontier {
    fn cmp(&self, other: &Self) -> Ordering {
        // Min-heap on (cost, lane id).
        other.cost.total_cmp(&self.cost).then_with(|| other.lane.cmp(&self.lane))
    }
}

impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Minimum total-length lane sequence from `origin` to `destination` following
/// movements, or `None` when unreachable. Path cost is the sum of lane lengths.
pub fn shortest_path(
    network: &RoadNetwork,
    origin: LaneId,
    destination: LaneId,
) -> Result<Option<Vec<LaneId>>, SimError> {
    let n = network.lanes().len();
    for l in [origin, destination] {
        if l.index() >= n {
            return Err(NetworkError::UnknownLane(l).into());
        }
    }
    let mut dist = vec![f64::INFINITY; n];
    let mut prev: Vec<Option<LaneId>> = vec![None; n];
    let mut heap = BinaryHeap::new();
    dist[origin.index()] = network.lane(origin).length_m;
    heap.push(Frontier { cost: dist[origin.index()], lane: origin });
    while let Some(Frontier { cost, lane }) = heap.pop() {
        if cost > dist[lane.index()] {
            continue;
        }
        if lane == destination {
            break;
        }
        for m in network.movements_out_of(lane)? {
            let next = network.movement(*m).out_lane;
            let c = cost + network.lane(next).length_m;
            if c < dist[next.index()] {
                dist[next.index()] = c;
                prev[next.index()] = Some(lane);
                heap.push(Frontier { cost: c, lane: next });
            }
        }
    }
    if dist[destination.index()].is_infinite() {
        return Ok(None);
    }
    let mut path = vec![destination];
    let mut cur = destination;
    while let Some(p) = prev[cur.index()] {
        path.push(p);
        cur = p;
    }
    path.reverse();
    Ok(Some(path))
}

/// Sum of lane lengths along a route.
pub fn route_length(network: &RoadNetwork, route: &[LaneId]) -> f64 {
    route.iter().map(|l| network.lane(*l).length_m).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::fixtures::{corridor, four_way};

    fn four_way_sim(len: f64) -> Simulation {
        Simulation::new(Arc::new(RoadNetwork::try_from(four_way(len)).unwrap()))
    }

    // North approach (lane 0) through to south exit (lane 6) is movement 1; phase 0 serves it.
    fn through_ns(id: u32) -> Vehicle {
        Vehicle::new(id, vec![LaneId(0), LaneId(6)], 0.0)
    }

    #[test]
    fn empty_network_only_advances_clock() {
        let mut sim = four_way_sim(100.0);
        let before = sim.state().clone();
        sim.step(2.5).unwrap();
        assert_eq!(sim.state().clock, 2.5);
        assert_eq!(sim.state().on_network(), 0);
        assert_eq!(sim.state().controllers, before.controllers.iter().cloned().map(|mut c| {
            c.since_action += 2.5;
            c.interval_elapsed += 2.5;
            c
        }).collect::<Vec<_>>());
    }

    #[test]
    fn bad_time_step_is_rejected() {
        let mut sim = four_way_sim(100.0);
        assert!(matches!(sim.step(0.0), Err(SimError::BadTimeStep(_))));
        assert!(matches!(sim.step(-1.0), Err(SimError::BadTimeStep(_))));
    }

    #[test]
    fn free_vehicle_respects_kinematic_bound() {
        let mut sim = four_way_sim(100.0);
        sim.place(through_ns(0), 80.0, 10.0).unwrap();
        sim.step(1.0).unwrap();
        let v = &sim.state().lanes[0][0];
        assert!(80.0 - v.pos_m <= 13.89 + 1e-12);
        assert!(v.pos_m < 80.0);
    }

    #[test]
    fn vehicle_stops_at_red_line() {
        let mut sim = four_way_sim(100.0);
        // East approach (lane 1) through movement is red in phase 0.
        let v = Vehicle::new(0, vec![LaneId(1), LaneId(7)], 0.0);
        sim.place(v, CROSSING_THRESHOLD_M, 0.0).unwrap();
        for _ in 0..5 {
            let r = sim.step(1.0).unwrap();
            assert!(r.crossings.is_empty());
            let v = &sim.state().lanes[1][0];
            assert_eq!(v.speed, 0.0);
            assert_eq!(v.pos_m, CROSSING_THRESHOLD_M);
        }
    }

    #[test]
    fn approaching_vehicle_never_runs_red() {
        let mut sim = four_way_sim(200.0);
        let v = Vehicle::new(0, vec![LaneId(1), LaneId(7)], 0.0);
        sim.place(v, 200.0, 13.89).unwrap();
        for _ in 0..60 {
            assert!(sim.step(1.0).unwrap().crossings.is_empty());
        }
        let v = &sim.state().lanes[1][0];
        assert!(v.pos_m >= CROSSING_THRESHOLD_M);
        assert!(v.is_standing());
    }

    #[test]
    fn green_vehicle_crosses_and_arrives() {
        let mut sim = four_way_sim(50.0);
        sim.place(through_ns(3), 20.0, 10.0).unwrap();
        let mut crossed = false;
        for _ in 0..30 {
            let r = sim.step(1.0).unwrap();
            if !r.crossings.is_empty() {
                assert_eq!(r.crossings[0], Crossing { vehicle: 3, movement: MovementId(1) });
                crossed = true;
            }
        }
        assert!(crossed);
        assert_eq!(sim.state().arrivals.len(), 1);
        assert_eq!(sim.state().on_network(), 0);
        assert!(sim.state().arrivals[0].arrive_time > 0.0);
    }

    #[test]
    fn action_timing_yellow_then_all_red() {
        let net = Arc::new(RoadNetwork::try_from(four_way(100.0)).unwrap());
        let mut sim = Simulation::new(net);
        sim.step(1.0).unwrap();
        sim.apply_action(IntersectionId(0), PhaseId(2)).unwrap();
        let t0 = sim.state().clock;
        let mut green_at = None;
        for _ in 0..8 {
            sim.step(1.0).unwrap();
            let c = &sim.state().controllers[0];
            if green_at.is_none() && c.interval == Interval::Green {
                assert_eq!(c.active_phase, PhaseId(2));
                green_at = Some(sim.state().clock);
            }
        }
        assert_eq!(green_at, Some(t0 + YELLOW_S + ALL_RED_S));
    }

    #[test]
    fn same_phase_action_is_identity() {
        let net = RoadNetwork::try_from(four_way(100.0)).unwrap();
        let mut c = SignalController::new(IntersectionId(0), PhaseId(1));
        let before = c.clone();
        c.apply_action(PhaseId(1), &net).unwrap();
        assert_eq!(c, before);
    }

    #[test]
    fn persistence_rule_boundaries() {
        let net = RoadNetwork::try_from(four_way(100.0)).unwrap();
        let mut c = SignalController::new(IntersectionId(0), PhaseId(0));
        c.apply_action(PhaseId(1), &net).unwrap();
        for _ in 0..9 {
            c.advance(1.0);
        }
        assert!(matches!(c.apply_action(PhaseId(2), &net), Err(SimError::PrematureAction { .. })));
        c.advance(1.0);
        c.apply_action(PhaseId(2), &net).unwrap();
        assert_eq!(c.pending_phase, Some(PhaseId(2)));
    }

    #[test]
    fn foreign_phase_is_rejected() {
        let net = RoadNetwork::try_from(corridor()).unwrap();
        let mut c = SignalController::new(IntersectionId(0), PhaseId(0));
        assert!(matches!(c.apply_action(PhaseId(1), &net), Err(SimError::ForeignPhase { .. })));
    }

    #[test]
    fn transition_keeps_only_shared_green() {
        let net = RoadNetwork::try_from(four_way(100.0)).unwrap();
        let mut c = SignalController::new(IntersectionId(0), PhaseId(0));
        assert!(c.allows(MovementId(1), &net));
        c.apply_action(PhaseId(2), &net).unwrap();
        assert_eq!(c.interval, Interval::Yellow);
        assert!(!c.allows(MovementId(1), &net));
        assert!(!c.allows(MovementId(4), &net));
    }

    #[test]
    fn queue_keeps_headway_and_discharges() {
        let mut sim = four_way_sim(150.0);
        let vehicles: Vec<_> = (0..12).map(|i| Vehicle::new(i, vec![LaneId(1), LaneId(7)], i as f64 * 0.5)).collect();
        sim.schedule(vehicles).unwrap();
        for _ in 0..40 {
            sim.step(1.0).unwrap();
            check_headway(&sim);
        }
        let standing = standing_vehicle_count(sim.state());
        assert!(standing.total >= 10, "{standing:?}");
        sim.apply_action(IntersectionId(0), PhaseId(2)).unwrap();
        for _ in 0..120 {
            sim.step(1.0).unwrap();
            check_headway(&sim);
        }
        assert_eq!(sim.state().arrivals.len(), 12);
    }

    fn check_headway(sim: &Simulation) {
        for q in &sim.state().lanes {
            for w in q.iter().collect::<Vec<_>>().windows(2) {
                assert!(w[1].pos_m - w[0].pos_m >= MIN_HEADWAY_M - 1e-9, "{} {}", w[0].pos_m, w[1].pos_m);
            }
        }
    }

    #[test]
    fn standing_count_mixed() {
        let mut sim = four_way_sim(200.0);
        for (i, (pos, speed)) in [(1.0, 0.0), (8.5, 0.0), (16.0, 0.05), (100.0, 5.0), (150.0, 12.0)].into_iter().enumerate() {
            sim.place(Vehicle::new(i as u32, vec![LaneId(1), LaneId(7)], 0.0), pos, speed).unwrap();
        }
        let c = standing_vehicle_count(sim.state());
        assert_eq!(c.total, 3);
        assert_eq!(c.per_lane[1], 3);
    }

    #[test]
    fn standing_count_extremes() {
        let mut sim = four_way_sim(200.0);
        for i in 0..3 {
            sim.place(Vehicle::new(i, vec![LaneId(1), LaneId(7)], 0.0), 10.0 + 20.0 * i as f64, 13.0).unwrap();
        }
        assert_eq!(standing_vehicle_count(sim.state()).total, 0);
        for q in &mut sim.state_mut().lanes {
            for v in q {
                v.speed = 0.0;
            }
        }
        assert_eq!(standing_vehicle_count(sim.state()).total, 3);
    }

    #[test]
    fn route_through_missing_movement_is_rejected() {
        let mut sim = four_way_sim(100.0);
        let v = Vehicle::new(0, vec![LaneId(0), LaneId(4)], 0.0);
        assert!(matches!(sim.schedule([v]), Err(SimError::BadRoute { .. })));
    }

    #[test]
    fn shortest_path_trivial_cases() {
        let net = RoadNetwork::try_from(corridor()).unwrap();
        assert_eq!(shortest_path(&net, LaneId(3), LaneId(3)).unwrap(), Some(vec![LaneId(3)]));
        assert_eq!(shortest_path(&net, LaneId(0), LaneId(2)).unwrap(), Some(vec![LaneId(0), LaneId(1), LaneId(2)]));
        assert_eq!(shortest_path(&net, LaneId(3), LaneId(4)).unwrap(), None);
        assert!(shortest_path(&net, LaneId(0), LaneId(42)).is_err());
    }

    #[test]
    fn conservation_under_random_demand() {
        let mut sim = four_way_sim(120.0);
        let routes = [[0u32, 6], [1, 7], [2, 4], [3, 5], [0, 5], [2, 7]];
        let vehicles: Vec<_> = (0..80)
            .map(|i| {
                let r = routes[i % routes.len()];
                Vehicle::new(i as u32, vec![LaneId(r[0]), LaneId(r[1])], (i as f64 * 3.7) % 300.0)
            })
            .collect();
        sim.schedule(vehicles).unwrap();
        for k in 0..600 {
            if k % 30 == 0 && k > 0 {
                sim.apply_action(IntersectionId(0), PhaseId(((k / 30) % 4) as u32)).unwrap();
            }
            sim.step(1.0).unwrap();
            let st = sim.state();
            assert_eq!(st.inserted as usize, st.on_network() + st.arrivals.len());
            check_headway(&sim);
        }
    }

    #[test]
    fn identical_runs_have_identical_fingerprints() {
        let run = || {
            let mut sim = four_way_sim(90.0);
            sim.schedule((0..30).map(|i| Vehicle::new(i, vec![LaneId(i % 4), LaneId(4 + (i + 2) % 4)], i as f64))).unwrap();
            (0..200).map(|_| {
                sim.step(1.0).unwrap();
                sim.state().fingerprint()
            }).collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }
}
