//! Static road-network model: lanes, intersections, movements and phases.
//!
//! Lanes are one-dimensional coordinate frames whose origin sits at the centre
//! of the downstream intersection, so a position is the remaining distance to
//! the stop line. Ids are dense: an entity's id equals its index in the list
//! that owns it.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

macro_rules! id_type {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub u32);

        impl $name {
            #[inline]
            pub fn index(self) -> usize {
                self.0 as usize
            }
        }

        impl From<usize> for $name {
            fn from(i: usize) -> Self {
                Self(i as u32)
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}", self.0)
            }
        }
    };
}

id_type!(LaneId);
id_type!(IntersectionId);
id_type!(MovementId);
id_type!(PhaseId);

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("network failed validation: {}", format_violations(.0))]
    Invalid(Vec<Violation>),
    #[error("unknown lane {0}")]
    UnknownLane(LaneId),
    #[error("unknown intersection {0}")]
    UnknownIntersection(IntersectionId),
    #[error("phases {a} and {b} belong to different intersections")]
    OwnerMismatch { a: PhaseId, b: PhaseId },
    #[error("signal code {0} is not one of -1, 0, 1")]
    BadSignalCode(i64),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed network file: {0}")]
    Json(#[from] serde_json::Error),
}

fn format_violations(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

/// Right-of-way of a movement during a phase.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
pub enum SignalState {
    Prohibited,
    Permitted,
    Protected,
}

impl SignalState {
    /// Numeric edge feature: Prohibited −1, Permitted 0, Protected +1.
    pub fn code(self) -> i8 {
        match self {
            SignalState::Prohibited => -1,
            SignalState::Permitted => 0,
            SignalState::Protected => 1,
        }
    }

    pub fn from_code(code: i64) -> Result<Self, NetworkError> {
        match code {
            -1 => Ok(SignalState::Prohibited),
            0 => Ok(SignalState::Permitted),
            1 => Ok(SignalState::Protected),
            other => Err(NetworkError::BadSignalCode(other)),
        }
    }

    pub fn is_green(self) -> bool {
        !matches!(self, SignalState::Prohibited)
    }
}

impl Serialize for SignalState {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_i8(self.code())
    }
}

impl<'de> Deserialize<'de> for SignalState {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let code = i64::deserialize(d)?;
        SignalState::from_code(code).map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lane {
    pub id: LaneId,
    pub length_m: f64,
    pub speed_limit: f64,
    /// Intersection the lane leaves from; `None` for network entry lanes.
    pub upstream: Option<IntersectionId>,
    /// Intersection the lane runs into; `None` for network exit lanes.
    pub downstream: Option<IntersectionId>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Intersection {
    pub id: IntersectionId,
    /// Incoming lanes, clockwise from north.
    pub incoming: Vec<LaneId>,
    /// Outgoing lanes, clockwise from north.
    pub outgoing: Vec<LaneId>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Movement {
    pub id: MovementId,
    pub in_lane: LaneId,
    pub out_lane: LaneId,
    pub owner: IntersectionId,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Phase {
    pub id: PhaseId,
    pub owner: IntersectionId,
    pub signals: BTreeMap<MovementId, SignalState>,
}

impl Phase {
    pub fn signal(&self, m: MovementId) -> SignalState {
        self.signals.get(&m).copied().unwrap_or(SignalState::Prohibited)
    }

    /// Movements showing green (Permitted or Protected).
    pub fn green_set(&self) -> BTreeSet<MovementId> {
        self.signals
            .iter()
            .filter(|(_, s)| s.is_green())
            .map(|(m, _)| *m)
            .collect()
    }
}

/// Jaccard coefficient of the green sets of two phases of the same
/// intersection. Two empty green sets compare as identical.
pub fn jaccard(a: &Phase, b: &Phase) -> Result<f64, NetworkError> {
    if a.owner != b.owner {
        return Err(NetworkError::OwnerMismatch { a: a.id, b: b.id });
    }
    let ga = a.green_set();
    let gb = b.green_set();
    let union = ga.union(&gb).count();
    if union == 0 {
        return Ok(1.0);
    }
    let inter = ga.intersection(&gb).count();
    Ok(inter as f64 / union as f64)
}

/// A broken network invariant, naming the offending entity.
#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    IdMismatch { kind: &'static str, position: usize, id: u32 },
    LaneLength { lane: LaneId },
    LaneSpeed { lane: LaneId },
    UnknownLaneRef { context: String, lane: LaneId },
    UnknownIntersectionRef { context: String, intersection: IntersectionId },
    UnknownMovementRef { phase: PhaseId, movement: MovementId },
    SelfLoop { movement: MovementId },
    MovementNotIncoming { movement: MovementId, lane: LaneId },
    MovementNotOutgoing { movement: MovementId, lane: LaneId },
    LaneEndpointMismatch { intersection: IntersectionId, lane: LaneId },
    MissingSignal { phase: PhaseId, movement: MovementId },
    ForeignMovement { phase: PhaseId, movement: MovementId },
    AllRedPhase { phase: PhaseId },
    Unreachable { lane: LaneId },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use Violation::*;
        match self {
            IdMismatch { kind, position, id } => {
                write!(f, "{kind} at position {position} has id {id}")
            }
            LaneLength { lane } => write!(f, "lane {lane} has non-positive length"),
            LaneSpeed { lane } => write!(f, "lane {lane} has non-positive speed limit"),
            UnknownLaneRef { context, lane } => write!(f, "{context} references unknown lane {lane}"),
            UnknownIntersectionRef { context, intersection } => {
                write!(f, "{context} references unknown intersection {intersection}")
            }
            UnknownMovementRef { phase, movement } => {
                write!(f, "phase {phase} references unknown movement {movement}")
            }
            SelfLoop { movement } => write!(f, "movement {movement} has in_lane == out_lane"),
            MovementNotIncoming { movement, lane } => {
                write!(f, "movement {movement}: lane {lane} is not incoming at its owner")
            }
            MovementNotOutgoing { movement, lane } => {
                write!(f, "movement {movement}: lane {lane} is not outgoing at its owner")
            }
            LaneEndpointMismatch { intersection, lane } => {
                write!(f, "intersection {intersection} lists lane {lane} whose endpoint disagrees")
            }
            MissingSignal { phase, movement } => {
                write!(f, "phase {phase} has no signal for movement {movement}")
            }
            ForeignMovement { phase, movement } => {
                write!(f, "phase {phase} assigns a signal to foreign movement {movement}")
            }
            AllRedPhase { phase } => write!(f, "phase {phase} prohibits every movement"),
            Unreachable { lane } => write!(f, "lane {lane} is unreachable from every source lane"),
        }
    }
}

/// Serializable description of a network; may be invalid.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NetworkDef {
    pub lanes: Vec<Lane>,
    pub intersections: Vec<Intersection>,
    pub movements: Vec<Movement>,
    pub phases: Vec<Phase>,
}

impl NetworkDef {
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let n_lanes = self.lanes.len();
        let n_int = self.intersections.len();
        let lane_ok = |l: LaneId| l.index() < n_lanes;
        let int_ok = |v: IntersectionId| v.index() < n_int;

        for (i, lane) in self.lanes.iter().enumerate() {
            if lane.id.index() != i {
                out.push(Violation::IdMismatch { kind: "lane", position: i, id: lane.id.0 });
            }
            if !(lane.length_m > 0.0) || !lane.length_m.is_finite() {
                out.push(Violation::LaneLength { lane: lane.id });
            }
            if !(lane.speed_limit > 0.0) || !lane.speed_limit.is_finite() {
                out.push(Violation::LaneSpeed { lane: lane.id });
            }
            for v in lane.upstream.iter().chain(lane.downstream.iter()) {
                if !int_ok(*v) {
                    out.push(Violation::UnknownIntersectionRef {
                        context: format!("lane {}", lane.id),
                        intersection: *v,
                    });
                }
            }
        }

        for (i, x) in self.intersections.iter().enumerate() {
            if x.id.index() != i {
                out.push(Violation::IdMismatch { kind: "intersection", position: i, id: x.id.0 });
            }
            for &l in &x.incoming {
                if !lane_ok(l) {
                    out.push(Violation::UnknownLaneRef { context: format!("intersection {}", x.id), lane: l });
                } else if self.lanes[l.index()].downstream != Some(x.id) {
                    out.push(Violation::LaneEndpointMismatch { intersection: x.id, lane: l });
                }
            }
            for &l in &x.outgoing {
                if !lane_ok(l) {
                    out.push(Violation::UnknownLaneRef { context: format!("intersection {}", x.id), lane: l });
                } else if self.lanes[l.index()].upstream != Some(x.id) {
                    out.push(Violation::LaneEndpointMismatch { intersection: x.id, lane: l });
                }
            }
        }

        for (i, m) in self.movements.iter().enumerate() {
            if m.id.index() != i {
                out.push(Violation::IdMismatch { kind: "movement", position: i, id: m.id.0 });
            }
            let ctx = format!("movement {}", m.id);
            let mut refs_ok = true;
            for l in [m.in_lane, m.out_lane] {
                if !lane_ok(l) {
                    out.push(Violation::UnknownLaneRef { context: ctx.clone(), lane: l });
                    refs_ok = false;
                }
            }
            if !int_ok(m.owner) {
                out.push(Violation::UnknownIntersectionRef { context: ctx.clone(), intersection: m.owner });
                refs_ok = false;
            }
            if m.in_lane == m.out_lane {
                out.push(Violation::SelfLoop { movement: m.id });
            }
            if refs_ok {
                let owner = &self.intersections[m.owner.index()];
                if !owner.incoming.contains(&m.in_lane)
                    || self.lanes[m.in_lane.index()].downstream != Some(m.owner)
                {
                    out.push(Violation::MovementNotIncoming { movement: m.id, lane: m.in_lane });
                }
                if !owner.outgoing.contains(&m.out_lane)
                    || self.lanes[m.out_lane.index()].upstream != Some(m.owner)
                {
                    out.push(Violation::MovementNotOutgoing { movement: m.id, lane: m.out_lane });
                }
            }
        }

        let mut owned: BTreeMap<IntersectionId, Vec<MovementId>> = BTreeMap::new();
        for m in &self.movements {
            owned.entry(m.owner).or_default().push(m.id);
        }
        for (i, p) in self.phases.iter().enumerate() {
            if p.id.index() != i {
                out.push(Violation::IdMismatch { kind: "phase", position: i, id: p.id.0 });
            }
            if !int_ok(p.owner) {
                out.push(Violation::UnknownIntersectionRef {
                    context: format!("phase {}", p.id),
                    intersection: p.owner,
                });
                continue;
            }
            let mine = owned.get(&p.owner).map(Vec::as_slice).unwrap_or(&[]);
            for m in mine {
                if !p.signals.contains_key(m) {
                    out.push(Violation::MissingSignal { phase: p.id, movement: *m });
                }
            }
            for m in p.signals.keys() {
                match self.movements.get(m.index()) {
                    None => out.push(Violation::UnknownMovementRef { phase: p.id, movement: *m }),
                    Some(mv) if mv.owner != p.owner => {
                        out.push(Violation::ForeignMovement { phase: p.id, movement: *m })
                    }
                    _ => {}
                }
            }
            if !p.signals.values().any(|s| s.is_green()) {
                out.push(Violation::AllRedPhase { phase: p.id });
            }
        }

        // Reachability over the lane graph, only meaningful once references resolve.
        if out.is_empty() {
            let mut next: Vec<Vec<usize>> = vec![Vec::new(); n_lanes];
            for m in &self.movements {
                next[m.in_lane.index()].push(m.out_lane.index());
            }
            let mut seen = vec![false; n_lanes];
            let mut queue: VecDeque<usize> = self
                .lanes
                .iter()
                .filter(|l| l.upstream.is_none())
                .map(|l| l.id.index())
                .collect();
            for &q in &queue {
                seen[q] = true;
            }
            while let Some(l) = queue.pop_front() {
                for &n in &next[l] {
                    if !seen[n] {
                        seen[n] = true;
                        queue.push_back(n);
                    }
                }
            }
            for (i, s) in seen.iter().enumerate() {
                if !s {
                    out.push(Violation::Unreachable { lane: LaneId::from(i) });
                }
            }
        }
        out
    }
}

/// A validated road network with connectivity indexes.
#[derive(Clone, Debug)]
pub struct RoadNetwork {
    def: NetworkDef,
    into_lane: Vec<Vec<MovementId>>,
    out_of_lane: Vec<Vec<MovementId>>,
    movements_at: Vec<Vec<MovementId>>,
    phases_at: Vec<Vec<PhaseId>>,
    movement_by_pair: BTreeMap<(LaneId, LaneId), MovementId>,
}

impl TryFrom<NetworkDef> for RoadNetwork {
    type Error = NetworkError;

    fn try_from(def: NetworkDef) -> Result<Self, Self::Error> {
        let violations = def.validate();
        if !violations.is_empty() {
            return Err(NetworkError::Invalid(violations));
        }
        let mut into_lane = vec![Vec::new(); def.lanes.len()];
        let mut out_of_lane = vec![Vec::new(); def.lanes.len()];
        let mut movements_at = vec![Vec::new(); def.intersections.len()];
        let mut phases_at = vec![Vec::new(); def.intersections.len()];
        let mut movement_by_pair = BTreeMap::new();
        for m in &def.movements {
            into_lane[m.out_lane.index()].push(m.id);
            out_of_lane[m.in_lane.index()].push(m.id);
            movements_at[m.owner.index()].push(m.id);
            movement_by_pair.insert((m.in_lane, m.out_lane), m.id);
        }
        for p in &def.phases {
            phases_at[p.owner.index()].push(p.id);
        }
        Ok(Self { def, into_lane, out_of_lane, movements_at, phases_at, movement_by_pair })
    }
}

impl RoadNetwork {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, NetworkError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, NetworkError> {
        let def: NetworkDef = serde_json::from_str(text)?;
        Self::try_from(def)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.def).expect("network serializes")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), NetworkError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn def(&self) -> &NetworkDef {
        &self.def
    }

    /// Always empty for a constructed network; kept for symmetry with [`NetworkDef::validate`].
    pub fn validate(&self) -> Vec<Violation> {
        self.def.validate()
    }

    pub fn lanes(&self) -> &[Lane] {
        &self.def.lanes
    }

    pub fn lane(&self, id: LaneId) -> &Lane {
        &self.def.lanes[id.index()]
    }

    pub fn intersections(&self) -> &[Intersection] {
        &self.def.intersections
    }

    pub fn intersection(&self, id: IntersectionId) -> &Intersection {
        &self.def.intersections[id.index()]
    }

    pub fn movements(&self) -> &[Movement] {
        &self.def.movements
    }

    pub fn movement(&self, id: MovementId) -> &Movement {
        &self.def.movements[id.index()]
    }

    pub fn phases(&self) -> &[Phase] {
        &self.def.phases
    }

    pub fn phase(&self, id: PhaseId) -> &Phase {
        &self.def.phases[id.index()]
    }

    pub fn movements_at(&self, v: IntersectionId) -> &[MovementId] {
        &self.movements_at[v.index()]
    }

    pub fn phases_at(&self, v: IntersectionId) -> &[PhaseId] {
        &self.phases_at[v.index()]
    }

    /// Movements whose outgoing lane is `lane` (they feed it).
    pub fn movements_into(&self, lane: LaneId) -> Result<&[MovementId], NetworkError> {
        self.into_lane
            .get(lane.index())
            .map(Vec::as_slice)
            .ok_or(NetworkError::UnknownLane(lane))
    }

    /// Movements whose incoming lane is `lane` (they drain it).
    pub fn movements_out_of(&self, lane: LaneId) -> Result<&[MovementId], NetworkError> {
        self.out_of_lane
            .get(lane.index())
            .map(Vec::as_slice)
            .ok_or(NetworkError::UnknownLane(lane))
    }

    pub fn movement_between(&self, from: LaneId, to: LaneId) -> Option<MovementId> {
        self.movement_by_pair.get(&(from, to)).copied()
    }

    pub fn source_lanes(&self) -> impl Iterator<Item = LaneId> + '_ {
        self.def.lanes.iter().filter(|l| l.upstream.is_none()).map(|l| l.id)
    }

    pub fn sink_lanes(&self) -> impl Iterator<Item = LaneId> + '_ {
        self.def.lanes.iter().filter(|l| l.downstream.is_none()).map(|l| l.id)
    }

    /// Incoming then outgoing lanes of `v`, the fixed lane order of its state graph.
    pub fn lanes_of(&self, v: IntersectionId) -> Vec<LaneId> {
        let x = self.intersection(v);
        x.incoming.iter().chain(x.outgoing.iter()).copied().collect()
    }
}


#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;

    fn phase_with(states: &[SignalState]) -> Phase {
        Phase {
            id: PhaseId(0),
            owner: IntersectionId(0),
            signals: states.iter().enumerate().map(|(i, s)| (MovementId(i as u32), *s)).collect(),
        }
    }

    #[test]
    fn well_formed_four_way_validates() {
        let def = four_way(100.0);
        assert_eq!(def.lanes.len(), 8);
        assert_eq!(def.validate(), vec![]);
        assert!(RoadNetwork::try_from(def).is_ok());
    }

    #[test]
    fn self_loop_movement_is_reported() {
        let mut def = four_way(100.0);
        def.movements[3].out_lane = def.movements[3].in_lane;
        let v = def.validate();
        assert!(v.contains(&Violation::SelfLoop { movement: MovementId(3) }), "{v:?}");
        assert_eq!(v.iter().filter(|x| matches!(x, Violation::SelfLoop { .. })).count(), 1);
    }

    #[test]
    fn missing_signal_names_phase_and_movement() {
        let mut def = four_way(100.0);
        def.phases[2].signals.remove(&MovementId(5));
        assert_eq!(def.validate(), vec![Violation::MissingSignal { phase: PhaseId(2), movement: MovementId(5) }]);
    }

    #[test]
    fn unreachable_lane_is_reported() {
        let mut def = corridor();
        // Drop the only movement feeding lane 4.
        def.movements.remove(1);
        for (i, m) in def.movements.iter_mut().enumerate() {
            m.id = MovementId(i as u32);
        }
        def.phases[0].signals = [(MovementId(0), SignalState::Protected)].into_iter().collect();
        def.phases[1].signals = [(MovementId(1), SignalState::Protected), (MovementId(2), SignalState::Permitted), (MovementId(3), SignalState::Prohibited)].into_iter().collect();
        def.phases[2].signals = [(MovementId(1), SignalState::Prohibited), (MovementId(2), SignalState::Prohibited), (MovementId(3), SignalState::Protected)].into_iter().collect();
        assert_eq!(def.validate(), vec![Violation::Unreachable { lane: LaneId(4) }]);
    }

    #[test]
    fn green_set_examples() {
        use SignalState::*;
        assert_eq!(phase_with(&[Protected, Prohibited, Prohibited]).green_set(), [MovementId(0)].into());
        assert!(phase_with(&[Prohibited, Prohibited]).green_set().is_empty());
        assert_eq!(
            phase_with(&[Permitted, Protected, Prohibited]).green_set(),
            [MovementId(0), MovementId(1)].into()
        );
    }

    #[test]
    fn jaccard_examples() {
        use SignalState::*;
        let a = phase_with(&[Protected, Permitted, Prohibited]);
        let b = phase_with(&[Prohibited, Protected, Permitted]);
        let c = phase_with(&[Prohibited, Prohibited, Protected]);
        let d = phase_with(&[Protected, Prohibited, Prohibited]);
        assert_eq!(jaccard(&a, &a).unwrap(), 1.0);
        assert_eq!(jaccard(&c, &d).unwrap(), 0.0);
        assert!((jaccard(&a, &b).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        let red = phase_with(&[Prohibited, Prohibited]);
        assert_eq!(jaccard(&red, &red).unwrap(), 1.0);
    }

    #[test]
    fn jaccard_rejects_foreign_phases() {
        let a = phase_with(&[SignalState::Protected]);
        let mut b = a.clone();
        b.owner = IntersectionId(1);
        b.id = PhaseId(7);
        assert!(matches!(jaccard(&a, &b), Err(NetworkError::OwnerMismatch { .. })));
    }

    #[test]
    fn movement_sets_on_corridor() {
        let net = RoadNetwork::try_from(corridor()).unwrap();
        assert!(net.movements_into(LaneId(0)).unwrap().is_empty());
        // Lane 1 is fed by A's 0→1 and drained by B's 1→2 and 1→5.
        assert_eq!(net.movements_into(LaneId(1)).unwrap().len(), 1);
        assert_eq!(net.movements_out_of(LaneId(1)).unwrap().len(), 2);
        // Lane 2 is fed by two movements at B.
        assert_eq!(net.movements_into(LaneId(2)).unwrap().len(), 2);
        assert!(matches!(net.movements_into(LaneId(99)), Err(NetworkError::UnknownLane(_))));
    }

    #[test]
    fn four_way_lanes_fed_from_one_side_only() {
        let net = RoadNetwork::try_from(four_way(50.0)).unwrap();
        for lane in net.lanes() {
            let into = net.movements_into(lane.id).unwrap();
            let out = net.movements_out_of(lane.id).unwrap();
            if lane.upstream.is_none() {
                assert!(into.is_empty());
                assert_eq!(out.len(), 3);
            } else {
                assert_eq!(into.len(), 3);
                assert!(out.is_empty());
            }
        }
    }

    #[test]
    fn signal_codes_roundtrip_through_json() {
        let net = RoadNetwork::try_from(four_way(80.0)).unwrap();
        let text = net.to_json();
        let back = RoadNetwork::from_json(&text).unwrap();
        assert_eq!(back.def(), net.def());
        for s in [SignalState::Prohibited, SignalState::Permitted, SignalState::Protected] {
            let j = serde_json::to_string(&s).unwrap();
            assert_eq!(j, s.code().to_string());
            assert_eq!(serde_json::from_str::<SignalState>(&j).unwrap(), s);
        }
        assert!(serde_json::from_str::<SignalState>("2").is_err());
    }

    #[test]
    fn loader_rejects_invalid_files() {
        let mut def = four_way(100.0);
        def.lanes[0].length_m = -1.0;
        let text = serde_json::to_string(&def).unwrap();
        assert!(matches!(RoadNetwork::from_json(&text), Err(NetworkError::Invalid(_))));
    }

    proptest::proptest! {
        #[test]
        fn jaccard_symmetric(xs in proptest::collection::vec(0i64..3, 1..8), ys in proptest::collection::vec(0i64..3, 1..8)) {
            let to = |v: &Vec<i64>| phase_with(&v.iter().map(|c| SignalState::from_code(c - 1).unwrap()).collect::<Vec<_>>());
            let (a, b) = (to(&xs), to(&ys));
            proptest::prop_assert_eq!(jaccard(&a, &b).unwrap(), jaccard(&b, &a).unwrap());
            if !a.green_set().is_empty() {
                proptest::prop_assert_eq!(jaccard(&a, &a).unwrap(), 1.0);
            }
        }
    }

    #[test]
    fn feeding_and_draining_sets_are_disjoint() {
        for def in [four_way(60.0), corridor()] {
            let net = RoadNetwork::try_from(def).unwrap();
            for lane in net.lanes() {
                let a: BTreeSet<_> = net.movements_into(lane.id).unwrap().iter().collect();
                let b: BTreeSet<_> = net.movements_out_of(lane.id).unwrap().iter().collect();
                assert!(a.is_disjoint(&b));
            }
        }
    }
}
