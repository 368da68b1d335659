//! Per-intersection state graphs: segment densities with positional encodings
//! and transition priors, movement nodes, and phase nodes with signal and
//! phase-overlap edge features.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::{jaccard, IntersectionId, LaneId, MovementId, NetworkError, PhaseId, RoadNetwork};
use crate::sim::{SimState, MIN_HEADWAY_M};

pub const DEFAULT_DS: f64 = 10.0;
pub const DEFAULT_PE_DIM: usize = 16;

#[derive(Debug, Error)]
pub enum EncodingError {
    #[error("segment length {ds} outside [{min}, {max}]")]
    SegmentLength { ds: f64, min: f64, max: f64 },
    #[error("positional encoding dimension must be even, got {0}")]
    OddDimension(usize),
    #[error(transparent)]
    Network(#[from] NetworkError),
}

/// Feature switches for ablations. Disabling a feature zeroes it; graph
/// topology never changes.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureFlags {
    pub pe: bool,
    pub gamma: bool,
    pub jaccard: bool,
    pub prior: bool,
}

impl Default for FeatureFlags {
    fn default() -> Self {
        Self { pe: true, gamma: true, jaccard: true, prior: true }
    }
}

impl FeatureFlags {
    /// Parse a comma separated list of disabled features (`pe,gamma,jaccard,prior`).
    pub fn with_ablations(list: &str) -> Result<Self, String> {
        let mut f = Self::default();
        for item in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            match item {
                "pe" => f.pe = false,
                "gamma" => f.gamma = false,
                "jaccard" => f.jaccard = false,
                "prior" => f.prior = false,
                other => return Err(format!("unknown ablation '{other}'")),
            }
        }
        Ok(f)
    }

    pub fn ablated(&self) -> Vec<&'static str> {
        let mut v = Vec::new();
        if !self.pe {
            v.push("pe");
        }
        if !self.gamma {
            v.push("gamma");
        }
        if !self.jaccard {
            v.push("jaccard");
        }
        if !self.prior {
            v.push("prior");
        }
        v
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncodingConfig {
    pub ds: f64,
    pub pe_dim: usize,
    pub flags: FeatureFlags,
}

impl Default for EncodingConfig {
    fn default() -> Self {
        Self { ds: DEFAULT_DS, pe_dim: DEFAULT_PE_DIM, flags: FeatureFlags::default() }
    }
}

impl EncodingConfig {
    /// Width of a segment feature vector: density, positional encoding, prior.
    pub fn feature_dim(&self) -> usize {
        self.pe_dim + 2
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    /// 0 is the segment touching the intersection centre.
    pub index: usize,
    pub start_m: f64,
    pub end_m: f64,
}

fn segment_count(length_m: f64, ds: f64) -> usize {
    (length_m / ds + 1e-9).floor() as usize
}

/// Split a lane into `floor(length / ds)` segments of exactly `ds` meters,
/// outward from the intersection; the remainder at the far end is dropped.
pub fn partition(length_m: f64, ds: f64) -> Result<Vec<Segment>, EncodingError> {
    if !(ds >= MIN_HEADWAY_M) || !(ds <= length_m) {
        return Err(EncodingError::SegmentLength { ds, min: MIN_HEADWAY_M, max: length_m });
    }
    Ok((0..segment_count(length_m, ds))
        .map(|k| Segment { index: k, start_m: k as f64 * ds, end_m: (k + 1) as f64 * ds })
        .collect())
}

/// Segment holding position `pos_m`; intervals are `(k ds, (k+1) ds]` so a
/// vehicle on a boundary belongs to the segment nearer the intersection.
pub fn segment_of(pos_m: f64, ds: f64) -> usize {
    ((pos_m / ds).ceil() as usize).saturating_sub(1)
}

/// Vehicle density per segment of `lane` (vehicles per meter).
pub fn lane_densities(state: &SimState, lane: LaneId, n_segments: usize, ds: f64) -> Vec<f64> {
    let mut counts = vec![0usize; n_segments];
    for v in &state.lanes[lane.index()] {
        let k = segment_of(v.pos_m, ds);
        if k < n_segments {
            counts[k] += 1;
        }
    }
    counts.into_iter().map(|c| c as f64 / ds).collect()
}

pub fn segment_density(state: &SimState, lane: LaneId, segment: usize, ds: f64) -> f64 {
    state.lanes[lane.index()].iter().filter(|v| segment_of(v.pos_m, ds) == segment).count() as f64 / ds
}

/// Net density about to enter `lane` minus the density downstream of the
/// movements draining it, read from the segment nearest each lane's origin.
pub fn transition_prior(
    network: &RoadNetwork,
    state: &SimState,
    lane: LaneId,
    ds: f64,
) -> Result<f64, EncodingError> {
    let inflow: f64 = network
        .movements_into(lane)?
        .iter()
        .map(|m| segment_density(state, network.movement(*m).in_lane, 0, ds))
        .sum();
    let outflow: f64 = network
        .movements_out_of(lane)?
        .iter()
        .map(|m| segment_density(state, network.movement(*m).out_lane, 0, ds))
        .sum();
    Ok(inflow - outflow)
}

fn sinusoid(position: usize, dim: usize, out: &mut [f64]) {
    for (j, slot) in out.iter_mut().enumerate().take(dim) {
        let i = j / 2;
        let freq = 1.0 / 10000f64.powf(2.0 * i as f64 / dim as f64);
        let angle = position as f64 * freq;
        *slot = if j % 2 == 0 { angle.sin() } else { angle.cos() };
    }
}

/// Sinusoidal encoding of the segment index in the first half and of the
/// lane index in the second half.
pub fn positional_encoding(segment: usize, lane: usize, pe_dim: usize) -> Result<Vec<f64>, EncodingError> {
    if pe_dim % 2 != 0 {
        return Err(EncodingError::OddDimension(pe_dim));
    }
    let half = pe_dim / 2;
    let mut out = vec![0.0; pe_dim];
    sinusoid(segment, half, &mut out[..half]);
    sinusoid(lane, half, &mut out[half..]);
    Ok(out)
}

/// Hierarchical heterogeneous graph of one intersection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateGraph {
    pub intersection: IntersectionId,
    pub feature_dim: usize,
    /// Incoming then outgoing lanes; segment lane indices point here.
    pub lanes: Vec<LaneId>,
    /// Row-major `segments x feature_dim`.
    pub segment_features: Vec<f64>,
    pub segment_lane: Vec<usize>,
    pub movements: Vec<MovementId>,
    /// Local (incoming, outgoing) lane indices per movement.
    pub movement_lanes: Vec<(usize, usize)>,
    pub phases: Vec<PhaseId>,
    /// One-hot flag of the phase being shown or transitioned to.
    pub phase_active: Vec<f64>,
    /// Row-major `movements x phases` signal codes.
    pub gamma: Vec<f64>,
    /// Row-major `phases x phases` Jaccard coefficients.
    pub jaccard: Vec<f64>,
}

impl StateGraph {
    pub fn num_segments(&self) -> usize {
        self.segment_lane.len()
    }

    pub fn num_movements(&self) -> usize {
        self.movements.len()
    }

    pub fn num_phases(&self) -> usize {
        self.phases.len()
    }

    pub fn segment_row(&self, s: usize) -> &[f64] {
        &self.segment_features[s * self.feature_dim..(s + 1) * self.feature_dim]
    }

    pub fn active_phase(&self) -> usize {
        self.phase_active.iter().position(|&x| x == 1.0).unwrap_or(0)
    }

    pub fn dump(&self) -> String {
        serde_json::to_string_pretty(self).expect("graph serializes")
    }
}

#[derive(Clone, Debug)]
struct Layout {
    lanes: Vec<LaneId>,
    segments_per_lane: Vec<usize>,
    pe: Vec<Vec<f64>>,
    movements: Vec<MovementId>,
    movement_lanes: Vec<(usize, usize)>,
    phases: Vec<PhaseId>,
    gamma: Vec<f64>,
    jaccard: Vec<f64>,
}

/// Builds state graphs; the static part of every intersection's graph is
/// computed once.
#[derive(Clone, Debug)]
pub struct StateEncoder {
    network: Arc<RoadNetwork>,
    config: EncodingConfig,
    layouts: Vec<Layout>,
}

impl StateEncoder {
    pub fn new(network: Arc<RoadNetwork>, config: EncodingConfig) -> Result<Self, EncodingError> {
        if config.pe_dim % 2 != 0 {
            return Err(EncodingError::OddDimension(config.pe_dim));
        }
        let mut layouts = Vec::with_capacity(network.intersections().len());
        for x in network.intersections() {
            let lanes = network.lanes_of(x.id);
            let mut segments_per_lane = Vec::with_capacity(lanes.len());
            let mut pe = Vec::new();
            for (li, l) in lanes.iter().enumerate() {
                let segs = partition(network.lane(*l).length_m, config.ds)?;
                segments_per_lane.push(segs.len());
                for s in &segs {
                    pe.push(if config.flags.pe {
                        positional_encoding(s.index, li, config.pe_dim)?
                    } else {
                        vec![0.0; config.pe_dim]
                    });
                }
            }
            let local = |l: LaneId| lanes.iter().position(|x| *x == l).expect("movement lanes belong to owner");
            let movements = network.movements_at(x.id).to_vec();
            let movement_lanes = movements
                .iter()
                .map(|m| {
                    let mv = network.movement(*m);
                    (local(mv.in_lane), local(mv.out_lane))
                })
                .collect();
            let phases = network.phases_at(x.id).to_vec();
            let mut gamma = Vec::with_capacity(movements.len() * phases.len());
            for m in &movements {
                for p in &phases {
                    let code = network.phase(*p).signal(*m).code() as f64;
                    gamma.push(if config.flags.gamma { code } else { 0.0 });
                }
            }
            let mut jac = Vec::with_capacity(phases.len() * phases.len());
            for a in &phases {
                for b in &phases {
                    let j = jaccard(network.phase(*a), network.phase(*b))?;
                    jac.push(if config.flags.jaccard { j } else { 0.0 });
                }
            }
            layouts.push(Layout { lanes, segments_per_lane, pe, movements, movement_lanes, phases, gamma, jaccard: jac });
        }
        Ok(Self { network, config, layouts })
    }

    pub fn config(&self) -> &EncodingConfig {
        &self.config
    }

    pub fn network(&self) -> &Arc<RoadNetwork> {
        &self.network
    }

    /// Number of segment nodes at `v`.
    pub fn segment_count(&self, v: IntersectionId) -> usize {
        self.layouts[v.index()].segments_per_lane.iter().sum()
    }

    pub fn encode(&self, state: &SimState, v: IntersectionId) -> StateGraph {
        let layout = &self.layouts[v.index()];
        let ds = self.config.ds;
        let d = self.config.feature_dim();
        let n_seg: usize = layout.segments_per_lane.iter().sum();
        let mut features = Vec::with_capacity(n_seg * d);
        let mut segment_lane = Vec::with_capacity(n_seg);
        let mut row = 0;
        for (li, (&lane, &count)) in layout.lanes.iter().zip(&layout.segments_per_lane).enumerate() {
            let dens = lane_densities(state, lane, count, ds);
            let prior = if self.config.flags.prior {
                transition_prior(&self.network, state, lane, ds).expect("lane exists")
            } else {
                0.0
            };
            for rho in dens {
                features.push(rho);
                features.extend_from_slice(&layout.pe[row]);
                features.push(prior);
                segment_lane.push(li);
                row += 1;
            }
        }
        let target = state.controllers[v.index()].target_phase();
        let phase_active = layout.phases.iter().map(|p| if *p == target { 1.0 } else { 0.0 }).collect();
        StateGraph {
            intersection: v,
            feature_dim: d,
            lanes: layout.lanes.clone(),
            segment_features: features,
            segment_lane,
            movements: layout.movements.clone(),
            movement_lanes: layout.movement_lanes.clone(),
            phases: layout.phases.clone(),
            phase_active,
            gamma: layout.gamma.clone(),
            jaccard: layout.jaccard.clone(),
        }
    }
}

/// One-shot graph construction; prefer [`StateEncoder`] when encoding repeatedly.
pub fn build_state_graph(
    network: &Arc<RoadNetwork>,
    state: &SimState,
    v: IntersectionId,
    config: EncodingConfig,
) -> Result<StateGraph, EncodingError> {
    Ok(StateEncoder::new(Arc::clone(network), config)?.encode(state, v))
}
