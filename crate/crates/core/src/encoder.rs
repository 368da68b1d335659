//! Three-level heterogeneous graph attention: segments → movements →
//! phases → phases. One parameter set serves every intersection.

use ndarray::Array2;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{DiffError, ParamId, ParamStore, Tape, Var};
use crate::encoding::StateGraph;

#[derive(Debug, Error)]
pub enum EncoderError {
    #[error(transparent)]
    Diff(#[from] DiffError),
    #[error("invalid batch: {0}")]
    Batch(String),
    #[error("invalid encoder config: {0}")]
    Config(String),
}

pub const METADATA_KEY: &str = "encoder";

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    /// Width of a segment feature vector.
    pub input_dim: usize,
    pub latent: usize,
    pub heads: usize,
    pub slope: f64,
    pub dropout: f64,
    pub ln_eps: f64,
}

impl EncoderConfig {
    pub fn new(input_dim: usize) -> Self {
        Self { input_dim, latent: 64, heads: 8, slope: 0.01, dropout: 0.1, ln_eps: 1e-5 }
    }

    fn validate(&self) -> Result<(), EncoderError> {
        if self.heads == 0 || self.latent % self.heads != 0 {
            return Err(EncoderError::Config(format!("latent {} not divisible by {} heads", self.latent, self.heads)));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(EncoderError::Config(format!("dropout {}", self.dropout)));
        }
        Ok(())
    }
}

/// Disjoint union of several state graphs with flattened index lists.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphBatch {
    pub num_graphs: usize,
    pub seg_x: Array2<f64>,
    /// Lane slot of every segment; a slot is one lane of one graph.
    pub seg_lane: Vec<usize>,
    pub num_lane_slots: usize,
    pub move_in: Vec<usize>,
    pub move_out: Vec<usize>,
    pub phase_flag: Array2<f64>,
    pub phase_graph: Vec<usize>,
    /// First global phase row of each graph, plus a final sentinel.
    pub phase_offsets: Vec<usize>,
    pub pair_move: Vec<usize>,
    pub pair_phase: Vec<usize>,
    pub pair_gamma: Array2<f64>,
    pub pp_target: Vec<usize>,
    pub pp_source: Vec<usize>,
    pub pp_jaccard: Array2<f64>,
}

impl GraphBatch {
    pub fn new(graphs: &[&StateGraph]) -> Result<Self, EncoderError> {
        let first = graphs.first().ok_or_else(|| EncoderError::Batch("no graphs".into()))?;
        let fdim = first.feature_dim;
        let mut seg_rows = Vec::new();
        let (mut seg_lane, mut move_in, mut move_out) = (Vec::new(), Vec::new(), Vec::new());
        let (mut flags, mut phase_graph, mut phase_offsets) = (Vec::new(), Vec::new(), vec![0]);
        let (mut pair_move, mut pair_phase, mut gamma) = (Vec::new(), Vec::new(), Vec::new());
        let (mut pp_target, mut pp_source, mut jac) = (Vec::new(), Vec::new(), Vec::new());
        let (mut lane_base, mut move_base, mut phase_base) = (0, 0, 0);
        for (gi, g) in graphs.iter().enumerate() {
            if g.feature_dim != fdim {
                return Err(EncoderError::Batch(format!("feature width {} vs {}", g.feature_dim, fdim)));
            }
            let (nm, np) = (g.num_movements(), g.num_phases());
            if g.gamma.len() != nm * np || g.jaccard.len() != np * np || g.phase_active.len() != np {
                return Err(EncoderError::Batch(format!("graph {gi} has inconsistent edge tables")));
            }
            seg_rows.extend_from_slice(&g.segment_features);
            seg_lane.extend(g.segment_lane.iter().map(|l| lane_base + l));
            // Canonical movement order makes every summation independent of input order.
            let mut order: Vec<usize> = (0..nm).collect();
            order.sort_by_key(|&m| {
                let (i, o) = g.movement_lanes[m];
                (g.lanes[i], g.lanes[o])
            });
            for &m in &order {
                let (i, o) = g.movement_lanes[m];
                move_in.push(lane_base + i);
                move_out.push(lane_base + o);
            }
            for p in 0..np {
                flags.push(g.phase_active[p]);
                phase_graph.push(gi);
                for (k, &m) in order.iter().enumerate() {
                    pair_move.push(move_base + k);
                    pair_phase.push(phase_base + p);
                    gamma.push(g.gamma[m * np + p]);
                }
                for q in 0..np {
                    pp_target.push(phase_base + p);
                    pp_source.push(phase_base + q);
                    jac.push(g.jaccard[p * np + q]);
                }
            }
            lane_base += g.lanes.len();
            move_base += nm;
            phase_base += np;
            phase_offsets.push(phase_base);
        }
        let n_seg = seg_lane.len();
        let col = |v: Vec<f64>| {
            let n = v.len();
            Array2::from_shape_vec((n, 1), v).expect("column")
        };
        Ok(Self {
            num_graphs: graphs.len(),
            seg_x: Array2::from_shape_vec((n_seg, fdim), seg_rows).map_err(|e| EncoderError::Batch(e.to_string()))?,
            seg_lane,
            num_lane_slots: lane_base,
            move_in,
            move_out,
            phase_flag: col(flags),
            phase_graph,
            phase_offsets,
            pair_move,
            pair_phase,
            pair_gamma: col(gamma),
            pp_target,
            pp_source,
            pp_jaccard: col(jac),
        })
    }

    pub fn num_movements(&self) -> usize {
        self.move_in.len()
    }

    pub fn num_phases(&self) -> usize {
        self.phase_graph.len()
    }

    /// Number of phases of graph `g`.
    pub fn phases_of(&self, g: usize) -> usize {
        self.phase_offsets[g + 1] - self.phase_offsets[g]
    }
}

/// Linear → layer norm (with gain and bias) → leaky ReLU → dropout → linear.
#[derive(Clone, Debug)]
pub struct Mlp {
    w1: ParamId,
    b1: ParamId,
    gain: ParamId,
    shift: ParamId,
    w2: ParamId,
    b2: ParamId,
}

impl Mlp {
    pub fn register(store: &mut ParamStore, prefix: &str, input: usize, width: usize, out: usize, rng: &mut ChaCha8Rng) -> Result<Self, DiffError> {
        store.add_uniform(&format!("{prefix}.w1"), (input, width), input, rng)?;
        store.add(&format!("{prefix}.b1"), Array2::zeros((1, width)))?;
        store.add(&format!("{prefix}.ln_gain"), Array2::ones((1, width)))?;
        store.add(&format!("{prefix}.ln_bias"), Array2::zeros((1, width)))?;
        store.add_uniform(&format!("{prefix}.w2"), (width, out), width, rng)?;
        store.add(&format!("{prefix}.b2"), Array2::zeros((1, out)))?;
        Self::bind(store, prefix)
    }

    pub fn bind(store: &ParamStore, prefix: &str) -> Result<Self, DiffError> {
        let id = |n: &str| store.id(&format!("{prefix}.{n}"));
        Ok(Self { w1: id("w1")?, b1: id("b1")?, gain: id("ln_gain")?, shift: id("ln_bias")?, w2: id("w2")?, b2: id("b2")? })
    }

    pub fn forward(
        &self,
        t: &mut Tape,
        s: &ParamStore,
        x: Var,
        slope: f64,
        ln_eps: f64,
        dropout: Option<(f64, &mut ChaCha8Rng)>,
    ) -> Result<Var, DiffError> {
        let w1 = t.param(s, self.w1);
        let b1 = t.param(s, self.b1);
        let h = t.matmul(x, w1)?;
        let h = t.add_row(h, b1)?;
        let h = t.layer_norm(h, ln_eps);
        let gain = t.param(s, self.gain);
        let shift = t.param(s, self.shift);
        let h = t.mul_row(h, gain)?;
        let h = t.add_row(h, shift)?;
        let mut h = t.leaky_relu(h, slope);
        if let Some((p, rng)) = dropout {
            h = t.dropout(h, p, true, rng)?;
        }
        let w2 = t.param(s, self.w2);
        let b2 = t.param(s, self.b2);
        let h = t.matmul(h, w2)?;
        t.add_row(h, b2)
    }
}

/// Intermediate and final embeddings of one forward pass.
#[derive(Copy, Clone, Debug)]
pub struct EncoderOutput {
    pub movements: Var,
    pub phases_initial: Var,
    pub phases: Var,
}

#[derive(Clone, Debug)]
pub struct Encoder {
    pub config: EncoderConfig,
    seg_mlp: Mlp,
    a_s: ParamId,
    b_s: ParamId,
    proj_s: ParamId,
    move_mlp: Mlp,
    w_flag: ParamId,
    w_gamma: ParamId,
    a_m: ParamId,
    b_m: ParamId,
    res_m: ParamId,
    proj_m: ParamId,
    phase_mlp: Mlp,
    w_j: ParamId,
    a_p: ParamId,
    b_p: ParamId,
    res_p: ParamId,
    proj_p: ParamId,
}

impl Encoder {
    /// Registers all encoder parameters under `enc.` and records the config
    /// in the store's metadata.
    pub fn register(store: &mut ParamStore, config: EncoderConfig, rng: &mut ChaCha8Rng) -> Result<Self, EncoderError> {
        config.validate()?;
        let d = config.latent;
        let hd = d / config.heads;
        Mlp::register(store, "enc.l1.mlp", config.input_dim, d, d, rng)?;
        store.add_uniform("enc.l1.attn", (1, d), hd, rng)?;
        store.add("enc.l1.bias", Array2::zeros((1, d)))?;
        store.add_uniform("enc.l1.proj", (d, d), d, rng)?;
        Mlp::register(store, "enc.l2.mlp", d, d, d, rng)?;
        store.add_uniform("enc.l2.flag", (1, d), 1, rng)?;
        store.add_uniform("enc.l2.gamma", (1, d), 1, rng)?;
        store.add_uniform("enc.l2.attn", (1, d), hd, rng)?;
        store.add("enc.l2.bias", Array2::zeros((1, d)))?;
        store.add_uniform("enc.l2.residual", (1, d), 1, rng)?;
        store.add_uniform("enc.l2.proj", (d, d), d, rng)?;
        Mlp::register(store, "enc.l3.mlp", d, d, d, rng)?;
        store.add_uniform("enc.l3.jaccard", (1, d), 1, rng)?;
        store.add_uniform("enc.l3.attn", (1, d), hd, rng)?;
        store.add("enc.l3.bias", Array2::zeros((1, d)))?;
        store.add_uniform("enc.l3.residual", (d, d), d, rng)?;
        store.add_uniform("enc.l3.proj", (d, d), d, rng)?;
        store.set_metadata(METADATA_KEY, &serde_json::to_string(&config).expect("config serializes"));
        Self::bind(store)
    }

    /// Resolves parameters of a store produced by [`Encoder::register`].
    pub fn bind(store: &ParamStore) -> Result<Self, EncoderError> {
        let raw = store
            .metadata()
            .get(METADATA_KEY)
            .ok_or_else(|| EncoderError::Config("store has no encoder metadata".into()))?;
        let config: EncoderConfig = serde_json::from_str(raw).map_err(|e| EncoderError::Config(e.to_string()))?;
        config.validate()?;
        let id = |n: &str| store.id(n);
        Ok(Self {
            config,
            seg_mlp: Mlp::bind(store, "enc.l1.mlp")?,
            a_s: id("enc.l1.attn")?,
            b_s: id("enc.l1.bias")?,
            proj_s: id("enc.l1.proj")?,
            move_mlp: Mlp::bind(store, "enc.l2.mlp")?,
            w_flag: id("enc.l2.flag")?,
            w_gamma: id("enc.l2.gamma")?,
            a_m: id("enc.l2.attn")?,
            b_m: id("enc.l2.bias")?,
            res_m: id("enc.l2.residual")?,
            proj_m: id("enc.l2.proj")?,
            phase_mlp: Mlp::bind(store, "enc.l3.mlp")?,
            w_j: id("enc.l3.jaccard")?,
            a_p: id("enc.l3.attn")?,
            b_p: id("enc.l3.bias")?,
            res_p: id("enc.l3.residual")?,
            proj_p: id("enc.l3.proj")?,
        })
    }

    /// Scalar parameter counts per level.
    pub fn param_counts(store: &ParamStore) -> Vec<(&'static str, usize)> {
        [("segment→movement", "enc.l1."), ("movement→phase", "enc.l2."), ("phase↔phase", "enc.l3.")]
            .into_iter()
            .map(|(label, prefix)| {
                let n = store.iter().filter(|(_, p)| p.name.starts_with(prefix)).map(|(_, p)| p.value.len()).sum();
                (label, n)
            })
            .collect()
    }

    /// Runs all three levels. Passing an rng enables dropout (training mode).
    pub fn forward(
        &self,
        t: &mut Tape,
        s: &ParamStore,
        b: &GraphBatch,
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> Result<EncoderOutput, EncoderError> {
        let c = self.config;
        if b.seg_x.ncols() != c.input_dim {
            return Err(EncoderError::Batch(format!("feature width {} vs encoder input {}", b.seg_x.ncols(), c.input_dim)));
        }
        let h = c.heads;

        // Segments → movements; attention normalized within each lane.
        let x = t.constant(b.seg_x.clone());
        let z = self.seg_mlp.forward(t, s, x, c.slope, c.ln_eps, rng.as_deref_mut().map(|r| (c.dropout, r)))?;
        let zs = t.leaky_relu(z, c.slope);
        let a = t.param(s, self.a_s);
        let u = t.head_dot(zs, a, h)?;
        let alpha = t.grouped_softmax(u, &b.seg_lane)?;
        let v = t.head_scale(alpha, z)?;
        let per_lane = t.scatter_add_rows(v, &b.seg_lane, b.num_lane_slots)?;
        let inc = t.gather_rows(per_lane, &b.move_in)?;
        let out = t.gather_rows(per_lane, &b.move_out)?;
        let msg = t.add(inc, out)?;
        let proj = t.param(s, self.proj_s);
        let msg = t.matmul(msg, proj)?;
        let bias = t.param(s, self.b_s);
        let hm = t.add_row(msg, bias)?;
        let hm = t.leaky_relu(hm, c.slope);

        // Movements → phases; the flag and signal codes only shape the scores.
        let zm = self.move_mlp.forward(t, s, hm, c.slope, c.ln_eps, rng.as_deref_mut().map(|r| (c.dropout, r)))?;
        let flag = t.constant(b.phase_flag.clone());
        let w_flag = t.param(s, self.w_flag);
        let flag_emb = t.matmul(flag, w_flag)?;
        let gamma = t.constant(b.pair_gamma.clone());
        let w_gamma = t.param(s, self.w_gamma);
        let gamma_emb = t.matmul(gamma, w_gamma)?;
        let zm_pairs = t.gather_rows(zm, &b.pair_move)?;
        let flag_pairs = t.gather_rows(flag_emb, &b.pair_phase)?;
        let score = t.add(zm_pairs, flag_pairs)?;
        let score = t.add(score, gamma_emb)?;
        let score = t.leaky_relu(score, c.slope);
        let a = t.param(s, self.a_m);
        let u = t.head_dot(score, a, h)?;
        let alpha = t.grouped_softmax(u, &b.pair_phase)?;
        let v = t.head_scale(alpha, zm_pairs)?;
        let agg = t.scatter_add_rows(v, &b.pair_phase, b.num_phases())?;
        let proj = t.param(s, self.proj_m);
        let agg = t.matmul(agg, proj)?;
        let res_w = t.param(s, self.res_m);
        let res = t.matmul(flag, res_w)?;
        let hp = t.add(agg, res)?;
        let bias = t.param(s, self.b_m);
        let hp = t.add_row(hp, bias)?;
        let hp0 = t.leaky_relu(hp, c.slope);

        // One round of phase ↔ phase attention with Jaccard edge scores.
        let zp = self.phase_mlp.forward(t, s, hp0, c.slope, c.ln_eps, rng.as_deref_mut().map(|r| (c.dropout, r)))?;
        let tgt = t.gather_rows(zp, &b.pp_target)?;
        let src = t.gather_rows(zp, &b.pp_source)?;
        let jac = t.constant(b.pp_jaccard.clone());
        let w_j = t.param(s, self.w_j);
        let jac_emb = t.matmul(jac, w_j)?;
        let score = t.add(tgt, src)?;
        let score = t.add(score, jac_emb)?;
        let score = t.leaky_relu(score, c.slope);
        let a = t.param(s, self.a_p);
        let u = t.head_dot(score, a, h)?;
        let alpha = t.grouped_softmax(u, &b.pp_target)?;
        let v = t.head_scale(alpha, src)?;
        let agg = t.scatter_add_rows(v, &b.pp_target, b.num_phases())?;
        let proj = t.param(s, self.proj_p);
        let agg = t.matmul(agg, proj)?;
        let res_w = t.param(s, self.res_p);
        let res = t.matmul(hp0, res_w)?;
        let out = t.add(agg, res)?;
        let bias = t.param(s, self.b_p);
        let out = t.add_row(out, bias)?;
        let phases = t.leaky_relu(out, c.slope);

        Ok(EncoderOutput { movements: hm, phases_initial: hp0, phases })
    }

    /// Phase embeddings of a single graph in evaluation mode.
    pub fn embed(&self, store: &ParamStore, graph: &StateGraph) -> Result<Array2<f64>, EncoderError> {
        let b = GraphBatch::new(&[graph])?;
        let mut t = Tape::new();
        let o = self.forward(&mut t, store, &b, None)?;
        Ok(t.value(o.phases).clone())
    }
}
