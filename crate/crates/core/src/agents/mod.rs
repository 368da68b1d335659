//! Policy heads on the shared encoder (Double DQN and advantage
//! actor-critic), replay, action selection, training, and heuristic baselines.

pub mod env;
pub mod policy;
pub mod replay;
pub mod train;

use std::path::Path;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{AdamW, DiffError, ParamId, ParamStore, Tape, Var};
use crate::domainrand::DomainError;
use crate::encoder::{Encoder, EncoderConfig, EncoderError, GraphBatch};
use crate::encoding::{EncodingConfig, EncodingError, StateGraph};
use crate::sim::SimError;

pub use env::{Env, EnvConfig, EpisodeSummary, EvalRow, TickOutcome};
pub use policy::{FixedTimePolicy, GreedyPolicy, MaxPressurePolicy, Policy, RandomPolicy};
pub use replay::{ReplayBuffer, Transition};
pub use train::{evaluate, evaluate_with, train, TrainConfig, TrainLogRow, TrainOutput};

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("invalid agent configuration: {0}")]
    Config(String),
    #[error("action {action} out of range for {phases} phases")]
    BadAction { action: usize, phases: usize },
    #[error("stale transition: policy version {got}, current {current}")]
    StaleTransition { got: u64, current: u64 },
    #[error("{head} update requested from a {actual} agent")]
    WrongHead { head: &'static str, actual: &'static str },
    #[error("checkpoint mismatch: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Diff(#[from] DiffError),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Encoding(#[from] EncodingError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeadKind {
    Dqn,
    A2c,
}

impl HeadKind {
    pub fn name(self) -> &'static str {
        match self {
            HeadKind::Dqn => "dqn",
            HeadKind::A2c => "a2c",
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgentConfig {
    pub head: HeadKind,
    pub discount: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub epsilon_decay_steps: usize,
    pub batch_size: usize,
    pub replay_capacity: usize,
    pub target_sync: u64,
    pub lr: f64,
    pub weight_decay: f64,
    pub grad_clip: f64,
    pub critic_coef: f64,
    pub latent: usize,
    pub heads: usize,
    pub dropout: f64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            head: HeadKind::Dqn,
            discount: 0.9,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay_steps: 2000,
            batch_size: 64,
            replay_capacity: 50_000,
            target_sync: 100,
            lr: 1e-3,
            weight_decay: 0.01,
            grad_clip: 10.0,
            critic_coef: 0.5,
            latent: 64,
            heads: 8,
            dropout: 0.1,
        }
    }
}

impl AgentConfig {
    /// Linearly annealed exploration rate at a decision step.
    pub fn epsilon(&self, step: usize) -> f64 {
        if self.epsilon_decay_steps == 0 || step >= self.epsilon_decay_steps {
            return self.epsilon_end;
        }
        let f = step as f64 / self.epsilon_decay_steps as f64;
        self.epsilon_start + f * (self.epsilon_end - self.epsilon_start)
    }

    fn optimizer(&self) -> AdamW {
        AdamW { lr: self.lr, weight_decay: self.weight_decay, ..AdamW::default() }
    }
}

/// Per-phase scalar decoder: linear → leaky ReLU → linear.
#[derive(Clone, Debug)]
struct Decoder {
    w1: ParamId,
    b1: ParamId,
    w2: ParamId,
    b2: ParamId,
}

impl Decoder {
    fn register(store: &mut ParamStore, prefix: &str, d: usize, rng: &mut ChaCha8Rng) -> Result<Self, DiffError> {
        store.add_uniform(&format!("{prefix}.w1"), (d, d), d, rng)?;
        store.add(&format!("{prefix}.b1"), Array2::zeros((1, d)))?;
        store.add_uniform(&format!("{prefix}.w2"), (d, 1), d, rng)?;
        store.add(&format!("{prefix}.b2"), Array2::zeros((1, 1)))?;
        Self::bind(store, prefix)
    }

    fn bind(store: &ParamStore, prefix: &str) -> Result<Self, DiffError> {
        let id = |n: &str| store.id(&format!("{prefix}.{n}"));
        Ok(Self { w1: id("w1")?, b1: id("b1")?, w2: id("w2")?, b2: id("b2")? })
    }

    fn forward(&self, t: &mut Tape, s: &ParamStore, x: Var, slope: f64) -> Result<Var, DiffError> {
        let w1 = t.param(s, self.w1);
        let b1 = t.param(s, self.b1);
        let h = t.matmul(x, w1)?;
        let h = t.add_row(h, b1)?;
        let h = t.leaky_relu(h, slope);
        let w2 = t.param(s, self.w2);
        let b2 = t.param(s, self.b2);
        let h = t.matmul(h, w2)?;
        t.add_row(h, b2)
    }
}

#[derive(Clone, Debug)]
enum Heads {
    Dqn { q: Decoder },
    A2c { actor: Decoder, critic: Decoder },
}

/// Outputs of one batched forward pass.
#[derive(Copy, Clone, Debug)]
pub struct HeadOutput {
    /// Q-values (DQN) or policy logits (A2C), one row per phase.
    pub scores: Var,
    /// State values per graph (A2C only).
    pub values: Option<Var>,
}

const AGENT_KEY: &str = "agent";
const ENCODING_KEY: &str = "encoding";

/// Encoder plus policy head sharing one parameter store across intersections.
#[derive(Clone, Debug)]
pub struct Agent {
    pub config: AgentConfig,
    pub encoding: EncodingConfig,
    pub store: ParamStore,
    encoder: Encoder,
    heads: Heads,
    target: Option<ParamStore>,
    updates: u64,
    rng: ChaCha8Rng,
}

impl Agent {
    pub fn new(config: AgentConfig, encoding: EncodingConfig, seed: u64) -> Result<Self, AgentError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let enc_cfg = EncoderConfig {
            latent: config.latent,
            heads: config.heads,
            dropout: config.dropout,
            ..EncoderConfig::new(encoding.feature_dim())
        };
        Encoder::register(&mut store, enc_cfg, &mut rng)?;
        match config.head {
            HeadKind::Dqn => {
                Decoder::register(&mut store, "dqn", config.latent, &mut rng)?;
            }
            HeadKind::A2c => {
                Decoder::register(&mut store, "actor", config.latent, &mut rng)?;
                Decoder::register(&mut store, "critic", config.latent, &mut rng)?;
            }
        }
        store.set_metadata(AGENT_KEY, &serde_json::to_string(&config).expect("serializes"));
        store.set_metadata(ENCODING_KEY, &serde_json::to_string(&encoding).expect("serializes"));
        Self::from_store(store, rng)
    }

    fn from_store(store: ParamStore, rng: ChaCha8Rng) -> Result<Self, AgentError> {
        let meta = |k: &str| {
            store.metadata().get(k).cloned().ok_or_else(|| AgentError::Checkpoint(format!("missing '{k}' metadata")))
        };
        let config: AgentConfig = serde_json::from_str(&meta(AGENT_KEY)?).map_err(|e| AgentError::Checkpoint(e.to_string()))?;
        let encoding: EncodingConfig =
            serde_json::from_str(&meta(ENCODING_KEY)?).map_err(|e| AgentError::Checkpoint(e.to_string()))?;
        let encoder = Encoder::bind(&store)?;
        if encoder.config.input_dim != encoding.feature_dim() {
            return Err(AgentError::Checkpoint(format!(
                "encoder expects {} features, encoding produces {}",
                encoder.config.input_dim,
                encoding.feature_dim()
            )));
        }
        let heads = match config.head {
            HeadKind::Dqn => Heads::Dqn { q: Decoder::bind(&store, "dqn")? },
            HeadKind::A2c => Heads::A2c { actor: Decoder::bind(&store, "actor")?, critic: Decoder::bind(&store, "critic")? },
        };
        let target = matches!(config.head, HeadKind::Dqn).then(|| store.clone());
        Ok(Self { config, encoding, store, encoder, heads, target, updates: 0, rng })
    }

    pub fn save(&self, path: &Path) -> Result<(), AgentError> {
        Ok(self.store.save(path)?)
    }

    /// Loads a checkpoint; the rng seeds dropout and minibatch sampling for
    /// any further training.
    pub fn load(path: &Path, seed: u64) -> Result<Self, AgentError> {
        Self::from_store(ParamStore::load(path)?, ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn encoder(&self) -> &Encoder {
        &self.encoder
    }

    pub fn kind(&self) -> HeadKind {
        self.config.head
    }

    /// Optimizer steps taken so far; transitions carry this as their policy version.
    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn target_store(&self) -> Option<&ParamStore> {
        self.target.as_ref()
    }

    /// Batched forward with explicit parameters (online or target).
    pub fn forward(
        &self,
        t: &mut Tape,
        store: &ParamStore,
        batch: &GraphBatch,
        rng: Option<&mut ChaCha8Rng>,
    ) -> Result<HeadOutput, AgentError> {
        let emb = self.encoder.forward(t, store, batch, rng)?.phases;
        let slope = self.encoder.config.slope;
        Ok(match &self.heads {
            Heads::Dqn { q } => HeadOutput { scores: q.forward(t, store, emb, slope)?, values: None },
            Heads::A2c { actor, critic } => {
                let scores = actor.forward(t, store, emb, slope)?;
                let pooled = t.scatter_mean_rows(emb, &batch.phase_graph, batch.num_graphs)?;
                let values = critic.forward(t, store, pooled, slope)?;
                HeadOutput { scores, values: Some(values) }
            }
        })
    }

    fn split(batch: &GraphBatch, col: &Array2<f64>) -> Vec<Vec<f64>> {
        (0..batch.num_graphs).map(|g| (batch.phase_offsets[g]..batch.phase_offsets[g + 1]).map(|r| col[[r, 0]]).collect()).collect()
    }

    fn scores_with(&self, store: &ParamStore, graphs: &[&StateGraph]) -> Result<Vec<Vec<f64>>, AgentError> {
        let batch = GraphBatch::new(graphs)?;
        let mut t = Tape::new();
        let out = self.forward(&mut t, store, &batch, None)?;
        Ok(Self::split(&batch, t.value(out.scores)))
    }

    /// Per-phase Q-values (DQN) or logits (A2C) of each graph, evaluation mode.
    pub fn scores(&self, graphs: &[&StateGraph]) -> Result<Vec<Vec<f64>>, AgentError> {
        self.scores_with(&self.store, graphs)
    }

    /// State values of each graph (A2C only), evaluation mode.
    pub fn state_values(&self, graphs: &[&StateGraph]) -> Result<Vec<f64>, AgentError> {
        let batch = GraphBatch::new(graphs)?;
        let mut t = Tape::new();
        let out = self.forward(&mut t, &self.store, &batch, None)?;
        let v = out.values.ok_or(AgentError::WrongHead { head: "a2c", actual: "dqn" })?;
        Ok(t.value(v).column(0).to_vec())
    }

    /// Actions for every graph during training: ε-greedy on Q or sampled from π.
    pub fn explore(&mut self, graphs: &[&StateGraph], epsilon: f64) -> Result<Vec<usize>, AgentError> {
        let scores = self.scores(graphs)?;
        let kind = self.config.head;
        Ok(scores
            .iter()
            .map(|s| match kind {
                HeadKind::Dqn => epsilon_greedy(s, epsilon, &mut self.rng),
                HeadKind::A2c => sample_softmax(s, &mut self.rng),
            })
            .collect())
    }

    /// Loss of the online network against fixed targets `y` for the taken actions.
    pub fn dqn_loss(
        &self,
        t: &mut Tape,
        store: &ParamStore,
        batch: &GraphBatch,
        actions: &[usize],
        y: &[f64],
        rng: Option<&mut ChaCha8Rng>,
    ) -> Result<Var, AgentError> {
        let out = self.forward(t, store, batch, rng)?;
        let rows = taken_rows(batch, actions)?;
        let q = t.gather_rows(out.scores, &rows)?;
        let y = t.constant(Array2::from_shape_vec((y.len(), 1), y.to_vec()).expect("column"));
        let d = t.sub(q, y)?;
        let h = t.huber(d, 1.0);
        Ok(t.mean(h))
    }

    /// One Double-DQN minibatch update. Returns `None` while the buffer holds
    /// fewer than one batch.
    pub fn dqn_update(&mut self, buffer: &ReplayBuffer) -> Result<Option<f64>, AgentError> {
        if self.config.head != HeadKind::Dqn {
            return Err(AgentError::WrongHead { head: "dqn", actual: self.config.head.name() });
        }
        if buffer.len() < self.config.batch_size {
            return Ok(None);
        }
        let sample = buffer.sample(self.config.batch_size, &mut self.rng);
        let states: Vec<&StateGraph> = sample.iter().map(|t| t.state.as_ref()).collect();
        let nexts: Vec<&StateGraph> = sample.iter().map(|t| t.next.as_ref()).collect();
        let online_next = self.scores_with(&self.store, &nexts)?;
        let target_next = self.scores_with(self.target.as_ref().expect("dqn keeps a target"), &nexts)?;
        let rewards: Vec<f64> = sample.iter().map(|t| t.reward).collect();
        let dones: Vec<bool> = sample.iter().map(|t| t.done).collect();
        let y = double_dqn_target(&rewards, &dones, &online_next, &target_next, self.config.discount);
        let actions: Vec<usize> = sample.iter().map(|t| t.action).collect();
        let batch = GraphBatch::new(&states)?;
        let mut t = Tape::new();
        let mut rng = self.rng.clone();
        let loss = self.dqn_loss(&mut t, &self.store, &batch, &actions, &y, Some(&mut rng))?;
        self.rng = rng;
        t.backward(loss, &mut self.store)?;
        self.apply_gradients();
        if self.updates % self.config.target_sync == 0 {
            self.sync_target();
        }
        Ok(Some(t.scalar(loss)))
    }

    /// Advantage actor-critic update from transitions produced by the current
    /// policy. Returns (actor loss, critic loss).
    pub fn a2c_update(&mut self, transitions: &[Transition]) -> Result<(f64, f64), AgentError> {
        if self.config.head != HeadKind::A2c {
            return Err(AgentError::WrongHead { head: "a2c", actual: self.config.head.name() });
        }
        if transitions.is_empty() {
            return Err(AgentError::Config("empty on-policy batch".into()));
        }
        for tr in transitions {
            if tr.policy_version != self.updates {
                return Err(AgentError::StaleTransition { got: tr.policy_version, current: self.updates });
            }
        }
        let nexts: Vec<&StateGraph> = transitions.iter().map(|t| t.next.as_ref()).collect();
        let v_next = self.state_values(&nexts)?;
        let y: Vec<f64> = transitions
            .iter()
            .zip(&v_next)
            .map(|(tr, v)| if tr.done { tr.reward } else { tr.reward + self.config.discount * v })
            .collect();
        let states: Vec<&StateGraph> = transitions.iter().map(|t| t.state.as_ref()).collect();
        let actions: Vec<usize> = transitions.iter().map(|t| t.action).collect();
        let batch = GraphBatch::new(&states)?;
        let mut t = Tape::new();
        let mut rng = self.rng.clone();
        let (actor, critic, total) = self.a2c_loss(&mut t, &self.store, &batch, &actions, &y, Some(&mut rng))?;
        self.rng = rng;
        t.backward(total, &mut self.store)?;
        self.apply_gradients();
        Ok((t.scalar(actor), t.scalar(critic)))
    }

    /// Actor loss `-mean(log π(a|s) A)` with the advantage held constant,
    /// critic loss `mean(A²)`, and their weighted sum.
    pub fn a2c_loss(
        &self,
        t: &mut Tape,
        store: &ParamStore,
        batch: &GraphBatch,
        actions: &[usize],
        y: &[f64],
        rng: Option<&mut ChaCha8Rng>,
    ) -> Result<(Var, Var, Var), AgentError> {
        let out = self.forward(t, store, batch, rng)?;
        let values = out.values.ok_or(AgentError::WrongHead { head: "a2c", actual: "dqn" })?;
        let y_col = t.constant(Array2::from_shape_vec((y.len(), 1), y.to_vec()).expect("column"));
        let adv = t.sub(y_col, values)?;
        let adv_const = t.constant(t.value(adv).clone());
        let logp = t.grouped_log_softmax(out.scores, &batch.phase_graph)?;
        let taken = t.gather_rows(logp, &taken_rows(batch, actions)?)?;
        let weighted = t.mul(taken, adv_const)?;
        let actor = t.mean(weighted);
        let actor = t.scale(actor, -1.0);
        let sq = t.mul(adv, adv)?;
        let critic = t.mean(sq);
        let scaled = t.scale(critic, self.config.critic_coef);
        let total = t.add(actor, scaled)?;
        Ok((actor, critic, total))
    }

    fn apply_gradients(&mut self) {
        if self.config.grad_clip > 0.0 {
            self.store.clip_grad_norm(self.config.grad_clip);
        }
        self.store.adamw_step(&self.config.optimizer());
        self.updates += 1;
    }

    pub fn sync_target(&mut self) {
        if let Some(t) = &mut self.target {
            t.copy_values_from(&self.store).expect("identical layout");
        }
    }
}

fn taken_rows(batch: &GraphBatch, actions: &[usize]) -> Result<Vec<usize>, AgentError> {
    if actions.len() != batch.num_graphs {
        return Err(AgentError::Config(format!("{} actions for {} graphs", actions.len(), batch.num_graphs)));
    }
    actions
        .iter()
        .enumerate()
        .map(|(g, &a)| {
            let n = batch.phases_of(g);
            if a >= n {
                Err(AgentError::BadAction { action: a, phases: n })
            } else {
                Ok(batch.phase_offsets[g] + a)
            }
        })
        .collect()
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

pub fn epsilon_greedy<R: Rng + ?Sized>(values: &[f64], epsilon: f64, rng: &mut R) -> usize {
    assert!(!values.is_empty(), "no actions");
    if epsilon > 0.0 && rng.random::<f64>() < epsilon {
        rng.random_range(0..values.len())
    } else {
        argmax(values)
    }
}

/// Draw from the softmax distribution of `logits`.
pub fn sample_softmax<R: Rng + ?Sized>(logits: &[f64], rng: &mut R) -> usize {
    assert!(!logits.is_empty(), "no actions");
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let total: f64 = w.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, wi) in w.iter().enumerate() {
        if u < *wi {
            return i;
        }
        u -= wi;
    }
    logits.len() - 1
}

/// `y = r + γ Q_target(s', argmax_a Q_online(s', a))`, or `y = r` when done.
pub fn double_dqn_target(
    rewards: &[f64],
    dones: &[bool],
    next_online: &[Vec<f64>],
    next_target: &[Vec<f64>],
    discount: f64,
) -> Vec<f64> {
    rewards
        .iter()
        .enumerate()
        .map(|(i, &r)| if dones[i] { r } else { r + discount * next_target[i][argmax(&next_online[i])] })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::gradcheck;
    use crate::encoding::build_state_graph;
    use crate::network::fixtures::{corridor, four_way};
    use crate::network::{IntersectionId, LaneId, RoadNetwork};
    use crate::sim::{Simulation, Vehicle};
    use std::sync::Arc;

    fn small(head: HeadKind) -> AgentConfig {
        AgentConfig { head, latent: 16, heads: 2, batch_size: 4, ..AgentConfig::default() }
    }

    fn four_way_graph(positions: &[(u32, f64)]) -> StateGraph {
        let mut sim = Simulation::new(Arc::new(RoadNetwork::try_from(four_way(50.0)).unwrap()));
        for (i, &(lane, p)) in positions.iter().enumerate() {
            sim.place(Vehicle::new(i as u32, vec![LaneId(lane), LaneId(4 + (lane + 2) % 4)], 0.0), p, 0.0).unwrap();
        }
        build_state_graph(sim.network(), sim.state(), IntersectionId(0), EncodingConfig::default()).unwrap()
    }

    #[test]
    fn selection_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(epsilon_greedy(&[0.1, 0.5, 0.5], 0.0, &mut rng), 1);
        assert_eq!(argmax(&[0.0, 0.0]), 0);
        let mut counts = [0usize; 4];
        for _ in 0..10_000 {
            counts[epsilon_greedy(&[9.0, 0.0, 0.0, 0.0], 1.0, &mut rng)] += 1;
        }
        let chi: f64 = counts.iter().map(|&c| (c as f64 - 2500.0).powi(2) / 2500.0).sum();
        // Chi-square critical value, 3 dof, alpha 0.001.
        assert!(chi < 16.27, "{counts:?}");
        let mut counts = [0usize; 3];
        for _ in 0..10_000 {
            counts[sample_softmax(&[0.7, 0.7, 0.7], &mut rng)] += 1;
        }
        let e = 10_000.0 / 3.0;
        let chi: f64 = counts.iter().map(|&c| (c as f64 - e).powi(2) / e).sum();
        assert!(chi < 13.82, "{counts:?}");
    }

    #[test]
    fn epsilon_schedule() {
        let c = AgentConfig::default();
        assert_eq!(c.epsilon(0), 1.0);
        assert!((c.epsilon(1000) - 0.525).abs() < 1e-12);
        assert_eq!(c.epsilon(2000), 0.05);
        assert_eq!(c.epsilon(9000), 0.05);
    }

    #[test]
    fn double_dqn_target_examples() {
        let online = vec![vec![1.0, 2.0]];
        let target = vec![vec![5.0, 3.0]];
        assert_eq!(double_dqn_target(&[1.0], &[false], &online, &target, 0.0), vec![1.0]);
        // Online picks action 1, so the target's value at 1 (3.0) is used, not its max (5.0).
        assert_eq!(double_dqn_target(&[1.0], &[false], &online, &target, 0.5), vec![2.5]);
        assert_eq!(double_dqn_target(&[-2.0], &[true], &online, &target, 0.9), vec![-2.0]);
    }

    #[test]
    fn scores_follow_phase_count_and_order() {
        let agent = Agent::new(small(HeadKind::Dqn), EncodingConfig::default(), 1).unwrap();
        let g4 = four_way_graph(&[(0, 10.0), (1, 30.0)]);
        let sim = Simulation::new(Arc::new(RoadNetwork::try_from(corridor()).unwrap()));
        let g2 = build_state_graph(sim.network(), sim.state(), IntersectionId(1), EncodingConfig::default()).unwrap();
        let s = agent.scores(&[&g4, &g2]).unwrap();
        assert_eq!((s[0].len(), s[1].len()), (4, 2));
        assert_eq!(s, agent.scores(&[&g4, &g2]).unwrap());
        // Reversing the order of evaluation yields the same per-intersection values.
        let r = agent.scores(&[&g2, &g4]).unwrap();
        for (a, b) in s[0].iter().zip(&r[1]) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn dqn_gradcheck_single_transition() {
        let mut agent = Agent::new(small(HeadKind::Dqn), EncodingConfig::default(), 2).unwrap();
        let g = four_way_graph(&[(0, 4.0), (2, 21.0)]);
        let batch = GraphBatch::new(&[&g]).unwrap();
        let probe = agent.clone();
        let rep = gradcheck(&mut agent.store, 1e-5, 1e-6, |t, s| {
            probe.dqn_loss(t, s, &batch, &[2], &[0.3], None).map_err(|e| match e {
                AgentError::Diff(d) => d,
                other => panic!("{other}"),
            })
        })
        .unwrap();
        assert!(rep.worst < 1e-4, "{rep:?}");
    }

    fn transitions(graphs: &[StateGraph], version: u64) -> Vec<Transition> {
        graphs
            .iter()
            .enumerate()
            .map(|(i, g)| Transition {
                state: Arc::new(g.clone()),
                action: i % 4,
                reward: -0.1 * i as f64,
                next: Arc::new(g.clone()),
                done: i % 2 == 0,
                policy_version: version,
            })
            .collect()
    }

    #[test]
    fn dqn_overfits_fixed_batch() {
        let cfg = AgentConfig { target_sync: 1_000_000, dropout: 0.0, ..small(HeadKind::Dqn) };
        let mut agent = Agent::new(cfg, EncodingConfig::default(), 3).unwrap();
        let graphs: Vec<StateGraph> =
            (0..4).map(|k| four_way_graph(&[(k, 5.0 + 3.0 * k as f64), ((k + 1) % 4, 30.0)])).collect();
        let mut buf = ReplayBuffer::new(4);
        for t in transitions(&graphs, 0) {
            buf.push(t);
        }
        let first = agent.dqn_update(&buf).unwrap().unwrap();
        let mut last = first;
        for _ in 0..199 {
            last = agent.dqn_update(&buf).unwrap().unwrap();
        }
        assert!(last < 0.1 * first, "{first} -> {last}");
        assert_eq!(agent.updates(), 200);
        let mut small_buf = ReplayBuffer::new(10);
        small_buf.push(transitions(&graphs, 0).remove(0));
        assert_eq!(agent.dqn_update(&small_buf).unwrap(), None);
    }

    #[test]
    fn target_network_syncs_on_schedule() {
        let cfg = AgentConfig { target_sync: 3, ..small(HeadKind::Dqn) };
        let mut agent = Agent::new(cfg, EncodingConfig::default(), 4).unwrap();
        let graphs: Vec<StateGraph> = (0..4).map(|k| four_way_graph(&[(k, 9.0)])).collect();
        let mut buf = ReplayBuffer::new(8);
        for t in transitions(&graphs, 0) {
            buf.push(t);
        }
        agent.dqn_update(&buf).unwrap();
        agent.dqn_update(&buf).unwrap();
        assert_ne!(agent.target_store().unwrap(), &agent.store);
        agent.dqn_update(&buf).unwrap();
        let id = agent.store.id("dqn.w2").unwrap();
        assert_eq!(agent.target_store().unwrap().get(id).value, agent.store.get(id).value);
    }

    #[test]
    fn a2c_rules() {
        let cfg = AgentConfig { dropout: 0.0, weight_decay: 0.0, ..small(HeadKind::A2c) };
        let mut agent = Agent::new(cfg, EncodingConfig::default(), 5).unwrap();
        let g = four_way_graph(&[(0, 6.0), (3, 17.0)]);
        let v = agent.state_values(&[&g]).unwrap()[0];
        // Positive advantage raises the taken action's log-probability.
        let before = agent.scores(&[&g]).unwrap()[0].clone();
        let tr = Transition {
            state: Arc::new(g.clone()),
            action: 2,
            reward: v + 1.0,
            next: Arc::new(g.clone()),
            done: true,
            policy_version: 0,
        };
        let (_, critic) = agent.a2c_update(std::slice::from_ref(&tr)).unwrap();
        assert!((critic - 1.0).abs() < 1e-12);
        let after = agent.scores(&[&g]).unwrap()[0].clone();
        let logp = |l: &[f64], a: usize| l[a] - l.iter().map(|x| x.exp()).sum::<f64>().ln();
        assert!(logp(&after, 2) > logp(&before, 2));
        assert!(matches!(agent.a2c_update(&[tr]), Err(AgentError::StaleTransition { got: 0, current: 1 })));

        // Zero advantage: no actor gradient; exact critic: zero critic loss.
        let v = agent.state_values(&[&g]).unwrap()[0];
        let batch = GraphBatch::new(&[&g]).unwrap();
        let mut t = Tape::new();
        let (actor, critic, total) = agent.a2c_loss(&mut t, &agent.store, &batch, &[1], &[v], None).unwrap();
        assert_eq!(t.scalar(critic), 0.0);
        assert_eq!(t.scalar(actor), 0.0);
        let mut probe = agent.store.clone();
        t.backward(total, &mut probe).unwrap();
        assert!(probe.grad_norm() < 1e-12);
    }

    #[test]
    fn wrong_head_is_rejected() {
        let mut a = Agent::new(small(HeadKind::A2c), EncodingConfig::default(), 6).unwrap();
        assert!(matches!(a.dqn_update(&ReplayBuffer::new(1)), Err(AgentError::WrongHead { .. })));
    }

    #[test]
    fn checkpoint_round_trip() {
        let agent = Agent::new(small(HeadKind::A2c), EncodingConfig::default(), 7).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.ckpt");
        agent.save(&p).unwrap();
        let back = Agent::load(&p, 0).unwrap();
        assert_eq!(back.store, agent.store);
        assert_eq!(back.config, agent.config);
        let g = four_way_graph(&[(1, 12.0)]);
        assert_eq!(back.scores(&[&g]).unwrap(), agent.scores(&[&g]).unwrap());
    }
}
