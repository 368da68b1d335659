//! Training over domain-randomized scenarios and episode evaluation.

use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Agent, AgentConfig, AgentError, Env, EnvConfig, EpisodeSummary, EvalRow, HeadKind, Policy, ReplayBuffer, TickOutcome, Transition};
use crate::domainrand::{DomainConfig, Scenario};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub decision_steps: usize,
    pub seed: u64,
    pub domain: DomainConfig,
    pub env: EnvConfig,
    pub agent: AgentConfig,
    /// Save a checkpoint every this many decision steps (0 disables).
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            decision_steps: 3000,
            seed: 0,
            domain: DomainConfig::default(),
            env: EnvConfig::default(),
            agent: AgentConfig::default(),
            checkpoint_every: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainLogRow {
    pub decision_step: usize,
    pub mean_reward: f64,
    pub mean_queue: f64,
    /// Empty until the first update.
    pub loss: Option<f64>,
    pub epsilon: f64,
}

pub struct TrainOutput {
    pub agent: Agent,
    pub log: Vec<TrainLogRow>,
    pub episodes: usize,
}

/// Trains a fresh agent. Every episode samples a new scenario; every
/// intersection acts through the shared policy and receives the global
/// reward. DQN performs one minibatch update per decision tick, A2C one
/// on-policy update from the tick's transitions.
pub fn train(config: &TrainConfig, checkpoint_dir: Option<&Path>) -> Result<TrainOutput, AgentError> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut agent = Agent::new(config.agent, config.env.encoding, rng.random())?;
    let mut buffer = ReplayBuffer::new(config.agent.replay_capacity);
    let mut log = Vec::with_capacity(config.decision_steps);
    let mut step = 0;
    let mut episodes = 0;
    while step < config.decision_steps {
        let scenario = Scenario::generate(&config.domain.clone().with_seed(rng.random()))?;
        let mut env = Env::from_scenario(&scenario, config.env)?;
        episodes += 1;
        let mut graphs: Vec<Arc<_>> = env.observe().into_iter().map(Arc::new).collect();
        while step < config.decision_steps && !env.is_over() {
            let epsilon = match config.agent.head {
                HeadKind::Dqn => config.agent.epsilon(step),
                HeadKind::A2c => 0.0,
            };
            let refs: Vec<_> = graphs.iter().map(|g| g.as_ref()).collect();
            let actions = agent.explore(&refs, epsilon)?;
            let version = agent.updates();
            let out = env.step(&actions)?;
            let next: Vec<Arc<_>> = env.observe().into_iter().map(Arc::new).collect();
            let fresh: Vec<Transition> = (0..graphs.len())
                .map(|v| Transition {
                    state: Arc::clone(&graphs[v]),
                    action: actions[v],
                    reward: out.signals[v],
                    next: Arc::clone(&next[v]),
                    done: out.done,
                    policy_version: version,
                })
                .collect();
            let loss = match config.agent.head {
                HeadKind::Dqn => {
                    fresh.into_iter().for_each(|t| buffer.push(t));
                    agent.dqn_update(&buffer)?
                }
                HeadKind::A2c => {
                    let (a, c) = agent.a2c_update(&fresh)?;
                    Some(a + config.agent.critic_coef * c)
                }
            };
            log.push(TrainLogRow {
                decision_step: step,
                mean_reward: out.rewards.iter().sum::<f64>() / out.rewards.len() as f64,
                mean_queue: env.queue_length(),
                loss,
                epsilon,
            });
            graphs = next;
            step += 1;
            if let Some(dir) = checkpoint_dir {
                if config.checkpoint_every > 0 && step % config.checkpoint_every == 0 {
                    agent.save(&dir.join(format!("checkpoint_{step:06}.bin")))?;
                }
            }
        }
    }
    Ok(TrainOutput { agent, log, episodes })
}

/// Runs `policy` until the episode ends, recording metrics after every tick.
pub fn evaluate(env: Env, policy: &mut dyn Policy, seed: u64) -> Result<(Vec<EvalRow>, EpisodeSummary), AgentError> {
    evaluate_with(env, policy, seed, &mut |_, _| {})
}

/// [`evaluate`] with a hook called after every tick.
pub fn evaluate_with(
    mut env: Env,
    policy: &mut dyn Policy,
    seed: u64,
    on_tick: &mut dyn FnMut(&Env, &TickOutcome),
) -> Result<(Vec<EvalRow>, EpisodeSummary), AgentError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::new();
    while !env.is_over() {
        let actions = policy.act(&env, &mut rng)?;
        let out = env.step(&actions)?;
        on_tick(&env, &out);
        rows.push(EvalRow {
            decision_step: env.ticks() - 1,
            time_s: env.clock(),
            travel_time: env.mean_travel_time(),
            queue_length: env.queue_length(),
            waiting_time: env.mean_waiting_time(),
            throughput: out.arrived,
            standing: env.standing(),
            reward: out.rewards.iter().sum::<f64>() / out.rewards.len() as f64,
        });
    }
    let summary = EpisodeSummary::from_rows(&rows, &env);
    Ok((rows, summary))
}
