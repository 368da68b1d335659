//! Uniform experience replay.

use std::sync::Arc;

use rand::seq::index::sample;
use rand::Rng;

use crate::encoding::StateGraph;

/// One intersection's experience over a decision tick.
#[derive(Clone, Debug)]
pub struct Transition {
    pub state: Arc<StateGraph>,
    pub action: usize,
    pub reward: f64,
    pub next: Arc<StateGraph>,
    pub done: bool,
    /// Number of optimizer steps taken before the action was chosen.
    pub policy_version: u64,
}

/// Fixed-capacity ring buffer; the oldest transition is overwritten first.
#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    items: Vec<Transition>,
    capacity: usize,
    next: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self { items: Vec::new(), capacity, next: 0 }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    /// Indices of `n` distinct stored transitions, uniformly at random.
    pub fn sample_indices<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<usize> {
        sample(rng, self.items.len(), n.min(self.items.len())).into_vec()
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<&Transition> {
        self.sample_indices(n, rng).into_iter().map(|i| &self.items[i]).collect()
    }

    pub fn get(&self, i: usize) -> &Transition {
        &self.items[i]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoding::{build_state_graph, EncodingConfig};
    use crate::network::fixtures::corridor;
    use crate::network::{IntersectionId, RoadNetwork};
    use crate::sim::Simulation;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn graph() -> Arc<StateGraph> {
        let sim = Simulation::new(Arc::new(RoadNetwork::try_from(corridor()).unwrap()));
        Arc::new(build_state_graph(sim.network(), sim.state(), IntersectionId(0), EncodingConfig::default()).unwrap())
    }

    fn tr(g: &Arc<StateGraph>, reward: f64) -> Transition {
        Transition { state: g.clone(), action: 0, reward, next: g.clone(), done: false, policy_version: 0 }
    }

    #[test]
    fn ring_overwrites_oldest() {
        let g = graph();
        let mut b = ReplayBuffer::new(3);
        for r in 0..5 {
            b.push(tr(&g, r as f64));
        }
        assert_eq!(b.len(), 3);
        let mut rewards: Vec<f64> = (0..3).map(|i| b.get(i).reward).collect();
        rewards.sort_by(f64::total_cmp);
        assert_eq!(rewards, vec![2.0, 3.0, 4.0]);
    }

    #[test]
    fn batches_are_distinct() {
        let g = graph();
        let mut b = ReplayBuffer::new(100);
        for r in 0..100 {
            b.push(tr(&g, r as f64));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut idx = b.sample_indices(64, &mut rng);
        idx.sort();
        idx.dedup();
        assert_eq!(idx.len(), 64);
        assert_eq!(b.sample_indices(500, &mut rng).len(), 100);
    }

    #[test]
    fn sampling_is_uniform() {
        let g = graph();
        let mut b = ReplayBuffer::new(100);
        for r in 0..100 {
            b.push(tr(&g, r as f64));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut counts = [0usize; 100];
        let draws = 100_000;
        for _ in 0..draws {
            counts[b.sample_indices(1, &mut rng)[0]] += 1;
        }
        let p = 0.01;
        let mean = draws as f64 * p;
        let sd = (draws as f64 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((c as f64 - mean).abs() < 5.0 * sd, "{c}");
        }
    }
}
