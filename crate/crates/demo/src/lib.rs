//! Browser bindings: departure-time sampling, the pressure vs. log-distance
//! reward on hand-placed queues, and a live single-intersection run under a
//! selectable heuristic controller.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use sigctl::agents::policy::baseline;
use sigctl::agents::{Env, EnvConfig, Policy};
use sigctl::domainrand::{beta_departures, DomainConfig, Scenario};
use sigctl::network::{IntersectionId, LaneId, RoadNetwork};
use sigctl::reward::{log_energy, pressure, RewardConfig};
use sigctl::sim::{Simulation, Vehicle};
use wasm_bindgen::prelude::*;

fn js_err(e: impl std::fmt::Display) -> JsValue {
    JsValue::from_str(&e.to_string())
}

/// Histogram of `count` Beta(alpha, beta) departures over `[0, t_max]`.
#[wasm_bindgen]
pub fn departure_histogram(alpha: f64, beta: f64, t_max: f64, count: usize, bins: usize, seed: u64) -> Result<Vec<u32>, JsValue> {
    if bins == 0 || !(t_max > 0.0) {
        return Err(js_err("need bins > 0 and t_max > 0"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let times = beta_departures(alpha, beta, count, t_max, &mut rng).map_err(js_err)?;
    let mut hist = vec![0u32; bins];
    for t in times {
        hist[((t / t_max * bins as f64) as usize).min(bins - 1)] += 1;
    }
    Ok(hist)
}

fn single_intersection(seed: u64) -> Result<Arc<RoadNetwork>, JsValue> {
    let cfg = DomainConfig { lane_length_range: (150.0, 150.0), ..DomainConfig::single_four_way() }.with_seed(seed);
    Ok(Arc::clone(&Scenario::generate(&cfg).map_err(js_err)?.network))
}

/// Places `queue` stopped vehicles on the first incoming lane of a 150 m
/// approach, `gap_m` apart and `offset_m` back from the stop line, and returns
/// `[pressure, log_energy]` of that lane's busiest movement and the lane.
#[wasm_bindgen]
pub fn queue_rewards(queue: u32, offset_m: f64, gap_m: f64) -> Result<Vec<f64>, JsValue> {
    let net = single_intersection(0)?;
    let lane = net.intersection(IntersectionId(0)).incoming[0];
    let len = net.lane(lane).length_m;
    let exit = net.movements_out_of(lane).map_err(js_err)?[0];
    let out_lane = net.movement(exit).out_lane;
    let mut sim = Simulation::new(Arc::clone(&net));
    for i in 0..queue {
        let pos = offset_m + gap_m * i as f64;
        if pos > len {
            break;
        }
        sim.place(Vehicle::new(i, vec![lane, out_lane], 0.0), pos, 0.0).map_err(js_err)?;
    }
    let eps = RewardConfig::default().epsilon;
    Ok(vec![pressure(&net, sim.state(), exit), log_energy(&net, sim.state(), lane, eps), len])
}

/// A randomized single intersection driven by a heuristic controller.
#[wasm_bindgen]
pub struct Demo {
    env: Env,
    policy: Box<dyn Policy + Send>,
    rng: ChaCha8Rng,
}

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u64, vehicles: u32, controller: &str) -> Result<Demo, JsValue> {
        let cfg = DomainConfig { vehicle_pool: (vehicles, vehicles), ..DomainConfig::single_four_way() }.with_seed(seed);
        let scenario = Scenario::generate(&cfg).map_err(js_err)?;
        let env = Env::from_scenario(&scenario, EnvConfig::default()).map_err(js_err)?;
        Ok(Demo { env, policy: baseline(controller).map_err(js_err)?, rng: ChaCha8Rng::seed_from_u64(seed) })
    }

    pub fn set_controller(&mut self, controller: &str) -> Result<(), JsValue> {
        self.policy = baseline(controller).map_err(js_err)?;
        Ok(())
    }

    pub fn finished(&self) -> bool {
        self.env.is_over()
    }

    /// Advances one decision tick and returns a JSON snapshot.
    pub fn tick(&mut self) -> Result<String, JsValue> {
        if !self.env.is_over() {
            let actions = self.policy.act(&self.env, &mut self.rng).map_err(js_err)?;
            self.env.step(&actions).map_err(js_err)?;
        }
        Ok(self.snapshot())
    }

    /// Incoming lanes with vehicle distances to the stop line and signal state.
    pub fn snapshot(&self) -> String {
        let net = self.env.network();
        let state = self.env.sim().state();
        let ctl = &state.controllers[0];
        let lanes: Vec<_> = net
            .intersection(IntersectionId(0))
            .incoming
            .iter()
            .map(|&l: &LaneId| {
                let moves = net.movements_out_of(l).unwrap_or(&[]);
                json!({
                    "length": net.lane(l).length_m,
                    "green": moves.iter().any(|&m| ctl.allows(m, net)),
                    "vehicles": state.lanes[l.index()].iter().map(|v| [v.pos_m, v.speed]).collect::<Vec<_>>(),
                })
            })
            .collect();
        json!({
            "time": self.env.clock(),
            "standing": self.env.standing(),
            "queue": self.env.queue_length(),
            "travel_time": self.env.mean_travel_time(),
            "arrived": state.arrivals.len(),
            "total": self.env.total_vehicles(),
            "lanes": lanes,
        })
        .to_string()
    }
}
