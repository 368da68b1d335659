//! Generalizable traffic-signal control laboratory.
//!
//! A point-vehicle microsimulator, domain-randomized scenario generation, a
//! hierarchical graph-attention state encoder over segments, movements and
//! phases, log-distance rewards, and weight-tied Double-DQN / A2C agents that
//! share one parameter set across every intersection of a network.

pub mod network;
pub mod domainrand;
pub mod sim;
pub mod encoding;
pub mod autodiff;
pub mod encoder;
pub mod reward;
pub mod agents;
pub mod harness;
