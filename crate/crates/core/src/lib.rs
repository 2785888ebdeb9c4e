//! Gossip-based multi-agent learning on several K-armed bandits.
//!
//! Agents are split into groups, one group per bandit. Each agent runs UCB on
//! a small active set and, at the end of every phase, pulls one arm
//! recommendation from a uniformly random agent. The crate provides the
//! environment, the phase schedule, the gossip fabric, the learning rules and
//! baselines, a rumor-spreading lab, closed-form regret bounds and a
//! deterministic simulation runner.

pub mod bounds;
pub mod cli;
pub mod config;
pub mod env;
pub mod events;
pub mod gossip;
pub mod instance_file;
pub mod output;
pub mod phase;
pub mod policy;
pub mod rng;
pub mod rumor;
pub mod runner;

pub use config::{Scenario, SimConfig};
pub use env::{Assignment, BanditSet};
pub use runner::{run_experiment, Experiment};
