//! Q-learning duty-cycle control for light-harvesting sensor nodes.
//!
//! The crate is layered bottom-up: [`trace`] loads and synthesizes
//! illuminance and motion traces, [`energy`] models the supercapacitor
//! node, [`env`] wraps both as an MDP, [`agent`] learns a Q-table on it,
//! [`baselines`] holds the comparison controllers, [`metrics`] scores
//! deployment logs and [`experiment`] ties them into reproducible suites.

pub mod agent;
pub mod baselines;
pub mod energy;
pub mod env;
pub mod experiment;
pub mod metrics;
pub mod qtable;
pub mod trace;
