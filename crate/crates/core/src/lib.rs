//! Multi-task vehicular service offloading.
//!
//! Delay and mobility models for BS, AP and neighbouring-vehicle edge nodes,
//! an episodic environment over service DAGs, an asynchronous advantage
//! actor-critic learner and reference baselines.

pub mod a3c;
pub mod baselines;
pub mod channel;
pub mod checkpoint;
pub mod nn;
pub mod mobility;
pub mod rng;
pub mod env;
pub mod scenario;
