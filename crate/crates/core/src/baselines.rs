//! Reference policies over the same environment as the learner.

use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::a3c::{evaluate_with, A3cError, EvalConfig, EvalRun};
use crate::env::{Action, Env, EnvError, EnvState};
use crate::rng::{stream, stream_rng, SimRng};
use crate::scenario::Scenario;

/// Largest service the brute-force search accepts.
pub const EXHAUSTIVE_MAX_TASKS: usize = 6;

/// Slot with the least delay; ties go to the lowest index.
pub fn greedy_decide(delays: &[f64]) -> usize {
    let mut best = 0;
    for (i, d) in delays.iter().enumerate() {
        if *d < delays[best] {
            best = i;
        }
    }
    best
}

/// Greedy choice for the environment's current task.
pub fn greedy_action(env: &Env) -> Result<usize, EnvError> {
    Ok(greedy_decide(&env.slot_delays()?))
}

pub fn local_only(_state: &EnvState) -> usize {
    0
}

/// Uniform over slots from a seeded stream.
#[derive(Debug, Clone)]
pub struct RandomPolicy {
    rng: SimRng,
}

impl RandomPolicy {
    pub fn new(seed: u64) -> Self {
        Self { rng: stream_rng(seed, stream::BASELINE) }
    }

    pub fn decide(&mut self, state: &EnvState) -> usize {
        self.rng.random_range(0..state.node_features.len())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Baseline {
    Greedy,
    Local,
    Random,
}

impl Baseline {
    pub const ALL: [Baseline; 3] = [Baseline::Greedy, Baseline::Local, Baseline::Random];

    pub fn name(self) -> &'static str {
        match self {
            Self::Greedy => "greedy",
            Self::Local => "local",
            Self::Random => "random",
        }
    }
}

impl FromStr for Baseline {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "greedy" => Ok(Self::Greedy),
            "local" => Ok(Self::Local),
            "random" => Ok(Self::Random),
            other => Err(format!("unknown baseline {other:?}; expected greedy, local or random")),
        }
    }
}

pub fn evaluate_baseline(scenario: Arc<Scenario>, baseline: Baseline, cfg: &EvalConfig) -> Result<EvalRun, A3cError> {
    let mut env = Env::new(scenario)?;
    match baseline {
        Baseline::Greedy => evaluate_with(&mut env, cfg, |env, _| Ok(greedy_action(env)?)),
        Baseline::Local => evaluate_with(&mut env, cfg, |_, s| Ok(local_only(s))),
        Baseline::Random => {
            let mut policy = RandomPolicy::new(cfg.seed);
            evaluate_with(&mut env, cfg, |_, s| Ok(policy.decide(s)))
        }
    }
}

/// Best placement sequence for one seeded episode.
#[derive(Debug, Clone, PartialEq)]
pub struct Optimum {
    pub actions: Vec<usize>,
    pub service_delay: f64,
}

/// Depth-first enumeration of every placement sequence. Ties keep the
/// lexicographically smallest sequence.
pub fn exhaustive_optimum(env: &Env, seed: u64) -> Result<Optimum, EnvError> {
    let mut root = env.clone();
    root.reset(seed)?;
    let m = root.service().map_or(0, |s| s.len());
    if m > EXHAUSTIVE_MAX_TASKS {
        return Err(EnvError::Lifecycle("service too long for exhaustive search"));
    }
    let mut best = Optimum { actions: Vec::new(), service_delay: f64::INFINITY };
    let mut path = Vec::with_capacity(m);
    search(&root, &mut path, &mut best)?;
    Ok(best)
}

fn search(env: &Env, path: &mut Vec<usize>, best: &mut Optimum) -> Result<(), EnvError> {
    for a in 0..env.action_count() {
        let mut next = env.clone();
        next.step(Action(a))?;
        path.push(a);
        if next.is_done() {
            let d = next.trace()?.service_delay;
            if d < best.service_delay {
                *best = Optimum { actions: path.clone(), service_delay: d };
            }
        } else {
            search(&next, path, best)?;
        }
        path.pop();
    }
    Ok(())
}
