use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::env::{encode_state, Action, Env, EnvState, EpisodeTrace, Norms};
use crate::nn::{forward_actor, NetParams};
use crate::rng::child_seed;
use crate::scenario::Scenario;

use super::A3cError;

/// Exponent on the discount inside the objective.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiscountExponent {
    /// `gamma^(t-1)` on step `t`.
    #[default]
    PerStep,
    /// `gamma^(M-1)` on every step.
    AsPrinted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub episodes: usize,
    pub seed: u64,
    pub gamma: f64,
    #[serde(default)]
    pub discount: DiscountExponent,
}

impl EvalConfig {
    pub fn new(episodes: usize, seed: u64) -> Self {
        Self { episodes, seed, gamma: 0.99, discount: DiscountExponent::PerStep }
    }

    /// Seed of the `i`-th evaluation episode; shared by every policy.
    pub fn episode_seed(&self, i: usize) -> u64 {
        child_seed(self.seed, i as u64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalMetrics {
    pub episodes: usize,
    pub mean_service_delay: f64,
    pub mean_task_delay: f64,
    pub objective_j: f64,
    /// Placements per action slot.
    pub slot_histogram: Vec<u64>,
}

impl EvalMetrics {
    pub fn slot_share(&self, slot: usize) -> f64 {
        let total: u64 = self.slot_histogram.iter().sum();
        if total == 0 {
            0.0
        } else {
            self.slot_histogram[slot] as f64 / total as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRun {
    pub metrics: EvalMetrics,
    pub traces: Vec<EpisodeTrace>,
}

/// `(1/M) sum_t gamma^e(t) r_t` over credited rewards.
pub fn episode_objective(trace: &EpisodeTrace, gamma: f64, discount: DiscountExponent) -> f64 {
    let m = trace.steps.len();
    if m == 0 {
        return 0.0;
    }
    let sum: f64 = match discount {
        DiscountExponent::PerStep => {
            let mut g = 1.0;
            trace
                .steps
                .iter()
                .map(|s| {
                    let v = g * s.credited_reward;
                    g *= gamma;
                    v
                })
                .sum()
        }
        DiscountExponent::AsPrinted => gamma.powi(m as i32 - 1) * trace.total_reward(),
    };
    sum / m as f64
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Runs `cfg.episodes` seeded episodes with `decide` choosing every slot.
pub fn evaluate_with<F>(env: &mut Env, cfg: &EvalConfig, mut decide: F) -> Result<EvalRun, A3cError>
where
    F: FnMut(&Env, &EnvState) -> Result<usize, A3cError>,
{
    let mut histogram = vec![0u64; env.action_count()];
    let mut traces = Vec::with_capacity(cfg.episodes);
    let (mut service, mut task, mut j) = (0.0, 0.0, 0.0);
    for i in 0..cfg.episodes {
        let mut state = Some(env.reset(cfg.episode_seed(i))?);
        while let Some(s) = state {
            let a = decide(env, &s)?;
            histogram.get_mut(a).map(|h| *h += 1);
            state = env.step(Action(a))?.next_state;
        }
        let trace = env.trace()?;
        service += trace.service_delay;
        task += trace.service_delay / trace.steps.len() as f64;
        j += episode_objective(&trace, cfg.gamma, cfg.discount);
        traces.push(trace);
    }
    let n = cfg.episodes.max(1) as f64;
    Ok(EvalRun {
        metrics: EvalMetrics {
            episodes: cfg.episodes,
            mean_service_delay: service / n,
            mean_task_delay: task / n,
            objective_j: j / n,
            slot_histogram: histogram,
        },
        traces,
    })
}

/// Greedy-action evaluation of a trained actor.
pub fn evaluate(actor: &NetParams, norms: &Norms, scenario: Arc<Scenario>, cfg: &EvalConfig) -> Result<EvalRun, A3cError> {
    let mut env = Env::new(scenario)?;
    super::check_compatible(actor, None, &env)?;
    evaluate_with(&mut env, cfg, |_, s| {
        let x = encode_state(s, norms)?;
        Ok(argmax(&forward_actor(actor, &x)?))
    })
}
