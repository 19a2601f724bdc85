//! Asynchronous advantage actor-critic over the offloading environment.
//!
//! Workers own an environment and a snapshot of the global networks. Each
//! episode is rolled out with the snapshot, returns are computed backwards
//! from the terminal state, and the summed gradients are submitted to the
//! [`GlobalStore`] as one transaction.

mod eval;
mod store;

use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::checkpoint::Checkpoint;
use crate::env::{encode_state, encoded_len, Action, Env, EnvError, EpisodeTrace, Norms};
use crate::nn::{
    backward_actor, backward_critic, forward_actor, forward_critic, init_params, policy_entropy, Activation,
    Gradients, NetParams, NnError,
};
use crate::rng::{child_seed, stream, stream_rng};
use crate::scenario::Scenario;

pub use eval::{argmax, episode_objective, evaluate, evaluate_with, DiscountExponent, EvalConfig, EvalMetrics, EvalRun};
pub use store::{apply_async, GlobalStore, Snapshot};

#[derive(Debug, Error)]
pub enum A3cError {
    #[error("invalid hyperparameters: {0}")]
    Hyper(String),
    #[error("return needs at least one reward")]
    EmptyRewards,
    #[error("incompatible networks: {0}")]
    Incompatible(String),
    #[error("training diverged to non-finite parameters")]
    Diverged,
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Nn(#[from] NnError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Optimizer {
    Sgd,
    RmsProp { decay: f64, eps: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hyperparams {
    pub gamma: f64,
    pub entropy_coef: f64,
    pub lr_actor: f64,
    pub lr_critic: f64,
    /// Return depth; `None` runs to the end of the episode.
    pub n_step: Option<usize>,
    pub workers: usize,
    pub episodes: u64,
    pub seed: u64,
    /// Runs every worker's episodes in turn on the calling thread.
    pub single_thread: bool,
    pub hidden: Vec<usize>,
    /// Rewards are divided by this before learning. `None` derives it from
    /// the scenario.
    pub reward_scale: Option<f64>,
    /// Per-network bound on the L2 norm of an episode's gradient.
    pub grad_clip: Option<f64>,
    pub optimizer: Optimizer,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            entropy_coef: 0.01,
            lr_actor: 1e-3,
            lr_critic: 1e-3,
            n_step: None,
            workers: 4,
            episodes: 80_000,
            seed: 0,
            single_thread: true,
            hidden: vec![64, 64, 64],
            reward_scale: None,
            grad_clip: Some(5.0),
            optimizer: Optimizer::Sgd,
        }
    }
}

impl Hyperparams {
    /// Four asynchronous workers over 80000 episodes.
    pub fn reference() -> Self {
        Self { single_thread: false, ..Self::default() }
    }

    /// The shorter 60000-episode run used when sweeping the discount.
    pub fn discount_sweep() -> Self {
        Self { episodes: 60_000, ..Self::reference() }
    }

    pub fn validate(&self) -> Result<(), A3cError> {
        let bad = |m: &str| Err(A3cError::Hyper(m.to_string()));
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1]");
        }
        if !(self.entropy_coef >= 0.0 && self.entropy_coef.is_finite()) {
            return bad("entropy_coef must be finite and >= 0");
        }
        if !(self.lr_actor > 0.0 && self.lr_critic > 0.0 && self.lr_actor.is_finite() && self.lr_critic.is_finite()) {
            return bad("learning rates must be finite and > 0");
        }
        if self.n_step == Some(0) {
            return bad("n_step must be >= 1");
        }
        if self.workers == 0 {
            return bad("workers must be >= 1");
        }
        if self.hidden.contains(&0) {
            return bad("hidden layer sizes must be >= 1");
        }
        if self.reward_scale.is_some_and(|s| !(s > 0.0 && s.is_finite())) {
            return bad("reward_scale must be finite and > 0");
        }
        if self.grad_clip.is_some_and(|c| !(c > 0.0)) {
            return bad("grad_clip must be > 0");
        }
        if let Optimizer::RmsProp { decay, eps } = self.optimizer {
            if !(0.0..1.0).contains(&decay) || !(eps > 0.0) {
                return bad("rmsprop needs decay in [0, 1) and eps > 0");
            }
        }
        Ok(())
    }

    pub fn layer_sizes(&self, input: usize, output: usize) -> Vec<usize> {
        let mut sizes = vec![input];
        sizes.extend(&self.hidden);
        sizes.push(output);
        sizes
    }
}

/// `sum_i gamma^i r_i + gamma^k bootstrap`.
pub fn k_step_return(rewards: &[f64], bootstrap: f64, gamma: f64) -> Result<f64, A3cError> {
    if rewards.is_empty() {
        return Err(A3cError::EmptyRewards);
    }
    Ok(rewards.iter().rev().fold(bootstrap, |g, r| r + gamma * g))
}

pub fn advantage(ret: f64, value: f64) -> f64 {
    ret - value
}

/// Running `R = r_t + gamma R` from the last step back to the first.
pub fn returns_backward(rewards: &[f64], bootstrap: f64, gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut r = bootstrap;
    for t in (0..rewards.len()).rev() {
        r = rewards[t] + gamma * r;
        out[t] = r;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActionMode {
    Sample,
    Greedy,
}

#[derive(Debug, Clone)]
pub struct EpisodeOutcome {
    pub trace: EpisodeTrace,
    pub actions: Vec<usize>,
    /// Descent direction for the actor.
    pub d_actor: Gradients,
    pub d_critic: Gradients,
    pub mean_entropy: f64,
    pub value_loss: f64,
}

fn clip(g: &mut Gradients, bound: Option<f64>) {
    if let Some(c) = bound {
        let n = g.norm();
        if n > c {
            g.scale(c / n);
        }
    }
}

/// Rolls out one episode with `snapshot` and accumulates both gradients.
/// Sampling draws from a stream derived from `seed`.
pub fn run_episode(
    env: &mut Env,
    seed: u64,
    snapshot: &Snapshot,
    norms: &Norms,
    hyper: &Hyperparams,
    reward_scale: f64,
    mode: ActionMode,
) -> Result<EpisodeOutcome, A3cError> {
    let mut rng = stream_rng(seed, stream::POLICY);
    let mut inputs = Vec::new();
    let mut actions = Vec::new();
    let mut values = Vec::new();
    let mut entropy = 0.0;
    let mut state = Some(env.reset(seed)?);
    while let Some(s) = state {
        let x = encode_state(&s, norms)?;
        let probs = forward_actor(&snapshot.actor, &x)?;
        entropy += policy_entropy(&probs);
        let a = match mode {
            ActionMode::Greedy => argmax(&probs),
            ActionMode::Sample => WeightedIndex::new(&probs).map_err(|_| A3cError::Diverged)?.sample(&mut rng),
        };
        values.push(forward_critic(&snapshot.critic, &x)?);
        inputs.push(x);
        actions.push(a);
        state = env.step(Action(a))?.next_state;
    }
    let trace = env.trace()?;
    let m = actions.len();
    let rewards: Vec<f64> = trace.credited_rewards().iter().map(|r| r / reward_scale).collect();
    let targets = match hyper.n_step {
        Some(k) if k < m => (0..m)
            .map(|t| {
                let end = (t + k).min(m);
                let bootstrap = if end < m { values[end] } else { 0.0 };
                k_step_return(&rewards[t..end], bootstrap, hyper.gamma)
            })
            .collect::<Result<Vec<_>, _>>()?,
        _ => returns_backward(&rewards, 0.0, hyper.gamma),
    };
    let mut d_actor = Gradients::zeros_like(&snapshot.actor);
    let mut d_critic = Gradients::zeros_like(&snapshot.critic);
    let mut value_loss = 0.0;
    for t in 0..m {
        let adv = advantage(targets[t], values[t]);
        value_loss += adv * adv;
        let mut ga = backward_actor(&snapshot.actor, &inputs[t], actions[t], adv, hyper.entropy_coef)?;
        ga.scale(-1.0);
        d_actor.add_assign(&ga)?;
        d_critic.add_assign(&backward_critic(&snapshot.critic, &inputs[t], targets[t])?)?;
    }
    clip(&mut d_actor, hyper.grad_clip);
    clip(&mut d_critic, hyper.grad_clip);
    Ok(EpisodeOutcome {
        trace,
        actions,
        d_actor,
        d_critic,
        mean_entropy: entropy / m as f64,
        value_loss: value_loss / m as f64,
    })
}

/// One row of the training log.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpisodeRecord {
    pub episode: u64,
    pub worker: usize,
    #[serde(rename = "return")]
    pub ret: f64,
    pub service_delay_s: f64,
    pub mean_entropy: f64,
    pub value_loss: f64,
    pub store_version: u64,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    /// Ordered by episode index.
    pub records: Vec<EpisodeRecord>,
    pub wall_clock: Duration,
    pub actor: NetParams,
    pub critic: NetParams,
    pub norms: Norms,
    pub reward_scale: f64,
    pub applies: u64,
}

impl TrainReport {
    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint { actor: self.actor.clone(), critic: self.critic.clone(), norms: self.norms.clone() }
    }
}

fn check_compatible(actor: &NetParams, critic: Option<&NetParams>, env: &Env) -> Result<(), A3cError> {
    let slots = env.action_count();
    let input = encoded_len(slots);
    if actor.input_len() != input || actor.output_len() != slots || actor.head() != Activation::Softmax {
        return Err(A3cError::Incompatible(format!(
            "actor is {:?}, scenario needs {input} inputs and {slots} softmax outputs",
            actor.sizes()
        )));
    }
    if let Some(c) = critic {
        if c.input_len() != input || c.output_len() != 1 || c.head() != Activation::Identity {
            return Err(A3cError::Incompatible(format!("critic is {:?}, scenario needs {input} -> 1", c.sizes())));
        }
    }
    Ok(())
}

/// Freshly initialised actor and critic for `env`.
pub fn init_networks(env: &Env, hyper: &Hyperparams) -> Result<(NetParams, NetParams), A3cError> {
    let input = encoded_len(env.action_count());
    let actor = init_params(&hyper.layer_sizes(input, env.action_count()), Activation::Softmax, hyper.seed, stream::INIT_ACTOR)?;
    let critic = init_params(&hyper.layer_sizes(input, 1), Activation::Identity, hyper.seed, stream::INIT_CRITIC)?;
    Ok((actor, critic))
}

const SCALE_PROBE_EPISODES: u64 = 16;
const SCALE_MULTIPLIER: f64 = 100.0;

/// A hundred times the mean least per-task delay over a few probe episodes.
/// Smaller scales let the advantage swamp the entropy bonus early and the
/// policy settles on whichever node it happened to favour first.
pub fn auto_reward_scale(env: &mut Env, seed: u64) -> Result<f64, A3cError> {
    let (mut total, mut steps) = (0.0, 0usize);
    for i in 0..SCALE_PROBE_EPISODES {
        env.reset(child_seed(seed ^ stream::BASELINE, i))?;
        while !env.is_done() {
            let d = env.slot_delays()?;
            let best = argmax(&d.iter().map(|v| -v).collect::<Vec<_>>());
            total += d[best];
            steps += 1;
            env.step(Action(best))?;
        }
    }
    let scale = SCALE_MULTIPLIER * total / steps.max(1) as f64;
    Ok(if scale > 0.0 && scale.is_finite() { scale } else { 1.0 })
}

/// Pre-trains from scratch.
pub fn train(scenario: Arc<Scenario>, hyper: &Hyperparams) -> Result<TrainReport, A3cError> {
    hyper.validate()?;
    let env = Env::new(scenario.clone())?;
    let (actor, critic) = init_networks(&env, hyper)?;
    run_training(env, actor, critic, Norms::for_scenario(&scenario), hyper)
}

/// Continues training a checkpoint on newly drawn episodes.
pub fn online_learn(pretrained: &Checkpoint, scenario: Arc<Scenario>, hyper: &Hyperparams) -> Result<TrainReport, A3cError> {
    hyper.validate()?;
    let env = Env::new(scenario)?;
    check_compatible(&pretrained.actor, Some(&pretrained.critic), &env)?;
    run_training(env, pretrained.actor.clone(), pretrained.critic.clone(), pretrained.norms.clone(), hyper)
}

fn run_training(
    mut env: Env,
    actor: NetParams,
    critic: NetParams,
    norms: Norms,
    hyper: &Hyperparams,
) -> Result<TrainReport, A3cError> {
    let started = Instant::now();
    let reward_scale = match hyper.reward_scale {
        Some(s) => s,
        None => auto_reward_scale(&mut env, hyper.seed)?,
    };
    let store = GlobalStore::new(actor, critic);
    let episode = |env: &mut Env, index: u64, worker: usize| -> Result<EpisodeRecord, A3cError> {
        let snapshot = store.read();
        let seed = child_seed(hyper.seed, index);
        let out = run_episode(env, seed, &snapshot, &norms, hyper, reward_scale, ActionMode::Sample)?;
        let version = apply_async(&store, &out.d_actor, &out.d_critic, hyper)?;
        Ok(EpisodeRecord {
            episode: index,
            worker,
            ret: out.trace.total_reward(),
            service_delay_s: out.trace.service_delay,
            mean_entropy: out.mean_entropy,
            value_loss: out.value_loss,
            store_version: version,
        })
    };

    let mut records = if hyper.single_thread || hyper.workers == 1 {
        (0..hyper.episodes)
            .map(|i| episode(&mut env, i, (i % hyper.workers as u64) as usize))
            .collect::<Result<Vec<_>, _>>()?
    } else {
        let next = AtomicU64::new(0);
        let stop = AtomicBool::new(false);
        let collected = Mutex::new(Vec::with_capacity(hyper.episodes as usize));
        let failure = Mutex::new(None);
        std::thread::scope(|scope| {
            for worker in 0..hyper.workers {
                let mut env = env.clone();
                let (next, stop, collected, failure, episode) = (&next, &stop, &collected, &failure, &episode);
                scope.spawn(move || loop {
                    if stop.load(Ordering::Relaxed) {
                        break;
                    }
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    if i >= hyper.episodes {
                        break;
                    }
                    match episode(&mut env, i, worker) {
                        Ok(r) => collected.lock().expect("records lock").push(r),
                        Err(e) => {
                            stop.store(true, Ordering::Relaxed);
                            failure.lock().expect("failure lock").get_or_insert(e);
                            break;
                        }
                    }
                });
            }
        });
        if let Some(e) = failure.into_inner().expect("failure lock") {
            return Err(e);
        }
        collected.into_inner().expect("records lock")
    };
    records.sort_by_key(|r| r.episode);
    let snapshot = store.into_snapshot();
    Ok(TrainReport {
        records,
        wall_clock: started.elapsed(),
        actor: snapshot.actor,
        critic: snapshot.critic,
        norms,
        reward_scale,
        applies: snapshot.version,
    })
}
