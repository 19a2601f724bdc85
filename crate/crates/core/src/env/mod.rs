//! The offloading MDP.
//!
//! One episode places the tasks of one service, in topological order, onto a
//! fixed candidate set. The state is the current task profile, per-slot node
//! features and the vehicle speed; the reward of a step is the negated
//! mobility-adjusted delay of the placed task.

mod candidates;
pub mod delay;
mod encode;

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::channel::ChannelError;
use crate::mobility::{self, MobilityError, TransitionMatrix};
use crate::rng::{stream, stream_rng, SimRng};
use crate::scenario::{
    generate_service, sample_frequency, NodeId, NodeKind, Scenario, ScenarioError, ServiceDag, PSEUDO_FREQ,
};

pub use candidates::{candidate_set, Candidate};
pub use delay::{
    adjusted_task_delay, local_recompute, longest_flags, raw_task_delay, service_delay, ExecSite,
    MobilityPenalty, Upstream,
};
pub use encode::{encode_state, encoded_len, Norms, NODE_FEATURES, TASK_FEATURES};

#[derive(Debug, Error, PartialEq)]
pub enum EnvError {
    #[error("{0}")]
    Lifecycle(&'static str),
    #[error("action slot {slot} out of range for {slots} slots")]
    ActionOutOfRange { slot: usize, slots: usize },
    #[error("infeasible placement: {bits} bits of {what} data over a zero-rate link")]
    Infeasible { what: &'static str, bits: f64 },
    #[error("no mobility data for a {0} node")]
    MissingMobility(NodeKind),
    #[error("expected {expected} task delays, got {got}")]
    MissingDelay { expected: usize, got: usize },
    #[error("non-finite feature {0}")]
    NonFinite(&'static str),
    #[error("norms must be positive")]
    BadNorms,
    #[error("scenario: {0}")]
    Scenario(String),
    #[error(transparent)]
    Mobility(#[from] MobilityError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
}

impl From<ScenarioError> for EnvError {
    fn from(e: ScenarioError) -> Self {
        Self::Scenario(e.to_string())
    }
}

/// Slot index into the candidate set; slot 0 is local execution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct Action(pub usize);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlotFeatures {
    pub kind: NodeKind,
    pub cpu_freq: f64,
    /// Access rate; zero for the local slot and for padding.
    pub access_rate: f64,
    pub handoffs: f64,
    pub usability: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvState {
    /// `(compute cycles, interactive bits, dependency bits)` of the current task.
    pub task_features: [f64; TASK_FEATURES],
    pub node_features: Vec<SlotFeatures>,
    pub speed: f64,
    /// 1-based index of the current task.
    pub step_index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub reward: f64,
    pub raw_delay: f64,
    pub adjusted_delay: f64,
    /// `None` once the episode is over.
    pub next_state: Option<EnvState>,
    pub placement: Option<NodeId>,
    pub kind: NodeKind,
}

impl StepOutcome {
    pub fn is_terminal(&self) -> bool {
        self.next_state.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepRecord {
    /// 1-based.
    pub step: usize,
    pub task_id: u32,
    pub slot: usize,
    pub node_id: Option<NodeId>,
    pub node_kind: NodeKind,
    pub raw_delay: f64,
    pub adjusted_delay: f64,
    pub reward: f64,
    /// Reward counted for learning: zero for parallel siblings that are not
    /// the longest of their group.
    pub credited_reward: f64,
    pub longest: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeTrace {
    pub seed: u64,
    pub steps: Vec<StepRecord>,
    pub service_delay: f64,
    pub jitter_clamps: u32,
    pub service_clamps: u32,
}

impl EpisodeTrace {
    pub fn credited_rewards(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.credited_reward).collect()
    }

    pub fn total_reward(&self) -> f64 {
        self.steps.iter().map(|s| s.credited_reward).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct SlotEval {
    raw: f64,
    adjusted: f64,
    handoffs: f64,
    usability: f64,
}

#[derive(Debug, Clone)]
struct Episode {
    seed: u64,
    service: ServiceDag,
    rng: SimRng,
    freqs: Vec<f64>,
    speed: f64,
    /// Index of the current task.
    t: usize,
    /// Node index each placed task's output lives on.
    placements: Vec<usize>,
    evals: Vec<SlotEval>,
    records: Vec<StepRecord>,
    jitter_clamps: u32,
    done: bool,
    service_delay: f64,
}

/// A single-threaded environment instance. Cloning snapshots the episode,
/// including its random stream.
#[derive(Debug, Clone)]
pub struct Env {
    scenario: Arc<Scenario>,
    candidates: Vec<Candidate>,
    /// Per scenario node index.
    access: Vec<f64>,
    chains: Vec<Option<TransitionMatrix>>,
    index_of: BTreeMap<NodeId, usize>,
    local: usize,
    episode: Option<Episode>,
}

impl Env {
    pub fn new(scenario: Arc<Scenario>) -> Result<Self, EnvError> {
        scenario.validate()?;
        let literal = scenario.config.env.bs_rate_as_printed;
        let access = scenario
            .nodes
            .iter()
            .map(|n| n.access_rate(literal))
            .collect::<Result<Vec<_>, _>>()?;
        let chains = scenario
            .nodes
            .iter()
            .map(|n| n.headway.as_ref().map(mobility::build_transition_matrix).transpose())
            .collect::<Result<Vec<_>, _>>()?;
        let index_of = scenario.nodes.iter().enumerate().map(|(i, n)| (n.id, i)).collect();
        let local = scenario.nodes.iter().position(|n| n.kind == NodeKind::Local).expect("validated");
        let candidates = candidate_set(&scenario.nodes, scenario.config.quotas);
        Ok(Self { scenario, candidates, access, chains, index_of, local, episode: None })
    }

    pub fn scenario(&self) -> &Arc<Scenario> {
        &self.scenario
    }

    pub fn candidates(&self) -> &[Candidate] {
        &self.candidates
    }

    pub fn action_count(&self) -> usize {
        self.candidates.len()
    }

    /// Starts an episode. The service is redrawn from the config when
    /// resampling is enabled, otherwise the materialised one is replayed.
    pub fn reset(&mut self, seed: u64) -> Result<EnvState, EnvError> {
        let config = &self.scenario.config;
        let service = if config.service.resample {
            generate_service(config, seed)?
        } else {
            self.scenario.service.clone()
        };
        let mut episode = Episode {
            seed,
            service,
            rng: stream_rng(seed, stream::ENV),
            freqs: Vec::new(),
            speed: config.nodes.speed,
            t: 0,
            placements: Vec::new(),
            evals: Vec::new(),
            records: Vec::new(),
            jitter_clamps: 0,
            done: false,
            service_delay: 0.0,
        };
        self.resample_freqs(&mut episode);
        episode.evals = self.evaluate_slots(&episode)?;
        self.episode = Some(episode);
        Ok(self.current_state().expect("fresh episode has a state"))
    }

    fn resample_freqs(&self, ep: &mut Episode) {
        let std = self.scenario.config.nodes.freq_jitter_std;
        ep.freqs = self
            .scenario
            .nodes
            .iter()
            .map(|n| {
                let (f, clamped) = sample_frequency(&mut ep.rng, n.cpu_freq, std);
                ep.jitter_clamps += u32::from(clamped);
                f
            })
            .collect();
    }

    fn upstream(&self, ep: &Episode, task: usize, target: usize) -> Vec<Upstream> {
        let preds = ep.service.predecessors(task);
        let sources: Vec<usize> = if preds.is_empty() {
            vec![self.local]
        } else {
            preds.iter().map(|&p| ep.placements[p]).collect()
        };
        sources
            .into_iter()
            .map(|src| {
                if src == target {
                    Upstream::CoLocated
                } else {
                    let to = self.scenario.nodes[target].id;
                    let rate = self.scenario.nodes[src].link_rate(to).expect("validated backhaul");
                    Upstream::Remote { rate }
                }
            })
            .collect()
    }

    fn speed_factor(&self, ep: &Episode) -> f64 {
        self.scenario.config.env.speed_reference.map_or(1.0, |v_ref| ep.speed / v_ref)
    }

    fn evaluate_node(&self, ep: &Episode, k: usize) -> Result<SlotEval, EnvError> {
        let task = &ep.service.tasks[ep.t];
        let node = &self.scenario.nodes[k];
        let site = ExecSite { kind: node.kind, cpu_freq: ep.freqs[k], access_rate: self.access[k] };
        let raw = raw_task_delay(task, &site, &self.upstream(ep, ep.t, k))?;
        let (penalty, handoffs, usability) = match node.kind {
            NodeKind::Bs | NodeKind::Ap => {
                let rate = node.residence_rate.ok_or(EnvError::MissingMobility(node.kind))? * self.speed_factor(ep);
                let handoffs = if raw > 0.0 { mobility::expected_handoffs(1.0 / raw, rate)? } else { 0.0 };
                let handoff_delay = node.handoff_delay.ok_or(EnvError::MissingMobility(node.kind))?;
                (MobilityPenalty::Handoff { handoffs, handoff_delay }, handoffs, 1.0)
            }
            NodeKind::Vn => {
                let chain = node.headway.as_ref().ok_or(EnvError::MissingMobility(node.kind))?;
                let q = self.chains[k].as_ref().expect("built with the node");
                let usability = if raw > 0.0 { mobility::usability_with(chain, q, raw)? } else { 1.0 };
                let recompute = local_recompute(task, ep.freqs[self.local], &self.upstream(ep, ep.t, self.local))?;
                (MobilityPenalty::Usability { usability, local_recompute: recompute }, 0.0, usability)
            }
            NodeKind::Local => (MobilityPenalty::None, 0.0, 1.0),
            NodeKind::Pseudo => unreachable!("catalogs hold no padding nodes"),
        };
        let adjusted = adjusted_task_delay(raw, node.kind, &penalty, self.scenario.config.env.vn_penalty)?;
        Ok(SlotEval { raw, adjusted, handoffs, usability })
    }

    fn evaluate_slots(&self, ep: &Episode) -> Result<Vec<SlotEval>, EnvError> {
        let mut evals = Vec::with_capacity(self.candidates.len());
        for c in &self.candidates {
            let eval = match c {
                Candidate::Local => Some(self.evaluate_node(ep, self.local)?),
                Candidate::Node { id, .. } => Some(self.evaluate_node(ep, self.index_of[id])?),
                Candidate::Pseudo { .. } => None,
            };
            evals.push(eval);
        }
        let worst = evals.iter().flatten().map(|e| e.adjusted).fold(0.0, f64::max);
        let sentinel = self.scenario.config.env.pseudo_delay_factor * worst;
        Ok(evals
            .into_iter()
            .map(|e| e.unwrap_or(SlotEval { raw: sentinel, adjusted: sentinel, handoffs: 0.0, usability: 0.0 }))
            .collect())
    }

    fn episode(&self) -> Result<&Episode, EnvError> {
        self.episode.as_ref().ok_or(EnvError::Lifecycle("environment not reset"))
    }

    pub fn is_done(&self) -> bool {
        self.episode.as_ref().is_some_and(|e| e.done)
    }

    /// The service being placed in the current episode.
    pub fn service(&self) -> Option<&ServiceDag> {
        self.episode.as_ref().map(|e| &e.service)
    }

    pub fn current_state(&self) -> Option<EnvState> {
        let ep = self.episode.as_ref().filter(|e| !e.done)?;
        let task = &ep.service.tasks[ep.t];
        let node_features = self
            .candidates
            .iter()
            .zip(&ep.evals)
            .map(|(c, e)| match *c {
                Candidate::Local => SlotFeatures {
                    kind: NodeKind::Local,
                    cpu_freq: ep.freqs[self.local],
                    access_rate: 0.0,
                    handoffs: 0.0,
                    usability: 1.0,
                },
                Candidate::Node { kind, id } => {
                    let k = self.index_of[&id];
                    SlotFeatures {
                        kind,
                        cpu_freq: ep.freqs[k],
                        access_rate: self.access[k],
                        handoffs: e.handoffs,
                        usability: e.usability,
                    }
                }
                Candidate::Pseudo { kind } => SlotFeatures {
                    kind,
                    cpu_freq: PSEUDO_FREQ,
                    access_rate: 0.0,
                    handoffs: 0.0,
                    usability: 0.0,
                },
            })
            .collect();
        Some(EnvState {
            task_features: [task.compute_demand, task.interactive_data, task.dep_data_in],
            node_features,
            speed: ep.speed,
            step_index: ep.t + 1,
        })
    }

    /// Adjusted delay each slot would incur for the current task.
    pub fn slot_delays(&self) -> Result<Vec<f64>, EnvError> {
        let ep = self.episode()?;
        if ep.done {
            return Err(EnvError::Lifecycle("episode is over"));
        }
        Ok(ep.evals.iter().map(|e| e.adjusted).collect())
    }

    pub fn step(&mut self, action: Action) -> Result<StepOutcome, EnvError> {
        let slots = self.candidates.len();
        let mut ep = self.episode.take().ok_or(EnvError::Lifecycle("environment not reset"))?;
        if ep.done {
            self.episode = Some(ep);
            return Err(EnvError::Lifecycle("step after terminal state"));
        }
        if action.0 >= slots {
            self.episode = Some(ep);
            return Err(EnvError::ActionOutOfRange { slot: action.0, slots });
        }
        let candidate = self.candidates[action.0];
        let eval = ep.evals[action.0];
        // Work sent to a padding slot is treated as coming back to the vehicle.
        let node_index = match candidate {
            Candidate::Node { id, .. } => self.index_of[&id],
            Candidate::Local | Candidate::Pseudo { .. } => self.local,
        };
        let task_id = ep.service.tasks[ep.t].id;
        ep.records.push(StepRecord {
            step: ep.t + 1,
            task_id,
            slot: action.0,
            node_id: match candidate {
                Candidate::Pseudo { .. } => None,
                Candidate::Local => Some(self.scenario.nodes[self.local].id),
                Candidate::Node { id, .. } => Some(id),
            },
            node_kind: if candidate.is_pseudo() { NodeKind::Pseudo } else { candidate.kind() },
            raw_delay: eval.raw,
            adjusted_delay: eval.adjusted,
            reward: -eval.adjusted,
            credited_reward: -eval.adjusted,
            longest: true,
        });
        ep.placements.push(node_index);
        ep.t += 1;

        let result = if ep.t < ep.service.len() {
            self.resample_freqs(&mut ep);
            match self.evaluate_slots(&ep) {
                Ok(evals) => {
                    ep.evals = evals;
                    Ok(())
                }
                Err(e) => Err(e),
            }
        } else {
            Self::finish(&mut ep)
        };
        let placement = ep.records.last().and_then(|r| r.node_id);
        self.episode = Some(ep);
        result?;
        Ok(StepOutcome {
            reward: -eval.adjusted,
            raw_delay: eval.raw,
            adjusted_delay: eval.adjusted,
            next_state: self.current_state(),
            placement,
            kind: candidate.kind(),
        })
    }

    fn finish(ep: &mut Episode) -> Result<(), EnvError> {
        let delays: Vec<f64> = ep.records.iter().map(|r| r.adjusted_delay).collect();
        let flags = longest_flags(&delays, &ep.service)?;
        for (r, &f) in ep.records.iter_mut().zip(&flags) {
            r.longest = f;
            r.credited_reward = if f { r.reward } else { 0.0 };
        }
        ep.service_delay = service_delay(&delays, &ep.service)?;
        ep.done = true;
        Ok(())
    }

    /// The finished episode's trace.
    pub fn trace(&self) -> Result<EpisodeTrace, EnvError> {
        let ep = self.episode()?;
        if !ep.done {
            return Err(EnvError::Lifecycle("episode still running"));
        }
        Ok(EpisodeTrace {
            seed: ep.seed,
            steps: ep.records.clone(),
            service_delay: ep.service_delay,
            jitter_clamps: ep.jitter_clamps,
            service_clamps: ep.service.clamp_events,
        })
    }
}

/// Runs one episode with a fixed action sequence.
pub fn replay(env: &mut Env, seed: u64, actions: &[usize]) -> Result<EpisodeTrace, EnvError> {
    env.reset(seed)?;
    for &a in actions {
        env.step(Action(a))?;
    }
    env.trace()
}
