use rand::distr::weighted::WeightedIndex;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::mobility::HeadwayChain;
use crate::rng::{stream, stream_rng};

use super::config::{RegionSpec, ScenarioConfig};
use super::dag::{Edge, Region, ServiceDag, TaskProfile, TopologyKind};
use super::node::{EdgeNode, NodeKind};
use super::ScenarioError;

/// Sampled frequencies never fall below this fraction of nominal.
pub const MIN_FREQ_FRACTION: f64 = 0.01;

/// A normal draw clamped at zero; the flag reports whether clamping happened.
fn clamped_normal<R: Rng + ?Sized>(rng: &mut R, mean: f64, std: f64) -> (f64, bool) {
    let x = Normal::new(mean, std).expect("validated std-dev").sample(rng);
    if x < 0.0 {
        (0.0, true)
    } else {
        (x, false)
    }
}

/// Per-task frequency draw around `nominal`.
pub fn sample_frequency<R: Rng + ?Sized>(rng: &mut R, nominal: f64, std: f64) -> (f64, bool) {
    let x = Normal::new(nominal, std).expect("validated std-dev").sample(rng);
    let floor = nominal * MIN_FREQ_FRACTION;
    if x < floor {
        (floor, true)
    } else {
        (x, false)
    }
}

struct Stage {
    kind: TopologyKind,
    width: u32,
}

fn expand_regions<R: Rng + ?Sized>(config: &ScenarioConfig, rng: &mut R) -> Vec<Vec<Stage>> {
    let service = &config.service;
    let singles = |kind, n: u32| (0..n).map(|_| Stage { kind, width: 1 }).collect::<Vec<_>>();
    if service.regions.is_empty() {
        return vec![singles(TopologyKind::Sequence, service.tasks.unwrap_or(0))];
    }
    service
        .regions
        .iter()
        .map(|r| match r {
            RegionSpec::Sequence { length } => singles(TopologyKind::Sequence, *length),
            RegionSpec::Parallel { width } => vec![Stage { kind: TopologyKind::Parallel, width: *width }],
            RegionSpec::Selective { branches, probs } => {
                let pick = WeightedIndex::new(probs).expect("validated probs").sample(rng);
                singles(TopologyKind::Selective, branches[pick])
            }
            RegionSpec::Loop { body, iterations } => singles(TopologyKind::LoopUnrolled, body * iterations),
        })
        .collect()
}

/// Draws a concrete service from the configured regions and distributions.
///
/// When the region task count equals the mixture total, the mixture is used
/// as an exact multiset in shuffled order; otherwise demands are drawn from
/// it with the counts as weights.
pub fn generate_service(config: &ScenarioConfig, seed: u64) -> Result<ServiceDag, ScenarioError> {
    config.validate()?;
    let s = &config.service;
    let mut rng = stream_rng(seed, stream::SERVICE);
    let regions = expand_regions(config, &mut rng);
    let total: u32 = regions.iter().flatten().map(|st| st.width).sum();
    if total == 0 {
        return Err(ScenarioError::Config("service realises zero tasks".into()));
    }

    let mixture_total: u32 = s.mixture.iter().map(|m| m.count).sum();
    let mut base: Vec<f64> = if mixture_total == total {
        let mut v: Vec<f64> = s
            .mixture
            .iter()
            .flat_map(|m| std::iter::repeat_n(m.cycles, m.count as usize))
            .collect();
        v.shuffle(&mut rng);
        v
    } else {
        let pick = WeightedIndex::new(s.mixture.iter().map(|m| m.count)).expect("validated mixture");
        (0..total).map(|_| s.mixture[pick.sample(&mut rng)].cycles).collect()
    };
    base.reverse();

    let mut clamp_events = 0;
    let mut draw = |rng: &mut crate::rng::SimRng, mean: f64, std: f64| {
        let (x, clamped) = clamped_normal(rng, mean, std);
        clamp_events += u32::from(clamped);
        x
    };

    let mut tasks = Vec::with_capacity(total as usize);
    let mut edges = Vec::new();
    let mut out_regions = Vec::new();
    let mut previous_stage: Vec<u32> = Vec::new();
    let mut next_group = 0;
    for stages in &regions {
        let first_task = tasks.len() as u32;
        for stage in stages {
            let group = (stage.width > 1).then(|| {
                next_group += 1;
                next_group - 1
            });
            let mut this_stage = Vec::with_capacity(stage.width as usize);
            for _ in 0..stage.width {
                let id = tasks.len() as u32;
                let cycles = base.pop().expect("one base demand per task");
                tasks.push(TaskProfile {
                    id,
                    compute_demand: draw(&mut rng, cycles, s.demand_jitter_std),
                    interactive_data: draw(&mut rng, s.interactive_mean, s.interactive_std),
                    dep_data_in: draw(&mut rng, s.dep_data_mean, s.dep_data_std),
                    parallel_group: group,
                });
                for &from in &previous_stage {
                    edges.push(Edge { from, to: id });
                }
                this_stage.push(id);
            }
            previous_stage = this_stage;
        }
        if let Some(kind) = stages.first().map(|s| s.kind) {
            out_regions.push(Region {
                kind,
                first_task,
                task_count: tasks.len() as u32 - first_task,
            });
        }
    }

    Ok(ServiceDag { tasks, edges, regions: out_regions, clamp_events })
}

/// Builds the node catalog: the local vehicle (id 0), then BS, AP and VN
/// nodes in configured order, with kind-pair backhaul rates.
pub fn generate_nodes(config: &ScenarioConfig, seed: u64) -> Result<Vec<EdgeNode>, ScenarioError> {
    config.validate()?;
    let mut rng = stream_rng(seed, stream::NODES);
    let n = &config.nodes;
    let mut nodes = vec![EdgeNode::local(0, n.local_freq)];
    let mut next_id = 1;
    let mut push = |nodes: &mut Vec<EdgeNode>, node: EdgeNode| {
        nodes.push(EdgeNode { id: next_id, ..node });
        next_id += 1;
    };

    if let Some(bs) = &n.bs {
        for &f in &bs.freqs {
            let node = EdgeNode {
                kind: NodeKind::Bs,
                bs_channel: Some(bs.channel.clone()),
                residence_rate: Some(bs.residence_rate),
                handoff_delay: Some(bs.handoff_delay),
                ..EdgeNode::local(0, f)
            };
            push(&mut nodes, node);
        }
    }
    if let Some(ap) = &n.ap {
        for &f in &ap.freqs {
            let node = EdgeNode {
                kind: NodeKind::Ap,
                ap_channel: Some(ap.channel.clone()),
                residence_rate: Some(ap.residence_rate),
                handoff_delay: Some(ap.handoff_delay),
                ..EdgeNode::local(0, f)
            };
            push(&mut nodes, node);
        }
    }
    if let Some(vn) = &n.vn {
        let states = HeadwayChain::state_count(vn.z_min, vn.z_max, vn.unit);
        for &f in &vn.freqs {
            let start = vn
                .initial_state
                .unwrap_or_else(|| rng.random_range(0..=vn.comm_range_state.min(states - 1)));
            if start >= states {
                return Err(ScenarioError::Config(format!(
                    "nodes.vn.initial_state {start} outside {states} states"
                )));
            }
            let chain = HeadwayChain {
                z_min: vn.z_min,
                z_max: vn.z_max,
                unit: vn.unit,
                p: vn.p,
                q: vn.q,
                beta: vn.beta,
                comm_range_state: vn.comm_range_state,
                time_step: vn.time_step,
                initial_dist: HeadwayChain::point_mass(states, start),
            };
            let node = EdgeNode {
                kind: NodeKind::Vn,
                ap_channel: Some(vn.wlan.clone()),
                headway: Some(chain),
                ..EdgeNode::local(0, f)
            };
            push(&mut nodes, node);
        }
    }

    let b = &config.bandwidth;
    let rate = |a: NodeKind, c: NodeKind| {
        use NodeKind::*;
        match (a, c) {
            (Bs, Bs) => b.bs_bs,
            (Bs, Ap) | (Ap, Bs) => b.bs_ap,
            (Ap, Ap) => b.ap_ap,
            (Ap, _) | (_, Ap) => b.ap_vehicle,
            (Bs, _) | (_, Bs) => b.bs_vehicle,
            _ => b.vehicle_vehicle,
        }
    };
    let kinds: Vec<(u32, NodeKind)> = nodes.iter().map(|n| (n.id, n.kind)).collect();
    for node in &mut nodes {
        for &(peer, kind) in &kinds {
            if peer != node.id {
                node.set_link_rate(peer, rate(node.kind, kind));
            }
        }
    }
    for node in &nodes {
        node.validate()?;
    }
    Ok(nodes)
}
