//! Per-task delay assembly.

use crate::scenario::{NodeKind, ServiceDag, TaskProfile, VnPenalty};

use super::EnvError;

/// Where a task runs, as seen by the delay model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExecSite {
    pub kind: NodeKind,
    /// Current CPU frequency, cycles/s.
    pub cpu_freq: f64,
    /// Vehicle-to-node rate, bits/s. Ignored for local execution.
    pub access_rate: f64,
}

/// Data path from one predecessor (or, for a root task, from the vehicle).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Upstream {
    CoLocated,
    Remote { rate: f64 },
}

fn transfer(bits: f64, rate: f64, what: &'static str) -> Result<f64, EnvError> {
    if bits == 0.0 {
        Ok(0.0)
    } else if rate > 0.0 {
        Ok(bits / rate)
    } else {
        Err(EnvError::Infeasible { what, bits })
    }
}

/// Dependency-transfer time: predecessors send concurrently, so the slowest
/// edge bounds the wait.
pub fn dependency_delay(task: &TaskProfile, upstream: &[Upstream]) -> Result<f64, EnvError> {
    upstream.iter().try_fold(0.0f64, |acc, u| {
        let t = match *u {
            Upstream::CoLocated => 0.0,
            Upstream::Remote { rate } => transfer(task.dep_data_in, rate, "dependency")?,
        };
        Ok(acc.max(t))
    })
}

/// Execution + interactive + dependency-transfer time of one task.
pub fn raw_task_delay(task: &TaskProfile, site: &ExecSite, upstream: &[Upstream]) -> Result<f64, EnvError> {
    if !(site.cpu_freq > 0.0) {
        return Err(EnvError::Infeasible { what: "compute", bits: task.compute_demand });
    }
    let compute = task.compute_demand / site.cpu_freq;
    let interactive = match site.kind {
        NodeKind::Local => 0.0,
        _ => transfer(task.interactive_data, site.access_rate, "interactive")?,
    };
    Ok(compute + interactive + dependency_delay(task, upstream)?)
}

/// Cost of re-running a task on the vehicle after a neighbour link fails.
pub fn local_recompute(task: &TaskProfile, local_freq: f64, upstream_to_local: &[Upstream]) -> Result<f64, EnvError> {
    if !(local_freq > 0.0) {
        return Err(EnvError::Infeasible { what: "compute", bits: task.compute_demand });
    }
    Ok(task.compute_demand / local_freq + dependency_delay(task, upstream_to_local)?)
}

/// Mobility information matching the kind of the executing node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MobilityPenalty {
    None,
    Handoff { handoffs: f64, handoff_delay: f64 },
    Usability { usability: f64, local_recompute: f64 },
}

/// Raw delay plus the handoff or link-failure penalty of the node kind.
pub fn adjusted_task_delay(
    raw: f64,
    kind: NodeKind,
    penalty: &MobilityPenalty,
    weighting: VnPenalty,
) -> Result<f64, EnvError> {
    match (kind, *penalty) {
        (NodeKind::Local, MobilityPenalty::None) => Ok(raw),
        (NodeKind::Bs | NodeKind::Ap, MobilityPenalty::Handoff { handoffs, handoff_delay }) => {
            Ok(raw + handoff_delay * handoffs)
        }
        (NodeKind::Vn, MobilityPenalty::Usability { usability, local_recompute }) => {
            let weight = match weighting {
                VnPenalty::AsPrinted => usability,
                VnPenalty::FailureProb => 1.0 - usability,
            };
            Ok(raw + weight * local_recompute)
        }
        (kind, _) => Err(EnvError::MissingMobility(kind)),
    }
}

/// `F(i)` flags: inside each parallel group only the longest task (first on
/// ties) counts.
pub fn longest_flags(delays: &[f64], dag: &ServiceDag) -> Result<Vec<bool>, EnvError> {
    if delays.len() != dag.len() {
        return Err(EnvError::MissingDelay { expected: dag.len(), got: delays.len() });
    }
    let mut flags = vec![true; delays.len()];
    for members in dag.parallel_groups().values() {
        let longest = members
            .iter()
            .copied()
            .reduce(|best, i| if delays[i] > delays[best] { i } else { best })
            .expect("groups are non-empty");
        for &i in members {
            flags[i] = i == longest;
        }
    }
    Ok(flags)
}

/// Service delay: sum of task delays with parallel siblings collapsed to
/// their maximum.
pub fn service_delay(delays: &[f64], dag: &ServiceDag) -> Result<f64, EnvError> {
    let flags = longest_flags(delays, dag)?;
    Ok(delays.iter().zip(&flags).filter(|(_, &f)| f).map(|(d, _)| d).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{Edge, TaskProfile};

    fn task(f: f64, du: f64, dep: f64) -> TaskProfile {
        TaskProfile { id: 0, compute_demand: f, interactive_data: du, dep_data_in: dep, parallel_group: None }
    }

    fn site(kind: NodeKind, f: f64, b: f64) -> ExecSite {
        ExecSite { kind, cpu_freq: f, access_rate: b }
    }

    #[test]
    fn three_term_example() {
        let d = raw_task_delay(&task(100.0, 50.0, 30.0), &site(NodeKind::Bs, 10.0, 25.0), &[Upstream::Remote { rate: 15.0 }]);
        assert_eq!(d.unwrap(), 14.0);
    }

    #[test]
    fn compute_only_and_colocated() {
        let t = task(100.0, 0.0, 0.0);
        assert_eq!(raw_task_delay(&t, &site(NodeKind::Ap, 8.0, 0.0), &[Upstream::Remote { rate: 0.0 }]).unwrap(), 12.5);
        let t = task(100.0, 50.0, 30.0);
        assert_eq!(raw_task_delay(&t, &site(NodeKind::Bs, 10.0, 25.0), &[Upstream::CoLocated]).unwrap(), 12.0);
    }

    #[test]
    fn local_skips_interactive() {
        let t = task(100.0, 50.0, 30.0);
        let d = raw_task_delay(&t, &site(NodeKind::Local, 10.0, f64::INFINITY), &[Upstream::Remote { rate: 15.0 }]);
        assert_eq!(d.unwrap(), 12.0);
    }

    #[test]
    fn zero_bandwidth_is_infeasible() {
        let t = task(100.0, 50.0, 0.0);
        assert!(matches!(
            raw_task_delay(&t, &site(NodeKind::Ap, 10.0, 0.0), &[]),
            Err(EnvError::Infeasible { what: "interactive", .. })
        ));
        let t = task(100.0, 0.0, 5.0);
        assert!(raw_task_delay(&t, &site(NodeKind::Ap, 10.0, 1.0), &[Upstream::Remote { rate: 0.0 }]).is_err());
    }

    #[test]
    fn slowest_predecessor_bounds_transfer() {
        let t = task(0.0, 0.0, 60.0);
        let up = [Upstream::Remote { rate: 30.0 }, Upstream::CoLocated, Upstream::Remote { rate: 10.0 }];
        assert_eq!(dependency_delay(&t, &up).unwrap(), 6.0);
    }

    #[test]
    fn adjusted_examples() {
        let bs = MobilityPenalty::Handoff { handoffs: 2.0, handoff_delay: 1.0 };
        assert_eq!(adjusted_task_delay(14.0, NodeKind::Bs, &bs, VnPenalty::AsPrinted).unwrap(), 16.0);
        let vn = MobilityPenalty::Usability { usability: 0.5, local_recompute: 30.0 };
        assert_eq!(adjusted_task_delay(14.0, NodeKind::Vn, &vn, VnPenalty::AsPrinted).unwrap(), 29.0);
        let vn = MobilityPenalty::Usability { usability: 0.8, local_recompute: 30.0 };
        assert!((adjusted_task_delay(14.0, NodeKind::Vn, &vn, VnPenalty::FailureProb).unwrap() - 20.0).abs() < 1e-12);
        assert_eq!(adjusted_task_delay(14.0, NodeKind::Local, &MobilityPenalty::None, VnPenalty::AsPrinted).unwrap(), 14.0);
    }

    #[test]
    fn mobility_must_match_kind() {
        assert_eq!(
            adjusted_task_delay(1.0, NodeKind::Vn, &MobilityPenalty::None, VnPenalty::AsPrinted),
            Err(EnvError::MissingMobility(NodeKind::Vn))
        );
        let bs = MobilityPenalty::Handoff { handoffs: 2.0, handoff_delay: 1.0 };
        assert!(adjusted_task_delay(1.0, NodeKind::Vn, &bs, VnPenalty::AsPrinted).is_err());
    }

    fn dag(groups: &[Option<u32>]) -> ServiceDag {
        let tasks: Vec<TaskProfile> = groups
            .iter()
            .enumerate()
            .map(|(i, &g)| TaskProfile { id: i as u32, parallel_group: g, ..task(1.0, 0.0, 0.0) })
            .collect();
        ServiceDag { tasks, edges: Vec::<Edge>::new(), regions: vec![], clamp_events: 0 }
    }

    #[test]
    fn service_delay_examples() {
        assert_eq!(service_delay(&[3.0, 5.0, 2.0], &dag(&[None, None, None])).unwrap(), 10.0);
        let par = dag(&[None, Some(0), Some(0), None]);
        assert_eq!(service_delay(&[3.0, 5.0, 7.0, 2.0], &par).unwrap(), 12.0);
        assert_eq!(longest_flags(&[3.0, 5.0, 7.0, 2.0], &par).unwrap(), vec![true, false, true, true]);
        assert_eq!(service_delay(&[4.5], &dag(&[None])).unwrap(), 4.5);
        assert!(matches!(service_delay(&[1.0], &par), Err(EnvError::MissingDelay { .. })));
    }
}
