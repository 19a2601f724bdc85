use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

pub type TaskId = u32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskProfile {
    pub id: TaskId,
    /// CPU cycles.
    pub compute_demand: f64,
    /// Bits exchanged with the vehicle while the task runs.
    pub interactive_data: f64,
    /// Bits received over each predecessor edge. Root tasks receive this
    /// from the vehicle itself.
    pub dep_data_in: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parallel_group: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TopologyKind {
    Sequence,
    Parallel,
    Selective,
    LoopUnrolled,
}

/// A contiguous run of tasks produced by one configured region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub kind: TopologyKind,
    pub first_task: TaskId,
    pub task_count: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Edge {
    pub from: TaskId,
    pub to: TaskId,
}

/// A multi-task service. Tasks are stored in a topological order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceDag {
    pub tasks: Vec<TaskProfile>,
    pub edges: Vec<Edge>,
    #[serde(default)]
    pub regions: Vec<Region>,
    /// Normal samples clamped at zero while generating this service.
    #[serde(default)]
    pub clamp_events: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DagViolation {
    DuplicateTask(TaskId),
    UnknownTask(TaskId),
    SelfLoop(TaskId),
    Cycle(Vec<TaskId>),
    /// Tasks not listed after all of their predecessors.
    OrderViolation { from: TaskId, to: TaskId },
    GroupMismatch { group: u32, a: TaskId, b: TaskId },
    NegativeDemand(TaskId),
}

impl fmt::Display for DagViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::DuplicateTask(id) => write!(f, "task id {id} appears more than once"),
            Self::UnknownTask(id) => write!(f, "edge references unknown task {id}"),
            Self::SelfLoop(id) => write!(f, "task {id} depends on itself"),
            Self::Cycle(ids) => write!(f, "cycle through tasks {ids:?}"),
            Self::OrderViolation { from, to } => {
                write!(f, "task {to} is listed before its predecessor {from}")
            }
            Self::GroupMismatch { group, a, b } => write!(
                f,
                "parallel group {group}: tasks {a} and {b} have different neighbours"
            ),
            Self::NegativeDemand(id) => write!(f, "task {id} has a negative or non-finite demand"),
        }
    }
}

impl ServiceDag {
    /// A plain chain `t0 -> t1 -> ...` over the given tasks.
    pub fn chain(tasks: Vec<TaskProfile>) -> Self {
        let edges = tasks
            .windows(2)
            .map(|w| Edge { from: w[0].id, to: w[1].id })
            .collect();
        let n = tasks.len() as u32;
        let first = tasks.first().map_or(0, |t| t.id);
        Self {
            tasks,
            edges,
            regions: vec![Region { kind: TopologyKind::Sequence, first_task: first, task_count: n }],
            clamp_events: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn position(&self, id: TaskId) -> Option<usize> {
        self.tasks.iter().position(|t| t.id == id)
    }

    /// Indices (into `tasks`) of the direct predecessors of the task at `index`.
    pub fn predecessors(&self, index: usize) -> Vec<usize> {
        let id = self.tasks[index].id;
        self.edges
            .iter()
            .filter(|e| e.to == id)
            .filter_map(|e| self.position(e.from))
            .collect()
    }

    /// Bits carried on the edge `from -> to`, if it exists.
    pub fn edge_data(&self, from: TaskId, to: TaskId) -> Option<f64> {
        self.edges
            .iter()
            .any(|e| e.from == from && e.to == to)
            .then(|| self.tasks[self.position(to).expect("edge target")].dep_data_in)
    }

    /// Tasks grouped by parallel group id, in listing order.
    pub fn parallel_groups(&self) -> BTreeMap<u32, Vec<usize>> {
        let mut groups: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        for (i, t) in self.tasks.iter().enumerate() {
            if let Some(g) = t.parallel_group {
                groups.entry(g).or_default().push(i);
            }
        }
        groups
    }
}

/// Reports structural problems; an empty list means the DAG is well formed.
pub fn validate_dag(dag: &ServiceDag) -> Vec<DagViolation> {
    let mut violations = Vec::new();
    let mut seen = BTreeSet::new();
    for t in &dag.tasks {
        if !seen.insert(t.id) {
            violations.push(DagViolation::DuplicateTask(t.id));
        }
        let fields = [t.compute_demand, t.interactive_data, t.dep_data_in];
        if fields.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            violations.push(DagViolation::NegativeDemand(t.id));
        }
    }
    for e in &dag.edges {
        for id in [e.from, e.to] {
            if !seen.contains(&id) {
                violations.push(DagViolation::UnknownTask(id));
            }
        }
        if e.from == e.to {
            violations.push(DagViolation::SelfLoop(e.from));
        }
    }
    if !violations.is_empty() {
        return violations;
    }

    if let Some(cycle) = find_cycle(dag) {
        violations.push(DagViolation::Cycle(cycle));
    } else {
        for e in &dag.edges {
            if dag.position(e.from) > dag.position(e.to) {
                violations.push(DagViolation::OrderViolation { from: e.from, to: e.to });
            }
        }
    }

    let neighbours = |id: TaskId| {
        let preds: BTreeSet<_> = dag.edges.iter().filter(|e| e.to == id).map(|e| e.from).collect();
        let succs: BTreeSet<_> = dag.edges.iter().filter(|e| e.from == id).map(|e| e.to).collect();
        (preds, succs)
    };
    for (group, members) in dag.parallel_groups() {
        let first = dag.tasks[members[0]].id;
        let reference = neighbours(first);
        for &m in &members[1..] {
            let id = dag.tasks[m].id;
            if neighbours(id) != reference {
                violations.push(DagViolation::GroupMismatch { group, a: first, b: id });
            }
        }
    }
    violations
}

/// Kahn's algorithm; returns the tasks left on a cycle, if any.
fn find_cycle(dag: &ServiceDag) -> Option<Vec<TaskId>> {
    let mut indegree: BTreeMap<TaskId, usize> = dag.tasks.iter().map(|t| (t.id, 0)).collect();
    for e in &dag.edges {
        *indegree.get_mut(&e.to).expect("validated") += 1;
    }
    let mut ready: Vec<TaskId> = indegree.iter().filter(|(_, &d)| d == 0).map(|(&id, _)| id).collect();
    let mut removed = 0;
    while let Some(id) = ready.pop() {
        removed += 1;
        for e in dag.edges.iter().filter(|e| e.from == id) {
            let d = indegree.get_mut(&e.to).expect("validated");
            *d -= 1;
            if *d == 0 {
                ready.push(e.to);
            }
        }
    }
    (removed < dag.tasks.len())
        .then(|| indegree.into_iter().filter(|&(_, d)| d > 0).map(|(id, _)| id).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn task(id: TaskId, group: Option<u32>) -> TaskProfile {
        TaskProfile {
            id,
            compute_demand: 1.0,
            interactive_data: 0.0,
            dep_data_in: 0.0,
            parallel_group: group,
        }
    }

    #[test]
    fn chain_is_valid() {
        let dag = ServiceDag::chain(vec![task(1, None), task(2, None), task(3, None)]);
        assert!(validate_dag(&dag).is_empty());
        assert_eq!(dag.predecessors(2), vec![1]);
        assert!(dag.predecessors(0).is_empty());
    }

    #[test]
    fn two_cycle_detected() {
        let dag = ServiceDag {
            tasks: vec![task(1, None), task(2, None)],
            edges: vec![Edge { from: 1, to: 2 }, Edge { from: 2, to: 1 }],
            regions: vec![],
            clamp_events: 0,
        };
        assert_eq!(validate_dag(&dag), vec![DagViolation::Cycle(vec![1, 2])]);
    }

    #[test]
    fn parallel_group_with_different_successors() {
        let dag = ServiceDag {
            tasks: vec![task(1, None), task(2, Some(0)), task(3, Some(0)), task(4, None)],
            edges: vec![
                Edge { from: 1, to: 2 },
                Edge { from: 1, to: 3 },
                Edge { from: 2, to: 4 },
            ],
            regions: vec![],
            clamp_events: 0,
        };
        assert_eq!(
            validate_dag(&dag),
            vec![DagViolation::GroupMismatch { group: 0, a: 2, b: 3 }]
        );
    }

    #[test]
    fn structural_errors() {
        let mut dag = ServiceDag::chain(vec![task(1, None), task(1, None)]);
        assert!(validate_dag(&dag).contains(&DagViolation::DuplicateTask(1)));
        dag.tasks[1].id = 2;
        dag.edges = vec![Edge { from: 1, to: 9 }];
        assert_eq!(validate_dag(&dag), vec![DagViolation::UnknownTask(9)]);
        dag.edges = vec![Edge { from: 2, to: 1 }];
        assert_eq!(
            validate_dag(&dag),
            vec![DagViolation::OrderViolation { from: 2, to: 1 }]
        );
        dag.edges.clear();
        dag.tasks[0].compute_demand = -1.0;
        assert_eq!(validate_dag(&dag), vec![DagViolation::NegativeDemand(1)]);
    }
}
