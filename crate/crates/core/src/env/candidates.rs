use crate::scenario::{EdgeNode, NodeId, NodeKind, Quotas};

/// One entry of the fixed action space.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Candidate {
    Local,
    Node { kind: NodeKind, id: NodeId },
    /// Padding for a kind with fewer accessible nodes than its quota.
    Pseudo { kind: NodeKind },
}

impl Candidate {
    /// Node kind this slot stands for.
    pub fn kind(&self) -> NodeKind {
        match *self {
            Self::Local => NodeKind::Local,
            Self::Node { kind, .. } | Self::Pseudo { kind } => kind,
        }
    }

    pub fn node_id(&self) -> Option<NodeId> {
        match *self {
            Self::Node { id, .. } => Some(id),
            _ => None,
        }
    }

    pub fn is_pseudo(&self) -> bool {
        matches!(self, Self::Pseudo { .. })
    }
}

/// Fixed-size action space `[local, BS.., AP.., VN..]`.
///
/// Per kind, accessible nodes are ranked by nominal frequency (ties by id)
/// and truncated to the quota; missing slots become padding.
pub fn candidate_set(accessible: &[EdgeNode], quotas: Quotas) -> Vec<Candidate> {
    let mut slots = vec![Candidate::Local];
    for (kind, quota) in [(NodeKind::Bs, quotas.bs), (NodeKind::Ap, quotas.ap), (NodeKind::Vn, quotas.vn)] {
        let mut nodes: Vec<&EdgeNode> = accessible.iter().filter(|n| n.kind == kind).collect();
        nodes.sort_by(|a, b| b.cpu_freq.total_cmp(&a.cpu_freq).then(a.id.cmp(&b.id)));
        slots.extend(nodes.iter().take(quota).map(|n| Candidate::Node { kind, id: n.id }));
        slots.extend((nodes.len()..quota).map(|_| Candidate::Pseudo { kind }));
    }
    slots
}
