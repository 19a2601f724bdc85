use std::fmt;

use serde::{Deserialize, Serialize};

use crate::channel::{self, ApChannel, BsChannel, ChannelError};
use crate::mobility::HeadwayChain;

use super::ScenarioError;

pub type NodeId = u32;

/// Frequency used by padding slots.
pub const PSEUDO_FREQ: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum NodeKind {
    Bs,
    Ap,
    Vn,
    Local,
    Pseudo,
}

impl NodeKind {
    /// Local vehicle and neighbouring vehicles.
    pub fn is_vehicle(self) -> bool {
        matches!(self, Self::Vn | Self::Local)
    }

    /// Position in the three-way type one-hot, if the kind has one.
    pub fn one_hot_index(self) -> Option<usize> {
        match self {
            Self::Bs => Some(0),
            Self::Ap => Some(1),
            Self::Vn => Some(2),
            Self::Local | Self::Pseudo => None,
        }
    }
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Bs => "BS",
            Self::Ap => "AP",
            Self::Vn => "VN",
            Self::Local => "LOCAL",
            Self::Pseudo => "PSEUDO",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BackhaulLink {
    pub peer: NodeId,
    /// bits/s
    pub rate: f64,
}

/// One offloading destination.
///
/// BS nodes carry a cellular channel and handoff parameters; AP nodes carry a
/// WLAN channel and handoff parameters; VN nodes carry a WLAN channel and a
/// headway chain. The local vehicle carries none of these.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeNode {
    pub id: NodeId,
    pub kind: NodeKind,
    /// Nominal CPU frequency, cycles/s.
    pub cpu_freq: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bs_channel: Option<BsChannel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ap_channel: Option<ApChannel>,
    /// Inverse mean residence time in the node's coverage area, 1/s.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residence_rate: Option<f64>,
    /// Migration time per handoff, s.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub handoff_delay: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub headway: Option<HeadwayChain>,
    #[serde(default)]
    pub backhaul: Vec<BackhaulLink>,
}

impl EdgeNode {
    pub fn local(id: NodeId, cpu_freq: f64) -> Self {
        Self {
            id,
            kind: NodeKind::Local,
            cpu_freq,
            bs_channel: None,
            ap_channel: None,
            residence_rate: None,
            handoff_delay: None,
            headway: None,
            backhaul: Vec::new(),
        }
    }

    /// Padding node; never part of a scenario catalog.
    pub fn pseudo(id: NodeId) -> Self {
        Self { kind: NodeKind::Pseudo, ..Self::local(id, PSEUDO_FREQ) }
    }

    /// Rate to `peer` over the fixed network, bits/s.
    pub fn link_rate(&self, peer: NodeId) -> Option<f64> {
        self.backhaul.iter().find(|l| l.peer == peer).map(|l| l.rate)
    }

    pub fn set_link_rate(&mut self, peer: NodeId, rate: f64) {
        match self.backhaul.iter_mut().find(|l| l.peer == peer) {
            Some(l) => l.rate = rate,
            None => {
                self.backhaul.push(BackhaulLink { peer, rate });
                self.backhaul.sort_by_key(|l| l.peer);
            }
        }
    }

    /// Vehicle-to-node access rate. Infinite for the local vehicle, zero for
    /// padding nodes.
    pub fn access_rate(&self, bs_rate_as_printed: bool) -> Result<f64, ChannelError> {
        match self.kind {
            NodeKind::Local => Ok(f64::INFINITY),
            NodeKind::Pseudo => Ok(0.0),
            NodeKind::Bs => {
                let ch = self.bs_channel.as_ref().expect("validated BS node has a channel");
                if bs_rate_as_printed {
                    channel::bs_uplink_rate_literal(ch)
                } else {
                    channel::bs_uplink_rate(ch)
                }
            }
            NodeKind::Ap | NodeKind::Vn => {
                channel::ap_rate(self.ap_channel.as_ref().expect("validated WLAN node has a channel"))
            }
        }
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |msg: &str| Err(ScenarioError::Node { id: self.id, msg: msg.to_string() });
        if self.kind == NodeKind::Pseudo {
            return bad("PSEUDO nodes cannot appear in a catalog");
        }
        if !(self.cpu_freq > 0.0 && self.cpu_freq.is_finite()) {
            return bad("cpu_freq must be positive and finite");
        }
        let wants_bs = self.kind == NodeKind::Bs;
        let wants_ap = matches!(self.kind, NodeKind::Ap | NodeKind::Vn);
        let wants_handoff = matches!(self.kind, NodeKind::Bs | NodeKind::Ap);
        let wants_headway = self.kind == NodeKind::Vn;
        if self.bs_channel.is_some() != wants_bs {
            return bad("bs_channel present iff kind is BS");
        }
        if self.ap_channel.is_some() != wants_ap {
            return bad("ap_channel present iff kind is AP or VN");
        }
        if self.residence_rate.is_some() != wants_handoff || self.handoff_delay.is_some() != wants_handoff {
            return bad("residence_rate and handoff_delay present iff kind is BS or AP");
        }
        if self.headway.is_some() != wants_headway {
            return bad("headway present iff kind is VN");
        }
        if let Some(ch) = &self.bs_channel {
            ch.validate().map_err(|e| ScenarioError::Node { id: self.id, msg: e.to_string() })?;
        }
        if let Some(ch) = &self.ap_channel {
            ch.validate().map_err(|e| ScenarioError::Node { id: self.id, msg: e.to_string() })?;
        }
        if let Some(chain) = &self.headway {
            chain.validate().map_err(|e| ScenarioError::Node { id: self.id, msg: e.to_string() })?;
        }
        if self.residence_rate.is_some_and(|r| !(r >= 0.0 && r.is_finite())) {
            return bad("residence_rate must be finite and non-negative");
        }
        if self.handoff_delay.is_some_and(|d| !(d >= 0.0 && d.is_finite())) {
            return bad("handoff_delay must be finite and non-negative");
        }
        if self.backhaul.iter().any(|l| !(l.rate > 0.0)) {
            return bad("backhaul rates must be positive");
        }
        Ok(())
    }
}
