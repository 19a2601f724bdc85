//! Services, node catalogs and scenario files.
//!
//! A [`ScenarioConfig`] describes distributions; [`materialize`] turns it into
//! a [`Scenario`] holding a concrete node catalog and one sample service.
//! Both serialise to TOML. Everything here is a pure function of
//! `(config, seed)`.

mod config;
mod dag;
mod generate;
mod node;
pub mod presets;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use config::{
    ApConfig, BandwidthConfig, BsConfig, EnvOptions, MixtureComponent, NodesConfig, Quotas,
    RegionSpec, ScenarioConfig, ServiceConfig, VnConfig, VnPenalty,
};
pub use dag::{validate_dag, DagViolation, Edge, Region, ServiceDag, TaskId, TaskProfile, TopologyKind};
pub use generate::{generate_nodes, generate_service, sample_frequency, MIN_FREQ_FRACTION};
pub use node::{BackhaulLink, EdgeNode, NodeId, NodeKind, PSEUDO_FREQ};

pub const SCENARIO_SCHEMA: &str = "kdoffload.scenario.v1";

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("node {id}: {msg}")]
    Node { id: NodeId, msg: String },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid service DAG: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Dag(Vec<DagViolation>),
    #[error("unsupported scenario schema {0:?}")]
    Schema(String),
    #[error("serialisation failed: {0}")]
    Serialize(String),
}

/// A fully materialised scenario: configuration, node catalog and a sample
/// service.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub schema: String,
    pub seed: u64,
    pub config: ScenarioConfig,
    pub nodes: Vec<EdgeNode>,
    pub service: ServiceDag,
}

pub fn materialize(config: &ScenarioConfig, seed: u64) -> Result<Scenario, ScenarioError> {
    let scenario = Scenario {
        schema: SCENARIO_SCHEMA.to_string(),
        seed,
        config: config.clone(),
        nodes: generate_nodes(config, seed)?,
        service: generate_service(config, seed)?,
    };
    scenario.validate()?;
    Ok(scenario)
}

impl Scenario {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.schema != SCENARIO_SCHEMA {
            return Err(ScenarioError::Schema(self.schema.clone()));
        }
        self.config.validate()?;
        let mut ids = BTreeSet::new();
        for n in &self.nodes {
            n.validate()?;
            if !ids.insert(n.id) {
                return Err(ScenarioError::Node { id: n.id, msg: "duplicate id".into() });
            }
        }
        let locals = self.nodes.iter().filter(|n| n.kind == NodeKind::Local).count();
        if locals != 1 {
            return Err(ScenarioError::Config(format!("expected one LOCAL node, found {locals}")));
        }
        for n in &self.nodes {
            for &peer in &ids {
                if peer != n.id && n.link_rate(peer).is_none() {
                    return Err(ScenarioError::Node { id: n.id, msg: format!("no backhaul rate to node {peer}") });
                }
            }
            let rate = n
                .access_rate(self.config.env.bs_rate_as_printed)
                .map_err(|e| ScenarioError::Node { id: n.id, msg: e.to_string() })?;
            if !(rate > 0.0) {
                return Err(ScenarioError::Node { id: n.id, msg: format!("access rate {rate} is not positive") });
            }
        }
        let violations = validate_dag(&self.service);
        if !violations.is_empty() {
            return Err(ScenarioError::Dag(violations));
        }
        Ok(())
    }

    pub fn local(&self) -> &EdgeNode {
        self.nodes.iter().find(|n| n.kind == NodeKind::Local).expect("validated scenario has a local node")
    }

    pub fn node(&self, id: NodeId) -> Option<&EdgeNode> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn to_toml(&self) -> Result<String, ScenarioError> {
        toml::to_string(self).map_err(|e| ScenarioError::Serialize(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self, ScenarioError> {
        let scenario: Scenario = toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        scenario.validate()?;
        Ok(scenario)
    }
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self, ScenarioError> {
        let config: ScenarioConfig = toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> Result<String, ScenarioError> {
        toml::to_string(self).map_err(|e| ScenarioError::Serialize(e.to_string()))
    }
}

/// Parses either a materialised scenario or a bare config. A config is
/// materialised with `seed`.
pub fn load_scenario_text(text: &str, seed: u64) -> Result<Scenario, ScenarioError> {
    let table: toml::Table = text.parse().map_err(|e: toml::de::Error| ScenarioError::Parse(e.to_string()))?;
    if table.contains_key("schema") {
        Scenario::from_toml(text)
    } else {
        materialize(&ScenarioConfig::from_toml(text)?, seed)
    }
}
