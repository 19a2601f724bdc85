use serde::{Deserialize, Serialize};

use crate::channel::{ApChannel, BsChannel};

use super::ScenarioError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub service: ServiceConfig,
    pub nodes: NodesConfig,
    pub bandwidth: BandwidthConfig,
    pub quotas: Quotas,
    #[serde(default)]
    pub env: EnvOptions,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureComponent {
    pub count: u32,
    /// CPU cycles before jitter.
    pub cycles: f64,
}

/// One generation region. Selective branches and loops are realised at
/// generation time, so the service handed to the environment is concrete.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum RegionSpec {
    Sequence { length: u32 },
    Parallel { width: u32 },
    Selective { branches: Vec<u32>, probs: Vec<f64> },
    Loop { body: u32, iterations: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceConfig {
    /// Length of the default serial service when no regions are configured.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tasks: Option<u32>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub regions: Vec<RegionSpec>,
    pub mixture: Vec<MixtureComponent>,
    pub demand_jitter_std: f64,
    /// Bits per dependency edge.
    pub dep_data_mean: f64,
    pub dep_data_std: f64,
    pub interactive_mean: f64,
    pub interactive_std: f64,
    /// Draw a fresh service for every episode instead of replaying the
    /// materialised one.
    #[serde(default = "yes")]
    pub resample: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BsConfig {
    pub freqs: Vec<f64>,
    pub residence_rate: f64,
    pub handoff_delay: f64,
    #[serde(flatten)]
    pub channel: BsChannel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApConfig {
    pub freqs: Vec<f64>,
    pub residence_rate: f64,
    pub handoff_delay: f64,
    #[serde(flatten)]
    pub channel: ApChannel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VnConfig {
    pub freqs: Vec<f64>,
    pub z_min: f64,
    pub z_max: f64,
    pub unit: f64,
    pub p: f64,
    pub q: f64,
    pub beta: f64,
    pub comm_range_state: usize,
    pub time_step: f64,
    /// Starting headway state; drawn per node from `0..=comm_range_state`
    /// when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_state: Option<usize>,
    pub wlan: ApChannel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodesConfig {
    pub local_freq: f64,
    /// Std-dev of the per-task frequency resampling.
    pub freq_jitter_std: f64,
    /// Vehicle speed, m/s.
    pub speed: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bs: Option<BsConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ap: Option<ApConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vn: Option<VnConfig>,
}

/// Fixed-network rates between node kinds, bits/s. "vehicle" covers the
/// local vehicle and neighbouring vehicles alike.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BandwidthConfig {
    pub bs_bs: f64,
    pub bs_ap: f64,
    pub ap_ap: f64,
    pub ap_vehicle: f64,
    pub bs_vehicle: f64,
    pub vehicle_vehicle: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Quotas {
    pub bs: usize,
    pub ap: usize,
    pub vn: usize,
}

impl Quotas {
    /// Candidate slots including local execution.
    pub fn action_count(&self) -> usize {
        1 + self.bs + self.ap + self.vn
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VnPenalty {
    /// Re-execution cost weighted by the usability itself.
    #[default]
    AsPrinted,
    /// Re-execution cost weighted by the link failure probability `1 - R`.
    FailureProb,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvOptions {
    #[serde(default)]
    pub vn_penalty: VnPenalty,
    #[serde(default)]
    pub bs_rate_as_printed: bool,
    /// Padding-slot delay as a multiple of the worst real slot for the task.
    #[serde(default = "default_pseudo_factor")]
    pub pseudo_delay_factor: f64,
    /// When set, residence rates scale by `speed / reference_speed`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub speed_reference: Option<f64>,
}

fn default_pseudo_factor() -> f64 {
    10.0
}

impl Default for EnvOptions {
    fn default() -> Self {
        Self {
            vn_penalty: VnPenalty::AsPrinted,
            bs_rate_as_printed: false,
            pseudo_delay_factor: default_pseudo_factor(),
            speed_reference: None,
        }
    }
}

fn non_negative(name: &str, v: f64) -> Result<(), ScenarioError> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(ScenarioError::Config(format!("{name} must be finite and non-negative, got {v}")))
    }
}

fn positive(name: &str, v: f64) -> Result<(), ScenarioError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(ScenarioError::Config(format!("{name} must be finite and positive, got {v}")))
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let s = &self.service;
        if s.mixture.is_empty() || s.mixture.iter().all(|m| m.count == 0) {
            return Err(ScenarioError::Config("service.mixture must have a positive count".into()));
        }
        for m in &s.mixture {
            non_negative("service.mixture.cycles", m.cycles)?;
        }
        non_negative("service.demand_jitter_std", s.demand_jitter_std)?;
        non_negative("service.dep_data_mean", s.dep_data_mean)?;
        non_negative("service.dep_data_std", s.dep_data_std)?;
        non_negative("service.interactive_mean", s.interactive_mean)?;
        non_negative("service.interactive_std", s.interactive_std)?;
        if s.regions.is_empty() {
            if s.tasks.unwrap_or(0) == 0 {
                return Err(ScenarioError::Config("service needs tasks > 0 or regions".into()));
            }
        }
        for r in &s.regions {
            match r {
                RegionSpec::Sequence { length: 0 }
                | RegionSpec::Parallel { width: 0 }
                | RegionSpec::Loop { body: 0, .. }
                | RegionSpec::Loop { iterations: 0, .. } => {
                    return Err(ScenarioError::Config(format!("empty region {r:?}")));
                }
                RegionSpec::Selective { branches, probs } => {
                    if branches.is_empty() || branches.len() != probs.len() || branches.contains(&0) {
                        return Err(ScenarioError::Config(
                            "selective region needs matching non-empty branches and probs".into(),
                        ));
                    }
                    for &p in probs {
                        non_negative("selective prob", p)?;
                    }
                    if probs.iter().sum::<f64>() <= 0.0 {
                        return Err(ScenarioError::Config("selective probs sum to zero".into()));
                    }
                }
                _ => {}
            }
        }

        let n = &self.nodes;
        positive("nodes.local_freq", n.local_freq)?;
        non_negative("nodes.freq_jitter_std", n.freq_jitter_std)?;
        non_negative("nodes.speed", n.speed)?;
        let freqs = n
            .bs
            .iter()
            .flat_map(|b| &b.freqs)
            .chain(n.ap.iter().flat_map(|a| &a.freqs))
            .chain(n.vn.iter().flat_map(|v| &v.freqs));
        for &f in freqs {
            positive("node frequency", f)?;
        }
        let b = &self.bandwidth;
        for (name, v) in [
            ("bandwidth.bs_bs", b.bs_bs),
            ("bandwidth.bs_ap", b.bs_ap),
            ("bandwidth.ap_ap", b.ap_ap),
            ("bandwidth.ap_vehicle", b.ap_vehicle),
            ("bandwidth.bs_vehicle", b.bs_vehicle),
            ("bandwidth.vehicle_vehicle", b.vehicle_vehicle),
        ] {
            positive(name, v)?;
        }
        positive("env.pseudo_delay_factor", self.env.pseudo_delay_factor)?;
        if let Some(v) = self.env.speed_reference {
            positive("env.speed_reference", v)?;
        }
        Ok(())
    }
}
