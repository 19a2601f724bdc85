//! Bundled scenarios.

use crate::channel::{ApChannel, BsChannel};

use super::{
    materialize, ApConfig, BandwidthConfig, BsConfig, EnvOptions, MixtureComponent, NodesConfig,
    Quotas, Scenario, ScenarioConfig, ScenarioError, ServiceConfig, ServiceDag, TaskProfile,
};

pub const REFERENCE_TOML: &str = include_str!("../../assets/reference.toml");

pub fn reference_config() -> ScenarioConfig {
    ScenarioConfig::from_toml(REFERENCE_TOML).expect("bundled reference config is valid")
}

pub fn reference(seed: u64) -> Result<Scenario, ScenarioError> {
    materialize(&reference_config(), seed)
}

/// BS channel whose Shannon rate is exactly `rate` (unit SNR).
fn bs_channel_with_rate(rate: f64) -> BsChannel {
    BsChannel { bandwidth_hz: rate, tx_power: 1.0, gain: 1.0, noise_power: 1.0, interferers: vec![] }
}

/// Single-station WLAN channel whose rate is exactly `rate`: with `w_min = 3`
/// and no collisions the transmit probability is 1/2 and the rate is `L / 2`.
fn wlan_channel_with_rate(rate: f64) -> ApChannel {
    ApChannel {
        w_min: 3,
        max_backoff: 0,
        collision_prob: 0.0,
        busy_success: 0.0,
        busy_collision: 0.0,
        payload: 2.0 * rate,
        contenders: 1,
    }
}

fn uniform_bandwidth(rate: f64) -> BandwidthConfig {
    BandwidthConfig {
        bs_bs: rate,
        bs_ap: rate,
        ap_ap: rate,
        ap_vehicle: rate,
        bs_vehicle: rate,
        vehicle_vehicle: rate,
    }
}

/// One BS ten times faster than every other node, with identical access
/// and backhaul rates everywhere and no mobility penalties.
pub fn dominant_node_config() -> ScenarioConfig {
    let rate = 1.0e8;
    ScenarioConfig {
        service: ServiceConfig {
            tasks: Some(5),
            regions: vec![],
            mixture: vec![MixtureComponent { count: 5, cycles: 5000.0 }],
            demand_jitter_std: 500.0,
            dep_data_mean: 1.0e8,
            dep_data_std: 2.0e7,
            interactive_mean: 1.0e7,
            interactive_std: 2.0e6,
            resample: true,
        },
        nodes: NodesConfig {
            local_freq: 100.0,
            freq_jitter_std: 5.0,
            speed: 20.0,
            bs: Some(BsConfig {
                freqs: vec![1000.0, 100.0],
                residence_rate: 0.0,
                handoff_delay: 0.0,
                channel: bs_channel_with_rate(rate),
            }),
            ap: Some(ApConfig {
                freqs: vec![100.0],
                residence_rate: 0.0,
                handoff_delay: 0.0,
                channel: wlan_channel_with_rate(rate),
            }),
            vn: None,
        },
        bandwidth: uniform_bandwidth(rate),
        quotas: Quotas { bs: 2, ap: 1, vn: 1 },
        env: EnvOptions::default(),
    }
}

pub fn dominant_node(seed: u64) -> Result<Scenario, ScenarioError> {
    materialize(&dominant_node_config(), seed)
}

/// Two-node service where the myopically best first placement forces a slow
/// cross-node transfer later.
///
/// Node A (BS, 10 cycles/s) has a fast access link; node B (AP, 100 cycles/s)
/// a slow one; A and B are joined by a 1 bit/s link. Task 0 is light and
/// chatty, so A wins it. Task 1 is heavy with a large input, so it wants B
/// but must then pull its input across the A-B link. The fixed service is
/// replayed every episode with no jitter.
pub fn dependency_trap_config() -> ScenarioConfig {
    ScenarioConfig {
        service: ServiceConfig {
            tasks: Some(3),
            regions: vec![],
            mixture: vec![MixtureComponent { count: 3, cycles: 100.0 }],
            demand_jitter_std: 0.0,
            dep_data_mean: 100.0,
            dep_data_std: 0.0,
            interactive_mean: 100.0,
            interactive_std: 0.0,
            resample: false,
        },
        nodes: NodesConfig {
            local_freq: 1.0,
            freq_jitter_std: 0.0,
            speed: 20.0,
            bs: Some(BsConfig {
                freqs: vec![10.0],
                residence_rate: 0.0,
                handoff_delay: 0.0,
                channel: bs_channel_with_rate(1000.0),
            }),
            ap: Some(ApConfig {
                freqs: vec![100.0],
                residence_rate: 0.0,
                handoff_delay: 0.0,
                channel: wlan_channel_with_rate(20.0),
            }),
            vn: None,
        },
        bandwidth: uniform_bandwidth(1.0),
        quotas: Quotas { bs: 1, ap: 1, vn: 1 },
        env: EnvOptions::default(),
    }
}

pub fn dependency_trap_service() -> ServiceDag {
    let task = |id, compute_demand, interactive_data, dep_data_in| TaskProfile {
        id,
        compute_demand,
        interactive_data,
        dep_data_in,
        parallel_group: None,
    };
    ServiceDag::chain(vec![
        task(0, 10.0, 100.0, 0.0),
        task(1, 1000.0, 0.0, 100.0),
        task(2, 100.0, 100.0, 100.0),
    ])
}

pub fn dependency_trap() -> Result<Scenario, ScenarioError> {
    let mut scenario = materialize(&dependency_trap_config(), 0)?;
    scenario.service = dependency_trap_service();
    scenario.validate()?;
    Ok(scenario)
}
