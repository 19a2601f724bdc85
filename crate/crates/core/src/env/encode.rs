//! Flat network input.
//!
//! Layout: `[task (3) | per slot: BS/AP/VN one-hot (3), freq, access rate,
//! handoffs, usability | speed]`. The local slot has an all-zero one-hot.

use serde::{Deserialize, Serialize};

use crate::scenario::{NodeKind, Scenario};

use super::{EnvError, EnvState};

pub const TASK_FEATURES: usize = 3;
pub const NODE_FEATURES: usize = 7;

pub fn encoded_len(slots: usize) -> usize {
    TASK_FEATURES + NODE_FEATURES * slots + 1
}

/// Per-feature divisors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Norms {
    pub task: [f64; TASK_FEATURES],
    pub cpu_freq: f64,
    pub access_rate: f64,
    pub handoffs: f64,
    pub usability: f64,
    pub speed: f64,
}

impl Norms {
    pub fn unit() -> Self {
        Self { task: [1.0; 3], cpu_freq: 1.0, access_rate: 1.0, handoffs: 1.0, usability: 1.0, speed: 1.0 }
    }

    /// Scales that bring typical features of `scenario` to order one.
    pub fn for_scenario(scenario: &Scenario) -> Self {
        let or_one = |x: f64| if x > 0.0 && x.is_finite() { x } else { 1.0 };
        let s = &scenario.config.service;
        let max_cycles = s.mixture.iter().map(|m| m.cycles).fold(0.0, f64::max);
        let literal = scenario.config.env.bs_rate_as_printed;
        let max_access = scenario
            .nodes
            .iter()
            .filter_map(|n| n.access_rate(literal).ok())
            .filter(|r| r.is_finite())
            .fold(0.0, f64::max);
        let max_freq = scenario.nodes.iter().filter(|n| n.kind != NodeKind::Pseudo).map(|n| n.cpu_freq).fold(0.0, f64::max);
        Self {
            task: [
                or_one(max_cycles),
                or_one(s.interactive_mean + s.interactive_std),
                or_one(s.dep_data_mean + s.dep_data_std),
            ],
            cpu_freq: or_one(max_freq),
            access_rate: or_one(max_access),
            handoffs: 1.0,
            usability: 1.0,
            speed: or_one(scenario.config.nodes.speed),
        }
    }

    fn validate(&self) -> Result<(), EnvError> {
        let all = self.task.iter().chain([&self.cpu_freq, &self.access_rate, &self.handoffs, &self.usability, &self.speed]);
        for &v in all {
            if !(v > 0.0 && v.is_finite()) {
                return Err(EnvError::BadNorms);
            }
        }
        Ok(())
    }
}

fn finite(v: f64, name: &'static str) -> Result<f64, EnvError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(EnvError::NonFinite(name))
    }
}

pub fn encode_state(state: &EnvState, norms: &Norms) -> Result<Vec<f64>, EnvError> {
    norms.validate()?;
    let mut out = Vec::with_capacity(encoded_len(state.node_features.len()));
    for (i, (&v, &n)) in state.task_features.iter().zip(&norms.task).enumerate() {
        let name = ["task.compute", "task.interactive", "task.dependency"][i];
        out.push(finite(v, name)? / n);
    }
    for slot in &state.node_features {
        let mut one_hot = [0.0; 3];
        if let Some(i) = slot.kind.one_hot_index() {
            one_hot[i] = 1.0;
        }
        out.extend(one_hot);
        out.push(finite(slot.cpu_freq, "slot.cpu_freq")? / norms.cpu_freq);
        out.push(finite(slot.access_rate, "slot.access_rate")? / norms.access_rate);
        out.push(finite(slot.handoffs, "slot.handoffs")? / norms.handoffs);
        out.push(finite(slot.usability, "slot.usability")? / norms.usability);
    }
    out.push(finite(state.speed, "speed")? / norms.speed);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::SlotFeatures;

    fn state(slots: usize, value: f64) -> EnvState {
        EnvState {
            task_features: [value; 3],
            node_features: (0..slots)
                .map(|_| SlotFeatures { kind: NodeKind::Local, cpu_freq: value, access_rate: value, handoffs: value, usability: value })
                .collect(),
            speed: value,
            step_index: 1,
        }
    }

    #[test]
    fn reference_layout_length() {
        assert_eq!(encoded_len(11), 81);
        assert_eq!(encode_state(&state(11, 1.0), &Norms::unit()).unwrap().len(), 81);
    }

    #[test]
    fn zero_features_encode_to_zero() {
        assert!(encode_state(&state(4, 0.0), &Norms::unit()).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn scaling_norms_scales_inverse() {
        let s = state(3, 6.0);
        let base = encode_state(&s, &Norms::unit()).unwrap();
        let mut norms = Norms::unit();
        norms.task = [3.0; 3];
        norms.cpu_freq = 3.0;
        norms.access_rate = 3.0;
        norms.handoffs = 3.0;
        norms.usability = 3.0;
        norms.speed = 3.0;
        let scaled = encode_state(&s, &norms).unwrap();
        for (a, b) in base.iter().zip(&scaled) {
            assert_eq!(*b, a / 3.0);
        }
    }

    #[test]
    fn rejects_non_finite_and_bad_norms() {
        let mut s = state(2, 1.0);
        s.speed = f64::NAN;
        assert_eq!(encode_state(&s, &Norms::unit()), Err(EnvError::NonFinite("speed")));
        let mut norms = Norms::unit();
        norms.speed = 0.0;
        assert_eq!(encode_state(&state(2, 1.0), &norms), Err(EnvError::BadNorms));
    }

    #[test]
    fn one_hot_positions() {
        let mut s = state(3, 0.0);
        s.node_features[0].kind = NodeKind::Local;
        s.node_features[1].kind = NodeKind::Bs;
        s.node_features[2].kind = NodeKind::Vn;
        let v = encode_state(&s, &Norms::unit()).unwrap();
        assert_eq!(&v[3..6], &[0.0, 0.0, 0.0]);
        assert_eq!(&v[10..13], &[1.0, 0.0, 0.0]);
        assert_eq!(&v[17..20], &[0.0, 0.0, 1.0]);
    }
}
