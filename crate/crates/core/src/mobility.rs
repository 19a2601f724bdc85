//! Mobility impact on offloaded tasks.
//!
//! Fixed infrastructure (BS, AP) costs handoffs: the expected count over a
//! task is the ratio of residence rate to execution rate. Neighbouring
//! vehicles are reachable only while the distance headway stays within radio
//! range; the headway is a birth-death chain over discretised gaps.

use serde::{Deserialize, Serialize};
use thiserror::Error;

const SIMPLEX_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MobilityError {
    #[error("execution rate must be positive, got {0}")]
    NonPositiveExecRate(f64),
    #[error("residence rate must be non-negative, got {0}")]
    NegativeResidenceRate(f64),
    #[error("headway bounds invalid: z_min {z_min} must be below z_max {z_max}")]
    Bounds { z_min: f64, z_max: f64 },
    #[error("headway unit must be positive, got {0}")]
    Unit(f64),
    #[error("{name} = {value} outside [0, 1]")]
    Probability { name: &'static str, value: f64 },
    #[error("state {state}: p_j + q_j = {sum} exceeds 1")]
    TransitionSum { state: usize, sum: f64 },
    #[error("state index {index} out of range for {states} states")]
    StateIndex { index: usize, states: usize },
    #[error("initial distribution has {got} entries, chain has {states} states")]
    InitialLength { got: usize, states: usize },
    #[error("distribution is not on the simplex (sum {0})")]
    NotSimplex(f64),
    #[error("time step must be positive, got {0}")]
    TimeStep(f64),
    #[error("dimension mismatch: distribution {dist}, matrix {matrix}")]
    Dimension { dist: usize, matrix: usize },
}

/// Expected handoff count over one task: `residence_rate / exec_rate`.
pub fn expected_handoffs(exec_rate: f64, residence_rate: f64) -> Result<f64, MobilityError> {
    if !(exec_rate > 0.0) {
        return Err(MobilityError::NonPositiveExecRate(exec_rate));
    }
    if !(residence_rate >= 0.0) {
        return Err(MobilityError::NegativeResidenceRate(residence_rate));
    }
    Ok(residence_rate / exec_rate)
}

/// Handoffs from mean times rather than rates; accepts any residence-time
/// distribution through its mean.
pub fn expected_handoffs_from_means(exec_mean: f64, residence_mean: f64) -> Result<f64, MobilityError> {
    let residence_rate = if residence_mean.is_infinite() { 0.0 } else { 1.0 / residence_mean };
    expected_handoffs(1.0 / exec_mean, residence_rate)
}

/// Discrete-time distance-headway chain between the vehicle and one neighbour.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadwayChain {
    pub z_min: f64,
    pub z_max: f64,
    /// Headway change per state, m.
    pub unit: f64,
    pub p: f64,
    pub q: f64,
    pub beta: f64,
    /// Highest state still within radio range.
    pub comm_range_state: usize,
    /// Seconds per chain step.
    pub time_step: f64,
    pub initial_dist: Vec<f64>,
}

impl HeadwayChain {
    /// Number of states including the overflow state above `z_max`.
    pub fn state_count(z_min: f64, z_max: f64, unit: f64) -> usize {
        ((z_max - z_min) / unit).floor() as usize + 2
    }

    pub fn states(&self) -> usize {
        Self::state_count(self.z_min, self.z_max, self.unit)
    }

    /// Point mass on `state`.
    pub fn point_mass(states: usize, state: usize) -> Vec<f64> {
        let mut v = vec![0.0; states];
        v[state] = 1.0;
        v
    }

    pub fn validate(&self) -> Result<(), MobilityError> {
        if !(self.z_min < self.z_max) {
            return Err(MobilityError::Bounds { z_min: self.z_min, z_max: self.z_max });
        }
        if !(self.unit > 0.0) {
            return Err(MobilityError::Unit(self.unit));
        }
        for (name, value) in [("p", self.p), ("q", self.q), ("beta", self.beta)] {
            if !(0.0..=1.0).contains(&value) {
                return Err(MobilityError::Probability { name, value });
            }
        }
        if !(self.time_step > 0.0) {
            return Err(MobilityError::TimeStep(self.time_step));
        }
        let n = self.states();
        if self.comm_range_state >= n {
            return Err(MobilityError::StateIndex { index: self.comm_range_state, states: n });
        }
        if self.initial_dist.len() != n {
            return Err(MobilityError::InitialLength { got: self.initial_dist.len(), states: n });
        }
        check_simplex(&self.initial_dist)?;
        for j in 0..n {
            let (p_j, q_j) = self.raw_probs(j);
            if p_j + q_j > 1.0 {
                return Err(MobilityError::TransitionSum { state: j, sum: p_j + q_j });
            }
            if p_j < 0.0 || q_j < 0.0 {
                return Err(MobilityError::Probability { name: "p_j/q_j", value: p_j.min(q_j) });
            }
        }
        Ok(())
    }

    fn raw_probs(&self, j: usize) -> (f64, f64) {
        let headway = self.z_min + j as f64 * self.unit;
        let factor = 1.0 - self.beta * (1.0 - headway / self.z_max);
        (self.p * factor, self.q * factor)
    }
}

fn check_simplex(v: &[f64]) -> Result<(), MobilityError> {
    let sum: f64 = v.iter().sum();
    if v.iter().any(|&x| !(x >= 0.0)) || (sum - 1.0).abs() > SIMPLEX_TOL {
        return Err(MobilityError::NotSimplex(sum));
    }
    Ok(())
}

/// Probability of moving up, moving down and staying in state `j`.
pub fn transition_probs(chain: &HeadwayChain, j: usize) -> Result<(f64, f64, f64), MobilityError> {
    let n = chain.states();
    if j >= n {
        return Err(MobilityError::StateIndex { index: j, states: n });
    }
    let (p_j, q_j) = chain.raw_probs(j);
    Ok((p_j, q_j, 1.0 - p_j - q_j))
}

/// Tridiagonal row-stochastic one-step transition matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    /// `lower[j]` is `Q[j][j-1]`; `lower[0]` is unused and zero.
    lower: Vec<f64>,
    diag: Vec<f64>,
    /// `upper[j]` is `Q[j][j+1]`; the last entry is unused and zero.
    upper: Vec<f64>,
}

impl TransitionMatrix {
    pub fn states(&self) -> usize {
        self.diag.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i == j {
            self.diag[i]
        } else if j + 1 == i {
            self.lower[i]
        } else if i + 1 == j {
            self.upper[i]
        } else {
            0.0
        }
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        (0..self.states()).map(|j| self.get(i, j)).collect()
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        (0..self.states()).map(|i| self.row(i)).collect()
    }
}

/// Builds the one-step matrix. Boundary states reflect: state 0 keeps the
/// downward mass, the overflow state keeps the upward mass.
pub fn build_transition_matrix(chain: &HeadwayChain) -> Result<TransitionMatrix, MobilityError> {
    chain.validate()?;
    let n = chain.states();
    let mut lower = vec![0.0; n];
    let mut diag = vec![0.0; n];
    let mut upper = vec![0.0; n];
    for j in 0..n {
        let (p_j, q_j, l_j) = transition_probs(chain, j)?;
        diag[j] = l_j;
        if j == 0 {
            diag[j] += q_j;
        } else {
            lower[j] = q_j;
        }
        if j + 1 == n {
            diag[j] += p_j;
        } else {
            upper[j] = p_j;
        }
    }
    Ok(TransitionMatrix { lower, diag, upper })
}

/// State distribution of the headway chain after some number of steps.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadwayDistribution {
    pub probs: Vec<f64>,
    pub step: u64,
}

impl HeadwayDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self, MobilityError> {
        check_simplex(&probs)?;
        Ok(Self { probs, step: 0 })
    }

    pub fn mass_up_to(&self, state: usize) -> f64 {
        self.probs.iter().take(state + 1).sum()
    }
}

/// `pi(step + steps) = pi(step) * Q^steps`.
pub fn evolve(
    dist: &HeadwayDistribution,
    q: &TransitionMatrix,
    steps: u64,
) -> Result<HeadwayDistribution, MobilityError> {
    let n = q.states();
    if dist.probs.len() != n {
        return Err(MobilityError::Dimension { dist: dist.probs.len(), matrix: n });
    }
    let mut cur = dist.probs.clone();
    let mut next = vec![0.0; n];
    for _ in 0..steps {
        for (j, out) in next.iter_mut().enumerate() {
            let mut acc = cur[j] * q.diag[j];
            if j > 0 {
                acc += cur[j - 1] * q.upper[j - 1];
            }
            if j + 1 < n {
                acc += cur[j + 1] * q.lower[j + 1];
            }
            *out = acc;
        }
        std::mem::swap(&mut cur, &mut next);
    }
    Ok(HeadwayDistribution { probs: cur, step: dist.step + steps })
}

/// Number of chain steps covering a task of the given mean duration.
pub fn steps_for(task_exec_mean: f64, time_step: f64) -> u64 {
    ((task_exec_mean / time_step).round() as u64).max(1)
}

/// Probability that the link to the neighbour survives a task of mean
/// duration `task_exec_mean` seconds.
pub fn node_usability(chain: &HeadwayChain, task_exec_mean: f64) -> Result<f64, MobilityError> {
    let q = build_transition_matrix(chain)?;
    usability_with(chain, &q, task_exec_mean)
}

/// As [`node_usability`] with a prebuilt matrix.
pub fn usability_with(
    chain: &HeadwayChain,
    q: &TransitionMatrix,
    task_exec_mean: f64,
) -> Result<f64, MobilityError> {
    let start = HeadwayDistribution { probs: chain.initial_dist.clone(), step: 0 };
    let end = evolve(&start, q, steps_for(task_exec_mean, chain.time_step))?;
    Ok(end.mass_up_to(chain.comm_range_state).clamp(0.0, 1.0))
}
