//! Dense networks for the actor (softmax policy) and critic (scalar value)
//! with hand-written backpropagation.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::stream_rng;

/// `log pi` never goes below `ln(1e-12)`.
pub const LOG_PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("a network needs at least two layer sizes, all >= 1; got {0:?}")]
    InvalidSizes(Vec<usize>),
    #[error("input has length {got}, network expects {expected}")]
    InputLength { expected: usize, got: usize },
    #[error("non-finite input")]
    NonFiniteInput,
    #[error("action {action} out of range for {actions} outputs")]
    ActionOutOfRange { action: usize, actions: usize },
    #[error("shape mismatch between parameters and gradients")]
    ShapeMismatch,
    #[error("learning rate must be positive, got {0}")]
    LearningRate(f64),
    #[error("network output head is {0:?}")]
    WrongHead(Activation),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Identity,
    Softmax,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    /// Row-major `outputs x inputs`.
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetParams {
    pub layers: Vec<Layer>,
}

/// Same shape as the owning [`NetParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl NetParams {
    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.input_len()];
        s.extend(self.layers.iter().map(|l| l.outputs));
        s
    }

    pub fn input_len(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_len(&self) -> usize {
        self.layers.last().expect("non-empty").outputs
    }

    pub fn head(&self) -> Activation {
        self.layers.last().expect("non-empty").activation
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    /// Every parameter, layer by layer, weights before biases.
    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers.iter_mut().flat_map(|l| l.weights.iter_mut().chain(l.biases.iter_mut()))
    }

    pub fn values(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(l.biases.iter()))
    }

    pub fn is_finite(&self) -> bool {
        self.values().all(|v| v.is_finite())
    }

    fn congruent(&self, g: &Gradients) -> bool {
        g.weights.len() == self.layers.len()
            && g.biases.len() == self.layers.len()
            && self
                .layers
                .iter()
                .zip(g.weights.iter().zip(&g.biases))
                .all(|(l, (w, b))| l.weights.len() == w.len() && l.biases.len() == b.len())
    }
}

impl Gradients {
    pub fn zeros_like(params: &NetParams) -> Self {
        Self {
            weights: params.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            biases: params.layers.iter().map(|l| vec![0.0; l.biases.len()]).collect(),
        }
    }

    pub fn values(&self) -> impl Iterator<Item = &f64> {
        self.weights.iter().zip(&self.biases).flat_map(|(w, b)| w.iter().chain(b.iter()))
    }

    fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.weights.iter_mut().zip(self.biases.iter_mut()).flat_map(|(w, b)| w.iter_mut().chain(b.iter_mut()))
    }

    pub fn add_assign(&mut self, other: &Gradients) -> Result<(), NnError> {
        if !self.same_shape(other) {
            return Err(NnError::ShapeMismatch);
        }
        for (a, b) in self.values_mut().zip(other.values()) {
            *a += b;
        }
        Ok(())
    }

    pub fn scale(&mut self, c: f64) {
        for v in self.values_mut() {
            *v *= c;
        }
    }

    pub fn norm(&self) -> f64 {
        self.values().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn same_shape(&self, other: &Gradients) -> bool {
        self.weights.len() == other.weights.len()
            && self.weights.iter().zip(&other.weights).all(|(a, b)| a.len() == b.len())
            && self.biases.iter().zip(&other.biases).all(|(a, b)| a.len() == b.len())
    }
}

/// Rectifier hidden layers, then a softmax or identity head. Weights are
/// uniform in `±1/sqrt(fan_in)`, biases zero.
pub fn init_params(sizes: &[usize], head: Activation, seed: u64, stream: u64) -> Result<NetParams, NnError> {
    if sizes.len() < 2 || sizes.contains(&0) || head == Activation::Relu {
        return Err(NnError::InvalidSizes(sizes.to_vec()));
    }
    let mut rng = stream_rng(seed, stream);
    let last = sizes.len() - 2;
    let layers = sizes
        .windows(2)
        .enumerate()
        .map(|(i, w)| {
            let (inputs, outputs) = (w[0], w[1]);
            let bound = 1.0 / (inputs as f64).sqrt();
            Layer {
                inputs,
                outputs,
                weights: (0..inputs * outputs).map(|_| rng.random_range(-bound..bound)).collect(),
                biases: vec![0.0; outputs],
                activation: if i == last { head } else { Activation::Relu },
            }
        })
        .collect();
    Ok(NetParams { layers })
}

/// Per-layer inputs plus the head's pre-activation output.
struct Pass {
    /// `inputs[i]` feeds layer `i`.
    inputs: Vec<Vec<f64>>,
    logits: Vec<f64>,
}

fn forward_pass(params: &NetParams, x: &[f64]) -> Result<Pass, NnError> {
    if x.len() != params.input_len() {
        return Err(NnError::InputLength { expected: params.input_len(), got: x.len() });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(NnError::NonFiniteInput);
    }
    let mut inputs = Vec::with_capacity(params.layers.len());
    let mut cur = x.to_vec();
    for layer in &params.layers {
        let mut z = layer.biases.clone();
        for (o, zo) in z.iter_mut().enumerate() {
            let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
            *zo += row.iter().zip(&cur).map(|(w, a)| w * a).sum::<f64>();
        }
        if layer.activation == Activation::Relu {
            for v in &mut z {
                *v = v.max(0.0);
            }
        }
        inputs.push(std::mem::replace(&mut cur, z));
    }
    Ok(Pass { inputs, logits: cur })
}

fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = e.iter().sum();
    e.into_iter().map(|v| v / sum).collect()
}

pub fn forward_actor(params: &NetParams, x: &[f64]) -> Result<Vec<f64>, NnError> {
    if params.head() != Activation::Softmax {
        return Err(NnError::WrongHead(params.head()));
    }
    Ok(softmax(&forward_pass(params, x)?.logits))
}

pub fn forward_critic(params: &NetParams, x: &[f64]) -> Result<f64, NnError> {
    if params.head() != Activation::Identity || params.output_len() != 1 {
        return Err(NnError::WrongHead(params.head()));
    }
    Ok(forward_pass(params, x)?.logits[0])
}

/// Shannon entropy in nats, with `0 ln 0 = 0`.
pub fn policy_entropy(probs: &[f64]) -> f64 {
    -probs.iter().filter(|&&p| p > 0.0).map(|p| p * p.ln()).sum::<f64>()
}

/// Floored `ln pi(action)`.
pub fn log_prob(probs: &[f64], action: usize) -> f64 {
    probs[action].max(LOG_PROB_FLOOR).ln()
}

/// Backpropagates `d objective / d logits` through the network.
fn backprop(params: &NetParams, pass: &Pass, d_logits: Vec<f64>) -> Gradients {
    let mut grads = Gradients::zeros_like(params);
    let mut delta = d_logits;
    for (i, layer) in params.layers.iter().enumerate().rev() {
        let input = &pass.inputs[i];
        for o in 0..layer.outputs {
            grads.biases[i][o] = delta[o];
            let row = &mut grads.weights[i][o * layer.inputs..(o + 1) * layer.inputs];
            for (g, a) in row.iter_mut().zip(input) {
                *g = delta[o] * a;
            }
        }
        if i == 0 {
            break;
        }
        // input[j] > 0 iff the previous rectifier was active
        let mut prev = vec![0.0; layer.inputs];
        for (j, p) in prev.iter_mut().enumerate() {
            if input[j] > 0.0 {
                *p = (0..layer.outputs).map(|o| layer.weights[o * layer.inputs + j] * delta[o]).sum();
            }
        }
        delta = prev;
    }
    grads
}

/// Gradient of `ln pi(action|x) * advantage + entropy_coef * H(pi(.|x))`.
/// The advantage is a constant.
pub fn backward_actor(
    params: &NetParams,
    x: &[f64],
    action: usize,
    advantage: f64,
    entropy_coef: f64,
) -> Result<Gradients, NnError> {
    if params.head() != Activation::Softmax {
        return Err(NnError::WrongHead(params.head()));
    }
    let actions = params.output_len();
    if action >= actions {
        return Err(NnError::ActionOutOfRange { action, actions });
    }
    let pass = forward_pass(params, x)?;
    let probs = softmax(&pass.logits);
    let entropy = policy_entropy(&probs);
    let floored = probs[action] < LOG_PROB_FLOOR;
    let d_logits = probs
        .iter()
        .enumerate()
        .map(|(k, &p)| {
            let d_log = if floored { 0.0 } else { f64::from(u8::from(k == action)) - p };
            let d_entropy = if p > 0.0 { -p * (p.ln() + entropy) } else { 0.0 };
            advantage * d_log + entropy_coef * d_entropy
        })
        .collect();
    Ok(backprop(params, &pass, d_logits))
}

/// Gradient of `(target - V(x))^2`.
pub fn backward_critic(params: &NetParams, x: &[f64], target: f64) -> Result<Gradients, NnError> {
    if params.head() != Activation::Identity || params.output_len() != 1 {
        return Err(NnError::WrongHead(params.head()));
    }
    let pass = forward_pass(params, x)?;
    let v = pass.logits[0];
    Ok(backprop(params, &pass, vec![-2.0 * (target - v)]))
}

/// `params -= lr * grads`.
pub fn apply_sgd(params: &mut NetParams, grads: &Gradients, lr: f64) -> Result<(), NnError> {
    if !(lr > 0.0) {
        return Err(NnError::LearningRate(lr));
    }
    if !params.congruent(grads) {
        return Err(NnError::ShapeMismatch);
    }
    for (p, g) in params.values_mut().zip(grads.values()) {
        *p -= lr * g;
    }
    Ok(())
}
