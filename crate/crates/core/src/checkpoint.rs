//! Line-oriented text format for trained networks.
//!
//! Floats are written in Rust's shortest round-trip form, so saving and
//! loading is bit-exact.

use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::env::Norms;
use crate::nn::{Activation, Layer, NetParams};

pub const CHECKPOINT_HEADER: &str = "kdoffload.checkpoint.v1";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub actor: NetParams,
    pub critic: NetParams,
    pub norms: Norms,
}

fn push_floats(out: &mut String, tag: &str, values: &[f64]) {
    out.push_str(tag);
    for v in values {
        write!(out, " {v:?}").expect("string write");
    }
    out.push('\n');
}

fn push_net(out: &mut String, name: &str, net: &NetParams) {
    writeln!(out, "net {name} {}", net.layers.len()).expect("string write");
    for l in &net.layers {
        let act = match l.activation {
            Activation::Relu => "relu",
            Activation::Identity => "identity",
            Activation::Softmax => "softmax",
        };
        writeln!(out, "layer {} {} {act}", l.inputs, l.outputs).expect("string write");
        push_floats(out, "w", &l.weights);
        push_floats(out, "b", &l.biases);
    }
}

impl Checkpoint {
    pub fn to_text(&self) -> String {
        let mut out = format!("{CHECKPOINT_HEADER}\n");
        let n = &self.norms;
        let norms = [n.task[0], n.task[1], n.task[2], n.cpu_freq, n.access_rate, n.handoffs, n.usability, n.speed];
        push_floats(&mut out, "norms", &norms);
        push_net(&mut out, "actor", &self.actor);
        push_net(&mut out, "critic", &self.critic);
        out
    }

    pub fn from_text(text: &str) -> Result<Self, CheckpointError> {
        let mut lines = Lines { inner: text.lines().enumerate(), line: 0 };
        let header = lines.next_line()?;
        if header != CHECKPOINT_HEADER {
            return Err(lines.err(format!("expected header {CHECKPOINT_HEADER:?}, found {header:?}")));
        }
        let norms = lines.floats("norms")?;
        if norms.len() != 8 {
            return Err(lines.err(format!("expected 8 norms, found {}", norms.len())));
        }
        let norms = Norms {
            task: [norms[0], norms[1], norms[2]],
            cpu_freq: norms[3],
            access_rate: norms[4],
            handoffs: norms[5],
            usability: norms[6],
            speed: norms[7],
        };
        let actor = lines.net("actor")?;
        let critic = lines.net("critic")?;
        if let Ok(extra) = lines.next_line() {
            return Err(lines.err(format!("trailing content {extra:?}")));
        }
        Ok(Self { actor, critic, norms })
    }

    /// Writes through a temporary file in the same directory, then renames.
    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, self.to_text())?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

struct Lines<'a, I: Iterator<Item = (usize, &'a str)>> {
    inner: I,
    line: usize,
}

impl<'a, I: Iterator<Item = (usize, &'a str)>> Lines<'a, I> {
    fn err(&self, msg: String) -> CheckpointError {
        CheckpointError::Parse { line: self.line, msg }
    }

    fn next_line(&mut self) -> Result<&'a str, CheckpointError> {
        for (i, l) in self.inner.by_ref() {
            self.line = i + 1;
            if !l.trim().is_empty() {
                return Ok(l.trim());
            }
        }
        Err(CheckpointError::Parse { line: self.line + 1, msg: "unexpected end of file".into() })
    }

    fn tagged(&mut self, tag: &str) -> Result<Vec<&'a str>, CheckpointError> {
        let line = self.next_line()?;
        let mut parts = line.split_ascii_whitespace();
        match parts.next() {
            Some(t) if t == tag => Ok(parts.collect()),
            other => Err(self.err(format!("expected {tag:?}, found {:?}", other.unwrap_or("")))),
        }
    }

    fn floats(&mut self, tag: &str) -> Result<Vec<f64>, CheckpointError> {
        let parts = self.tagged(tag)?;
        parts
            .iter()
            .map(|p| p.parse::<f64>().map_err(|e| self.err(format!("bad number {p:?}: {e}"))))
            .collect()
    }

    fn usize_at(&self, parts: &[&str], i: usize) -> Result<usize, CheckpointError> {
        let p = parts.get(i).ok_or_else(|| self.err("missing field".into()))?;
        p.parse().map_err(|e| self.err(format!("bad integer {p:?}: {e}")))
    }

    fn net(&mut self, name: &str) -> Result<NetParams, CheckpointError> {
        let head = self.tagged("net")?;
        if head.first() != Some(&name) {
            return Err(self.err(format!("expected net {name:?}")));
        }
        let count = self.usize_at(&head, 1)?;
        if count == 0 {
            return Err(self.err("network without layers".into()));
        }
        let mut layers: Vec<Layer> = Vec::with_capacity(count);
        for _ in 0..count {
            let spec = self.tagged("layer")?;
            let inputs = self.usize_at(&spec, 0)?;
            let outputs = self.usize_at(&spec, 1)?;
            let activation = match spec.get(2).copied() {
                Some("relu") => Activation::Relu,
                Some("identity") => Activation::Identity,
                Some("softmax") => Activation::Softmax,
                other => return Err(self.err(format!("unknown activation {other:?}"))),
            };
            if let Some(prev) = layers.last() {
                if prev.outputs != inputs {
                    return Err(self.err(format!("layer input {inputs} does not match previous output {}", prev.outputs)));
                }
            }
            let weights = self.floats("w")?;
            if weights.len() != inputs * outputs {
                return Err(self.err(format!("expected {} weights, found {}", inputs * outputs, weights.len())));
            }
            let biases = self.floats("b")?;
            if biases.len() != outputs {
                return Err(self.err(format!("expected {outputs} biases, found {}", biases.len())));
            }
            layers.push(Layer { inputs, outputs, weights, biases, activation });
        }
        Ok(NetParams { layers })
    }
}
