use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use serde::Serialize;

use kdoffload::a3c::{EpisodeRecord, EvalRun};
use kdoffload::scenario::NodeKind;

use crate::{config_err, runtime_err, CliError, MetricsFile};

pub const TRACE_SCHEMA: &str = "kdoffload.trace.v1";
pub const TRAINING_SCHEMA: &str = "kdoffload.training.v1";
pub const METRICS_SCHEMA: &str = "kdoffload.metrics.v1";
pub const COMPARISON_SCHEMA: &str = "kdoffload.comparison.v1";

/// Output files of one command. Targets are claimed before any work starts
/// so an existing file fails fast, and each is written via rename so a
/// failed run leaves no partial file.
#[derive(Debug)]
pub struct OutputSet {
    force: bool,
    claimed: Vec<PathBuf>,
}

impl OutputSet {
    pub fn new(force: bool) -> Self {
        Self { force, claimed: Vec::new() }
    }

    pub fn claim(&mut self, path: &Path) -> Result<(), CliError> {
        if path.exists() && !self.force {
            return Err(config_err(anyhow!("{} exists; pass --force to overwrite", path.display())));
        }
        self.claimed.push(path.to_path_buf());
        Ok(())
    }

    pub fn write(&self, path: &Path, bytes: &[u8]) -> Result<(), CliError> {
        debug_assert!(self.claimed.iter().any(|p| p == path), "unclaimed output");
        let write = || -> anyhow::Result<()> {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            let mut tmp = path.as_os_str().to_owned();
            tmp.push(format!(".tmp{}", std::process::id()));
            std::fs::write(&tmp, bytes)?;
            std::fs::rename(&tmp, path)?;
            Ok(())
        };
        write().with_context(|| format!("writing {}", path.display())).map_err(runtime_err)
    }
}

/// CSV with a leading `# schema:` line.
pub fn csv_bytes<T: Serialize>(schema: &str, rows: &[T]) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(format!("# schema: {schema}\n").into_bytes());
    for r in rows {
        w.serialize(r).map_err(runtime_err)?;
    }
    w.into_inner().map_err(|e| runtime_err(anyhow!("{e}")))
}

pub fn json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>, CliError> {
    let mut v = serde_json::to_vec_pretty(value).map_err(runtime_err)?;
    v.push(b'\n');
    Ok(v)
}

#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct TraceRow {
    pub episode: usize,
    pub step: usize,
    pub action_slot: usize,
    pub node_id: Option<u32>,
    pub node_kind: NodeKind,
    pub raw_delay_s: f64,
    pub adjusted_delay_s: f64,
    pub reward: f64,
    pub service_delay_s: f64,
}

impl TraceRow {
    pub fn from_run(run: &EvalRun) -> Vec<Self> {
        run.traces
            .iter()
            .enumerate()
            .flat_map(|(e, t)| {
                t.steps.iter().map(move |s| Self {
                    episode: e,
                    step: s.step,
                    action_slot: s.slot,
                    node_id: s.node_id,
                    node_kind: s.node_kind,
                    raw_delay_s: s.raw_delay,
                    adjusted_delay_s: s.adjusted_delay,
                    reward: s.reward,
                    service_delay_s: t.service_delay,
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct TrainingRow {
    pub episode: u64,
    pub worker: usize,
    #[serde(rename = "return")]
    pub ret: f64,
    pub service_delay_s: f64,
    pub mean_entropy: f64,
    pub value_loss: f64,
    pub store_version: u64,
}

impl From<&EpisodeRecord> for TrainingRow {
    fn from(r: &EpisodeRecord) -> Self {
        Self {
            episode: r.episode,
            worker: r.worker,
            ret: r.ret,
            service_delay_s: r.service_delay_s,
            mean_entropy: r.mean_entropy,
            value_loss: r.value_loss,
            store_version: r.store_version,
        }
    }
}

/// Per-episode delays of every policy on the shared episode seeds.
#[derive(Debug, Clone, Serialize)]
pub struct PairedRow {
    pub episode: usize,
    pub env_seed: u64,
    pub policy: String,
    pub service_delay_s: f64,
    pub mean_task_delay_s: f64,
}

pub fn paired_rows(runs: &[(String, EvalRun)]) -> Vec<PairedRow> {
    let mut rows = Vec::new();
    for (name, run) in runs {
        for (e, t) in run.traces.iter().enumerate() {
            rows.push(PairedRow {
                episode: e,
                env_seed: t.seed,
                policy: name.clone(),
                service_delay_s: t.service_delay,
                mean_task_delay_s: t.service_delay / t.steps.len() as f64,
            });
        }
    }
    rows
}

pub fn table(file: &MetricsFile) -> String {
    let mut s = format!(
        "{:<8} {:>14} {:>14} {:>12}  top slot\n",
        "policy", "service_delay", "task_delay", "J"
    );
    for p in &file.policies {
        let m = &p.metrics;
        let top = (0..m.slot_histogram.len()).max_by_key(|&i| (m.slot_histogram[i], usize::MAX - i)).unwrap_or(0);
        let label = file.slot_labels.get(top).map_or("-", String::as_str);
        writeln!(
            s,
            "{:<8} {:>14.4} {:>14.4} {:>12.4}  {} ({:.1}%)",
            p.policy,
            m.mean_service_delay,
            m.mean_task_delay,
            m.objective_j,
            label,
            100.0 * m.slot_share(top)
        )
        .expect("string write");
    }
    s.pop();
    s
}
