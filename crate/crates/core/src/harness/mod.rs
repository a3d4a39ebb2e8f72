//! Workload generation, end-to-end runs and experiment sweeps.

mod sweep;

use std::fs;
use std::path::Path;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nanosort::{run_nanosort, SortConfig, SortError, SortOutcome, SortRecord, VerifyReport, VALUE_BYTES};
use crate::netsim::{mix64, CostModel, NetConfig, SimTime, Topology, Trace};

pub use sweep::{preset, preset_names, sweep, write_sweep_csv, ExperimentSpec, Param, SweepRow, Workload};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Sort(#[from] SortError),
    #[error("verification failed: {}", .0.verify.detail.clone().unwrap_or_default())]
    VerifyFailed(Box<RunReport>),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("config parse error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Everything one sorting run needs. Loadable from JSON; missing fields
/// take their defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub sort: SortConfig,
    pub net: NetConfig,
    pub costs: CostModel,
}

impl Default for RunConfig {
    fn default() -> Self {
        let sort = SortConfig::default();
        RunConfig {
            net: NetConfig {
                topology: Topology::leaf_spine(sort.num_nodes()),
                progress_every: 1_000_000,
                ..NetConfig::default()
            },
            sort,
            costs: CostModel::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }

    /// `nodes = b^r` with `keys_per_node` keys each.
    pub fn shaped(nodes: usize, b: usize, keys_per_node: usize) -> Result<Self, HarnessError> {
        let r = SortConfig::depth_for(nodes, b)
            .ok_or_else(|| HarnessError::Config(format!("{nodes} nodes is not a power of {b}")))?;
        let mut c = RunConfig::default();
        c.sort.num_buckets = b;
        c.sort.recursion_depth = r;
        c.sort.num_keys = nodes * keys_per_node;
        c.net.topology = c.net.topology.with_hosts(nodes);
        Ok(c)
    }

    /// Copy with every random stream derived from `seed`.
    pub fn with_seed(&self, seed: u64) -> Self {
        let mut c = self.clone();
        c.sort.seed = seed;
        c.net.latency.rng_seed = seed;
        c
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        self.sort.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        self.net.validate().map_err(|e| HarnessError::Config(e.to_string()))
    }
}

/// `n` records with distinct keys: the key of record `i` is a bijective
/// 64-bit mix of `i` offset by the seed; values are seeded random bytes.
pub fn gen_records(n: usize, seed: u64) -> Vec<SortRecord> {
    let offset = mix64(seed ^ 0x6a09_e667_f3bc_c908);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n as u64)
        .map(|i| {
            let mut value = [0u8; VALUE_BYTES];
            rng.fill_bytes(&mut value);
            SortRecord { key: mix64(i.wrapping_add(offset)), value, origin: 0 }
        })
        .collect()
}

/// Busy and idle time of one stage across nodes.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StageSummary {
    pub stage: String,
    pub nodes: usize,
    pub mean_busy_ns: f64,
    pub max_busy_ns: f64,
    pub mean_idle_ns: f64,
    pub max_idle_ns: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunReport {
    pub nodes: usize,
    pub buckets: usize,
    pub keys: usize,
    pub seed: u64,
    #[serde(rename = "completion_ps")]
    pub completion: SimTime,
    /// Sender-side count: a multicast counts once.
    pub messages: u64,
    pub unicast: u64,
    pub multicast: u64,
    pub deliveries: u64,
    pub events: u64,
    pub skew: f64,
    pub verify: VerifyReport,
    pub stages: Vec<StageSummary>,
}

impl RunReport {
    pub fn from_outcome(cfg: &RunConfig, out: &SortOutcome) -> Self {
        let t = &out.trace;
        RunReport {
            nodes: cfg.sort.num_nodes(),
            buckets: cfg.sort.num_buckets,
            keys: cfg.sort.num_keys,
            seed: cfg.sort.seed,
            completion: t.completion,
            messages: t.net.messages_sent(),
            unicast: t.net.unicast_sends,
            multicast: t.net.multicast_sends,
            deliveries: t.net.deliveries,
            events: t.events,
            skew: out.skew,
            verify: out.report.clone(),
            stages: stage_summaries(t),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

fn stage_summaries(t: &Trace) -> Vec<StageSummary> {
    let mut ids: Vec<u16> = t.nodes.iter().flat_map(|n| n.stages.iter().map(|s| s.stage)).collect();
    ids.sort_unstable();
    ids.dedup();
    ids.into_iter()
        .map(|id| {
            // Per node, total busy and idle spent in this stage.
            let per_node: Vec<(f64, f64)> = t
                .nodes
                .iter()
                .filter(|n| n.stages.iter().any(|s| s.stage == id))
                .map(|n| {
                    n.stages.iter().filter(|s| s.stage == id).fold((0.0, 0.0), |(b, i), s| {
                        (b + s.busy.as_ns_f64(), i + s.idle().as_ns_f64())
                    })
                })
                .collect();
            let k = per_node.len() as f64;
            StageSummary {
                stage: t.stage_label(id),
                nodes: per_node.len(),
                mean_busy_ns: per_node.iter().map(|p| p.0).sum::<f64>() / k,
                max_busy_ns: per_node.iter().map(|p| p.0).fold(0.0, f64::max),
                mean_idle_ns: per_node.iter().map(|p| p.1).sum::<f64>() / k,
                max_idle_ns: per_node.iter().map(|p| p.1).fold(0.0, f64::max),
            }
        })
        .collect()
}

/// Runs the whole pipeline and returns the report whether or not it
/// verifies, along with the raw outcome.
pub fn run_graysort_unchecked(cfg: &RunConfig) -> Result<(RunReport, SortOutcome), HarnessError> {
    cfg.validate()?;
    let records = gen_records(cfg.sort.num_keys, cfg.sort.seed);
    log::info!(
        "sorting {} keys on {} nodes (b={}, r={}, seed={})",
        cfg.sort.num_keys,
        cfg.sort.num_nodes(),
        cfg.sort.num_buckets,
        cfg.sort.recursion_depth,
        cfg.sort.seed
    );
    let out = run_nanosort(&cfg.sort, &records, &cfg.net, &cfg.costs)?;
    Ok((RunReport::from_outcome(cfg, &out), out))
}

/// Generates records, sorts and verifies; a failed verification is an error
/// carrying the report.
pub fn run_graysort(cfg: &RunConfig) -> Result<RunReport, HarnessError> {
    let (report, _) = run_graysort_unchecked(cfg)?;
    if report.verify.pass() {
        Ok(report)
    } else {
        Err(HarnessError::VerifyFailed(Box::new(report)))
    }
}
