//! Distributed minimum through a merge tree of configurable incast.
//!
//! Every core scans its local values, then minima flow up a
//! [`TreePlan`]; a merger charges receive costs per message and a
//! `merge` of the block once all of a level's children have reported.
//! Incast 1 is a chain in which core `i + 1` reports to core `i`.

use std::io;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::median_tree::TreePlan;
use crate::netsim::{
    ComputeKind, CostModel, LatencyModel, Message, NetConfig, NodeCtx, NodeId, NodeProgram, Payload,
    ProgramError, SimError, SimTime, Simulation, Topology, Trace,
};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergeConfig {
    pub num_cores: usize,
    pub values_per_core: usize,
    pub incast: usize,
    pub seed: u64,
}

impl MergeConfig {
    /// Default fabric sized for the cores, with tail draws seeded from `seed`.
    pub fn net_config(&self) -> NetConfig {
        NetConfig {
            topology: Topology::leaf_spine(self.num_cores.max(1)),
            latency: LatencyModel { rng_seed: self.seed, ..LatencyModel::default() },
            ..NetConfig::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MergeOutcome {
    pub minimum: u64,
    pub completion: SimTime,
    pub root_busy: SimTime,
    pub trace: Trace,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MinMsg {
    level: u32,
    value: u64,
}

impl Payload for MinMsg {
    fn payload_bytes(&self) -> u32 {
        16
    }
}

/// Exact minimum; `None` for an empty list.
pub fn local_min(values: &[u64]) -> Option<u64> {
    values.iter().copied().min()
}

/// Per-core values, deterministic in the seed.
pub fn gen_values(cfg: &MergeConfig) -> Vec<Vec<u64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    (0..cfg.num_cores)
        .map(|_| (0..cfg.values_per_core).map(|_| rng.gen()).collect())
        .collect()
}

struct MergeNode {
    values: Vec<u64>,
    /// Children expected at each level this node aggregates, lowest first.
    levels: Vec<(u32, usize)>,
    received: Vec<usize>,
    next_level: usize,
    parent: Option<(NodeId, u32)>,
    min: u64,
    scanned: bool,
    done: bool,
}

impl MergeNode {
    fn new(id: NodeId, values: Vec<u64>, num_cores: usize, incast: usize) -> Self {
        let (levels, parent) = if num_cores == 1 {
            (Vec::new(), None)
        } else if incast == 1 {
            let levels = if (id as usize) + 1 < num_cores { vec![(0, 1)] } else { Vec::new() };
            (levels, id.checked_sub(1).map(|p| (p, 0)))
        } else {
            let plan = TreePlan::new(num_cores, incast).expect("validated shape");
            let mut levels = Vec::new();
            let mut parent = None;
            for level in 0..plan.depth {
                if plan.aggregates(level, id) {
                    let children = plan.block(level, id).expect("member").len() - 1;
                    levels.push((level as u32, children));
                } else if let Some(p) = plan.parent_of(level, id) {
                    parent = Some((p, level as u32));
                    break;
                }
            }
            (levels, parent)
        };
        let received = vec![0; levels.len()];
        MergeNode { values, levels, received, next_level: 0, parent, min: u64::MAX, scanned: false, done: false }
    }

    /// Merges every fully reported level in order, then reports upward.
    fn advance(&mut self, ctx: &mut NodeCtx<'_, MinMsg>) -> Result<(), ProgramError> {
        if !self.scanned {
            return Ok(());
        }
        while self.next_level < self.levels.len() && self.received[self.next_level] == self.levels[self.next_level].1 {
            ctx.compute(ComputeKind::Merge, self.levels[self.next_level].1 as u64 + 1);
            self.next_level += 1;
        }
        if self.next_level == self.levels.len() && !self.done {
            if let Some((p, level)) = self.parent {
                ctx.send(p, MinMsg { level, value: self.min })?;
            }
            self.done = true;
        }
        Ok(())
    }
}

impl NodeProgram for MergeNode {
    type Msg = MinMsg;

    fn start(&mut self, ctx: &mut NodeCtx<'_, MinMsg>) -> Result<(), ProgramError> {
        ctx.compute(ComputeKind::ScanMin, self.values.len() as u64);
        self.min = self.min.min(local_min(&self.values).unwrap_or(u64::MAX));
        self.scanned = true;
        self.advance(ctx)
    }

    fn on_message(&mut self, msg: Message<MinMsg>, ctx: &mut NodeCtx<'_, MinMsg>) -> Result<(), ProgramError> {
        let slot = self
            .levels
            .iter()
            .position(|&(l, _)| l == msg.payload.level)
            .ok_or_else(|| ProgramError::Protocol(format!("unexpected minimum for level {}", msg.payload.level)))?;
        self.received[slot] += 1;
        self.min = self.min.min(msg.payload.value);
        self.advance(ctx)
    }

    fn is_terminal(&self) -> bool {
        self.done
    }

    fn describe(&self) -> String {
        format!("level {}/{} received {:?}", self.next_level, self.levels.len(), self.received)
    }
}

/// Runs one merge tree over `values` (one list per core).
pub fn run_mergemin_on(
    values: Vec<Vec<u64>>,
    incast: usize,
    net: &NetConfig,
    costs: &CostModel,
) -> Result<MergeOutcome, SimError> {
    use crate::netsim::NetError;
    let n = values.len();
    if n == 0 {
        return Err(NetError::Config("merge needs at least one core".into()).into());
    }
    if incast == 0 {
        return Err(NetError::Config("incast must be at least 1".into()).into());
    }
    let programs: Vec<MergeNode> = values
        .into_iter()
        .enumerate()
        .map(|(i, v)| MergeNode::new(i as NodeId, v, n, incast))
        .collect();
    let mut sim = Simulation::new(net.clone(), costs.clone(), programs)?;
    let trace = sim.run()?;
    let minimum = sim.programs()[0].min;
    Ok(MergeOutcome { minimum, completion: trace.completion, root_busy: trace.nodes[0].busy, trace })
}

pub fn run_mergemin(cfg: &MergeConfig, net: &NetConfig, costs: &CostModel) -> Result<MergeOutcome, SimError> {
    run_mergemin_on(gen_values(cfg), cfg.incast, net, costs)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IncastPoint {
    pub incast: usize,
    pub completion: SimTime,
    pub root_busy: SimTime,
    pub minimum: u64,
    pub exact: bool,
}

/// Runs the same values under each incast.
pub fn incast_sweep(
    base: &MergeConfig,
    incasts: &[usize],
    net: &NetConfig,
    costs: &CostModel,
) -> Result<Vec<IncastPoint>, SimError> {
    let values = gen_values(base);
    let truth = values.iter().flatten().copied().min().unwrap_or(u64::MAX);
    incasts
        .iter()
        .map(|&c| {
            let out = run_mergemin_on(values.clone(), c, net, costs)?;
            Ok(IncastPoint {
                incast: c,
                completion: out.completion,
                root_busy: out.root_busy,
                minimum: out.minimum,
                exact: out.minimum == truth,
            })
        })
        .collect()
}

pub fn write_sweep_csv<W: io::Write>(points: &[IncastPoint], w: W) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["incast", "completion_ns", "root_busy_ns"])?;
    for p in points {
        out.write_record([
            p.incast.to_string(),
            format!("{:.3}", p.completion.as_ns_f64()),
            format!("{:.3}", p.root_busy.as_ns_f64()),
        ])?;
    }
    out.flush()?;
    Ok(())
}
