use std::fmt;
use std::io;
use std::path::PathBuf;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{run_graysort_unchecked, HarnessError, RunConfig};
use crate::mergemin::{gen_values, run_mergemin_on, MergeConfig};
use crate::nanosort::SortConfig;
use crate::netsim::{CostModel, SimTime};

/// The parameter an experiment varies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Param {
    /// Values are base seeds; only repetitions vary the run.
    Seed,
    TailExtraNs,
    /// 0 = off, anything else = on.
    Multicast,
    /// Changes `b` and recomputes the depth for the same node count.
    Buckets,
    KeysPerNode,
    SwitchLatencyNs,
    LinkLatencyNs,
    FanIn,
    Incast,
}

impl Param {
    pub fn name(self) -> &'static str {
        match self {
            Param::Seed => "seed",
            Param::TailExtraNs => "tail_extra_ns",
            Param::Multicast => "multicast",
            Param::Buckets => "buckets",
            Param::KeysPerNode => "keys_per_node",
            Param::SwitchLatencyNs => "switch_latency_ns",
            Param::LinkLatencyNs => "link_latency_ns",
            Param::FanIn => "fan_in",
            Param::Incast => "incast",
        }
    }

    const ALL: [Param; 9] = [
        Param::Seed,
        Param::TailExtraNs,
        Param::Multicast,
        Param::Buckets,
        Param::KeysPerNode,
        Param::SwitchLatencyNs,
        Param::LinkLatencyNs,
        Param::FanIn,
        Param::Incast,
    ];
}

impl fmt::Display for Param {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Param {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Param::ALL.into_iter().find(|p| p.name() == s).ok_or_else(|| format!("unknown parameter '{s}'"))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Workload {
    Sort(Box<RunConfig>),
    /// Fabric and cost settings come from the sort config alongside.
    Merge(MergeConfig),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub name: String,
    pub workload: Workload,
    /// Network and cost settings used by merge workloads.
    pub base: RunConfig,
    pub param: Param,
    pub values: Vec<f64>,
    pub reps: usize,
    pub out: Option<PathBuf>,
}

impl ExperimentSpec {
    pub fn sort(name: &str, base: RunConfig, param: Param, values: Vec<f64>, reps: usize) -> Self {
        ExperimentSpec {
            name: name.into(),
            workload: Workload::Sort(Box::new(base.clone())),
            base,
            param,
            values,
            reps,
            out: None,
        }
    }

    pub fn base_seed(&self) -> u64 {
        match &self.workload {
            Workload::Sort(c) => c.sort.seed,
            Workload::Merge(m) => m.seed,
        }
    }

    /// Number of rows `sweep` produces.
    pub fn len(&self) -> usize {
        self.values.len() * self.reps
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub experiment: String,
    pub param: Param,
    pub value: f64,
    pub rep: usize,
    pub seed: u64,
    pub nodes: usize,
    pub buckets: usize,
    pub keys: usize,
    pub completion: Option<SimTime>,
    pub messages: u64,
    /// Not meaningful for merge rows.
    pub skew: Option<f64>,
    pub verify: bool,
    pub error: Option<String>,
}

fn apply(base: &RunConfig, param: Param, v: f64) -> Result<RunConfig, HarnessError> {
    let mut c = base.clone();
    let nodes = base.sort.num_nodes();
    let whole = || {
        if v >= 0.0 && v.fract() == 0.0 {
            Ok(v as usize)
        } else {
            Err(HarnessError::Config(format!("{param} needs a non-negative integer, got {v}")))
        }
    };
    match param {
        Param::Seed => {
            c = c.with_seed(whole()? as u64);
        }
        Param::TailExtraNs => c.net.latency.tail_extra = SimTime::from_ns_f64(v),
        Param::Multicast => c.sort.multicast = v != 0.0,
        Param::Buckets => {
            let b = whole()?;
            c.sort.num_buckets = b;
            c.sort.recursion_depth = SortConfig::depth_for(nodes, b)
                .ok_or_else(|| HarnessError::Config(format!("{nodes} nodes is not a power of {b}")))?;
        }
        Param::KeysPerNode => c.sort.num_keys = nodes * whole()?,
        Param::SwitchLatencyNs => c.net.topology.switch_latency = SimTime::from_ns_f64(v),
        Param::LinkLatencyNs => c.net.topology.link_latency = SimTime::from_ns_f64(v),
        Param::FanIn => c.sort.median_fan_in = whole()?,
        Param::Incast => return Err(HarnessError::Config("incast applies to merge workloads".into())),
    }
    Ok(c)
}

fn sort_row(spec: &ExperimentSpec, base: &RunConfig, v: f64, rep: usize) -> SweepRow {
    let mut row = SweepRow {
        experiment: spec.name.clone(),
        param: spec.param,
        value: v,
        rep,
        seed: 0,
        nodes: base.sort.num_nodes(),
        buckets: base.sort.num_buckets,
        keys: base.sort.num_keys,
        completion: None,
        messages: 0,
        skew: None,
        verify: false,
        error: None,
    };
    let cfg = match apply(base, spec.param, v) {
        Ok(c) => {
            let seed = c.sort.seed + rep as u64;
            c.with_seed(seed)
        }
        Err(e) => {
            row.error = Some(e.to_string());
            return row;
        }
    };
    row.seed = cfg.sort.seed;
    row.nodes = cfg.sort.num_nodes();
    row.buckets = cfg.sort.num_buckets;
    row.keys = cfg.sort.num_keys;
    match run_graysort_unchecked(&cfg) {
        Ok((report, _)) => {
            if !report.verify.pass() {
                log::warn!("{} {}={} rep {}: {:?}", spec.name, spec.param, v, rep, report.verify.detail);
            }
            row.completion = Some(report.completion);
            row.messages = report.messages;
            row.skew = Some(report.skew);
            row.verify = report.verify.pass();
            row.error = report.verify.detail;
        }
        Err(e) => {
            log::warn!("{} {}={} rep {}: {e}", spec.name, spec.param, v, rep);
            row.error = Some(e.to_string());
        }
    }
    row
}

fn merge_row(spec: &ExperimentSpec, base: &MergeConfig, net: &RunConfig, v: f64, rep: usize) -> SweepRow {
    let mut m = base.clone();
    m.seed = base.seed + rep as u64;
    let mut row = SweepRow {
        experiment: spec.name.clone(),
        param: spec.param,
        value: v,
        rep,
        seed: m.seed,
        nodes: m.num_cores,
        buckets: m.incast,
        keys: m.num_cores * m.values_per_core,
        completion: None,
        messages: 0,
        skew: None,
        verify: false,
        error: None,
    };
    match spec.param {
        Param::Incast if v >= 1.0 && v.fract() == 0.0 => m.incast = v as usize,
        Param::Seed => {}
        p => {
            row.error = Some(format!("merge workloads cannot sweep {p}"));
            return row;
        }
    }
    row.buckets = m.incast;
    let mut netcfg = net.net.clone();
    netcfg.topology = netcfg.topology.with_hosts(m.num_cores.max(1));
    netcfg.latency.rng_seed = m.seed;
    let values = gen_values(&m);
    let truth = values.iter().flatten().copied().min();
    match run_mergemin_on(values, m.incast, &netcfg, &net.costs) {
        Ok(out) => {
            row.completion = Some(out.completion);
            row.messages = out.trace.net.messages_sent();
            row.verify = truth.is_none_or(|t| t == out.minimum);
            if !row.verify {
                row.error = Some(format!("minimum {} differs from {:?}", out.minimum, truth));
            }
        }
        Err(e) => row.error = Some(e.to_string()),
    }
    row
}

/// Runs every (value, repetition) pair. Repetition `k` uses seed
/// `base seed + k`. Runs execute in parallel but rows come back in spec
/// order, and a failing run still yields its row.
pub fn sweep(spec: &ExperimentSpec) -> Vec<SweepRow> {
    let jobs: Vec<(f64, usize)> =
        spec.values.iter().flat_map(|&v| (0..spec.reps).map(move |r| (v, r))).collect();
    jobs.par_iter()
        .map(|&(v, rep)| {
            log::info!("{}: {}={} rep {}", spec.name, spec.param, v, rep);
            match &spec.workload {
                Workload::Sort(base) => sort_row(spec, base, v, rep),
                Workload::Merge(m) => merge_row(spec, m, &spec.base, v, rep),
            }
        })
        .collect()
}

pub fn write_sweep_csv<W: io::Write>(rows: &[SweepRow], w: W) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "experiment",
        "param",
        "value",
        "rep",
        "seed",
        "nodes",
        "buckets",
        "keys",
        "completion_ns",
        "messages",
        "skew",
        "verify",
    ])?;
    for r in rows {
        out.write_record([
            r.experiment.clone(),
            r.param.to_string(),
            r.value.to_string(),
            r.rep.to_string(),
            r.seed.to_string(),
            r.nodes.to_string(),
            r.buckets.to_string(),
            r.keys.to_string(),
            r.completion.map(|c| format!("{:.3}", c.as_ns_f64())).unwrap_or_default(),
            r.messages.to_string(),
            r.skew.map(|s| format!("{s:.6}")).unwrap_or_default(),
            if r.verify { "PASS" } else { "FAIL" }.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn preset_names() -> &'static [&'static str] {
    &["graysort", "tail", "multicast", "buckets", "keys", "switch", "mergemin"]
}

/// Named experiments. Node counts must be powers of the bucket count, so
/// the 256-node tail experiment runs with 16 buckets over two levels.
pub fn preset(name: &str) -> Option<ExperimentSpec> {
    let shaped = |nodes, b, kpn| RunConfig::shaped(nodes, b, kpn).expect("preset shapes are powers");
    let spec = match name {
        "graysort" => ExperimentSpec::sort("graysort", shaped(65536, 16, 16), Param::Seed, vec![1.0], 3),
        "tail" => ExperimentSpec::sort(
            "tail",
            shaped(256, 16, 512),
            Param::TailExtraNs,
            vec![0.0, 500.0, 1000.0, 2000.0, 3000.0, 4000.0],
            3,
        ),
        "multicast" => ExperimentSpec::sort("multicast", shaped(4096, 16, 16), Param::Multicast, vec![0.0, 1.0], 3),
        "buckets" => ExperimentSpec::sort("buckets", shaped(4096, 16, 32), Param::Buckets, vec![4.0, 8.0, 16.0], 3),
        "keys" => ExperimentSpec::sort("keys", shaped(4096, 16, 16), Param::KeysPerNode, vec![4.0, 16.0, 64.0], 20),
        "switch" => ExperimentSpec::sort(
            "switch",
            shaped(4096, 16, 16),
            Param::SwitchLatencyNs,
            vec![0.0, 100.0, 263.0, 500.0, 1000.0],
            3,
        ),
        "mergemin" => {
            let base = RunConfig { costs: CostModel::default(), ..RunConfig::default() };
            ExperimentSpec {
                name: "mergemin".into(),
                workload: Workload::Merge(MergeConfig { num_cores: 64, values_per_core: 128, incast: 8, seed: 1 }),
                base,
                param: Param::Incast,
                values: vec![1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0],
                reps: 1,
                out: None,
            }
        }
        _ => return None,
    };
    Some(spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentSpec {
        ExperimentSpec::sort("small", RunConfig::shaped(16, 4, 16).unwrap(), Param::TailExtraNs, vec![0.0, 2000.0], 2)
    }

    fn csv_of(rows: &[SweepRow]) -> Vec<u8> {
        let mut buf = Vec::new();
        write_sweep_csv(rows, &mut buf).unwrap();
        buf
    }

    #[test]
    fn rows_in_spec_order_with_rep_seeds() {
        let spec = small();
        let rows = sweep(&spec);
        assert_eq!(rows.len(), spec.len());
        let got: Vec<(f64, usize, u64)> = rows.iter().map(|r| (r.value, r.rep, r.seed)).collect();
        assert_eq!(got, vec![(0.0, 0, 1), (0.0, 1, 2), (2000.0, 0, 1), (2000.0, 1, 2)]);
        assert!(rows.iter().all(|r| r.verify && r.completion.is_some()));
    }

    #[test]
    fn csv_is_byte_identical_across_runs() {
        let a = csv_of(&sweep(&small()));
        let b = csv_of(&sweep(&small()));
        assert_eq!(a, b);
        let text = String::from_utf8(a).unwrap();
        assert!(text.starts_with(
            "experiment,param,value,rep,seed,nodes,buckets,keys,completion_ns,messages,skew,verify\n"
        ));
        assert_eq!(text.lines().count(), 5);
    }

    #[test]
    fn failing_values_keep_their_rows() {
        let mut spec = small();
        spec.param = Param::Buckets;
        spec.values = vec![4.0, 3.0, 2.0];
        let rows = sweep(&spec);
        assert_eq!(rows.len(), 6);
        assert!(rows[0].verify && rows[4].verify);
        assert!(!rows[2].verify && rows[2].error.as_deref().unwrap().contains("power"));
        let text = String::from_utf8(csv_of(&rows)).unwrap();
        assert_eq!(text.matches(",FAIL").count(), 2);
    }

    #[test]
    fn buckets_param_recomputes_depth() {
        let base = RunConfig::shaped(4096, 16, 32).unwrap();
        for (b, r) in [(4, 6), (8, 4), (16, 3)] {
            let c = apply(&base, Param::Buckets, b as f64).unwrap();
            assert_eq!((c.sort.num_buckets, c.sort.recursion_depth, c.sort.num_keys), (b, r, 4096 * 32));
        }
        let c = apply(&base, Param::KeysPerNode, 4.0).unwrap();
        assert_eq!(c.sort.num_keys, 4096 * 4);
        assert!(apply(&base, Param::FanIn, 2.5).is_err());
        assert!(!apply(&base, Param::Multicast, 0.0).unwrap().sort.multicast);
    }

    #[test]
    fn mergemin_preset_finds_exact_minimum() {
        let rows = sweep(&preset("mergemin").unwrap());
        assert_eq!(rows.len(), 7);
        assert!(rows.iter().all(|r| r.verify));
        assert_eq!(rows.iter().map(|r| r.buckets).collect::<Vec<_>>(), vec![1, 2, 4, 8, 16, 32, 64]);
    }

    #[test]
    fn presets_are_well_formed() {
        for name in preset_names() {
            let p = preset(name).unwrap();
            assert_eq!(&p.name, name);
            assert!(!p.is_empty());
            if let Workload::Sort(c) = &p.workload {
                c.validate().unwrap();
            }
        }
        assert!(preset("nope").is_none());
        assert_eq!("tail_extra_ns".parse::<Param>().unwrap(), Param::TailExtraNs);
    }
}
