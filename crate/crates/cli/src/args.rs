use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use nanosort_core::harness::{preset, preset_names, ExperimentSpec, Param, RunConfig, Workload};
use nanosort_core::pivot::Strategy;
use nanosort_core::{SimTime, SortConfig};

#[derive(Parser, Debug)]
#[command(name = "nanosort", version, about = "Simulate fine-grained distributed sorting")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Option<Command>,

    #[command(flatten)]
    pub opts: Overrides,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Sort one generated workload per repetition and print JSON reports.
    Run,
    /// Run a preset or an ad-hoc parameter sweep and write CSV rows.
    Sweep(SweepArgs),
    /// Time the distributed minimum over a range of incast sizes.
    Mergemin(MergeArgs),
    /// Monte-Carlo bucket-size distribution of a pivot strategy.
    Oracle(OracleArgs),
}

/// Settings shared by every subcommand. Flags win over the config file.
#[derive(Args, Debug, Default)]
pub struct Overrides {
    /// JSON run configuration; missing fields keep their defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub nodes: Option<usize>,
    #[arg(long, global = true)]
    pub buckets: Option<usize>,
    /// Total keys; must split evenly over the nodes.
    #[arg(long, global = true, conflicts_with = "keys_per_node")]
    pub keys: Option<usize>,
    #[arg(long, global = true)]
    pub keys_per_node: Option<usize>,
    #[arg(long, global = true)]
    pub median_fan_in: Option<usize>,
    #[arg(long, global = true)]
    pub multicast: Option<bool>,
    #[arg(long, global = true)]
    pub switch_latency_ns: Option<f64>,
    #[arg(long, global = true)]
    pub link_latency_ns: Option<f64>,
    #[arg(long, global = true)]
    pub tail_extra_ns: Option<f64>,
    #[arg(long, global = true)]
    pub tail_fraction: Option<f64>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub reps: Option<usize>,
    /// Named experiment; implies `sweep` when no subcommand is given.
    #[arg(long, global = true)]
    pub preset: Option<String>,
    /// Output file; standard output when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    /// Parameter for an ad-hoc sweep, e.g. tail_extra_ns or buckets.
    #[arg(long, requires = "values")]
    pub param: Option<Param>,
    #[arg(long, value_delimiter = ',')]
    pub values: Vec<f64>,
    /// Experiment name in the CSV.
    #[arg(long, default_value = "custom")]
    pub name: String,
}

#[derive(Args, Debug)]
pub struct MergeArgs {
    #[arg(long, default_value_t = 64)]
    pub cores: usize,
    #[arg(long, default_value_t = 128)]
    pub values_per_core: usize,
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,8,16,32,64")]
    pub incasts: Vec<usize>,
}

#[derive(Args, Debug)]
pub struct OracleArgs {
    /// rule16, naive8, shift_half8, mixed4 or ranks:0.8/0.2.
    #[arg(long, default_value = "rule16")]
    pub strategy: Strategy,
    /// Keys per node.
    #[arg(long, default_value_t = 16)]
    pub n: usize,
    /// Fan-in of the median tree; 0 takes the exact median.
    #[arg(long, default_value_t = 0)]
    pub fan_in: usize,
    #[arg(long, default_value_t = 100_000)]
    pub trials: usize,
}

impl Overrides {
    pub fn base(&self) -> Result<RunConfig> {
        match &self.config {
            Some(p) => RunConfig::load(p).with_context(|| format!("loading {}", p.display())),
            None => Ok(RunConfig::default()),
        }
    }

    /// Layers the flags over `cfg`. Changing the bucket count keeps the node
    /// count; changing the node count keeps keys per node.
    pub fn apply(&self, mut cfg: RunConfig) -> Result<RunConfig> {
        let kpn = cfg.sort.keys_per_node();
        let nodes = self.nodes.unwrap_or_else(|| cfg.sort.num_nodes());
        let b = self.buckets.unwrap_or(cfg.sort.num_buckets);
        let Some(r) = SortConfig::depth_for(nodes, b) else {
            bail!("{nodes} nodes is not a power of {b} buckets");
        };
        cfg.sort.num_buckets = b;
        cfg.sort.recursion_depth = r;
        cfg.sort.num_keys = match (self.keys, self.keys_per_node) {
            (Some(k), _) => k,
            (None, Some(k)) => k * nodes,
            (None, None) => kpn * nodes,
        };
        if cfg.net.topology.num_hosts != nodes {
            cfg.net.topology = cfg.net.topology.with_hosts(nodes);
        }
        if let Some(f) = self.median_fan_in {
            cfg.sort.median_fan_in = f;
        }
        if let Some(m) = self.multicast {
            cfg.sort.multicast = m;
        }
        if let Some(ns) = self.switch_latency_ns {
            cfg.net.topology.switch_latency = SimTime::from_ns_f64(ns);
        }
        if let Some(ns) = self.link_latency_ns {
            cfg.net.topology.link_latency = SimTime::from_ns_f64(ns);
        }
        if let Some(ns) = self.tail_extra_ns {
            cfg.net.latency.tail_extra = SimTime::from_ns_f64(ns);
        }
        if let Some(f) = self.tail_fraction {
            cfg.net.latency.tail_fraction = f;
        }
        let seed = self.seed.unwrap_or(cfg.sort.seed);
        cfg = cfg.with_seed(seed);
        cfg.validate()?;
        Ok(cfg)
    }

    /// The experiment to sweep: a preset adjusted by the flags, or an ad-hoc
    /// sweep over the configured run.
    pub fn experiment(&self, args: &SweepArgs) -> Result<ExperimentSpec> {
        let mut spec = match &self.preset {
            Some(name) => preset(name)
                .with_context(|| format!("unknown preset '{name}'; known: {}", preset_names().join(", ")))?,
            None => {
                let Some(param) = args.param else {
                    bail!("sweep needs --preset or --param with --values");
                };
                ExperimentSpec::sort(&args.name, self.apply(self.base()?)?, param, args.values.clone(), 1)
            }
        };
        if self.preset.is_some() {
            if let Some(param) = args.param {
                spec.param = param;
                spec.values = args.values.clone();
            }
            match &mut spec.workload {
                Workload::Sort(c) => {
                    let start = if self.config.is_some() { self.base()? } else { (**c).clone() };
                    **c = self.apply(start)?;
                    spec.base = (**c).clone();
                }
                Workload::Merge(m) => {
                    if let Some(s) = self.seed {
                        m.seed = s;
                    }
                    spec.base = self.apply(spec.base.clone())?;
                }
            }
        }
        if let Some(r) = self.reps {
            spec.reps = r;
        }
        spec.out = self.out.clone();
        Ok(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Overrides {
        Cli::parse_from(std::iter::once("nanosort").chain(args.iter().copied())).opts
    }

    #[test]
    fn bucket_change_keeps_nodes_and_keys_per_node() {
        let base = RunConfig::shaped(4096, 16, 32).unwrap();
        let c = parse(&["--buckets", "8"]).apply(base.clone()).unwrap();
        assert_eq!((c.sort.num_nodes(), c.sort.recursion_depth, c.sort.num_keys), (4096, 4, 4096 * 32));
        let c = parse(&["--nodes", "256", "--keys", "1024"]).apply(base).unwrap();
        assert_eq!((c.sort.recursion_depth, c.sort.num_keys, c.net.topology.num_hosts), (2, 1024, 256));
    }

    #[test]
    fn seed_reaches_every_stream() {
        let c = parse(&["--seed", "77", "--tail-extra-ns", "4000", "--multicast", "false"])
            .apply(RunConfig::shaped(16, 4, 2).unwrap())
            .unwrap();
        assert_eq!((c.sort.seed, c.net.latency.rng_seed), (77, 77));
        assert_eq!(c.net.latency.tail_extra, SimTime::from_ns(4000));
        assert!(!c.sort.multicast);
    }

    #[test]
    fn preset_takes_overrides() {
        let args = SweepArgs { param: None, values: Vec::new(), name: "x".into() };
        let spec = parse(&["--preset", "keys", "--reps", "2", "--seed", "5"]).experiment(&args).unwrap();
        assert_eq!((spec.reps, spec.base_seed(), spec.param), (2, 5, Param::KeysPerNode));
        assert!(parse(&[]).experiment(&args).is_err());
        assert!(parse(&["--nodes", "100"]).apply(RunConfig::default()).is_err());
    }
}
