use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::{initial_shuffle, skew, verify, ConfigError, SortConfig, SortNode, SortRecord, VerifyReport};
use crate::netsim::{CostModel, NetConfig, NetError, NodeId, SimError, Simulation, Trace};

#[derive(Debug, Error)]
pub enum SortError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

#[derive(Debug)]
pub struct SortOutcome {
    pub trace: Trace,
    /// Final records per node.
    pub output: Vec<Vec<SortRecord>>,
    pub report: VerifyReport,
    pub skew: f64,
    /// Keys held by each node at the start of each level.
    pub level_counts: Vec<Vec<usize>>,
    /// Per node, messages received from outside its group at their level.
    pub foreign_messages: Vec<u64>,
}

/// Shuffles `records` over the nodes, runs the sort and verifies it.
///
/// `cfg.multicast` overrides `net.multicast`, and the topology grows to fit
/// the node count if needed.
pub fn run_nanosort(
    cfg: &SortConfig,
    records: &[SortRecord],
    net: &NetConfig,
    costs: &CostModel,
) -> Result<SortOutcome, SortError> {
    run_nanosort_with(cfg, records, net, costs, |_| {})
}

/// As [`run_nanosort`], letting `prepare` adjust the node programs first.
pub fn run_nanosort_with<F: FnOnce(&mut [SortNode])>(
    cfg: &SortConfig,
    records: &[SortRecord],
    net: &NetConfig,
    costs: &CostModel,
    prepare: F,
) -> Result<SortOutcome, SortError> {
    if records.len() != cfg.num_keys {
        return Err(ConfigError(format!("config expects {} keys, got {}", cfg.num_keys, records.len())).into());
    }
    cfg.validate()?;
    let n = cfg.num_nodes();
    let mut net = net.clone();
    net.multicast = cfg.multicast;
    if net.topology.num_hosts < n {
        net.topology = net.topology.with_hosts(n);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let parts = initial_shuffle(records.to_vec(), n, &mut rng)?;
    let mut programs: Vec<SortNode> = parts
        .into_iter()
        .enumerate()
        .map(|(i, mut part)| {
            for rec in &mut part {
                rec.origin = i as NodeId;
            }
            SortNode::new(i as NodeId, cfg.num_buckets, cfg.recursion_depth, cfg.median_fan_in, cfg.seed, part)
        })
        .collect();
    prepare(&mut programs);

    let mut sim = Simulation::new(net, costs.clone(), programs)?;
    let trace = sim.run()?;
    let mut programs = sim.into_programs();
    let level_counts = programs.iter().map(|p| p.level_counts.clone()).collect();
    let foreign_messages = programs.iter().map(|p| p.foreign_messages).collect();
    let output: Vec<Vec<SortRecord>> = programs.iter_mut().map(SortNode::take_output).collect();
    let report = verify(&output, records);
    let counts: Vec<usize> = output.iter().map(Vec::len).collect();
    let skew = skew(&counts, cfg.num_keys);
    Ok(SortOutcome { trace, output, report, skew, level_counts, foreign_messages })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::gen_records;
    use crate::nanosort::VALUE_BYTES;
    use crate::netsim::{LatencyModel, SimTime, Topology};

    fn net(seed: u64) -> NetConfig {
        NetConfig {
            topology: Topology::leaf_spine(1),
            latency: LatencyModel { rng_seed: seed, ..LatencyModel::default() },
            ..NetConfig::default()
        }
    }

    fn cfg(keys: usize, b: usize, r: u32, seed: u64) -> SortConfig {
        SortConfig { num_keys: keys, num_buckets: b, recursion_depth: r, median_fan_in: 16, multicast: true, seed }
    }

    fn sorted_keys(records: &[SortRecord]) -> Vec<u64> {
        let mut k: Vec<u64> = records.iter().map(|r| r.key).collect();
        k.sort_unstable();
        k
    }

    #[test]
    fn single_node_sorts_locally() {
        let c = cfg(16, 16, 0, 3);
        let recs = gen_records(16, 3);
        let out = run_nanosort(&c, &recs, &net(3), &CostModel::default()).unwrap();
        assert!(out.report.pass());
        assert_eq!(out.trace.net.messages_sent(), 0);
        assert_eq!(out.trace.completion, CostModel::default().compute_cost(crate::netsim::ComputeKind::Sort, 16));
        let keys: Vec<u64> = out.output[0].iter().map(|r| r.key).collect();
        assert_eq!(keys, sorted_keys(&recs));
    }

    #[test]
    fn four_buckets_two_levels_matches_sequential_sort() {
        let c = cfg(16 * 8, 4, 2, 11);
        let recs = gen_records(c.num_keys, 11);
        let out = run_nanosort(&c, &recs, &net(11), &CostModel::default()).unwrap();
        assert!(out.report.pass(), "{:?}", out.report);
        let flat: Vec<u64> = out.output.iter().flatten().map(|r| r.key).collect();
        assert_eq!(flat, sorted_keys(&recs));
        assert!(out.trace.completion > SimTime::ZERO);
        for (node, recs_out) in out.output.iter().enumerate() {
            for r in recs_out {
                let original = recs.iter().find(|x| x.key == r.key).unwrap();
                assert_eq!(r.value, original.value, "node {node}");
            }
        }
    }

    #[test]
    fn unicast_fallback_sorts_too() {
        let mut c = cfg(256 * 4, 16, 2, 5);
        c.multicast = false;
        let recs = gen_records(c.num_keys, 5);
        let out = run_nanosort(&c, &recs, &net(5), &CostModel::default()).unwrap();
        assert!(out.report.pass(), "{:?}", out.report);
        assert_eq!(out.trace.net.multicast_sends, 0);
    }

    #[test]
    fn rejects_bad_shapes() {
        let recs = gen_records(256, 1);
        let c = SortConfig { num_keys: 256, num_buckets: 16, recursion_depth: 1, ..SortConfig::default() };
        // 16 nodes with 16 keys each is fine; 3 buckets over 256 keys is not a power split.
        assert!(run_nanosort(&c, &recs, &net(1), &CostModel::default()).is_ok());
        let bad = SortConfig { num_buckets: 3, recursion_depth: 3, ..c.clone() };
        assert!(matches!(run_nanosort(&bad, &recs, &net(1), &CostModel::default()), Err(SortError::Config(_))));
        assert!(run_nanosort(&c, &recs[..100], &net(1), &CostModel::default()).is_err());
    }

    #[test]
    fn dropped_value_fails_value_check() {
        let c = cfg(16 * 8, 4, 2, 2);
        let recs = gen_records(c.num_keys, 2);
        let out = run_nanosort_with(&c, &recs, &net(2), &CostModel::default(), |nodes| {
            nodes[5].inject_dropped_values(1);
        })
        .unwrap();
        assert!(out.report.node_sorted && out.report.nodes_ordered && out.report.keys_preserved);
        assert!(!out.report.values_match);
        assert!(out.output[5].iter().any(|r| r.value == [0; VALUE_BYTES]));
    }

    #[test]
    fn sparse_inputs_leave_empty_nodes_working() {
        // One key per node forces duplicated candidates and many empty buckets.
        for (b, r) in [(4usize, 2u32), (16, 1), (2, 5)] {
            let c = cfg(b.pow(r), b, r, 9);
            let recs = gen_records(c.num_keys, 9);
            let out = run_nanosort(&c, &recs, &net(9), &CostModel::default()).unwrap();
            assert!(out.report.pass(), "b={b} r={r}: {:?}", out.report);
        }
    }
}
