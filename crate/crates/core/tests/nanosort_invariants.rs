use std::collections::HashMap;

use nanosort_core::harness::gen_records;
use nanosort_core::nanosort::{run_nanosort, SortConfig, SortOutcome, SortRecord};
use nanosort_core::netsim::{CostModel, LatencyModel, NetConfig, SimTime, Topology};
use proptest::prelude::*;

fn net(seed: u64, tail_ns: u64) -> NetConfig {
    NetConfig {
        topology: Topology::leaf_spine(1),
        latency: LatencyModel { rng_seed: seed, tail_extra: SimTime::from_ns(tail_ns), ..LatencyModel::default() },
        ..NetConfig::default()
    }
}

fn config(b: usize, r: u32, kpn: usize, seed: u64) -> SortConfig {
    SortConfig {
        num_keys: b.pow(r) * kpn,
        num_buckets: b,
        recursion_depth: r,
        median_fan_in: 4,
        multicast: true,
        seed,
    }
}

fn run(cfg: &SortConfig, recs: &[SortRecord], tail_ns: u64) -> SortOutcome {
    run_nanosort(cfg, recs, &net(cfg.seed, tail_ns), &CostModel::default()).expect("run completes")
}

/// Output order as indices into the input.
fn permutation(out: &SortOutcome, input: &[SortRecord]) -> Vec<Vec<usize>> {
    let index: HashMap<&[u8], usize> = input.iter().enumerate().map(|(i, r)| (&r.value[..], i)).collect();
    out.output.iter().map(|node| node.iter().map(|r| index[&r.value[..]]).collect()).collect()
}

/// Maps keys to rank-spaced values, which preserves their order.
fn monotone(recs: &[SortRecord], stride: u64, offset: u64) -> Vec<SortRecord> {
    let mut keys: Vec<u64> = recs.iter().map(|r| r.key).collect();
    keys.sort_unstable();
    recs.iter()
        .map(|r| {
            let rank = keys.binary_search(&r.key).unwrap() as u64;
            SortRecord { key: offset + rank * stride, ..r.clone() }
        })
        .collect()
}

fn shapes() -> impl Strategy<Value = (usize, u32, usize, u64)> {
    prop_oneof![Just((4usize, 2u32)), Just((4, 3)), Just((16, 1)), Just((2, 4)), Just((8, 2))]
        .prop_flat_map(|(b, r)| (Just(b), Just(r), 1usize..24, any::<u64>()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn monotone_transform_leaves_execution_unchanged(
        (b, r, kpn, seed) in shapes(),
        stride in 1u64..1000,
        offset in 0u64..1 << 40,
    ) {
        let cfg = config(b, r, kpn, seed);
        let recs = gen_records(cfg.num_keys, seed);
        let moved = monotone(&recs, stride, offset);
        let a = run(&cfg, &recs, 0);
        let c = run(&cfg, &moved, 0);
        prop_assert!(a.report.pass() && c.report.pass());
        prop_assert_eq!(&a.trace, &c.trace);
        prop_assert_eq!(permutation(&a, &recs), permutation(&c, &moved));
    }

    #[test]
    fn messages_and_keys_are_conserved((b, r, kpn, seed) in shapes(), tail in 0u64..3000) {
        let cfg = config(b, r, kpn, seed);
        let recs = gen_records(cfg.num_keys, seed);
        let out = run(&cfg, &recs, tail);
        prop_assert!(out.report.pass(), "{:?}", out.report);
        let net = &out.trace.net;
        let received: u64 = out.trace.nodes.iter().map(|n| n.received).sum();
        let sent: u64 = out.trace.nodes.iter().map(|n| n.sent).sum();
        prop_assert_eq!(net.deliveries, net.unicast_sends + net.multicast_deliveries);
        prop_assert_eq!(received, net.deliveries);
        prop_assert_eq!(sent, net.messages_sent());
        for level in 0..=r as usize {
            let held: usize = out.level_counts.iter().map(|c| c[level]).sum();
            prop_assert_eq!(held, cfg.num_keys, "level {}", level);
        }
        for n in &out.trace.nodes {
            prop_assert_eq!(n.busy + n.idle(), n.completion);
        }
    }

    #[test]
    fn no_traffic_crosses_groups((b, r, kpn, seed) in shapes(), tail in 0u64..3000) {
        let cfg = config(b, r, kpn, seed);
        let out = run(&cfg, &gen_records(cfg.num_keys, seed), tail);
        prop_assert!(out.report.pass());
        prop_assert!(out.foreign_messages.iter().all(|&f| f == 0), "{:?}", out.foreign_messages);
    }
}

#[test]
fn identical_seeds_reproduce_trace_csv() {
    let cfg = config(4, 3, 12, 21);
    let recs = gen_records(cfg.num_keys, 21);
    let a = run(&cfg, &recs, 1500);
    let b = run(&cfg, &recs, 1500);
    assert_eq!(a.trace.to_csv_string(), b.trace.to_csv_string());
    assert_eq!(permutation(&a, &recs), permutation(&b, &recs));
    let other = SortConfig { seed: 22, ..cfg };
    assert_ne!(run(&other, &recs, 1500).trace.to_csv_string(), a.trace.to_csv_string());
}

/// Mean share of the first level's keys handed to each of the `b`
/// sub-ranges, relative to an even split, over `seeds` runs.
fn first_level_shares(b: usize, r: u32, kpn: usize, seeds: u64) -> Vec<f64> {
    let nodes = b.pow(r);
    let sub = nodes / b;
    let mut share = vec![0.0f64; b];
    for seed in 0..seeds {
        // Fan-in covering the whole group makes each pivot an exact median.
        let cfg = SortConfig { median_fan_in: nodes, ..config(b, r, kpn, seed) };
        let out = run(&cfg, &gen_records(cfg.num_keys, seed), 0);
        assert!(out.report.pass());
        for (j, s) in share.iter_mut().enumerate() {
            let got: usize = (j * sub..(j + 1) * sub).map(|n| out.level_counts[n][1]).sum();
            *s += got as f64 * b as f64 / cfg.num_keys as f64 / seeds as f64;
        }
    }
    share
}

#[test]
fn sub_range_key_counts_average_to_an_even_split() {
    for (b, r) in [(16, 2), (4, 3)] {
        for (j, s) in first_level_shares(b, r, 16, 100).iter().enumerate() {
            assert!((s - 1.0).abs() <= 0.05, "b={b} sub-range {j}: {s}");
        }
    }
}
