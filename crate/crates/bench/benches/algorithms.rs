use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nanosort_bench::{small_run, sorted_keys};
use nanosort_core::harness::run_graysort;
use nanosort_core::median_tree::{tree_median, TreePlan};
use nanosort_core::mergemin::{run_mergemin, MergeConfig};
use nanosort_core::netsim::CostModel;
use nanosort_core::pivot::{pivot_select, Strategy};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::hint::black_box;

fn pivots(c: &mut Criterion) {
    let mut group = c.benchmark_group("pivot_select");
    for n in [8usize, 16, 32, 64] {
        let keys = sorted_keys(n, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        group.bench_with_input(BenchmarkId::new("rule16", n), &keys, |b, keys| {
            b.iter(|| pivot_select(&Strategy::Rule16, black_box(keys), &mut rng).unwrap())
        });
    }
    group.finish();
}

fn medians(c: &mut Criterion) {
    let values = sorted_keys(4096, 3);
    let mut group = c.benchmark_group("tree_median");
    for fan_in in [4usize, 16, 64] {
        let plan = TreePlan::new(values.len(), fan_in).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(fan_in), &plan, |b, plan| {
            b.iter(|| tree_median(black_box(&values), plan).unwrap())
        });
    }
    group.finish();
}

fn simulations(c: &mut Criterion) {
    let mut group = c.benchmark_group("simulate");
    group.sample_size(10);
    let merge = MergeConfig { num_cores: 64, values_per_core: 128, incast: 8, seed: 1 };
    let net = merge.net_config();
    group.bench_function("mergemin_64x128", |b| {
        b.iter(|| run_mergemin(&merge, &net, &CostModel::default()).unwrap())
    });
    let cfg = small_run(256, 16, 16);
    group.bench_function("nanosort_256_nodes", |b| b.iter(|| run_graysort(black_box(&cfg)).unwrap()));
    group.finish();
}

criterion_group!(benches, pivots, medians, simulations);
criterion_main!(benches);
