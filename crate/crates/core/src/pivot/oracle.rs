//! Monte-Carlo model of pivot quality in quantile space.
//!
//! Keys are i.i.d. uniform 64-bit values, so a key's quantile is its value
//! divided by 2^64. Each trial lets `num_nodes` nodes draw `n` keys, pick
//! candidates with the strategy, and combines candidate `j` across nodes by
//! an exact lower median (`fan_in == 0`) or a median tree.

use std::io;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{select_indices, PivotError, Strategy};
use crate::median_tree::{median, tree_median, TreeError, TreePlan};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleSpec {
    pub strategy: Strategy,
    /// Keys drawn per node.
    pub n: usize,
    pub num_nodes: usize,
    /// 0 aggregates with an exact median.
    pub fan_in: usize,
    pub trials: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OracleResult {
    pub spec: OracleSpec,
    pub buckets: usize,
    pub mean_fraction: Vec<f64>,
    pub pivot_mean_quantile: Vec<f64>,
    pub pivot_median_quantile: Vec<f64>,
    pub pivot_std_quantile: Vec<f64>,
}

fn quantile(k: u64) -> f64 {
    k as f64 / 18_446_744_073_709_551_616.0
}

fn trial_rng(seed: u64, trial: usize) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(trial as u64);
    r
}

/// Aggregated pivot quantiles of one trial.
fn run_trial(spec: &OracleSpec, plan: Option<&TreePlan>, trial: usize) -> Result<Vec<f64>, PivotError> {
    let mut rng = trial_rng(spec.seed, trial);
    let pivots = spec.strategy.buckets() - 1;
    let mut columns = vec![Vec::with_capacity(spec.num_nodes); pivots];
    let mut keys = vec![0u64; spec.n];
    for _ in 0..spec.num_nodes {
        rng.fill(&mut keys[..]);
        keys.sort_unstable();
        let idx = select_indices(&spec.strategy, spec.n, &mut rng)?;
        for (col, i) in columns.iter_mut().zip(idx) {
            col.push(keys[i]);
        }
    }
    let agg = |col: &Vec<u64>| -> Result<u64, TreeError> {
        match plan {
            Some(p) => tree_median(col, p),
            None => median(col),
        }
    };
    Ok(columns
        .iter()
        .map(|c| quantile(agg(c).expect("non-empty columns")))
        .collect())
}

fn lower_median(values: &mut [f64]) -> f64 {
    let mid = (values.len() - 1) / 2;
    *values.select_nth_unstable_by(mid, f64::total_cmp).1
}

/// Runs the Monte-Carlo model; trials run in parallel but each uses its own
/// seeded stream, so results do not depend on scheduling.
pub fn bucket_size_distribution(spec: &OracleSpec) -> Result<OracleResult, PivotError> {
    spec.strategy.validate()?;
    if spec.trials == 0 || spec.num_nodes == 0 {
        return Err(PivotError::BadStrategy("oracle needs at least one trial and one node".into()));
    }
    let plan = if spec.fan_in > 0 {
        Some(TreePlan::new(spec.num_nodes, spec.fan_in).map_err(|e| PivotError::BadStrategy(e.to_string()))?)
    } else {
        None
    };
    let started = std::time::Instant::now();
    let rows: Vec<Vec<f64>> = (0..spec.trials)
        .into_par_iter()
        .map(|t| run_trial(spec, plan.as_ref(), t))
        .collect::<Result<_, _>>()?;
    log::debug!(
        "oracle {} n={} N={} trials={} took {:?}",
        spec.strategy,
        spec.n,
        spec.num_nodes,
        spec.trials,
        started.elapsed()
    );

    let b = spec.strategy.buckets();
    let t = spec.trials as f64;
    let mut mean = vec![0.0; b - 1];
    let mut fractions = vec![0.0; b];
    for row in &rows {
        let mut prev = 0.0;
        for (j, &q) in row.iter().enumerate() {
            mean[j] += q / t;
            fractions[j] += (q - prev) / t;
            prev = q;
        }
        fractions[b - 1] += (1.0 - prev) / t;
    }
    let mut std = vec![0.0; b - 1];
    let mut med = Vec::with_capacity(b - 1);
    let mut column = vec![0.0; rows.len()];
    for j in 0..b - 1 {
        for (c, row) in column.iter_mut().zip(&rows) {
            *c = row[j];
        }
        let var = column.iter().map(|q| (q - mean[j]).powi(2)).sum::<f64>() / (t - 1.0).max(1.0);
        std[j] = var.sqrt();
        med.push(lower_median(&mut column));
    }
    Ok(OracleResult {
        spec: spec.clone(),
        buckets: b,
        mean_fraction: fractions,
        pivot_mean_quantile: mean,
        pivot_median_quantile: med,
        pivot_std_quantile: std,
    })
}

impl OracleResult {
    /// One row per bucket; the pivot column holds the median quantile of the
    /// bucket's upper pivot and is empty for the last bucket.
    pub fn write_csv<W: io::Write>(&self, w: W, header: bool) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        if header {
            out.write_record([
                "strategy",
                "b",
                "n",
                "N",
                "fan_in",
                "bucket_index",
                "mean_fraction",
                "pivot_median_quantile",
            ])?;
        }
        for i in 0..self.buckets {
            out.write_record([
                self.spec.strategy.to_string(),
                self.buckets.to_string(),
                self.spec.n.to_string(),
                self.spec.num_nodes.to_string(),
                self.spec.fan_in.to_string(),
                i.to_string(),
                format!("{:.6}", self.mean_fraction[i]),
                self.pivot_median_quantile.get(i).map(|q| format!("{q:.6}")).unwrap_or_default(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(strategy: Strategy, n: usize, num_nodes: usize, fan_in: usize, trials: usize) -> OracleSpec {
        OracleSpec { strategy, n, num_nodes, fan_in, trials, seed: 17 }
    }

    /// CDF of the k-th smallest (1-based) of n uniforms at x.
    fn order_stat_cdf(k: usize, n: usize, x: f64) -> f64 {
        // P(at least k of n below x)
        let mut total = 0.0;
        for j in k..=n {
            let binom = (0..j).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64);
            total += binom * x.powi(j as i32) * (1.0 - x).powi((n - j) as i32);
        }
        total
    }

    fn bisect(f: impl Fn(f64) -> f64, target: f64) -> f64 {
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if f(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    }

    #[test]
    fn smallest_of_nine_median() {
        let r = bucket_size_distribution(&spec(Strategy::RankMixture(vec![1.0]), 9, 1, 0, 200_000)).unwrap();
        let expected = 1.0 - 2f64.powf(-1.0 / 9.0);
        assert!((r.pivot_median_quantile[0] - expected).abs() < 0.003, "{:?}", r.pivot_median_quantile);
        assert!((r.pivot_mean_quantile[0] - 0.1).abs() < 0.003);
    }

    #[test]
    fn rank_mixture_median_matches_closed_form() {
        let r = bucket_size_distribution(&spec(Strategy::RankMixture(vec![0.8, 0.2]), 9, 1, 0, 200_000)).unwrap();
        let cdf = |x: f64| 0.8 * order_stat_cdf(1, 9, x) + 0.2 * order_stat_cdf(2, 9, x);
        let expected = bisect(cdf, 0.5);
        assert!((expected - 0.0910).abs() < 0.001, "closed form {expected}");
        assert!((r.pivot_median_quantile[0] - expected).abs() < 0.003, "{:?}", r.pivot_median_quantile);
    }

    #[test]
    fn large_exact_median_tracks_distribution_median() {
        let r = bucket_size_distribution(&spec(Strategy::RankMixture(vec![1.0]), 9, 401, 0, 2_000)).unwrap();
        let expected = 1.0 - 2f64.powf(-1.0 / 9.0);
        assert!((r.pivot_mean_quantile[0] - expected).abs() < 0.003);
    }

    #[test]
    fn naive_and_shift_half_expectations() {
        // Dropping one of 8 order statistics uniformly gives E[p_i] = i/8;
        // the shift strategy averages k_i and k_(i+1), E = (2i + 1)/18.
        let r = bucket_size_distribution(&spec(Strategy::Naive(8), 8, 1, 0, 200_000)).unwrap();
        for (i, f) in r.mean_fraction.iter().enumerate() {
            assert!((f - 0.125).abs() < 0.003, "naive bucket {i}: {f}");
        }
        let r = bucket_size_distribution(&spec(Strategy::ShiftHalf(8), 8, 1, 0, 200_000)).unwrap();
        for (i, q) in r.pivot_mean_quantile.iter().enumerate() {
            let e = (2 * (i + 1) + 1) as f64 / 18.0;
            assert!((q - e).abs() < 0.003, "shift pivot {i}: {q} vs {e}");
        }
        assert!((r.mean_fraction[0] - 3.0 / 18.0).abs() < 0.003);
        assert!((r.mean_fraction[3] - 2.0 / 18.0).abs() < 0.003);
        assert!((r.mean_fraction[7] - 3.0 / 18.0).abs() < 0.003);
    }

    #[test]
    fn fractions_sum_to_one_and_csv_shape() {
        let r = bucket_size_distribution(&spec(Strategy::Rule16, 16, 64, 8, 500)).unwrap();
        assert!((r.mean_fraction.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        let mut buf = Vec::new();
        r.write_csv(&mut buf, true).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 17);
        assert_eq!(lines[0], "strategy,b,n,N,fan_in,bucket_index,mean_fraction,pivot_median_quantile");
        assert!(lines[16].starts_with("rule16,16,16,64,8,15,") && lines[16].ends_with(','));
    }

    #[test]
    fn deterministic_regardless_of_threads() {
        let s = spec(Strategy::Mixed(4), 6, 16, 4, 300);
        assert_eq!(bucket_size_distribution(&s).unwrap(), bucket_size_distribution(&s).unwrap());
    }

    #[test]
    fn errors() {
        assert!(bucket_size_distribution(&spec(Strategy::Naive(8), 4, 1, 0, 10)).is_err());
        assert!(bucket_size_distribution(&spec(Strategy::Naive(8), 8, 1, 0, 0)).is_err());
    }
}
