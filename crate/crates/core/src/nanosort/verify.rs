use serde::Serialize;

use super::SortRecord;

/// Outcome of the four output checks; `detail` names the first failure.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct VerifyReport {
    pub node_sorted: bool,
    pub nodes_ordered: bool,
    pub keys_preserved: bool,
    pub values_match: bool,
    pub detail: Option<String>,
}

impl VerifyReport {
    pub fn pass(&self) -> bool {
        self.node_sorted && self.nodes_ordered && self.keys_preserved && self.values_match
    }

    pub fn label(&self) -> &'static str {
        if self.pass() {
            "PASS"
        } else {
            "FAIL"
        }
    }

    fn fail(&mut self, msg: String) {
        if self.detail.is_none() {
            self.detail = Some(msg);
        }
    }
}

/// Checks per-node order, order across consecutive nodes, key multiset
/// conservation and that each key still carries its own value.
pub fn verify(output: &[Vec<SortRecord>], input: &[SortRecord]) -> VerifyReport {
    let mut r = VerifyReport {
        node_sorted: true,
        nodes_ordered: true,
        keys_preserved: true,
        values_match: true,
        detail: None,
    };
    for (i, node) in output.iter().enumerate() {
        if let Some(j) = node.windows(2).position(|w| w[0].key > w[1].key) {
            r.node_sorted = false;
            r.fail(format!("node {i} unsorted at position {}", j + 1));
        }
    }
    let mut prev_max: Option<(usize, u64)> = None;
    for (i, node) in output.iter().enumerate() {
        let (Some(lo), Some(hi)) = (node.iter().map(|x| x.key).min(), node.iter().map(|x| x.key).max()) else {
            continue;
        };
        if let Some((p, m)) = prev_max {
            if m > lo {
                r.nodes_ordered = false;
                r.fail(format!("node {p} holds key {m:#x} above node {i}'s minimum {lo:#x}"));
            }
        }
        prev_max = Some((i, hi));
    }

    let mut got: Vec<(u64, &[u8])> = output.iter().flatten().map(|x| (x.key, &x.value[..])).collect();
    let mut want: Vec<(u64, &[u8])> = input.iter().map(|x| (x.key, &x.value[..])).collect();
    got.sort_unstable();
    want.sort_unstable();
    if got.len() != want.len() || got.iter().zip(&want).any(|(a, b)| a.0 != b.0) {
        r.keys_preserved = false;
        r.fail(format!("output holds {} keys, input {} (or key multisets differ)", got.len(), want.len()));
    } else if let Some((a, _)) = got.iter().zip(&want).find(|(a, b)| a.1 != b.1) {
        r.values_match = false;
        r.fail(format!("key {:#x} carries the wrong value", a.0));
    }
    r
}

/// Largest per-node key count over the mean count.
pub fn skew(counts: &[usize], num_keys: usize) -> f64 {
    if counts.is_empty() || num_keys == 0 {
        return 1.0;
    }
    let mean = num_keys as f64 / counts.len() as f64;
    *counts.iter().max().expect("non-empty") as f64 / mean
}
