//! Pivot selection and bucket assignment.
//!
//! Selection works on positions in a sorted list so the same routines serve
//! bare keys, tagged records and the quantile-space oracle.

mod oracle;
mod select;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use oracle::{bucket_size_distribution, OracleResult, OracleSpec};
pub use select::{candidate_indices, pivot_select, pivot_select_16, select_indices};

pub type Key = u64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PivotError {
    #[error("input keys are not sorted ascending (position {0})")]
    Unsorted(usize),
    #[error("strategy needs at least {need} keys, got {got}")]
    TooFewKeys { need: usize, got: usize },
    #[error("invalid strategy: {0}")]
    BadStrategy(String),
}

/// How a node turns its sorted keys into `b - 1` pivot candidates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Strategy {
    /// The 16-bucket routine, defined for any key count.
    Rule16,
    /// `b - 1` keys uniformly without replacement.
    Naive(usize),
    /// From a random `b`-subset, the lowest or the highest `b - 1`, each w.p. 1/2.
    ShiftHalf(usize),
    /// `Naive` w.p. 1/4, `ShiftHalf` w.p. 3/4.
    Mixed(usize),
    /// A single pivot: the rank-`i` key (0-based) with probability `weights[i]`.
    RankMixture(Vec<f64>),
}

impl Strategy {
    pub fn buckets(&self) -> usize {
        match self {
            Strategy::Rule16 => 16,
            Strategy::Naive(b) | Strategy::ShiftHalf(b) | Strategy::Mixed(b) => *b,
            Strategy::RankMixture(_) => 2,
        }
    }

    pub fn validate(&self) -> Result<(), PivotError> {
        match self {
            Strategy::Rule16 => Ok(()),
            Strategy::Naive(b) | Strategy::ShiftHalf(b) | Strategy::Mixed(b) if *b < 2 => {
                Err(PivotError::BadStrategy(format!("{self} needs at least 2 buckets")))
            }
            Strategy::RankMixture(w) => {
                let sum: f64 = w.iter().sum();
                if w.is_empty() || w.iter().any(|&x| !(0.0..=1.0).contains(&x)) || (sum - 1.0).abs() > 1e-9 {
                    Err(PivotError::BadStrategy(format!("rank weights {w:?} are not a distribution")))
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Strategy::Rule16 => write!(f, "rule16"),
            Strategy::Naive(b) => write!(f, "naive{b}"),
            Strategy::ShiftHalf(b) => write!(f, "shift_half{b}"),
            Strategy::Mixed(b) => write!(f, "mixed{b}"),
            Strategy::RankMixture(w) => {
                let parts: Vec<String> = w.iter().map(|x| x.to_string()).collect();
                write!(f, "ranks:{}", parts.join("/"))
            }
        }
    }
}

impl FromStr for Strategy {
    type Err = PivotError;

    /// Accepts the [`fmt::Display`] forms, e.g. `rule16`, `naive8`,
    /// `mixed4`, `ranks:0.8/0.2`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || PivotError::BadStrategy(s.to_string());
        if s == "rule16" {
            return Ok(Strategy::Rule16);
        }
        if let Some(w) = s.strip_prefix("ranks:") {
            let weights = w.split('/').map(|x| x.parse::<f64>().map_err(|_| bad())).collect::<Result<_, _>>()?;
            let st = Strategy::RankMixture(weights);
            st.validate()?;
            return Ok(st);
        }
        let split = s.find(|c: char| c.is_ascii_digit()).ok_or_else(bad)?;
        let b: usize = s[split..].parse().map_err(|_| bad())?;
        let st = match &s[..split] {
            "naive" => Strategy::Naive(b),
            "shift_half" => Strategy::ShiftHalf(b),
            "mixed" => Strategy::Mixed(b),
            _ => return Err(bad()),
        };
        st.validate()?;
        Ok(st)
    }
}

/// Non-decreasing pivots defining `len + 1` buckets. Repeated pivots leave
/// the buckets between them empty.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PivotSet {
    pivots: Vec<Key>,
}

impl PivotSet {
    pub fn new(pivots: Vec<Key>) -> Result<Self, PivotError> {
        if let Some(i) = pivots.windows(2).position(|w| w[0] > w[1]) {
            return Err(PivotError::Unsorted(i + 1));
        }
        Ok(PivotSet { pivots })
    }

    pub fn pivots(&self) -> &[Key] {
        &self.pivots
    }

    pub fn buckets(&self) -> usize {
        self.pivots.len() + 1
    }

    pub fn is_degenerate(&self) -> bool {
        self.pivots.windows(2).any(|w| w[0] == w[1])
    }

    pub fn bucket_of(&self, key: Key) -> usize {
        bucket_of(&key, &self.pivots)
    }
}

/// Index of the bucket holding `key`: the number of pivots `<= key`. A key
/// equal to a pivot lands in the bucket that pivot lower-bounds.
pub fn bucket_of<T: Ord>(key: &T, pivots: &[T]) -> usize {
    pivots.partition_point(|p| p <= key)
}

pub(crate) fn check_sorted<T: Ord>(keys: &[T]) -> Result<(), PivotError> {
    match keys.windows(2).position(|w| w[0] > w[1]) {
        Some(i) => Err(PivotError::Unsorted(i + 1)),
        None => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use crate::pivot::Strategy;

    #[test]
    fn bucket_boundaries() {
        let p = PivotSet::new(vec![10, 20, 30]).unwrap();
        assert_eq!(p.bucket_of(5), 0);
        assert_eq!(p.bucket_of(10), 1);
        assert_eq!(p.bucket_of(29), 2);
        assert_eq!(p.bucket_of(30), 3);
        assert_eq!(p.bucket_of(u64::MAX), 3);
        assert_eq!(p.buckets(), 4);
    }

    #[test]
    fn repeated_pivots_allowed() {
        let p = PivotSet::new(vec![4, 4, 9]).unwrap();
        assert!(p.is_degenerate());
        assert_eq!(p.bucket_of(4), 2);
        assert_eq!(PivotSet::new(vec![3, 1]), Err(PivotError::Unsorted(1)));
    }

    #[test]
    fn strategy_names_round_trip() {
        for s in [
            Strategy::Rule16,
            Strategy::Naive(8),
            Strategy::ShiftHalf(8),
            Strategy::Mixed(4),
            Strategy::RankMixture(vec![0.8, 0.2]),
        ] {
            assert_eq!(s.to_string().parse::<Strategy>().unwrap(), s);
        }
        assert!("naive1".parse::<Strategy>().is_err());
        assert!("bogus8".parse::<Strategy>().is_err());
        assert!("ranks:0.5/0.2".parse::<Strategy>().is_err());
    }

    proptest! {
        #[test]
        fn bucket_index_monotone(mut pivots in prop::collection::vec(any::<u64>(), 0..20),
                                 mut keys in prop::collection::vec(any::<u64>(), 1..100)) {
            pivots.sort_unstable();
            keys.sort_unstable();
            let idx: Vec<usize> = keys.iter().map(|k| bucket_of(k, &pivots)).collect();
            prop_assert!(idx.windows(2).all(|w| w[0] <= w[1]));
            for (k, &i) in keys.iter().zip(&idx) {
                prop_assert!(i <= pivots.len());
                if i > 0 { prop_assert!(pivots[i - 1] <= *k); }
                if i < pivots.len() { prop_assert!(*k < pivots[i]); }
            }
        }
    }
}
