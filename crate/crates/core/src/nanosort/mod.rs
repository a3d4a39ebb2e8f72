//! Recursive bucket sort over `b^r` simulated nodes.
//!
//! Each level sorts locally, elects `b - 1` pivots through median trees,
//! routes every key to a random node of its bucket's sub-range and recurses
//! inside each sub-range. Once a node is alone in its range it sorts and
//! summons the values of its keys from their origin nodes.

mod node;
mod run;
mod shuffle;
mod verify;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::netsim::NodeId;
use crate::pivot::Key;

pub use node::{NsMsg, SortNode};
pub use run::{run_nanosort, run_nanosort_with, SortError, SortOutcome};
pub use shuffle::{initial_shuffle, node_partition};
pub use verify::{skew, verify, VerifyReport};

pub const VALUE_BYTES: usize = 96;
/// Serialized record: 8-byte key plus 96-byte value.
pub const RECORD_BYTES: u32 = 104;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SortConfig {
    pub num_keys: usize,
    pub num_buckets: usize,
    pub recursion_depth: u32,
    pub median_fan_in: usize,
    pub multicast: bool,
    pub seed: u64,
}

impl Default for SortConfig {
    fn default() -> Self {
        SortConfig {
            num_keys: 1 << 20,
            num_buckets: 16,
            recursion_depth: 4,
            median_fan_in: 16,
            multicast: true,
            seed: 1,
        }
    }
}

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
#[error("invalid sort configuration: {0}")]
pub struct ConfigError(pub String);

impl SortConfig {
    pub fn num_nodes(&self) -> usize {
        self.num_buckets.pow(self.recursion_depth)
    }

    pub fn keys_per_node(&self) -> usize {
        self.num_keys / self.num_nodes()
    }

    /// Depth `r` such that `b^r == nodes`, if any.
    pub fn depth_for(nodes: usize, b: usize) -> Option<u32> {
        if b < 2 || nodes == 0 {
            return None;
        }
        let mut r = 0;
        let mut n = 1usize;
        while n < nodes {
            n = n.checked_mul(b)?;
            r += 1;
        }
        (n == nodes).then_some(r)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.num_buckets < 2 {
            return Err(ConfigError(format!("need at least 2 buckets, got {}", self.num_buckets)));
        }
        if self.median_fan_in < 2 {
            return Err(ConfigError(format!("median fan-in {} < 2", self.median_fan_in)));
        }
        let nodes = self
            .num_buckets
            .checked_pow(self.recursion_depth)
            .filter(|&n| n <= u32::MAX as usize)
            .ok_or_else(|| ConfigError("node count overflows".into()))?;
        if self.num_keys == 0 || !self.num_keys.is_multiple_of(nodes) {
            return Err(ConfigError(format!(
                "{} keys cannot be split evenly over {} nodes",
                self.num_keys, nodes
            )));
        }
        Ok(())
    }
}

#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SortRecord {
    pub key: Key,
    #[serde(with = "value_bytes")]
    pub value: [u8; VALUE_BYTES],
    /// Node holding the value until the final shuffle.
    pub origin: NodeId,
}

impl fmt::Debug for SortRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SortRecord {{ key: {:#018x}, origin: {}, value: {:02x?}.. }}", self.key, self.origin, &self.value[..4])
    }
}

mod value_bytes {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[u8; super::VALUE_BYTES], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_bytes(v)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[u8; super::VALUE_BYTES], D::Error> {
        let v: Vec<u8> = Vec::deserialize(d)?;
        v.try_into().map_err(|_| serde::de::Error::custom("value must be 96 bytes"))
    }
}

/// A key in flight: its origin node and position there break ties, so
/// ordering is total even with repeated keys.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Tagged {
    pub key: Key,
    pub origin: NodeId,
    pub slot: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Step {
    Shuffle,
    Candidates,
    MedianLevel(u8),
    Broadcast,
    Route,
    ValueShuffle,
    Done,
}

impl Step {
    pub fn stage_id(self) -> u16 {
        match self {
            Step::Shuffle => 0,
            Step::Candidates => 1,
            Step::MedianLevel(_) => 2,
            Step::Broadcast => 3,
            Step::Route => 4,
            Step::ValueShuffle => 5,
            Step::Done => 6,
        }
    }

    pub fn labels() -> Vec<String> {
        ["shuffle", "candidates", "median", "broadcast", "route", "values", "done"]
            .iter()
            .map(|s| s.to_string())
            .collect()
    }
}

/// Position in the algorithm: recursion level first, then step.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PhaseTag {
    pub level: u32,
    pub step: Step,
}

impl fmt::Display for PhaseTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "L{}:{:?}", self.level, self.step)
    }
}
