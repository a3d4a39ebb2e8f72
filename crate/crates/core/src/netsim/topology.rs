use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{NetError, NodeId, SimTime};

/// Two-layer leaf/spine fabric with fixed per-hop latencies.
///
/// Hosts attach to leaves in contiguous blocks of `downlinks_per_leaf`; every
/// spine reaches every leaf, so all cross-leaf paths have the same length.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Topology {
    pub num_hosts: usize,
    pub downlinks_per_leaf: usize,
    pub num_leaves: usize,
    pub num_spines: usize,
    pub link_latency: SimTime,
    pub switch_latency: SimTime,
    /// Bytes per nanosecond; 25 is a 200 Gbps link.
    pub link_bandwidth: f64,
}

impl Default for Topology {
    fn default() -> Self {
        Topology::leaf_spine(1)
    }
}

/// Hop counts of one routed path.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Path {
    pub links: u32,
    pub switches: u32,
    /// Spine crossed by a cross-leaf path. All spines have equal latency, so
    /// this does not change the delay.
    pub spine: Option<usize>,
}

impl Topology {
    pub const DEFAULT_DOWNLINKS: usize = 64;
    pub const DEFAULT_LINK_LATENCY: SimTime = SimTime::from_ns(43);
    pub const DEFAULT_SWITCH_LATENCY: SimTime = SimTime::from_ns(263);
    pub const DEFAULT_BANDWIDTH: f64 = 25.0;

    /// Smallest default fabric that holds `num_hosts`.
    pub fn leaf_spine(num_hosts: usize) -> Self {
        let downlinks = Self::DEFAULT_DOWNLINKS;
        Topology {
            num_hosts,
            downlinks_per_leaf: downlinks,
            num_leaves: num_hosts.div_ceil(downlinks).max(1),
            num_spines: downlinks,
            link_latency: Self::DEFAULT_LINK_LATENCY,
            switch_latency: Self::DEFAULT_SWITCH_LATENCY,
            link_bandwidth: Self::DEFAULT_BANDWIDTH,
        }
    }

    /// Resizes the fabric for a new host count, keeping latencies and bandwidth.
    pub fn with_hosts(mut self, num_hosts: usize) -> Self {
        self.num_hosts = num_hosts;
        self.num_leaves = num_hosts.div_ceil(self.downlinks_per_leaf.max(1)).max(1);
        self
    }

    pub fn validate(&self) -> Result<(), NetError> {
        if self.downlinks_per_leaf == 0 || self.num_leaves == 0 || self.num_spines == 0 {
            return Err(NetError::Config(
                "leaf, spine and downlink counts must be positive".into(),
            ));
        }
        if self.num_hosts > self.num_leaves * self.downlinks_per_leaf {
            return Err(NetError::Config(format!(
                "{} hosts do not fit on {} leaves with {} downlinks each",
                self.num_hosts, self.num_leaves, self.downlinks_per_leaf
            )));
        }
        if !(self.link_bandwidth.is_finite() && self.link_bandwidth > 0.0) {
            return Err(NetError::Config("link bandwidth must be positive".into()));
        }
        Ok(())
    }

    pub fn leaf_of(&self, host: NodeId) -> usize {
        host as usize / self.downlinks_per_leaf
    }

    fn check_host(&self, host: NodeId) -> Result<(), NetError> {
        if (host as usize) < self.num_hosts {
            Ok(())
        } else {
            Err(NetError::UnknownHost { host, num_hosts: self.num_hosts })
        }
    }

    /// Routes `src -> dst`. `salt` picks the spine for cross-leaf paths.
    pub fn path(&self, src: NodeId, dst: NodeId, salt: u64) -> Result<Path, NetError> {
        self.check_host(src)?;
        self.check_host(dst)?;
        if src == dst {
            return Err(NetError::Loopback(src));
        }
        if self.leaf_of(src) == self.leaf_of(dst) {
            Ok(Path { links: 2, switches: 1, spine: None })
        } else {
            let h = mix64(((src as u64) << 32 | dst as u64) ^ mix64(salt));
            Ok(Path {
                links: 4,
                switches: 3,
                spine: Some((h % self.num_spines as u64) as usize),
            })
        }
    }

    /// Time to clock `size_bytes` onto one link.
    pub fn serialization(&self, size_bytes: u32) -> SimTime {
        let ps = (size_bytes as f64 * 1_000.0 / self.link_bandwidth).ceil();
        SimTime::from_ps(ps as u64)
    }

    /// Deterministic part of the delay: hops plus one serialization.
    pub fn base_delay(&self, src: NodeId, dst: NodeId, size_bytes: u32) -> Result<SimTime, NetError> {
        let path = self.path(src, dst, 0)?;
        Ok(self.delay_of(&path, size_bytes))
    }

    pub(crate) fn delay_of(&self, path: &Path, size_bytes: u32) -> SimTime {
        self.link_latency * path.links as u64
            + self.switch_latency * path.switches as u64
            + self.serialization(size_bytes)
    }

    /// Smallest delay any delivery can see.
    pub fn min_delay(&self) -> SimTime {
        self.link_latency * 2 + self.switch_latency
    }
}

/// Tail-latency injector: each delivery independently gains `tail_extra`
/// with probability `tail_fraction`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LatencyModel {
    pub tail_fraction: f64,
    pub tail_extra: SimTime,
    pub rng_seed: u64,
}

impl Default for LatencyModel {
    fn default() -> Self {
        LatencyModel { tail_fraction: 0.01, tail_extra: SimTime::ZERO, rng_seed: 0 }
    }
}

impl LatencyModel {
    pub fn validate(&self) -> Result<(), NetError> {
        if !(0.0..=1.0).contains(&self.tail_fraction) {
            return Err(NetError::Config(format!(
                "tail fraction {} outside [0, 1]",
                self.tail_fraction
            )));
        }
        Ok(())
    }

    /// One draw per delivery, even when `tail_extra` is zero, so the random
    /// stream does not depend on the injected magnitude.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> SimTime {
        if rng.gen_bool(self.tail_fraction) {
            self.tail_extra
        } else {
            SimTime::ZERO
        }
    }
}

/// Serialization plus hop latencies plus one tail draw.
pub fn path_delay<R: Rng + ?Sized>(
    topo: &Topology,
    latency: &LatencyModel,
    src: NodeId,
    dst: NodeId,
    size_bytes: u32,
    rng: &mut R,
) -> Result<SimTime, NetError> {
    Ok(topo.base_delay(src, dst, size_bytes)? + latency.draw(rng))
}

/// SplitMix64 finalizer.
pub(crate) fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
