//! Deterministic discrete-event network simulator.
//!
//! Hosts sit on a two-layer leaf/spine fabric with constant per-hop latency;
//! switches do not queue. Each host runs a [`NodeProgram`] and is a single
//! server: receive costs, compute and sends occupy it, and messages that
//! arrive while it is busy wait in its inbox. Events are ordered by
//! `(time, seq)` where `seq` is assigned when the event is scheduled, so a
//! run is a pure function of its configuration and seed.

mod cost;
mod engine;
mod message;
mod time;
mod topology;
mod trace;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cost::{CalibrationTable, ComputeKind, CostModel, CALIBRATED_MSG_BYTES};
pub use engine::{NodeCtx, NodeProgram, Simulation};
pub use message::{Message, Payload};
pub use time::SimTime;
pub use topology::{path_delay, LatencyModel, Path, Topology};
pub use trace::{NetStats, NodeTrace, StageTrace, Trace};
pub(crate) use topology::mix64;

pub type NodeId = u32;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("unknown host {host} (topology has {num_hosts})")]
    UnknownHost { host: NodeId, num_hosts: usize },
    #[error("host {0} cannot send to itself")]
    Loopback(NodeId),
    #[error("multicast is disabled")]
    MulticastDisabled,
    #[error("multicast group is empty")]
    EmptyGroup,
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Net(#[from] NetError),
    #[error("node {node} at {time}: {source}")]
    Program {
        node: NodeId,
        time: SimTime,
        #[source]
        source: ProgramError,
    },
    #[error("event cap of {cap} exceeded at {time}; node phases:\n{dump}")]
    EventCap { cap: u64, time: SimTime, dump: String },
    #[error("event queue drained at {time} with non-terminal nodes:\n{dump}")]
    NotQuiescent { time: SimTime, dump: String },
}

/// Errors raised by node programs.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProgramError {
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error(transparent)]
    Net(#[from] NetError),
}

/// Network-side configuration of one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetConfig {
    pub topology: Topology,
    pub latency: LatencyModel,
    pub multicast: bool,
    /// Framing bytes added to every payload for serialization delay.
    pub header_bytes: u32,
    pub max_events: u64,
    /// Log a checkpoint every this many events; 0 disables.
    pub progress_every: u64,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig {
            topology: Topology::default(),
            latency: LatencyModel::default(),
            multicast: true,
            header_bytes: 30,
            max_events: 2_000_000_000,
            progress_every: 0,
        }
    }
}

impl NetConfig {
    pub fn validate(&self) -> Result<(), NetError> {
        self.topology.validate()?;
        self.latency.validate()
    }
}
