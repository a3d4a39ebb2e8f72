use std::io;

use serde::Serialize;

use super::{NodeId, SimTime};

/// Wall-clock interval a node spent in one program stage.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct StageTrace {
    pub stage: u16,
    pub start: SimTime,
    pub end: SimTime,
    pub busy: SimTime,
    pub sent: u64,
    pub received: u64,
}

impl StageTrace {
    pub fn idle(&self) -> SimTime {
        (self.end - self.start).saturating_sub(self.busy)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct NodeTrace {
    pub id: NodeId,
    /// First time the program reported itself terminal.
    pub terminal_at: SimTime,
    /// Later of `terminal_at` and the end of the node's last busy period.
    pub completion: SimTime,
    pub busy: SimTime,
    pub sent: u64,
    pub received: u64,
    pub stages: Vec<StageTrace>,
}

impl NodeTrace {
    pub fn idle(&self) -> SimTime {
        self.completion.saturating_sub(self.busy)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct NetStats {
    pub unicast_sends: u64,
    pub multicast_sends: u64,
    pub deliveries: u64,
    pub multicast_deliveries: u64,
    pub tail_hits: u64,
    pub min_delay: Option<SimTime>,
    pub max_delay: Option<SimTime>,
}

impl NetStats {
    /// Messages counted at senders: a multicast counts once.
    pub fn messages_sent(&self) -> u64 {
        self.unicast_sends + self.multicast_sends
    }

    pub(crate) fn record_delay(&mut self, d: SimTime) {
        self.min_delay = Some(self.min_delay.map_or(d, |m| m.min(d)));
        self.max_delay = Some(self.max_delay.map_or(d, |m| m.max(d)));
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Trace {
    /// Latest `terminal_at` over all nodes.
    pub completion: SimTime,
    pub events: u64,
    pub net: NetStats,
    pub nodes: Vec<NodeTrace>,
    pub stage_labels: Vec<String>,
}

impl Trace {
    pub fn empty() -> Self {
        Trace {
            completion: SimTime::ZERO,
            events: 0,
            net: NetStats::default(),
            nodes: Vec::new(),
            stage_labels: Vec::new(),
        }
    }

    pub fn stage_label(&self, stage: u16) -> String {
        self.stage_labels
            .get(stage as usize)
            .cloned()
            .unwrap_or_else(|| format!("stage{stage}"))
    }

    /// One row per (node, stage) segment, in node then time order.
    pub fn write_csv<W: io::Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record([
            "node", "stage", "start_ps", "end_ps", "busy_ps", "idle_ps", "sent", "received",
        ])?;
        for n in &self.nodes {
            for s in &n.stages {
                out.write_record([
                    n.id.to_string(),
                    self.stage_label(s.stage),
                    s.start.as_ps().to_string(),
                    s.end.as_ps().to_string(),
                    s.busy.as_ps().to_string(),
                    s.idle().as_ps().to_string(),
                    s.sent.to_string(),
                    s.received.to_string(),
                ])?;
            }
        }
        out.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("in-memory csv");
        String::from_utf8(buf).expect("csv is utf-8")
    }
}
