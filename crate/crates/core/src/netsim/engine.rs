use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, VecDeque};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::trace::{NetStats, NodeTrace, StageTrace, Trace};
use super::{
    ComputeKind, CostModel, Message, NetConfig, NetError, NodeId, Payload, ProgramError,
    SimError, SimTime,
};

/// Per-node state machine driven by the event loop.
pub trait NodeProgram {
    type Msg: Payload;

    /// Runs once at time zero, before any delivery.
    fn start(&mut self, ctx: &mut NodeCtx<'_, Self::Msg>) -> Result<(), ProgramError>;

    fn on_message(
        &mut self,
        msg: Message<Self::Msg>,
        ctx: &mut NodeCtx<'_, Self::Msg>,
    ) -> Result<(), ProgramError>;

    fn is_terminal(&self) -> bool;

    /// One-line phase description for diagnostics.
    fn describe(&self) -> String;

    fn stage_labels() -> Vec<String> {
        Vec::new()
    }
}

enum Outgoing<M> {
    Unicast { at: SimTime, dst: NodeId, payload: M },
    Multicast { at: SimTime, group: Vec<NodeId>, payload: M },
}

/// Handle a program uses to charge time and emit messages.
///
/// The node clock starts when the handler is invoked (after receive costs)
/// and advances with every charged operation; sends leave at the clock
/// value reached when they are issued.
pub struct NodeCtx<'a, M> {
    id: NodeId,
    num_nodes: usize,
    clock: SimTime,
    costs: &'a CostModel,
    multicast: bool,
    outbox: Vec<Outgoing<M>>,
    stage_changes: Vec<(SimTime, u16)>,
}

impl<'a, M: Payload> NodeCtx<'a, M> {
    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn now(&self) -> SimTime {
        self.clock
    }

    pub fn costs(&self) -> &CostModel {
        self.costs
    }

    pub fn multicast_enabled(&self) -> bool {
        self.multicast
    }

    pub fn busy(&mut self, t: SimTime) {
        self.clock += t;
    }

    pub fn compute(&mut self, kind: ComputeKind, n: u64) -> SimTime {
        let t = self.costs.compute_cost(kind, n);
        self.clock += t;
        t
    }

    pub fn set_stage(&mut self, stage: u16) {
        self.stage_changes.push((self.clock, stage));
    }

    pub fn send(&mut self, dst: NodeId, payload: M) -> Result<(), NetError> {
        if dst as usize >= self.num_nodes {
            return Err(NetError::UnknownHost { host: dst, num_hosts: self.num_nodes });
        }
        if dst == self.id {
            return Err(NetError::Loopback(dst));
        }
        self.clock += self.costs.send_cost(payload.payload_bytes());
        self.outbox.push(Outgoing::Unicast { at: self.clock, dst, payload });
        Ok(())
    }

    /// Switch-replicated send; the sender pays for one transmission. The
    /// sender itself is skipped if it appears in `group`.
    pub fn multicast(&mut self, group: &[NodeId], payload: M) -> Result<(), NetError> {
        if !self.multicast {
            return Err(NetError::MulticastDisabled);
        }
        if group.is_empty() {
            return Err(NetError::EmptyGroup);
        }
        if let Some(&bad) = group.iter().find(|&&g| g as usize >= self.num_nodes) {
            return Err(NetError::UnknownHost { host: bad, num_hosts: self.num_nodes });
        }
        self.clock += self.costs.send_cost(payload.payload_bytes());
        let group = group.iter().copied().filter(|&g| g != self.id).collect();
        self.outbox.push(Outgoing::Multicast { at: self.clock, group, payload });
        Ok(())
    }

    /// Multicast when the fabric supports it, otherwise one unicast per member.
    pub fn broadcast(&mut self, group: &[NodeId], payload: M) -> Result<(), NetError> {
        if self.multicast {
            return self.multicast(group, payload);
        }
        let me = self.id;
        for &g in group.iter().filter(|&&g| g != me) {
            self.send(g, payload.clone())?;
        }
        Ok(())
    }
}

enum EventKind<M> {
    Start,
    Deliver(Message<M>),
    Wake,
}

struct Event<M> {
    time: SimTime,
    seq: u64,
    node: NodeId,
    kind: EventKind<M>,
}

impl<M> PartialEq for Event<M> {
    fn eq(&self, other: &Self) -> bool {
        (self.time, self.seq) == (other.time, other.seq)
    }
}
impl<M> Eq for Event<M> {}
impl<M> PartialOrd for Event<M> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<M> Ord for Event<M> {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.time, self.seq).cmp(&(other.time, other.seq))
    }
}

struct NodeRuntime<M> {
    inbox: VecDeque<Message<M>>,
    busy_until: SimTime,
    burst: u64,
    wake_pending: bool,
    stage: u16,
    stage_start: SimTime,
    stage_busy: SimTime,
    stage_sent: u64,
    stage_received: u64,
    stages: Vec<StageTrace>,
    busy: SimTime,
    sent: u64,
    received: u64,
    terminal_at: Option<SimTime>,
}

impl<M> NodeRuntime<M> {
    fn new() -> Self {
        NodeRuntime {
            inbox: VecDeque::new(),
            busy_until: SimTime::ZERO,
            burst: 0,
            wake_pending: false,
            stage: 0,
            stage_start: SimTime::ZERO,
            stage_busy: SimTime::ZERO,
            stage_sent: 0,
            stage_received: 0,
            stages: Vec::new(),
            busy: SimTime::ZERO,
            sent: 0,
            received: 0,
            terminal_at: None,
        }
    }

    fn close_stage(&mut self, at: SimTime) {
        let empty = at == self.stage_start
            && self.stage_busy == SimTime::ZERO
            && self.stage_sent == 0
            && self.stage_received == 0;
        if empty {
            return;
        }
        self.stages.push(StageTrace {
            stage: self.stage,
            start: self.stage_start,
            end: at,
            busy: self.stage_busy,
            sent: self.stage_sent,
            received: self.stage_received,
        });
        self.stage_start = at;
        self.stage_busy = SimTime::ZERO;
        self.stage_sent = 0;
        self.stage_received = 0;
    }
}

pub struct Simulation<P: NodeProgram> {
    cfg: NetConfig,
    costs: CostModel,
    programs: Vec<P>,
    nodes: Vec<NodeRuntime<P::Msg>>,
    queue: BinaryHeap<Reverse<Event<P::Msg>>>,
    seq: u64,
    rng: ChaCha8Rng,
    stats: NetStats,
    now: SimTime,
    events: u64,
}

impl<P: NodeProgram> Simulation<P> {
    pub fn new(cfg: NetConfig, costs: CostModel, programs: Vec<P>) -> Result<Self, NetError> {
        cfg.validate()?;
        if programs.len() > cfg.topology.num_hosts {
            return Err(NetError::Config(format!(
                "{} programs but only {} hosts",
                programs.len(),
                cfg.topology.num_hosts
            )));
        }
        let rng = ChaCha8Rng::seed_from_u64(cfg.latency.rng_seed);
        let nodes = (0..programs.len()).map(|_| NodeRuntime::new()).collect();
        Ok(Simulation {
            cfg,
            costs,
            programs,
            nodes,
            queue: BinaryHeap::new(),
            seq: 0,
            rng,
            stats: NetStats::default(),
            now: SimTime::ZERO,
            events: 0,
        })
    }

    pub fn programs(&self) -> &[P] {
        &self.programs
    }

    pub fn into_programs(self) -> Vec<P> {
        self.programs
    }

    fn push(&mut self, time: SimTime, node: NodeId, kind: EventKind<P::Msg>) {
        let seq = self.seq;
        self.seq += 1;
        self.queue.push(Reverse(Event { time, seq, node, kind }));
    }

    fn dump(&self) -> String {
        self.programs
            .iter()
            .enumerate()
            .filter(|(_, p)| !p.is_terminal())
            .take(64)
            .map(|(i, p)| {
                format!("  node {i}: {} (inbox {})", p.describe(), self.nodes[i].inbox.len())
            })
            .collect::<Vec<_>>()
            .join("\n")
    }

    /// Runs to quiescence and returns the trace.
    pub fn run(&mut self) -> Result<Trace, SimError> {
        if self.programs.is_empty() {
            return Ok(Trace::empty());
        }
        for n in 0..self.programs.len() {
            self.push(SimTime::ZERO, n as NodeId, EventKind::Start);
        }
        while let Some(Reverse(ev)) = self.queue.pop() {
            self.now = ev.time;
            self.events += 1;
            if self.events > self.cfg.max_events {
                return Err(SimError::EventCap {
                    cap: self.cfg.max_events,
                    time: self.now,
                    dump: self.dump(),
                });
            }
            if self.cfg.progress_every > 0 && self.events.is_multiple_of(self.cfg.progress_every) {
                log::info!(
                    "{} events processed, sim time {}, queue {}",
                    self.events,
                    self.now,
                    self.queue.len()
                );
            }
            let node = ev.node;
            match ev.kind {
                EventKind::Start => self.handle(node, None)?,
                EventKind::Deliver(msg) => {
                    let rt = &mut self.nodes[node as usize];
                    if rt.busy_until <= self.now && rt.inbox.is_empty() && !rt.wake_pending {
                        self.handle(node, Some((msg, false)))?;
                    } else {
                        rt.inbox.push_back(msg);
                        if !rt.wake_pending {
                            rt.wake_pending = true;
                            let at = rt.busy_until.max(self.now);
                            self.push(at, node, EventKind::Wake);
                        }
                    }
                }
                EventKind::Wake => {
                    let rt = &mut self.nodes[node as usize];
                    rt.wake_pending = false;
                    let msg = rt.inbox.pop_front().expect("wake with empty inbox");
                    self.handle(node, Some((msg, true)))?;
                }
            }
            let rt = &mut self.nodes[node as usize];
            if !rt.inbox.is_empty() && !rt.wake_pending {
                rt.wake_pending = true;
                let at = rt.busy_until.max(self.now);
                self.push(at, node, EventKind::Wake);
            }
        }
        if self.programs.iter().any(|p| !p.is_terminal()) {
            return Err(SimError::NotQuiescent { time: self.now, dump: self.dump() });
        }
        Ok(self.finish_trace())
    }

    fn handle(&mut self, node: NodeId, msg: Option<(Message<P::Msg>, bool)>) -> Result<(), SimError> {
        let idx = node as usize;
        let start = self.now;
        let mut clock = start;
        if let Some((m, waited)) = &msg {
            let rt = &mut self.nodes[idx];
            rt.burst = if *waited { rt.burst + 1 } else { 1 };
            rt.received += 1;
            rt.stage_received += 1;
            clock += self.costs.recv_marginal(rt.burst, m.payload_bytes()) + self.costs.dispatch_per_msg;
        }
        let mut ctx = NodeCtx {
            id: node,
            num_nodes: self.programs.len(),
            clock,
            costs: &self.costs,
            multicast: self.cfg.multicast,
            outbox: Vec::new(),
            stage_changes: Vec::new(),
        };
        let program = &mut self.programs[idx];
        let result = match msg {
            Some((m, _)) => program.on_message(m, &mut ctx),
            None => program.start(&mut ctx),
        };
        let NodeCtx { clock: end, outbox, stage_changes, .. } = ctx;
        if let Err(source) = result {
            return Err(SimError::Program { node, time: start, source });
        }
        let terminal = program.is_terminal();

        let rt = &mut self.nodes[idx];
        let mut mark = start;
        for (at, stage) in stage_changes {
            rt.stage_busy += at - mark;
            mark = at;
            if stage != rt.stage {
                rt.close_stage(at);
                rt.stage = stage;
            }
        }
        rt.stage_busy += end - mark;
        rt.busy += end - start;
        rt.busy_until = end;
        if terminal && rt.terminal_at.is_none() {
            rt.terminal_at = Some(end);
        }
        for out in outbox {
            self.dispatch(node, out);
        }
        Ok(())
    }

    fn dispatch(&mut self, src: NodeId, out: Outgoing<P::Msg>) {
        let header = self.cfg.header_bytes;
        match out {
            Outgoing::Unicast { at, dst, payload } => {
                let size = payload.payload_bytes() + header;
                let (delay, tail) = self.draw_delay(src, dst, size);
                self.stats.unicast_sends += 1;
                self.account_delivery(delay, tail);
                self.count_send(src);
                let msg = Message { src, dst, size_bytes: size, sent_at: at, multicast: false, payload };
                self.push(at + delay, dst, EventKind::Deliver(msg));
            }
            Outgoing::Multicast { at, group, payload } => {
                let size = payload.payload_bytes() + header;
                self.stats.multicast_sends += 1;
                self.count_send(src);
                let n = group.len();
                let mut payload = Some(payload);
                for (i, dst) in group.into_iter().enumerate() {
                    let (delay, tail) = self.draw_delay(src, dst, size);
                    self.stats.multicast_deliveries += 1;
                    self.account_delivery(delay, tail);
                    let payload = if i + 1 == n {
                        payload.take().expect("last member")
                    } else {
                        payload.clone().expect("payload kept until last member")
                    };
                    let msg = Message { src, dst, size_bytes: size, sent_at: at, multicast: true, payload };
                    self.push(at + delay, dst, EventKind::Deliver(msg));
                }
            }
        }
    }

    fn draw_delay(&mut self, src: NodeId, dst: NodeId, size: u32) -> (SimTime, SimTime) {
        let topo = &self.cfg.topology;
        let path = topo.path(src, dst, self.seq).expect("validated at send");
        let tail = self.cfg.latency.draw(&mut self.rng);
        (topo.delay_of(&path, size) + tail, tail)
    }

    fn account_delivery(&mut self, delay: SimTime, tail: SimTime) {
        self.stats.deliveries += 1;
        if tail > SimTime::ZERO {
            self.stats.tail_hits += 1;
        }
        self.stats.record_delay(delay);
    }

    fn count_send(&mut self, src: NodeId) {
        let rt = &mut self.nodes[src as usize];
        rt.sent += 1;
        rt.stage_sent += 1;
    }

    fn finish_trace(&mut self) -> Trace {
        let mut nodes = Vec::with_capacity(self.nodes.len());
        let mut completion = SimTime::ZERO;
        for (i, rt) in self.nodes.iter_mut().enumerate() {
            let terminal_at = rt.terminal_at.unwrap_or(rt.busy_until);
            let node_completion = terminal_at.max(rt.busy_until);
            rt.close_stage(node_completion);
            completion = completion.max(terminal_at);
            nodes.push(NodeTrace {
                id: i as NodeId,
                terminal_at,
                completion: node_completion,
                busy: rt.busy,
                sent: rt.sent,
                received: rt.received,
                stages: std::mem::take(&mut rt.stages),
            });
        }
        Trace {
            completion,
            events: self.events,
            net: std::mem::take(&mut self.stats),
            nodes,
            stage_labels: P::stage_labels(),
        }
    }
}
