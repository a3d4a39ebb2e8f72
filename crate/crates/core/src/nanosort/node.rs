use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{PhaseTag, SortRecord, Step, Tagged, RECORD_BYTES};
use crate::median_tree::TreeShape;
use crate::netsim::{ComputeKind, Message, NodeCtx, NodeId, NodeProgram, Payload, ProgramError};
use crate::pivot::{bucket_of, candidate_indices};

/// Bytes per routed key: key, origin tag and phase word.
pub const KEY_TRANSFER_BYTES: u32 = 24;
const CONTROL_BYTES: u32 = 16;

#[derive(Clone, Debug, PartialEq)]
pub enum NsMsg {
    /// Input to tier `tier` of median tree `tree`; `None` from nodes without keys.
    Candidate { level: u32, tree: u16, tier: u8, value: Option<Tagged> },
    Pivot { level: u32, tree: u16, value: Option<Tagged> },
    Keys { level: u32, keys: Vec<Tagged> },
    Ack { level: u32 },
    RouteDone { level: u32, tier: u8 },
    Go { level: u32 },
    ValueRequest { pos: u32, slot: u32 },
    ValueReply { pos: u32, record: SortRecord },
}

impl NsMsg {
    /// Phase the message belongs to. Value messages are tagged with `final_level`.
    pub fn phase(&self, final_level: u32) -> PhaseTag {
        let (level, step) = match self {
            NsMsg::Candidate { level, tier, .. } => (*level, Step::MedianLevel(*tier)),
            NsMsg::Pivot { level, .. } => (*level, Step::Broadcast),
            NsMsg::Keys { level, .. } | NsMsg::Ack { level } | NsMsg::RouteDone { level, .. } | NsMsg::Go { level } => {
                (*level, Step::Route)
            }
            NsMsg::ValueRequest { .. } | NsMsg::ValueReply { .. } => (final_level, Step::ValueShuffle),
        };
        PhaseTag { level, step }
    }
}

impl Payload for NsMsg {
    fn payload_bytes(&self) -> u32 {
        match self {
            NsMsg::Keys { keys, .. } => KEY_TRANSFER_BYTES * keys.len() as u32,
            NsMsg::ValueReply { .. } => RECORD_BYTES,
            _ => CONTROL_BYTES,
        }
    }
}

/// Per-node state machine.
pub struct SortNode {
    id: NodeId,
    b: usize,
    r: u32,
    fan_in: usize,
    rng: ChaCha8Rng,
    level: u32,
    step: Step,
    /// Records that originated here; served to value requests.
    store: Vec<SortRecord>,
    keys: Vec<Tagged>,
    incoming: Vec<Tagged>,
    buffer: BTreeMap<u32, Vec<Message<NsMsg>>>,
    group_start: NodeId,
    group_size: usize,
    tree_depth: usize,
    slots: Vec<(u16, u8, Vec<Option<Tagged>>)>,
    agg_pending: usize,
    pivots: Vec<Option<Tagged>>,
    pivot_known: Vec<bool>,
    pivots_known: usize,
    outstanding_acks: usize,
    done_counts: Vec<usize>,
    output: Vec<Option<SortRecord>>,
    values_pending: usize,
    drop_value_replies: usize,
    /// Keys held at the start of each level.
    pub level_counts: Vec<usize>,
    /// Sort-protocol messages handled from nodes outside the current group.
    pub foreign_messages: u64,
}

/// Tree id of the route-completion tree; pivot trees use `0..b-1`.
fn done_tree_id(b: usize) -> u16 {
    (b - 1) as u16
}

impl SortNode {
    pub fn new(id: NodeId, b: usize, r: u32, fan_in: usize, seed: u64, store: Vec<SortRecord>) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(id as u64 + 1);
        let keys = store
            .iter()
            .enumerate()
            .map(|(i, rec)| Tagged { key: rec.key, origin: id, slot: i as u32 })
            .collect();
        SortNode {
            id,
            b,
            r,
            fan_in,
            rng,
            level: 0,
            step: Step::Shuffle,
            store,
            keys,
            incoming: Vec::new(),
            buffer: BTreeMap::new(),
            group_start: 0,
            group_size: 0,
            tree_depth: 0,
            slots: Vec::new(),
            agg_pending: 0,
            pivots: Vec::new(),
            pivot_known: Vec::new(),
            pivots_known: 0,
            outstanding_acks: 0,
            done_counts: Vec::new(),
            output: Vec::new(),
            values_pending: 0,
            drop_value_replies: 0,
            level_counts: Vec::new(),
            foreign_messages: 0,
        }
    }

    /// Test hook: lose the value carried by the next `n` replies.
    pub fn inject_dropped_values(&mut self, n: usize) {
        self.drop_value_replies = n;
    }

    pub fn phase(&self) -> PhaseTag {
        PhaseTag { level: self.level, step: self.step }
    }

    /// Final records, in order. Missing values are reported as zeroed.
    pub fn take_output(&mut self) -> Vec<SortRecord> {
        std::mem::take(&mut self.output).into_iter().flatten().collect()
    }

    fn local(&self) -> u32 {
        self.id - self.group_start
    }

    fn shape(&self, tree: u16) -> TreeShape {
        TreeShape { num_leaves: self.group_size, fan_in: self.fan_in, rotation: tree as usize, depth: self.tree_depth }
    }

    fn set_step(&mut self, step: Step, ctx: &mut NodeCtx<'_, NsMsg>) {
        self.step = step;
        ctx.set_stage(step.stage_id());
    }

    fn group_peers(&self) -> Vec<NodeId> {
        (self.group_start..self.group_start + self.group_size as NodeId).filter(|&n| n != self.id).collect()
    }

    fn enter_level(&mut self, ctx: &mut NodeCtx<'_, NsMsg>) -> Result<(), ProgramError> {
        self.level_counts.push(self.keys.len());
        let g = self.b.pow(self.r - self.level);
        self.group_size = g;
        self.group_start = self.id / g as NodeId * g as NodeId;
        if g == 1 {
            return self.start_values(ctx);
        }
        self.set_step(Step::Candidates, ctx);
        ctx.compute(ComputeKind::Sort, self.keys.len() as u64);
        self.keys.sort_unstable();
        let candidates: Vec<Option<Tagged>> = match candidate_indices(self.b, self.keys.len(), &mut self.rng) {
            Some(idx) => idx.into_iter().map(|i| Some(self.keys[i])).collect(),
            None => vec![None; self.b - 1],
        };

        self.tree_depth = TreeShape::new(g, self.fan_in, 0).expect("valid shape").depth;
        self.slots.clear();
        self.pivots = vec![None; self.b - 1];
        self.pivot_known = vec![false; self.b - 1];
        self.pivots_known = 0;
        self.outstanding_acks = 0;
        self.done_counts = vec![0; self.tree_depth];
        let local = self.local();
        self.agg_pending = (0..self.b as u16 - 1)
            .map(|j| {
                let s = self.shape(j);
                (0..self.tree_depth).filter(|&t| s.aggregates(t, local)).count()
            })
            .sum();

        self.set_step(if self.agg_pending > 0 { Step::MedianLevel(0) } else { Step::Broadcast }, ctx);
        for (j, c) in candidates.into_iter().enumerate() {
            self.tree_forward(ctx, j as u16, 0, c)?;
        }
        Ok(())
    }

    /// Places `value` as a member value at `tier` of tree `tree`.
    fn tree_forward(
        &mut self,
        ctx: &mut NodeCtx<'_, NsMsg>,
        tree: u16,
        tier: usize,
        value: Option<Tagged>,
    ) -> Result<(), ProgramError> {
        let shape = self.shape(tree);
        let local = self.local();
        if tier == shape.depth {
            ctx.broadcast(&self.group_peers(), NsMsg::Pivot { level: self.level, tree, value })?;
            self.learn_pivot(ctx, tree, value)
        } else if shape.aggregates(tier, local) {
            self.tree_put(ctx, tree, tier, value)
        } else {
            let parent = shape.parent(tier, local).expect("member of the tier") + self.group_start;
            ctx.send(parent, NsMsg::Candidate { level: self.level, tree, tier: tier as u8, value })?;
            Ok(())
        }
    }

    fn tree_put(
        &mut self,
        ctx: &mut NodeCtx<'_, NsMsg>,
        tree: u16,
        tier: usize,
        value: Option<Tagged>,
    ) -> Result<(), ProgramError> {
        let shape = self.shape(tree);
        let need = shape
            .block_len(tier, self.local())
            .ok_or_else(|| ProgramError::Protocol(format!("node is not in tree {tree} at tier {tier}")))?;
        let pos = match self.slots.iter().position(|s| s.0 == tree && s.1 as usize == tier) {
            Some(p) => p,
            None => {
                self.slots.push((tree, tier as u8, Vec::with_capacity(need)));
                self.slots.len() - 1
            }
        };
        self.slots[pos].2.push(value);
        if self.slots[pos].2.len() < need {
            return Ok(());
        }
        let (_, _, values) = self.slots.swap_remove(pos);
        let mut present: Vec<Tagged> = values.into_iter().flatten().collect();
        ctx.compute(ComputeKind::Sort, present.len() as u64);
        present.sort_unstable();
        let median = (!present.is_empty()).then(|| present[(present.len() - 1) / 2]);
        self.agg_pending -= 1;
        let next = if self.agg_pending == 0 { Step::Broadcast } else { Step::MedianLevel(tier as u8 + 1) };
        if next > self.step {
            self.set_step(next, ctx);
        }
        self.tree_forward(ctx, tree, tier + 1, median)
    }

    fn learn_pivot(&mut self, ctx: &mut NodeCtx<'_, NsMsg>, tree: u16, value: Option<Tagged>) -> Result<(), ProgramError> {
        let j = tree as usize;
        if j >= self.pivots.len() || self.pivot_known[j] {
            return Err(ProgramError::Protocol(format!("unexpected pivot {j} at {}", self.phase())));
        }
        self.pivot_known[j] = true;
        self.pivots[j] = value;
        self.pivots_known += 1;
        if self.pivots_known == self.b - 1 {
            self.route(ctx)?;
        }
        Ok(())
    }

    fn route(&mut self, ctx: &mut NodeCtx<'_, NsMsg>) -> Result<(), ProgramError> {
        self.set_step(Step::Route, ctx);
        if !self.keys.is_empty() {
            let pivots: Vec<Tagged> = self.pivots.iter().flatten().copied().collect();
            if pivots.len() != self.b - 1 {
                return Err(ProgramError::Protocol("empty pivot for a group holding keys".into()));
            }
            ctx.compute(ComputeKind::ScanMin, self.keys.len() as u64);
            let sub = (self.group_size / self.b) as NodeId;
            let mut batches: BTreeMap<NodeId, Vec<Tagged>> = BTreeMap::new();
            for k in std::mem::take(&mut self.keys) {
                let bucket = bucket_of(&k, &pivots) as NodeId;
                let dst = self.group_start + bucket * sub + self.rng.gen_range(0..sub);
                if dst == self.id {
                    self.incoming.push(k);
                } else {
                    batches.entry(dst).or_default().push(k);
                }
            }
            for (dst, keys) in batches {
                ctx.send(dst, NsMsg::Keys { level: self.level, keys })?;
                self.outstanding_acks += 1;
            }
        }
        if self.outstanding_acks == 0 {
            self.done_forward(ctx, 0)?;
        }
        Ok(())
    }

    fn done_forward(&mut self, ctx: &mut NodeCtx<'_, NsMsg>, tier: usize) -> Result<(), ProgramError> {
        let shape = self.shape(done_tree_id(self.b));
        let local = self.local();
        if tier == shape.depth {
            ctx.broadcast(&self.group_peers(), NsMsg::Go { level: self.level })?;
            self.next_level(ctx)
        } else if shape.aggregates(tier, local) {
            self.done_counts[tier] += 1;
            if self.done_counts[tier] == shape.block_len(tier, local).expect("member") {
                self.done_forward(ctx, tier + 1)
            } else {
                Ok(())
            }
        } else {
            let parent = shape.parent(tier, local).expect("member of the tier") + self.group_start;
            ctx.send(parent, NsMsg::RouteDone { level: self.level, tier: tier as u8 })?;
            Ok(())
        }
    }

    fn next_level(&mut self, ctx: &mut NodeCtx<'_, NsMsg>) -> Result<(), ProgramError> {
        self.keys = std::mem::take(&mut self.incoming);
        self.level += 1;
        self.enter_level(ctx)?;
        if let Some(pending) = self.buffer.remove(&self.level) {
            for m in pending {
                self.dispatch(m, ctx)?;
            }
        }
        Ok(())
    }

    fn start_values(&mut self, ctx: &mut NodeCtx<'_, NsMsg>) -> Result<(), ProgramError> {
        self.set_step(Step::ValueShuffle, ctx);
        ctx.compute(ComputeKind::Sort, self.keys.len() as u64);
        self.keys.sort_unstable();
        self.output = vec![None; self.keys.len()];
        for pos in 0..self.keys.len() {
            let k = self.keys[pos];
            if k.origin == self.id {
                self.output[pos] = Some(self.store[k.slot as usize].clone());
            } else {
                ctx.send(k.origin, NsMsg::ValueRequest { pos: pos as u32, slot: k.slot })?;
                self.values_pending += 1;
            }
        }
        if self.values_pending == 0 {
            self.set_step(Step::Done, ctx);
        }
        Ok(())
    }

    /// Handles a message tagged with the current level.
    fn dispatch(&mut self, msg: Message<NsMsg>, ctx: &mut NodeCtx<'_, NsMsg>) -> Result<(), ProgramError> {
        let src = msg.src;
        if !matches!(msg.payload, NsMsg::ValueReply { .. })
            && !(self.group_start..self.group_start + self.group_size as NodeId).contains(&src)
        {
            self.foreign_messages += 1;
        }
        match msg.payload {
            NsMsg::Candidate { tree, tier, value, .. } => self.tree_put(ctx, tree, tier as usize, value),
            NsMsg::Pivot { tree, value, .. } => self.learn_pivot(ctx, tree, value),
            NsMsg::Keys { level, keys } => {
                self.incoming.extend(keys);
                ctx.send(src, NsMsg::Ack { level })?;
                Ok(())
            }
            NsMsg::Ack { .. } => {
                if self.outstanding_acks == 0 {
                    return Err(ProgramError::Protocol("unexpected ack".into()));
                }
                self.outstanding_acks -= 1;
                if self.outstanding_acks == 0 {
                    self.done_forward(ctx, 0)?;
                }
                Ok(())
            }
            NsMsg::RouteDone { tier, .. } => {
                let shape = self.shape(done_tree_id(self.b));
                if !shape.aggregates(tier as usize, self.local()) {
                    return Err(ProgramError::Protocol(format!("route report for tier {tier} at a non-aggregator")));
                }
                self.done_counts[tier as usize] += 1;
                if self.done_counts[tier as usize] == shape.block_len(tier as usize, self.local()).expect("member") {
                    self.done_forward(ctx, tier as usize + 1)?;
                }
                Ok(())
            }
            NsMsg::Go { .. } => self.next_level(ctx),
            NsMsg::ValueReply { pos, mut record } => {
                let slot = self
                    .output
                    .get_mut(pos as usize)
                    .filter(|s| s.is_none())
                    .ok_or_else(|| ProgramError::Protocol(format!("unexpected value for position {pos}")))?;
                if self.drop_value_replies > 0 {
                    self.drop_value_replies -= 1;
                    record.value = [0; super::VALUE_BYTES];
                }
                *slot = Some(record);
                self.values_pending -= 1;
                if self.values_pending == 0 {
                    self.set_step(Step::Done, ctx);
                }
                Ok(())
            }
            NsMsg::ValueRequest { .. } => unreachable!("served on arrival"),
        }
    }
}

impl NodeProgram for SortNode {
    type Msg = NsMsg;

    fn start(&mut self, ctx: &mut NodeCtx<'_, NsMsg>) -> Result<(), ProgramError> {
        self.enter_level(ctx)
    }

    fn on_message(&mut self, msg: Message<NsMsg>, ctx: &mut NodeCtx<'_, NsMsg>) -> Result<(), ProgramError> {
        if let NsMsg::ValueRequest { pos, slot } = msg.payload {
            let record = self
                .store
                .get(slot as usize)
                .cloned()
                .ok_or_else(|| ProgramError::Protocol(format!("request for missing slot {slot}")))?;
            ctx.send(msg.src, NsMsg::ValueReply { pos, record })?;
            return Ok(());
        }
        let tag = msg.payload.phase(self.r);
        if tag.level > self.level {
            self.buffer.entry(tag.level).or_default().push(msg);
            Ok(())
        } else if tag.level < self.level {
            Err(ProgramError::Protocol(format!("message for {tag} arrived at {}", self.phase())))
        } else {
            self.dispatch(msg, ctx)
        }
    }

    fn is_terminal(&self) -> bool {
        self.step == Step::Done
    }

    fn describe(&self) -> String {
        format!(
            "{} keys={} incoming={} acks={} pivots={}/{} values_pending={} buffered={}",
            self.phase(),
            self.keys.len(),
            self.incoming.len(),
            self.outstanding_acks,
            self.pivots_known,
            self.b.saturating_sub(1),
            self.values_pending,
            self.buffer.values().map(Vec::len).sum::<usize>()
        )
    }

    fn stage_labels() -> Vec<String> {
        Step::labels()
    }
}
