//! Per-connection stream scheduling: which stream transmits next.
//!
//! Two policies are provided. The default policy follows the priority tree:
//! bandwidth goes to the highest node with pending bytes, so a push child
//! (e.g. a CSS promised on the HTML stream) transmits only once its parent
//! has nothing left to send or is blocked. The interleaving policy hard-
//! switches: when the parent's transmitted body bytes reach a registered
//! offset, the parent is suspended, the associated push streams transmit to
//! completion in order, and only then does the parent resume.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::hpack::{encoded_len, HeaderList};

/// Default stream weight when no PRIORITY frame re-parents a stream (RFC 7540 §5.3.5).
pub const DEFAULT_WEIGHT: u16 = 16;
/// Default per-stream flow-control window (RFC 7540 §6.9.2).
pub const DEFAULT_INITIAL_WINDOW: u64 = 65_535;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamState {
    Open,
    Reserved,
    HalfClosed,
    Closed,
}

/// One stream in the connection's priority tree.
#[derive(Debug, Clone)]
pub struct StreamNode {
    pub id: u32,
    /// Parent stream id; 0 is the tree root.
    pub parent: u32,
    pub weight: u16,
    /// Response bytes remaining to send.
    pub pending: u64,
    /// Response bytes already handed to the wire.
    pub sent: u64,
    pub state: StreamState,
    pub is_push: bool,
    /// Data unavailable (e.g. upstream fetch); children may transmit.
    pub blocked: bool,
    /// Remaining stream-level flow-control window.
    pub window: u64,
    /// Size of the header block announced for this stream.
    pub header_len: u64,
}

impl StreamNode {
    fn sendable(&self) -> bool {
        self.pending > 0
            && !self.blocked
            && self.window > 0
            && matches!(
                self.state,
                StreamState::Open | StreamState::Reserved | StreamState::HalfClosed
            )
    }
}

/// A hard-switch point: after `offset` body bytes of `parent_stream`, the
/// streams in `push_sequence` transmit fully, in order, before the parent
/// resumes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InterleavePoint {
    pub parent_stream: u32,
    pub offset: u64,
    pub push_sequence: Vec<u32>,
}

/// Ordered (stream, bytes) chunks chosen for one send opportunity.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TransmissionPlan {
    pub chunks: Vec<(u32, u64)>,
}

impl TransmissionPlan {
    pub fn is_empty(&self) -> bool {
        self.chunks.is_empty()
    }

    pub fn total_bytes(&self) -> u64 {
        self.chunks.iter().map(|&(_, n)| n).sum()
    }
}

/// Non-DATA frames queued for the wire, in emission order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ControlFrame {
    /// Response HEADERS for a stream (header block of `len` bytes).
    Headers {
        stream_id: u32,
        len: u64,
    },
    /// PUSH_PROMISE carried on `stream_id`, announcing `promised_id`.
    PushPromise {
        stream_id: u32,
        promised_id: u32,
        len: u64,
    },
    RstStream {
        stream_id: u32,
    },
}

impl ControlFrame {
    /// Payload bytes the frame occupies on the wire.
    pub fn wire_len(&self) -> u64 {
        match *self {
            // Promised-stream id field plus header block.
            ControlFrame::PushPromise { len, .. } => len + 4,
            ControlFrame::Headers { len, .. } => len,
            ControlFrame::RstStream { .. } => 4,
        }
    }
}

/// Wire-order record of everything the scheduler has emitted; the basis for
/// byte-order assertions in tests.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WireRecord {
    Headers { stream_id: u32, len: u64 },
    PushPromise { stream_id: u32, promised_id: u32 },
    Data { stream_id: u32, len: u64 },
    RstStream { stream_id: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Policy {
    Default,
    Interleaving,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SchedError {
    #[error("protocol violation: {0}")]
    ProtocolViolation(String),
    #[error("push disabled by SETTINGS_ENABLE_PUSH=0")]
    PushDisabled,
    #[error("connection closed")]
    ConnectionClosed,
    #[error("invalid interleave point: {0}")]
    InvalidInterleave(String),
}

/// Scheduler state for one HTTP/2 connection (server side).
#[derive(Debug, Clone)]
pub struct Connection {
    streams: BTreeMap<u32, StreamNode>,
    next_client_id: u32,
    next_promised_id: u32,
    policy: Policy,
    push_enabled: bool,
    goaway: bool,
    max_frame_size: u64,
    initial_window: u64,
    connection_window: u64,
    /// Interleave points per parent stream, sorted by offset.
    points: BTreeMap<u32, Vec<InterleavePoint>>,
    /// Next unfired point index per parent.
    next_point: BTreeMap<u32, usize>,
    /// Active hard switch: (parent, sequence of promised ids, position).
    active: Option<(u32, Vec<u32>, usize)>,
    outbox: Vec<ControlFrame>,
    wire_log: Vec<WireRecord>,
}

impl Connection {
    pub fn new(policy: Policy) -> Self {
        Connection {
            streams: BTreeMap::new(),
            next_client_id: 1,
            next_promised_id: 2,
            policy,
            push_enabled: true,
            goaway: false,
            max_frame_size: crate::frame::DEFAULT_MAX_FRAME_SIZE as u64,
            initial_window: DEFAULT_INITIAL_WINDOW,
            connection_window: DEFAULT_INITIAL_WINDOW,
            points: BTreeMap::new(),
            next_point: BTreeMap::new(),
            active: None,
            outbox: Vec::new(),
            wire_log: Vec::new(),
        }
    }

    /// SETTINGS_ENABLE_PUSH from the client.
    pub fn set_push_enabled(&mut self, enabled: bool) {
        self.push_enabled = enabled;
    }

    pub fn set_initial_window(&mut self, window: u64) {
        self.initial_window = window;
        self.connection_window = self.connection_window.max(window);
    }

    pub fn set_connection_window(&mut self, window: u64) {
        self.connection_window = window;
    }

    pub fn set_max_frame_size(&mut self, size: u64) {
        self.max_frame_size = size;
    }

    pub fn max_frame_size(&self) -> u64 {
        self.max_frame_size
    }

    pub fn goaway(&mut self) {
        self.goaway = true;
    }

    pub fn stream(&self, id: u32) -> Option<&StreamNode> {
        self.streams.get(&id)
    }

    pub fn streams(&self) -> impl Iterator<Item = &StreamNode> {
        self.streams.values()
    }

    pub fn wire_log(&self) -> &[WireRecord] {
        &self.wire_log
    }

    /// Register a client-initiated stream; `body_len` is the response body
    /// this stream will transmit.
    pub fn open_stream(&mut self, headers: &HeaderList, body_len: u64) -> Result<u32, SchedError> {
        if self.goaway {
            return Err(SchedError::ConnectionClosed);
        }
        let id = self.next_client_id;
        if self.streams.contains_key(&id) {
            return Err(SchedError::ProtocolViolation(format!("stream {id} reused")));
        }
        self.next_client_id += 2;
        let header_len = encoded_len(headers) as u64;
        self.streams.insert(
            id,
            StreamNode {
                id,
                parent: 0,
                weight: DEFAULT_WEIGHT,
                pending: body_len,
                sent: 0,
                state: StreamState::Open,
                is_push: false,
                blocked: false,
                window: self.initial_window,
                header_len,
            },
        );
        self.outbox.push(ControlFrame::Headers {
            stream_id: id,
            len: header_len,
        });
        self.wire_log.push(WireRecord::Headers {
            stream_id: id,
            len: header_len,
        });
        Ok(id)
    }

    /// Announce a push on `parent`; the promised stream becomes a child of
    /// the parent in the priority tree.
    pub fn promise_push(
        &mut self,
        parent: u32,
        resource_headers: &HeaderList,
        body_len: u64,
    ) -> Result<u32, SchedError> {
        if !self.push_enabled {
            return Err(SchedError::PushDisabled);
        }
        let parent_node = self.streams.get(&parent).ok_or_else(|| {
            SchedError::ProtocolViolation(format!("unknown parent stream {parent}"))
        })?;
        if parent_node.is_push || parent.is_multiple_of(2) {
            return Err(SchedError::ProtocolViolation(format!(
                "stream {parent} is not client-initiated"
            )));
        }
        if parent_node.state == StreamState::Closed {
            return Err(SchedError::ProtocolViolation(format!(
                "parent stream {parent} is closed"
            )));
        }
        let id = self.next_promised_id;
        self.next_promised_id += 2;
        let header_len = encoded_len(resource_headers) as u64;
        self.streams.insert(
            id,
            StreamNode {
                id,
                parent,
                weight: DEFAULT_WEIGHT,
                pending: body_len,
                sent: 0,
                state: StreamState::Reserved,
                is_push: true,
                blocked: false,
                window: self.initial_window,
                header_len,
            },
        );
        self.outbox.push(ControlFrame::PushPromise {
            stream_id: parent,
            promised_id: id,
            len: header_len,
        });
        self.wire_log.push(WireRecord::PushPromise {
            stream_id: parent,
            promised_id: id,
        });
        Ok(id)
    }

    /// Cancel a promised push (client RST_STREAM); returns bytes already on
    /// the wire when the cancellation took effect.
    pub fn cancel_push(&mut self, promised: u32) -> Result<u64, SchedError> {
        let node = self
            .streams
            .get_mut(&promised)
            .ok_or_else(|| SchedError::ProtocolViolation(format!("unknown stream {promised}")))?;
        if !node.is_push || node.state == StreamState::Closed {
            return Err(SchedError::ProtocolViolation(format!(
                "stream {promised} is not a cancellable push"
            )));
        }
        node.state = StreamState::Closed;
        node.pending = 0;
        let sent = node.sent;
        self.outbox.push(ControlFrame::RstStream {
            stream_id: promised,
        });
        self.wire_log.push(WireRecord::RstStream {
            stream_id: promised,
        });
        Ok(sent)
    }

    /// Re-parent a stream, as a PRIORITY frame would (RFC 7540 §5.3.3).
    pub fn reprioritize(
        &mut self,
        id: u32,
        parent: u32,
        weight: u16,
        exclusive: bool,
    ) -> Result<(), SchedError> {
        if !self.streams.contains_key(&id) {
            return Err(SchedError::ProtocolViolation(format!(
                "unknown stream {id}"
            )));
        }
        if parent != 0 && !self.streams.contains_key(&parent) {
            return Err(SchedError::ProtocolViolation(format!(
                "unknown parent stream {parent}"
            )));
        }
        if parent == id {
            return Err(SchedError::ProtocolViolation(format!(
                "stream {id} cannot depend on itself"
            )));
        }
        // If the new parent is currently below `id`, hoist it first (§5.3.3).
        if self.is_descendant(parent, id) {
            let grand = self.streams[&id].parent;
            self.streams.get_mut(&parent).unwrap().parent = grand;
        }
        if exclusive {
            let siblings: Vec<u32> = self
                .streams
                .values()
                .filter(|s| s.parent == parent && s.id != id)
                .map(|s| s.id)
                .collect();
            for sib in siblings {
                self.streams.get_mut(&sib).unwrap().parent = id;
            }
        }
        let node = self.streams.get_mut(&id).unwrap();
        node.parent = parent;
        node.weight = weight.clamp(1, 256);
        Ok(())
    }

    fn is_descendant(&self, id: u32, ancestor: u32) -> bool {
        let mut cur = id;
        while cur != 0 {
            match self.streams.get(&cur) {
                Some(node) if node.parent == ancestor => return true,
                Some(node) => cur = node.parent,
                None => return false,
            }
        }
        false
    }

    pub fn set_blocked(&mut self, id: u32, blocked: bool) {
        if let Some(node) = self.streams.get_mut(&id) {
            node.blocked = blocked;
        }
    }

    /// WINDOW_UPDATE: stream 0 opens the connection window.
    pub fn apply_window_update(&mut self, id: u32, increment: u64) {
        if id == 0 {
            self.connection_window += increment;
        } else if let Some(node) = self.streams.get_mut(&id) {
            node.window += increment;
        }
    }

    /// Register a hard-switch point. Offsets per parent must be strictly
    /// increasing; a promised id may appear in at most one point.
    pub fn add_interleave_point(&mut self, point: InterleavePoint) -> Result<(), SchedError> {
        let parent = self.streams.get(&point.parent_stream).ok_or_else(|| {
            SchedError::InvalidInterleave(format!("unknown parent stream {}", point.parent_stream))
        })?;
        if point.offset > parent.pending + parent.sent {
            return Err(SchedError::InvalidInterleave(format!(
                "offset {} beyond parent body length {}",
                point.offset,
                parent.pending + parent.sent
            )));
        }
        for id in &point.push_sequence {
            let node = self.streams.get(id).ok_or_else(|| {
                SchedError::InvalidInterleave(format!("unknown promised stream {id}"))
            })?;
            if !node.is_push {
                return Err(SchedError::InvalidInterleave(format!(
                    "stream {id} is not a push stream"
                )));
            }
            if self
                .points
                .values()
                .flatten()
                .any(|p| p.push_sequence.contains(id))
            {
                return Err(SchedError::InvalidInterleave(format!(
                    "stream {id} already appears in an interleave point"
                )));
            }
        }
        let list = self.points.entry(point.parent_stream).or_default();
        if let Some(last) = list.last() {
            if point.offset <= last.offset {
                return Err(SchedError::InvalidInterleave(format!(
                    "offset {} not increasing past {}",
                    point.offset, last.offset
                )));
            }
        }
        let parent_id = point.parent_stream;
        list.push(point);
        // A parent already at (or past) the new offset switches right away.
        self.update_interleave_state(parent_id);
        Ok(())
    }

    /// Drain queued control frames (HEADERS, PUSH_PROMISE, RST_STREAM) in
    /// emission order.
    pub fn take_control_frames(&mut self) -> Vec<ControlFrame> {
        std::mem::take(&mut self.outbox)
    }

    pub fn has_pending_data(&self) -> bool {
        self.streams.values().any(|s| s.pending > 0)
    }

    pub fn has_output(&self) -> bool {
        !self.outbox.is_empty()
            || self.streams.values().any(StreamNode::sendable)
            || self.active.is_some()
    }

    /// Choose and commit the next chunks to transmit, up to `window_budget`
    /// bytes. An empty plan signals an idle (or stalled) connection.
    pub fn next_plan(&mut self, window_budget: u64) -> TransmissionPlan {
        let mut plan = TransmissionPlan::default();
        let mut budget = window_budget.min(self.connection_window);
        while budget > 0 {
            match self.pick_chunk(budget) {
                Some((_, 0)) => break,
                Some((id, take)) => {
                    self.commit(id, take);
                    budget -= take;
                    // Merge contiguous picks of the same stream.
                    if let Some(last) = plan.chunks.last_mut() {
                        if last.0 == id {
                            last.1 += take;
                            continue;
                        }
                    }
                    plan.chunks.push((id, take));
                }
                None => break,
            }
        }
        plan
    }

    fn commit(&mut self, id: u32, take: u64) {
        {
            let node = self.streams.get_mut(&id).unwrap();
            node.pending -= take;
            node.sent += take;
            node.window -= take;
            if node.state == StreamState::Reserved {
                node.state = StreamState::HalfClosed;
            }
            if node.pending == 0 {
                node.state = StreamState::Closed;
            }
        }
        self.connection_window -= take;
        if let Some(WireRecord::Data { stream_id, len }) = self.wire_log.last_mut() {
            if *stream_id == id {
                *len += take;
            } else {
                self.wire_log.push(WireRecord::Data {
                    stream_id: id,
                    len: take,
                });
            }
        } else {
            self.wire_log.push(WireRecord::Data {
                stream_id: id,
                len: take,
            });
        }
        self.update_interleave_state(id);
    }

    /// Fire a pending interleave point when the parent hits its offset, and
    /// retire an active sequence once it is fully transmitted.
    fn update_interleave_state(&mut self, _last_sent: u32) {
        if self.policy != Policy::Interleaving {
            return;
        }
        if let Some((parent, seq, mut pos)) = self.active.take() {
            while pos < seq.len() {
                let node = &self.streams[&seq[pos]];
                if node.state == StreamState::Closed && node.pending == 0 {
                    pos += 1;
                } else {
                    break;
                }
            }
            if pos < seq.len() {
                self.active = Some((parent, seq, pos));
                return;
            }
        }
        // No active sequence: check whether any parent just reached a point.
        for (&parent, list) in &self.points {
            let next = *self.next_point.get(&parent).unwrap_or(&0);
            if next >= list.len() {
                continue;
            }
            let node = match self.streams.get(&parent) {
                Some(n) => n,
                None => continue,
            };
            if node.sent >= list[next].offset {
                let seq = list[next].push_sequence.clone();
                self.next_point.insert(parent, next + 1);
                self.active = Some((parent, seq, 0));
                // Skip members already cancelled or drained.
                self.update_interleave_state(parent);
                return;
            }
        }
    }

    fn pick_chunk(&self, budget: u64) -> Option<(u32, u64)> {
        // An active hard switch owns the wire for its subtree: only the
        // current sequence member may send; everything else under the same
        // parent waits.
        let (suspended_parent, seq_member) = match &self.active {
            Some((parent, seq, pos)) => (Some(*parent), seq.get(*pos).copied()),
            None => (None, None),
        };
        if let Some(member) = seq_member {
            let node = &self.streams[&member];
            if node.sendable() {
                return Some((member, self.chunk_size(node, budget)));
            }
            // Flow-control stall mid-sequence: the parent stays suspended;
            // fall through so unrelated streams can use the link.
        }

        let eligible: Vec<&StreamNode> = self
            .streams
            .values()
            .filter(|s| s.sendable())
            .filter(|s| Some(s.id) != seq_member)
            .filter(|s| {
                // Under a hard switch the suspended parent and its other
                // push children are frozen.
                match suspended_parent {
                    Some(p) => s.id != p && s.parent != p,
                    None => true,
                }
            })
            .filter(|s| !self.has_sendable_ancestor(s))
            .collect();

        // Normalized-service round robin: least sent/weight first, lowest id
        // on ties. Over long plans this grants siblings bytes proportional
        // to their weights within one chunk granularity.
        let node = eligible.into_iter().min_by(|a, b| {
            let ka = a.sent as f64 / a.weight as f64;
            let kb = b.sent as f64 / b.weight as f64;
            ka.partial_cmp(&kb).unwrap().then(a.id.cmp(&b.id))
        })?;
        Some((node.id, self.chunk_size(node, budget)))
    }

    fn has_sendable_ancestor(&self, node: &StreamNode) -> bool {
        let mut cur = node.parent;
        while cur != 0 {
            match self.streams.get(&cur) {
                Some(anc) => {
                    if anc.sendable() {
                        return true;
                    }
                    cur = anc.parent;
                }
                None => break,
            }
        }
        false
    }

    fn chunk_size(&self, node: &StreamNode, budget: u64) -> u64 {
        let mut take = node
            .pending
            .min(node.window)
            .min(self.max_frame_size)
            .min(budget);
        // Stop exactly at the next interleave offset so the switch is hard.
        if self.policy == Policy::Interleaving {
            if let Some(list) = self.points.get(&node.id) {
                let next = *self.next_point.get(&node.id).unwrap_or(&0);
                if next < list.len() && node.sent < list[next].offset {
                    take = take.min(list[next].offset - node.sent);
                }
            }
        }
        take
    }
}
