//! Deterministic network simulation: replays an archive against a simulated
//! access link (fluid serialization plus propagation), drives the per-
//! connection scheduler and the browser model, and records an event
//! timeline from which page metrics are computed.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap, VecDeque};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::archive::{Archive, RecordedExchange, ResourceType};
use crate::browser::{BrowserConfig, DeliveryEvent, PageState};
use crate::scheduler::{Connection, ControlFrame, InterleavePoint, Policy};
use crate::strategy::{apply_rewrite, PushStrategy};

/// Access-link parameters. Serialization happens at the link rate; each
/// direction adds half the round-trip time of propagation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkConfig {
    pub rtt_ms: f64,
    pub downlink_bps: f64,
    pub uplink_bps: f64,
    /// Round trips spent on TCP + TLS establishment before the first request.
    pub handshake_rtts: f64,
    /// Congestion-window start for slow start; None disables the ramp.
    #[serde(default)]
    pub initial_cwnd: Option<u64>,
    /// Half-width of the uniform per-connection RTT perturbation.
    #[serde(default)]
    pub jitter_ms: f64,
}

/// Named link presets.
pub fn configure_presets() -> BTreeMap<String, LinkConfig> {
    let mut presets = BTreeMap::new();
    presets.insert(
        "dsl".to_string(),
        LinkConfig {
            rtt_ms: 50.0,
            downlink_bps: 16_000_000.0,
            uplink_bps: 1_000_000.0,
            handshake_rtts: 2.0,
            initial_cwnd: None,
            jitter_ms: 0.0,
        },
    );
    presets.insert(
        "cable".to_string(),
        LinkConfig {
            rtt_ms: 20.0,
            downlink_bps: 50_000_000.0,
            uplink_bps: 10_000_000.0,
            handshake_rtts: 2.0,
            initial_cwnd: None,
            jitter_ms: 0.0,
        },
    );
    presets.insert(
        "lte".to_string(),
        LinkConfig {
            rtt_ms: 80.0,
            downlink_bps: 12_000_000.0,
            uplink_bps: 3_000_000.0,
            handshake_rtts: 2.0,
            initial_cwnd: None,
            jitter_ms: 0.0,
        },
    );
    presets
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    /// Request left the client (after uplink serialization).
    Send,
    /// First bytes of a response reached the client.
    FirstByte,
    /// A chunk (data or header block) reached the client.
    Delivered,
    StreamComplete,
    ConnectEnd,
    BrowserEvent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimelineEvent {
    pub time_ms: f64,
    pub kind: EventKind,
    pub stream_id: u32,
    pub bytes: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub url: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timeline {
    pub events: Vec<TimelineEvent>,
    pub timed_out: bool,
}

impl Timeline {
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for event in &self.events {
            out.push_str(&serde_json::to_string(event).unwrap());
            out.push('\n');
        }
        out
    }

    /// Accounting bytes (header block plus body) delivered per stream id.
    pub fn delivered_per_stream(&self) -> BTreeMap<u32, u64> {
        let mut per = BTreeMap::new();
        for event in &self.events {
            if event.kind == EventKind::Delivered {
                *per.entry(event.stream_id).or_insert(0) += event.bytes;
            }
        }
        per
    }

    /// Bytes delivered on server-initiated (even-id) streams.
    pub fn bytes_pushed(&self) -> u64 {
        self.events
            .iter()
            .filter(|e| e.kind == EventKind::Delivered && e.stream_id % 2 == 0 && e.stream_id != 0)
            .map(|e| e.bytes)
            .sum()
    }

    /// Ordered (stream, bytes) data chunks delivered for one url's connection;
    /// used by byte-order assertions.
    pub fn delivered_chunks(&self) -> Vec<(u32, u64)> {
        self.events
            .iter()
            .filter(|e| e.kind == EventKind::Delivered && e.label.is_none())
            .map(|e| (e.stream_id, e.bytes))
            .collect()
    }
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("archive has no base document")]
    NoBaseDocument,
    #[error("invalid base url: {0}")]
    BadUrl(#[from] url::ParseError),
    #[error("html rewrite failed: {0}")]
    Rewrite(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunConfig {
    pub link: LinkConfig,
    pub browser: BrowserConfig,
    pub seed: u64,
    pub timeout_ms: f64,
}

impl RunConfig {
    pub fn new(link: LinkConfig, seed: u64) -> Self {
        RunConfig {
            link,
            browser: BrowserConfig::default(),
            seed,
            timeout_ms: 120_000.0,
        }
    }
}

fn type_weight(resource_type: ResourceType) -> u16 {
    match resource_type {
        ResourceType::Html | ResourceType::Css => 256,
        ResourceType::Js | ResourceType::Font => 220,
        ResourceType::Image | ResourceType::Other => 110,
    }
}

const FRAME_OVERHEAD: u64 = 9;
const EPS: f64 = 1e-6;
/// Effectively unbounded flow-control windows; the link is the bottleneck.
const WIDE_WINDOW: u64 = 1 << 40;

fn ser_ms(bytes: u64, bps: f64) -> f64 {
    bytes as f64 * 8_000.0 / bps
}

#[derive(Debug, Clone)]
enum WireItem {
    Control(ControlFrame),
    Data {
        stream_id: u32,
        len: u64,
        offset: u64,
    },
}

impl WireItem {
    fn wire_len(&self) -> u64 {
        match self {
            WireItem::Control(frame) => frame.wire_len() + FRAME_OVERHEAD,
            WireItem::Data { len, .. } => len + FRAME_OVERHEAD,
        }
    }
}

#[derive(Debug, Clone)]
struct StreamMeta {
    url: String,
    body_len: u64,
    header_delivered: bool,
    body_delivered: u64,
    /// Bytes already handed to the wire queue (slicing offset).
    sched_offset: u64,
    complete: bool,
    first_byte: bool,
}

#[derive(Debug)]
struct SlowStart {
    window: u64,
    available: u64,
    epoch_end: f64,
    rtt_ms: f64,
}

impl SlowStart {
    fn refill(&mut self, now: f64) {
        while now + EPS >= self.epoch_end {
            self.window = self.window.saturating_mul(2);
            self.available = self.window;
            self.epoch_end += self.rtt_ms;
        }
    }
}

#[derive(Debug)]
struct ConnState {
    ip: String,
    conn: Connection,
    ready_at: f64,
    rtt_ms: f64,
    queue: VecDeque<WireItem>,
    streams: BTreeMap<u32, StreamMeta>,
    slow_start: Option<SlowStart>,
}

#[derive(Debug)]
enum Ev {
    UplinkPump,
    RequestAtServer { conn: usize, url: String },
    DownlinkPump,
    Arrive { conn: usize, item: WireItem },
    BrowserWake,
}

struct Scheduled {
    time: f64,
    seq: u64,
    ev: Ev,
}

impl PartialEq for Scheduled {
    fn eq(&self, other: &Self) -> bool {
        self.time == other.time && self.seq == other.seq
    }
}
impl Eq for Scheduled {}
impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Scheduled {
    fn cmp(&self, other: &Self) -> Ordering {
        // BinaryHeap is a max-heap; invert for earliest-first.
        other
            .time
            .partial_cmp(&self.time)
            .unwrap()
            .then(other.seq.cmp(&self.seq))
    }
}

#[derive(Debug, Clone)]
struct PendingRequest {
    url: String,
    conn: usize,
}

struct Sim<'a> {
    archive: &'a Archive,
    strategy: &'a PushStrategy,
    link: LinkConfig,
    base_url: String,
    base_ip: String,
    /// Bodies overridden by the HTML rewrite.
    bodies: BTreeMap<String, Vec<u8>>,
    browser: PageState,
    conns: Vec<ConnState>,
    conn_by_ip: BTreeMap<String, usize>,
    base_stream: Option<(usize, u32)>,
    pending: VecDeque<PendingRequest>,
    uplink_free: f64,
    downlink_free: f64,
    rr_cursor: usize,
    heap: BinaryHeap<Scheduled>,
    seq: u64,
    rng: ChaCha20Rng,
    timeline: Timeline,
    onload_seen: bool,
}

impl<'a> Sim<'a> {
    fn schedule(&mut self, time: f64, ev: Ev) {
        self.seq += 1;
        self.heap.push(Scheduled {
            time,
            seq: self.seq,
            ev,
        });
    }

    fn record(
        &mut self,
        time_ms: f64,
        kind: EventKind,
        stream_id: u32,
        bytes: u64,
        url: Option<String>,
        label: Option<String>,
    ) {
        self.timeline.events.push(TimelineEvent {
            time_ms,
            kind,
            stream_id,
            bytes,
            url,
            label,
        });
    }

    fn body_len(&self, exchange: &RecordedExchange) -> u64 {
        self.bodies
            .get(&exchange.url())
            .map(|b| b.len() as u64)
            .unwrap_or(exchange.response.body.len() as u64)
    }

    fn ensure_conn(&mut self, now: f64, ip: &str) -> usize {
        if let Some(&idx) = self.conn_by_ip.get(ip) {
            return idx;
        }
        let jitter = if self.link.jitter_ms > 0.0 {
            self.rng
                .gen_range(-self.link.jitter_ms..=self.link.jitter_ms)
        } else {
            0.0
        };
        let rtt_ms = (self.link.rtt_ms + jitter).max(1.0);
        let policy = if ip == self.base_ip && self.strategy.uses_interleaving() {
            Policy::Interleaving
        } else {
            Policy::Default
        };
        let mut conn = Connection::new(policy);
        conn.set_initial_window(WIDE_WINDOW);
        conn.set_connection_window(WIDE_WINDOW);
        let ready_at = now + self.link.handshake_rtts * rtt_ms;
        let slow_start = self.link.initial_cwnd.map(|cwnd| SlowStart {
            window: cwnd,
            available: cwnd,
            epoch_end: ready_at + rtt_ms,
            rtt_ms,
        });
        let idx = self.conns.len();
        self.conns.push(ConnState {
            ip: ip.to_string(),
            conn,
            ready_at,
            rtt_ms,
            queue: VecDeque::new(),
            streams: BTreeMap::new(),
            slow_start,
        });
        self.conn_by_ip.insert(ip.to_string(), idx);
        self.record(
            ready_at,
            EventKind::ConnectEnd,
            0,
            0,
            None,
            Some(ip.to_string()),
        );
        idx
    }

    fn issue_request(&mut self, now: f64, url: &str) {
        let Some(exchange) = self.archive.find_by_url(url) else {
            return;
        };
        let Some(group) = self
            .archive
            .group_for_authority(&exchange.request.authority)
        else {
            return;
        };
        let ip = group.ip.clone();
        let conn = self.ensure_conn(now, &ip);
        self.pending.push_back(PendingRequest {
            url: url.to_string(),
            conn,
        });
        let at = now.max(self.uplink_free);
        self.schedule(at, Ev::UplinkPump);
    }

    fn uplink_pump(&mut self, now: f64) {
        if now + EPS < self.uplink_free {
            return;
        }
        let ready_pos = self
            .pending
            .iter()
            .position(|p| self.conns[p.conn].ready_at <= now + EPS);
        let Some(pos) = ready_pos else {
            if let Some(next) = self
                .pending
                .iter()
                .map(|p| self.conns[p.conn].ready_at)
                .min_by(|a, b| a.partial_cmp(b).unwrap())
            {
                self.schedule(next, Ev::UplinkPump);
            }
            return;
        };
        let request = self.pending.remove(pos).unwrap();
        let exchange = self.archive.find_by_url(&request.url).unwrap();
        let req_len = crate::hpack::encoded_len(&exchange.request.headers) as u64 + FRAME_OVERHEAD;
        let dur = ser_ms(req_len, self.link.uplink_bps);
        self.uplink_free = now + dur;
        let sent_at = now + dur;
        self.record(
            sent_at,
            EventKind::Send,
            0,
            req_len,
            Some(request.url.clone()),
            None,
        );
        let arrive = sent_at + self.conns[request.conn].rtt_ms / 2.0;
        self.schedule(
            arrive,
            Ev::RequestAtServer {
                conn: request.conn,
                url: request.url,
            },
        );
        if !self.pending.is_empty() {
            self.schedule(self.uplink_free, Ev::UplinkPump);
        }
    }

    fn request_at_server(&mut self, now: f64, conn_idx: usize, url: &str) {
        let Some(exchange) = self.archive.find_by_url(url) else {
            return;
        };
        let body_len = self.body_len(exchange);
        let conn = &mut self.conns[conn_idx];
        let Ok(stream_id) = conn.conn.open_stream(&exchange.response.headers, body_len) else {
            return;
        };
        conn.streams.insert(
            stream_id,
            StreamMeta {
                url: url.to_string(),
                body_len,
                header_delivered: false,
                body_delivered: 0,
                sched_offset: 0,
                complete: false,
                first_byte: false,
            },
        );
        if url == self.base_url {
            self.base_stream = Some((conn_idx, stream_id));
            self.apply_strategy(conn_idx, stream_id);
        } else {
            // Subresources hang off the base document in the priority tree,
            // weighted by resource type.
            let weight = type_weight(exchange.resource_type);
            let parent = match self.base_stream {
                Some((base_conn, base_sid)) if base_conn == conn_idx => base_sid,
                _ => 0,
            };
            let _ = self.conns[conn_idx]
                .conn
                .reprioritize(stream_id, parent, weight, false);
        }
        self.schedule(now.max(self.downlink_free), Ev::DownlinkPump);
    }

    fn apply_strategy(&mut self, conn_idx: usize, base_sid: u32) {
        let mut directives = self.strategy.directives.clone();
        directives.sort_by_key(|d| d.rank);
        let mut sequences: BTreeMap<u64, Vec<u32>> = BTreeMap::new();
        for directive in &directives {
            let Some(exchange) = self.archive.find_by_url(&directive.resource_url) else {
                continue;
            };
            let Some(group) = self
                .archive
                .group_for_authority(&exchange.request.authority)
            else {
                continue;
            };
            if group.ip != self.conns[conn_idx].ip {
                continue;
            }
            let body_len = self.body_len(exchange);
            let conn = &mut self.conns[conn_idx];
            let Ok(promised) =
                conn.conn
                    .promise_push(base_sid, &exchange.request.headers, body_len)
            else {
                continue;
            };
            conn.streams.insert(
                promised,
                StreamMeta {
                    url: directive.resource_url.clone(),
                    body_len,
                    header_delivered: false,
                    body_delivered: 0,
                    sched_offset: 0,
                    complete: false,
                    first_byte: false,
                },
            );
            let _ = conn.conn.reprioritize(
                promised,
                base_sid,
                type_weight(exchange.resource_type),
                false,
            );
            if let Some(offset) = directive.interleave_offset {
                sequences.entry(offset).or_default().push(promised);
            }
        }
        for (offset, push_sequence) in sequences {
            let _ = self.conns[conn_idx]
                .conn
                .add_interleave_point(InterleavePoint {
                    parent_stream: base_sid,
                    offset,
                    push_sequence,
                });
        }
    }

    /// Refill a connection's wire queue from control frames, then the
    /// scheduler's next transmission plan.
    fn refill_queue(&mut self, now: f64, conn_idx: usize) {
        let quantum = {
            let conn = &mut self.conns[conn_idx];
            for frame in conn.conn.take_control_frames() {
                conn.queue.push_back(WireItem::Control(frame));
            }
            if !conn.queue.is_empty() {
                return;
            }
            let mut quantum = conn.conn.max_frame_size();
            if let Some(ss) = conn.slow_start.as_mut() {
                ss.refill(now);
                if ss.available == 0 {
                    let epoch_end = ss.epoch_end;
                    self.schedule(epoch_end, Ev::DownlinkPump);
                    return;
                }
                quantum = quantum.min(ss.available);
            }
            quantum
        };
        let conn = &mut self.conns[conn_idx];
        let plan = conn.conn.next_plan(quantum);
        let mut total = 0;
        for (stream_id, len) in plan.chunks {
            let meta = conn.streams.get_mut(&stream_id).unwrap();
            let offset = meta.sched_offset;
            meta.sched_offset += len;
            total += len;
            conn.queue.push_back(WireItem::Data {
                stream_id,
                len,
                offset,
            });
        }
        if let Some(ss) = conn.slow_start.as_mut() {
            ss.available = ss.available.saturating_sub(total);
        }
    }

    fn downlink_pump(&mut self, now: f64) {
        if now + EPS < self.downlink_free {
            return;
        }
        let n = self.conns.len();
        for step in 0..n {
            let idx = (self.rr_cursor + step) % n;
            if self.conns[idx].ready_at > now + EPS {
                continue;
            }
            if self.conns[idx].queue.is_empty() && self.conns[idx].conn.has_output() {
                self.refill_queue(now, idx);
            }
            if let Some(item) = self.conns[idx].queue.pop_front() {
                self.rr_cursor = (idx + 1) % n;
                let dur = ser_ms(item.wire_len(), self.link.downlink_bps);
                self.downlink_free = now + dur;
                let arrive = now + dur + self.conns[idx].rtt_ms / 2.0;
                self.schedule(arrive, Ev::Arrive { conn: idx, item });
                self.schedule(self.downlink_free, Ev::DownlinkPump);
                return;
            }
        }
    }

    fn arrive(&mut self, now: f64, conn_idx: usize, item: WireItem) {
        let mut browser_events: Vec<DeliveryEvent> = Vec::new();
        match item {
            WireItem::Control(ControlFrame::Headers { stream_id, len }) => {
                let url = {
                    let meta = self.conns[conn_idx].streams.get_mut(&stream_id).unwrap();
                    meta.header_delivered = true;
                    meta.url.clone()
                };
                self.mark_first_byte(now, conn_idx, stream_id);
                self.record(
                    now,
                    EventKind::Delivered,
                    stream_id,
                    len,
                    Some(url),
                    Some("headers".to_string()),
                );
            }
            WireItem::Control(ControlFrame::PushPromise {
                promised_id, len, ..
            }) => {
                let url = {
                    let meta = self.conns[conn_idx].streams.get_mut(&promised_id).unwrap();
                    meta.header_delivered = true;
                    meta.url.clone()
                };
                self.record(
                    now,
                    EventKind::Delivered,
                    promised_id,
                    len,
                    Some(url.clone()),
                    Some("push_promise".to_string()),
                );
                browser_events.push(DeliveryEvent::PushPromised { url });
            }
            WireItem::Control(ControlFrame::RstStream { stream_id }) => {
                self.record(
                    now,
                    EventKind::Delivered,
                    stream_id,
                    0,
                    None,
                    Some("rst_stream".to_string()),
                );
            }
            WireItem::Data {
                stream_id,
                len,
                offset,
            } => {
                let (url, data) = {
                    let meta = self.conns[conn_idx].streams.get_mut(&stream_id).unwrap();
                    meta.body_delivered += len;
                    let url = meta.url.clone();
                    let data = if url == self.base_url {
                        let body = self
                            .bodies
                            .get(&url)
                            .map(|b| b.as_slice())
                            .or_else(|| {
                                self.archive
                                    .find_by_url(&url)
                                    .map(|e| e.response.body.as_slice())
                            })
                            .unwrap_or(&[]);
                        let start = (offset as usize).min(body.len());
                        let end = ((offset + len) as usize).min(body.len());
                        body[start..end].to_vec()
                    } else {
                        Vec::new()
                    };
                    (url, data)
                };
                self.mark_first_byte(now, conn_idx, stream_id);
                self.record(
                    now,
                    EventKind::Delivered,
                    stream_id,
                    len,
                    Some(url.clone()),
                    None,
                );
                browser_events.push(DeliveryEvent::Bytes { url, data });
            }
        }

        // Completion check for every stream touched by this arrival.
        let completed: Vec<(u32, String, u64)> = {
            let conn = &mut self.conns[conn_idx];
            let mut done = Vec::new();
            for (id, meta) in conn.streams.iter_mut() {
                if !meta.complete && meta.header_delivered && meta.body_delivered >= meta.body_len {
                    meta.complete = true;
                    done.push((*id, meta.url.clone(), meta.body_len));
                }
            }
            done
        };
        for (stream_id, url, body_len) in completed {
            self.record(
                now,
                EventKind::StreamComplete,
                stream_id,
                body_len,
                Some(url.clone()),
                None,
            );
            browser_events.push(DeliveryEvent::StreamComplete { url, body_len });
        }

        for event in browser_events {
            let outcome = self.browser.advance(now, event);
            self.handle_browser_outcome(now, outcome);
        }
    }

    fn mark_first_byte(&mut self, now: f64, conn_idx: usize, stream_id: u32) {
        let meta = self.conns[conn_idx].streams.get_mut(&stream_id).unwrap();
        if !meta.first_byte {
            meta.first_byte = true;
            let url = meta.url.clone();
            self.record(now, EventKind::FirstByte, stream_id, 0, Some(url), None);
        }
    }

    fn handle_browser_outcome(&mut self, now: f64, outcome: crate::browser::AdvanceOutcome) {
        for url in outcome.requests {
            self.issue_request(now, &url);
        }
        for milestone in outcome.milestones {
            if milestone == crate::browser::Milestone::OnLoad {
                self.onload_seen = true;
            }
            self.record(
                now,
                EventKind::BrowserEvent,
                0,
                0,
                None,
                Some(milestone.label().to_string()),
            );
        }
        if let Some(at) = outcome.wake_at {
            self.schedule(at, Ev::BrowserWake);
        }
    }
}

/// Replay one page load. The strategy is applied when the base request
/// reaches the server: every directive becomes a push promise on the base
/// stream, and directives carrying byte offsets become hard-switch points.
pub fn run(
    archive: &Archive,
    strategy: &PushStrategy,
    config: &RunConfig,
) -> Result<Timeline, SimError> {
    let base = archive.base_document().ok_or(SimError::NoBaseDocument)?;
    let base_url = base.url();
    let base_ip = base.origin_ip.clone();

    let mut bodies = BTreeMap::new();
    if let Some(rewrite) = &strategy.html_rewrite {
        let out = apply_rewrite(&base.response.body, rewrite)
            .map_err(|e| SimError::Rewrite(e.to_string()))?;
        bodies.insert(base_url.clone(), out.html);
    }

    let browser = PageState::new(&base_url, config.browser)?;
    let mut sim = Sim {
        archive,
        strategy,
        link: config.link,
        base_url: base_url.clone(),
        base_ip,
        bodies,
        browser,
        conns: Vec::new(),
        conn_by_ip: BTreeMap::new(),
        base_stream: None,
        pending: VecDeque::new(),
        uplink_free: 0.0,
        downlink_free: 0.0,
        rr_cursor: 0,
        heap: BinaryHeap::new(),
        seq: 0,
        rng: ChaCha20Rng::seed_from_u64(config.seed),
        timeline: Timeline::default(),
        onload_seen: false,
    };

    sim.issue_request(0.0, &base_url);
    while let Some(scheduled) = sim.heap.pop() {
        if scheduled.time > config.timeout_ms {
            sim.timeline.timed_out = true;
            break;
        }
        match scheduled.ev {
            Ev::UplinkPump => sim.uplink_pump(scheduled.time),
            Ev::RequestAtServer { conn, url } => sim.request_at_server(scheduled.time, conn, &url),
            Ev::DownlinkPump => sim.downlink_pump(scheduled.time),
            Ev::Arrive { conn, item } => sim.arrive(scheduled.time, conn, item),
            Ev::BrowserWake => {
                let outcome = sim.browser.advance(scheduled.time, DeliveryEvent::Wake);
                sim.handle_browser_outcome(scheduled.time, outcome);
            }
        }
    }
    if !sim.onload_seen {
        sim.timeline.timed_out = true;
    }
    let mut timeline = sim.timeline;
    timeline
        .events
        .sort_by(|a, b| a.time_ms.partial_cmp(&b.time_ms).unwrap());
    Ok(timeline)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::archive::{RecordedRequest, RecordedResponse};
    use crate::hpack::HeaderList;
    use crate::strategy::{PushDirective, PushStrategy, StrategyKind, StrategyParams};

    fn exchange(
        authority: &str,
        path: &str,
        ip: &str,
        ct: &str,
        body: Vec<u8>,
    ) -> RecordedExchange {
        RecordedExchange {
            request: RecordedRequest {
                method: "GET".into(),
                scheme: "https".into(),
                authority: authority.into(),
                path: path.into(),
                headers: HeaderList::from_pairs(vec![
                    (":method", "GET"),
                    (":scheme", "https"),
                    (":authority", authority),
                    (":path", path),
                ]),
            },
            response: RecordedResponse {
                status: 200,
                headers: HeaderList::from_pairs(vec![(":status", "200"), ("content-type", ct)]),
                body,
            },
            origin_ip: ip.into(),
            resource_type: crate::archive::resource_type_from_content_type(ct),
        }
    }

    fn page_html(body_filler: usize) -> Vec<u8> {
        let mut doc = Vec::new();
        doc.extend_from_slice(
            b"<html><head><link rel=\"stylesheet\" href=\"/style.css\"></head><body>",
        );
        doc.extend(std::iter::repeat_n(b'x', body_filler));
        doc.extend_from_slice(b"</body></html>");
        doc
    }

    fn css_page_archive(filler: usize) -> Archive {
        Archive::from_exchanges(vec![
            exchange("site.test", "/", "9.9.9.9", "text/html", page_html(filler)),
            exchange(
                "site.test",
                "/style.css",
                "9.9.9.9",
                "text/css",
                vec![b'c'; 2000],
            ),
        ])
    }

    fn dsl() -> LinkConfig {
        configure_presets()["dsl"]
    }

    fn push_css(offset: Option<u64>) -> PushStrategy {
        PushStrategy {
            kind: if offset.is_some() {
                StrategyKind::PushCritical
            } else {
                StrategyKind::PushAll
            },
            params: StrategyParams::default(),
            directives: vec![PushDirective {
                resource_url: "https://site.test/style.css".into(),
                rank: 1,
                interleave_offset: offset,
            }],
            html_rewrite: None,
            manifest_path: None,
        }
    }

    #[test]
    fn analytic_single_resource_delivery() {
        let archive = Archive::from_exchanges(vec![exchange(
            "site.test",
            "/",
            "9.9.9.9",
            "text/html",
            vec![b'x'; 100_000],
        )]);
        let timeline = run(
            &archive,
            &PushStrategy::no_push(),
            &RunConfig::new(dsl(), 1),
        )
        .unwrap();
        let send = timeline
            .events
            .iter()
            .find(|e| e.kind == EventKind::Send)
            .unwrap()
            .time_ms;
        let complete = timeline
            .events
            .iter()
            .find(|e| e.kind == EventKind::StreamComplete)
            .unwrap()
            .time_ms;
        // rtt/2 up + 100 KB at 2 MB/s + rtt/2 down = 100 ms.
        assert!(
            (complete - send - 100.0).abs() < 1.0,
            "took {}",
            complete - send
        );
        assert!(!timeline.timed_out);
    }

    #[test]
    fn same_seed_reproduces_timeline_exactly() {
        let archive = css_page_archive(50_000);
        let cfg = RunConfig::new(dsl(), 42);
        let a = run(&archive, &push_css(Some(4096)), &cfg).unwrap();
        let b = run(&archive, &push_css(Some(4096)), &cfg).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }

    #[test]
    fn conservation_per_stream() {
        let archive = css_page_archive(30_000);
        let timeline = run(&archive, &push_css(None), &RunConfig::new(dsl(), 7)).unwrap();
        let per = timeline.delivered_per_stream();
        // Stream 1 = base html, stream 2 = pushed css.
        let html_len = page_html(30_000).len() as u64;
        let hdr = crate::hpack::encoded_len(
            &exchange("site.test", "/", "9.9.9.9", "text/html", vec![])
                .response
                .headers,
        ) as u64;
        assert_eq!(per[&1], html_len + hdr);
        let css_req_hdr = crate::hpack::encoded_len(
            &exchange("site.test", "/style.css", "9.9.9.9", "text/css", vec![])
                .request
                .headers,
        ) as u64;
        assert_eq!(per[&2], 2000 + css_req_hdr);
    }

    #[test]
    fn interleave_hard_switch_visible_in_chunks() {
        let archive = css_page_archive(100_000);
        let timeline = run(&archive, &push_css(Some(4096)), &RunConfig::new(dsl(), 3)).unwrap();
        let chunks: Vec<(u32, u64)> = timeline
            .delivered_chunks()
            .into_iter()
            .filter(|&(id, _)| id == 1 || id == 2)
            .collect();
        assert_eq!(chunks[0], (1, 4096));
        assert_eq!(chunks[1], (2, 2000));
        assert_eq!(chunks[2].0, 1);
    }

    #[test]
    fn interleaved_css_beats_plain_push_to_first_paint() {
        let archive = css_page_archive(200_000);
        let fvc = |strategy: &PushStrategy| {
            let t = run(&archive, strategy, &RunConfig::new(dsl(), 5)).unwrap();
            let m = crate::browser::compute_metrics(&t, &[], 0.5);
            assert!(!m.timed_out);
            m.first_visual_change_ms.unwrap()
        };
        let plain = fvc(&push_css(None));
        let interleaved = fvc(&push_css(Some(4096)));
        let none = fvc(&PushStrategy::no_push());
        assert!(
            interleaved < plain,
            "interleaved {interleaved} vs plain {plain}"
        );
        assert!(
            interleaved < none,
            "interleaved {interleaved} vs no_push {none}"
        );
    }

    #[test]
    fn jitter_varies_timings_across_seeds() {
        let archive = css_page_archive(20_000);
        let mut link = dsl();
        link.jitter_ms = 10.0;
        let strategy = PushStrategy::no_push();
        let t1 = run(&archive, &strategy, &RunConfig::new(link, 1)).unwrap();
        let t2 = run(&archive, &strategy, &RunConfig::new(link, 2)).unwrap();
        let onload = |t: &Timeline| {
            t.events
                .iter()
                .find(|e| e.label.as_deref() == Some("onload"))
                .unwrap()
                .time_ms
        };
        assert_ne!(onload(&t1), onload(&t2));
    }

    #[test]
    fn third_party_resources_use_their_own_connection() {
        let mut doc = Vec::new();
        doc.extend_from_slice(
            b"<html><head></head><body><img src=\"https://cdn.test/pic.png\"></body></html>",
        );
        let archive = Archive::from_exchanges(vec![
            exchange("site.test", "/", "9.9.9.9", "text/html", doc),
            exchange(
                "cdn.test",
                "/pic.png",
                "8.8.8.8",
                "image/png",
                vec![b'p'; 5000],
            ),
        ]);
        let timeline = run(
            &archive,
            &PushStrategy::no_push(),
            &RunConfig::new(dsl(), 1),
        )
        .unwrap();
        let connects: Vec<&TimelineEvent> = timeline
            .events
            .iter()
            .filter(|e| e.kind == EventKind::ConnectEnd)
            .collect();
        assert_eq!(connects.len(), 2);
        assert!(!timeline.timed_out);
        assert!(timeline
            .events
            .iter()
            .any(|e| e.kind == EventKind::StreamComplete
                && e.url.as_deref() == Some("https://cdn.test/pic.png")));
    }

    #[test]
    fn slow_start_delays_large_transfers() {
        let archive = Archive::from_exchanges(vec![exchange(
            "site.test",
            "/",
            "9.9.9.9",
            "text/html",
            vec![b'x'; 200_000],
        )]);
        let mut ramped = dsl();
        ramped.initial_cwnd = Some(14_600);
        let onload = |link: LinkConfig| {
            let t = run(&archive, &PushStrategy::no_push(), &RunConfig::new(link, 1)).unwrap();
            t.events
                .iter()
                .find(|e| e.label.as_deref() == Some("onload"))
                .unwrap()
                .time_ms
        };
        assert!(onload(ramped) > onload(dsl()));
    }
}
