// SPDX-License-Identifier: Apache-2.0

//! One TCP-like subflow: handshake and close state machine, sequence
//! management, ACK and SACK generation, fast retransmit, retransmission
//! timeout, and the hooks into congestion control and reorder detection.
//!
//! The subflow performs no I/O. Every entry point takes a [`Ctx`] that
//! collects the segments to transmit, events for the connection layer and
//! trace rows.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;

use bytes::Bytes;

use crate::ccontrol::CcAlgorithm;
use crate::error::SimError;
use crate::netmodel::Address;
use crate::reorder::{DetectorKind, ReorderDetector, Verdict};
use crate::simcore::SimTime;
use crate::trace::{EventKind, TraceRecord, Tracer};
use crate::wire::{DataSeq, Flags, SackBlock, Segment, SubflowSeq, TcpOption, MAX_SACK_BLOCKS};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SubflowConnState {
    Closed,
    Listen,
    SynSent,
    SynRcvd,
    Established,
    Closing,
}

impl SubflowConnState {
    pub fn as_str(self) -> &'static str {
        match self {
            SubflowConnState::Closed => "CLOSED",
            SubflowConnState::Listen => "LISTEN",
            SubflowConnState::SynSent => "SYN_SENT",
            SubflowConnState::SynRcvd => "SYN_RCVD",
            SubflowConnState::Established => "ESTABLISHED",
            SubflowConnState::Closing => "CLOSING",
        }
    }

    /// The only transitions a subflow may take.
    pub fn can_transition(self, to: SubflowConnState) -> bool {
        use SubflowConnState::*;
        matches!(
            (self, to),
            (Closed, SynSent)
                | (Closed, Listen)
                | (SynSent, Established)
                | (Listen, SynRcvd)
                | (SynRcvd, Established)
                | (Closing, Closed)
        ) || (to == Closing && self != Closing)
    }
}

impl fmt::Display for SubflowConnState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// How newly acknowledged data is turned into window-increase calls.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum AckMode {
    /// One call per MSS of newly acknowledged data.
    #[default]
    PerMss,
    /// One call per ACK that acknowledges new data.
    PerAck,
}

#[derive(Clone, Debug)]
pub struct SubflowConfig {
    pub mss: u32,
    pub dupthresh: u32,
    pub cc: CcAlgorithm,
    /// `None` leaves the subflow without any reorder hooks at all.
    pub detector: Option<DetectorKind>,
    pub ack_mode: AckMode,
    pub initial_cwnd: f64,
    pub initial_ssthresh: f64,
    pub initial_rto: SimTime,
    pub min_rto: SimTime,
    pub max_rto: SimTime,
}

impl Default for SubflowConfig {
    fn default() -> Self {
        SubflowConfig {
            mss: 1400,
            dupthresh: 3,
            cc: CcAlgorithm::default(),
            detector: Some(DetectorKind::None),
            ack_mode: AckMode::PerMss,
            initial_cwnd: 2.0,
            initial_ssthresh: 65536.0 / 1400.0,
            initial_rto: SimTime::from_secs(1),
            min_rto: SimTime::from_millis(200),
            max_rto: SimTime::from_secs(60),
        }
    }
}

/// Something that occupies subflow sequence space.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SendItem {
    Syn,
    Data { dsn: Option<DataSeq>, bytes: Bytes },
    Addr(Address),
    DataFin(DataSeq),
    Fin,
}

impl SendItem {
    pub fn seq_len(&self) -> u32 {
        match self {
            SendItem::Data { bytes, .. } => bytes.len() as u32,
            _ => 1,
        }
    }

    fn data_len(&self) -> u32 {
        match self {
            SendItem::Data { bytes, .. } => bytes.len() as u32,
            _ => 0,
        }
    }

    fn describe(&self) -> String {
        match self {
            SendItem::Syn => "syn".into(),
            SendItem::Data { dsn: Some(d), bytes } => format!("data dsn={d} len={}", bytes.len()),
            SendItem::Data { dsn: None, bytes } => format!("data len={}", bytes.len()),
            SendItem::Addr(a) => format!("add_addr {a}"),
            SendItem::DataFin(d) => format!("data_fin {d}"),
            SendItem::Fin => "fin".into(),
        }
    }
}

#[derive(Clone, Debug)]
struct Outstanding {
    seq: SubflowSeq,
    item: SendItem,
    sent_at: SimTime,
    retransmitted: bool,
}

impl Outstanding {
    fn end(&self) -> SubflowSeq {
        self.seq.add(self.item.seq_len())
    }
}

/// Received item handed to the connection layer in subflow order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Delivered {
    Data { dsn: Option<DataSeq>, bytes: Bytes },
    Addr(Address),
    DataFin(DataSeq),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SubflowEvent {
    /// Handshake finished. Carries the MPC / JOIN token seen in the peer's
    /// SYN or SYN-ACK.
    Established {
        subflow: u32,
        mp_token: Option<u32>,
        join_token: Option<u32>,
    },
    Delivered {
        subflow: u32,
        item: Delivered,
    },
    /// Sender side: an item left the retransmission queue.
    Acked {
        subflow: u32,
        item: SendItem,
    },
    PeerFin {
        subflow: u32,
    },
    Closed {
        subflow: u32,
    },
    Reset {
        subflow: u32,
    },
}

#[derive(Debug, Default)]
pub struct Outbox {
    pub segments: Vec<Segment>,
    pub events: Vec<SubflowEvent>,
}

impl Outbox {
    pub fn clear(&mut self) {
        self.segments.clear();
        self.events.clear();
    }
}

/// Per-call context: clock, sinks, and the coupled window of the other
/// live subflows of the connection.
pub struct Ctx<'a> {
    pub now: SimTime,
    pub tracer: &'a mut Tracer,
    pub out: &'a mut Outbox,
    pub others_cwnd: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SubflowStats {
    pub bytes_sent: u64,
    pub retransmissions: u64,
    pub spurious_detections: u64,
    pub fast_retransmits: u64,
    pub timeouts: u64,
}

/// SRTT / RTTVAR smoothing with gains 1/8 and 1/4 and exponential backoff.
#[derive(Clone, Debug)]
pub struct RttEstimator {
    srtt: Option<f64>,
    rttvar: f64,
    rto: SimTime,
    min_rto: SimTime,
    max_rto: SimTime,
}

impl RttEstimator {
    const GRANULARITY_US: f64 = 1_000.0;

    pub fn new(initial: SimTime, min_rto: SimTime, max_rto: SimTime) -> Self {
        RttEstimator {
            srtt: None,
            rttvar: 0.0,
            rto: initial,
            min_rto,
            max_rto,
        }
    }

    pub fn rto(&self) -> SimTime {
        self.rto
    }

    pub fn srtt(&self) -> Option<SimTime> {
        self.srtt.map(|s| SimTime::from_micros(s.round() as u64))
    }

    pub fn sample(&mut self, rtt: SimTime) {
        let r = rtt.as_micros() as f64;
        match self.srtt {
            None => {
                self.srtt = Some(r);
                self.rttvar = r / 2.0;
            }
            Some(srtt) => {
                self.rttvar = 0.75 * self.rttvar + 0.25 * (srtt - r).abs();
                self.srtt = Some(0.875 * srtt + 0.125 * r);
            }
        }
        let srtt = self.srtt.expect("set above");
        let rto = srtt + (4.0 * self.rttvar).max(Self::GRANULARITY_US);
        self.rto = SimTime::from_micros(rto.round() as u64)
            .max(self.min_rto)
            .min(self.max_rto);
    }

    pub fn back_off(&mut self) {
        self.rto = (self.rto + self.rto).min(self.max_rto);
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum RecoveryKind {
    Fast,
    Timeout,
}

#[derive(Clone, Copy, Debug)]
struct Recovery {
    kind: RecoveryKind,
    recover: SubflowSeq,
}

#[derive(Clone, Debug)]
enum RecvContent {
    Data {
        dsn: Option<DataSeq>,
        bytes: Bytes,
    },
    Addr(Address),
    DataFin(DataSeq),
    Fin,
    /// Sequence-consuming segment with nothing to hand upwards.
    Opaque,
}

#[derive(Clone, Debug)]
struct RecvItem {
    len: u32,
    content: RecvContent,
}

impl RecvItem {
    fn from_segment(seg: &Segment) -> RecvItem {
        let len = seg.seq_len();
        let content = if !seg.payload.is_empty() {
            RecvContent::Data {
                dsn: seg.dsn().map(|d| d.0),
                bytes: seg.payload.clone(),
            }
        } else if seg.flags.contains(Flags::FIN) {
            RecvContent::Fin
        } else if let Some(a) = seg.add_addr() {
            RecvContent::Addr(a)
        } else if let Some(f) = seg.data_fin() {
            RecvContent::DataFin(f)
        } else {
            RecvContent::Opaque
        };
        RecvItem { len, content }
    }

    /// Drops the first `n` sequence numbers.
    fn trim_front(self, n: u32) -> Option<RecvItem> {
        if n == 0 {
            return Some(self);
        }
        if n >= self.len {
            return None;
        }
        match self.content {
            RecvContent::Data { dsn, bytes } => {
                let n = n as usize;
                Some(RecvItem {
                    len: self.len - n as u32,
                    content: RecvContent::Data {
                        dsn: dsn.map(|d| d + n as u64),
                        bytes: bytes.slice(n..),
                    },
                })
            }
            // a FIN riding behind data
            other => Some(RecvItem {
                len: self.len - n,
                content: other,
            }),
        }
    }
}

/// Initial send sequence number; the first data byte is subflow sequence 0.
pub const ISS: SubflowSeq = SubflowSeq(u32::MAX);

pub struct Subflow {
    id: u32,
    conn_id: u32,
    local: Address,
    remote: Address,
    local_port: u16,
    remote_port: u16,
    state: SubflowConnState,
    aborted: bool,
    /// MPC or JOIN option carried on this side's SYN / SYN-ACK.
    syn_option: Option<TcpOption>,
    cfg: SubflowConfig,

    // send side
    iss: SubflowSeq,
    snd_una: SubflowSeq,
    snd_nxt: SubflowSeq,
    cwnd: f64,
    ssthresh: f64,
    dup_acks: u32,
    acked_carry: u32,
    rtt: RttEstimator,
    outstanding: VecDeque<Outstanding>,
    queue: VecDeque<SendItem>,
    queued_bytes: u64,
    rto_deadline: Option<SimTime>,
    recovery: Option<Recovery>,
    detector: Option<ReorderDetector>,
    fin_seq: Option<SubflowSeq>,
    // unacknowledged items left behind by a reset
    orphans: Vec<SendItem>,

    // receive side
    irs: Option<SubflowSeq>,
    rcv_nxt: SubflowSeq,
    rcv_nxt_abs: u64,
    ooo: BTreeMap<u64, RecvItem>,
    ts_recent: SimTime,
    peer_fin: Option<SubflowSeq>,

    stats: SubflowStats,
}

impl fmt::Debug for Subflow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Subflow")
            .field("id", &self.id)
            .field("local", &self.local)
            .field("remote", &self.remote)
            .field("state", &self.state)
            .field("snd_una", &self.snd_una)
            .field("snd_nxt", &self.snd_nxt)
            .field("rcv_nxt", &self.rcv_nxt)
            .field("cwnd", &self.cwnd)
            .field("ssthresh", &self.ssthresh)
            .finish()
    }
}

impl Subflow {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        id: u32,
        conn_id: u32,
        local: Address,
        remote: Address,
        local_port: u16,
        remote_port: u16,
        syn_option: Option<TcpOption>,
        cfg: SubflowConfig,
    ) -> Subflow {
        Subflow {
            id,
            conn_id,
            local,
            remote,
            local_port,
            remote_port,
            state: SubflowConnState::Closed,
            aborted: false,
            syn_option,
            iss: ISS,
            snd_una: ISS,
            snd_nxt: ISS,
            cwnd: cfg.initial_cwnd.max(1.0),
            ssthresh: cfg.initial_ssthresh.max(2.0),
            dup_acks: 0,
            acked_carry: 0,
            rtt: RttEstimator::new(cfg.initial_rto, cfg.min_rto, cfg.max_rto),
            outstanding: VecDeque::new(),
            queue: VecDeque::new(),
            queued_bytes: 0,
            rto_deadline: None,
            recovery: None,
            detector: cfg.detector.map(ReorderDetector::new),
            fin_seq: None,
            orphans: Vec::new(),
            irs: None,
            rcv_nxt: SubflowSeq(0),
            rcv_nxt_abs: 0,
            ooo: BTreeMap::new(),
            ts_recent: SimTime::ZERO,
            peer_fin: None,
            stats: SubflowStats::default(),
            cfg,
        }
    }

    pub fn id(&self) -> u32 {
        self.id
    }

    pub fn local(&self) -> Address {
        self.local
    }

    pub fn remote(&self) -> Address {
        self.remote
    }

    pub fn local_port(&self) -> u16 {
        self.local_port
    }

    pub fn remote_port(&self) -> u16 {
        self.remote_port
    }

    pub fn state(&self) -> SubflowConnState {
        self.state
    }

    pub fn is_aborted(&self) -> bool {
        self.aborted
    }

    pub fn is_established(&self) -> bool {
        self.state == SubflowConnState::Established && !self.aborted
    }

    pub fn cwnd(&self) -> f64 {
        self.cwnd
    }

    pub fn ssthresh(&self) -> f64 {
        self.ssthresh
    }

    pub fn snd_una(&self) -> SubflowSeq {
        self.snd_una
    }

    pub fn snd_nxt(&self) -> SubflowSeq {
        self.snd_nxt
    }

    pub fn rcv_nxt(&self) -> SubflowSeq {
        self.rcv_nxt
    }

    pub fn rto(&self) -> SimTime {
        self.rtt.rto()
    }

    pub fn rtt(&self) -> &RttEstimator {
        &self.rtt
    }

    pub fn dup_acks(&self) -> u32 {
        self.dup_acks
    }

    pub fn detector(&self) -> Option<&ReorderDetector> {
        self.detector.as_ref()
    }

    pub fn stats(&self) -> SubflowStats {
        self.stats
    }

    pub fn rto_deadline(&self) -> Option<SimTime> {
        self.rto_deadline
    }

    pub fn config(&self) -> &SubflowConfig {
        &self.cfg
    }

    pub fn flight_bytes(&self) -> u64 {
        self.snd_nxt.diff(self.snd_una).max(0) as u64
    }

    /// Bytes that may still be queued before the window is full.
    pub fn window_space(&self) -> u64 {
        self.window_bytes()
            .saturating_sub(self.flight_bytes() + self.queued_bytes)
    }

    fn window_bytes(&self) -> u64 {
        self.cwnd.floor() as u64 * self.cfg.mss as u64
    }

    pub fn has_unsent(&self) -> bool {
        !self.queue.is_empty()
    }

    pub fn has_outstanding(&self) -> bool {
        !self.outstanding.is_empty()
    }

    /// Ranges received out of order beyond `rcv_nxt`, in subflow sequence space.
    pub fn ooo_ranges(&self) -> Vec<SackBlock> {
        let mut blocks: Vec<SackBlock> = Vec::new();
        let mut cur: Option<(u64, u64)> = None;
        for (&start, item) in &self.ooo {
            let end = start + item.len as u64;
            match cur {
                Some((s, e)) if start <= e => cur = Some((s, e.max(end))),
                Some(c) => {
                    blocks.push(self.abs_block(c));
                    cur = Some((start, end));
                }
                None => cur = Some((start, end)),
            }
        }
        if let Some(c) = cur {
            blocks.push(self.abs_block(c));
        }
        blocks
    }

    fn abs_block(&self, (s, e): (u64, u64)) -> SackBlock {
        let base = self.rcv_nxt_abs;
        SackBlock::new(self.rcv_nxt.add((s - base) as u32), self.rcv_nxt.add((e - base) as u32))
    }

    fn bytes(&self, segs: f64) -> u64 {
        (segs * self.cfg.mss as f64).round() as u64
    }

    fn rec(&self, now: SimTime, kind: EventKind) -> TraceRecord {
        TraceRecord::new(now, self.conn_id, Some(self.id), kind)
    }

    fn trace_window(&self, ctx: &mut Ctx<'_>, kind: EventKind, detail: &str) {
        let r = self
            .rec(ctx.now, kind)
            .window(self.bytes(self.cwnd), self.bytes(self.ssthresh))
            .detail(detail);
        ctx.tracer.push(r);
    }

    /// Moves to `to`, or fails with an invariant breach if the edge is not
    /// one of [`SubflowConnState::can_transition`].
    pub fn transition(&mut self, to: SubflowConnState, ctx: &mut Ctx<'_>) -> Result<(), SimError> {
        if !self.state.can_transition(to) {
            return Err(SimError::breach(format!(
                "subflow {} of endpoint {}: illegal transition {} -> {}",
                self.id, self.conn_id, self.state, to
            )));
        }
        let detail = format!("{}->{}", self.state, to);
        self.state = to;
        ctx.tracer.push(self.rec(ctx.now, EventKind::State).detail(detail));
        Ok(())
    }

    fn check_window_invariants(&self) -> Result<(), SimError> {
        if self.cwnd.is_nan() || self.cwnd < 1.0 || self.ssthresh.is_nan() || self.ssthresh < 2.0 {
            return Err(SimError::breach(format!(
                "subflow {}: window out of range cwnd={} ssthresh={}",
                self.id, self.cwnd, self.ssthresh
            )));
        }
        Ok(())
    }

    // ---------------------------------------------------------------- opens

    /// Active open: CLOSED -> SYN_SENT, emits SYN.
    pub fn connect(&mut self, ctx: &mut Ctx<'_>) -> Result<(), SimError> {
        self.transition(SubflowConnState::SynSent, ctx)?;
        self.send_new(SendItem::Syn, ctx);
        Ok(())
    }

    /// Passive open: CLOSED -> LISTEN.
    pub fn listen(&mut self, ctx: &mut Ctx<'_>) -> Result<(), SimError> {
        self.transition(SubflowConnState::Listen, ctx)
    }

    /// Close request: any -> CLOSING, emits FIN once queued data is out.
    pub fn close(&mut self, ctx: &mut Ctx<'_>) -> Result<(), SimError> {
        if self.state == SubflowConnState::Closing || self.aborted {
            return Ok(());
        }
        if self.state == SubflowConnState::Closed && self.peer_fin.is_some() {
            return Ok(());
        }
        self.transition(SubflowConnState::Closing, ctx)?;
        self.enqueue(SendItem::Fin);
        self.try_send(ctx);
        Ok(())
    }

    /// Tears the subflow down after a reset; no state transition is taken.
    pub fn abort(&mut self, ctx: &mut Ctx<'_>, send_rst: bool) {
        if self.aborted {
            return;
        }
        if send_rst && self.state != SubflowConnState::Closed {
            let rst = self.build(Flags::RST | Flags::ACK, self.snd_nxt, vec![], Bytes::new(), ctx.now);
            ctx.out.segments.push(rst);
        }
        self.aborted = true;
        let unacked = self.outstanding.drain(..).map(|o| o.item);
        self.orphans.extend(unacked.chain(self.queue.drain(..)));
        self.queued_bytes = 0;
        self.rto_deadline = None;
        if let Some(d) = self.detector.as_mut() {
            d.disarm();
        }
        ctx.tracer.push(
            self.rec(ctx.now, EventKind::State)
                .detail(format!("{} reset", self.state)),
        );
        ctx.out.events.push(SubflowEvent::Reset { subflow: self.id });
    }

    // ----------------------------------------------------------------- send

    pub fn take_orphans(&mut self) -> Vec<SendItem> {
        std::mem::take(&mut self.orphans)
    }

    pub fn enqueue(&mut self, item: SendItem) {
        self.queued_bytes += item.seq_len() as u64;
        self.queue.push_back(item);
    }

    /// Transmits queued items while the window allows.
    pub fn try_send(&mut self, ctx: &mut Ctx<'_>) -> usize {
        if self.aborted || !matches!(self.state, SubflowConnState::Established | SubflowConnState::Closing) {
            return 0;
        }
        let mut sent = 0;
        while let Some(item) = self.queue.front() {
            let len = item.seq_len() as u64;
            if self.flight_bytes() + len > self.window_bytes() {
                break;
            }
            let item = self.queue.pop_front().expect("peeked");
            self.queued_bytes -= len;
            self.send_new(item, ctx);
            sent += 1;
        }
        sent
    }

    fn send_new(&mut self, item: SendItem, ctx: &mut Ctx<'_>) {
        let seq = self.snd_nxt;
        if matches!(item, SendItem::Fin) {
            self.fin_seq = Some(seq);
        }
        self.snd_nxt = seq.add(item.seq_len());
        self.stats.bytes_sent += item.data_len() as u64;
        let seg = self.segment_for(seq, &item, ctx.now);
        ctx.tracer.push(
            self.rec(ctx.now, EventKind::Send)
                .seq(seq.0 as u64)
                .ack(seg.ack.0 as u64)
                .detail(item.describe()),
        );
        ctx.out.segments.push(seg);
        self.outstanding.push_back(Outstanding {
            seq,
            item,
            sent_at: ctx.now,
            retransmitted: false,
        });
        if self.rto_deadline.is_none() {
            self.rto_deadline = Some(ctx.now + self.rtt.rto());
        }
    }

    fn build(
        &self,
        flags: Flags,
        seq: SubflowSeq,
        mut options: Vec<TcpOption>,
        payload: Bytes,
        now: SimTime,
    ) -> Segment {
        options.push(TcpOption::Timestamp {
            ts_val: now,
            ts_echo: self.ts_recent,
        });
        let ack_flag = if self.irs.is_some() { Flags::ACK } else { Flags::empty() };
        Segment {
            src_addr: self.local,
            dst_addr: self.remote,
            src_port: self.local_port,
            dst_port: self.remote_port,
            seq,
            ack: if self.irs.is_some() {
                self.rcv_nxt
            } else {
                SubflowSeq(0)
            },
            flags: flags | ack_flag,
            options,
            payload,
        }
    }

    fn segment_for(&self, seq: SubflowSeq, item: &SendItem, now: SimTime) -> Segment {
        match item {
            SendItem::Syn => {
                let opts = self.syn_option.iter().cloned().collect();
                self.build(Flags::SYN, seq, opts, Bytes::new(), now)
            }
            SendItem::Data { dsn, bytes } => {
                let opts = dsn
                    .map(|d| TcpOption::Dsn {
                        data_seq: d,
                        subflow_seq: seq,
                        length: bytes.len() as u16,
                    })
                    .into_iter()
                    .collect();
                self.build(Flags::empty(), seq, opts, bytes.clone(), now)
            }
            SendItem::Addr(a) => self.build(Flags::empty(), seq, vec![TcpOption::AddAddr(*a)], Bytes::new(), now),
            SendItem::DataFin(d) => self.build(
                Flags::empty(),
                seq,
                vec![TcpOption::DataFin { final_data_seq: *d }],
                Bytes::new(),
                now,
            ),
            SendItem::Fin => self.build(Flags::FIN, seq, vec![], Bytes::new(), now),
        }
    }

    fn send_ack(&self, ctx: &mut Ctx<'_>, sack: Vec<SackBlock>) {
        let opts = if sack.is_empty() {
            vec![]
        } else {
            vec![TcpOption::Sack(sack)]
        };
        let seg = self.build(Flags::ACK, self.snd_nxt, opts, Bytes::new(), ctx.now);
        ctx.out.segments.push(seg);
    }

    fn retransmit_front(&mut self, ctx: &mut Ctx<'_>, why: &str, armed: bool) {
        let now = ctx.now;
        let Some(front) = self.outstanding.front_mut() else {
            return;
        };
        front.retransmitted = true;
        front.sent_at = now;
        let (seq, item) = (front.seq, front.item.clone());
        let seg = self.segment_for(seq, &item, now);
        self.stats.retransmissions += 1;
        let detail = if armed { format!("{why} armed") } else { why.to_string() };
        let r = self
            .rec(now, EventKind::Retx)
            .seq(seq.0 as u64)
            .ack(seg.ack.0 as u64)
            .window(self.bytes(self.cwnd), self.bytes(self.ssthresh))
            .detail(detail);
        ctx.tracer.push(r);
        ctx.out.segments.push(seg);
    }

    fn arm_snapshot(&mut self, now: SimTime) -> bool {
        let Some(front) = self.outstanding.front() else {
            return false;
        };
        let (seq, high) = (front.seq, self.snd_nxt);
        let (cwnd, ssthresh) = (self.cwnd, self.ssthresh);
        self.detector
            .as_mut()
            .and_then(|d| d.on_retransmit(cwnd, ssthresh, seq, now, high, now))
            .is_some()
    }

    fn abort_dsack_slow_start(&mut self, ctx: &mut Ctx<'_>) {
        if self.detector.as_mut().is_some_and(|d| d.abort_slow_start()) {
            self.trace_window(ctx, EventKind::DsackSsEnd, "aborted");
        }
    }

    fn loss_reduction(&mut self, ctx: &mut Ctx<'_>, timeout: bool) -> Result<(), SimError> {
        let flight = self.flight_bytes() as f64 / self.cfg.mss as f64;
        self.ssthresh = (flight / 2.0).max(2.0);
        self.cwnd = if timeout {
            1.0
        } else {
            let w = ctx.others_cwnd + self.cwnd;
            self.cfg.cc.on_loss(self.cwnd, w)
        };
        self.acked_carry = 0;
        self.trace_window(ctx, EventKind::Cwnd, if timeout { "rto" } else { "loss" });
        self.trace_window(ctx, EventKind::Ssthresh, if timeout { "rto" } else { "loss" });
        self.check_window_invariants()
    }

    fn fast_retransmit(&mut self, ctx: &mut Ctx<'_>) -> Result<(), SimError> {
        let armed = self.arm_snapshot(ctx.now);
        self.abort_dsack_slow_start(ctx);
        self.stats.fast_retransmits += 1;
        self.retransmit_front(ctx, "fast", armed);
        self.recovery = Some(Recovery {
            kind: RecoveryKind::Fast,
            recover: self.snd_nxt,
        });
        self.loss_reduction(ctx, false)?;
        self.rto_deadline = Some(ctx.now + self.rtt.rto());
        Ok(())
    }

    /// Retransmission timer check; fires only once the deadline has passed.
    pub fn on_timer(&mut self, ctx: &mut Ctx<'_>) -> Result<(), SimError> {
        match self.rto_deadline {
            Some(d) if d <= ctx.now && !self.aborted => {}
            _ => return Ok(()),
        }
        if self.outstanding.is_empty() {
            self.rto_deadline = None;
            return Ok(());
        }
        self.stats.timeouts += 1;
        ctx.tracer.push(
            self.rec(ctx.now, EventKind::Rto)
                .seq(self.snd_una.0 as u64)
                .detail(format!("rto={}us", self.rtt.rto().as_micros())),
        );
        let data_phase = matches!(self.state, SubflowConnState::Established | SubflowConnState::Closing);
        if data_phase {
            let armed = self.arm_snapshot(ctx.now);
            self.abort_dsack_slow_start(ctx);
            self.retransmit_front(ctx, "rto", armed);
            self.loss_reduction(ctx, true)?;
            self.dup_acks = 0;
            self.recovery = Some(Recovery {
                kind: RecoveryKind::Timeout,
                recover: self.snd_nxt,
            });
        } else {
            self.retransmit_front(ctx, "rto", false);
        }
        self.rtt.back_off();
        self.rto_deadline = Some(ctx.now + self.rtt.rto());
        Ok(())
    }

    // -------------------------------------------------------------- receive

    /// Handles one arriving segment addressed to this subflow.
    pub fn on_segment(&mut self, seg: &Segment, ctx: &mut Ctx<'_>) -> Result<(), SimError> {
        if self.aborted {
            return Ok(());
        }
        if let Some((ts_val, _)) = seg.timestamp() {
            self.ts_recent = ts_val;
        }
        use SubflowConnState::*;
        match self.state {
            Closed => self.on_closed(seg, ctx),
            Listen => self.on_listen(seg, ctx),
            SynSent => self.on_syn_sent(seg, ctx),
            SynRcvd => self.on_syn_rcvd(seg, ctx),
            Established | Closing => self.on_synchronized(seg, ctx),
        }
    }

    fn reply_rst(&self, seg: &Segment, ctx: &mut Ctx<'_>) {
        if seg.flags.contains(Flags::RST) {
            return;
        }
        let seq = if seg.flags.contains(Flags::ACK) {
            seg.ack
        } else {
            SubflowSeq(0)
        };
        let rst = Segment {
            src_addr: self.local,
            dst_addr: self.remote,
            src_port: self.local_port,
            dst_port: self.remote_port,
            seq,
            ack: seg.seq.add(seg.seq_len()),
            flags: Flags::RST | Flags::ACK,
            options: vec![],
            payload: Bytes::new(),
        };
        ctx.tracer.push(
            self.rec(ctx.now, EventKind::Recv)
                .seq(seg.seq.0 as u64)
                .detail(format!("unexpected in {} -> rst", self.state)),
        );
        ctx.out.segments.push(rst);
    }

    fn on_closed(&mut self, seg: &Segment, ctx: &mut Ctx<'_>) -> Result<(), SimError> {
        // a peer still retransmitting its FIN after we closed
        if let Some(fin) = self.peer_fin {
            if seg.flags.contains(Flags::FIN) && seg.seq == fin {
                self.send_ack(ctx, vec![]);
                return Ok(());
            }
            if !seg.flags.intersects(Flags::SYN | Flags::FIN | Flags::RST) && seg.seq_len() == 0 {
                return Ok(());
            }
        }
        self.reply_rst(seg, ctx);
        Ok(())
    }

    fn on_listen(&mut self, seg: &Segment, ctx: &mut Ctx<'_>) -> Result<(), SimError> {
        if seg.flags.contains(Flags::RST) {
            return Ok(());
        }
        if seg.flags.contains(Flags::SYN) && !seg.flags.contains(Flags::ACK) {
            self.irs = Some(seg.seq);
            self.rcv_nxt = seg.seq.add(1);
            self.transition(SubflowConnState::SynRcvd, ctx)?;
            self.send_new(SendItem::Syn, ctx);
            return Ok(());
        }
        self.reply_rst(seg, ctx);
        Ok(())
    }

    fn syn_acked(&self, seg: &Segment) -> bool {
        seg.flags.contains(Flags::ACK) && seg.ack == self.iss.add(1)
    }

    fn complete_syn(&mut self) {
        self.snd_una = self.iss.add(1);
        self.outstanding.pop_front();
        self.rto_deadline = None;
    }

    fn on_syn_sent(&mut self, seg: &Segment, ctx: &mut Ctx<'_>) -> Result<(), SimError> {
        if seg.flags.contains(Flags::RST) {
            if self.syn_acked(seg) {
                self.abort(ctx, false);
            }
            return Ok(());
        }
        if seg.flags.contains(Flags::SYN | Flags::ACK) && self.syn_acked(seg) {
            self.irs = Some(seg.seq);
            self.rcv_nxt = seg.seq.add(1);
            self.complete_syn();
            self.transition(SubflowConnState::Established, ctx)?;
            self.send_ack(ctx, vec![]);
            ctx.out.events.push(SubflowEvent::Established {
                subflow: self.id,
                mp_token: seg.mp_capable(),
                join_token: seg.join(),
            });
            self.try_send(ctx);
            return Ok(());
        }
        if seg.flags.contains(Flags::ACK) {
            self.reply_rst(seg, ctx);
        }
        Ok(())
    }

    fn on_syn_rcvd(&mut self, seg: &Segment, ctx: &mut Ctx<'_>) -> Result<(), SimError> {
        if seg.flags.contains(Flags::RST) {
            self.abort(ctx, false);
            return Ok(());
        }
        if seg.flags.contains(Flags::SYN) {
            if !seg.flags.contains(Flags::ACK) && Some(seg.seq) == self.irs {
                // our SYN-ACK was lost
                self.retransmit_front(ctx, "syn_dup", false);
            } else {
                self.reply_rst(seg, ctx);
            }
            return Ok(());
        }
        if !seg.flags.contains(Flags::ACK) {
            return Ok(());
        }
        if !self.syn_acked(seg) {
            self.reply_rst(seg, ctx);
            return Ok(());
        }
        self.complete_syn();
        self.transition(SubflowConnState::Established, ctx)?;
        ctx.out.events.push(SubflowEvent::Established {
            subflow: self.id,
            mp_token: None,
            join_token: None,
        });
        // the completing ACK may carry data
        self.on_synchronized(seg, ctx)
    }

    fn on_synchronized(&mut self, seg: &Segment, ctx: &mut Ctx<'_>) -> Result<(), SimError> {
        if seg.flags.contains(Flags::RST) {
            // only a reset at or beyond rcv_nxt is believed
            if seg.seq.ge(self.rcv_nxt) {
                self.abort(ctx, false);
            }
            return Ok(());
        }
        if seg.flags.contains(Flags::SYN) {
            // duplicate SYN-ACK after our handshake ACK was lost
            if seg.flags.contains(Flags::ACK) && Some(seg.seq) == self.irs {
                self.send_ack(ctx, vec![]);
            }
            return Ok(());
        }
        if seg.flags.contains(Flags::ACK) {
            self.process_ack(seg, ctx)?;
        }
        if self.aborted {
            return Ok(());
        }
        if seg.seq_len() > 0 {
            self.receive(seg, ctx)?;
        }
        self.try_send(ctx);
        Ok(())
    }

    fn receive(&mut self, seg: &Segment, ctx: &mut Ctx<'_>) -> Result<(), SimError> {
        let len = seg.seq_len();
        let off = seg.seq.diff(self.rcv_nxt);
        let seg_block = SackBlock::new(seg.seq, seg.seq.add(len));
        let recv = |kind: &str| {
            self.rec(ctx.now, EventKind::Recv)
                .seq(seg.seq.0 as u64)
                .ack(self.rcv_nxt.0 as u64)
                .detail(format!("{kind} len={len}"))
        };
        if off + len as i64 <= 0 {
            let r = recv("duplicate");
            ctx.tracer.push(r);
            let mut blocks = vec![seg_block];
            blocks.extend(self.ooo_ranges().into_iter().take(MAX_SACK_BLOCKS - 1));
            self.send_ack(ctx, blocks);
            return Ok(());
        }
        if off > 0 {
            let r = recv("out_of_order");
            ctx.tracer.push(r);
            let abs = self.rcv_nxt_abs + off as u64;
            self.ooo.entry(abs).or_insert_with(|| RecvItem::from_segment(seg));
            let mut blocks = vec![seg_block];
            blocks.extend(
                self.ooo_ranges()
                    .into_iter()
                    .filter(|b| !b.contains(seg.seq))
                    .take(MAX_SACK_BLOCKS - 1),
            );
            self.send_ack(ctx, blocks);
            return Ok(());
        }
        let r = recv("in_order");
        ctx.tracer.push(r);
        let head = RecvItem::from_segment(seg).trim_front((-off) as u32);
        if let Some(item) = head {
            self.accept(item, ctx)?;
        }
        // drain anything that became contiguous
        while let Some((&start, _)) = self.ooo.first_key_value() {
            if start > self.rcv_nxt_abs {
                break;
            }
            let item = self.ooo.remove(&start).expect("present");
            if let Some(item) = item.trim_front((self.rcv_nxt_abs - start).min(u32::MAX as u64) as u32) {
                self.accept(item, ctx)?;
            }
        }
        let sack = self.ooo_ranges().into_iter().take(MAX_SACK_BLOCKS).collect();
        self.send_ack(ctx, sack);
        Ok(())
    }

    fn accept(&mut self, item: RecvItem, ctx: &mut Ctx<'_>) -> Result<(), SimError> {
        let seq = self.rcv_nxt;
        self.rcv_nxt = self.rcv_nxt.add(item.len);
        self.rcv_nxt_abs += item.len as u64;
        let delivered = match item.content {
            RecvContent::Data { dsn, bytes } => Some(Delivered::Data { dsn, bytes }),
            RecvContent::Addr(a) => Some(Delivered::Addr(a)),
            RecvContent::DataFin(d) => Some(Delivered::DataFin(d)),
            RecvContent::Opaque => None,
            RecvContent::Fin => {
                self.peer_fin = Some(seq);
                ctx.out.events.push(SubflowEvent::PeerFin { subflow: self.id });
                None
            }
        };
        if let Some(item) = delivered {
            ctx.out.events.push(SubflowEvent::Delivered { subflow: self.id, item });
        }
        Ok(())
    }

    // ------------------------------------------------------------------ ack

    fn process_ack(&mut self, seg: &Segment, ctx: &mut Ctx<'_>) -> Result<(), SimError> {
        let ack = seg.ack;
        if ack.gt(self.snd_nxt) {
            ctx.tracer.push(
                self.rec(ctx.now, EventKind::Ack)
                    .ack(ack.0 as u64)
                    .detail("invalid above snd_nxt"),
            );
            return Ok(());
        }
        if ack.lt(self.snd_una) {
            return Ok(());
        }
        let mut verdict_applied = false;
        if ack.gt(self.snd_una) {
            verdict_applied = self.on_new_ack(seg, ctx)?;
        } else if self.is_dup_ack(seg) && !self.carries_dsack(seg) {
            self.on_dup_ack(ctx)?;
        }
        if !verdict_applied {
            self.check_dsack(seg, ctx)?;
        }
        if self.state == SubflowConnState::Closing && self.fin_seq.is_some_and(|f| self.snd_una.gt(f)) {
            self.rto_deadline = None;
            self.transition(SubflowConnState::Closed, ctx)?;
            if let Some(d) = self.detector.as_mut() {
                d.disarm();
            }
            ctx.out.events.push(SubflowEvent::Closed { subflow: self.id });
        }
        Ok(())
    }

    fn is_dup_ack(&self, seg: &Segment) -> bool {
        seg.payload.is_empty()
            && !seg.flags.intersects(Flags::SYN | Flags::FIN)
            && seg.seq_len() == 0
            && !self.outstanding.is_empty()
    }

    fn carries_dsack(&self, seg: &Segment) -> bool {
        seg.sack()
            .and_then(|b| b.first())
            .is_some_and(|b| b.is_valid() && b.right.le(seg.ack))
    }

    fn on_dup_ack(&mut self, ctx: &mut Ctx<'_>) -> Result<(), SimError> {
        self.dup_acks += 1;
        ctx.tracer.push(
            self.rec(ctx.now, EventKind::DupAck)
                .ack(self.snd_una.0 as u64)
                .detail(format!("count={}", self.dup_acks)),
        );
        if self.dup_acks == self.cfg.dupthresh && self.recovery.is_none() {
            self.fast_retransmit(ctx)?;
        }
        Ok(())
    }

    /// Returns whether a spurious-retransmission verdict replaced the
    /// ordinary window update for this ACK.
    fn on_new_ack(&mut self, seg: &Segment, ctx: &mut Ctx<'_>) -> Result<bool, SimError> {
        let ack = seg.ack;
        let mut acked_data = 0u32;
        let mut sample = None;
        while let Some(front) = self.outstanding.front_mut() {
            if front.end().le(ack) {
                let o = self.outstanding.pop_front().expect("front");
                acked_data += o.item.data_len();
                sample = (!o.retransmitted).then(|| ctx.now - o.sent_at);
                if o.retransmitted {
                    sample = None;
                }
                ctx.out.events.push(SubflowEvent::Acked {
                    subflow: self.id,
                    item: o.item,
                });
            } else {
                // ACK inside an item: only payload can be split
                let cut = ack.diff(front.seq);
                if cut > 0 {
                    if let SendItem::Data { dsn, bytes } = &mut front.item {
                        let cut = cut as usize;
                        let head = bytes.split_to(cut);
                        acked_data += cut as u32;
                        let acked_dsn = *dsn;
                        if let Some(d) = dsn.as_mut() {
                            *d += cut as u64;
                        }
                        front.seq = ack;
                        ctx.out.events.push(SubflowEvent::Acked {
                            subflow: self.id,
                            item: SendItem::Data {
                                dsn: acked_dsn,
                                bytes: head,
                            },
                        });
                    }
                }
                break;
            }
        }
        self.snd_una = ack;
        self.dup_acks = 0;
        if let Some(rtt) = sample {
            self.rtt.sample(rtt);
        }
        ctx.tracer.push(
            self.rec(ctx.now, EventKind::Ack)
                .seq(self.snd_nxt.0 as u64)
                .ack(ack.0 as u64)
                .detail(format!("acked={acked_data}")),
        );

        let mut verdict_applied = false;
        if let Some(det) = self.detector.as_mut() {
            if det.kind() == DetectorKind::Eifel {
                if let Some(snap) = det.snapshot().copied() {
                    let covers = ack.gt(snap.retrans_seq);
                    let echoed = seg.timestamp().map(|t| t.1).unwrap_or(SimTime::MAX);
                    if let Verdict::Spurious { cwnd, ssthresh } = det.eifel_on_ack(covers, echoed) {
                        self.cwnd = cwnd;
                        self.ssthresh = ssthresh;
                        self.recovery = None;
                        self.acked_carry = 0;
                        self.stats.spurious_detections += 1;
                        let r = self
                            .rec(ctx.now, EventKind::SpuriousEifel)
                            .seq(snap.retrans_seq.0 as u64)
                            .ack(ack.0 as u64)
                            .window(self.bytes(cwnd), self.bytes(ssthresh))
                            .detail(format!(
                                "echo={} retrans_ts={}",
                                echoed.as_micros(),
                                snap.retrans_ts_val.as_micros()
                            ));
                        ctx.tracer.push(r);
                        self.trace_window(ctx, EventKind::Cwnd, "eifel_restore");
                        self.trace_window(ctx, EventKind::Ssthresh, "eifel_restore");
                        verdict_applied = true;
                    }
                }
            } else {
                det.dsack_expire(ack);
            }
        }

        if let Some(rec) = self.recovery {
            if ack.ge(rec.recover) {
                self.recovery = None;
            } else if rec.kind == RecoveryKind::Fast && !verdict_applied {
                // partial ACK: the next hole is lost too
                self.retransmit_front(ctx, "partial", false);
            }
        }

        if !verdict_applied {
            self.grow(acked_data, ctx);
        }
        self.check_window_invariants()?;

        self.rto_deadline = if self.outstanding.is_empty() {
            None
        } else {
            Some(ctx.now + self.rtt.rto())
        };
        Ok(verdict_applied)
    }

    fn check_dsack(&mut self, seg: &Segment, ctx: &mut Ctx<'_>) -> Result<(), SimError> {
        let Some(det) = self.detector.as_mut() else {
            return Ok(());
        };
        if det.kind() != DetectorKind::Dsack || !det.is_armed() {
            return Ok(());
        }
        let first = seg.sack().and_then(|b| b.first()).copied();
        if let Some(b) = first {
            if !b.is_valid() {
                ctx.tracer.push(
                    self.rec(ctx.now, EventKind::Ack)
                        .ack(seg.ack.0 as u64)
                        .detail("malformed sack ignored"),
                );
                return Ok(());
            }
        }
        let cwnd = self.cwnd;
        let snap = det.snapshot().copied().expect("armed");
        if let Verdict::Spurious { cwnd: saved, ssthresh } = det.dsack_on_ack(seg.ack, first, cwnd) {
            let ss = det.slow_start();
            self.stats.spurious_detections += 1;
            self.ssthresh = ssthresh;
            self.recovery = None;
            let r = self
                .rec(ctx.now, EventKind::SpuriousDsack)
                .seq(snap.retrans_seq.0 as u64)
                .ack(seg.ack.0 as u64)
                .window(self.bytes(saved), self.bytes(ssthresh))
                .detail("duplicate report of retransmission");
            ctx.tracer.push(r);
            self.trace_window(ctx, EventKind::Ssthresh, "dsack_restore");
            if ss.active {
                let r = self
                    .rec(ctx.now, EventKind::DsackSsBegin)
                    .window(self.bytes(self.cwnd), self.bytes(self.ssthresh))
                    .detail(format!("target={}", self.bytes(ss.target_cwnd)));
                ctx.tracer.push(r);
            }
        }
        self.check_window_invariants()
    }

    fn grow(&mut self, acked_data: u32, ctx: &mut Ctx<'_>) {
        if acked_data == 0 {
            return;
        }
        if let Some(det) = self.detector.as_mut() {
            if det.slow_start().active {
                let g = det.dsack_growth_on_ack(self.cwnd);
                self.cwnd = g.cwnd;
                self.trace_window(ctx, EventKind::Cwnd, "dsack_ss");
                if g.finished {
                    self.trace_window(ctx, EventKind::DsackSsEnd, "reached");
                }
                return;
            }
        }
        let calls = match self.cfg.ack_mode {
            AckMode::PerAck => 1,
            AckMode::PerMss => {
                self.acked_carry += acked_data;
                let n = self.acked_carry / self.cfg.mss;
                self.acked_carry %= self.cfg.mss;
                n
            }
        };
        if calls == 0 {
            return;
        }
        let mut phase = "ca";
        for _ in 0..calls {
            if self.cwnd < self.ssthresh {
                self.cwnd += 1.0;
                phase = "ss";
            } else {
                let w = ctx.others_cwnd + self.cwnd;
                self.cwnd = self.cfg.cc.on_ack(self.cwnd, w);
            }
        }
        self.trace_window(ctx, EventKind::Cwnd, phase);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wire::TcpOption;

    struct Harness {
        tracer: Tracer,
        out: Outbox,
        now: SimTime,
    }

    impl Harness {
        fn new() -> Self {
            Harness {
                tracer: Tracer::new(),
                out: Outbox::default(),
                now: SimTime::ZERO,
            }
        }

        fn ctx(&mut self) -> Ctx<'_> {
            Ctx {
                now: self.now,
                tracer: &mut self.tracer,
                out: &mut self.out,
                others_cwnd: 0.0,
            }
        }

        fn take(&mut self) -> Vec<Segment> {
            std::mem::take(&mut self.out.segments)
        }

        fn events(&mut self) -> Vec<SubflowEvent> {
            std::mem::take(&mut self.out.events)
        }
    }

    fn pair(cfg: SubflowConfig) -> (Subflow, Subflow, Harness) {
        let a = Address::new(1, 0);
        let b = Address::new(2, 0);
        let mut client = Subflow::new(
            0,
            0,
            a,
            b,
            40000,
            21,
            Some(TcpOption::MpCapable { token: 9 }),
            cfg.clone(),
        );
        let mut server = Subflow::new(0, 1, b, a, 21, 40000, Some(TcpOption::MpCapable { token: 9 }), cfg);
        let mut h = Harness::new();
        server.listen(&mut h.ctx()).unwrap();
        client.connect(&mut h.ctx()).unwrap();
        let syn = h.take();
        server.on_segment(&syn[0], &mut h.ctx()).unwrap();
        let synack = h.take();
        assert!(synack[0].flags.contains(Flags::SYN | Flags::ACK));
        client.on_segment(&synack[0], &mut h.ctx()).unwrap();
        let ack = h.take();
        server.on_segment(&ack[0], &mut h.ctx()).unwrap();
        h.take();
        h.events();
        assert!(client.is_established() && server.is_established());
        (client, server, h)
    }

    fn data(dsn: u64, len: usize) -> SendItem {
        SendItem::Data {
            dsn: Some(dsn),
            bytes: Bytes::from(vec![0u8; len]),
        }
    }

    fn data_seg(from: &Subflow, seq: u32, len: usize) -> Segment {
        from.segment_for(SubflowSeq(seq), &data(seq as u64, len), SimTime::ZERO)
    }

    #[test]
    fn transition_table() {
        use SubflowConnState::*;
        let all = [Closed, Listen, SynSent, SynRcvd, Established, Closing];
        let allowed: Vec<_> = all
            .iter()
            .flat_map(|f| all.iter().map(move |t| (*f, *t)))
            .filter(|(f, t)| f.can_transition(*t))
            .collect();
        assert_eq!(allowed.len(), 6 + 5);
        assert!(!Established.can_transition(Closed));
        assert!(!SynSent.can_transition(SynRcvd));
        assert!(Listen.can_transition(Closing));
    }

    #[test]
    fn handshake_states_and_first_data_seq() {
        let (client, server, h) = pair(SubflowConfig::default());
        assert_eq!(client.snd_nxt(), SubflowSeq(0));
        assert_eq!(server.rcv_nxt(), SubflowSeq(0));
        let states: Vec<_> = h
            .tracer
            .records()
            .iter()
            .filter(|r| r.kind == EventKind::State)
            .map(|r| (r.conn_id, r.detail.clone()))
            .collect();
        assert_eq!(
            states,
            vec![
                (1, "CLOSED->LISTEN".to_string()),
                (0, "CLOSED->SYN_SENT".to_string()),
                (1, "LISTEN->SYN_RCVD".to_string()),
                (0, "SYN_SENT->ESTABLISHED".to_string()),
                (1, "SYN_RCVD->ESTABLISHED".to_string()),
            ]
        );
    }

    #[test]
    fn in_order_data_is_delivered_and_acked() {
        let (client, mut server, mut h) = pair(SubflowConfig::default());
        server.on_segment(&data_seg(&client, 0, 1400), &mut h.ctx()).unwrap();
        let acks = h.take();
        assert_eq!(acks.len(), 1);
        assert_eq!(acks[0].ack, SubflowSeq(1400));
        assert!(acks[0].sack().is_none());
        assert_eq!(server.rcv_nxt(), SubflowSeq(1400));
        assert!(matches!(
            h.events().as_slice(),
            [SubflowEvent::Delivered {
                item: Delivered::Data { dsn: Some(0), .. },
                ..
            }]
        ));
    }

    #[test]
    fn hole_triggers_dup_ack_with_segment_as_first_block() {
        let (client, mut server, mut h) = pair(SubflowConfig::default());
        server.on_segment(&data_seg(&client, 1400, 1400), &mut h.ctx()).unwrap();
        let acks = h.take();
        assert_eq!(acks[0].ack, SubflowSeq(0));
        assert_eq!(
            acks[0].sack().unwrap()[0],
            SackBlock::new(SubflowSeq(1400), SubflowSeq(2800))
        );
        assert!(h.events().is_empty());
        // filling the hole delivers both
        server.on_segment(&data_seg(&client, 0, 1400), &mut h.ctx()).unwrap();
        assert_eq!(h.take()[0].ack, SubflowSeq(2800));
        assert_eq!(h.events().len(), 2);
    }

    #[test]
    fn already_received_data_produces_dsack() {
        let (client, mut server, mut h) = pair(SubflowConfig::default());
        server.on_segment(&data_seg(&client, 0, 1400), &mut h.ctx()).unwrap();
        server.on_segment(&data_seg(&client, 1400, 1400), &mut h.ctx()).unwrap();
        h.take();
        h.events();
        server.on_segment(&data_seg(&client, 0, 1400), &mut h.ctx()).unwrap();
        let acks = h.take();
        assert_eq!(acks[0].ack, SubflowSeq(2800));
        assert_eq!(
            acks[0].sack().unwrap()[0],
            SackBlock::new(SubflowSeq(0), SubflowSeq(1400))
        );
        assert!(h.events().is_empty(), "duplicate must not be re-delivered");
    }

    #[test]
    fn try_send_respects_window() {
        let cfg = SubflowConfig {
            initial_cwnd: 2.0,
            ..Default::default()
        };
        let (mut client, _server, mut h) = pair(cfg);
        for i in 0..5 {
            client.enqueue(data(i * 1400, 1400));
        }
        assert_eq!(client.try_send(&mut h.ctx()), 2);
        assert_eq!(client.flight_bytes(), 2800);

        let (mut client, _s, mut h) = pair(SubflowConfig {
            initial_cwnd: 3.7,
            ..Default::default()
        });
        for i in 0..5 {
            client.enqueue(data(i * 1400, 1400));
        }
        assert_eq!(client.try_send(&mut h.ctx()), 3);
    }

    #[test]
    fn sent_data_carries_dsn_and_timestamp() {
        let (mut client, _s, mut h) = pair(SubflowConfig::default());
        h.now = SimTime::from_micros(777);
        client.enqueue(data(1000, 1400));
        client.try_send(&mut h.ctx());
        let seg = &h.take()[0];
        assert_eq!(seg.dsn(), Some((1000, SubflowSeq(0), 1400)));
        assert_eq!(seg.timestamp().unwrap().0, SimTime::from_micros(777));
    }

    fn ack_seg(server: &Subflow, ack: u32, sack: Option<Vec<SackBlock>>, echo: SimTime) -> Segment {
        let mut opts = vec![TcpOption::Timestamp {
            ts_val: SimTime::ZERO,
            ts_echo: echo,
        }];
        if let Some(b) = sack {
            opts.push(TcpOption::Sack(b));
        }
        Segment {
            src_addr: server.local(),
            dst_addr: server.remote(),
            src_port: 21,
            dst_port: 40000,
            seq: server.snd_nxt(),
            ack: SubflowSeq(ack),
            flags: Flags::ACK,
            options: opts,
            payload: Bytes::new(),
        }
    }

    fn loaded(cfg: SubflowConfig, segs: u64) -> (Subflow, Subflow, Harness) {
        let (mut c, s, mut h) = pair(cfg);
        for i in 0..segs {
            c.enqueue(data(i * 1400, 1400));
        }
        c.try_send(&mut h.ctx());
        h.take();
        (c, s, h)
    }

    #[test]
    fn three_dup_acks_trigger_one_fast_retransmit() {
        let cfg = SubflowConfig {
            initial_cwnd: 10.0,
            ..Default::default()
        };
        let (mut c, s, mut h) = loaded(cfg, 10);
        for _ in 0..3 {
            c.on_segment(&ack_seg(&s, 0, None, SimTime::ZERO), &mut h.ctx())
                .unwrap();
        }
        let out = h.take();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].seq, SubflowSeq(0));
        assert_eq!(out[0].payload_len(), 1400);
        assert_eq!(c.stats().retransmissions, 1);
        // flight was 10 segments
        assert_eq!(c.ssthresh(), 5.0);
        assert_eq!(c.cwnd(), 5.0);
        // further dup ACKs do not retransmit again
        c.on_segment(&ack_seg(&s, 0, None, SimTime::ZERO), &mut h.ctx())
            .unwrap();
        assert!(h.take().is_empty());
    }

    #[test]
    fn new_ack_resets_dup_counter() {
        let cfg = SubflowConfig {
            initial_cwnd: 10.0,
            ..Default::default()
        };
        let (mut c, s, mut h) = loaded(cfg, 10);
        for _ in 0..2 {
            c.on_segment(&ack_seg(&s, 0, None, SimTime::ZERO), &mut h.ctx())
                .unwrap();
        }
        assert_eq!(c.dup_acks(), 2);
        c.on_segment(&ack_seg(&s, 1400, None, SimTime::ZERO), &mut h.ctx())
            .unwrap();
        assert_eq!(c.dup_acks(), 0);
        assert_eq!(c.stats().retransmissions, 0);
    }

    #[test]
    fn cumulative_ack_of_two_segments_grows_twice() {
        let cfg = SubflowConfig {
            initial_cwnd: 10.0,
            initial_ssthresh: 2.0,
            cc: CcAlgorithm::Uncoupled,
            ..Default::default()
        };
        let (mut c, s, mut h) = loaded(cfg.clone(), 4);
        c.on_segment(&ack_seg(&s, 2800, None, SimTime::ZERO), &mut h.ctx())
            .unwrap();
        let expect = {
            let w = 10.0 + 1.0 / 10.0;
            w + 1.0 / w
        };
        assert_eq!(c.cwnd(), expect);

        let (mut c, s, mut h) = loaded(
            SubflowConfig {
                ack_mode: AckMode::PerAck,
                ..cfg
            },
            4,
        );
        c.on_segment(&ack_seg(&s, 2800, None, SimTime::ZERO), &mut h.ctx())
            .unwrap();
        assert_eq!(c.cwnd(), 10.1);
    }

    #[test]
    fn ack_above_snd_nxt_is_ignored() {
        let (mut c, s, mut h) = loaded(SubflowConfig::default(), 1);
        c.on_segment(&ack_seg(&s, 99_999, None, SimTime::ZERO), &mut h.ctx())
            .unwrap();
        assert_eq!(c.snd_una(), SubflowSeq(0));
        assert!(h.tracer.records().iter().any(|r| r.detail.contains("invalid")));
    }

    #[test]
    fn rto_reduces_window_and_backs_off() {
        let cfg = SubflowConfig {
            initial_cwnd: 10.0,
            detector: Some(DetectorKind::Eifel),
            ..Default::default()
        };
        let (mut c, _s, mut h) = loaded(cfg, 10);
        let first = c.rto_deadline().unwrap();
        assert_eq!(first, SimTime::from_secs(1));
        h.now = first;
        c.on_timer(&mut h.ctx()).unwrap();
        let out = h.take();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].seq, SubflowSeq(0));
        assert_eq!(c.cwnd(), 1.0);
        assert_eq!(c.ssthresh(), 5.0);
        let snap = c.detector().unwrap().snapshot().unwrap();
        assert_eq!(snap.saved_cwnd, 10.0);
        assert_eq!(c.rto(), SimTime::from_secs(2));
        h.now = c.rto_deadline().unwrap();
        c.on_timer(&mut h.ctx()).unwrap();
        assert_eq!(c.rto(), SimTime::from_secs(4));
        // the oldest snapshot is kept
        assert_eq!(c.detector().unwrap().snapshot().unwrap().saved_cwnd, 10.0);
    }

    #[test]
    fn eifel_restores_on_late_original_ack() {
        let cfg = SubflowConfig {
            initial_cwnd: 10.0,
            initial_ssthresh: 20.0,
            detector: Some(DetectorKind::Eifel),
            ..Default::default()
        };
        let (mut c, s, mut h) = loaded(cfg, 10);
        h.now = SimTime::from_secs(1);
        c.on_timer(&mut h.ctx()).unwrap();
        assert_eq!(c.cwnd(), 1.0);
        // ACK echoing the original transmission time (t=0)
        h.now = SimTime::from_millis(1100);
        c.on_segment(&ack_seg(&s, 1400, None, SimTime::ZERO), &mut h.ctx())
            .unwrap();
        assert_eq!(c.cwnd(), 10.0);
        assert_eq!(c.ssthresh(), 20.0);
        assert_eq!(c.stats().spurious_detections, 1);
        let kinds: Vec<_> = h.tracer.records().iter().map(|r| r.kind).collect();
        let pos = kinds.iter().position(|k| *k == EventKind::SpuriousEifel).unwrap();
        assert_eq!(kinds[pos + 1], EventKind::Cwnd);
    }

    #[test]
    fn eifel_genuine_keeps_reduction() {
        let cfg = SubflowConfig {
            initial_cwnd: 10.0,
            detector: Some(DetectorKind::Eifel),
            ..Default::default()
        };
        let (mut c, s, mut h) = loaded(cfg, 10);
        h.now = SimTime::from_secs(1);
        c.on_timer(&mut h.ctx()).unwrap();
        h.now = SimTime::from_millis(1100);
        c.on_segment(&ack_seg(&s, 1400, None, SimTime::from_secs(1)), &mut h.ctx())
            .unwrap();
        assert!(c.cwnd() < 3.0);
        assert!(!c.detector().unwrap().is_armed());
    }

    #[test]
    fn dsack_starts_slow_start_to_saved_window() {
        let cfg = SubflowConfig {
            initial_cwnd: 10.0,
            detector: Some(DetectorKind::Dsack),
            ..Default::default()
        };
        let (mut c, s, mut h) = loaded(cfg, 10);
        h.now = SimTime::from_secs(1);
        c.on_timer(&mut h.ctx()).unwrap();
        // original arrives: cumulative ACK covers the first segment
        c.on_segment(&ack_seg(&s, 1400, None, SimTime::ZERO), &mut h.ctx())
            .unwrap();
        let dsack = vec![SackBlock::new(SubflowSeq(0), SubflowSeq(1400))];
        c.on_segment(&ack_seg(&s, 1400, Some(dsack), SimTime::ZERO), &mut h.ctx())
            .unwrap();
        let ss = c.detector().unwrap().slow_start();
        assert!(ss.active);
        assert_eq!(ss.target_cwnd, 10.0);
        assert_eq!(c.dup_acks(), 0, "a DSACK is not a loss signal");
        let before = c.cwnd();
        c.on_segment(&ack_seg(&s, 2800, None, SimTime::ZERO), &mut h.ctx())
            .unwrap();
        assert_eq!(c.cwnd(), before + 1.0);
    }

    #[test]
    fn reset_aborts_without_transition() {
        let (mut c, s, mut h) = pair(SubflowConfig::default());
        let rst = Segment {
            flags: Flags::RST,
            seq: c.rcv_nxt(),
            ..ack_seg(&s, 0, None, SimTime::ZERO)
        };
        c.on_segment(&rst, &mut h.ctx()).unwrap();
        assert!(c.is_aborted());
        assert_eq!(c.state(), SubflowConnState::Established);
    }

    #[test]
    fn close_handshake_reaches_closed() {
        let (mut c, mut s, mut h) = pair(SubflowConfig::default());
        c.close(&mut h.ctx()).unwrap();
        let fin = h.take();
        assert!(fin[0].flags.contains(Flags::FIN));
        s.on_segment(&fin[0], &mut h.ctx()).unwrap();
        assert!(h.events().iter().any(|e| matches!(e, SubflowEvent::PeerFin { .. })));
        s.close(&mut h.ctx()).unwrap();
        let replies = h.take();
        let finack = replies.iter().find(|r| r.flags.contains(Flags::FIN)).unwrap().clone();
        assert_eq!(s.state(), SubflowConnState::Closing);
        c.on_segment(&finack, &mut h.ctx()).unwrap();
        assert_eq!(c.state(), SubflowConnState::Closed);
        let last = h.take();
        s.on_segment(last.last().unwrap(), &mut h.ctx()).unwrap();
        assert_eq!(s.state(), SubflowConnState::Closed);
        // retransmitted FIN after close is re-acknowledged
        c.on_segment(&finack, &mut h.ctx()).unwrap();
        let reack = h.take();
        assert_eq!(reack.len(), 1);
        assert!(!reack[0].flags.contains(Flags::RST));
    }

    #[test]
    fn unexpected_segment_in_listen_gets_rst() {
        let cfg = SubflowConfig::default();
        let mut s = Subflow::new(0, 1, Address::new(2, 0), Address::new(1, 0), 21, 40000, None, cfg);
        let mut h = Harness::new();
        s.listen(&mut h.ctx()).unwrap();
        let stray = Segment {
            src_addr: Address::new(1, 0),
            dst_addr: Address::new(2, 0),
            src_port: 40000,
            dst_port: 21,
            seq: SubflowSeq(5),
            ack: SubflowSeq(5),
            flags: Flags::ACK,
            options: vec![],
            payload: Bytes::from_static(b"x"),
        };
        s.on_segment(&stray, &mut h.ctx()).unwrap();
        assert!(h.take()[0].flags.contains(Flags::RST));
        assert_eq!(s.state(), SubflowConnState::Listen);
    }
}
