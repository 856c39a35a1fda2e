// SPDX-License-Identifier: Apache-2.0

//! MPTCP connection endpoint: capability negotiation, address
//! advertisement, subflow joins, data scheduling over subflows, data-level
//! reassembly and connection close.
//!
//! The client is the data source and active opener; the server is the sink.
//! If the server's SYN-ACK lacks MP_CAPABLE the connection falls back to a
//! single plain TCP subflow with an implicit data mapping.

use std::collections::{BTreeMap, VecDeque};

use bytes::Bytes;

use crate::app::{BulkSource, Sink};
use crate::error::SimError;
use crate::netmodel::Address;
use crate::ranges::RangeSet;
use crate::simcore::SimTime;
use crate::subflow::{Ctx, Delivered, Outbox, SendItem, Subflow, SubflowConfig, SubflowConnState, SubflowEvent};
use crate::trace::{EventKind, TraceRecord, Tracer};
use crate::wire::{DataSeq, Flags, Segment, SubflowSeq, TcpOption};

pub const SERVER_PORT: u16 = 80;
pub const CLIENT_BASE_PORT: u16 = 40000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Role {
    Client,
    Server,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MpState {
    /// Handshake on the first subflow not finished yet.
    Pending,
    Multipath,
    Fallback,
}

#[derive(Clone, Debug)]
pub struct EndpointConfig {
    pub role: Role,
    /// Trace `conn_id` of this endpoint.
    pub endpoint_id: u32,
    /// Local interface addresses; the first carries the initial subflow.
    pub local_addrs: Vec<Address>,
    /// Client only: where the initial subflow connects to.
    pub server_addr: Address,
    pub subflow: SubflowConfig,
    pub rwnd: u64,
    pub mp_capable: bool,
    /// Client only: key offered in MP_CAPABLE.
    pub token: u32,
    /// Client only: bytes to send.
    pub file_size: u64,
}

/// Out-of-order buffer at the data level.
#[derive(Clone, Debug)]
pub struct Reassembler {
    rcv_nxt: DataSeq,
    rwnd: u64,
    pending: BTreeMap<DataSeq, Bytes>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Insert {
    Buffered,
    Duplicate,
    /// Starts at or beyond `rcv_nxt + rwnd`.
    BeyondWindow,
}

impl Reassembler {
    pub fn new(rwnd: u64) -> Self {
        Reassembler {
            rcv_nxt: 0,
            rwnd,
            pending: BTreeMap::new(),
        }
    }

    pub fn rcv_nxt(&self) -> DataSeq {
        self.rcv_nxt
    }

    pub fn buffered_bytes(&self) -> u64 {
        self.pending.values().map(|b| b.len() as u64).sum()
    }

    pub fn insert(&mut self, dsn: DataSeq, mut bytes: Bytes) -> Insert {
        let end = dsn + bytes.len() as u64;
        if end <= self.rcv_nxt {
            return Insert::Duplicate;
        }
        let limit = self.rcv_nxt + self.rwnd;
        if dsn >= limit {
            return Insert::BeyondWindow;
        }
        let mut dsn = dsn;
        if dsn < self.rcv_nxt {
            let cut = (self.rcv_nxt - dsn) as usize;
            bytes = bytes.slice(cut..);
            dsn = self.rcv_nxt;
        }
        if dsn + bytes.len() as u64 > limit {
            bytes.truncate((limit - dsn) as usize);
        }
        match self.pending.get(&dsn) {
            Some(existing) if existing.len() >= bytes.len() => Insert::Duplicate,
            _ => {
                self.pending.insert(dsn, bytes);
                Insert::Buffered
            }
        }
    }

    /// Next contiguous chunk at `rcv_nxt`, if any.
    pub fn pop_ready(&mut self) -> Option<Bytes> {
        loop {
            let (&dsn, _) = self.pending.first_key_value()?;
            if dsn > self.rcv_nxt {
                return None;
            }
            let bytes = self.pending.remove(&dsn).expect("present");
            let end = dsn + bytes.len() as u64;
            if end <= self.rcv_nxt {
                continue;
            }
            let chunk = bytes.slice((self.rcv_nxt - dsn) as usize..);
            self.rcv_nxt = end;
            return Some(chunk);
        }
    }
}

struct SourceState {
    source: BulkSource,
    next_dsn: DataSeq,
    acked: RangeSet,
    cum_acked: DataSeq,
    reinject: VecDeque<(DataSeq, Bytes)>,
    data_fin_sent: bool,
    data_fin_acked: bool,
}

struct SinkState {
    sink: Sink,
    reasm: Reassembler,
    final_dsn: Option<DataSeq>,
    // fallback: implicit mapping
    implicit_next: DataSeq,
}

pub struct Connection {
    cfg: EndpointConfig,
    subflows: Vec<Subflow>,
    outbox: Outbox,
    events: VecDeque<SubflowEvent>,
    mp: MpState,
    token: Option<u32>,
    remote_addrs: Vec<Address>,
    rr_next: usize,
    closing: bool,
    source: Option<SourceState>,
    sink: Option<SinkState>,
    done_at: Option<SimTime>,
}

impl Connection {
    pub fn new(cfg: EndpointConfig) -> Self {
        let (source, sink) = match cfg.role {
            Role::Client => (
                Some(SourceState {
                    source: BulkSource::new(cfg.file_size),
                    next_dsn: 0,
                    acked: RangeSet::new(),
                    cum_acked: 0,
                    reinject: VecDeque::new(),
                    data_fin_sent: false,
                    data_fin_acked: false,
                }),
                None,
            ),
            Role::Server => (
                None,
                Some(SinkState {
                    sink: Sink::new(),
                    reasm: Reassembler::new(cfg.rwnd),
                    final_dsn: None,
                    implicit_next: 0,
                }),
            ),
        };
        Connection {
            subflows: Vec::new(),
            outbox: Outbox::default(),
            events: VecDeque::new(),
            mp: MpState::Pending,
            token: None,
            remote_addrs: Vec::new(),
            rr_next: 0,
            closing: false,
            source,
            sink,
            done_at: None,
            cfg,
        }
    }

    pub fn role(&self) -> Role {
        self.cfg.role
    }

    pub fn mp_state(&self) -> MpState {
        self.mp
    }

    pub fn subflows(&self) -> &[Subflow] {
        &self.subflows
    }

    pub fn token(&self) -> Option<u32> {
        self.token
    }

    /// Time the endpoint finished: all subflows closed and, for the sink,
    /// the whole stream delivered.
    pub fn done_at(&self) -> Option<SimTime> {
        self.done_at
    }

    pub fn bytes_delivered(&self) -> u64 {
        self.sink.as_ref().map_or(0, |s| s.sink.received())
    }

    pub fn sink_checksum(&self) -> Option<u64> {
        self.sink.as_ref().map(|s| s.sink.checksum())
    }

    pub fn stream_done_at(&self) -> Option<SimTime> {
        self.sink.as_ref().and_then(|s| s.sink.done_at())
    }

    /// Data-level bytes acknowledged (source side).
    pub fn data_acked(&self) -> u64 {
        self.source.as_ref().map_or(0, |s| s.cum_acked)
    }

    pub fn rto_deadlines(&self) -> impl Iterator<Item = (usize, Option<SimTime>)> + '_ {
        self.subflows.iter().enumerate().map(|(i, s)| (i, s.rto_deadline()))
    }

    fn trace(&self, now: SimTime, sf: Option<u32>, kind: EventKind) -> TraceRecord {
        TraceRecord::new(now, self.cfg.endpoint_id, sf, kind)
    }

    fn others_cwnd(&self, idx: usize) -> f64 {
        self.subflows
            .iter()
            .enumerate()
            .filter(|(i, s)| *i != idx && s.is_established())
            .map(|(_, s)| s.cwnd())
            .sum()
    }

    fn call<R>(
        &mut self,
        idx: usize,
        now: SimTime,
        tracer: &mut Tracer,
        f: impl FnOnce(&mut Subflow, &mut Ctx<'_>) -> R,
    ) -> R {
        let others_cwnd = self.others_cwnd(idx);
        let mut ctx = Ctx {
            now,
            tracer,
            out: &mut self.outbox,
            others_cwnd,
        };
        let r = f(&mut self.subflows[idx], &mut ctx);
        self.events.extend(self.outbox.events.drain(..));
        r
    }

    fn flush(&mut self, out: &mut Vec<Segment>) {
        out.append(&mut self.outbox.segments);
    }

    fn new_subflow(
        &mut self,
        local: Address,
        remote: Address,
        lport: u16,
        rport: u16,
        syn_option: Option<TcpOption>,
    ) -> usize {
        let id = self.subflows.len();
        self.subflows.push(Subflow::new(
            id as u32,
            self.cfg.endpoint_id,
            local,
            remote,
            lport,
            rport,
            syn_option,
            self.cfg.subflow.clone(),
        ));
        id
    }

    /// Client: opens the initial subflow with MP_CAPABLE.
    pub fn start(&mut self, now: SimTime, tracer: &mut Tracer, out: &mut Vec<Segment>) -> Result<(), SimError> {
        if self.cfg.role != Role::Client || !self.subflows.is_empty() {
            return Ok(());
        }
        self.token = Some(self.cfg.token);
        let local = self.cfg.local_addrs[0];
        let opt = Some(TcpOption::MpCapable { token: self.cfg.token });
        let idx = self.new_subflow(local, self.cfg.server_addr, CLIENT_BASE_PORT, SERVER_PORT, opt);
        self.call(idx, now, tracer, |sf, ctx| sf.connect(ctx))?;
        self.pump(now, tracer)?;
        self.flush(out);
        Ok(())
    }

    fn find(&self, seg: &Segment) -> Option<usize> {
        self.subflows.iter().position(|s| {
            s.local() == seg.dst_addr
                && s.remote() == seg.src_addr
                && s.local_port() == seg.dst_port
                && s.remote_port() == seg.src_port
        })
    }

    fn reset_reply(&self, seg: &Segment, now: SimTime, tracer: &mut Tracer, out: &mut Vec<Segment>, why: &str) {
        tracer.push(
            self.trace(now, None, EventKind::Recv)
                .seq(seg.seq.0 as u64)
                .detail(format!("{why} -> rst")),
        );
        if seg.flags.contains(Flags::RST) {
            return;
        }
        let seq = if seg.flags.contains(Flags::ACK) {
            seg.ack
        } else {
            SubflowSeq(0)
        };
        out.push(Segment {
            src_addr: seg.dst_addr,
            dst_addr: seg.src_addr,
            src_port: seg.dst_port,
            dst_port: seg.src_port,
            seq,
            ack: seg.seq.add(seg.seq_len()),
            flags: Flags::RST | Flags::ACK,
            options: vec![],
            payload: Bytes::new(),
        });
    }

    pub fn on_segment(
        &mut self,
        seg: &Segment,
        now: SimTime,
        tracer: &mut Tracer,
        out: &mut Vec<Segment>,
    ) -> Result<(), SimError> {
        let idx = match self.find(seg) {
            Some(i) if self.subflows[i].is_aborted() => {
                self.reset_reply(seg, now, tracer, out, "segment for reset subflow");
                return Ok(());
            }
            Some(i) => i,
            None => match self.accept_new(seg, now, tracer, out)? {
                Some(i) => i,
                None => return Ok(()),
            },
        };
        self.call(idx, now, tracer, |sf, ctx| sf.on_segment(seg, ctx))?;
        self.pump(now, tracer)?;
        self.flush(out);
        Ok(())
    }

    /// Server: creates a listening subflow for an acceptable SYN.
    fn accept_new(
        &mut self,
        seg: &Segment,
        now: SimTime,
        tracer: &mut Tracer,
        out: &mut Vec<Segment>,
    ) -> Result<Option<usize>, SimError> {
        let is_syn = seg.flags.contains(Flags::SYN) && !seg.flags.contains(Flags::ACK);
        if self.cfg.role != Role::Server || !is_syn || seg.dst_port != SERVER_PORT || self.closing {
            self.reset_reply(seg, now, tracer, out, "no matching subflow");
            return Ok(None);
        }
        let syn_option = if self.subflows.is_empty() {
            match seg.mp_capable() {
                Some(token) if self.cfg.mp_capable => {
                    self.token = Some(token);
                    Some(TcpOption::MpCapable { token })
                }
                _ => {
                    self.mp = MpState::Fallback;
                    None
                }
            }
        } else {
            let token = seg.join();
            let addr_in_use = self
                .subflows
                .iter()
                .any(|s| !s.is_aborted() && (s.remote() == seg.src_addr || s.local() == seg.dst_addr));
            if self.mp != MpState::Multipath || token.is_none() || token != self.token || addr_in_use {
                let why = if token.is_some() && token == self.token {
                    "join for address in use"
                } else {
                    "join rejected"
                };
                self.reset_reply(seg, now, tracer, out, why);
                return Ok(None);
            }
            Some(TcpOption::Join {
                token: token.expect("checked"),
            })
        };
        let idx = self.new_subflow(seg.dst_addr, seg.src_addr, seg.dst_port, seg.src_port, syn_option);
        self.call(idx, now, tracer, |sf, ctx| sf.listen(ctx))?;
        Ok(Some(idx))
    }

    pub fn on_timer(
        &mut self,
        idx: usize,
        now: SimTime,
        tracer: &mut Tracer,
        out: &mut Vec<Segment>,
    ) -> Result<(), SimError> {
        if idx >= self.subflows.len() {
            return Ok(());
        }
        self.call(idx, now, tracer, |sf, ctx| sf.on_timer(ctx))?;
        self.pump(now, tracer)?;
        self.flush(out);
        Ok(())
    }

    fn pump(&mut self, now: SimTime, tracer: &mut Tracer) -> Result<(), SimError> {
        loop {
            while let Some(ev) = self.events.pop_front() {
                self.handle(ev, now, tracer)?;
            }
            self.schedule_data(now, tracer);
            self.maybe_finish(now, tracer)?;
            if self.events.is_empty() {
                break;
            }
        }
        self.check_done(now, tracer);
        Ok(())
    }

    fn handle(&mut self, ev: SubflowEvent, now: SimTime, tracer: &mut Tracer) -> Result<(), SimError> {
        match ev {
            SubflowEvent::Established { subflow, mp_token, .. } => {
                if subflow == 0 && self.mp == MpState::Pending {
                    self.mp = match self.cfg.role {
                        Role::Client if mp_token.is_some() => MpState::Multipath,
                        Role::Client => MpState::Fallback,
                        Role::Server => MpState::Multipath,
                    };
                    tracer.push(self.trace(now, Some(subflow), EventKind::State).detail(
                        if self.mp == MpState::Multipath {
                            "mptcp"
                        } else {
                            "fallback"
                        },
                    ));
                    if self.mp == MpState::Multipath {
                        self.announce_addresses(now, tracer);
                    }
                }
            }
            SubflowEvent::Delivered { subflow, item } => self.on_delivered(subflow, item, now, tracer)?,
            SubflowEvent::Acked { item, .. } => self.on_acked(item),
            SubflowEvent::PeerFin { subflow } => {
                let idx = subflow as usize;
                self.call(idx, now, tracer, |sf, ctx| sf.close(ctx))?;
            }
            SubflowEvent::Closed { .. } => {}
            SubflowEvent::Reset { subflow } => {
                let orphans = self.subflows[subflow as usize].take_orphans();
                if let Some(src) = self.source.as_mut() {
                    for item in orphans {
                        if let SendItem::Data { dsn: Some(d), bytes } = item {
                            src.reinject.push_back((d, bytes));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    fn announce_addresses(&mut self, now: SimTime, tracer: &mut Tracer) {
        let extra: Vec<Address> = self.cfg.local_addrs.iter().skip(1).copied().collect();
        if extra.is_empty() {
            return;
        }
        for a in extra {
            self.subflows[0].enqueue(SendItem::Addr(a));
        }
        self.call(0, now, tracer, |sf, ctx| sf.try_send(ctx));
    }

    fn on_delivered(
        &mut self,
        subflow: u32,
        item: Delivered,
        now: SimTime,
        tracer: &mut Tracer,
    ) -> Result<(), SimError> {
        match item {
            Delivered::Addr(addr) => {
                tracer.push(
                    self.trace(now, Some(subflow), EventKind::Recv)
                        .detail(format!("add_addr {addr}")),
                );
                if !self.remote_addrs.contains(&addr) {
                    self.remote_addrs.push(addr);
                    if self.cfg.role == Role::Client {
                        self.open_join(addr, now, tracer)?;
                    }
                }
            }
            Delivered::Data { dsn, bytes } => {
                let fallback = self.mp == MpState::Fallback;
                let id = self.cfg.endpoint_id;
                let Some(st) = self.sink.as_mut() else {
                    return Ok(());
                };
                let dsn = match dsn {
                    Some(d) if !fallback => d,
                    _ => {
                        let d = st.implicit_next;
                        st.implicit_next += bytes.len() as u64;
                        d
                    }
                };
                let len = bytes.len();
                if st.reasm.insert(dsn, bytes) == Insert::BeyondWindow {
                    tracer.push(
                        TraceRecord::new(now, id, Some(subflow), EventKind::Drop)
                            .seq(dsn)
                            .detail(format!("beyond receive window len={len}")),
                    );
                }
                while let Some(chunk) = st.reasm.pop_ready() {
                    let at = st.reasm.rcv_nxt() - chunk.len() as u64;
                    st.sink.consume(&chunk)?;
                    tracer.push(
                        TraceRecord::new(now, id, None, EventKind::Deliver)
                            .seq(at)
                            .detail(format!("len={}", chunk.len())),
                    );
                }
                if !fallback {
                    self.check_eos(now, tracer)?;
                }
            }
            Delivered::DataFin(d) => {
                if let Some(st) = self.sink.as_mut() {
                    st.final_dsn = Some(d);
                }
                self.check_eos(now, tracer)?;
            }
        }
        Ok(())
    }

    fn check_eos(&mut self, now: SimTime, tracer: &mut Tracer) -> Result<(), SimError> {
        let id = self.cfg.endpoint_id;
        let Some(st) = self.sink.as_mut() else {
            return Ok(());
        };
        if let Some(fin) = st.final_dsn {
            if st.reasm.rcv_nxt() == fin && !st.sink.is_done() {
                st.sink.finish(fin, now)?;
                tracer.push(
                    TraceRecord::new(now, id, None, EventKind::Done)
                        .seq(fin)
                        .detail("end of stream"),
                );
            }
        }
        Ok(())
    }

    fn open_join(&mut self, remote: Address, now: SimTime, tracer: &mut Tracer) -> Result<(), SimError> {
        if self.mp != MpState::Multipath || self.closing {
            return Ok(());
        }
        let in_use = |a: Address| self.subflows.iter().any(|s| !s.is_aborted() && s.local() == a);
        let unused: Vec<Address> = self.cfg.local_addrs.iter().copied().filter(|a| !in_use(*a)).collect();
        let Some(local) = unused
            .iter()
            .copied()
            .find(|a| a.iface() == remote.iface())
            .or_else(|| unused.first().copied())
        else {
            return Ok(());
        };
        let port = CLIENT_BASE_PORT + self.subflows.len() as u16;
        let token = self.token.expect("multipath has a token");
        let idx = self.new_subflow(local, remote, port, SERVER_PORT, Some(TcpOption::Join { token }));
        self.call(idx, now, tracer, |sf, ctx| sf.connect(ctx))
    }

    fn on_acked(&mut self, item: SendItem) {
        let fallback = self.mp == MpState::Fallback;
        let Some(src) = self.source.as_mut() else {
            return;
        };
        match item {
            SendItem::Data { dsn, bytes } => {
                let len = bytes.len() as u64;
                match dsn {
                    Some(d) if !fallback => {
                        src.acked.insert(d..d + len);
                    }
                    _ => {
                        let at = src.cum_acked;
                        src.acked.insert(at..at + len);
                    }
                }
                src.cum_acked = src.acked.contiguous_end(0);
            }
            SendItem::DataFin(_) => src.data_fin_acked = true,
            _ => {}
        }
    }

    fn usable(&self, idx: usize) -> bool {
        let s = &self.subflows[idx];
        s.is_established()
    }

    /// Round-robin over established subflows with window space.
    fn schedule_data(&mut self, now: SimTime, tracer: &mut Tracer) {
        if self.closing || self.source.is_none() || self.mp == MpState::Pending {
            return;
        }
        let mss = self.cfg.subflow.mss as u64;
        let n = self.subflows.len();
        loop {
            let src = self.source.as_mut().expect("checked");
            let (dsn, bytes) = if let Some((d, b)) = src.reinject.front() {
                (*d, b.clone())
            } else {
                let remaining = src.source.size() - src.next_dsn;
                let in_window = src.next_dsn - src.cum_acked;
                let room = self.cfg.rwnd.saturating_sub(in_window);
                let want = remaining.min(mss);
                if want == 0 || room < want {
                    break;
                }
                (src.next_dsn, src.source.read(src.next_dsn, want as usize))
            };
            let len = bytes.len() as u64;
            let pick = (0..n)
                .map(|k| (self.rr_next + k) % n)
                .find(|&i| self.usable(i) && self.subflows[i].window_space() >= len);
            let Some(idx) = pick else {
                break;
            };
            let src = self.source.as_mut().expect("checked");
            if src.reinject.front().is_some_and(|(d, _)| *d == dsn) {
                src.reinject.pop_front();
            } else {
                src.next_dsn += len;
            }
            let dsn_opt = (self.mp == MpState::Multipath).then_some(dsn);
            self.subflows[idx].enqueue(SendItem::Data { dsn: dsn_opt, bytes });
            tracer.push(
                self.trace(now, Some(idx as u32), EventKind::Sched)
                    .seq(dsn)
                    .detail(format!("len={len}")),
            );
            self.call(idx, now, tracer, |sf, ctx| sf.try_send(ctx));
            self.rr_next = (idx + 1) % n;
        }
    }

    /// Source side: DATA_FIN once everything is acked, close once it is.
    fn maybe_finish(&mut self, now: SimTime, tracer: &mut Tracer) -> Result<(), SimError> {
        let fallback = self.mp == MpState::Fallback;
        let Some(src) = self.source.as_mut() else {
            return Ok(());
        };
        if src.cum_acked < src.source.size() || self.closing {
            return Ok(());
        }
        if fallback {
            self.close_all(now, tracer)?;
            return Ok(());
        }
        if !src.data_fin_sent {
            let Some(idx) = self.subflows.iter().position(|s| s.is_established()) else {
                return Ok(());
            };
            src.data_fin_sent = true;
            let fin = src.source.size();
            self.subflows[idx].enqueue(SendItem::DataFin(fin));
            self.call(idx, now, tracer, |sf, ctx| sf.try_send(ctx));
        } else if src.data_fin_acked {
            self.close_all(now, tracer)?;
        }
        Ok(())
    }

    fn close_all(&mut self, now: SimTime, tracer: &mut Tracer) -> Result<(), SimError> {
        self.closing = true;
        for idx in 0..self.subflows.len() {
            let s = &self.subflows[idx];
            if s.is_aborted() {
                continue;
            }
            match s.state() {
                SubflowConnState::Established => self.call(idx, now, tracer, |sf, ctx| sf.close(ctx))?,
                SubflowConnState::Closed | SubflowConnState::Closing => {}
                _ => self.call(idx, now, tracer, |sf, ctx| sf.abort(ctx, true)),
            }
        }
        Ok(())
    }

    fn all_subflows_down(&self) -> bool {
        !self.subflows.is_empty()
            && self
                .subflows
                .iter()
                .all(|s| s.is_aborted() || s.state() == SubflowConnState::Closed)
    }

    fn check_done(&mut self, now: SimTime, tracer: &mut Tracer) {
        if self.done_at.is_some() || !self.all_subflows_down() {
            return;
        }
        let finished = match self.cfg.role {
            Role::Client => self.closing,
            Role::Server => self
                .sink
                .as_ref()
                .is_some_and(|s| s.sink.is_done() || self.mp == MpState::Fallback),
        };
        if !finished {
            return;
        }
        if self.mp == MpState::Fallback {
            // plain TCP: the peer FIN ends the stream
            let id = self.cfg.endpoint_id;
            if let Some(st) = self.sink.as_mut() {
                let n = st.sink.received();
                if !st.sink.is_done() && st.sink.finish(n, now).is_ok() {
                    tracer.push(
                        TraceRecord::new(now, id, None, EventKind::Done)
                            .seq(n)
                            .detail("end of stream"),
                    );
                }
            }
        }
        self.done_at = Some(now);
        tracer.push(self.trace(now, None, EventKind::Done).detail("connection closed"));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reassembly_in_order_and_gaps() {
        let mut r = Reassembler::new(10_000);
        assert_eq!(r.insert(100, Bytes::from(vec![1; 100])), Insert::Buffered);
        assert!(r.pop_ready().is_none());
        assert_eq!(r.insert(0, Bytes::from(vec![0; 100])), Insert::Buffered);
        assert_eq!(r.pop_ready().unwrap().len(), 100);
        assert_eq!(r.pop_ready().unwrap().len(), 100);
        assert_eq!(r.rcv_nxt(), 200);
        assert_eq!(r.insert(50, Bytes::from(vec![0; 100])), Insert::Duplicate);
    }

    #[test]
    fn reassembly_trims_overlap() {
        let mut r = Reassembler::new(10_000);
        r.insert(0, Bytes::from_static(b"abcd"));
        r.pop_ready();
        r.insert(2, Bytes::from_static(b"cdef"));
        assert_eq!(&r.pop_ready().unwrap()[..], b"ef");
    }

    #[test]
    fn reassembly_discards_beyond_window() {
        let mut r = Reassembler::new(1000);
        assert_eq!(r.insert(1000, Bytes::from(vec![0; 10])), Insert::BeyondWindow);
        assert_eq!(r.insert(990, Bytes::from(vec![0; 20])), Insert::Buffered);
        assert_eq!(r.buffered_bytes(), 10);
    }
}
