// SPDX-License-Identifier: Apache-2.0

//! Builds the client/server topology from a [`ScenarioConfig`] and runs one
//! transfer to completion or to the time limit.
//!
//! Link `N` joins client interface `N` (`10.N.0.1`) to server interface `N`
//! (`10.N.0.2`). Segments are encoded when they enter a link and decoded
//! when they arrive.

use std::collections::BTreeMap;

use bytes::Bytes;

use crate::app::goodput_bps;
use crate::config::ScenarioConfig;
use crate::error::SimError;
use crate::mptcp::{Connection, EndpointConfig, MpState, Role};
use crate::netmodel::{Address, Link, Transmission};
use crate::simcore::{EventHandle, Rng, Scheduler, SimTime, World};
use crate::subflow::SubflowConfig;
use crate::trace::{EventKind, TraceRecord, Tracer};
use crate::wire::Segment;

pub const CLIENT_HOST: u8 = 1;
pub const SERVER_HOST: u8 = 2;

const LOSS_STREAM: u64 = 0;
const TOKEN_STREAM: u64 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct SubflowReport {
    pub id: u32,
    pub local: Address,
    pub remote: Address,
    pub bytes_sent: u64,
    pub retransmissions: u64,
    pub spurious_detections: u64,
    pub fast_retransmits: u64,
    pub timeouts: u64,
}

#[derive(Clone, Debug)]
pub struct Report {
    pub file_size: u64,
    pub bytes_delivered: u64,
    /// Checksum of the stream delivered to the sink.
    pub sink_checksum: u64,
    /// When the last byte reached the sink.
    pub finish_time: Option<SimTime>,
    pub goodput_bps: f64,
    pub multipath: bool,
    pub subflows: Vec<SubflowReport>,
    pub events_processed: u64,
    pub final_time: SimTime,
    pub trace: Vec<TraceRecord>,
}

impl Report {
    pub fn completed(&self) -> bool {
        self.finish_time.is_some()
    }

    /// Human-readable summary, one `key=value` item per line.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        let finish = self
            .finish_time
            .map_or("incomplete".to_string(), |t| format!("{:.6}", t.as_secs_f64()));
        s.push_str(&format!("finish_time_s={finish}\n"));
        s.push_str(&format!("goodput_bps={:.0}\n", self.goodput_bps));
        s.push_str(&format!("bytes_delivered={}\n", self.bytes_delivered));
        for sf in &self.subflows {
            s.push_str(&format!(
                "subflow {} {}->{} bytes_sent={} retransmissions={} spurious_detections={}\n",
                sf.id, sf.local, sf.remote, sf.bytes_sent, sf.retransmissions, sf.spurious_detections
            ));
        }
        s
    }
}

#[derive(Debug)]
enum Event {
    Start,
    Arrive { to: usize, wire: Bytes },
    Timer { endpoint: usize, subflow: usize },
}

struct Sim {
    links: Vec<Link>,
    endpoints: [Connection; 2],
    loss_rng: Rng,
    tracer: Tracer,
    timers: [BTreeMap<usize, (SimTime, EventHandle)>; 2],
    error: Option<SimError>,
    out: Vec<Segment>,
}

impl Sim {
    fn route(&mut self, sched: &mut Scheduler<Event>, from: usize) {
        let now = sched.now();
        for seg in std::mem::take(&mut self.out) {
            let found = self
                .links
                .iter()
                .enumerate()
                .find_map(|(i, l)| l.direction(seg.src_addr, seg.dst_addr).map(|d| (i, d)));
            let Some((li, dir)) = found else {
                self.tracer.push(
                    TraceRecord::new(now, from as u32, None, EventKind::Drop)
                        .seq(seg.seq.0 as u64)
                        .detail(format!("noroute {}->{}", seg.src_addr, seg.dst_addr)),
                );
                continue;
            };
            let wire = seg.encode();
            match self.links[li].transmit(dir, wire.len(), now, &mut self.loss_rng) {
                Transmission::Dropped => self.tracer.push(
                    TraceRecord::new(now, from as u32, None, EventKind::Drop)
                        .seq(seg.seq.0 as u64)
                        .ack(seg.ack.0 as u64)
                        .detail(format!("loss link={li} len={}", wire.len())),
                ),
                Transmission::Delivered(at) => {
                    let to = if seg.dst_addr.host() == CLIENT_HOST { 0 } else { 1 };
                    sched.schedule_at(at, Event::Arrive { to, wire });
                }
            }
        }
    }

    fn sync_timers(&mut self, sched: &mut Scheduler<Event>) {
        for ep in 0..2 {
            let deadlines: Vec<_> = self.endpoints[ep].rto_deadlines().collect();
            for (sf, deadline) in deadlines {
                let Some(d) = deadline else {
                    continue;
                };
                // a later deadline is picked up when the earlier event fires
                match self.timers[ep].get(&sf) {
                    Some((at, _)) if *at <= d => {}
                    existing => {
                        if let Some((_, h)) = existing {
                            sched.cancel(*h);
                        }
                        let h = sched.schedule_at(
                            d,
                            Event::Timer {
                                endpoint: ep,
                                subflow: sf,
                            },
                        );
                        self.timers[ep].insert(sf, (d, h));
                    }
                }
            }
        }
    }

    fn step(&mut self, sched: &mut Scheduler<Event>, ev: Event) -> Result<usize, SimError> {
        let now = sched.now();
        match ev {
            Event::Start => {
                self.endpoints[0].start(now, &mut self.tracer, &mut self.out)?;
                Ok(0)
            }
            Event::Arrive { to, wire } => {
                match Segment::decode(&wire) {
                    Ok(seg) => self.endpoints[to].on_segment(&seg, now, &mut self.tracer, &mut self.out)?,
                    Err(e) => self
                        .tracer
                        .push(TraceRecord::new(now, to as u32, None, EventKind::Drop).detail(e.to_string())),
                }
                Ok(to)
            }
            Event::Timer { endpoint, subflow } => {
                self.timers[endpoint].remove(&subflow);
                self.endpoints[endpoint].on_timer(subflow, now, &mut self.tracer, &mut self.out)?;
                Ok(endpoint)
            }
        }
    }
}

impl World<Event> for Sim {
    fn handle(&mut self, sched: &mut Scheduler<Event>, ev: Event) {
        match self.step(sched, ev) {
            Ok(from) => {
                self.route(sched, from);
                self.sync_timers(sched);
            }
            Err(e) => self.error = Some(e),
        }
    }

    fn halted(&self) -> bool {
        self.error.is_some() || self.endpoints.iter().all(|c| c.done_at().is_some())
    }
}

/// One configured run. `Scenario::new(cfg).run()` is the usual entry point.
#[derive(Clone, Debug)]
pub struct Scenario {
    cfg: ScenarioConfig,
    with_reorder_module: bool,
    tracing: bool,
}

impl Scenario {
    pub fn new(cfg: ScenarioConfig) -> Self {
        Scenario {
            cfg,
            with_reorder_module: true,
            tracing: true,
        }
    }

    /// Builds subflows with no reorder detector attached at all, as opposed
    /// to one configured as `none`.
    pub fn without_reorder_module(mut self) -> Self {
        self.with_reorder_module = false;
        self
    }

    /// Skips trace collection; the report's trace is then empty.
    pub fn without_trace(mut self) -> Self {
        self.tracing = false;
        self
    }

    fn subflow_config(&self) -> Result<SubflowConfig, SimError> {
        let cfg = &self.cfg;
        Ok(SubflowConfig {
            mss: cfg.mss,
            dupthresh: cfg.dupthresh,
            cc: cfg.cc()?,
            detector: self.with_reorder_module.then_some(cfg.reorder),
            ack_mode: cfg.ack_mode,
            initial_ssthresh: (cfg.rwnd as f64 / cfg.mss as f64).max(2.0),
            ..SubflowConfig::default()
        })
    }

    pub fn run(&self) -> Result<Report, SimError> {
        let cfg = &self.cfg;
        cfg.validate()?;
        let n = cfg.links.len();
        let client_addrs: Vec<Address> = (0..n).map(|i| Address::new(CLIENT_HOST, i as u8)).collect();
        let server_addrs: Vec<Address> = (0..n).map(|i| Address::new(SERVER_HOST, i as u8)).collect();
        let links = cfg
            .links
            .iter()
            .enumerate()
            .map(|(i, p)| Link::new(p.clone(), client_addrs[i], server_addrs[i]))
            .collect();
        let sub = self.subflow_config()?;
        let token = Rng::with_stream(cfg.seed, TOKEN_STREAM).next_u32();
        let endpoint = |role, id, local_addrs: &Vec<Address>| EndpointConfig {
            role,
            endpoint_id: id,
            local_addrs: local_addrs.clone(),
            server_addr: server_addrs[0],
            subflow: sub.clone(),
            rwnd: cfg.rwnd,
            mp_capable: role == Role::Client || cfg.server_mp_capable,
            token,
            file_size: cfg.file_size,
        };
        let mut sim = Sim {
            links,
            endpoints: [
                Connection::new(endpoint(Role::Client, 0, &client_addrs)),
                Connection::new(endpoint(Role::Server, 1, &server_addrs)),
            ],
            loss_rng: Rng::with_stream(cfg.seed, LOSS_STREAM),
            tracer: if self.tracing {
                Tracer::new()
            } else {
                Tracer::disabled()
            },
            timers: [BTreeMap::new(), BTreeMap::new()],
            error: None,
            out: Vec::new(),
        };
        let mut sched = Scheduler::new();
        sched.schedule_at(SimTime::ZERO, Event::Start);
        let summary = sched.run_until(&mut sim, cfg.sim_time_limit);
        if let Some(e) = sim.error.take() {
            return Err(e);
        }

        let [client, server] = &sim.endpoints;
        let finish_time = server.stream_done_at();
        let goodput = finish_time.map_or(0.0, |t| goodput_bps(cfg.file_size, t));
        let subflows = client
            .subflows()
            .iter()
            .map(|s| {
                let st = s.stats();
                SubflowReport {
                    id: s.id(),
                    local: s.local(),
                    remote: s.remote(),
                    bytes_sent: st.bytes_sent,
                    retransmissions: st.retransmissions,
                    spurious_detections: st.spurious_detections,
                    fast_retransmits: st.fast_retransmits,
                    timeouts: st.timeouts,
                }
            })
            .collect();
        let mut report = Report {
            file_size: cfg.file_size,
            bytes_delivered: server.bytes_delivered(),
            sink_checksum: server.sink_checksum().unwrap_or_default(),
            finish_time,
            goodput_bps: goodput,
            multipath: client.mp_state() == MpState::Multipath,
            subflows,
            events_processed: summary.events_processed,
            final_time: summary.final_time,
            trace: Vec::new(),
        };
        sim.tracer.push(
            TraceRecord::new(summary.final_time, 0, None, EventKind::Done).detail(format!(
                "summary finish_time_s={} goodput_bps={:.0} bytes_delivered={}",
                finish_time.map_or("incomplete".to_string(), |t| format!("{:.6}", t.as_secs_f64())),
                goodput,
                report.bytes_delivered
            )),
        );
        report.trace = sim.tracer.into_records();
        Ok(report)
    }
}

/// Runs a configured scenario; an unfinished transfer is an error.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<Report, SimError> {
    let report = Scenario::new(cfg.clone()).run()?;
    if !report.completed() {
        return Err(SimError::Incomplete(format!(
            "{} of {} bytes delivered by {}",
            report.bytes_delivered, report.file_size, report.final_time
        )));
    }
    Ok(report)
}
