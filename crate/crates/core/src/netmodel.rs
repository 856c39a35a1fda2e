// SPDX-License-Identifier: Apache-2.0

//! Hosts, addresses and point-to-point links.
//!
//! A link has a fixed bandwidth, a piecewise-constant one-way delay and an
//! i.i.d. Bernoulli loss rate. Each direction serializes packets FIFO; a
//! drop in the delay schedule never lets a later packet overtake an earlier
//! one on the same direction.

use std::fmt;
use std::net::Ipv4Addr;
use std::str::FromStr;

use crate::error::ConfigError;
use crate::simcore::{Rng, SimTime};

/// An interface address. Rendered as `10.<iface>.0.<host>`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Address(Ipv4Addr);

impl Address {
    pub fn new(host: u8, iface: u8) -> Self {
        Address(Ipv4Addr::new(10, iface, 0, host))
    }

    pub fn host(self) -> u8 {
        self.0.octets()[3]
    }

    pub fn iface(self) -> u8 {
        self.0.octets()[1]
    }

    pub fn octets(self) -> [u8; 4] {
        self.0.octets()
    }

    pub fn from_octets(o: [u8; 4]) -> Self {
        Address(Ipv4Addr::from(o))
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Piecewise-constant one-way delay: `(from_time, delay)` entries sorted by
/// `from_time`, the first starting at zero.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DelaySchedule(Vec<(SimTime, SimTime)>);

impl DelaySchedule {
    pub fn constant(delay: SimTime) -> Self {
        DelaySchedule(vec![(SimTime::ZERO, delay)])
    }

    pub fn new(entries: Vec<(SimTime, SimTime)>) -> Result<Self, ConfigError> {
        let Some(first) = entries.first() else {
            return Err(ConfigError::invalid("delay_schedule", "empty schedule"));
        };
        if first.0 != SimTime::ZERO {
            return Err(ConfigError::invalid("delay_schedule", "first entry must start at 0"));
        }
        if entries.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(ConfigError::invalid(
                "delay_schedule",
                "entry times must be strictly increasing",
            ));
        }
        Ok(DelaySchedule(entries))
    }

    pub fn entries(&self) -> &[(SimTime, SimTime)] {
        &self.0
    }

    /// Delay of the latest entry whose start is `<= t`.
    pub fn delay_at(&self, t: SimTime) -> SimTime {
        let idx = self.0.partition_point(|(from, _)| *from <= t);
        self.0[idx.saturating_sub(1)].1
    }
}

impl fmt::Display for DelaySchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (from, d)) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{}:{}", format_duration(*from), format_duration(*d))?;
        }
        Ok(())
    }
}

impl FromStr for DelaySchedule {
    type Err = ConfigError;

    /// `0:10ms,2s:150ms`
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut entries = Vec::new();
        for part in s.split(',') {
            let (from, delay) = part.split_once(':').ok_or_else(|| {
                ConfigError::invalid("delay_schedule", format!("expected <time>:<delay> in {part:?}"))
            })?;
            entries.push((parse_duration(from)?, parse_duration(delay)?));
        }
        DelaySchedule::new(entries)
    }
}

/// Parses `150ms`, `2s`, `500us`, `1.5s`; a bare integer is microseconds.
pub fn parse_duration(s: &str) -> Result<SimTime, ConfigError> {
    let s = s.trim();
    let (num, scale) = if let Some(n) = s.strip_suffix("us") {
        (n, 1.0)
    } else if let Some(n) = s.strip_suffix("ms") {
        (n, 1e3)
    } else if let Some(n) = s.strip_suffix('s') {
        (n, 1e6)
    } else {
        (s, 1.0)
    };
    let v: f64 = num
        .trim()
        .parse()
        .map_err(|_| ConfigError::invalid("duration", format!("cannot parse {s:?}")))?;
    if !v.is_finite() || v < 0.0 {
        return Err(ConfigError::invalid("duration", format!("{s:?} must be >= 0")));
    }
    Ok(SimTime::from_micros((v * scale).round() as u64))
}

pub fn format_duration(t: SimTime) -> String {
    let us = t.as_micros();
    if us == 0 {
        "0".into()
    } else if us % 1_000_000 == 0 {
        format!("{}s", us / 1_000_000)
    } else if us % 1_000 == 0 {
        format!("{}ms", us / 1_000)
    } else {
        format!("{us}us")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    /// From the first endpoint towards the second.
    Forward,
    Reverse,
}

impl Direction {
    fn index(self) -> usize {
        match self {
            Direction::Forward => 0,
            Direction::Reverse => 1,
        }
    }
}

#[derive(Clone, Copy, Debug, Default)]
struct DirState {
    busy_until: SimTime,
    last_delivery: SimTime,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Transmission {
    Delivered(SimTime),
    Dropped,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinkParams {
    pub bandwidth_bps: u64,
    pub delay: DelaySchedule,
    pub loss_rate: f64,
}

impl Default for LinkParams {
    fn default() -> Self {
        LinkParams {
            bandwidth_bps: 500_000,
            delay: DelaySchedule::constant(SimTime::from_millis(10)),
            loss_rate: 0.0,
        }
    }
}

impl LinkParams {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.bandwidth_bps == 0 {
            return Err(ConfigError::invalid("bandwidth", "must be > 0"));
        }
        if !(0.0..=1.0).contains(&self.loss_rate) {
            return Err(ConfigError::invalid("loss_rate", "must be within [0, 1]"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct Link {
    params: LinkParams,
    endpoints: (Address, Address),
    dirs: [DirState; 2],
    transmitted: u64,
    dropped: u64,
}

impl Link {
    pub fn new(params: LinkParams, a: Address, b: Address) -> Self {
        Link {
            params,
            endpoints: (a, b),
            dirs: [DirState::default(); 2],
            transmitted: 0,
            dropped: 0,
        }
    }

    pub fn params(&self) -> &LinkParams {
        &self.params
    }

    pub fn endpoints(&self) -> (Address, Address) {
        self.endpoints
    }

    /// Direction for a packet from `src` to `dst`, if this link joins them.
    pub fn direction(&self, src: Address, dst: Address) -> Option<Direction> {
        match self.endpoints {
            (a, b) if a == src && b == dst => Some(Direction::Forward),
            (a, b) if a == dst && b == src => Some(Direction::Reverse),
            _ => None,
        }
    }

    pub fn delay_at(&self, t: SimTime) -> SimTime {
        self.params.delay.delay_at(t)
    }

    pub fn serialization_time(&self, bytes: usize) -> SimTime {
        let bits = bytes as u128 * 8 * 1_000_000;
        let bw = self.params.bandwidth_bps as u128;
        SimTime::from_micros(bits.div_ceil(bw) as u64)
    }

    pub fn transmit(&mut self, dir: Direction, packet_bytes: usize, now: SimTime, rng: &mut Rng) -> Transmission {
        debug_assert!(packet_bytes > 0);
        self.transmitted += 1;
        if rng.uniform() < self.params.loss_rate {
            self.dropped += 1;
            return Transmission::Dropped;
        }
        let ser = self.serialization_time(packet_bytes);
        let delay = self.delay_at(now);
        let st = &mut self.dirs[dir.index()];
        let done = st.busy_until.max(now) + ser;
        st.busy_until = done;
        let at = (done + delay).max(st.last_delivery);
        st.last_delivery = at;
        Transmission::Delivered(at)
    }

    /// `(transmitted, dropped)` packet counters.
    pub fn counters(&self) -> (u64, u64) {
        (self.transmitted, self.dropped)
    }
}
