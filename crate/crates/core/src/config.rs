// SPDX-License-Identifier: Apache-2.0

//! Scenario configuration and its text format.
//!
//! ```text
//! # comments start with '#'
//! cc = linked_increases
//! a = 0.5
//! reorder = eifel
//! file_size = 2M
//!
//! [link.0]
//! bandwidth = 500k
//! delay = 10ms
//!
//! [link.1]
//! delay_schedule = 0:10ms,2s:150ms
//! loss_rate = 0.01
//! ```
//!
//! Global keys must precede the first section. Link sections are numbered
//! from 0 without gaps; with no sections the topology has two default links.
//! Sizes and bandwidths accept decimal `k`, `M` and `G` suffixes.

use std::collections::BTreeMap;
use std::path::PathBuf;

use crate::ccontrol::{CcAlgorithm, RttcSecondTerm};
use crate::error::ConfigError;
use crate::netmodel::{parse_duration, DelaySchedule, LinkParams};
use crate::reorder::DetectorKind;
use crate::simcore::SimTime;
use crate::subflow::AckMode;

pub const DEFAULT_LINKS: usize = 2;

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioConfig {
    pub cc_name: String,
    pub a: f64,
    pub rttc_second_term: RttcSecondTerm,
    pub reorder: DetectorKind,
    pub mss: u32,
    pub rwnd: u64,
    pub dupthresh: u32,
    pub file_size: u64,
    pub seed: u64,
    pub sim_time_limit: SimTime,
    pub trace_out: Option<PathBuf>,
    pub ack_mode: AckMode,
    /// Whether the server answers MP_CAPABLE; `false` forces plain TCP.
    pub server_mp_capable: bool,
    pub links: Vec<LinkParams>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            cc_name: "linked_increases".into(),
            a: 1.0,
            rttc_second_term: RttcSecondTerm::Total,
            reorder: DetectorKind::None,
            mss: 1400,
            rwnd: 65536,
            dupthresh: 3,
            file_size: 2_000_000,
            seed: 1,
            sim_time_limit: SimTime::from_secs(600),
            trace_out: None,
            ack_mode: AckMode::PerMss,
            server_mp_capable: true,
            links: vec![LinkParams::default(); DEFAULT_LINKS],
        }
    }
}

/// Global keys accepted by [`ScenarioConfig::set`].
pub const GLOBAL_KEYS: &[&str] = &[
    "cc",
    "a",
    "rttc_second_term",
    "reorder",
    "mss",
    "rwnd",
    "dupthresh",
    "file_size",
    "seed",
    "sim_time_limit",
    "trace_out",
    "ack_mode",
    "server_mp_capable",
];

pub const LINK_KEYS: &[&str] = &["bandwidth", "delay", "delay_schedule", "loss_rate"];

impl ScenarioConfig {
    pub fn cc(&self) -> Result<CcAlgorithm, ConfigError> {
        CcAlgorithm::from_parts(&self.cc_name, self.a, self.rttc_second_term)
    }

    /// Sets one global key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        match key {
            "cc" => {
                CcAlgorithm::from_parts(value, 1.0, RttcSecondTerm::Total)?;
                self.cc_name = value.to_string();
            }
            "a" => {
                let a: f64 = parse_num(key, value)?;
                if !(a.is_finite() && a > 0.0) {
                    return Err(ConfigError::invalid(key, "must be a positive number"));
                }
                self.a = a;
            }
            "rttc_second_term" => self.rttc_second_term = value.parse()?,
            "reorder" => self.reorder = value.parse()?,
            "mss" => {
                let mss = parse_size(key, value)?;
                if !(64..=65_000).contains(&mss) {
                    return Err(ConfigError::invalid(key, "must be within [64, 65000]"));
                }
                self.mss = mss as u32;
            }
            "rwnd" => {
                let rwnd = parse_size(key, value)?;
                if !(1..=(1 << 30)).contains(&rwnd) {
                    return Err(ConfigError::invalid(key, "must be within [1, 2^30]"));
                }
                self.rwnd = rwnd;
            }
            "dupthresh" => {
                let d: u32 = parse_num(key, value)?;
                if d == 0 {
                    return Err(ConfigError::invalid(key, "must be at least 1"));
                }
                self.dupthresh = d;
            }
            "file_size" => {
                let n = parse_size(key, value)?;
                if n == 0 {
                    return Err(ConfigError::invalid(key, "must be at least 1 byte"));
                }
                self.file_size = n;
            }
            "seed" => self.seed = parse_num(key, value)?,
            "sim_time_limit" => {
                let t = parse_duration(value).map_err(|e| rekey(e, key))?;
                if t == SimTime::ZERO {
                    return Err(ConfigError::invalid(key, "must be positive"));
                }
                self.sim_time_limit = t;
            }
            "trace_out" => self.trace_out = (!value.is_empty()).then(|| PathBuf::from(value)),
            "ack_mode" => {
                self.ack_mode = match value {
                    "per_mss" => AckMode::PerMss,
                    "per_ack" => AckMode::PerAck,
                    _ => {
                        return Err(ConfigError::invalid(
                            key,
                            format!("expected per_mss or per_ack, got {value:?}"),
                        ))
                    }
                }
            }
            "server_mp_capable" => self.server_mp_capable = parse_bool(key, value)?,
            _ => return Err(ConfigError::invalid(key, "unknown key")),
        }
        Ok(())
    }

    /// Checks cross-field constraints.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.cc()?;
        if self.links.is_empty() {
            return Err(ConfigError::invalid("link", "at least one link is required"));
        }
        if self.links.len() > 200 {
            return Err(ConfigError::invalid("link", "at most 200 links"));
        }
        for l in &self.links {
            l.validate()?;
        }
        if self.rwnd < self.mss as u64 {
            return Err(ConfigError::invalid("rwnd", "must be at least one mss"));
        }
        Ok(())
    }
}

fn rekey(mut e: ConfigError, key: &str) -> ConfigError {
    e.key = key.to_string();
    e
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
    value
        .parse()
        .map_err(|_| ConfigError::invalid(key, format!("not a valid number: {value:?}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool, ConfigError> {
    match value {
        "true" | "on" | "yes" | "1" => Ok(true),
        "false" | "off" | "no" | "0" => Ok(false),
        _ => Err(ConfigError::invalid(
            key,
            format!("expected true or false, got {value:?}"),
        )),
    }
}

/// Decimal quantity with optional `k`, `M` or `G` suffix.
pub fn parse_scaled(key: &str, value: &str) -> Result<f64, ConfigError> {
    let v = value.trim();
    let (num, mult) = match v.char_indices().last() {
        Some((i, 'k' | 'K')) => (&v[..i], 1e3),
        Some((i, 'M')) => (&v[..i], 1e6),
        Some((i, 'G')) => (&v[..i], 1e9),
        _ => (v, 1.0),
    };
    let x: f64 = parse_num(key, num.trim())?;
    if !x.is_finite() || x < 0.0 {
        return Err(ConfigError::invalid(
            key,
            format!("must be a non-negative number, got {value:?}"),
        ));
    }
    Ok(x * mult)
}

fn parse_size(key: &str, value: &str) -> Result<u64, ConfigError> {
    let x = parse_scaled(key, value)?;
    if x.fract() != 0.0 || x > u64::MAX as f64 {
        return Err(ConfigError::invalid(
            key,
            format!("must be a whole number, got {value:?}"),
        ));
    }
    Ok(x as u64)
}

fn set_link_key(link: &mut LinkParams, key: &str, value: &str) -> Result<(), ConfigError> {
    match key {
        "bandwidth" => {
            let bw = parse_scaled(key, value)?.round();
            if bw < 1.0 {
                return Err(ConfigError::invalid(key, "must be > 0"));
            }
            link.bandwidth_bps = bw as u64;
        }
        "delay" => link.delay = DelaySchedule::constant(parse_duration(value).map_err(|e| rekey(e, key))?),
        "delay_schedule" => link.delay = value.parse().map_err(|e| rekey(e, key))?,
        "loss_rate" => {
            let p: f64 = parse_num(key, value)?;
            if !(0.0..=1.0).contains(&p) {
                return Err(ConfigError::invalid(key, format!("must be within [0, 1], got {value}")));
            }
            link.loss_rate = p;
        }
        _ => return Err(ConfigError::invalid(key, "unknown link key")),
    }
    Ok(())
}

/// Parses a configuration file. Errors carry the offending key and line.
pub fn parse_config(text: &str) -> Result<ScenarioConfig, ConfigError> {
    let mut cfg = ScenarioConfig::default();
    let mut links: BTreeMap<usize, (LinkParams, usize)> = BTreeMap::new();
    let mut section: Option<usize> = None;
    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(inner) = line.strip_prefix('[') {
            let name = inner
                .strip_suffix(']')
                .ok_or_else(|| ConfigError::invalid(line, "unterminated section header").at_line(lineno))?
                .trim();
            let idx = name
                .strip_prefix("link.")
                .and_then(|n| n.parse::<usize>().ok())
                .ok_or_else(|| ConfigError::invalid(name, "expected a [link.N] section").at_line(lineno))?;
            if links.contains_key(&idx) {
                return Err(ConfigError::invalid(name, "duplicate section").at_line(lineno));
            }
            links.insert(idx, (LinkParams::default(), lineno));
            section = Some(idx);
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .map(|(k, v)| (k.trim(), v.trim()))
            .ok_or_else(|| ConfigError::invalid(line, "expected `key = value`").at_line(lineno))?;
        match section {
            Some(idx) => {
                let link = &mut links.get_mut(&idx).expect("inserted").0;
                set_link_key(link, key, value).map_err(|e| e.at_line(lineno))?;
            }
            None => {
                if LINK_KEYS.contains(&key) {
                    return Err(ConfigError::invalid(key, "link keys belong in a [link.N] section").at_line(lineno));
                }
                cfg.set(key, value).map_err(|e| e.at_line(lineno))?;
            }
        }
    }
    if !links.is_empty() {
        for (expected, (&idx, &(_, lineno))) in links.iter().enumerate() {
            if idx != expected {
                return Err(ConfigError::invalid(format!("link.{expected}"), "missing link section").at_line(lineno));
            }
        }
        cfg.links = links.into_values().map(|(l, _)| l).collect();
    }
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = parse_config("").unwrap();
        assert_eq!(cfg, ScenarioConfig::default());
        assert_eq!(cfg.links.len(), 2);
        for l in &cfg.links {
            assert_eq!(l.bandwidth_bps, 500_000);
            assert_eq!(l.delay.delay_at(SimTime::ZERO), SimTime::from_millis(10));
            assert_eq!(l.loss_rate, 0.0);
        }
        assert_eq!(
            (cfg.mss, cfg.rwnd, cfg.dupthresh, cfg.a, cfg.seed),
            (1400, 65536, 3, 1.0, 1)
        );
    }

    #[test]
    fn cc_and_a_combine() {
        let cfg = parse_config("a = 0.5\ncc = linked_increases\n").unwrap();
        assert_eq!(cfg.cc().unwrap(), CcAlgorithm::LinkedIncreases { a: 0.5 });
    }

    #[test]
    fn loss_rate_out_of_range_names_key_and_line() {
        let e = parse_config("seed = 3\n[link.0]\nloss_rate = 1.5\n").unwrap_err();
        assert_eq!(e.key, "loss_rate");
        assert_eq!(e.line, Some(3));
    }

    #[test]
    fn unknown_key_rejected() {
        let e = parse_config("\n\nbogus = 1\n").unwrap_err();
        assert_eq!((e.key.as_str(), e.line), ("bogus", Some(3)));
        assert!(e.to_string().contains("line 3"));
    }

    #[test]
    fn missing_link_section() {
        let e = parse_config("[link.0]\n[link.2]\n").unwrap_err();
        assert_eq!(e.key, "link.1");
        assert!(e.message.contains("missing link section"));
    }

    #[test]
    fn link_sections_and_suffixes() {
        let cfg = parse_config(
            "file_size = 1.5M # comment\n[link.0]\nbandwidth = 2M\ndelay = 25ms\n[link.1]\ndelay_schedule = 0:10ms,2s:150ms\n[link.2]\n",
        )
        .unwrap();
        assert_eq!(cfg.file_size, 1_500_000);
        assert_eq!(cfg.links.len(), 3);
        assert_eq!(cfg.links[0].bandwidth_bps, 2_000_000);
        assert_eq!(
            cfg.links[0].delay.delay_at(SimTime::from_secs(9)),
            SimTime::from_millis(25)
        );
        assert_eq!(
            cfg.links[1].delay.delay_at(SimTime::from_secs(3)),
            SimTime::from_millis(150)
        );
        assert_eq!(cfg.links[2], LinkParams::default());
    }

    #[test]
    fn assorted_errors() {
        for bad in [
            "cc = vegas",
            "reorder = maybe",
            "mss = 10",
            "rwnd = 100",
            "file_size = 0",
            "file_size = 1.5",
            "delay = 10ms",
            "[link.x]",
            "[link.0\n",
            "seed",
            "[link.0]\ndelay_schedule = 5ms:10ms",
            "a = -1",
        ] {
            assert!(parse_config(bad).is_err(), "{bad:?} accepted");
        }
    }
}
