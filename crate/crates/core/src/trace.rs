// SPDX-License-Identifier: Apache-2.0

//! Trace records and their CSV form.
//!
//! The CSV has a header row, comma separators, LF line endings and no
//! quoting. Absent numeric fields are empty. `conn_id` names the endpoint
//! that logged the row (0 = client, 1 = server).

use std::fmt::{self, Write as _};
use std::io::{self, Write};
use std::str::FromStr;

use crate::simcore::SimTime;

pub const CSV_HEADER: &str = "time_us,conn_id,subflow_id,event,seq,ack,cwnd_bytes,ssthresh_bytes,detail";

macro_rules! event_kinds {
    ($($variant:ident => $name:literal),* $(,)?) => {
        #[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub enum EventKind { $($variant),* }

        impl EventKind {
            pub const ALL: &'static [EventKind] = &[$(EventKind::$variant),*];

            pub fn as_str(self) -> &'static str {
                match self { $(EventKind::$variant => $name),* }
            }
        }

        impl FromStr for EventKind {
            type Err = String;
            fn from_str(s: &str) -> Result<Self, String> {
                match s {
                    $($name => Ok(EventKind::$variant),)*
                    _ => Err(format!("unknown event kind {s:?}")),
                }
            }
        }
    };
}

event_kinds! {
    State => "STATE",
    Send => "SEND",
    Recv => "RECV",
    Ack => "ACK",
    DupAck => "DUPACK",
    Retx => "RETX",
    Rto => "RTO",
    Cwnd => "CWND",
    Ssthresh => "SSTHRESH",
    SpuriousEifel => "SPURIOUS_EIFEL",
    SpuriousDsack => "SPURIOUS_DSACK",
    DsackSsBegin => "DSACK_SS_BEGIN",
    DsackSsEnd => "DSACK_SS_END",
    Sched => "SCHED",
    Deliver => "DELIVER",
    Drop => "DROP",
    Done => "DONE",
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TraceRecord {
    pub time_us: u64,
    pub conn_id: u32,
    pub subflow_id: Option<u32>,
    pub kind: EventKind,
    pub seq: Option<u64>,
    pub ack: Option<u64>,
    pub cwnd_bytes: Option<u64>,
    pub ssthresh_bytes: Option<u64>,
    pub detail: String,
}

impl TraceRecord {
    pub fn new(time: SimTime, conn_id: u32, subflow_id: Option<u32>, kind: EventKind) -> Self {
        TraceRecord {
            time_us: time.as_micros(),
            conn_id,
            subflow_id,
            kind,
            seq: None,
            ack: None,
            cwnd_bytes: None,
            ssthresh_bytes: None,
            detail: String::new(),
        }
    }

    pub fn seq(mut self, seq: u64) -> Self {
        self.seq = Some(seq);
        self
    }

    pub fn ack(mut self, ack: u64) -> Self {
        self.ack = Some(ack);
        self
    }

    pub fn window(mut self, cwnd_bytes: u64, ssthresh_bytes: u64) -> Self {
        self.cwnd_bytes = Some(cwnd_bytes);
        self.ssthresh_bytes = Some(ssthresh_bytes);
        self
    }

    /// Commas and line breaks are replaced so the row stays unquoted.
    pub fn detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = detail
            .into()
            .chars()
            .map(|c| if matches!(c, ',' | '\n' | '\r') { ';' } else { c })
            .collect();
        self
    }

    pub fn write_csv_row(&self, out: &mut String) {
        fn opt(out: &mut String, v: Option<u64>) {
            if let Some(v) = v {
                let _ = write!(out, "{v}");
            }
        }
        let _ = write!(out, "{},{},", self.time_us, self.conn_id);
        opt(out, self.subflow_id.map(u64::from));
        let _ = write!(out, ",{},", self.kind);
        opt(out, self.seq);
        out.push(',');
        opt(out, self.ack);
        out.push(',');
        opt(out, self.cwnd_bytes);
        out.push(',');
        opt(out, self.ssthresh_bytes);
        out.push(',');
        out.push_str(&self.detail);
        out.push('\n');
    }

    pub fn parse_csv_row(line: &str) -> Result<TraceRecord, String> {
        let fields: Vec<&str> = line.splitn(9, ',').collect();
        if fields.len() != 9 {
            return Err(format!("expected 9 fields, got {}", fields.len()));
        }
        fn num<T: FromStr>(name: &str, s: &str) -> Result<T, String> {
            s.parse().map_err(|_| format!("bad {name} {s:?}"))
        }
        fn opt<T: FromStr>(name: &str, s: &str) -> Result<Option<T>, String> {
            if s.is_empty() {
                Ok(None)
            } else {
                num(name, s).map(Some)
            }
        }
        Ok(TraceRecord {
            time_us: num("time_us", fields[0])?,
            conn_id: num("conn_id", fields[1])?,
            subflow_id: opt("subflow_id", fields[2])?,
            kind: fields[3].parse()?,
            seq: opt("seq", fields[4])?,
            ack: opt("ack", fields[5])?,
            cwnd_bytes: opt("cwnd_bytes", fields[6])?,
            ssthresh_bytes: opt("ssthresh_bytes", fields[7])?,
            detail: fields[8].to_string(),
        })
    }
}

/// In-memory trace sink shared by all simulation entities.
#[derive(Clone, Debug, Default)]
pub struct Tracer {
    enabled: bool,
    records: Vec<TraceRecord>,
}

impl Tracer {
    pub fn new() -> Self {
        Tracer {
            enabled: true,
            records: Vec::new(),
        }
    }

    /// A tracer that discards everything; used by fuzzers.
    pub fn disabled() -> Self {
        Tracer::default()
    }

    pub fn push(&mut self, rec: TraceRecord) {
        if self.enabled {
            self.records.push(rec);
        }
    }

    pub fn records(&self) -> &[TraceRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<TraceRecord> {
        self.records
    }
}

pub fn to_csv(records: &[TraceRecord]) -> String {
    let mut out = String::with_capacity(64 * (records.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in records {
        r.write_csv_row(&mut out);
    }
    out
}

pub fn write_csv<W: Write>(mut w: W, records: &[TraceRecord]) -> io::Result<()> {
    w.write_all(to_csv(records).as_bytes())?;
    w.flush()
}

/// Parses a whole trace; errors carry the 1-based line number.
pub fn parse_csv(text: &str) -> Result<Vec<TraceRecord>, String> {
    let mut lines = text.lines();
    match lines.next() {
        Some(CSV_HEADER) => {}
        Some(other) => return Err(format!("line 1: unexpected header {other:?}")),
        None => return Err("empty input".into()),
    }
    lines
        .enumerate()
        .map(|(i, l)| TraceRecord::parse_csv_row(l).map_err(|e| format!("line {}: {e}", i + 2)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn row_format() {
        let r = TraceRecord::new(SimTime::from_micros(1500), 0, Some(1), EventKind::Cwnd)
            .window(2800, 91000)
            .detail("ack, ca");
        let mut s = String::new();
        r.write_csv_row(&mut s);
        assert_eq!(s, "1500,0,1,CWND,,,2800,91000,ack; ca\n");
        assert_eq!(TraceRecord::parse_csv_row(s.trim_end()).unwrap(), r);
    }

    #[test]
    fn header_checked() {
        assert!(parse_csv("").is_err());
        assert!(parse_csv("a,b\n").is_err());
        assert_eq!(parse_csv(&format!("{CSV_HEADER}\n")).unwrap(), vec![]);
    }

    #[test]
    fn event_names_roundtrip() {
        for k in EventKind::ALL {
            assert_eq!(k.as_str().parse::<EventKind>().unwrap(), *k);
        }
        assert_eq!(EventKind::ALL.len(), 17);
    }

    proptest! {
        #[test]
        fn csv_roundtrip(
            t in any::<u64>(), c in any::<u32>(), sf in proptest::option::of(any::<u32>()),
            k in 0usize..17, seq in proptest::option::of(any::<u64>()),
            cw in proptest::option::of(any::<u64>()), detail in "[ -~]{0,30}",
        ) {
            let mut r = TraceRecord::new(SimTime::from_micros(t), c, sf, EventKind::ALL[k]).detail(detail);
            r.seq = seq;
            r.cwnd_bytes = cw;
            let csv = to_csv(std::slice::from_ref(&r));
            prop_assert_eq!(parse_csv(&csv).unwrap(), vec![r]);
        }
    }
}
