// SPDX-License-Identifier: Apache-2.0

//! Spurious-retransmission detection.
//!
//! Before a retransmission the sender arms a snapshot of its window state.
//! Eifel compares the timestamp echoed by the ACK covering the retransmitted
//! sequence with the timestamp of the retransmitted copy: an older echo
//! means the original copy got through, and the snapshot is restored.
//! DSACK waits for the receiver to report the retransmitted range a second
//! time, then regrows the window towards the snapshot one segment per ACK.

use std::fmt;
use std::str::FromStr;

use crate::error::ConfigError;
use crate::simcore::SimTime;
use crate::wire::{SackBlock, SubflowSeq};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum DetectorKind {
    #[default]
    None,
    Eifel,
    Dsack,
}

impl FromStr for DetectorKind {
    type Err = ConfigError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(DetectorKind::None),
            "eifel" => Ok(DetectorKind::Eifel),
            "dsack" => Ok(DetectorKind::Dsack),
            _ => Err(ConfigError::invalid(
                "reorder",
                format!("expected none, eifel or dsack, got {s:?}"),
            )),
        }
    }
}

impl fmt::Display for DetectorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DetectorKind::None => "none",
            DetectorKind::Eifel => "eifel",
            DetectorKind::Dsack => "dsack",
        })
    }
}

/// Window state saved before the oldest outstanding retransmission.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Snapshot {
    pub saved_cwnd: f64,
    pub saved_ssthresh: f64,
    pub retrans_seq: SubflowSeq,
    /// Timestamp carried by the retransmitted copy.
    pub retrans_ts_val: SimTime,
    /// `snd_nxt` when the retransmission left. An ACK beyond it proves the
    /// retransmitted copy was processed without producing a DSACK.
    pub high_seq: SubflowSeq,
    pub taken_at: SimTime,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Verdict {
    /// Restore (Eifel) or regrow towards (DSACK) these values.
    Spurious {
        cwnd: f64,
        ssthresh: f64,
    },
    Genuine,
    Inconclusive,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DsackSlowStart {
    pub active: bool,
    pub target_cwnd: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Growth {
    pub cwnd: f64,
    /// The phase ended with this ACK (window clamped to the target).
    pub finished: bool,
}

#[derive(Clone, Debug, Default)]
pub struct ReorderDetector {
    kind: DetectorKind,
    snapshot: Option<Snapshot>,
    slow_start: DsackSlowStart,
}

impl ReorderDetector {
    pub fn new(kind: DetectorKind) -> Self {
        ReorderDetector {
            kind,
            ..Default::default()
        }
    }

    pub fn kind(&self) -> DetectorKind {
        self.kind
    }

    pub fn snapshot(&self) -> Option<&Snapshot> {
        self.snapshot.as_ref()
    }

    pub fn is_armed(&self) -> bool {
        self.snapshot.is_some()
    }

    pub fn slow_start(&self) -> DsackSlowStart {
        self.slow_start
    }

    /// Called with the pre-reduction window before every retransmission.
    /// Returns the snapshot if this call armed a new one.
    pub fn on_retransmit(
        &mut self,
        cwnd: f64,
        ssthresh: f64,
        seq: SubflowSeq,
        ts_val: SimTime,
        high_seq: SubflowSeq,
        now: SimTime,
    ) -> Option<Snapshot> {
        if self.kind == DetectorKind::None || self.snapshot.is_some() {
            return None;
        }
        let snap = Snapshot {
            saved_cwnd: cwnd,
            saved_ssthresh: ssthresh,
            retrans_seq: seq,
            retrans_ts_val: ts_val,
            high_seq,
            taken_at: now,
        };
        self.snapshot = Some(snap);
        Some(snap)
    }

    pub fn eifel_on_ack(&mut self, ack_covers_retrans: bool, echoed_ts: SimTime) -> Verdict {
        if self.kind != DetectorKind::Eifel || !ack_covers_retrans {
            return Verdict::Inconclusive;
        }
        let Some(snap) = self.snapshot.take() else {
            return Verdict::Inconclusive;
        };
        if echoed_ts < snap.retrans_ts_val {
            Verdict::Spurious {
                cwnd: snap.saved_cwnd,
                ssthresh: snap.saved_ssthresh,
            }
        } else {
            Verdict::Genuine
        }
    }

    /// Inspects the first SACK block of an ACK with cumulative point
    /// `cum_ack`. A spurious verdict starts the DSACK slow start when
    /// `cwnd` is below the saved window.
    pub fn dsack_on_ack(&mut self, cum_ack: SubflowSeq, first_block: Option<SackBlock>, cwnd: f64) -> Verdict {
        if self.kind != DetectorKind::Dsack {
            return Verdict::Inconclusive;
        }
        let Some(snap) = self.snapshot else {
            return Verdict::Inconclusive;
        };
        let Some(block) = first_block.filter(SackBlock::is_valid) else {
            return Verdict::Inconclusive;
        };
        let is_dsack = block.right.le(cum_ack);
        if !is_dsack || !block.contains(snap.retrans_seq) {
            return Verdict::Inconclusive;
        }
        self.snapshot = None;
        if cwnd < snap.saved_cwnd {
            self.slow_start = DsackSlowStart {
                active: true,
                target_cwnd: snap.saved_cwnd,
            };
        }
        Verdict::Spurious {
            cwnd: snap.saved_cwnd,
            ssthresh: snap.saved_ssthresh,
        }
    }

    /// Disarms a DSACK snapshot once data sent after the retransmission is
    /// acknowledged without any duplicate report.
    pub fn dsack_expire(&mut self, cum_ack: SubflowSeq) -> Verdict {
        match self.snapshot {
            Some(snap) if self.kind == DetectorKind::Dsack && cum_ack.gt(snap.high_seq) => {
                self.snapshot = None;
                Verdict::Genuine
            }
            _ => Verdict::Inconclusive,
        }
    }

    /// One new-data ACK during the DSACK slow start.
    pub fn dsack_growth_on_ack(&mut self, cwnd: f64) -> Growth {
        if !self.slow_start.active {
            return Growth { cwnd, finished: false };
        }
        let target = self.slow_start.target_cwnd;
        let next = cwnd + 1.0;
        if next >= target {
            self.slow_start.active = false;
            Growth {
                cwnd: target,
                finished: true,
            }
        } else {
            Growth {
                cwnd: next,
                finished: false,
            }
        }
    }

    /// Ends a DSACK slow start early (a new loss event).
    pub fn abort_slow_start(&mut self) -> bool {
        std::mem::take(&mut self.slow_start.active)
    }

    /// Drops any armed snapshot, e.g. when the subflow closes.
    pub fn disarm(&mut self) {
        self.snapshot = None;
    }
}
