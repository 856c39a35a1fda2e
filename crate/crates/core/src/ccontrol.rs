// SPDX-License-Identifier: Apache-2.0

//! Congestion-avoidance window updates for a connection's subflows.
//!
//! Windows are real numbers of segments. `w_r` is the window of the subflow
//! being updated and `w` the sum over all live subflows of the connection,
//! recomputed by the caller for every update. These rules only apply in
//! congestion avoidance; slow start is handled by the subflow.

use std::fmt;
use std::str::FromStr;

use crate::error::ConfigError;

/// Which window feeds the second term of the RTT Compensator increase.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum RttcSecondTerm {
    /// `min(a/w, 1/w)`
    #[default]
    Total,
    /// `min(a/w, 1/w_r)`
    PerPath,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CcAlgorithm {
    Uncoupled,
    FullyCoupled,
    LinkedIncreases { a: f64 },
    RttCompensator { a: f64, second_term: RttcSecondTerm },
}

impl Default for CcAlgorithm {
    fn default() -> Self {
        CcAlgorithm::LinkedIncreases { a: 1.0 }
    }
}

impl CcAlgorithm {
    pub fn name(&self) -> &'static str {
        match self {
            CcAlgorithm::Uncoupled => "uncoupled",
            CcAlgorithm::FullyCoupled => "fully_coupled",
            CcAlgorithm::LinkedIncreases { .. } => "linked_increases",
            CcAlgorithm::RttCompensator { .. } => "rtt_compensator",
        }
    }

    /// Builds an algorithm from its config name and parameters.
    pub fn from_parts(name: &str, a: f64, second_term: RttcSecondTerm) -> Result<Self, ConfigError> {
        if !(a.is_finite() && a > 0.0) {
            return Err(ConfigError::invalid("a", "must be a positive number"));
        }
        Ok(match name {
            "uncoupled" => CcAlgorithm::Uncoupled,
            "fully_coupled" => CcAlgorithm::FullyCoupled,
            "linked_increases" => CcAlgorithm::LinkedIncreases { a },
            "rtt_compensator" => CcAlgorithm::RttCompensator { a, second_term },
            other => {
                return Err(ConfigError::invalid(
                    "cc",
                    format!("unknown algorithm {other:?}; expected uncoupled, fully_coupled, linked_increases or rtt_compensator"),
                ))
            }
        })
    }

    /// Per-ACK window increment for subflow `r`.
    pub fn increment(&self, w_r: f64, w: f64) -> f64 {
        match *self {
            CcAlgorithm::Uncoupled => 1.0 / w_r,
            CcAlgorithm::FullyCoupled => 1.0 / w,
            CcAlgorithm::LinkedIncreases { a } => a / w,
            CcAlgorithm::RttCompensator { a, second_term } => {
                let second = match second_term {
                    RttcSecondTerm::Total => 1.0 / w,
                    RttcSecondTerm::PerPath => 1.0 / w_r,
                };
                (a / w).min(second)
            }
        }
    }

    pub fn on_ack(&self, w_r: f64, w: f64) -> f64 {
        w_r + self.increment(w_r, w)
    }

    /// Window after a loss event on subflow `r`; never below one segment.
    pub fn on_loss(&self, w_r: f64, w: f64) -> f64 {
        match self {
            CcAlgorithm::FullyCoupled => (w_r - w / 2.0).max(1.0),
            _ => (w_r / 2.0).max(1.0),
        }
    }
}

impl fmt::Display for CcAlgorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CcAlgorithm::LinkedIncreases { a } | CcAlgorithm::RttCompensator { a, .. } => {
                write!(f, "{}(a={a})", self.name())
            }
            _ => f.write_str(self.name()),
        }
    }
}

impl FromStr for RttcSecondTerm {
    type Err = ConfigError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "total" => Ok(RttcSecondTerm::Total),
            "per_path" => Ok(RttcSecondTerm::PerPath),
            _ => Err(ConfigError::invalid(
                "rttc_second_term",
                format!("expected total or per_path, got {s:?}"),
            )),
        }
    }
}

/// Windows of every live subflow of one connection.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConnectionWindowView {
    windows: Vec<f64>,
}

impl ConnectionWindowView {
    pub fn new(windows: Vec<f64>) -> Self {
        ConnectionWindowView { windows }
    }

    pub fn windows(&self) -> &[f64] {
        &self.windows
    }

    pub fn total(&self) -> f64 {
        self.windows.iter().sum()
    }

    /// Applies one ACK on subflow `r` and returns its new window.
    pub fn on_ack(&mut self, alg: &CcAlgorithm, r: usize) -> f64 {
        let w = self.total();
        self.windows[r] = alg.on_ack(self.windows[r], w);
        self.windows[r]
    }

    pub fn on_loss(&mut self, alg: &CcAlgorithm, r: usize) -> f64 {
        let w = self.total();
        self.windows[r] = alg.on_loss(self.windows[r], w);
        self.windows[r]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const LI1: CcAlgorithm = CcAlgorithm::LinkedIncreases { a: 1.0 };

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-12 * b.abs().max(1.0)
    }

    #[test]
    fn worked_examples() {
        assert!(close(CcAlgorithm::FullyCoupled.on_ack(10.0, 20.0), 10.05));
        assert!(close(CcAlgorithm::LinkedIncreases { a: 1.0 }.on_ack(5.0, 10.0), 5.1));
        let rttc = CcAlgorithm::RttCompensator {
            a: 2.0,
            second_term: RttcSecondTerm::Total,
        };
        assert!(close(rttc.increment(5.0, 10.0), 0.1));
        assert!(close(rttc.on_ack(5.0, 10.0), 5.1));
        assert_eq!(CcAlgorithm::Uncoupled.on_ack(8.0, 1234.0), 8.125);

        assert_eq!(CcAlgorithm::FullyCoupled.on_loss(12.0, 20.0), 2.0);
        assert_eq!(CcAlgorithm::FullyCoupled.on_loss(4.0, 20.0), 1.0);
        assert_eq!(LI1.on_loss(9.0, 30.0), 4.5);
    }

    #[test]
    fn per_path_second_term() {
        let rttc = CcAlgorithm::RttCompensator {
            a: 2.0,
            second_term: RttcSecondTerm::PerPath,
        };
        // min(2/10, 1/5) = 0.2
        assert!(close(rttc.increment(5.0, 10.0), 0.2));
    }

    #[test]
    fn view_recomputes_total() {
        let mut v = ConnectionWindowView::new(vec![10.0, 10.0]);
        v.on_ack(&CcAlgorithm::FullyCoupled, 0);
        assert!(close(v.windows()[0], 10.05));
        assert!(close(v.total(), 20.05));
        v.on_loss(&CcAlgorithm::FullyCoupled, 1);
        // max(10 - 20.05/2, 1) = 1
        assert_eq!(v.windows()[1], 1.0);
    }

    #[test]
    fn parse_names() {
        assert_eq!(
            CcAlgorithm::from_parts("linked_increases", 0.5, RttcSecondTerm::Total).unwrap(),
            CcAlgorithm::LinkedIncreases { a: 0.5 }
        );
        assert!(CcAlgorithm::from_parts("vegas", 1.0, RttcSecondTerm::Total).is_err());
        assert!(CcAlgorithm::from_parts("uncoupled", 0.0, RttcSecondTerm::Total).is_err());
    }

    proptest! {
        #[test]
        fn single_subflow_matches_uncoupled(w in 1.0f64..1e4) {
            let unc = CcAlgorithm::Uncoupled.increment(w, w);
            for alg in [
                CcAlgorithm::FullyCoupled,
                LI1,
                CcAlgorithm::RttCompensator { a: 1.0, second_term: RttcSecondTerm::Total },
                CcAlgorithm::RttCompensator { a: 1.0, second_term: RttcSecondTerm::PerPath },
            ] {
                prop_assert_eq!(alg.increment(w, w), unc);
                prop_assert!(alg.on_loss(w, w) >= 1.0);
            }
        }

        #[test]
        fn rtt_compensator_dominated(w_r in 1.0f64..1e3, rest in 0.0f64..1e3, a in 0.01f64..10.0) {
            let w = w_r + rest;
            let inc = CcAlgorithm::RttCompensator { a, second_term: RttcSecondTerm::Total }.increment(w_r, w);
            prop_assert!(inc <= a / w && inc <= 1.0 / w);
        }

        #[test]
        fn fully_coupled_aggregate_increase(ws in prop::collection::vec(1.0f64..100.0, 1..6)) {
            let view = ConnectionWindowView::new(ws.clone());
            let w = view.total();
            for &w_r in &ws {
                prop_assert_eq!(CcAlgorithm::FullyCoupled.increment(w_r, w), 1.0 / w);
            }
            // each subflow sees w_r ACKs per round: total growth is one segment
            let round: f64 = ws.iter().map(|w_r| w_r * CcAlgorithm::FullyCoupled.increment(*w_r, w)).sum();
            prop_assert!((round - 1.0).abs() < 1e-9);
        }

        #[test]
        fn loss_never_below_one(w_r in 0.0f64..1e4, rest in 0.0f64..1e4) {
            for alg in [CcAlgorithm::Uncoupled, CcAlgorithm::FullyCoupled, LI1] {
                prop_assert!(alg.on_loss(w_r, w_r + rest) >= 1.0);
            }
        }
    }
}
