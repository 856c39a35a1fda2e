// SPDX-License-Identifier: Apache-2.0

//! Deterministic discrete-event simulator for Multipath TCP bulk transfers.
//!
//! A scenario is a client and a server joined by one or more point-to-point
//! links. The client opens an MPTCP connection, adds one subflow per extra
//! path, pushes a file to the server and closes. Everything is driven by a
//! single seeded event queue, so equal inputs give byte-identical traces.

pub mod app;
pub mod ccontrol;
pub mod config;
pub mod error;
pub mod mptcp;
pub mod netmodel;
pub mod ranges;
pub mod reorder;
pub mod scenario;
pub mod simcore;
pub mod subflow;
pub mod trace;
pub mod wire;

pub use ccontrol::{CcAlgorithm, RttcSecondTerm};
pub use config::{parse_config, ScenarioConfig};
pub use error::{ConfigError, SimError, WireError};
pub use netmodel::{Address, DelaySchedule, LinkParams};
pub use reorder::DetectorKind;
pub use scenario::{run_scenario, Report, SubflowReport};
pub use simcore::{Rng, SimTime};
pub use subflow::AckMode;
pub use trace::{EventKind, TraceRecord};
