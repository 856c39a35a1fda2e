// SPDX-License-Identifier: Apache-2.0

//! Scenario fixtures shared by the benchmarks.

use mpsim::wire::{Flags, SackBlock, Segment, SubflowSeq, TcpOption};
use mpsim::{Address, DetectorKind, LinkParams, ScenarioConfig, SimTime};

/// Two clean 0.5 Mb/s paths carrying `file_size` bytes.
pub fn two_path(file_size: u64) -> ScenarioConfig {
    ScenarioConfig {
        file_size,
        ..ScenarioConfig::default()
    }
}

/// Two lossy paths, the second with a delay spike at 2 s.
pub fn lossy_spike(file_size: u64, reorder: DetectorKind) -> ScenarioConfig {
    ScenarioConfig {
        file_size,
        reorder,
        links: vec![
            LinkParams {
                loss_rate: 0.02,
                ..LinkParams::default()
            },
            LinkParams {
                delay: "0:10ms,2s:150ms".parse().expect("valid schedule"),
                loss_rate: 0.01,
                ..LinkParams::default()
            },
        ],
        ..ScenarioConfig::default()
    }
}

/// A full-sized data segment with timestamp, DSN and SACK options.
pub fn data_segment() -> Segment {
    Segment {
        src_addr: Address::new(1, 0),
        dst_addr: Address::new(2, 0),
        src_port: 40000,
        dst_port: 80,
        seq: SubflowSeq(140_000),
        ack: SubflowSeq(1),
        flags: Flags::ACK,
        options: vec![
            TcpOption::Timestamp {
                ts_val: SimTime::from_micros(1_234_567),
                ts_echo: SimTime::from_micros(1_200_000),
            },
            TcpOption::Dsn {
                data_seq: 280_000,
                subflow_seq: SubflowSeq(140_000),
                length: 1400,
            },
            TcpOption::Sack(vec![SackBlock::new(SubflowSeq(1), SubflowSeq(2))]),
        ],
        payload: vec![0x5a; 1400].into(),
    }
}
