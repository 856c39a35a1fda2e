// SPDX-License-Identifier: Apache-2.0

//! Bulk-transfer application endpoints.
//!
//! The source serves a file of `size` bytes where byte `i` is `i mod 256`.
//! The sink consumes the in-order data stream, checks every byte against
//! that pattern and records when the last byte arrived.

use bytes::Bytes;

use crate::error::SimError;
use crate::simcore::SimTime;

pub fn pattern_byte(offset: u64) -> u8 {
    (offset % 256) as u8
}

/// 64-bit FNV-1a, used as the stream checksum.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Checksum(u64);

impl Default for Checksum {
    fn default() -> Self {
        Checksum(0xcbf2_9ce4_8422_2325)
    }
}

impl Checksum {
    pub fn update(&mut self, data: &[u8]) {
        for b in data {
            self.0 ^= *b as u64;
            self.0 = self.0.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }

    pub fn value(self) -> u64 {
        self.0
    }
}

#[derive(Clone, Debug)]
pub struct BulkSource {
    size: u64,
    // one period of the pattern, sliced for every chunk
    period: Bytes,
}

impl BulkSource {
    pub fn new(size: u64) -> Self {
        let period: Vec<u8> = (0..=255u8).cycle().take(256 + 65536).collect();
        BulkSource {
            size,
            period: Bytes::from(period),
        }
    }

    pub fn size(&self) -> u64 {
        self.size
    }

    /// Checksum of the whole file.
    pub fn checksum(&self) -> u64 {
        let mut c = Checksum::default();
        let mut off = 0;
        while off < self.size {
            let chunk = self.read(off, 65536);
            c.update(&chunk);
            off += chunk.len() as u64;
        }
        c.value()
    }

    /// Bytes `[offset, offset + len)` of the file, truncated at its end.
    pub fn read(&self, offset: u64, len: usize) -> Bytes {
        let end = (offset + len as u64).min(self.size);
        if end <= offset {
            return Bytes::new();
        }
        let n = (end - offset) as usize;
        let start = (offset % 256) as usize;
        if n <= self.period.len() - start {
            self.period.slice(start..start + n)
        } else {
            Bytes::from((offset..end).map(pattern_byte).collect::<Vec<u8>>())
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct Sink {
    received: u64,
    checksum: Checksum,
    expected: Option<u64>,
    done_at: Option<SimTime>,
}

impl Sink {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn received(&self) -> u64 {
        self.received
    }

    pub fn done_at(&self) -> Option<SimTime> {
        self.done_at
    }

    pub fn checksum(&self) -> u64 {
        self.checksum.value()
    }

    /// Consumes the next in-order chunk of the stream.
    pub fn consume(&mut self, data: &[u8]) -> Result<(), SimError> {
        for (i, b) in data.iter().enumerate() {
            let off = self.received + i as u64;
            if *b != pattern_byte(off) {
                return Err(SimError::breach(format!(
                    "sink: byte {off} is {b:#04x}, expected {:#04x}",
                    pattern_byte(off)
                )));
            }
        }
        self.received += data.len() as u64;
        self.checksum.update(data);
        Ok(())
    }

    /// End of stream at data offset `len`.
    pub fn finish(&mut self, len: u64, now: SimTime) -> Result<(), SimError> {
        if len != self.received {
            return Err(SimError::breach(format!(
                "sink: end of stream at {len} but {} bytes received",
                self.received
            )));
        }
        self.expected = Some(len);
        self.done_at.get_or_insert(now);
        Ok(())
    }

    pub fn is_done(&self) -> bool {
        self.done_at.is_some()
    }
}

/// Application throughput in bits per second.
pub fn goodput_bps(bytes: u64, elapsed: SimTime) -> f64 {
    if elapsed == SimTime::ZERO {
        return 0.0;
    }
    bytes as f64 * 8.0 / elapsed.as_secs_f64()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn source_pattern_and_truncation() {
        let src = BulkSource::new(1000);
        let c = src.read(250, 10);
        assert_eq!(&c[..], &[250, 251, 252, 253, 254, 255, 0, 1, 2, 3]);
        assert_eq!(src.read(995, 1400).len(), 5);
        assert!(src.read(1000, 10).is_empty());
        let big = BulkSource::new(1 << 20);
        let chunk = big.read(7, 100_000);
        assert!(chunk.iter().enumerate().all(|(i, b)| *b == pattern_byte(7 + i as u64)));
    }

    #[test]
    fn sink_checks_content() {
        let src = BulkSource::new(3000);
        let mut sink = Sink::new();
        sink.consume(&src.read(0, 1400)).unwrap();
        sink.consume(&src.read(1400, 1600)).unwrap();
        sink.finish(3000, SimTime::from_secs(2)).unwrap();
        assert!(sink.is_done());
        assert_eq!(sink.checksum(), src.checksum());

        let mut bad = Sink::new();
        assert!(bad.consume(&[0, 1, 3]).is_err());
        let mut short = Sink::new();
        short.consume(&src.read(0, 10)).unwrap();
        assert!(short.finish(11, SimTime::ZERO).is_err());
    }

    #[test]
    fn fnv_reference_values() {
        let mut c = Checksum::default();
        assert_eq!(c.value(), 0xcbf29ce484222325);
        c.update(b"a");
        assert_eq!(c.value(), 0xaf63dc4c8601ec8c);
    }

    #[test]
    fn goodput() {
        assert_eq!(goodput_bps(1_000_000, SimTime::from_secs(16)), 500_000.0);
        assert_eq!(goodput_bps(5, SimTime::ZERO), 0.0);
    }
}
