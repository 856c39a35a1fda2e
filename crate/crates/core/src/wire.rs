// SPDX-License-Identifier: Apache-2.0

//! Segment and option framing.
//!
//! This is a simulator-internal binary format, not the RFC layout. A segment
//! is a fixed 40-byte header followed by the option bytes and the payload:
//!
//! ```text
//!  0      1      2          6          10      12      14    18    22       24        26        40
//! +------+------+----------+----------+-------+-------+-----+-----+--------+---------+---------+
//! | 0x4D | flags| src addr | dst addr | sport | dport | seq | ack | optlen | paylen  | 0 (x14) |
//! +------+------+----------+----------+-------+-------+-----+-----+--------+---------+---------+
//! ```
//!
//! Every option is `kind:u8 len:u8 body`, where `len` counts the two-byte
//! prefix. All integers are big-endian.

use std::cmp::Ordering;
use std::fmt;

use bitflags::bitflags;
use bytes::{BufMut, Bytes, BytesMut};

use crate::error::WireError;
use crate::netmodel::Address;
use crate::simcore::SimTime;

pub const HEADER_LEN: usize = 40;
const MAGIC: u8 = 0x4D;
pub const MAX_SACK_BLOCKS: usize = 4;

/// Per-subflow 32-bit byte sequence number with modular ordering.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct SubflowSeq(pub u32);

impl SubflowSeq {
    #[allow(clippy::should_implement_trait)]
    pub fn add(self, n: u32) -> SubflowSeq {
        SubflowSeq(self.0.wrapping_add(n))
    }

    /// Signed distance `self - other` in the modular space.
    pub fn diff(self, other: SubflowSeq) -> i64 {
        self.0.wrapping_sub(other.0) as i32 as i64
    }

    pub fn lt(self, other: SubflowSeq) -> bool {
        self.diff(other) < 0
    }

    pub fn le(self, other: SubflowSeq) -> bool {
        self.diff(other) <= 0
    }

    pub fn gt(self, other: SubflowSeq) -> bool {
        self.diff(other) > 0
    }

    pub fn ge(self, other: SubflowSeq) -> bool {
        self.diff(other) >= 0
    }

    pub fn modular_cmp(self, other: SubflowSeq) -> Ordering {
        self.diff(other).cmp(&0)
    }
}

impl fmt::Display for SubflowSeq {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Connection-level byte sequence number.
pub type DataSeq = u64;

bitflags! {
    #[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
    pub struct Flags: u8 {
        const SYN = 0x01;
        const ACK = 0x02;
        const FIN = 0x04;
        const RST = 0x08;
    }
}

/// `[left, right)` in subflow sequence space.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SackBlock {
    pub left: SubflowSeq,
    pub right: SubflowSeq,
}

impl SackBlock {
    pub fn new(left: SubflowSeq, right: SubflowSeq) -> Self {
        SackBlock { left, right }
    }

    pub fn is_valid(&self) -> bool {
        self.left.lt(self.right)
    }

    pub fn contains(&self, seq: SubflowSeq) -> bool {
        seq.ge(self.left) && seq.lt(self.right)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum TcpOption {
    MpCapable {
        token: u32,
    },
    Join {
        token: u32,
    },
    AddAddr(Address),
    RemoveAddr(Address),
    Dsn {
        data_seq: DataSeq,
        subflow_seq: SubflowSeq,
        length: u16,
    },
    DataFin {
        final_data_seq: DataSeq,
    },
    Timestamp {
        ts_val: SimTime,
        ts_echo: SimTime,
    },
    Sack(Vec<SackBlock>),
}

impl TcpOption {
    pub fn kind(&self) -> u8 {
        match self {
            TcpOption::MpCapable { .. } => 1,
            TcpOption::Join { .. } => 2,
            TcpOption::AddAddr(_) => 3,
            TcpOption::RemoveAddr(_) => 4,
            TcpOption::Dsn { .. } => 5,
            TcpOption::DataFin { .. } => 6,
            TcpOption::Timestamp { .. } => 7,
            TcpOption::Sack(_) => 8,
        }
    }

    /// Encoded length including the kind and length bytes.
    pub fn encoded_len(&self) -> usize {
        2 + match self {
            TcpOption::MpCapable { .. } | TcpOption::Join { .. } => 4,
            TcpOption::AddAddr(_) | TcpOption::RemoveAddr(_) => 4,
            TcpOption::Dsn { .. } => 14,
            TcpOption::DataFin { .. } => 8,
            TcpOption::Timestamp { .. } => 16,
            TcpOption::Sack(blocks) => 8 * blocks.len(),
        }
    }

    fn is_valid(&self) -> bool {
        match self {
            TcpOption::Dsn { length, .. } => *length > 0,
            TcpOption::Sack(blocks) => {
                !blocks.is_empty() && blocks.len() <= MAX_SACK_BLOCKS && blocks.iter().all(SackBlock::is_valid)
            }
            _ => true,
        }
    }

    fn encode_into(&self, out: &mut BytesMut) {
        out.put_u8(self.kind());
        out.put_u8(self.encoded_len() as u8);
        match self {
            TcpOption::MpCapable { token } | TcpOption::Join { token } => out.put_u32(*token),
            TcpOption::AddAddr(a) | TcpOption::RemoveAddr(a) => out.put_slice(&a.octets()),
            TcpOption::Dsn {
                data_seq,
                subflow_seq,
                length,
            } => {
                out.put_u64(*data_seq);
                out.put_u32(subflow_seq.0);
                out.put_u16(*length);
            }
            TcpOption::DataFin { final_data_seq } => out.put_u64(*final_data_seq),
            TcpOption::Timestamp { ts_val, ts_echo } => {
                out.put_u64(ts_val.as_micros());
                out.put_u64(ts_echo.as_micros());
            }
            TcpOption::Sack(blocks) => {
                for b in blocks {
                    out.put_u32(b.left.0);
                    out.put_u32(b.right.0);
                }
            }
        }
    }

    fn decode(kind: u8, body: &[u8]) -> Result<TcpOption, WireError> {
        let mut r = Reader(body);
        let opt = match kind {
            1 => TcpOption::MpCapable { token: r.u32()? },
            2 => TcpOption::Join { token: r.u32()? },
            3 => TcpOption::AddAddr(r.addr()?),
            4 => TcpOption::RemoveAddr(r.addr()?),
            5 => TcpOption::Dsn {
                data_seq: r.u64()?,
                subflow_seq: SubflowSeq(r.u32()?),
                length: r.u16()?,
            },
            6 => TcpOption::DataFin {
                final_data_seq: r.u64()?,
            },
            7 => TcpOption::Timestamp {
                ts_val: SimTime::from_micros(r.u64()?),
                ts_echo: SimTime::from_micros(r.u64()?),
            },
            8 => {
                if body.len() % 8 != 0 {
                    return Err(WireError::Malformed("sack option length"));
                }
                let mut blocks = Vec::with_capacity(body.len() / 8);
                while !r.0.is_empty() {
                    blocks.push(SackBlock::new(SubflowSeq(r.u32()?), SubflowSeq(r.u32()?)));
                }
                TcpOption::Sack(blocks)
            }
            _ => return Err(WireError::Malformed("unknown option kind")),
        };
        if !r.0.is_empty() {
            return Err(WireError::Malformed("option length mismatch"));
        }
        if !opt.is_valid() {
            return Err(WireError::Malformed("invalid option contents"));
        }
        Ok(opt)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Segment {
    pub src_addr: Address,
    pub dst_addr: Address,
    pub src_port: u16,
    pub dst_port: u16,
    pub seq: SubflowSeq,
    pub ack: SubflowSeq,
    pub flags: Flags,
    pub options: Vec<TcpOption>,
    pub payload: Bytes,
}

impl Segment {
    pub fn payload_len(&self) -> usize {
        self.payload.len()
    }

    /// Sequence space consumed: payload plus one each for SYN and FIN.
    /// A segment with no payload, SYN or FIN that carries ADD_ADDR or
    /// DATA_FIN is a control segment and occupies one sequence number, so
    /// that it is delivered reliably.
    pub fn seq_len(&self) -> u32 {
        let base =
            self.payload.len() as u32 + self.flags.contains(Flags::SYN) as u32 + self.flags.contains(Flags::FIN) as u32;
        if base == 0 && (self.add_addr().is_some() || self.data_fin().is_some()) {
            1
        } else {
            base
        }
    }

    pub fn encoded_len(&self) -> usize {
        HEADER_LEN + self.options_len() + self.payload.len()
    }

    fn options_len(&self) -> usize {
        self.options.iter().map(TcpOption::encoded_len).sum()
    }

    pub fn option(&self, kind: u8) -> Option<&TcpOption> {
        self.options.iter().find(|o| o.kind() == kind)
    }

    pub fn mp_capable(&self) -> Option<u32> {
        self.options.iter().find_map(|o| match o {
            TcpOption::MpCapable { token } => Some(*token),
            _ => None,
        })
    }

    pub fn join(&self) -> Option<u32> {
        self.options.iter().find_map(|o| match o {
            TcpOption::Join { token } => Some(*token),
            _ => None,
        })
    }

    pub fn dsn(&self) -> Option<(DataSeq, SubflowSeq, u16)> {
        self.options.iter().find_map(|o| match o {
            TcpOption::Dsn {
                data_seq,
                subflow_seq,
                length,
            } => Some((*data_seq, *subflow_seq, *length)),
            _ => None,
        })
    }

    pub fn timestamp(&self) -> Option<(SimTime, SimTime)> {
        self.options.iter().find_map(|o| match o {
            TcpOption::Timestamp { ts_val, ts_echo } => Some((*ts_val, *ts_echo)),
            _ => None,
        })
    }

    pub fn sack(&self) -> Option<&[SackBlock]> {
        self.options.iter().find_map(|o| match o {
            TcpOption::Sack(b) => Some(b.as_slice()),
            _ => None,
        })
    }

    pub fn add_addr(&self) -> Option<Address> {
        self.options.iter().find_map(|o| match o {
            TcpOption::AddAddr(a) => Some(*a),
            _ => None,
        })
    }

    pub fn data_fin(&self) -> Option<DataSeq> {
        self.options.iter().find_map(|o| match o {
            TcpOption::DataFin { final_data_seq } => Some(*final_data_seq),
            _ => None,
        })
    }

    /// Structural validity: option contents valid, no repeated option kind,
    /// and sizes representable in the header.
    pub fn is_valid(&self) -> bool {
        let mut seen = 0u16;
        for o in &self.options {
            let bit = 1u16 << o.kind();
            if seen & bit != 0 || !o.is_valid() {
                return false;
            }
            seen |= bit;
        }
        self.options_len() <= u16::MAX as usize && self.payload.len() <= u16::MAX as usize
    }

    pub fn encode(&self) -> Bytes {
        debug_assert!(self.is_valid(), "encoding invalid segment {self:?}");
        let mut out = BytesMut::with_capacity(self.encoded_len());
        out.put_u8(MAGIC);
        out.put_u8(self.flags.bits());
        out.put_slice(&self.src_addr.octets());
        out.put_slice(&self.dst_addr.octets());
        out.put_u16(self.src_port);
        out.put_u16(self.dst_port);
        out.put_u32(self.seq.0);
        out.put_u32(self.ack.0);
        out.put_u16(self.options_len() as u16);
        out.put_u16(self.payload.len() as u16);
        out.put_bytes(0, HEADER_LEN - out.len());
        for o in &self.options {
            o.encode_into(&mut out);
        }
        out.put_slice(&self.payload);
        out.freeze()
    }

    pub fn decode(buf: &[u8]) -> Result<Segment, WireError> {
        if buf.len() < HEADER_LEN {
            return Err(WireError::Malformed("truncated header"));
        }
        let (header, rest) = buf.split_at(HEADER_LEN);
        let mut r = Reader(header);
        if r.u8()? != MAGIC {
            return Err(WireError::Malformed("bad magic"));
        }
        let flags = Flags::from_bits(r.u8()?).ok_or(WireError::Malformed("unknown flags"))?;
        let src_addr = r.addr()?;
        let dst_addr = r.addr()?;
        let src_port = r.u16()?;
        let dst_port = r.u16()?;
        let seq = SubflowSeq(r.u32()?);
        let ack = SubflowSeq(r.u32()?);
        let opt_len = r.u16()? as usize;
        let payload_len = r.u16()? as usize;
        if r.0.iter().any(|b| *b != 0) {
            return Err(WireError::Malformed("reserved bytes set"));
        }
        if rest.len() != opt_len + payload_len {
            return Err(WireError::Malformed("length mismatch"));
        }
        let (mut opts, payload) = rest.split_at(opt_len);
        let mut options = Vec::new();
        while !opts.is_empty() {
            if opts.len() < 2 {
                return Err(WireError::Malformed("truncated option"));
            }
            let (kind, len) = (opts[0], opts[1] as usize);
            if len < 2 || len > opts.len() {
                return Err(WireError::Malformed("bad option length"));
            }
            options.push(TcpOption::decode(kind, &opts[2..len])?);
            opts = &opts[len..];
        }
        let seg = Segment {
            src_addr,
            dst_addr,
            src_port,
            dst_port,
            seq,
            ack,
            flags,
            options,
            payload: Bytes::copy_from_slice(payload),
        };
        if !seg.is_valid() {
            return Err(WireError::Malformed("duplicate option"));
        }
        Ok(seg)
    }
}

struct Reader<'a>(&'a [u8]);

impl Reader<'_> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N], WireError> {
        if self.0.len() < N {
            return Err(WireError::Malformed("truncated field"));
        }
        let (head, tail) = self.0.split_at(N);
        self.0 = tail;
        Ok(head.try_into().expect("length checked"))
    }

    fn u8(&mut self) -> Result<u8, WireError> {
        Ok(self.take::<1>()?[0])
    }

    fn u16(&mut self) -> Result<u16, WireError> {
        self.take().map(u16::from_be_bytes)
    }

    fn u32(&mut self) -> Result<u32, WireError> {
        self.take().map(u32::from_be_bytes)
    }

    fn u64(&mut self) -> Result<u64, WireError> {
        self.take().map(u64::from_be_bytes)
    }

    fn addr(&mut self) -> Result<Address, WireError> {
        self.take().map(Address::from_octets)
    }
}
