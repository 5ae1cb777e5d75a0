//! On-wire telemetry headers for the four schemes and their byte accounting.
//!
//! All multi-byte fields are big-endian. Header presence is carried on the
//! [`Packet`] as an `Option`, never as sentinel bytes.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest value usable as a switch identifier; everything above is reserved.
pub const MAX_SWITCH_ID: u32 = 0xFFFF_FFF0;

/// TTL stamped on every packet when it enters the telemetry domain.
pub const INITIAL_TTL: u8 = 64;

/// Size of the opaque P4-INT metadata shim.
pub const P4INT_META_LEN: usize = 16;

const P4INT_VERSION: u8 = 2;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WireError {
    #[error("invariant violation: {0}")]
    InvariantViolation(String),
    #[error("truncated header: expected {expected} bytes, got {actual}")]
    TruncatedHeader { expected: usize, actual: usize },
    #[error("{trailing} trailing bytes after header")]
    TrailingBytes { trailing: usize },
    #[error("malformed slot {index}: {raw:#010x}")]
    MalformedSlot { index: usize, raw: u32 },
    #[error("malformed P4-INT metadata: {0}")]
    MalformedMeta(String),
    #[error("value count must be at least 1")]
    ZeroValueCount,
    #[error("invalid switch id {0:#x}")]
    InvalidSwitchId(u32),
}

/// Identifier of a telemetry-capable switch, in `[1, MAX_SWITCH_ID]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct SwitchId(u32);

impl SwitchId {
    pub const fn new(raw: u32) -> Result<Self, WireError> {
        if raw == 0 || raw > MAX_SWITCH_ID {
            Err(WireError::InvalidSwitchId(raw))
        } else {
            Ok(SwitchId(raw))
        }
    }

    pub const fn get(self) -> u32 {
        self.0
    }
}

impl TryFrom<u32> for SwitchId {
    type Error = WireError;

    fn try_from(raw: u32) -> Result<Self, Self::Error> {
        SwitchId::new(raw)
    }
}

impl From<SwitchId> for u32 {
    fn from(id: SwitchId) -> u32 {
        id.0
    }
}

impl fmt::Display for SwitchId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "s{}", self.0)
    }
}

/// One 4-byte telemetry slot: empty, a coordination signal, or a switch id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SlotValue(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlotKind {
    Empty,
    Init,
    Reset,
    Probe,
    Switch(SwitchId),
    /// Reserved range with no assigned meaning.
    Unassigned,
}

impl SlotValue {
    pub const EMPTY: SlotValue = SlotValue(0);
    pub const INIT: SlotValue = SlotValue(0xFFFF_FFFF);
    pub const RESET: SlotValue = SlotValue(0xFFFF_FFFE);
    pub const PROBE: SlotValue = SlotValue(0xFFFF_FFFD);

    pub fn kind(self) -> SlotKind {
        match self {
            SlotValue::EMPTY => SlotKind::Empty,
            SlotValue::INIT => SlotKind::Init,
            SlotValue::RESET => SlotKind::Reset,
            SlotValue::PROBE => SlotKind::Probe,
            SlotValue(raw) if raw <= MAX_SWITCH_ID => SlotKind::Switch(SwitchId(raw)),
            _ => SlotKind::Unassigned,
        }
    }

    pub fn is_signal(self) -> bool {
        matches!(self.kind(), SlotKind::Init | SlotKind::Reset | SlotKind::Probe)
    }

    pub fn is_empty(self) -> bool {
        self == SlotValue::EMPTY
    }

    pub fn switch_id(self) -> Option<SwitchId> {
        match self.kind() {
            SlotKind::Switch(id) => Some(id),
            _ => None,
        }
    }
}

impl From<SwitchId> for SlotValue {
    fn from(id: SwitchId) -> Self {
        SlotValue(id.0)
    }
}

impl fmt::Display for SlotValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind() {
            SlotKind::Empty => f.write_str("-"),
            SlotKind::Init => f.write_str("INIT"),
            SlotKind::Reset => f.write_str("RESET"),
            SlotKind::Probe => f.write_str("PROBE"),
            SlotKind::Switch(id) => write!(f, "{id}"),
            SlotKind::Unassigned => write!(f, "?{:#x}", self.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Scheme {
    #[serde(rename = "DLINT")]
    Dlint,
    #[serde(rename = "PLINT")]
    Plint,
    #[serde(rename = "P4INT")]
    P4Int,
    #[serde(rename = "PINT_LITE")]
    PintLite,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [Scheme::Dlint, Scheme::Plint, Scheme::P4Int, Scheme::PintLite];

    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Dlint => "DLINT",
            Scheme::Plint => "PLINT",
            Scheme::P4Int => "P4INT",
            Scheme::PintLite => "PINT_LITE",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Scheme::ALL
            .into_iter()
            .find(|scheme| scheme.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown scheme `{s}`"))
    }
}

/// 5-tuple identity of a monitored flow.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FlowKey {
    pub src_addr: u32,
    pub dst_addr: u32,
    pub src_port: u16,
    pub dst_port: u16,
    pub proto: u8,
}

impl FlowKey {
    pub const WIRE_LEN: usize = 13;

    pub fn to_bytes(&self) -> [u8; Self::WIRE_LEN] {
        let mut out = [0u8; Self::WIRE_LEN];
        out[0..4].copy_from_slice(&self.src_addr.to_be_bytes());
        out[4..8].copy_from_slice(&self.dst_addr.to_be_bytes());
        out[8..10].copy_from_slice(&self.src_port.to_be_bytes());
        out[10..12].copy_from_slice(&self.dst_port.to_be_bytes());
        out[12] = self.proto;
        out
    }

    /// The key of the opposite direction of the same conversation.
    pub fn reversed(&self) -> FlowKey {
        FlowKey {
            src_addr: self.dst_addr,
            dst_addr: self.src_addr,
            src_port: self.dst_port,
            dst_port: self.src_port,
            proto: self.proto,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DlintHeader {
    pub slots: Vec<SlotValue>,
}

impl DlintHeader {
    pub fn empty(v: usize) -> Self {
        DlintHeader { slots: vec![SlotValue::EMPTY; v] }
    }

    pub fn first_free(&self) -> Option<usize> {
        self.slots.iter().position(|s| s.is_empty())
    }

    pub fn contains(&self, value: SlotValue) -> bool {
        self.slots.contains(&value)
    }

    pub fn wire_size(&self) -> usize {
        4 * self.slots.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PlintSlot {
    pub sw_id: SwitchId,
    pub hop_num: u8,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlintHeader {
    pub init_ttl: u8,
    pub slots: Vec<PlintSlot>,
}

impl PlintHeader {
    pub fn wire_size(&self) -> usize {
        1 + 5 * self.slots.len()
    }
}

/// P4-INT hop-append header: fixed shim followed by `v` words per hop.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct P4IntHeader {
    pub version: u8,
    pub value_count: u8,
    pub instruction_bitmap: u16,
    pub stack: Vec<u32>,
}

impl P4IntHeader {
    pub fn new(value_count: u8) -> Self {
        P4IntHeader {
            version: P4INT_VERSION,
            value_count,
            instruction_bitmap: 0x8000,
            stack: Vec::new(),
        }
    }

    pub fn hop_count(&self) -> usize {
        self.stack.len() / usize::from(self.value_count.max(1))
    }

    /// Switch ids in push order (entry 0 of every hop's block).
    pub fn switch_ids(&self) -> impl Iterator<Item = u32> + '_ {
        self.stack.iter().step_by(usize::from(self.value_count.max(1))).copied()
    }

    pub fn wire_size(&self) -> usize {
        P4INT_META_LEN + 4 * self.stack.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PintLiteHeader {
    pub sw_id: SwitchId,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TelemetryHeader {
    Dlint(DlintHeader),
    Plint(PlintHeader),
    P4Int(P4IntHeader),
    PintLite(PintLiteHeader),
}

impl TelemetryHeader {
    pub fn scheme(&self) -> Scheme {
        match self {
            TelemetryHeader::Dlint(_) => Scheme::Dlint,
            TelemetryHeader::Plint(_) => Scheme::Plint,
            TelemetryHeader::P4Int(_) => Scheme::P4Int,
            TelemetryHeader::PintLite(_) => Scheme::PintLite,
        }
    }

    pub fn wire_size(&self) -> usize {
        match self {
            TelemetryHeader::Dlint(h) => h.wire_size(),
            TelemetryHeader::Plint(h) => h.wire_size(),
            TelemetryHeader::P4Int(h) => h.wire_size(),
            TelemetryHeader::PintLite(_) => 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    Forward,
    Reverse,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Packet {
    pub flow: FlowKey,
    pub direction: Direction,
    pub ttl: u8,
    pub seq: u64,
    pub payload_bytes: u32,
    pub header: Option<TelemetryHeader>,
    pub timestamp: f64,
}

impl Packet {
    pub fn new(flow: FlowKey, direction: Direction, seq: u64) -> Self {
        Packet {
            flow,
            direction,
            ttl: INITIAL_TTL,
            seq,
            payload_bytes: 0,
            header: None,
            timestamp: 0.0,
        }
    }

    pub fn header_bytes(&self) -> usize {
        self.header.as_ref().map_or(0, TelemetryHeader::wire_size)
    }
}

/// Header bytes carried by a packet of `scheme` after `hops` switches.
pub fn overhead_bytes(scheme: Scheme, hops: usize, v: usize) -> usize {
    match scheme {
        Scheme::Dlint => 4 * v,
        Scheme::Plint => 1 + 5 * v,
        Scheme::P4Int => P4INT_META_LEN + 4 * v * hops,
        Scheme::PintLite => 4,
    }
}

pub fn encode_header(header: &TelemetryHeader) -> Result<Vec<u8>, WireError> {
    let mut out = Vec::with_capacity(header.wire_size());
    match header {
        TelemetryHeader::Dlint(h) => {
            if h.slots.is_empty() {
                return Err(WireError::ZeroValueCount);
            }
            for (index, slot) in h.slots.iter().enumerate() {
                if slot.kind() == SlotKind::Unassigned {
                    return Err(WireError::InvariantViolation(format!(
                        "slot {index} holds unassigned code {:#010x}",
                        slot.0
                    )));
                }
                out.extend_from_slice(&slot.0.to_be_bytes());
            }
        }
        TelemetryHeader::Plint(h) => {
            if h.slots.is_empty() {
                return Err(WireError::ZeroValueCount);
            }
            out.push(h.init_ttl);
            for (index, slot) in h.slots.iter().enumerate() {
                if slot.hop_num == 0 {
                    return Err(WireError::InvariantViolation(format!(
                        "slot {index} has hop number 0"
                    )));
                }
                out.extend_from_slice(&slot.sw_id.get().to_be_bytes());
                out.push(slot.hop_num);
            }
        }
        TelemetryHeader::P4Int(h) => {
            if h.value_count == 0 {
                return Err(WireError::ZeroValueCount);
            }
            let v = usize::from(h.value_count);
            if h.stack.len() % v != 0 {
                return Err(WireError::InvariantViolation(format!(
                    "stack length {} is not a multiple of {v}",
                    h.stack.len()
                )));
            }
            let hops = u8::try_from(h.hop_count()).map_err(|_| {
                WireError::InvariantViolation(format!("hop count {} exceeds 255", h.hop_count()))
            })?;
            for (index, &word) in h.stack.iter().enumerate().step_by(v) {
                if SwitchId::new(word).is_err() {
                    return Err(WireError::InvariantViolation(format!(
                        "stack entry {index} must be a switch id, found {word:#010x}"
                    )));
                }
            }
            out.push(h.version);
            out.push(h.value_count);
            out.push(hops);
            out.push(0);
            out.extend_from_slice(&h.instruction_bitmap.to_be_bytes());
            out.resize(P4INT_META_LEN, 0);
            for word in &h.stack {
                out.extend_from_slice(&word.to_be_bytes());
            }
        }
        TelemetryHeader::PintLite(h) => out.extend_from_slice(&h.sw_id.get().to_be_bytes()),
    }
    Ok(out)
}

fn word_at(bytes: &[u8], offset: usize) -> u32 {
    u32::from_be_bytes([bytes[offset], bytes[offset + 1], bytes[offset + 2], bytes[offset + 3]])
}

fn exact_len(bytes: &[u8], expected: usize) -> Result<(), WireError> {
    match bytes.len() {
        n if n < expected => Err(WireError::TruncatedHeader { expected, actual: n }),
        n if n > expected => Err(WireError::TrailingBytes { trailing: n - expected }),
        _ => Ok(()),
    }
}

pub fn decode_header(bytes: &[u8], scheme: Scheme, v: usize) -> Result<TelemetryHeader, WireError> {
    if v == 0 {
        return Err(WireError::ZeroValueCount);
    }
    match scheme {
        Scheme::Dlint => {
            exact_len(bytes, 4 * v)?;
            let slots = (0..v)
                .map(|index| {
                    let slot = SlotValue(word_at(bytes, 4 * index));
                    if slot.kind() == SlotKind::Unassigned {
                        Err(WireError::MalformedSlot { index, raw: slot.0 })
                    } else {
                        Ok(slot)
                    }
                })
                .collect::<Result<_, _>>()?;
            Ok(TelemetryHeader::Dlint(DlintHeader { slots }))
        }
        Scheme::Plint => {
            exact_len(bytes, 1 + 5 * v)?;
            let slots = (0..v)
                .map(|index| {
                    let offset = 1 + 5 * index;
                    let raw = word_at(bytes, offset);
                    let hop_num = bytes[offset + 4];
                    match SwitchId::new(raw) {
                        Ok(sw_id) if hop_num >= 1 => Ok(PlintSlot { sw_id, hop_num }),
                        _ => Err(WireError::MalformedSlot { index, raw }),
                    }
                })
                .collect::<Result<_, _>>()?;
            Ok(TelemetryHeader::Plint(PlintHeader { init_ttl: bytes[0], slots }))
        }
        Scheme::P4Int => {
            if bytes.len() < P4INT_META_LEN {
                return Err(WireError::TruncatedHeader {
                    expected: P4INT_META_LEN,
                    actual: bytes.len(),
                });
            }
            let body = bytes.len() - P4INT_META_LEN;
            let per_hop = 4 * v;
            if body % per_hop != 0 {
                return Err(WireError::TruncatedHeader {
                    expected: P4INT_META_LEN + per_hop * (body / per_hop + 1),
                    actual: bytes.len(),
                });
            }
            let hops = body / per_hop;
            if usize::from(bytes[1]) != v {
                return Err(WireError::MalformedMeta(format!(
                    "value count {} does not match expected {v}",
                    bytes[1]
                )));
            }
            if usize::from(bytes[2]) != hops {
                return Err(WireError::MalformedMeta(format!(
                    "hop count {} does not match stack of {hops} hops",
                    bytes[2]
                )));
            }
            let stack: Vec<u32> = (0..hops * v)
                .map(|i| word_at(bytes, P4INT_META_LEN + 4 * i))
                .collect();
            for (index, &raw) in stack.iter().enumerate().step_by(v) {
                if SwitchId::new(raw).is_err() {
                    return Err(WireError::MalformedSlot { index, raw });
                }
            }
            Ok(TelemetryHeader::P4Int(P4IntHeader {
                version: bytes[0],
                value_count: bytes[1],
                instruction_bitmap: u16::from_be_bytes([bytes[4], bytes[5]]),
                stack,
            }))
        }
        Scheme::PintLite => {
            exact_len(bytes, 4)?;
            let raw = word_at(bytes, 0);
            let sw_id = SwitchId::new(raw).map_err(|_| WireError::MalformedSlot { index: 0, raw })?;
            Ok(TelemetryHeader::PintLite(PintLiteHeader { sw_id }))
        }
    }
}
