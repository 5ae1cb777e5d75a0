//! Types shared by every per-switch pipeline.

use thiserror::Error;

use crate::bloom::TelemetryState;
use crate::collector::SinkReport;
use crate::wire::{FlowKey, Packet, SwitchId, INITIAL_TTL};

/// Position of a switch on the path of the packet being processed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    Source,
    Transit,
    Sink,
    /// Single-switch path: first and last hop at once.
    SourceSink,
}

impl Role {
    pub fn for_position(index: usize, path_len: usize) -> Role {
        match (index == 0, index + 1 == path_len) {
            (true, true) => Role::SourceSink,
            (true, false) => Role::Source,
            (false, true) => Role::Sink,
            (false, false) => Role::Transit,
        }
    }

    pub fn is_source(self) -> bool {
        matches!(self, Role::Source | Role::SourceSink)
    }

    pub fn is_sink(self) -> bool {
        matches!(self, Role::Sink | Role::SourceSink)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SwitchError {
    #[error("switch {switch} is the source of {flow:?} but received an encapsulated packet")]
    UnexpectedHeaderAtSource { switch: SwitchId, flow: FlowKey },
    #[error("packet ttl {ttl} exceeds initial ttl {init_ttl}")]
    TtlInversion { ttl: u8, init_ttl: u8 },
    #[error("hop index {0} does not fit the 8-bit hop field")]
    HopOverflow(u32),
    #[error("switch {switch} expected a {expected} header")]
    ForeignHeader { switch: SwitchId, expected: &'static str },
}

/// What a switch did to one packet.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ForwardAction {
    pub attached_header: bool,
    pub slots_written: usize,
    pub new_state: Option<TelemetryState>,
    pub stripped_header: bool,
    pub report: Option<SinkReport>,
}

/// Path length seen by a sink, derived from how far the TTL has dropped.
pub(crate) fn observed_path_len(pkt: &Packet) -> u32 {
    u32::from(INITIAL_TTL.saturating_sub(pkt.ttl)) + 1
}
