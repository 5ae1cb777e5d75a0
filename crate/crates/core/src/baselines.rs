//! Comparison schemes: hop-append P4-INT and PINT-lite reservoir sampling
//! without hop numbers.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::collector::{ReportItem, SinkReport};
use crate::plint::switch_rng;
use crate::switch::{observed_path_len, ForwardAction, Role, SwitchError};
use crate::wire::{Direction, P4IntHeader, Packet, PintLiteHeader, Scheme, SwitchId, TelemetryHeader};

#[derive(Debug, Clone)]
pub struct P4IntSwitch {
    id: SwitchId,
    v: u8,
}

impl P4IntSwitch {
    pub fn new(id: SwitchId, v: u8) -> Self {
        assert!(v >= 1, "P4-INT needs at least one value per hop");
        P4IntSwitch { id, v }
    }

    pub fn process(&mut self, pkt: &mut Packet, role: Role) -> Result<ForwardAction, SwitchError> {
        match pkt.direction {
            Direction::Forward => self.process_forward(pkt, role),
            Direction::Reverse => Ok(ForwardAction::default()),
        }
    }

    pub fn process_forward(&mut self, pkt: &mut Packet, role: Role) -> Result<ForwardAction, SwitchError> {
        let mut action = ForwardAction::default();
        if role.is_source() {
            pkt.header = Some(TelemetryHeader::P4Int(P4IntHeader::new(self.v)));
            action.attached_header = true;
        }
        let header = match pkt.header.as_mut() {
            Some(TelemetryHeader::P4Int(h)) => h,
            None => return Ok(action),
            Some(_) => return Err(SwitchError::ForeignHeader { switch: self.id, expected: "P4-INT" }),
        };
        header.stack.push(self.id.get());
        header.stack.extend(std::iter::repeat_n(0, usize::from(self.v) - 1));
        action.slots_written = usize::from(self.v);

        if role.is_sink() {
            let Some(TelemetryHeader::P4Int(header)) = pkt.header.take() else { unreachable!() };
            action.stripped_header = true;
            let items: Vec<ReportItem> = header
                .switch_ids()
                .enumerate()
                .map(|(i, raw)| ReportItem {
                    sw_id: SwitchId::new(raw).expect("only switch ids are pushed"),
                    hop_num: u8::try_from(i + 1).ok(),
                })
                .collect();
            action.report = Some(SinkReport {
                flow: pkt.flow,
                scheme: Scheme::P4Int,
                sink: self.id,
                slots_used: items.len() as u32,
                slot_budget: items.len() as u32,
                items,
                signals: Vec::new(),
                cycle_complete: true,
                path_len: observed_path_len(pkt),
                timestamp: pkt.timestamp,
                header_bytes: header.wire_size() as u32,
            });
        }
        Ok(action)
    }
}

/// Reservoir sampling of a single 4-byte ID. The hop index comes from the
/// domain-wide initial TTL and is never written into the packet.
#[derive(Debug, Clone)]
pub struct PintLiteSwitch {
    id: SwitchId,
    rng: ChaCha8Rng,
}

impl PintLiteSwitch {
    pub fn new(id: SwitchId, seed: u64) -> Self {
        PintLiteSwitch { id, rng: switch_rng(seed, id) }
    }

    pub fn process(&mut self, pkt: &mut Packet, role: Role) -> Result<ForwardAction, SwitchError> {
        match pkt.direction {
            Direction::Forward => self.process_forward(pkt, role),
            Direction::Reverse => Ok(ForwardAction::default()),
        }
    }

    pub fn process_forward(&mut self, pkt: &mut Packet, role: Role) -> Result<ForwardAction, SwitchError> {
        let mut action = ForwardAction::default();
        if role.is_source() {
            pkt.header = Some(TelemetryHeader::PintLite(PintLiteHeader { sw_id: self.id }));
            action.attached_header = true;
            action.slots_written = 1;
        } else {
            let hop = observed_path_len(pkt);
            match pkt.header.as_mut() {
                Some(TelemetryHeader::PintLite(h)) => {
                    if self.rng.random::<f64>() < 1.0 / f64::from(hop) {
                        h.sw_id = self.id;
                        action.slots_written = 1;
                    }
                }
                None => return Ok(action),
                Some(_) => {
                    return Err(SwitchError::ForeignHeader { switch: self.id, expected: "PINT-lite" })
                }
            }
        }
        if role.is_sink() {
            let Some(TelemetryHeader::PintLite(h)) = pkt.header.take() else { unreachable!() };
            action.stripped_header = true;
            action.report = Some(SinkReport {
                flow: pkt.flow,
                scheme: Scheme::PintLite,
                sink: self.id,
                items: vec![ReportItem { sw_id: h.sw_id, hop_num: None }],
                signals: Vec::new(),
                cycle_complete: false,
                path_len: observed_path_len(pkt),
                timestamp: pkt.timestamp,
                header_bytes: 4,
                slots_used: 1,
                slot_budget: 1,
            });
        }
        Ok(action)
    }
}
