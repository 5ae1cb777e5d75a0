//! PLINT switch pipeline: reservoir sampling with TTL-derived hop numbers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::collector::{ReportItem, SinkReport};
use crate::switch::{ForwardAction, Role, SwitchError};
use crate::wire::{Direction, Packet, PlintHeader, PlintSlot, Scheme, SwitchId, TelemetryHeader};

/// 1-based position of the current switch, from the TTL as seen on arrival.
pub fn hop_index(pkt: &Packet, init_ttl: u8) -> Result<u32, SwitchError> {
    if pkt.ttl > init_ttl {
        return Err(SwitchError::TtlInversion { ttl: pkt.ttl, init_ttl });
    }
    Ok(u32::from(init_ttl - pkt.ttl) + 1)
}

/// Seeds a per-switch stream so draws do not depend on event interleaving.
pub(crate) fn switch_rng(seed: u64, id: SwitchId) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::from(id.get()));
    rng
}

#[derive(Debug, Clone)]
pub struct PlintSwitch {
    id: SwitchId,
    v: usize,
    rng: ChaCha8Rng,
    dedup_at_sink: bool,
}

impl PlintSwitch {
    pub fn new(id: SwitchId, v: usize, seed: u64, dedup_at_sink: bool) -> Self {
        assert!(v >= 1, "PLINT needs at least one slot");
        PlintSwitch { id, v, rng: switch_rng(seed, id), dedup_at_sink }
    }

    pub fn id(&self) -> SwitchId {
        self.id
    }

    /// Reverse packets carry no PLINT telemetry and pass through unchanged.
    pub fn process(&mut self, pkt: &mut Packet, role: Role) -> Result<ForwardAction, SwitchError> {
        match pkt.direction {
            Direction::Forward => self.process_forward(pkt, role),
            Direction::Reverse => Ok(ForwardAction::default()),
        }
    }

    pub fn process_forward(&mut self, pkt: &mut Packet, role: Role) -> Result<ForwardAction, SwitchError> {
        let mut action = ForwardAction::default();
        let hop = if role.is_source() {
            let slot = PlintSlot { sw_id: self.id, hop_num: 1 };
            pkt.header = Some(TelemetryHeader::Plint(PlintHeader {
                init_ttl: pkt.ttl,
                slots: vec![slot; self.v],
            }));
            action.attached_header = true;
            action.slots_written = self.v;
            1
        } else {
            let init_ttl = match &pkt.header {
                Some(TelemetryHeader::Plint(h)) => h.init_ttl,
                None => return Ok(action),
                Some(_) => return Err(SwitchError::ForeignHeader { switch: self.id, expected: "PLINT" }),
            };
            let hop = hop_index(pkt, init_ttl)?;
            let Some(TelemetryHeader::Plint(header)) = pkt.header.as_mut() else { unreachable!() };
            let hop_num = u8::try_from(hop).map_err(|_| SwitchError::HopOverflow(hop))?;
            let keep_prob = 1.0 / f64::from(hop);
            for slot in header.slots.iter_mut() {
                if self.rng.random::<f64>() < keep_prob {
                    *slot = PlintSlot { sw_id: self.id, hop_num };
                    action.slots_written += 1;
                }
            }
            hop
        };
        if role.is_sink() {
            self.finish_at_sink(pkt, hop, &mut action);
        }
        Ok(action)
    }

    fn finish_at_sink(&mut self, pkt: &mut Packet, hop: u32, action: &mut ForwardAction) {
        let Some(TelemetryHeader::Plint(mut header)) = pkt.header.take() else {
            return;
        };
        action.stripped_header = true;
        if self.dedup_at_sink {
            dedup_first_duplicate(&mut header.slots, self.id, hop as u8);
        }
        action.report = Some(SinkReport {
            flow: pkt.flow,
            scheme: Scheme::Plint,
            sink: self.id,
            items: header
                .slots
                .iter()
                .map(|s| ReportItem { sw_id: s.sw_id, hop_num: Some(s.hop_num) })
                .collect(),
            signals: Vec::new(),
            cycle_complete: false,
            path_len: hop,
            timestamp: pkt.timestamp,
            header_bytes: header.wire_size() as u32,
            slots_used: header.slots.len() as u32,
            slot_budget: self.v as u32,
        });
    }
}

/// Replaces the lowest-index slot repeating an earlier slot's switch with the
/// sink's own ID. Skipped when the sink already holds a slot, since swapping
/// would not reduce redundancy.
fn dedup_first_duplicate(slots: &mut [PlintSlot], own: SwitchId, hop_num: u8) {
    if slots.iter().any(|s| s.sw_id == own) {
        return;
    }
    let duplicate = (1..slots.len()).find(|&i| slots[..i].iter().any(|s| s.sw_id == slots[i].sw_id));
    if let Some(i) = duplicate {
        slots[i] = PlintSlot { sw_id: own, hop_num };
    }
}

/// Number of slots whose switch ID already appeared in an earlier slot.
pub fn duplicate_count(ids: impl IntoIterator<Item = SwitchId>) -> usize {
    let mut seen = Vec::new();
    let mut dups = 0;
    for id in ids {
        if seen.contains(&id) {
            dups += 1;
        } else {
            seen.push(id);
        }
    }
    dups
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wire::{FlowKey, INITIAL_TTL};

    fn sid(raw: u32) -> SwitchId {
        SwitchId::new(raw).unwrap()
    }

    fn flow() -> FlowKey {
        FlowKey { src_addr: 1, dst_addr: 2, src_port: 5, dst_port: 6, proto: 17 }
    }

    fn path(n: u32, v: usize, seed: u64, dedup: bool) -> Vec<PlintSwitch> {
        (1..=n).map(|i| PlintSwitch::new(sid(i), v, seed, dedup)).collect()
    }

    fn send(path: &mut [PlintSwitch]) -> SinkReport {
        let n = path.len();
        let mut pkt = Packet::new(flow(), Direction::Forward, 0);
        let mut report = None;
        for (i, sw) in path.iter_mut().enumerate() {
            let action = sw.process_forward(&mut pkt, Role::for_position(i, n)).unwrap();
            report = action.report.or(report);
            pkt.ttl -= 1;
        }
        assert!(pkt.header.is_none());
        report.unwrap()
    }

    #[test]
    fn hop_index_examples() {
        let mut pkt = Packet::new(flow(), Direction::Forward, 0);
        assert_eq!(hop_index(&pkt, 64).unwrap(), 1);
        pkt.ttl = 62;
        assert_eq!(hop_index(&pkt, 64).unwrap(), 3);
        pkt.ttl = 65;
        assert_eq!(hop_index(&pkt, 64), Err(SwitchError::TtlInversion { ttl: 65, init_ttl: 64 }));
    }

    #[test]
    fn source_fills_every_slot() {
        let mut sw = PlintSwitch::new(sid(3), 4, 1, false);
        let mut pkt = Packet::new(flow(), Direction::Forward, 0);
        sw.process_forward(&mut pkt, Role::Source).unwrap();
        let Some(TelemetryHeader::Plint(h)) = pkt.header else { panic!() };
        assert_eq!(h.init_ttl, INITIAL_TTL);
        assert_eq!(h.slots, vec![PlintSlot { sw_id: sid(3), hop_num: 1 }; 4]);
    }

    #[test]
    fn hop_numbers_match_positions() {
        let mut switches = path(9, 5, 77, false);
        for _ in 0..500 {
            let r = send(&mut switches);
            assert_eq!(r.path_len, 9);
            assert_eq!(r.header_bytes, 26);
            for item in &r.items {
                assert_eq!(u32::from(item.hop_num.unwrap()), item.sw_id.get());
            }
        }
    }

    #[test]
    fn prevalence_is_uniform() {
        let n = 5;
        let mut switches = path(n, 1, 2024, false);
        let packets = 20_000;
        let mut counts = vec![0usize; n as usize];
        for _ in 0..packets {
            let r = send(&mut switches);
            counts[r.items[0].sw_id.get() as usize - 1] += 1;
        }
        for c in counts {
            let freq = c as f64 / packets as f64;
            assert!((freq - 0.2).abs() <= 0.015, "freq {freq}");
        }
    }

    #[test]
    fn dedup_removes_at_most_one_duplicate() {
        let mut plain = path(10, 5, 9, false);
        let mut dedup = path(10, 5, 9, true);
        let mut reduced = 0;
        for _ in 0..2000 {
            let a = send(&mut plain);
            let b = send(&mut dedup);
            let da = duplicate_count(a.items.iter().map(|i| i.sw_id));
            let db = duplicate_count(b.items.iter().map(|i| i.sw_id));
            assert!(db <= da && da - db <= 1);
            reduced += da - db;
        }
        assert!(reduced > 0);
    }

    #[test]
    fn dedup_targets_lowest_duplicate() {
        let mut slots = vec![
            PlintSlot { sw_id: sid(1), hop_num: 1 },
            PlintSlot { sw_id: sid(2), hop_num: 2 },
            PlintSlot { sw_id: sid(1), hop_num: 1 },
            PlintSlot { sw_id: sid(2), hop_num: 2 },
        ];
        dedup_first_duplicate(&mut slots, sid(4), 4);
        assert_eq!(slots[2], PlintSlot { sw_id: sid(4), hop_num: 4 });
        assert_eq!(slots[3].sw_id, sid(2));
    }
}
