//! DLINT switch pipeline.
//!
//! Switches on a flow's path take turns inserting their ID. Whose turn it is
//! follows from the per-flow [`TelemetryState`] each switch keeps in its
//! [`BloomStateStore`]: INIT arms the path, each switch inserts once, and a
//! RESET carried back on a reverse packet restarts the cycle.

use std::collections::{HashMap, HashSet};

use crate::bloom::{BloomStateStore, TelemetryState};
use crate::collector::{ReportItem, SinkReport};
use crate::switch::{observed_path_len, ForwardAction, Role, SwitchError};
use crate::wire::{DlintHeader, Direction, FlowKey, Packet, Scheme, SlotValue, SwitchId, TelemetryHeader};

/// Default number of header-less packets before the source watchdog fires.
pub const DEFAULT_WATCHDOG_PACKETS: u32 = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DlintOptions {
    /// Also trace reverse flows; RESET then shares reverse headers with IDs.
    pub trace_reverse: bool,
    /// Source self-resets after this many consecutive bare packets.
    pub watchdog: Option<u32>,
}

impl Default for DlintOptions {
    fn default() -> Self {
        DlintOptions { trace_reverse: false, watchdog: None }
    }
}

#[derive(Debug, Clone)]
pub struct DlintSwitch {
    id: SwitchId,
    store: BloomStateStore,
    v: usize,
    options: DlintOptions,
    reset_armed: HashSet<FlowKey>,
    bare_streak: HashMap<FlowKey, u32>,
}

fn dlint_header(pkt: &mut Packet) -> Option<&mut DlintHeader> {
    match pkt.header.as_mut() {
        Some(TelemetryHeader::Dlint(h)) => Some(h),
        _ => None,
    }
}

impl DlintSwitch {
    pub fn new(id: SwitchId, store: BloomStateStore, v: usize, options: DlintOptions) -> Self {
        assert!(v >= 1, "DLINT needs at least one slot");
        DlintSwitch {
            id,
            store,
            v,
            options,
            reset_armed: HashSet::new(),
            bare_streak: HashMap::new(),
        }
    }

    pub fn id(&self) -> SwitchId {
        self.id
    }

    pub fn state_of(&self, flow: &FlowKey) -> TelemetryState {
        self.store.lookup(flow)
    }

    pub fn store(&self) -> &BloomStateStore {
        &self.store
    }

    pub fn is_reset_armed(&self, flow: &FlowKey) -> bool {
        self.reset_armed.contains(flow)
    }

    pub fn process(&mut self, pkt: &mut Packet, role: Role) -> Result<ForwardAction, SwitchError> {
        match pkt.direction {
            Direction::Forward => self.process_forward(pkt, role),
            Direction::Reverse => self.process_reverse(pkt, role),
        }
    }

    /// `role` is this switch's position on the forward path of `pkt.flow`.
    pub fn process_forward(&mut self, pkt: &mut Packet, role: Role) -> Result<ForwardAction, SwitchError> {
        self.check_foreign(pkt, role)?;
        let mut action = ForwardAction::default();
        if self.options.trace_reverse {
            self.relay_reset(pkt, role, &mut action);
        }
        let delivered = self.trace(pkt, role, &mut action);
        if role.is_sink() {
            self.finish_at_sink(pkt, delivered, &mut action);
        }
        Ok(action)
    }

    /// `role` is this switch's position on the path of the reverse packet
    /// itself, so the forward sink acts as `Role::Source` here.
    pub fn process_reverse(&mut self, pkt: &mut Packet, role: Role) -> Result<ForwardAction, SwitchError> {
        self.check_foreign(pkt, role)?;
        let mut action = ForwardAction::default();
        self.relay_reset(pkt, role, &mut action);
        if self.options.trace_reverse {
            let delivered = self.trace(pkt, role, &mut action);
            if role.is_sink() {
                self.finish_at_sink(pkt, delivered, &mut action);
            }
        } else if role.is_sink() && pkt.header.take().is_some() {
            action.stripped_header = true;
        }
        Ok(action)
    }

    fn check_foreign(&self, pkt: &Packet, role: Role) -> Result<(), SwitchError> {
        match &pkt.header {
            Some(_) if role.is_source() => Err(SwitchError::UnexpectedHeaderAtSource {
                switch: self.id,
                flow: pkt.flow,
            }),
            Some(TelemetryHeader::Dlint(_)) | None => Ok(()),
            Some(_) => Err(SwitchError::ForeignHeader { switch: self.id, expected: "DLINT" }),
        }
    }

    /// RESET handling for the flow travelling opposite to `pkt`.
    fn relay_reset(&mut self, pkt: &mut Packet, role: Role, action: &mut ForwardAction) {
        let opposite = pkt.flow.reversed();
        if role.is_source() {
            if self.reset_armed.remove(&opposite) {
                let mut header = DlintHeader::empty(self.v);
                header.slots[0] = SlotValue::RESET;
                pkt.header = Some(TelemetryHeader::Dlint(header));
                action.attached_header = true;
                action.slots_written += 1;
                self.store.update(&opposite, TelemetryState::AwaitingInit);
            }
            return;
        }
        let carries_reset = dlint_header(pkt).is_some_and(|h| h.contains(SlotValue::RESET));
        if carries_reset {
            self.store.update(&opposite, TelemetryState::AwaitingInit);
        }
    }

    fn set_state(&mut self, flow: &FlowKey, role: Role, state: TelemetryState, action: &mut ForwardAction) {
        self.store.update(flow, state);
        action.new_state = Some(state);
        if state == TelemetryState::InsertedId && role.is_sink() {
            self.reset_armed.insert(*flow);
        }
    }

    fn insert_own(&self, pkt: &mut Packet, action: &mut ForwardAction) -> bool {
        let id = SlotValue::from(self.id);
        match dlint_header(pkt) {
            Some(h) => match h.first_free() {
                Some(i) => {
                    h.slots[i] = id;
                    action.slots_written += 1;
                    true
                }
                None => false,
            },
            None => false,
        }
    }

    fn ensure_header(&self, pkt: &mut Packet, action: &mut ForwardAction) {
        if pkt.header.is_none() {
            pkt.header = Some(TelemetryHeader::Dlint(DlintHeader::empty(self.v)));
            action.attached_header = true;
        }
    }

    /// Applies the state table for `pkt.flow`. Returns true when this
    /// switch's ID must be delivered directly (sink with no header room).
    fn trace(&mut self, pkt: &mut Packet, role: Role, action: &mut ForwardAction) -> bool {
        let flow = pkt.flow;
        let state = self.store.lookup(&flow);

        if role == Role::SourceSink {
            if state != TelemetryState::InsertedId {
                self.set_state(&flow, role, TelemetryState::InsertedId, action);
                return true;
            }
            return false;
        }

        if role.is_source() {
            match state {
                TelemetryState::AwaitingInit => {
                    self.ensure_header(pkt, action);
                    let h = dlint_header(pkt).expect("header just ensured");
                    let Some(i) = h.first_free() else { return false };
                    h.slots[i] = SlotValue::INIT;
                    action.slots_written += 1;
                    if self.insert_own(pkt, action) {
                        self.set_state(&flow, role, TelemetryState::InsertedId, action);
                    } else {
                        self.set_state(&flow, role, TelemetryState::ReadyToInsert, action);
                    }
                }
                TelemetryState::ReadyToInsert => {
                    self.ensure_header(pkt, action);
                    if self.insert_own(pkt, action) {
                        self.set_state(&flow, role, TelemetryState::InsertedId, action);
                    }
                }
                TelemetryState::InsertedId => self.watchdog_tick(pkt, action),
            }
            return false;
        }

        let (has_header, has_init, has_id) = match dlint_header(pkt) {
            Some(h) => (
                true,
                h.contains(SlotValue::INIT),
                h.slots.iter().any(|s| s.switch_id().is_some()),
            ),
            None => (false, false, false),
        };

        match (state, has_header) {
            (TelemetryState::AwaitingInit, true) if has_init => {
                if self.insert_own(pkt, action) {
                    self.set_state(&flow, role, TelemetryState::InsertedId, action);
                } else {
                    self.set_state(&flow, role, TelemetryState::ReadyToInsert, action);
                }
                false
            }
            (TelemetryState::AwaitingInit, true) if has_id => {
                // INIT was lost upstream; join the cycle from the next packet on.
                self.set_state(&flow, role, TelemetryState::ReadyToInsert, action);
                false
            }
            (TelemetryState::ReadyToInsert, true) => {
                if self.insert_own(pkt, action) {
                    self.set_state(&flow, role, TelemetryState::InsertedId, action);
                }
                false
            }
            (TelemetryState::ReadyToInsert, false) if role == Role::Transit => {
                self.ensure_header(pkt, action);
                self.insert_own(pkt, action);
                self.set_state(&flow, role, TelemetryState::InsertedId, action);
                false
            }
            (TelemetryState::ReadyToInsert, false) => {
                self.set_state(&flow, role, TelemetryState::InsertedId, action);
                true
            }
            _ => false,
        }
    }

    fn watchdog_tick(&mut self, pkt: &Packet, action: &mut ForwardAction) {
        let Some(limit) = self.options.watchdog else { return };
        if pkt.header.is_some() {
            self.bare_streak.remove(&pkt.flow);
            return;
        }
        let streak = self.bare_streak.entry(pkt.flow).or_insert(0);
        *streak += 1;
        if *streak >= limit {
            self.bare_streak.remove(&pkt.flow);
            self.store.update(&pkt.flow, TelemetryState::AwaitingInit);
            action.new_state = Some(TelemetryState::AwaitingInit);
        }
    }

    fn finish_at_sink(&mut self, pkt: &mut Packet, delivered_directly: bool, action: &mut ForwardAction) {
        let header = match pkt.header.take() {
            Some(TelemetryHeader::Dlint(h)) => Some(h),
            _ => None,
        };
        action.stripped_header = header.is_some();
        let header_bytes = header.as_ref().map_or(0, DlintHeader::wire_size);
        let mut items = Vec::new();
        let mut signals = Vec::new();
        let mut own_in_slot = false;
        for slot in header.iter().flat_map(|h| h.slots.iter()) {
            if let Some(id) = slot.switch_id() {
                own_in_slot |= id == self.id;
                items.push(ReportItem { sw_id: id, hop_num: None });
            } else if slot.is_signal() {
                signals.push(*slot);
            }
        }
        let slots_used = items.len() as u32;
        let own_written = own_in_slot && action.new_state == Some(TelemetryState::InsertedId);
        if delivered_directly {
            items.push(ReportItem { sw_id: self.id, hop_num: None });
        }
        action.report = Some(SinkReport {
            flow: pkt.flow,
            scheme: Scheme::Dlint,
            sink: self.id,
            items,
            signals,
            cycle_complete: delivered_directly || own_written,
            path_len: observed_path_len(pkt),
            timestamp: pkt.timestamp,
            header_bytes: header_bytes as u32,
            slots_used,
            slot_budget: self.v as u32,
        });
    }
}
