//! Telemetry server: rebuilds per-flow path traces from sink reports and
//! flags path updates.
//!
//! The collector applies structural rules only (INIT boundaries, cycle
//! completion, gap-free hop maps). Whether a trace matches the real path is
//! decided later against simulator ground truth.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::wire::{FlowKey, Scheme, SlotValue, SwitchId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportItem {
    pub sw_id: SwitchId,
    pub hop_num: Option<u8>,
}

/// Everything a sink exports for one packet.
#[derive(Debug, Clone, PartialEq)]
pub struct SinkReport {
    pub flow: FlowKey,
    pub scheme: Scheme,
    pub sink: SwitchId,
    /// Switch IDs in slot order; a DLINT sink's directly delivered ID comes last.
    pub items: Vec<ReportItem>,
    pub signals: Vec<SlotValue>,
    pub cycle_complete: bool,
    pub path_len: u32,
    pub timestamp: f64,
    /// Header size at the sink before stripping; 0 for a bare packet.
    pub header_bytes: u32,
    /// Header slots that carried a switch ID.
    pub slots_used: u32,
    /// ID-capable slots this packet could have carried.
    pub slot_budget: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub flow: FlowKey,
    pub scheme: Scheme,
    pub hops: Vec<SwitchId>,
    pub complete: bool,
    /// PINT-lite only: hop order could not be pinned down from adjacency.
    #[serde(default)]
    pub order_ambiguous: bool,
    pub ids_consumed: u64,
    pub completed_at: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DetectionMode {
    #[serde(rename = "WHOLE_TRACE")]
    WholeTrace,
    #[serde(rename = "EARLY")]
    Early,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionEvent {
    pub flow: FlowKey,
    pub mode: DetectionMode,
    pub detected_at: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CollectorError {
    #[error("hop number {hop} outside path of length {path_len}")]
    InconsistentHop { hop: u32, path_len: u32 },
    #[error("collector for {expected} received a {got} report")]
    SchemeMismatch { expected: Scheme, got: Scheme },
}

fn record(r: &SinkReport, hops: Vec<SwitchId>, complete: bool, ids_consumed: u64) -> TraceRecord {
    TraceRecord {
        flow: r.flow,
        scheme: r.scheme,
        hops,
        complete,
        order_ambiguous: false,
        ids_consumed,
        completed_at: r.timestamp,
    }
}

fn all_distinct(ids: &[SwitchId]) -> bool {
    let mut seen = HashSet::with_capacity(ids.len());
    ids.iter().all(|id| seen.insert(*id))
}

#[derive(Debug, Clone, Default)]
pub struct DlintAccumulator {
    partial: Vec<SwitchId>,
    ids_consumed: u64,
}

impl DlintAccumulator {
    pub fn collect(&mut self, r: &SinkReport) -> Vec<TraceRecord> {
        let mut out = Vec::new();
        if r.signals.contains(&SlotValue::INIT) && !self.partial.is_empty() {
            let hops = std::mem::take(&mut self.partial);
            out.push(record(r, hops, false, std::mem::take(&mut self.ids_consumed)));
        }
        self.partial.extend(r.items.iter().map(|it| it.sw_id));
        self.ids_consumed += r.items.len() as u64;
        if r.cycle_complete {
            let hops = std::mem::take(&mut self.partial);
            let complete =
                !hops.is_empty() && hops.len() == r.path_len as usize && all_distinct(&hops);
            out.push(record(r, hops, complete, std::mem::take(&mut self.ids_consumed)));
        }
        out
    }
}

#[derive(Debug, Clone, Default)]
pub struct PlintAccumulator {
    by_hop: Vec<Option<SwitchId>>,
    ids_consumed: u64,
}

impl PlintAccumulator {
    pub fn collect(&mut self, r: &SinkReport) -> Result<Vec<TraceRecord>, CollectorError> {
        for item in &r.items {
            let hop = item.hop_num.map_or(0, u32::from);
            if hop == 0 || hop > r.path_len {
                return Err(CollectorError::InconsistentHop { hop, path_len: r.path_len });
            }
        }
        if self.by_hop.len() != r.path_len as usize {
            self.by_hop = vec![None; r.path_len as usize];
        }
        for item in &r.items {
            let hop = usize::from(item.hop_num.expect("validated above"));
            self.by_hop[hop - 1] = Some(item.sw_id);
        }
        self.ids_consumed += r.items.len() as u64;
        if self.by_hop.iter().all(Option::is_some) {
            let hops: Vec<SwitchId> = self.by_hop.iter().map(|h| h.expect("all filled")).collect();
            self.by_hop.iter_mut().for_each(|h| *h = None);
            return Ok(vec![record(r, hops, true, std::mem::take(&mut self.ids_consumed))]);
        }
        Ok(Vec::new())
    }
}

/// Undirected switch adjacency used to order PINT-lite traces.
pub type Adjacency = HashMap<SwitchId, HashSet<SwitchId>>;

#[derive(Debug, Clone, Default)]
pub struct PintLiteAccumulator {
    seen: Vec<SwitchId>,
    path_len: u32,
    ids_consumed: u64,
}

impl PintLiteAccumulator {
    pub fn collect(&mut self, r: &SinkReport, adjacency: Option<&Adjacency>) -> Vec<TraceRecord> {
        if r.path_len != self.path_len {
            self.seen.clear();
            self.path_len = r.path_len;
        }
        for item in &r.items {
            if !self.seen.contains(&item.sw_id) {
                self.seen.push(item.sw_id);
            }
        }
        self.ids_consumed += r.items.len() as u64;
        if self.seen.len() < r.path_len as usize {
            return Vec::new();
        }
        let seen = std::mem::take(&mut self.seen);
        let ordered = adjacency.and_then(|adj| unique_path_order(&seen, r.sink, adj));
        let mut trace = record(r, Vec::new(), true, std::mem::take(&mut self.ids_consumed));
        match ordered {
            Some(hops) => trace.hops = hops,
            None => {
                trace.hops = seen;
                trace.order_ambiguous = true;
            }
        }
        vec![trace]
    }
}

/// The only ordering of `ids` forming a simple adjacency path that ends at
/// `sink`, or `None` if there is none or more than one.
pub fn unique_path_order(ids: &[SwitchId], sink: SwitchId, adjacency: &Adjacency) -> Option<Vec<SwitchId>> {
    if !ids.contains(&sink) {
        return None;
    }
    fn walk(
        path: &mut Vec<SwitchId>,
        remaining: &mut Vec<SwitchId>,
        adjacency: &Adjacency,
        found: &mut Vec<Vec<SwitchId>>,
    ) {
        if found.len() > 1 {
            return;
        }
        if remaining.is_empty() {
            found.push(path.iter().rev().copied().collect());
            return;
        }
        let last = *path.last().expect("path starts at the sink");
        let Some(neighbours) = adjacency.get(&last) else { return };
        for i in 0..remaining.len() {
            let next = remaining[i];
            if neighbours.contains(&next) {
                remaining.swap_remove(i);
                path.push(next);
                walk(path, remaining, adjacency, found);
                path.pop();
                remaining.push(next);
                let end = remaining.len() - 1;
                remaining.swap(i, end);
            }
        }
    }
    let mut remaining: Vec<SwitchId> = ids.iter().copied().filter(|&id| id != sink).collect();
    let mut path = vec![sink];
    let mut found = Vec::new();
    walk(&mut path, &mut remaining, adjacency, &mut found);
    if found.len() == 1 {
        found.pop()
    } else {
        None
    }
}

#[derive(Debug, Clone)]
enum FlowAccumulator {
    Dlint(DlintAccumulator),
    Plint(PlintAccumulator),
    PintLite(PintLiteAccumulator),
    P4Int,
}

/// Per-flow trace reconstruction for one scheme.
#[derive(Debug, Clone)]
pub struct Collector {
    scheme: Scheme,
    flows: HashMap<FlowKey, FlowAccumulator>,
    adjacency: Option<Adjacency>,
}

impl Collector {
    pub fn new(scheme: Scheme) -> Self {
        Collector { scheme, flows: HashMap::new(), adjacency: None }
    }

    pub fn with_adjacency(mut self, adjacency: Adjacency) -> Self {
        self.adjacency = Some(adjacency);
        self
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn ingest(&mut self, r: &SinkReport) -> Result<Vec<TraceRecord>, CollectorError> {
        if r.scheme != self.scheme {
            return Err(CollectorError::SchemeMismatch { expected: self.scheme, got: r.scheme });
        }
        let scheme = self.scheme;
        let acc = self.flows.entry(r.flow).or_insert_with(|| match scheme {
            Scheme::Dlint => FlowAccumulator::Dlint(DlintAccumulator::default()),
            Scheme::Plint => FlowAccumulator::Plint(PlintAccumulator::default()),
            Scheme::PintLite => FlowAccumulator::PintLite(PintLiteAccumulator::default()),
            Scheme::P4Int => FlowAccumulator::P4Int,
        });
        match acc {
            FlowAccumulator::Dlint(a) => Ok(a.collect(r)),
            FlowAccumulator::Plint(a) => a.collect(r),
            FlowAccumulator::PintLite(a) => Ok(a.collect(r, self.adjacency.as_ref())),
            FlowAccumulator::P4Int => {
                let hops = r.items.iter().map(|it| it.sw_id).collect();
                Ok(vec![record(r, hops, true, r.items.len() as u64)])
            }
        }
    }
}

#[derive(Debug, Clone, Default)]
struct FlowDetection {
    known: Option<Vec<SwitchId>>,
    dlint_position: usize,
}

/// Path-update detector for one scheme and one mode.
///
/// Feed every report through [`Detector::observe_report`] and every trace the
/// report produced through [`Detector::observe_trace`], in that order. In
/// EARLY mode every report that contradicts the known path yields an event;
/// consumers keep the first one after the change they are timing.
#[derive(Debug, Clone)]
pub struct Detector {
    scheme: Scheme,
    mode: DetectionMode,
    flows: HashMap<FlowKey, FlowDetection>,
}

fn same_path(scheme: Scheme, a: &[SwitchId], b: &[SwitchId]) -> bool {
    if scheme == Scheme::PintLite {
        // Without hop numbers only the set of switches is observable.
        let mut a = a.to_vec();
        let mut b = b.to_vec();
        a.sort_unstable();
        b.sort_unstable();
        a == b
    } else {
        a == b
    }
}

impl Detector {
    pub fn new(scheme: Scheme, mode: DetectionMode) -> Self {
        Detector { scheme, mode, flows: HashMap::new() }
    }

    pub fn mode(&self) -> DetectionMode {
        self.mode
    }

    pub fn known_path(&self, flow: &FlowKey) -> Option<&[SwitchId]> {
        self.flows.get(flow).and_then(|f| f.known.as_deref())
    }

    pub fn observe_report(&mut self, r: &SinkReport) -> Option<DetectionEvent> {
        let state = self.flows.entry(r.flow).or_default();
        if self.scheme == Scheme::Dlint && r.signals.contains(&SlotValue::INIT) {
            state.dlint_position = 0;
        }
        let position_start = state.dlint_position;
        state.dlint_position += r.items.len();
        if r.cycle_complete {
            state.dlint_position = 0;
        }
        if self.mode != DetectionMode::Early {
            return None;
        }
        let known = state.known.as_deref()?;
        let length_changed = r.path_len as usize != known.len();
        let inconsistent = length_changed
            || match self.scheme {
                Scheme::Dlint => r
                    .items
                    .iter()
                    .enumerate()
                    .any(|(j, it)| known.get(position_start + j) != Some(&it.sw_id)),
                Scheme::Plint | Scheme::P4Int => r.items.iter().any(|it| {
                    let hop = it.hop_num.map_or(0, usize::from);
                    hop == 0 || known.get(hop - 1) != Some(&it.sw_id)
                }),
                Scheme::PintLite => r.items.iter().any(|it| !known.contains(&it.sw_id)),
            };
        if inconsistent {
            return Some(DetectionEvent { flow: r.flow, mode: self.mode, detected_at: r.timestamp });
        }
        None
    }

    pub fn observe_trace(&mut self, t: &TraceRecord) -> Option<DetectionEvent> {
        if !t.complete {
            return None;
        }
        let state = self.flows.entry(t.flow).or_default();
        let previous = state.known.replace(t.hops.clone());
        match (self.mode, previous) {
            (DetectionMode::WholeTrace, Some(prev)) if !same_path(self.scheme, &prev, &t.hops) => {
                Some(DetectionEvent { flow: t.flow, mode: self.mode, detected_at: t.completed_at })
            }
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sid(raw: u32) -> SwitchId {
        SwitchId::new(raw).unwrap()
    }

    fn flow() -> FlowKey {
        FlowKey { src_addr: 9, dst_addr: 8, src_port: 7, dst_port: 6, proto: 6 }
    }

    fn report(scheme: Scheme, items: &[(u32, Option<u8>)], path_len: u32, t: f64) -> SinkReport {
        SinkReport {
            flow: flow(),
            scheme,
            sink: sid(path_len.max(1)),
            items: items.iter().map(|&(id, hop)| ReportItem { sw_id: sid(id), hop_num: hop }).collect(),
            signals: Vec::new(),
            cycle_complete: false,
            path_len,
            timestamp: t,
            header_bytes: 0,
            slots_used: 0,
            slot_budget: 1,
        }
    }

    fn dlint(items: &[u32], init: bool, done: bool) -> SinkReport {
        let pairs: Vec<_> = items.iter().map(|&i| (i, None)).collect();
        let mut r = report(Scheme::Dlint, &pairs, 5, 0.0);
        if init {
            r.signals.push(SlotValue::INIT);
        }
        r.cycle_complete = done;
        r
    }

    fn ids(hops: &[SwitchId]) -> Vec<u32> {
        hops.iter().map(|h| h.get()).collect()
    }

    #[test]
    fn dlint_single_value_cycle() {
        let mut c = Collector::new(Scheme::Dlint);
        let mut traces = Vec::new();
        traces.extend(c.ingest(&dlint(&[], true, false)).unwrap());
        for i in 1..=4 {
            traces.extend(c.ingest(&dlint(&[i], false, false)).unwrap());
        }
        traces.extend(c.ingest(&dlint(&[5], false, true)).unwrap());
        assert_eq!(traces.len(), 1);
        assert_eq!(ids(&traces[0].hops), vec![1, 2, 3, 4, 5]);
        assert!(traces[0].complete);
        assert_eq!(traces[0].ids_consumed, 5);
    }

    #[test]
    fn dlint_three_values_three_cycles() {
        let mut c = Collector::new(Scheme::Dlint);
        let mut traces = Vec::new();
        for _ in 0..3 {
            traces.extend(c.ingest(&dlint(&[1, 2], true, false)).unwrap());
            traces.extend(c.ingest(&dlint(&[3, 4, 5], false, true)).unwrap());
        }
        assert_eq!(traces.len(), 3);
        assert!(traces.iter().all(|t| t.complete && ids(&t.hops) == vec![1, 2, 3, 4, 5]));
    }

    #[test]
    fn dlint_gap_is_incomplete() {
        let mut c = Collector::new(Scheme::Dlint);
        let mut traces = Vec::new();
        traces.extend(c.ingest(&dlint(&[1], true, false)).unwrap());
        traces.extend(c.ingest(&dlint(&[2], false, false)).unwrap());
        traces.extend(c.ingest(&dlint(&[4], false, false)).unwrap());
        traces.extend(c.ingest(&dlint(&[5], false, true)).unwrap());
        assert_eq!(traces.len(), 1);
        assert_eq!(ids(&traces[0].hops), vec![1, 2, 4, 5]);
        assert!(!traces[0].complete);
    }

    #[test]
    fn dlint_init_closes_partial() {
        let mut c = Collector::new(Scheme::Dlint);
        c.ingest(&dlint(&[1, 2], true, false)).unwrap();
        let traces = c.ingest(&dlint(&[1, 2], true, false)).unwrap();
        assert_eq!(traces.len(), 1);
        assert!(!traces[0].complete);
    }

    #[test]
    fn plint_ten_packets_five_hops() {
        let mut c = Collector::new(Scheme::Plint);
        let hops = [3, 1, 3, 5, 1, 2, 2, 5, 3, 4];
        let mut traces = Vec::new();
        for (i, &h) in hops.iter().enumerate() {
            let out = c.ingest(&report(Scheme::Plint, &[(h, Some(h as u8))], 5, i as f64)).unwrap();
            if i < hops.len() - 1 {
                assert!(out.is_empty());
            }
            traces.extend(out);
        }
        assert_eq!(traces.len(), 1);
        assert_eq!(ids(&traces[0].hops), vec![1, 2, 3, 4, 5]);
        assert_eq!(traces[0].ids_consumed, 10);
        assert_eq!(traces[0].completed_at, 9.0);
    }

    #[test]
    fn plint_single_report_no_trace_and_bad_hop() {
        let mut c = Collector::new(Scheme::Plint);
        assert!(c.ingest(&report(Scheme::Plint, &[(7, Some(3))], 5, 0.0)).unwrap().is_empty());
        assert_eq!(
            c.ingest(&report(Scheme::Plint, &[(7, Some(6))], 5, 0.0)),
            Err(CollectorError::InconsistentHop { hop: 6, path_len: 5 })
        );
    }

    #[test]
    fn plint_length_change_flushes() {
        let mut c = Collector::new(Scheme::Plint);
        c.ingest(&report(Scheme::Plint, &[(1, Some(1)), (2, Some(2))], 3, 0.0)).unwrap();
        let out = c.ingest(&report(Scheme::Plint, &[(9, Some(3)), (8, Some(4))], 4, 1.0)).unwrap();
        assert!(out.is_empty());
        let out = c.ingest(&report(Scheme::Plint, &[(1, Some(1)), (2, Some(2))], 4, 2.0)).unwrap();
        assert_eq!(ids(&out[0].hops), vec![1, 2, 9, 8]);
    }

    #[test]
    fn pintlite_distinct_counting_and_order() {
        let mut adjacency = Adjacency::new();
        for (a, b) in [(1, 2), (2, 3)] {
            adjacency.entry(sid(a)).or_default().insert(sid(b));
            adjacency.entry(sid(b)).or_default().insert(sid(a));
        }
        let mut c = Collector::new(Scheme::PintLite).with_adjacency(adjacency);
        assert!(c.ingest(&report(Scheme::PintLite, &[(2, None)], 3, 0.0)).unwrap().is_empty());
        assert!(c.ingest(&report(Scheme::PintLite, &[(2, None)], 3, 0.0)).unwrap().is_empty());
        assert!(c.ingest(&report(Scheme::PintLite, &[(3, None)], 3, 0.0)).unwrap().is_empty());
        let out = c.ingest(&report(Scheme::PintLite, &[(1, None)], 3, 0.0)).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(ids(&out[0].hops), vec![1, 2, 3]);
        assert!(!out[0].order_ambiguous);
        assert_eq!(out[0].ids_consumed, 4);
    }

    #[test]
    fn pintlite_ambiguous_without_adjacency() {
        let mut c = Collector::new(Scheme::PintLite);
        c.ingest(&report(Scheme::PintLite, &[(2, None)], 2, 0.0)).unwrap();
        let out = c.ingest(&report(Scheme::PintLite, &[(1, None)], 2, 0.0)).unwrap();
        assert!(out[0].order_ambiguous);
    }

    fn trace(hops: &[u32], t: f64) -> TraceRecord {
        TraceRecord {
            flow: flow(),
            scheme: Scheme::Plint,
            hops: hops.iter().map(|&h| sid(h)).collect(),
            complete: true,
            order_ambiguous: false,
            ids_consumed: 0,
            completed_at: t,
        }
    }

    #[test]
    fn whole_trace_detection() {
        let mut d = Detector::new(Scheme::Plint, DetectionMode::WholeTrace);
        assert!(d.observe_trace(&trace(&[1, 2, 3], 1.0)).is_none());
        assert!(d.observe_trace(&trace(&[1, 2, 3], 2.0)).is_none());
        let ev = d.observe_trace(&trace(&[1, 4, 3], 3.0)).unwrap();
        assert_eq!(ev.detected_at, 3.0);
        assert!(d.observe_trace(&trace(&[1, 4, 3], 4.0)).is_none());
    }

    #[test]
    fn plint_early_detection_on_position_change() {
        let mut d = Detector::new(Scheme::Plint, DetectionMode::Early);
        d.observe_trace(&trace(&[1, 2, 3, 6, 5], 1.0));
        assert!(d.observe_report(&report(Scheme::Plint, &[(6, Some(4))], 5, 2.0)).is_none());
        let ev = d.observe_report(&report(Scheme::Plint, &[(9, Some(4))], 5, 3.5)).unwrap();
        assert_eq!(ev.detected_at, 3.5);
        assert_eq!(ev.mode, DetectionMode::Early);
        // Every inconsistent report is flagged until a complete trace replaces the known path.
        assert!(d.observe_report(&report(Scheme::Plint, &[(9, Some(4))], 5, 4.0)).is_some());
        d.observe_trace(&trace(&[1, 2, 3, 9, 5], 4.5));
        assert!(d.observe_report(&report(Scheme::Plint, &[(9, Some(4))], 5, 5.0)).is_none());
    }

    #[test]
    fn pintlite_misses_reordering() {
        let mut d = Detector::new(Scheme::PintLite, DetectionMode::Early);
        let mut base = trace(&[1, 2, 3, 4, 5], 1.0);
        base.scheme = Scheme::PintLite;
        d.observe_trace(&base);
        // Switch 2 now sits at a different position: not observable.
        assert!(d.observe_report(&report(Scheme::PintLite, &[(2, None)], 5, 2.0)).is_none());
        assert!(d.observe_report(&report(Scheme::PintLite, &[(7, None)], 5, 2.5)).is_some());

        let mut whole = Detector::new(Scheme::PintLite, DetectionMode::WholeTrace);
        whole.observe_trace(&base);
        let mut shuffled = trace(&[1, 3, 2, 4, 5], 3.0);
        shuffled.scheme = Scheme::PintLite;
        assert!(whole.observe_trace(&shuffled).is_none());
    }

    #[test]
    fn dlint_early_detection_by_position() {
        let mut d = Detector::new(Scheme::Dlint, DetectionMode::Early);
        let mut base = trace(&[1, 2, 3, 4, 5], 1.0);
        base.scheme = Scheme::Dlint;
        d.observe_report(&dlint(&[], true, false));
        d.observe_trace(&base);
        assert!(d.observe_report(&dlint(&[1], true, false)).is_none());
        assert!(d.observe_report(&dlint(&[2], false, false)).is_none());
        assert!(d.observe_report(&dlint(&[7], false, false)).is_some());
    }
}
