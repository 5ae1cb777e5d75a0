//! Run-level statistics computed from a finished simulation.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::collector::{Adjacency, Collector, CollectorError, DetectionEvent, DetectionMode, Detector, TraceRecord};
use crate::simnet::RunOutput;
use crate::wire::{Direction, FlowKey, Scheme, SwitchId};

/// Collector and detector output for one run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Analysis {
    pub traces: Vec<TraceRecord>,
    /// Path the packet that closed each trace actually took.
    pub trace_paths: Vec<Arc<[SwitchId]>>,
    pub detections: Vec<DetectionEvent>,
}

impl Analysis {
    /// A trace counts when it is structurally complete and equals the real path.
    pub fn is_correct(&self, index: usize) -> bool {
        let trace = &self.traces[index];
        trace.complete && trace_matches(trace, &self.trace_paths[index])
    }

    pub fn correct_traces(&self) -> impl Iterator<Item = &TraceRecord> {
        (0..self.traces.len()).filter(|&i| self.is_correct(i)).map(|i| &self.traces[i])
    }
}

fn trace_matches(trace: &TraceRecord, truth: &[SwitchId]) -> bool {
    if trace.scheme == Scheme::PintLite && trace.order_ambiguous {
        let mut a = trace.hops.clone();
        let mut b = truth.to_vec();
        a.sort_unstable();
        b.sort_unstable();
        return a == b;
    }
    trace.hops == truth
}

/// Replays forward reports through a collector and both detectors.
pub fn analyze(output: &RunOutput, scheme: Scheme, adjacency: Option<Adjacency>) -> Result<Analysis, CollectorError> {
    let mut collector = Collector::new(scheme);
    if let Some(adjacency) = adjacency {
        collector = collector.with_adjacency(adjacency);
    }
    let mut detectors = [
        Detector::new(scheme, DetectionMode::WholeTrace),
        Detector::new(scheme, DetectionMode::Early),
    ];
    let mut analysis = Analysis::default();
    for delivery in output.deliveries.iter().filter(|d| d.direction == Direction::Forward) {
        let report = &delivery.report;
        for detector in &mut detectors {
            analysis.detections.extend(detector.observe_report(report));
        }
        for trace in collector.ingest(report)? {
            for detector in &mut detectors {
                analysis.detections.extend(detector.observe_trace(&trace));
            }
            analysis.traces.push(trace);
            analysis.trace_paths.push(Arc::clone(&delivery.path));
        }
    }
    Ok(analysis)
}

/// One row of `metrics.csv`. Optional values are blank when undefined for
/// the run, e.g. duplicate ratios outside PLINT.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub scheme: Scheme,
    pub v: usize,
    pub bf_ratio: f64,
    pub packets_delivered: u64,
    pub overhead_bytes_per_packet: f64,
    pub complete_traces: u64,
    pub header_space_utilization: f64,
    pub switch_ids_delivered: u64,
    pub pct_ids_conveyed: f64,
    pub duplicate_pct: Option<f64>,
    pub ids_per_trace: Option<f64>,
    pub updates_eligible: u64,
    pub update_detection_rate: Option<f64>,
    pub detection_time_mean: Option<f64>,
    pub early_detection_rate: Option<f64>,
    pub early_detection_time_mean: Option<f64>,
    pub bare_packet_fraction: f64,
}

/// Per-flow detection latency for flows whose route changed after a
/// baseline trace existed and that kept sending afterwards.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DetectionOutcome {
    pub eligible: Vec<FlowKey>,
    pub whole_trace: BTreeMap<FlowKey, f64>,
    pub early: BTreeMap<FlowKey, f64>,
}

pub fn detection_outcome(output: &RunOutput, analysis: &Analysis) -> DetectionOutcome {
    let mut outcome = DetectionOutcome::default();
    let mut first_complete: HashMap<FlowKey, f64> = HashMap::new();
    for trace in analysis.traces.iter().filter(|t| t.complete) {
        first_complete.entry(trace.flow).or_insert(trace.completed_at);
    }
    let mut update_at = HashMap::new();
    for (key, truth) in &output.ground_truth.flows {
        let Some((at, _)) = &truth.updated else { continue };
        let baseline = first_complete.get(key).is_some_and(|t| t < at);
        let sent_after = truth.last_emit.is_some_and(|t| t >= *at);
        if baseline && sent_after {
            outcome.eligible.push(*key);
            update_at.insert(*key, *at);
        }
    }
    for event in &analysis.detections {
        let Some(at) = update_at.get(&event.flow) else { continue };
        if event.detected_at < *at {
            continue;
        }
        let map = match event.mode {
            DetectionMode::WholeTrace => &mut outcome.whole_trace,
            DetectionMode::Early => &mut outcome.early,
        };
        map.entry(event.flow).or_insert(event.detected_at - at);
    }
    outcome
}

fn rate_and_mean(eligible: usize, times: &BTreeMap<FlowKey, f64>) -> (Option<f64>, Option<f64>) {
    if eligible == 0 {
        return (None, None);
    }
    let rate = times.len() as f64 / eligible as f64;
    let mean = (!times.is_empty()).then(|| times.values().sum::<f64>() / times.len() as f64);
    (Some(rate), mean)
}

fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

pub fn compute_metrics(output: &RunOutput, analysis: &Analysis, scheme: Scheme, v: usize, bf_ratio: f64) -> MetricsSummary {
    let forward: Vec<_> = output
        .deliveries
        .iter()
        .filter(|d| d.direction == Direction::Forward)
        .map(|d| &d.report)
        .collect();
    let packets = forward.len() as u64;
    let header_bytes: u64 = forward.iter().map(|r| u64::from(r.header_bytes)).sum();
    let slots_used: u64 = forward.iter().map(|r| u64::from(r.slots_used)).sum();
    let budget: u64 = forward.iter().map(|r| u64::from(r.slot_budget)).sum();
    let ids: u64 = forward.iter().map(|r| r.items.len() as u64).sum();
    // A cycle-closing packet that hands the sink's ID over directly is part of
    // the cycle; only packets that conveyed nothing count as bare.
    let bare = forward.iter().filter(|r| r.header_bytes == 0 && r.items.is_empty()).count() as u64;

    let duplicate_pct = (scheme == Scheme::Plint && packets > 0).then(|| {
        let total: f64 = forward
            .iter()
            .map(|r| {
                let distinct: HashSet<SwitchId> = r.items.iter().map(|i| i.sw_id).collect();
                (r.items.len() - distinct.len()) as f64 / r.slot_budget as f64
            })
            .sum();
        total / packets as f64
    });

    // IDs spent on rejected traces are charged to the next correct one.
    let mut pending: HashMap<FlowKey, u64> = HashMap::new();
    let mut per_trace = Vec::new();
    for (i, trace) in analysis.traces.iter().enumerate() {
        let carried = pending.entry(trace.flow).or_default();
        *carried += trace.ids_consumed;
        if analysis.is_correct(i) {
            per_trace.push(*carried);
            *carried = 0;
        }
    }
    let ids_per_trace =
        (!per_trace.is_empty()).then(|| per_trace.iter().sum::<u64>() as f64 / per_trace.len() as f64);

    let outcome = detection_outcome(output, analysis);
    let (update_detection_rate, detection_time_mean) = rate_and_mean(outcome.eligible.len(), &outcome.whole_trace);
    let (early_detection_rate, early_detection_time_mean) = rate_and_mean(outcome.eligible.len(), &outcome.early);

    MetricsSummary {
        scheme,
        v,
        bf_ratio,
        packets_delivered: packets,
        overhead_bytes_per_packet: ratio(header_bytes as f64, packets as f64),
        complete_traces: per_trace.len() as u64,
        header_space_utilization: ratio(slots_used as f64, budget as f64),
        switch_ids_delivered: ids,
        pct_ids_conveyed: ratio(ids as f64, budget as f64),
        duplicate_pct,
        ids_per_trace,
        updates_eligible: outcome.eligible.len() as u64,
        update_detection_rate,
        detection_time_mean,
        early_detection_rate,
        early_detection_time_mean,
        bare_packet_fraction: ratio(bare as f64, packets as f64),
    }
}

/// Traces whose hops include a switch the flow was never routed through.
pub fn off_path_traces(output: &RunOutput, analysis: &Analysis) -> usize {
    analysis
        .traces
        .iter()
        .filter(|t| t.hops.iter().any(|id| !output.ground_truth.on_any_path(&t.flow, *id)))
        .count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::duplicate_fraction;
    use crate::simnet::traffic::flow_key;
    use crate::simnet::{run, FlowSpec, Scenario, Topology};

    fn chain(n: u32, packets: u64, scheme: Scheme, v: usize) -> (RunOutput, Analysis, MetricsSummary) {
        let src = SwitchId::new(1).unwrap();
        let dst = SwitchId::new(n).unwrap();
        let flow = FlowSpec {
            key: flow_key(0, src, dst),
            src_node: src,
            dst_node: dst,
            start: 0.0,
            size_packets: packets,
            inter_packet_gap: 0.001,
            payload_bytes: 0,
        };
        let mut s = Scenario::new(Topology::chain(n, 0.0001), vec![flow], scheme);
        s.v = v;
        s.seed = 3;
        let out = run(&s).unwrap();
        let analysis = analyze(&out, scheme, None).unwrap();
        let m = compute_metrics(&out, &analysis, scheme, v, 0.0);
        (out, analysis, m)
    }

    #[test]
    fn p4int_every_packet_is_a_trace() {
        let (_, _, m) = chain(5, 200, Scheme::P4Int, 1);
        assert_eq!(m.complete_traces, 200);
        assert_eq!(m.packets_delivered, 200);
        assert_eq!(m.overhead_bytes_per_packet, 36.0);
        assert_eq!(m.header_space_utilization, 1.0);
        assert_eq!(m.ids_per_trace, Some(5.0));
    }

    #[test]
    fn plint_duplicates_follow_closed_form() {
        let (_, _, m) = chain(10, 10_000, Scheme::Plint, 5);
        let expected = duplicate_fraction(10, 5).unwrap();
        assert!((m.duplicate_pct.unwrap() - expected).abs() < 0.015, "{m:?}");
        assert_eq!(m.header_space_utilization, 1.0);
    }

    #[test]
    fn dlint_uses_less_header_space_than_plint() {
        let (_, a, d) = chain(5, 2000, Scheme::Dlint, 2);
        let (_, _, p) = chain(5, 2000, Scheme::Plint, 2);
        assert!(d.header_space_utilization < p.header_space_utilization);
        assert_eq!(d.ids_per_trace, Some(5.0));
        assert!(d.complete_traces > 0);
        assert_eq!(d.complete_traces as usize, a.traces.iter().filter(|t| t.complete).count());
        assert!(d.bare_packet_fraction < 0.5);
        assert_eq!(d.duplicate_pct, None);
    }

    #[test]
    fn no_update_means_no_eligible_flows() {
        let (out, analysis, m) = chain(4, 300, Scheme::Plint, 1);
        assert_eq!(m.updates_eligible, 0);
        assert_eq!(m.update_detection_rate, None);
        assert_eq!(off_path_traces(&out, &analysis), 0);
    }
}
