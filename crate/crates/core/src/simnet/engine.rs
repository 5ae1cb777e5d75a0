use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap, HashMap};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::topology::{seconds_to_ns, RouteError, Topology};
use super::traffic::FlowSpec;
use crate::baselines::{P4IntSwitch, PintLiteSwitch};
use crate::bloom::{BloomError, BloomStateStore};
use crate::collector::SinkReport;
use crate::dlint::{DlintOptions, DlintSwitch};
use crate::plint::PlintSwitch;
use crate::switch::{ForwardAction, Role, SwitchError};
use crate::wire::{Direction, FlowKey, Packet, Scheme, SwitchId};

pub const MAX_VALUES: usize = 8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RunError {
    #[error("{field}: {message}")]
    Config { field: String, message: String },
    #[error("flow {flow}: {source}")]
    Route { flow: usize, source: RouteError },
    #[error(transparent)]
    Switch(#[from] SwitchError),
    #[error(transparent)]
    Bloom(#[from] BloomError),
}

fn config_err(field: impl Into<String>, message: impl Into<String>) -> RunError {
    RunError::Config { field: field.into(), message: message.into() }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkLoss {
    pub a: SwitchId,
    pub b: SwitchId,
    pub prob: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub enum UpdatePlan {
    #[default]
    None,
    /// Every flow is rerouted on the topology without these links.
    RemoveLinks(Vec<(SwitchId, SwitchId)>),
    /// Explicit new path for selected flows, by flow index.
    Reroute(Vec<(usize, Vec<SwitchId>)>),
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub topology: Topology,
    pub flows: Vec<FlowSpec>,
    pub scheme: Scheme,
    pub v: usize,
    pub bf_cells: usize,
    pub hash_count: usize,
    /// Shared by every switch when set; otherwise derived per switch from `seed`.
    pub hash_seeds: Option<Vec<u64>>,
    pub seed: u64,
    pub loss_prob: f64,
    pub link_loss: Vec<LinkLoss>,
    /// No packet is emitted at or after this time.
    pub duration: f64,
    pub update_time: Option<f64>,
    pub update_plan: UpdatePlan,
    pub trace_reverse: bool,
    pub dedup_at_sink: bool,
    pub watchdog: Option<u32>,
    pub ack_every: u32,
}

impl Scenario {
    pub fn new(topology: Topology, flows: Vec<FlowSpec>, scheme: Scheme) -> Self {
        Scenario {
            topology,
            flows,
            scheme,
            v: 1,
            bf_cells: 1 << 16,
            hash_count: 1,
            hash_seeds: None,
            seed: 0,
            loss_prob: 0.0,
            link_loss: Vec::new(),
            duration: 60.0,
            update_time: None,
            update_plan: UpdatePlan::None,
            trace_reverse: false,
            dedup_at_sink: false,
            watchdog: None,
            ack_every: 1,
        }
    }

    pub fn validate(&self) -> Result<(), RunError> {
        if !(1..=MAX_VALUES).contains(&self.v) {
            return Err(config_err("v", format!("must be in 1..={MAX_VALUES}, got {}", self.v)));
        }
        if self.bf_cells == 0 {
            return Err(config_err("bf_bits", "must be at least 1"));
        }
        if self.hash_count == 0 {
            return Err(config_err("hash_count", "must be at least 1"));
        }
        if let Some(seeds) = &self.hash_seeds {
            if seeds.len() != self.hash_count {
                return Err(config_err(
                    "hash_seeds",
                    format!("expected {} seeds, got {}", self.hash_count, seeds.len()),
                ));
            }
        }
        if self.ack_every == 0 {
            return Err(config_err("ack_every", "must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.loss_prob) {
            return Err(config_err("loss_prob", "must be within [0, 1]"));
        }
        for (i, loss) in self.link_loss.iter().enumerate() {
            if !(0.0..=1.0).contains(&loss.prob) {
                return Err(config_err(format!("link_loss[{i}].prob"), "must be within [0, 1]"));
            }
            if self.topology.latency_ns(loss.a, loss.b).is_none() {
                return Err(config_err(format!("link_loss[{i}]"), format!("no link {}-{}", loss.a, loss.b)));
            }
        }
        if !(self.duration > 0.0) {
            return Err(config_err("duration", "must be positive"));
        }
        if let Some(t) = self.update_time {
            if !(t >= 0.0) {
                return Err(config_err("update_time", "must be non-negative"));
            }
        }
        if self.flows.is_empty() {
            return Err(config_err("flows", "at least one flow is required"));
        }
        for (i, flow) in self.flows.iter().enumerate() {
            if flow.size_packets == 0 {
                return Err(config_err(format!("flows[{i}].size_packets"), "must be at least 1"));
            }
            if !(flow.start >= 0.0) {
                return Err(config_err(format!("flows[{i}].start"), "must be non-negative"));
            }
            if !(flow.inter_packet_gap > 0.0) {
                return Err(config_err(format!("flows[{i}].inter_packet_gap"), "must be positive"));
            }
        }
        match &self.update_plan {
            UpdatePlan::None => {}
            UpdatePlan::RemoveLinks(links) => {
                for (i, (a, b)) in links.iter().enumerate() {
                    if self.topology.latency_ns(*a, *b).is_none() {
                        return Err(config_err(
                            format!("update_plan.remove_links[{i}]"),
                            format!("no link {a}-{b}"),
                        ));
                    }
                }
            }
            UpdatePlan::Reroute(paths) => {
                for (i, (flow, path)) in paths.iter().enumerate() {
                    let Some(spec) = self.flows.get(*flow) else {
                        return Err(config_err(format!("update_plan.reroute[{i}].flow"), "no such flow"));
                    };
                    if path.first() != Some(&spec.src_node) || path.last() != Some(&spec.dst_node) {
                        return Err(config_err(
                            format!("update_plan.reroute[{i}].path"),
                            "must start at the flow's source and end at its destination",
                        ));
                    }
                    self.topology
                        .validate_path(path)
                        .map_err(|e| config_err(format!("update_plan.reroute[{i}].path"), e.to_string()))?;
                }
            }
        }
        Ok(())
    }
}

/// A report together with the path its packet actually took.
#[derive(Debug, Clone, PartialEq)]
pub struct Delivery {
    pub report: SinkReport,
    pub path: Arc<[SwitchId]>,
    pub direction: Direction,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowTruth {
    pub initial: Arc<[SwitchId]>,
    /// Route in force from the update instant on, if it differs.
    pub updated: Option<(f64, Arc<[SwitchId]>)>,
    pub first_emit: Option<f64>,
    pub last_emit: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GroundTruth {
    pub update_time: Option<f64>,
    pub flows: BTreeMap<FlowKey, FlowTruth>,
}

impl GroundTruth {
    /// Route a packet of `flow` emitted at time `t` takes.
    pub fn path_at(&self, flow: &FlowKey, t: f64) -> Option<&[SwitchId]> {
        let truth = self.flows.get(flow)?;
        match &truth.updated {
            Some((at, path)) if t >= *at => Some(path),
            _ => Some(&truth.initial),
        }
    }

    /// Every switch the flow was ever routed through.
    pub fn on_any_path(&self, flow: &FlowKey, id: SwitchId) -> bool {
        self.flows.get(flow).is_some_and(|t| {
            t.initial.contains(&id) || t.updated.as_ref().is_some_and(|(_, p)| p.contains(&id))
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FlowCounters {
    pub emitted: u64,
    pub delivered: u64,
    pub dropped: u64,
    pub acks_emitted: u64,
    pub acks_delivered: u64,
    pub acks_dropped: u64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Accounting {
    pub flows: BTreeMap<FlowKey, FlowCounters>,
    /// Header bytes summed over every link a forward packet crossed.
    pub forward_link_header_bytes: u64,
    pub reverse_link_header_bytes: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub deliveries: Vec<Delivery>,
    pub ground_truth: GroundTruth,
    pub accounting: Accounting,
}

impl RunOutput {
    pub fn reports(&self) -> impl Iterator<Item = &SinkReport> {
        self.deliveries.iter().map(|d| &d.report)
    }
}

#[derive(Debug)]
struct Route {
    ids: Arc<[SwitchId]>,
    nodes: Vec<usize>,
    hop_latency: Vec<u64>,
    hop_loss: Vec<f64>,
}

#[derive(Debug)]
enum EventKind {
    Emit(usize),
    Arrive { flow: usize, pos: usize, route: Arc<Route>, pkt: Box<Packet> },
    PathUpdate,
}

#[derive(Debug)]
struct Event {
    time: u64,
    seq: u64,
    kind: EventKind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        (self.time, self.seq) == (other.time, other.seq)
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    // Reversed so the max-heap pops the earliest event first.
    fn cmp(&self, other: &Self) -> Ordering {
        (other.time, other.seq).cmp(&(self.time, self.seq))
    }
}

#[derive(Debug)]
enum SwitchImpl {
    Dlint(DlintSwitch),
    Plint(PlintSwitch),
    P4Int(P4IntSwitch),
    PintLite(PintLiteSwitch),
}

impl SwitchImpl {
    fn process(&mut self, pkt: &mut Packet, role: Role) -> Result<ForwardAction, SwitchError> {
        match self {
            SwitchImpl::Dlint(s) => s.process(pkt, role),
            SwitchImpl::Plint(s) => s.process(pkt, role),
            SwitchImpl::P4Int(s) => s.process(pkt, role),
            SwitchImpl::PintLite(s) => s.process(pkt, role),
        }
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Hash seeds used by switch `id` when the scenario does not pin them.
pub fn derived_hash_seeds(seed: u64, id: SwitchId, count: usize) -> Vec<u64> {
    (0..count as u64)
        .map(|j| splitmix64(seed ^ splitmix64(u64::from(id.get()) << 8 | j)))
        .collect()
}

struct Engine<'a> {
    scenario: &'a Scenario,
    node_index: HashMap<SwitchId, usize>,
    switches: Vec<SwitchImpl>,
    forward: Vec<Arc<Route>>,
    reverse: Vec<Arc<Route>>,
    heap: BinaryHeap<Event>,
    next_seq: u64,
    loss_rng: ChaCha8Rng,
    link_loss: HashMap<(SwitchId, SwitchId), f64>,
    out: RunOutput,
}

fn link_key(a: SwitchId, b: SwitchId) -> (SwitchId, SwitchId) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

impl<'a> Engine<'a> {
    fn new(scenario: &'a Scenario) -> Result<Self, RunError> {
        let nodes: Vec<SwitchId> = scenario.topology.nodes().collect();
        let node_index = nodes.iter().enumerate().map(|(i, id)| (*id, i)).collect();
        let options = DlintOptions { trace_reverse: scenario.trace_reverse, watchdog: scenario.watchdog };
        let switches = nodes
            .iter()
            .map(|&id| -> Result<SwitchImpl, RunError> {
                Ok(match scenario.scheme {
                    Scheme::Dlint => {
                        let seeds = scenario
                            .hash_seeds
                            .clone()
                            .unwrap_or_else(|| derived_hash_seeds(scenario.seed, id, scenario.hash_count));
                        let store = BloomStateStore::new(scenario.bf_cells, scenario.hash_count, &seeds)?;
                        SwitchImpl::Dlint(DlintSwitch::new(id, store, scenario.v, options))
                    }
                    Scheme::Plint => {
                        SwitchImpl::Plint(PlintSwitch::new(id, scenario.v, scenario.seed, scenario.dedup_at_sink))
                    }
                    Scheme::P4Int => SwitchImpl::P4Int(P4IntSwitch::new(id, scenario.v as u8)),
                    Scheme::PintLite => SwitchImpl::PintLite(PintLiteSwitch::new(id, scenario.seed)),
                })
            })
            .collect::<Result<_, _>>()?;

        let link_loss = scenario
            .link_loss
            .iter()
            .map(|l| (link_key(l.a, l.b), l.prob))
            .collect();
        let mut loss_rng = ChaCha8Rng::seed_from_u64(scenario.seed);
        loss_rng.set_stream(u64::MAX);

        Ok(Engine {
            scenario,
            node_index,
            switches,
            forward: Vec::new(),
            reverse: Vec::new(),
            heap: BinaryHeap::new(),
            next_seq: 0,
            loss_rng,
            link_loss,
            out: RunOutput {
                deliveries: Vec::new(),
                ground_truth: GroundTruth { update_time: scenario.update_time, flows: BTreeMap::new() },
                accounting: Accounting::default(),
            },
        })
    }

    fn build_route(&self, ids: &[SwitchId]) -> Arc<Route> {
        let topo = &self.scenario.topology;
        let hops = ids.windows(2);
        Arc::new(Route {
            ids: ids.into(),
            nodes: ids.iter().map(|id| self.node_index[id]).collect(),
            hop_latency: hops.clone().map(|w| topo.latency_ns(w[0], w[1]).expect("validated path")).collect(),
            hop_loss: hops
                .map(|w| *self.link_loss.get(&link_key(w[0], w[1])).unwrap_or(&self.scenario.loss_prob))
                .collect(),
        })
    }

    fn set_route(&mut self, flow: usize, ids: &[SwitchId]) {
        let forward = self.build_route(ids);
        let reversed: Vec<SwitchId> = ids.iter().rev().copied().collect();
        let reverse = self.build_route(&reversed);
        if flow < self.forward.len() {
            self.forward[flow] = forward;
            self.reverse[flow] = reverse;
        } else {
            self.forward.push(forward);
            self.reverse.push(reverse);
        }
    }

    fn schedule(&mut self, time: u64, kind: EventKind) {
        self.heap.push(Event { time, seq: self.next_seq, kind });
        self.next_seq += 1;
    }

    fn run(mut self) -> Result<RunOutput, RunError> {
        let scenario = self.scenario;
        for (i, flow) in scenario.flows.iter().enumerate() {
            let path = scenario
                .topology
                .route(flow.src_node, flow.dst_node)
                .map_err(|source| RunError::Route { flow: i, source })?;
            self.set_route(i, &path);
            self.out.ground_truth.flows.insert(
                flow.key,
                FlowTruth { initial: path.into(), updated: None, first_emit: None, last_emit: None },
            );
            self.out.accounting.flows.insert(flow.key, FlowCounters::default());
        }
        let horizon = seconds_to_ns(scenario.duration);
        for (i, flow) in scenario.flows.iter().enumerate() {
            let start = seconds_to_ns(flow.start);
            if start < horizon {
                self.schedule(start, EventKind::Emit(i));
            }
        }
        if let Some(t) = scenario.update_time {
            self.schedule(seconds_to_ns(t), EventKind::PathUpdate);
        }

        while let Some(event) = self.heap.pop() {
            match event.kind {
                EventKind::Emit(flow) => self.emit(event.time, flow, horizon),
                EventKind::Arrive { flow, pos, route, mut pkt } => {
                    self.arrive(event.time, flow, pos, route, &mut pkt)?
                }
                EventKind::PathUpdate => self.path_update(event.time)?,
            }
        }
        Ok(self.out)
    }

    fn emit(&mut self, now: u64, flow: usize, horizon: u64) {
        let spec = &self.scenario.flows[flow];
        let counters = self.out.accounting.flows.get_mut(&spec.key).expect("registered");
        let mut pkt = Packet::new(spec.key, Direction::Forward, counters.emitted);
        pkt.payload_bytes = spec.payload_bytes;
        counters.emitted += 1;
        let emitted = counters.emitted;
        let t = now as f64 / 1e9;
        let truth = self.out.ground_truth.flows.get_mut(&spec.key).expect("registered");
        truth.first_emit.get_or_insert(t);
        truth.last_emit = Some(t);

        let gap = seconds_to_ns(spec.inter_packet_gap).max(1);
        if emitted < spec.size_packets && now + gap < horizon {
            self.schedule(now + gap, EventKind::Emit(flow));
        }
        let route = Arc::clone(&self.forward[flow]);
        self.schedule(now, EventKind::Arrive { flow, pos: 0, route, pkt: Box::new(pkt) });
    }

    fn arrive(&mut self, now: u64, flow: usize, pos: usize, route: Arc<Route>, pkt: &mut Packet) -> Result<(), RunError> {
        let len = route.nodes.len();
        pkt.timestamp = now as f64 / 1e9;
        let role = Role::for_position(pos, len);
        let action = self.switches[route.nodes[pos]].process(pkt, role)?;
        if let Some(report) = action.report {
            self.out.deliveries.push(Delivery {
                report,
                path: Arc::clone(&route.ids),
                direction: pkt.direction,
            });
        }
        pkt.ttl = pkt.ttl.saturating_sub(1);

        let key = self.scenario.flows[flow].key;
        if pos + 1 == len {
            let counters = self.out.accounting.flows.get_mut(&key).expect("registered");
            match pkt.direction {
                Direction::Forward => {
                    counters.delivered += 1;
                    if counters.delivered % u64::from(self.scenario.ack_every) == 0 {
                        let mut ack = Packet::new(key.reversed(), Direction::Reverse, counters.acks_emitted);
                        counters.acks_emitted += 1;
                        ack.payload_bytes = 0;
                        let route = Arc::clone(&self.reverse[flow]);
                        self.schedule(now, EventKind::Arrive { flow, pos: 0, route, pkt: Box::new(ack) });
                    }
                }
                Direction::Reverse => counters.acks_delivered += 1,
            }
            return Ok(());
        }

        let header_bytes = pkt.header_bytes() as u64;
        match pkt.direction {
            Direction::Forward => self.out.accounting.forward_link_header_bytes += header_bytes,
            Direction::Reverse => self.out.accounting.reverse_link_header_bytes += header_bytes,
        }
        let loss = route.hop_loss[pos];
        if loss > 0.0 && self.loss_rng.random::<f64>() < loss {
            let counters = self.out.accounting.flows.get_mut(&key).expect("registered");
            match pkt.direction {
                Direction::Forward => counters.dropped += 1,
                Direction::Reverse => counters.acks_dropped += 1,
            }
            return Ok(());
        }
        let at = now + route.hop_latency[pos];
        let pkt = Box::new(std::mem::replace(pkt, Packet::new(key, Direction::Forward, 0)));
        self.schedule(at, EventKind::Arrive { flow, pos: pos + 1, route, pkt });
        Ok(())
    }

    fn path_update(&mut self, now: u64) -> Result<(), RunError> {
        let scenario = self.scenario;
        let t = now as f64 / 1e9;
        let new_paths: Vec<(usize, Vec<SwitchId>)> = match &scenario.update_plan {
            UpdatePlan::None => Vec::new(),
            UpdatePlan::RemoveLinks(links) => {
                let cut = scenario.topology.without_links(links);
                scenario
                    .flows
                    .iter()
                    .enumerate()
                    .map(|(i, f)| {
                        cut.route(f.src_node, f.dst_node)
                            .map(|p| (i, p))
                            .map_err(|source| RunError::Route { flow: i, source })
                    })
                    .collect::<Result<_, _>>()?
            }
            UpdatePlan::Reroute(paths) => paths.clone(),
        };
        for (flow, path) in new_paths {
            if *self.forward[flow].ids == *path {
                continue;
            }
            self.set_route(flow, &path);
            let truth = self.out.ground_truth.flows.get_mut(&scenario.flows[flow].key).expect("registered");
            truth.updated = Some((t, path.into()));
        }
        Ok(())
    }
}

/// Runs a scenario to completion. Identical scenarios give identical output.
pub fn run(scenario: &Scenario) -> Result<RunOutput, RunError> {
    scenario.validate()?;
    Engine::new(scenario)?.run()
}
