//! Strict JSON scenario configuration.
//!
//! ```json
//! {
//!   "seed": 7,
//!   "scheme": "DLINT",
//!   "v": 1,
//!   "topology": { "file": "btn27.txt" },
//!   "traffic": { "flow_count": 400, "zipf_exponent": 1.2 },
//!   "bf_ratio": 0.2,
//!   "update_time": 30.0,
//!   "update_plan": { "remove_links": [[4, 7]] }
//! }
//! ```
//!
//! Unknown keys are rejected. Relative topology paths resolve against the
//! config file's directory.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::simnet::traffic::{flow_key, MAX_FLOW_PACKETS};
use crate::simnet::{generate_flows, FlowSpec, LinkLoss, RunError, Scenario, Topology, TrafficParams, UpdatePlan};
use crate::wire::{FlowKey, Scheme, SwitchId};

pub const DEFAULT_BF_CELLS: usize = 1 << 16;

fn default_duration() -> f64 {
    60.0
}

fn one_usize() -> usize {
    1
}

fn one_u32() -> u32 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum TopologySource {
    File(PathBuf),
    Edges(Vec<(u32, u32, f64)>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowConfig {
    pub src: u32,
    pub dst: u32,
    #[serde(default)]
    pub start: f64,
    pub size_packets: u64,
    #[serde(default = "TrafficConfig::default_gap")]
    pub inter_packet_gap: f64,
    #[serde(default = "TrafficConfig::default_payload")]
    pub payload_bytes: u32,
    #[serde(default)]
    pub key: Option<FlowKey>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrafficConfig {
    pub flow_count: usize,
    #[serde(default = "TrafficConfig::default_exponent")]
    pub zipf_exponent: f64,
    #[serde(default = "TrafficConfig::default_max_packets")]
    pub max_packets: u64,
    #[serde(default = "TrafficConfig::default_gap")]
    pub inter_packet_gap: f64,
    #[serde(default = "TrafficConfig::default_payload")]
    pub payload_bytes: u32,
    /// Endpoint pools; every topology node when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sources: Option<Vec<u32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub destinations: Option<Vec<u32>>,
    /// Explicit (src, dst) pairs; excludes `sources` and `destinations`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pairs: Option<Vec<(u32, u32)>>,
}

impl TrafficConfig {
    fn default_exponent() -> f64 {
        1.2
    }
    fn default_max_packets() -> u64 {
        MAX_FLOW_PACKETS
    }
    fn default_gap() -> f64 {
        0.01
    }
    fn default_payload() -> u32 {
        1000
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkLossConfig {
    pub a: u32,
    pub b: u32,
    pub prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RerouteConfig {
    /// Index into the flow list.
    pub flow: usize,
    pub path: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum UpdatePlanConfig {
    RemoveLinks(Vec<(u32, u32)>),
    Reroute(Vec<RerouteConfig>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_duration")]
    pub duration: f64,
    pub scheme: Scheme,
    #[serde(default = "one_usize")]
    pub v: usize,
    pub topology: TopologySource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flows: Option<Vec<FlowConfig>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub traffic: Option<TrafficConfig>,
    /// Bloom filter cells per switch. Mutually exclusive with `bf_ratio`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bf_bits: Option<usize>,
    /// Flows per Bloom filter cell; sets `bf_bits = ceil(flows / bf_ratio)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bf_ratio: Option<f64>,
    #[serde(default = "one_usize")]
    pub hash_count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hash_seeds: Option<Vec<u64>>,
    #[serde(default)]
    pub loss_prob: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub link_loss: Vec<LinkLossConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub update_time: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub update_plan: Option<UpdatePlanConfig>,
    #[serde(default)]
    pub trace_reverse: bool,
    #[serde(default)]
    pub dedup_at_sink: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub watchdog: Option<u32>,
    #[serde(default = "one_u32")]
    pub ack_every: u32,
}

fn config_err(field: impl Into<String>, message: impl ToString) -> RunError {
    RunError::Config { field: field.into(), message: message.to_string() }
}

/// Parses a config document, reporting the offending field path on error.
pub fn parse_config(text: &str) -> Result<ScenarioConfig, RunError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let field = if path == "." { "(root)".to_string() } else { path };
        config_err(field, e.into_inner())
    })
}

pub fn load_config(path: &Path) -> Result<ScenarioConfig, RunError> {
    let text = std::fs::read_to_string(path).map_err(|e| config_err("--config", format!("{}: {e}", path.display())))?;
    parse_config(&text)
}

fn switch_id(field: impl Into<String>, raw: u32) -> Result<SwitchId, RunError> {
    SwitchId::new(raw).map_err(|e| config_err(field, e))
}

/// A scenario ready to run plus the Bloom load it was built for.
#[derive(Debug, Clone)]
pub struct BuiltScenario {
    pub scenario: Scenario,
    pub bf_ratio: f64,
}

impl ScenarioConfig {
    pub fn build(&self, base_dir: &Path) -> Result<BuiltScenario, RunError> {
        let topology = match &self.topology {
            TopologySource::File(file) => {
                let path = if file.is_absolute() { file.clone() } else { base_dir.join(file) };
                Topology::load(&path).map_err(|e| config_err("topology.file", e))?
            }
            TopologySource::Edges(edges) => {
                Topology::from_edges(edges.iter().copied()).map_err(|e| config_err("topology.edges", e))?
            }
        };
        let flows = self.build_flows(&topology)?;

        let cells = match (self.bf_bits, self.bf_ratio) {
            (Some(_), Some(_)) => return Err(config_err("bf_ratio", "cannot be combined with bf_bits")),
            (Some(bits), None) => bits,
            (None, Some(ratio)) => {
                if !(ratio > 0.0 && ratio.is_finite()) {
                    return Err(config_err("bf_ratio", "must be positive"));
                }
                (flows.len() as f64 / ratio).ceil().max(1.0) as usize
            }
            (None, None) => DEFAULT_BF_CELLS,
        };
        let bf_ratio = self.bf_ratio.unwrap_or(flows.len() as f64 / cells.max(1) as f64);

        let link_loss = self
            .link_loss
            .iter()
            .enumerate()
            .map(|(i, l)| {
                Ok(LinkLoss {
                    a: switch_id(format!("link_loss[{i}].a"), l.a)?,
                    b: switch_id(format!("link_loss[{i}].b"), l.b)?,
                    prob: l.prob,
                })
            })
            .collect::<Result<_, RunError>>()?;

        let update_plan = match &self.update_plan {
            None => UpdatePlan::None,
            Some(UpdatePlanConfig::RemoveLinks(links)) => UpdatePlan::RemoveLinks(
                links
                    .iter()
                    .enumerate()
                    .map(|(i, &(a, b))| {
                        let field = format!("update_plan.remove_links[{i}]");
                        Ok((switch_id(field.clone(), a)?, switch_id(field, b)?))
                    })
                    .collect::<Result<_, RunError>>()?,
            ),
            Some(UpdatePlanConfig::Reroute(paths)) => UpdatePlan::Reroute(
                paths
                    .iter()
                    .enumerate()
                    .map(|(i, r)| {
                        let field = format!("update_plan.reroute[{i}].path");
                        let path = r
                            .path
                            .iter()
                            .map(|&raw| switch_id(field.clone(), raw))
                            .collect::<Result<_, _>>()?;
                        Ok((r.flow, path))
                    })
                    .collect::<Result<_, RunError>>()?,
            ),
        };
        if self.update_plan.is_some() && self.update_time.is_none() {
            return Err(config_err("update_time", "required when update_plan is set"));
        }

        let mut scenario = Scenario::new(topology, flows, self.scheme);
        scenario.v = self.v;
        scenario.bf_cells = cells;
        scenario.hash_count = self.hash_count;
        scenario.hash_seeds = self.hash_seeds.clone();
        scenario.seed = self.seed;
        scenario.loss_prob = self.loss_prob;
        scenario.link_loss = link_loss;
        scenario.duration = self.duration;
        scenario.update_time = self.update_time;
        scenario.update_plan = update_plan;
        scenario.trace_reverse = self.trace_reverse;
        scenario.dedup_at_sink = self.dedup_at_sink;
        scenario.watchdog = self.watchdog;
        scenario.ack_every = self.ack_every;
        scenario.validate()?;
        Ok(BuiltScenario { scenario, bf_ratio })
    }

    fn build_flows(&self, topology: &Topology) -> Result<Vec<FlowSpec>, RunError> {
        match (&self.flows, &self.traffic) {
            (Some(_), Some(_)) => Err(config_err("traffic", "cannot be combined with flows")),
            (None, None) => Err(config_err("flows", "either flows or traffic is required")),
            (Some(flows), None) => flows
                .iter()
                .enumerate()
                .map(|(i, f)| {
                    let src = switch_id(format!("flows[{i}].src"), f.src)?;
                    let dst = switch_id(format!("flows[{i}].dst"), f.dst)?;
                    for (name, node) in [("src", src), ("dst", dst)] {
                        if !topology.contains(node) {
                            return Err(config_err(format!("flows[{i}].{name}"), format!("{node} is not in the topology")));
                        }
                    }
                    Ok(FlowSpec {
                        key: f.key.unwrap_or_else(|| flow_key(i, src, dst)),
                        src_node: src,
                        dst_node: dst,
                        start: f.start,
                        size_packets: f.size_packets,
                        inter_packet_gap: f.inter_packet_gap,
                        payload_bytes: f.payload_bytes,
                    })
                })
                .collect(),
            (None, Some(t)) => {
                let pool = |field: &str, ids: &Option<Vec<u32>>| -> Result<Vec<SwitchId>, RunError> {
                    match ids {
                        None => Ok(topology.nodes().collect()),
                        Some(ids) => ids
                            .iter()
                            .enumerate()
                            .map(|(i, &raw)| {
                                let id = switch_id(format!("traffic.{field}[{i}]"), raw)?;
                                if !topology.contains(id) {
                                    return Err(config_err(format!("traffic.{field}[{i}]"), "not in the topology"));
                                }
                                Ok(id)
                            })
                            .collect(),
                    }
                };
                let pairs = match &t.pairs {
                    None => Vec::new(),
                    Some(_) if t.sources.is_some() || t.destinations.is_some() => {
                        return Err(config_err("traffic.pairs", "cannot be combined with sources or destinations"));
                    }
                    Some(pairs) => pairs
                        .iter()
                        .enumerate()
                        .map(|(i, &(a, b))| {
                            let field = format!("traffic.pairs[{i}]");
                            let (a, b) = (switch_id(field.clone(), a)?, switch_id(field.clone(), b)?);
                            if !topology.contains(a) || !topology.contains(b) {
                                return Err(config_err(field, "endpoint not in the topology"));
                            }
                            Ok((a, b))
                        })
                        .collect::<Result<_, _>>()?,
                };
                let params = TrafficParams {
                    flow_count: t.flow_count,
                    zipf_exponent: t.zipf_exponent,
                    duration: self.duration,
                    max_packets: t.max_packets,
                    inter_packet_gap: t.inter_packet_gap,
                    payload_bytes: t.payload_bytes,
                    sources: pool("sources", &t.sources)?,
                    destinations: pool("destinations", &t.destinations)?,
                    pairs,
                };
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                rng.set_stream(1);
                generate_flows(&params, &mut rng).map_err(|e| config_err("traffic", e))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn field_of(text: &str) -> String {
        match parse_config(text) {
            Err(RunError::Config { field, .. }) => field,
            other => panic!("expected config error, got {other:?}"),
        }
    }

    const BASE: &str = r#"{"scheme": "PLINT", "v": 2, "topology": {"edges": [[1, 2, 0.001], [2, 3, 0.001]]},
        "flows": [{"src": 1, "dst": 3, "size_packets": 10}]}"#;

    #[test]
    fn minimal_config_builds() {
        let cfg = parse_config(BASE).unwrap();
        let built = cfg.build(Path::new(".")).unwrap();
        assert_eq!(built.scenario.v, 2);
        assert_eq!(built.scenario.flows.len(), 1);
        assert_eq!(built.scenario.bf_cells, DEFAULT_BF_CELLS);
        assert_eq!(built.scenario.duration, 60.0);
    }

    #[test]
    fn unknown_keys_are_rejected_with_path() {
        assert_eq!(field_of(r#"{"scheme": "PLINT", "topology": {"edges": []}, "bogus": 1}"#), "bogus");
        let nested = BASE.replace("\"size_packets\": 10", "\"size_packets\": 10, \"colour\": 1");
        assert_eq!(field_of(&nested), "flows[0].colour");
        let bad_scheme = BASE.replace("PLINT", "PLAIN");
        assert_eq!(field_of(&bad_scheme), "scheme");
    }

    #[test]
    fn bf_ratio_sets_cell_count() {
        let text = BASE.replace("\"v\": 2", "\"bf_ratio\": 0.2");
        let built = parse_config(&text).unwrap().build(Path::new(".")).unwrap();
        assert_eq!(built.scenario.bf_cells, 5);
        assert_eq!(built.bf_ratio, 0.2);
    }

    #[test]
    fn missing_topology_file_names_field() {
        let text = BASE.replace(
            r#"{"edges": [[1, 2, 0.001], [2, 3, 0.001]]}"#,
            r#"{"file": "does-not-exist.txt"}"#,
        );
        let err = parse_config(&text).unwrap().build(Path::new("/nonexistent")).unwrap_err();
        assert!(matches!(err, RunError::Config { ref field, .. } if field == "topology.file"), "{err:?}");
    }

    #[test]
    fn generated_traffic_is_seeded() {
        let text = r#"{"scheme": "DLINT", "seed": 4, "topology": {"edges": [[1, 2, 0.001], [2, 3, 0.001]]},
            "traffic": {"flow_count": 20}}"#;
        let cfg = parse_config(text).unwrap();
        let a = cfg.build(Path::new(".")).unwrap().scenario.flows;
        let b = cfg.build(Path::new(".")).unwrap().scenario.flows;
        assert_eq!(a, b);
        assert_eq!(a.len(), 20);
    }

    #[test]
    fn semantic_errors_name_fields() {
        let text = BASE.replace("\"v\": 2", "\"v\": 12");
        let err = parse_config(&text).unwrap().build(Path::new(".")).unwrap_err();
        assert!(matches!(err, RunError::Config { ref field, .. } if field == "v"));
        let text = BASE.replace("\"dst\": 3", "\"dst\": 9");
        let err = parse_config(&text).unwrap().build(Path::new(".")).unwrap_err();
        assert!(matches!(err, RunError::Config { ref field, .. } if field == "flows[0].dst"));
    }
}
