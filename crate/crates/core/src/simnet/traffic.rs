use rand::Rng;
use rand_distr::{Distribution, Zipf};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::wire::{FlowKey, SwitchId};

/// Largest flow size drawn by the generator, in packets.
pub const MAX_FLOW_PACKETS: u64 = 100_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowSpec {
    pub key: FlowKey,
    pub src_node: SwitchId,
    pub dst_node: SwitchId,
    pub start: f64,
    pub size_packets: u64,
    pub inter_packet_gap: f64,
    pub payload_bytes: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrafficParams {
    pub flow_count: usize,
    pub zipf_exponent: f64,
    /// Flow starts are uniform on `[0, duration)`.
    pub duration: f64,
    pub max_packets: u64,
    pub inter_packet_gap: f64,
    pub payload_bytes: u32,
    pub sources: Vec<SwitchId>,
    pub destinations: Vec<SwitchId>,
    /// Fixed (src, dst) pairs to draw from instead of the pools when non-empty.
    pub pairs: Vec<(SwitchId, SwitchId)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TrafficError {
    #[error("flow_count must be at least 1")]
    NoFlows,
    #[error("zipf_exponent must be greater than 1")]
    ZipfExponent,
    #[error("endpoint pools cannot form a pair of distinct nodes")]
    Endpoints,
    #[error("{0} must be positive")]
    NonPositive(&'static str),
}

/// Deterministic, collision-free 5-tuple for the `index`-th generated flow.
pub fn flow_key(index: usize, src: SwitchId, dst: SwitchId) -> FlowKey {
    let index = index as u32;
    FlowKey {
        src_addr: 0x0A00_0000 | (src.get() & 0xFFFF) | ((index / 60_000) << 16),
        dst_addr: 0x0B00_0000 | (dst.get() & 0xFFFF),
        src_port: 1024 + (index % 60_000) as u16,
        dst_port: 5001,
        proto: 6,
    }
}

pub fn generate_flows<R: Rng + ?Sized>(params: &TrafficParams, rng: &mut R) -> Result<Vec<FlowSpec>, TrafficError> {
    if params.flow_count == 0 {
        return Err(TrafficError::NoFlows);
    }
    if !(params.zipf_exponent > 1.0) {
        return Err(TrafficError::ZipfExponent);
    }
    if !(params.duration > 0.0) {
        return Err(TrafficError::NonPositive("duration"));
    }
    if !(params.inter_packet_gap > 0.0) {
        return Err(TrafficError::NonPositive("inter_packet_gap"));
    }
    let feasible = if params.pairs.is_empty() {
        params.sources.iter().any(|s| params.destinations.iter().any(|d| d != s))
    } else {
        params.pairs.iter().all(|(s, d)| s != d)
    };
    if !feasible {
        return Err(TrafficError::Endpoints);
    }
    let max_packets = params.max_packets.clamp(1, MAX_FLOW_PACKETS);
    let zipf = Zipf::new(max_packets as f64, params.zipf_exponent).map_err(|_| TrafficError::ZipfExponent)?;

    let mut flows = Vec::with_capacity(params.flow_count);
    for index in 0..params.flow_count {
        let size_packets = (zipf.sample(rng) as u64).clamp(1, max_packets);
        let start = rng.random_range(0.0..params.duration);
        let (src, dst) = if !params.pairs.is_empty() {
            params.pairs[rng.random_range(0..params.pairs.len())]
        } else {
            loop {
                let src = params.sources[rng.random_range(0..params.sources.len())];
                let dst = params.destinations[rng.random_range(0..params.destinations.len())];
                if src != dst {
                    break (src, dst);
                }
            }
        };
        flows.push(FlowSpec {
            key: flow_key(index, src, dst),
            src_node: src,
            dst_node: dst,
            start,
            size_packets,
            inter_packet_gap: params.inter_packet_gap,
            payload_bytes: params.payload_bytes,
        });
    }
    Ok(flows)
}
