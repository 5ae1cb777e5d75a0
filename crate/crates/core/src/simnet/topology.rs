use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashSet};
use std::path::Path;

use thiserror::Error;

use crate::collector::Adjacency;
use crate::wire::SwitchId;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TopologyError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("cannot read topology file {path}: {message}")]
    Io { path: String, message: String },
    #[error("invalid edge {a}-{b}: {message}")]
    InvalidEdge { a: u32, b: u32, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RouteError {
    #[error("no path from {src} to {dst}")]
    Unreachable { src: SwitchId, dst: SwitchId },
    #[error("unknown node {0}")]
    UnknownNode(SwitchId),
    #[error("source and destination are both {0}")]
    SameEndpoint(SwitchId),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub a: SwitchId,
    pub b: SwitchId,
    pub latency: f64,
}

/// Undirected weighted switch graph. Latencies are kept in integer
/// nanoseconds so equal-cost ties are exact.
#[derive(Debug, Clone, Default)]
pub struct Topology {
    edges: Vec<Edge>,
    adjacency: BTreeMap<SwitchId, BTreeMap<SwitchId, u64>>,
}

pub(crate) fn seconds_to_ns(seconds: f64) -> u64 {
    (seconds * 1e9).round() as u64
}

fn link_key(a: SwitchId, b: SwitchId) -> (SwitchId, SwitchId) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

impl Topology {
    pub fn from_edges(edges: impl IntoIterator<Item = (u32, u32, f64)>) -> Result<Self, TopologyError> {
        let mut topo = Topology::default();
        for (a, b, latency) in edges {
            topo.add_edge(a, b, latency)?;
        }
        Ok(topo)
    }

    fn add_edge(&mut self, a: u32, b: u32, latency: f64) -> Result<(), TopologyError> {
        let invalid = |message: &str| TopologyError::InvalidEdge { a, b, message: message.to_string() };
        if a == b {
            return Err(invalid("self-loop"));
        }
        if !(latency > 0.0 && latency.is_finite()) {
            return Err(invalid("latency must be positive"));
        }
        let sa = SwitchId::new(a).map_err(|e| invalid(&e.to_string()))?;
        let sb = SwitchId::new(b).map_err(|e| invalid(&e.to_string()))?;
        if self.adjacency.get(&sa).is_some_and(|n| n.contains_key(&sb)) {
            return Err(invalid("duplicate edge"));
        }
        let ns = seconds_to_ns(latency).max(1);
        self.adjacency.entry(sa).or_default().insert(sb, ns);
        self.adjacency.entry(sb).or_default().insert(sa, ns);
        self.edges.push(Edge { a: sa, b: sb, latency });
        Ok(())
    }

    /// One edge per line: `node_a node_b latency_seconds`; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, TopologyError> {
        let mut topo = Topology::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let parse_err = |message: String| TopologyError::Parse { line: i + 1, message };
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 3 {
                return Err(parse_err(format!("expected 3 fields, found {}", fields.len())));
            }
            let a: u32 = fields[0].parse().map_err(|_| parse_err(format!("bad node id `{}`", fields[0])))?;
            let b: u32 = fields[1].parse().map_err(|_| parse_err(format!("bad node id `{}`", fields[1])))?;
            let latency: f64 = fields[2]
                .parse()
                .map_err(|_| parse_err(format!("bad latency `{}`", fields[2])))?;
            topo.add_edge(a, b, latency).map_err(|e| parse_err(e.to_string()))?;
        }
        Ok(topo)
    }

    pub fn load(path: &Path) -> Result<Self, TopologyError> {
        let text = std::fs::read_to_string(path).map_err(|e| TopologyError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Topology::parse(&text)
    }

    pub fn nodes(&self) -> impl Iterator<Item = SwitchId> + '_ {
        self.adjacency.keys().copied()
    }

    pub fn node_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn contains(&self, node: SwitchId) -> bool {
        self.adjacency.contains_key(&node)
    }

    pub fn latency_ns(&self, a: SwitchId, b: SwitchId) -> Option<u64> {
        self.adjacency.get(&a).and_then(|n| n.get(&b)).copied()
    }

    pub fn without_links(&self, links: &[(SwitchId, SwitchId)]) -> Topology {
        let removed: HashSet<_> = links.iter().map(|&(a, b)| link_key(a, b)).collect();
        let mut topo = Topology::default();
        for edge in &self.edges {
            if !removed.contains(&link_key(edge.a, edge.b)) {
                topo.add_edge(edge.a.get(), edge.b.get(), edge.latency)
                    .expect("edges of a valid topology stay valid");
            }
        }
        // Keep isolated nodes addressable.
        for node in self.nodes() {
            topo.adjacency.entry(node).or_default();
        }
        topo
    }

    pub fn adjacency(&self) -> Adjacency {
        self.adjacency
            .iter()
            .map(|(node, neighbours)| (*node, neighbours.keys().copied().collect()))
            .collect()
    }

    pub fn is_connected(&self) -> bool {
        let Some(start) = self.nodes().next() else { return true };
        let mut seen = BTreeSet::from([start]);
        let mut stack = vec![start];
        while let Some(node) = stack.pop() {
            for next in self.adjacency[&node].keys() {
                if seen.insert(*next) {
                    stack.push(*next);
                }
            }
        }
        seen.len() == self.adjacency.len()
    }

    /// Lowest-latency path; equal-latency candidates resolve to the
    /// lexicographically smallest node sequence.
    pub fn route(&self, src: SwitchId, dst: SwitchId) -> Result<Vec<SwitchId>, RouteError> {
        for node in [src, dst] {
            if !self.contains(node) {
                return Err(RouteError::UnknownNode(node));
            }
        }
        if src == dst {
            return Err(RouteError::SameEndpoint(src));
        }
        let mut best: BTreeMap<SwitchId, (u64, Vec<SwitchId>)> = BTreeMap::new();
        let mut heap = BinaryHeap::new();
        heap.push(Reverse((0u64, vec![src])));
        while let Some(Reverse((dist, path))) = heap.pop() {
            let node = *path.last().expect("paths are never empty");
            if best.contains_key(&node) {
                continue;
            }
            if node == dst {
                return Ok(path);
            }
            for (&next, &latency) in &self.adjacency[&node] {
                if best.contains_key(&next) {
                    continue;
                }
                let mut extended = path.clone();
                extended.push(next);
                heap.push(Reverse((dist + latency, extended)));
            }
            best.insert(node, (dist, path));
        }
        Err(RouteError::Unreachable { src, dst })
    }

    /// Checks that consecutive hops of `path` are adjacent.
    pub fn validate_path(&self, path: &[SwitchId]) -> Result<(), RouteError> {
        for node in path {
            if !self.contains(*node) {
                return Err(RouteError::UnknownNode(*node));
            }
        }
        for pair in path.windows(2) {
            if self.latency_ns(pair[0], pair[1]).is_none() {
                return Err(RouteError::Unreachable { src: pair[0], dst: pair[1] });
            }
        }
        Ok(())
    }

    /// A chain `1 - 2 - ... - n` with uniform latency.
    pub fn chain(n: u32, latency: f64) -> Topology {
        Topology::from_edges((1..n).map(|i| (i, i + 1, latency))).expect("chain is valid")
    }
}
