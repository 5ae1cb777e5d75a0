//! Deterministic packet-level simulation: topology, routing, traffic, and
//! the discrete-event engine that drives packets through switch pipelines.

pub mod engine;
pub mod topology;
pub mod traffic;

pub use engine::{
    run, Accounting, Delivery, FlowCounters, FlowTruth, GroundTruth, LinkLoss, RunError, RunOutput, Scenario,
    UpdatePlan,
};
pub use topology::{RouteError, Topology, TopologyError};
pub use traffic::{generate_flows, FlowSpec, TrafficParams};
