//! Lightweight in-band network telemetry.
//!
//! Switch pipelines for DLINT (deterministic per-flow aggregation coordinated
//! through Bloom-filter states) and PLINT (reservoir sampling with hop
//! numbers), the P4-INT and PINT-lite baselines, a telemetry collector, and a
//! deterministic packet-level simulator with metrics for comparing them.

pub mod baselines;
pub mod bloom;
pub mod cli;
pub mod collector;
pub mod config;
pub mod dlint;
pub mod metrics;
pub mod oracle;
pub mod plint;
pub mod simnet;
pub mod switch;
pub mod wire;

pub use bloom::{BloomStateStore, TelemetryState};
pub use collector::{Collector, DetectionEvent, DetectionMode, Detector, ReportItem, SinkReport, TraceRecord};
pub use switch::{ForwardAction, Role, SwitchError};
pub use wire::{FlowKey, Packet, Scheme, SlotValue, SwitchId, TelemetryHeader};
