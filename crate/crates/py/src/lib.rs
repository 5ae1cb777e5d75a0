//! Python bindings for the lightint simulator.

use std::path::PathBuf;

use lightint_core::cli::run_cell;
use lightint_core::config::parse_config;
use lightint_core::oracle::{self, OracleError};
use lightint_core::simnet::Topology as CoreTopology;
use lightint_core::wire::{
    self, DlintHeader, P4IntHeader, PintLiteHeader, PlintHeader, PlintSlot, WireError,
};
use lightint_core::{FlowKey, Scheme, SlotValue, SwitchId, TelemetryHeader, TelemetryState};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::{PyBytes, PyDict, PyList};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn scheme(name: &str) -> PyResult<Scheme> {
    name.parse().map_err(PyValueError::new_err)
}

fn switch_id(raw: u32) -> PyResult<SwitchId> {
    SwitchId::new(raw).map_err(value_err)
}

/// Flow keys cross the boundary as (src_addr, dst_addr, src_port, dst_port, proto).
type FlowTuple = (u32, u32, u16, u16, u8);

fn flow_key(t: FlowTuple) -> FlowKey {
    FlowKey { src_addr: t.0, dst_addr: t.1, src_port: t.2, dst_port: t.3, proto: t.4 }
}

#[pyfunction]
fn overhead_bytes(scheme_name: &str, hops: usize, v: usize) -> PyResult<usize> {
    Ok(wire::overhead_bytes(scheme(scheme_name)?, hops, v))
}

/// Decodes a header into a dict whose keys depend on the scheme.
#[pyfunction]
fn decode_header<'py>(py: Python<'py>, data: &[u8], scheme_name: &str, v: usize) -> PyResult<Bound<'py, PyDict>> {
    let header = wire::decode_header(data, scheme(scheme_name)?, v).map_err(value_err)?;
    let out = PyDict::new(py);
    out.set_item("scheme", header.scheme().as_str())?;
    match header {
        TelemetryHeader::Dlint(h) => {
            let slots: Vec<u32> = h.slots.iter().map(|s| s.0).collect();
            out.set_item("slots", slots)?;
        }
        TelemetryHeader::Plint(h) => {
            out.set_item("init_ttl", h.init_ttl)?;
            let slots: Vec<(u32, u8)> = h.slots.iter().map(|s| (s.sw_id.get(), s.hop_num)).collect();
            out.set_item("slots", slots)?;
        }
        TelemetryHeader::P4Int(h) => {
            out.set_item("value_count", h.value_count)?;
            out.set_item("stack", h.stack)?;
        }
        TelemetryHeader::PintLite(h) => out.set_item("sw_id", h.sw_id.get())?,
    }
    Ok(out)
}

fn required<'py, T: for<'a> FromPyObject<'a, 'py>>(dict: &Bound<'py, PyDict>, key: &str) -> PyResult<T>
where
    for<'a> <T as FromPyObject<'a, 'py>>::Error: Into<PyErr>,
{
    dict.get_item(key)?
        .ok_or_else(|| PyValueError::new_err(format!("missing key `{key}`")))?
        .extract()
        .map_err(Into::into)
}

/// Inverse of `decode_header`.
#[pyfunction]
fn encode_header<'py>(py: Python<'py>, header: &Bound<'py, PyDict>) -> PyResult<Bound<'py, PyBytes>> {
    let name: String = required(header, "scheme")?;
    let header = match scheme(&name)? {
        Scheme::Dlint => {
            let slots: Vec<u32> = required(header, "slots")?;
            TelemetryHeader::Dlint(DlintHeader { slots: slots.into_iter().map(SlotValue).collect() })
        }
        Scheme::Plint => {
            let init_ttl: u8 = required(header, "init_ttl")?;
            let raw: Vec<(u32, u8)> = required(header, "slots")?;
            let slots = raw
                .into_iter()
                .map(|(id, hop_num)| Ok(PlintSlot { sw_id: switch_id(id)?, hop_num }))
                .collect::<PyResult<_>>()?;
            TelemetryHeader::Plint(PlintHeader { init_ttl, slots })
        }
        Scheme::P4Int => {
            let value_count: u8 = required(header, "value_count")?;
            let stack: Vec<u32> = required(header, "stack")?;
            TelemetryHeader::P4Int(P4IntHeader { stack, ..P4IntHeader::new(value_count) })
        }
        Scheme::PintLite => TelemetryHeader::PintLite(PintLiteHeader { sw_id: switch_id(required(header, "sw_id")?)? }),
    };
    let bytes = wire::encode_header(&header).map_err(|e: WireError| value_err(e))?;
    Ok(PyBytes::new(py, &bytes))
}

fn oracle_err(e: OracleError) -> PyErr {
    value_err(e)
}

#[pyfunction]
fn coupon_collector(n: u32) -> PyResult<f64> {
    oracle::coupon_collector(n).map_err(oracle_err)
}

#[pyfunction]
fn duplicate_fraction(n: u32, k: u32) -> PyResult<f64> {
    oracle::duplicate_fraction(n, k).map_err(oracle_err)
}

#[pyfunction]
fn bf_false_positive_rate(k: u64, n: u64, m: u32) -> PyResult<f64> {
    oracle::bf_false_positive_rate(k, n, m).map_err(oracle_err)
}

#[pyfunction]
fn bf_optimal_hash_count(k: u64, n: u64) -> PyResult<f64> {
    oracle::bf_optimal_hash_count(k, n).map_err(oracle_err)
}

fn state_name(state: TelemetryState) -> &'static str {
    match state {
        TelemetryState::AwaitingInit => "AWAITING_INIT",
        TelemetryState::ReadyToInsert => "READY_TO_INSERT",
        TelemetryState::InsertedId => "INSERTED_ID",
    }
}

fn parse_state(name: &str) -> PyResult<TelemetryState> {
    match name {
        "AWAITING_INIT" => Ok(TelemetryState::AwaitingInit),
        "READY_TO_INSERT" => Ok(TelemetryState::ReadyToInsert),
        "INSERTED_ID" => Ok(TelemetryState::InsertedId),
        other => Err(PyValueError::new_err(format!("unknown state `{other}`"))),
    }
}

/// Per-flow DLINT state store. States are the strings
/// AWAITING_INIT, READY_TO_INSERT and INSERTED_ID.
#[pyclass(name = "BloomStateStore")]
struct PyBloomStateStore(lightint_core::BloomStateStore);

#[pymethods]
impl PyBloomStateStore {
    #[new]
    #[pyo3(signature = (cells, seeds))]
    fn new(cells: usize, seeds: Vec<u64>) -> PyResult<Self> {
        lightint_core::BloomStateStore::new(cells, seeds.len(), &seeds).map(Self).map_err(value_err)
    }

    fn lookup(&self, flow: FlowTuple) -> &'static str {
        state_name(self.0.lookup(&flow_key(flow)))
    }

    fn update(&mut self, flow: FlowTuple, state: &str) -> PyResult<()> {
        self.0.update(&flow_key(flow), parse_state(state)?);
        Ok(())
    }

    fn indices(&self, flow: FlowTuple) -> Vec<usize> {
        self.0.indices(&flow_key(flow))
    }

    fn occupied(&self) -> usize {
        self.0.occupied()
    }

    #[getter]
    fn cells(&self) -> usize {
        self.0.cells()
    }
}

#[pyclass(name = "Topology")]
struct PyTopology(CoreTopology);

#[pymethods]
impl PyTopology {
    /// Edges are (a, b, latency_seconds) triples.
    #[new]
    fn new(edges: Vec<(u32, u32, f64)>) -> PyResult<Self> {
        CoreTopology::from_edges(edges).map(Self).map_err(value_err)
    }

    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        CoreTopology::parse(text).map(Self).map_err(value_err)
    }

    /// Lowest-latency path, both endpoints included.
    fn route(&self, src: u32, dst: u32) -> PyResult<Vec<u32>> {
        let path = self.0.route(switch_id(src)?, switch_id(dst)?).map_err(value_err)?;
        Ok(path.into_iter().map(SwitchId::get).collect())
    }

    fn node_count(&self) -> usize {
        self.0.node_count()
    }
}

fn to_py<'py>(py: Python<'py>, value: &serde_json::Value) -> PyResult<Bound<'py, PyAny>> {
    use serde_json::Value;
    Ok(match value {
        Value::Null => py.None().into_bound(py),
        Value::Bool(b) => b.into_pyobject(py)?.to_owned().into_any(),
        Value::Number(n) => match n.as_u64() {
            Some(u) => u.into_pyobject(py)?.into_any(),
            None => n.as_f64().unwrap_or(f64::NAN).into_pyobject(py)?.into_any(),
        },
        Value::String(s) => s.into_pyobject(py)?.into_any(),
        Value::Array(items) => {
            PyList::new(py, items.iter().map(|v| to_py(py, v)).collect::<PyResult<Vec<_>>>()?)?.into_any()
        }
        Value::Object(map) => {
            let dict = PyDict::new(py);
            for (k, v) in map {
                dict.set_item(k, to_py(py, v)?)?;
            }
            dict.into_any()
        }
    })
}

/// Runs one scenario given as a JSON config string and returns its metrics
/// row as a dict. Relative topology files resolve against `base_dir`.
#[pyfunction]
#[pyo3(signature = (config_json, base_dir = None))]
fn run_scenario<'py>(py: Python<'py>, config_json: &str, base_dir: Option<PathBuf>) -> PyResult<Bound<'py, PyAny>> {
    let cfg = parse_config(config_json).map_err(value_err)?;
    let base_dir = base_dir.unwrap_or_default();
    let result = py.detach(|| run_cell(&cfg, &base_dir)).map_err(value_err)?;
    let value = serde_json::to_value(&result.summary).map_err(value_err)?;
    to_py(py, &value)
}

#[pymodule]
fn lightint(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(overhead_bytes, m)?)?;
    m.add_function(wrap_pyfunction!(decode_header, m)?)?;
    m.add_function(wrap_pyfunction!(encode_header, m)?)?;
    m.add_function(wrap_pyfunction!(coupon_collector, m)?)?;
    m.add_function(wrap_pyfunction!(duplicate_fraction, m)?)?;
    m.add_function(wrap_pyfunction!(bf_false_positive_rate, m)?)?;
    m.add_function(wrap_pyfunction!(bf_optimal_hash_count, m)?)?;
    m.add_function(wrap_pyfunction!(run_scenario, m)?)?;
    m.add_class::<PyBloomStateStore>()?;
    m.add_class::<PyTopology>()?;
    Ok(())
}
