//! Python bindings. Records cross the boundary as JSON and come back as
//! plain dicts and lists.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use itop_core::harness::{self, load_splits, TrainConfig};
use itop_core::sparsity::{self, LayerShape, PruneGrowSchedule};
use itop_core::Error;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Config(_) | Error::Shape(_) => PyValueError::new_err(e.to_string()),
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

fn from_json<'py, T: serde::Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn build_config(text: &str, overrides: Vec<String>) -> PyResult<TrainConfig> {
    let mut cfg = TrainConfig::parse_text(text).map_err(py_err)?;
    cfg.apply_overrides(&overrides).map_err(py_err)?;
    cfg.validate().map_err(py_err)?;
    Ok(cfg)
}

/// Canonical `key = value` text of a config after overrides.
#[pyfunction]
#[pyo3(signature = (text = "", overrides = Vec::new()))]
fn config(text: &str, overrides: Vec<String>) -> PyResult<String> {
    Ok(build_config(text, overrides)?.to_text())
}

/// Trains one configuration in memory. Returns
/// `{"epochs": [...], "summary": {...}, "pretrain": ... | None}`.
#[pyfunction]
#[pyo3(signature = (text, overrides = Vec::new()))]
fn train<'py>(py: Python<'py>, text: &str, overrides: Vec<String>) -> PyResult<Bound<'py, PyAny>> {
    let cfg = build_config(text, overrides)?;
    let data = load_splits(&cfg.dataset, cfg.val_fraction, cfg.data_seed).map_err(py_err)?;
    let out = harness::run_in_memory(&cfg, &data).map_err(py_err)?;
    let value = serde_json::json!({
        "epochs": out.main.epochs,
        "summary": out.main.summary,
        "pretrain": out.pretrain,
    });
    from_json(py, &value)
}

/// Per-layer densities for `(n_in, n_out[, kh, kw])` shapes.
#[pyfunction]
#[pyo3(signature = (shapes, density, kind = "erk"))]
fn allocate(shapes: Vec<Vec<usize>>, density: f64, kind: &str) -> PyResult<Vec<f64>> {
    let shapes = shapes
        .iter()
        .map(|s| match s.as_slice() {
            [i, o] => Ok(LayerShape::dense(*i, *o)),
            [i, o, kh, kw] => Ok(LayerShape::conv(*i, *o, *kh, *kw)),
            _ => Err(PyValueError::new_err(format!("shape {s:?} needs 2 or 4 entries"))),
        })
        .collect::<PyResult<Vec<_>>>()?;
    let alloc = match kind {
        "er" => sparsity::allocate_er(&shapes, density),
        "erk" => sparsity::allocate_erk(&shapes, density),
        _ => return Err(PyValueError::new_err(format!("unknown allocation {kind:?}"))),
    }
    .map_err(py_err)?;
    Ok(alloc.per_layer_density)
}

/// Cosine-annealed prune rate at update `u` of `total_updates`.
#[pyfunction]
fn prune_rate(initial_rate: f64, total_updates: u64, u: u64) -> PyResult<f64> {
    let s = PruneGrowSchedule::new(initial_rate, total_updates).map_err(py_err)?;
    sparsity::prune_rate(&s, u).map_err(py_err)
}

/// Built-in oracle checks as `(name, passed, detail)` tuples.
#[pyfunction]
fn verify() -> Vec<(String, bool, String)> {
    harness::verify::all_checks()
        .into_iter()
        .map(|c| (c.name.to_string(), c.passed, c.detail))
        .collect()
}

#[pymodule]
fn itop(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_function(wrap_pyfunction!(config, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(allocate, m)?)?;
    m.add_function(wrap_pyfunction!(prune_rate, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    Ok(())
}
