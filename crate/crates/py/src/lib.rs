//! Python bindings. Models and laws are passed as JSON strings in the same
//! shape the `qa` config uses.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use qa_core::asymptotics::{self, ScalingSequence};
use qa_core::rate_functions::solve_xi;
use qa_core::simulator::{run_stationary, StationaryConfig};
use qa_core::tilting::is_tail_estimate;
use qa_core::{DistributionSpec, QaError, QueueModel, Truncation};

fn err(e: QaError) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse_model(json: &str) -> PyResult<QueueModel> {
    serde_json::from_str(json).map_err(|e| PyValueError::new_err(format!("bad model: {e}")))
}

fn parse_law(json: &str) -> PyResult<DistributionSpec> {
    let d: DistributionSpec = serde_json::from_str(json).map_err(|e| PyValueError::new_err(format!("bad law: {e}")))?;
    d.validate().map_err(err)?;
    Ok(d)
}

/// `ξ(v, θ)` for a law; `v=None` means no truncation.
#[pyfunction]
#[pyo3(signature = (law, theta, v=None))]
fn xi(law: &str, theta: f64, v: Option<f64>) -> PyResult<f64> {
    let d = parse_law(law)?;
    let trunc = v.map_or(Truncation::Infinite, Truncation::At);
    solve_xi(&d, trunc, theta).map_err(err)
}

/// `ξ(△, θ)`, the `v ↑ ∞` limit.
#[pyfunction]
fn xi_limit(law: &str, theta: f64) -> PyResult<f64> {
    qa_core::rate_functions::xi_limit(&parse_law(law)?, theta).map_err(err)
}

/// Decay rate, regime and per-server θᵢ.
#[pyfunction]
fn solve_alpha<'py>(py: Python<'py>, model: &str) -> PyResult<Bound<'py, PyDict>> {
    let m = parse_model(model)?;
    let d = asymptotics::solve_alpha(&m).map_err(err)?;
    let out = PyDict::new(py);
    out.set_item("alpha", d.alpha)?;
    out.set_item("regime", d.regime.to_string())?;
    out.set_item("server_thetas", d.server_thetas.iter().map(|t| t.to_f64()).collect::<Vec<_>>())?;
    Ok(out)
}

#[pyfunction]
fn ht_limit_rate(model: &str) -> PyResult<f64> {
    let seq = ScalingSequence::heavy_traffic(parse_model(model)?).map_err(err)?;
    asymptotics::ht_limit_rate(&seq).map_err(err)
}

#[pyfunction]
fn lv_limit_rate(model: &str, b2: Vec<f64>, r_exponent: f64) -> PyResult<f64> {
    let seq = ScalingSequence::large_variance(parse_model(model)?, b2, r_exponent).map_err(err)?;
    asymptotics::lv_limit_rate(&seq).map_err(err)
}

/// Time-average queue-length distribution from one simulation run.
#[pyfunction]
fn stationary_pmf(py: Python<'_>, model: &str, events: u64, seed: u64) -> PyResult<Vec<f64>> {
    let m = parse_model(model)?;
    let est = py
        .detach(|| run_stationary(&m, &StationaryConfig::new(events), seed))
        .map_err(err)?;
    Ok(est.pmf().into_iter().map(|p| p.0).collect())
}

/// Importance-sampling estimate of `P(L >= level | L >= k)` with a plain
/// baseline at the same budget.
#[pyfunction]
#[pyo3(signature = (model, level, budget, seed, theta=None))]
fn tail_estimate<'py>(
    py: Python<'py>,
    model: &str,
    level: usize,
    budget: u64,
    seed: u64,
    theta: Option<f64>,
) -> PyResult<Bound<'py, PyDict>> {
    let m = parse_model(model)?;
    let r = py
        .detach(|| is_tail_estimate(&m, level, budget, seed, theta))
        .map_err(err)?;
    let out = PyDict::new(py);
    out.set_item("estimate", r.estimate)?;
    out.set_item("se", r.se)?;
    out.set_item("relative_error", r.relative_error)?;
    out.set_item("theta", r.theta)?;
    out.set_item("naive_estimate", r.naive.as_ref().map(|n| n.estimate))?;
    out.set_item("naive_relative_error", r.naive.as_ref().map(|n| n.relative_error))?;
    Ok(out)
}

#[pymodule]
fn qa_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(xi, m)?)?;
    m.add_function(wrap_pyfunction!(xi_limit, m)?)?;
    m.add_function(wrap_pyfunction!(solve_alpha, m)?)?;
    m.add_function(wrap_pyfunction!(ht_limit_rate, m)?)?;
    m.add_function(wrap_pyfunction!(lv_limit_rate, m)?)?;
    m.add_function(wrap_pyfunction!(stationary_pmf, m)?)?;
    m.add_function(wrap_pyfunction!(tail_estimate, m)?)?;
    Ok(())
}
