//! Python bindings for the hbvm integrators.
//!
//! Exposes the registry of built-in problems, Gauss-Legendre rules, the
//! HBVM(k, s) tableaux and kernels, one-step maps, and the run-level
//! drivers (integrate, order_study, energy_drift).  Trajectories come back
//! as plain dicts of lists so they drop straight into numpy or pandas.

// The pyfunction macro expansion trips this lint on PyResult returns.
#![allow(clippy::useless_conversion)]

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use hbvm::integrator::{IntegrationPlan, Trajectory};
use hbvm::legendre::build_spectral;
use hbvm::problems::{builtin, InitialData, Problem};
use hbvm::quadrature::gauss_rule as core_gauss_rule;
use hbvm::solver::{IterationScheme, SolverConfig};
use hbvm::tableau::{build_operators, rk_tableau, rkn_tableau, TableauExport};
use hbvm::Error;

fn to_py_err(e: Error) -> PyErr {
    match e {
        Error::InvalidArgument(_) | Error::OutOfDomain { .. } | Error::UnknownProblem { .. } => {
            PyValueError::new_err(e.to_string())
        }
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

fn solver_config(
    tol: Option<f64>,
    max_iters: Option<usize>,
    scheme: Option<&str>,
    jacobian_reuse: Option<bool>,
) -> PyResult<SolverConfig> {
    let mut cfg = SolverConfig::default();
    if let Some(tol) = tol {
        cfg.tol = tol;
    }
    if let Some(iters) = max_iters {
        cfg.max_iters = iters;
    }
    if let Some(name) = scheme {
        cfg.scheme = match name {
            "fixed-point" => IterationScheme::FixedPoint,
            "simplified-newton" => IterationScheme::SimplifiedNewton,
            other => {
                return Err(PyValueError::new_err(format!(
                    "unknown scheme '{other}' (expected fixed-point or simplified-newton)"
                )))
            }
        };
    }
    if let Some(reuse) = jacobian_reuse {
        cfg.jacobian_reuse = reuse;
    }
    Ok(cfg)
}

fn trajectory_dict(py: Python<'_>, trajectory: &Trajectory) -> PyResult<PyObject> {
    let dict = PyDict::new_bound(py);
    dict.set_item("times", trajectory.times.clone())?;
    dict.set_item("states", trajectory.states.clone())?;
    dict.set_item("energies", trajectory.energies.clone())?;
    dict.set_item("iterations", trajectory.iterations.clone())?;
    dict.set_item("residuals", trajectory.residuals.clone())?;
    dict.set_item("max_energy_drift", trajectory.max_energy_drift())?;
    let dense: Vec<(f64, Vec<Vec<f64>>, Option<f64>)> = trajectory
        .dense
        .iter()
        .map(|d| (d.t, d.levels.clone(), d.energy))
        .collect();
    dict.set_item("dense", dense)?;
    Ok(dict.into())
}

/// Names of the built-in problems.
#[pyfunction]
fn list_problems() -> Vec<String> {
    hbvm::problems::registry_names()
        .iter()
        .map(|s| s.to_string())
        .collect()
}

/// Nodes and weights of the k-point Gauss-Legendre rule on [0, 1].
#[pyfunction]
fn gauss_rule(k: usize) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let rule = core_gauss_rule(k).map_err(to_py_err)?;
    Ok((rule.nodes().to_vec(), rule.weights().to_vec()))
}

/// Truncated kernel a_s(c, tau).
#[pyfunction]
fn rk_kernel(s: usize, c: f64, tau: f64) -> PyResult<f64> {
    hbvm::tableau::rk_kernel(s, c, tau).map_err(to_py_err)
}

/// Nystrom kernel abar_s(c, tau).
#[pyfunction]
fn rkn_kernel(s: usize, c: f64, tau: f64) -> PyResult<f64> {
    hbvm::tableau::rkn_kernel(s, c, tau).map_err(to_py_err)
}

/// An HBVM(k, s) method: tableaux plus one-step maps over the registry.
#[pyclass]
struct Method {
    k: usize,
    s: usize,
}

#[pymethods]
impl Method {
    #[new]
    fn new(k: usize, s: usize) -> PyResult<Self> {
        // Validates k >= s >= 1 and the supported node range.
        let rule = core_gauss_rule(k).map_err(to_py_err)?;
        build_operators(s, &rule).map_err(to_py_err)?;
        Ok(Self { k, s })
    }

    #[getter]
    fn k(&self) -> usize {
        self.k
    }

    #[getter]
    fn s(&self) -> usize {
        self.s
    }

    /// Both tableau forms as a dict {k, s, c, b, A, Abar, bbar}.
    fn tableau(&self, py: Python<'_>) -> PyResult<PyObject> {
        let rule = core_gauss_rule(self.k).map_err(to_py_err)?;
        let ops = build_operators(self.s, &rule).map_err(to_py_err)?;
        let spectral = build_spectral(self.s).map_err(to_py_err)?;
        let export = TableauExport::new(&ops, &spectral);
        let dict = PyDict::new_bound(py);
        dict.set_item("k", export.k)?;
        dict.set_item("s", export.s)?;
        dict.set_item("c", export.c)?;
        dict.set_item("b", export.b)?;
        dict.set_item("A", export.a)?;
        dict.set_item("Abar", export.abar)?;
        dict.set_item("bbar", export.bbar)?;
        Ok(dict.into())
    }

    /// Runge-Kutta tableau as CSV (stage rows, then the weight row).
    fn rk_tableau_csv(&self) -> PyResult<String> {
        let rule = core_gauss_rule(self.k).map_err(to_py_err)?;
        let ops = build_operators(self.s, &rule).map_err(to_py_err)?;
        Ok(rk_tableau(&ops).to_csv())
    }

    /// Runge-Kutta-Nystrom tableau as CSV (stage rows, bbar row, b row).
    fn rkn_tableau_csv(&self) -> PyResult<String> {
        let rule = core_gauss_rule(self.k).map_err(to_py_err)?;
        let ops = build_operators(self.s, &rule).map_err(to_py_err)?;
        let spectral = build_spectral(self.s).map_err(to_py_err)?;
        Ok(rkn_tableau(&ops, &spectral).to_csv())
    }

    /// One step of size h on a built-in problem from the given derivative
    /// levels; returns (updated_levels, iterations, residual).
    #[pyo3(signature = (problem, levels, h, tol=None, max_iters=None, scheme=None))]
    fn step(
        &self,
        problem: &str,
        levels: Vec<Vec<f64>>,
        h: f64,
        tol: Option<f64>,
        max_iters: Option<usize>,
        scheme: Option<&str>,
    ) -> PyResult<(Vec<Vec<f64>>, usize, f64)> {
        let cfg = solver_config(tol, max_iters, scheme, None)?;
        let entry = builtin(problem).map_err(to_py_err)?;
        let rule = core_gauss_rule(self.k).map_err(to_py_err)?;
        let ops = build_operators(self.s, &rule).map_err(to_py_err)?;
        let spectral = build_spectral(self.s).map_err(to_py_err)?;
        if levels.len() != entry.problem.order() {
            return Err(PyValueError::new_err(format!(
                "'{problem}' needs {} derivative levels, got {}",
                entry.problem.order(),
                levels.len()
            )));
        }
        let result = match &entry.problem {
            Problem::FirstOrder(p) => hbvm::solver::step_1st(p, &levels[0], h, &ops, &cfg),
            Problem::SecondSpecial(p) => {
                hbvm::solver::step_2nd_special(p, &levels[0], &levels[1], h, &ops, &spectral, &cfg)
            }
            Problem::SecondGeneral(p) => {
                hbvm::solver::step_2nd_general(p, &levels[0], &levels[1], h, &ops, &spectral, &cfg)
            }
            Problem::Kth(p) => {
                let init = InitialData::new(0.0, levels.clone());
                hbvm::solver::step_kth(p, &init, h, &ops, &spectral, &cfg)
            }
        }
        .map_err(to_py_err)?;
        Ok((result.derivatives, result.iterations, result.residual))
    }

    fn __repr__(&self) -> String {
        format!("Method(k={}, s={})", self.k, self.s)
    }
}

/// Integrate a built-in problem from its default initial data.
#[pyfunction]
#[pyo3(signature = (problem, k, s, t0, tf, steps, tol=None, max_iters=None,
                    scheme=None, jacobian_reuse=None, warm_start=None, dense=None))]
#[allow(clippy::too_many_arguments)]
fn integrate(
    py: Python<'_>,
    problem: &str,
    k: usize,
    s: usize,
    t0: f64,
    tf: f64,
    steps: usize,
    tol: Option<f64>,
    max_iters: Option<usize>,
    scheme: Option<&str>,
    jacobian_reuse: Option<bool>,
    warm_start: Option<bool>,
    dense: Option<usize>,
) -> PyResult<PyObject> {
    let entry = builtin(problem).map_err(to_py_err)?;
    let mut plan = IntegrationPlan::new(t0, tf, steps, k, s);
    plan.solver = solver_config(tol, max_iters, scheme, jacobian_reuse)?;
    if let Some(warm) = warm_start {
        plan.warm_start = warm;
    }
    if let Some(samples) = dense {
        plan.dense_samples = samples;
    }
    let trajectory = hbvm::integrator::integrate(&entry.problem, &entry.default_init, &plan)
        .map_err(to_py_err)?;
    trajectory_dict(py, &trajectory)
}

type OrderRow = (f64, f64, Option<f64>, bool);

/// Convergence study; returns a list of (h, error, slope, reliable) rows.
#[pyfunction]
#[pyo3(signature = (problem, k, s, t0, tf, base_steps, rungs, tol=None, max_iters=None, scheme=None))]
#[allow(clippy::too_many_arguments)]
fn order_study(
    problem: &str,
    k: usize,
    s: usize,
    t0: f64,
    tf: f64,
    base_steps: usize,
    rungs: usize,
    tol: Option<f64>,
    max_iters: Option<usize>,
    scheme: Option<&str>,
) -> PyResult<Vec<OrderRow>> {
    let entry = builtin(problem).map_err(to_py_err)?;
    let mut plan = IntegrationPlan::new(t0, tf, base_steps, k, s);
    plan.solver = solver_config(tol, max_iters, scheme, None)?;
    let rows = hbvm::integrator::order_study(&entry.problem, &entry.default_init, &plan, rungs)
        .map_err(to_py_err)?;
    Ok(rows
        .iter()
        .map(|r| (r.h, r.error, r.slope, r.reliable))
        .collect())
}

/// Energy drift along a run; returns (times, drift, max_abs).
#[pyfunction]
#[pyo3(signature = (problem, k, s, t0, tf, steps, tol=None, max_iters=None, scheme=None))]
#[allow(clippy::too_many_arguments)]
fn energy_drift(
    problem: &str,
    k: usize,
    s: usize,
    t0: f64,
    tf: f64,
    steps: usize,
    tol: Option<f64>,
    max_iters: Option<usize>,
    scheme: Option<&str>,
) -> PyResult<(Vec<f64>, Vec<f64>, f64)> {
    let entry = builtin(problem).map_err(to_py_err)?;
    let mut plan = IntegrationPlan::new(t0, tf, steps, k, s);
    plan.solver = solver_config(tol, max_iters, scheme, None)?;
    let drift = hbvm::integrator::energy_drift(&entry.problem, &entry.default_init, &plan)
        .map_err(to_py_err)?;
    Ok((drift.times, drift.drift, drift.max_abs))
}

#[pymodule]
fn hbvm_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<Method>()?;
    m.add_function(wrap_pyfunction!(list_problems, m)?)?;
    m.add_function(wrap_pyfunction!(gauss_rule, m)?)?;
    m.add_function(wrap_pyfunction!(rk_kernel, m)?)?;
    m.add_function(wrap_pyfunction!(rkn_kernel, m)?)?;
    m.add_function(wrap_pyfunction!(integrate, m)?)?;
    m.add_function(wrap_pyfunction!(order_study, m)?)?;
    m.add_function(wrap_pyfunction!(energy_drift, m)?)?;
    Ok(())
}
