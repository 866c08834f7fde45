//! Python bindings: grids, scenarios, runs, audits and domain constants.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use ksmix::energy::{compute_domain_constants, EnergyLedger, Mode, LEDGER_HEADER};
use ksmix::error::Error;
use ksmix::grid::GridSpec;
use ksmix::io::write_ledger;
use ksmix::momentum::check_h4;
use ksmix::scenario::{presets, Scenario};
use ksmix::time_loop::{audit_run, run, Trajectory};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Solver(_) | Error::DensityRange(_) | Error::BoundaryFlux(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

#[pyclass(name = "Grid", frozen, from_py_object)]
#[derive(Clone)]
struct PyGrid {
    inner: GridSpec,
}

#[pymethods]
impl PyGrid {
    #[new]
    #[pyo3(signature = (cells, extent=None))]
    fn new(cells: Vec<usize>, extent: Option<Vec<f64>>) -> PyResult<Self> {
        let extent = extent.unwrap_or_else(|| vec![1.0; cells.len()]);
        let inner = GridSpec::new(cells.len(), &cells, &extent).map_err(to_py)?;
        Ok(PyGrid { inner })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim
    }

    #[getter]
    fn cells(&self) -> Vec<usize> {
        self.inner.n[..self.inner.dim].to_vec()
    }

    #[getter]
    fn spacing(&self) -> Vec<f64> {
        self.inner.h[..self.inner.dim].to_vec()
    }

    fn cell_count(&self) -> usize {
        self.inner.cells()
    }

    /// Neumann spectral gap, Poincaré constant and the derived constants.
    #[pyo3(signature = (c_omega=None))]
    fn domain_constants<'py>(&self, py: Python<'py>, c_omega: Option<f64>) -> PyResult<Bound<'py, PyDict>> {
        let c = compute_domain_constants(&self.inner, c_omega).map_err(to_py)?;
        let d = PyDict::new(py);
        d.set_item("lambda1_h", c.lambda1)?;
        d.set_item("a_p", c.a_p)?;
        d.set_item("c_omega", c.c_omega)?;
        d.set_item("c_omega_source", c.c_omega_source.label())?;
        d.set_item("c_tilde", c.c_tilde)?;
        Ok(d)
    }

    fn __repr__(&self) -> String {
        format!("Grid(cells={:?}, extent={:?})", self.cells(), &self.inner.extent[..self.inner.dim])
    }
}

#[pyclass(name = "Scenario", from_py_object)]
#[derive(Clone)]
struct PyScenario {
    inner: Scenario,
}

#[pymethods]
impl PyScenario {
    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        Ok(PyScenario { inner: Scenario::parse(text).map_err(to_py)? })
    }

    /// One of `rest`, `two-layer`, `eigenmode`, `vortex`.
    #[staticmethod]
    fn preset(name: &str) -> PyResult<Self> {
        let text = presets::ALL
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, t)| *t)
            .ok_or_else(|| PyValueError::new_err(format!("unknown preset {name}")))?;
        Self::parse(text)
    }

    fn to_text(&self) -> String {
        self.inner.to_text()
    }

    #[getter]
    fn grid(&self) -> PyGrid {
        PyGrid { inner: self.inner.grid }
    }

    #[getter]
    fn tau(&self) -> f64 {
        self.inner.tau
    }

    #[setter]
    fn set_tau(&mut self, tau: f64) -> PyResult<()> {
        let mut s = self.inner.clone();
        s.tau = tau;
        s.validate().map_err(to_py)?;
        self.inner = s;
        Ok(())
    }

    #[getter]
    fn t_final(&self) -> f64 {
        self.inner.t_final
    }

    #[setter]
    fn set_t_final(&mut self, t: f64) -> PyResult<()> {
        let mut s = self.inner.clone();
        s.t_final = t;
        s.validate().map_err(to_py)?;
        self.inner = s;
        Ok(())
    }

    /// `(alpha1, alpha2, mode)` for this scenario's physics and grid.
    fn check_h4(&self) -> PyResult<(f64, f64, String)> {
        let c = compute_domain_constants(&self.inner.grid, self.inner.solver.c_omega).map_err(to_py)?;
        let h = check_h4(&self.inner.physics, &c).map_err(to_py)?;
        Ok((h.alpha1, h.alpha2, h.mode.as_str().to_string()))
    }

    fn run(&self) -> PyResult<PyTrajectory> {
        run(&self.inner).map(|t| PyTrajectory { inner: t }).map_err(|f| to_py(f.error))
    }
}

#[pyclass(name = "Trajectory", frozen)]
struct PyTrajectory {
    inner: Trajectory,
}

fn ledger_rows(ledger: &EnergyLedger) -> Vec<Vec<f64>> {
    ledger
        .rows
        .iter()
        .map(|r| {
            vec![
                r.step as f64,
                r.t,
                r.mass,
                r.rho_min,
                r.rho_max,
                r.rho_fluct_l2,
                r.grad_rho_l2,
                r.sqrtrho_v_l2_sq,
                r.grad_v_l2_sq,
                r.cum_dissipation,
                r.c_n,
                r.bound_bbb1,
                r.slack_bbb1,
                r.slack_bbb2,
                r.slack_bbb3,
                r.prop34_slack,
                f64::from(u8::from(r.mode == Mode::Verified)),
                r.res_density,
                r.res_momentum,
                r.res_div,
            ]
        })
        .collect()
}

#[pymethods]
impl PyTrajectory {
    #[getter]
    fn steps(&self) -> usize {
        self.inner.steps()
    }

    #[getter]
    fn fingerprint(&self) -> &str {
        &self.inner.fingerprint
    }

    #[getter]
    fn mode(&self) -> &'static str {
        self.inner.h4.mode.as_str()
    }

    /// Ledger column names; `mode` is encoded as 1.0 for verified.
    #[staticmethod]
    fn ledger_header() -> Vec<&'static str> {
        LEDGER_HEADER.to_vec()
    }

    fn ledger(&self) -> Vec<Vec<f64>> {
        ledger_rows(&self.inner.ledger)
    }

    fn ledger_csv(&self) -> PyResult<String> {
        let mut buf = Vec::new();
        write_ledger(&self.inner.ledger, &mut buf).map_err(to_py)?;
        String::from_utf8(buf).map_err(|e| PyRuntimeError::new_err(e.to_string()))
    }

    /// Density cell values at a step, in row-major order with axis 0 slowest.
    fn density(&self, step: usize) -> PyResult<Vec<f64>> {
        self.inner
            .states
            .get(step)
            .map(|s| s.rho.values())
            .ok_or_else(|| PyValueError::new_err(format!("step {step} beyond {}", self.inner.steps())))
    }

    /// Criterion name to `(binding, passed, worst_relative_slack)`.
    fn audit<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let report = audit_run(&self.inner).map_err(to_py)?;
        let d = PyDict::new(py);
        for c in &report.criteria {
            d.set_item(c.name, (c.binding, c.passed(), c.worst_relative_slack))?;
        }
        Ok(d)
    }

    fn summary<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let t = &self.inner;
        let d = PyDict::new(py);
        let first = &t.ledger.rows[0];
        let last = t.ledger.rows.last().expect("ledger has the initial row");
        d.set_item("steps", t.steps())?;
        d.set_item("tau", t.tau)?;
        d.set_item("mode", t.h4.mode.as_str())?;
        d.set_item("alpha1", t.h4.alpha1)?;
        d.set_item("alpha2", t.h4.alpha2)?;
        d.set_item("mass_drift", (last.mass - first.mass).abs() / first.mass.abs())?;
        d.set_item("rho_min", t.ledger.rows.iter().map(|r| r.rho_min).fold(f64::INFINITY, f64::min))?;
        d.set_item("rho_max", t.ledger.rows.iter().map(|r| r.rho_max).fold(f64::NEG_INFINITY, f64::max))?;
        d.set_item("kinetic_final", last.sqrtrho_v_l2_sq)?;
        Ok(d)
    }
}

#[pymodule]
#[pyo3(name = "ksmix")]
pub fn ksmix_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGrid>()?;
    m.add_class::<PyScenario>()?;
    m.add_class::<PyTrajectory>()?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
