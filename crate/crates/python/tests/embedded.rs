use pyo3::prelude::*;
use pyo3::types::PyDict;

fn with_module<R>(f: impl FnOnce(Python<'_>, &Bound<'_, PyDict>) -> R) -> R {
    Python::initialize();
    Python::attach(|py| {
        let m = PyModule::new(py, "ksmix").unwrap();
        ksmix_py::ksmix_module(&m).unwrap();
        let globals = PyDict::new(py);
        globals.set_item("ksmix", m).unwrap();
        f(py, &globals)
    })
}

fn eval<'py>(py: Python<'py>, globals: &Bound<'py, PyDict>, code: &str) -> Bound<'py, PyAny> {
    let code = std::ffi::CString::new(code).unwrap();
    py.eval(&code, Some(globals), None).unwrap()
}

#[test]
fn grid_and_constants_are_exposed() {
    with_module(|py, g| {
        let n: usize = eval(py, g, "ksmix.Grid([4, 6], [1.0, 2.0]).cell_count()").extract().unwrap();
        assert_eq!(n, 24);
        let mode: String = eval(py, g, "ksmix.Scenario.preset('two-layer').check_h4()[2]").extract().unwrap();
        assert_eq!(mode, "verified");
        let err = py.eval(c"ksmix.Grid([1, 4])", Some(g), None).unwrap_err();
        assert!(err.is_instance_of::<pyo3::exceptions::PyValueError>(py));
    });
}

#[test]
fn short_rest_run_through_python() {
    with_module(|py, g| {
        let code = "(lambda s: (setattr(s, 't_final', 0.3), s.run())[1])(ksmix.Scenario.preset('rest')).summary()";
        let summary = eval(py, g, code);
        let steps: usize = summary.get_item("steps").unwrap().extract().unwrap();
        let drift: f64 = summary.get_item("mass_drift").unwrap().extract().unwrap();
        assert_eq!(steps, 3);
        assert_eq!(drift, 0.0);
    });
}
