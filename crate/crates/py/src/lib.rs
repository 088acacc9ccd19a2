//! Python bindings. Structured results come back as plain dicts.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use serde::Serialize;

use double_tower::constants::{crosscheck_constants, eval_constants};
use double_tower::integrals::pair_interaction as pair_integrals;
use double_tower::lattice::{sum_asymptotic, sum_exact, RingKind, SumQuery, Weight};
use double_tower::montecarlo::MCSpec;
use double_tower::potentials::{make_potential, PotentialSpec};
use double_tower::quadrature::QuadratureSpec;
use double_tower::reduced::{f_main, make_boxes, solve_critical as solve, RemainderModel, SolveMode, WidthMode};
use double_tower::residual::{residual_at, residual_norm as norm_of_residual};
use double_tower::{acceptance, Dimension, Error, RadialPotential};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Config { .. } | Error::Parameter { .. } | Error::Dimension(_) => PyValueError::new_err(e.to_string()),
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

/// Round-trips through JSON so every result type maps onto dicts and lists.
fn to_dict<'py, T: Serialize>(py: Python<'py>, x: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(x).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn dim(n: usize) -> PyResult<Dimension> {
    Dimension::new(n).map_err(to_py)
}

/// Radial potential built from a family name and its parameters.
#[pyclass(name = "Potential", frozen)]
struct PyPotential {
    inner: double_tower::Potential,
    spec: PotentialSpec,
}

#[pymethods]
impl PyPotential {
    /// `Potential("bump_at", r0=1.0, v0=1.0, a=0.0, w=0.5)`.
    #[new]
    #[pyo3(signature = (family, **params))]
    fn new(py: Python<'_>, family: &str, params: Option<&Bound<'_, PyDict>>) -> PyResult<Self> {
        let table = PyDict::new(py);
        if let Some(p) = params {
            table.update(p.as_mapping())?;
        }
        table.set_item("family", family)?;
        let text: String = py.import("json")?.call_method1("dumps", (table,))?.extract()?;
        let spec: PotentialSpec = serde_json::from_str(&text).map_err(|e| PyValueError::new_err(format!("potential: {e}")))?;
        let inner = make_potential(&spec).map_err(to_py)?;
        Ok(Self { inner, spec })
    }

    fn value(&self, s: f64) -> f64 {
        self.inner.value(s)
    }

    fn derivative(&self, s: f64) -> f64 {
        self.inner.derivative(s)
    }

    fn spec<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_dict(py, &self.spec)
    }

    fn __repr__(&self) -> String {
        format!("Potential({:?})", self.spec)
    }
}

/// Two rings of `k` bubbles at heights `±rh`, concentration `mu`.
#[pyclass(name = "Configuration", frozen)]
struct PyConfiguration {
    inner: double_tower::Configuration,
}

#[pymethods]
impl PyConfiguration {
    #[new]
    fn new(n: usize, k: usize, r: f64, h: f64, mu: f64) -> PyResult<Self> {
        let inner = double_tower::Configuration::new(dim(n)?, k, r, h, mu).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }
    #[getter]
    fn k(&self) -> usize {
        self.inner.k
    }
    #[getter]
    fn r(&self) -> f64 {
        self.inner.r
    }
    #[getter]
    fn h(&self) -> f64 {
        self.inner.h
    }
    #[getter]
    fn mu(&self) -> f64 {
        self.inner.mu
    }

    /// All `2k` centers, upper ring first.
    fn centers(&self) -> Vec<Vec<f64>> {
        self.inner.centers().all()
    }

    /// Pointwise residual of the ansatz at `y`.
    fn residual(&self, potential: &PyPotential, y: Vec<f64>) -> PyResult<f64> {
        if y.len() != self.inner.n() {
            return Err(PyValueError::new_err(format!("y must have {} coordinates", self.inner.n())));
        }
        Ok(residual_at(&self.inner, &potential.inner, &y))
    }

    /// Monte Carlo estimate of the residual norm with its standard error.
    #[pyo3(signature = (potential, samples = 200_000, seed = 1))]
    fn residual_norm<'py>(&self, py: Python<'py>, potential: &PyPotential, samples: usize, seed: u64) -> PyResult<Bound<'py, PyAny>> {
        let out = py
            .detach(|| norm_of_residual(&self.inner, &potential.inner, &MCSpec::with_samples(samples, seed)))
            .map_err(to_py)?;
        to_dict(py, &out)
    }

    /// Main term of the reduced energy and its pieces.
    fn reduced_energy<'py>(&self, py: Python<'py>, potential: &PyPotential) -> PyResult<Bound<'py, PyAny>> {
        let c = &self.inner;
        let out = f_main(c.dim, c.k, c.r, c.h, c.mu, &potential.inner, &RemainderModel::default()).map_err(to_py)?;
        to_dict(py, &out)
    }

    fn __repr__(&self) -> String {
        let c = &self.inner;
        format!("Configuration(n={}, k={}, r={}, h={}, mu={})", c.n(), c.k, c.r, c.h, c.mu)
    }
}

/// Closed-form constants for dimension `n`.
#[pyfunction]
fn constants(py: Python<'_>, n: usize) -> PyResult<Bound<'_, PyAny>> {
    let c = eval_constants(dim(n)?);
    let d = PyDict::new(py);
    d.set_item("N", c.n)?;
    for (key, val) in [("A1", c.a1), ("A2", c.a2), ("B0", c.b0), ("B1", c.b1), ("B2", c.b2), ("A3", c.a3()), ("h0", c.h0())] {
        d.set_item(key, val)?;
    }
    Ok(d.into_any())
}

/// Quadrature cross-check of every closed form.
#[pyfunction]
#[pyo3(signature = (n, tol = 1e-9))]
fn crosscheck(py: Python<'_>, n: usize, tol: f64) -> PyResult<Bound<'_, PyAny>> {
    to_dict(py, &crosscheck_constants(dim(n)?, tol).map_err(to_py)?)
}

/// Exact ring sum and its leading law.
#[pyfunction]
#[pyo3(signature = (n, k, r, h, alpha, ring = "same", weight = "one"))]
#[allow(clippy::too_many_arguments)]
fn lattice_sum<'py>(py: Python<'py>, n: usize, k: usize, r: f64, h: f64, alpha: f64, ring: &str, weight: &str) -> PyResult<Bound<'py, PyAny>> {
    let ring = match ring {
        "same" => RingKind::Same,
        "cross" => RingKind::Cross,
        _ => return Err(PyValueError::new_err("ring must be 'same' or 'cross'")),
    };
    let weight = match weight {
        "one" => Weight::One,
        "one_minus_cos" => Weight::OneMinusCos,
        _ => return Err(PyValueError::new_err("weight must be 'one' or 'one_minus_cos'")),
    };
    let q = SumQuery { dim: dim(n)?, k, r, h, alpha, ring, weight };
    let exact = sum_exact(&q).map_err(to_py)?;
    let asym = sum_asymptotic(&q).map_err(to_py)?;
    let d = to_dict(py, &asym)?;
    d.set_item("exact", exact)?;
    Ok(d)
}

/// Interaction integrals of two bubbles a distance `d` apart.
#[pyfunction]
#[pyo3(signature = (n, d, mu = 1.0, rel_tol = 1e-10))]
fn pair_interaction(py: Python<'_>, n: usize, d: f64, mu: f64, rel_tol: f64) -> PyResult<Bound<'_, PyAny>> {
    let dm = dim(n)?;
    let x1 = vec![0.0; n];
    let mut x2 = x1.clone();
    x2[0] = d;
    let spec = QuadratureSpec { rel_tol, ..QuadratureSpec::default() };
    to_dict(py, &pair_integrals(dm, &x1, &x2, mu, &spec).map_err(to_py)?)
}

/// Critical point of the reduced energy in the box around `(r0, h0, mu0)`.
#[pyfunction]
#[pyo3(signature = (n, k, potential, r0 = 1.0, mode = "max", sigma = None))]
fn solve_critical<'py>(
    py: Python<'py>,
    n: usize,
    k: usize,
    potential: &PyPotential,
    r0: f64,
    mode: &str,
    sigma: Option<f64>,
) -> PyResult<Bound<'py, PyAny>> {
    let mode = match mode {
        "max" => SolveMode::Max,
        "minmax" => SolveMode::Minmax,
        _ => return Err(PyValueError::new_err("mode must be 'max' or 'minmax'")),
    };
    let widths = match sigma {
        Some(s) => WidthMode::Fixed { sigma: s },
        None => WidthMode::Shrinking { fallback: acceptance::n5_widths() },
    };
    let bx = make_boxes(dim(n)?, k, r0, &potential.inner, widths).map_err(to_py)?;
    let cp = py.detach(|| solve(&bx, &potential.inner, mode)).map_err(to_py)?;
    to_dict(py, &cp)
}

/// Runs one acceptance criterion by id.
#[pyfunction]
fn run_criterion(py: Python<'_>, id: u32) -> PyResult<Bound<'_, PyAny>> {
    let res = py
        .detach(|| acceptance::run_criterion(id))
        .ok_or_else(|| PyValueError::new_err(format!("unknown criterion {id}")))?;
    let d = to_dict(py, &res)?;
    d.set_item("elapsed_s", res.elapsed_s)?;
    Ok(d)
}

#[pymodule]
fn double_tower_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPotential>()?;
    m.add_class::<PyConfiguration>()?;
    m.add_function(wrap_pyfunction!(constants, m)?)?;
    m.add_function(wrap_pyfunction!(crosscheck, m)?)?;
    m.add_function(wrap_pyfunction!(lattice_sum, m)?)?;
    m.add_function(wrap_pyfunction!(pair_interaction, m)?)?;
    m.add_function(wrap_pyfunction!(solve_critical, m)?)?;
    m.add_function(wrap_pyfunction!(run_criterion, m)?)?;
    Ok(())
}
