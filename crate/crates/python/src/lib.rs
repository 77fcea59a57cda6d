//! Python bindings: field parameters, root tables, spectra, zeta values,
//! seminorm reports and the JSON/CSV runs.

use num_complex::Complex64;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use padic::output::{self, Format, SpectrumConfig, ValidateConfig, ZetaConfig};
use padic::{operators, qspecial, seminorms, spectrum, testfn, DepthClosure, Error, TreeWindow};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::SeriesNotConverged { .. } | Error::BracketFailure { .. } | Error::NotConverged(_) => {
            PyRuntimeError::new_err(e.to_string())
        }
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn closure(name: &str) -> PyResult<DepthClosure> {
    match name {
        "transparent" => Ok(DepthClosure::Transparent),
        "dirichlet" => Ok(DepthClosure::Dirichlet),
        "truncate" => Ok(DepthClosure::Truncate),
        _ => Err(PyValueError::new_err(format!("unknown closure {name:?}"))),
    }
}

fn format(name: &str) -> PyResult<Format> {
    match name {
        "json" => Ok(Format::Json),
        "csv" => Ok(Format::Csv),
        _ => Err(PyValueError::new_err(format!("unknown format {name:?}"))),
    }
}

#[pyclass(name = "FieldParams", frozen, eq, from_py_object)]
#[derive(Clone, PartialEq)]
struct PyFieldParams {
    inner: padic::FieldParams,
}

#[pymethods]
impl PyFieldParams {
    #[new]
    #[pyo3(signature = (p, e = 1, f = 1))]
    fn new(p: u32, e: u32, f: u32) -> PyResult<Self> {
        Ok(Self {
            inner: padic::FieldParams::new(p, e, f).map_err(to_py)?,
        })
    }

    #[getter]
    fn p(&self) -> u32 {
        self.inner.p()
    }

    #[getter]
    fn e(&self) -> u32 {
        self.inner.e()
    }

    #[getter]
    fn f(&self) -> u32 {
        self.inner.f()
    }

    /// Size of the residue field, `p^f`.
    #[getter]
    fn q_res(&self) -> u64 {
        self.inner.q_res()
    }

    /// `ef`.
    #[getter]
    fn degree(&self) -> u32 {
        self.inner.degree()
    }

    /// `p^(-2/e)`, the base of the q-series.
    #[getter]
    fn q(&self) -> f64 {
        self.inner.q()
    }

    /// `p^(2/e)`.
    #[getter]
    fn big_q(&self) -> f64 {
        self.inner.q_inv()
    }

    fn __repr__(&self) -> String {
        format!("FieldParams(p={}, e={}, f={})", self.inner.p(), self.inner.e(), self.inner.f())
    }
}

#[pyclass(name = "RootTable", frozen, skip_from_py_object)]
struct PyRootTable {
    inner: qspecial::RootTable,
}

#[pymethods]
impl PyRootTable {
    fn values(&self) -> Vec<f64> {
        self.inner.values()
    }

    fn residuals(&self) -> Vec<f64> {
        self.inner.entries.iter().map(|e| e.residual).collect()
    }

    fn brackets(&self) -> Vec<(f64, f64)> {
        self.inner.entries.iter().map(|e| (e.bracket_lo, e.bracket_hi)).collect()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __getitem__(&self, n: usize) -> PyResult<f64> {
        self.inner
            .entries
            .get(n)
            .map(|e| e.value)
            .ok_or_else(|| pyo3::exceptions::PyIndexError::new_err(n))
    }

    /// Eigenvector of root `n` by recurrence and by series; returns the tail
    /// mass, the normalising `c(2)`, the largest relative mismatch and both vectors.
    #[pyo3(signature = (n, length = 80, k_max = 80, l_max = 10))]
    fn dual_construction<'py>(
        &self,
        py: Python<'py>,
        n: usize,
        length: usize,
        k_max: usize,
        l_max: usize,
    ) -> PyResult<Bound<'py, PyDict>> {
        let d = qspecial::dual_construction(&self.inner, n, length, k_max, l_max).map_err(to_py)?;
        let out = PyDict::new(py);
        out.set_item("n", d.n)?;
        out.set_item("lambda", d.lambda)?;
        out.set_item("tail_mass", d.tail_mass)?;
        out.set_item("c2", d.c2)?;
        out.set_item("max_rel_mismatch", d.max_rel_mismatch)?;
        out.set_item("recurrence", d.recurrence)?;
        out.set_item("series", d.series)?;
        Ok(out)
    }
}

/// The first `n` roots of `1phi1(0; q; q, z)` for these parameters.
#[pyfunction]
fn roots(params: &PyFieldParams, n: usize) -> PyResult<PyRootTable> {
    Ok(PyRootTable {
        inner: qspecial::roots_for(&params.inner, n).map_err(to_py)?,
    })
}

/// `(m, n, lambda_n, p^(2m/e) lambda_n, multiplicity)` rows sorted by value.
#[pyfunction]
fn spectrum_table(
    params: &PyFieldParams,
    roots: &PyRootTable,
    m_max: u32,
    n_max: usize,
) -> PyResult<Vec<(u32, usize, f64, f64, u64)>> {
    let t = spectrum::full_spectrum(&params.inner, &roots.inner, m_max, n_max).map_err(to_py)?;
    Ok(t.entries
        .iter()
        .map(|e| (e.m, e.n, e.lambda, e.value, e.multiplicity))
        .collect())
}

/// Lowest `k` eigenvalues of `D*D` on the depth-`depth` window of the ring.
#[pyfunction]
#[pyo3(signature = (params, depth, k, closure = "transparent"))]
fn lowest_eigenvalues(params: &PyFieldParams, depth: u32, k: usize, closure: &str) -> PyResult<Vec<f64>> {
    let w = TreeWindow::ring(params.inner, depth).map_err(to_py)?;
    operators::lowest_eigenvalues(&w, self::closure(closure)?, k).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (params, depth, k = 8, tol = 1e-6, closure = "transparent", drift = false))]
fn validate_spectrum<'py>(
    py: Python<'py>,
    params: &PyFieldParams,
    depth: u32,
    k: usize,
    tol: f64,
    closure: &str,
    drift: bool,
) -> PyResult<Bound<'py, PyDict>> {
    let r = spectrum::validate_spectrum(&params.inner, depth, k, tol, self::closure(closure)?, drift).map_err(to_py)?;
    let out = PyDict::new(py);
    out.set_item("analytic", r.analytic)?;
    out.set_item("numeric", r.numeric)?;
    out.set_item("rel_errors", r.rel_errors)?;
    out.set_item("max_rel_error", r.max_rel_error)?;
    out.set_item("analytic_pattern", r.analytic_pattern)?;
    out.set_item("numeric_pattern", r.numeric_pattern)?;
    out.set_item("pattern_match", r.pattern_match)?;
    out.set_item("drift", r.drift)?;
    out.set_item("cutoff", r.cutoff)?;
    out.set_item("passed", r.passed)?;
    Ok(out)
}

/// `zeta_{D^R}(s)` (or `zeta_{D_0}` with `reduced=True`) from the first
/// `n_roots` roots, with a bound on the omitted part. Raises `ValueError` at a pole.
#[pyfunction]
#[pyo3(signature = (params, roots, s, n_roots, reduced = false))]
fn zeta(params: &PyFieldParams, roots: &PyRootTable, s: Complex64, n_roots: usize, reduced: bool) -> PyResult<(Complex64, f64)> {
    let z = if reduced {
        spectrum::zeta_d0(&params.inner, &roots.inner, s, n_roots)
    } else {
        spectrum::zeta_dr(&params.inner, &roots.inner, s, n_roots)
    }
    .map_err(to_py)?;
    Ok((z.value(), z.tail_bound))
}

/// `(1 - p^(-2s/e)) / (1 - p^(f - 2s/e))`.
#[pyfunction]
fn zeta_factor(params: &PyFieldParams, s: Complex64) -> PyResult<Complex64> {
    spectrum::zeta_factor(&params.inner, s).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (params, k_min = -3, k_max = 3))]
fn factor_poles(params: &PyFieldParams, k_min: i64, k_max: i64) -> Vec<Complex64> {
    spectrum::factor_poles(&params.inner, k_min..=k_max)
}

/// Partial trace of `(D*D)^-s` and both forms of the `m`-factor.
#[pyfunction]
fn schatten<'py>(
    py: Python<'py>,
    params: &PyFieldParams,
    roots: &PyRootTable,
    s: f64,
    m_max: u32,
    n_max: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let r = spectrum::schatten_partial(&params.inner, &roots.inner, s, m_max, n_max).map_err(to_py)?;
    let out = PyDict::new(py);
    out.set_item("value", r.value)?;
    out.set_item("m_factor_direct", r.m_factor_direct)?;
    out.set_item("m_factor_closed", r.m_factor_closed)?;
    out.set_item("partial_sums", r.partial_sums)?;
    Ok(out)
}

/// Ids of the built-in test function library.
#[pyfunction]
fn library_ids(params: &PyFieldParams) -> Vec<String> {
    testfn::library(&params.inner).into_iter().map(|a| a.id).collect()
}

/// Seminorm quantities for every library function at depth `depth`.
#[pyfunction]
fn seminorm_reports<'py>(py: Python<'py>, params: &PyFieldParams, depth: u32) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let w = TreeWindow::ring(params.inner, depth).map_err(to_py)?;
    let mut out = Vec::new();
    for a in testfn::library(&params.inner) {
        let r = seminorms::seminorm_report(&w, &a).map_err(to_py)?;
        let d = PyDict::new(py);
        d.set_item("id", &r.id)?;
        d.set_item("l1", r.l1)?;
        d.set_item("ld_formula", r.ld_formula)?;
        d.set_item("ld_rows", r.ld_rows)?;
        d.set_item("commutator_norm", r.commutator_norm)?;
        d.set_item("lower_constant", r.lower_constant)?;
        d.set_item("upper_constant", r.upper_constant)?;
        d.set_item("sandwich_ok", r.sandwich_ok())?;
        out.push(d);
    }
    Ok(out)
}

/// `||(D_g)^-1||_HS^2` for `|g| = p^(m/e)`, closed form and direct sum.
#[pyfunction]
fn hs_norm_dg_inverse(params: &PyFieldParams, m: u32) -> (f64, f64) {
    (
        operators::hs_norm_dg_inverse(&params.inner, m),
        operators::hs_norm_dg_inverse_direct(&params.inner, m, 200),
    )
}

/// Largest singular values and HS norm of `rho(a) (D^F)^-1` on the window
/// with levels `-m ..= n`, for `a = 1 / (1 + |x|^alpha)`.
#[pyfunction]
#[pyo3(signature = (params, m, n, alpha, count = 10, t = None))]
fn f_case(params: &PyFieldParams, m: u32, n: i64, alpha: f64, count: usize, t: Option<f64>) -> PyResult<(Vec<f64>, f64)> {
    let w = TreeWindow::field(params.inner, m, n).map_err(to_py)?;
    let a = testfn::TestFunction::decay(&params.inner, alpha);
    let k = operators::kernel_rho_a_dfinv(&w, &a, t).map_err(to_py)?;
    let sv = operators::singular_values(&k, count).map_err(to_py)?;
    Ok((sv, operators::hs_norm(&k)))
}

/// The `spectrum` command's output as text.
#[pyfunction]
#[pyo3(signature = (params, m_max = 3, n_max = 5, fmt = "json", seed = 7))]
fn run_spectrum(params: &PyFieldParams, m_max: u32, n_max: usize, fmt: &str, seed: u64) -> PyResult<String> {
    let doc = output::run_spectrum(&SpectrumConfig {
        params: params.inner,
        m_max,
        n_max,
        seed,
    })
    .map_err(to_py)?;
    Ok(output::render(&doc, format(fmt)?))
}

/// The `validate` command's output as text and whether every check passed.
#[pyfunction]
#[pyo3(signature = (params, depth = None, fmt = "json", drift = true))]
fn run_validate(params: &PyFieldParams, depth: Option<u32>, fmt: &str, drift: bool) -> PyResult<(String, bool)> {
    let mut cfg = ValidateConfig::default_for(params.inner);
    if let Some(d) = depth {
        cfg.depth = d;
    }
    cfg.drift = drift;
    let doc = output::run_validate(&cfg).map_err(to_py)?;
    Ok((output::render(&doc, format(fmt)?), output::all_passed(&doc)))
}

/// The `zeta` command's output as text.
#[pyfunction]
#[pyo3(signature = (params, s, n_roots = vec![20], fmt = "json", seed = 7))]
fn run_zeta(params: &PyFieldParams, s: Vec<Complex64>, n_roots: Vec<usize>, fmt: &str, seed: u64) -> PyResult<String> {
    let doc = output::run_zeta(&ZetaConfig {
        params: params.inner,
        s,
        n_roots,
        seed,
    })
    .map_err(to_py)?;
    Ok(output::render(&doc, format(fmt)?))
}

#[pymodule(name = "padic_spectra")]
fn init(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyFieldParams>()?;
    m.add_class::<PyRootTable>()?;
    m.add_function(wrap_pyfunction!(roots, m)?)?;
    m.add_function(wrap_pyfunction!(spectrum_table, m)?)?;
    m.add_function(wrap_pyfunction!(lowest_eigenvalues, m)?)?;
    m.add_function(wrap_pyfunction!(validate_spectrum, m)?)?;
    m.add_function(wrap_pyfunction!(zeta, m)?)?;
    m.add_function(wrap_pyfunction!(zeta_factor, m)?)?;
    m.add_function(wrap_pyfunction!(factor_poles, m)?)?;
    m.add_function(wrap_pyfunction!(schatten, m)?)?;
    m.add_function(wrap_pyfunction!(library_ids, m)?)?;
    m.add_function(wrap_pyfunction!(seminorm_reports, m)?)?;
    m.add_function(wrap_pyfunction!(hs_norm_dg_inverse, m)?)?;
    m.add_function(wrap_pyfunction!(f_case, m)?)?;
    m.add_function(wrap_pyfunction!(run_spectrum, m)?)?;
    m.add_function(wrap_pyfunction!(run_validate, m)?)?;
    m.add_function(wrap_pyfunction!(run_zeta, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
