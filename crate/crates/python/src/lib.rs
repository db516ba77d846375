//! Python bindings for the `lmstab` finite element library.
//!
//! Heavy computations run with the interpreter lock released. Configuration
//! errors raise `ValueError`; numerical failures raise `NumericalError`.

use pyo3::create_exception;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use lmstab::analysis::{self, ConvergenceStudy, InfsupPair};
use lmstab::forms::ProblemData;
use lmstab::mesh::{build_unit_square_mesh, TriMesh};
use lmstab::solver::{MethodSpec, Variant};
use lmstab::unfitted;

create_exception!(lmstab_py, NumericalError, PyRuntimeError, "Singular or inaccurate solve.");

fn to_py(e: lmstab::Error) -> PyErr {
    let msg = format!("{}: {e}", e.kind());
    if e.is_numerical() {
        NumericalError::new_err(msg)
    } else {
        PyValueError::new_err(msg)
    }
}

fn parse<T: std::str::FromStr<Err = lmstab::Error>>(s: &str) -> PyResult<T> {
    s.parse().map_err(to_py)
}

/// Structured triangulation of the unit square.
#[pyclass(frozen, module = "lmstab_py")]
pub struct Mesh {
    inner: TriMesh,
}

#[pymethods]
impl Mesh {
    #[new]
    fn new(n: usize) -> PyResult<Self> {
        Ok(Self { inner: build_unit_square_mesh(n).map_err(to_py)? })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n
    }

    /// Largest element diameter.
    #[getter]
    fn h(&self) -> f64 {
        self.inner.h
    }

    fn nodes(&self) -> Vec<(f64, f64)> {
        self.inner.nodes.iter().map(|p| (p[0], p[1])).collect()
    }

    fn triangles(&self) -> Vec<[usize; 3]> {
        self.inner.triangles.clone()
    }

    fn __repr__(&self) -> String {
        format!("Mesh(n={}, nodes={}, triangles={})", self.inner.n, self.inner.nodes.len(), self.inner.triangles.len())
    }
}

/// Error norms of one discrete solution.
#[pyclass(frozen, get_all, skip_from_py_object, module = "lmstab_py")]
#[derive(Clone)]
pub struct ErrorRecord {
    n: usize,
    h: f64,
    n_dofs: usize,
    err_h1: f64,
    err_l2: f64,
    err_mult: Option<f64>,
}

impl From<&analysis::ErrorRecord> for ErrorRecord {
    fn from(r: &analysis::ErrorRecord) -> Self {
        Self { n: r.n, h: r.h, n_dofs: r.n_dofs, err_h1: r.err_h1, err_l2: r.err_l2, err_mult: r.err_mult }
    }
}

#[pymethods]
impl ErrorRecord {
    fn __repr__(&self) -> String {
        format!(
            "ErrorRecord(n={}, err_h1={:.3e}, err_l2={:.3e}, err_mult={:?})",
            self.n, self.err_h1, self.err_l2, self.err_mult
        )
    }
}

/// Result of a single solve.
#[pyclass(frozen, get_all, module = "lmstab_py")]
pub struct Solution {
    u: Vec<f64>,
    multiplier: Vec<f64>,
    relative_residual: f64,
    det_sign: f64,
    min_pivot_ratio: f64,
    errors: ErrorRecord,
}

/// Convergence study: per-level records and fitted slopes.
#[pyclass(frozen, get_all, module = "lmstab_py")]
pub struct Study {
    levels: Vec<usize>,
    status: Vec<String>,
    records: Vec<ErrorRecord>,
    slope_h1: Option<f64>,
    slope_l2: Option<f64>,
    slope_mult: Option<f64>,
}

impl From<ConvergenceStudy> for Study {
    fn from(s: ConvergenceStudy) -> Self {
        Self {
            levels: s.levels.iter().map(|l| l.n).collect(),
            status: s.levels.iter().map(|l| l.status.clone()).collect(),
            records: s.levels.iter().filter_map(|l| l.record.as_ref().map(ErrorRecord::from)).collect(),
            slope_h1: s.rates.map(|r| r.h1),
            slope_l2: s.rates.map(|r| r.l2),
            slope_mult: s.rates.and_then(|r| r.mult),
        }
    }
}

/// One row of a γ sweep.
#[pyclass(frozen, get_all, module = "lmstab_py")]
pub struct GammaRow {
    gamma: f64,
    distance: Option<f64>,
    status: String,
    det_sign: Option<f64>,
    negative_eigenvalues: Option<usize>,
    near_singular: bool,
}

/// Solves one method on an `n × n` mesh with the default manufactured
/// solution, or a globally linear one when `patch` is true.
#[pyfunction]
#[pyo3(signature = (method, degree = 1, n = 8, gamma = 1.0, patch = false))]
fn solve(py: Python<'_>, method: &str, degree: usize, n: usize, gamma: f64, patch: bool) -> PyResult<Solution> {
    let spec = MethodSpec::new(parse::<Variant>(method)?, degree, n, gamma);
    let (sol, rec) = py
        .detach(|| {
            let data = if patch { ProblemData::linear(0.3, 1.1, -0.7) } else { analysis::exact_solution() };
            analysis::run_level(&spec, &data)
        })
        .map_err(to_py)?;
    Ok(Solution {
        det_sign: sol.report.det_sign,
        min_pivot_ratio: sol.report.min_pivot_ratio(),
        u: sol.u,
        multiplier: sol.lambda,
        relative_residual: sol.relative_residual,
        errors: ErrorRecord::from(&rec),
    })
}

#[pyfunction]
#[pyo3(signature = (method, degree = 1, levels = vec![8, 16, 32, 64], gamma = 1.0))]
fn converge(py: Python<'_>, method: &str, degree: usize, levels: Vec<usize>, gamma: f64) -> PyResult<Study> {
    let variant = parse::<Variant>(method)?;
    let first = *levels.first().ok_or_else(|| PyValueError::new_err("levels must not be empty"))?;
    let spec = MethodSpec::new(variant, degree, first, gamma);
    let study = py.detach(|| analysis::convergence_study(&spec, &levels, &analysis::exact_solution()));
    Ok(study.map_err(to_py)?.into())
}

/// Discrete inf-sup constant of a primal/multiplier pair.
#[pyfunction]
#[pyo3(signature = (pair, n, stabilized = false, gamma = 1.0))]
fn infsup(py: Python<'_>, pair: &str, n: usize, stabilized: bool, gamma: f64) -> PyResult<f64> {
    let pair = parse::<InfsupPair>(pair)?;
    py.detach(|| analysis::infsup_constant(pair, n, stabilized, gamma)).map_err(to_py)
}

/// Lower and upper equivalence constants between the projection and jump
/// stabilisers.
#[pyfunction]
fn norm_equivalence(py: Python<'_>, n: usize) -> PyResult<(f64, f64)> {
    py.detach(|| analysis::norm_equivalence(n)).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (method, gammas, degree = 1, n = 20))]
fn gamma_sweep(py: Python<'_>, method: &str, gammas: Vec<f64>, degree: usize, n: usize) -> PyResult<Vec<GammaRow>> {
    let variant = parse::<Variant>(method)?;
    let sweep = py
        .detach(|| analysis::gamma_sweep(variant, degree, n, &gammas, &analysis::exact_solution()))
        .map_err(to_py)?;
    Ok(sweep
        .rows
        .into_iter()
        .map(|r| GammaRow {
            gamma: r.gamma,
            distance: r.distance,
            status: r.status,
            det_sign: r.det_sign,
            negative_eigenvalues: r.negative_eigenvalues,
            near_singular: r.near_singular,
        })
        .collect())
}

/// Unfitted interface study with `u = sin(πx) sin(πy)`.
#[pyfunction(name = "unfitted")]
#[pyo3(signature = (levels = vec![8, 16, 32, 64], x0 = 0.5137, gamma = 1.0))]
fn unfitted_study(py: Python<'_>, levels: Vec<usize>, x0: f64, gamma: f64) -> PyResult<Study> {
    let study = py.detach(|| unfitted::interface_study(&levels, x0, gamma, &unfitted::interface_exact_solution()));
    Ok(study.map_err(to_py)?.into())
}

/// Runs the command line driver in-process; returns `(exit_code, stdout, stderr)`.
#[pyfunction]
fn cli(py: Python<'_>, args: Vec<String>) -> (i32, String, String) {
    py.detach(|| {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let code = lmstab::cli::run(std::iter::once("lmstab".to_string()).chain(args), &mut out, &mut err);
        (code, String::from_utf8_lossy(&out).into_owned(), String::from_utf8_lossy(&err).into_owned())
    })
}

/// Stabilised Lagrange multiplier finite element studies.
#[pymodule]
mod lmstab_py {
    #[pymodule_export]
    use super::{
        cli, converge, gamma_sweep, infsup, norm_equivalence, solve, unfitted_study, ErrorRecord, GammaRow, Mesh,
        NumericalError, Solution, Study,
    };
}
