//! Python bindings: models, the QSS analysis, trajectory sampling, the
//! classical cross-check and parameter sweeps. Reports come back as plain
//! dicts with the same layout as the CLI's JSON.

use num_complex::Complex64;
use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;

use qsslab::classical::{crosscheck as run_crosscheck, RateMatrix};
use qsslab::fixtures::{two_qubit, DecaySites};
use qsslab::io::ModelFile;
use qsslab::linalg::{CMatrix, DensityMatrix, OperatorMatrix, OrthProjection, Tolerances};
use qsslab::model::{build_generator, ModelSpec, Picture};
use qsslab::pipeline::analyze as run_analyze;
use qsslab::qss::verify_state;
use qsslab::report;
use qsslab::trajectory::{build_kernel, jump_statistics, sample_ensemble};
use qsslab::QssError;

create_exception!(qsslab, InputError, PyException, "Invalid model or arguments.");
create_exception!(qsslab, TheoryError, PyException, "A theoretical statement failed on the model.");

fn py_err(e: QssError) -> PyErr {
    if e.is_theory_violation() {
        TheoryError::new_err(e.to_string())
    } else {
        InputError::new_err(e.to_string())
    }
}

fn to_py_json(py: Python<'_>, v: &serde_json::Value) -> PyResult<Py<PyAny>> {
    let text = report::to_canonical_string(v).map_err(|e| InputError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

fn matrix_from_rows(rows: &[Vec<Complex64>], what: &str) -> PyResult<CMatrix> {
    let d = rows.len();
    if rows.iter().any(|r| r.len() != d) {
        return Err(InputError::new_err(format!("{what} must be square")));
    }
    Ok(CMatrix::from_fn(d, d, |i, j| rows[i][j]))
}

fn rows_of(m: &CMatrix) -> Vec<Vec<Complex64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

fn tolerances(tol_eig: f64, tol_psd: f64) -> Tolerances {
    Tolerances {
        eig: tol_eig,
        psd: tol_psd,
        ..Tolerances::default()
    }
}

/// A GKLS model with a distinguished projection `p0`.
#[pyclass(frozen, module = "qsslab")]
struct Model {
    spec: ModelSpec,
    file: Option<ModelFile>,
}

#[pymethods]
impl Model {
    /// Builds from a Hamiltonian, jump operators and the basis indices
    /// spanning `range(p0)`.
    #[new]
    #[pyo3(signature = (hamiltonian, jump_ops, p0_basis, label = "model".to_string()))]
    fn new(
        hamiltonian: Vec<Vec<Complex64>>,
        jump_ops: Vec<Vec<Vec<Complex64>>>,
        p0_basis: Vec<usize>,
        label: String,
    ) -> PyResult<Self> {
        let tol = Tolerances::default();
        let h = OperatorMatrix::new(matrix_from_rows(&hamiltonian, "hamiltonian")?).map_err(py_err)?;
        let dim = h.dim();
        let mut jumps = Vec::new();
        for (i, l) in jump_ops.iter().enumerate() {
            jumps.push(OperatorMatrix::new(matrix_from_rows(l, &format!("jump_ops[{i}]"))?).map_err(py_err)?);
        }
        let p0 = OrthProjection::from_basis_indices(dim, &p0_basis).map_err(py_err)?;
        let spec = ModelSpec::new(label, h, jumps, p0, &tol).map_err(py_err)?;
        Ok(Model { spec, file: None })
    }

    /// The two-qubit exchange model; `sites` is `"site1"` or `"both"`.
    #[staticmethod]
    #[pyo3(signature = (omega, sites = "site1"))]
    fn two_qubit(omega: f64, sites: &str) -> PyResult<Self> {
        let sites = match sites {
            "site1" => DecaySites::Site1,
            "both" => DecaySites::Both,
            other => return Err(InputError::new_err(format!("unknown sites {other:?}"))),
        };
        Ok(Model {
            spec: two_qubit(omega, sites),
            file: None,
        })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let file = ModelFile::from_json(text).map_err(py_err)?;
        let spec = file.to_spec(&Tolerances::default()).map_err(py_err)?;
        Ok(Model {
            spec,
            file: Some(file),
        })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| InputError::new_err(format!("{path}: {e}")))?;
        Self::from_json(&text)
    }

    /// A copy with one model-file parameter changed.
    fn with_param(&self, name: &str, value: f64) -> PyResult<Self> {
        let file = self
            .file
            .as_ref()
            .ok_or_else(|| InputError::new_err("model was not loaded from a file"))?
            .with_param(name, value)
            .map_err(py_err)?;
        let spec = file.to_spec(&Tolerances::default()).map_err(py_err)?;
        Ok(Model {
            spec,
            file: Some(file),
        })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.spec.dim()
    }

    #[getter]
    fn label(&self) -> String {
        self.spec.label.clone()
    }

    #[getter]
    fn p0_rank(&self) -> usize {
        self.spec.p0().rank()
    }

    /// The `d² × d²` generator matrix, column-stacking convention.
    #[pyo3(signature = (picture = "schrodinger"))]
    fn generator(&self, picture: &str) -> PyResult<Vec<Vec<Complex64>>> {
        let p = match picture {
            "schrodinger" => Picture::Schrodinger,
            "heisenberg" => Picture::Heisenberg,
            other => return Err(InputError::new_err(format!("unknown picture {other:?}"))),
        };
        Ok(rows_of(build_generator(&self.spec, p).matrix()))
    }

    fn __repr__(&self) -> String {
        format!("Model(label={:?}, dim={})", self.spec.label, self.spec.dim())
    }
}

/// Full analysis report as a dict.
#[pyfunction]
#[pyo3(signature = (model, tol_eig = 1e-9, tol_psd = 1e-9))]
fn analyze(py: Python<'_>, model: &Model, tol_eig: f64, tol_psd: f64) -> PyResult<Py<PyAny>> {
    let a = run_analyze(&model.spec, &tolerances(tol_eig, tol_psd)).map_err(py_err)?;
    to_py_json(py, &report::analysis(&a))
}

/// Residuals of every equivalent QSS characterization for `(nu, alpha)`.
#[pyfunction]
fn verify(py: Python<'_>, model: &Model, nu: Vec<Vec<Complex64>>, alpha: f64) -> PyResult<Py<PyAny>> {
    let m = matrix_from_rows(&nu, "nu")?;
    let v = verify_state(&model.spec, &m, alpha).map_err(py_err)?;
    to_py_json(py, &report::verification(&v))
}

/// Jump statistics of `samples` trajectories started in the Perron QSS.
#[pyfunction]
#[pyo3(signature = (model, samples = 1000, horizon = 6.0, seed = 42))]
fn simulate(py: Python<'_>, model: &Model, samples: usize, horizon: f64, seed: u64) -> PyResult<Py<PyAny>> {
    let tol = Tolerances::default();
    let a = run_analyze(&model.spec, &tol).map_err(py_err)?;
    let fam = a
        .perron_family()
        .ok_or_else(|| TheoryError::new_err("model has no QSS to start from"))?;
    let nu: DensityMatrix = fam.anchor.nu.clone();
    let kernel = build_kernel(&model.spec, &tol).map_err(py_err)?;
    let records = py
        .detach(|| sample_ensemble(&kernel, &nu, horizon, samples, seed))
        .map_err(py_err)?;
    let stats = jump_statistics(&records, nu.matrix(), fam.alpha).map_err(py_err)?;
    to_py_json(py, &report::jump_statistics(&stats))
}

/// Classical QSD versus the QSS of the diagonal embedding.
#[pyfunction]
fn crosscheck(py: Python<'_>, rate_matrix: Vec<Vec<f64>>, absorbing_set: Vec<usize>) -> PyResult<Py<PyAny>> {
    let rm = RateMatrix::new(rate_matrix, absorbing_set).map_err(py_err)?;
    let x = run_crosscheck(&rm, &Tolerances::default()).map_err(py_err)?;
    to_py_json(py, &report::crosscheck(&x))
}

/// `(value, sorted QSS decay rates)` for each parameter value.
#[pyfunction]
fn sweep(model: &Model, param: &str, values: Vec<f64>) -> PyResult<Vec<(f64, Vec<f64>)>> {
    let tol = Tolerances::default();
    let mut out = Vec::with_capacity(values.len());
    for v in values {
        let m = model.with_param(param, v)?;
        let a = run_analyze(&m.spec, &tol).map_err(py_err)?;
        let mut alphas: Vec<f64> = a.extraction.families.iter().map(|f| f.alpha).collect();
        alphas.sort_by(f64::total_cmp);
        out.push((v, alphas));
    }
    Ok(out)
}

#[pymodule]
#[pyo3(name = "qsslab")]
fn qsslab_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Model>()?;
    m.add_function(wrap_pyfunction!(analyze, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(crosscheck, m)?)?;
    m.add_function(wrap_pyfunction!(sweep, m)?)?;
    m.add("InputError", m.py().get_type::<InputError>())?;
    m.add("TheoryError", m.py().get_type::<TheoryError>())?;
    m.add("__version__", report::VERSION)?;
    Ok(())
}
