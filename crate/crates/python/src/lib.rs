//! Python bindings for the `hrom` reduced-order modelling toolkit.
//!
//! States and reduced coordinates cross the boundary as plain lists of floats.
//! Parameters are `b` plus an optional source amplitude `a` (default 1).

use std::path::PathBuf;

use nalgebra::{DMatrix, DVector};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use hrom::config::ExperimentConfig;
use hrom::experiment;
use hrom::fom::BurgersParams;
use hrom::lspg::DEFAULT_ROM_TOL;
use hrom::sampler::{SamplerMode, SamplerState};
use hrom::{RomError, StateVector};

fn to_py(e: RomError) -> PyErr {
    match e {
        RomError::Precondition(_)
        | RomError::Index { .. }
        | RomError::Dimension(_)
        | RomError::Config(_)
        | RomError::EmptyBasis => PyValueError::new_err(e.to_string()),
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

fn params(b: f64, a: f64) -> BurgersParams {
    BurgersParams::with_amplitude(b, a)
}

fn state(w: Vec<f64>) -> StateVector {
    StateVector::from_vec(w)
}

/// Steady 1D Burgers model with source `a * exp(b x)` and inflow value 1.
#[pyclass(name = "BurgersModel", module = "hrom_py", skip_from_py_object)]
#[derive(Clone)]
struct PyModel {
    inner: hrom::BurgersModel,
}

#[pymethods]
impl PyModel {
    #[new]
    #[pyo3(signature = (nodes=1024, x_min=0.0, x_max=100.0))]
    fn new(nodes: usize, x_min: f64, x_max: f64) -> PyResult<Self> {
        let grid = hrom::Grid1D::new(nodes, x_min, x_max).map_err(to_py)?;
        Ok(Self {
            inner: hrom::BurgersModel::new(grid),
        })
    }

    #[getter]
    fn num_nodes(&self) -> usize {
        self.inner.num_nodes()
    }

    #[getter]
    fn num_entities(&self) -> usize {
        self.inner.num_entities()
    }

    /// Newton solve of the full-order system.
    #[pyo3(signature = (b, a=1.0, tol=1e-12))]
    fn solve_fom(&self, b: f64, a: f64, tol: f64) -> PyResult<Vec<f64>> {
        let sol = self.inner.solve_fom(&params(b, a), None, tol).map_err(to_py)?;
        Ok(sol.state.as_slice().to_vec())
    }

    /// Closed-form marching solution of the upwind scheme.
    #[pyo3(signature = (b, a=1.0))]
    fn solve_march(&self, b: f64, a: f64) -> Vec<f64> {
        self.inner.solve_fom_march(&params(b, a)).as_slice().to_vec()
    }

    #[pyo3(signature = (w, b, a=1.0))]
    fn residual(&self, w: Vec<f64>, b: f64, a: f64) -> PyResult<Vec<f64>> {
        let r = self.inner.residual(&state(w), &params(b, a)).map_err(to_py)?;
        Ok(r.as_slice().to_vec())
    }

    fn functional(&self, w: Vec<f64>) -> PyResult<f64> {
        if w.len() != self.inner.num_nodes() {
            return Err(PyValueError::new_err(format!(
                "state has {} entries, grid has {} nodes",
                w.len(),
                self.inner.num_nodes()
            )));
        }
        Ok(self.inner.functional(&state(w)))
    }

    fn __repr__(&self) -> String {
        let (lo, hi) = self.inner.grid().domain();
        format!("BurgersModel(nodes={}, x_min={lo}, x_max={hi})", self.inner.num_nodes())
    }
}

/// Mean-centred POD basis.
#[pyclass(name = "PodBasis", module = "hrom_py", skip_from_py_object)]
#[derive(Clone)]
struct PyBasis {
    inner: hrom::PodBasis,
    snapshots: hrom::SnapshotSet,
}

#[pymethods]
impl PyBasis {
    /// Builds the basis from snapshot states and their `b` values.
    #[new]
    fn new(states: Vec<Vec<f64>>, bs: Vec<f64>) -> PyResult<Self> {
        if states.len() != bs.len() {
            return Err(PyValueError::new_err("need one b value per snapshot"));
        }
        let mut set = hrom::SnapshotSet::new();
        for (w, b) in states.into_iter().zip(bs) {
            set.push(vec![b], state(w)).map_err(to_py)?;
        }
        let inner = hrom::build_basis(&set).map_err(to_py)?;
        Ok(Self { inner, snapshots: set })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn singular_values(&self) -> Vec<f64> {
        self.inner.singular_values().to_vec()
    }

    fn project(&self, w: Vec<f64>) -> PyResult<Vec<f64>> {
        if w.len() != self.inner.full_dim() {
            return Err(PyValueError::new_err("state length differs from basis rows"));
        }
        Ok(self.inner.project(&state(w)).as_slice().to_vec())
    }

    fn reconstruct(&self, w_hat: Vec<f64>) -> PyResult<Vec<f64>> {
        if w_hat.len() != self.inner.dim() {
            return Err(PyValueError::new_err("reduced vector length differs from basis dimension"));
        }
        Ok(self.inner.reconstruct(&DVector::from_vec(w_hat)).as_slice().to_vec())
    }

    /// Basis columns as lists.
    fn columns(&self) -> Vec<Vec<f64>> {
        self.inner.v().column_iter().map(|c| c.iter().copied().collect()).collect()
    }

    fn orthonormality_defect(&self) -> f64 {
        self.inner.orthonormality_defect()
    }
}

/// ECSW reduced mesh: entity ids and positive weights.
#[pyclass(name = "ReducedMesh", module = "hrom_py", skip_from_py_object)]
#[derive(Clone)]
struct PyMesh {
    inner: hrom::ReducedMesh,
}

#[pymethods]
impl PyMesh {
    #[getter]
    fn entities(&self) -> Vec<usize> {
        self.inner.entities().to_vec()
    }

    #[getter]
    fn weights(&self) -> Vec<f64> {
        self.inner.weights().to_vec()
    }

    #[getter]
    fn achieved_ratio(&self) -> f64 {
        self.inner.achieved_ratio()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

/// Trains ECSW weights on every snapshot of `basis`.
#[pyfunction]
#[pyo3(signature = (model, basis, mode="jacobian", eps=1e-6))]
fn find_weights(model: &PyModel, basis: &PyBasis, mode: &str, eps: f64) -> PyResult<PyMesh> {
    let mode: hrom::TrainingMode = mode.parse().map_err(to_py)?;
    let subset: Vec<usize> = (0..basis.snapshots.len()).collect();
    let inner = hrom::find_weights(&model.inner, &basis.inner, &basis.snapshots, &subset, mode, eps).map_err(to_py)?;
    Ok(PyMesh { inner })
}

/// LSPG solve, hyperreduced when `mesh` is given. Returns a dict with
/// `w_tilde`, `w_hat`, `iterations`, `final_norm` and `functional`.
#[pyfunction]
#[pyo3(signature = (model, basis, b, a=1.0, mesh=None, tol=DEFAULT_ROM_TOL))]
fn solve_rom<'py>(
    py: Python<'py>,
    model: &PyModel,
    basis: &PyBasis,
    b: f64,
    a: f64,
    mesh: Option<&PyMesh>,
    tol: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let p = params(b, a);
    let seed = basis.snapshots.state(0);
    let sol = match mesh {
        Some(m) => hrom::solve_rom_hyper(&model.inner, &basis.inner, &m.inner, &p, Some(seed), tol),
        None => hrom::solve_rom_exact(&model.inner, &basis.inner, &p, Some(seed), tol),
    }
    .map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("functional", model.inner.functional(&sol.w_tilde))?;
    d.set_item("w_tilde", sol.w_tilde.as_slice().to_vec())?;
    d.set_item("w_hat", sol.w_hat.as_slice().to_vec())?;
    d.set_item("iterations", sol.iterations)?;
    d.set_item("final_norm", sol.final_norm)?;
    Ok(d)
}

/// Full-order DWR estimate of `J(w) - J(w_tilde)`.
#[pyfunction]
#[pyo3(signature = (model, w_tilde, b, a=1.0))]
fn epsilon_f(model: &PyModel, w_tilde: Vec<f64>, b: f64, a: f64) -> PyResult<f64> {
    hrom::epsilon_f(&model.inner, &state(w_tilde), &params(b, a)).map_err(to_py)
}

/// Coarse-to-fine DWR estimate on `fine`, hyperreduced when `mesh` is given.
#[pyfunction]
#[pyo3(signature = (model, fine, coarse, b, a=1.0, mesh=None))]
fn epsilon_r(model: &PyModel, fine: &PyBasis, coarse: Vec<f64>, b: f64, a: f64, mesh: Option<&PyMesh>) -> PyResult<f64> {
    let (w, p) = (state(coarse), params(b, a));
    match mesh {
        Some(m) => hrom::epsilon_r_hyper(&model.inner, &fine.inner, &m.inner, &w, &p),
        None => hrom::epsilon_r_exact(&model.inner, &fine.inner, &w, &p),
    }
    .map_err(to_py)
}

/// Lawson-Hanson NNLS stopped at `||Cx - d|| <= eps ||d||`. Returns `(x, relative residual)`.
#[pyfunction]
#[pyo3(signature = (c, d, eps, max_iter=None))]
fn nnls(c: Vec<Vec<f64>>, d: Vec<f64>, eps: f64, max_iter: Option<usize>) -> PyResult<(Vec<f64>, f64)> {
    let rows = c.len();
    let cols = c.first().map_or(0, Vec::len);
    if c.iter().any(|r| r.len() != cols) {
        return Err(PyValueError::new_err("ragged matrix"));
    }
    let m = DMatrix::from_fn(rows, cols, |i, j| c[i][j]);
    let dv = DVector::from_vec(d);
    let out = hrom::nnls_early_stop(&m, &dv, eps, max_iter.unwrap_or(10 * cols.max(1))).map_err(to_py)?;
    let rel = out.residual_norm / dv.norm().max(f64::MIN_POSITIVE);
    Ok((out.x.as_slice().to_vec(), rel))
}

/// Result of an adaptive or greedy sampling run.
#[pyclass(name = "SamplingRun", module = "hrom_py")]
struct PyRun {
    state: SamplerState,
}

#[pymethods]
impl PyRun {
    #[getter]
    fn mode(&self) -> &'static str {
        self.state.config.mode.as_str()
    }

    #[getter]
    fn cycles(&self) -> usize {
        self.state.cycle
    }

    #[getter]
    fn basis_dim(&self) -> usize {
        self.state.basis.dim()
    }

    #[getter]
    fn mesh_size(&self) -> usize {
        self.state.mesh.as_ref().map_or(0, |m| m.len())
    }

    #[getter]
    fn snapshots(&self) -> Vec<Vec<f64>> {
        self.state.snapshots.params().to_vec()
    }

    /// `(mu, estimated error)` at every ROM point.
    #[getter]
    fn rom_points(&self) -> Vec<(Vec<f64>, f64)> {
        self.state
            .points
            .iter()
            .map(|p| (p.record.mu.clone(), p.record.total()))
            .collect()
    }

    /// Cumulative work units per cycle.
    fn cumulative_work(&self) -> PyResult<Vec<i128>> {
        let l = self.state.work_ledger().map_err(to_py)?;
        Ok(l.cycles.iter().map(|c| c.cumulative).collect())
    }
}

fn load_config(config: Option<PathBuf>) -> PyResult<ExperimentConfig> {
    match config {
        Some(p) => ExperimentConfig::load(&p).map_err(to_py),
        None => Ok(ExperimentConfig::default()),
    }
}

/// Goal-oriented adaptive sampling (`mode` is rom, hrom or hrom-hyperdwr).
#[pyfunction]
#[pyo3(signature = (mode="rom", tol=1e-4, config=None))]
fn run_adaptive(py: Python<'_>, mode: &str, tol: f64, config: Option<PathBuf>) -> PyResult<PyRun> {
    let mut cfg = load_config(config)?;
    cfg.tol = tol;
    cfg.validate().map_err(to_py)?;
    let mode: SamplerMode = mode.parse().map_err(to_py)?;
    if mode == SamplerMode::Greedy {
        return Err(PyValueError::new_err("use run_greedy for the greedy baseline"));
    }
    let state = py
        .detach(|| -> hrom::Result<SamplerState> {
            let mut st = SamplerState::init(hrom::BurgersModel::new(cfg.grid()?), cfg.sampler_config(mode)?)?;
            st.run_adaptive()?;
            Ok(st)
        })
        .map_err(to_py)?;
    Ok(PyRun { state })
}

/// Greedy residual-norm sampling until about `work_budget` work units are spent.
#[pyfunction]
#[pyo3(signature = (work_budget, config=None))]
fn run_greedy(py: Python<'_>, work_budget: f64, config: Option<PathBuf>) -> PyResult<PyRun> {
    let cfg = load_config(config)?;
    let state = py
        .detach(|| -> hrom::Result<SamplerState> {
            let mut st = SamplerState::init(
                hrom::BurgersModel::new(cfg.grid()?),
                cfg.sampler_config(SamplerMode::Greedy)?,
            )?;
            st.run_greedy(work_budget, |_| Ok(()))?;
            Ok(st)
        })
        .map_err(to_py)?;
    Ok(PyRun { state })
}

/// Runs the verification study into `out`; returns one dict per model row.
#[pyfunction]
#[pyo3(signature = (out, config=None))]
fn verify<'py>(py: Python<'py>, out: PathBuf, config: Option<PathBuf>) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let cfg = load_config(config)?;
    let report = py.detach(|| experiment::cmd_verify(&cfg, &out)).map_err(to_py)?;
    report
        .rows
        .iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("model", &r.model)?;
            d.set_item("mesh_size", r.mesh_size)?;
            d.set_item("state_error", r.state_error)?;
            d.set_item("state_error_rel", r.state_error_rel)?;
            d.set_item("functional_error", r.functional_error)?;
            d.set_item("mean_rom_point_error", r.mean_rom_point_error)?;
            d.set_item("status", r.status)?;
            Ok(d)
        })
        .collect()
}

#[pymodule]
fn hrom_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyModel>()?;
    m.add_class::<PyBasis>()?;
    m.add_class::<PyMesh>()?;
    m.add_class::<PyRun>()?;
    m.add_function(wrap_pyfunction!(find_weights, m)?)?;
    m.add_function(wrap_pyfunction!(solve_rom, m)?)?;
    m.add_function(wrap_pyfunction!(epsilon_f, m)?)?;
    m.add_function(wrap_pyfunction!(epsilon_r, m)?)?;
    m.add_function(wrap_pyfunction!(nnls, m)?)?;
    m.add_function(wrap_pyfunction!(run_adaptive, m)?)?;
    m.add_function(wrap_pyfunction!(run_greedy, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    Ok(())
}
