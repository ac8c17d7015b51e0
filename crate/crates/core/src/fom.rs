//! Full-order model: steady 1D Burgers equation with an exponential source.
//!
//! The steady residual on interior node `j` is the first-order upwind form
//!
//! ```text
//! R_j(w) = (F(w_j) - F(w_{j-1})) / dx - a * exp(b * x_j),    F(u) = u^2 / 2
//! ```
//!
//! with the Dirichlet value `w_0 = 1` eliminated from the unknowns. Each
//! interior node is one mesh entity owning one DOF, with stencil `{j-1, j}`.

use std::fmt;
use std::io::{BufRead, Write};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, RomError};

/// Dirichlet value imposed at the inflow node.
pub const INFLOW_VALUE: f64 = 1.0;

pub const FOM_MAX_NEWTON: usize = 200;
pub const MAX_HALVINGS: usize = 30;
pub const DEFAULT_FOM_TOL: f64 = 1e-12;

/// Uniform nodal grid on `[x_lo, x_hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid1D {
    num_nodes: usize,
    x_lo: f64,
    x_hi: f64,
}

impl Grid1D {
    pub fn new(num_nodes: usize, x_lo: f64, x_hi: f64) -> Result<Self> {
        if num_nodes < 3 {
            return Err(RomError::Precondition(format!(
                "grid needs at least 3 nodes, got {num_nodes}"
            )));
        }
        if !(x_hi > x_lo) || !x_lo.is_finite() || !x_hi.is_finite() {
            return Err(RomError::Precondition(format!(
                "invalid grid domain [{x_lo}, {x_hi}]"
            )));
        }
        Ok(Self {
            num_nodes,
            x_lo,
            x_hi,
        })
    }

    /// The verification grid: 1024 nodes on `[0, 100]`.
    pub fn standard() -> Self {
        Self {
            num_nodes: 1024,
            x_lo: 0.0,
            x_hi: 100.0,
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    /// Number of mesh entities (interior nodes).
    pub fn num_entities(&self) -> usize {
        self.num_nodes - 1
    }

    pub fn dx(&self) -> f64 {
        (self.x_hi - self.x_lo) / (self.num_nodes - 1) as f64
    }

    pub fn x(&self, j: usize) -> f64 {
        self.x_lo + j as f64 * self.dx()
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.x_lo, self.x_hi)
    }

    /// Global DOF owned by entity `e`.
    pub fn own_dof(&self, e: usize) -> usize {
        e + 1
    }

    /// Global DOFs read by entity `e` (upwind neighbour first).
    pub fn stencil(&self, e: usize) -> [usize; 2] {
        [e, e + 1]
    }

    /// Number of DOFs owned per entity (`d_e`).
    pub fn dofs_per_entity(&self) -> usize {
        1
    }

    /// Number of DOFs in an entity stencil (`d_e+`).
    pub fn stencil_size(&self) -> usize {
        2
    }
}

/// Parameters of the exponential source `S(x) = amplitude * exp(b x)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BurgersParams {
    pub b: f64,
    pub amplitude: f64,
}

impl BurgersParams {
    pub fn new(b: f64) -> Self {
        Self { b, amplitude: 1.0 }
    }

    pub fn with_amplitude(b: f64, amplitude: f64) -> Self {
        Self { b, amplitude }
    }

    pub fn source(&self, x: f64) -> f64 {
        self.amplitude * (self.b * x).exp()
    }
}

impl fmt::Display for BurgersParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.amplitude == 1.0 {
            write!(f, "b={}", self.b)
        } else {
            write!(f, "b={}, a={}", self.b, self.amplitude)
        }
    }
}

/// Maps a parameter point to source parameters: `mu = [b]` or `mu = [b, a]`.
pub fn burgers_params(mu: &[f64]) -> BurgersParams {
    match mu {
        [b] => BurgersParams::new(*b),
        [b, a, ..] => BurgersParams::with_amplitude(*b, *a),
        [] => BurgersParams::new(f64::NAN),
    }
}

/// Nodal solution vector of length `N` (boundary node included).
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector(DVector<f64>);

impl StateVector {
    pub fn new(values: DVector<f64>) -> Self {
        Self(values)
    }

    pub fn constant(len: usize, value: f64) -> Self {
        Self(DVector::from_element(len, value))
    }

    pub fn from_vec(values: Vec<f64>) -> Self {
        Self(DVector::from_vec(values))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        self.0.as_slice()
    }

    pub fn vector(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DVector<f64> {
        self.0
    }

    /// One value per line, 17 significant digits.
    pub fn write_text<W: Write>(&self, mut out: W) -> Result<()> {
        for v in self.0.iter() {
            writeln!(out, "{v:.16e}")?;
        }
        Ok(())
    }

    pub fn read_text<R: BufRead>(input: R) -> Result<Self> {
        let mut values = Vec::new();
        for (lineno, line) in input.lines().enumerate() {
            let line = line?;
            let t = line.trim();
            if t.is_empty() {
                continue;
            }
            let v: f64 = t
                .parse()
                .map_err(|_| RomError::Parse(format!("line {}: bad value {t:?}", lineno + 1)))?;
            values.push(v);
        }
        Ok(Self::from_vec(values))
    }
}

impl From<DVector<f64>> for StateVector {
    fn from(v: DVector<f64>) -> Self {
        Self(v)
    }
}

/// Per-entity evaluation counters.
#[derive(Debug)]
pub struct EvalTrace {
    residual: Vec<AtomicU64>,
    jacobian: Vec<AtomicU64>,
}

impl EvalTrace {
    pub fn new(num_entities: usize) -> Self {
        Self {
            residual: (0..num_entities).map(|_| AtomicU64::new(0)).collect(),
            jacobian: (0..num_entities).map(|_| AtomicU64::new(0)).collect(),
        }
    }

    pub fn reset(&self) {
        for c in self.residual.iter().chain(self.jacobian.iter()) {
            c.store(0, Ordering::Relaxed);
        }
    }

    pub fn residual_count(&self, e: usize) -> u64 {
        self.residual[e].load(Ordering::Relaxed)
    }

    pub fn jacobian_count(&self, e: usize) -> u64 {
        self.jacobian[e].load(Ordering::Relaxed)
    }

    /// Entities with at least one residual or Jacobian evaluation.
    pub fn touched(&self) -> Vec<usize> {
        (0..self.residual.len())
            .filter(|&e| self.residual_count(e) > 0 || self.jacobian_count(e) > 0)
            .collect()
    }

    pub fn total_evaluations(&self) -> u64 {
        self.residual
            .iter()
            .chain(self.jacobian.iter())
            .map(|c| c.load(Ordering::Relaxed))
            .sum()
    }
}

/// Lower-bidiagonal Jacobian of the interior residual.
///
/// Row `e` holds `dR_e/dw_e` in `lower[e]` and `dR_e/dw_{e+1}` in `diag[e]`,
/// where `w` is indexed over all `N` nodes. `lower[0]` is the derivative with
/// respect to the Dirichlet node and does not enter unknown-space solves.
#[derive(Debug, Clone, PartialEq)]
pub struct BidiagonalJacobian {
    pub lower: Vec<f64>,
    pub diag: Vec<f64>,
}

impl BidiagonalJacobian {
    pub fn rows(&self) -> usize {
        self.diag.len()
    }

    fn check_pivots(&self) -> Result<()> {
        let max = self.diag.iter().fold(0.0f64, |m, d| m.max(d.abs()));
        let min = self.diag.iter().fold(f64::INFINITY, |m, d| m.min(d.abs()));
        if !(min > 0.0) || !min.is_finite() {
            return Err(RomError::Singular {
                what: "full-order Jacobian",
                condition: if min > 0.0 { max / min } else { f64::INFINITY },
            });
        }
        Ok(())
    }

    /// Solves `J x = rhs` over the interior unknowns.
    pub fn solve(&self, rhs: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_pivots()?;
        let n = self.rows();
        let mut x = DVector::zeros(n);
        for e in 0..n {
            let mut v = rhs[e];
            if e > 0 {
                v -= self.lower[e] * x[e - 1];
            }
            x[e] = v / self.diag[e];
        }
        Ok(x)
    }

    /// Solves `J^T x = rhs` over the interior unknowns.
    pub fn solve_transpose(&self, rhs: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_pivots()?;
        let n = self.rows();
        let mut x = DVector::zeros(n);
        for e in (0..n).rev() {
            let mut v = rhs[e];
            if e + 1 < n {
                v -= self.lower[e + 1] * x[e + 1];
            }
            x[e] = v / self.diag[e];
        }
        Ok(x)
    }

    /// `J^T y` restricted to the interior unknowns.
    pub fn transpose_mul(&self, y: &DVector<f64>) -> DVector<f64> {
        let n = self.rows();
        DVector::from_fn(n, |e, _| {
            let mut v = self.diag[e] * y[e];
            if e + 1 < n {
                v += self.lower[e + 1] * y[e + 1];
            }
            v
        })
    }

    /// `J M` for a matrix with `N` rows indexed over all nodes.
    pub fn mul_full(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        let n = self.rows();
        let cols = m.ncols();
        DMatrix::from_fn(n, cols, |e, c| self.lower[e] * m[(e, c)] + self.diag[e] * m[(e + 1, c)])
    }

    /// Dense `(N-1) x N` form, for tests and small problems.
    pub fn to_dense_full(&self) -> DMatrix<f64> {
        let n = self.rows();
        let mut a = DMatrix::zeros(n, n + 1);
        for e in 0..n {
            a[(e, e)] = self.lower[e];
            a[(e, e + 1)] = self.diag[e];
        }
        a
    }
}

/// Result of a full-order Newton solve.
#[derive(Debug, Clone)]
pub struct FomSolution {
    pub state: StateVector,
    pub iterations: usize,
    pub residual_norm: f64,
}

/// The discretized Burgers model. Cheap to clone; the optional trace is shared.
#[derive(Debug, Clone)]
pub struct BurgersModel {
    grid: Grid1D,
    trace: Option<Arc<EvalTrace>>,
}

impl BurgersModel {
    pub fn new(grid: Grid1D) -> Self {
        Self { grid, trace: None }
    }

    /// A copy of this model that records every element evaluation.
    pub fn traced(&self) -> (Self, Arc<EvalTrace>) {
        let trace = Arc::new(EvalTrace::new(self.grid.num_entities()));
        (
            Self {
                grid: self.grid,
                trace: Some(trace.clone()),
            },
            trace,
        )
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn num_nodes(&self) -> usize {
        self.grid.num_nodes
    }

    pub fn num_entities(&self) -> usize {
        self.grid.num_entities()
    }

    fn check_entity(&self, e: usize) -> Result<()> {
        if e >= self.num_entities() {
            return Err(RomError::Index {
                index: e,
                len: self.num_entities(),
            });
        }
        Ok(())
    }

    /// `R_e = (F(w_j) - F(w_{j-1}))/dx - S(x_j)`, `j = e + 1`.
    pub fn element_residual(&self, w: &[f64], e: usize, params: &BurgersParams) -> Result<f64> {
        self.check_entity(e)?;
        if let Some(t) = &self.trace {
            t.residual[e].fetch_add(1, Ordering::Relaxed);
        }
        let j = e + 1;
        let dx = self.grid.dx();
        let flux = |u: f64| 0.5 * u * u;
        Ok((flux(w[j]) - flux(w[j - 1])) / dx - params.source(self.grid.x(j)))
    }

    /// Sum of magnitudes of the terms in `R_e`; rounding error in `R_e` is
    /// about machine epsilon times this. Not traced: it reads no new data.
    pub fn element_residual_scale(&self, w: &[f64], e: usize, params: &BurgersParams) -> Result<f64> {
        self.check_entity(e)?;
        let j = e + 1;
        let flux = |u: f64| 0.5 * u * u;
        Ok((flux(w[j]) + flux(w[j - 1])) / self.grid.dx() + params.source(self.grid.x(j)).abs())
    }

    /// `(dR_e/dw_{j-1}, dR_e/dw_j)`.
    pub fn element_jacobian(&self, w: &[f64], e: usize, _params: &BurgersParams) -> Result<[f64; 2]> {
        self.check_entity(e)?;
        if let Some(t) = &self.trace {
            t.jacobian[e].fetch_add(1, Ordering::Relaxed);
        }
        let j = e + 1;
        let dx = self.grid.dx();
        Ok([-w[j - 1] / dx, w[j] / dx])
    }

    fn check_state(&self, w: &[f64]) -> Result<()> {
        if w.len() != self.num_nodes() {
            return Err(RomError::Dimension(format!(
                "state has length {}, grid has {} nodes",
                w.len(),
                self.num_nodes()
            )));
        }
        Ok(())
    }

    /// Global residual over interior entities (scatter-sum of element residuals).
    pub fn residual(&self, w: &StateVector, params: &BurgersParams) -> Result<DVector<f64>> {
        let w = w.as_slice();
        self.check_state(w)?;
        let ne = self.num_entities();
        let mut r = DVector::zeros(ne);
        for e in 0..ne {
            r[self.grid.own_dof(e) - 1] += self.element_residual(w, e, params)?;
        }
        Ok(r)
    }

    pub fn jacobian(&self, w: &StateVector, params: &BurgersParams) -> Result<BidiagonalJacobian> {
        let w = w.as_slice();
        self.check_state(w)?;
        let ne = self.num_entities();
        let mut lower = vec![0.0; ne];
        let mut diag = vec![0.0; ne];
        for e in 0..ne {
            let [l, d] = self.element_jacobian(w, e, params)?;
            lower[e] = l;
            diag[e] = d;
        }
        Ok(BidiagonalJacobian { lower, diag })
    }

    /// Norm of the source term over interior nodes; the scale for FOM convergence.
    pub fn source_norm(&self, params: &BurgersParams) -> f64 {
        (1..self.num_nodes())
            .map(|j| params.source(self.grid.x(j)).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// Initial guess `w = 1` everywhere.
    pub fn uniform_state(&self) -> StateVector {
        StateVector::constant(self.num_nodes(), INFLOW_VALUE)
    }

    /// Newton solve with backtracking on `||R||_2`.
    ///
    /// Converged when `||R||_2 <= tol * ||S||_2`.
    pub fn solve_fom(
        &self,
        params: &BurgersParams,
        init: Option<&StateVector>,
        tol: f64,
    ) -> Result<FomSolution> {
        if !(tol > 0.0) {
            return Err(RomError::Precondition(format!("tolerance must be positive, got {tol}")));
        }
        let mut w = match init {
            Some(s) => {
                self.check_state(s.as_slice())?;
                s.vector().clone()
            }
            None => self.uniform_state().into_inner(),
        };
        w[0] = INFLOW_VALUE;
        let target = tol * self.source_norm(params).max(1.0);

        let mut state = StateVector(w);
        let mut r = self.residual(&state, params)?;
        let mut norm = r.norm();
        for iter in 0..FOM_MAX_NEWTON {
            if norm <= target {
                return Ok(FomSolution {
                    state,
                    iterations: iter,
                    residual_norm: norm,
                });
            }
            let jac = self.jacobian(&state, params)?;
            let step = jac.solve(&(-&r))?;
            let mut alpha = 1.0;
            let mut accepted = None;
            for _ in 0..=MAX_HALVINGS {
                let mut trial = state.0.clone();
                for (k, s) in step.iter().enumerate() {
                    trial[k + 1] += alpha * s;
                }
                let trial = StateVector(trial);
                let r_trial = self.residual(&trial, params)?;
                let n_trial = r_trial.norm();
                if n_trial < norm {
                    accepted = Some((trial, r_trial, n_trial));
                    break;
                }
                alpha *= 0.5;
            }
            match accepted {
                Some((s, rr, nn)) => {
                    state = s;
                    r = rr;
                    norm = nn;
                }
                None => {
                    return Err(RomError::NonConvergence {
                        solver: "FOM Newton (line search)",
                        iterations: iter,
                        final_norm: norm,
                    })
                }
            }
        }
        if norm <= target {
            return Ok(FomSolution {
                state,
                iterations: FOM_MAX_NEWTON,
                residual_norm: norm,
            });
        }
        Err(RomError::NonConvergence {
            solver: "FOM Newton",
            iterations: FOM_MAX_NEWTON,
            final_norm: norm,
        })
    }

    /// Exact root of the upwind stencil by forward marching:
    /// `w_j = sqrt(w_{j-1}^2 + 2 dx S(x_j))`.
    pub fn solve_fom_march(&self, params: &BurgersParams) -> StateVector {
        let n = self.num_nodes();
        let dx = self.grid.dx();
        let mut w = DVector::zeros(n);
        w[0] = INFLOW_VALUE;
        for j in 1..n {
            w[j] = (w[j - 1] * w[j - 1] + 2.0 * dx * params.source(self.grid.x(j))).sqrt();
        }
        StateVector(w)
    }

    /// Right-endpoint rectangle rule `dx * sum_{j>=1} w_j`; exact for constants.
    pub fn functional(&self, w: &StateVector) -> f64 {
        self.grid.dx() * w.0.rows(1, w.len() - 1).sum()
    }

    /// Gradient of the functional over all `N` nodes: `dx` on every unknown,
    /// zero on the Dirichlet node.
    pub fn functional_gradient(&self) -> DVector<f64> {
        let mut g = DVector::from_element(self.num_nodes(), self.grid.dx());
        g[0] = 0.0;
        g
    }
}
