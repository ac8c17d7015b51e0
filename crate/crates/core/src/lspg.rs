//! Least-squares Petrov-Galerkin reduced solves, exact and hyperreduced.
//!
//! Each Gauss-Newton iteration solves the normal equations
//! `[W^T W] p = -W^T R` with `W = (dR/dw) V`. In hyperreduced mode the
//! residual and Jacobian are evaluated only on the reduced mesh, giving
//! `W~ = sum_e xi_e L_e^T J_e L_e+ V` and `R~ = sum_e xi_e W~^T L_e^T R_e`.

use nalgebra::{DMatrix, DVector};

use crate::ecsw::ReducedMesh;
use crate::error::{Result, RomError};
use crate::fom::{BurgersModel, BurgersParams, StateVector, MAX_HALVINGS};
use crate::pod::PodBasis;

pub const DEFAULT_ROM_TOL: f64 = 1e-13;
/// Relative Gauss-Newton step below which the iteration counts as converged.
pub const ROM_STEP_TOL: f64 = 1e-14;
/// Relative step size at which a failed line search still counts as stationary.
pub const ROM_STALL_TOL: f64 = 1e-9;
/// Relative noise floor of the objective. Residual entries lose about
/// `eps * w^2 / dx` to cancellation, which squares into roughly 1e-9 relative.
const OBJECTIVE_ROUNDOFF: f64 = 1e-8;
/// Multiple of the estimated rounding level of `W^T R` that counts as converged.
pub const ROM_NOISE_FACTOR: f64 = 10.0;
pub const ROM_MAX_NEWTON: usize = 100;

/// Which entities (and weights) the reduced quantities are integrated over.
#[derive(Debug, Clone, Copy)]
pub enum Quadrature<'a> {
    /// Global residual and Jacobian over every entity.
    Full,
    /// Weighted sum over the reduced mesh only.
    Reduced(&'a ReducedMesh),
}

/// Reduced residual, normal matrix and test basis at one state.
#[derive(Debug, Clone)]
pub struct ReducedSystem {
    /// `W^T R` (exact) or `R~` (hyperreduced), length `n`.
    pub residual: DVector<f64>,
    /// `W^T W`, `n x n`.
    pub normal: DMatrix<f64>,
    /// Test basis, `N_e x n`; in hyperreduced mode rows outside the mesh are zero.
    pub test_basis: DMatrix<f64>,
    /// Least-squares objective: `||R||^2`, or `sum_e xi_e^2 R_e^2` over the mesh.
    pub objective: f64,
    /// Estimated rounding error in `residual` from cancellation inside each `R_e`.
    pub noise: f64,
}

/// Per-node rounding in `w = w_ref + V w_hat`: machine epsilon times the sum
/// of magnitudes of the terms.
fn state_rounding(basis: &PodBasis, w: &StateVector) -> DVector<f64> {
    let w_hat = basis.project(w).abs();
    (basis.w_ref().abs() + basis.v().abs() * w_hat) * f64::EPSILON
}

/// Assembles the reduced LSPG quantities at an arbitrary full-order state.
pub fn assemble_reduced(
    model: &BurgersModel,
    basis: &PodBasis,
    quad: Quadrature<'_>,
    w: &StateVector,
    params: &BurgersParams,
) -> Result<ReducedSystem> {
    if basis.full_dim() != model.num_nodes() || w.len() != model.num_nodes() {
        return Err(RomError::Dimension(format!(
            "basis rows {}, state length {}, grid nodes {}",
            basis.full_dim(),
            w.len(),
            model.num_nodes()
        )));
    }
    match quad {
        Quadrature::Full => {
            let r = model.residual(w, params)?;
            let jac = model.jacobian(w, params)?;
            let test_basis = jac.mul_full(basis.v());
            let dw = state_rounding(basis, w);
            let mut noise = 0.0;
            for e in 0..model.num_entities() {
                let [j0, j1] = model.grid().stencil(e);
                let s = f64::EPSILON * model.element_residual_scale(w.as_slice(), e, params)?
                    + jac.lower[e].abs() * dw[j0]
                    + jac.diag[e].abs() * dw[j1];
                noise += s * s * test_basis.row(e).norm_squared();
            }
            Ok(ReducedSystem {
                residual: test_basis.tr_mul(&r),
                normal: test_basis.tr_mul(&test_basis),
                test_basis,
                objective: r.norm_squared(),
                noise: noise.sqrt(),
            })
        }
        Quadrature::Reduced(mesh) => {
            if mesh.is_empty() {
                return Err(RomError::Precondition("reduced mesh is empty".into()));
            }
            let n = basis.dim();
            let v = basis.v();
            let ws = w.as_slice();
            // mesh rows gathered densely so the products match the exact path when xi = 1
            let mut rows = DMatrix::zeros(mesh.len(), n);
            let mut weighted = DVector::zeros(mesh.len());
            let dw = state_rounding(basis, w);
            let mut noise = 0.0;
            for (k, (e, xi)) in mesh.iter().enumerate() {
                let r_e = model.element_residual(ws, e, params)?;
                let [lo, di] = model.element_jacobian(ws, e, params)?;
                let [j0, j1] = model.grid().stencil(e);
                for c in 0..n {
                    rows[(k, c)] = xi * (lo * v[(j0, c)] + di * v[(j1, c)]);
                }
                weighted[k] = xi * r_e;
                let s = f64::EPSILON * model.element_residual_scale(ws, e, params)? + lo.abs() * dw[j0] + di.abs() * dw[j1];
                noise += (xi * s).powi(2) * rows.row(k).norm_squared();
            }
            let mut test_basis = DMatrix::zeros(model.num_entities(), n);
            for (k, &e) in mesh.entities().iter().enumerate() {
                test_basis.set_row(e, &rows.row(k));
            }
            let residual = rows.tr_mul(&weighted);
            let normal = rows.tr_mul(&rows);
            let objective = weighted.norm_squared();
            Ok(ReducedSystem {
                residual,
                normal,
                test_basis,
                objective,
                noise: noise.sqrt(),
            })
        }
    }
}

/// `R~ = sum_{e in E~} xi_e W~^T L_e^T R_e` at `w`.
pub fn reduced_residual(
    model: &BurgersModel,
    basis: &PodBasis,
    mesh: &ReducedMesh,
    w: &StateVector,
    params: &BurgersParams,
) -> Result<DVector<f64>> {
    Ok(assemble_reduced(model, basis, Quadrature::Reduced(mesh), w, params)?.residual)
}

/// Converged (or best) reduced-order solution.
#[derive(Debug, Clone)]
pub struct RomSolution {
    pub w_hat: DVector<f64>,
    pub w_tilde: StateVector,
    pub converged: bool,
    pub iterations: usize,
    pub final_norm: f64,
    /// Reduced-residual norm at the start of each accepted iterate.
    pub norm_history: Vec<f64>,
}

/// Solves `n x n` SPD normal equations by Cholesky, with LU as fallback.
pub(crate) fn solve_normal(a: &DMatrix<f64>, rhs: &DVector<f64>, what: &'static str) -> Result<DVector<f64>> {
    if let Some(ch) = a.clone().cholesky() {
        let x = ch.solve(rhs);
        if x.iter().all(|v| v.is_finite()) {
            return Ok(x);
        }
    }
    let lu = a.clone().lu();
    match lu.solve(rhs) {
        Some(x) if x.iter().all(|v| v.is_finite()) => Ok(x),
        _ => Err(RomError::Singular {
            what,
            condition: condition_estimate(a),
        }),
    }
}

/// 2-norm condition number from the singular values.
pub(crate) fn condition_estimate(a: &DMatrix<f64>) -> f64 {
    let sv = a.clone().singular_values();
    let max = sv.max();
    let min = sv.min();
    if min > 0.0 {
        max / min
    } else {
        f64::INFINITY
    }
}

/// LSPG Gauss-Newton with backtracking on the least-squares objective.
///
/// Converged when `||g|| <= tol * ||W_0||_F * max(1, ||S||)`, where `g` is the
/// reduced residual and `W_0` the test basis at the initial guess, or when
/// `||g||` is within [`ROM_NOISE_FACTOR`] of its own rounding level.
pub fn solve_rom(
    model: &BurgersModel,
    basis: &PodBasis,
    quad: Quadrature<'_>,
    params: &BurgersParams,
    init: Option<&StateVector>,
    tol: f64,
) -> Result<RomSolution> {
    if basis.dim() == 0 {
        return Err(RomError::EmptyBasis);
    }
    if !(tol > 0.0) {
        return Err(RomError::Precondition(format!("tolerance must be positive, got {tol}")));
    }
    let mut w_hat = match init {
        Some(w0) => basis.project(w0),
        None => DVector::zeros(basis.dim()),
    };
    let mut w_tilde = basis.reconstruct(&w_hat);
    let mut sys = assemble_reduced(model, basis, quad, &w_tilde, params)?;
    let mut norm = sys.residual.norm();
    let target = tol * sys.test_basis.norm() * model.source_norm(params).max(1.0);
    let mut history = Vec::new();

    for iter in 0..=ROM_MAX_NEWTON {
        history.push(norm);
        // below the rounding level of the reduced residual no step can help
        if norm <= target.max(ROM_NOISE_FACTOR * sys.noise) {
            return Ok(RomSolution {
                w_hat,
                w_tilde,
                converged: true,
                iterations: iter,
                final_norm: norm,
                norm_history: history,
            });
        }
        if iter == ROM_MAX_NEWTON {
            break;
        }
        let step = solve_normal(&sys.normal, &(-&sys.residual), "reduced LSPG system")?;
        if step.norm() <= ROM_STEP_TOL * (1.0 + w_hat.norm()) {
            return Ok(RomSolution {
                w_hat,
                w_tilde,
                converged: true,
                iterations: iter,
                final_norm: norm,
                norm_history: history,
            });
        }
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let trial_hat = &w_hat + alpha * &step;
            let trial = basis.reconstruct(&trial_hat);
            let trial_sys = assemble_reduced(model, basis, quad, &trial, params)?;
            let trial_norm = trial_sys.residual.norm();
            // at the objective's roundoff floor fall back to the gradient norm
            let flat = trial_sys.objective <= sys.objective * (1.0 + OBJECTIVE_ROUNDOFF);
            if trial_sys.objective < sys.objective || (flat && trial_norm < norm) {
                accepted = Some((trial_hat, trial, trial_sys, trial_norm));
                break;
            }
            alpha *= 0.5;
        }
        match accepted {
            Some((h, t, s, nn)) => {
                w_hat = h;
                w_tilde = t;
                sys = s;
                norm = nn;
            }
            // no decrease left at roundoff level: the iterate is stationary
            None if step.norm() <= ROM_STALL_TOL * (1.0 + w_hat.norm()) => {
                return Ok(RomSolution {
                    w_hat,
                    w_tilde,
                    converged: true,
                    iterations: iter,
                    final_norm: norm,
                    norm_history: history,
                });
            }
            None => {
                return Err(RomError::NonConvergence {
                    solver: "LSPG line search",
                    iterations: iter,
                    final_norm: norm,
                })
            }
        }
    }
    Err(RomError::NonConvergence {
        solver: "LSPG Gauss-Newton",
        iterations: ROM_MAX_NEWTON,
        final_norm: norm,
    })
}

/// Exact-mode LSPG solve over the full mesh.
pub fn solve_rom_exact(
    model: &BurgersModel,
    basis: &PodBasis,
    params: &BurgersParams,
    init: Option<&StateVector>,
    tol: f64,
) -> Result<RomSolution> {
    solve_rom(model, basis, Quadrature::Full, params, init, tol)
}

/// Hyperreduced LSPG solve; evaluates elements on the reduced mesh only.
pub fn solve_rom_hyper(
    model: &BurgersModel,
    basis: &PodBasis,
    mesh: &ReducedMesh,
    params: &BurgersParams,
    init: Option<&StateVector>,
    tol: f64,
) -> Result<RomSolution> {
    if mesh.is_empty() {
        return Err(RomError::Precondition("reduced mesh is empty".into()));
    }
    if mesh.weights().iter().any(|&x| !(x > 0.0)) {
        return Err(RomError::Precondition("reduced mesh weights must be positive".into()));
    }
    solve_rom(model, basis, Quadrature::Reduced(mesh), params, init, tol)
}

impl RomSolution {
    /// CSV row: `mu..., n, iterations, final_norm, J`.
    pub fn csv_record(&self, mu: &[f64], functional: f64) -> Vec<String> {
        let mut row: Vec<String> = mu.iter().map(|m| format!("{m:.10e}")).collect();
        row.push(self.w_hat.len().to_string());
        row.push(self.iterations.to_string());
        row.push(format!("{:.10e}", self.final_norm));
        row.push(format!("{functional:.16e}"));
        row
    }
}
