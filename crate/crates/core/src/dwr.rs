//! Dual-weighted residual error indicators.
//!
//! `eps_f` estimates `J(w) - J(w~)` between the full-order and reduced
//! solutions from a full-order adjoint. `eps_r` estimates `J(w~_H) - J(w~_h)`
//! between a coarse reduced solution and the (unknown) solution on a finer
//! basis, from a reduced adjoint linearised at `w~_H`. With a reduced mesh the
//! adjoint operator is `W~_h^T W~_h`, assembled over the mesh only; test-basis
//! derivative terms are dropped.

use nalgebra::DVector;

use crate::ecsw::ReducedMesh;
use crate::error::{Result, RomError};
use crate::fom::{BurgersModel, BurgersParams, StateVector};
use crate::lspg::{assemble_reduced, condition_estimate, solve_normal, Quadrature};
use crate::pod::{ParamPoint, PodBasis};

/// Adjoint vector with its linear-system residual.
#[derive(Debug, Clone)]
pub struct AdjointSolution {
    /// Full-order (length `N - 1`, interior unknowns) or reduced (length `n`).
    pub psi: DVector<f64>,
    /// `||A^T psi - rhs|| / ||rhs||`.
    pub relative_residual: f64,
}

/// Solves `(dR/dw)^T psi = -(dJ/dw)^T` at `w`, over interior unknowns.
pub fn fom_adjoint(model: &BurgersModel, w: &StateVector, params: &BurgersParams) -> Result<AdjointSolution> {
    let jac = model.jacobian(w, params)?;
    let grad = model.functional_gradient();
    let rhs = -grad.rows(1, grad.len() - 1).into_owned();
    let psi = jac.solve_transpose(&rhs)?;
    let check = (jac.transpose_mul(&psi) - &rhs).norm() / rhs.norm().max(f64::MIN_POSITIVE);
    Ok(AdjointSolution {
        psi,
        relative_residual: check,
    })
}

/// Full-order DWR estimate of `J(w) - J(w~)` at a reduced solution `w~`.
///
/// With the adjoint defined by `(dR/dw)^T psi = -(dJ/dw)^T`, the first-order
/// error is `psi^T R(w~)`.
pub fn epsilon_f(model: &BurgersModel, w_tilde: &StateVector, params: &BurgersParams) -> Result<f64> {
    let adj = fom_adjoint(model, w_tilde, params)?;
    let r = model.residual(w_tilde, params)?;
    Ok(adj.psi.dot(&r))
}

/// Reduced adjoint on the fine basis at the coarse solution, with its reduced residual.
pub fn reduced_adjoint(
    model: &BurgersModel,
    fine_basis: &PodBasis,
    quad: Quadrature<'_>,
    coarse: &StateVector,
    params: &BurgersParams,
) -> Result<(AdjointSolution, DVector<f64>)> {
    let sys = assemble_reduced(model, fine_basis, quad, coarse, params)?;
    let grad_hat = fine_basis.v().tr_mul(&model.functional_gradient());
    let rhs = -grad_hat;
    let a_t = sys.normal.transpose();
    let psi = solve_normal(&a_t, &rhs, "reduced dual system").map_err(|e| match e {
        RomError::Singular { what, .. } => RomError::Singular {
            what,
            condition: condition_estimate(&a_t),
        },
        other => other,
    })?;
    let check = (&a_t * &psi - &rhs).norm() / rhs.norm().max(f64::MIN_POSITIVE);
    Ok((
        AdjointSolution {
            psi,
            relative_residual: check,
        },
        sys.residual,
    ))
}

/// Hyperreduced coarse-to-fine estimate `-psi~_h^T R~_h(w~_H)`.
pub fn epsilon_r_hyper(
    model: &BurgersModel,
    fine_basis: &PodBasis,
    fine_mesh: &ReducedMesh,
    coarse: &StateVector,
    params: &BurgersParams,
) -> Result<f64> {
    if fine_mesh.is_empty() {
        return Err(RomError::Precondition("reduced mesh is empty".into()));
    }
    let (adj, r) = reduced_adjoint(model, fine_basis, Quadrature::Reduced(fine_mesh), coarse, params)?;
    Ok(-adj.psi.dot(&r))
}

/// Coarse-to-fine estimate with exact (full-mesh) reduced quantities.
pub fn epsilon_r_exact(
    model: &BurgersModel,
    fine_basis: &PodBasis,
    coarse: &StateVector,
    params: &BurgersParams,
) -> Result<f64> {
    let (adj, r) = reduced_adjoint(model, fine_basis, Quadrature::Full, coarse, params)?;
    Ok(-adj.psi.dot(&r))
}

/// Error estimate held at one ROM probing point.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorRecord {
    pub mu: ParamPoint,
    /// Full-order estimate, set when the point's solution is (re)computed.
    pub eps_f: f64,
    /// Latest coarse-to-fine estimate against the current basis.
    pub eps_r: f64,
    pub created_cycle: usize,
    pub updated_cycle: usize,
}

impl ErrorRecord {
    pub fn new(mu: ParamPoint, eps_f: f64, cycle: usize) -> Self {
        Self {
            mu,
            eps_f,
            eps_r: 0.0,
            created_cycle: cycle,
            updated_cycle: cycle,
        }
    }

    pub fn total(&self) -> f64 {
        self.eps_f + self.eps_r
    }
}
