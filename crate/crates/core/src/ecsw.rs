//! Energy-conserving sampling and weighting: training data and reduced mesh.
//!
//! Column `e` of the training matrix `C` stacks the contribution of entity
//! `e` to a projected quantity for every training snapshot; `d = C 1` is the
//! unweighted sum. A sparse non-negative `xi` with `||C xi - d|| <= eps ||d||`
//! defines the reduced mesh.

use std::fmt;
use std::io::{BufRead, Write};
use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, RomError};
use crate::fom::{burgers_params, BurgersModel};
use crate::nnls::nnls_early_stop;
use crate::pod::{PodBasis, SnapshotSet};

/// Which projected quantity the training data reproduces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TrainingMode {
    Residual,
    Jacobian,
}

impl TrainingMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            TrainingMode::Residual => "residual",
            TrainingMode::Jacobian => "jacobian",
        }
    }
}

impl fmt::Display for TrainingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for TrainingMode {
    type Err = RomError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "residual" | "res" => Ok(TrainingMode::Residual),
            "jacobian" | "jac" => Ok(TrainingMode::Jacobian),
            other => Err(RomError::Config(format!("unknown training mode {other:?}"))),
        }
    }
}

/// Reduced mesh: entity ids with strictly positive weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedMesh {
    entities: Vec<usize>,
    weights: Vec<f64>,
    achieved_ratio: f64,
    mode: TrainingMode,
    tolerance: f64,
}

impl ReducedMesh {
    pub fn new(entities: Vec<usize>, weights: Vec<f64>, mode: TrainingMode) -> Result<Self> {
        if entities.len() != weights.len() {
            return Err(RomError::Dimension(format!(
                "{} entities but {} weights",
                entities.len(),
                weights.len()
            )));
        }
        if weights.iter().any(|&w| !(w > 0.0) || !w.is_finite()) {
            return Err(RomError::Precondition("reduced-mesh weights must be positive and finite".into()));
        }
        if entities.windows(2).any(|p| p[0] >= p[1]) {
            return Err(RomError::Precondition("reduced-mesh entities must be strictly increasing".into()));
        }
        Ok(Self {
            entities,
            weights,
            achieved_ratio: f64::NAN,
            mode,
            tolerance: f64::NAN,
        })
    }

    /// Every entity with unit weight (exact quadrature).
    pub fn full(num_entities: usize, mode: TrainingMode) -> Self {
        Self {
            entities: (0..num_entities).collect(),
            weights: vec![1.0; num_entities],
            achieved_ratio: 0.0,
            mode,
            tolerance: 0.0,
        }
    }

    pub fn with_certificate(mut self, achieved_ratio: f64, tolerance: f64) -> Self {
        self.achieved_ratio = achieved_ratio;
        self.tolerance = tolerance;
        self
    }

    pub fn len(&self) -> usize {
        self.entities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
    }

    pub fn entities(&self) -> &[usize] {
        &self.entities
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.entities.iter().copied().zip(self.weights.iter().copied())
    }

    pub fn achieved_ratio(&self) -> f64 {
        self.achieved_ratio
    }

    pub fn mode(&self) -> TrainingMode {
        self.mode
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    /// Dense weight vector over all entities (zero off the mesh).
    pub fn dense_weights(&self, num_entities: usize) -> DVector<f64> {
        let mut xi = DVector::zeros(num_entities);
        for (e, w) in self.iter() {
            xi[e] = w;
        }
        xi
    }

    /// Header comment lines then `entity_id,weight` rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# mode={}", self.mode)?;
        writeln!(out, "# epsilon={:.6e}", self.tolerance)?;
        writeln!(out, "# achieved_ratio={:.6e}", self.achieved_ratio)?;
        writeln!(out, "entity_id,weight")?;
        for (e, w) in self.iter() {
            writeln!(out, "{e},{w:.17e}")?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut mode = None;
        let mut eps = f64::NAN;
        let mut ratio = f64::NAN;
        let mut entities = Vec::new();
        let mut weights = Vec::new();
        let mut saw_header = false;
        for line in input.lines() {
            let line = line?;
            let t = line.trim();
            if t.is_empty() {
                continue;
            }
            if let Some(meta) = t.strip_prefix('#') {
                if let Some((k, v)) = meta.split_once('=') {
                    match k.trim() {
                        "mode" => mode = Some(v.parse::<TrainingMode>()?),
                        "epsilon" => eps = v.trim().parse().unwrap_or(f64::NAN),
                        "achieved_ratio" => ratio = v.trim().parse().unwrap_or(f64::NAN),
                        _ => {}
                    }
                }
                continue;
            }
            if !saw_header {
                if t != "entity_id,weight" {
                    return Err(RomError::Parse(format!("unexpected reduced-mesh header {t:?}")));
                }
                saw_header = true;
                continue;
            }
            let (e, w) = t
                .split_once(',')
                .ok_or_else(|| RomError::Parse(format!("bad reduced-mesh row {t:?}")))?;
            entities.push(e.trim().parse().map_err(|_| RomError::Parse(format!("bad entity {e:?}")))?);
            weights.push(w.trim().parse().map_err(|_| RomError::Parse(format!("bad weight {w:?}")))?);
        }
        let mode = mode.ok_or_else(|| RomError::Parse("reduced-mesh file lacks mode header".into()))?;
        Ok(Self::new(entities, weights, mode)?.with_certificate(ratio, eps))
    }
}

/// Training matrix `C`, right-hand side `d = C 1`, and its provenance.
#[derive(Debug, Clone)]
pub struct TrainingSystem {
    pub c: DMatrix<f64>,
    pub d: DVector<f64>,
    pub mode: TrainingMode,
    pub subset: Vec<usize>,
}

impl TrainingSystem {
    /// `||C xi - d||_2 / ||d||_2` for a mesh.
    pub fn relative_residual(&self, mesh: &ReducedMesh) -> f64 {
        let xi = mesh.dense_weights(self.c.ncols());
        (&self.c * xi - &self.d).norm() / self.d.norm()
    }
}

fn check_subset(snaps: &SnapshotSet, subset: &[usize]) -> Result<()> {
    if subset.is_empty() {
        return Err(RomError::Precondition("training subset is empty".into()));
    }
    if let Some(&bad) = subset.iter().find(|&&s| s >= snaps.len()) {
        return Err(RomError::Index {
            index: bad,
            len: snaps.len(),
        });
    }
    Ok(())
}

/// Per-snapshot entity rows `J_e V` and element residuals at the projected snapshot.
fn snapshot_rows(
    model: &BurgersModel,
    basis: &PodBasis,
    snaps: &SnapshotSet,
    s: usize,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let params = burgers_params(&snaps.params()[s]);
    let w_tilde = basis.reconstruct(&basis.project(snaps.state(s)));
    let r = model.residual(&w_tilde, &params)?;
    let test_basis = model.jacobian(&w_tilde, &params)?.mul_full(basis.v());
    Ok((test_basis, r))
}

fn finish(c: DMatrix<f64>, mode: TrainingMode, subset: &[usize]) -> TrainingSystem {
    let d = c.column_sum();
    TrainingSystem {
        c,
        d,
        mode,
        subset: subset.to_vec(),
    }
}

/// Residual-based training data: `c_se = W^T L_e^T R_e` at each projected snapshot.
pub fn assemble_training_residual(
    model: &BurgersModel,
    basis: &PodBasis,
    snaps: &SnapshotSet,
    subset: &[usize],
) -> Result<TrainingSystem> {
    check_subset(snaps, subset)?;
    let n = basis.dim();
    let ne = model.num_entities();
    let mut c = DMatrix::zeros(subset.len() * n, ne);
    for (k, &s) in subset.iter().enumerate() {
        let (w, r) = snapshot_rows(model, basis, snaps, s)?;
        for e in 0..ne {
            for i in 0..n {
                c[(k * n + i, e)] = w[(e, i)] * r[e];
            }
        }
    }
    Ok(finish(c, TrainingMode::Residual, subset))
}

/// Jacobian-based training data: `c_se = vec(W^T L_e^T J_e L_e+ V)`, column-major.
pub fn assemble_training_jacobian(
    model: &BurgersModel,
    basis: &PodBasis,
    snaps: &SnapshotSet,
    subset: &[usize],
) -> Result<TrainingSystem> {
    check_subset(snaps, subset)?;
    let n = basis.dim();
    let ne = model.num_entities();
    let block = n * n;
    let mut c = DMatrix::zeros(subset.len() * block, ne);
    for (k, &s) in subset.iter().enumerate() {
        let (w, _) = snapshot_rows(model, basis, snaps, s)?;
        for e in 0..ne {
            for col in 0..n {
                for row in 0..n {
                    c[(k * block + col * n + row, e)] = w[(e, row)] * w[(e, col)];
                }
            }
        }
    }
    Ok(finish(c, TrainingMode::Jacobian, subset))
}

pub fn assemble_training(
    model: &BurgersModel,
    basis: &PodBasis,
    snaps: &SnapshotSet,
    subset: &[usize],
    mode: TrainingMode,
) -> Result<TrainingSystem> {
    match mode {
        TrainingMode::Residual => assemble_training_residual(model, basis, snaps, subset),
        TrainingMode::Jacobian => assemble_training_jacobian(model, basis, snaps, subset),
    }
}

/// Sparse NNLS on the training system; cap of `10 N_e` admissions.
pub fn nnls_solve(sys: &TrainingSystem, eps: f64) -> Result<ReducedMesh> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(RomError::Precondition(format!("NNLS tolerance must lie in (0, 1), got {eps}")));
    }
    if sys.d.len() != sys.c.nrows() {
        return Err(RomError::Dimension("training matrix and rhs disagree".into()));
    }
    let ne = sys.c.ncols();
    let out = nnls_early_stop(&sys.c, &sys.d, eps, 10 * ne)?;
    let (entities, weights): (Vec<usize>, Vec<f64>) = out
        .x
        .iter()
        .enumerate()
        .filter(|(_, &w)| w > 0.0)
        .map(|(e, &w)| (e, w))
        .unzip();
    let mesh = ReducedMesh::new(entities, weights, sys.mode)?;
    let ratio = sys.relative_residual(&mesh);
    Ok(mesh.with_certificate(ratio, eps))
}

/// Assemble training data for `mode` and solve for the reduced mesh.
pub fn find_weights(
    model: &BurgersModel,
    basis: &PodBasis,
    snaps: &SnapshotSet,
    subset: &[usize],
    mode: TrainingMode,
    eps: f64,
) -> Result<ReducedMesh> {
    let start = Instant::now();
    let sys = assemble_training(model, basis, snaps, subset, mode)?;
    let mesh = nnls_solve(&sys, eps)?;
    log::info!(
        "ECSW {mode}: eps={eps:e} |E~|={} of {} ratio={:.3e} ({:.2?})",
        mesh.len(),
        model.num_entities(),
        mesh.achieved_ratio(),
        start.elapsed()
    );
    Ok(mesh)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fom::{BurgersParams, Grid1D, StateVector};

    fn tiny() -> (BurgersModel, PodBasis, SnapshotSet) {
        let model = BurgersModel::new(Grid1D::new(4, 0.0, 3.0).unwrap());
        let v = DMatrix::from_column_slice(4, 1, &[0.0, 0.6, 0.0, 0.8]);
        let basis = PodBasis::from_parts(v, DVector::from_element(4, 1.0), vec![1.0]).unwrap();
        let mut snaps = SnapshotSet::new();
        snaps
            .push(vec![0.3], StateVector::from_vec(vec![1.0, 1.3, 1.1, 1.9]))
            .unwrap();
        (model, basis, snaps)
    }

    #[test]
    fn tiny_residual_assembly_by_hand() {
        let (model, basis, snaps) = tiny();
        let sys = assemble_training_residual(&model, &basis, &snaps, &[0]).unwrap();
        assert_eq!(sys.c.shape(), (1, 3));
        // projected snapshot
        let c = 0.6 * 0.3 + 0.8 * 0.9;
        let w = [1.0, 1.0 + 0.6 * c, 1.0, 1.0 + 0.8 * c];
        let v = [0.0, 0.6, 0.0, 0.8];
        let p = BurgersParams::new(0.3);
        for e in 0..3 {
            let j = e + 1;
            let r = (0.5 * w[j] * w[j] - 0.5 * w[j - 1] * w[j - 1]) - p.source(j as f64);
            let row = -w[j - 1] * v[j - 1] + w[j] * v[j];
            assert!((sys.c[(0, e)] - row * r).abs() < 1e-12, "e={e}");
        }
        assert!((sys.d[0] - sys.c.row(0).sum()).abs() < 1e-15);
    }

    #[test]
    fn tiny_jacobian_assembly_by_hand() {
        let (model, basis, snaps) = tiny();
        let sys = assemble_training_jacobian(&model, &basis, &snaps, &[0]).unwrap();
        let res = assemble_training_residual(&model, &basis, &snaps, &[0]).unwrap();
        let (w, r) = snapshot_rows(&model, &basis, &snaps, 0).unwrap();
        for e in 0..3 {
            assert!((sys.c[(0, e)] - w[(e, 0)] * w[(e, 0)]).abs() < 1e-14);
            assert!((res.c[(0, e)] - w[(e, 0)] * r[e]).abs() < 1e-14);
        }
        // d reproduces the full reduced Jacobian W^T W
        assert!((sys.d[0] - w.tr_mul(&w)[(0, 0)]).abs() < 1e-12);
    }

    #[test]
    fn empty_subset_rejected() {
        let (model, basis, snaps) = tiny();
        assert!(matches!(
            assemble_training_residual(&model, &basis, &snaps, &[]),
            Err(RomError::Precondition(_))
        ));
        assert!(assemble_training_jacobian(&model, &basis, &snaps, &[3]).is_err());
    }

    #[test]
    fn reduced_mesh_validation() {
        assert!(ReducedMesh::new(vec![1, 2], vec![1.0], TrainingMode::Residual).is_err());
        assert!(ReducedMesh::new(vec![1, 2], vec![1.0, 0.0], TrainingMode::Residual).is_err());
        assert!(ReducedMesh::new(vec![2, 1], vec![1.0, 1.0], TrainingMode::Residual).is_err());
        let m = ReducedMesh::new(vec![0, 5], vec![0.5, 2.0], TrainingMode::Jacobian).unwrap();
        assert_eq!(m.dense_weights(6).as_slice(), &[0.5, 0.0, 0.0, 0.0, 0.0, 2.0]);
    }

    #[test]
    fn reduced_mesh_csv_round_trip() {
        let m = ReducedMesh::new(vec![3, 17, 400], vec![0.25, 1.0 / 3.0, 12.5], TrainingMode::Jacobian)
            .unwrap()
            .with_certificate(3.2e-7, 1e-6);
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        let back = ReducedMesh::read_csv(&buf[..]).unwrap();
        assert_eq!(back.entities(), m.entities());
        assert_eq!(back.weights(), m.weights());
        assert_eq!(back.mode(), TrainingMode::Jacobian);
        assert!((back.tolerance() - 1e-6).abs() < 1e-20);
    }

    #[test]
    fn nnls_solve_rejects_bad_eps() {
        let sys = TrainingSystem {
            c: DMatrix::identity(2, 2),
            d: DVector::from_element(2, 1.0),
            mode: TrainingMode::Residual,
            subset: vec![0],
        };
        assert!(nnls_solve(&sys, 0.0).is_err());
        assert!(nnls_solve(&sys, 1.0).is_err());
        let mesh = nnls_solve(&sys, 0.5).unwrap();
        assert!(mesh.achieved_ratio() <= 0.5);
    }
}
