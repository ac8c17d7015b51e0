//! Proper orthogonal decomposition of mean-centred snapshots.

use std::io::{BufRead, Write};

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, RomError};
use crate::fom::StateVector;

/// Singular values below this fraction of the largest are treated as zero.
pub const RANK_GUARD: f64 = 1e-12;

/// Parameter location, one entry per design parameter.
pub type ParamPoint = Vec<f64>;

/// Full-order solutions and the parameters they were computed at.
#[derive(Debug, Clone, Default)]
pub struct SnapshotSet {
    params: Vec<ParamPoint>,
    states: Vec<StateVector>,
}

impl SnapshotSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, mu: ParamPoint, w: StateVector) -> Result<()> {
        if let Some(first) = self.states.first() {
            if first.len() != w.len() {
                return Err(RomError::Dimension(format!(
                    "snapshot length {} differs from {}",
                    w.len(),
                    first.len()
                )));
            }
        }
        self.params.push(mu);
        self.states.push(w);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn params(&self) -> &[ParamPoint] {
        &self.params
    }

    pub fn states(&self) -> &[StateVector] {
        &self.states
    }

    pub fn state(&self, i: usize) -> &StateVector {
        &self.states[i]
    }

    /// Arithmetic mean of the snapshots.
    pub fn mean(&self) -> Result<DVector<f64>> {
        let first = self
            .states
            .first()
            .ok_or_else(|| RomError::Precondition("snapshot set is empty".into()))?;
        let mut m = DVector::zeros(first.len());
        for s in &self.states {
            m += s.vector();
        }
        Ok(m / self.states.len() as f64)
    }
}

/// Reference state plus orthonormal trial basis.
#[derive(Debug, Clone)]
pub struct PodBasis {
    v: DMatrix<f64>,
    w_ref: DVector<f64>,
    singular_values: Vec<f64>,
    snapshot_params: Vec<ParamPoint>,
}

impl PodBasis {
    /// Assembles a basis from given parts. Columns of `v` must be orthonormal.
    pub fn from_parts(v: DMatrix<f64>, w_ref: DVector<f64>, singular_values: Vec<f64>) -> Result<Self> {
        if v.nrows() != w_ref.len() {
            return Err(RomError::Dimension(format!(
                "basis has {} rows, reference state has {}",
                v.nrows(),
                w_ref.len()
            )));
        }
        if v.ncols() == 0 {
            return Err(RomError::EmptyBasis);
        }
        Ok(Self {
            v,
            w_ref,
            singular_values,
            snapshot_params: Vec::new(),
        })
    }

    pub fn v(&self) -> &DMatrix<f64> {
        &self.v
    }

    pub fn w_ref(&self) -> &DVector<f64> {
        &self.w_ref
    }

    pub fn singular_values(&self) -> &[f64] {
        &self.singular_values
    }

    pub fn snapshot_params(&self) -> &[ParamPoint] {
        &self.snapshot_params
    }

    /// Reduced dimension `n`.
    pub fn dim(&self) -> usize {
        self.v.ncols()
    }

    /// Full-order length `N`.
    pub fn full_dim(&self) -> usize {
        self.v.nrows()
    }

    /// `V^T (w - w_ref)`.
    pub fn project(&self, w: &StateVector) -> DVector<f64> {
        self.v.tr_mul(&(w.vector() - &self.w_ref))
    }

    /// `w_ref + V w_hat`.
    pub fn reconstruct(&self, w_hat: &DVector<f64>) -> StateVector {
        StateVector::new(&self.w_ref + &self.v * w_hat)
    }

    /// `||V^T V - I||_F`.
    pub fn orthonormality_defect(&self) -> f64 {
        let n = self.dim();
        (self.v.tr_mul(&self.v) - DMatrix::identity(n, n)).norm()
    }

    /// Row-major matrix text: one row per line, space separated.
    pub fn write_matrix<W: Write>(&self, mut out: W) -> Result<()> {
        for r in 0..self.v.nrows() {
            let row: Vec<String> = (0..self.v.ncols())
                .map(|c| format!("{:.16e}", self.v[(r, c)]))
                .collect();
            writeln!(out, "{}", row.join(" "))?;
        }
        Ok(())
    }

    /// Sidecar with `n`, `N`, singular values, snapshot parameters and `w_ref`.
    pub fn write_metadata<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "n={}", self.dim())?;
        writeln!(out, "N={}", self.full_dim())?;
        let sv: Vec<String> = self.singular_values.iter().map(|s| format!("{s:.16e}")).collect();
        writeln!(out, "sigma={}", sv.join(" "))?;
        for mu in &self.snapshot_params {
            let m: Vec<String> = mu.iter().map(|x| format!("{x:.16e}")).collect();
            writeln!(out, "snapshot={}", m.join(" "))?;
        }
        let wr: Vec<String> = self.w_ref.iter().map(|x| format!("{x:.16e}")).collect();
        writeln!(out, "w_ref={}", wr.join(" "))?;
        Ok(())
    }

    pub fn read<R1: BufRead, R2: BufRead>(matrix: R1, metadata: R2) -> Result<Self> {
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for line in matrix.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let row = line
                .split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|_| RomError::Parse(format!("bad matrix entry {t:?}"))))
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        let mut n = None;
        let mut big_n = None;
        let mut sigma = Vec::new();
        let mut params = Vec::new();
        let mut w_ref = Vec::new();
        let floats = |s: &str| -> Result<Vec<f64>> {
            s.split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|_| RomError::Parse(format!("bad value {t:?}"))))
                .collect()
        };
        for line in metadata.lines() {
            let line = line?;
            let Some((k, v)) = line.split_once('=') else { continue };
            match k.trim() {
                "n" => n = v.trim().parse::<usize>().ok(),
                "N" => big_n = v.trim().parse::<usize>().ok(),
                "sigma" => sigma = floats(v)?,
                "snapshot" => params.push(floats(v)?),
                "w_ref" => w_ref = floats(v)?,
                _ => {}
            }
        }
        let (n, big_n) = match (n, big_n) {
            (Some(a), Some(b)) => (a, b),
            _ => return Err(RomError::Parse("basis metadata missing n or N".into())),
        };
        if rows.len() != big_n || rows.iter().any(|r| r.len() != n) || w_ref.len() != big_n {
            return Err(RomError::Parse("basis matrix does not match metadata".into()));
        }
        let v = DMatrix::from_fn(big_n, n, |r, c| rows[r][c]);
        let mut basis = Self::from_parts(v, DVector::from_vec(w_ref), sigma)?;
        basis.snapshot_params = params;
        Ok(basis)
    }
}

/// Builds the POD basis of the snapshot deviations from their mean.
///
/// The thin SVD is taken through a Householder QR of the `N x k` deviation
/// matrix followed by an SVD of the small `k x k` triangular factor; modes
/// with `sigma <= RANK_GUARD * sigma_1` are dropped.
pub fn build_basis(snapshots: &SnapshotSet) -> Result<PodBasis> {
    let w_ref = snapshots.mean()?;
    let k = snapshots.len();
    let big_n = w_ref.len();
    let mut s = DMatrix::zeros(big_n, k);
    for (c, w) in snapshots.states().iter().enumerate() {
        s.set_column(c, &(w.vector() - &w_ref));
    }
    let (u, sigma) = thin_svd(&s)?;
    let sigma_max = sigma.first().copied().unwrap_or(0.0);
    if !(sigma_max > 0.0) {
        return Err(RomError::EmptyBasis);
    }
    let keep = sigma.iter().take_while(|&&x| x > RANK_GUARD * sigma_max).count();
    let mut v = u.columns(0, keep).into_owned();
    reorthonormalize(&mut v);
    let mut basis = PodBasis::from_parts(v, w_ref, sigma[..keep].to_vec())?;
    basis.snapshot_params = snapshots.params().to_vec();
    Ok(basis)
}

/// Left singular vectors and singular values (descending) of a tall matrix.
fn thin_svd(s: &DMatrix<f64>) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let k = s.ncols();
    if s.nrows() < k {
        return Err(RomError::Dimension(format!(
            "more snapshots ({k}) than state entries ({})",
            s.nrows()
        )));
    }
    let qr = s.clone().qr();
    let q = qr.q();
    let r = qr.r();
    let svd = r.svd(true, false);
    let ur = svd
        .u
        .ok_or_else(|| RomError::Precondition("SVD of triangular factor failed".into()))?;
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let sigma: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
    let mut u = DMatrix::zeros(s.nrows(), k);
    for (c, &i) in order.iter().enumerate() {
        u.set_column(c, &(&q * ur.column(i)));
    }
    Ok((u, sigma))
}

/// One modified Gram-Schmidt pass.
fn reorthonormalize(v: &mut DMatrix<f64>) {
    for c in 0..v.ncols() {
        for p in 0..c {
            let proj = v.column(p).dot(&v.column(c));
            let prev = v.column(p).into_owned();
            v.column_mut(c).axpy(-proj, &prev, 1.0);
        }
        let nrm = v.column(c).norm();
        if nrm > 0.0 {
            v.column_mut(c).unscale_mut(nrm);
        }
    }
}
