//! Cubic radial basis function interpolation with a linear polynomial tail.
//!
//! Centres are mapped to the unit box of the parameter domain before fitting,
//! so both parameters of a 2D domain carry equal weight.

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, RomError};
use crate::pod::ParamPoint;

/// Lattice size for the 1D argmax scan.
pub const LATTICE_1D: usize = 2048;
/// Lattice size per axis for the 2D argmax scan.
pub const LATTICE_2D: usize = 256;

/// Box-shaped parameter domain with one or two dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterDomain {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl ParameterDomain {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() || lo.len() > 2 {
            return Err(RomError::Precondition(format!(
                "parameter domain must have 1 or 2 dimensions, got {} / {}",
                lo.len(),
                hi.len()
            )));
        }
        if lo.iter().zip(&hi).any(|(l, h)| !(l < h) || !l.is_finite() || !h.is_finite()) {
            return Err(RomError::Precondition(format!("invalid bounds {lo:?} .. {hi:?}")));
        }
        Ok(Self { lo, hi })
    }

    pub fn interval(lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo], vec![hi])
    }

    pub fn dims(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn to_unit(&self, mu: &[f64]) -> Vec<f64> {
        mu.iter()
            .enumerate()
            .map(|(k, &x)| (x - self.lo[k]) / (self.hi[k] - self.lo[k]))
            .collect()
    }

    pub fn from_unit(&self, u: &[f64]) -> ParamPoint {
        u.iter()
            .enumerate()
            .map(|(k, &x)| self.lo[k] + x * (self.hi[k] - self.lo[k]))
            .collect()
    }

    /// Euclidean distance in unit-box coordinates.
    pub fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        self.to_unit(a)
            .iter()
            .zip(self.to_unit(b))
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt()
    }

    pub fn contains(&self, mu: &[f64]) -> bool {
        mu.len() == self.dims() && mu.iter().enumerate().all(|(k, &x)| x >= self.lo[k] && x <= self.hi[k])
    }

    /// Argmax lattice in unit coordinates: `LATTICE_1D` points, or `LATTICE_2D^2`.
    pub fn lattice(&self) -> Vec<Vec<f64>> {
        match self.dims() {
            1 => (0..LATTICE_1D)
                .map(|i| vec![i as f64 / (LATTICE_1D - 1) as f64])
                .collect(),
            _ => {
                let m = LATTICE_2D;
                let mut pts = Vec::with_capacity(m * m);
                for i in 0..m {
                    for j in 0..m {
                        pts.push(vec![i as f64 / (m - 1) as f64, j as f64 / (m - 1) as f64]);
                    }
                }
                pts
            }
        }
    }

    /// Lattice spacing in unit coordinates.
    pub fn lattice_spacing(&self) -> f64 {
        match self.dims() {
            1 => 1.0 / (LATTICE_1D - 1) as f64,
            _ => 1.0 / (LATTICE_2D - 1) as f64,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RbfModel {
    domain: ParameterDomain,
    /// Centres in unit coordinates.
    centers: Vec<Vec<f64>>,
    values: Vec<f64>,
    weights: DVector<f64>,
    /// Constant then linear coefficients.
    poly: DVector<f64>,
}

fn cubic(r: f64) -> f64 {
    r * r * r
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Fits the interpolant through `values` at `centers`.
pub fn rbf_fit(domain: &ParameterDomain, centers: &[ParamPoint], values: &[f64]) -> Result<RbfModel> {
    let dims = domain.dims();
    if centers.len() != values.len() {
        return Err(RomError::Dimension(format!(
            "{} centres but {} values",
            centers.len(),
            values.len()
        )));
    }
    if centers.len() < dims + 2 {
        return Err(RomError::Precondition(format!(
            "need at least {} centres, got {}",
            dims + 2,
            centers.len()
        )));
    }
    if centers.iter().any(|c| c.len() != dims) {
        return Err(RomError::Dimension("centre dimension differs from domain".into()));
    }
    let unit: Vec<Vec<f64>> = centers.iter().map(|c| domain.to_unit(c)).collect();
    for a in 0..unit.len() {
        for b in a + 1..unit.len() {
            if dist(&unit[a], &unit[b]) < 1e-12 {
                return Err(RomError::Singular {
                    what: "RBF interpolation matrix (duplicate centres)",
                    condition: f64::INFINITY,
                });
            }
        }
    }
    let m = unit.len();
    let q = dims + 1;
    let size = m + q;
    let mut a = DMatrix::zeros(size, size);
    for r in 0..m {
        for c in 0..m {
            a[(r, c)] = cubic(dist(&unit[r], &unit[c]));
        }
        a[(r, m)] = 1.0;
        a[(m, r)] = 1.0;
        for k in 0..dims {
            a[(r, m + 1 + k)] = unit[r][k];
            a[(m + 1 + k, r)] = unit[r][k];
        }
    }
    let mut rhs = DVector::zeros(size);
    for r in 0..m {
        rhs[r] = values[r];
    }
    let sol = a.clone().lu().solve(&rhs).ok_or(RomError::Singular {
        what: "RBF interpolation matrix",
        condition: f64::INFINITY,
    })?;
    if sol.iter().any(|v| !v.is_finite()) {
        return Err(RomError::Singular {
            what: "RBF interpolation matrix",
            condition: f64::INFINITY,
        });
    }
    Ok(RbfModel {
        domain: domain.clone(),
        centers: unit,
        values: values.to_vec(),
        weights: sol.rows(0, m).into_owned(),
        poly: sol.rows(m, q).into_owned(),
    })
}

impl RbfModel {
    fn eval_unit(&self, u: &[f64]) -> f64 {
        let mut v = self.poly[0];
        for (k, x) in u.iter().enumerate() {
            v += self.poly[k + 1] * x;
        }
        for (c, w) in self.centers.iter().zip(self.weights.iter()) {
            v += w * cubic(dist(u, c));
        }
        v
    }

    pub fn eval(&self, mu: &[f64]) -> f64 {
        self.eval_unit(&self.domain.to_unit(mu))
    }

    /// Largest `|s(c_i) - f_i|` over the centres.
    pub fn interpolation_residual(&self) -> f64 {
        self.centers
            .iter()
            .zip(&self.values)
            .map(|(c, f)| (self.eval_unit(c) - f).abs())
            .fold(0.0, f64::max)
    }

    /// `sum_i w_i` and `sum_i w_i c_i`, which vanish for a valid fit.
    pub fn orthogonality_defect(&self) -> f64 {
        let mut worst = self.weights.sum().abs();
        for k in 0..self.domain.dims() {
            let s: f64 = self.centers.iter().zip(self.weights.iter()).map(|(c, w)| w * c[k]).sum();
            worst = worst.max(s.abs());
        }
        worst
    }

    pub fn domain(&self) -> &ParameterDomain {
        &self.domain
    }
}

/// Maximiser of the interpolant over the argmax lattice.
///
/// Lattice points within `exclusion` (unit-box distance) of any point in
/// `exclude` are skipped. Ties resolve to the first lattice point.
pub fn rbf_argmax(model: &RbfModel, exclude: &[ParamPoint], exclusion: f64) -> Option<(ParamPoint, f64)> {
    let domain = &model.domain;
    let ex: Vec<Vec<f64>> = exclude.iter().map(|p| domain.to_unit(p)).collect();
    let mut best: Option<(Vec<f64>, f64)> = None;
    for u in domain.lattice() {
        if ex.iter().any(|e| dist(e, &u) < exclusion) {
            continue;
        }
        let v = model.eval_unit(&u);
        if best.as_ref().is_none_or(|(_, b)| v > *b) {
            best = Some((u, v));
        }
    }
    best.map(|(u, v)| (domain.from_unit(&u), v))
}
