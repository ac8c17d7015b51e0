//! Lawson-Hanson active-set NNLS with an early-stopping residual target.

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, RomError};

#[derive(Debug, Clone)]
pub struct NnlsOutcome {
    pub x: DVector<f64>,
    /// `||C x - d||_2`.
    pub residual_norm: f64,
    /// Number of columns admitted to the passive set.
    pub iterations: usize,
}

/// Minimises `||C x - d||_2` over `x >= 0`, stopping as soon as
/// `||C x - d||_2 <= eps * ||d||_2`.
///
/// Ties in the dual vector go to the lowest column index. Fails with
/// [`RomError::NnlsStalled`] when `max_iter` admissions pass, or the
/// optimality conditions hold, before the target is met.
pub fn nnls_early_stop(c: &DMatrix<f64>, d: &DVector<f64>, eps: f64, max_iter: usize) -> Result<NnlsOutcome> {
    let (m, n) = c.shape();
    if d.len() != m {
        return Err(RomError::Dimension(format!("C has {m} rows, d has {}", d.len())));
    }
    if n == 0 {
        return Err(RomError::Precondition("C has no columns".into()));
    }
    let d_norm = d.norm();
    let target = eps * d_norm;
    let mut x = DVector::zeros(n);
    if d_norm == 0.0 {
        return Ok(NnlsOutcome {
            x,
            residual_norm: 0.0,
            iterations: 0,
        });
    }
    let col_scale = (0..n).map(|j| c.column(j).norm()).fold(0.0f64, f64::max);
    let mut passive: Vec<usize> = Vec::new();
    let mut in_passive = vec![false; n];
    let mut excluded = vec![false; n];
    let mut r = d.clone();
    let mut r_norm = d_norm;
    let mut iterations = 0;

    loop {
        if r_norm <= target {
            return Ok(NnlsOutcome {
                x,
                residual_norm: r_norm,
                iterations,
            });
        }
        if iterations >= max_iter {
            return Err(RomError::NnlsStalled {
                iterations,
                best_ratio: r_norm / d_norm,
                target: eps,
            });
        }
        let dual = c.tr_mul(&r);
        let threshold = 1e-13 * col_scale * r_norm;
        let mut pick: Option<usize> = None;
        for j in 0..n {
            if in_passive[j] || excluded[j] || dual[j] <= threshold {
                continue;
            }
            // strict comparison keeps the lowest index on ties
            if pick.is_none_or(|p| dual[j] > dual[p]) {
                pick = Some(j);
            }
        }
        let Some(j) = pick else {
            return Err(RomError::NnlsStalled {
                iterations,
                best_ratio: r_norm / d_norm,
                target: eps,
            });
        };
        iterations += 1;
        passive.push(j);
        in_passive[j] = true;

        let mut first = true;
        loop {
            let z = passive_lstsq(c, d, &passive);
            let z = match z {
                Some(z) => z,
                None => {
                    // column j made the passive system rank deficient
                    passive.pop();
                    in_passive[j] = false;
                    excluded[j] = true;
                    break;
                }
            };
            if first && z[passive.len() - 1] <= 0.0 {
                passive.pop();
                in_passive[j] = false;
                excluded[j] = true;
                break;
            }
            first = false;
            if z.iter().all(|&v| v > 0.0) {
                for (k, &p) in passive.iter().enumerate() {
                    x[p] = z[k];
                }
                excluded.iter_mut().for_each(|f| *f = false);
                break;
            }
            let mut alpha = f64::INFINITY;
            for (k, &p) in passive.iter().enumerate() {
                if z[k] <= 0.0 {
                    let a = x[p] / (x[p] - z[k]);
                    if a < alpha {
                        alpha = a;
                    }
                }
            }
            for (k, &p) in passive.iter().enumerate() {
                x[p] += alpha * (z[k] - x[p]);
            }
            let mut kept = Vec::with_capacity(passive.len());
            for &p in &passive {
                if x[p] > 0.0 && x[p] > 1e-15 * x.amax() {
                    kept.push(p);
                } else {
                    x[p] = 0.0;
                    in_passive[p] = false;
                }
            }
            passive = kept;
            if passive.is_empty() {
                break;
            }
        }
        r = d - c * &x;
        r_norm = r.norm();
    }
}

/// Least squares on the passive columns via Householder QR.
fn passive_lstsq(c: &DMatrix<f64>, d: &DVector<f64>, passive: &[usize]) -> Option<DVector<f64>> {
    let m = c.nrows();
    let p = passive.len();
    if p > m {
        return None;
    }
    let mut sub = DMatrix::zeros(m, p);
    for (k, &j) in passive.iter().enumerate() {
        sub.set_column(k, &c.column(j));
    }
    let scale = sub.amax();
    let qr = sub.qr();
    let r = qr.r();
    let rmax = (0..p).map(|i| r[(i, i)].abs()).fold(0.0f64, f64::max);
    if (0..p).any(|i| r[(i, i)].abs() <= 1e-13 * rmax.max(scale)) {
        return None;
    }
    let mut qtd = qr.q().tr_mul(d);
    let mut z = DVector::zeros(p);
    for i in (0..p).rev() {
        let mut v = qtd[i];
        for k in i + 1..p {
            v -= r[(i, k)] * z[k];
        }
        z[i] = v / r[(i, i)];
        qtd[i] = v;
    }
    Some(z)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_system() {
        let c = DMatrix::identity(2, 2);
        let d = DVector::from_vec(vec![1.0, 1.0]);
        let out = nnls_early_stop(&c, &d, 1e-8, 20).unwrap();
        assert!((out.x[0] - 1.0).abs() < 1e-14);
        assert!((out.x[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn underdetermined_row() {
        let c = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let d = DVector::from_vec(vec![2.0]);
        let out = nnls_early_stop(&c, &d, 1e-8, 20).unwrap();
        assert!(out.x.iter().all(|&v| v >= 0.0));
        assert!((out.x.sum() - 2.0).abs() < 1e-14);
        assert!(out.residual_norm < 1e-14);
        // tie: lowest index admitted
        assert_eq!(out.x[0], 2.0);
        assert_eq!(out.x[1], 0.0);
    }

    #[test]
    fn negative_target_clamped() {
        let c = DMatrix::identity(2, 2);
        let d = DVector::from_vec(vec![1.0, -1.0]);
        let err = nnls_early_stop(&c, &d, 1e-3, 20).unwrap_err();
        match err {
            RomError::NnlsStalled { best_ratio, .. } => {
                assert!((best_ratio - 0.5f64.sqrt()).abs() < 1e-14)
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn iteration_cap() {
        let c = DMatrix::identity(3, 3);
        let d = DVector::from_vec(vec![1.0, 1.0, 1.0]);
        assert!(matches!(
            nnls_early_stop(&c, &d, 1e-9, 2),
            Err(RomError::NnlsStalled { iterations: 2, .. })
        ));
    }

    #[test]
    fn loose_tolerance_stops_early() {
        let c = DMatrix::identity(4, 4);
        let d = DVector::from_vec(vec![10.0, 1.0, 1.0, 1.0]);
        let out = nnls_early_stop(&c, &d, 0.2, 20).unwrap();
        assert_eq!(out.x.iter().filter(|&&v| v > 0.0).count(), 1);
        assert!(out.residual_norm <= 0.2 * d.norm());
    }
}
