//! Small dense factorizations used by the solvers and the samplers.
//!
//! Matrices here are tiny (a handful of columns) but can be tall, so the
//! least-squares path is a Householder QR over the full design and the
//! covariance path is a diagonally pivoted Cholesky that tolerates
//! rank-deficient positive-semidefinite input.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};

/// Relative cutoff on the diagonal of R below which a design is rank deficient.
pub const RANK_TOL: f64 = 1e-10;

/// Householder QR of a tall matrix, kept in compact form.
#[derive(Debug, Clone)]
pub struct Qr {
    /// Upper triangle holds R; below the diagonal, the Householder vectors (minus their leading 1).
    packed: Array2<f64>,
    /// Householder scalars.
    tau: Array1<f64>,
}

impl Qr {
    pub fn new(a: ArrayView2<f64>) -> Result<Self> {
        let (n, k) = a.dim();
        if n < k {
            return Err(Error::SingularDesign);
        }
        let mut packed = a.to_owned();
        let mut tau = Array1::zeros(k);
        let scale = a
            .axis_iter(Axis(1))
            .map(|col| col.dot(&col).sqrt())
            .fold(0.0, f64::max);
        if scale == 0.0 || !scale.is_finite() {
            return Err(Error::SingularDesign);
        }

        for j in 0..k {
            let norm = packed.slice(s![j.., j]).dot(&packed.slice(s![j.., j])).sqrt();
            if norm <= RANK_TOL * scale {
                return Err(Error::SingularDesign);
            }
            let head = packed[[j, j]];
            let alpha = if head > 0.0 { -norm } else { norm };
            let v0 = head - alpha;
            // v = (1, x[j+1..] / v0), tau = (alpha - head) / alpha
            for i in (j + 1)..n {
                packed[[i, j]] /= v0;
            }
            tau[j] = (alpha - head) / alpha;
            packed[[j, j]] = alpha;

            for col in (j + 1)..k {
                let mut dot = packed[[j, col]];
                for i in (j + 1)..n {
                    dot += packed[[i, j]] * packed[[i, col]];
                }
                let f = tau[j] * dot;
                packed[[j, col]] -= f;
                for i in (j + 1)..n {
                    packed[[i, col]] -= f * packed[[i, j]];
                }
            }
        }
        Ok(Qr { packed, tau })
    }

    pub fn ncols(&self) -> usize {
        self.tau.len()
    }

    /// Least-squares solution for one right-hand side.
    pub fn solve(&self, b: ArrayView1<f64>) -> Result<Array1<f64>> {
        let (n, k) = self.packed.dim();
        if b.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "rhs has {} rows, design has {n}",
                b.len()
            )));
        }
        let mut qtb = b.to_owned();
        for j in 0..k {
            let mut dot = qtb[j];
            for i in (j + 1)..n {
                dot += self.packed[[i, j]] * qtb[i];
            }
            let f = self.tau[j] * dot;
            qtb[j] -= f;
            for i in (j + 1)..n {
                qtb[i] -= f * self.packed[[i, j]];
            }
        }
        let mut x = Array1::zeros(k);
        for j in (0..k).rev() {
            let mut acc = qtb[j];
            for l in (j + 1)..k {
                acc -= self.packed[[j, l]] * x[l];
            }
            x[j] = acc / self.packed[[j, j]];
        }
        Ok(x)
    }
}

/// Least squares `min ||a b - y||` for one response.
pub fn lstsq(a: ArrayView2<f64>, y: ArrayView1<f64>) -> Result<Array1<f64>> {
    Qr::new(a)?.solve(y)
}

/// Diagonally pivoted Cholesky: `cov[perm, perm] = l l^T` with `l` of shape `k x rank`.
#[derive(Debug, Clone)]
pub struct PivotedCholesky {
    pub factor: Array2<f64>,
    pub perm: Vec<usize>,
    pub rank: usize,
}

/// Factor a symmetric positive-semidefinite matrix.
///
/// Pivots stop once the largest remaining diagonal falls below a relative
/// tolerance; the remaining Schur complement must then be numerically zero,
/// otherwise the input was indefinite.
pub fn pivoted_cholesky(cov: ArrayView2<f64>) -> Result<PivotedCholesky> {
    let (k, k2) = cov.dim();
    if k != k2 {
        return Err(Error::InvalidCovariance(format!("{k}x{k2} matrix is not square")));
    }
    if cov.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidCovariance("non-finite entry".into()));
    }
    let max_abs = cov.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = 1e-12 * max_abs.max(f64::MIN_POSITIVE);
    for i in 0..k {
        for j in 0..i {
            if (cov[[i, j]] - cov[[j, i]]).abs() > tol.max(1e-14) {
                return Err(Error::InvalidCovariance(format!("not symmetric at ({i},{j})")));
            }
        }
    }

    let mut a = cov.to_owned();
    let mut perm: Vec<usize> = (0..k).collect();
    let mut l = Array2::<f64>::zeros((k, k));
    let mut rank = 0;

    for j in 0..k {
        let (piv, &dmax) = (j..k)
            .map(|i| (i, &a[[i, i]]))
            .max_by(|x, y| x.1.total_cmp(y.1))
            .expect("non-empty range");
        if dmax <= tol {
            break;
        }
        if piv != j {
            perm.swap(j, piv);
            swap_sym(&mut a, j, piv);
            for c in 0..j {
                let tmp = l[[j, c]];
                l[[j, c]] = l[[piv, c]];
                l[[piv, c]] = tmp;
            }
        }
        let d = a[[j, j]].sqrt();
        l[[j, j]] = d;
        for i in (j + 1)..k {
            l[[i, j]] = a[[i, j]] / d;
        }
        for i in (j + 1)..k {
            for c in (j + 1)..=i {
                let v = a[[i, c]] - l[[i, j]] * l[[c, j]];
                a[[i, c]] = v;
                a[[c, i]] = v;
            }
        }
        rank += 1;
    }

    for i in rank..k {
        for c in rank..k {
            if a[[i, c]].abs() > 1e-9 * max_abs.max(1.0) {
                return Err(Error::InvalidCovariance(
                    "matrix is not positive semidefinite".into(),
                ));
            }
        }
    }

    Ok(PivotedCholesky {
        factor: l.slice(s![.., ..rank]).to_owned(),
        perm,
        rank,
    })
}

fn swap_sym(a: &mut Array2<f64>, i: usize, j: usize) {
    let k = a.nrows();
    for c in 0..k {
        a.swap([i, c], [j, c]);
    }
    for r in 0..k {
        a.swap([r, i], [r, j]);
    }
}

/// Solve a small symmetric positive-definite system; `None` if not PD.
pub fn spd_solve(a: ArrayView2<f64>, b: ArrayView1<f64>) -> Option<Array1<f64>> {
    let k = a.nrows();
    let mut l = Array2::<f64>::zeros((k, k));
    for j in 0..k {
        let mut d = a[[j, j]];
        for c in 0..j {
            d -= l[[j, c]] * l[[j, c]];
        }
        if d <= 0.0 || !d.is_finite() {
            return None;
        }
        let d = d.sqrt();
        l[[j, j]] = d;
        for i in (j + 1)..k {
            let mut v = a[[i, j]];
            for c in 0..j {
                v -= l[[i, c]] * l[[j, c]];
            }
            l[[i, j]] = v / d;
        }
    }
    let mut z = b.to_owned();
    for i in 0..k {
        for c in 0..i {
            z[i] -= l[[i, c]] * z[c];
        }
        z[i] /= l[[i, i]];
    }
    for i in (0..k).rev() {
        for c in (i + 1)..k {
            z[i] -= l[[c, i]] * z[c];
        }
        z[i] /= l[[i, i]];
    }
    Some(z)
}
