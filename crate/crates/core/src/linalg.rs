//! Small vector kernels, matrix-free conjugate gradients, and dense helpers.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative singular-value cutoff used by every pseudo-inverse in the crate.
pub const PINV_RCOND: f64 = 1e-12;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// `y ← y + a·x`
pub fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CgReport {
    pub iters: usize,
    pub rel_residual: f64,
}

/// Conjugate gradients for a symmetric positive (semi-)definite operator.
///
/// Stops when `‖Ax − b‖ ≤ tol·‖b‖` or after `max_iters`. Starts from `x0`
/// when given, otherwise from zero.
pub fn conjugate_gradient(
    apply: impl Fn(&[f64], &mut [f64]),
    b: &[f64],
    x0: Option<&[f64]>,
    tol: f64,
    max_iters: usize,
) -> (Vec<f64>, CgReport) {
    let n = b.len();
    let bnorm = norm(b);
    let mut x = x0.map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; n]);
    if bnorm == 0.0 {
        return (
            vec![0.0; n],
            CgReport {
                iters: 0,
                rel_residual: 0.0,
            },
        );
    }
    let mut ax = vec![0.0; n];
    apply(&x, &mut ax);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    let mut p = r.clone();
    let mut rs = dot(&r, &r);
    let mut ap = vec![0.0; n];
    let mut iters = 0;
    while iters < max_iters && rs.sqrt() > tol * bnorm {
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            break;
        }
        let alpha = rs / pap;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &ap, &mut r);
        let rs_new = dot(&r, &r);
        let beta = rs_new / rs;
        for (pi, ri) in p.iter_mut().zip(&r) {
            *pi = ri + beta * *pi;
        }
        rs = rs_new;
        iters += 1;
    }
    (
        x,
        CgReport {
            iters,
            rel_residual: rs.sqrt() / bnorm,
        },
    )
}

/// Moore-Penrose pseudo-inverse via SVD, zeroing singular values below
/// `PINV_RCOND·σ_max`.
pub fn pinv(a: &DMatrix<f64>) -> DMatrix<f64> {
    pinv_rcond(a, PINV_RCOND)
}

/// Pseudo-inverse dropping singular values below `rcond·σ_max`.
pub fn pinv_rcond(a: &DMatrix<f64>, rcond: f64) -> DMatrix<f64> {
    let (r, c) = a.shape();
    if r == 0 || c == 0 {
        return DMatrix::zeros(c, r);
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let cutoff = rcond * smax;
    let u = svd.u.as_ref().expect("u requested");
    let vt = svd.v_t.as_ref().expect("v_t requested");
    let mut out = DMatrix::zeros(c, r);
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s > cutoff && s > 0.0 {
            out += (vt.row(k).transpose() / s) * u.column(k).transpose();
        }
    }
    out
}

pub fn to_dvector(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}

/// Cholesky solve for a symmetric positive definite matrix.
pub fn spd_solve(a: &DMatrix<f64>, b: &[f64]) -> Result<Vec<f64>> {
    let chol = a
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Singular("matrix is not positive definite".into()))?;
    Ok(chol.solve(&to_dvector(b)).as_slice().to_vec())
}
