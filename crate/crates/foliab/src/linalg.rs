//! Dense row-major helpers over [`Scalar`], sized for n ≤ 4 geometry.

use crate::jet::Scalar;
use nalgebra::{DMatrix, DVector};

/// Gauss–Jordan inverse with partial pivoting on the value part.
/// Returns `None` when a pivot vanishes.
pub fn inverse<S: Scalar>(a: &[S], n: usize) -> Option<Vec<S>> {
    let proto = &a[0];
    let mut m: Vec<S> = a.to_vec();
    let mut inv: Vec<S> = (0..n * n).map(|k| proto.lift(if k / n == k % n { 1.0 } else { 0.0 })).collect();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&r, &s| m[r * n + col].value().abs().total_cmp(&m[s * n + col].value().abs()))
            .unwrap();
        if m[piv * n + col].value() == 0.0 || !m[piv * n + col].value().is_finite() {
            return None;
        }
        if piv != col {
            for k in 0..n {
                m.swap(piv * n + k, col * n + k);
                inv.swap(piv * n + k, col * n + k);
            }
        }
        let r = m[col * n + col].recip();
        for k in 0..n {
            m[col * n + k] = m[col * n + k].times(&r);
            inv[col * n + k] = inv[col * n + k].times(&r);
        }
        for row in 0..n {
            if row == col {
                continue;
            }
            let f = m[row * n + col].clone();
            if f.is_zero() {
                continue;
            }
            for k in 0..n {
                let t = m[col * n + k].times(&f);
                m[row * n + k] = m[row * n + k].minus(&t);
                let t = inv[col * n + k].times(&f);
                inv[row * n + k] = inv[row * n + k].minus(&t);
            }
        }
    }
    Some(inv)
}

/// `C = A B` for row-major square matrices.
pub fn matmul<S: Scalar>(a: &[S], b: &[S], n: usize) -> Vec<S> {
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let mut acc = a[i * n].times(&b[j]);
            for k in 1..n {
                acc = acc.fma(&a[i * n + k], &b[k * n + j]);
            }
            out.push(acc);
        }
    }
    out
}

pub fn transpose<S: Scalar>(a: &[S], n: usize) -> Vec<S> {
    (0..n * n).map(|k| a[(k % n) * n + k / n].clone()).collect()
}

pub fn matvec<S: Scalar>(a: &[S], v: &[S], n: usize) -> Vec<S> {
    (0..n)
        .map(|i| {
            let mut acc = a[i * n].times(&v[0]);
            for k in 1..n {
                acc = acc.fma(&a[i * n + k], &v[k]);
            }
            acc
        })
        .collect()
}

pub fn values<S: Scalar>(a: &[S]) -> Vec<f64> {
    a.iter().map(|s| s.value()).collect()
}

pub fn to_dmatrix(a: &[f64], n: usize) -> DMatrix<f64> {
    DMatrix::from_row_slice(n, n, a)
}

pub fn to_dvector(a: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(a)
}

/// g-inner product of two coordinate vectors.
pub fn inner(g: &[f64], u: &[f64], v: &[f64]) -> f64 {
    let n = u.len();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            s += g[i * n + j] * u[i] * v[j];
        }
    }
    s
}

pub fn gnorm(g: &[f64], u: &[f64]) -> f64 {
    inner(g, u, u).max(0.0).sqrt()
}

pub fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn axpy(a: f64, x: &[f64], y: &[f64]) -> Vec<f64> {
    x.iter().zip(y).map(|(u, v)| a * u + v).collect()
}

/// A g-orthonormal frame: columns `E` with `Eᵀ g E = I`, built from the
/// Cholesky factor so that `E` is upper triangular (Gram–Schmidt order).
pub fn orthonormal_frame(g: &[f64], n: usize) -> Option<DMatrix<f64>> {
    let gm = to_dmatrix(g, n);
    let l = gm.cholesky()?.l();
    // g = L Lᵀ ⇒ E = L^{-T} satisfies Eᵀ g E = I.
    l.transpose().try_inverse()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jet::Jet;

    #[test]
    fn inverse_round_trip() {
        let a = [4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0];
        let inv = inverse(&a, 3).unwrap();
        let id = matmul(&a, &inv, 3);
        for i in 0..3 {
            for j in 0..3 {
                assert!((id[i * 3 + j] - if i == j { 1.0 } else { 0.0 }).abs() < 1e-14);
            }
        }
        assert!(inverse(&[1.0, 2.0, 2.0, 4.0], 2).is_none());
    }

    #[test]
    fn inverse_on_jets_differentiates() {
        // d/dx (1/(1+x)) at 0 = -1
        let x = Jet::seed(&[0.0], 2);
        let a = vec![x[0].shift(1.0)];
        let inv = inverse(&a, 1).unwrap();
        assert!((inv[0].derivative(&[1]) + 1.0).abs() < 1e-15);
        assert!((inv[0].derivative(&[2]) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn frame_is_orthonormal() {
        let g = [2.0, 0.3, 0.3, 1.5];
        let e = orthonormal_frame(&g, 2).unwrap();
        let gm = to_dmatrix(&g, 2);
        let id = e.transpose() * gm * &e;
        assert!((id - DMatrix::identity(2, 2)).abs().max() < 1e-14);
        assert_eq!(e[(1, 0)], 0.0);
    }
}
