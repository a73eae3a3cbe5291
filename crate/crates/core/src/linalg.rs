//! Small dense kernels for the subproblem solver.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const JACOBI_MAX_SWEEPS: usize = 100;

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
///
/// Returns eigenvalues in ascending order and the matching orthonormal
/// eigenvectors as columns. Only the symmetric part of `a` is used.
pub fn jacobi_eigen(a: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::Numerical("jacobi_eigen needs a square matrix".into()));
    }
    let mut m = (a + a.transpose()) * 0.5;
    let mut v = DMatrix::<f64>::identity(n, n);
    let scale = m.norm();

    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut off = 0.0;
        for p in 0..n {
            for q in p + 1..n {
                off += m[(p, q)] * m[(p, q)];
            }
        }
        if off.sqrt() <= f64::EPSILON * scale || scale == 0.0 {
            return Ok(sorted(m.diagonal(), v));
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    Err(Error::Numerical("Jacobi eigensolver did not converge".into()))
}

fn sorted(values: DVector<f64>, vectors: DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let vals = DVector::from_iterator(n, order.iter().map(|&i| values[i]));
    let vecs = DMatrix::from_fn(n, n, |r, c| vectors[(r, order[c])]);
    (vals, vecs)
}

/// Upper-triangular factor of a thin Householder QR of a tall matrix.
pub fn thin_qr_r(a: &DMatrix<f64>) -> DMatrix<f64> {
    let (rows, cols) = a.shape();
    let k = rows.min(cols);
    let mut w = a.clone();
    let mut h = vec![0.0; rows];
    for j in 0..k {
        let (head, tail) = w.as_mut_slice().split_at_mut((j + 1) * rows);
        let pivot = &mut head[j * rows + j..];
        let norm = pivot.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let alpha = if pivot[0] > 0.0 { -norm } else { norm };
        let h = &mut h[..rows - j];
        h.copy_from_slice(pivot);
        h[0] -= alpha;
        let hn2: f64 = h.iter().map(|x| x * x).sum();
        if hn2 == 0.0 {
            continue;
        }
        // the pivot column becomes (alpha, 0, ..., 0)
        pivot[0] = alpha;
        pivot[1..].iter_mut().for_each(|x| *x = 0.0);
        for col in tail.chunks_exact_mut(rows) {
            let col = &mut col[j..];
            let proj = 2.0 * h.iter().zip(col.iter()).map(|(a, b)| a * b).sum::<f64>() / hn2;
            for (ci, &hi) in col.iter_mut().zip(h.iter()) {
                *ci -= proj * hi;
            }
        }
    }
    DMatrix::from_fn(k, cols, |r, c| if r <= c { w[(r, c)] } else { 0.0 })
}
