//! Dense Hermitian eigensolvers over column-major buffers.

use faer::linalg::solvers::Solve;
use faer::{c64, Mat, Side};

/// Eigenvalues ascending and column-major eigenvectors of an `n × n`
/// Hermitian matrix.
pub fn hermitian_eigh(n: usize, a: &[c64]) -> (Vec<f64>, Vec<c64>) {
    assert_eq!(a.len(), n * n);
    if n == 0 {
        return (vec![], vec![]);
    }
    let m = Mat::<c64>::from_fn(n, n, |i, j| {
        // Symmetrize so round-off never leaks into the lower triangle.
        (a[j * n + i] + a[i * n + j].conj()) * 0.5
    });
    let evd = m.self_adjoint_eigen(Side::Lower).expect("hermitian eigendecomposition");
    let vals = (0..n).map(|i| evd.S()[i].re).collect();
    let u = evd.U();
    let mut vecs = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            vecs.push(u[(i, j)]);
        }
    }
    (vals, vecs)
}

pub fn hermitian_eigenvalues(n: usize, a: &[c64]) -> Vec<f64> {
    assert_eq!(a.len(), n * n);
    if n == 0 {
        return vec![];
    }
    let m = Mat::<c64>::from_fn(n, n, |i, j| (a[j * n + i] + a[i * n + j].conj()) * 0.5);
    m.self_adjoint_eigenvalues(Side::Lower).expect("hermitian eigenvalues")
}

/// Real symmetric variant.
pub fn symmetric_eigh(n: usize, a: &[f64]) -> (Vec<f64>, Vec<f64>) {
    assert_eq!(a.len(), n * n);
    if n == 0 {
        return (vec![], vec![]);
    }
    let m = Mat::<f64>::from_fn(n, n, |i, j| 0.5 * (a[j * n + i] + a[i * n + j]));
    let evd = m.self_adjoint_eigen(Side::Lower).expect("symmetric eigendecomposition");
    let vals = (0..n).map(|i| evd.S()[i]).collect();
    let u = evd.U();
    let mut vecs = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            vecs.push(u[(i, j)]);
        }
    }
    (vals, vecs)
}

/// Solution of the `n × n` real system `A x = b` (`A` column-major), or
/// `None` when the pivots show it singular.
pub fn solve_real(n: usize, a: &[f64], b: &[f64]) -> Option<Vec<f64>> {
    assert_eq!(a.len(), n * n);
    assert_eq!(b.len(), n);
    if n == 0 {
        return Some(vec![]);
    }
    let m = Mat::<f64>::from_fn(n, n, |i, j| a[j * n + i]);
    let scale = a.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
    let lu = m.partial_piv_lu();
    let x = lu.solve(Mat::<f64>::from_fn(n, 1, |i, _| b[i]));
    let out: Vec<f64> = (0..n).map(|i| x[(i, 0)]).collect();
    let bad = !out.iter().all(|v| v.is_finite()) || (0..n).any(|i| lu.U()[(i, i)].abs() <= 1e-14 * scale);
    (!bad).then_some(out)
}

/// Determinant of a column-major complex matrix.
pub fn determinant(n: usize, a: &[c64]) -> c64 {
    assert_eq!(a.len(), n * n);
    if n == 0 {
        return c64::new(1.0, 0.0);
    }
    Mat::<c64>::from_fn(n, n, |i, j| a[j * n + i]).determinant()
}

pub fn dot(a: &[c64], b: &[c64]) -> c64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub fn norm(a: &[c64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}
