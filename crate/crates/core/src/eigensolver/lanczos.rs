//! Thick-restart block Lanczos for the largest Ritz values of a Hermitian
//! operator.
//!
//! Products `W = Op V` are kept alongside the basis so the projected
//! matrix and every restart come without extra operator applications. A
//! spectral map turns each Ritz value θ into an eigenvalue of the physical
//! operator, or rejects it: for shift-invert about σ that is `σ + 1/θ` for
//! θ > 0.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::scalar::{axpy_neg, dot, norm, scale, Scalar};
use crate::error::{Error, Result};

pub struct LanczosSettings {
    pub wanted: usize,
    pub block: usize,
    pub max_basis: usize,
    pub tolerance: f64,
    pub max_restarts: usize,
    pub seed: u64,
}

pub struct LanczosOutput<T> {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<T>>,
    pub residuals: Vec<f64>,
    pub solves: usize,
    pub restarts: usize,
}

/// Orthonormalizes `x` against `basis` and itself (two Gram–Schmidt passes).
/// Columns that collapse are dropped.
fn orthonormalize<T: Scalar>(basis: &[Vec<T>], x: Vec<Vec<T>>) -> Vec<Vec<T>> {
    let mut out: Vec<Vec<T>> = Vec::with_capacity(x.len());
    for mut v in x {
        let start = norm(&v);
        if start == 0.0 {
            continue;
        }
        for _ in 0..2 {
            for b in basis.iter().chain(out.iter()) {
                let c = dot(b, &v);
                axpy_neg(c, b, &mut v);
            }
        }
        let nv = norm(&v);
        if nv > 1e-10 * start {
            scale(1.0 / nv, &mut v);
            out.push(v);
        }
    }
    out
}

fn combine<T: Scalar>(vs: &[Vec<T>], coeff: &[T]) -> Vec<T> {
    let n = vs[0].len();
    let mut out = vec![T::default(); n];
    for (v, &c) in vs.iter().zip(coeff) {
        if c == T::default() {
            continue;
        }
        for (o, x) in out.iter_mut().zip(v) {
            *o += *x * c;
        }
    }
    out
}

pub fn solve<T, Op, M, H>(n: usize, settings: &LanczosSettings, op: Op, map: M, apply_h: H) -> Result<LanczosOutput<T>>
where
    T: Scalar,
    Op: Fn(&mut [T], usize),
    M: Fn(f64) -> Option<f64>,
    H: Fn(&[T]) -> Vec<T>,
{
    let k = settings.wanted;
    let b = settings.block.max(1);
    let max_basis = settings.max_basis.max(k + 2 * b).min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);

    let mut basis: Vec<Vec<T>> = Vec::new();
    let mut products: Vec<Vec<T>> = Vec::new();
    // Projected matrix, row-major over the current basis.
    let mut proj: Vec<Vec<T>> = Vec::new();
    let mut pending: Vec<Vec<T>> = (0..b).map(|_| (0..n).map(|_| T::random(&mut rng)).collect()).collect();
    let mut solves = 0;
    let mut restarts = 0;
    let mut trace = Vec::new();

    loop {
        let mut fresh = orthonormalize(&basis, pending);
        if basis.len() + fresh.len() < n {
            // Top up collapsed directions with random vectors.
            let mut tries = 0;
            while fresh.len() < b && basis.len() + fresh.len() < n && tries < 4 * b {
                let r: Vec<T> = (0..n).map(|_| T::random(&mut rng)).collect();
                let mut all = basis.clone();
                all.extend(fresh.iter().cloned());
                fresh.extend(orthonormalize(&all, vec![r]));
                tries += 1;
            }
        }
        if fresh.is_empty() && basis.is_empty() {
            return Err(Error::EigenNotConverged {
                iterations: 0,
                last_residual: f64::INFINITY,
                trace,
            });
        }
        let nb = fresh.len();
        let mut block = Vec::with_capacity(n * nb);
        for v in &fresh {
            block.extend_from_slice(v);
        }
        if nb > 0 {
            op(&mut block, nb);
            solves += nb;
        }
        let new_products: Vec<Vec<T>> = block.chunks_exact(n).map(|c| c.to_vec()).collect();

        let m_old = basis.len();
        basis.extend(fresh);
        products.extend(new_products);
        let m = basis.len();
        for row in proj.iter_mut() {
            row.resize(m, T::default());
        }
        proj.resize(m, vec![T::default(); m]);
        for j in m_old..m {
            for i in 0..m {
                let v = dot(&basis[i], &products[j]);
                proj[i][j] = v;
                proj[j][i] = v.conjugate();
            }
        }
        for j in m_old..m {
            let d = proj[j][j].real();
            proj[j][j] = T::from_real(d);
        }

        // Rayleigh–Ritz, θ descending.
        let mut flat = vec![T::default(); m * m];
        for i in 0..m {
            for j in 0..m {
                flat[j * m + i] = proj[i][j];
            }
        }
        let (theta, y) = T::eigh(m, &flat);
        let order: Vec<usize> = (0..m).rev().collect();
        let candidates: Vec<(usize, f64)> = order
            .iter()
            .filter_map(|&i| map(theta[i]).map(|l| (i, l)))
            .take(k)
            .collect();

        let mut values = Vec::with_capacity(candidates.len());
        let mut vectors = Vec::with_capacity(candidates.len());
        let mut residuals = Vec::with_capacity(candidates.len());
        for &(c, lambda) in &candidates {
            let coeff = &y[c * m..(c + 1) * m];
            let mut u = combine(&basis, coeff);
            let nu = norm(&u);
            scale(1.0 / nu, &mut u);
            let hu = apply_h(&u);
            let r: Vec<T> = hu.iter().zip(&u).map(|(h, x)| *h - *x * lambda).collect();
            residuals.push(norm(&r));
            values.push(lambda);
            vectors.push(u);
        }
        let worst = residuals.iter().copied().fold(0.0f64, f64::max);
        let converged = candidates.len() == k && worst <= settings.tolerance;
        log::trace!(
            "lanczos basis={m} solves={solves} wanted={}/{k} worst residual {worst:.2e}",
            candidates.len()
        );
        if converged || m == n {
            if !converged && candidates.len() < k {
                log::warn!("operator has only {} admissible eigenvalues", candidates.len());
            }
            return Ok(LanczosOutput {
                values,
                vectors,
                residuals,
                solves,
                restarts,
            });
        }

        if m + b <= max_basis {
            pending = products[m_old..].to_vec();
            continue;
        }

        restarts += 1;
        trace.push(worst);
        if restarts > settings.max_restarts {
            return Err(Error::EigenNotConverged {
                iterations: restarts,
                last_residual: worst,
                trace,
            });
        }
        let keep_count = (k + b).min(m - 1).max(1);
        let keep: Vec<usize> = order.iter().copied().take(keep_count).collect();
        let new_basis: Vec<Vec<T>> = keep.iter().map(|&c| combine(&basis, &y[c * m..(c + 1) * m])).collect();
        let new_products: Vec<Vec<T>> = keep.iter().map(|&c| combine(&products, &y[c * m..(c + 1) * m])).collect();
        // Residual directions of unconverged wanted pairs continue the Krylov sequence.
        let mut next = Vec::new();
        for (slot, &c) in keep.iter().enumerate() {
            if next.len() >= b {
                break;
            }
            let is_done = candidates
                .iter()
                .position(|&(w, _)| w == c)
                .map(|p| residuals[p] <= settings.tolerance)
                .unwrap_or(false);
            if is_done {
                continue;
            }
            let mut r = new_products[slot].clone();
            axpy_neg(T::from_real(theta[c]), &new_basis[slot], &mut r);
            next.push(r);
        }
        basis = new_basis;
        products = new_products;
        let kk = basis.len();
        proj = vec![vec![T::default(); kk]; kk];
        for (i, &c) in keep.iter().enumerate() {
            proj[i][i] = T::from_real(theta[c]);
        }
        pending = next;
    }
}
