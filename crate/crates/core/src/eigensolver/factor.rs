//! Sparse factorization of `H − σ` for shift-invert products.

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::solvers::Solve;
use faer::perm::PermRef;
use faer::sparse::linalg::cholesky::{
    factorize_symbolic_cholesky, CholeskySymbolicParams, IntranodeLbltRef, SymbolicCholesky, SymmetricOrdering,
};
use faer::sparse::linalg::solvers::Lu;
use faer::sparse::linalg::SupernodalThreshold;
use faer::sparse::SparseColMat;
use faer::{Conj, MatMut, Par, Side};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::scalar::{norm, Scalar};
use crate::error::{Error, Result};

/// Relative residual above which a refinement sweep is added to every solve.
const REFINE_THRESHOLD: f64 = 1e-11;
/// Relative residual above which the symmetric factorization is abandoned.
const FALLBACK_THRESHOLD: f64 = 1e-8;

enum Kind<T: Scalar> {
    Lblt {
        symbolic: SymbolicCholesky<usize>,
        values: Vec<T>,
        subdiag: Vec<T>,
        fwd: Vec<usize>,
        inv: Vec<usize>,
    },
    Lu(Lu<usize, T>),
}

pub struct ShiftInvert<T: Scalar> {
    n: usize,
    /// `perm[old] = new`.
    perm: Vec<usize>,
    a: SparseColMat<usize, T>,
    kind: Kind<T>,
    refine: bool,
    pub method: &'static str,
    pub probe_residual: f64,
}

fn matvec<T: Scalar>(a: &SparseColMat<usize, T>, x: &[T], y: &mut [T]) {
    y.iter_mut().for_each(|v| *v = T::default());
    let a = a.as_ref();
    for j in 0..a.ncols() {
        let xj = x[j];
        for (i, v) in a.row_idx_of_col(j).zip(a.val_of_col(j)) {
            y[i] += *v * xj;
        }
    }
}

impl<T: Scalar> ShiftInvert<T> {
    /// `a` is `H − σ` already expressed in the permuted ordering `perm`.
    pub fn new(a: SparseColMat<usize, T>, perm: Vec<usize>) -> Result<Self> {
        let n = a.nrows();
        let mut this = match Self::lblt(&a) {
            Ok(kind) => ShiftInvert {
                n,
                perm: perm.clone(),
                a,
                kind,
                refine: false,
                method: "lblt",
                probe_residual: f64::NAN,
            },
            Err(e) => {
                log::warn!("symmetric factorization failed ({e}); using LU");
                Self::with_lu(a, perm)?
            }
        };
        let residual = this.probe();
        this.probe_residual = residual;
        if !(residual <= REFINE_THRESHOLD) {
            this.refine = true;
            let refined = this.probe();
            this.probe_residual = refined;
            if !(refined <= FALLBACK_THRESHOLD) && this.method == "lblt" {
                log::warn!("symmetric factorization residual {refined:.2e}; using LU");
                let ShiftInvert { a, perm, .. } = this;
                this = Self::with_lu(a, perm)?;
                let residual = this.probe();
                this.refine = !(residual <= REFINE_THRESHOLD);
                this.probe_residual = if this.refine { this.probe() } else { residual };
            }
        }
        if !(this.probe_residual <= FALLBACK_THRESHOLD) {
            return Err(Error::Factorization(format!(
                "shift-invert solve residual {:.2e} (shift too close to an eigenvalue?)",
                this.probe_residual
            )));
        }
        log::debug!(
            "factorized n={} via {} (refine={}, probe residual {:.2e})",
            this.n,
            this.method,
            this.refine,
            this.probe_residual
        );
        Ok(this)
    }

    fn with_lu(a: SparseColMat<usize, T>, perm: Vec<usize>) -> Result<Self> {
        let lu = a.sp_lu().map_err(|e| Error::Factorization(format!("sparse LU failed: {e:?}")))?;
        Ok(ShiftInvert {
            n: a.nrows(),
            perm,
            a,
            kind: Kind::Lu(lu),
            refine: false,
            method: "lu",
            probe_residual: f64::NAN,
        })
    }

    fn lblt(a: &SparseColMat<usize, T>) -> Result<Kind<T>> {
        let n = a.nrows();
        let params = CholeskySymbolicParams {
            supernodal_flop_ratio_threshold: SupernodalThreshold::FORCE_SUPERNODAL,
            ..Default::default()
        };
        let symbolic = factorize_symbolic_cholesky(a.symbolic(), Side::Lower, SymmetricOrdering::Identity, params)
            .map_err(|e| Error::Factorization(format!("symbolic analysis failed: {e:?}")))?;
        let mut values = vec![T::default(); symbolic.len_val()];
        let mut subdiag = vec![T::default(); n];
        let mut fwd = vec![0usize; n];
        let mut inv = vec![0usize; n];
        let req = symbolic.factorize_numeric_intranode_lblt_scratch::<T>(Par::Seq, Default::default());
        let mut mem = MemBuffer::try_new(req).map_err(|_| Error::Factorization("out of memory for factor workspace".into()))?;
        symbolic.factorize_numeric_intranode_lblt(
            &mut values,
            &mut subdiag,
            &mut fwd,
            &mut inv,
            a.as_ref(),
            Side::Lower,
            Par::Seq,
            MemStack::new(&mut mem),
            Default::default(),
        );
        Ok(Kind::Lblt {
            symbolic,
            values,
            subdiag,
            fwd,
            inv,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves in the permuted ordering, `ncols` right-hand sides in place.
    fn raw_solve(&self, rhs: &mut [T], ncols: usize) {
        let n = self.n;
        match &self.kind {
            Kind::Lblt {
                symbolic,
                values,
                subdiag,
                fwd,
                inv,
            } => {
                let perm = PermRef::new_checked(fwd, inv, n);
                let f = IntranodeLbltRef::new(symbolic, values, subdiag, perm);
                let req = symbolic.solve_in_place_scratch::<T>(ncols, Par::Seq);
                let mut mem = MemBuffer::new(req);
                let m = MatMut::from_column_major_slice_mut(rhs, n, ncols);
                f.solve_in_place_with_conj(Conj::No, m, Par::Seq, MemStack::new(&mut mem));
            }
            Kind::Lu(lu) => {
                let m = MatMut::from_column_major_slice_mut(rhs, n, ncols);
                lu.solve_in_place(m);
            }
        }
    }

    fn solve_permuted(&self, rhs: &mut [T], ncols: usize) {
        let n = self.n;
        if !self.refine {
            self.raw_solve(rhs, ncols);
            return;
        }
        let b = rhs.to_vec();
        self.raw_solve(rhs, ncols);
        let mut r = vec![T::default(); n * ncols];
        let mut ax = vec![T::default(); n];
        for c in 0..ncols {
            matvec(&self.a, &rhs[c * n..(c + 1) * n], &mut ax);
            for i in 0..n {
                r[c * n + i] = b[c * n + i] - ax[i];
            }
        }
        self.raw_solve(&mut r, ncols);
        for (x, d) in rhs.iter_mut().zip(&r) {
            *x += *d;
        }
    }

    /// `X ← (H − σ)⁻¹ X` for a column-major block in the original ordering.
    pub fn solve(&self, block: &mut [T], ncols: usize) {
        let n = self.n;
        let mut work = vec![T::default(); n * ncols];
        for c in 0..ncols {
            for i in 0..n {
                work[c * n + self.perm[i]] = block[c * n + i];
            }
        }
        self.solve_permuted(&mut work, ncols);
        for c in 0..ncols {
            for i in 0..n {
                block[c * n + i] = work[c * n + self.perm[i]];
            }
        }
    }

    fn probe(&self) -> f64 {
        let n = self.n;
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        let b: Vec<T> = (0..n).map(|_| T::random(&mut rng)).collect();
        let mut x = b.clone();
        self.solve_permuted(&mut x, 1);
        let mut ax = vec![T::default(); n];
        matvec(&self.a, &x, &mut ax);
        let r: Vec<T> = b.iter().zip(&ax).map(|(p, q)| *p - *q).collect();
        let res = norm(&r) / norm(&b);
        if res.is_finite() {
            res
        } else {
            f64::INFINITY
        }
    }
}
