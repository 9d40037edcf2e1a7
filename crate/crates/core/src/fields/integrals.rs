//! Two-electron integrals over a set of orbitals expanded on the atoms.

use faer::c64;
use rayon::prelude::*;

use super::FieldEngine;
use crate::error::{Error, Result};

/// `w(a) = Σ_k c_j*(a,k) c_i(a,k)` with the per-atom block inferred from the
/// vector length.
pub fn pair_weights(state_i: &[c64], state_j: &[c64], atoms: usize) -> Result<Vec<c64>> {
    if state_i.len() != state_j.len() {
        return Err(Error::BasisMismatch(format!(
            "amplitude lengths differ: {} vs {}",
            state_i.len(),
            state_j.len()
        )));
    }
    if atoms == 0 || !state_i.len().is_multiple_of(atoms) {
        return Err(Error::BasisMismatch(format!(
            "{} amplitudes do not split over {atoms} atoms",
            state_i.len()
        )));
    }
    let block = state_i.len() / atoms;
    Ok(state_i
        .chunks_exact(block)
        .zip(state_j.chunks_exact(block))
        .map(|(ci, cj)| ci.iter().zip(cj).map(|(a, b)| b.conj() * a).sum())
        .collect())
}

/// Densities `ρ_pq(a) = Σ u_p*(a) u_q(a)` and their regularized potentials at
/// the atoms for every ordered orbital pair.
#[derive(Debug, Clone)]
pub struct PairTable {
    count: usize,
    densities: Vec<Vec<c64>>,
    potentials: Vec<Vec<c64>>,
}

/// Solves one Poisson problem per unordered pair `p ≤ q`; the reversed pair
/// is the complex conjugate.
pub fn pair_table(engine: &FieldEngine, orbitals: &[&[c64]]) -> Result<PairTable> {
    let k = orbitals.len();
    let atoms = engine.atom_count();
    let pairs: Vec<(usize, usize)> = (0..k).flat_map(|p| (p..k).map(move |q| (p, q))).collect();
    let solved: Vec<(Vec<c64>, Vec<c64>)> = pairs
        .par_iter()
        .map(|&(p, q)| {
            let rho = pair_weights(orbitals[q], orbitals[p], atoms)?;
            let v = if rho.iter().all(|x| *x == c64::new(0.0, 0.0)) {
                vec![c64::new(0.0, 0.0); atoms]
            } else {
                engine.potential_at_atoms(&rho)?
            };
            Ok((rho, v))
        })
        .collect::<Result<_>>()?;
    let empty = Vec::new();
    let mut densities = vec![empty.clone(); k * k];
    let mut potentials = vec![empty; k * k];
    for (&(p, q), (rho, v)) in pairs.iter().zip(solved) {
        if p != q {
            densities[q * k + p] = rho.iter().map(|x| x.conj()).collect();
            potentials[q * k + p] = v.iter().map(|x| x.conj()).collect();
        }
        densities[p * k + q] = rho;
        potentials[p * k + q] = v;
    }
    Ok(PairTable {
        count: k,
        densities,
        potentials,
    })
}

impl PairTable {
    pub fn count(&self) -> usize {
        self.count
    }

    pub fn density(&self, p: usize, q: usize) -> &[c64] {
        &self.densities[p * self.count + q]
    }

    pub fn potential(&self, p: usize, q: usize) -> &[c64] {
        &self.potentials[p * self.count + q]
    }

    /// Chemist's-notation `(pq|rs)`, averaged over which pair acts as the
    /// source so the tensor keeps its exchange symmetry exactly; the boundary
    /// data make the grid kernel only approximately symmetric.
    pub fn coulomb(&self, p: usize, q: usize, r: usize, s: usize) -> c64 {
        let half = |x: usize, y: usize, z: usize, w: usize| -> c64 {
            self.density(x, y).iter().zip(self.potential(z, w)).map(|(a, b)| a * b).sum()
        };
        (half(p, q, r, s) + half(r, s, p, q)) * 0.5
    }

    /// Dense `(pq|rs)` tensor, filled from the unique quartets.
    pub fn tensor(&self) -> CoulombTensor {
        let k = self.count;
        let mut values = vec![c64::new(0.0, 0.0); k.pow(4)];
        let idx = |p: usize, q: usize, r: usize, s: usize| ((p * k + q) * k + r) * k + s;
        for p in 0..k {
            for q in 0..k {
                let pq = p * k + q;
                for r in 0..k {
                    for s in 0..k {
                        let rs = r * k + s;
                        if rs < pq {
                            continue;
                        }
                        let v = self.coulomb(p, q, r, s);
                        values[idx(p, q, r, s)] = v;
                        values[idx(r, s, p, q)] = v;
                    }
                }
            }
        }
        CoulombTensor { count: k, values }
    }

    /// Potential at the atoms of the density `Σ_pq D_pq ρ_pq` (D row-major).
    pub fn combined_potential(&self, mixing: &[c64]) -> Vec<c64> {
        let atoms = self.potentials.first().map_or(0, |v| v.len());
        let mut out = vec![c64::new(0.0, 0.0); atoms];
        for (slot, &d) in mixing.iter().enumerate() {
            if d == c64::new(0.0, 0.0) {
                continue;
            }
            for (o, v) in out.iter_mut().zip(&self.potentials[slot]) {
                *o += d * v;
            }
        }
        out
    }
}

/// Chemist's-notation Coulomb integrals over `count` orbitals.
#[derive(Debug, Clone, PartialEq)]
pub struct CoulombTensor {
    pub count: usize,
    pub values: Vec<c64>,
}

impl CoulombTensor {
    pub fn get(&self, p: usize, q: usize, r: usize, s: usize) -> c64 {
        let k = self.count;
        self.values[((p * k + q) * k + r) * k + s]
    }

    /// Integrals in the rotated orbitals `φ'_i = Σ_p C[p][i] φ_p` (`C` column-major, `count × m`).
    pub fn transform(&self, coeffs: &[c64], m: usize) -> CoulombTensor {
        let k = self.count;
        let c = |p: usize, i: usize| coeffs[i * k + p];
        // Four quarter-transformations, one index at a time.
        let mut cur = self.values.clone();
        let mut dims = [k, k, k, k];
        for axis in 0..4 {
            let mut nd = dims;
            nd[axis] = m;
            let mut next = vec![c64::new(0.0, 0.0); nd.iter().product()];
            let stride_old = |d: &[usize; 4], ax: usize| d[ax + 1..].iter().product::<usize>();
            let so = stride_old(&dims, axis);
            let sn = stride_old(&nd, axis);
            let outer: usize = dims[..axis].iter().product();
            for o in 0..outer {
                for i in 0..m {
                    for p in 0..k {
                        // Positions p and r carry the complex conjugate.
                        let w = if axis % 2 == 0 { c(p, i).conj() } else { c(p, i) };
                        if w == c64::new(0.0, 0.0) {
                            continue;
                        }
                        let src = (o * dims[axis] + p) * so;
                        let dst = (o * m + i) * sn;
                        for t in 0..so {
                            next[dst + t] += w * cur[src + t];
                        }
                    }
                }
            }
            cur = next;
            dims = nd;
        }
        CoulombTensor { count: m, values: cur }
    }
}
