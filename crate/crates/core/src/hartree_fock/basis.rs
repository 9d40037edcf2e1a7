//! Spin-orbital view of a TB window and the integrals over it.

use std::sync::Arc;

use faer::c64;

use crate::eigensolver::{SpinLabel, TbState};
use crate::error::{Error, Result};
use crate::fields::{CoulombTensor, PairTable};

const ZERO: c64 = c64 { re: 0.0, im: 0.0 };

/// TB spin-orbitals with their distinct spatial vectors. Spin partners share
/// one vector; spin-orbit states carry full spinors as their "spatial" part.
#[derive(Debug, Clone)]
pub struct SpinOrbitalBasis {
    pub energies: Vec<f64>,
    pub spins: Vec<SpinLabel>,
    /// Index of each spin-orbital's vector in `vectors`.
    pub spatial: Vec<usize>,
    pub vectors: Vec<Arc<Vec<c64>>>,
}

impl SpinOrbitalBasis {
    pub fn from_states(states: &[TbState]) -> Self {
        let mut vectors: Vec<Arc<Vec<c64>>> = Vec::new();
        let mut spatial = Vec::with_capacity(states.len());
        for s in states {
            let slot = match vectors.iter().position(|v| Arc::ptr_eq(v, &s.amplitudes)) {
                Some(i) => i,
                None => {
                    vectors.push(Arc::clone(&s.amplitudes));
                    vectors.len() - 1
                }
            };
            spatial.push(slot);
        }
        SpinOrbitalBasis {
            energies: states.iter().map(|s| s.energy).collect(),
            spins: states.iter().map(|s| s.spin).collect(),
            spatial,
            vectors,
        }
    }

    pub fn len(&self) -> usize {
        self.spins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spins.is_empty()
    }

    pub fn spatial_count(&self) -> usize {
        self.vectors.len()
    }

    pub fn same_spin(&self, p: usize, q: usize) -> bool {
        self.spins[p] == self.spins[q]
    }

    pub fn vector_refs(&self) -> Vec<&[c64]> {
        self.vectors.iter().map(|v| v.as_slice()).collect()
    }

    /// Real-space orbital `Σ_k c_k φ_k` for coefficients confined to one
    /// spin channel, laid out like the basis vectors.
    pub fn expand(&self, coeffs: &[c64]) -> Vec<c64> {
        let len = self.vectors.first().map_or(0, |v| v.len());
        let mut out = vec![ZERO; len];
        for (k, &c) in coeffs.iter().enumerate() {
            if c == ZERO {
                continue;
            }
            for (o, x) in out.iter_mut().zip(self.vectors[self.spatial[k]].iter()) {
                *o += c * x;
            }
        }
        out
    }

    /// Coefficients `⟨φ_k|ψ⟩` of an orbital with the given spin.
    pub fn project(&self, spin: SpinLabel, orbital: &[c64]) -> Vec<c64> {
        (0..self.len())
            .map(|k| {
                if self.spins[k] != spin {
                    return ZERO;
                }
                let v = &self.vectors[self.spatial[k]];
                v.iter().zip(orbital).map(|(a, b)| a.conj() * b).sum()
            })
            .collect()
    }
}

/// One-body matrix and antisymmetry-ready two-body integrals over a
/// spin-orbital set.
#[derive(Debug, Clone)]
pub struct OrbitalIntegrals {
    pub spins: Vec<SpinLabel>,
    /// `h_pq`, row-major.
    pub one_body: Vec<c64>,
    /// Chemist's `(pq|rs)` over spin-orbitals, zero unless spins pair up.
    pub two_body: CoulombTensor,
}

impl OrbitalIntegrals {
    pub fn new(spins: Vec<SpinLabel>, one_body: Vec<c64>, two_body: CoulombTensor) -> Result<Self> {
        let m = spins.len();
        if one_body.len() != m * m || two_body.count != m || two_body.values.len() != m.pow(4) {
            return Err(Error::BasisMismatch(format!(
                "integrals over {m} spin-orbitals need {} one-body and {} two-body entries",
                m * m,
                m.pow(4)
            )));
        }
        Ok(OrbitalIntegrals {
            spins,
            one_body,
            two_body,
        })
    }

    /// Spin-orbital integrals from spatial ones: `spatial[p]` names the
    /// spatial orbital of spin-orbital `p`.
    pub fn from_spatial(
        spins: Vec<SpinLabel>,
        spatial: &[usize],
        one_body: Vec<c64>,
        spatial_tensor: &CoulombTensor,
    ) -> Result<Self> {
        let m = spins.len();
        let mut values = vec![ZERO; m.pow(4)];
        for p in 0..m {
            for q in 0..m {
                if spins[p] != spins[q] {
                    continue;
                }
                for r in 0..m {
                    for s in 0..m {
                        if spins[r] != spins[s] {
                            continue;
                        }
                        values[((p * m + q) * m + r) * m + s] =
                            spatial_tensor.get(spatial[p], spatial[q], spatial[r], spatial[s]);
                    }
                }
            }
        }
        Self::new(spins, one_body, CoulombTensor { count: m, values })
    }

    pub fn len(&self) -> usize {
        self.spins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spins.is_empty()
    }

    pub fn h(&self, p: usize, q: usize) -> c64 {
        self.one_body[p * self.len() + q]
    }

    /// Physicist's `⟨pq|rs⟩ − ⟨pq|sr⟩`.
    pub fn antisymmetrized(&self, p: usize, q: usize, r: usize, s: usize) -> c64 {
        self.two_body.get(p, r, q, s) - self.two_body.get(p, s, q, r)
    }

    /// Integrals over `φ'_i = Σ_p C[p][i] φ_p` (`C` column-major, `len × spins.len()`).
    pub fn rotate(&self, coeffs: &[c64], spins: Vec<SpinLabel>) -> Result<Self> {
        let m = self.len();
        let n = spins.len();
        if coeffs.len() != m * n {
            return Err(Error::BasisMismatch(format!(
                "rotation of {m} spin-orbitals needs {} coefficients, got {}",
                m * n,
                coeffs.len()
            )));
        }
        let mut one_body = vec![ZERO; n * n];
        for i in 0..n {
            for j in 0..n {
                let mut acc = ZERO;
                for p in 0..m {
                    let cp = coeffs[i * m + p].conj();
                    if cp == ZERO {
                        continue;
                    }
                    for q in 0..m {
                        acc += cp * self.one_body[p * m + q] * coeffs[j * m + q];
                    }
                }
                one_body[i * n + j] = acc;
            }
        }
        Self::new(spins, one_body, self.two_body.transform(coeffs, n))
    }
}

/// `h_pq = ε_p δ_pq − ⟨φ_p|S|φ_q⟩`: the bare Hamiltonian in the eigenbasis of
/// the screened one, with `S` the on-site screening used in the TB step.
pub fn one_body_matrix(basis: &SpinOrbitalBasis, table: &PairTable, screening: &[f64]) -> Vec<c64> {
    let m = basis.len();
    let mut h = vec![ZERO; m * m];
    for p in 0..m {
        h[p * m + p] = c64::new(basis.energies[p], 0.0);
    }
    if screening.iter().all(|s| *s == 0.0) {
        return h;
    }
    for p in 0..m {
        for q in 0..m {
            if !basis.same_spin(p, q) {
                continue;
            }
            let rho = table.density(basis.spatial[p], basis.spatial[q]);
            let s: c64 = rho.iter().zip(screening).map(|(r, v)| r * *v).sum();
            h[p * m + q] -= s;
        }
    }
    // Exact Hermiticity; round-off otherwise leaks into the energy.
    for p in 0..m {
        h[p * m + p].im = 0.0;
        for q in p + 1..m {
            let avg = (h[p * m + q] + h[q * m + p].conj()) * 0.5;
            h[p * m + q] = avg;
            h[q * m + p] = avg.conj();
        }
    }
    h
}

pub fn integrals(basis: &SpinOrbitalBasis, table: &PairTable, screening: &[f64]) -> Result<OrbitalIntegrals> {
    if table.count() != basis.spatial_count() {
        return Err(Error::BasisMismatch(format!(
            "pair table over {} orbitals for a basis with {} spatial vectors",
            table.count(),
            basis.spatial_count()
        )));
    }
    let h = one_body_matrix(basis, table, screening);
    OrbitalIntegrals::from_spatial(basis.spins.clone(), &basis.spatial, h, &table.tensor())
}

/// Mixing weights over spatial pairs (row-major) whose combined potential is
/// that of the density `Σ_pq D_qp φ_p* φ_q`.
pub fn density_mixing(basis: &SpinOrbitalBasis, density: &[c64]) -> Vec<c64> {
    let m = basis.len();
    let k = basis.spatial_count();
    let mut mix = vec![ZERO; k * k];
    for p in 0..m {
        for q in 0..m {
            if basis.same_spin(p, q) {
                mix[basis.spatial[p] * k + basis.spatial[q]] += density[q * m + p];
            }
        }
    }
    mix
}
