//! Occupation bitmasks and Slater–Condon matrix elements.

use std::collections::HashMap;

use faer::c64;

use crate::eigensolver::SpinLabel;
use crate::error::{Error, Result};
use crate::hartree_fock::OrbitalIntegrals;

const ZERO: c64 = c64 { re: 0.0, im: 0.0 };

/// Determinants of one `S_z` sector; bit `p` occupies spin-orbital `p`.
#[derive(Debug, Clone)]
pub struct DeterminantBasis {
    pub spins: Vec<SpinLabel>,
    pub electrons: usize,
    /// `2 S_z`, absent for spinor bases.
    pub twice_sz: Option<i32>,
    pub dets: Vec<u64>,
    index: HashMap<u64, usize>,
}

/// Sector of `n` electrons over `m` spin-orbitals with spins alternating
/// ↑↓ (the layout of a collinear TB window).
pub fn build_determinants(m: usize, n: usize, twice_sz: i32) -> Result<DeterminantBasis> {
    let spins = (0..m)
        .map(|p| if p % 2 == 0 { SpinLabel::Up } else { SpinLabel::Down })
        .collect();
    build_determinants_for(spins, n, Some(twice_sz))
}

/// Sector over arbitrary spin labels. Spinor bases ignore `twice_sz`.
pub fn build_determinants_for(spins: Vec<SpinLabel>, n: usize, twice_sz: Option<i32>) -> Result<DeterminantBasis> {
    let m = spins.len();
    if m > 64 {
        return Err(Error::Configuration(format!("{m} spin-orbitals exceed the 64-bit determinant limit")));
    }
    if n > m {
        return Err(Error::Configuration(format!("{n} electrons in {m} spin-orbitals")));
    }
    let mixed = spins.contains(&SpinLabel::Mixed);
    let mut dets = Vec::new();
    if mixed {
        if spins.iter().any(|s| *s != SpinLabel::Mixed) {
            return Err(Error::BasisMismatch("basis mixes spinor and collinear states".into()));
        }
        combinations(&(0..m).collect::<Vec<_>>(), n, &mut |bits| dets.push(bits));
    } else {
        let sz = twice_sz.ok_or_else(|| Error::Configuration("collinear sector needs 2S_z".into()))?;
        if (n as i32 + sz) % 2 != 0 || sz.unsigned_abs() as usize > n {
            return Err(Error::Configuration(format!("2S_z = {sz} is impossible for {n} electrons")));
        }
        let n_up = ((n as i32 + sz) / 2) as usize;
        let n_down = n - n_up;
        let up: Vec<usize> = (0..m).filter(|&p| spins[p] == SpinLabel::Up).collect();
        let down: Vec<usize> = (0..m).filter(|&p| spins[p] == SpinLabel::Down).collect();
        let mut ups = Vec::new();
        combinations(&up, n_up, &mut |b| ups.push(b));
        let mut downs = Vec::new();
        combinations(&down, n_down, &mut |b| downs.push(b));
        for &u in &ups {
            for &d in &downs {
                dets.push(u | d);
            }
        }
    }
    if dets.is_empty() {
        return Err(Error::Configuration(format!("empty determinant sector for {n} electrons in {m} spin-orbitals")));
    }
    dets.sort_unstable();
    Ok(DeterminantBasis::from_dets(spins, n, if mixed { None } else { twice_sz }, dets))
}

fn combinations(items: &[usize], k: usize, out: &mut dyn FnMut(u64)) {
    fn rec(items: &[usize], k: usize, start: usize, acc: u64, out: &mut dyn FnMut(u64)) {
        if k == 0 {
            out(acc);
            return;
        }
        for i in start..=items.len().saturating_sub(k) {
            rec(items, k - 1, i + 1, acc | (1u64 << items[i]), out);
        }
    }
    if k <= items.len() {
        rec(items, k, 0, 0, out);
    }
}

impl DeterminantBasis {
    fn from_dets(spins: Vec<SpinLabel>, electrons: usize, twice_sz: Option<i32>, dets: Vec<u64>) -> Self {
        let index = dets.iter().enumerate().map(|(i, &d)| (d, i)).collect();
        DeterminantBasis {
            spins,
            electrons,
            twice_sz,
            dets,
            index,
        }
    }

    pub fn len(&self) -> usize {
        self.dets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dets.is_empty()
    }

    pub fn orbitals(&self) -> usize {
        self.spins.len()
    }

    pub fn position(&self, det: u64) -> Option<usize> {
        self.index.get(&det).copied()
    }

    /// Keeps determinants within `level` excitations of `reference`.
    pub fn truncated(&self, reference: u64, level: usize) -> Result<DeterminantBasis> {
        let dets: Vec<u64> = self
            .dets
            .iter()
            .copied()
            .filter(|d| excitation_level(*d, reference) <= level)
            .collect();
        if dets.is_empty() {
            return Err(Error::Configuration("excitation limit leaves no determinants".into()));
        }
        Ok(DeterminantBasis::from_dets(self.spins.clone(), self.electrons, self.twice_sz, dets))
    }
}

pub fn excitation_level(a: u64, b: u64) -> usize {
    ((a ^ b).count_ones() / 2) as usize
}

/// Spin-orbital indices of set bits, ascending.
pub fn occupied(det: u64) -> Vec<usize> {
    let mut out = Vec::with_capacity(det.count_ones() as usize);
    let mut d = det;
    while d != 0 {
        let p = d.trailing_zeros() as usize;
        out.push(p);
        d &= d - 1;
    }
    out
}

/// Applies creation (`true`) and annihilation operators right to left;
/// `None` when the result vanishes.
pub fn apply_operators(det: u64, ops: &[(bool, usize)]) -> Option<(u64, f64)> {
    let mut d = det;
    let mut sign = 1.0;
    for &(create, p) in ops.iter().rev() {
        let bit = 1u64 << p;
        if create == (d & bit != 0) {
            return None;
        }
        if (d & (bit - 1)).count_ones() % 2 == 1 {
            sign = -sign;
        }
        d ^= bit;
    }
    Some((d, sign))
}

/// `⟨bra|H|ket⟩` by the Slater–Condon rules.
pub fn hamiltonian_element(bra: u64, ket: u64, ints: &OrbitalIntegrals) -> c64 {
    let diff = bra ^ ket;
    match diff.count_ones() {
        0 => {
            let occ = occupied(ket);
            let mut e = ZERO;
            for (x, &i) in occ.iter().enumerate() {
                e += ints.h(i, i);
                for &j in &occ[x + 1..] {
                    e += ints.antisymmetrized(i, j, i, j);
                }
            }
            e
        }
        2 => {
            let a = (ket & diff).trailing_zeros() as usize;
            let r = (bra & diff).trailing_zeros() as usize;
            let Some((_, sign)) = apply_operators(ket, &[(true, r), (false, a)]) else {
                return ZERO;
            };
            let mut e = ints.h(r, a);
            for j in occupied(ket & bra) {
                e += ints.antisymmetrized(r, j, a, j);
            }
            e * sign
        }
        4 => {
            let holes = occupied(ket & diff);
            let parts = occupied(bra & diff);
            let (a, b) = (holes[0], holes[1]);
            let (r, s) = (parts[0], parts[1]);
            let Some((_, sign)) = apply_operators(ket, &[(true, r), (true, s), (false, b), (false, a)]) else {
                return ZERO;
            };
            ints.antisymmetrized(r, s, a, b) * sign
        }
        _ => ZERO,
    }
}

/// Determinants reachable from `det` by one or two excitations, including
/// those outside any particular sector.
pub fn connected(det: u64, m: usize) -> Vec<u64> {
    let occ = occupied(det);
    let virt: Vec<usize> = (0..m).filter(|p| det & (1u64 << p) == 0).collect();
    let mut out = Vec::new();
    for &i in &occ {
        for &a in &virt {
            out.push(det ^ (1u64 << i) ^ (1u64 << a));
        }
    }
    for (x, &i) in occ.iter().enumerate() {
        for &j in &occ[x + 1..] {
            for (y, &a) in virt.iter().enumerate() {
                for &b in &virt[y + 1..] {
                    out.push(det ^ (1u64 << i) ^ (1u64 << j) ^ (1u64 << a) ^ (1u64 << b));
                }
            }
        }
    }
    out
}
