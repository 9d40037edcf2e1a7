//! Sparse tight-binding Hamiltonian over an atom set.

pub mod bulk;
pub mod params;
pub mod slater_koster;

use std::ops::{AddAssign, Mul};

use faer::c64;
use faer::sparse::{SparseColMat, Triplet};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{AtomSet, DeviceGeometry, Species, BOND_DIRECTIONS, NO_NEIGHBOR};
use crate::units::COULOMB_EV_NM;
pub use params::{ModelKind, ParameterFile, SkParameters};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SurfaceTreatment {
    /// Bonds cut by the box are dropped.
    #[default]
    HardWall,
    /// Constant shift on every orbital of under-coordinated atoms.
    UniformShift { shift_ev: f64 },
    /// Raises the sp³ hybrid pointing along each cut bond.
    DanglingBondShift { shift_ev: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TbParameterSet {
    pub kind: ModelKind,
    pub spin_orbit: bool,
    pub surface: SurfaceTreatment,
    pub checksum: String,
}

impl TbParameterSet {
    pub fn from_file(file: &ParameterFile) -> Self {
        TbParameterSet {
            kind: file.kind,
            spin_orbit: false,
            surface: SurfaceTreatment::HardWall,
            checksum: file.checksum.clone(),
        }
    }

    pub fn silicon() -> Self {
        Self::from_file(&ParameterFile::silicon())
    }

    pub fn single_s(onsite: f64, hopping: f64) -> Self {
        TbParameterSet {
            kind: ModelKind::SingleS { onsite, hopping },
            spin_orbit: false,
            surface: SurfaceTreatment::HardWall,
            checksum: String::from("inline"),
        }
    }

    pub fn with_surface(mut self, surface: SurfaceTreatment) -> Self {
        self.surface = surface;
        self
    }

    pub fn with_spin_orbit(mut self, on: bool) -> Self {
        self.spin_orbit = on;
        self
    }

    pub fn orbitals_per_atom(&self) -> usize {
        self.kind.orbitals_per_atom()
    }

    /// Spin-orbit only acts on the p shell of the 10-orbital model.
    pub fn spin_orbit_active(&self) -> bool {
        self.spin_orbit && matches!(self.kind, ModelKind::Sp3d5sStar(p) if p.spin_orbit_lambda != 0.0)
    }
}

/// Per-atom scalar potential, eV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OnsitePotential(pub Vec<f64>);

impl OnsitePotential {
    pub fn zeros(n: usize) -> Self {
        OnsitePotential(vec![0.0; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn plus(&self, other: &OnsitePotential) -> OnsitePotential {
        assert_eq!(self.len(), other.len());
        OnsitePotential(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn shifted(&self, c: f64) -> OnsitePotential {
        OnsitePotential(self.0.iter().map(|v| v + c).collect())
    }
}

/// Screened donor attraction; the impurity's own site carries its
/// central-cell correction instead of the divergent Coulomb term.
pub fn impurity_potential(atoms: &AtomSet, geometry: &DeviceGeometry) -> OnsitePotential {
    let strength = COULOMB_EV_NM / geometry.dielectric_constant;
    let sites: Vec<(usize, [f64; 3], f64)> = atoms
        .impurity_atoms
        .iter()
        .zip(&geometry.impurities)
        .map(|(&i, imp)| (i, atoms.positions[i], imp.central_cell_correction))
        .collect();
    let values = atoms
        .positions
        .iter()
        .enumerate()
        .map(|(a, r)| {
            sites
                .iter()
                .map(|&(i, p, ccc)| {
                    if i == a {
                        ccc
                    } else {
                        let d = ((r[0] - p[0]).powi(2) + (r[1] - p[1]).powi(2) + (r[2] - p[2]).powi(2)).sqrt();
                        -strength / d
                    }
                })
                .sum()
        })
        .collect();
    OnsitePotential(values)
}

/// Scalars the Hamiltonian can act on.
pub trait Amplitude: Copy + Default + AddAssign + Mul<f64, Output = Self> + Send + Sync {}
impl Amplitude for f64 {}
impl Amplitude for c64 {}

/// Block-sparse Hamiltonian. Spatial blocks are real; spin enters through
/// a Kronecker factor plus the on-site spin-orbit term.
#[derive(Debug, Clone)]
pub struct SparseHamiltonian {
    norb: usize,
    sites: Vec<[i32; 3]>,
    neighbors: Vec<[u32; 4]>,
    sublattice: Vec<u8>,
    /// `hops[sublattice][direction]`, row-major `norb × norb`.
    hops: [[Vec<f64>; 4]; 2],
    onsite: Vec<f64>,
    potential: Vec<f64>,
    /// Extra on-site block (row-major) for surface atoms.
    surface_slot: Vec<u32>,
    surface_blocks: Vec<Vec<f64>>,
    spin_orbit: Option<f64>,
}

const NO_SLOT: u32 = u32::MAX;

pub fn assemble(atoms: &AtomSet, params: &TbParameterSet, potential: &OnsitePotential) -> Result<SparseHamiltonian> {
    if potential.len() != atoms.len() {
        return Err(Error::Assembly(format!(
            "potential has {} entries for {} atoms",
            potential.len(),
            atoms.len()
        )));
    }
    let norb = params.orbitals_per_atom();
    let quarter = atoms.lattice_constant / 4.0;
    let inv_len = 1.0 / (3f64.sqrt() * quarter);

    let mut hops: [[Vec<f64>; 4]; 2] = Default::default();
    for (s, sign) in [(0usize, 1.0), (1usize, -1.0)] {
        for (k, d) in BOND_DIRECTIONS.iter().enumerate() {
            let c = d.map(|x| sign * x as f64 * quarter * inv_len);
            hops[s][k] = match params.kind {
                ModelKind::Sp3d5sStar(p) => {
                    slater_koster::block(&p, c).iter().flat_map(|r| r.iter().copied()).collect()
                }
                ModelKind::SingleS { hopping, .. } => vec![hopping],
            };
        }
    }
    let onsite = match params.kind {
        ModelKind::Sp3d5sStar(p) => slater_koster::onsite_energies(&p).to_vec(),
        ModelKind::SingleS { onsite, .. } => vec![onsite],
    };

    let mut surface_slot = vec![NO_SLOT; atoms.len()];
    let mut surface_blocks = Vec::new();
    if params.surface != SurfaceTreatment::HardWall {
        for a in 0..atoms.len() {
            let missing: Vec<usize> = (0..4).filter(|&k| atoms.neighbors[a][k] == NO_NEIGHBOR).collect();
            if missing.is_empty() {
                continue;
            }
            let mut blk = vec![0.0; norb * norb];
            match params.surface {
                SurfaceTreatment::UniformShift { shift_ev } => {
                    for o in 0..norb {
                        blk[o * norb + o] = shift_ev;
                    }
                }
                SurfaceTreatment::DanglingBondShift { shift_ev } => {
                    for &k in &missing {
                        let b = atoms.bond_vector(a, k);
                        let len = (b[0] * b[0] + b[1] * b[1] + b[2] * b[2]).sqrt();
                        let mut h = vec![0.0; norb];
                        if norb == slater_koster::NORB {
                            h[slater_koster::S] = 0.5;
                            for ax in 0..3 {
                                h[slater_koster::PX + ax] = 0.5 * 3f64.sqrt() * b[ax] / len;
                            }
                        } else {
                            h[0] = 0.5;
                        }
                        for i in 0..norb {
                            for j in 0..norb {
                                blk[i * norb + j] += shift_ev * h[i] * h[j];
                            }
                        }
                    }
                }
                SurfaceTreatment::HardWall => unreachable!(),
            }
            surface_slot[a] = surface_blocks.len() as u32;
            surface_blocks.push(blk);
        }
    }

    let spin_orbit = match params.kind {
        ModelKind::Sp3d5sStar(p) if params.spin_orbit_active() => Some(p.spin_orbit_lambda),
        _ => None,
    };

    Ok(SparseHamiltonian {
        norb,
        sites: atoms.sites.clone(),
        neighbors: atoms.neighbors.clone(),
        sublattice: (0..atoms.len()).map(|a| atoms.sublattice(a) as u8).collect(),
        hops,
        onsite,
        potential: potential.0.clone(),
        surface_slot,
        surface_blocks,
        spin_orbit,
    })
}

/// `(L_k)_{ab} = −i ε_{kab}` on (px, py, pz) combined with Pauli σ_k.
/// Returns the 6×6 block over (p axis, spin) with spin fastest.
pub fn spin_orbit_block(lambda: f64) -> [[c64; 6]; 6] {
    let i = c64::new(0.0, 1.0);
    let one = c64::new(1.0, 0.0);
    let zero = c64::new(0.0, 0.0);
    let sigma: [[[c64; 2]; 2]; 3] = [
        [[zero, one], [one, zero]],
        [[zero, -i], [i, zero]],
        [[one, zero], [zero, -one]],
    ];
    let eps = |k: usize, a: usize, b: usize| -> f64 {
        match (k, a, b) {
            (0, 1, 2) | (1, 2, 0) | (2, 0, 1) => 1.0,
            (0, 2, 1) | (1, 0, 2) | (2, 1, 0) => -1.0,
            _ => 0.0,
        }
    };
    let mut out = [[zero; 6]; 6];
    for a in 0..3 {
        for b in 0..3 {
            for s in 0..2 {
                for t in 0..2 {
                    let mut v = zero;
                    for k in 0..3 {
                        v += -i * eps(k, a, b) * sigma[k][s][t];
                    }
                    out[a * 2 + s][b * 2 + t] = v * lambda;
                }
            }
        }
    }
    out
}

impl SparseHamiltonian {
    pub fn orbitals_per_atom(&self) -> usize {
        self.norb
    }

    pub fn atom_count(&self) -> usize {
        self.neighbors.len()
    }

    /// Dimension without spin.
    pub fn spatial_dim(&self) -> usize {
        self.atom_count() * self.norb
    }

    /// Dimension with spin: atoms × orbitals × 2.
    pub fn dim(&self) -> usize {
        2 * self.spatial_dim()
    }

    pub fn has_spin_orbit(&self) -> bool {
        self.spin_orbit.is_some()
    }

    pub fn potential(&self) -> &[f64] {
        &self.potential
    }

    pub fn with_potential(&self, potential: &OnsitePotential) -> Result<SparseHamiltonian> {
        if potential.len() != self.atom_count() {
            return Err(Error::Assembly(format!(
                "potential has {} entries for {} atoms",
                potential.len(),
                self.atom_count()
            )));
        }
        let mut h = self.clone();
        h.potential = potential.0.clone();
        Ok(h)
    }

    fn hop(&self, atom: usize, k: usize) -> &[f64] {
        &self.hops[self.sublattice[atom] as usize][k]
    }

    /// Diagonal-in-spin part acting on `nspin` interleaved components.
    fn apply_blocks<T: Amplitude>(&self, x: &[T], y: &mut [T], nspin: usize) {
        let norb = self.norb;
        let stride = norb * nspin;
        for (a, ya) in y.chunks_exact_mut(stride).enumerate() {
            let xa = &x[a * stride..(a + 1) * stride];
            let v = self.potential[a];
            for o in 0..norb {
                let e = self.onsite[o] + v;
                for s in 0..nspin {
                    ya[o * nspin + s] = xa[o * nspin + s] * e;
                }
            }
            if self.surface_slot[a] != NO_SLOT {
                let blk = &self.surface_blocks[self.surface_slot[a] as usize];
                for i in 0..norb {
                    for j in 0..norb {
                        let w = blk[i * norb + j];
                        if w != 0.0 {
                            for s in 0..nspin {
                                ya[i * nspin + s] += xa[j * nspin + s] * w;
                            }
                        }
                    }
                }
            }
            for k in 0..4 {
                let b = self.neighbors[a][k];
                if b == NO_NEIGHBOR {
                    continue;
                }
                let xb = &x[b as usize * stride..(b as usize + 1) * stride];
                let blk = self.hop(a, k);
                for i in 0..norb {
                    let row = &blk[i * norb..(i + 1) * norb];
                    for s in 0..nspin {
                        let mut acc = T::default();
                        for j in 0..norb {
                            acc += xb[j * nspin + s] * row[j];
                        }
                        ya[i * nspin + s] += acc;
                    }
                }
            }
        }
    }

    /// y = H x on the spin-free space (requires spin-orbit off).
    pub fn apply_spatial<T: Amplitude>(&self, x: &[T], y: &mut [T]) -> Result<()> {
        if x.len() != self.spatial_dim() || y.len() != self.spatial_dim() {
            return Err(Error::BasisMismatch(format!(
                "vector length {} / {} for spatial dimension {}",
                x.len(),
                y.len(),
                self.spatial_dim()
            )));
        }
        if self.has_spin_orbit() {
            return Err(Error::Assembly("spatial product undefined with spin-orbit on".into()));
        }
        self.apply_blocks(x, y, 1);
        Ok(())
    }

    /// y = H v on the full spin space, spin index fastest.
    pub fn apply(&self, v: &[c64]) -> Result<Vec<c64>> {
        if v.len() != self.dim() {
            return Err(Error::BasisMismatch(format!(
                "vector length {} for dimension {}",
                v.len(),
                self.dim()
            )));
        }
        let mut y = vec![c64::new(0.0, 0.0); v.len()];
        self.apply_blocks(v, &mut y, 2);
        if let Some(lambda) = self.spin_orbit {
            let so = spin_orbit_block(lambda);
            let stride = self.norb * 2;
            let p0 = slater_koster::PX * 2;
            for (ya, xa) in y.chunks_exact_mut(stride).zip(v.chunks_exact(stride)) {
                for r in 0..6 {
                    let mut acc = c64::new(0.0, 0.0);
                    for c in 0..6 {
                        acc += so[r][c] * xa[p0 + c];
                    }
                    ya[p0 + r] += acc;
                }
            }
        }
        Ok(y)
    }

    /// Spatial block entries `(row, col, value)` with both endpoints in
    /// atom-major, orbital-fastest order.
    pub fn spatial_entries(&self) -> Vec<(usize, usize, f64)> {
        let norb = self.norb;
        let mut out = Vec::with_capacity(self.atom_count() * norb * norb * 5);
        for a in 0..self.atom_count() {
            let v = self.potential[a];
            let surf = (self.surface_slot[a] != NO_SLOT).then(|| &self.surface_blocks[self.surface_slot[a] as usize]);
            for i in 0..norb {
                for j in 0..norb {
                    let mut w = if i == j { self.onsite[i] + v } else { 0.0 };
                    if let Some(blk) = surf {
                        w += blk[i * norb + j];
                    }
                    if w != 0.0 || i == j {
                        out.push((a * norb + i, a * norb + j, w));
                    }
                }
            }
            for k in 0..4 {
                let b = self.neighbors[a][k];
                if b == NO_NEIGHBOR {
                    continue;
                }
                let blk = self.hop(a, k);
                for i in 0..norb {
                    for j in 0..norb {
                        let w = blk[i * norb + j];
                        if w != 0.0 {
                            out.push((a * norb + i, b as usize * norb + j, w));
                        }
                    }
                }
            }
        }
        out
    }

    /// Full spin-space entries, spin fastest.
    pub fn entries(&self) -> Vec<(usize, usize, c64)> {
        let mut out: Vec<(usize, usize, c64)> = self
            .spatial_entries()
            .into_iter()
            .flat_map(|(r, c, w)| (0..2).map(move |s| (2 * r + s, 2 * c + s, c64::new(w, 0.0))))
            .collect();
        if let Some(lambda) = self.spin_orbit {
            let so = spin_orbit_block(lambda);
            let stride = self.norb * 2;
            for a in 0..self.atom_count() {
                let base = a * stride + slater_koster::PX * 2;
                for r in 0..6 {
                    for c in 0..6 {
                        if so[r][c] != c64::new(0.0, 0.0) {
                            out.push((base + r, base + c, so[r][c]));
                        }
                    }
                }
            }
        }
        out
    }

    /// `H − σ` on the spin-free space as a compressed sparse column matrix,
    /// rows and columns relabelled through `perm` (new index = perm[old]).
    pub fn spatial_csc(&self, shift: f64, perm: Option<&[usize]>) -> Result<SparseColMat<usize, f64>> {
        let n = self.spatial_dim();
        let map = |i: usize| perm.map_or(i, |p| p[i]);
        let triplets: Vec<Triplet<usize, usize, f64>> = self
            .spatial_entries()
            .into_iter()
            .map(|(r, c, w)| Triplet::new(map(r), map(c), if r == c { w - shift } else { w }))
            .collect();
        SparseColMat::try_new_from_triplets(n, n, &triplets)
            .map_err(|e| Error::Assembly(format!("sparse assembly failed: {e:?}")))
    }

    pub fn full_csc(&self, shift: f64, perm: Option<&[usize]>) -> Result<SparseColMat<usize, c64>> {
        let n = self.dim();
        let map = |i: usize| perm.map_or(i, |p| p[i]);
        let triplets: Vec<Triplet<usize, usize, c64>> = self
            .entries()
            .into_iter()
            .map(|(r, c, w)| Triplet::new(map(r), map(c), if r == c { w - shift } else { w }))
            .collect();
        SparseColMat::try_new_from_triplets(n, n, &triplets)
            .map_err(|e| Error::Assembly(format!("sparse assembly failed: {e:?}")))
    }

    /// Dense spatial matrix, column-major.
    pub fn dense_spatial(&self) -> Vec<f64> {
        let n = self.spatial_dim();
        let mut m = vec![0.0; n * n];
        for (r, c, w) in self.spatial_entries() {
            m[c * n + r] += w;
        }
        m
    }

    /// Dense full spin-space matrix, column-major.
    pub fn dense(&self) -> Vec<c64> {
        let n = self.dim();
        let mut m = vec![c64::new(0.0, 0.0); n * n];
        for (r, c, w) in self.entries() {
            m[c * n + r] += w;
        }
        m
    }

    /// Lattice coordinates (units of a/4) used for fill-reducing orderings.
    pub fn sites(&self) -> &[[i32; 3]] {
        &self.sites
    }

    /// Atom-level adjacency.
    pub fn neighbor_table(&self) -> &[[u32; 4]] {
        &self.neighbors
    }
}

/// Atoms flagged as impurity sites.
pub fn impurity_mask(atoms: &AtomSet) -> Vec<bool> {
    atoms.species.iter().map(|s| *s == Species::Impurity).collect()
}
