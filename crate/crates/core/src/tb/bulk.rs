//! Bloch Hamiltonian of the bulk two-atom primitive cell, used to validate
//! parameter tables against known band edges.

use faer::c64;

use super::params::ModelKind;
use super::slater_koster::{self, NORB, PX};
use super::spin_orbit_block;
use crate::lattice::BOND_DIRECTIONS;

/// Dense Hermitian Bloch matrix at `k` in units of 2π/a. Column-major,
/// spatial ordering (A orbitals, then B orbitals); with spin-orbit each
/// orbital carries two spin components, spin fastest.
pub fn bloch_hamiltonian(kind: &ModelKind, spin_orbit: bool, k: [f64; 3]) -> (usize, Vec<c64>) {
    let norb = kind.orbitals_per_atom();
    let nspin = if spin_orbit { 2 } else { 1 };
    let n = 2 * norb * nspin;
    let mut h = vec![c64::new(0.0, 0.0); n * n];
    let idx = |atom: usize, orb: usize, s: usize| (atom * norb + orb) * nspin + s;
    let (onsite, lambda): (Vec<f64>, f64) = match kind {
        ModelKind::Sp3d5sStar(p) => (slater_koster::onsite_energies(p).to_vec(), p.spin_orbit_lambda),
        ModelKind::SingleS { onsite, .. } => (vec![*onsite], 0.0),
    };
    for atom in 0..2 {
        for o in 0..norb {
            for s in 0..nspin {
                let i = idx(atom, o, s);
                h[i * n + i] += onsite[o];
            }
        }
        if spin_orbit && norb == NORB {
            let so = spin_orbit_block(lambda);
            for r in 0..6 {
                for c in 0..6 {
                    let i = idx(atom, PX + r / 2, r % 2);
                    let j = idx(atom, PX + c / 2, c % 2);
                    h[j * n + i] += so[r][c];
                }
            }
        }
    }
    let inv = 1.0 / 3f64.sqrt();
    for d in BOND_DIRECTIONS {
        let c = d.map(|x| x as f64 * inv);
        let phase_arg = std::f64::consts::FRAC_PI_2 * (k[0] * d[0] as f64 + k[1] * d[1] as f64 + k[2] * d[2] as f64);
        let phase = c64::new(phase_arg.cos(), phase_arg.sin());
        for a in 0..norb {
            for b in 0..norb {
                let e = match kind {
                    ModelKind::Sp3d5sStar(p) => slater_koster::element(p, a, b, c),
                    ModelKind::SingleS { hopping, .. } => *hopping,
                };
                if e == 0.0 {
                    continue;
                }
                for s in 0..nspin {
                    let i = idx(0, a, s);
                    let j = idx(1, b, s);
                    let v = phase * e;
                    h[j * n + i] += v;
                    h[i * n + j] += v.conj();
                }
            }
        }
    }
    (n, h)
}

pub fn bands(kind: &ModelKind, spin_orbit: bool, k: [f64; 3]) -> Vec<f64> {
    let (n, h) = bloch_hamiltonian(kind, spin_orbit, k);
    crate::linalg::hermitian_eigenvalues(n, &h)
}

#[derive(Debug, Clone, Copy)]
pub struct BandEdges {
    pub valence_max: f64,
    pub conduction_min: f64,
    /// Position of the conduction minimum along Γ–X as a fraction of |ΓX|.
    pub conduction_min_fraction: f64,
}

impl BandEdges {
    pub fn gap(&self) -> f64 {
        self.conduction_min - self.valence_max
    }
}

/// Scans Γ–X on a fine grid; valence maximum taken at Γ.
pub fn gamma_x_edges(kind: &ModelKind, spin_orbit: bool, samples: usize) -> BandEdges {
    let nspin = if spin_orbit { 2 } else { 1 };
    // Four valence bands per atom pair per spin (eight electrons).
    let nval = 4 * nspin;
    let gamma = bands(kind, spin_orbit, [0.0; 3]);
    let valence_max = gamma[nval - 1];
    let mut best = (f64::INFINITY, 0.0);
    for s in 0..=samples {
        let f = s as f64 / samples as f64;
        let e = bands(kind, spin_orbit, [f, 0.0, 0.0])[nval];
        if e < best.0 {
            best = (e, f);
        }
    }
    BandEdges {
        valence_max,
        conduction_min: best.0,
        conduction_min_fraction: best.1,
    }
}
