//! Unrestricted Hartree-Fock in a fixed spin-orbital basis.

use faer::c64;
use serde::{Deserialize, Serialize};

use super::basis::OrbitalIntegrals;
use super::SpinConfiguration;
use crate::eigensolver::SpinLabel;
use crate::error::{Error, Result};
use crate::linalg;

const ZERO: c64 = c64 { re: 0.0, im: 0.0 };

/// HF orbital as coefficients over the TB spin-orbitals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HfState {
    pub coefficients: Vec<c64>,
    #[serde(rename = "energy_ev")]
    pub energy: f64,
    pub spin: SpinLabel,
}

/// Spin-orbital indices of one spin channel.
#[derive(Debug, Clone, PartialEq)]
pub struct Channel {
    pub spin: SpinLabel,
    pub members: Vec<usize>,
    pub occupied: usize,
}

/// Splits the basis into channels and assigns occupations.
pub fn channels(spins: &[SpinLabel], config: &SpinConfiguration) -> Result<Vec<Channel>> {
    let n = config.electrons();
    if spins.len() < n {
        return Err(Error::Configuration(format!(
            "{} spin-orbitals cannot hold {n} electrons",
            spins.len()
        )));
    }
    let pick = |s: SpinLabel| -> Vec<usize> { (0..spins.len()).filter(|&k| spins[k] == s).collect() };
    let mixed = pick(SpinLabel::Mixed);
    let out = if !mixed.is_empty() {
        if mixed.len() != spins.len() {
            return Err(Error::BasisMismatch("basis mixes spinor and collinear states".into()));
        }
        vec![Channel {
            spin: SpinLabel::Mixed,
            members: mixed,
            occupied: n,
        }]
    } else {
        vec![
            Channel {
                spin: SpinLabel::Up,
                members: pick(SpinLabel::Up),
                occupied: config.up(),
            },
            Channel {
                spin: SpinLabel::Down,
                members: pick(SpinLabel::Down),
                occupied: config.down(),
            },
        ]
    };
    for c in &out {
        if c.members.len() < c.occupied {
            return Err(Error::Configuration(format!(
                "{:?} channel has {} states for {} electrons",
                c.spin,
                c.members.len(),
                c.occupied
            )));
        }
    }
    Ok(out)
}

/// `D_pq = Σ_i C_p^i C_q^i*`, row-major.
pub fn density_matrix(m: usize, occupied: &[&HfState]) -> Vec<c64> {
    let mut d = vec![ZERO; m * m];
    for s in occupied {
        let c = &s.coefficients;
        for p in 0..m {
            if c[p] == ZERO {
                continue;
            }
            for q in 0..m {
                d[p * m + q] += c[p] * c[q].conj();
            }
        }
    }
    d
}

/// `F_pq = h_pq + Σ_rs D_sr [(pq|rs) − (ps|rq)]`, row-major. Spin deltas in
/// the integrals confine exchange to equal spins; the self term `i = j`
/// cancels between Coulomb and exchange.
pub fn build_fock(ints: &OrbitalIntegrals, density: &[c64]) -> Vec<c64> {
    let m = ints.len();
    let g = &ints.two_body;
    let mut f = ints.one_body.clone();
    let active: Vec<(usize, usize, c64)> = (0..m)
        .flat_map(|r| (0..m).map(move |s| (r, s)))
        .filter_map(|(r, s)| {
            let d = density[s * m + r];
            (d != ZERO).then_some((r, s, d))
        })
        .collect();
    for p in 0..m {
        for q in 0..m {
            let mut acc = ZERO;
            for &(r, s, d) in &active {
                acc += d * (g.get(p, q, r, s) - g.get(p, s, r, q));
            }
            f[p * m + q] += acc;
        }
    }
    f
}

/// `E = ½ Σ_pq D_qp (h_pq + F_pq)`.
pub fn energy(ints: &OrbitalIntegrals, density: &[c64], fock: &[c64]) -> f64 {
    let m = ints.len();
    let mut e = ZERO;
    for p in 0..m {
        for q in 0..m {
            e += density[q * m + p] * (ints.one_body[p * m + q] + fock[p * m + q]);
        }
    }
    0.5 * e.re
}

/// Eigenstates of the Fock matrix per channel, ascending within each
/// channel; the overlap is the identity because the TB basis is orthonormal.
pub fn solve_hf(fock: &[c64], channels: &[Channel]) -> Vec<Vec<HfState>> {
    let m = (fock.len() as f64).sqrt().round() as usize;
    channels
        .iter()
        .map(|ch| {
            let k = ch.members.len();
            let mut sub = vec![ZERO; k * k];
            for (j, &q) in ch.members.iter().enumerate() {
                for (i, &p) in ch.members.iter().enumerate() {
                    sub[j * k + i] = fock[p * m + q];
                }
            }
            let (vals, vecs) = linalg::hermitian_eigh(k, &sub);
            (0..k)
                .map(|i| {
                    let mut coefficients = vec![ZERO; m];
                    for (a, &p) in ch.members.iter().enumerate() {
                        coefficients[p] = vecs[i * k + a];
                    }
                    fix_phase(&mut coefficients);
                    HfState {
                        coefficients,
                        energy: vals[i],
                        spin: ch.spin,
                    }
                })
                .collect()
        })
        .collect()
}

fn fix_phase(c: &mut [c64]) {
    let mut best = 0;
    for (i, x) in c.iter().enumerate() {
        if x.norm() > c[best].norm() + 1e-12 {
            best = i;
        }
    }
    let n = c[best].norm();
    if n > 0.0 {
        let phase = c[best].conj() / n;
        for x in c.iter_mut() {
            *x *= phase;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UhfSettings {
    pub max_iterations: usize,
    pub density_tolerance: f64,
    #[serde(rename = "energy_tolerance_ev")]
    pub energy_tolerance: f64,
    pub diis_history: usize,
    /// Also try broken-symmetry starts (±45° HOMO/LUMO rotation, promoted
    /// second channel) when starting cold, and keep the lowest solution.
    pub guess_mix: bool,
}

impl Default for UhfSettings {
    fn default() -> Self {
        UhfSettings {
            max_iterations: 500,
            density_tolerance: 1e-10,
            energy_tolerance: 1e-12,
            diis_history: 8,
            guess_mix: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct UhfSolution {
    /// Per channel, ascending.
    pub states: Vec<Vec<HfState>>,
    pub channels: Vec<Channel>,
    pub density: Vec<c64>,
    pub energy: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl UhfSolution {
    pub fn occupied(&self) -> Vec<&HfState> {
        self.channels
            .iter()
            .zip(&self.states)
            .flat_map(|(ch, st)| st[..ch.occupied].iter())
            .collect()
    }
}

fn occupied_density(m: usize, channels: &[Channel], states: &[Vec<HfState>]) -> Vec<c64> {
    let occ: Vec<&HfState> = channels
        .iter()
        .zip(states)
        .flat_map(|(ch, st)| st[..ch.occupied].iter())
        .collect();
    density_matrix(m, &occ)
}

/// Gram–Schmidt within each channel, in the given order.
pub fn orthonormalize(states: &mut [HfState]) {
    for i in 0..states.len() {
        let (done, rest) = states.split_at_mut(i);
        let s = &mut rest[0];
        for _ in 0..2 {
            for prev in done.iter().filter(|p| p.spin == s.spin) {
                let ov: c64 = prev
                    .coefficients
                    .iter()
                    .zip(&s.coefficients)
                    .map(|(a, b)| a.conj() * b)
                    .sum();
                for (x, y) in s.coefficients.iter_mut().zip(&prev.coefficients) {
                    *x -= ov * y;
                }
            }
        }
        let n = s.coefficients.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        if n > 0.0 {
            for x in s.coefficients.iter_mut() {
                *x /= n;
            }
        }
    }
}

struct Diis {
    history: usize,
    focks: Vec<Vec<c64>>,
    errors: Vec<Vec<c64>>,
}

impl Diis {
    fn push(&mut self, fock: Vec<c64>, error: Vec<c64>) {
        if self.focks.len() == self.history {
            self.focks.remove(0);
            self.errors.remove(0);
        }
        self.focks.push(fock);
        self.errors.push(error);
    }

    fn extrapolate(&mut self) -> Option<Vec<c64>> {
        while self.focks.len() >= 2 {
            let n = self.focks.len();
            let dim = n + 1;
            let mut b = vec![0.0; dim * dim];
            for i in 0..n {
                for j in 0..n {
                    let v: f64 = self.errors[i]
                        .iter()
                        .zip(&self.errors[j])
                        .map(|(a, c)| (a.conj() * c).re)
                        .sum();
                    b[j * dim + i] = v;
                }
                b[n * dim + i] = -1.0;
                b[i * dim + n] = -1.0;
            }
            let mut rhs = vec![0.0; dim];
            rhs[n] = -1.0;
            if let Some(x) = linalg::solve_real(dim, &b, &rhs) {
                let mut f = vec![ZERO; self.focks[0].len()];
                for (c, fi) in x[..n].iter().zip(&self.focks) {
                    for (o, v) in f.iter_mut().zip(fi) {
                        *o += v * *c;
                    }
                }
                return Some(f);
            }
            self.focks.remove(0);
            self.errors.remove(0);
        }
        None
    }
}

/// Cold-start densities from the core Hamiltonian. With two occupied
/// channels, two broken-symmetry starts are added: HOMO and LUMO rotated by
/// ±45° in opposite channels, and the second channel promoted to its LUMO.
/// Near-degenerate pairs come out of the eigensolver in arbitrary
/// combinations, so neither start alone reliably separates the spins.
fn cold_starts(ints: &OrbitalIntegrals, chans: &[Channel], mix: bool) -> Vec<Vec<c64>> {
    let m = ints.len();
    let core = solve_hf(&ints.one_body, chans);
    let mut out = vec![occupied_density(m, chans, &core)];
    let split = chans.len() == 2 && chans.iter().zip(&core).all(|(c, s)| c.occupied > 0 && c.occupied < s.len());
    if !(mix && split) {
        return out;
    }
    let mut rotated = core.clone();
    for (ci, (ch, s)) in chans.iter().zip(rotated.iter_mut()).enumerate() {
        let homo = ch.occupied - 1;
        let angle = if ci == 0 { 0.25 } else { -0.25 } * std::f64::consts::PI;
        let (co, si) = (angle.cos(), angle.sin());
        let (a, b) = (s[homo].coefficients.clone(), s[homo + 1].coefficients.clone());
        for p in 0..m {
            s[homo].coefficients[p] = a[p] * co + b[p] * si;
            s[homo + 1].coefficients[p] = b[p] * co - a[p] * si;
        }
    }
    out.push(occupied_density(m, chans, &rotated));
    let mut promoted = core;
    let homo = chans[1].occupied - 1;
    promoted[1].swap(homo, homo + 1);
    out.push(occupied_density(m, chans, &promoted));
    out
}

/// DIIS-accelerated fixed-point iterations from `density`; returns the last
/// density, its energy, the iteration count and whether tolerances were met.
fn iterate(ints: &OrbitalIntegrals, chans: &[Channel], mut density: Vec<c64>, settings: &UhfSettings) -> (Vec<c64>, f64, usize, bool) {
    let m = ints.len();
    let mut diis = Diis {
        history: settings.diis_history.max(1),
        focks: Vec::new(),
        errors: Vec::new(),
    };
    let mut previous = f64::NAN;
    let mut converged = false;
    let mut iterations = 0;
    for it in 1..=settings.max_iterations {
        iterations = it;
        let fock = build_fock(ints, &density);
        let e = energy(ints, &density, &fock);
        let err = commutator(m, &fock, &density);
        diis.push(fock.clone(), err);
        let step = if settings.diis_history > 0 {
            diis.extrapolate().unwrap_or(fock)
        } else {
            fock
        };
        let st = solve_hf(&step, chans);
        let next = occupied_density(m, chans, &st);
        let change = next.iter().zip(&density).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        density = next;
        let de = (e - previous).abs();
        previous = e;
        log::trace!("uhf iteration {it}: E={e:.12} eV, max|ΔD|={change:.2e}");
        if change < settings.density_tolerance && de < settings.energy_tolerance {
            converged = true;
            break;
        }
    }
    let fock = build_fock(ints, &density);
    let e = energy(ints, &density, &fock);
    (density, e, iterations, converged)
}

/// Self-consistent UHF in the spin-orbital basis of `ints`. `guess` holds
/// occupied orbitals to start from; without it the core Hamiltonian is
/// diagonalized.
pub fn solve_uhf(
    ints: &OrbitalIntegrals,
    config: &SpinConfiguration,
    guess: Option<&[HfState]>,
    settings: &UhfSettings,
) -> Result<UhfSolution> {
    let m = ints.len();
    let chans = channels(&ints.spins, config)?;
    let starts: Vec<Vec<c64>> = match guess {
        Some(g) => {
            let refs: Vec<&HfState> = g.iter().collect();
            vec![density_matrix(m, &refs)]
        }
        None => cold_starts(ints, &chans, settings.guess_mix),
    };
    let mut best: Option<(Vec<c64>, f64, usize, bool)> = None;
    for start in starts {
        let (density, e, iterations, converged) = iterate(ints, &chans, start, settings);
        let better = match &best {
            None => true,
            Some((_, be, _, bc)) => (converged && !bc) || (converged == *bc && e < *be),
        };
        if better {
            best = Some((density, e, iterations, converged));
        }
    }
    let (density, _, iterations, converged) = best.expect("at least one start");
    // Final orbitals diagonalize the Fock matrix of the final density.
    let fock = build_fock(ints, &density);
    let states = solve_hf(&fock, &chans);
    let density = occupied_density(m, &chans, &states);
    let fock = build_fock(ints, &density);
    let e = energy(ints, &density, &fock);
    if !converged {
        log::warn!("UHF stopped after {iterations} iterations without meeting its tolerances");
    }
    Ok(UhfSolution {
        states,
        channels: chans,
        density,
        energy: e,
        iterations,
        converged,
    })
}

fn commutator(m: usize, f: &[c64], d: &[c64]) -> Vec<c64> {
    let mut out = vec![ZERO; m * m];
    for i in 0..m {
        for j in 0..m {
            let mut acc = ZERO;
            for k in 0..m {
                acc += f[i * m + k] * d[k * m + j] - d[i * m + k] * f[k * m + j];
            }
            out[i * m + j] = acc;
        }
    }
    out
}
