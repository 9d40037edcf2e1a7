//! Configuration interaction over TB or HF spin-orbitals.

pub mod determinants;

#[cfg(test)]
mod tests;

use std::io::{Read, Write};
use std::path::Path;

use faer::c64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::eigensolver::lanczos::{self, LanczosSettings};
use crate::eigensolver::{solve_window, SpinLabel};
use crate::error::{Error, Result};
use crate::fields::{pair_table, CoulombTensor};
use crate::hartree_fock::{basis, ManyBodyState, OrbitalIntegrals, ScfProblem, SpinConfiguration, SpinOrbitalBasis};
use crate::linalg;

pub use determinants::{build_determinants, build_determinants_for, hamiltonian_element, DeterminantBasis};

/// CI spaces at or above this size go to Lanczos.
pub const DENSE_CI_LIMIT: usize = 5000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisKind {
    Tb,
    Hf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CiOptions {
    pub roots: usize,
    /// Keep determinants within this many excitations of the reference
    /// (2 for singles and doubles); `None` is the full space.
    pub excitation_limit: Option<usize>,
    #[serde(rename = "tolerance_ev")]
    pub tolerance: f64,
}

impl Default for CiOptions {
    fn default() -> Self {
        CiOptions {
            roots: 1,
            excitation_limit: None,
            tolerance: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CiResult {
    /// Ascending, eV.
    pub energies: Vec<f64>,
    pub vectors: Vec<Vec<c64>>,
    pub basis: BasisKind,
    pub orbitals: usize,
    pub electrons: usize,
    pub determinants: usize,
}

/// `k` lowest eigenpairs of the CI matrix.
pub fn diagonalize(dets: &DeterminantBasis, ints: &OrbitalIntegrals, k: usize, tolerance: f64) -> Result<(Vec<f64>, Vec<Vec<c64>>)> {
    if ints.len() != dets.orbitals() {
        return Err(Error::BasisMismatch(format!(
            "determinants over {} spin-orbitals, integrals over {}",
            dets.orbitals(),
            ints.len()
        )));
    }
    let n = dets.len();
    let k = k.clamp(1, n);
    if n < DENSE_CI_LIMIT {
        let rows: Vec<Vec<c64>> = (0..n)
            .into_par_iter()
            .map(|j| (0..n).map(|i| hamiltonian_element(dets.dets[i], dets.dets[j], ints)).collect())
            .collect();
        let flat: Vec<c64> = rows.into_iter().flatten().collect();
        let (vals, vecs) = linalg::hermitian_eigh(n, &flat);
        let vectors = (0..k).map(|i| vecs[i * n..(i + 1) * n].to_vec()).collect();
        return Ok((vals[..k].to_vec(), vectors));
    }
    diagonalize_iterative(dets, ints, k, tolerance)
}

/// Lanczos on `c − H` with `c` a Gershgorin bound, over a sparse CI matrix.
pub fn diagonalize_iterative(
    dets: &DeterminantBasis,
    ints: &OrbitalIntegrals,
    k: usize,
    tolerance: f64,
) -> Result<(Vec<f64>, Vec<Vec<c64>>)> {
    let n = dets.len();
    let k = k.clamp(1, n);
    let sparse = sparse_rows(dets, ints);
    // Largest eigenvalues of c − H are the lowest of H.
    let bound = sparse
        .iter()
        .map(|row| row.iter().map(|(_, v)| v.norm()).sum::<f64>())
        .fold(f64::NEG_INFINITY, f64::max);
    let apply = |x: &[c64]| -> Vec<c64> {
        sparse
            .iter()
            .map(|row| row.iter().map(|&(j, v)| v * x[j]).sum())
            .collect()
    };
    let settings = LanczosSettings {
        wanted: k,
        block: k.min(4),
        max_basis: (2 * k + 12).max(40),
        tolerance,
        max_restarts: 500,
        seed: 7,
    };
    let out = lanczos::solve(
        n,
        &settings,
        |x: &mut [c64], nb: usize| {
            for v in x.chunks_exact_mut(n).take(nb) {
                let hv = apply(v);
                for (a, b) in v.iter_mut().zip(hv) {
                    *a = *a * bound - b;
                }
            }
        },
        |theta| Some(bound - theta),
        apply,
    )?;
    let mut idx: Vec<usize> = (0..out.values.len()).collect();
    idx.sort_by(|&a, &b| out.values[a].total_cmp(&out.values[b]));
    Ok((
        idx.iter().map(|&i| out.values[i]).collect(),
        idx.iter().map(|&i| out.vectors[i].clone()).collect(),
    ))
}

fn sparse_rows(dets: &DeterminantBasis, ints: &OrbitalIntegrals) -> Vec<Vec<(usize, c64)>> {
    let m = dets.orbitals();
    dets.dets
        .par_iter()
        .map(|&d| {
            let mut row = vec![(dets.position(d).unwrap_or(0), hamiltonian_element(d, d, ints))];
            for e in determinants::connected(d, m) {
                if let Some(j) = dets.position(e) {
                    let v = hamiltonian_element(d, e, ints);
                    if v != c64::new(0.0, 0.0) {
                        row.push((j, v));
                    }
                }
            }
            row
        })
        .collect()
}

fn sector(spins: Vec<SpinLabel>, config: &SpinConfiguration) -> Result<DeterminantBasis> {
    let sz = (!spins.contains(&SpinLabel::Mixed)).then(|| config.twice_sz());
    build_determinants_for(spins, config.electrons(), sz)
}

/// CI in the sector of `config` over the spin-orbitals of `ints`.
pub fn solve_ci(
    ints: &OrbitalIntegrals,
    config: &SpinConfiguration,
    reference: Option<u64>,
    kind: BasisKind,
    options: &CiOptions,
) -> Result<CiResult> {
    let mut dets = sector(ints.spins.clone(), config)?;
    if let Some(level) = options.excitation_limit {
        let r = reference.ok_or_else(|| Error::Configuration("excitation limit needs a reference determinant".into()))?;
        dets = dets.truncated(r, level)?;
    }
    let (energies, vectors) = diagonalize(&dets, ints, options.roots, options.tolerance)?;
    Ok(CiResult {
        energies,
        vectors,
        basis: kind,
        orbitals: ints.len(),
        electrons: config.electrons(),
        determinants: dets.len(),
    })
}

/// Integrals over the bare TB window (no screening in the TB step).
pub fn tb_integrals(problem: &ScfProblem) -> Result<OrbitalIntegrals> {
    let sol = solve_window(&problem.hamiltonian, &problem.window).map_err(|e| e.at_stage("tb eigensolve"))?;
    let basis = SpinOrbitalBasis::from_states(&sol.states);
    let table = pair_table(&problem.engine, &basis.vector_refs()).map_err(|e| e.at_stage("pair integrals"))?;
    let zero = vec![0.0; problem.atoms.len()];
    basis::integrals(&basis, &table, &zero)
}

/// Full CI over the lowest TB states of the bare Hamiltonian.
pub fn fci_over_tb(problem: &ScfProblem, config: &SpinConfiguration, options: &CiOptions) -> Result<CiResult> {
    let ints = tb_integrals(problem)?;
    solve_ci(&ints, config, Some(aufbau(&ints.spins, config)), BasisKind::Tb, options)
}

/// Lowest spin-orbitals of each channel, the collinear aufbau reference.
fn aufbau(spins: &[SpinLabel], config: &SpinConfiguration) -> u64 {
    let mut want_up = config.up();
    let mut want_down = config.down();
    let mut left = config.electrons();
    let mut det = 0u64;
    for (p, s) in spins.iter().enumerate() {
        let take = match s {
            SpinLabel::Up if want_up > 0 => {
                want_up -= 1;
                true
            }
            SpinLabel::Down if want_down > 0 => {
                want_down -= 1;
                true
            }
            SpinLabel::Mixed if left > 0 => true,
            _ => false,
        };
        if take {
            det |= 1u64 << p;
            left -= 1;
        }
    }
    det
}

/// Spin-orbital integrals over the HF orbitals, occupied first.
pub fn hf_integrals(state: &ManyBodyState) -> Result<OrbitalIntegrals> {
    let (coeffs, spins) = state.rotation();
    state.integrals.rotate(&coeffs, spins)
}

/// CI over the converged HF orbitals; the HF determinant is the reference.
pub fn ci_over_hf(state: &ManyBodyState, options: &CiOptions) -> Result<CiResult> {
    let ints = hf_integrals(state)?;
    let reference = (1u64 << state.config.electrons()) - 1;
    solve_ci(&ints, &state.config, Some(reference), BasisKind::Hf, options)
}

const CACHE_MAGIC: &[u8; 8] = b"TBHFINT1";

fn spin_code(s: SpinLabel) -> u8 {
    match s {
        SpinLabel::Up => 0,
        SpinLabel::Down => 1,
        SpinLabel::Mixed => 2,
    }
}

/// Writes integrals tagged with `key` (normally the run id).
pub fn save_integrals(path: &Path, key: &str, ints: &OrbitalIntegrals) -> Result<()> {
    let mut buf = Vec::with_capacity(16 + key.len() + ints.len() + 16 * (ints.one_body.len() + ints.two_body.values.len()));
    buf.extend_from_slice(CACHE_MAGIC);
    buf.extend_from_slice(&(key.len() as u64).to_le_bytes());
    buf.extend_from_slice(key.as_bytes());
    buf.extend_from_slice(&(ints.len() as u64).to_le_bytes());
    buf.extend(ints.spins.iter().map(|s| spin_code(*s)));
    for v in ints.one_body.iter().chain(&ints.two_body.values) {
        buf.extend_from_slice(&v.re.to_le_bytes());
        buf.extend_from_slice(&v.im.to_le_bytes());
    }
    let tmp = path.with_extension("tmp");
    std::fs::File::create(&tmp)?.write_all(&buf)?;
    std::fs::rename(tmp, path)?;
    Ok(())
}

/// Reads cached integrals; `None` when the file belongs to another key.
pub fn load_integrals(path: &Path, key: &str) -> Result<Option<OrbitalIntegrals>> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let bad = || Error::Serialization(format!("{}: malformed integral cache", path.display()));
    let mut at = 0usize;
    let mut take = |n: usize| -> Result<&[u8]> {
        let s = bytes.get(at..at + n).ok_or_else(bad)?;
        at += n;
        Ok(s)
    };
    if take(8)? != CACHE_MAGIC {
        return Err(bad());
    }
    let u64_at = |s: &[u8]| u64::from_le_bytes(s.try_into().unwrap()) as usize;
    let klen = u64_at(take(8)?);
    if take(klen)? != key.as_bytes() {
        return Ok(None);
    }
    let m = u64_at(take(8)?);
    let spins = take(m)?
        .iter()
        .map(|&c| match c {
            0 => Ok(SpinLabel::Up),
            1 => Ok(SpinLabel::Down),
            2 => Ok(SpinLabel::Mixed),
            _ => Err(bad()),
        })
        .collect::<Result<Vec<_>>>()?;
    let mut read = |count: usize| -> Result<Vec<c64>> {
        let raw = take(16 * count)?;
        Ok(raw
            .chunks_exact(16)
            .map(|c| c64::new(f64::from_le_bytes(c[..8].try_into().unwrap()), f64::from_le_bytes(c[8..].try_into().unwrap())))
            .collect())
    };
    let one = read(m * m)?;
    let two = read(m.pow(4))?;
    OrbitalIntegrals::new(spins, one, CoulombTensor { count: m, values: two }).map(Some)
}
