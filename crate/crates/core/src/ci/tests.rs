use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::determinants::{apply_operators, connected, excitation_level, occupied};
use super::*;
use crate::eigensolver::SpectrumWindow;
use crate::fields::FieldOptions;
use crate::hartree_fock::{scf_loop, ScfControls, ScfStart};
use crate::lattice::{DeviceGeometry, ImpuritySite, SitePosition};
use crate::tb::TbParameterSet;

fn alternating(m: usize) -> Vec<SpinLabel> {
    (0..m)
        .map(|p| if p % 2 == 0 { SpinLabel::Up } else { SpinLabel::Down })
        .collect()
}

/// Random model over `k` spatial orbitals on a few point sites with a
/// positive kernel, so the two-body tensor has every physical symmetry.
fn random_integrals(k: usize, seed: u64) -> OrbitalIntegrals {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sites = 5;
    let u: Vec<Vec<c64>> = (0..k)
        .map(|_| (0..sites).map(|_| c64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)).collect())
        .collect();
    let pos: Vec<f64> = (0..sites).map(|i| i as f64 * 0.7).collect();
    let kernel = |a: usize, b: usize| 1.0 / (1.0 + (pos[a] - pos[b]).abs());
    let rho = |p: usize, q: usize| -> Vec<c64> { (0..sites).map(|a| u[p][a].conj() * u[q][a]).collect() };
    let mut t = vec![c64::new(0.0, 0.0); k.pow(4)];
    for p in 0..k {
        for q in 0..k {
            let rpq = rho(p, q);
            for r in 0..k {
                for s in 0..k {
                    let rrs = rho(r, s);
                    let mut v = c64::new(0.0, 0.0);
                    for a in 0..sites {
                        for b in 0..sites {
                            v += rpq[a] * rrs[b] * kernel(a, b);
                        }
                    }
                    t[((p * k + q) * k + r) * k + s] = v;
                }
            }
        }
    }
    let mut hs = vec![c64::new(0.0, 0.0); k * k];
    for p in 0..k {
        hs[p * k + p] = c64::new(rng.random::<f64>() - 0.5, 0.0);
        for q in p + 1..k {
            let z = c64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5) * 0.3;
            hs[p * k + q] = z;
            hs[q * k + p] = z.conj();
        }
    }
    let m = 2 * k;
    let spins = alternating(m);
    let spatial: Vec<usize> = (0..m).map(|p| p / 2).collect();
    let mut h = vec![c64::new(0.0, 0.0); m * m];
    for p in 0..m {
        for q in 0..m {
            if spins[p] == spins[q] {
                h[p * m + q] = hs[spatial[p] * k + spatial[q]];
            }
        }
    }
    OrbitalIntegrals::from_spatial(spins, &spatial, h, &CoulombTensor { count: k, values: t }).unwrap()
}

/// Two electrons in first quantization: product space `|p⟩|q⟩`, projected
/// onto antisymmetric pairs of the requested spin sector.
fn first_quantized_two_electron(ints: &OrbitalIntegrals, twice_sz: i32) -> Vec<f64> {
    let m = ints.len();
    let sz = |p: usize| if ints.spins[p] == SpinLabel::Up { 1 } else { -1 };
    let product = |p: usize, q: usize, r: usize, s: usize| -> c64 {
        // ⟨pq|H|rs⟩ = h_pr δ_qs + δ_pr h_qs + (pr|qs)
        let mut v = ints.two_body.get(p, r, q, s);
        if q == s {
            v += ints.h(p, r);
        }
        if p == r {
            v += ints.h(q, s);
        }
        v
    };
    let pairs: Vec<(usize, usize)> = (0..m)
        .flat_map(|p| (p + 1..m).map(move |q| (p, q)))
        .filter(|&(p, q)| sz(p) + sz(q) == twice_sz)
        .collect();
    let n = pairs.len();
    let mut a = vec![c64::new(0.0, 0.0); n * n];
    for (i, &(p, q)) in pairs.iter().enumerate() {
        for (j, &(r, s)) in pairs.iter().enumerate() {
            let v = (product(p, q, r, s) - product(p, q, s, r) - product(q, p, r, s) + product(q, p, s, r)) * 0.5;
            a[j * n + i] = v;
        }
    }
    linalg::hermitian_eigenvalues(n, &a)
}

fn dense_matrix(dets: &DeterminantBasis, ints: &OrbitalIntegrals) -> Vec<c64> {
    let n = dets.len();
    let mut a = vec![c64::new(0.0, 0.0); n * n];
    for i in 0..n {
        for j in 0..n {
            a[j * n + i] = hamiltonian_element(dets.dets[i], dets.dets[j], ints);
        }
    }
    a
}

#[test]
fn sector_sizes() {
    assert_eq!(build_determinants(4, 2, 0).unwrap().len(), 4);
    assert_eq!(build_determinants(6, 6, 0).unwrap().len(), 1);
    let big = build_determinants(36, 2, 0).unwrap();
    // Enumeration oracle: every unordered pair with one of each spin.
    let mut count = 0;
    for p in 0..36 {
        for q in p + 1..36 {
            if (p % 2) != (q % 2) {
                count += 1;
            }
        }
    }
    assert_eq!(big.len(), count);
    assert_eq!(count, 324);
    for &d in &big.dets {
        assert_eq!(d.count_ones(), 2);
    }
    let mut sorted = big.dets.clone();
    sorted.dedup();
    assert_eq!(sorted.len(), big.len());
    assert!(build_determinants(2, 2, 2).is_err());
    assert!(build_determinants(4, 2, 1).is_err());
    assert_eq!(build_determinants_for(vec![SpinLabel::Mixed; 6], 3, None).unwrap().len(), 20);
}

#[test]
fn operator_signs() {
    // a†_0 on |1⟩ gives |01⟩ with no sign; a†_2 a_0 on |01⟩ passes bit 1.
    assert_eq!(apply_operators(0b10, &[(true, 0)]), Some((0b11, 1.0)));
    assert_eq!(apply_operators(0b011, &[(true, 2), (false, 0)]), Some((0b110, -1.0)));
    assert_eq!(apply_operators(0b1, &[(true, 0)]), None);
    assert_eq!(excitation_level(0b0011, 0b1100), 2);
    assert_eq!(occupied(0b1010), vec![1, 3]);
}

#[test]
fn simple_elements() {
    let ints = random_integrals(3, 1);
    assert_eq!(hamiltonian_element(0b100, 0b100, &ints), ints.h(2, 2));
    // Triple excitation.
    assert_eq!(hamiltonian_element(0b000111, 0b111000, &ints), c64::new(0.0, 0.0));
}

#[test]
fn two_electron_spectrum_matches_first_quantization() {
    let ints = random_integrals(4, 2);
    for sz in [-2, 0, 2] {
        let dets = build_determinants(8, 2, sz).unwrap();
        let ci = linalg::hermitian_eigenvalues(dets.len(), &dense_matrix(&dets, &ints));
        let oracle = first_quantized_two_electron(&ints, sz);
        assert_eq!(ci.len(), oracle.len());
        for (a, b) in ci.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-12, "sz={sz}: {a} vs {b}");
        }
    }
}

#[test]
fn ci_matrix_is_hermitian_and_conserves_sz() {
    let ints = random_integrals(4, 3);
    let dets = build_determinants_for(alternating(8), 3, Some(1)).unwrap();
    let a = dense_matrix(&dets, &ints);
    let n = dets.len();
    for i in 0..n {
        for j in 0..n {
            assert!((a[j * n + i] - a[i * n + j].conj()).norm() < 1e-13);
        }
    }
    let other = build_determinants_for(alternating(8), 3, Some(-1)).unwrap();
    for &x in &dets.dets {
        for &y in &other.dets {
            assert_eq!(hamiltonian_element(x, y, &ints), c64::new(0.0, 0.0));
        }
    }
}

#[test]
fn non_interacting_ground_state_fills_lowest_levels() {
    let mut ints = random_integrals(4, 4);
    ints.two_body.values.iter_mut().for_each(|v| *v = c64::new(0.0, 0.0));
    let m = ints.len();
    let spatial_h: Vec<c64> = {
        // Up block in column-major order.
        let up: Vec<usize> = (0..m).step_by(2).collect();
        let k = up.len();
        let mut h = vec![c64::new(0.0, 0.0); k * k];
        for (j, &q) in up.iter().enumerate() {
            for (i, &p) in up.iter().enumerate() {
                h[j * k + i] = ints.h(p, q);
            }
        }
        h
    };
    let levels = linalg::hermitian_eigenvalues(4, &spatial_h);
    let dets = build_determinants(m, 3, 1).unwrap();
    let (e, _) = diagonalize(&dets, &ints, 1, 1e-10).unwrap();
    assert!((e[0] - (2.0 * levels[0] + levels[1])).abs() < 1e-12);
}

#[test]
fn full_ci_is_invariant_under_orbital_rotation() {
    let ints = random_integrals(4, 5);
    let m = ints.len();
    // Random unitary inside each spin channel from a Hermitian generator.
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let k = m / 2;
    let mut gen = vec![c64::new(0.0, 0.0); k * k];
    for p in 0..k {
        gen[p * k + p] = c64::new(rng.random::<f64>(), 0.0);
        for q in p + 1..k {
            let z = c64::new(rng.random::<f64>(), rng.random::<f64>());
            gen[q * k + p] = z;
            gen[p * k + q] = z.conj();
        }
    }
    let (_, u) = linalg::hermitian_eigh(k, &gen);
    let mut c = vec![c64::new(0.0, 0.0); m * m];
    for i in 0..m {
        for a in 0..k {
            // Column i keeps the spin of spin-orbital i.
            c[i * m + 2 * a + i % 2] = u[(i / 2) * k + a];
        }
    }
    let rotated = ints.rotate(&c, ints.spins.clone()).unwrap();
    let dets = build_determinants(m, 3, 1).unwrap();
    let (a, _) = diagonalize(&dets, &ints, 3, 1e-10).unwrap();
    let (b, _) = diagonalize(&dets, &rotated, 3, 1e-10).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert!((x - y).abs() < 1e-12);
    }
}

#[test]
fn lanczos_path_matches_dense() {
    let ints = random_integrals(6, 6);
    let dets = build_determinants(12, 4, 0).unwrap();
    assert_eq!(dets.len(), 225);
    let vals = linalg::hermitian_eigenvalues(dets.len(), &dense_matrix(&dets, &ints));
    let (e, v) = super::diagonalize_iterative(&dets, &ints, 3, 1e-9).unwrap();
    for i in 0..3 {
        assert!((e[i] - vals[i]).abs() < 1e-10, "{i}: {} vs {}", e[i], vals[i]);
        assert!((linalg::norm(&v[i]) - 1.0).abs() < 1e-10);
    }
}

#[test]
fn connected_determinants_cover_singles_and_doubles() {
    let c = connected(0b0011, 4);
    // 2·2 singles + 1 double.
    assert_eq!(c.len(), 5);
    assert!(c.contains(&0b1100));
}

#[test]
fn integral_cache_round_trip() {
    let ints = random_integrals(3, 8);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ints.bin");
    save_integrals(&path, "abc", &ints).unwrap();
    let back = load_integrals(&path, "abc").unwrap().unwrap();
    assert_eq!(back.spins, ints.spins);
    assert_eq!(back.one_body, ints.one_body);
    assert_eq!(back.two_body, ints.two_body);
    assert!(load_integrals(&path, "abd").unwrap().is_none());
}

fn reduced_state(config: &str) -> (ScfProblem, ManyBodyState) {
    let g = DeviceGeometry::with_cells(3).with_impurity(ImpuritySite::new(SitePosition::fractional(0.0, 0.0, 0.0), -1.0));
    let p = ScfProblem::new(
        &g,
        &TbParameterSet::single_s(5.0, -1.0),
        &SpectrumWindow::new(-0.5, 8),
        &FieldOptions::default(),
    )
    .unwrap();
    let c: SpinConfiguration = config.parse().unwrap();
    let out = scf_loop(&p, &c, &ScfControls::default(), ScfStart::Fresh, &mut |_| Ok(())).unwrap();
    (p, out.state)
}

#[test]
fn hf_basis_ci_equals_tb_basis_ci_and_bounds_hf() {
    let (_, state) = reduced_state("↑↓");
    let opts = CiOptions::default();
    let tb = solve_ci(&state.integrals, &state.config, None, BasisKind::Tb, &opts).unwrap();
    let hf = ci_over_hf(&state, &opts).unwrap();
    assert!((tb.energies[0] - hf.energies[0]).abs() < 1e-9);
    assert!(hf.energies[0] <= state.energy + 1e-9);
    let sd = ci_over_hf(
        &state,
        &CiOptions {
            excitation_limit: Some(1),
            ..Default::default()
        },
    )
    .unwrap();
    assert!(sd.determinants < hf.determinants);
    assert!(hf.energies[0] <= sd.energies[0] + 1e-12);
    assert!(sd.energies[0] <= state.energy + 1e-9);
}

#[test]
fn fci_over_bare_tb_states_runs() {
    let (p, _) = reduced_state("↑↓");
    let c: SpinConfiguration = "↑↓".parse().unwrap();
    let r = fci_over_tb(&p, &c, &CiOptions::default()).unwrap();
    assert_eq!(r.determinants, 16);
    assert_eq!(r.basis, BasisKind::Tb);
}
