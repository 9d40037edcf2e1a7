use super::uhf::{channels, density_matrix, energy};
use super::*;
use crate::fields::CoulombTensor;
use crate::lattice::{ImpuritySite, SitePosition};

fn reduced_problem(cells: usize, sites: &[[f64; 3]], count: usize) -> ScfProblem {
    let mut g = DeviceGeometry::with_cells(cells);
    for s in sites {
        g.impurities
            .push(ImpuritySite::new(SitePosition::fractional(s[0], s[1], s[2]), -1.0));
    }
    let params = TbParameterSet::single_s(5.0, -1.0);
    let window = SpectrumWindow::new(-0.5, count);
    ScfProblem::new(&g, &params, &window, &FieldOptions::default()).unwrap()
}

fn config(s: &str) -> SpinConfiguration {
    s.parse().unwrap()
}

fn no_checkpoints(_: &ScfCheckpoint) -> Result<()> {
    Ok(())
}

/// Spin-orbital integrals over `k` spatial orbitals with spins alternating ↑↓.
fn model_integrals(h_spatial: &[f64], g: impl Fn(usize, usize, usize, usize) -> f64, k: usize) -> OrbitalIntegrals {
    let m = 2 * k;
    let spins: Vec<SpinLabel> = (0..m)
        .map(|p| if p % 2 == 0 { SpinLabel::Up } else { SpinLabel::Down })
        .collect();
    let spatial: Vec<usize> = (0..m).map(|p| p / 2).collect();
    let mut h = vec![c64::new(0.0, 0.0); m * m];
    for p in 0..m {
        for q in 0..m {
            if spins[p] == spins[q] {
                h[p * m + q] = c64::new(h_spatial[spatial[p] * k + spatial[q]], 0.0);
            }
        }
    }
    let mut t = vec![c64::new(0.0, 0.0); k.pow(4)];
    for p in 0..k {
        for q in 0..k {
            for r in 0..k {
                for s in 0..k {
                    t[((p * k + q) * k + r) * k + s] = c64::new(g(p, q, r, s), 0.0);
                }
            }
        }
    }
    OrbitalIntegrals::from_spatial(spins, &spatial, h, &CoulombTensor { count: k, values: t }).unwrap()
}

/// Two-site Hubbard-like integrals with real symmetric 8-fold structure.
fn dimer_integrals(eps: f64, t: f64, u: f64, v: f64) -> OrbitalIntegrals {
    let h = [eps, t, t, eps];
    model_integrals(
        &h,
        |p, q, r, s| {
            if p == q && r == s {
                if p == r {
                    u
                } else {
                    v
                }
            } else {
                0.0
            }
        },
        2,
    )
}

#[test]
fn parses_spin_labels() {
    assert_eq!(config("↑↓").electrons(), 2);
    assert_eq!(config("ud"), config("up,down"));
    assert_eq!(config("↑↓↑").twice_sz(), 1);
    assert_eq!(config("up down up").to_string(), "↑↓↑");
    assert!("".parse::<SpinConfiguration>().is_err());
    assert!("ux".parse::<SpinConfiguration>().is_err());
    let json = serde_json::to_string(&config("uu")).unwrap();
    assert_eq!(json, "\"↑↑\"");
    assert_eq!(config("↑↓↑").without_last(), Some(config("↑↓")));
}

#[test]
fn two_by_two_fock_closed_form() {
    // [[a, b], [b*, d]] in one channel.
    let (a, d, b) = (-0.3, 0.5, c64::new(0.1, -0.2));
    let fock = vec![c64::new(a, 0.0), b, b.conj(), c64::new(d, 0.0)];
    let ch = vec![Channel {
        spin: SpinLabel::Mixed,
        members: vec![0, 1],
        occupied: 1,
    }];
    let st = solve_hf(&fock, &ch);
    let r = (((a - d) / 2.0).powi(2) + b.norm_sqr()).sqrt();
    assert!((st[0][0].energy - ((a + d) / 2.0 - r)).abs() < 1e-14);
    assert!((st[0][1].energy - ((a + d) / 2.0 + r)).abs() < 1e-14);
    // Eigenvector of the lower root: (b, λ − a) up to phase and norm.
    let lam = st[0][0].energy;
    let c = &st[0][0].coefficients;
    let ratio = c[1] / c[0];
    let expect = c64::new(lam - a, 0.0) / b;
    assert!((ratio - expect).norm() < 1e-12);
}

#[test]
fn zero_interaction_keeps_tb_states() {
    let ints = model_integrals(&[0.1, 0.0, 0.0, 0.4], |_, _, _, _| 0.0, 2);
    let sol = solve_uhf(&ints, &config("↑↓"), None, &UhfSettings::default()).unwrap();
    assert!((sol.energy - 0.2).abs() < 1e-14);
    for st in &sol.states {
        assert!((st[0].energy - 0.1).abs() < 1e-14);
        assert!((st[1].energy - 0.4).abs() < 1e-14);
    }
}

#[test]
fn single_electron_fock_has_no_self_interaction() {
    let ints = dimer_integrals(0.0, -0.2, 0.8, 0.3);
    let occ = HfState {
        coefficients: vec![
            c64::new(0.6, 0.0),
            c64::new(0.0, 0.0),
            c64::new(0.8, 0.0),
            c64::new(0.0, 0.0),
        ],
        energy: 0.0,
        spin: SpinLabel::Up,
    };
    let d = density_matrix(4, &[&occ]);
    let f = build_fock(&ints, &d);
    // ⟨ψ|F|ψ⟩ = ⟨ψ|h|ψ⟩ for the only occupied orbital.
    let c = &occ.coefficients;
    let mut fpsi = c64::new(0.0, 0.0);
    let mut hpsi = c64::new(0.0, 0.0);
    for p in 0..4 {
        for q in 0..4 {
            fpsi += c[p].conj() * f[p * 4 + q] * c[q];
            hpsi += c[p].conj() * ints.h(p, q) * c[q];
        }
    }
    assert!((fpsi - hpsi).norm() < 1e-14);
    assert!((energy(&ints, &d, &f) - hpsi.re).abs() < 1e-14);
}

#[test]
fn one_electron_energy_is_lowest_one_body_level() {
    let ints = dimer_integrals(0.0, -0.2, 0.8, 0.3);
    let sol = solve_uhf(&ints, &config("↑"), None, &UhfSettings::default()).unwrap();
    assert!((sol.energy + 0.2).abs() < 1e-12);
}

#[test]
fn opposite_spins_do_not_exchange() {
    let ints = dimer_integrals(0.0, -0.2, 0.8, 0.3);
    // ↑ and ↓ both on site 0. On site 0 the ↑ Fock block sees only the ↓
    // field; on site 1 it sees both electrons through V.
    let up = HfState {
        coefficients: vec![c64::new(1.0, 0.0), c64::new(0.0, 0.0), c64::new(0.0, 0.0), c64::new(0.0, 0.0)],
        energy: 0.0,
        spin: SpinLabel::Up,
    };
    let down = HfState {
        coefficients: vec![c64::new(0.0, 0.0), c64::new(1.0, 0.0), c64::new(0.0, 0.0), c64::new(0.0, 0.0)],
        energy: 0.0,
        spin: SpinLabel::Down,
    };
    let d = density_matrix(4, &[&up, &down]);
    let f = build_fock(&ints, &d);
    // Up block: spin-orbitals 0 and 2 (sites 0 and 1).
    assert!((f[0] - c64::new(0.8, 0.0)).norm() < 1e-14);
    assert!((f[2 * 4 + 2] - c64::new(0.6, 0.0)).norm() < 1e-14);
    assert!((f[2] - c64::new(-0.2, 0.0)).norm() < 1e-14);
    // No coupling across spin.
    assert_eq!(f[1], c64::new(0.0, 0.0));
}

#[test]
fn hubbard_dimer_uhf_energy() {
    // Two sites, on-site U, no inter-site repulsion. For U < 2|t| the UHF
    // minimum is restricted with E = −2|t| + U/2; above it the
    // antiferromagnetic solution gives E = −2t²/U.
    let t = 0.2;
    for (u, want) in [(0.3, -2.0 * t + 0.15), (1.0, -2.0 * t * t / 1.0)] {
        let ints = dimer_integrals(0.0, -t, u, 0.0);
        let sol = solve_uhf(&ints, &config("↑↓"), None, &UhfSettings::default()).unwrap();
        assert!(sol.converged);
        assert!((sol.energy - want).abs() < 1e-9, "U={u}: {} vs {want}", sol.energy);
    }
}

#[test]
fn configuration_errors() {
    let ints = dimer_integrals(0.0, -0.2, 0.8, 0.3);
    assert!(matches!(
        solve_uhf(&ints, &config("↑↑↑"), None, &UhfSettings::default()),
        Err(Error::Configuration(_))
    ));
    assert!(channels(&ints.spins, &config("↑↓↑↓↑")).is_err());
}

#[test]
fn slater_amplitude_is_antisymmetric() {
    let p = reduced_problem(3, &[[0.0, 0.0, 0.0]], 8);
    let out = scf_loop(&p, &config("↑↓"), &ScfControls::default(), ScfStart::Fresh, &mut no_checkpoints).unwrap();
    let s = &out.state;
    let a = s.slater_amplitude(&[0, 1]);
    let b = s.slater_amplitude(&[1, 0]);
    assert!(a.norm() > 1e-3);
    assert!((a + b).norm() < 1e-14);
    assert_eq!(s.slater_amplitude(&[0, 0]), c64::new(0.0, 0.0));
    // Both electrons up-indexed: the ↓ column is zero there.
    assert!(s.slater_amplitude(&[0, 2]).norm() < 1e-14);
    assert!((s.recompute_energy() - s.energy).abs() < 1e-9);
}

#[test]
fn one_electron_scf_reproduces_bare_ground_state() {
    let p = reduced_problem(3, &[[0.0, 0.0, 0.0]], 6);
    let out = scf_loop(&p, &config("↑"), &ScfControls::default(), ScfStart::Fresh, &mut no_checkpoints).unwrap();
    assert_eq!(out.trace.iterations.len(), 1);
    let bare = solve_window(&p.hamiltonian, &p.window).unwrap().states[0].energy;
    assert!((out.state.energy - bare).abs() < 1e-9);
}

#[test]
fn converged_screening_is_a_fixed_point() {
    let p = reduced_problem(3, &[[0.0, 0.0, 0.0]], 8);
    let c = config("↑↓");
    let first = scf_loop(&p, &c, &ScfControls::default(), ScfStart::Fresh, &mut no_checkpoints).unwrap();
    assert!(first.trace.converged);
    assert!(first.trace.iterations.len() > 1);
    let again = scf_loop(
        &p,
        &c,
        &ScfControls::default(),
        ScfStart::Screening(first.state.screening.clone()),
        &mut no_checkpoints,
    )
    .unwrap();
    assert_eq!(again.trace.iterations.len(), 1);
    assert!((again.state.energy - first.state.energy).abs() < 1e-6);
}

#[test]
fn resume_matches_uninterrupted_run() {
    let p = reduced_problem(3, &[[0.0, 0.0, 0.0]], 8);
    let c = config("↑↓");
    let full = scf_loop(&p, &c, &ScfControls::default(), ScfStart::Fresh, &mut no_checkpoints).unwrap();
    let stop = ScfControls {
        stop_after: Some(2),
        ..Default::default()
    };
    let mut saved = None;
    let part = scf_loop(&p, &c, &stop, ScfStart::Fresh, &mut |cp| {
        saved = Some(cp.clone());
        Ok(())
    })
    .unwrap();
    assert_eq!(part.status, ScfStatus::Stopped);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("scf.json");
    saved.unwrap().save(&path).unwrap();
    let cp = ScfCheckpoint::load(&path).unwrap();
    let rest = scf_loop(&p, &c, &ScfControls::default(), ScfStart::Resume(cp), &mut no_checkpoints).unwrap();
    assert!(rest.resumed);
    assert_eq!(rest.state.energy.to_bits(), full.state.energy.to_bits());
    assert_eq!(rest.trace, full.trace);
}

#[test]
fn global_spin_flip_leaves_energies_unchanged() {
    let p = reduced_problem(3, &[[0.0, 0.0, 0.0]], 8);
    for c in ["↑↓", "↑↑", "↑↓↑"] {
        let a = scf_loop(&p, &config(c), &ScfControls::default(), ScfStart::Fresh, &mut no_checkpoints).unwrap();
        let b = scf_loop(&p, &config(c).flipped(), &ScfControls::default(), ScfStart::Fresh, &mut no_checkpoints).unwrap();
        assert!((a.state.energy - b.state.energy).abs() < 1e-8, "{c}");
    }
}

#[test]
fn hf_orbitals_are_orthonormal_per_channel() {
    let p = reduced_problem(3, &[[0.0, 0.0, 0.0]], 8);
    let out = scf_loop(&p, &config("↑↓↑"), &ScfControls::default(), ScfStart::Fresh, &mut no_checkpoints).unwrap();
    for st in &out.state.states {
        for (i, a) in st.iter().enumerate() {
            for (j, b) in st.iter().enumerate() {
                let ov: c64 = a.coefficients.iter().zip(&b.coefficients).map(|(x, y)| x.conj() * y).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((ov - c64::new(want, 0.0)).norm() < 1e-10);
            }
        }
    }
}

#[test]
fn screening_sums_orbital_fields() {
    let p = reduced_problem(3, &[[0.0, 0.0, 0.0]], 4);
    let empty = total_density_and_screening(&p.engine, &[]).unwrap();
    assert_eq!(empty.potential.max_abs(), 0.0);
    assert!(empty.at_atoms.iter().all(|v| *v == 0.0));

    let sol = solve_window(&p.hamiltonian, &p.window).unwrap();
    let orb = |s: SpinLabel| OrbitalSnapshot {
        spin: s,
        amplitudes: sol.states[0].amplitudes.to_vec(),
    };
    let one = total_density_and_screening(&p.engine, &[orb(SpinLabel::Up)]).unwrap();
    let two = total_density_and_screening(&p.engine, &[orb(SpinLabel::Up), orb(SpinLabel::Down)]).unwrap();
    assert!((one.density.integral() - c64::new(1.0, 0.0)).norm() < 1e-10);
    for (a, b) in one.at_atoms.iter().zip(&two.at_atoms) {
        assert!((2.0 * a - b).abs() < 1e-10 * b.abs().max(1.0));
    }
    for (a, b) in one.potential.re.iter().zip(&two.potential.re) {
        assert!((2.0 * a - b).abs() < 1e-10);
    }
}

#[test]
fn superposition_start_reaches_the_same_state() {
    let p = reduced_problem(3, &[[0.0, 0.0, 0.0]], 8);
    let c = config("↑↓");
    let zero = scf_loop(&p, &c, &ScfControls::default(), ScfStart::Fresh, &mut no_checkpoints).unwrap();
    let sup = ScfControls {
        init: InitMode::Superposition,
        ..Default::default()
    };
    let other = scf_loop(&p, &c, &sup, ScfStart::Fresh, &mut no_checkpoints).unwrap();
    assert!((zero.state.energy - other.state.energy).abs() < 1e-6);
}
