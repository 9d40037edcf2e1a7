use proptest::prelude::*;
use tbhf_core::eigensolver::SpectrumWindow;
use tbhf_core::fields::{FieldUnit, Grid};
use tbhf_core::hartree_fock::{scf_loop, ScfStart};
use tbhf_core::lattice::{build_lattice, DeviceGeometry, ImpuritySite, SitePosition};
use tbhf_core::linalg::hermitian_eigenvalues;
use tbhf_core::observables::{
    binding_energy, charging_energy, extrapolate_cb, radial_metrics, BandEdge, EdgeSource, Provenance, TotalEnergy,
};
use tbhf_core::tb::{assemble, OnsitePotential, TbParameterSet};
use tbhf_core::{Error, FieldOptions, ScalarField, ScfControls, ScfProblem, SpinConfiguration};

fn provenance(edge: f64) -> Provenance {
    Provenance {
        box_edge: edge,
        lattice_constant: 0.5431,
        dielectric_constant: 11.9,
        parameters_checksum: "p".into(),
        impurities: "[]".into(),
        basis_size: 8,
    }
}

fn total(label: &str, electrons: usize, energy: f64) -> TotalEnergy {
    TotalEnergy {
        label: label.into(),
        electrons,
        energy,
        provenance: provenance(3.0),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn hamiltonian_is_hermitian(
        values in prop::collection::vec(-3.0f64..3.0, 8),
        spin_orbit in any::<bool>(),
    ) {
        let g = DeviceGeometry::with_cells(1);
        let atoms = build_lattice(&g).unwrap();
        let params = TbParameterSet::silicon().with_spin_orbit(spin_orbit);
        let h = assemble(&atoms, &params, &OnsitePotential(values)).unwrap();
        let n = h.dim();
        let a = h.dense();
        for i in 0..n {
            for j in 0..n {
                prop_assert!((a[j * n + i] - a[i * n + j].conj()).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn uniform_shift_moves_spectrum_rigidly(
        values in prop::collection::vec(-1.0f64..1.0, 64),
        c in -2.0f64..2.0,
    ) {
        let g = DeviceGeometry::with_cells(2);
        let atoms = build_lattice(&g).unwrap();
        let params = TbParameterSet::single_s(5.0, -1.0);
        let v = OnsitePotential(values);
        let base = assemble(&atoms, &params, &v).unwrap();
        let moved = base.with_potential(&v.shifted(c)).unwrap();
        let n = base.dim();
        let e0 = hermitian_eigenvalues(n, &base.dense());
        let e1 = hermitian_eigenvalues(n, &moved.dense());
        for (a, b) in e0.iter().zip(&e1) {
            prop_assert!((b - a - c).abs() < 1e-9);
        }
    }

    #[test]
    fn charging_and_binding_energies_are_linear(
        en in -5.0f64..5.0,
        er in -5.0f64..5.0,
        e1 in -5.0f64..5.0,
        edge in -2.0f64..2.0,
        gauge in -1.0f64..1.0,
    ) {
        let ce = charging_energy(&total("n", 3, en), &total("r", 2, er), &total("1", 1, e1)).unwrap();
        let be = binding_energy(&total("n", 3, en), &total("r", 2, er), BandEdge { energy: edge, source: EdgeSource::FiniteBox }).unwrap();
        prop_assert!((ce - be - (edge - e1) * 1e3).abs() < 1e-9);
        // A per-electron energy offset cancels in both.
        let ce_g = charging_energy(
            &total("n", 3, en + 3.0 * gauge),
            &total("r", 2, er + 2.0 * gauge),
            &total("1", 1, e1 + gauge),
        )
        .unwrap();
        let be_g = binding_energy(
            &total("n", 3, en + 3.0 * gauge),
            &total("r", 2, er + 2.0 * gauge),
            BandEdge { energy: edge + gauge, source: EdgeSource::FiniteBox },
        )
        .unwrap();
        prop_assert!((ce_g - ce).abs() < 1e-8);
        prop_assert!((be_g - be).abs() < 1e-8);
    }

    #[test]
    fn mismatched_provenance_is_refused(edge in 1.0f64..20.0, other in 1.0f64..20.0) {
        prop_assume!(edge != other);
        let mut r = total("r", 1, 0.0);
        r.provenance = provenance(other);
        let mut n = total("n", 2, 0.0);
        n.provenance = provenance(edge);
        let got = charging_energy(&n, &r, &r);
        prop_assert!(matches!(got, Err(Error::Provenance(_))));
    }

    #[test]
    fn edge_fit_recovers_exact_series(
        a in 0.0f64..2.0,
        b in 0.1f64..10.0,
        xs in prop::collection::btree_set(20u32..200, 3..8),
    ) {
        let series: Vec<(f64, f64)> = xs.iter().map(|&x| {
            let x = x as f64 / 20.0;
            (x, a + b / (x * x))
        }).collect();
        let fit = extrapolate_cb(&series).unwrap();
        prop_assert!((fit.asymptote - a).abs() < 1e-9);
        prop_assert!((fit.coefficient - b).abs() < 1e-8);
        prop_assert!(fit.relative_residual < 1e-8);
    }

    #[test]
    fn mean_radius_is_bounded_by_the_half_diagonal(
        values in prop::collection::vec(0.0f64..1.0, 9 * 9 * 9),
        offset in prop::array::uniform3(0.0f64..1.0),
    ) {
        let grid = Grid { spacing: 0.25, origin: [0.0; 3], intervals: 8 };
        let mut field = ScalarField::zeros(&grid, FieldUnit::Density);
        let norm: f64 = values.iter().sum::<f64>() * grid.cell_volume();
        prop_assume!(norm > 0.0);
        field.re = values.iter().map(|v| v / norm).collect();
        let extent = grid.extent();
        let reference = offset.map(|o| o * extent);
        let rep = radial_metrics(&field, reference, 0.1).unwrap();
        let far = (0..3).map(|k| reference[k].max(extent - reference[k]).powi(2)).sum::<f64>().sqrt();
        prop_assert!(rep.mean_radius >= 0.0 && rep.mean_radius <= far + 1e-12);
        let binned: f64 = rep.bins.iter().map(|b| b.weight).sum();
        prop_assert!((binned - rep.mean_radius).abs() < 1e-9);
    }

    #[test]
    fn field_files_round_trip(values in prop::collection::vec(-1e3f64..1e3, 9 * 9 * 9), complex in any::<bool>()) {
        let grid = Grid { spacing: 0.1, origin: [-0.4, 0.0, 1.5], intervals: 8 };
        let mut field = ScalarField::zeros(&grid, FieldUnit::Potential);
        field.re = values.clone();
        if complex {
            field.im = Some(values.iter().map(|v| -0.5 * v).collect());
        }
        let mut bytes = Vec::new();
        field.write_to(&mut bytes).unwrap();
        let back = ScalarField::read_from(bytes.as_slice()).unwrap();
        prop_assert_eq!(back, field);
    }

    #[test]
    fn spin_configurations_round_trip(spins in prop::collection::vec(any::<bool>(), 1..6)) {
        let text: String = spins.iter().map(|&u| if u { '↑' } else { '↓' }).collect();
        let config: SpinConfiguration = text.parse().unwrap();
        prop_assert_eq!(config.to_string(), text);
        prop_assert_eq!(config.electrons(), spins.len());
        prop_assert_eq!(config.up() as i32 - config.down() as i32, config.twice_sz());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(4))]

    /// Raising every on-site energy by `c` leaves the orbitals alone and
    /// raises the N-electron HF energy by `N·c`.
    #[test]
    fn hf_energy_follows_an_onsite_gauge_shift(c in -0.5f64..0.5, ccc in -2.0f64..-0.5) {
        let mut g = DeviceGeometry::with_cells(2);
        g.impurities = vec![ImpuritySite::new(SitePosition::fractional(0.0, 0.0, 0.0), ccc)];
        let config: SpinConfiguration = "↑↓".parse().unwrap();
        let energy = |onsite: f64, shift: f64| {
            let p = ScfProblem::new(
                &g,
                &TbParameterSet::single_s(onsite, -1.0),
                &SpectrumWindow::new(shift, 6),
                &FieldOptions::default(),
            )
            .unwrap();
            scf_loop(&p, &config, &ScfControls::default(), ScfStart::Fresh, &mut |_| Ok(())).unwrap().state.energy
        };
        let e0 = energy(5.0, -0.5);
        let e1 = energy(5.0 + c, -0.5 + c);
        prop_assert!((e1 - e0 - 2.0 * c).abs() < 1e-6, "{} vs {}", e1 - e0, 2.0 * c);
    }
}
