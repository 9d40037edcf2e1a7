use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use tbhf_bench::{donor_box, full_model, reduced_problem};
use tbhf_core::ci::{ci_over_hf, fci_over_tb};
use tbhf_core::eigensolver::solve_window;
use tbhf_core::fields::pair_table;
use tbhf_core::hartree_fock::{scf_loop, ScfStart, SpinOrbitalBasis};
use tbhf_core::lattice::build_lattice;
use tbhf_core::tb::{assemble, impurity_potential};
use tbhf_core::{CiOptions, FieldEngine, FieldOptions, ScfControls, SpectrumWindow};

fn hamiltonian(c: &mut Criterion) {
    let g = donor_box(4, -2.0);
    let atoms = build_lattice(&g).unwrap();
    let params = full_model();
    let pot = impurity_potential(&atoms, &g);
    c.bench_function("assemble full model, 4 cells", |b| b.iter(|| assemble(&atoms, &params, &pot).unwrap()));
    let h = assemble(&atoms, &params, &pot).unwrap();
    let v = vec![tbhf_core::c64::new(1.0, 0.0); h.dim()];
    c.bench_function("apply full model, 4 cells", |b| b.iter(|| h.apply(&v).unwrap()));
    let mut group = c.benchmark_group("eigensolve");
    group.sample_size(10);
    group.bench_function("full model, 4 cells, 24 states", |b| {
        b.iter(|| solve_window(&h, &SpectrumWindow::new(0.8, 24)).unwrap())
    });
    group.finish();
}

fn fields(c: &mut Criterion) {
    let g = donor_box(6, -1.0);
    let atoms = build_lattice(&g).unwrap();
    let engine = FieldEngine::new(&atoms, &g, FieldOptions::default()).unwrap();
    let mut w = vec![tbhf_core::c64::new(0.0, 0.0); atoms.len()];
    w[atoms.len() / 2] = tbhf_core::c64::new(1.0, 0.0);
    let mut group = c.benchmark_group("poisson");
    group.sample_size(10);
    group.bench_function("point source, 6 cells", |b| {
        b.iter_batched(|| engine.deposit(&w).unwrap(), |d| engine.solve_density(&d).unwrap(), BatchSize::SmallInput)
    });
    let p = reduced_problem(4, 8);
    let sol = solve_window(&p.hamiltonian, &p.window).unwrap();
    let basis = SpinOrbitalBasis::from_states(&sol.states);
    group.bench_function("pair table, 4 spatial orbitals, 4 cells", |b| {
        b.iter(|| pair_table(&p.engine, &basis.vector_refs()).unwrap())
    });
    group.finish();
}

fn many_body(c: &mut Criterion) {
    let p = reduced_problem(3, 12);
    let config = "↑↓↑".parse().unwrap();
    let mut group = c.benchmark_group("many-body");
    group.sample_size(10);
    group.bench_function("scf, 3 electrons, 3 cells", |b| {
        b.iter(|| scf_loop(&p, &config, &ScfControls::default(), ScfStart::Fresh, &mut |_| Ok(())).unwrap())
    });
    let state = scf_loop(&p, &config, &ScfControls::default(), ScfStart::Fresh, &mut |_| Ok(()))
        .unwrap()
        .state;
    group.bench_function("ci over hf, 3 electrons, 12 spin-orbitals", |b| {
        b.iter(|| ci_over_hf(&state, &CiOptions::default()).unwrap())
    });
    group.bench_function("fci over tb, 3 electrons, 12 spin-orbitals", |b| {
        b.iter(|| fci_over_tb(&p, &config, &CiOptions::default()).unwrap())
    });
    group.finish();
}

criterion_group!(benches, hamiltonian, fields, many_body);
criterion_main!(benches);
