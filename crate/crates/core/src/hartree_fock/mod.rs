//! Self-consistent TB-HF loop: TB solve in the screened potential, UHF in the
//! resulting eigenbasis, new screening from the HF density.
//!
//! The screening `S` added to the TB Hamiltonian only shapes the basis. In
//! that basis the one-body matrix is `diag(ε) − ⟨φ|S|φ⟩`, so the HF problem
//! is always that of the bare Hamiltonian plus the exact pair interaction and
//! no electron ever repels itself.

pub mod basis;
pub mod mixing;
pub mod uhf;

#[cfg(test)]
mod tests;

use std::fmt;
use std::str::FromStr;

use faer::c64;
use serde::{Deserialize, Serialize};

use crate::eigensolver::{solve_window, SpectrumWindow, SpinLabel};
use crate::error::{Error, Result};
use crate::fields::{pair_table, FieldEngine, FieldOptions, ScalarField};
use crate::lattice::{build_lattice, AtomSet, DeviceGeometry};
use crate::linalg;
use crate::tb::{assemble, impurity_potential, OnsitePotential, SparseHamiltonian, TbParameterSet};

pub use basis::{OrbitalIntegrals, SpinOrbitalBasis};
pub use mixing::AndersonHistory;
pub use uhf::{build_fock, solve_hf, solve_uhf, Channel, HfState, UhfSettings, UhfSolution};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Spin {
    Up,
    Down,
}

impl Spin {
    pub fn label(self) -> SpinLabel {
        match self {
            Spin::Up => SpinLabel::Up,
            Spin::Down => SpinLabel::Down,
        }
    }
}

/// Electron count and per-electron spins, e.g. `↑↓` or `↑↓↑`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct SpinConfiguration {
    spins: Vec<Spin>,
}

impl SpinConfiguration {
    pub fn new(spins: Vec<Spin>) -> Result<Self> {
        if spins.is_empty() {
            return Err(Error::Configuration("a spin configuration needs at least one electron".into()));
        }
        Ok(SpinConfiguration { spins })
    }

    pub fn spins(&self) -> &[Spin] {
        &self.spins
    }

    pub fn electrons(&self) -> usize {
        self.spins.len()
    }

    pub fn up(&self) -> usize {
        self.spins.iter().filter(|s| **s == Spin::Up).count()
    }

    pub fn down(&self) -> usize {
        self.electrons() - self.up()
    }

    /// `2 S_z`.
    pub fn twice_sz(&self) -> i32 {
        self.up() as i32 - self.down() as i32
    }

    /// The same configuration minus its last electron.
    pub fn without_last(&self) -> Option<SpinConfiguration> {
        (self.spins.len() > 1).then(|| SpinConfiguration {
            spins: self.spins[..self.spins.len() - 1].to_vec(),
        })
    }

    pub fn flipped(&self) -> SpinConfiguration {
        SpinConfiguration {
            spins: self
                .spins
                .iter()
                .map(|s| match s {
                    Spin::Up => Spin::Down,
                    Spin::Down => Spin::Up,
                })
                .collect(),
        }
    }
}

impl FromStr for SpinConfiguration {
    type Err = Error;

    /// Accepts arrows (`↑↓`), letters (`ud`) or words (`up,down`).
    fn from_str(s: &str) -> Result<Self> {
        let mut spins = Vec::new();
        let lower = s.to_lowercase();
        let words: Vec<&str> = lower
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|w| !w.is_empty())
            .collect();
        let all_words = !words.is_empty() && words.iter().all(|w| *w == "up" || *w == "down");
        if all_words {
            spins.extend(words.iter().map(|w| if *w == "up" { Spin::Up } else { Spin::Down }));
        } else {
            for c in lower.chars().filter(|c| !c.is_whitespace() && *c != ',') {
                spins.push(match c {
                    '↑' | 'u' => Spin::Up,
                    '↓' | 'd' => Spin::Down,
                    _ => return Err(Error::Configuration(format!("unrecognized spin label {c:?} in {s:?}"))),
                });
            }
        }
        SpinConfiguration::new(spins)
    }
}

impl TryFrom<String> for SpinConfiguration {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<SpinConfiguration> for String {
    fn from(c: SpinConfiguration) -> String {
        c.to_string()
    }
}

impl fmt::Display for SpinConfiguration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.spins {
            f.write_str(match s {
                Spin::Up => "↑",
                Spin::Down => "↓",
            })?;
        }
        Ok(())
    }
}

/// Weight of the total Hartree potential fed back into the TB step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScreeningMode {
    /// `(N−1)/N`: each electron sees the field of the others on average.
    #[default]
    FermiAmaldi,
    /// The full `J^(N)`, self-repulsion included.
    Total,
}

impl ScreeningMode {
    pub fn weight(self, electrons: usize) -> f64 {
        match self {
            ScreeningMode::FermiAmaldi => (electrons.saturating_sub(1)) as f64 / electrons.max(1) as f64,
            ScreeningMode::Total => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMode {
    #[default]
    Zero,
    /// Sum of single-donor ground-state densities, rescaled to N electrons.
    Superposition,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScfControls {
    pub mixing: f64,
    pub anderson: bool,
    /// First iteration whose update may use Anderson extrapolation.
    pub anderson_start: usize,
    pub anderson_depth: usize,
    #[serde(rename = "potential_tolerance_ev")]
    pub potential_tolerance: f64,
    #[serde(rename = "energy_tolerance_ev")]
    pub energy_tolerance: f64,
    pub max_iterations: usize,
    pub init: InitMode,
    pub screening: ScreeningMode,
    pub uhf: UhfSettings,
    /// Return after this many outer iterations (for interruption tests).
    #[serde(skip)]
    pub stop_after: Option<usize>,
}

impl Default for ScfControls {
    fn default() -> Self {
        ScfControls {
            mixing: 0.3,
            anderson: true,
            anderson_start: 5,
            anderson_depth: 5,
            potential_tolerance: 1e-5,
            energy_tolerance: 1e-6,
            max_iterations: 100,
            init: InitMode::Zero,
            screening: ScreeningMode::FermiAmaldi,
            uhf: UhfSettings::default(),
            stop_after: None,
        }
    }
}

impl ScfControls {
    pub fn validate(&self) -> Result<()> {
        if !(self.mixing > 0.0 && self.mixing <= 1.0) {
            return Err(Error::Configuration("mixing must lie in (0, 1]".into()));
        }
        if !(self.potential_tolerance > 0.0 && self.energy_tolerance > 0.0) {
            return Err(Error::Configuration("SCF tolerances must be positive".into()));
        }
        if self.max_iterations == 0 {
            return Err(Error::Configuration("SCF needs at least one iteration".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScfIteration {
    pub iteration: usize,
    /// Largest on-site change of the screening potential, eV.
    #[serde(rename = "max_delta_potential_ev")]
    pub max_delta_potential: f64,
    #[serde(rename = "energy_ev")]
    pub energy: f64,
    #[serde(rename = "delta_energy_ev")]
    pub delta_energy: Option<f64>,
    pub mixing: f64,
    /// Update rule used for the next input: `linear` or `anderson`.
    pub method: String,
    pub inner_iterations: usize,
    pub inner_converged: bool,
}

impl fmt::Display for ScfIteration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "scf {:>3}  E={:.9} eV  max|dJ|={:.3e} eV  dE={}  alpha={} {}  uhf={}{}",
            self.iteration,
            self.energy,
            self.max_delta_potential,
            self.delta_energy.map_or("-".to_string(), |d| format!("{d:.3e}")),
            self.mixing,
            self.method,
            self.inner_iterations,
            if self.inner_converged { "" } else { "!" }
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScfTrace {
    pub iterations: Vec<ScfIteration>,
    pub converged: bool,
}

/// Real-space orbital with its spin; layout as in [`SpinOrbitalBasis`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrbitalSnapshot {
    pub spin: SpinLabel,
    pub amplitudes: Vec<c64>,
}

/// Everything the loop carries between iterations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScfCheckpoint {
    pub completed: usize,
    pub atoms: usize,
    pub electrons: usize,
    /// On-site screening entering the next TB step, eV.
    pub screening: Vec<f64>,
    pub previous_energy: Option<f64>,
    pub history: AndersonHistory,
    pub occupied: Vec<OrbitalSnapshot>,
    pub trace: ScfTrace,
}

impl ScfCheckpoint {
    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, serde_json::to_vec(self)?)?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        serde_json::from_slice(&bytes).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))
    }
}

/// Geometry-dependent pieces shared by every iteration.
pub struct ScfProblem {
    pub geometry: DeviceGeometry,
    pub params: TbParameterSet,
    pub atoms: AtomSet,
    pub base_potential: OnsitePotential,
    pub hamiltonian: SparseHamiltonian,
    pub engine: FieldEngine,
    pub window: SpectrumWindow,
}

impl ScfProblem {
    pub fn new(
        geometry: &DeviceGeometry,
        params: &TbParameterSet,
        window: &SpectrumWindow,
        fields: &FieldOptions,
    ) -> Result<Self> {
        let atoms = build_lattice(geometry).map_err(|e| e.at_stage("lattice"))?;
        let base_potential = impurity_potential(&atoms, geometry);
        let hamiltonian = assemble(&atoms, params, &base_potential).map_err(|e| e.at_stage("tb"))?;
        let engine = FieldEngine::new(&atoms, geometry, fields.clone()).map_err(|e| e.at_stage("fields"))?;
        Ok(ScfProblem {
            geometry: geometry.clone(),
            params: params.clone(),
            atoms,
            base_potential,
            hamiltonian,
            engine,
            window: window.clone(),
        })
    }

    pub fn screened_hamiltonian(&self, screening: &[f64]) -> Result<SparseHamiltonian> {
        self.hamiltonian
            .with_potential(&self.base_potential.plus(&OnsitePotential(screening.to_vec())))
    }

    /// Superposed single-donor Hartree potentials at the atoms, scaled so
    /// the underlying density carries `electrons` charges.
    pub fn superposition_potential(&self, electrons: usize) -> Result<Vec<f64>> {
        let n_imp = self.geometry.impurities.len();
        let mut total = vec![0.0; self.atoms.len()];
        if n_imp == 0 {
            return Ok(total);
        }
        let mut window = self.window.clone();
        window.count = 1;
        for imp in &self.geometry.impurities {
            let mut single = self.geometry.clone();
            single.impurities = vec![imp.clone()];
            let pot = impurity_potential(&self.atoms, &single);
            let h = self.hamiltonian.with_potential(&pot)?;
            let ground = solve_window(&h, &window)?;
            let s = &ground.states[0];
            let w = self.engine.pair_weights(&s.amplitudes, &s.amplitudes)?;
            let v = self.engine.potential_at_atoms(&w)?;
            for (t, x) in total.iter_mut().zip(&v) {
                *t += x.re;
            }
        }
        let scale = electrons as f64 / n_imp as f64;
        Ok(total.into_iter().map(|x| x * scale).collect())
    }
}

/// Converged (or latest) N-electron Slater determinant.
#[derive(Debug, Clone)]
pub struct ManyBodyState {
    pub config: SpinConfiguration,
    pub basis: SpinOrbitalBasis,
    pub integrals: OrbitalIntegrals,
    /// All HF orbitals, per spin channel and ascending.
    pub states: Vec<Vec<HfState>>,
    pub channels: Vec<Channel>,
    pub energy: f64,
    /// On-site screening of the TB step that produced `basis`, eV.
    pub screening: Vec<f64>,
}

impl ManyBodyState {
    pub fn occupied(&self) -> Vec<&HfState> {
        self.channels
            .iter()
            .zip(&self.states)
            .flat_map(|(ch, st)| st[..ch.occupied].iter())
            .collect()
    }

    pub fn density_matrix(&self) -> Vec<c64> {
        uhf::density_matrix(self.basis.len(), &self.occupied())
    }

    /// Energy re-evaluated from the stored integrals and orbitals.
    pub fn recompute_energy(&self) -> f64 {
        let d = self.density_matrix();
        let f = build_fock(&self.integrals, &d);
        uhf::energy(&self.integrals, &d, &f)
    }

    /// Amplitude of the determinant on the TB spin-orbitals `indices`, with
    /// electron slots in the order of [`Self::occupied`].
    pub fn slater_amplitude(&self, indices: &[usize]) -> c64 {
        let occ = self.occupied();
        let n = occ.len();
        if indices.len() != n {
            return c64::new(0.0, 0.0);
        }
        let mut a = vec![c64::new(0.0, 0.0); n * n];
        for (col, s) in occ.iter().enumerate() {
            for (row, &k) in indices.iter().enumerate() {
                a[col * n + row] = s.coefficients[k];
            }
        }
        linalg::determinant(n, &a)
    }

    pub fn real_space(&self, state: &HfState) -> OrbitalSnapshot {
        OrbitalSnapshot {
            spin: state.spin,
            amplitudes: self.basis.expand(&state.coefficients),
        }
    }

    pub fn occupied_orbitals(&self) -> Vec<OrbitalSnapshot> {
        self.occupied().into_iter().map(|s| self.real_space(s)).collect()
    }

    /// Coefficient matrix (column-major, `M × M`) whose columns are the HF
    /// orbitals, occupied first, plus their spins.
    pub fn rotation(&self) -> (Vec<c64>, Vec<SpinLabel>) {
        let m = self.basis.len();
        let mut cols: Vec<&HfState> = self.occupied();
        for (ch, st) in self.channels.iter().zip(&self.states) {
            cols.extend(st[ch.occupied..].iter());
        }
        let mut c = Vec::with_capacity(m * cols.len());
        for s in &cols {
            c.extend_from_slice(&s.coefficients);
        }
        (c, cols.iter().map(|s| s.spin).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScfStatus {
    Converged,
    Stopped,
}

pub enum ScfStart {
    Fresh,
    /// Begin from a given on-site screening.
    Screening(Vec<f64>),
    Resume(ScfCheckpoint),
}

pub struct ScfOutcome {
    pub status: ScfStatus,
    pub state: ManyBodyState,
    pub trace: ScfTrace,
    pub checkpoint: ScfCheckpoint,
    pub resumed: bool,
}

/// Projects earlier occupied orbitals onto a new basis and orthonormalizes.
fn warm_start(basis: &SpinOrbitalBasis, occupied: &[OrbitalSnapshot]) -> Vec<HfState> {
    let mut states: Vec<HfState> = occupied
        .iter()
        .map(|o| HfState {
            coefficients: basis.project(o.spin, &o.amplitudes),
            energy: 0.0,
            spin: o.spin,
        })
        .collect();
    uhf::orthonormalize(&mut states);
    states
}

/// Runs the three-step loop until the screening and the energy settle.
/// `observer` sees the checkpoint after every unconverged iteration.
pub fn scf_loop(
    problem: &ScfProblem,
    config: &SpinConfiguration,
    controls: &ScfControls,
    start: ScfStart,
    observer: &mut dyn FnMut(&ScfCheckpoint) -> Result<()>,
) -> Result<ScfOutcome> {
    controls.validate()?;
    let n = config.electrons();
    let atoms = problem.atoms.len();
    let weight = controls.screening.weight(n);
    let resumed = matches!(start, ScfStart::Resume(_));
    let mut cp = match start {
        ScfStart::Resume(cp) => {
            if cp.atoms != atoms || cp.electrons != n || cp.screening.len() != atoms {
                return Err(Error::Checkpoint(format!(
                    "checkpoint for {} atoms / {} electrons does not fit {atoms} atoms / {n} electrons",
                    cp.atoms, cp.electrons
                )));
            }
            cp
        }
        other => {
            let screening = match other {
                ScfStart::Screening(s) => {
                    if s.len() != atoms {
                        return Err(Error::BasisMismatch(format!("{} screening values for {atoms} atoms", s.len())));
                    }
                    s
                }
                _ => match controls.init {
                    InitMode::Zero => vec![0.0; atoms],
                    InitMode::Superposition => problem
                        .superposition_potential(n)
                        .map_err(|e| e.at_stage("initial screening"))?
                        .into_iter()
                        .map(|x| x * weight)
                        .collect(),
                },
            };
            ScfCheckpoint {
                completed: 0,
                atoms,
                electrons: n,
                screening,
                previous_energy: None,
                history: AndersonHistory::default(),
                occupied: Vec::new(),
                trace: ScfTrace::default(),
            }
        }
    };

    loop {
        if cp.completed >= controls.max_iterations {
            return Err(Error::ScfNotConverged(Box::new(cp.trace)));
        }
        let iteration = cp.completed + 1;
        let h = problem.screened_hamiltonian(&cp.screening)?;
        let sol = solve_window(&h, &problem.window).map_err(|e| e.at_stage("tb eigensolve"))?;
        let basis = SpinOrbitalBasis::from_states(&sol.states);
        let table = pair_table(&problem.engine, &basis.vector_refs()).map_err(|e| e.at_stage("pair integrals"))?;
        let ints = basis::integrals(&basis, &table, &cp.screening)?;
        let guess = (!cp.occupied.is_empty()).then(|| warm_start(&basis, &cp.occupied));
        let hf = solve_uhf(&ints, config, guess.as_deref(), &controls.uhf).map_err(|e| e.at_stage("hartree-fock"))?;
        let mix = basis::density_mixing(&basis, &hf.density);
        let output: Vec<f64> = table.combined_potential(&mix).iter().map(|v| v.re * weight).collect();
        let delta = output
            .iter()
            .zip(&cp.screening)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let delta_energy = cp.previous_energy.map(|p| (hf.energy - p).abs());
        let converged = delta < controls.potential_tolerance
            && delta_energy.is_none_or(|d| d < controls.energy_tolerance)
            && hf.converged;

        let residual: Vec<f64> = output.iter().zip(&cp.screening).map(|(a, b)| a - b).collect();
        cp.history.push(cp.screening.clone(), residual, controls.anderson_depth);
        let anderson_next = if controls.anderson && iteration >= controls.anderson_start && !converged {
            mixing::anderson(&cp.history, controls.mixing)
        } else {
            None
        };
        let method = if anderson_next.is_some() { "anderson" } else { "linear" };
        let record = ScfIteration {
            iteration,
            max_delta_potential: delta,
            energy: hf.energy,
            delta_energy,
            mixing: controls.mixing,
            method: method.to_string(),
            inner_iterations: hf.iterations,
            inner_converged: hf.converged,
        };
        log::info!("{record}");
        cp.trace.iterations.push(record);

        let state = ManyBodyState {
            config: config.clone(),
            basis,
            integrals: ints,
            states: hf.states,
            channels: hf.channels,
            energy: hf.energy,
            screening: cp.screening.clone(),
        };
        cp.completed = iteration;
        cp.previous_energy = Some(state.energy);
        cp.occupied = state.occupied_orbitals();
        if converged {
            cp.trace.converged = true;
            return Ok(ScfOutcome {
                status: ScfStatus::Converged,
                state,
                trace: cp.trace.clone(),
                checkpoint: cp,
                resumed,
            });
        }
        cp.screening = anderson_next.unwrap_or_else(|| mixing::linear(&cp.screening, &output, controls.mixing));
        observer(&cp)?;
        if controls.stop_after.is_some_and(|k| iteration >= k) {
            return Ok(ScfOutcome {
                status: ScfStatus::Stopped,
                state,
                trace: cp.trace.clone(),
                checkpoint: cp,
                resumed,
            });
        }
    }
}

/// Total density and Hartree potential `J^(N)` of occupied orbitals.
pub struct ScreeningFields {
    pub density: ScalarField,
    pub potential: ScalarField,
    /// Regularized potential at each atom, eV.
    pub at_atoms: Vec<f64>,
}

pub fn total_density_and_screening(engine: &FieldEngine, occupied: &[OrbitalSnapshot]) -> Result<ScreeningFields> {
    let atoms = engine.atom_count();
    let mut weights = vec![c64::new(0.0, 0.0); atoms];
    for o in occupied {
        let w = engine.pair_weights(&o.amplitudes, &o.amplitudes)?;
        for (t, x) in weights.iter_mut().zip(&w) {
            *t += x;
        }
    }
    let density = engine.deposit(&weights)?;
    let potential = engine.solve_density(&density)?;
    let at_atoms = if occupied.is_empty() {
        vec![0.0; atoms]
    } else {
        engine.potential_at_atoms(&weights)?.iter().map(|v| v.re).collect()
    };
    Ok(ScreeningFields {
        density,
        potential,
        at_atoms,
    })
}
