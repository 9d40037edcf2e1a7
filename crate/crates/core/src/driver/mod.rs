//! Run configurations, persistence, sweeps, resume and calibration.
//!
//! Each run lives in `<output>/<run id>/` and holds `config.toml`, one
//! `stage-*.json` per finished reference problem, `checkpoint-*.json` for
//! the SCF in flight, the field files and finally `record.json`.

mod calibrate;
mod config;
mod sweep;

#[cfg(test)]
mod tests;

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::ci::{ci_over_hf, fci_over_tb};
use crate::eigensolver::{conduction_band_edge, solve_window, TbState};
use crate::error::{Error, Result};
use crate::fields::ScalarField;
use crate::hartree_fock::{
    scf_loop, total_density_and_screening, ManyBodyState, OrbitalSnapshot, ScfCheckpoint, ScfProblem, ScfStart,
    ScfStatus, ScfTrace, Spin, SpinConfiguration,
};
use crate::lattice::build_lattice;
use crate::observables::{
    overlap_map, radial_metrics, BandEdge, DispersionReport, EdgeSource, EnergyReport, Provenance, TotalEnergy,
};
use crate::tb::{assemble, OnsitePotential, TbParameterSet};

pub use calibrate::{calibrate_ccc, CalibrationReport};
pub use config::{
    config_diff, CalibrationSettings, CiRequest, EdgeRequest, ObservableRequest, ParameterSource, RunConfig,
};
pub use sweep::{run_sweep, SweepAxis, SweepEntry, SweepOptions, SweepOutcome};

pub const RECORD_FILE: &str = "record.json";
pub const CONFIG_FILE: &str = "config.toml";
pub const DENSITY_FILE: &str = "density.fld";
pub const HARTREE_FILE: &str = "hartree.fld";

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Recompute even when a record exists.
    pub force: bool,
    /// Interrupt the main SCF after this many iterations.
    pub stop_after: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    TbHf,
    FciTb,
    Ci0Hf,
}

impl Method {
    pub fn label(self) -> &'static str {
        match self {
            Method::TbHf => "tb-hf",
            Method::FciTb => "fci-tb",
            Method::Ci0Hf => "ci0-hf",
        }
    }
}

/// One SCF problem of a run: the main N-electron one or a reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub label: String,
    pub spins: SpinConfiguration,
    #[serde(rename = "energy_ev")]
    pub energy: f64,
    #[serde(rename = "fci_tb_energy_ev")]
    pub fci_tb: Option<f64>,
    #[serde(rename = "ci0_hf_energy_ev")]
    pub ci_hf: Option<f64>,
    pub trace: ScfTrace,
    pub resumed: bool,
    pub seconds: f64,
}

impl StageRecord {
    fn energy_of(&self, method: Method) -> Option<f64> {
        match method {
            Method::TbHf => Some(self.energy),
            Method::FciTb => self.fci_tb,
            Method::Ci0Hf => self.ci_hf,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub method: Method,
    pub report: EnergyReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dispersion {
    /// Mean density of the occupied HF orbitals.
    pub hf: DispersionReport,
    /// Mean density of the lowest N bare TB spin-orbitals.
    pub tb: DispersionReport,
    #[serde(rename = "hf_orbitals_nm")]
    pub hf_orbitals: Vec<f64>,
    #[serde(rename = "tb_orbitals_nm")]
    pub tb_orbitals: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub config: RunConfig,
    pub parameters_checksum: String,
    /// Main stage first.
    pub stages: Vec<StageRecord>,
    pub reports: Vec<MethodReport>,
    pub band_edge: Option<BandEdge>,
    pub dispersion: Option<Dispersion>,
    /// `|⟨TB_i|HF_j⟩|²`, rows over the bare TB window.
    pub overlap: Option<Vec<Vec<f64>>>,
    pub resumed: bool,
    #[serde(rename = "wall_seconds")]
    pub seconds: f64,
    pub software_version: String,
    #[serde(skip)]
    pub cache_hit: bool,
}

impl RunRecord {
    pub fn main(&self) -> &StageRecord {
        &self.stages[0]
    }

    pub fn report(&self, method: Method) -> Option<&EnergyReport> {
        self.reports.iter().find(|r| r.method == method).map(|r| &r.report)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        serde_json::from_slice(&bytes).map_err(|e| Error::Serialization(format!("{}: {e}", path.display())))
    }

    pub fn to_table(&self) -> String {
        let mut out = format!("run {}\n", self.run_id);
        for r in &self.reports {
            out.push_str(&format!("[{}]\n{}", r.method.label(), r.report.to_table()));
        }
        if let Some(d) = &self.dispersion {
            out.push_str(&format!(
                "<r> HF\t{:.6}\tnm\n<r> TB\t{:.6}\tnm\n",
                d.hf.mean_radius, d.tb.mean_radius
            ));
        }
        out
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn run_dir(output: &Path, run_id: &str) -> PathBuf {
    output.join(run_id)
}

struct StagePlan {
    label: &'static str,
    spins: SpinConfiguration,
}

/// Reference problems first, the main problem last.
fn plan(config: &RunConfig) -> Vec<StagePlan> {
    let mut out = Vec::new();
    let n = config.spins.electrons();
    if config.observables.references && n >= 2 {
        if n >= 3 {
            out.push(StagePlan {
                label: "one",
                spins: SpinConfiguration::new(vec![Spin::Up]).expect("one electron"),
            });
        }
        out.push(StagePlan {
            label: "reduced",
            spins: config.spins.without_last().expect("n >= 2"),
        });
    }
    out.push(StagePlan {
        label: "main",
        spins: config.spins.clone(),
    });
    out
}

fn provenance(config: &RunConfig, checksum: &str) -> Result<Provenance> {
    Ok(Provenance {
        box_edge: config.geometry.effective_edge(),
        lattice_constant: config.geometry.lattice_constant,
        dielectric_constant: config.geometry.dielectric_constant,
        parameters_checksum: checksum.to_string(),
        impurities: serde_json::to_string(&config.geometry.impurities)?,
        basis_size: config.window.count,
    })
}

/// Energy reports from stored stage totals; used both after a run and by
/// `report`.
pub fn derive_reports(
    config: &RunConfig,
    checksum: &str,
    stages: &[StageRecord],
    edge: Option<BandEdge>,
) -> Result<Vec<MethodReport>> {
    let prov = provenance(config, checksum)?;
    let main = &stages[0];
    let n = main.spins.electrons();
    let find = |label: &str| stages.iter().find(|s| s.label == label);
    let mut out = Vec::new();
    for method in [Method::TbHf, Method::FciTb, Method::Ci0Hf] {
        let total = |s: &StageRecord| {
            s.energy_of(method).map(|e| TotalEnergy {
                label: s.spins.to_string(),
                electrons: s.spins.electrons(),
                energy: e,
                provenance: prov.clone(),
            })
        };
        let Some(charged) = total(main) else { continue };
        let reduced = if n == 1 {
            // The empty system has zero energy.
            Some(TotalEnergy {
                label: "0e".into(),
                electrons: 0,
                energy: 0.0,
                provenance: prov.clone(),
            })
        } else {
            find("reduced").and_then(total)
        };
        let single = match n {
            1 => None,
            2 => reduced.clone(),
            _ => find("one").and_then(total),
        };
        out.push(MethodReport {
            method,
            report: EnergyReport::derive(charged, reduced, single, edge)?,
        });
    }
    Ok(out)
}

/// Runs one configuration end to end, or returns the stored record.
pub fn run_single(config: &RunConfig, options: &RunOptions) -> Result<RunRecord> {
    let params = config.validate()?;
    let run_id = config.run_id(&params.checksum)?;
    let dir = run_dir(&config.output, &run_id);
    let record_path = dir.join(RECORD_FILE);
    if !options.force && record_path.exists() {
        let mut rec = RunRecord::load(&record_path)?;
        rec.cache_hit = true;
        return Ok(rec);
    }
    if dir.exists() {
        std::fs::remove_dir_all(&dir)?;
    }
    std::fs::create_dir_all(&dir)?;
    write_atomic(&dir.join(CONFIG_FILE), config.to_toml()?.as_bytes())?;
    execute(config, &params, &run_id, &dir, options.stop_after, false)
}

/// Continues an interrupted run. A supplied config must match the stored
/// snapshot; a finished run returns its record unchanged.
pub fn resume(dir: &Path, config: Option<&RunConfig>) -> Result<RunRecord> {
    let stored = RunConfig::load(&dir.join(CONFIG_FILE))
        .map_err(|e| Error::Checkpoint(format!("{} is not a run directory: {e}", dir.display())))?;
    if let Some(c) = config {
        let diff = config_diff(&stored, c)?;
        if !diff.is_empty() {
            return Err(Error::Provenance(format!(
                "config differs from the stored snapshot:\n  {}",
                diff.join("\n  ")
            )));
        }
    }
    let record_path = dir.join(RECORD_FILE);
    if record_path.exists() {
        return RunRecord::load(&record_path);
    }
    let params = stored.validate()?;
    let run_id = stored.run_id(&params.checksum)?;
    execute(&stored, &params, &run_id, dir, None, true)
}

fn stage_path(dir: &Path, label: &str) -> PathBuf {
    dir.join(format!("stage-{label}.json"))
}

fn checkpoint_path(dir: &Path, label: &str) -> PathBuf {
    dir.join(format!("checkpoint-{label}.json"))
}

fn execute(
    config: &RunConfig,
    params: &TbParameterSet,
    run_id: &str,
    dir: &Path,
    stop_after: Option<usize>,
    resuming: bool,
) -> Result<RunRecord> {
    let started = Instant::now();
    let window = config.effective_window();
    let problem = ScfProblem::new(&config.geometry, params, &window, &config.fields)?;
    let bare = solve_window(&problem.hamiltonian, &problem.window).map_err(|e| e.at_stage("tb eigensolve"))?;
    for w in &bare.warnings {
        log::warn!("{w}");
    }
    let mut stages = Vec::new();
    let mut main_state = None;
    for step in plan(config) {
        let path = stage_path(dir, step.label);
        if resuming && path.exists() {
            stages.push(serde_json::from_slice(&std::fs::read(&path)?)?);
            continue;
        }
        let t = Instant::now();
        let cp_path = checkpoint_path(dir, step.label);
        let start = if resuming && cp_path.exists() {
            ScfStart::Resume(ScfCheckpoint::load(&cp_path)?)
        } else {
            ScfStart::Fresh
        };
        let mut controls = config.scf.clone();
        if step.label == "main" {
            controls.stop_after = stop_after;
        }
        let outcome = scf_loop(&problem, &step.spins, &controls, start, &mut |cp| cp.save(&cp_path))
            .map_err(|e| e.at_stage("scf"))?;
        if outcome.status == ScfStatus::Stopped {
            return Err(Error::Interrupted(format!(
                "stopped after {} SCF iterations; resume {run_id} to continue",
                outcome.checkpoint.completed
            )));
        }
        let state = outcome.state;
        let fci_tb = if config.ci.over_tb {
            Some(fci_over_tb(&problem, &step.spins, &config.ci.options).map_err(|e| e.at_stage("fci over tb"))?.energies[0])
        } else {
            None
        };
        let ci_hf = if config.ci.over_hf {
            Some(ci_over_hf(&state, &config.ci.options).map_err(|e| e.at_stage("ci over hf"))?.energies[0])
        } else {
            None
        };
        let rec = StageRecord {
            label: step.label.to_string(),
            spins: step.spins.clone(),
            energy: state.energy,
            fci_tb,
            ci_hf,
            trace: outcome.trace,
            resumed: outcome.resumed,
            seconds: t.elapsed().as_secs_f64(),
        };
        if step.label == "main" {
            main_state = Some(state);
        } else {
            write_atomic(&path, &serde_json::to_vec(&rec)?)?;
        }
        stages.push(rec);
    }
    stages.reverse();
    let state = main_state.expect("main stage runs last");

    let edge = band_edge(config, params)?;
    let reports = derive_reports(config, &params.checksum, &stages, edge)?;
    let occupied = state.occupied_orbitals();
    let dispersion = if config.observables.dispersion {
        Some(dispersion(&problem, &state, &bare.states, config.observables.bin_width_nm)?)
    } else {
        None
    };
    let overlap = if config.observables.overlap {
        Some(overlap_map(&bare.states, &occupied)?)
    } else {
        None
    };
    if config.observables.fields {
        let f = total_density_and_screening(&problem.engine, &occupied).map_err(|e| e.at_stage("fields"))?;
        f.density.save(&dir.join(DENSITY_FILE))?;
        f.potential.save(&dir.join(HARTREE_FILE))?;
    }
    let record = RunRecord {
        run_id: run_id.to_string(),
        config: config.clone(),
        parameters_checksum: params.checksum.clone(),
        resumed: stages.iter().any(|s| s.resumed),
        stages,
        reports,
        band_edge: edge,
        dispersion,
        overlap,
        seconds: started.elapsed().as_secs_f64(),
        software_version: env!("CARGO_PKG_VERSION").to_string(),
        cache_hit: false,
    };
    write_atomic(&dir.join(RECORD_FILE), &serde_json::to_vec_pretty(&record)?)?;
    Ok(record)
}

/// Band edge of the donor-free box under the run's window.
pub fn box_band_edge(config: &RunConfig, params: &TbParameterSet) -> Result<f64> {
    let mut clean = config.geometry.clone();
    clean.impurities.clear();
    let atoms = build_lattice(&clean)?;
    let h = assemble(&atoms, params, &OnsitePotential::zeros(atoms.len()))?;
    conduction_band_edge(&h, &config.effective_window()).map_err(|e| e.at_stage("band edge"))
}

fn band_edge(config: &RunConfig, params: &TbParameterSet) -> Result<Option<BandEdge>> {
    Ok(match config.observables.band_edge {
        EdgeRequest::None => None,
        EdgeRequest::FiniteBox => Some(BandEdge {
            energy: box_band_edge(config, params)?,
            source: EdgeSource::FiniteBox,
        }),
        EdgeRequest::Extrapolated { asymptote_ev } => Some(BandEdge {
            energy: asymptote_ev,
            source: EdgeSource::Extrapolated,
        }),
    })
}

/// Centroid of the impurities, or the box centre without any.
fn reference_point(problem: &ScfProblem) -> [f64; 3] {
    let imp = problem.atoms.impurity_positions();
    if imp.is_empty() {
        return problem.atoms.anchor();
    }
    let n = imp.len() as f64;
    [0, 1, 2].map(|k| imp.iter().map(|p| p[k]).sum::<f64>() / n)
}

fn mean_density(problem: &ScfProblem, orbitals: &[OrbitalSnapshot]) -> Result<ScalarField> {
    let mut weights = vec![faer::c64::new(0.0, 0.0); problem.atoms.len()];
    let scale = 1.0 / orbitals.len().max(1) as f64;
    for o in orbitals {
        for (t, w) in weights.iter_mut().zip(problem.engine.pair_weights(&o.amplitudes, &o.amplitudes)?) {
            *t += w * scale;
        }
    }
    problem.engine.deposit(&weights)
}

fn dispersion(problem: &ScfProblem, state: &ManyBodyState, bare: &[TbState], bin: f64) -> Result<Dispersion> {
    let r0 = reference_point(problem);
    let hf: Vec<OrbitalSnapshot> = state.occupied_orbitals();
    // Lowest bare spin-orbitals with the same spins as the occupied ones.
    let mut taken = vec![false; bare.len()];
    let mut tb = Vec::with_capacity(hf.len());
    for o in &hf {
        if let Some(i) = (0..bare.len()).find(|&i| !taken[i] && bare[i].spin == o.spin) {
            taken[i] = true;
            tb.push(OrbitalSnapshot {
                spin: bare[i].spin,
                amplitudes: bare[i].amplitudes.to_vec(),
            });
        }
    }
    let each = |set: &[OrbitalSnapshot]| -> Result<Vec<f64>> {
        set.iter()
            .map(|o| Ok(radial_metrics(&mean_density(problem, std::slice::from_ref(o))?, r0, bin)?.mean_radius))
            .collect()
    };
    Ok(Dispersion {
        hf: radial_metrics(&mean_density(problem, &hf)?, r0, bin)?,
        tb: radial_metrics(&mean_density(problem, &tb)?, r0, bin)?,
        hf_orbitals: each(&hf)?,
        tb_orbitals: each(&tb)?,
    })
}

/// Re-derives the energy reports of a stored run from its stage totals.
pub fn report(dir: &Path) -> Result<RunRecord> {
    let mut rec = RunRecord::load(&dir.join(RECORD_FILE))?;
    rec.reports = derive_reports(&rec.config, &rec.parameters_checksum, &rec.stages, rec.band_edge)?;
    Ok(rec)
}

/// Field of a stored run: `density` or `hartree`.
pub fn load_field(dir: &Path, name: &str) -> Result<ScalarField> {
    let file = match name {
        "density" => DENSITY_FILE,
        "hartree" => HARTREE_FILE,
        other => return Err(Error::Configuration(format!("unknown field {other}; expected density or hartree"))),
    };
    let path = dir.join(file);
    if !path.exists() {
        return Err(Error::Configuration(format!("{} has no {name} field", dir.display())));
    }
    ScalarField::load(&path)
}
