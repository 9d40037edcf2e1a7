//! Real-space densities, Poisson potentials and Coulomb matrix elements.
//!
//! Pair weights `w(a) = Σ_{orb,spin} c_j*(a) c_i(a)` are deposited by
//! cloud-in-cell onto a cubic grid whose spacing divides a/4, so every atom
//! owns exactly one node. Poisson is solved by multigrid with free-space
//! Dirichlet data; matrix elements sample the potential back at the atoms.
//!
//! The grid self-term of a node charge is replaced by the self-energy of the
//! deposition kernel, a uniform cube of edge `h`.

mod boundary;
mod grid;
mod integrals;
mod multigrid;
pub mod quadrature;

use faer::c64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use boundary::BoundaryModel;
pub use grid::{FieldUnit, Grid, ScalarField};
pub use integrals::{pair_table, pair_weights, CoulombTensor, PairTable};
pub use multigrid::{Multigrid, MultigridReport};

use crate::error::{Error, Result};
use crate::lattice::{AtomSet, DeviceGeometry};
use crate::units::COULOMB_EV_NM;
use boundary::BoundaryPlan;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FieldOptions {
    /// Empty grid intervals between the outermost atoms and the boundary.
    pub padding: usize,
    /// Multigrid stops below this residual relative to the initial one.
    pub tolerance: f64,
    pub max_cycles: usize,
    pub boundary: BoundaryModel,
    /// Multipole acceptance distance in block half-diagonals.
    pub opening: f64,
    /// Overrides the kernel self-energy as the same-atom Coulomb energy (eV).
    #[serde(rename = "onsite_energy_ev", skip_serializing_if = "Option::is_none")]
    pub onsite_energy: Option<f64>,
}

impl Default for FieldOptions {
    fn default() -> Self {
        FieldOptions {
            padding: 4,
            tolerance: 1e-12,
            max_cycles: 60,
            boundary: BoundaryModel::Multipole,
            opening: 4.0,
            onsite_energy: None,
        }
    }
}

/// Accepted residual when the requested tolerance is out of reach.
const RESIDUAL_CEILING: f64 = 1e-8;

/// Source density of a state pair.
#[derive(Debug, Clone)]
pub struct PairDensity {
    pub field: ScalarField,
    /// ⟨φ_j|φ_i⟩, the integral of the field.
    pub charge: c64,
    /// Per-atom weights that were deposited.
    pub weights: Vec<c64>,
}

/// Grid, solver hierarchy and constants for one atom set.
#[derive(Debug, Clone)]
pub struct FieldEngine {
    grid: Grid,
    atom_nodes: Vec<usize>,
    coupling: f64,
    onsite: f64,
    lattice_self: f64,
    multigrid: Multigrid,
    boundary: BoundaryPlan,
    options: FieldOptions,
}

impl FieldEngine {
    pub fn new(atoms: &AtomSet, geometry: &DeviceGeometry, options: FieldOptions) -> Result<FieldEngine> {
        let h = geometry.grid_spacing();
        let grid = Grid::for_atoms(atoms, h, options.padding)?;
        let mut atom_nodes = Vec::with_capacity(atoms.len());
        for (a, p) in atoms.positions.iter().enumerate() {
            let s = grid.stencil(*p)?;
            if s.len() != 1 {
                return Err(Error::Rasterization(format!("atom {a} does not sit on a grid node")));
            }
            atom_nodes.push(s[0].0);
        }
        let coupling = COULOMB_EV_NM / geometry.dielectric_constant;
        let onsite = match options.onsite_energy {
            Some(u) if u.is_finite() => u,
            Some(u) => return Err(Error::Parameters(format!("on-site energy {u} is not finite"))),
            None => quadrature::cube_self_energy() * coupling / h,
        };
        if !(options.tolerance > 0.0 && options.opening > 1.0) {
            return Err(Error::Parameters("field tolerance must be positive and opening above one".into()));
        }
        Ok(FieldEngine {
            multigrid: Multigrid::new(grid.intervals, h),
            boundary: BoundaryPlan::new(&grid, options.opening),
            lattice_self: quadrature::lattice_self_energy() * coupling / h,
            grid,
            atom_nodes,
            coupling,
            onsite,
            options,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn atom_count(&self) -> usize {
        self.atom_nodes.len()
    }

    /// k_c/ε in eV·nm.
    pub fn coupling(&self) -> f64 {
        self.coupling
    }

    /// Same-atom Coulomb energy per unit of co-located weight (eV).
    pub fn onsite_energy(&self) -> f64 {
        self.onsite
    }

    /// Grid potential of a unit node charge at its own node (eV).
    pub fn lattice_self_energy(&self) -> f64 {
        self.lattice_self
    }

    pub fn options(&self) -> &FieldOptions {
        &self.options
    }

    pub fn atom_node(&self, atom: usize) -> usize {
        self.atom_nodes[atom]
    }

    pub fn pair_weights(&self, state_i: &[c64], state_j: &[c64]) -> Result<Vec<c64>> {
        pair_weights(state_i, state_j, self.atom_count())
    }

    /// Cloud-in-cell deposit of per-atom weights as a density (nm⁻³).
    pub fn deposit(&self, weights: &[c64]) -> Result<ScalarField> {
        self.check_atoms(weights.len())?;
        let mut field = ScalarField::zeros(&self.grid, FieldUnit::Density);
        let inv = 1.0 / self.grid.cell_volume();
        let complex = weights.iter().any(|w| w.im != 0.0);
        let mut im = if complex { vec![0.0; self.grid.len()] } else { Vec::new() };
        for (w, &node) in weights.iter().zip(&self.atom_nodes) {
            field.re[node] += w.re * inv;
            if complex {
                im[node] += w.im * inv;
            }
        }
        if complex {
            field.im = Some(im);
        }
        Ok(field)
    }

    /// Density ψ_j*ψ_i of two amplitude vectors over the engine's atoms.
    pub fn rasterize(&self, state_i: &[c64], state_j: &[c64]) -> Result<PairDensity> {
        let weights = self.pair_weights(state_i, state_j)?;
        let field = self.deposit(&weights)?;
        let charge = weights.iter().sum();
        Ok(PairDensity { field, charge, weights })
    }

    pub fn solve_poisson(&self, source: &PairDensity) -> Result<ScalarField> {
        self.solve_density(&source.field)
    }

    /// Potential (eV) of a density field; real and imaginary parts are
    /// solved separately.
    pub fn solve_density(&self, density: &ScalarField) -> Result<ScalarField> {
        if density.grid != self.grid {
            return Err(Error::BasisMismatch("density lives on a different grid".into()));
        }
        let re = self.solve_real(&density.re)?;
        let im = match &density.im {
            Some(v) if v.iter().any(|x| *x != 0.0) => Some(self.solve_real(v)?),
            _ => None,
        };
        Ok(ScalarField {
            grid: self.grid.clone(),
            unit: FieldUnit::Potential,
            re,
            im,
        })
    }

    fn solve_real(&self, rho: &[f64]) -> Result<Vec<f64>> {
        let dv = self.grid.cell_volume();
        let charges: Vec<(usize, f64)> = rho
            .iter()
            .enumerate()
            .filter(|(_, r)| **r != 0.0)
            .map(|(i, r)| (i, r * dv))
            .collect();
        let mut v = vec![0.0; self.grid.len()];
        if charges.is_empty() {
            return Ok(v);
        }
        let shell = self.boundary.values(&charges, self.options.boundary);
        for (&node, value) in self.boundary.nodes.iter().zip(shell) {
            v[node] = self.coupling * value;
        }
        let scale = 4.0 * std::f64::consts::PI * self.coupling;
        let f: Vec<f64> = rho.iter().map(|r| scale * r).collect();
        let report = self.multigrid.solve(&mut v, &f, self.options.tolerance, self.options.max_cycles);
        if report.relative_residual > self.options.tolerance {
            if report.relative_residual > RESIDUAL_CEILING {
                return Err(Error::PoissonNotConverged {
                    cycles: report.cycles,
                    residual: report.relative_residual,
                });
            }
            log::debug!(
                "poisson stopped at relative residual {:.2e} after {} cycles",
                report.relative_residual,
                report.cycles
            );
        }
        Ok(v)
    }

    /// Σ_a w(a)·J(r_a) for the probe pair; the raw grid value including the
    /// same-node term.
    pub fn coulomb_element(&self, field: &ScalarField, probe: &PairDensity) -> Result<c64> {
        if field.grid != self.grid {
            return Err(Error::BasisMismatch("potential lives on a different grid".into()));
        }
        self.check_atoms(probe.weights.len())?;
        Ok(probe
            .weights
            .iter()
            .zip(&self.atom_nodes)
            .map(|(w, &node)| w * field.value(node))
            .sum())
    }

    /// U_onsite · Σ_a w₁(a) w₂(a).
    pub fn onsite_regularized_element(&self, first: &PairDensity, second: &PairDensity) -> c64 {
        colocated(&first.weights, &second.weights) * self.onsite
    }

    /// Regularized Coulomb element of `probe` in the potential of `source`:
    /// the grid value with its same-node part swapped for the on-site energy.
    pub fn element(&self, probe: &PairDensity, source: &PairDensity) -> Result<c64> {
        let field = self.solve_poisson(source)?;
        let raw = self.coulomb_element(&field, probe)?;
        let overlap = colocated(&probe.weights, &source.weights);
        Ok(raw + overlap * (self.onsite - self.lattice_self))
    }

    /// Regularized potential (eV) at every atom generated by per-atom weights.
    pub fn potential_at_atoms(&self, weights: &[c64]) -> Result<Vec<c64>> {
        self.check_atoms(weights.len())?;
        let inv = 1.0 / self.grid.cell_volume();
        let mut out: Vec<c64> = weights.iter().map(|w| w * (self.onsite - self.lattice_self)).collect();
        for part in 0..2 {
            let values: Vec<f64> = weights.iter().map(|w| if part == 0 { w.re } else { w.im }).collect();
            if values.iter().all(|x| *x == 0.0) {
                continue;
            }
            let mut rho = vec![0.0; self.grid.len()];
            for (x, &node) in values.iter().zip(&self.atom_nodes) {
                rho[node] += x * inv;
            }
            let v = self.solve_real(&rho)?;
            for (o, &node) in out.iter_mut().zip(&self.atom_nodes) {
                if part == 0 {
                    o.re += v[node];
                } else {
                    o.im += v[node];
                }
            }
        }
        Ok(out)
    }

    /// [`Self::potential_at_atoms`] for many sources on the rayon pool.
    pub fn batch_potentials(&self, sources: &[Vec<c64>]) -> Result<Vec<Vec<c64>>> {
        sources.par_iter().map(|w| self.potential_at_atoms(w)).collect()
    }

    fn check_atoms(&self, len: usize) -> Result<()> {
        if len != self.atom_count() {
            return Err(Error::BasisMismatch(format!(
                "{len} atom weights for an engine over {} atoms",
                self.atom_count()
            )));
        }
        Ok(())
    }
}

fn colocated(a: &[c64], b: &[c64]) -> c64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
