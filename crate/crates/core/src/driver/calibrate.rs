use serde::{Deserialize, Serialize};

use super::{box_band_edge, RunConfig};
use crate::eigensolver::solve_window;
use crate::error::{Error, Result};
use crate::lattice::build_lattice;
use crate::tb::{assemble, impurity_potential, OnsitePotential};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    #[serde(rename = "central_cell_correction_ev")]
    pub correction: f64,
    #[serde(rename = "band_edge_ev")]
    pub band_edge: f64,
    #[serde(rename = "ground_ev")]
    pub ground: f64,
    #[serde(rename = "depth_ev")]
    pub depth: f64,
    #[serde(rename = "target_depth_ev")]
    pub target: f64,
    pub evaluations: usize,
    /// Window levels below the band edge, ascending.
    #[serde(rename = "bound_levels_ev")]
    pub bound: Vec<f64>,
    /// Largest gap inside a spin (or Kramers) pair of bound levels.
    #[serde(rename = "pair_splitting_ev")]
    pub pair_splitting: f64,
    /// Input config with the calibrated correction on every impurity.
    pub config: RunConfig,
}

/// Tunes the central-cell correction, shared by all impurities, so the
/// ground level sits the target depth below the donor-free box edge.
/// The depth shrinks as the correction grows, so a bracket is found by
/// stepping from the configured value and then bisected.
pub fn calibrate_ccc(config: &RunConfig) -> Result<CalibrationReport> {
    let params = config.validate()?;
    let settings = &config.calibration;
    if config.geometry.impurities.is_empty() {
        return Err(Error::Configuration("calibration needs at least one impurity".into()));
    }
    if !(settings.step_ev > 0.0 && settings.tolerance_ev > 0.0) {
        return Err(Error::Configuration("calibration step and tolerance must be positive".into()));
    }
    let edge = box_band_edge(config, &params)?;
    let atoms = build_lattice(&config.geometry)?;
    let h0 = assemble(&atoms, &params, &OnsitePotential::zeros(atoms.len()))?;
    let window = config.effective_window();
    let with = |c: f64| {
        let mut g = config.geometry.clone();
        for imp in &mut g.impurities {
            imp.central_cell_correction = c;
        }
        g
    };
    let mut evaluations = 0usize;
    let mut ground_at = |c: f64, count: usize| -> Result<Vec<f64>> {
        evaluations += 1;
        let h = h0.with_potential(&impurity_potential(&atoms, &with(c)))?;
        let mut w = window.clone();
        w.count = count;
        Ok(solve_window(&h, &w)
            .map_err(|e| e.at_stage("calibration eigensolve"))?
            .states
            .iter()
            .map(|s| s.energy)
            .collect())
    };
    let target = settings.target_depth_ev;
    let mut excess = |c: f64| -> Result<(f64, f64)> {
        let g = ground_at(c, 1)?[0];
        Ok((edge - g - target, g))
    };

    let start = config.geometry.impurities[0].central_cell_correction;
    let (f0, g0) = excess(start)?;
    let (mut deep, mut shallow) = (start, start);
    let mut best = (start, f0, g0);
    if f0.abs() > settings.tolerance_ev {
        // Positive excess means too deep: raise the correction.
        let dir = if f0 > 0.0 { 1.0 } else { -1.0 };
        let mut c = start;
        let mut found = false;
        for _ in 0..settings.max_steps {
            let mut next = c + dir * settings.step_ev;
            if next >= 0.0 {
                // Corrections stay attractive; probe just below zero once.
                if c >= -settings.tolerance_ev {
                    return Err(Error::Configuration(format!(
                        "the bare Coulomb well already binds {:.6} eV below the box edge, deeper than the \
                         {target} eV target; lower target_depth_ev or enlarge the box",
                        best.1 + target
                    )));
                }
                next = -settings.tolerance_ev;
            }
            let (f, g) = excess(next)?;
            if f.abs() < best.1.abs() {
                best = (next, f, g);
            }
            if (f > 0.0) != (f0 > 0.0) {
                (deep, shallow) = if f0 > 0.0 { (c, next) } else { (next, c) };
                found = true;
                break;
            }
            c = next;
        }
        if !found {
            return Err(Error::Configuration(format!(
                "no correction within {} steps of {start} eV reaches a depth of {target} eV",
                settings.max_steps
            )));
        }
        for _ in 0..settings.max_bisections {
            if best.1.abs() <= settings.tolerance_ev {
                break;
            }
            let mid = 0.5 * (deep + shallow);
            let (f, g) = excess(mid)?;
            if f.abs() < best.1.abs() {
                best = (mid, f, g);
            }
            if f > 0.0 {
                deep = mid;
            } else {
                shallow = mid;
            }
        }
    }
    let (correction, _, ground) = best;
    let levels = ground_at(correction, settings.manifold_states.max(2))?;
    let bound: Vec<f64> = levels.into_iter().filter(|&e| e < edge).collect();
    let pair_splitting = bound.chunks_exact(2).map(|p| (p[1] - p[0]).abs()).fold(0.0, f64::max);
    let mut calibrated = config.clone();
    calibrated.geometry = with(correction);
    Ok(CalibrationReport {
        correction,
        band_edge: edge,
        ground,
        depth: edge - ground,
        target,
        evaluations,
        bound,
        pair_splitting,
        config: calibrated,
    })
}
