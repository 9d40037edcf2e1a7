//! Charging and binding energies, band-edge extrapolation, radial
//! dispersion and TB/HF overlaps.

use faer::c64;
use serde::{Deserialize, Serialize};

use crate::eigensolver::{SpinLabel, TbState};
use crate::error::{Error, Result};
use crate::fields::ScalarField;
use crate::hartree_fock::OrbitalSnapshot;
use crate::units::MEV_PER_EV;

/// What a total energy was computed with; energies combine only when these
/// agree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    #[serde(rename = "box_edge_nm")]
    pub box_edge: f64,
    #[serde(rename = "lattice_constant_nm")]
    pub lattice_constant: f64,
    pub dielectric_constant: f64,
    pub parameters_checksum: String,
    /// Impurity sites and corrections, serialized.
    pub impurities: String,
    pub basis_size: usize,
}

impl Provenance {
    fn diff(&self, other: &Provenance) -> Vec<String> {
        let mut out = Vec::new();
        if self.box_edge != other.box_edge {
            out.push(format!("box edge {} vs {} nm", self.box_edge, other.box_edge));
        }
        if self.lattice_constant != other.lattice_constant {
            out.push("lattice constant".into());
        }
        if self.dielectric_constant != other.dielectric_constant {
            out.push("dielectric constant".into());
        }
        if self.parameters_checksum != other.parameters_checksum {
            out.push("TB parameters".into());
        }
        if self.impurities != other.impurities {
            out.push("impurities".into());
        }
        if self.basis_size != other.basis_size {
            out.push(format!("basis size {} vs {}", self.basis_size, other.basis_size));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TotalEnergy {
    pub label: String,
    pub electrons: usize,
    #[serde(rename = "energy_ev")]
    pub energy: f64,
    pub provenance: Provenance,
}

fn same_run(a: &TotalEnergy, b: &TotalEnergy) -> Result<()> {
    let d = a.provenance.diff(&b.provenance);
    if d.is_empty() {
        Ok(())
    } else {
        Err(Error::Provenance(format!("{} and {} differ in {}", a.label, b.label, d.join(", "))))
    }
}

/// `E_N − (E_{N−1} + E_1)` in meV; for a single donor this is
/// `E(P⁻) − 2E(P⁰)`.
pub fn charging_energy(charged: &TotalEnergy, reduced: &TotalEnergy, single: &TotalEnergy) -> Result<f64> {
    same_run(charged, reduced)?;
    same_run(charged, single)?;
    Ok((charged.energy - (reduced.energy + single.energy)) * MEV_PER_EV)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeSource {
    FiniteBox,
    Extrapolated,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandEdge {
    #[serde(rename = "energy_ev")]
    pub energy: f64,
    pub source: EdgeSource,
}

/// `E_N − (E_{N−1} + E_CB)` in meV. Negative means bound.
pub fn binding_energy(charged: &TotalEnergy, reduced: &TotalEnergy, edge: BandEdge) -> Result<f64> {
    same_run(charged, reduced)?;
    Ok((charged.energy - (reduced.energy + edge.energy)) * MEV_PER_EV)
}

pub const SIGN_CONVENTION: &str = "BE < 0: bound";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub totals: Vec<TotalEnergy>,
    #[serde(rename = "charging_energy_mev")]
    pub charging_energy: Option<f64>,
    #[serde(rename = "binding_energy_mev")]
    pub binding_energy: Option<f64>,
    pub band_edge: Option<BandEdge>,
    pub sign_convention: String,
}

impl EnergyReport {
    /// Derives CE and BE from the N, N−1 and one-electron totals.
    pub fn derive(
        charged: TotalEnergy,
        reduced: Option<TotalEnergy>,
        single: Option<TotalEnergy>,
        edge: Option<BandEdge>,
    ) -> Result<Self> {
        let ce = match (&reduced, &single) {
            (Some(r), Some(s)) => Some(charging_energy(&charged, r, s)?),
            _ => None,
        };
        let be = match (&reduced, edge) {
            (Some(r), Some(e)) => Some(binding_energy(&charged, r, e)?),
            _ => None,
        };
        let mut totals = vec![charged];
        totals.extend(reduced);
        totals.extend(single);
        Ok(EnergyReport {
            totals,
            charging_energy: ce,
            binding_energy: be,
            band_edge: edge,
            sign_convention: SIGN_CONVENTION.to_string(),
        })
    }

    pub fn to_table(&self) -> String {
        let mut out = String::from("quantity\tvalue\tunit\n");
        for t in &self.totals {
            out.push_str(&format!("E[{} N={}]\t{:.9}\teV\n", t.label, t.electrons, t.energy));
        }
        if let Some(e) = self.band_edge {
            let src = match e.source {
                EdgeSource::FiniteBox => "finite box",
                EdgeSource::Extrapolated => "extrapolated",
            };
            out.push_str(&format!("E_CB ({src})\t{:.9}\teV\n", e.energy));
        }
        if let Some(ce) = self.charging_energy {
            out.push_str(&format!("CE\t{ce:.6}\tmeV\n"));
        }
        if let Some(be) = self.binding_energy {
            out.push_str(&format!("BE ({})\t{be:.6}\tmeV\n", self.sign_convention));
        }
        out
    }
}

/// `E(x) = a + b/x²` fitted by least squares in `1/x²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeFit {
    #[serde(rename = "asymptote_ev")]
    pub asymptote: f64,
    #[serde(rename = "coefficient_ev_nm2")]
    pub coefficient: f64,
    /// `‖E − fit‖ / ‖E − mean(E)‖`; zero for an exactly fitted series.
    pub relative_residual: f64,
    #[serde(rename = "rms_residual_ev")]
    pub rms_residual: f64,
}

impl EdgeFit {
    pub fn at(&self, edge: f64) -> f64 {
        self.asymptote + self.coefficient / (edge * edge)
    }
}

pub fn extrapolate_cb(series: &[(f64, f64)]) -> Result<EdgeFit> {
    let mut xs: Vec<f64> = series.iter().map(|p| p.0).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    if xs.len() < 3 {
        return Err(Error::DegenerateFit(format!("{} distinct box sizes; need at least 3", xs.len())));
    }
    if series.iter().any(|&(x, e)| !(x > 0.0) || !e.is_finite()) {
        return Err(Error::DegenerateFit("box edges must be positive and energies finite".into()));
    }
    let n = series.len() as f64;
    let u: Vec<f64> = series.iter().map(|&(x, _)| 1.0 / (x * x)).collect();
    let e: Vec<f64> = series.iter().map(|&(_, e)| e).collect();
    let mu = u.iter().sum::<f64>() / n;
    let me = e.iter().sum::<f64>() / n;
    let suu: f64 = u.iter().map(|v| (v - mu).powi(2)).sum();
    let sue: f64 = u.iter().zip(&e).map(|(a, b)| (a - mu) * (b - me)).sum();
    let b = sue / suu;
    let a = me - b * mu;
    let resid: f64 = u.iter().zip(&e).map(|(x, y)| (y - a - b * x).powi(2)).sum::<f64>().sqrt();
    let spread: f64 = e.iter().map(|y| (y - me).powi(2)).sum::<f64>().sqrt();
    Ok(EdgeFit {
        asymptote: a,
        coefficient: b,
        relative_residual: if spread > 0.0 { resid / spread } else { 0.0 },
        rms_residual: resid / n.sqrt(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialBin {
    #[serde(rename = "r_nm")]
    pub radius: f64,
    /// Integral of `g` over the shell, nm.
    #[serde(rename = "weight_nm")]
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispersionReport {
    #[serde(rename = "reference_nm")]
    pub reference: [f64; 3],
    /// `⟨r⟩ = ∫ |r − r₀| ρ(r) dr`, nm.
    #[serde(rename = "mean_radius_nm")]
    pub mean_radius: f64,
    pub bins: Vec<RadialBin>,
}

/// `g(r) = |r − r₀| ρ(r)` integrated over the grid, with a radial histogram
/// of bin width `bin_width`.
pub fn radial_metrics(density: &ScalarField, reference: [f64; 3], bin_width: f64) -> Result<DispersionReport> {
    let grid = &density.grid;
    let span = grid.extent();
    if (0..3).any(|k| reference[k] < grid.origin[k] || reference[k] > grid.origin[k] + span) {
        return Err(Error::Geometry(format!("reference point {reference:?} nm lies outside the box")));
    }
    if !(bin_width > 0.0) {
        return Err(Error::Configuration("radial bin width must be positive".into()));
    }
    let dv = grid.cell_volume();
    let mut mean = 0.0;
    let mut bins: Vec<f64> = Vec::new();
    for (i, &rho) in density.re.iter().enumerate() {
        if rho == 0.0 {
            continue;
        }
        let r = grid.position(i);
        let d = ((r[0] - reference[0]).powi(2) + (r[1] - reference[1]).powi(2) + (r[2] - reference[2]).powi(2)).sqrt();
        let g = d * rho * dv;
        mean += g;
        let b = (d / bin_width) as usize;
        if bins.len() <= b {
            bins.resize(b + 1, 0.0);
        }
        bins[b] += g;
    }
    Ok(DispersionReport {
        reference,
        mean_radius: mean,
        bins: bins
            .into_iter()
            .enumerate()
            .map(|(i, w)| RadialBin {
                radius: (i as f64 + 0.5) * bin_width,
                weight: w,
            })
            .collect(),
    })
}

/// `|⟨φ_i^TB|ψ_j^HF⟩|²`, rows over TB states.
pub fn overlap_map(tb: &[TbState], hf: &[OrbitalSnapshot]) -> Result<Vec<Vec<f64>>> {
    tb.iter()
        .map(|t| {
            hf.iter()
                .map(|h| {
                    let (a, b): (Vec<c64>, Vec<c64>) = match (t.spin, h.spin) {
                        (SpinLabel::Mixed, SpinLabel::Mixed) => (t.amplitudes.to_vec(), h.amplitudes.clone()),
                        (SpinLabel::Mixed, _) | (_, SpinLabel::Mixed) => {
                            return Err(Error::BasisMismatch("spinor and collinear states do not overlap".into()))
                        }
                        (s, u) if s != u => return Ok(0.0),
                        _ => (t.amplitudes.to_vec(), h.amplitudes.clone()),
                    };
                    if a.len() != b.len() {
                        return Err(Error::BasisMismatch(format!(
                            "TB state of length {} vs HF orbital of length {}",
                            a.len(),
                            b.len()
                        )));
                    }
                    Ok(a.iter().zip(&b).map(|(x, y)| x.conj() * y).sum::<c64>().norm_sqr())
                })
                .collect()
        })
        .collect()
}

/// Values on the grid plane `axis = coordinate` (nearest node), as rows of
/// `(u, v, value)` over the two remaining axes.
pub fn slice(field: &ScalarField, axis: usize, coordinate: f64) -> Result<Vec<[f64; 3]>> {
    if axis > 2 {
        return Err(Error::Configuration(format!("slice axis {axis} is not 0, 1 or 2")));
    }
    let g = &field.grid;
    let n = g.nodes_per_axis();
    let k = ((coordinate - g.origin[axis]) / g.spacing).round();
    if k < 0.0 || k as usize >= n {
        return Err(Error::Geometry(format!("slice at {coordinate} nm lies outside the grid")));
    }
    let k = k as usize;
    let (a, b) = match axis {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    };
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let mut idx = [0usize; 3];
            idx[axis] = k;
            idx[a] = i;
            idx[b] = j;
            let flat = g.index(idx[0], idx[1], idx[2]);
            let p = g.position(flat);
            out.push([p[a], p[b], field.re[flat]]);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{FieldUnit, Grid};
    use std::sync::Arc;

    fn prov() -> Provenance {
        Provenance {
            box_edge: 4.0,
            lattice_constant: 0.5431,
            dielectric_constant: 11.9,
            parameters_checksum: "x".into(),
            impurities: "P".into(),
            basis_size: 8,
        }
    }

    fn total(label: &str, n: usize, e: f64) -> TotalEnergy {
        TotalEnergy {
            label: label.into(),
            electrons: n,
            energy: e,
            provenance: prov(),
        }
    }

    #[test]
    fn energy_identities() {
        let neg = total("P-", 2, 2.01);
        let neu = total("P0", 1, 1.0);
        let ce = charging_energy(&neg, &neu, &neu).unwrap();
        assert!((ce - 10.0).abs() < 1e-9);
        let edge = BandEdge {
            energy: 1.01,
            source: EdgeSource::FiniteBox,
        };
        assert!(binding_energy(&neg, &neu, edge).unwrap().abs() < 1e-9);
        let r = EnergyReport::derive(neg.clone(), Some(neu.clone()), Some(neu.clone()), Some(edge)).unwrap();
        let ce2 = (r.totals[0].energy - r.totals[1].energy - r.totals[2].energy) * 1e3;
        assert!((r.charging_energy.unwrap() - ce2).abs() < 1e-9);
        assert!(r.to_table().contains("BE < 0: bound"));
    }

    #[test]
    fn mismatched_runs_are_refused() {
        let neg = total("P-", 2, 2.0);
        let mut other = total("P0", 1, 1.0);
        other.provenance.box_edge = 5.0;
        let err = charging_energy(&neg, &other, &other).unwrap_err();
        assert!(err.to_string().contains("box edge"), "{err}");
    }

    #[test]
    fn edge_fit_recovers_synthetic_series() {
        let (a, b) = (1.1318, 3.764);
        let series: Vec<(f64, f64)> = [4.0, 5.0, 6.5, 8.0, 9.0].iter().map(|&x| (x, a + b / (x * x))).collect();
        let fit = extrapolate_cb(&series).unwrap();
        assert!((fit.asymptote - a).abs() < 1e-9);
        assert!((fit.coefficient - b).abs() < 1e-9);
        assert!(fit.relative_residual < 1e-9);
        let flat = extrapolate_cb(&[(3.0, 1.2), (4.0, 1.2), (5.0, 1.2)]).unwrap();
        assert!((flat.asymptote - 1.2).abs() < 1e-12 && flat.coefficient.abs() < 1e-12);
        assert!(extrapolate_cb(&[(3.0, 1.0), (3.0, 1.1), (4.0, 1.0)]).is_err());
    }

    fn point_density(grid: &Grid, nodes: &[(usize, f64)]) -> ScalarField {
        let mut f = ScalarField::zeros(grid, FieldUnit::Density);
        for &(i, w) in nodes {
            f.re[i] = w / grid.cell_volume();
        }
        f
    }

    fn test_grid() -> Grid {
        Grid {
            spacing: 0.1,
            origin: [0.0; 3],
            intervals: 20,
        }
    }

    #[test]
    fn two_deltas_have_half_separation_dispersion() {
        let g = test_grid();
        let a = g.index(5, 10, 10);
        let b = g.index(15, 10, 10);
        let rho = point_density(&g, &[(a, 0.5), (b, 0.5)]);
        let rep = radial_metrics(&rho, [1.0, 1.0, 1.0], 0.05).unwrap();
        assert!((rep.mean_radius - 0.5).abs() < 1e-12);
        assert!(rep.bins.iter().all(|b| b.weight >= 0.0));
    }

    #[test]
    fn point_at_reference_has_zero_dispersion() {
        let g = test_grid();
        let rho = point_density(&g, &[(g.index(4, 4, 4), 1.0)]);
        let rep = radial_metrics(&rho, [0.4, 0.4, 0.4], 0.1).unwrap();
        assert!(rep.mean_radius.abs() < 1e-12);
        assert!(radial_metrics(&rho, [5.0, 0.0, 0.0], 0.1).is_err());
    }

    #[test]
    fn overlap_columns_sum_to_one_in_span() {
        let e = |v: Vec<f64>| Arc::new(v.into_iter().map(|x| c64::new(x, 0.0)).collect::<Vec<_>>());
        let s = 0.5f64.sqrt();
        let tb: Vec<TbState> = [e(vec![1.0, 0.0]), e(vec![0.0, 1.0])]
            .into_iter()
            .map(|a| TbState {
                energy: 0.0,
                spin: SpinLabel::Up,
                amplitudes: a,
                residual: 0.0,
                normalized: true,
            })
            .collect();
        let hf = vec![
            OrbitalSnapshot {
                spin: SpinLabel::Up,
                amplitudes: vec![c64::new(s, 0.0), c64::new(0.0, s)],
            },
            OrbitalSnapshot {
                spin: SpinLabel::Down,
                amplitudes: vec![c64::new(1.0, 0.0), c64::new(0.0, 0.0)],
            },
        ];
        let map = overlap_map(&tb, &hf).unwrap();
        let col: f64 = map.iter().map(|r| r[0]).sum();
        assert!((col - 1.0).abs() < 1e-12);
        assert_eq!(map[0][1], 0.0);
        assert!(map.iter().flatten().all(|v| (0.0..=1.0 + 1e-12).contains(v)));
    }

    #[test]
    fn slice_extracts_plane() {
        let g = test_grid();
        let rho = point_density(&g, &[(g.index(3, 7, 10), 1.0)]);
        let s = slice(&rho, 2, 1.0).unwrap();
        assert_eq!(s.len(), 21 * 21);
        let hit: Vec<_> = s.iter().filter(|p| p[2] != 0.0).collect();
        assert_eq!(hit.len(), 1);
        assert!((hit[0][0] - 0.3).abs() < 1e-12 && (hit[0][1] - 0.7).abs() < 1e-12);
    }
}
