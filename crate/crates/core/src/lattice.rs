//! Diamond lattice inside a cubic box.
//!
//! Sites are addressed by integer coordinates in units of a/4 measured from
//! an anchor site at the box center. The box covers `[-2n, 2n)` on each axis
//! for `n` cubic cells per edge, which holds exactly `8n³` sites.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::{DEFAULT_DIELECTRIC, DEFAULT_LATTICE_CONSTANT_NM};

/// Relative slack when snapping `box_edge / a` to an integer cell count.
const CELL_SNAP_TOLERANCE: f64 = 1e-3;
const SITE_TOLERANCE_NM: f64 = 1e-9;

/// Bond directions from a sublattice-A site, in units of a/4.
pub const BOND_DIRECTIONS: [[i32; 3]; 4] = [[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]];

pub const NO_NEIGHBOR: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "unit", rename_all = "snake_case")]
pub enum SitePosition {
    /// Conventional-cell fractions relative to the anchor site.
    Fractional { coords: [f64; 3] },
    /// Offset from the anchor site in nm.
    Nm { coords: [f64; 3] },
}

impl SitePosition {
    pub fn fractional(x: f64, y: f64, z: f64) -> Self {
        SitePosition::Fractional { coords: [x, y, z] }
    }

    pub fn offset_nm(&self, lattice_constant: f64) -> [f64; 3] {
        match *self {
            SitePosition::Fractional { coords } => coords.map(|c| c * lattice_constant),
            SitePosition::Nm { coords } => coords,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImpuritySite {
    pub position: SitePosition,
    #[serde(rename = "central_cell_correction_ev")]
    pub central_cell_correction: f64,
}

impl ImpuritySite {
    pub fn new(position: SitePosition, central_cell_correction: f64) -> Self {
        ImpuritySite {
            position,
            central_cell_correction,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceGeometry {
    #[serde(rename = "box_edge_nm")]
    pub box_edge: f64,
    #[serde(rename = "lattice_constant_nm", default = "default_lattice_constant")]
    pub lattice_constant: f64,
    #[serde(default)]
    pub impurities: Vec<ImpuritySite>,
    #[serde(default = "default_dielectric")]
    pub dielectric_constant: f64,
    /// Defaults to a quarter of the lattice constant.
    #[serde(rename = "grid_spacing_nm", default, skip_serializing_if = "Option::is_none")]
    pub grid_spacing: Option<f64>,
}

fn default_lattice_constant() -> f64 {
    DEFAULT_LATTICE_CONSTANT_NM
}

fn default_dielectric() -> f64 {
    DEFAULT_DIELECTRIC
}

impl DeviceGeometry {
    pub fn new(box_edge: f64) -> Self {
        DeviceGeometry {
            box_edge,
            lattice_constant: DEFAULT_LATTICE_CONSTANT_NM,
            impurities: Vec::new(),
            dielectric_constant: DEFAULT_DIELECTRIC,
            grid_spacing: None,
        }
    }

    /// Box of `cells` conventional cells per edge.
    pub fn with_cells(cells: usize) -> Self {
        Self::new(cells as f64 * DEFAULT_LATTICE_CONSTANT_NM)
    }

    pub fn with_impurity(mut self, site: ImpuritySite) -> Self {
        self.impurities.push(site);
        self
    }

    pub fn grid_spacing(&self) -> f64 {
        self.grid_spacing.unwrap_or(self.lattice_constant / 4.0)
    }

    /// Cells per edge: nearest integer when within a small relative
    /// slack, otherwise rounded down.
    pub fn cells_per_edge(&self) -> usize {
        let ratio = self.box_edge / self.lattice_constant;
        let nearest = ratio.round();
        if nearest >= 1.0 && (ratio - nearest).abs() <= CELL_SNAP_TOLERANCE * nearest {
            nearest as usize
        } else {
            ratio.floor().max(0.0) as usize
        }
    }

    pub fn effective_edge(&self) -> f64 {
        self.cells_per_edge() as f64 * self.lattice_constant
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.box_edge > 0.0 && self.box_edge.is_finite()) {
            return Err(Error::Geometry(format!("box edge must be positive, got {} nm", self.box_edge)));
        }
        if !(self.lattice_constant > 0.0 && self.lattice_constant.is_finite()) {
            return Err(Error::Geometry(format!(
                "lattice constant must be positive, got {} nm",
                self.lattice_constant
            )));
        }
        let h = self.grid_spacing();
        if !(h > 0.0 && h <= self.lattice_constant) {
            return Err(Error::Geometry(format!(
                "grid spacing {h} nm must lie in (0, lattice constant]"
            )));
        }
        if !(self.dielectric_constant > 0.0 && self.dielectric_constant.is_finite()) {
            return Err(Error::Geometry(format!(
                "dielectric constant must be positive, got {}",
                self.dielectric_constant
            )));
        }
        if self.cells_per_edge() == 0 {
            return Err(Error::Geometry(format!(
                "box edge {} nm is shorter than one lattice constant",
                self.box_edge
            )));
        }
        for (k, imp) in self.impurities.iter().enumerate() {
            let u = imp.central_cell_correction;
            if !(u.is_finite() && u < 0.0) {
                return Err(Error::Geometry(format!(
                    "impurity {k}: central-cell correction must be finite and negative, got {u} eV"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Species {
    Host,
    Impurity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sublattice {
    A,
    B,
}

impl Sublattice {
    /// Sign applied to `BOND_DIRECTIONS` for bonds leaving this sublattice.
    pub fn bond_sign(self) -> i32 {
        match self {
            Sublattice::A => 1,
            Sublattice::B => -1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AtomSet {
    pub lattice_constant: f64,
    pub cells_per_edge: usize,
    pub effective_edge: f64,
    /// Positions in nm, origin at the box corner.
    pub positions: Vec<[f64; 3]>,
    /// Integer site coordinates in units of a/4 relative to the anchor.
    pub sites: Vec<[i32; 3]>,
    pub species: Vec<Species>,
    /// Neighbor index per bond direction, `NO_NEIGHBOR` when cut by the box.
    pub neighbors: Vec<[u32; 4]>,
    /// Atom index of each configured impurity, in configuration order.
    pub impurity_atoms: Vec<usize>,
}

pub fn is_site(u: [i32; 3]) -> bool {
    let even = u.iter().all(|c| c.rem_euclid(2) == 0);
    let odd = u.iter().all(|c| c.rem_euclid(2) == 1);
    if even {
        (u[0] + u[1] + u[2]).rem_euclid(4) == 0
    } else if odd {
        (u[0] + u[1] + u[2] - 3).rem_euclid(4) == 0
    } else {
        false
    }
}

pub fn sublattice_of(u: [i32; 3]) -> Sublattice {
    if u[0].rem_euclid(2) == 0 {
        Sublattice::A
    } else {
        Sublattice::B
    }
}

struct SiteIndex {
    span: i32,
    table: Vec<u32>,
}

impl SiteIndex {
    fn new(n: usize) -> Self {
        let span = 4 * n as i32;
        SiteIndex {
            span,
            table: vec![NO_NEIGHBOR; (span as usize).pow(3)],
        }
    }

    fn slot(&self, u: [i32; 3]) -> Option<usize> {
        let half = self.span / 2;
        let mut idx = 0usize;
        for c in u {
            let s = c + half;
            if s < 0 || s >= self.span {
                return None;
            }
            idx = idx * self.span as usize + s as usize;
        }
        Some(idx)
    }

    fn get(&self, u: [i32; 3]) -> Option<u32> {
        self.slot(u).map(|s| self.table[s]).filter(|&v| v != NO_NEIGHBOR)
    }
}

pub fn build_lattice(geometry: &DeviceGeometry) -> Result<AtomSet> {
    geometry.validate()?;
    let n = geometry.cells_per_edge();
    let a = geometry.lattice_constant;
    let effective_edge = geometry.effective_edge();
    if (effective_edge - geometry.box_edge).abs() > SITE_TOLERANCE_NM {
        log::info!(
            "box edge {} nm snapped to {} cells ({} nm)",
            geometry.box_edge,
            n,
            effective_edge
        );
    }

    let half = 2 * n as i32;
    let mut index = SiteIndex::new(n);
    let mut sites = Vec::with_capacity(8 * n * n * n);
    for x in -half..half {
        for y in -half..half {
            for z in -half..half {
                let u = [x, y, z];
                if is_site(u) {
                    let slot = index.slot(u).expect("site inside span");
                    index.table[slot] = sites.len() as u32;
                    sites.push(u);
                }
            }
        }
    }

    let quarter = a / 4.0;
    let positions: Vec<[f64; 3]> = sites
        .iter()
        .map(|u| u.map(|c| (c + half) as f64 * quarter))
        .collect();

    let neighbors: Vec<[u32; 4]> = sites
        .iter()
        .map(|&u| {
            let sign = sublattice_of(u).bond_sign();
            let mut nb = [NO_NEIGHBOR; 4];
            for (k, d) in BOND_DIRECTIONS.iter().enumerate() {
                let v = [u[0] + sign * d[0], u[1] + sign * d[1], u[2] + sign * d[2]];
                if let Some(j) = index.get(v) {
                    nb[k] = j;
                }
            }
            nb
        })
        .collect();

    let mut species = vec![Species::Host; sites.len()];
    let mut impurity_atoms = Vec::with_capacity(geometry.impurities.len());
    for (k, imp) in geometry.impurities.iter().enumerate() {
        let offset = imp.position.offset_nm(a);
        let mut u = [0i32; 3];
        for axis in 0..3 {
            let q = offset[axis] / quarter;
            let r = q.round();
            if (q - r).abs() * quarter > SITE_TOLERANCE_NM {
                return Err(Error::Geometry(format!(
                    "impurity {k} at {:?} is not on a lattice site",
                    imp.position
                )));
            }
            u[axis] = r as i32;
        }
        if !is_site(u) {
            return Err(Error::Geometry(format!(
                "impurity {k} at {:?} is not on a lattice site",
                imp.position
            )));
        }
        let atom = index.get(u).ok_or_else(|| {
            Error::Geometry(format!("impurity {k} at {:?} lies outside the box", imp.position))
        })? as usize;
        if species[atom] == Species::Impurity {
            return Err(Error::Geometry(format!(
                "impurity {k} at {:?} shares a site with another impurity",
                imp.position
            )));
        }
        species[atom] = Species::Impurity;
        impurity_atoms.push(atom);
    }

    Ok(AtomSet {
        lattice_constant: a,
        cells_per_edge: n,
        effective_edge,
        positions,
        sites,
        species,
        neighbors,
        impurity_atoms,
    })
}

impl AtomSet {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn sublattice(&self, atom: usize) -> Sublattice {
        sublattice_of(self.sites[atom])
    }

    /// Bond vector (nm) along direction `k` leaving `atom`.
    pub fn bond_vector(&self, atom: usize, k: usize) -> [f64; 3] {
        let s = self.sublattice(atom).bond_sign() as f64 * self.lattice_constant / 4.0;
        BOND_DIRECTIONS[k].map(|c| c as f64 * s)
    }

    /// Present neighbors as `(index, bond vector in nm)`.
    pub fn neighbors_of(&self, atom: usize) -> impl Iterator<Item = (usize, [f64; 3])> + '_ {
        self.neighbors[atom]
            .iter()
            .enumerate()
            .filter(|(_, &j)| j != NO_NEIGHBOR)
            .map(move |(k, &j)| (j as usize, self.bond_vector(atom, k)))
    }

    pub fn coordination(&self, atom: usize) -> usize {
        self.neighbors[atom].iter().filter(|&&j| j != NO_NEIGHBOR).count()
    }

    /// Position of the anchor site (box center) in box coordinates.
    pub fn anchor(&self) -> [f64; 3] {
        [self.effective_edge / 2.0; 3]
    }

    pub fn impurity_positions(&self) -> Vec<[f64; 3]> {
        self.impurity_atoms.iter().map(|&i| self.positions[i]).collect()
    }

    pub fn bond_length(&self) -> f64 {
        3f64.sqrt() / 4.0 * self.lattice_constant
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterGeometry {
    pub label: char,
    /// Second impurity, conventional-cell fractions; the first sits at the anchor.
    pub second_site: [f64; 3],
}

impl ClusterGeometry {
    pub fn separation(&self, lattice_constant: f64) -> f64 {
        self.second_site.iter().map(|c| c * c).sum::<f64>().sqrt() * lattice_constant
    }

    pub fn impurities(&self, central_cell_correction: f64) -> [ImpuritySite; 2] {
        [
            ImpuritySite::new(SitePosition::fractional(0.0, 0.0, 0.0), central_cell_correction),
            ImpuritySite::new(
                SitePosition::Fractional { coords: self.second_site },
                central_cell_correction,
            ),
        ]
    }
}

/// The six nearby impurity-pair clusters, labelled A to F.
pub fn cluster_catalog() -> Vec<ClusterGeometry> {
    vec![
        ClusterGeometry { label: 'A', second_site: [0.25, 0.25, 0.25] },
        ClusterGeometry { label: 'B', second_site: [0.5, 0.0, 0.5] },
        ClusterGeometry { label: 'C', second_site: [1.0, 0.0, 0.0] },
        ClusterGeometry { label: 'D', second_site: [1.0, 0.0, 1.0] },
        ClusterGeometry { label: 'E', second_site: [0.75, 0.25, 0.75] },
        ClusterGeometry { label: 'F', second_site: [1.0, 1.0, 1.0] },
    ]
}

pub fn cluster_by_label(label: char) -> Option<ClusterGeometry> {
    let label = label.to_ascii_uppercase();
    cluster_catalog().into_iter().find(|c| c.label == label)
}

/// Pair of sites along [100] separated by `cells` lattice constants,
/// placed as close to symmetric about the anchor as the lattice allows.
pub fn dimer_along_100(cells: u32, central_cell_correction: f64) -> [ImpuritySite; 2] {
    let left = -((cells / 2) as f64);
    let right = left + cells as f64;
    [
        ImpuritySite::new(SitePosition::fractional(left, 0.0, 0.0), central_cell_correction),
        ImpuritySite::new(SitePosition::fractional(right, 0.0, 0.0), central_cell_correction),
    ]
}
