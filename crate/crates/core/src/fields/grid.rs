use std::io::{Read, Write};
use std::path::Path;

use faer::c64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::AtomSet;

/// Cubic node grid. Node `(i, j, k)` sits at `origin + h·(i, j, k)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub spacing: f64,
    pub origin: [f64; 3],
    pub intervals: usize,
}

impl Grid {
    /// Smallest cubic grid holding every atom on a node with `padding` empty
    /// intervals on each side. The interval count is rounded up to `c·2^L`
    /// with `8 ≤ c < 16` so multigrid can coarsen cleanly.
    pub fn for_atoms(atoms: &AtomSet, spacing: f64, padding: usize) -> Result<Grid> {
        let quarter = atoms.lattice_constant / 4.0;
        if !(spacing.is_finite() && spacing > 0.0) {
            return Err(Error::Rasterization(format!("grid spacing {spacing} nm is not positive")));
        }
        if spacing > quarter * (1.0 + 1e-9) {
            return Err(Error::Rasterization(format!(
                "grid spacing {spacing} nm exceeds the nearest-neighbour projection {quarter} nm; neighbouring atoms would alias"
            )));
        }
        let ratio = quarter / spacing;
        let m = ratio.round();
        if (ratio - m).abs() > 1e-6 {
            return Err(Error::Rasterization(format!(
                "grid spacing {spacing} nm must divide a/4 = {quarter} nm"
            )));
        }
        let m = m as usize;
        let span = atoms
            .sites
            .iter()
            .flat_map(|s| s.iter())
            .fold((i32::MAX, i32::MIN), |(lo, hi), &c| (lo.min(c), hi.max(c)));
        let span = if atoms.is_empty() { 0 } else { (span.1 - span.0) as usize * m };
        let needed = span + 2 * padding;
        let intervals = multigrid_friendly(needed.max(8));
        let low = padding + (intervals - needed) / 2;
        let min_pos = atoms
            .positions
            .iter()
            .fold([f64::INFINITY; 3], |acc, p| [acc[0].min(p[0]), acc[1].min(p[1]), acc[2].min(p[2])]);
        let min_pos = if atoms.is_empty() { [0.0; 3] } else { min_pos };
        let origin = [
            min_pos[0] - low as f64 * spacing,
            min_pos[1] - low as f64 * spacing,
            min_pos[2] - low as f64 * spacing,
        ];
        Ok(Grid {
            spacing,
            origin,
            intervals,
        })
    }

    pub fn nodes_per_axis(&self) -> usize {
        self.intervals + 1
    }

    pub fn len(&self) -> usize {
        self.nodes_per_axis().pow(3)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        let n = self.nodes_per_axis();
        (i * n + j) * n + k
    }

    pub fn coords(&self, index: usize) -> [usize; 3] {
        let n = self.nodes_per_axis();
        [index / (n * n), (index / n) % n, index % n]
    }

    pub fn position(&self, index: usize) -> [f64; 3] {
        let c = self.coords(index);
        [
            self.origin[0] + c[0] as f64 * self.spacing,
            self.origin[1] + c[1] as f64 * self.spacing,
            self.origin[2] + c[2] as f64 * self.spacing,
        ]
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing.powi(3)
    }

    pub fn extent(&self) -> f64 {
        self.intervals as f64 * self.spacing
    }

    /// Cloud-in-cell stencil of a point: up to eight `(node, weight)` pairs
    /// with weights summing to one.
    pub fn stencil(&self, r: [f64; 3]) -> Result<Vec<(usize, f64)>> {
        let mut base = [0usize; 3];
        let mut frac = [0.0; 3];
        for d in 0..3 {
            let t = (r[d] - self.origin[d]) / self.spacing;
            let near = t.round();
            let t = if (t - near).abs() < 1e-9 { near } else { t };
            if t < 0.0 || t > self.intervals as f64 {
                return Err(Error::Rasterization(format!("point {r:?} lies outside the grid")));
            }
            let b = (t.floor() as usize).min(self.intervals.saturating_sub(1));
            base[d] = b;
            frac[d] = t - b as f64;
        }
        let mut out = Vec::with_capacity(8);
        for c in 0..8 {
            let off = [c >> 2 & 1, c >> 1 & 1, c & 1];
            let mut w = 1.0;
            for d in 0..3 {
                w *= if off[d] == 1 { frac[d] } else { 1.0 - frac[d] };
            }
            if w != 0.0 {
                out.push((self.index(base[0] + off[0], base[1] + off[1], base[2] + off[2]), w));
            }
        }
        Ok(out)
    }
}

fn multigrid_friendly(n: usize) -> usize {
    let mut scale = 1;
    while n > 15 * scale {
        scale *= 2;
    }
    let c = n.div_ceil(scale).max(8);
    c * scale
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FieldUnit {
    /// eV
    Potential,
    /// nm⁻³
    Density,
}

/// Complex samples on a [`Grid`]; the imaginary part is stored only when present.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub grid: Grid,
    pub unit: FieldUnit,
    pub re: Vec<f64>,
    pub im: Option<Vec<f64>>,
}

const MAGIC: &[u8; 8] = b"TBHFFLD1";

impl ScalarField {
    pub fn zeros(grid: &Grid, unit: FieldUnit) -> ScalarField {
        ScalarField {
            grid: grid.clone(),
            unit,
            re: vec![0.0; grid.len()],
            im: None,
        }
    }

    pub fn is_complex(&self) -> bool {
        self.im.is_some()
    }

    pub fn value(&self, index: usize) -> c64 {
        c64::new(self.re[index], self.im.as_ref().map_or(0.0, |v| v[index]))
    }

    /// Σ values · h³.
    pub fn integral(&self) -> c64 {
        let dv = self.grid.cell_volume();
        let re: f64 = self.re.iter().sum();
        let im: f64 = self.im.as_ref().map_or(0.0, |v| v.iter().sum());
        c64::new(re * dv, im * dv)
    }

    /// Trilinear interpolation, the adjoint of cloud-in-cell deposition.
    pub fn sample(&self, r: [f64; 3]) -> Result<c64> {
        let mut acc = c64::new(0.0, 0.0);
        for (idx, w) in self.grid.stencil(r)? {
            acc += self.value(idx) * w;
        }
        Ok(acc)
    }

    pub fn max_abs(&self) -> f64 {
        (0..self.re.len()).map(|i| self.value(i).norm()).fold(0.0, f64::max)
    }

    /// Flat little-endian export; layout documented in the README.
    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        w.write_all(MAGIC)?;
        let n = self.grid.nodes_per_axis() as u64;
        for _ in 0..3 {
            w.write_all(&n.to_le_bytes())?;
        }
        w.write_all(&self.grid.spacing.to_le_bytes())?;
        for o in self.grid.origin {
            w.write_all(&o.to_le_bytes())?;
        }
        let unit = match self.unit {
            FieldUnit::Potential => 0u8,
            FieldUnit::Density => 1u8,
        };
        w.write_all(&[unit, self.is_complex() as u8, 0, 0, 0, 0, 0, 0])?;
        let mut buf = Vec::with_capacity(self.re.len() * 8);
        for x in &self.re {
            buf.extend_from_slice(&x.to_le_bytes());
        }
        if let Some(im) = &self.im {
            for x in im {
                buf.extend_from_slice(&x.to_le_bytes());
            }
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<ScalarField> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Serialization("not a field file".into()));
        }
        let mut word = [0u8; 8];
        let mut dims = [0u64; 3];
        for d in dims.iter_mut() {
            r.read_exact(&mut word)?;
            *d = u64::from_le_bytes(word);
        }
        if dims[0] != dims[1] || dims[1] != dims[2] || dims[0] < 2 {
            return Err(Error::Serialization(format!("unsupported grid dimensions {dims:?}")));
        }
        r.read_exact(&mut word)?;
        let spacing = f64::from_le_bytes(word);
        let mut origin = [0.0; 3];
        for o in origin.iter_mut() {
            r.read_exact(&mut word)?;
            *o = f64::from_le_bytes(word);
        }
        r.read_exact(&mut word)?;
        let unit = match word[0] {
            0 => FieldUnit::Potential,
            1 => FieldUnit::Density,
            u => return Err(Error::Serialization(format!("unknown unit tag {u}"))),
        };
        let complex = word[1] == 1;
        let grid = Grid {
            spacing,
            origin,
            intervals: dims[0] as usize - 1,
        };
        let len = grid.len();
        let read_block = |r: &mut dyn Read| -> Result<Vec<f64>> {
            let mut bytes = vec![0u8; len * 8];
            r.read_exact(&mut bytes)?;
            Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
        };
        let re = read_block(&mut r)?;
        let im = if complex { Some(read_block(&mut r)?) } else { None };
        Ok(ScalarField { grid, unit, re, im })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_to(std::io::BufWriter::new(f))
    }

    pub fn load(path: &Path) -> Result<ScalarField> {
        let f = std::fs::File::open(path)?;
        ScalarField::read_from(std::io::BufReader::new(f))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{build_lattice, DeviceGeometry};

    #[test]
    fn friendly_sizes() {
        assert_eq!(multigrid_friendly(8), 8);
        assert_eq!(multigrid_friendly(15), 15);
        assert_eq!(multigrid_friendly(16), 16);
        assert_eq!(multigrid_friendly(17), 18);
        assert_eq!(multigrid_friendly(97), 104);
    }

    #[test]
    fn atoms_sit_on_nodes_with_padding() {
        let atoms = build_lattice(&DeviceGeometry::with_cells(3)).unwrap();
        let h = atoms.lattice_constant / 4.0;
        let g = Grid::for_atoms(&atoms, h, 4).unwrap();
        for p in &atoms.positions {
            let s = g.stencil(*p).unwrap();
            assert_eq!(s.len(), 1);
            let c = g.coords(s[0].0);
            assert!(c.iter().all(|&x| x >= 4 && x <= g.intervals - 4));
        }
        assert!(g.extent() >= atoms.effective_edge);
    }

    #[test]
    fn aliasing_and_commensurability_guards() {
        let atoms = build_lattice(&DeviceGeometry::with_cells(2)).unwrap();
        let a = atoms.lattice_constant;
        assert!(matches!(Grid::for_atoms(&atoms, a / 3.0, 4), Err(Error::Rasterization(_))));
        assert!(matches!(Grid::for_atoms(&atoms, a / 5.0, 4), Err(Error::Rasterization(_))));
        assert!(Grid::for_atoms(&atoms, a / 8.0, 4).is_ok());
    }

    #[test]
    fn stencil_weights_sum_to_one() {
        let g = Grid {
            spacing: 0.1,
            origin: [0.0; 3],
            intervals: 8,
        };
        let s = g.stencil([0.123, 0.456, 0.789]).unwrap();
        assert_eq!(s.len(), 8);
        assert!((s.iter().map(|x| x.1).sum::<f64>() - 1.0).abs() < 1e-14);
        assert!(g.stencil([0.9, 0.0, 0.0]).is_err());
    }

    #[test]
    fn binary_round_trip() {
        let g = Grid {
            spacing: 0.25,
            origin: [-1.0, 0.5, 2.0],
            intervals: 3,
        };
        let mut f = ScalarField::zeros(&g, FieldUnit::Potential);
        f.re.iter_mut().enumerate().for_each(|(i, v)| *v = i as f64 * 0.5);
        f.im = Some((0..g.len()).map(|i| -(i as f64)).collect());
        let mut bytes = Vec::new();
        f.write_to(&mut bytes).unwrap();
        assert_eq!(bytes.len(), 8 + 24 + 32 + 8 + 2 * 8 * 64);
        let back = ScalarField::read_from(bytes.as_slice()).unwrap();
        assert_eq!(back, f);
    }
}
