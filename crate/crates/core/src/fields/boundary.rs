//! Free-space Dirichlet data for the outer shell of the grid.
//!
//! Values are `Σ q/|r − r_q|` in units of the coupling constant. Point charges
//! are grouped into an octree of node blocks; a block farther than `opening`
//! half-diagonals contributes through its monopole, dipole and quadrupole,
//! nearer blocks are refined down to direct sums.

use serde::{Deserialize, Serialize};

use super::grid::Grid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryModel {
    /// Total charge at the |q|-weighted centroid.
    Monopole,
    /// Monopole plus dipole about the same centroid.
    Dipole,
    /// Block-wise expansion through quadrupoles with near-field direct sums.
    #[default]
    Multipole,
}

#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    q: f64,
    p: [f64; 3],
    /// Traceless xx, yy, zz, xy, xz, yz of Σ q (3 d dᵀ − |d|² I).
    quad: [f64; 6],
    occupied: bool,
}

impl Moments {
    fn add_point(&mut self, q: f64, d: [f64; 3]) {
        self.shift_in(&Moments {
            q,
            p: [0.0; 3],
            quad: [0.0; 6],
            occupied: true,
        }, d);
    }

    /// Adds `child`, whose expansion centre sits at offset `d` from ours.
    fn shift_in(&mut self, child: &Moments, d: [f64; 3]) {
        if !child.occupied {
            return;
        }
        let q = child.q;
        let p = child.p;
        let pd = p[0] * d[0] + p[1] * d[1] + p[2] * d[2];
        let dd = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
        self.q += q;
        for a in 0..3 {
            self.p[a] += p[a] + q * d[a];
        }
        const PAIRS: [(usize, usize); 6] = [(0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2)];
        for (slot, &(a, b)) in PAIRS.iter().enumerate() {
            let delta = if a == b { 1.0 } else { 0.0 };
            self.quad[slot] += child.quad[slot] + 3.0 * (p[a] * d[b] + d[a] * p[b]) - 2.0 * pd * delta
                + q * (3.0 * d[a] * d[b] - dd * delta);
        }
        self.occupied = true;
    }

    fn eval(&self, r: [f64; 3]) -> f64 {
        let r2 = r[0] * r[0] + r[1] * r[1] + r[2] * r[2];
        let inv = 1.0 / r2.sqrt();
        let inv3 = inv * inv * inv;
        let inv5 = inv3 * inv * inv;
        let q = &self.quad;
        let quad = q[0] * r[0] * r[0]
            + q[1] * r[1] * r[1]
            + q[2] * r[2] * r[2]
            + 2.0 * (q[3] * r[0] * r[1] + q[4] * r[0] * r[2] + q[5] * r[1] * r[2]);
        self.q * inv + (self.p[0] * r[0] + self.p[1] * r[1] + self.p[2] * r[2]) * inv3 + 0.5 * quad * inv5
    }
}

/// Boundary node list of a grid plus the octree layout over its nodes.
#[derive(Debug, Clone)]
pub struct BoundaryPlan {
    grid: Grid,
    pub nodes: Vec<usize>,
    positions: Vec<[f64; 3]>,
    /// Blocks per axis on each tree level; level `l` blocks span `2^(l+1)` nodes.
    blocks: Vec<usize>,
    opening: f64,
}

impl BoundaryPlan {
    pub fn new(grid: &Grid, opening: f64) -> BoundaryPlan {
        let n = grid.nodes_per_axis();
        let mut nodes = Vec::new();
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    if i == 0 || j == 0 || k == 0 || i == n - 1 || j == n - 1 || k == n - 1 {
                        nodes.push(grid.index(i, j, k));
                    }
                }
            }
        }
        let positions = nodes.iter().map(|&i| grid.position(i)).collect();
        let mut blocks = Vec::new();
        let mut span = 2;
        loop {
            let b = n.div_ceil(span);
            blocks.push(b);
            if b <= 2 {
                break;
            }
            span *= 2;
        }
        BoundaryPlan {
            grid: grid.clone(),
            nodes,
            positions,
            blocks,
            opening,
        }
    }

    fn centre(&self, level: usize, b: [usize; 3]) -> [f64; 3] {
        let span = (2usize << level) as f64;
        let h = self.grid.spacing;
        [0, 1, 2].map(|d| self.grid.origin[d] + h * (b[d] as f64 * span + (span - 1.0) / 2.0))
    }

    fn half_diagonal(&self, level: usize) -> f64 {
        let span = (2usize << level) as f64;
        0.5 * 3f64.sqrt() * (span - 1.0) * self.grid.spacing
    }

    /// Boundary values for point charges `(node, charge)`.
    pub fn values(&self, charges: &[(usize, f64)], model: BoundaryModel) -> Vec<f64> {
        match model {
            BoundaryModel::Multipole => self.tree_values(charges),
            m => self.centroid_values(charges, m == BoundaryModel::Dipole),
        }
    }

    fn centroid_values(&self, charges: &[(usize, f64)], dipole: bool) -> Vec<f64> {
        let mut weight = 0.0;
        let mut c = [0.0; 3];
        for &(node, q) in charges {
            let r = self.grid.position(node);
            for d in 0..3 {
                c[d] += q.abs() * r[d];
            }
            weight += q.abs();
        }
        if weight == 0.0 {
            return vec![0.0; self.nodes.len()];
        }
        c.iter_mut().for_each(|x| *x /= weight);
        let mut m = Moments::default();
        for &(node, q) in charges {
            let r = self.grid.position(node);
            m.add_point(q, [r[0] - c[0], r[1] - c[1], r[2] - c[2]]);
        }
        if !dipole {
            m.p = [0.0; 3];
        }
        m.quad = [0.0; 6];
        self.positions
            .iter()
            .map(|r| m.eval([r[0] - c[0], r[1] - c[1], r[2] - c[2]]))
            .collect()
    }

    fn tree_values(&self, charges: &[(usize, f64)]) -> Vec<f64> {
        let levels = self.blocks.len();
        let flat = |level: usize, b: [usize; 3]| (b[0] * self.blocks[level] + b[1]) * self.blocks[level] + b[2];
        let mut tree: Vec<Vec<Moments>> = self.blocks.iter().map(|&b| vec![Moments::default(); b * b * b]).collect();

        // Leaf lists in CSR form.
        let leaf_count = self.blocks[0].pow(3);
        let mut start = vec![0usize; leaf_count + 1];
        let leaf_of = |node: usize| {
            let c = self.grid.coords(node);
            flat(0, [c[0] / 2, c[1] / 2, c[2] / 2])
        };
        for &(node, q) in charges {
            if q != 0.0 {
                start[leaf_of(node) + 1] += 1;
            }
        }
        for i in 0..leaf_count {
            start[i + 1] += start[i];
        }
        let mut fill = start.clone();
        let mut points = vec![([0.0; 3], 0.0); start[leaf_count]];
        for &(node, q) in charges {
            if q != 0.0 {
                let leaf = leaf_of(node);
                points[fill[leaf]] = (self.grid.position(node), q);
                fill[leaf] += 1;
            }
        }
        let b0 = self.blocks[0];
        for i in 0..b0 {
            for j in 0..b0 {
                for k in 0..b0 {
                    let id = flat(0, [i, j, k]);
                    let c = self.centre(0, [i, j, k]);
                    for &(r, q) in &points[start[id]..start[id + 1]] {
                        tree[0][id].add_point(q, [r[0] - c[0], r[1] - c[1], r[2] - c[2]]);
                    }
                }
            }
        }
        for level in 1..levels {
            let (lower, upper) = tree.split_at_mut(level);
            let child_level = &lower[level - 1];
            let nb = self.blocks[level];
            let nc = self.blocks[level - 1];
            for i in 0..nb {
                for j in 0..nb {
                    for k in 0..nb {
                        let parent = [i, j, k];
                        let pc = self.centre(level, parent);
                        let mut m = Moments::default();
                        for o in 0..8 {
                            let child = [2 * i + (o >> 2 & 1), 2 * j + (o >> 1 & 1), 2 * k + (o & 1)];
                            if child.iter().any(|&x| x >= nc) {
                                continue;
                            }
                            let cm = &child_level[flat(level - 1, child)];
                            let cc = self.centre(level - 1, child);
                            m.shift_in(cm, [cc[0] - pc[0], cc[1] - pc[1], cc[2] - pc[2]]);
                        }
                        upper[0][flat(level, parent)] = m;
                    }
                }
            }
        }

        let top = levels - 1;
        let nt = self.blocks[top];
        let mut roots = Vec::new();
        for i in 0..nt {
            for j in 0..nt {
                for k in 0..nt {
                    if tree[top][flat(top, [i, j, k])].occupied {
                        roots.push((top, [i, j, k]));
                    }
                }
            }
        }
        let radius: Vec<f64> = (0..levels).map(|l| self.opening * self.half_diagonal(l)).collect();
        let mut stack = Vec::with_capacity(64);
        self.positions
            .iter()
            .map(|&r| {
                let mut acc = 0.0;
                stack.clear();
                stack.extend_from_slice(&roots);
                while let Some((level, b)) = stack.pop() {
                    let id = flat(level, b);
                    let m = &tree[level][id];
                    let c = self.centre(level, b);
                    let d = [r[0] - c[0], r[1] - c[1], r[2] - c[2]];
                    let dist = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
                    if dist > radius[level] {
                        acc += m.eval(d);
                    } else if level == 0 {
                        for &(p, q) in &points[start[id]..start[id + 1]] {
                            let e = [r[0] - p[0], r[1] - p[1], r[2] - p[2]];
                            let dd = (e[0] * e[0] + e[1] * e[1] + e[2] * e[2]).sqrt();
                            if dd > 0.0 {
                                acc += q / dd;
                            }
                        }
                    } else {
                        let nc = self.blocks[level - 1];
                        for o in 0..8 {
                            let child = [2 * b[0] + (o >> 2 & 1), 2 * b[1] + (o >> 1 & 1), 2 * b[2] + (o & 1)];
                            if child.iter().all(|&x| x < nc) && tree[level - 1][flat(level - 1, child)].occupied {
                                stack.push((level - 1, child));
                            }
                        }
                    }
                }
                acc
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn direct(plan: &BoundaryPlan, grid: &Grid, charges: &[(usize, f64)]) -> Vec<f64> {
        plan.positions
            .iter()
            .map(|r| {
                charges
                    .iter()
                    .map(|&(n, q)| {
                        let p = grid.position(n);
                        q / ((r[0] - p[0]).powi(2) + (r[1] - p[1]).powi(2) + (r[2] - p[2]).powi(2)).sqrt()
                    })
                    .sum()
            })
            .collect()
    }

    fn random_charges(grid: &Grid, count: usize, pad: usize, seed: u64) -> Vec<(usize, f64)> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let n = grid.intervals;
        (0..count)
            .map(|_| {
                let c: [usize; 3] = [0, 1, 2].map(|_| rng.random_range(pad..=n - pad));
                (grid.index(c[0], c[1], c[2]), rng.random::<f64>() - 0.3)
            })
            .collect()
    }

    #[test]
    fn tree_matches_direct_sum() {
        let grid = Grid {
            spacing: 0.1,
            origin: [0.0; 3],
            intervals: 40,
        };
        let plan = BoundaryPlan::new(&grid, 4.0);
        let charges = random_charges(&grid, 600, 4, 1);
        let exact = direct(&plan, &grid, &charges);
        let tree = plan.values(&charges, BoundaryModel::Multipole);
        let scale = exact.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let worst = exact.iter().zip(&tree).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(worst < 2e-3 * scale, "{worst} vs {scale}");
    }

    #[test]
    fn single_charge_boundary_values() {
        let grid = Grid {
            spacing: 0.2,
            origin: [1.0, 2.0, 3.0],
            intervals: 16,
        };
        let plan = BoundaryPlan::new(&grid, 4.0);
        let charges = vec![(grid.index(5, 9, 7), 0.7)];
        let exact = direct(&plan, &grid, &charges);
        for model in [BoundaryModel::Monopole, BoundaryModel::Dipole, BoundaryModel::Multipole] {
            let v = plan.values(&charges, model);
            let worst = exact.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            let tol = if model == BoundaryModel::Multipole { 5e-3 } else { 1e-12 };
            let scale = exact.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            assert!(worst < tol * scale, "{model:?} {worst}");
        }
    }

    #[test]
    fn moment_shift_preserves_far_field() {
        let mut a = Moments::default();
        a.add_point(1.0, [0.1, -0.2, 0.05]);
        a.add_point(-0.4, [-0.15, 0.1, 0.2]);
        let mut b = Moments::default();
        b.shift_in(&a, [0.3, 0.1, -0.2]);
        let far = [40.0, -25.0, 31.0];
        let shifted = [far[0] + 0.3, far[1] + 0.1, far[2] - 0.2];
        let exact = 1.0 / dist(far, [0.1, -0.2, 0.05]) - 0.4 / dist(far, [-0.15, 0.1, 0.2]);
        assert!((a.eval(far) - exact).abs() < 1e-9);
        assert!((b.eval(shifted) - exact).abs() < 1e-7);
    }

    fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
        ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
    }
}
