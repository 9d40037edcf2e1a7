//! Geometric multigrid for `−∇²v = f` on a cubic node grid with Dirichlet
//! values held in the outer shell of `v`.

/// Symmetric Gauss–Seidel smoothing, full-weighting restriction, trilinear
/// prolongation and conjugate gradients on the coarsest level.
#[derive(Debug, Clone)]
pub struct Multigrid {
    /// Interval counts from finest to coarsest.
    levels: Vec<usize>,
    spacing: f64,
    pub pre_smooth: usize,
    pub post_smooth: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct MultigridReport {
    pub cycles: usize,
    pub relative_residual: f64,
}

fn len(n: usize) -> usize {
    (n + 1).pow(3)
}

impl Multigrid {
    pub fn new(intervals: usize, spacing: f64) -> Multigrid {
        let mut levels = vec![intervals];
        let mut n = intervals;
        while n.is_multiple_of(2) && n / 2 >= 4 && n > 15 {
            n /= 2;
            levels.push(n);
        }
        Multigrid {
            levels,
            spacing,
            pre_smooth: 1,
            post_smooth: 1,
        }
    }

    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    /// ‖f − A v‖₂ over interior nodes.
    pub fn residual_norm(&self, v: &[f64], f: &[f64]) -> f64 {
        let n = self.levels[0];
        let mut r = vec![0.0; len(n)];
        residual(n, self.spacing, v, f, &mut r);
        r.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// V-cycles until the residual drops below `tolerance` relative to the
    /// residual of the starting iterate. Returns the report of the final
    /// cycle; the caller decides what counts as failure.
    pub fn solve(&self, v: &mut [f64], f: &[f64], tolerance: f64, max_cycles: usize) -> MultigridReport {
        let start = self.residual_norm(v, f);
        if start == 0.0 {
            return MultigridReport {
                cycles: 0,
                relative_residual: 0.0,
            };
        }
        let mut work: Vec<(Vec<f64>, Vec<f64>)> =
            self.levels[1..].iter().map(|&n| (vec![0.0; len(n)], vec![0.0; len(n)])).collect();
        let mut scratch: Vec<Vec<f64>> = self.levels.iter().map(|&n| vec![0.0; len(n)]).collect();
        let mut rel = 1.0;
        let mut cycles = 0;
        while cycles < max_cycles {
            self.cycle(0, v, f, &mut work, &mut scratch);
            cycles += 1;
            rel = self.residual_norm(v, f) / start;
            if rel < tolerance {
                break;
            }
        }
        MultigridReport {
            cycles,
            relative_residual: rel,
        }
    }

    /// `work[0]` holds the next coarser level, `scratch[0]` the residual of this one.
    fn cycle(&self, level: usize, v: &mut [f64], f: &[f64], work: &mut [(Vec<f64>, Vec<f64>)], scratch: &mut [Vec<f64>]) {
        let n = self.levels[level];
        let h = self.spacing * (1 << level) as f64;
        if level + 1 == self.levels.len() {
            coarse_solve(n, h, v, f);
            return;
        }
        for _ in 0..self.pre_smooth {
            smooth(n, h, v, f);
        }
        let (r, scratch_rest) = scratch.split_first_mut().expect("scratch per level");
        residual(n, h, v, f, r);
        let ((ec, fc), work_rest) = work.split_first_mut().expect("work per coarse level");
        restrict(n, r, fc);
        ec.iter_mut().for_each(|x| *x = 0.0);
        self.cycle(level + 1, ec, fc, work_rest, scratch_rest);
        prolong_add(n, ec, v);
        for _ in 0..self.post_smooth {
            smooth(n, h, v, f);
        }
    }
}

/// Neighbour offsets of the isotropic 27-point stencil grouped as faces,
/// edges and corners, with weights 14, 3 and 1 over a centre weight of 128
/// (all divided by 30h²). Its truncation error is a pure biharmonic, so the
/// lattice Green's function approaches 1/r much faster than the 7-point one.
struct Stencil {
    s1: usize,
    s2: usize,
}

impl Stencil {
    fn new(n: usize) -> Stencil {
        let s2 = n + 1;
        Stencil { s1: s2 * s2, s2 }
    }

    /// Weighted neighbour sum `14Σ_faces + 3Σ_edges + Σ_corners`.
    #[inline]
    fn neighbours(&self, v: &[f64], idx: usize) -> f64 {
        let (s1, s2) = (self.s1, self.s2);
        let faces = v[idx - 1] + v[idx + 1] + v[idx - s2] + v[idx + s2] + v[idx - s1] + v[idx + s1];
        let edges = v[idx - s1 - s2]
            + v[idx - s1 + s2]
            + v[idx + s1 - s2]
            + v[idx + s1 + s2]
            + v[idx - s1 - 1]
            + v[idx - s1 + 1]
            + v[idx + s1 - 1]
            + v[idx + s1 + 1]
            + v[idx - s2 - 1]
            + v[idx - s2 + 1]
            + v[idx + s2 - 1]
            + v[idx + s2 + 1];
        let lo = idx - s1;
        let hi = idx + s1;
        let corners = v[lo - s2 - 1] + v[lo - s2 + 1] + v[lo + s2 - 1] + v[lo + s2 + 1] + v[hi - s2 - 1] + v[hi - s2 + 1]
            + v[hi + s2 - 1]
            + v[hi + s2 + 1];
        14.0 * faces + 3.0 * edges + corners
    }
}

/// One symmetric Gauss–Seidel pass: forward then backward lexicographic.
fn smooth(n: usize, h: f64, v: &mut [f64], f: &[f64]) {
    let st = Stencil::new(n);
    let s2 = n + 1;
    let s1 = s2 * s2;
    let h2 = 30.0 * h * h;
    let update = |v: &mut [f64], idx: usize| {
        v[idx] = (st.neighbours(v, idx) + h2 * f[idx]) / 128.0;
    };
    for i in 1..n {
        for j in 1..n {
            let row = i * s1 + j * s2;
            for idx in row + 1..row + n {
                update(v, idx);
            }
        }
    }
    for i in (1..n).rev() {
        for j in (1..n).rev() {
            let row = i * s1 + j * s2;
            for idx in (row + 1..row + n).rev() {
                update(v, idx);
            }
        }
    }
}

fn apply(n: usize, h: f64, v: &[f64], out: &mut [f64]) {
    let st = Stencil::new(n);
    let s2 = n + 1;
    let s1 = s2 * s2;
    let inv = 1.0 / (30.0 * h * h);
    for i in 1..n {
        for j in 1..n {
            let row = i * s1 + j * s2;
            for idx in row + 1..row + n {
                out[idx] = (128.0 * v[idx] - st.neighbours(v, idx)) * inv;
            }
        }
    }
}

fn residual(n: usize, h: f64, v: &[f64], f: &[f64], r: &mut [f64]) {
    apply(n, h, v, r);
    let s2 = n + 1;
    let s1 = s2 * s2;
    for i in 1..n {
        for j in 1..n {
            let row = i * s1 + j * s2;
            for idx in row + 1..row + n {
                r[idx] = f[idx] - r[idx];
            }
        }
    }
}

/// Full weighting onto the grid with `n/2` intervals; boundary entries stay zero.
fn restrict(n: usize, fine: &[f64], coarse: &mut [f64]) {
    let nc = n / 2;
    let fs2 = n + 1;
    let fs1 = fs2 * fs2;
    let cs2 = nc + 1;
    let cs1 = cs2 * cs2;
    const W: [f64; 3] = [0.25, 0.5, 0.25];
    coarse.iter_mut().for_each(|x| *x = 0.0);
    for i in 1..nc {
        for j in 1..nc {
            for k in 1..nc {
                let centre = 2 * i * fs1 + 2 * j * fs2 + 2 * k;
                let mut acc = 0.0;
                for (a, wa) in W.iter().enumerate() {
                    for (b, wb) in W.iter().enumerate() {
                        let base = centre + a * fs1 + b * fs2 - fs1 - fs2;
                        acc += wa * wb * (0.25 * fine[base - 1] + 0.5 * fine[base] + 0.25 * fine[base + 1]);
                    }
                }
                coarse[i * cs1 + j * cs2 + k] = acc;
            }
        }
    }
}

/// Adds the trilinear interpolant of `coarse` to the interior of `fine`.
fn prolong_add(n: usize, coarse: &[f64], fine: &mut [f64]) {
    let nc = n / 2;
    let cs2 = nc + 1;
    let cs1 = cs2 * cs2;
    let fs2 = n + 1;
    let fs1 = fs2 * fs2;
    let taps = |i: usize| -> [(usize, f64); 2] {
        if i.is_multiple_of(2) {
            [(i / 2, 1.0), (i / 2, 0.0)]
        } else {
            [(i / 2, 0.5), (i / 2 + 1, 0.5)]
        }
    };
    for i in 1..n {
        let ti = taps(i);
        for j in 1..n {
            let tj = taps(j);
            for k in 1..n {
                let tk = taps(k);
                let mut acc = 0.0;
                for &(ci, wi) in &ti {
                    if wi == 0.0 {
                        continue;
                    }
                    for &(cj, wj) in &tj {
                        if wj == 0.0 {
                            continue;
                        }
                        let row = ci * cs1 + cj * cs2;
                        for &(ck, wk) in &tk {
                            if wk != 0.0 {
                                acc += wi * wj * wk * coarse[row + ck];
                            }
                        }
                    }
                }
                fine[i * fs1 + j * fs2 + k] += acc;
            }
        }
    }
}

/// Conjugate gradients with zero boundary; the coarsest level is small.
fn coarse_solve(n: usize, h: f64, v: &mut [f64], f: &[f64]) {
    let m = len(n);
    let mut r = vec![0.0; m];
    residual(n, h, v, f, &mut r);
    let mut p = r.clone();
    let mut ap = vec![0.0; m];
    let mut rr: f64 = r.iter().map(|x| x * x).sum();
    let start = rr.sqrt();
    if start == 0.0 {
        return;
    }
    for _ in 0..4 * m {
        apply(n, h, &p, &mut ap);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        if pap <= 0.0 {
            break;
        }
        let alpha = rr / pap;
        for idx in 0..m {
            v[idx] += alpha * p[idx];
            r[idx] -= alpha * ap[idx];
        }
        let next: f64 = r.iter().map(|x| x * x).sum();
        if next.sqrt() < 1e-14 * start {
            break;
        }
        let beta = next / rr;
        rr = next;
        for idx in 0..m {
            p[idx] = r[idx] + beta * p[idx];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hierarchy_stops_at_small_odd_or_tiny_grids() {
        assert_eq!(Multigrid::new(104, 0.1).levels, vec![104, 52, 26, 13]);
        assert_eq!(Multigrid::new(12, 0.1).levels, vec![12]);
        assert_eq!(Multigrid::new(64, 0.1).levels, vec![64, 32, 16, 8]);
    }

    #[test]
    fn reproduces_discrete_harmonic_polynomial() {
        // v = x² − y² is discretely harmonic: boundary data determine it exactly.
        let n = 32;
        let h = 0.1;
        let s = n + 1;
        let exact = |i: usize, j: usize, _k: usize| ((i * i) as f64 - (j * j) as f64) * h * h;
        let mut v = vec![0.0; len(n)];
        for i in 0..=n {
            for j in 0..=n {
                for k in 0..=n {
                    if i == 0 || j == 0 || k == 0 || i == n || j == n || k == n {
                        v[(i * s + j) * s + k] = exact(i, j, k);
                    }
                }
            }
        }
        let f = vec![0.0; len(n)];
        let mg = Multigrid::new(n, h);
        let rep = mg.solve(&mut v, &f, 1e-12, 40);
        assert!(rep.relative_residual < 1e-12, "{rep:?}");
        assert!(rep.cycles < 20, "{rep:?}");
        let mut worst: f64 = 0.0;
        for i in 0..=n {
            for j in 0..=n {
                for k in 0..=n {
                    worst = worst.max((v[(i * s + j) * s + k] - exact(i, j, k)).abs());
                }
            }
        }
        assert!(worst < 1e-10, "{worst}");
    }

    #[test]
    fn matches_discrete_operator_for_random_source() {
        use rand::{Rng, SeedableRng};
        let n = 24;
        let h = 0.2;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut exact = vec![0.0; len(n)];
        let s = n + 1;
        for i in 1..n {
            for j in 1..n {
                for k in 1..n {
                    exact[(i * s + j) * s + k] = rng.random::<f64>() - 0.5;
                }
            }
        }
        let mut f = vec![0.0; len(n)];
        apply(n, h, &exact, &mut f);
        let mut v = vec![0.0; len(n)];
        let rep = Multigrid::new(n, h).solve(&mut v, &f, 1e-13, 60);
        assert!(rep.relative_residual < 1e-13, "{rep:?}");
        let err = v.iter().zip(&exact).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-9, "{err}");
    }
}
