//! Two-centre Slater–Koster blocks for the 10-orbital basis.
//!
//! Orbital order: s, px, py, pz, dxy, dyz, dzx, dx²−y², d3z²−r², s*.
//! `block(p, c)[α][β]` couples orbital α on the atom at the origin to
//! orbital β on the atom along the unit vector `c`.

use super::params::SkParameters;

pub const NORB: usize = 10;
pub const S: usize = 0;
pub const PX: usize = 1;
pub const DXY: usize = 4;
pub const DX2Y2: usize = 7;
pub const DZ2: usize = 8;
pub const SSTAR: usize = 9;

pub const ORBITAL_NAMES: [&str; NORB] = ["s", "px", "py", "pz", "dxy", "dyz", "dzx", "dx2-y2", "d3z2-r2", "s*"];

const SQRT3: f64 = 1.732_050_807_568_877_2;

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Shell {
    S,
    SStar,
    P(usize),
    /// t2g orbital indexed by its pair of axes.
    T2g(usize, usize),
    Eg(usize),
}

fn shell(orb: usize) -> Shell {
    match orb {
        0 => Shell::S,
        1..=3 => Shell::P(orb - 1),
        4 => Shell::T2g(0, 1),
        5 => Shell::T2g(1, 2),
        6 => Shell::T2g(2, 0),
        7 | 8 => Shell::Eg(orb - 7),
        9 => Shell::SStar,
        _ => unreachable!("orbital index {orb}"),
    }
}

fn angular(orb: usize) -> u32 {
    match shell(orb) {
        Shell::S | Shell::SStar => 0,
        Shell::P(_) => 1,
        Shell::T2g(..) | Shell::Eg(_) => 2,
    }
}

fn rank(orb: usize) -> u32 {
    angular(orb)
}

/// Angular factor of ⟨s|d⟩ coupling.
fn s_d_shape(orb: usize, c: [f64; 3]) -> f64 {
    let [l, m, n] = c;
    match shell(orb) {
        Shell::T2g(a, b) => SQRT3 * c[a] * c[b],
        Shell::Eg(0) => 0.5 * SQRT3 * (l * l - m * m),
        Shell::Eg(_) => n * n - 0.5 * (l * l + m * m),
        _ => unreachable!(),
    }
}

fn p_d(p: &SkParameters, axis: usize, d: usize, c: [f64; 3]) -> f64 {
    let [l, m, n] = c;
    let (vs, vp) = (p.p_d_sigma, p.p_d_pi);
    match shell(d) {
        Shell::T2g(a, b) => {
            if axis == a || axis == b {
                let other = if axis == a { b } else { a };
                let la = c[axis];
                SQRT3 * la * la * c[other] * vs + c[other] * (1.0 - 2.0 * la * la) * vp
            } else {
                let lmn = l * m * n;
                SQRT3 * lmn * vs - 2.0 * lmn * vp
            }
        }
        Shell::Eg(0) => {
            let q = l * l - m * m;
            match axis {
                0 => 0.5 * SQRT3 * l * q * vs + l * (1.0 - q) * vp,
                1 => 0.5 * SQRT3 * m * q * vs - m * (1.0 + q) * vp,
                _ => 0.5 * SQRT3 * n * q * vs - n * q * vp,
            }
        }
        Shell::Eg(_) => {
            let w = n * n - 0.5 * (l * l + m * m);
            match axis {
                0 => l * w * vs - SQRT3 * l * n * n * vp,
                1 => m * w * vs - SQRT3 * m * n * n * vp,
                _ => n * w * vs + SQRT3 * n * (l * l + m * m) * vp,
            }
        }
        _ => unreachable!(),
    }
}

fn d_d(p: &SkParameters, x: usize, y: usize, c: [f64; 3]) -> f64 {
    let [l, m, n] = c;
    let (vs, vp, vd) = (p.dd_sigma, p.dd_pi, p.dd_delta);
    match (shell(x), shell(y)) {
        (Shell::T2g(a, b), Shell::T2g(e, f)) => {
            if (a, b) == (e, f) {
                let g = 3 - a - b;
                let (la2, lb2) = (c[a] * c[a], c[b] * c[b]);
                3.0 * la2 * lb2 * vs + (la2 + lb2 - 4.0 * la2 * lb2) * vp + (c[g] * c[g] + la2 * lb2) * vd
            } else {
                // Shared axis β, the remaining two are α and γ.
                let shared = if a == e || a == f { a } else { b };
                let alpha = if a == shared { b } else { a };
                let gamma = if e == shared { f } else { e };
                let (la, lb, lg) = (c[alpha], c[shared], c[gamma]);
                3.0 * la * lb * lb * lg * vs
                    + la * lg * (1.0 - 4.0 * lb * lb) * vp
                    + la * lg * (lb * lb - 1.0) * vd
            }
        }
        (Shell::T2g(a, b), Shell::Eg(k)) => {
            let q = l * l - m * m;
            let r = l * l + m * m;
            match (a, b, k) {
                (0, 1, 0) => 1.5 * l * m * q * vs + 2.0 * l * m * (-q) * vp + 0.5 * l * m * q * vd,
                (1, 2, 0) => 1.5 * m * n * q * vs - m * n * (1.0 + 2.0 * q) * vp + m * n * (1.0 + 0.5 * q) * vd,
                (2, 0, 0) => 1.5 * n * l * q * vs + n * l * (1.0 - 2.0 * q) * vp - n * l * (1.0 - 0.5 * q) * vd,
                (0, 1, _) => {
                    SQRT3 * l * m * (n * n - 0.5 * r) * vs - 2.0 * SQRT3 * l * m * n * n * vp
                        + 0.5 * SQRT3 * l * m * (1.0 + n * n) * vd
                }
                (1, 2, _) => {
                    SQRT3 * m * n * (n * n - 0.5 * r) * vs + SQRT3 * m * n * (r - n * n) * vp
                        - 0.5 * SQRT3 * m * n * r * vd
                }
                (2, 0, _) => {
                    SQRT3 * l * n * (n * n - 0.5 * r) * vs + SQRT3 * l * n * (r - n * n) * vp
                        - 0.5 * SQRT3 * l * n * r * vd
                }
                _ => unreachable!(),
            }
        }
        (Shell::Eg(_), Shell::T2g(..)) => d_d(p, y, x, c),
        (Shell::Eg(i), Shell::Eg(j)) => {
            let q = l * l - m * m;
            let r = l * l + m * m;
            let w = n * n - 0.5 * r;
            match (i, j) {
                (0, 0) => 0.75 * q * q * vs + (r - q * q) * vp + (n * n + 0.25 * q * q) * vd,
                (1, 1) => w * w * vs + 3.0 * n * n * r * vp + 0.75 * r * r * vd,
                _ => 0.5 * SQRT3 * q * w * vs + SQRT3 * n * n * (-q) * vp + 0.25 * SQRT3 * (1.0 + n * n) * q * vd,
            }
        }
        _ => unreachable!(),
    }
}

/// Element with the lower-rank orbital on the left.
fn ordered(p: &SkParameters, x: usize, y: usize, c: [f64; 3]) -> f64 {
    match (shell(x), shell(y)) {
        (Shell::S, Shell::S) => p.ss_sigma,
        (Shell::SStar, Shell::SStar) => p.sstar_sstar_sigma,
        (Shell::S, Shell::SStar) | (Shell::SStar, Shell::S) => p.s_sstar_sigma,
        (Shell::S, Shell::P(k)) => c[k] * p.s_p_sigma,
        (Shell::SStar, Shell::P(k)) => c[k] * p.sstar_p_sigma,
        (Shell::S, _) => s_d_shape(y, c) * p.s_d_sigma,
        (Shell::SStar, _) => s_d_shape(y, c) * p.sstar_d_sigma,
        (Shell::P(i), Shell::P(j)) => {
            if i == j {
                c[i] * c[i] * p.pp_sigma + (1.0 - c[i] * c[i]) * p.pp_pi
            } else {
                c[i] * c[j] * (p.pp_sigma - p.pp_pi)
            }
        }
        (Shell::P(i), _) => p_d(p, i, y, c),
        _ => d_d(p, x, y, c),
    }
}

/// Hopping element ⟨x, origin|H|y, origin + d⟩ for unit bond vector `c`.
pub fn element(p: &SkParameters, x: usize, y: usize, c: [f64; 3]) -> f64 {
    if rank(x) <= rank(y) {
        ordered(p, x, y, c)
    } else {
        // Swapping the two ends is the same as reversing the bond.
        let sign = if (angular(x) + angular(y)).is_multiple_of(2) { 1.0 } else { -1.0 };
        sign * ordered(p, y, x, c)
    }
}

/// Row-major `NORB × NORB` hopping block for unit bond vector `c`.
pub fn block(p: &SkParameters, c: [f64; 3]) -> [[f64; NORB]; NORB] {
    let mut out = [[0.0; NORB]; NORB];
    for (x, row) in out.iter_mut().enumerate() {
        for (y, v) in row.iter_mut().enumerate() {
            *v = element(p, x, y, c);
        }
    }
    out
}

pub fn onsite_energies(p: &SkParameters) -> [f64; NORB] {
    let mut e = [0.0; NORB];
    e[S] = p.onsite_s;
    for k in 0..3 {
        e[PX + k] = p.onsite_p;
    }
    for k in DXY..=DZ2 {
        e[k] = p.onsite_d;
    }
    e[SSTAR] = p.onsite_sstar;
    e
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tb::params::{ModelKind, ParameterFile};

    fn si() -> SkParameters {
        match ParameterFile::silicon().kind {
            ModelKind::Sp3d5sStar(p) => p,
            _ => unreachable!(),
        }
    }

    fn unit(v: [f64; 3]) -> [f64; 3] {
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        v.map(|x| x / n)
    }

    #[test]
    fn reversed_bond_gives_transpose() {
        let p = si();
        for c in [[1.0, 1.0, 1.0], [0.3, -0.5, 0.8], [1.0, -1.0, -1.0]].map(unit) {
            let fwd = block(&p, c);
            let back = block(&p, c.map(|x| -x));
            for i in 0..NORB {
                for j in 0..NORB {
                    assert!((fwd[i][j] - back[j][i]).abs() < 1e-14, "{i} {j}");
                }
            }
        }
    }

    #[test]
    fn axial_bond_couples_only_matching_symmetry() {
        // Along z: σ couples s, pz, d3z²−r²; π couples px–px and dzx–px.
        let p = si();
        let b = block(&p, [0.0, 0.0, 1.0]);
        assert!((b[S][PX + 2] - p.s_p_sigma).abs() < 1e-14);
        assert!((b[PX + 2][PX + 2] - p.pp_sigma).abs() < 1e-14);
        assert!((b[PX][PX] - p.pp_pi).abs() < 1e-14);
        assert!((b[S][DZ2] - p.s_d_sigma).abs() < 1e-14);
        assert!((b[PX + 2][DZ2] - p.p_d_sigma).abs() < 1e-14);
        assert!((b[PX][DXY + 2] - p.p_d_pi).abs() < 1e-14);
        assert!((b[DZ2][DZ2] - p.dd_sigma).abs() < 1e-14);
        assert!((b[DXY + 1][DXY + 1] - p.dd_pi).abs() < 1e-14);
        assert!((b[DXY][DXY] - p.dd_delta).abs() < 1e-14);
        assert!((b[DX2Y2][DX2Y2] - p.dd_delta).abs() < 1e-14);
        assert!(b[S][PX].abs() < 1e-14 && b[PX][DXY].abs() < 1e-14 && b[DXY][DZ2].abs() < 1e-14);
    }

    #[test]
    fn rotation_invariant_traces() {
        // Σ_m |E(l,m)|² within one shell pair is rotation invariant.
        let p = si();
        let shells: [&[usize]; 4] = [&[S], &[1, 2, 3], &[4, 5, 6, 7, 8], &[SSTAR]];
        let b1 = block(&p, unit([1.0, 1.0, 1.0]));
        let b2 = block(&p, unit([0.2, -0.7, 0.4]));
        for x in shells {
            for y in shells {
                let f = |b: &[[f64; NORB]; NORB]| {
                    x.iter().flat_map(|&i| y.iter().map(move |&j| b[i][j] * b[i][j])).sum::<f64>()
                };
                assert!((f(&b1) - f(&b2)).abs() < 1e-12, "{x:?} {y:?}");
            }
        }
    }
}
