//! Self-energy of the deposition kernel.

use std::f64::consts::PI;
use std::sync::OnceLock;

/// Gauss–Legendre nodes and weights on [−1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp;
        loop {
            let (mut p1, mut p2) = (1.0, 0.0);
            for j in 1..=n {
                let p3 = p2;
                p2 = p1;
                p1 = ((2 * j - 1) as f64 * z * p2 - (j - 1) as f64 * p3) / j as f64;
            }
            dp = n as f64 * (z * p1 - p2) / (z * z - 1.0);
            let step = p1 / dp;
            z -= step;
            if step.abs() < 1e-15 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

fn mapped(n: usize, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> {
    let (x, w) = gauss_legendre(n);
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    x.into_iter().zip(w).map(move |(x, w)| (mid + half * x, half * w))
}

/// `h ∫∫ 1/|r − r'|` over two copies of a uniform unit-charge cube of edge
/// `h`, a dimensionless constant (≈ 1.8823).
///
/// The pair integral reduces to `8 ∫_{[0,1]³} Π(1 − uᵢ)/|u| du`. Spherical
/// coordinates about the origin remove the singularity, and the radial
/// integral is a polynomial done in closed form.
pub fn cube_self_energy() -> f64 {
    let n = 48;
    let mut total = 0.0;
    // Sector where z is the largest coordinate and x ≥ y; six such sectors.
    for (phi, wp) in mapped(n, 0.0, PI / 4.0) {
        let theta_max = (1.0 / phi.cos()).atan();
        for (theta, wt) in mapped(n, 0.0, theta_max) {
            let (st, ct) = theta.sin_cos();
            let (a, b, c) = (st * phi.cos(), st * phi.sin(), ct);
            let s1 = a + b + c;
            let s2 = a * b + b * c + c * a;
            let s3 = a * b * c;
            let r = 1.0 / ct;
            let radial = r * r / 2.0 - s1 * r.powi(3) / 3.0 + s2 * r.powi(4) / 4.0 - s3 * r.powi(5) / 5.0;
            total += wp * wt * st * radial;
        }
    }
    8.0 * 6.0 * total
}

/// Lattice Green's function of the 27-point operator at the origin, i.e.
/// the grid potential of a unit node charge at its own node in units of
/// `k/(εh)` after multiplying by 4π.
///
/// Computed as Watson's closed-form 7-point value plus the Brillouin-zone
/// integral of the difference of the two inverse symbols, which is bounded.
pub fn lattice_origin_value() -> f64 {
    static VALUE: OnceLock<f64> = OnceLock::new();
    *VALUE.get_or_init(|| {
        let pts: Vec<(f64, f64)> = mapped(64, 0.0, PI).map(|(k, w)| (k.cos(), w)).collect();
        let mut acc = 0.0;
        for &(cx, wx) in &pts {
            for &(cy, wy) in &pts {
                for &(cz, wz) in &pts {
                    let seven = 6.0 - 2.0 * (cx + cy + cz);
                    let full = (128.0 - 28.0 * (cx + cy + cz) - 12.0 * (cx * cy + cy * cz + cx * cz) - 8.0 * cx * cy * cz) / 30.0;
                    acc += wx * wy * wz * (1.0 / full - 1.0 / seven);
                }
            }
        }
        WATSON_ORIGIN + acc / PI.powi(3)
    })
}

/// Watson's integral for the simple-cubic 7-point Laplacian at the origin.
pub const WATSON_ORIGIN: f64 = 0.252_731_009_858_663;

pub fn lattice_self_energy() -> f64 {
    4.0 * PI * lattice_origin_value()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_rule_integrates_polynomials() {
        let (x, w) = gauss_legendre(7);
        for deg in 0..14 {
            let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg)).sum();
            let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
            assert!((q - exact).abs() < 1e-13, "degree {deg}");
        }
    }

    /// Independent route: Duffy pyramids over the difference cube.
    fn duffy_cube_self_energy(n: usize) -> f64 {
        let pts: Vec<(f64, f64)> = mapped(n, 0.0, 1.0).collect();
        let mut total = 0.0;
        for &(t, wt) in &pts {
            for &(s1, w1) in &pts {
                for &(s2, w2) in &pts {
                    total += wt * w1 * w2 * (1.0 - t) * (1.0 - t * s1) * (1.0 - t * s2) * t / (1.0 + s1 * s1 + s2 * s2).sqrt();
                }
            }
        }
        24.0 * total
    }

    #[test]
    fn cube_constant_agrees_with_duffy_oracle() {
        let oracle = duffy_cube_self_energy(40);
        assert!((oracle - 1.882_312_644_389_667).abs() < 1e-12, "{oracle}");
        assert!((cube_self_energy() - oracle).abs() < 1e-12, "{}", cube_self_energy());
    }

    #[test]
    fn lattice_constant_value() {
        assert!((lattice_self_energy() - 3.842_163_234_5).abs() < 1e-8, "{}", lattice_self_energy());
    }
}
