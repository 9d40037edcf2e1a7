//! Gap-region eigenpairs of the tight-binding Hamiltonian.

pub mod factor;
pub mod lanczos;
pub mod ordering;
pub mod scalar;

use std::sync::Arc;
use std::time::Instant;

use faer::c64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::tb::{ModelKind, SparseHamiltonian, TbParameterSet};
use factor::ShiftInvert;
use scalar::Scalar;

/// Problems at or below this dimension are diagonalized densely.
pub const DENSE_LIMIT: usize = 2000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumWindow {
    #[serde(rename = "shift_ev")]
    pub shift: f64,
    /// Requested spin-orbitals.
    pub count: usize,
    #[serde(rename = "tolerance_ev", default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_max_restarts")]
    pub max_restarts: usize,
    #[serde(default)]
    pub seed: u64,
    /// Warn when fewer than `count` states lie below this energy.
    #[serde(rename = "ceiling_ev", default, skip_serializing_if = "Option::is_none")]
    pub ceiling: Option<f64>,
    #[serde(default = "default_block")]
    pub block: usize,
}

fn default_tolerance() -> f64 {
    1e-8
}

fn default_max_restarts() -> usize {
    200
}

fn default_block() -> usize {
    8
}

impl SpectrumWindow {
    pub fn new(shift: f64, count: usize) -> Self {
        SpectrumWindow {
            shift,
            count,
            tolerance: default_tolerance(),
            max_restarts: default_max_restarts(),
            seed: 0,
            ceiling: None,
            block: default_block(),
        }
    }

    /// Shift inside the gap for the 10-orbital silicon table, or below
    /// the band bottom of the single-orbital model.
    pub fn default_for(params: &TbParameterSet, count: usize) -> Self {
        let shift = match params.kind {
            ModelKind::Sp3d5sStar(_) => 0.8,
            ModelKind::SingleS { onsite, hopping } => onsite - 4.0 * hopping.abs() - 1.0,
        };
        Self::new(shift, count)
    }

    pub fn validate(&self) -> Result<()> {
        if self.count == 0 {
            return Err(Error::Configuration("spectrum window needs at least one state".into()));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::Configuration("eigensolver tolerance must be positive".into()));
        }
        if !self.shift.is_finite() {
            return Err(Error::Configuration("eigensolver shift must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
pub enum SpinLabel {
    Up,
    Down,
    /// Spin-orbit mixes the components; amplitudes carry both.
    Mixed,
}

impl SpinLabel {
    pub fn flipped(self) -> SpinLabel {
        match self {
            SpinLabel::Up => SpinLabel::Down,
            SpinLabel::Down => SpinLabel::Up,
            SpinLabel::Mixed => SpinLabel::Mixed,
        }
    }
}

/// One-electron eigenstate. For `Up`/`Down` the amplitudes run over
/// (atom, orbital); for `Mixed` over (atom, orbital, spin) with spin fastest.
/// Spin partners share one spatial amplitude buffer.
#[derive(Debug, Clone)]
pub struct TbState {
    pub energy: f64,
    pub spin: SpinLabel,
    pub amplitudes: Arc<Vec<c64>>,
    pub residual: f64,
    pub normalized: bool,
}

impl TbState {
    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    /// Full-length amplitude vector with spin fastest.
    pub fn spinor(&self) -> Vec<c64> {
        match self.spin {
            SpinLabel::Mixed => self.amplitudes.to_vec(),
            s => {
                let zero = c64::new(0.0, 0.0);
                let slot = if s == SpinLabel::Up { 0 } else { 1 };
                self.amplitudes
                    .iter()
                    .flat_map(|&a| if slot == 0 { [a, zero] } else { [zero, a] })
                    .collect()
            }
        }
    }

    /// ⟨self|other⟩ including spin.
    pub fn overlap(&self, other: &TbState) -> c64 {
        match (self.spin, other.spin) {
            (SpinLabel::Mixed, _) | (_, SpinLabel::Mixed) => linalg::dot(&self.spinor(), &other.spinor()),
            (a, b) if a == b => linalg::dot(&self.amplitudes, &other.amplitudes),
            _ => c64::new(0.0, 0.0),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SolveStats {
    pub method: String,
    pub dimension: usize,
    pub solves: usize,
    pub restarts: usize,
    pub factor_seconds: f64,
    pub iterate_seconds: f64,
}

#[derive(Debug, Clone)]
pub struct WindowSolution {
    pub states: Vec<TbState>,
    pub warnings: Vec<String>,
    pub stats: SolveStats,
}

/// Largest-magnitude amplitude made real and positive.
fn fix_phase<T: Scalar>(v: &mut [T]) -> usize {
    let mut best = 0usize;
    let mut best_mag = -1.0;
    for (i, x) in v.iter().enumerate() {
        let m = x.abs2();
        if m > best_mag * (1.0 + 1e-9) {
            best = i;
            best_mag = m;
        }
    }
    let pivot = v[best].to_c64();
    if pivot.norm() > 0.0 {
        let phase = pivot.conj() / pivot.norm();
        for x in v.iter_mut() {
            let c = x.to_c64() * phase;
            *x = T::from_c64(c);
        }
    }
    best
}

struct Eigen<T> {
    values: Vec<f64>,
    vectors: Vec<Vec<T>>,
    residuals: Vec<f64>,
    stats: SolveStats,
}

fn dense_window<T: Scalar>(n: usize, matrix: Vec<T>, shift: f64, k: usize, apply: &dyn Fn(&[T]) -> Vec<T>) -> Eigen<T> {
    let t0 = Instant::now();
    let (vals, vecs) = T::eigh(n, &matrix);
    let mut values = Vec::new();
    let mut vectors = Vec::new();
    let mut residuals = Vec::new();
    for (i, &v) in vals.iter().enumerate() {
        if v <= shift {
            continue;
        }
        if values.len() == k {
            break;
        }
        let u = vecs[i * n..(i + 1) * n].to_vec();
        let hu = apply(&u);
        let r: Vec<T> = hu.iter().zip(&u).map(|(h, x)| *h - *x * v).collect();
        residuals.push(scalar::norm(&r));
        values.push(v);
        vectors.push(u);
    }
    Eigen {
        values,
        vectors,
        residuals,
        stats: SolveStats {
            method: "dense".into(),
            dimension: n,
            iterate_seconds: t0.elapsed().as_secs_f64(),
            ..Default::default()
        },
    }
}

fn iterative_window<T: Scalar>(
    n: usize,
    factor: ShiftInvert<T>,
    factor_seconds: f64,
    window: &SpectrumWindow,
    k: usize,
    apply: &dyn Fn(&[T]) -> Vec<T>,
) -> Result<Eigen<T>> {
    let t0 = Instant::now();
    let settings = lanczos::LanczosSettings {
        wanted: k,
        block: window.block,
        max_basis: (2 * k + 3 * window.block).max(40),
        tolerance: window.tolerance,
        max_restarts: window.max_restarts,
        seed: window.seed,
    };
    let sigma = window.shift;
    let out = lanczos::solve(
        n,
        &settings,
        |x: &mut [T], c| factor.solve(x, c),
        |theta| (theta > 0.0).then(|| sigma + 1.0 / theta),
        apply,
    )?;
    let mut idx: Vec<usize> = (0..out.values.len()).collect();
    idx.sort_by(|&a, &b| out.values[a].total_cmp(&out.values[b]));
    Ok(Eigen {
        values: idx.iter().map(|&i| out.values[i]).collect(),
        vectors: idx.iter().map(|&i| out.vectors[i].clone()).collect(),
        residuals: idx.iter().map(|&i| out.residuals[i]).collect(),
        stats: SolveStats {
            method: format!("shift-invert/{}", factor.method),
            dimension: n,
            solves: out.solves,
            restarts: out.restarts,
            factor_seconds,
            iterate_seconds: t0.elapsed().as_secs_f64(),
        },
    })
}

/// Phase-fixes and orders near-degenerate clusters by the position of
/// their dominant amplitude.
fn canonicalize<T: Scalar>(e: &mut Eigen<T>) {
    let pivots: Vec<usize> = e.vectors.iter_mut().map(|v| fix_phase(v)).collect();
    let n = e.values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| e.values[a].total_cmp(&e.values[b]));
    let mut out = Vec::with_capacity(n);
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && e.values[order[end]] - e.values[order[end - 1]] < 1e-10 {
            end += 1;
        }
        let mut cluster = order[start..end].to_vec();
        cluster.sort_by(|&a, &b| pivots[a].cmp(&pivots[b]).then(e.values[a].total_cmp(&e.values[b])));
        out.extend(cluster);
        start = end;
    }
    e.values = out.iter().map(|&i| e.values[i]).collect();
    e.vectors = out.iter().map(|&i| e.vectors[i].clone()).collect();
    e.residuals = out.iter().map(|&i| e.residuals[i]).collect();
}

fn spatial_eigen(h: &SparseHamiltonian, window: &SpectrumWindow, k: usize) -> Result<Eigen<f64>> {
    let n = h.spatial_dim();
    let apply = |x: &[f64]| {
        let mut y = vec![0.0; x.len()];
        h.apply_spatial(x, &mut y).expect("dimension checked");
        y
    };
    if n <= DENSE_LIMIT {
        return Ok(dense_window(n, h.dense_spatial(), window.shift, k, &apply));
    }
    let t0 = Instant::now();
    let order = ordering::nested_dissection(h.sites());
    let perm = ordering::expand_to_dofs(&order, h.orbitals_per_atom());
    let a = h.spatial_csc(window.shift, Some(&perm))?;
    let factor = ShiftInvert::new(a, perm)?;
    iterative_window(n, factor, t0.elapsed().as_secs_f64(), window, k, &apply)
}

fn full_eigen(h: &SparseHamiltonian, window: &SpectrumWindow, k: usize) -> Result<Eigen<c64>> {
    let n = h.dim();
    let apply = |x: &[c64]| h.apply(x).expect("dimension checked");
    if n <= DENSE_LIMIT {
        return Ok(dense_window(n, h.dense(), window.shift, k, &apply));
    }
    let t0 = Instant::now();
    let order = ordering::nested_dissection(h.sites());
    let perm = ordering::expand_to_dofs(&order, 2 * h.orbitals_per_atom());
    let a = h.full_csc(window.shift, Some(&perm))?;
    let factor = ShiftInvert::new(a, perm)?;
    iterative_window(n, factor, t0.elapsed().as_secs_f64(), window, k, &apply)
}

/// The `window.count` spin-orbitals nearest above the shift, ascending.
pub fn solve_window(h: &SparseHamiltonian, window: &SpectrumWindow) -> Result<WindowSolution> {
    window.validate()?;
    let mut warnings = Vec::new();
    let (states, stats) = if h.has_spin_orbit() {
        let mut e = full_eigen(h, window, window.count)?;
        canonicalize(&mut e);
        let states = e
            .values
            .iter()
            .zip(e.vectors)
            .zip(&e.residuals)
            .map(|((&energy, v), &residual)| TbState {
                energy,
                spin: SpinLabel::Mixed,
                amplitudes: Arc::new(v),
                residual,
                normalized: true,
            })
            .collect::<Vec<_>>();
        (states, e.stats)
    } else {
        let spatial = window.count.div_ceil(2);
        let mut e = spatial_eigen(h, window, spatial)?;
        canonicalize(&mut e);
        let mut states = Vec::with_capacity(2 * e.values.len());
        for ((&energy, v), &residual) in e.values.iter().zip(&e.vectors).zip(&e.residuals) {
            let amps = Arc::new(v.iter().map(|&x| c64::new(x, 0.0)).collect::<Vec<_>>());
            for spin in [SpinLabel::Up, SpinLabel::Down] {
                states.push(TbState {
                    energy,
                    spin,
                    amplitudes: Arc::clone(&amps),
                    residual,
                    normalized: true,
                });
            }
        }
        states.truncate(window.count);
        (states, e.stats)
    };
    if states.len() < window.count {
        let msg = format!(
            "only {} of {} requested states exist above the shift {} eV",
            states.len(),
            window.count,
            window.shift
        );
        log::warn!("{msg}");
        warnings.push(msg);
    }
    if let Some(ceiling) = window.ceiling {
        let below = states.iter().filter(|s| s.energy < ceiling).count();
        if below < window.count {
            let msg = format!("{below} of {} requested states lie below the ceiling {ceiling} eV", window.count);
            log::warn!("{msg}");
            warnings.push(msg);
        }
    }
    for s in &states {
        if s.residual > window.tolerance {
            return Err(Error::EigenNotConverged {
                iterations: stats.restarts,
                last_residual: s.residual,
                trace: vec![s.residual],
            });
        }
    }
    log::debug!(
        "window solve: {} states via {} (n={}, {} solves, factor {:.2}s, iterate {:.2}s)",
        states.len(),
        stats.method,
        stats.dimension,
        stats.solves,
        stats.factor_seconds,
        stats.iterate_seconds
    );
    Ok(WindowSolution { states, warnings, stats })
}

/// Lowest eigenvalue above the window shift of an impurity-free box.
pub fn conduction_band_edge(h_bulk: &SparseHamiltonian, window: &SpectrumWindow) -> Result<f64> {
    let mut w = window.clone();
    w.count = 1;
    let sol = solve_window(h_bulk, &w)?;
    sol.states
        .first()
        .map(|s| s.energy)
        .ok_or_else(|| Error::EigenNotConverged {
            iterations: 0,
            last_residual: f64::INFINITY,
            trace: vec![],
        })
}
