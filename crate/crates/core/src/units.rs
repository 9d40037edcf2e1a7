//! Physical constants in eV / nm units.

/// e²/(4πε₀) in eV·nm.
pub const COULOMB_EV_NM: f64 = 1.439_964_547_8;

/// ħ²/(2mₑ) in eV·nm².
pub const HBAR2_OVER_2ME_EV_NM2: f64 = 0.038_099_821;

pub const DEFAULT_LATTICE_CONSTANT_NM: f64 = 0.5431;
pub const DEFAULT_DIELECTRIC: f64 = 11.9;

/// Textbook P-in-Si ground-state depth, eV.
pub const DEFAULT_CCC_TARGET_EV: f64 = 0.0456;

pub const MEV_PER_EV: f64 = 1000.0;
