//! Tight-binding Hartree-Fock for donor electrons in silicon boxes.

// Index loops mirror the matrix notation; `!(x > 0.0)` style checks also reject NaN.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod ci;
pub mod driver;
pub mod eigensolver;
pub mod error;
pub mod fields;
pub mod hartree_fock;
pub mod lattice;
pub mod linalg;
pub mod observables;
pub mod tb;
pub mod units;

pub use faer::c64;
pub use ci::{BasisKind, CiOptions, CiResult};
pub use driver::{RunConfig, RunOptions, RunRecord};
pub use eigensolver::{SpectrumWindow, SpinLabel, TbState};
pub use error::{Error, Result};
pub use fields::{FieldEngine, FieldOptions, ScalarField};
pub use hartree_fock::{ScfControls, ScfProblem, SpinConfiguration};
pub use lattice::{build_lattice, cluster_catalog, AtomSet, DeviceGeometry, ImpuritySite, SitePosition};
pub use observables::{BandEdge, DispersionReport, EnergyReport};
pub use tb::{assemble, OnsitePotential, ParameterFile, SparseHamiltonian, SurfaceTreatment, TbParameterSet};
