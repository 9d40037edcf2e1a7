//! Fixtures shared by the benchmarks in benches/.

use tbhf_core::lattice::{DeviceGeometry, ImpuritySite, SitePosition};
use tbhf_core::tb::{SurfaceTreatment, TbParameterSet};
use tbhf_core::{FieldOptions, ScfProblem, SpectrumWindow};

pub fn full_model() -> TbParameterSet {
    TbParameterSet::silicon().with_surface(SurfaceTreatment::DanglingBondShift { shift_ev: 20.0 })
}

pub fn single_s() -> TbParameterSet {
    TbParameterSet::single_s(5.0, -1.0)
}

/// One donor at the box centre.
pub fn donor_box(cells: usize, ccc: f64) -> DeviceGeometry {
    let mut g = DeviceGeometry::with_cells(cells);
    g.impurities = vec![ImpuritySite::new(SitePosition::fractional(0.0, 0.0, 0.0), ccc)];
    g
}

pub fn reduced_problem(cells: usize, count: usize) -> ScfProblem {
    ScfProblem::new(
        &donor_box(cells, -1.0),
        &single_s(),
        &SpectrumWindow::new(-0.5, count),
        &FieldOptions::default(),
    )
    .expect("reduced problem")
}
