//! Shared fixtures for the benchmarks.

use oscilab::coeff::{build_family, CoefficientField, FamilyKind, FamilySpec};
use oscilab::pde::{BoundaryData, DiskProblem, SolutionField};

pub fn laminate() -> CoefficientField {
    build_family(&FamilySpec::default_for(FamilyKind::Laminate)).expect("default laminate")
}

pub fn fourier() -> CoefficientField {
    build_family(&FamilySpec::default_for(FamilyKind::FourierGeneral)).expect("default fourier field")
}

/// Laminate solution with `g = cos 2θ` on the unit disk.
pub fn laminate_solution(epsilon: f64, h: f64) -> SolutionField {
    DiskProblem::new(&laminate(), epsilon, 1.0, h)
        .and_then(|p| p.solve(&BoundaryData::cos(2)))
        .expect("laminate solve")
}
