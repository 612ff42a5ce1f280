//! Numerical homogenization laboratory for two-dimensional periodic elliptic
//! operators `div(A(x/ε)∇u) = 0`.
//!
//! The crate is organized bottom-up:
//!
//! * [`coeff`] builds and validates periodic coefficient fields.
//! * [`cellsolve`] solves the periodic cell problem for the correctors,
//!   forms the homogenized matrix and the normalizing change of variables.
//! * [`pde`] meshes disks and solves the fine-scale Dirichlet problem.
//! * [`doubling`] measures doubling indices from circle averages.
//! * [`critical`] counts critical points through gradient winding numbers.
//! * [`harness`] runs configured experiments and writes results.

pub mod cellsolve;
pub mod coeff;
pub mod critical;
pub mod doubling;
pub mod error;
pub mod field;
pub mod geom;
pub mod harness;
pub mod io;
pub mod linalg;
pub mod pde;

pub use cellsolve::{
    homogenized_matrix, invertibility_margin, normalize, solve_cell_problem, CorrectorSolution,
    NormalizingTransform, PeriodicGrid,
};
pub use coeff::{
    build_family, check_periodicity, estimate_lipschitz, validate_ellipticity, CoefficientField,
    FamilyKind, FamilySpec, LatticeBasis,
};
pub use critical::{CriticalPoint, CriticalReport};
pub use doubling::{DoublingProfile, ReductionParams, Verdict};
pub use error::{Error, Result};
pub use field::{ClosedForm, Field};
pub use geom::{Disk, Mat2, Vec2};
pub use pde::{BoundaryData, DiskMesh, EpsProblem, SolutionField};
