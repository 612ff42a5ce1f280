//! Fine-scale Dirichlet problems `div(A(x/ε)∇u) = 0` on disks.

mod expansion;
mod mesh;
mod solve;

pub use expansion::{
    convergence_report, convergence_row, corrector_expansion, ConvergenceRow, ConvergenceTable,
    ExpansionField,
};
pub use mesh::{DiskMesh, MeshStats, Refinement, MAX_TRIANGLES};
pub use solve::{assemble_solve, DiskProblem, SolutionField, SolveInfo};

use serde::{Deserialize, Serialize};

use crate::coeff::CoefficientField;
use crate::error::{Error, Result};
use crate::field::ClosedForm;
use crate::geom::sym;

pub const MAX_DEGREE: usize = 8;

/// Fourier boundary data `g(θ) = Σ a_ℓ cos ℓθ + b_ℓ sin ℓθ`, indexed from
/// `ℓ = 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryData {
    pub a: Vec<f64>,
    #[serde(default)]
    pub b: Vec<f64>,
}

impl BoundaryData {
    pub fn new(a: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        let g = BoundaryData { a, b };
        g.validate()?;
        Ok(g)
    }

    /// `cos ℓθ`.
    pub fn cos(l: usize) -> Self {
        let mut a = vec![0.0; l + 1];
        a[l] = 1.0;
        BoundaryData { a, b: vec![] }
    }

    /// `sin ℓθ`.
    pub fn sin(l: usize) -> Self {
        let mut b = vec![0.0; l + 1];
        b[l] = 1.0;
        BoundaryData { a: vec![], b }
    }

    pub fn validate(&self) -> Result<()> {
        if self.a.len().max(self.b.len()) > MAX_DEGREE + 1 {
            return Err(Error::InvalidParameter(format!(
                "boundary data degree exceeds {MAX_DEGREE}"
            )));
        }
        if self.a.iter().chain(&self.b).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("boundary data must be finite".into()));
        }
        let nonconstant = self.a.iter().skip(1).chain(self.b.iter().skip(1)).any(|&v| v != 0.0);
        if !nonconstant {
            return Err(Error::InvalidParameter(
                "boundary data must have a nonzero mode of degree >= 1".into(),
            ));
        }
        Ok(())
    }

    pub fn degree(&self) -> usize {
        let last = |v: &[f64]| v.iter().rposition(|&c| c != 0.0).unwrap_or(0);
        last(&self.a).max(last(&self.b))
    }

    /// Lowest degree `ℓ ≥ 1` carrying a nonzero mode.
    pub fn leading_degree(&self) -> usize {
        (1..=self.degree())
            .find(|&l| self.a.get(l).is_some_and(|&v| v != 0.0) || self.b.get(l).is_some_and(|&v| v != 0.0))
            .unwrap_or(0)
    }

    pub fn eval(&self, theta: f64) -> f64 {
        let mut s = 0.0;
        for (l, &c) in self.a.iter().enumerate() {
            s += c * (l as f64 * theta).cos();
        }
        for (l, &c) in self.b.iter().enumerate() {
            s += c * (l as f64 * theta).sin();
        }
        s
    }

    /// Crude `(min, max)` enclosure used for maximum-principle checks.
    pub fn range(&self, samples: usize) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for k in 0..samples {
            let v = self.eval(std::f64::consts::TAU * k as f64 / samples as f64);
            lo = lo.min(v);
            hi = hi.max(v);
        }
        (lo, hi)
    }
}

/// Harmonic extension of `g` into `B(0, R)`.
pub fn harmonic_reference(g: &BoundaryData, radius: f64) -> ClosedForm {
    ClosedForm::from_fourier(&g.a, &g.b, radius)
}

/// Default mesh size `min(ε/8, 1/64)`.
pub fn default_mesh_size(epsilon: f64) -> f64 {
    (epsilon / 8.0).min(1.0 / 64.0)
}

#[derive(Clone, Debug)]
pub struct EpsProblem {
    pub field: CoefficientField,
    pub epsilon: f64,
    pub radius: f64,
    pub g: BoundaryData,
    /// Mesh size; defaults to `min(ε/8, 1/64)`.
    pub h: Option<f64>,
    /// Accept a field whose homogenized matrix is not known to be normalized.
    pub allow_unnormalized: bool,
}

impl EpsProblem {
    pub fn new(field: CoefficientField, epsilon: f64, radius: f64, g: BoundaryData) -> Self {
        EpsProblem {
            field,
            epsilon,
            radius,
            g,
            h: None,
            allow_unnormalized: false,
        }
    }

    pub fn with_h(mut self, h: f64) -> Self {
        self.h = Some(h);
        self
    }

    pub fn mesh_size(&self) -> f64 {
        self.h.unwrap_or_else(|| default_mesh_size(self.epsilon))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "epsilon must lie in (0, 1], got {}",
                self.epsilon
            )));
        }
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(Error::InvalidParameter(format!("invalid radius {}", self.radius)));
        }
        self.g.validate()?;
        let h = self.mesh_size();
        let limit = default_mesh_size(self.epsilon);
        if !(h > 0.0) || h > limit * (1.0 + 1e-12) {
            return Err(Error::InvalidParameter(format!(
                "mesh rule violated: h = {h} exceeds min(eps/8, 1/64) = {limit}"
            )));
        }
        if !self.allow_unnormalized && self.field.frame().is_none() {
            let normalized_constant = self.field.is_constant()
                && (sym(&self.field.eval(crate::geom::Vec2::zeros())) - crate::geom::Mat2::identity()).norm()
                    <= 1e-12;
            if !normalized_constant {
                return Err(Error::InvalidParameter(
                    "coefficient field is not normalized; normalize it or allow unnormalized fields"
                        .into(),
                ));
            }
        }
        Ok(())
    }
}
