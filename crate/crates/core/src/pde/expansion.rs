use serde::{Deserialize, Serialize};

use super::{harmonic_reference, EpsProblem, SolutionField};
use crate::cellsolve::CorrectorSolution;
use crate::error::{Error, Result};
use crate::field::{ClosedForm, Field};
use crate::geom::{Disk, Mat2, Vec2};

/// Two-scale approximation `u₀ + ε χ(x/ε)·∇u₀` with gradient
/// `(I + ∇χ(x/ε)) ∇u₀`.
pub struct ExpansionField<'a> {
    pub u0: &'a ClosedForm,
    pub corrector: Option<&'a CorrectorSolution>,
    pub epsilon: f64,
}

impl ExpansionField<'_> {
    fn grad_chi(&self, p: Vec2) -> Mat2 {
        match self.corrector {
            Some(c) => c.grad_at(p / self.epsilon),
            None => Mat2::zeros(),
        }
    }
}

impl Field for ExpansionField<'_> {
    fn value(&self, p: Vec2) -> Option<f64> {
        let base = self.u0.eval(p);
        Some(match self.corrector {
            Some(c) => base + self.epsilon * c.chi_at(p / self.epsilon).dot(&self.u0.grad(p)),
            None => base,
        })
    }

    fn gradient(&self, p: Vec2) -> Option<Vec2> {
        let g = self.u0.grad(p);
        match self.corrector {
            Some(_) => Some(g + self.grad_chi(p) * g),
            None => Some(g),
        }
    }

    fn domain(&self) -> Disk {
        Disk::centered(self.u0.radius())
    }

    fn oscillation_scale(&self) -> f64 {
        self.epsilon
    }
}

/// `G(x) = (I + ∇χ(x/ε)) ∇u₀(x)` at each point; `None` for points outside
/// the disk of `u₀`.
pub fn corrector_expansion(
    u0: &ClosedForm,
    corrector: Option<&CorrectorSolution>,
    epsilon: f64,
    points: &[Vec2],
) -> Vec<Option<Vec2>> {
    let field = ExpansionField {
        u0,
        corrector,
        epsilon,
    };
    points
        .iter()
        .map(|&p| {
            if p.norm() <= u0.radius() {
                field.gradient(p)
            } else {
                None
            }
        })
        .collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub epsilon: f64,
    pub h: f64,
    /// `sup |u_ε − u₀|` over nodes in `B(0, 3R/4)`.
    pub sup_u_error: f64,
    /// `sup |∇u_ε − G|` over elements in `B(0, 3R/4)`, element gradients
    /// against `G` at barycenters.
    pub sup_grad_error: f64,
    /// Same with recovered nodal gradients against `G` at nodes.
    pub sup_grad_error_recovered: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
    /// Indices `k` where row `k + 1` is worse than row `k` by more than 10%.
    pub degradations: Vec<usize>,
}

impl ConvergenceTable {
    pub fn strictly_decreasing(&self) -> bool {
        self.rows.windows(2).all(|w| {
            w[1].sup_u_error < w[0].sup_u_error && w[1].sup_grad_error < w[0].sup_grad_error
        })
    }
}

fn same_configuration(a: &EpsProblem, b: &EpsProblem) -> bool {
    let probes = [Vec2::new(0.1, 0.2), Vec2::new(0.37, 0.61), Vec2::new(0.83, 0.05)];
    a.g == b.g
        && a.radius == b.radius
        && a.field.family() == b.field.family()
        && probes.iter().all(|&y| a.field.eval(y) == b.field.eval(y))
}

/// Sup-norm errors of fine solutions along an ε ladder against the
/// homogenized solution and the corrector expansion.
pub fn convergence_report(
    ladder: &[(&EpsProblem, &SolutionField)],
    corrector: Option<&CorrectorSolution>,
) -> Result<ConvergenceTable> {
    if ladder.len() < 2 {
        return Err(Error::InvalidParameter(
            "convergence report needs at least two ladder entries".into(),
        ));
    }
    if ladder.iter().any(|(p, _)| !same_configuration(p, ladder[0].0)) {
        return Err(Error::InvalidParameter(
            "ladder entries differ in field, radius or boundary data".into(),
        ));
    }
    let entries: Vec<_> = ladder.to_vec();
    let rows = entries
        .iter()
        .map(|(p, sol)| convergence_row(p, sol, corrector))
        .collect();
    Ok(ConvergenceTable::new(rows))
}

/// Sup-norm errors of one fine solution on `B(0, 3R/4)`.
pub fn convergence_row(problem: &EpsProblem, sol: &SolutionField, corrector: Option<&CorrectorSolution>) -> ConvergenceRow {
    let radius = problem.radius;
    let u0 = harmonic_reference(&problem.g, radius);
    let inner = 0.75 * radius;
    let field = ExpansionField {
        u0: &u0,
        corrector,
        epsilon: problem.epsilon,
    };
    let mesh = &sol.mesh;
    let (mut eu, mut eg) = (0.0f64, 0.0f64);
    for (v, &x) in mesh.nodes.iter().enumerate() {
        if x.norm() <= inner {
            eu = eu.max((sol.u[v] - u0.eval(x)).abs());
            eg = eg.max((sol.nodal_grad[v] - field.gradient(x).unwrap()).norm());
        }
    }
    let mut ee = 0.0f64;
    for t in 0..mesh.num_triangles() {
        let c = mesh.barycenter(t);
        if c.norm() <= inner {
            ee = ee.max((sol.element_grad[t] - field.gradient(c).unwrap()).norm());
        }
    }
    ConvergenceRow {
        epsilon: problem.epsilon,
        h: mesh.h_target,
        sup_u_error: eu,
        sup_grad_error: ee,
        sup_grad_error_recovered: eg,
    }
}

impl ConvergenceTable {
    /// Rows ordered by decreasing `ε`, with >10% degradations flagged.
    pub fn new(mut rows: Vec<ConvergenceRow>) -> Self {
        rows.sort_by(|a, b| b.epsilon.total_cmp(&a.epsilon));
        let degradations = rows
            .windows(2)
            .enumerate()
            .filter(|(_, w)| {
                w[1].sup_u_error > 1.1 * w[0].sup_u_error || w[1].sup_grad_error > 1.1 * w[0].sup_grad_error
            })
            .map(|(k, _)| k)
            .collect();
        ConvergenceTable { rows, degradations }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_corrector_returns_exact_gradient() {
        let u0 = ClosedForm::from_fourier(&[0.0, 0.0, 1.0], &[0.0, 0.0, 0.0, 0.4], 1.0);
        let pts = [Vec2::new(0.3, -0.2), Vec2::new(0.0, 0.9), Vec2::new(1.5, 0.0)];
        let g = corrector_expansion(&u0, None, 0.1, &pts);
        assert_eq!(g[0], Some(u0.grad(pts[0])));
        assert_eq!(g[1], Some(u0.grad(pts[1])));
        assert_eq!(g[2], None);
    }
}
