use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::mesh::{DiskMesh, MeshStats};
use super::{BoundaryData, EpsProblem};
use crate::coeff::CoefficientField;
use crate::error::{Error, Result};
use crate::field::Field;
use crate::geom::{Disk, Mat2, Vec2};
use crate::linalg::{pcg, CgOptions, CsrMatrix, Multigrid};

const MAX_PRINCIPLE_SLACK: f64 = 1e-8;

/// Stiffness system of one `(field, ε, R, h)` combination, reusable for
/// several boundary data.
pub struct DiskProblem {
    pub mesh: Arc<DiskMesh>,
    pub epsilon: f64,
    /// Interior rows, all columns.
    coupling: CsrMatrix,
    interior: Vec<Option<usize>>,
    interior_nodes: Vec<usize>,
    a_ii: CsrMatrix,
    mg: Multigrid,
    coeffs: Vec<Mat2>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolveInfo {
    pub epsilon: f64,
    pub residual: f64,
    pub iterations: usize,
    /// Largest excursion of nodal values outside `[min g, max g]`.
    pub max_principle_excess: f64,
    pub mesh: MeshStats,
}

/// P1 solution on a disk mesh with element and recovered nodal gradients.
#[derive(Clone, Debug)]
pub struct SolutionField {
    pub mesh: Arc<DiskMesh>,
    pub u: Vec<f64>,
    pub element_grad: Vec<Vec2>,
    pub nodal_grad: Vec<Vec2>,
    pub info: SolveInfo,
}

fn element_stiffness(mesh: &DiskMesh, t: usize, a: &Mat2) -> [[f64; 3]; 3] {
    let g = mesh.shape_gradients(t);
    let area = mesh.area(t);
    let mut k = [[0.0; 3]; 3];
    for p in 0..3 {
        for q in 0..3 {
            k[p][q] = area * g[p].dot(&(a * g[q]));
        }
    }
    k
}

impl DiskProblem {
    pub fn new(field: &CoefficientField, epsilon: f64, radius: f64, h: f64) -> Result<Self> {
        let mesh = Arc::new(DiskMesh::new(radius, h)?);
        Self::on_mesh(mesh, field, epsilon)
    }

    pub fn on_mesh(mesh: Arc<DiskMesh>, field: &CoefficientField, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0) {
            return Err(Error::InvalidParameter(format!("epsilon must be positive, got {epsilon}")));
        }
        if !field.is_symmetric() {
            return Err(Error::InvalidParameter(
                "disk solver requires a symmetric coefficient field".into(),
            ));
        }
        let n = mesh.num_nodes();
        let mut interior = vec![None; n];
        let mut interior_nodes = Vec::new();
        for v in 0..n {
            if !mesh.is_boundary[v] {
                interior[v] = Some(interior_nodes.len());
                interior_nodes.push(v);
            }
        }
        let coeffs: Vec<Mat2> = (0..mesh.num_triangles())
            .into_par_iter()
            .map(|t| field.eval(mesh.barycenter(t) / epsilon))
            .collect();
        let locals: Vec<[[f64; 3]; 3]> = (0..mesh.num_triangles())
            .into_par_iter()
            .map(|t| element_stiffness(&mesh, t, &coeffs[t]))
            .collect();

        let mut rows: Vec<Vec<usize>> = vec![Vec::new(); interior_nodes.len()];
        for tri in &mesh.triangles {
            for &a in tri {
                if let Some(ra) = interior[a] {
                    rows[ra].extend_from_slice(tri);
                }
            }
        }
        let mut coupling = CsrMatrix::from_row_patterns(n, rows);
        for (tri, k) in mesh.triangles.iter().zip(&locals) {
            for p in 0..3 {
                let Some(rp) = interior[tri[p]] else { continue };
                for q in 0..3 {
                    coupling.add(rp, tri[q], k[p][q]);
                }
            }
        }
        drop(locals);

        let a_ii = restrict_columns(&coupling, &interior, interior_nodes.len());
        let prolongations = interior_prolongations(&mesh);
        let mg = Multigrid::new(a_ii.clone(), prolongations, false);
        Ok(DiskProblem {
            mesh,
            epsilon,
            coupling,
            interior,
            interior_nodes,
            a_ii,
            mg,
            coeffs,
        })
    }

    pub fn num_unknowns(&self) -> usize {
        self.interior_nodes.len()
    }

    /// Element coefficients `A(x_T/ε)` at barycenters.
    pub fn coefficients(&self) -> &[Mat2] {
        &self.coeffs
    }

    pub fn solve(&self, g: &BoundaryData) -> Result<SolutionField> {
        g.validate()?;
        let mesh = &self.mesh;
        let mut u = vec![0.0; mesh.num_nodes()];
        for &v in &mesh.boundary {
            let p = mesh.nodes[v];
            u[v] = g.eval(p.y.atan2(p.x));
        }
        let mut rhs = vec![0.0; self.num_unknowns()];
        for (i, r) in rhs.iter_mut().enumerate() {
            let (cols, vals) = self.coupling.row(i);
            *r = -cols
                .iter()
                .zip(vals)
                .filter(|(c, _)| self.interior[**c].is_none())
                .map(|(c, v)| v * u[*c])
                .sum::<f64>();
        }
        let mut x = vec![0.0; self.num_unknowns()];
        let opts = CgOptions {
            tolerance: 1e-10,
            max_iterations: 10_000,
            project_mean: false,
            zero_rhs: 0.0,
        };
        let out = pcg(&self.a_ii, &rhs, &mut x, &self.mg, &opts)?;
        for (k, &v) in self.interior_nodes.iter().enumerate() {
            u[v] = x[k];
        }

        let (element_grad, nodal_grad) = recover_gradients(mesh, &u);
        let (lo, hi) = g.range(4096);
        let excess = u
            .iter()
            .map(|&v| (lo - v).max(v - hi).max(0.0))
            .fold(0.0, f64::max);
        Ok(SolutionField {
            mesh: self.mesh.clone(),
            u,
            element_grad,
            nodal_grad,
            info: SolveInfo {
                epsilon: self.epsilon,
                residual: out.relative_residual,
                iterations: out.iterations,
                max_principle_excess: excess,
                mesh: mesh.stats(),
            },
        })
    }

    /// Dirichlet energy `∫ ⟨A∇u, ∇u⟩` of a nodal vector.
    pub fn energy(&self, u: &[f64]) -> f64 {
        let mesh = &self.mesh;
        (0..mesh.num_triangles())
            .map(|t| {
                let gr = mesh.shape_gradients(t);
                let tri = mesh.triangles[t];
                let grad = gr[0] * u[tri[0]] + gr[1] * u[tri[1]] + gr[2] * u[tri[2]];
                mesh.area(t) * grad.dot(&(self.coeffs[t] * grad))
            })
            .sum()
    }
}

/// Element gradients and their area-weighted averages at nodes.
fn recover_gradients(mesh: &DiskMesh, u: &[f64]) -> (Vec<Vec2>, Vec<Vec2>) {
    let element_grad: Vec<Vec2> = (0..mesh.num_triangles())
        .into_par_iter()
        .map(|t| {
            let gr = mesh.shape_gradients(t);
            let tri = mesh.triangles[t];
            gr[0] * u[tri[0]] + gr[1] * u[tri[1]] + gr[2] * u[tri[2]]
        })
        .collect();
    let mut acc = vec![Vec2::zeros(); mesh.num_nodes()];
    let mut weight = vec![0.0; mesh.num_nodes()];
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let area = mesh.area(t);
        for &v in tri {
            acc[v] += element_grad[t] * area;
            weight[v] += area;
        }
    }
    let nodal_grad = acc.iter().zip(&weight).map(|(a, w)| a / *w).collect();
    (element_grad, nodal_grad)
}

fn restrict_columns(m: &CsrMatrix, map: &[Option<usize>], n: usize) -> CsrMatrix {
    let mut rows = Vec::with_capacity(n);
    let mut vals = Vec::with_capacity(m.nnz());
    for i in 0..m.nrows() {
        let (cols, v) = m.row(i);
        let mut r = Vec::with_capacity(cols.len());
        for (c, x) in cols.iter().zip(v) {
            if let Some(k) = map[*c] {
                r.push(k);
                vals.push((i, k, *x));
            }
        }
        rows.push(r);
    }
    let mut out = CsrMatrix::from_row_patterns(n, rows);
    for (i, k, x) in vals {
        out.add(i, k, x);
    }
    out
}

/// Interior-node prolongations of the refinement hierarchy, finest first.
fn interior_prolongations(mesh: &DiskMesh) -> Vec<CsrMatrix> {
    let sizes = mesh.level_sizes();
    // Interior numbering per level: nodes are nested prefixes.
    let numbering = |count: usize| {
        let mut map = vec![None; count];
        let mut k = 0;
        for (v, slot) in map.iter_mut().enumerate() {
            if !mesh.is_boundary[v] {
                *slot = Some(k);
                k += 1;
            }
        }
        (map, k)
    };
    let mut out = Vec::with_capacity(mesh.refinements.len());
    for (level, refinement) in mesh.refinements.iter().enumerate().rev() {
        let (fine_map, fine_n) = numbering(sizes[level + 1]);
        let (coarse_map, coarse_n) = numbering(sizes[level]);
        let mut triplets = Vec::with_capacity(fine_n * 2);
        for v in 0..sizes[level + 1] {
            let Some(fi) = fine_map[v] else { continue };
            if v < refinement.coarse_nodes {
                triplets.push((fi, coarse_map[v].expect("interior stays interior"), 1.0));
            } else {
                for &p in &refinement.parents[v - refinement.coarse_nodes] {
                    if let Some(ci) = coarse_map[p] {
                        triplets.push((fi, ci, 0.5));
                    }
                }
            }
        }
        out.push(CsrMatrix::from_triplets(fine_n, coarse_n, &triplets));
    }
    out
}

/// Meshes, assembles and solves one problem.
pub fn assemble_solve(problem: &EpsProblem) -> Result<SolutionField> {
    problem.validate()?;
    let dp = DiskProblem::new(&problem.field, problem.epsilon, problem.radius, problem.mesh_size())?;
    dp.solve(&problem.g)
}

impl SolutionField {
    /// Rebuilds gradients from stored nodal values.
    pub fn from_nodal(mesh: Arc<DiskMesh>, u: Vec<f64>, info: SolveInfo) -> Result<Self> {
        if u.len() != mesh.num_nodes() {
            return Err(Error::InvalidParameter(format!(
                "{} nodal values for a mesh with {} nodes",
                u.len(),
                mesh.num_nodes()
            )));
        }
        let (element_grad, nodal_grad) = recover_gradients(&mesh, &u);
        Ok(SolutionField {
            mesh,
            u,
            element_grad,
            nodal_grad,
            info,
        })
    }

    pub fn residual(&self) -> f64 {
        self.info.residual
    }

    pub fn satisfies_max_principle(&self) -> bool {
        self.info.max_principle_excess <= MAX_PRINCIPLE_SLACK
    }

    /// Gradient of the P1 interpolant (piecewise constant) at `p`.
    pub fn element_gradient_at(&self, p: Vec2) -> Option<Vec2> {
        self.mesh.locate(p).map(|(t, _)| self.element_grad[t])
    }

    /// Nodal values of a closed-form field on this mesh.
    pub fn sample<F: Field>(&self, f: &F) -> Vec<f64> {
        self.mesh.nodes.iter().map(|&p| f.value(p).unwrap_or(f64::NAN)).collect()
    }
}

impl Field for SolutionField {
    fn value(&self, p: Vec2) -> Option<f64> {
        let (t, lam) = self.mesh.locate(p)?;
        let tri = self.mesh.triangles[t];
        Some(lam[0] * self.u[tri[0]] + lam[1] * self.u[tri[1]] + lam[2] * self.u[tri[2]])
    }

    fn gradient(&self, p: Vec2) -> Option<Vec2> {
        let (t, lam) = self.mesh.locate(p)?;
        let tri = self.mesh.triangles[t];
        Some(
            self.nodal_grad[tri[0]] * lam[0]
                + self.nodal_grad[tri[1]] * lam[1]
                + self.nodal_grad[tri[2]] * lam[2],
        )
    }

    fn domain(&self) -> Disk {
        Disk::centered(self.mesh.radius)
    }

    fn resolution(&self) -> f64 {
        self.mesh.h_target
    }

    fn oscillation_scale(&self) -> f64 {
        self.info.epsilon
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeff::{build_family, FamilyKind, FamilySpec};
    use crate::pde::harmonic_reference;

    fn identity() -> CoefficientField {
        build_family(&FamilySpec::new(FamilyKind::Constant, vec![1.0, 0.0, 1.0])).unwrap()
    }

    fn sup_error(sol: &SolutionField, g: &BoundaryData) -> f64 {
        let u0 = harmonic_reference(g, sol.mesh.radius);
        sol.u
            .iter()
            .zip(&sol.mesh.nodes)
            .map(|(u, p)| (u - u0.eval(*p)).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn linear_data_is_reproduced_exactly() {
        let dp = DiskProblem::new(&identity(), 1.0, 1.0, 1.0 / 32.0).unwrap();
        let g = BoundaryData::cos(1);
        let sol = dp.solve(&g).unwrap();
        assert!(sol.residual() <= 1e-10);
        // Boundary nodes sit on the circle, so the P1 interpolant of x is the
        // discrete solution up to solver tolerance.
        assert!(sup_error(&sol, &g) < 1e-8, "{}", sup_error(&sol, &g));
        assert!(sol.satisfies_max_principle());
        for grad in &sol.element_grad {
            assert!((grad - Vec2::x()).norm() < 1e-7);
        }
    }

    #[test]
    fn quadratic_data_converges_at_second_order() {
        let g = BoundaryData::cos(2);
        let errs: Vec<f64> = [16.0, 32.0, 64.0]
            .iter()
            .map(|n| {
                let dp = DiskProblem::new(&identity(), 1.0, 1.0, 1.0 / n).unwrap();
                sup_error(&dp.solve(&g).unwrap(), &g)
            })
            .collect();
        let order = (errs[1] / errs[2]).log2();
        assert!(order >= 1.9, "{errs:?}");
    }

    #[test]
    fn galerkin_solution_minimizes_energy() {
        let field = identity();
        let dp = DiskProblem::new(&field, 1.0, 1.0, 1.0 / 16.0).unwrap();
        let sol = dp.solve(&BoundaryData::cos(3)).unwrap();
        let e0 = dp.energy(&sol.u);
        let mut perturbed = sol.u.clone();
        for (k, v) in dp.interior_nodes.iter().enumerate() {
            perturbed[*v] += 1e-3 * ((k % 7) as f64 - 3.0);
        }
        assert!(dp.energy(&perturbed) > e0);
    }

    #[test]
    fn multigrid_keeps_iteration_counts_flat() {
        let field = identity();
        let g = BoundaryData::cos(2);
        let its: Vec<usize> = [32.0, 128.0]
            .iter()
            .map(|n| DiskProblem::new(&field, 1.0, 1.0, 1.0 / n).unwrap().solve(&g).unwrap().info.iterations)
            .collect();
        assert!(its[1] <= its[0] + 8, "{its:?}");
    }

    #[test]
    fn mesh_rule_is_enforced() {
        let p = EpsProblem::new(identity(), 0.25, 1.0, BoundaryData::cos(2)).with_h(0.05);
        assert!(matches!(assemble_solve(&p), Err(Error::InvalidParameter(_))));
    }
}
