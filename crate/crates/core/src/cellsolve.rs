//! Periodic cell problem `div(A(∇χ_j + e_j)) = 0` on the torus `ℝ²/Γ`,
//! homogenized matrix, invertibility margin of `I + ∇χ` and the
//! normalizing change of variables.

use rayon::prelude::*;
use serde::Serialize;

use crate::coeff::{CoefficientField, LatticeBasis};
use crate::error::{Error, Result};
use crate::geom::{sqrt_spd, sym, Mat2, Vec2};
use crate::linalg::{pcg, project_mean_zero, CgOptions, CsrMatrix, Multigrid};

/// Relative tolerance of the flux/energy consistency check.
pub const QUADRATIC_FORM_TOL: f64 = 1e-8;
const COARSEST: usize = 4;

/// Uniform triangulation of the period cell, in lattice coordinates.
///
/// Node `(i, j)` has index `i + n j`. Each grid square is split along its
/// `(i, j)–(i+1, j+1)` diagonal into a lower triangle (even element index)
/// and an upper triangle (odd element index).
#[derive(Clone, Debug)]
pub struct PeriodicGrid {
    pub n: usize,
    pub lattice: LatticeBasis,
    /// Barycentric gradients `[∇φ₀, ∇φ₁, ∇φ₂]` of the lower/upper triangles.
    shape_grads: [[Vec2; 3]; 2],
    element_area: f64,
}

impl PeriodicGrid {
    pub fn new(n: usize, lattice: LatticeBasis) -> Result<Self> {
        if n < COARSEST || !n.is_power_of_two() {
            return Err(Error::InvalidParameter(format!(
                "cell grid size must be a power of two >= {COARSEST}, got {n}"
            )));
        }
        let h = 1.0 / n as f64;
        let offsets = [
            [Vec2::new(h, 0.0), Vec2::new(h, h)],
            [Vec2::new(h, h), Vec2::new(0.0, h)],
        ];
        let mut shape_grads = [[Vec2::zeros(); 3]; 2];
        let mut element_area = 0.0;
        for (t, [o1, o2]) in offsets.iter().enumerate() {
            let e1 = lattice.to_physical(*o1);
            let e2 = lattice.to_physical(*o2);
            let jac = Mat2::from_columns(&[e1, e2]);
            element_area = 0.5 * jac.determinant().abs();
            let jit = jac.try_inverse().unwrap().transpose();
            let g1 = jit * Vec2::x();
            let g2 = jit * Vec2::y();
            shape_grads[t] = [-(g1 + g2), g1, g2];
        }
        Ok(PeriodicGrid {
            n,
            lattice,
            shape_grads,
            element_area,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.n * self.n
    }

    pub fn num_elements(&self) -> usize {
        2 * self.n * self.n
    }

    pub fn element_area(&self) -> f64 {
        self.element_area
    }

    pub fn node(&self, i: usize, j: usize) -> usize {
        (i % self.n) + self.n * (j % self.n)
    }

    pub fn element_nodes(&self, e: usize) -> [usize; 3] {
        let sq = e / 2;
        let (i, j) = (sq % self.n, sq / self.n);
        if e % 2 == 0 {
            [self.node(i, j), self.node(i + 1, j), self.node(i + 1, j + 1)]
        } else {
            [self.node(i, j), self.node(i + 1, j + 1), self.node(i, j + 1)]
        }
    }

    pub fn shape_gradients(&self, e: usize) -> &[Vec2; 3] {
        &self.shape_grads[e % 2]
    }

    pub fn barycenter(&self, e: usize) -> Vec2 {
        let sq = e / 2;
        let (i, j) = ((sq % self.n) as f64, (sq / self.n) as f64);
        let (a, b) = if e % 2 == 0 { (2.0, 1.0) } else { (1.0, 2.0) };
        let nf = self.n as f64;
        self.lattice
            .to_physical(Vec2::new((i + a / 3.0) / nf, (j + b / 3.0) / nf))
    }

    /// Element containing the physical point `y` (periodically reduced).
    pub fn locate(&self, y: Vec2) -> usize {
        let s = self.lattice.to_lattice(y);
        let nf = self.n as f64;
        let sx = s.x.rem_euclid(1.0) * nf;
        let sy = s.y.rem_euclid(1.0) * nf;
        let i = (sx.floor() as usize).min(self.n - 1);
        let j = (sy.floor() as usize).min(self.n - 1);
        let (fx, fy) = (sx - i as f64, sy - j as f64);
        2 * (i + self.n * j) + usize::from(fy > fx)
    }

    fn elements(&self) -> Vec<[usize; 3]> {
        (0..self.num_elements()).map(|e| self.element_nodes(e)).collect()
    }

    /// P1 interpolation from the grid of size `n / 2` onto this grid.
    fn prolongation_from_coarse(&self) -> CsrMatrix {
        let n = self.n;
        let nc = n / 2;
        let cnode = |i: usize, j: usize| (i % nc) + nc * (j % nc);
        let mut trip = Vec::with_capacity(3 * n * n);
        for j in 0..n {
            for i in 0..n {
                let row = i + n * j;
                let (ci, cj) = (i / 2, j / 2);
                match (i % 2, j % 2) {
                    (0, 0) => trip.push((row, cnode(ci, cj), 1.0)),
                    (1, 0) => {
                        trip.push((row, cnode(ci, cj), 0.5));
                        trip.push((row, cnode(ci + 1, cj), 0.5));
                    }
                    (0, 1) => {
                        trip.push((row, cnode(ci, cj), 0.5));
                        trip.push((row, cnode(ci, cj + 1), 0.5));
                    }
                    _ => {
                        trip.push((row, cnode(ci, cj), 0.5));
                        trip.push((row, cnode(ci + 1, cj + 1), 0.5));
                    }
                }
            }
        }
        CsrMatrix::from_triplets(n * n, nc * nc, &trip)
    }
}

/// Discrete correctors and derived quantities.
#[derive(Clone, Debug)]
pub struct CorrectorSolution {
    pub grid: PeriodicGrid,
    /// Nodal values of `χ₁` and `χ₂`, each with zero cell average.
    pub chi: [Vec<f64>; 2],
    /// Per element, `M[(i, j)] = ∂ᵢχⱼ`.
    pub grad_chi: Vec<Mat2>,
    pub a_hat: Mat2,
    pub mu_min: f64,
    /// Largest final relative residual of the two solves.
    pub residual: f64,
    pub iterations: usize,
    /// Largest relative gap between `⟨Âξ,ξ⟩` and the averaged energy.
    pub quadratic_discrepancy: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct CorrectorSummary {
    pub n: usize,
    pub a_hat: [[f64; 2]; 2],
    pub mu_min: f64,
    pub residual: f64,
    pub iterations: usize,
    pub quadratic_discrepancy: f64,
    pub lattice_b1: [f64; 2],
    pub lattice_b2: [f64; 2],
}

impl CorrectorSolution {
    /// `∇χ` at the physical cell point `y`.
    pub fn grad_at(&self, y: Vec2) -> Mat2 {
        self.grad_chi[self.grid.locate(y)]
    }

    /// `(χ₁, χ₂)` interpolated at the physical cell point `y`.
    pub fn chi_at(&self, y: Vec2) -> Vec2 {
        let e = self.grid.locate(y);
        let nf = self.grid.n as f64;
        let s = self.grid.lattice.to_lattice(y);
        let sx = s.x.rem_euclid(1.0) * nf;
        let sy = s.y.rem_euclid(1.0) * nf;
        let (fx, fy) = (sx - (sx.floor()).min(nf - 1.0), sy - (sy.floor()).min(nf - 1.0));
        let lam = if e % 2 == 0 {
            [1.0 - fx, fx - fy, fy]
        } else {
            [1.0 - fy, fx, fy - fx]
        };
        let nodes = self.grid.element_nodes(e);
        let mut out = Vec2::zeros();
        for j in 0..2 {
            out[j] = (0..3).map(|k| lam[k] * self.chi[j][nodes[k]]).sum();
        }
        out
    }

    pub fn max_abs_chi(&self) -> f64 {
        self.chi
            .iter()
            .flat_map(|c| c.iter())
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn cell_average(&self, j: usize) -> f64 {
        self.chi[j].iter().sum::<f64>() / self.chi[j].len() as f64
    }

    pub fn summary(&self) -> CorrectorSummary {
        let a = &self.a_hat;
        CorrectorSummary {
            n: self.grid.n,
            a_hat: [[a[(0, 0)], a[(0, 1)]], [a[(1, 0)], a[(1, 1)]]],
            mu_min: self.mu_min,
            residual: self.residual,
            iterations: self.iterations,
            quadratic_discrepancy: self.quadratic_discrepancy,
            lattice_b1: [self.grid.lattice.b1.x, self.grid.lattice.b1.y],
            lattice_b2: [self.grid.lattice.b2.x, self.grid.lattice.b2.y],
        }
    }
}

fn element_coefficients(grid: &PeriodicGrid, field: &CoefficientField) -> Vec<Mat2> {
    (0..grid.num_elements())
        .into_par_iter()
        .map(|e| field.eval(grid.barycenter(e)))
        .collect()
}

/// Solves the cell problem on an `n × n` periodic P1 grid.
pub fn solve_cell_problem(field: &CoefficientField, n: usize) -> Result<CorrectorSolution> {
    if n < 32 || !n.is_power_of_two() {
        return Err(Error::InvalidParameter(format!(
            "cell problem needs n >= 32, a power of two; got {n}"
        )));
    }
    let grid = PeriodicGrid::new(n, *field.lattice())?;
    let coeffs = element_coefficients(&grid, field);
    let elements = grid.elements();
    let identity: Vec<Option<usize>> = (0..grid.num_nodes()).map(Some).collect();
    let mut k = CsrMatrix::pattern_from_elements(grid.num_nodes(), &elements, &identity);
    let mut rhs = [vec![0.0; grid.num_nodes()], vec![0.0; grid.num_nodes()]];
    let area = grid.element_area();
    for (e, nodes) in elements.iter().enumerate() {
        let g = grid.shape_gradients(e);
        let a = &coeffs[e];
        for (p, &np) in nodes.iter().enumerate() {
            for (q, &nq) in nodes.iter().enumerate() {
                k.add(np, nq, area * g[p].dot(&(a * g[q])));
            }
            for (j, r) in rhs.iter_mut().enumerate() {
                r[np] -= area * g[p].dot(&a.column(j));
            }
        }
    }
    if k.asymmetry() > 1e-12 * k.diagonal().iter().fold(0.0f64, |m, v| m.max(*v)) {
        return Err(Error::Assembly("cell stiffness matrix is not symmetric".into()));
    }
    let max_diag = k.diagonal().iter().fold(0.0f64, |m, v| m.max(*v));
    if !(max_diag > 0.0) {
        return Err(Error::Assembly("cell stiffness has nonpositive diagonal".into()));
    }

    let mut prolongations = Vec::new();
    let mut level_n = n;
    while level_n > COARSEST {
        let g = PeriodicGrid::new(level_n, grid.lattice)?;
        prolongations.push(g.prolongation_from_coarse());
        level_n /= 2;
    }
    let mg = Multigrid::new(k.clone(), prolongations, true);
    let opts = CgOptions {
        tolerance: 1e-10,
        max_iterations: 10 * n * n,
        project_mean: true,
        zero_rhs: 1e-13 * max_diag,
    };
    let mut chi = [vec![0.0; grid.num_nodes()], vec![0.0; grid.num_nodes()]];
    let mut residual: f64 = 0.0;
    let mut iterations = 0;
    for j in 0..2 {
        let out = pcg(&k, &rhs[j], &mut chi[j], &mg, &opts)?;
        project_mean_zero(&mut chi[j]);
        residual = residual.max(out.relative_residual);
        iterations = iterations.max(out.iterations);
    }

    let grad_chi: Vec<Mat2> = elements
        .iter()
        .enumerate()
        .map(|(e, nodes)| {
            let g = grid.shape_gradients(e);
            let mut m = Mat2::zeros();
            for j in 0..2 {
                let grad: Vec2 = (0..3).map(|p| g[p] * chi[j][nodes[p]]).sum();
                m.set_column(j, &grad);
            }
            m
        })
        .collect();
    let mut sol = CorrectorSolution {
        grid,
        chi,
        grad_chi,
        a_hat: Mat2::zeros(),
        mu_min: 0.0,
        residual,
        iterations,
        quadratic_discrepancy: 0.0,
    };
    let (a_hat, discrepancy) = flux_and_energy(&sol, &coeffs);
    sol.a_hat = a_hat;
    sol.quadratic_discrepancy = discrepancy;
    sol.mu_min = invertibility_margin(&sol);
    Ok(sol)
}

fn flux_and_energy(sol: &CorrectorSolution, coeffs: &[Mat2]) -> (Mat2, f64) {
    let area = sol.grid.element_area();
    let cell = sol.grid.lattice.cell_area;
    let mut a_hat = Mat2::zeros();
    for (a, m) in coeffs.iter().zip(&sol.grad_chi) {
        a_hat += a * (Mat2::identity() + m) * area;
    }
    a_hat /= cell;
    let mut worst: f64 = 0.0;
    for xi in [Vec2::x(), Vec2::y(), Vec2::new(1.0, 1.0)] {
        let energy: f64 = coeffs
            .iter()
            .zip(&sol.grad_chi)
            .map(|(a, m)| {
                let v = (Mat2::identity() + m) * xi;
                v.dot(&(a * v)) * area
            })
            .sum::<f64>()
            / cell;
        let form = xi.dot(&(a_hat * xi));
        worst = worst.max((energy - form).abs() / form.abs());
    }
    (a_hat, worst)
}

/// Flux average `âᵢⱼ = ⨍ (aᵢⱼ + aᵢₖ ∂ₖχⱼ)`, checked against the energy
/// identity `⟨Âξ,ξ⟩ = ⨍ ⟨A∇v_ξ, ∇v_ξ⟩` for `ξ ∈ {e₁, e₂, e₁+e₂}`.
pub fn homogenized_matrix(corrector: &CorrectorSolution, field: &CoefficientField) -> Result<Mat2> {
    let coeffs = element_coefficients(&corrector.grid, field);
    let (a_hat, discrepancy) = flux_and_energy(corrector, &coeffs);
    if discrepancy > QUADRATIC_FORM_TOL {
        return Err(Error::Inconsistency { discrepancy });
    }
    Ok(a_hat)
}

/// Minimum of `det(I + ∇χ)` over element quadrature points.
pub fn invertibility_margin(corrector: &CorrectorSolution) -> f64 {
    corrector
        .grad_chi
        .iter()
        .map(|m| (Mat2::identity() + m).determinant())
        .fold(f64::INFINITY, f64::min)
}

/// Solves at `n` and, while the margin is nonpositive, re-solves at `2n`
/// (up to 2048) before reporting a violation.
pub fn certified_margin(field: &CoefficientField, n: usize) -> Result<CorrectorSolution> {
    let mut n = n;
    loop {
        let sol = solve_cell_problem(field, n)?;
        if sol.mu_min > 0.0 {
            return Ok(sol);
        }
        if n >= 2048 {
            return Err(Error::InvertibilityViolation {
                mu_min: sol.mu_min,
                n,
            });
        }
        n *= 2;
    }
}

/// Change of variables `x = P y` with `P² = sym Â`.
#[derive(Clone, Debug)]
pub struct NormalizingTransform {
    pub p: Mat2,
    pub p_inv: Mat2,
    pub lattice: LatticeBasis,
}

impl NormalizingTransform {
    pub fn from_homogenized(a_hat: &Mat2, lattice: &LatticeBasis) -> Result<Self> {
        let p = sqrt_spd(&sym(a_hat)).ok_or_else(|| {
            Error::InvalidParameter("symmetric part of the homogenized matrix is not SPD".into())
        })?;
        let p_inv = p.try_inverse().expect("SPD square root is invertible");
        Ok(NormalizingTransform {
            p,
            p_inv,
            lattice: lattice.transformed(&p_inv)?,
        })
    }

    /// Maps a point of the original frame to the normalized frame.
    pub fn to_normalized(&self, x: Vec2) -> Vec2 {
        self.p_inv * x
    }

    pub fn from_normalized(&self, y: Vec2) -> Vec2 {
        self.p * y
    }

    /// Homogenized matrix in the normalized frame, `P⁻¹ Â P⁻¹`.
    pub fn transform_homogenized(&self, a_hat: &Mat2) -> Mat2 {
        self.p_inv * a_hat * self.p_inv
    }
}

/// Normalizes so that the homogenized matrix satisfies `Â′ + Â′ᵀ = 2I`.
pub fn normalize(
    corrector: &CorrectorSolution,
    field: &CoefficientField,
) -> Result<(NormalizingTransform, CoefficientField)> {
    let t = NormalizingTransform::from_homogenized(&corrector.a_hat, field.lattice())?;
    let pushed = field.push_forward(&t.p)?;
    Ok((t, pushed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeff::{build_family, FamilyKind, FamilySpec};
    use crate::geom::frobenius;

    fn field(kind: FamilyKind, params: Vec<f64>) -> CoefficientField {
        build_family(&FamilySpec::new(kind, params)).unwrap()
    }

    #[test]
    fn grid_rejects_bad_sizes() {
        let f = field(FamilyKind::Constant, vec![1.0]);
        assert!(solve_cell_problem(&f, 48).is_err());
        assert!(solve_cell_problem(&f, 16).is_err());
    }

    #[test]
    fn locate_matches_barycenter() {
        let lat = LatticeBasis::new(Vec2::new(1.0, 0.0), Vec2::new(0.5, 1.0)).unwrap();
        let g = PeriodicGrid::new(8, lat).unwrap();
        for e in 0..g.num_elements() {
            assert_eq!(g.locate(g.barycenter(e)), e);
            assert_eq!(g.locate(g.barycenter(e) + lat.b1 - lat.b2 * 2.0), e);
        }
        let total: f64 = (0..g.num_elements()).map(|_| g.element_area()).sum();
        assert!((total - lat.cell_area).abs() < 1e-12);
    }

    #[test]
    fn constant_field_has_zero_corrector() {
        let f = field(FamilyKind::Constant, vec![2.0, 0.3, 3.0]);
        let sol = solve_cell_problem(&f, 32).unwrap();
        assert!(sol.max_abs_chi() <= 1e-10);
        assert_eq!(sol.mu_min, 1.0);
        assert!(frobenius(&(sol.a_hat - Mat2::new(2.0, 0.3, 0.3, 3.0))) < 1e-12);
    }

    #[test]
    fn laminate_corrector_is_one_dimensional() {
        let f = field(FamilyKind::Laminate, vec![2.0, 1.0]);
        let sol = solve_cell_problem(&f, 64).unwrap();
        assert!(sol.residual <= 1e-10);
        assert!(sol.cell_average(0).abs() <= 1e-12);
        assert!(sol.cell_average(1).abs() <= 1e-12);
        assert!(sol.chi[1].iter().all(|v| v.abs() < 1e-9));
        let a11 = sol.a_hat[(0, 0)];
        let n = sol.grid.n as f64;
        let a = |x: f64| 2.0 + (std::f64::consts::TAU * x).sin();
        for (e, m) in sol.grad_chi.iter().enumerate().step_by(37) {
            // Discrete 1D identity: ∂₁χ₁ = â₁₁ / ā − 1 with ā the column
            // average of the two barycentric coefficient values.
            let i = ((e / 2) % sol.grid.n) as f64;
            let abar = 0.5 * (a((i + 1.0 / 3.0) / n) + a((i + 2.0 / 3.0) / n));
            assert!((m[(0, 0)] - (a11 / abar - 1.0)).abs() < 1e-8);
        }
    }

    #[test]
    fn symmetric_fields_give_symmetric_a_hat() {
        for kind in FamilyKind::ALL {
            let f = build_family(&FamilySpec::default_for(kind)).unwrap();
            let sol = solve_cell_problem(&f, 32).unwrap();
            let a = sol.a_hat;
            assert!((a[(0, 1)] - a[(1, 0)]).abs() < 1e-10, "{kind:?}: {a}");
            assert!(sol.quadratic_discrepancy < QUADRATIC_FORM_TOL);
            let again = homogenized_matrix(&sol, &f).unwrap();
            assert!(frobenius(&(again - a)) < 1e-14);
        }
    }

    #[test]
    fn normalization_of_identity() {
        let f = field(FamilyKind::Constant, vec![1.0]);
        let sol = solve_cell_problem(&f, 32).unwrap();
        let (t, g) = normalize(&sol, &f).unwrap();
        assert!(frobenius(&(t.p - Mat2::identity())) < 1e-15);
        let y = Vec2::new(0.3, -0.2);
        assert!(frobenius(&(g.eval(y) - f.eval(y))) < 1e-15);
    }

    #[test]
    fn push_forward_lattice_periodicity() {
        let f = field(FamilyKind::Laminate, vec![2.0, 1.0]);
        let p = Mat2::new(3f64.powf(0.25), 0.0, 0.0, 2f64.sqrt());
        let g = f.push_forward(&p).unwrap();
        let y = Vec2::new(0.123, 0.456);
        let expected = p.try_inverse().unwrap() * f.eval(p * y) * p.try_inverse().unwrap();
        assert!(frobenius(&(g.eval(y) - expected)) < 1e-14);
        assert!(frobenius(&(g.eval(y + g.lattice().b1) - g.eval(y))) < 1e-12);
    }
}
