use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::{project_mean_zero, CsrMatrix, Preconditioner};

struct Level {
    a: CsrMatrix,
    diag: Vec<f64>,
    /// Interpolation from the next coarser level onto this one.
    prolong: Option<CsrMatrix>,
    restrict: Option<CsrMatrix>,
}

/// Symmetric V-cycle with Galerkin coarse operators `Pᵀ A P`.
///
/// Pre- and post-smoothing are forward and backward Gauss-Seidel, so the
/// cycle is a symmetric operator and can precondition CG.
pub struct Multigrid {
    levels: Vec<Level>,
    coarse: Cholesky<f64, Dyn>,
    singular: bool,
    sweeps: usize,
}

impl Multigrid {
    /// `prolongations[k]` maps level `k + 1` (coarser) onto level `k`, with
    /// level 0 the fine operator `a`. For `singular` systems the kernel is
    /// the constant vector on every level.
    pub fn new(a: CsrMatrix, prolongations: Vec<CsrMatrix>, singular: bool) -> Self {
        let mut levels = Vec::with_capacity(prolongations.len() + 1);
        let mut current = a;
        for p in prolongations {
            let r = p.transpose();
            let coarse = r.matmul(&current.matmul(&p));
            let diag = current.diagonal();
            levels.push(Level {
                a: current,
                diag,
                prolong: Some(p),
                restrict: Some(r),
            });
            current = coarse;
        }
        let mut dense = current.to_dense();
        if singular {
            let n = dense.nrows() as f64;
            let shift = dense.diagonal().mean() / n;
            dense.add_scalar_mut(shift);
        }
        let coarse = Cholesky::new(dense.clone()).unwrap_or_else(|| {
            // Coarse operators of valid problems are SPD; a tiny diagonal
            // shift covers round-off at the coarsest level.
            let eps = 1e-12 * dense.diagonal().amax();
            Cholesky::new(dense + DMatrix::identity(current.nrows(), current.nrows()) * eps)
                .expect("coarse operator is not positive definite")
        });
        let diag = current.diagonal();
        levels.push(Level {
            a: current,
            diag,
            prolong: None,
            restrict: None,
        });
        Multigrid {
            levels,
            coarse,
            singular,
            sweeps: 2,
        }
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn coarse_size(&self) -> usize {
        self.levels.last().map_or(0, |l| l.a.nrows())
    }

    fn cycle(&self, k: usize, b: &[f64], x: &mut [f64]) {
        let level = &self.levels[k];
        if k + 1 == self.levels.len() {
            let mut rhs = DVector::from_column_slice(b);
            if self.singular {
                let m = rhs.mean();
                rhs.add_scalar_mut(-m);
            }
            let sol = self.coarse.solve(&rhs);
            x.copy_from_slice(sol.as_slice());
            return;
        }
        x.iter_mut().for_each(|v| *v = 0.0);
        for _ in 0..self.sweeps {
            level.a.gauss_seidel(&level.diag, b, x, true);
        }
        let mut r = vec![0.0; b.len()];
        level.a.mul_vec(x, &mut r);
        r.iter_mut().zip(b).for_each(|(ri, bi)| *ri = bi - *ri);

        let restrict = level.restrict.as_ref().unwrap();
        let prolong = level.prolong.as_ref().unwrap();
        let mut rc = vec![0.0; restrict.nrows()];
        restrict.mul_vec(&r, &mut rc);
        let mut ec = vec![0.0; rc.len()];
        self.cycle(k + 1, &rc, &mut ec);
        let mut e = vec![0.0; b.len()];
        prolong.mul_vec(&ec, &mut e);
        x.iter_mut().zip(&e).for_each(|(xi, ei)| *xi += ei);

        for _ in 0..self.sweeps {
            level.a.gauss_seidel(&level.diag, b, x, false);
        }
    }
}

impl Preconditioner for Multigrid {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        self.cycle(0, r, z);
        if self.singular {
            project_mean_zero(z);
        }
    }
}
