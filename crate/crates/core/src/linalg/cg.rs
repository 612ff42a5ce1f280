use super::{dot, norm2, project_mean_zero, CsrMatrix};
use crate::error::{Error, Result};

pub trait Preconditioner {
    /// Computes `z ≈ A⁻¹ r`.
    fn apply(&self, r: &[f64], z: &mut [f64]);
}

pub struct Identity;

impl Preconditioner for Identity {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        z.copy_from_slice(r);
    }
}

#[derive(Clone, Debug)]
pub struct CgOptions {
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Keep iterates and residuals orthogonal to constants (singular
    /// periodic systems).
    pub project_mean: bool,
    /// Right-hand sides with norm below this are treated as zero.
    pub zero_rhs: f64,
}

impl Default for CgOptions {
    fn default() -> Self {
        CgOptions {
            tolerance: 1e-10,
            max_iterations: 10_000,
            project_mean: false,
            zero_rhs: 0.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct CgOutcome {
    pub iterations: usize,
    /// Final true relative residual `‖b − Ax‖ / ‖b‖`.
    pub relative_residual: f64,
    pub history: Vec<f64>,
}

/// Preconditioned conjugate gradients for symmetric positive (semi)definite
/// systems, starting from the supplied `x`.
pub fn pcg<P: Preconditioner>(
    a: &CsrMatrix,
    b: &[f64],
    x: &mut [f64],
    precond: &P,
    opts: &CgOptions,
) -> Result<CgOutcome> {
    let n = b.len();
    let mut rhs = b.to_vec();
    if opts.project_mean {
        project_mean_zero(&mut rhs);
        project_mean_zero(x);
    }
    let bnorm = norm2(&rhs);
    if bnorm <= opts.zero_rhs {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(CgOutcome {
            iterations: 0,
            relative_residual: 0.0,
            history: vec![0.0],
        });
    }

    let mut r = vec![0.0; n];
    a.mul_vec(x, &mut r);
    r.iter_mut().zip(&rhs).for_each(|(ri, bi)| *ri = bi - *ri);
    if opts.project_mean {
        project_mean_zero(&mut r);
    }
    let mut z = vec![0.0; n];
    precond.apply(&r, &mut z);
    if opts.project_mean {
        project_mean_zero(&mut z);
    }
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    let mut history = vec![norm2(&r) / bnorm];

    let mut it = 0;
    while it < opts.max_iterations {
        if *history.last().unwrap() <= opts.tolerance {
            // Confirm against the true residual before stopping.
            let true_res = true_residual(a, &rhs, x, opts.project_mean) / bnorm;
            if true_res <= opts.tolerance {
                return Ok(CgOutcome {
                    iterations: it,
                    relative_residual: true_res,
                    history,
                });
            }
            // Restart from the true residual.
            a.mul_vec(x, &mut r);
            r.iter_mut().zip(&rhs).for_each(|(ri, bi)| *ri = bi - *ri);
            if opts.project_mean {
                project_mean_zero(&mut r);
            }
            precond.apply(&r, &mut z);
            if opts.project_mean {
                project_mean_zero(&mut z);
            }
            p.copy_from_slice(&z);
            rz = dot(&r, &z);
        }
        a.mul_vec(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::Assembly(format!(
                "operator is not positive definite along search direction (pAp = {pap:e})"
            )));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        if opts.project_mean {
            project_mean_zero(x);
            project_mean_zero(&mut r);
        }
        precond.apply(&r, &mut z);
        if opts.project_mean {
            project_mean_zero(&mut z);
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        it += 1;
        history.push(norm2(&r) / bnorm);
    }
    let residual = true_residual(a, &rhs, x, opts.project_mean) / bnorm;
    if residual <= opts.tolerance {
        return Ok(CgOutcome {
            iterations: it,
            relative_residual: residual,
            history,
        });
    }
    Err(Error::SolverFailure {
        iterations: it,
        residual,
        history,
    })
}

fn true_residual(a: &CsrMatrix, b: &[f64], x: &[f64], project: bool) -> f64 {
    let mut r = vec![0.0; b.len()];
    a.mul_vec(x, &mut r);
    r.iter_mut().zip(b).for_each(|(ri, bi)| *ri = bi - *ri);
    if project {
        project_mean_zero(&mut r);
    }
    norm2(&r)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplace_1d(n: usize) -> CsrMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i > 0 {
                t.push((i, i - 1, -1.0));
            }
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
            }
        }
        CsrMatrix::from_triplets(n, n, &t)
    }

    #[test]
    fn solves_tridiagonal_system() {
        let a = laplace_1d(50);
        let xs: Vec<f64> = (0..50).map(|i| (i as f64 * 0.3).sin()).collect();
        let mut b = vec![0.0; 50];
        a.mul_vec(&xs, &mut b);
        let mut x = vec![0.0; 50];
        let out = pcg(&a, &b, &mut x, &Identity, &CgOptions::default()).unwrap();
        assert!(out.relative_residual <= 1e-10);
        for (u, v) in x.iter().zip(&xs) {
            assert!((u - v).abs() < 1e-8);
        }
    }

    #[test]
    fn reports_failure_with_history() {
        let a = laplace_1d(200);
        let b = vec![1.0; 200];
        let mut x = vec![0.0; 200];
        let opts = CgOptions {
            max_iterations: 3,
            ..Default::default()
        };
        match pcg(&a, &b, &mut x, &Identity, &opts) {
            Err(Error::SolverFailure { iterations, history, .. }) => {
                assert_eq!(iterations, 3);
                assert_eq!(history.len(), 4);
            }
            other => panic!("expected failure, got {other:?}"),
        }
    }
}
