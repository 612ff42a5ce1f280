//! Sparse matrices, preconditioned conjugate gradients and a geometric
//! multigrid preconditioner built from nested P1 prolongations.

mod cg;
mod csr;
mod multigrid;

pub use cg::{pcg, CgOptions, CgOutcome, Identity, Preconditioner};
pub use csr::CsrMatrix;
pub use multigrid::Multigrid;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Removes the arithmetic mean from `v`.
pub fn project_mean_zero(v: &mut [f64]) {
    if v.is_empty() {
        return;
    }
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= mean);
}
