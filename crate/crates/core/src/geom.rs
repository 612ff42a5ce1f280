//! Small fixed-size geometry helpers.

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

pub type Vec2 = Vector2<f64>;
pub type Mat2 = Matrix2<f64>;

/// Closed disk `B(center, radius)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Disk {
    pub center: [f64; 2],
    pub radius: f64,
}

impl Disk {
    pub fn new(center: Vec2, radius: f64) -> Self {
        Disk {
            center: [center.x, center.y],
            radius,
        }
    }

    pub fn centered(radius: f64) -> Self {
        Disk {
            center: [0.0, 0.0],
            radius,
        }
    }

    pub fn center(&self) -> Vec2 {
        Vec2::new(self.center[0], self.center[1])
    }

    pub fn contains(&self, p: Vec2) -> bool {
        (p - self.center()).norm() < self.radius
    }

    /// True when `inner` lies in this disk with at least `margin` to spare.
    pub fn contains_disk(&self, inner: &Disk, margin: f64) -> bool {
        (inner.center() - self.center()).norm() + inner.radius + margin <= self.radius * (1.0 + 1e-12)
    }
}

pub fn sym(a: &Mat2) -> Mat2 {
    (a + a.transpose()) * 0.5
}

/// Eigenvalues `(min, max)` of a symmetric 2x2 matrix.
pub fn sym_eigenvalues(s: &Mat2) -> (f64, f64) {
    let a = s[(0, 0)];
    let b = 0.5 * (s[(0, 1)] + s[(1, 0)]);
    let d = s[(1, 1)];
    let mean = 0.5 * (a + d);
    let rad = (0.25 * (a - d) * (a - d) + b * b).sqrt();
    (mean - rad, mean + rad)
}

/// Principal square root of a symmetric positive definite 2x2 matrix.
///
/// Uses `sqrt(S) = (S + sqrt(det S) I) / sqrt(tr S + 2 sqrt(det S))`.
pub fn sqrt_spd(s: &Mat2) -> Option<Mat2> {
    let s = sym(s);
    let det = s.determinant();
    let tr = s.trace();
    if !(det > 0.0 && tr > 0.0) {
        return None;
    }
    let sd = det.sqrt();
    let t = (tr + 2.0 * sd).sqrt();
    Some((s + Mat2::identity() * sd) / t)
}

pub fn frobenius(a: &Mat2) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn polar(r: f64, theta: f64) -> Vec2 {
    Vec2::new(r * theta.cos(), r * theta.sin())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sqrt_of_diagonal() {
        let s = Mat2::new(3f64.sqrt(), 0.0, 0.0, 2.0);
        let p = sqrt_spd(&s).unwrap();
        assert!((p[(0, 0)] - 3f64.powf(0.25)).abs() < 1e-14);
        assert!((p[(1, 1)] - 2f64.sqrt()).abs() < 1e-14);
        assert!(p[(0, 1)].abs() < 1e-15);
    }

    #[test]
    fn sqrt_squares_back() {
        let s = Mat2::new(2.0, 0.7, 0.7, 1.3);
        let p = sqrt_spd(&s).unwrap();
        assert!(frobenius(&(p * p - s)) < 1e-14);
        assert!(sqrt_spd(&Mat2::new(1.0, 2.0, 2.0, 1.0)).is_none());
    }

    #[test]
    fn eigenvalues_of_rotated_diag() {
        let (c, s) = (0.3f64.cos(), 0.3f64.sin());
        let r = Mat2::new(c, -s, s, c);
        let a = r * Mat2::new(1.0, 0.0, 0.0, 2.0) * r.transpose();
        let (lo, hi) = sym_eigenvalues(&a);
        assert!((lo - 1.0).abs() < 1e-14 && (hi - 2.0).abs() < 1e-14);
    }
}
