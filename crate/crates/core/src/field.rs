//! Scalar fields that can be probed pointwise for values and gradients.

use num_complex::Complex64;

use crate::geom::{Disk, Vec2};

/// A scalar function on a disk with a gradient.
///
/// `value` and `gradient` return `None` outside the region where the field
/// is defined.
pub trait Field: Sync {
    fn value(&self, p: Vec2) -> Option<f64>;
    fn gradient(&self, p: Vec2) -> Option<Vec2>;
    fn domain(&self) -> Disk;
    /// Mesh size for discrete fields, zero for closed forms.
    fn resolution(&self) -> f64 {
        0.0
    }
    /// Oscillation period of the coefficient, zero when non-oscillatory.
    fn oscillation_scale(&self) -> f64 {
        0.0
    }
}

impl<F: Field + ?Sized> Field for &F {
    fn value(&self, p: Vec2) -> Option<f64> {
        (**self).value(p)
    }
    fn gradient(&self, p: Vec2) -> Option<Vec2> {
        (**self).gradient(p)
    }
    fn domain(&self) -> Disk {
        (**self).domain()
    }
    fn resolution(&self) -> f64 {
        (**self).resolution()
    }
    fn oscillation_scale(&self) -> f64 {
        (**self).oscillation_scale()
    }
}

/// Harmonic polynomial `u(z) = Re Σ c_ℓ (z/R)^ℓ`, with `c_ℓ = a_ℓ − i b_ℓ`
/// so that on `|z| = R` it equals `Σ a_ℓ cos ℓθ + b_ℓ sin ℓθ`.
#[derive(Clone, Debug)]
pub struct ClosedForm {
    coeffs: Vec<Complex64>,
    radius: f64,
}

impl ClosedForm {
    pub fn from_fourier(a: &[f64], b: &[f64], radius: f64) -> Self {
        let n = a.len().max(b.len());
        let coeffs = (0..n)
            .map(|l| {
                Complex64::new(
                    a.get(l).copied().unwrap_or(0.0),
                    -b.get(l).copied().unwrap_or(0.0),
                )
            })
            .collect();
        ClosedForm { coeffs, radius }
    }

    /// `r^ℓ cos ℓθ` on the disk of radius `radius`.
    pub fn monomial(degree: usize, radius: f64) -> Self {
        let mut a = vec![0.0; degree + 1];
        a[degree] = radius.powi(degree as i32);
        Self::from_fourier(&a, &[], radius)
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// Highest degree with a nonzero coefficient.
    pub fn degree(&self) -> usize {
        self.coeffs.iter().rposition(|c| c.norm() > 0.0).unwrap_or(0)
    }

    /// Lowest positive degree with a nonzero coefficient.
    pub fn leading_degree(&self) -> Option<usize> {
        (1..self.coeffs.len()).find(|&l| self.coeffs[l].norm() > 0.0)
    }

    fn eval_complex(&self, p: Vec2) -> (Complex64, Complex64) {
        let w = Complex64::new(p.x, p.y) / self.radius;
        let mut f = Complex64::new(0.0, 0.0);
        let mut df = Complex64::new(0.0, 0.0);
        for c in self.coeffs.iter().rev() {
            df = df * w + f;
            f = f * w + c;
        }
        (f, df / self.radius)
    }

    pub fn eval(&self, p: Vec2) -> f64 {
        self.eval_complex(p).0.re
    }

    /// `∇ Re f = (Re f′, −Im f′)`.
    pub fn grad(&self, p: Vec2) -> Vec2 {
        let d = self.eval_complex(p).1;
        Vec2::new(d.re, -d.im)
    }
}

impl Field for ClosedForm {
    fn value(&self, p: Vec2) -> Option<f64> {
        Some(self.eval(p))
    }
    fn gradient(&self, p: Vec2) -> Option<Vec2> {
        Some(self.grad(p))
    }
    fn domain(&self) -> Disk {
        Disk::centered(self.radius)
    }
}

/// `v(x) = u(x + shift)`, defined on the shifted domain.
pub struct Translated<F> {
    pub inner: F,
    pub shift: Vec2,
}

impl<F: Field> Field for Translated<F> {
    fn value(&self, p: Vec2) -> Option<f64> {
        self.inner.value(p + self.shift)
    }
    fn gradient(&self, p: Vec2) -> Option<Vec2> {
        self.inner.gradient(p + self.shift)
    }
    fn domain(&self) -> Disk {
        let d = self.inner.domain();
        Disk::new(d.center() - self.shift, d.radius)
    }
    fn resolution(&self) -> f64 {
        self.inner.resolution()
    }
    fn oscillation_scale(&self) -> f64 {
        self.inner.oscillation_scale()
    }
}

/// `v(x) = u(θ x)`; all length scales shrink by `θ`.
pub struct Scaled<F> {
    pub inner: F,
    pub theta: f64,
}

impl<F: Field> Field for Scaled<F> {
    fn value(&self, p: Vec2) -> Option<f64> {
        self.inner.value(p * self.theta)
    }
    fn gradient(&self, p: Vec2) -> Option<Vec2> {
        self.inner.gradient(p * self.theta).map(|g| g * self.theta)
    }
    fn domain(&self) -> Disk {
        let d = self.inner.domain();
        Disk::new(d.center() / self.theta, d.radius / self.theta)
    }
    fn resolution(&self) -> f64 {
        self.inner.resolution() / self.theta
    }
    fn oscillation_scale(&self) -> f64 {
        self.inner.oscillation_scale() / self.theta
    }
}
