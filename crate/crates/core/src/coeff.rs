//! Periodic 2x2 coefficient fields `A(y)` over general lattices.
//!
//! Every family is evaluated in lattice coordinates `s = B⁻¹y` reduced
//! modulo one, so `A(y + z) = A(y)` holds for lattice vectors `z` up to
//! round-off in the reduction.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{frobenius, sym, sym_eigenvalues, Mat2, Vec2};

/// Smallest ellipticity constant any built field may carry.
pub const MIN_LAMBDA: f64 = 0.05;
/// Factor applied after amplitude projection.
pub const PROJECTION_SAFETY: f64 = 0.95;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FamilyKind {
    Constant,
    Laminate,
    SeparableScalar,
    RotatingAnisotropic,
    FourierGeneral,
}

impl FamilyKind {
    pub const ALL: [FamilyKind; 5] = [
        FamilyKind::Constant,
        FamilyKind::Laminate,
        FamilyKind::SeparableScalar,
        FamilyKind::RotatingAnisotropic,
        FamilyKind::FourierGeneral,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FamilyKind::Constant => "constant",
            FamilyKind::Laminate => "laminate",
            FamilyKind::SeparableScalar => "separable-scalar",
            FamilyKind::RotatingAnisotropic => "rotating-anisotropic",
            FamilyKind::FourierGeneral => "fourier-general",
        }
    }
}

fn unit_b1() -> [f64; 2] {
    [1.0, 0.0]
}

fn unit_b2() -> [f64; 2] {
    [0.0, 1.0]
}

/// Family name plus parameters, as read from the `[coefficient]` section.
///
/// Parameter layouts:
///
/// * `constant`: `[a]` (scalar) or `[a11, a12, a22]`
/// * `laminate`: `[mean, amp]`, `a = mean + amp sin(2π s₁)`, `A = a I`
/// * `separable-scalar`: `[mean, amp]`, `a = mean + amp sin(2π s₁) sin(2π s₂)`
/// * `rotating-anisotropic`: `[d1, d2, rot]`, `A = R(φ) diag(d1, d2) R(φ)ᵀ`
///   with `φ = rot (sin 2π s₁ + cos 2π s₂)`
/// * `fourier-general`: `[a11, a12, a22, (k1, k2, c11, c12, c22, s11, s12, s22)*]`;
///   an empty list draws three random modes from the seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilySpec {
    pub family: FamilyKind,
    #[serde(default)]
    pub params: Vec<f64>,
    #[serde(default = "unit_b1")]
    pub lattice_b1: [f64; 2],
    #[serde(default = "unit_b2")]
    pub lattice_b2: [f64; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
}

impl FamilySpec {
    pub fn new(family: FamilyKind, params: Vec<f64>) -> Self {
        FamilySpec {
            family,
            params,
            lattice_b1: unit_b1(),
            lattice_b2: unit_b2(),
            lambda: None,
        }
    }

    pub fn with_lattice(mut self, b1: [f64; 2], b2: [f64; 2]) -> Self {
        self.lattice_b1 = b1;
        self.lattice_b2 = b2;
        self
    }

    /// The default member of each family used by the experiment sweeps.
    pub fn default_for(family: FamilyKind) -> Self {
        match family {
            FamilyKind::Constant => FamilySpec::new(family, vec![2.0, 0.5, 1.0]),
            FamilyKind::Laminate => FamilySpec::new(family, vec![2.0, 1.0]),
            FamilyKind::SeparableScalar => FamilySpec::new(family, vec![2.0, 0.5]),
            FamilyKind::RotatingAnisotropic => FamilySpec::new(family, vec![1.0, 2.0, 0.5]),
            FamilyKind::FourierGeneral => FamilySpec::new(
                family,
                vec![
                    2.0, 0.0, 1.5, //
                    1.0, 0.0, 0.4, 0.1, 0.2, 0.0, 0.1, 0.0, //
                    0.0, 1.0, 0.2, 0.0, 0.3, 0.1, 0.0, 0.0, //
                    1.0, 1.0, 0.0, 0.05, 0.0, 0.2, 0.1, 0.1,
                ],
            )
            .with_lattice([1.0, 0.0], [0.5, 1.0]),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LatticeBasis {
    pub b1: Vec2,
    pub b2: Vec2,
    pub cell_area: f64,
    matrix: Mat2,
    inverse: Mat2,
}

impl LatticeBasis {
    pub fn new(b1: Vec2, b2: Vec2) -> Result<Self> {
        let matrix = Mat2::from_columns(&[b1, b2]);
        let det = matrix.determinant();
        let scale = b1.norm() * b2.norm();
        if !det.is_finite() || det.abs() <= 1e-12 * scale.max(f64::MIN_POSITIVE) {
            return Err(Error::DegenerateLattice { det });
        }
        Ok(LatticeBasis {
            b1,
            b2,
            cell_area: det.abs(),
            matrix,
            inverse: matrix.try_inverse().ok_or(Error::DegenerateLattice { det })?,
        })
    }

    pub fn unit_square() -> Self {
        Self::new(Vec2::x(), Vec2::y()).unwrap()
    }

    /// `[b1 b2]` as columns.
    pub fn matrix(&self) -> Mat2 {
        self.matrix
    }

    pub fn to_lattice(&self, y: Vec2) -> Vec2 {
        self.inverse * y
    }

    pub fn to_physical(&self, s: Vec2) -> Vec2 {
        self.matrix * s
    }

    /// Lattice image `M Γ`.
    pub fn transformed(&self, m: &Mat2) -> Result<Self> {
        Self::new(m * self.b1, m * self.b2)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct FourierMode {
    k: [i32; 2],
    cos: [f64; 3],
    sin: [f64; 3],
}

#[derive(Clone, Debug, PartialEq)]
enum Profile {
    Constant(Mat2),
    Laminate { mean: f64, amp: f64 },
    Separable { mean: f64, amp: f64 },
    Rotating { d1: f64, d2: f64, rot: f64 },
    Fourier { base: Mat2, modes: Vec<FourierMode> },
}

fn sym3(v: &[f64]) -> Mat2 {
    Mat2::new(v[0], v[1], v[1], v[2])
}

/// Spectral norm of a symmetric matrix.
fn sym_norm(m: &Mat2) -> f64 {
    let (lo, hi) = sym_eigenvalues(m);
    lo.abs().max(hi.abs())
}

impl Profile {
    /// Matrix at lattice coordinates `s ∈ [0,1)²` with oscillatory parts
    /// scaled by `t`.
    fn eval(&self, s: Vec2, t: f64) -> Mat2 {
        match self {
            Profile::Constant(a) => *a,
            Profile::Laminate { mean, amp } => {
                Mat2::identity() * (mean + t * amp * (TAU * s.x).sin())
            }
            Profile::Separable { mean, amp } => {
                Mat2::identity() * (mean + t * amp * (TAU * s.x).sin() * (TAU * s.y).sin())
            }
            Profile::Rotating { d1, d2, rot } => {
                let phi = t * rot * ((TAU * s.x).sin() + (TAU * s.y).cos());
                let (c, sn) = (phi.cos(), phi.sin());
                let r = Mat2::new(c, -sn, sn, c);
                r * Mat2::new(*d1, 0.0, 0.0, *d2) * r.transpose()
            }
            Profile::Fourier { base, modes } => {
                let mut a = *base;
                for m in modes {
                    let phase = TAU * (m.k[0] as f64 * s.x + m.k[1] as f64 * s.y);
                    let (sp, cp) = phase.sin_cos();
                    let osc = Mat2::new(m.cos[0], m.cos[1], m.cos[1], m.cos[2]) * cp
                        + Mat2::new(m.sin[0], m.sin[1], m.sin[1], m.sin[2]) * sp;
                    a += osc * t;
                }
                a
            }
        }
    }

    /// Certified eigenvalue bounds of `sym A` over all `s` at scale `t`.
    fn eigen_bounds(&self, t: f64) -> (f64, f64) {
        match self {
            Profile::Constant(a) => sym_eigenvalues(a),
            Profile::Laminate { mean, amp } | Profile::Separable { mean, amp } => {
                (mean - t * amp.abs(), mean + t * amp.abs())
            }
            Profile::Rotating { d1, d2, .. } => (d1.min(*d2), d1.max(*d2)),
            Profile::Fourier { base, modes } => {
                let (lo, hi) = sym_eigenvalues(base);
                let spread: f64 = modes
                    .iter()
                    .map(|m| {
                        let c = sym_norm(&sym3(&m.cos));
                        let s = sym_norm(&sym3(&m.sin));
                        (c * c + s * s).sqrt()
                    })
                    .sum();
                (lo - t * spread, hi + t * spread)
            }
        }
    }

    fn has_oscillation(&self) -> bool {
        match self {
            Profile::Constant(_) | Profile::Rotating { .. } => false,
            Profile::Laminate { amp, .. } | Profile::Separable { amp, .. } => *amp != 0.0,
            Profile::Fourier { modes, .. } => !modes.is_empty(),
        }
    }
}

fn lambda_of(bounds: (f64, f64)) -> f64 {
    if bounds.0 <= 0.0 {
        return bounds.0;
    }
    bounds.0.min(1.0 / bounds.1)
}

/// Immutable periodic coefficient field.
#[derive(Clone, Debug)]
pub struct CoefficientField {
    kind: FamilyKind,
    profile: Profile,
    oscillation_scale: f64,
    lattice: LatticeBasis,
    /// Normalizing frame `P`; evaluation returns `P⁻¹ A(P y) P⁻¹`.
    frame: Option<(Mat2, Mat2)>,
    eigen_bounds: (f64, f64),
    lambda_decl: f64,
    lipschitz_decl: f64,
}

impl CoefficientField {
    pub fn family(&self) -> FamilyKind {
        self.kind
    }

    pub fn lattice(&self) -> &LatticeBasis {
        &self.lattice
    }

    pub fn lambda_decl(&self) -> f64 {
        self.lambda_decl
    }

    pub fn lipschitz_decl(&self) -> f64 {
        self.lipschitz_decl
    }

    /// Certified bounds on the eigenvalues of `sym A(y)`.
    pub fn eigen_bounds(&self) -> (f64, f64) {
        self.eigen_bounds
    }

    /// Multiplier applied to the oscillatory part by amplitude projection
    /// (1 when no projection was needed).
    pub fn oscillation_scale(&self) -> f64 {
        self.oscillation_scale
    }

    pub fn is_constant(&self) -> bool {
        !self.profile.has_oscillation() && !matches!(self.profile, Profile::Rotating { .. })
    }

    pub fn frame(&self) -> Option<Mat2> {
        self.frame.map(|(p, _)| p)
    }

    pub fn is_symmetric(&self) -> bool {
        // Every built-in profile produces symmetric matrices.
        true
    }

    /// Evaluates `A(y)` at a physical point.
    pub fn eval(&self, y: Vec2) -> Mat2 {
        let s = self.lattice.to_lattice(y);
        let s = Vec2::new(s.x.rem_euclid(1.0), s.y.rem_euclid(1.0));
        let a = self.profile.eval(s, self.oscillation_scale);
        match &self.frame {
            Some((_, p_inv)) => p_inv * a * p_inv,
            None => a,
        }
    }

    /// Pushed-forward field `A′(z) = P⁻¹ A(P z) P⁻¹` on the lattice `P⁻¹Γ`.
    pub fn push_forward(&self, p: &Mat2) -> Result<CoefficientField> {
        let p_inv = p
            .try_inverse()
            .ok_or_else(|| Error::InvalidParameter("singular change of variables".into()))?;
        let lattice = self.lattice.transformed(&p_inv)?;
        let (total, total_inv) = match &self.frame {
            Some((q, q_inv)) => (q * p, p_inv * q_inv),
            None => (*p, p_inv),
        };
        // ⟨P⁻¹AP⁻¹ξ, ξ⟩ = ⟨A η, η⟩ with η = P⁻¹ξ.
        let sv = p_inv.singular_values();
        let (smin, smax) = (sv.min(), sv.max());
        let eigen_bounds = (
            self.eigen_bounds.0 * smin * smin,
            self.eigen_bounds.1 * smax * smax,
        );
        let mut field = CoefficientField {
            kind: self.kind,
            profile: self.profile.clone(),
            oscillation_scale: self.oscillation_scale,
            lattice,
            frame: Some((total, total_inv)),
            eigen_bounds,
            lambda_decl: lambda_of(eigen_bounds),
            lipschitz_decl: 0.0,
        };
        field.lipschitz_decl = declared_lipschitz(&field);
        Ok(field)
    }
}

fn declared_lipschitz(field: &CoefficientField) -> f64 {
    1.1 * estimate_lipschitz(field, 64 * 64)
}

fn parse_profile(spec: &FamilySpec, seed: u64) -> Result<Profile> {
    let p = &spec.params;
    if p.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("parameters must be finite".into()));
    }
    let want = |n: usize| -> Result<()> {
        if p.len() != n {
            return Err(Error::InvalidParameter(format!(
                "family {} expects {n} parameters, got {}",
                spec.family.name(),
                p.len()
            )));
        }
        Ok(())
    };
    Ok(match spec.family {
        FamilyKind::Constant => match p.len() {
            1 => Profile::Constant(Mat2::identity() * p[0]),
            3 => Profile::Constant(sym3(p)),
            n => {
                return Err(Error::InvalidParameter(format!(
                    "constant family expects 1 or 3 parameters, got {n}"
                )))
            }
        },
        FamilyKind::Laminate => {
            want(2)?;
            Profile::Laminate {
                mean: p[0],
                amp: p[1],
            }
        }
        FamilyKind::SeparableScalar => {
            want(2)?;
            Profile::Separable {
                mean: p[0],
                amp: p[1],
            }
        }
        FamilyKind::RotatingAnisotropic => {
            want(3)?;
            Profile::Rotating {
                d1: p[0],
                d2: p[1],
                rot: p[2],
            }
        }
        FamilyKind::FourierGeneral => {
            if p.is_empty() {
                random_fourier(seed)
            } else {
                if p.len() < 3 || (p.len() - 3) % 8 != 0 {
                    return Err(Error::InvalidParameter(
                        "fourier-general expects 3 + 8k parameters".into(),
                    ));
                }
                let mut modes = Vec::new();
                for chunk in p[3..].chunks(8) {
                    let k = [chunk[0], chunk[1]];
                    if k.iter().any(|v| v.fract() != 0.0 || v.abs() > 64.0) {
                        return Err(Error::InvalidParameter(
                            "fourier wave numbers must be small integers".into(),
                        ));
                    }
                    if k == [0.0, 0.0] {
                        return Err(Error::InvalidParameter(
                            "fourier mode (0, 0) belongs in the base matrix".into(),
                        ));
                    }
                    modes.push(FourierMode {
                        k: [k[0] as i32, k[1] as i32],
                        cos: [chunk[2], chunk[3], chunk[4]],
                        sin: [chunk[5], chunk[6], chunk[7]],
                    });
                }
                Profile::Fourier {
                    base: sym3(&p[..3]),
                    modes,
                }
            }
        }
    })
}

fn random_fourier(seed: u64) -> Profile {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut modes = Vec::new();
    while modes.len() < 3 {
        let k = [rng.gen_range(-2..=2), rng.gen_range(-2..=2)];
        if k == [0, 0] {
            continue;
        }
        let mut coef = || [0; 3].map(|_: i32| rng.gen_range(-0.3..0.3));
        let cos = coef();
        let sin = coef();
        modes.push(FourierMode { k, cos, sin });
    }
    Profile::Fourier {
        base: Mat2::identity() * 2.0,
        modes,
    }
}

/// Builds a field from its family specification.
pub fn build_family(spec: &FamilySpec) -> Result<CoefficientField> {
    build_family_seeded(spec, 0)
}

/// As [`build_family`], with the seed used when a family draws random
/// parameters.
pub fn build_family_seeded(spec: &FamilySpec, seed: u64) -> Result<CoefficientField> {
    let lattice = LatticeBasis::new(spec.lattice_b1.into(), spec.lattice_b2.into())?;
    let profile = parse_profile(spec, seed)?;
    let target = spec.lambda.unwrap_or(MIN_LAMBDA);
    if !(target >= MIN_LAMBDA && target <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "lambda must lie in [{MIN_LAMBDA}, 1], got {target}"
        )));
    }

    let mut scale = 1.0;
    let mut bounds = profile.eigen_bounds(1.0);
    if lambda_of(bounds) < target {
        let mean_bounds = profile.eigen_bounds(0.0);
        if !profile.has_oscillation() || lambda_of(mean_bounds) < target {
            return Err(Error::NotElliptic {
                min_lambda: target,
                reason: format!(
                    "eigenvalue bounds [{:.4}, {:.4}] of the non-oscillatory part",
                    mean_bounds.0, mean_bounds.1
                ),
            });
        }
        // Bounds are affine in the scale: lo(t) = lo0 - t d, hi(t) = hi0 + t d.
        let spread = mean_bounds.0 - profile.eigen_bounds(1.0).0;
        let t_lo = (mean_bounds.0 - target) / spread;
        let t_hi = (1.0 / target - mean_bounds.1) / spread;
        scale = t_lo.min(t_hi).clamp(0.0, 1.0) * PROJECTION_SAFETY;
        bounds = profile.eigen_bounds(scale);
    }
    let mut field = CoefficientField {
        kind: spec.family,
        profile,
        oscillation_scale: scale,
        lattice,
        frame: None,
        eigen_bounds: bounds,
        lambda_decl: lambda_of(bounds),
        lipschitz_decl: 0.0,
    };
    if scale < 1.0 {
        // Dense-sample confirmation of the projected field.
        let (lo, hi) = sampled_eigen_range(&field, 256);
        if lambda_of((lo, hi)) < target {
            return Err(Error::NotElliptic {
                min_lambda: target,
                reason: format!("projected field samples eigenvalues in [{lo:.4}, {hi:.4}]"),
            });
        }
    }
    field.lipschitz_decl = declared_lipschitz(&field);
    Ok(field)
}

fn lattice_grid(field: &CoefficientField, m: usize) -> impl Iterator<Item = Vec2> + '_ {
    (0..m).flat_map(move |j| {
        (0..m).map(move |i| {
            field
                .lattice
                .to_physical(Vec2::new(i as f64 / m as f64, j as f64 / m as f64))
        })
    })
}

fn sampled_eigen_range(field: &CoefficientField, m: usize) -> (f64, f64) {
    lattice_grid(field, m).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), y| {
        let (a, b) = sym_eigenvalues(&sym(&field.eval(y)));
        (lo.min(a), hi.max(b))
    })
}

/// Sampled `(λ_est, Λ_est)`: extreme eigenvalues of `sym A` over a uniform
/// lattice-coordinate grid of about `n_samples` points.
///
/// Fails when `λ_est < 0.9 λ_decl` or `Λ_est > 1 / (0.9 λ_decl)`.
pub fn validate_ellipticity(field: &CoefficientField, n_samples: usize) -> Result<(f64, f64)> {
    if n_samples < 16 * 16 {
        return Err(Error::InvalidParameter(
            "ellipticity validation needs at least 16² samples".into(),
        ));
    }
    let m = (n_samples as f64).sqrt().floor() as usize;
    let (lo, hi) = sampled_eigen_range(field, m);
    let decl = field.lambda_decl;
    if lo < 0.9 * decl || hi > 1.0 / (0.9 * decl) {
        return Err(Error::NotElliptic {
            min_lambda: decl,
            reason: format!("sampled eigenvalues in [{lo}, {hi}]"),
        });
    }
    Ok((lo, hi))
}

/// Largest difference quotient `‖A(x) − A(y)‖_F / |x − y|` over adjacent
/// pairs of a lattice-coordinate grid.
pub fn estimate_lipschitz(field: &CoefficientField, n_samples: usize) -> f64 {
    let m = ((n_samples as f64).sqrt().floor() as usize).max(2);
    let pt = |i: usize, j: usize| {
        field
            .lattice
            .to_physical(Vec2::new(i as f64 / m as f64, j as f64 / m as f64))
    };
    let mut grid = Vec::with_capacity((m + 1) * (m + 1));
    for j in 0..=m {
        for i in 0..=m {
            let y = pt(i, j);
            grid.push((y, field.eval(y)));
        }
    }
    let at = |i: usize, j: usize| &grid[i + (m + 1) * j];
    let mut best: f64 = 0.0;
    for j in 0..=m {
        for i in 0..=m {
            let (y0, a0) = at(i, j);
            let mut consider = |(y1, a1): &(Vec2, Mat2)| {
                let d = (y1 - y0).norm();
                if d > 0.0 {
                    best = best.max(frobenius(&(a1 - a0)) / d);
                }
            };
            if i < m {
                consider(at(i + 1, j));
            }
            if j < m {
                consider(at(i, j + 1));
            }
            if i < m && j < m {
                consider(at(i + 1, j + 1));
            }
        }
    }
    best
}

/// Maximum of `‖A(y + b_i) − A(y)‖_F` over `n_samples` deterministic
/// pseudo-random points and both basis vectors.
pub fn check_periodicity(
    field: &CoefficientField,
    lattice: &LatticeBasis,
    n_samples: usize,
) -> Result<f64> {
    let same = (lattice.b1 - field.lattice.b1).norm() + (lattice.b2 - field.lattice.b2).norm();
    if same > 1e-12 * (1.0 + field.lattice.b1.norm() + field.lattice.b2.norm()) {
        return Err(Error::InvalidParameter(
            "lattice does not match the field's lattice".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut worst: f64 = 0.0;
    for _ in 0..n_samples {
        let y = Vec2::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
        let a = field.eval(y);
        for b in [lattice.b1, lattice.b2] {
            worst = worst.max(frobenius(&(field.eval(y + b) - a)));
        }
    }
    Ok(worst)
}

/// Closed-form `∫₀¹ dt / (mean + amp sin 2πt) = 1/√(mean² − amp²)`.
pub fn laminate_harmonic_mean(mean: f64, amp: f64) -> f64 {
    (mean * mean - amp * amp).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn laminate() -> CoefficientField {
        build_family(&FamilySpec::new(FamilyKind::Laminate, vec![2.0, 1.0])).unwrap()
    }

    #[test]
    fn identity_constant() {
        let f = build_family(&FamilySpec::new(FamilyKind::Constant, vec![1.0])).unwrap();
        assert_eq!(f.lambda_decl(), 1.0);
        assert_eq!(f.eval(Vec2::new(0.3, 0.7)), Mat2::identity());
        assert_eq!(validate_ellipticity(&f, 256).unwrap(), (1.0, 1.0));
        assert_eq!(estimate_lipschitz(&f, 32 * 32), 0.0);
        assert_eq!(check_periodicity(&f, f.lattice(), 64).unwrap(), 0.0);
    }

    #[test]
    fn laminate_declared_lambda() {
        // a ranges over [1, 3]; λ = min(1, 1/3).
        let f = laminate();
        assert!((f.lambda_decl() - 1.0 / 3.0).abs() < 1e-15);
        // Dense-sample oracle for min/max of a.
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for k in 0..100_000 {
            let a = 2.0 + (TAU * k as f64 / 100_000.0).sin();
            lo = lo.min(a);
            hi = hi.max(a);
        }
        assert!((lo - 1.0).abs() < 1e-9 && (hi - 3.0).abs() < 1e-9);
        let (l, u) = validate_ellipticity(&f, 64 * 64).unwrap();
        assert!((l - 1.0).abs() < 1e-6 && (u - 3.0).abs() < 1e-6);
    }

    #[test]
    fn separable_declared_lambda() {
        let f = build_family(&FamilySpec::new(FamilyKind::SeparableScalar, vec![2.0, 0.5]))
            .unwrap();
        assert!((f.lambda_decl() - 0.4).abs() < 1e-15);
    }

    #[test]
    fn rotating_eigenvalues_are_rotation_invariant() {
        let f = build_family(&FamilySpec::new(
            FamilyKind::RotatingAnisotropic,
            vec![1.0, 2.0, 0.7],
        ))
        .unwrap();
        let (l, u) = validate_ellipticity(&f, 32 * 32).unwrap();
        assert!((l - 1.0).abs() < 1e-6 && (u - 2.0).abs() < 1e-6);
    }

    #[test]
    fn lipschitz_estimates() {
        let m = estimate_lipschitz(&laminate(), 64 * 64);
        let exact = TAU * 2f64.sqrt();
        assert!((m - exact).abs() / exact < 0.01, "{m} vs {exact}");

        let f = build_family(&FamilySpec::new(FamilyKind::SeparableScalar, vec![2.0, 0.5]))
            .unwrap();
        let m = estimate_lipschitz(&f, 64 * 64);
        let exact = PI * 2f64.sqrt();
        assert!((m - exact).abs() / exact < 0.01, "{m} vs {exact}");
    }

    #[test]
    fn fourier_on_parallelogram_is_periodic() {
        let spec = FamilySpec::default_for(FamilyKind::FourierGeneral);
        let f = build_family(&spec).unwrap();
        assert_eq!(f.lattice().b2, Vec2::new(0.5, 1.0));
        let res = check_periodicity(&f, f.lattice(), 1024).unwrap();
        assert!(res <= 1e-12, "residual {res}");
    }

    #[test]
    fn projection_shrinks_amplitude() {
        let mut spec = FamilySpec::new(FamilyKind::Laminate, vec![1.0, 0.99]);
        let f = build_family(&spec).unwrap();
        assert!(f.oscillation_scale() < 1.0);
        assert!(f.lambda_decl() >= MIN_LAMBDA);
        validate_ellipticity(&f, 256 * 256).unwrap();

        spec.lambda = Some(0.4);
        let f = build_family(&spec).unwrap();
        assert!(f.lambda_decl() >= 0.4);
    }

    #[test]
    fn rejections() {
        let bad = FamilySpec::new(FamilyKind::Constant, vec![0.01]);
        assert!(matches!(build_family(&bad), Err(Error::NotElliptic { .. })));
        let degenerate =
            FamilySpec::new(FamilyKind::Laminate, vec![2.0, 1.0]).with_lattice([1.0, 1.0], [2.0, 2.0]);
        assert!(matches!(
            build_family(&degenerate),
            Err(Error::DegenerateLattice { .. })
        ));
        let nan = FamilySpec::new(FamilyKind::Laminate, vec![f64::NAN, 1.0]);
        assert!(build_family(&nan).is_err());
    }

    #[test]
    fn random_fourier_is_seeded() {
        let spec = FamilySpec::new(FamilyKind::FourierGeneral, vec![]);
        let a = build_family_seeded(&spec, 7).unwrap();
        let b = build_family_seeded(&spec, 7).unwrap();
        let c = build_family_seeded(&spec, 8).unwrap();
        assert_eq!(a.profile, b.profile);
        assert_ne!(a.profile, c.profile);
    }

    #[test]
    fn all_defaults_build() {
        for kind in FamilyKind::ALL {
            let f = build_family(&FamilySpec::default_for(kind)).unwrap();
            validate_ellipticity(&f, 128 * 128).unwrap();
        }
    }

    proptest! {
        #[test]
        fn eigenvalues_within_declared_range(kind in 0usize..5, x in -3.0f64..3.0, y in -3.0f64..3.0) {
            let f = build_family(&FamilySpec::default_for(FamilyKind::ALL[kind])).unwrap();
            let (lo, hi) = sym_eigenvalues(&sym(&f.eval(Vec2::new(x, y))));
            let l = f.lambda_decl();
            prop_assert!(lo >= l - 1e-12 && hi <= 1.0 / l + 1e-12);
        }

        #[test]
        fn periodic_under_lattice_shifts(kind in 0usize..5, x in -3.0f64..3.0, y in -3.0f64..3.0, m in -3i32..3, n in -3i32..3) {
            let f = build_family(&FamilySpec::default_for(FamilyKind::ALL[kind])).unwrap();
            let p = Vec2::new(x, y);
            let z = f.lattice().b1 * m as f64 + f.lattice().b2 * n as f64;
            prop_assert!(frobenius(&(f.eval(p + z) - f.eval(p))) <= 1e-12);
        }

        #[test]
        fn build_is_deterministic(kind in 0usize..5) {
            let spec = FamilySpec::default_for(FamilyKind::ALL[kind]);
            let a = build_family(&spec).unwrap();
            let b = build_family(&spec).unwrap();
            prop_assert_eq!(a.profile, b.profile);
            prop_assert_eq!(a.oscillation_scale.to_bits(), b.oscillation_scale.to_bits());
            prop_assert_eq!(a.lipschitz_decl.to_bits(), b.lipschitz_decl.to_bits());
        }
    }
}
