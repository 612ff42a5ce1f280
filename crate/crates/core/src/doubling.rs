//! Doubling indices `N*(u, x₀, r) = log₄(⨍_{∂B_r}(u−u(x₀))² / ⨍_{∂B_{r/2}}(u−u(x₀))²)`
//! and empirical checks of their persistence and reduction.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::Field;
use crate::geom::{Disk, Vec2};

pub const MIN_SAMPLES: usize = 512;
/// Floor radius in units of the oscillation scale.
pub const FLOOR_FACTOR: f64 = 4.0;
/// Deepest dyadic rung `r/2^j` visited by the persistence chain.
pub const PERSISTENCE_DEPTH: u32 = 6;

/// Smallest trusted radius `max(4ε, 2h)`; zero for closed forms.
pub fn floor_radius<F: Field + ?Sized>(u: &F) -> f64 {
    (FLOOR_FACTOR * u.oscillation_scale()).max(2.0 * u.resolution())
}

fn sample_count<F: Field + ?Sized>(u: &F, r: f64, m: usize) -> usize {
    let m = m.max(MIN_SAMPLES);
    let h = u.resolution();
    if h > 0.0 {
        m.max(8 * (std::f64::consts::TAU * r / h).ceil() as usize)
    } else {
        m
    }
}

fn check_circle<F: Field + ?Sized>(u: &F, x0: Vec2, r: f64) -> Result<()> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::Geometry(format!("circle radius must be positive, got {r}")));
    }
    if !u.domain().contains_disk(&Disk::new(x0, r), 0.0) {
        return Err(Error::Geometry(format!(
            "circle of radius {r} around ({}, {}) leaves the domain",
            x0.x, x0.y
        )));
    }
    Ok(())
}

fn center_value<F: Field + ?Sized>(u: &F, x0: Vec2) -> Result<f64> {
    u.value(x0)
        .ok_or_else(|| Error::Geometry(format!("center ({}, {}) outside the domain", x0.x, x0.y)))
}

fn mean_square_about<F: Field + ?Sized>(u: &F, x0: Vec2, u0: f64, r: f64, m: usize) -> Result<f64> {
    check_circle(u, x0, r)?;
    let m = sample_count(u, r, m);
    let mut sum = 0.0;
    let mut scale = u0.abs();
    for k in 0..m {
        let th = std::f64::consts::TAU * k as f64 / m as f64;
        let p = x0 + Vec2::new(th.cos(), th.sin()) * r;
        let v = u
            .value(p)
            .ok_or_else(|| Error::Geometry(format!("circle point ({}, {}) not evaluable", p.x, p.y)))?;
        scale = scale.max(v.abs());
        sum += (v - u0) * (v - u0);
    }
    let mean = sum / m as f64;
    if !(mean > 1e-28 * scale * scale) {
        return Err(Error::DegenerateDenominator { value: mean, radius: r });
    }
    Ok(mean)
}

/// Trapezoidal mean of `(u − u(x₀))²` over `M` equispaced points of
/// `∂B(x₀, r)`; `M ≥ 512`, raised to `8⌈2πr/h⌉` for mesh fields.
pub fn circle_mean_square<F: Field + ?Sized>(u: &F, x0: Vec2, r: f64, m: usize) -> Result<f64> {
    let u0 = center_value(u, x0)?;
    mean_square_about(u, x0, u0, r, m)
}

pub fn doubling_index<F: Field + ?Sized>(u: &F, x0: Vec2, r: f64) -> Result<f64> {
    doubling_index_with(u, x0, r, MIN_SAMPLES)
}

pub fn doubling_index_with<F: Field + ?Sized>(u: &F, x0: Vec2, r: f64, m: usize) -> Result<f64> {
    let u0 = center_value(u, x0)?;
    let outer = mean_square_about(u, x0, u0, r, m)?;
    let inner = mean_square_about(u, x0, u0, 0.5 * r, m)?;
    Ok((outer / inner).ln() / 4f64.ln())
}

/// `log₄(⨍_{B(0,r)} u² / ⨍_{B(0,r/2)} u²)`, the growth exponent of the
/// solid doubling condition, by polar midpoint quadrature.
pub fn ball_growth_index<F: Field + ?Sized>(u: &F, r: f64) -> Result<f64> {
    let ball = |radius: f64| -> Result<f64> {
        check_circle(u, Vec2::zeros(), radius)?;
        let nr = 128;
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..nr {
            let rho = radius * (i as f64 + 0.5) / nr as f64;
            let m = sample_count(u, rho, MIN_SAMPLES);
            let mut s = 0.0;
            for k in 0..m {
                let th = std::f64::consts::TAU * k as f64 / m as f64;
                let v = u.value(Vec2::new(th.cos(), th.sin()) * rho).ok_or_else(|| {
                    Error::Geometry(format!("point at radius {rho} not evaluable"))
                })?;
                s += v * v;
            }
            num += rho * s / m as f64;
            den += rho;
        }
        let mean = num / den;
        if !(mean > 0.0) {
            return Err(Error::DegenerateDenominator { value: mean, radius });
        }
        Ok(mean)
    };
    Ok((ball(r)? / ball(0.5 * r)?).ln() / 4f64.ln())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DoublingProfile {
    pub x0: [f64; 2],
    /// `r_top / 2^k` for `k = 0..J`.
    pub radii: Vec<f64>,
    /// `N*` at each radius.
    pub values: Vec<f64>,
    /// Circle mean squares at `radii` followed by the one at `radii[J-1] / 2`.
    pub denominators: Vec<f64>,
    pub floor_radius: f64,
    /// False for rungs below the floor radius.
    pub reliable: Vec<bool>,
    /// Interpolated `u(x₀)` subtracted from every sample.
    pub center_value: f64,
}

/// `N*` on the dyadic ladder `r_top, r_top/2, …` with `rungs` entries.
pub fn profile<F: Field + ?Sized>(u: &F, x0: Vec2, r_top: f64, rungs: usize) -> Result<DoublingProfile> {
    if rungs == 0 {
        return Err(Error::InvalidParameter("profile needs at least one rung".into()));
    }
    let u0 = center_value(u, x0)?;
    let radii: Vec<f64> = (0..=rungs).map(|k| r_top / 2f64.powi(k as i32)).collect();
    let denominators = radii
        .par_iter()
        .map(|&r| mean_square_about(u, x0, u0, r, MIN_SAMPLES))
        .collect::<Result<Vec<f64>>>()?;
    let values = denominators
        .windows(2)
        .map(|w| (w[0] / w[1]).ln() / 4f64.ln())
        .collect();
    let floor = floor_radius(u);
    let radii: Vec<f64> = radii[..rungs].to_vec();
    Ok(DoublingProfile {
        x0: [x0.x, x0.y],
        reliable: radii.iter().map(|&r| r >= floor).collect(),
        radii,
        values,
        denominators,
        floor_radius: floor,
        center_value: u0,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Satisfied,
    Violated,
    NotApplicable,
    Unresolvable,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Satisfied => "satisfied",
            Verdict::Violated => "violated",
            Verdict::NotApplicable => "not-applicable",
            Verdict::Unresolvable => "unresolvable",
        }
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReductionParams {
    pub ell: u32,
    pub delta: f64,
    /// Cap `L ≥ ℓ` in the hypothesis `N*(r) ≤ L + 1`.
    pub cap: u32,
}

impl ReductionParams {
    pub fn new(ell: u32, delta: f64, cap: u32) -> Result<Self> {
        let p = ReductionParams { ell, delta, cap };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.ell == 0 || !(self.delta > 0.0 && self.delta <= 0.5) || self.cap < self.ell {
            return Err(Error::InvalidParameter(format!(
                "need l >= 1, 0 < delta <= 1/2, L >= l (got l = {}, delta = {}, L = {})",
                self.ell, self.delta, self.cap
            )));
        }
        Ok(())
    }
}

/// `δ r / (8ℓ)`.
pub fn reduction_radius(params: &ReductionParams, r: f64) -> f64 {
    params.delta * r / (8.0 * params.ell as f64)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Measurement {
    pub radius: f64,
    pub value: Option<f64>,
    pub bound: f64,
    pub holds: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CheckReport {
    pub kind: String,
    pub x0: [f64; 2],
    pub r: f64,
    pub params: ReductionParams,
    pub hypotheses: Vec<Measurement>,
    pub conclusions: Vec<Measurement>,
    pub verdict: Verdict,
    /// `min(bound − N*)` over the conclusions.
    pub slack: Option<f64>,
    pub floor_radius: f64,
    pub note: String,
}

fn measure<F: Field + ?Sized>(u: &F, x0: Vec2, radius: f64, bound: f64) -> Result<Measurement> {
    match doubling_index(u, x0, radius) {
        Ok(v) => Ok(Measurement {
            radius,
            value: Some(v),
            bound,
            holds: v <= bound,
        }),
        Err(Error::DegenerateDenominator { .. }) => Ok(Measurement {
            radius,
            value: None,
            bound,
            holds: false,
        }),
        Err(e) => Err(e),
    }
}

struct Draft {
    kind: &'static str,
    x0: Vec2,
    r: f64,
    params: ReductionParams,
    floor: f64,
}

impl Draft {
    fn finish(self, hypotheses: Vec<Measurement>, conclusions: Vec<Measurement>, verdict: Verdict, note: &str) -> CheckReport {
        let slack = conclusions
            .iter()
            .filter_map(|m| m.value.map(|v| m.bound - v))
            .reduce(f64::min);
        CheckReport {
            kind: self.kind.into(),
            x0: [self.x0.x, self.x0.y],
            r: self.r,
            params: self.params,
            hypotheses,
            conclusions,
            verdict,
            slack,
            floor_radius: self.floor,
            note: note.into(),
        }
    }
}

fn hypotheses<F: Field + ?Sized>(u: &F, x0: Vec2, r: f64, params: &ReductionParams, second: f64) -> Result<Vec<Measurement>> {
    Ok(vec![
        measure(u, x0, r, params.cap as f64 + 1.0)?,
        measure(u, x0, 0.5 * r, second)?,
    ])
}

/// Given `N*(r) ≤ L+1` and `N*(r/2) ≤ ℓ+δ`, checks `N*(r/2^j) ≤ ℓ+δ` for
/// `j = 2, 3, …` down to the floor radius.
pub fn check_persistence<F: Field + ?Sized>(u: &F, x0: Vec2, r: f64, params: &ReductionParams) -> Result<CheckReport> {
    params.validate()?;
    let bound = params.ell as f64 + params.delta;
    let draft = Draft {
        kind: "persistence",
        x0,
        r,
        params: *params,
        floor: floor_radius(u),
    };
    let hyp = hypotheses(u, x0, r, params, bound)?;
    if !hyp.iter().all(|m| m.holds) {
        return Ok(draft.finish(hyp, vec![], Verdict::NotApplicable, "hypotheses not met"));
    }
    let rungs: Vec<f64> = (2..=PERSISTENCE_DEPTH)
        .map(|j| r / 2f64.powi(j as i32))
        .filter(|&rho| rho >= draft.floor)
        .collect();
    if rungs.is_empty() {
        return Ok(draft.finish(hyp, vec![], Verdict::Unresolvable, "r/4 is below the floor radius"));
    }
    let conclusions = rungs
        .par_iter()
        .map(|&rho| measure(u, x0, rho, bound))
        .collect::<Result<Vec<_>>>()?;
    let verdict = if conclusions.iter().all(|m| m.holds) {
        Verdict::Satisfied
    } else {
        Verdict::Violated
    };
    Ok(draft.finish(hyp, conclusions, verdict, ""))
}

/// Given `N*(r) ≤ L+1` and `N*(r/2) ≤ ℓ−δ`, checks `N*(δr/(8ℓ)) ≤ ℓ−1+δ`.
pub fn check_reduction<F: Field + ?Sized>(u: &F, x0: Vec2, r: f64, params: &ReductionParams) -> Result<CheckReport> {
    params.validate()?;
    let ell = params.ell as f64;
    let draft = Draft {
        kind: "reduction",
        x0,
        r,
        params: *params,
        floor: floor_radius(u),
    };
    let hyp = hypotheses(u, x0, r, params, ell - params.delta)?;
    if !hyp.iter().all(|m| m.holds) {
        return Ok(draft.finish(hyp, vec![], Verdict::NotApplicable, "hypotheses not met"));
    }
    let rho = reduction_radius(params, r);
    if rho < draft.floor {
        let note = format!("reduction radius {rho} is below the floor radius {}", draft.floor);
        return Ok(draft.finish(hyp, vec![], Verdict::Unresolvable, &note));
    }
    let m = measure(u, x0, rho, ell - 1.0 + params.delta)?;
    let verdict = if m.holds { Verdict::Satisfied } else { Verdict::Violated };
    Ok(draft.finish(hyp, vec![m], verdict, ""))
}
