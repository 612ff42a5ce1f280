use serde::{Deserialize, Serialize};

use super::run::{prepare_field, rung_mesh_size};
use super::ExperimentConfig;
use crate::critical::{detect_critical_points, DetectOptions};
use crate::doubling::{profile, Verdict};
use crate::error::{Error, Result};
use crate::geom::{Disk, Vec2};
use crate::pde::DiskProblem;

pub const SCALING_TOLERANCE: f64 = 1e-3;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScaledRun {
    pub epsilon: f64,
    pub radius: f64,
    pub h: f64,
    pub count: usize,
    pub degree_sum: i32,
    pub profile_radii: Vec<f64>,
    pub profile_values: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScalingPair {
    pub base: ScaledRun,
    pub scaled: ScaledRun,
    pub counts_equal: bool,
    pub max_profile_difference: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScalingReport {
    pub theta: u32,
    pub pairs: Vec<ScalingPair>,
    pub verdict: Verdict,
}

fn run_at(cfg: &ExperimentConfig, field: &crate::coeff::CoefficientField, epsilon: f64, radius: f64, h: f64, r_top: f64) -> Result<ScaledRun> {
    let g = cfg.boundary.data();
    let sol = DiskProblem::new(field, epsilon, radius, h)?.solve(&g)?;
    let report = detect_critical_points(&sol, &Disk::centered(radius / 4.0), &DetectOptions::default())?;
    let prof = profile(&sol, Vec2::zeros(), r_top, cfg.checks.profile_rungs)?;
    Ok(ScaledRun {
        epsilon,
        radius,
        h,
        count: report.count,
        degree_sum: report.degree_sum,
        profile_radii: prof.radii,
        profile_values: prof.values,
    })
}

/// Pairs every rung `(ε, R, h)` with `(ε/θ, R/θ, h/θ)`. Boundary data are
/// unchanged since `v(x) = u(θx)` has the same angular trace. Counts must
/// agree exactly and doubling ladders within `1e-3`.
pub fn scaling_invariance_suite(cfg: &ExperimentConfig, theta: u32) -> Result<ScalingReport> {
    if theta != 2 && theta != 4 {
        return Err(Error::InvalidParameter(format!("theta must be 2 or 4, got {theta}")));
    }
    cfg.validate()?;
    let prep = prepare_field(cfg)?;
    let t = theta as f64;
    let radius = cfg.boundary.radius;
    let mut pairs = Vec::new();
    for &eps in &cfg.sweep.epsilons {
        let h = rung_mesh_size(cfg, eps);
        let base = run_at(cfg, &prep.normalized, eps, radius, h, cfg.checks.radius)?;
        let scaled = run_at(cfg, &prep.normalized, eps / t, radius / t, h / t, cfg.checks.radius / t)?;
        let max_profile_difference = base
            .profile_values
            .iter()
            .zip(&scaled.profile_values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        pairs.push(ScalingPair {
            counts_equal: base.count == scaled.count && base.degree_sum == scaled.degree_sum,
            max_profile_difference,
            base,
            scaled,
        });
    }
    let ok = pairs
        .iter()
        .all(|p| p.counts_equal && p.max_profile_difference <= SCALING_TOLERANCE);
    Ok(ScalingReport {
        theta,
        pairs,
        verdict: if ok { Verdict::Satisfied } else { Verdict::Violated },
    })
}
