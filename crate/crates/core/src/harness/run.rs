use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ExperimentConfig;
use crate::cellsolve::{normalize, solve_cell_problem, CorrectorSolution, NormalizingTransform};
use crate::coeff::{build_family_seeded, validate_ellipticity, CoefficientField};
use crate::critical::{check_low_index_noncritical, detect_critical_points, DetectOptions};
use crate::doubling::{ball_growth_index, check_persistence, check_reduction, profile, ReductionParams, Verdict};
use crate::error::{Error, Result};
use crate::geom::{Disk, Mat2, Vec2};
use crate::pde::{convergence_row, ConvergenceTable, DiskProblem, EpsProblem};

pub const REPORT_NOTE: &str = "Empirical sweep over a curated coefficient family; the suprema over all \
admissible coefficients and solutions are not computed, only sampled.";

/// Coefficient field with its correctors before and after normalization.
pub struct PreparedField {
    pub raw: CoefficientField,
    pub corrector: CorrectorSolution,
    pub transform: NormalizingTransform,
    pub normalized: CoefficientField,
    pub normalized_corrector: CorrectorSolution,
}

pub fn prepare_field(cfg: &ExperimentConfig) -> Result<PreparedField> {
    let raw = build_family_seeded(&cfg.coefficient, cfg.sweep.seed)?;
    validate_ellipticity(&raw, 64 * 64)?;
    let corrector = solve_cell_problem(&raw, cfg.sweep.cell_n)?;
    if corrector.mu_min <= 0.0 {
        return Err(Error::InvertibilityViolation {
            mu_min: corrector.mu_min,
            n: cfg.sweep.cell_n,
        });
    }
    let (transform, normalized) = normalize(&corrector, &raw)?;
    let normalized_corrector = solve_cell_problem(&normalized, cfg.sweep.cell_n)?;
    Ok(PreparedField {
        raw,
        corrector,
        transform,
        normalized,
        normalized_corrector,
    })
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct EpsRow {
    pub config_hash: String,
    pub epsilon: f64,
    pub h: f64,
    pub nodes: usize,
    pub triangles: usize,
    pub h_max: f64,
    pub residual: f64,
    pub iterations: usize,
    pub max_principle_excess: f64,
    pub mu_min: f64,
    /// `log₄(⨍_{B_R} u² / ⨍_{B_{R/2}} u²)`.
    pub growth_index: Option<f64>,
    pub profile_radii: Vec<f64>,
    pub profile_values: Vec<f64>,
    pub profile_reliable: Vec<bool>,
    pub floor_radius: f64,
    pub count_radius: f64,
    pub critical_count: Option<usize>,
    pub degree_sum: Option<i32>,
    pub boundary_winding: Option<i32>,
    pub closure: Option<bool>,
    pub sup_u_error: Option<f64>,
    pub sup_grad_error: Option<f64>,
    pub sup_grad_error_recovered: Option<f64>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerdictEntry {
    pub check: String,
    pub epsilon: Option<f64>,
    pub verdict: Verdict,
    pub slack: Option<f64>,
    pub note: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ResultRecord {
    pub config_hash: String,
    pub label: String,
    pub note: String,
    pub config: ExperimentConfig,
    pub mu_min: f64,
    pub a_hat: [[f64; 2]; 2],
    pub a_hat_normalized: [[f64; 2]; 2],
    pub normalizing_matrix: [[f64; 2]; 2],
    pub rows: Vec<EpsRow>,
    pub convergence: Option<ConvergenceTable>,
    pub verdicts: Vec<VerdictEntry>,
    /// Wall-clock seconds; written to `timings.json`, not `results.json`.
    #[serde(skip)]
    pub timings: Vec<(String, f64)>,
}

impl ResultRecord {
    pub fn any_violated(&self) -> bool {
        self.verdicts.iter().any(|v| v.verdict == Verdict::Violated)
    }

    pub fn verdicts_for(&self, check: &str) -> impl Iterator<Item = &VerdictEntry> {
        let check = check.to_string();
        self.verdicts.iter().filter(move |v| v.check == check)
    }
}

fn mat(m: &Mat2) -> [[f64; 2]; 2] {
    [[m[(0, 0)], m[(0, 1)]], [m[(1, 0)], m[(1, 1)]]]
}

/// Mesh size of a rung: the configured override or `min(ε/8, 1/64)`.
pub(crate) fn rung_mesh_size(cfg: &ExperimentConfig, epsilon: f64) -> f64 {
    cfg.sweep.h.unwrap_or_else(|| crate::pde::default_mesh_size(epsilon))
}

struct RungOutput {
    row: EpsRow,
    verdicts: Vec<VerdictEntry>,
    seconds: f64,
}

fn entry(check: &str, epsilon: f64, verdict: Verdict, slack: Option<f64>, note: impl Into<String>) -> VerdictEntry {
    VerdictEntry {
        check: check.into(),
        epsilon: Some(epsilon),
        verdict,
        slack,
        note: note.into(),
    }
}

fn requested_checks(cfg: &ExperimentConfig) -> Vec<&'static str> {
    let c = &cfg.checks;
    [
        (c.persistence, "persistence"),
        (c.reduction, "reduction"),
        (c.low_index, "low-index"),
        (c.count, "count"),
    ]
    .into_iter()
    .filter(|(on, _)| *on)
    .map(|(_, name)| name)
    .collect()
}

fn run_rung(cfg: &ExperimentConfig, prep: &PreparedField, hash: &str, epsilon: f64) -> RungOutput {
    let start = Instant::now();
    let mut row = EpsRow {
        config_hash: hash.into(),
        epsilon,
        h: rung_mesh_size(cfg, epsilon),
        mu_min: prep.corrector.mu_min,
        ..Default::default()
    };
    let mut verdicts = Vec::new();
    if let Err(e) = rung_body(cfg, prep, epsilon, &mut row, &mut verdicts) {
        row.error = Some(e.to_string());
        let done: Vec<String> = verdicts.iter().map(|v| v.check.clone()).collect();
        for check in requested_checks(cfg) {
            if !done.iter().any(|c| c == check) {
                verdicts.push(entry(check, epsilon, Verdict::Unresolvable, None, format!("stage error: {e}")));
            }
        }
    }
    RungOutput {
        row,
        verdicts,
        seconds: start.elapsed().as_secs_f64(),
    }
}

fn rung_body(
    cfg: &ExperimentConfig,
    prep: &PreparedField,
    epsilon: f64,
    row: &mut EpsRow,
    verdicts: &mut Vec<VerdictEntry>,
) -> Result<()> {
    let radius = cfg.boundary.radius;
    let g = cfg.boundary.data();
    let mut problem = EpsProblem::new(prep.normalized.clone(), epsilon, radius, g.clone());
    problem.h = Some(row.h);
    problem.validate()?;
    let dp = DiskProblem::new(&prep.normalized, epsilon, radius, row.h)?;
    let sol = dp.solve(&g)?;
    drop(dp);
    let stats = &sol.info.mesh;
    row.nodes = stats.nodes;
    row.triangles = stats.triangles;
    row.h_max = stats.h_max;
    row.residual = sol.info.residual;
    row.iterations = sol.info.iterations;
    row.max_principle_excess = sol.info.max_principle_excess;
    row.growth_index = Some(ball_growth_index(&sol, radius)?);

    let checks = &cfg.checks;
    let origin = Vec2::zeros();
    let prof = profile(&sol, origin, checks.radius, checks.profile_rungs)?;
    row.profile_radii = prof.radii;
    row.profile_values = prof.values;
    row.profile_reliable = prof.reliable;
    row.floor_radius = prof.floor_radius;

    if checks.convergence {
        let conv = convergence_row(&problem, &sol, Some(&prep.normalized_corrector));
        row.sup_u_error = Some(conv.sup_u_error);
        row.sup_grad_error = Some(conv.sup_grad_error);
        row.sup_grad_error_recovered = Some(conv.sup_grad_error_recovered);
    }
    if checks.count {
        row.count_radius = radius / 4.0;
        let report = detect_critical_points(&sol, &Disk::centered(row.count_radius), &DetectOptions::default())?;
        row.critical_count = Some(report.count);
        row.degree_sum = Some(report.degree_sum);
        row.boundary_winding = Some(report.boundary_winding);
        row.closure = Some(report.consistent);
        verdicts.push(if report.consistent {
            entry("count", epsilon, Verdict::Satisfied, None, format!("{} critical points", report.count))
        } else {
            entry(
                "count",
                epsilon,
                Verdict::Unresolvable,
                None,
                format!(
                    "closure failed: degree sum {} vs boundary winding {}",
                    report.degree_sum, report.boundary_winding
                ),
            )
        });
    }
    if checks.persistence {
        let params = ReductionParams::new(checks.ell, checks.delta0, checks.cap)?;
        let rep = check_persistence(&sol, origin, checks.radius, &params)?;
        verdicts.push(entry("persistence", epsilon, rep.verdict, rep.slack, rep.note));
    }
    if checks.reduction {
        let params = ReductionParams::new(checks.ell, checks.delta1, checks.cap)?;
        let rep = check_reduction(&sol, origin, checks.radius, &params)?;
        verdicts.push(entry("reduction", epsilon, rep.verdict, rep.slack, rep.note));
    }
    if checks.low_index {
        let rep = check_low_index_noncritical(&sol, origin, &DetectOptions::default())?;
        let note = format!("N*(0, 1/2) = {:.6}", rep.n_star);
        verdicts.push(entry("low-index", epsilon, rep.verdict, None, note));
    }
    Ok(())
}

/// Runs the full pipeline: cell solve, normalization, and every ε rung
/// with the configured checks. Rung failures are recorded, not fatal.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ResultRecord> {
    cfg.validate()?;
    let hash = cfg.hash();
    let t0 = Instant::now();
    let prep = prepare_field(cfg)?;
    let cell_seconds = t0.elapsed().as_secs_f64();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.sweep.workers)
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    let outputs: Vec<RungOutput> = pool.install(|| {
        cfg.sweep
            .epsilons
            .par_iter()
            .map(|&eps| run_rung(cfg, &prep, &hash, eps))
            .collect()
    });

    let mut rows = Vec::new();
    let mut verdicts = Vec::new();
    let mut timings = vec![("cell".to_string(), cell_seconds)];
    for out in outputs {
        timings.push((format!("epsilon={}", out.row.epsilon), out.seconds));
        rows.push(out.row);
        verdicts.extend(out.verdicts);
    }

    let mut convergence = None;
    if cfg.checks.convergence {
        let conv_rows: Vec<_> = rows
            .iter()
            .filter_map(|r| {
                Some(crate::pde::ConvergenceRow {
                    epsilon: r.epsilon,
                    h: r.h,
                    sup_u_error: r.sup_u_error?,
                    sup_grad_error: r.sup_grad_error?,
                    sup_grad_error_recovered: r.sup_grad_error_recovered?,
                })
            })
            .collect();
        let (verdict, note) = if conv_rows.len() < 2 {
            (Verdict::NotApplicable, "fewer than two solved rungs".to_string())
        } else {
            let table = ConvergenceTable::new(conv_rows);
            let v = if table.degradations.is_empty() {
                (Verdict::Satisfied, "no degradation above 10%".to_string())
            } else {
                (
                    Verdict::Unresolvable,
                    format!("errors grow by more than 10% after rungs {:?}; asymptotic regime not reached", table.degradations),
                )
            };
            convergence = Some(table);
            v
        };
        verdicts.push(VerdictEntry {
            check: "convergence".into(),
            epsilon: None,
            verdict,
            slack: None,
            note,
        });
    }

    Ok(ResultRecord {
        config_hash: hash,
        label: cfg.label(),
        note: REPORT_NOTE.into(),
        config: cfg.clone(),
        mu_min: prep.corrector.mu_min,
        a_hat: mat(&prep.corrector.a_hat),
        a_hat_normalized: mat(&prep.normalized_corrector.a_hat),
        normalizing_matrix: mat(&prep.transform.p),
        rows,
        convergence,
        verdicts,
        timings,
    })
}

/// Exclusive ownership of an output directory for the life of the guard.
pub struct OutputLock {
    path: PathBuf,
}

impl OutputLock {
    pub fn acquire(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        let path = dir.join(".oscilab.lock");
        match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(OutputLock { path }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(Error::Config(format!(
                "output directory {} is locked by another run",
                dir.display()
            ))),
            Err(e) => Err(e.into()),
        }
    }
}

impl Drop for OutputLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

fn join_f64(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:e}")).collect::<Vec<_>>().join(";")
}

fn opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map(|x| x.to_string()).unwrap_or_default()
}

/// Writes `results.json`, `results.csv` and `timings.json` into `dir`.
pub fn write_outputs(record: &ResultRecord, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("results.json"), serde_json::to_string_pretty(record)? + "\n")?;
    let mut w = csv::Writer::from_path(dir.join("results.csv"))?;
    w.write_record([
        "config_hash",
        "label",
        "epsilon",
        "h",
        "nodes",
        "triangles",
        "residual",
        "iterations",
        "mu_min",
        "growth_index",
        "profile_radii",
        "profile_values",
        "floor_radius",
        "critical_count",
        "degree_sum",
        "boundary_winding",
        "closure",
        "sup_u_error",
        "sup_grad_error",
        "error",
    ])?;
    for r in &record.rows {
        w.write_record([
            r.config_hash.clone(),
            record.label.clone(),
            r.epsilon.to_string(),
            r.h.to_string(),
            r.nodes.to_string(),
            r.triangles.to_string(),
            format!("{:e}", r.residual),
            r.iterations.to_string(),
            r.mu_min.to_string(),
            opt(&r.growth_index),
            join_f64(&r.profile_radii),
            join_f64(&r.profile_values),
            r.floor_radius.to_string(),
            opt(&r.critical_count),
            opt(&r.degree_sum),
            opt(&r.boundary_winding),
            opt(&r.closure),
            opt(&r.sup_u_error),
            opt(&r.sup_grad_error),
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    let timings: serde_json::Map<String, serde_json::Value> = record
        .timings
        .iter()
        .map(|(k, v)| (k.clone(), serde_json::json!(v)))
        .collect();
    fs::write(dir.join("timings.json"), serde_json::to_string_pretty(&timings)?)?;
    Ok(())
}

/// Locks `dir`, runs the experiment and writes its outputs.
pub fn execute(cfg: &ExperimentConfig, dir: &Path) -> Result<ResultRecord> {
    let _lock = OutputLock::acquire(dir)?;
    let record = run_experiment(cfg)?;
    write_outputs(&record, dir)?;
    Ok(record)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeff::{FamilyKind, FamilySpec};
    use crate::pde::BoundaryData;

    fn small(family: FamilyKind, l: usize) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::new(FamilySpec::default_for(family), BoundaryData::cos(l), 1.0);
        cfg.sweep.epsilons = vec![0.25, 0.125];
        cfg.sweep.cell_n = 32;
        cfg.checks.radius = 0.5;
        cfg.checks.profile_rungs = 2;
        cfg
    }

    #[test]
    fn constant_configuration_matches_harmonic_oracle() {
        let cfg = small(FamilyKind::Constant, 2);
        let rec = run_experiment(&cfg).unwrap();
        assert_eq!(rec.rows.len(), 2);
        for r in &rec.rows {
            assert!(r.error.is_none(), "{:?}", r.error);
            assert_eq!(r.critical_count, Some(1));
            assert_eq!(r.degree_sum, Some(-1));
            assert!(r.profile_values.iter().all(|v| (v - 2.0).abs() < 1e-3));
        }
        assert!(!rec.any_violated());
        for check in ["persistence", "reduction", "low-index", "count", "convergence"] {
            assert!(rec.verdicts_for(check).count() >= 1, "{check} missing");
        }
    }

    #[test]
    fn outputs_are_deterministic_and_locked() {
        let cfg = small(FamilyKind::Laminate, 1);
        let dir = tempfile::tempdir().unwrap();
        execute(&cfg, dir.path()).unwrap();
        let first = fs::read(dir.path().join("results.json")).unwrap();
        execute(&cfg, dir.path()).unwrap();
        assert_eq!(first, fs::read(dir.path().join("results.json")).unwrap());
        assert!(dir.path().join("results.csv").exists());
        let _held = OutputLock::acquire(dir.path()).unwrap();
        assert!(matches!(execute(&cfg, dir.path()), Err(Error::Config(_))));
    }
}
