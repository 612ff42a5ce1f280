//! Acceptance suite. Each criterion prints one PASS/FAIL line; the process
//! exits non-zero if any criterion fails.

use std::f64::consts::TAU;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use num_complex::Complex64;
use oscilab::cellsolve::{normalize, solve_cell_problem};
use oscilab::coeff::{build_family, FamilyKind, FamilySpec};
use oscilab::critical::{
    brute_force_minima, check_low_index_noncritical, count_in_half_ball, detect_critical_points, DetectOptions,
};
use oscilab::doubling::{doubling_index, Verdict};
use oscilab::field::{ClosedForm, Field};
use oscilab::geom::{frobenius, Disk, Mat2, Vec2};
use oscilab::harness::{default_sweep, prepare_field, run_experiment, scaling_invariance_suite, ExperimentConfig};
use oscilab::pde::{convergence_row, BoundaryData, DiskProblem, EpsProblem};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const FAMILIES: [FamilyKind; 5] = [
    FamilyKind::Constant,
    FamilyKind::Laminate,
    FamilyKind::SeparableScalar,
    FamilyKind::RotatingAnisotropic,
    FamilyKind::FourierGeneral,
];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn family(kind: FamilyKind) -> oscilab::coeff::CoefficientField {
    build_family(&FamilySpec::default_for(kind)).unwrap()
}

fn laminate_config(l: usize, radius: f64) -> ExperimentConfig {
    ExperimentConfig::new(FamilySpec::default_for(FamilyKind::Laminate), BoundaryData::cos(l), radius)
}

fn homogenized_laminate() -> Outcome {
    // a(y₁) = 2 + sin 2πy₁: harmonic mean √3 across layers, arithmetic mean 2 along them.
    let exact = Mat2::new(3f64.sqrt(), 0.0, 0.0, 2.0);
    let f = family(FamilyKind::Laminate);
    let err = |n| {
        let c = solve_cell_problem(&f, n).unwrap();
        frobenius(&(c.a_hat - exact)) / frobenius(&exact)
    };
    let (e256, e512) = (err(256), err(512));
    let ratio = e256 / e512;
    outcome(
        e512 <= 1e-3 && ratio >= 3.5,
        format!("rel. error {e512:.2e} at n=512, ratio {ratio:.2}"),
    )
}

fn invertibility() -> Outcome {
    let mut mins = Vec::new();
    for kind in FAMILIES {
        mins.push((kind, solve_cell_problem(&family(kind), 256).unwrap().mu_min));
    }
    let laminate = mins[1].1;
    let target = 1.0 / 3f64.sqrt();
    let all = mins.iter().all(|(_, m)| *m > 0.1);
    let lowest = mins.iter().map(|(_, m)| *m).fold(f64::INFINITY, f64::min);
    outcome(
        (laminate - target).abs() <= 1e-3 && all,
        format!("laminate mu_min {laminate:.5} (target {target:.5}), min over families {lowest:.3}"),
    )
}

fn normalization() -> Outcome {
    let mut worst_sym = 0.0f64;
    let mut worst_circle = 0.0f64;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for kind in FAMILIES {
        let f = family(kind);
        let c = solve_cell_problem(&f, 128).unwrap();
        let (t, pushed) = normalize(&c, &f).unwrap();
        let a = solve_cell_problem(&pushed, 128).unwrap().a_hat;
        worst_sym = worst_sym.max(frobenius(&(a + a.transpose() - Mat2::identity() * 2.0)));
        // ∂E₁ = {x : ⟨(sym Â)⁻¹x, x⟩ = 1}, parametrized by the eigenbasis.
        let s = (c.a_hat + c.a_hat.transpose()) * 0.5;
        let eig = s.symmetric_eigen();
        let (e1, e2): (Vec2, Vec2) = (eig.eigenvectors.column(0).into(), eig.eigenvectors.column(1).into());
        for _ in 0..200 {
            let th = rng.gen_range(0.0..TAU);
            let x = e1 * (eig.eigenvalues[0].sqrt() * th.cos()) + e2 * (eig.eigenvalues[1].sqrt() * th.sin());
            worst_circle = worst_circle.max((t.to_normalized(x).norm() - 1.0).abs());
        }
    }
    outcome(
        worst_sym <= 1e-6 && worst_circle <= 1e-10,
        format!("max |A'+A'^T-2I| {worst_sym:.2e}, max circle deviation {worst_circle:.2e} over 1000 points"),
    )
}

fn doubling_exactness() -> Outcome {
    let mut worst = 0.0f64;
    for l in 1..=4 {
        let u = ClosedForm::monomial(l, 1.0);
        for r in [0.25, 0.5] {
            worst = worst.max((doubling_index(&u, Vec2::zeros(), r).unwrap() - l as f64).abs());
        }
    }
    outcome(worst <= 1e-6, format!("max deviation {worst:.2e}"))
}

fn solver_order() -> Outcome {
    let f = build_family(&FamilySpec::new(FamilyKind::Constant, vec![1.0, 0.0, 1.0])).unwrap();
    let g = BoundaryData::cos(2);
    let errs: Vec<f64> = [32.0, 64.0, 128.0]
        .iter()
        .map(|&n| {
            let sol = DiskProblem::new(&f, 1.0, 1.0, 1.0 / n).unwrap().solve(&g).unwrap();
            sol.mesh
                .nodes
                .iter()
                .zip(&sol.u)
                .map(|(p, u)| (u - (p.x * p.x - p.y * p.y)).abs())
                .fold(0.0, f64::max)
        })
        .collect();
    let orders: Vec<f64> = errs.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    outcome(
        orders.iter().all(|&o| o >= 1.9),
        format!(
            "errors {}, orders {orders:.2?}",
            errs.iter().map(|e| format!("{e:.2e}")).collect::<Vec<_>>().join(" ")
        ),
    )
}

fn corrector_trend() -> Outcome {
    let cfg = laminate_config(2, 1.0);
    let prep = prepare_field(&cfg).unwrap();
    let mut rows = Vec::new();
    for eps in [0.125, 0.0625, 0.03125] {
        let problem = EpsProblem::new(prep.normalized.clone(), eps, 1.0, BoundaryData::cos(2)).with_h(eps / 8.0);
        let sol = DiskProblem::new(&prep.normalized, eps, 1.0, eps / 8.0)
            .unwrap()
            .solve(&problem.g)
            .unwrap();
        rows.push(convergence_row(&problem, &sol, Some(&prep.normalized_corrector)));
    }
    let dec = |f: fn(&oscilab::pde::ConvergenceRow) -> f64| rows.windows(2).all(|w| f(&w[1]) < f(&w[0]));
    let u: Vec<f64> = rows.iter().map(|r| r.sup_u_error).collect();
    let g: Vec<f64> = rows.iter().map(|r| r.sup_grad_error).collect();
    outcome(
        dec(|r| r.sup_u_error) && dec(|r| r.sup_grad_error),
        format!("u errors {u:.4?}, gradient errors {g:.4?}"),
    )
}

fn half_ball_counts() -> Outcome {
    let mut pass = true;
    let mut notes = Vec::new();
    for kind in [FamilyKind::Laminate, FamilyKind::SeparableScalar] {
        let cfg = ExperimentConfig::new(FamilySpec::default_for(kind), BoundaryData::cos(2), 2.0);
        let prep = prepare_field(&cfg).unwrap();
        for l in [2usize, 3] {
            let g = BoundaryData::cos(l);
            let mut counts = Vec::new();
            for eps in [0.125, 0.0625, 0.03125] {
                let sol = DiskProblem::new(&prep.normalized, eps, 2.0, eps / 8.0)
                    .unwrap()
                    .solve(&g)
                    .unwrap();
                let rep = count_in_half_ball(&sol, &DetectOptions::default()).unwrap().report;
                pass &= rep.consistent;
                pass &= rep.degree_sum == -(l as i32 - 1);
                if l == 2 {
                    pass &= rep.count == 1;
                } else {
                    pass &= rep.count <= 3;
                }
                counts.push(rep.count);
            }
            pass &= counts.iter().all(|&c| c == counts[0]);
            notes.push(format!("{} cos{}θ counts {:?}", kind.name(), l, counts));
        }
    }
    outcome(pass, notes.join("; "))
}

fn low_index() -> Outcome {
    let mut pass = true;
    let mut worst_n = 0.0f64;
    let mut total = 0;
    for kind in FAMILIES {
        let cfg = ExperimentConfig::new(FamilySpec::default_for(kind), BoundaryData::cos(1), 1.0);
        let prep = prepare_field(&cfg).unwrap();
        for eps in [0.125, 0.0625] {
            let sol = DiskProblem::new(&prep.normalized, eps, 1.0, eps / 8.0)
                .unwrap()
                .solve(&BoundaryData::cos(1))
                .unwrap();
            let n_star = doubling_index(&sol, Vec2::zeros(), 0.5).unwrap();
            worst_n = worst_n.max(n_star);
            let rep = check_low_index_noncritical(&sol, Vec2::zeros(), &DetectOptions::default()).unwrap();
            let crit = detect_critical_points(&sol, &Disk::centered(0.5), &DetectOptions::default()).unwrap();
            total += crit.count;
            pass &= n_star <= 1.5 && rep.verdict == Verdict::Satisfied && crit.count == 0 && crit.consistent;
        }
    }
    outcome(pass, format!("max N* {worst_n:.4}, critical points found {total}"))
}

fn persistence_reduction() -> Outcome {
    let mut tally = [0usize; 4];
    let mut violated = Vec::new();
    for mut cfg in default_sweep() {
        cfg.checks.count = false;
        cfg.checks.low_index = false;
        cfg.checks.convergence = false;
        let rec = run_experiment(&cfg).unwrap();
        for v in &rec.verdicts {
            let i = match v.verdict {
                Verdict::Satisfied => 0,
                Verdict::NotApplicable => 1,
                Verdict::Unresolvable => 2,
                Verdict::Violated => 3,
            };
            tally[i] += 1;
            if v.verdict == Verdict::Violated {
                violated.push(format!("{} {} eps={:?}", rec.label, v.check, v.epsilon));
            }
        }
        for r in &rec.rows {
            if let Some(e) = &r.error {
                violated.push(format!("{} stage error {e}", rec.label));
            }
        }
    }
    outcome(
        violated.is_empty(),
        format!(
            "satisfied {}, not-applicable {}, unresolvable {}, violated {} {:?}",
            tally[0], tally[1], tally[2], tally[3], violated
        ),
    )
}

fn scaling() -> Outcome {
    let cfg = laminate_config(2, 2.0);
    let rep = scaling_invariance_suite(&cfg, 2).unwrap();
    let worst = rep.pairs.iter().map(|p| p.max_profile_difference).fold(0.0, f64::max);
    let counts: Vec<(usize, usize)> = rep.pairs.iter().map(|p| (p.base.count, p.scaled.count)).collect();
    outcome(
        rep.verdict == Verdict::Satisfied,
        format!("counts {counts:?}, max N* difference {worst:.2e}"),
    )
}

/// `u = Re F` with `F′(z) = Π (z − z_k)`, so the critical points are the `z_k`.
struct RootPoly {
    roots: Vec<Complex64>,
}

impl RootPoly {
    // Coefficients of Π (z − z_k), lowest degree first.
    fn derivative_coeffs(&self) -> Vec<Complex64> {
        let mut c = vec![Complex64::new(1.0, 0.0)];
        for &r in &self.roots {
            let mut next = vec![Complex64::new(0.0, 0.0); c.len() + 1];
            for (i, &a) in c.iter().enumerate() {
                next[i + 1] += a;
                next[i] -= a * r;
            }
            c = next;
        }
        c
    }
}

impl Field for RootPoly {
    fn value(&self, p: Vec2) -> Option<f64> {
        let z = Complex64::new(p.x, p.y);
        let v: Complex64 = self
            .derivative_coeffs()
            .iter()
            .enumerate()
            .map(|(k, a)| a * z.powu(k as u32 + 1) / (k as f64 + 1.0))
            .sum();
        Some(v.re)
    }

    fn gradient(&self, p: Vec2) -> Option<Vec2> {
        let z = Complex64::new(p.x, p.y);
        let d: Complex64 = self.roots.iter().map(|r| z - r).product();
        Some(Vec2::new(d.re, -d.im))
    }

    fn domain(&self) -> Disk {
        Disk::centered(1.0)
    }
}

fn detector_oracle() -> Outcome {
    let region = Disk::centered(0.5);
    let h = region.radius / 64.0;
    let mut fields: Vec<(String, Box<dyn Field>)> = Vec::new();
    for l in 1..=5 {
        fields.push((format!("r^{l}cos{l}θ"), Box::new(ClosedForm::monomial(l, 1.0))));
    }
    let z = |x: f64, y: f64| Complex64::new(x, y);
    let root_sets = [
        vec![z(0.1037, -0.0713)],
        vec![z(0.2, 0.0), z(-0.2, 0.0)],
        vec![z(0.15, 0.1), z(-0.2, 0.05), z(0.0, -0.25)],
        vec![z(0.3, 0.0), z(0.0, 0.3), z(-0.3, 0.0), z(0.0, -0.3)],
    ];
    for roots in root_sets {
        fields.push((format!("{}-root polynomial", roots.len()), Box::new(RootPoly { roots })));
    }
    let mut pass = true;
    let mut failures = Vec::new();
    for (name, u) in &fields {
        let det = detect_critical_points(u.as_ref(), &region, &DetectOptions::default()).unwrap();
        let brute = brute_force_minima(u.as_ref(), &region, h / 4.0, f64::INFINITY);
        let matched = det.count == brute.len()
            && det.points.iter().all(|c| brute.iter().any(|b| (b - c.position()).norm() <= 2.0 * h));
        if !matched {
            failures.push(format!("{name}: detector {} vs brute force {}", det.count, brute.len()));
        }
        pass &= matched && det.consistent;
    }
    outcome(pass, format!("{} fields {:?}", fields.len(), failures))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome, Duration); 11] = [
        ("homogenized laminate", homogenized_laminate, Duration::from_secs(60)),
        ("invertibility margin", invertibility, Duration::from_secs(300)),
        ("normalization", normalization, Duration::from_secs(300)),
        ("doubling exactness", doubling_exactness, Duration::from_secs(10)),
        ("constant-coefficient solver order", solver_order, Duration::from_secs(120)),
        ("corrector expansion trend", corrector_trend, Duration::from_secs(900)),
        ("half-ball critical counts", half_ball_counts, Duration::from_secs(1800)),
        ("low-index non-criticality", low_index, Duration::from_secs(900)),
        ("persistence and reduction sweep", persistence_reduction, Duration::from_secs(1800)),
        ("scaling invariance", scaling, Duration::from_secs(900)),
        ("detector vs brute force", detector_oracle, Duration::from_secs(300)),
    ];
    let filter: Option<String> = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let mut failed = 0;
    for (i, (name, run, budget)) in criteria.iter().enumerate() {
        let id = format!("{}", i + 1);
        if let Some(f) = &filter {
            if *f != id && !name.contains(f.as_str()) {
                continue;
            }
        }
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(run));
        let elapsed = start.elapsed();
        let (pass, detail) = match result {
            Ok(o) => (o.pass && elapsed <= *budget, o.detail),
            Err(e) => {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                (false, format!("panicked: {msg}"))
            }
        };
        if !pass {
            failed += 1;
        }
        println!(
            "{} criterion {:>2} {} ({:.1}s / {}s): {}",
            if pass { "PASS" } else { "FAIL" },
            id,
            name,
            elapsed.as_secs_f64(),
            budget.as_secs(),
            detail
        );
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
