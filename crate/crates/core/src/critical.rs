//! Critical points of solution fields through gradient winding numbers.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::doubling::{doubling_index, Verdict};
use crate::error::{Error, Result};
use crate::field::Field;
use crate::geom::{Disk, Vec2};

/// Finest parameter step of an adaptive loop, as a fraction of the loop.
const MAX_SUBDIVISION: f64 = 1.0 / 65536.0;
const WINDING_RETRIES: usize = 5;
const NEWTON_MAX_ITER: usize = 50;

fn cross(a: Vec2, b: Vec2) -> f64 {
    a.x * b.y - a.y * b.x
}

/// Integer turning number of `grad` along the closed curve `t ↦ curve(t)`,
/// `t ∈ [0, 1]`, starting from `m0` uniform samples.
///
/// Segments are bisected until consecutive gradients differ by at most
/// half their length (so the turning per step is below π/6); a segment
/// that needs more than 2¹⁶ subdivisions makes the loop uncertifiable.
pub fn winding_along<G, C>(grad: &G, curve: &C, m0: usize) -> Result<i32>
where
    G: Fn(Vec2) -> Option<Vec2> + ?Sized,
    C: Fn(f64) -> Vec2 + ?Sized,
{
    let m0 = m0.max(8);
    let eval = |t: f64| -> Result<Vec2> {
        let p = curve(t);
        let g = grad(p).ok_or_else(|| Error::Geometry(format!("gradient undefined at ({}, {})", p.x, p.y)))?;
        if !(g.norm() > 0.0) {
            return Err(Error::Uncertifiable(format!("gradient vanishes at ({}, {})", p.x, p.y)));
        }
        Ok(g)
    };
    fn segment<E: Fn(f64) -> Result<Vec2>>(eval: &E, ta: f64, ga: Vec2, tb: f64, gb: Vec2) -> Result<f64> {
        let turn = cross(ga, gb).atan2(ga.dot(&gb));
        let smooth = (gb - ga).norm() <= 0.5 * ga.norm().min(gb.norm());
        if smooth && turn.abs() < std::f64::consts::FRAC_PI_4 {
            return Ok(turn);
        }
        if tb - ta <= MAX_SUBDIVISION {
            return Err(Error::Uncertifiable(
                "gradient direction not resolved at the subdivision cap".into(),
            ));
        }
        let tm = 0.5 * (ta + tb);
        let gm = eval(tm)?;
        Ok(segment(eval, ta, ga, tm, gm)? + segment(eval, tm, gm, tb, gb)?)
    }
    let g0 = eval(0.0)?;
    let mut total = 0.0;
    let mut prev = g0;
    for k in 1..=m0 {
        let t = k as f64 / m0 as f64;
        let g = if k == m0 { g0 } else { eval(t)? };
        total += segment(&eval, (k - 1) as f64 / m0 as f64, prev, t, g)?;
        prev = g;
    }
    let turns = total / std::f64::consts::TAU;
    let rounded = turns.round();
    if (turns - rounded).abs() > 1e-6 {
        return Err(Error::Uncertifiable(format!("non-integer turning {turns}")));
    }
    Ok(rounded as i32)
}

/// Winding of `grad` along the circle `∂B(center, radius)`.
pub fn gradient_winding<G>(grad: &G, center: Vec2, radius: f64, samples: usize) -> Result<i32>
where
    G: Fn(Vec2) -> Option<Vec2> + ?Sized,
{
    let curve = |t: f64| {
        let th = std::f64::consts::TAU * t;
        center + Vec2::new(th.cos(), th.sin()) * radius
    };
    winding_along(grad, &curve, samples)
}

fn square_winding<G>(grad: &G, center: Vec2, half: f64) -> Result<i32>
where
    G: Fn(Vec2) -> Option<Vec2> + ?Sized,
{
    let corners = [
        center + Vec2::new(-half, -half),
        center + Vec2::new(half, -half),
        center + Vec2::new(half, half),
        center + Vec2::new(-half, half),
    ];
    let curve = |t: f64| {
        let s = (t * 4.0).min(4.0 - 1e-15);
        let k = s.floor() as usize;
        let f = s - k as f64;
        corners[k] * (1.0 - f) + corners[(k + 1) % 4] * f
    };
    winding_along(grad, &curve, 16)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CriticalPoint {
    pub location: [f64; 2],
    pub winding: i32,
    /// `|∇u|` at the refined location.
    pub refine_residual: f64,
    /// Diameter of the isolating circle.
    pub cell_size: f64,
    pub newton_converged: bool,
    /// Within `4h` of the region boundary.
    pub boundary_uncertain: bool,
}

impl CriticalPoint {
    pub fn position(&self) -> Vec2 {
        Vec2::new(self.location[0], self.location[1])
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CriticalReport {
    pub points: Vec<CriticalPoint>,
    pub region: Disk,
    /// Radius actually used for the boundary loop (after perturbations).
    pub boundary_radius: f64,
    pub boundary_winding: i32,
    pub count: usize,
    pub degree_sum: i32,
    /// `degree_sum == boundary_winding`.
    pub consistent: bool,
    pub h: f64,
    pub leaves: usize,
    pub discarded_clusters: usize,
}

#[derive(Clone, Debug)]
pub struct DetectOptions {
    /// Resolution scale; defaults to the field resolution, or `r/64` for
    /// closed forms.
    pub h: Option<f64>,
    /// Added to every loop radius (stability probes).
    pub radius_shift: f64,
}

impl Default for DetectOptions {
    fn default() -> Self {
        DetectOptions {
            h: None,
            radius_shift: 0.0,
        }
    }
}

fn resolution_for<F: Field + ?Sized>(u: &F, region: &Disk, opts: &DetectOptions) -> f64 {
    opts.h.unwrap_or_else(|| {
        let h = u.resolution();
        if h > 0.0 {
            h
        } else {
            region.radius / 64.0
        }
    })
}

/// Circle winding with up to five radius perturbations of `+h/10`.
fn robust_circle_winding<F: Field + ?Sized>(u: &F, center: Vec2, radius: f64, h: f64, grow: bool) -> Result<(i32, f64)> {
    let grad = |p: Vec2| u.gradient(p);
    let samples = (8.0 * std::f64::consts::TAU * radius / h).ceil().max(64.0) as usize;
    let mut last = None;
    for k in 0..=WINDING_RETRIES {
        let step = if grow { h / 10.0 } else { -h / 10.0 };
        let r = radius + step * k as f64;
        match gradient_winding(&grad, center, r, samples) {
            Ok(w) => return Ok((w, r)),
            Err(e @ Error::Uncertifiable(_)) => last = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last.unwrap())
}

/// Largest observed `|∇u(p) − ∇u(q)| / |p − q|` on an `h`-grid, doubled.
fn gradient_lipschitz<F: Field + ?Sized>(u: &F, region: &Disk, h: f64) -> f64 {
    let c = region.center();
    let n = ((2.0 * region.radius / h).ceil() as usize).clamp(8, 1024);
    let step = 2.0 * region.radius / n as f64;
    let rows: Vec<Vec<Option<Vec2>>> = (0..=n)
        .into_par_iter()
        .map(|j| {
            (0..=n)
                .map(|i| {
                    let p = c + Vec2::new(-region.radius + i as f64 * step, -region.radius + j as f64 * step);
                    u.gradient(p)
                })
                .collect()
        })
        .collect();
    let mut lip: f64 = 0.0;
    for j in 0..=n {
        for i in 0..=n {
            let Some(g) = rows[j][i] else { continue };
            if let Some(Some(gx)) = rows[j].get(i + 1) {
                lip = lip.max((gx - g).norm() / step);
            }
            if let Some(Some(gy)) = rows.get(j + 1).map(|r| r[i]) {
                lip = lip.max((gy - g).norm() / step);
            }
        }
    }
    2.0 * lip
}

fn newton<F: Field + ?Sized>(u: &F, start: Vec2, h: f64, gscale: f64, limit: &Disk) -> (Vec2, f64, bool) {
    let grad = |p: Vec2| u.gradient(p);
    let Some(mut g) = grad(start) else {
        return (start, f64::INFINITY, false);
    };
    let mut x = start;
    let d = h / 4.0;
    for _ in 0..NEWTON_MAX_ITER {
        if g.norm() <= 1e-8 * gscale {
            return (x, g.norm(), true);
        }
        let (Some(gxp), Some(gxm), Some(gyp), Some(gym)) = (
            grad(x + Vec2::x() * d),
            grad(x - Vec2::x() * d),
            grad(x + Vec2::y() * d),
            grad(x - Vec2::y() * d),
        ) else {
            break;
        };
        let jac = crate::geom::Mat2::from_columns(&[(gxp - gxm) / (2.0 * d), (gyp - gym) / (2.0 * d)]);
        let Some(inv) = jac.try_inverse() else { break };
        let delta = -(inv * g);
        let mut t = 1.0;
        let mut moved = false;
        for _ in 0..12 {
            let trial = x + delta * t;
            if limit.contains(trial) {
                if let Some(gt) = grad(trial) {
                    if gt.norm() < g.norm() {
                        x = trial;
                        g = gt;
                        moved = true;
                        break;
                    }
                }
            }
            t *= 0.5;
        }
        if !moved || (delta * t).norm() < 1e-6 * h {
            return (x, g.norm(), g.norm() <= 1e-8 * gscale || moved);
        }
    }
    (x, g.norm(), g.norm() <= 1e-8 * gscale)
}

/// Detects critical points of `u` in the open disk `region`.
pub fn detect_critical_points<F: Field + ?Sized>(u: &F, region: &Disk, opts: &DetectOptions) -> Result<CriticalReport> {
    let h = resolution_for(u, region, opts);
    if !(region.radius > 0.0) {
        return Err(Error::Geometry("region radius must be positive".into()));
    }
    if !u.domain().contains_disk(region, 2.0 * u.resolution()) {
        return Err(Error::Geometry(format!(
            "region of radius {} is not inside the solution domain with margin 2h",
            region.radius
        )));
    }
    let center = region.center();
    let (boundary_winding, boundary_radius) =
        robust_circle_winding(u, center, region.radius + opts.radius_shift, h, false)?;
    let lip = gradient_lipschitz(u, region, h);
    let grad = |p: Vec2| u.gradient(p);

    // Root square, offset so that grid lines avoid the region center.
    let offset = Vec2::new(std::f64::consts::FRAC_1_PI, 0.223_606_797) * h;
    let root_half = region.radius + h;
    let levels = ((2.0 * root_half / (4.0 * h)).log2().ceil()).max(0.0) as u32;
    let mut cells = vec![center + offset];
    let mut half = root_half;
    for _ in 0..levels {
        let next_half = half / 2.0;
        cells = cells
            .par_iter()
            .flat_map_iter(|&c| {
                [(-1.0, -1.0), (1.0, -1.0), (-1.0, 1.0), (1.0, 1.0)]
                    .into_iter()
                    .map(move |(sx, sy)| c + Vec2::new(sx, sy) * next_half)
            })
            .filter(|&c| {
                let diag = next_half * std::f64::consts::SQRT_2;
                if (c - center).norm() > boundary_radius + diag {
                    return false;
                }
                match u.gradient(c) {
                    Some(g) => g.norm() <= lip * diag,
                    None => true,
                }
            })
            .collect();
        half = next_half;
    }
    let leaves = cells.len();
    let candidates: Vec<Vec2> = cells
        .par_iter()
        .filter_map(|&c| match square_winding(&grad, c, half) {
            Ok(0) => None,
            _ => Some(c),
        })
        .collect();

    // Union-find clustering within two cell diagonals.
    let merge = 2.0 * 2.0 * half * std::f64::consts::SQRT_2;
    let mut parent: Vec<usize> = (0..candidates.len()).collect();
    fn find(p: &mut [usize], i: usize) -> usize {
        let mut r = i;
        while p[r] != r {
            r = p[r];
        }
        let mut j = i;
        while p[j] != r {
            let nx = p[j];
            p[j] = r;
            j = nx;
        }
        r
    }
    for i in 0..candidates.len() {
        for j in 0..i {
            if (candidates[i] - candidates[j]).norm() <= merge {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut clusters: Vec<Vec<Vec2>> = Vec::new();
    let mut index = std::collections::BTreeMap::new();
    for i in 0..candidates.len() {
        let root = find(&mut parent, i);
        let k = *index.entry(root).or_insert_with(|| {
            clusters.push(Vec::new());
            clusters.len() - 1
        });
        clusters[k].push(candidates[i]);
    }

    let gscale = lip.max(1e-300) * region.radius;
    let mut points = Vec::new();
    let mut discarded = 0;
    for cluster in clusters {
        let mid = cluster.iter().sum::<Vec2>() / cluster.len() as f64;
        let spread = cluster.iter().map(|c| (c - mid).norm()).fold(0.0, f64::max);
        let radius = spread + half * std::f64::consts::SQRT_2 + h / 2.0 + opts.radius_shift;
        let (winding, r_used) = match robust_circle_winding(u, mid, radius, h, true) {
            Ok(v) => v,
            Err(Error::Uncertifiable(_)) => {
                discarded += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        if winding == 0 {
            discarded += 1;
            continue;
        }
        let start = cluster
            .iter()
            .copied()
            .min_by(|a, b| {
                let ga = u.gradient(*a).map_or(f64::INFINITY, |g| g.norm());
                let gb = u.gradient(*b).map_or(f64::INFINITY, |g| g.norm());
                ga.total_cmp(&gb)
            })
            .unwrap_or(mid);
        let isolating = Disk::new(mid, r_used);
        let (x, residual, converged) = newton(u, start, h, gscale, &isolating);
        let (x, residual) = if isolating.contains(x) {
            (x, residual)
        } else {
            (mid, u.gradient(mid).map_or(f64::INFINITY, |g| g.norm()))
        };
        if (x - center).norm() >= boundary_radius {
            continue;
        }
        points.push(CriticalPoint {
            location: [x.x, x.y],
            winding,
            refine_residual: residual,
            cell_size: 2.0 * r_used,
            newton_converged: converged,
            boundary_uncertain: boundary_radius - (x - center).norm() < 4.0 * h,
        });
    }
    points.sort_by(|a, b| {
        a.location[0]
            .total_cmp(&b.location[0])
            .then(a.location[1].total_cmp(&b.location[1]))
    });
    let degree_sum = points.iter().map(|p| p.winding).sum();
    Ok(CriticalReport {
        count: points.len(),
        consistent: degree_sum == boundary_winding,
        points,
        region: *region,
        boundary_radius,
        boundary_winding,
        degree_sum,
        h,
        leaves,
        discarded_clusters: discarded,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HalfBallCount {
    pub report: CriticalReport,
    /// `log₄(⨍_{B₂} u² / ⨍_{B₁} u²)`.
    pub growth_index: f64,
}

/// Critical points in `B(0, 1/2)` of a field on `B(0, 2)`, with the
/// measured growth exponent of the doubling hypothesis attached.
pub fn count_in_half_ball<F: Field + ?Sized>(u: &F, opts: &DetectOptions) -> Result<HalfBallCount> {
    let dom = u.domain();
    if dom.center().norm() > 1e-12 || (dom.radius - 2.0).abs() > 1e-12 {
        return Err(Error::Geometry(format!(
            "half-ball count expects the domain B(0, 2), got radius {}",
            dom.radius
        )));
    }
    let report = detect_critical_points(u, &Disk::centered(0.5), opts)?;
    let growth_index = crate::doubling::ball_growth_index(u, 2.0)?;
    Ok(HalfBallCount { report, growth_index })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OracleRecord {
    pub ell: usize,
    pub points: Vec<([f64; 2], i32)>,
}

/// Critical set of a homogeneous harmonic polynomial of degree `ℓ`: the
/// origin with winding `−(ℓ−1)` for `ℓ ≥ 2`, empty for `ℓ = 1`.
pub fn harmonic_poly_critical(ell: usize) -> Result<OracleRecord> {
    if !(1..=8).contains(&ell) {
        return Err(Error::InvalidParameter(format!("degree must lie in 1..=8, got {ell}")));
    }
    let points = if ell >= 2 {
        vec![([0.0, 0.0], -(ell as i32 - 1))]
    } else {
        vec![]
    };
    Ok(OracleRecord { ell, points })
}

/// Strict local minima of `|∇u|` over the interior nodes of a square grid
/// with spacing `step` covering `region`, keeping those below `threshold`.
pub fn brute_force_minima<F: Field + ?Sized>(u: &F, region: &Disk, step: f64, threshold: f64) -> Vec<Vec2> {
    let c = region.center();
    let n = (region.radius / step).floor() as i64;
    let idx = |i: i64| (i + n) as usize;
    let side = (2 * n + 1) as usize;
    let vals: Vec<Option<f64>> = (0..side * side)
        .into_par_iter()
        .map(|k| {
            let (i, j) = ((k % side) as i64 - n, (k / side) as i64 - n);
            let p = c + Vec2::new(i as f64, j as f64) * step;
            if (p - c).norm() < region.radius {
                u.gradient(p).map(|g| g.norm())
            } else {
                None
            }
        })
        .collect();
    let at = |i: i64, j: i64| -> Option<f64> {
        if i < -n || i > n || j < -n || j > n {
            None
        } else {
            vals[idx(i) + side * idx(j)]
        }
    };
    let mut out = Vec::new();
    for j in -n..=n {
        for i in -n..=n {
            let Some(v) = at(i, j) else { continue };
            if v > threshold {
                continue;
            }
            let mut strict = true;
            for dj in -1..=1 {
                for di in -1..=1 {
                    if di == 0 && dj == 0 {
                        continue;
                    }
                    match at(i + di, j + dj) {
                        Some(w) if w > v => {}
                        _ => strict = false,
                    }
                }
            }
            if strict {
                out.push(c + Vec2::new(i as f64, j as f64) * step);
            }
        }
    }
    out
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LowIndexReport {
    pub x0: [f64; 2],
    pub n_star: f64,
    pub radius: f64,
    pub verdict: Verdict,
    /// Distance from `x₀` to the nearest detected critical point.
    pub nearest: Option<f64>,
}

/// If `N*(u, x₀, 1/2) ≤ 3/2`, checks that no critical point lies within
/// `4h` of `x₀`.
pub fn check_low_index_noncritical<F: Field + ?Sized>(u: &F, x0: Vec2, opts: &DetectOptions) -> Result<LowIndexReport> {
    let n_star = doubling_index(u, x0, 0.5)?;
    let region = Disk::new(x0, 0.5);
    let h = resolution_for(u, &region, opts);
    let radius = 4.0 * h;
    if n_star > 1.5 {
        return Ok(LowIndexReport {
            x0: [x0.x, x0.y],
            n_star,
            radius,
            verdict: Verdict::NotApplicable,
            nearest: None,
        });
    }
    let probe = Disk::new(x0, 2.0 * radius);
    let report = detect_critical_points(u, &probe, &DetectOptions { h: Some(h), ..opts.clone() })?;
    let nearest = report
        .points
        .iter()
        .map(|p| (p.position() - x0).norm())
        .reduce(f64::min);
    let clear = nearest.map_or(true, |d| d > radius) && report.consistent;
    Ok(LowIndexReport {
        x0: [x0.x, x0.y],
        n_star,
        radius,
        verdict: if clear { Verdict::Satisfied } else { Verdict::Violated },
        nearest,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::ClosedForm;

    #[test]
    fn windings_of_simple_fields() {
        let q = ClosedForm::monomial(2, 1.0);
        let c = ClosedForm::monomial(3, 1.0);
        let x = ClosedForm::monomial(1, 1.0);
        let w = |u: &ClosedForm, r| gradient_winding(&|p| Some(u.grad(p)), Vec2::zeros(), r, 64).unwrap();
        assert_eq!(w(&q, 0.5), -1);
        assert_eq!(w(&c, 0.5), -2);
        assert_eq!(w(&x, 0.5), 0);
        let shifted = gradient_winding(&|p| Some(q.grad(p)), Vec2::new(0.8, 0.0), 0.1, 64).unwrap();
        assert_eq!(shifted, 0);
        // A source has winding +1.
        assert_eq!(gradient_winding(&|p: Vec2| Some(p), Vec2::zeros(), 1.0, 8).unwrap(), 1);
    }

    #[test]
    fn winding_through_a_zero_is_uncertifiable() {
        let q = ClosedForm::monomial(2, 1.0);
        let r = gradient_winding(&|p| Some(q.grad(p)), Vec2::new(0.5, 0.0), 0.5, 64);
        assert!(matches!(r, Err(Error::Uncertifiable(_))));
    }

    #[test]
    fn detector_matches_oracle_on_homogeneous_polynomials() {
        for ell in 1..=5 {
            let u = ClosedForm::monomial(ell, 1.0);
            let region = Disk::centered(0.5);
            let rep = detect_critical_points(&u, &region, &DetectOptions::default()).unwrap();
            let oracle = harmonic_poly_critical(ell).unwrap();
            assert!(rep.consistent, "ell {ell}: {rep:?}");
            assert_eq!(rep.count, oracle.points.len(), "ell {ell}");
            for (p, (loc, w)) in rep.points.iter().zip(&oracle.points) {
                assert_eq!(p.winding, *w);
                assert!((p.position() - Vec2::new(loc[0], loc[1])).norm() <= 2.0 * rep.h);
            }
        }
    }

    #[test]
    fn off_center_saddles_are_located() {
        // x² − y² shifted so that its saddle sits at (0.2, −0.1).
        let u = ClosedForm::from_fourier(&[0.0, 0.0, 1.0], &[], 1.0);
        let shifted = crate::field::Translated { inner: &u, shift: Vec2::new(-0.2, 0.1) };
        let rep = detect_critical_points(&shifted, &Disk::centered(0.5), &DetectOptions { h: Some(1.0 / 128.0), ..Default::default() }).unwrap();
        assert_eq!(rep.count, 1);
        assert!((rep.points[0].position() - Vec2::new(0.2, -0.1)).norm() < 1e-6);
        assert!(rep.points[0].newton_converged);
    }

    #[test]
    fn brute_force_scan_finds_the_origin() {
        let u = ClosedForm::monomial(3, 1.0);
        let h = 1.0 / 64.0;
        let minima = brute_force_minima(&u, &Disk::centered(0.5), h / 4.0, f64::INFINITY);
        assert_eq!(minima.len(), 1);
        assert!(minima[0].norm() < 2.0 * h);
        let x = ClosedForm::monomial(1, 1.0);
        assert!(brute_force_minima(&x, &Disk::centered(0.5), h / 4.0, f64::INFINITY).is_empty());
    }

    #[test]
    fn low_index_check() {
        let x = ClosedForm::monomial(1, 1.0);
        let r = check_low_index_noncritical(&x, Vec2::zeros(), &DetectOptions::default()).unwrap();
        assert_eq!(r.verdict, Verdict::Satisfied);
        let q = ClosedForm::monomial(2, 1.0);
        let r = check_low_index_noncritical(&q, Vec2::zeros(), &DetectOptions::default()).unwrap();
        assert_eq!(r.verdict, Verdict::NotApplicable);
    }

    #[test]
    fn oracle_records() {
        assert!(harmonic_poly_critical(1).unwrap().points.is_empty());
        assert_eq!(harmonic_poly_critical(5).unwrap().points[0].1, -4);
        assert!(harmonic_poly_critical(9).is_err());
    }
}
