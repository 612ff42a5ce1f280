use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Vec2;

/// Largest mesh the generator agrees to build.
pub const MAX_TRIANGLES: usize = 20_000_000;
/// Ring count per unit of `R / h`; keeps the longest edge below `h`.
const RING_DENSITY: f64 = 1.45;

/// One uniform refinement step: nodes `< coarse_nodes` are inherited,
/// node `coarse_nodes + k` is the midpoint of `parents[k]`.
#[derive(Clone, Debug)]
pub struct Refinement {
    pub coarse_nodes: usize,
    pub parents: Vec<[usize; 2]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeshStats {
    pub radius: f64,
    pub h_target: f64,
    pub h_max: f64,
    pub h_min: f64,
    pub quasi_uniformity: f64,
    pub nodes: usize,
    pub triangles: usize,
    pub boundary_nodes: usize,
    pub rings: usize,
}

/// Quasi-uniform triangulation of the disk `B(0, R)`.
///
/// A hexagonal-lattice mesh with `6k` nodes on ring `k`, blended towards
/// concentric circles as `k` approaches the boundary, is refined uniformly;
/// boundary midpoints are projected onto the circle, so every boundary node
/// lies exactly on `|x| = R`. The refinement history doubles as the
/// multigrid hierarchy.
#[derive(Clone, Debug)]
pub struct DiskMesh {
    pub radius: f64,
    pub h_target: f64,
    pub nodes: Vec<Vec2>,
    pub triangles: Vec<[usize; 3]>,
    pub is_boundary: Vec<bool>,
    /// Boundary nodes ordered counter-clockwise from angle 0.
    pub boundary: Vec<usize>,
    pub refinements: Vec<Refinement>,
    rings: usize,
    locator: BinGrid,
}

/// Smallest `K 2^m ≥ target` with `8 ≤ K ≤ 15`.
fn ring_count(target: f64) -> (usize, u32) {
    let mut m = 0u32;
    loop {
        let k = (target / 2f64.powi(m as i32)).ceil().max(1.0) as usize;
        if k <= 15 {
            return (k.max(if m == 0 { 1 } else { 8 }), m);
        }
        m += 1;
    }
}

fn ring_mesh(radius: f64, k: usize) -> (Vec<Vec2>, Vec<[usize; 3]>, Vec<bool>) {
    let mut nodes = vec![Vec2::zeros()];
    let mut boundary = vec![false];
    let offset = |ring: usize| if ring == 0 { 0 } else { 1 + 3 * ring * (ring - 1) };
    let spacing = radius / k as f64;
    let corner = |s: usize, layer: usize| {
        let th = std::f64::consts::FRAC_PI_3 * (s % 6) as f64;
        Vec2::new(th.cos(), th.sin()) * (layer as f64 * spacing)
    };
    for ring in 1..=k {
        let count = 6 * ring;
        let r = spacing * ring as f64;
        // Hexagonal lattice at the center, circle at the boundary.
        let w = ring as f64 / k as f64;
        for j in 0..count {
            let th = std::f64::consts::TAU * j as f64 / count as f64;
            let (s, i) = (j / ring, j % ring);
            let hex = corner(s, ring) + (corner(s + 1, ring) - corner(s, ring)) * (i as f64 / ring as f64);
            let circ = Vec2::new(r * th.cos(), r * th.sin());
            nodes.push(if ring == k { circ } else { hex * (1.0 - w) + circ * w });
            boundary.push(ring == k);
        }
    }
    let mut tris = Vec::with_capacity(6 * k * k);
    for j in 0..6 {
        tris.push([0, offset(1) + j, offset(1) + (j + 1) % 6]);
    }
    for ring in 2..=k {
        let (m_in, m_out) = (6 * (ring - 1), 6 * ring);
        let (o_in, o_out) = (offset(ring - 1), offset(ring));
        let (mut i, mut j) = (0usize, 0usize);
        while i < m_in || j < m_out {
            // Advance along whichever ring has the next smaller angle,
            // compared exactly as (j+1)/m_out <= (i+1)/m_in.
            let take_outer = i == m_in || (j < m_out && (j + 1) * m_in < (i + 1) * m_out);
            if take_outer {
                tris.push([o_in + i % m_in, o_out + j, o_out + (j + 1) % m_out]);
                j += 1;
            } else {
                tris.push([o_in + i, o_out + j % m_out, o_in + (i + 1) % m_in]);
                i += 1;
            }
        }
    }
    (nodes, tris, boundary)
}

fn refine(
    radius: f64,
    nodes: &mut Vec<Vec2>,
    tris: &[[usize; 3]],
    boundary: &mut Vec<bool>,
) -> (Vec<[usize; 3]>, Refinement) {
    let coarse_nodes = nodes.len();
    let mut edges: Vec<(u64, u32)> = Vec::with_capacity(3 * tris.len());
    for (t, tri) in tris.iter().enumerate() {
        for e in 0..3 {
            let (a, b) = (tri[e], tri[(e + 1) % 3]);
            let key = ((a.min(b) as u64) << 32) | a.max(b) as u64;
            edges.push((key, (3 * t + e) as u32));
        }
    }
    edges.sort_unstable();
    let mut midpoint = vec![0usize; 3 * tris.len()];
    let mut parents = Vec::new();
    let mut k = 0;
    while k < edges.len() {
        let key = edges[k].0;
        let mut end = k + 1;
        while end < edges.len() && edges[end].0 == key {
            end += 1;
        }
        let (a, b) = ((key >> 32) as usize, (key & 0xffff_ffff) as usize);
        let id = nodes.len();
        let mut p = (nodes[a] + nodes[b]) * 0.5;
        let on_boundary = end - k == 1;
        if on_boundary {
            p *= radius / p.norm();
        }
        nodes.push(p);
        boundary.push(on_boundary);
        parents.push([a, b]);
        for &(_, slot) in &edges[k..end] {
            midpoint[slot as usize] = id;
        }
        k = end;
    }
    let mut fine = Vec::with_capacity(4 * tris.len());
    for (t, &[a, b, c]) in tris.iter().enumerate() {
        let (ab, bc, ca) = (midpoint[3 * t], midpoint[3 * t + 1], midpoint[3 * t + 2]);
        fine.push([a, ab, ca]);
        fine.push([ab, b, bc]);
        fine.push([ca, bc, c]);
        fine.push([ab, bc, ca]);
    }
    (
        fine,
        Refinement {
            coarse_nodes,
            parents,
        },
    )
}

fn signed_area(a: Vec2, b: Vec2, c: Vec2) -> f64 {
    0.5 * ((b - a).x * (c - a).y - (b - a).y * (c - a).x)
}

impl DiskMesh {
    /// Estimated triangle count for a request, without building.
    pub fn estimate_triangles(radius: f64, h: f64) -> usize {
        let (k, m) = ring_count(RING_DENSITY * radius / h);
        let n = k << m;
        6 * n * n
    }

    pub fn new(radius: f64, h: f64) -> Result<Self> {
        if !(radius > 0.0 && h > 0.0 && h <= radius / 8.0) {
            return Err(Error::InvalidParameter(format!(
                "disk mesh needs 0 < h <= R/8 (R = {radius}, h = {h})"
            )));
        }
        let estimated = Self::estimate_triangles(radius, h);
        if estimated > MAX_TRIANGLES {
            return Err(Error::Budget {
                estimated_triangles: estimated,
            });
        }
        let (mut k, m) = ring_count(RING_DENSITY * radius / h);
        loop {
            let mesh = Self::build(radius, h, k, m);
            if mesh.stats().h_max <= h || k >= 15 {
                return Ok(mesh);
            }
            k += 1;
        }
    }

    fn build(radius: f64, h: f64, k: usize, m: u32) -> Self {
        let (mut nodes, mut tris, mut is_boundary) = ring_mesh(radius, k);
        let mut refinements = Vec::with_capacity(m as usize);
        for _ in 0..m {
            let (fine, r) = refine(radius, &mut nodes, &tris, &mut is_boundary);
            tris = fine;
            refinements.push(r);
        }
        let mut boundary: Vec<usize> = (0..nodes.len()).filter(|&i| is_boundary[i]).collect();
        let angle = |i: usize| nodes[i].y.atan2(nodes[i].x).rem_euclid(std::f64::consts::TAU);
        boundary.sort_by(|&a, &b| angle(a).total_cmp(&angle(b)));
        let locator = BinGrid::new(radius, &nodes, &tris);
        DiskMesh {
            radius,
            h_target: h,
            nodes,
            triangles: tris,
            is_boundary,
            boundary,
            refinements,
            rings: k << m,
            locator,
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t];
        signed_area(self.nodes[a], self.nodes[b], self.nodes[c])
    }

    pub fn barycenter(&self, t: usize) -> Vec2 {
        let [a, b, c] = self.triangles[t];
        (self.nodes[a] + self.nodes[b] + self.nodes[c]) / 3.0
    }

    fn diameter(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t];
        let p = [self.nodes[a], self.nodes[b], self.nodes[c]];
        (p[0] - p[1]).norm().max((p[1] - p[2]).norm()).max((p[2] - p[0]).norm())
    }

    /// Barycentric gradients `[∇φ_a, ∇φ_b, ∇φ_c]` of triangle `t`.
    pub fn shape_gradients(&self, t: usize) -> [Vec2; 3] {
        let [a, b, c] = self.triangles[t];
        let (pa, pb, pc) = (self.nodes[a], self.nodes[b], self.nodes[c]);
        let twice = 2.0 * signed_area(pa, pb, pc);
        let rot = |v: Vec2| Vec2::new(-v.y, v.x) / twice;
        [rot(pc - pb), rot(pa - pc), rot(pb - pa)]
    }

    pub fn stats(&self) -> MeshStats {
        let (mut hmax, mut hmin) = (0.0f64, f64::INFINITY);
        for t in 0..self.num_triangles() {
            let d = self.diameter(t);
            hmax = hmax.max(d);
            hmin = hmin.min(d);
        }
        MeshStats {
            radius: self.radius,
            h_target: self.h_target,
            h_max: hmax,
            h_min: hmin,
            quasi_uniformity: hmax / hmin,
            nodes: self.num_nodes(),
            triangles: self.num_triangles(),
            boundary_nodes: self.boundary.len(),
            rings: self.rings,
        }
    }

    /// Largest angular gap between consecutive boundary nodes.
    pub fn boundary_angle_step(&self) -> f64 {
        std::f64::consts::TAU / self.boundary.len() as f64
    }

    /// Triangle containing `p` with its barycentric coordinates. Points in
    /// the thin sliver between the boundary polygon and the circle are
    /// pulled radially onto the polygon.
    pub fn locate(&self, p: Vec2) -> Option<(usize, [f64; 3])> {
        if let Some(hit) = self.locator.find(self, p) {
            return Some(hit);
        }
        let r = p.norm();
        if r <= self.radius * (1.0 + 1e-12) {
            let h = self.h_target;
            let q = p * ((1.0 - h * h / (4.0 * self.radius * self.radius)).min(self.radius / r.max(1e-300)));
            return self.locator.find(self, q);
        }
        None
    }

    fn barycentric(&self, t: usize, p: Vec2) -> [f64; 3] {
        let [a, b, c] = self.triangles[t];
        let (pa, pb, pc) = (self.nodes[a], self.nodes[b], self.nodes[c]);
        let total = signed_area(pa, pb, pc);
        [
            signed_area(p, pb, pc) / total,
            signed_area(pa, p, pc) / total,
            signed_area(pa, pb, p) / total,
        ]
    }

    /// Node counts of every hierarchy level, coarsest first.
    pub fn level_sizes(&self) -> Vec<usize> {
        let mut sizes: Vec<usize> = self.refinements.iter().map(|r| r.coarse_nodes).collect();
        sizes.push(self.num_nodes());
        sizes
    }
}

/// Uniform background grid of triangle buckets.
#[derive(Clone, Debug)]
struct BinGrid {
    origin: Vec2,
    cell: f64,
    nx: usize,
    offsets: Vec<u32>,
    items: Vec<u32>,
}

impl BinGrid {
    fn new(radius: f64, nodes: &[Vec2], tris: &[[usize; 3]]) -> Self {
        let nx = ((tris.len() as f64 / 2.0).sqrt().ceil() as usize).max(1);
        let cell = 2.0 * radius * (1.0 + 1e-9) / nx as f64;
        let origin = Vec2::new(-radius * (1.0 + 1e-9), -radius * (1.0 + 1e-9));
        let bin_range = |t: &[usize; 3]| {
            let (mut lo, mut hi) = (Vec2::repeat(f64::INFINITY), Vec2::repeat(f64::NEG_INFINITY));
            for &v in t {
                lo = lo.inf(&nodes[v]);
                hi = hi.sup(&nodes[v]);
            }
            let clamp = |x: f64| ((x / cell).floor().max(0.0) as usize).min(nx - 1);
            (
                clamp(lo.x - origin.x),
                clamp(hi.x - origin.x),
                clamp(lo.y - origin.y),
                clamp(hi.y - origin.y),
            )
        };
        let mut counts = vec![0u32; nx * nx + 1];
        for t in tris {
            let (x0, x1, y0, y1) = bin_range(t);
            for by in y0..=y1 {
                for bx in x0..=x1 {
                    counts[bx + nx * by + 1] += 1;
                }
            }
        }
        for i in 0..nx * nx {
            counts[i + 1] += counts[i];
        }
        let mut next = counts.clone();
        let mut items = vec![0u32; counts[nx * nx] as usize];
        for (ti, t) in tris.iter().enumerate() {
            let (x0, x1, y0, y1) = bin_range(t);
            for by in y0..=y1 {
                for bx in x0..=x1 {
                    let slot = &mut next[bx + nx * by];
                    items[*slot as usize] = ti as u32;
                    *slot += 1;
                }
            }
        }
        BinGrid {
            origin,
            cell,
            nx,
            offsets: counts,
            items,
        }
    }

    fn find(&self, mesh: &DiskMesh, p: Vec2) -> Option<(usize, [f64; 3])> {
        let rel = (p - self.origin) / self.cell;
        if !(rel.x >= 0.0 && rel.y >= 0.0) {
            return None;
        }
        let (bx, by) = (rel.x as usize, rel.y as usize);
        if bx >= self.nx || by >= self.nx {
            return None;
        }
        let b = bx + self.nx * by;
        let mut best: Option<(usize, [f64; 3], f64)> = None;
        for &t in &self.items[self.offsets[b] as usize..self.offsets[b + 1] as usize] {
            let lam = mesh.barycentric(t as usize, p);
            let worst = lam[0].min(lam[1]).min(lam[2]);
            if worst >= 0.0 {
                return Some((t as usize, lam));
            }
            if worst >= -1e-12 && best.as_ref().map_or(true, |(_, _, w)| worst > *w) {
                best = Some((t as usize, lam, worst));
            }
        }
        best.map(|(t, lam, _)| (t, lam))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ring_counts_double_with_resolution() {
        let (k1, m1) = ring_count(RING_DENSITY * 32.0);
        let (k2, m2) = ring_count(RING_DENSITY * 64.0);
        assert_eq!(k2 << m2, 2 * (k1 << m1));
    }

    #[test]
    fn unit_disk_mesh_is_valid() {
        let mesh = DiskMesh::new(1.0, 1.0 / 32.0).unwrap();
        let stats = mesh.stats();
        assert!(stats.h_max <= 1.0 / 32.0);
        assert!(stats.quasi_uniformity <= 2.5, "{stats:?}");
        assert!((0..mesh.num_triangles()).all(|t| mesh.area(t) > 0.0));
        for &b in &mesh.boundary {
            assert!((mesh.nodes[b].norm() - 1.0).abs() <= 1e-14);
        }
        assert!(mesh.boundary_angle_step() <= stats.h_target / mesh.radius);
        let total: f64 = (0..mesh.num_triangles()).map(|t| mesh.area(t)).sum();
        assert!((total - std::f64::consts::PI).abs() < 1e-2);
        // The triangle count tracks area / h² up to the shape factor of
        // near-equilateral elements with longest edge ≤ h.
        let per_area = stats.triangles as f64 / (std::f64::consts::PI * 32.0 * 32.0);
        assert!((3.5..=5.0).contains(&per_area), "{per_area}");
    }

    #[test]
    fn boundary_is_a_closed_ring() {
        let mesh = DiskMesh::new(1.0, 1.0 / 16.0).unwrap();
        let mut edge_count = std::collections::HashMap::new();
        for t in &mesh.triangles {
            for e in 0..3 {
                let (a, b) = (t[e], t[(e + 1) % 3]);
                *edge_count.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        let boundary_edges = edge_count.values().filter(|&&c| c == 1).count();
        assert_eq!(boundary_edges, mesh.boundary.len());
        assert!(edge_count.values().all(|&c| c <= 2));
    }

    #[test]
    fn locate_finds_containing_triangle() {
        let mesh = DiskMesh::new(1.0, 1.0 / 16.0).unwrap();
        for t in (0..mesh.num_triangles()).step_by(7) {
            let (found, lam) = mesh.locate(mesh.barycenter(t)).unwrap();
            assert_eq!(found, t);
            assert!(lam.iter().all(|l| (l - 1.0 / 3.0).abs() < 1e-12));
        }
        let on_circle = Vec2::new(0.6, 0.8);
        assert!(mesh.locate(on_circle).is_some());
        assert!(mesh.locate(Vec2::new(1.01, 0.0)).is_none());
    }

    #[test]
    fn refuses_degenerate_and_oversized_requests() {
        assert!(matches!(DiskMesh::new(1.0, 1.0), Err(Error::InvalidParameter(_))));
        assert!(matches!(
            DiskMesh::new(8.0, 1.0 / 1024.0),
            Err(Error::Budget { .. })
        ));
    }
}
