//! Closed triangulated surfaces embedded in the unit 3-torus.
//!
//! Vertex positions live in `[0,1)^3`. Triangles may wrap around the torus;
//! every per-triangle computation first lifts the triangle to R^3 by the
//! minimal-image rule, which is unambiguous as long as edges are shorter
//! than half a period (validated once per mesh).

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Provenance of a mesh that was extracted from an implicit surface. Used to
/// break ties in inside/outside classification. Positive values are inside.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub enum LevelSet {
    /// `cos(2 pi x) + cos(2 pi y) + cos(2 pi z)`, positive in the component
    /// containing the origin.
    SchwarzP,
    Sphere { center: [f64; 3], radius: f64 },
    /// Slab `x0 < x_axis < x0 + thickness` (periodic in `x_axis`).
    Slab { axis: usize, x0: f64, thickness: f64 },
}

impl LevelSet {
    pub fn eval(&self, p: [f64; 3]) -> f64 {
        match self {
            LevelSet::SchwarzP => {
                let t = std::f64::consts::TAU;
                (t * p[0]).cos() + (t * p[1]).cos() + (t * p[2]).cos()
            }
            LevelSet::Sphere { center, radius } => {
                let mut d2 = 0.0;
                for a in 0..3 {
                    let d = min_image(p[a] - center[a]);
                    d2 += d * d;
                }
                radius - d2.sqrt()
            }
            LevelSet::Slab { axis, x0, thickness } => {
                let d = wrap01(p[*axis] - x0);
                if d < *thickness {
                    d.min(thickness - d)
                } else {
                    -(d - thickness).min(1.0 - d)
                }
            }
        }
    }
}

/// Mesh provenance tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MeshTag {
    Base,
    Perturbed,
}

/// A closed, consistently oriented triangle mesh in the unit 3-torus.
/// Triangle winding is right-handed around the outward normal (pointing away
/// from the enclosed region).
#[derive(Debug, Clone)]
pub struct SurfaceMesh {
    positions: Vec<[f64; 3]>,
    triangles: Vec<[u32; 3]>,
    pub level_set: Option<LevelSet>,
    pub tag: MeshTag,
}

/// Wraps a coordinate into `[0,1)`.
#[inline]
pub fn wrap01(x: f64) -> f64 {
    let y = x - x.floor();
    if y >= 1.0 {
        0.0
    } else {
        y
    }
}

/// Minimal-image representative of a coordinate difference, in `[-1/2, 1/2)`.
#[inline]
pub fn min_image(d: f64) -> f64 {
    d - (d + 0.5).floor()
}

#[inline]
pub fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn add(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub fn scale(a: [f64; 3], s: f64) -> [f64; 3] {
    [a[0] * s, a[1] * s, a[2] * s]
}

#[inline]
pub fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[inline]
pub fn norm(a: [f64; 3]) -> f64 {
    dot(a, a).sqrt()
}

impl SurfaceMesh {
    pub fn new(
        positions: Vec<[f64; 3]>,
        triangles: Vec<[u32; 3]>,
        level_set: Option<LevelSet>,
        tag: MeshTag,
    ) -> Self {
        let positions = positions
            .into_iter()
            .map(|p| [wrap01(p[0]), wrap01(p[1]), wrap01(p[2])])
            .collect();
        Self { positions, triangles, level_set, tag }
    }

    #[inline]
    pub fn positions(&self) -> &[[f64; 3]] {
        &self.positions
    }

    #[inline]
    pub fn triangles(&self) -> &[[u32; 3]] {
        &self.triangles
    }

    pub fn vertex_count(&self) -> usize {
        self.positions.len()
    }

    pub fn triangle_count(&self) -> usize {
        self.triangles.len()
    }

    /// Lifts point `p` to the representative nearest `anchor`.
    #[inline]
    pub fn lift_near(anchor: [f64; 3], p: [f64; 3]) -> [f64; 3] {
        [
            anchor[0] + min_image(p[0] - anchor[0]),
            anchor[1] + min_image(p[1] - anchor[1]),
            anchor[2] + min_image(p[2] - anchor[2]),
        ]
    }

    /// The triangle's vertices lifted to a common R^3 chart anchored at its
    /// first vertex.
    #[inline]
    pub fn triangle_lifted(&self, t: usize) -> [[f64; 3]; 3] {
        let [i, j, k] = self.triangles[t];
        let a = self.positions[i as usize];
        let b = Self::lift_near(a, self.positions[j as usize]);
        let c = Self::lift_near(a, self.positions[k as usize]);
        [a, b, c]
    }

    /// Integer wrap shifts of each triangle vertex relative to its stored
    /// position (the lift recorded in the OBJ sidecar).
    pub fn triangle_wraps(&self, t: usize) -> [[i32; 3]; 3] {
        let lifted = self.triangle_lifted(t);
        let mut out = [[0i32; 3]; 3];
        for v in 0..3 {
            let stored = self.positions[self.triangles[t][v] as usize];
            for a in 0..3 {
                out[v][a] = (lifted[v][a] - stored[a]).round() as i32;
            }
        }
        out
    }

    /// Total surface area.
    pub fn area(&self) -> f64 {
        (0..self.triangles.len())
            .map(|t| {
                let [a, b, c] = self.triangle_lifted(t);
                norm(cross(sub(b, a), sub(c, a))) * 0.5
            })
            .sum()
    }

    /// Rigid translation by `xi` (wrapped back into the torus).
    pub fn translated(&self, xi: [f64; 3]) -> SurfaceMesh {
        let positions = self
            .positions
            .iter()
            .map(|p| [wrap01(p[0] + xi[0]), wrap01(p[1] + xi[1]), wrap01(p[2] + xi[2])])
            .collect();
        SurfaceMesh {
            positions,
            triangles: self.triangles.clone(),
            level_set: None,
            tag: self.tag,
        }
    }

    /// Structural validation: closed (every undirected edge shared by exactly
    /// two triangles), consistently oriented (every directed edge used once),
    /// unambiguous minimal-image lifts. Returns Euler characteristic data.
    pub fn validate(&self) -> Result<MeshStats> {
        if self.triangles.is_empty() {
            return Err(Error::Geometry("mesh has no triangles".into()));
        }
        let mut directed: HashMap<(u32, u32), u32> = HashMap::new();
        for (t, tri) in self.triangles.iter().enumerate() {
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(Error::Geometry(format!(
                    "triangle {t} repeats a vertex index"
                )));
            }
            for e in 0..3 {
                let a = tri[e];
                let b = tri[(e + 1) % 3];
                *directed.entry((a, b)).or_insert(0) += 1;
            }
            let [a, b, c] = self.triangle_lifted(t);
            for (p, q) in [(a, b), (b, c), (c, a)] {
                for ax in 0..3 {
                    if (p[ax] - q[ax]).abs() >= 0.5 - 1e-9 {
                        return Err(Error::Geometry(format!(
                            "triangle {t} has an edge spanning half a period; lift is ambiguous"
                        )));
                    }
                }
            }
        }
        let mut undirected_edges = 0usize;
        for (&(a, b), &cnt) in &directed {
            if cnt != 1 {
                return Err(Error::Geometry(format!(
                    "directed edge ({a},{b}) used {cnt} times; orientation is inconsistent"
                )));
            }
            match directed.get(&(b, a)) {
                Some(1) => {}
                _ => {
                    return Err(Error::Geometry(format!(
                        "edge ({a},{b}) lacks an opposite half-edge; mesh is not closed"
                    )));
                }
            }
            if a < b {
                undirected_edges += 1;
            }
        }
        let v = self.positions.len() as i64;
        let e = undirected_edges as i64;
        let f = self.triangles.len() as i64;
        let euler = v - e + f;
        let components = self.component_count();
        Ok(MeshStats {
            vertices: v as usize,
            edges: e as usize,
            faces: f as usize,
            euler_characteristic: euler,
            components,
        })
    }

    fn component_count(&self) -> usize {
        let n = self.positions.len();
        let mut parent: Vec<u32> = (0..n as u32).collect();
        fn find(parent: &mut [u32], mut x: u32) -> u32 {
            while parent[x as usize] != x {
                parent[x as usize] = parent[parent[x as usize] as usize];
                x = parent[x as usize];
            }
            x
        }
        for tri in &self.triangles {
            for e in 0..3 {
                let a = find(&mut parent, tri[e]);
                let b = find(&mut parent, tri[(e + 1) % 3]);
                if a != b {
                    parent[a as usize] = b;
                }
            }
        }
        let mut roots = std::collections::HashSet::new();
        for i in 0..n as u32 {
            roots.insert(find(&mut parent, i));
        }
        roots.len()
    }

    /// Volume of the region enclosed by the mesh (the side the normals point
    /// away from), exact up to floating-point rounding.
    ///
    /// Works for surfaces that wrap the torus: the divergence theorem is
    /// applied to a sawtooth coordinate field, and the jump across the cut
    /// plane is repaid by the (recursively computed) area of the enclosed
    /// slice in that plane.
    pub fn enclosed_volume(&self) -> Result<f64> {
        let cut = choose_cut(self.positions.iter().map(|p| p[0]))?;
        let mut flux = 0.0;
        let mut segments: Vec<SliceSegment> = Vec::new();
        for t in 0..self.triangles.len() {
            let tri = self.triangle_lifted(t);
            flux += sawtooth_flux_x(&tri, cut, &mut segments);
        }
        let slice = slice_area(&segments, self, cut)?;
        Ok(flux + slice)
    }
}

/// Connectivity summary from [`SurfaceMesh::validate`].
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MeshStats {
    pub vertices: usize,
    pub edges: usize,
    pub faces: usize,
    pub euler_characteristic: i64,
    pub components: usize,
}

/// Picks a cut coordinate maximizing the gap to the given coordinates.
fn choose_cut(coords: impl Iterator<Item = f64>) -> Result<f64> {
    const CANDIDATES: [f64; 7] =
        [0.5, 0.493817, 0.261834, 0.742977, 0.128955, 0.618034, 0.381966];
    let coords: Vec<f64> = coords.collect();
    let mut best = (0.0f64, -1.0f64);
    for c in CANDIDATES {
        let gap = coords
            .iter()
            .map(|&x| min_image(x - c).abs())
            .fold(f64::INFINITY, f64::min);
        if gap > best.1 {
            best = (c, gap);
        }
    }
    if best.1 < 1e-9 {
        return Err(Error::Geometry(
            "no cut plane separates mesh coordinates; mesh is degenerate".into(),
        ));
    }
    Ok(best.0)
}

/// A boundary segment of the slice region `E ∩ {x = cut}`, stored in the
/// `(y,z)` plane with the 2-d outward normal of the slice region.
#[derive(Debug, Clone, Copy)]
struct SliceSegment {
    p: [f64; 2],
    q: [f64; 2],
    normal: [f64; 2],
}

/// Flux of `(sawtooth_c(x), 0, 0)` through a lifted triangle; appends the
/// triangle's slice-plane intersection segments to `segments`.
fn sawtooth_flux_x(tri: &[[f64; 3]; 3], cut: f64, segments: &mut Vec<SliceSegment>) -> f64 {
    let nvec = scale(cross(sub(tri[1], tri[0]), sub(tri[2], tri[0])), 0.5);
    let xs = [tri[0][0], tri[1][0], tri[2][0]];
    let xmin = xs.iter().cloned().fold(f64::INFINITY, f64::min);
    let xmax = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let k_lo = (xmin - cut).floor() as i64 + 1;
    let k_hi = (xmax - cut).floor() as i64;
    if k_lo > k_hi {
        // single sawtooth branch
        let k = (xmin - cut).floor();
        let cx = (xs[0] + xs[1] + xs[2]) / 3.0;
        return nvec[0] * (cx - k);
    }
    // the triangle straddles cut planes x = cut + k (k_lo..=k_hi); with edges
    // under half a period there is exactly one such plane
    let mut flux = 0.0;
    for k in k_lo..=k_hi {
        let plane = cut + k as f64;
        let (below, above) = clip_polygon_x(&[tri[0], tri[1], tri[2]], plane);
        let kb = (k - 1) as f64;
        let ka = k as f64;
        flux += polygon_flux_x(&below, kb);
        flux += polygon_flux_x(&above, ka);
        // intersection segment: consecutive points of `below` lying on the plane
        let mut on_plane: Vec<[f64; 3]> = below
            .iter()
            .filter(|p| (p[0] - plane).abs() < 1e-12)
            .cloned()
            .collect();
        if on_plane.len() >= 2 {
            let n2 = [nvec[1], nvec[2]];
            let n2len = (n2[0] * n2[0] + n2[1] * n2[1]).sqrt();
            if n2len > 1e-12 {
                if on_plane.len() > 2 {
                    // collinear duplicates from clipping; keep the extremes
                    on_plane.sort_by(|a, b| a[1].total_cmp(&b[1]).then(a[2].total_cmp(&b[2])));
                    on_plane = vec![on_plane[0], on_plane[on_plane.len() - 1]];
                }
                // wrap the first endpoint into the fundamental (y,z) square
                // and keep the second in the same chart
                let d = [
                    on_plane[1][1] - on_plane[0][1],
                    on_plane[1][2] - on_plane[0][2],
                ];
                let p = [wrap01(on_plane[0][1]), wrap01(on_plane[0][2])];
                segments.push(SliceSegment {
                    p,
                    q: [p[0] + d[0], p[1] + d[1]],
                    normal: [n2[0] / n2len, n2[1] / n2len],
                });
            }
        }
    }
    flux
}

/// Flux of `(x - k, 0, 0)` through a planar polygon (fan decomposition; the
/// integrand is linear, so centroid quadrature per sub-triangle is exact).
fn polygon_flux_x(poly: &[[f64; 3]], k: f64) -> f64 {
    if poly.len() < 3 {
        return 0.0;
    }
    let mut flux = 0.0;
    for i in 1..poly.len() - 1 {
        let a = poly[0];
        let b = poly[i];
        let c = poly[i + 1];
        let nvec = scale(cross(sub(b, a), sub(c, a)), 0.5);
        let cx = (a[0] + b[0] + c[0]) / 3.0;
        flux += nvec[0] * (cx - k);
    }
    flux
}

/// Splits a convex polygon by the plane `x = plane` into (below, above).
/// Points on the plane are kept in both parts.
fn clip_polygon_x(poly: &[[f64; 3]], plane: f64) -> (Vec<[f64; 3]>, Vec<[f64; 3]>) {
    let mut below = Vec::with_capacity(poly.len() + 2);
    let mut above = Vec::with_capacity(poly.len() + 2);
    let m = poly.len();
    for i in 0..m {
        let p = poly[i];
        let q = poly[(i + 1) % m];
        let dp = p[0] - plane;
        let dq = q[0] - plane;
        if dp <= 0.0 {
            below.push(p);
        }
        if dp >= 0.0 {
            above.push(p);
        }
        if (dp < 0.0 && dq > 0.0) || (dp > 0.0 && dq < 0.0) {
            let t = dp / (dp - dq);
            let x = [plane, p[1] + t * (q[1] - p[1]), p[2] + t * (q[2] - p[2])];
            below.push(x);
            above.push(x);
        }
    }
    (below, above)
}

/// Area of the slice region `E ∩ {x = cut}` on the `(y,z)` 2-torus, from its
/// oriented boundary segments. Falls back to a point-membership query when
/// the slice has no boundary at all.
fn slice_area(segments: &[SliceSegment], mesh: &SurfaceMesh, cut: f64) -> Result<f64> {
    if segments.is_empty() {
        let probe = [cut, 0.5, 0.5];
        return Ok(if mesh.point_is_inside(probe)? { 1.0 } else { 0.0 });
    }
    let cut2 = choose_cut(segments.iter().flat_map(|s| [s.p[0], wrap01(s.q[0])]))?;
    let mut flux = 0.0;
    let mut crossings: Vec<(f64, f64)> = Vec::new(); // (z, normal_z sign)
    for seg in segments {
        let len = ((seg.q[0] - seg.p[0]).powi(2) + (seg.q[1] - seg.p[1]).powi(2)).sqrt();
        if len < 1e-15 {
            continue;
        }
        let ys = [seg.p[0], seg.q[0]];
        let ymin = ys[0].min(ys[1]);
        let ymax = ys[0].max(ys[1]);
        let k_lo = (ymin - cut2).floor() as i64 + 1;
        let k_hi = (ymax - cut2).floor() as i64;
        if k_lo > k_hi {
            let k = (ymin - cut2).floor();
            let ym = 0.5 * (seg.p[0] + seg.q[0]);
            flux += len * seg.normal[0] * (ym - k);
        } else {
            for k in k_lo..=k_hi {
                let plane = cut2 + k as f64;
                // split the segment at y = plane
                let t = (plane - seg.p[0]) / (seg.q[0] - seg.p[0]);
                let zc = seg.p[1] + t * (seg.q[1] - seg.p[1]);
                let (p1, q1) = (seg.p, [plane, zc]);
                let (p2, q2) = ([plane, zc], seg.q);
                for (pa, qa) in [(p1, q1), (p2, q2)] {
                    let ym = 0.5 * (pa[0] + qa[0]);
                    let kk = (ym - cut2).floor();
                    let l = ((qa[0] - pa[0]).powi(2) + (qa[1] - pa[1]).powi(2)).sqrt();
                    flux += l * seg.normal[0] * (ym - kk);
                }
                if seg.normal[1].abs() < 1e-10 {
                    return Err(Error::Geometry(
                        "slice boundary tangent to secondary cut line".into(),
                    ));
                }
                crossings.push((wrap01(zc), seg.normal[1]));
            }
        }
    }
    let line_len = if crossings.is_empty() {
        let probe = [cut, cut2, 0.5];
        if mesh.point_is_inside(probe)? {
            1.0
        } else {
            0.0
        }
    } else {
        inside_length_on_circle(&mut crossings)?
    };
    Ok(flux + line_len)
}

/// Total length of the "inside" arcs of a circle given oriented boundary
/// crossings: sign < 0 enters the inside set (walking in +coordinate
/// direction), sign > 0 leaves it.
fn inside_length_on_circle(crossings: &mut [(f64, f64)]) -> Result<f64> {
    crossings.sort_by(|a, b| a.0.total_cmp(&b.0));
    let m = crossings.len();
    if m % 2 != 0 {
        return Err(Error::Geometry(
            "odd number of slice-line crossings; mesh or lift is inconsistent".into(),
        ));
    }
    for w in 0..m {
        let s0 = crossings[w].1;
        let s1 = crossings[(w + 1) % m].1;
        if s0 * s1 > 0.0 {
            return Err(Error::Geometry(
                "slice-line crossings fail to alternate; mesh orientation is inconsistent".into(),
            ));
        }
    }
    let mut total = 0.0;
    for w in 0..m {
        if crossings[w].1 < 0.0 {
            let z_in = crossings[w].0;
            let z_out = crossings[(w + 1) % m].0;
            total += wrap01(z_out - z_in);
        }
    }
    Ok(total)
}

// ---------------------------------------------------------------------------
// point queries
// ---------------------------------------------------------------------------

/// Uniform-grid triangle index for nearest-triangle queries on the torus.
pub struct TriangleBins {
    bins: Vec<Vec<u32>>,
    b: usize,
}

impl TriangleBins {
    pub fn build(mesh: &SurfaceMesh) -> Self {
        let b = ((mesh.triangle_count() as f64).powf(1.0 / 3.0).ceil() as usize).clamp(4, 64);
        let mut bins = vec![Vec::new(); b * b * b];
        for t in 0..mesh.triangle_count() {
            let tri = mesh.triangle_lifted(t);
            let mut lo = [f64::INFINITY; 3];
            let mut hi = [f64::NEG_INFINITY; 3];
            for v in &tri {
                for a in 0..3 {
                    lo[a] = lo[a].min(v[a]);
                    hi[a] = hi[a].max(v[a]);
                }
            }
            let eps = 1e-9;
            let cell = |x: f64| (wrap01(x) * b as f64).floor() as usize % b;
            let span = |a: usize| -> Vec<usize> {
                let lo_c = ((lo[a] - eps) * b as f64).floor() as i64;
                let hi_c = ((hi[a] + eps) * b as f64).floor() as i64;
                (lo_c..=hi_c)
                    .map(|c| c.rem_euclid(b as i64) as usize)
                    .collect()
            };
            let _ = cell;
            let (sx, sy, sz) = (span(0), span(1), span(2));
            for &i in &sx {
                for &j in &sy {
                    for &k in &sz {
                        bins[i + b * (j + b * k)].push(t as u32);
                    }
                }
            }
        }
        Self { bins, b }
    }

    /// Triangles within an expanding shell neighborhood of `p` (ring count
    /// grows until candidates exist, plus one safety ring).
    fn candidates(&self, p: [f64; 3]) -> Vec<u32> {
        let b = self.b as i64;
        let cx = (wrap01(p[0]) * self.b as f64).floor() as i64;
        let cy = (wrap01(p[1]) * self.b as f64).floor() as i64;
        let cz = (wrap01(p[2]) * self.b as f64).floor() as i64;
        let mut out = Vec::new();
        let mut ring = 0i64;
        let max_ring = self.b as i64 / 2 + 1;
        let mut found_at: Option<i64> = None;
        while ring <= max_ring {
            for dz in -ring..=ring {
                for dy in -ring..=ring {
                    for dx in -ring..=ring {
                        if dx.abs().max(dy.abs()).max(dz.abs()) != ring {
                            continue;
                        }
                        let i = (cx + dx).rem_euclid(b) as usize;
                        let j = (cy + dy).rem_euclid(b) as usize;
                        let k = (cz + dz).rem_euclid(b) as usize;
                        out.extend_from_slice(&self.bins[i + self.b * (j + self.b * k)]);
                    }
                }
            }
            if let Some(f) = found_at {
                if ring >= f + 1 {
                    break;
                }
            } else if !out.is_empty() {
                found_at = Some(ring);
            }
            ring += 1;
        }
        out.sort_unstable();
        out.dedup();
        out
    }
}

/// Closest point on a lifted triangle (Ericson's method), with the feature
/// kind: 0 face, 1 edge, 2 vertex.
fn closest_point_triangle(p: [f64; 3], tri: &[[f64; 3]; 3]) -> ([f64; 3], u8) {
    let (a, b, c) = (tri[0], tri[1], tri[2]);
    let ab = sub(b, a);
    let ac = sub(c, a);
    let ap = sub(p, a);
    let d1 = dot(ab, ap);
    let d2 = dot(ac, ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return (a, 2);
    }
    let bp = sub(p, b);
    let d3 = dot(ab, bp);
    let d4 = dot(ac, bp);
    if d3 >= 0.0 && d4 <= d3 {
        return (b, 2);
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return (add(a, scale(ab, v)), 1);
    }
    let cp = sub(p, c);
    let d5 = dot(ab, cp);
    let d6 = dot(ac, cp);
    if d6 >= 0.0 && d5 <= d6 {
        return (c, 2);
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return (add(a, scale(ac, w)), 1);
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return (add(b, scale(sub(c, b), w)), 1);
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    (add(a, add(scale(ab, v), scale(ac, w))), 0)
}

impl SurfaceMesh {
    /// Unsigned distance from a torus point to the surface.
    pub fn point_surface_distance(&self, bins: &TriangleBins, p: [f64; 3]) -> f64 {
        let mut best = f64::INFINITY;
        for &t in &bins.candidates(p) {
            let tri0 = self.triangle_lifted(t as usize);
            // lift the triangle chart near the query point
            let shift = sub(SurfaceMesh::lift_near(p, tri0[0]), tri0[0]);
            let tri = [add(tri0[0], shift), add(tri0[1], shift), add(tri0[2], shift)];
            let (q, _) = closest_point_triangle(p, &tri);
            best = best.min(norm(sub(p, q)));
        }
        best
    }

    /// Signed side test via the angle-weighted pseudonormal at the closest
    /// feature: positive means inside the enclosed region.
    pub fn point_inside_by_normal(&self, bins: &TriangleBins, p: [f64; 3]) -> bool {
        let cands = bins.candidates(p);
        let mut best = f64::INFINITY;
        let mut records: Vec<(f64, [f64; 3], [f64; 3], u8)> = Vec::new();
        for &t in &cands {
            let tri0 = self.triangle_lifted(t as usize);
            let shift = sub(SurfaceMesh::lift_near(p, tri0[0]), tri0[0]);
            let tri = [add(tri0[0], shift), add(tri0[1], shift), add(tri0[2], shift)];
            let (q, feat) = closest_point_triangle(p, &tri);
            let d = norm(sub(p, q));
            best = best.min(d);
            let nvec = cross(sub(tri[1], tri[0]), sub(tri[2], tri[0]));
            // angle weight at the closest feature
            let w = match feat {
                0 => 2.0 * std::f64::consts::PI,
                1 => std::f64::consts::PI,
                _ => {
                    // find which vertex and use its interior angle
                    let mut ang = 1.0;
                    for v in 0..3 {
                        if norm(sub(q, tri[v])) < 1e-12 {
                            let u = sub(tri[(v + 1) % 3], tri[v]);
                            let w2 = sub(tri[(v + 2) % 3], tri[v]);
                            let cosang =
                                (dot(u, w2) / (norm(u) * norm(w2))).clamp(-1.0, 1.0);
                            ang = cosang.acos();
                            break;
                        }
                    }
                    ang
                }
            };
            let nl = norm(nvec);
            if nl > 0.0 {
                records.push((d, scale(nvec, w / nl), q, feat));
            }
        }
        // the pseudonormal is only meaningful summed over triangles sharing
        // the same closest feature point
        let best_rec = records
            .iter()
            .filter(|r| r.0 <= best * (1.0 + 1e-9) + 1e-13)
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .cloned();
        let Some((_, _, qbest, _)) = best_rec else {
            return false;
        };
        let mut pseudo = [0.0; 3];
        for (d, wn, q, _) in &records {
            if *d <= best * (1.0 + 1e-9) + 1e-13 && norm(sub(*q, qbest)) < 1e-10 {
                pseudo = add(pseudo, *wn);
            }
        }
        // outward normal points away from the inside: inside when the
        // displacement from the surface opposes the pseudonormal
        dot(pseudo, sub(p, qbest)) < 0.0
    }

    /// Convenience single-point membership query (builds a throwaway index;
    /// use [`TriangleBins`] directly for batches).
    pub fn point_is_inside(&self, p: [f64; 3]) -> Result<bool> {
        if let Some(ls) = &self.level_set {
            return Ok(ls.eval(p) > 0.0);
        }
        let bins = TriangleBins::build(self);
        Ok(self.point_inside_by_normal(&bins, p))
    }

    /// Largest distance from any vertex of `self` to the surface of `other`.
    pub fn vertex_to_surface_deviation(&self, other: &SurfaceMesh) -> f64 {
        let bins = TriangleBins::build(other);
        self.positions
            .iter()
            .map(|&p| other.point_surface_distance(&bins, p))
            .fold(0.0, f64::max)
    }
}

// ---------------------------------------------------------------------------
// reference meshes
// ---------------------------------------------------------------------------

/// Icosphere of the given radius centered at `center`. Refinement level `r`
/// subdivides the icosahedron `r + 2` times, so level 3 encloses the ball
/// volume to about 1e-4 absolute at radius 0.25. Fits inside the unit cell
/// when `radius < 0.5`.
pub fn build_sphere(center: [f64; 3], radius: f64, refine: u32) -> SurfaceMesh {
    let subdivisions = refine + 2;
    let t = (1.0 + 5.0f64.sqrt()) / 2.0;
    let mut verts: Vec<[f64; 3]> = vec![
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ];
    for v in verts.iter_mut() {
        let n = norm(*v);
        *v = scale(*v, 1.0 / n);
    }
    let mut tris: Vec<[u32; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut midpoint: HashMap<(u32, u32), u32> = HashMap::new();
        let mut new_tris = Vec::with_capacity(tris.len() * 4);
        for tri in &tris {
            let mut mids = [0u32; 3];
            for e in 0..3 {
                let a = tri[e].min(tri[(e + 1) % 3]);
                let b = tri[e].max(tri[(e + 1) % 3]);
                mids[e] = *midpoint.entry((a, b)).or_insert_with(|| {
                    let m = add(verts[a as usize], verts[b as usize]);
                    let m = scale(m, 1.0 / norm(m));
                    verts.push(m);
                    (verts.len() - 1) as u32
                });
            }
            new_tris.push([tri[0], mids[0], mids[2]]);
            new_tris.push([tri[1], mids[1], mids[0]]);
            new_tris.push([tri[2], mids[2], mids[1]]);
            new_tris.push([mids[0], mids[1], mids[2]]);
        }
        tris = new_tris;
    }
    let positions = verts
        .into_iter()
        .map(|v| {
            [
                wrap01(center[0] + radius * v[0]),
                wrap01(center[1] + radius * v[1]),
                wrap01(center[2] + radius * v[2]),
            ]
        })
        .collect();
    SurfaceMesh::new(
        positions,
        tris,
        Some(LevelSet::Sphere { center, radius }),
        MeshTag::Base,
    )
}

/// Two parallel planes orthogonal to `e1` bounding the slab
/// `{x0 < x < x0 + thickness}`, each triangulated as a flat torus grid.
pub fn build_lamella(x0: f64, thickness: f64, res: usize) -> SurfaceMesh {
    let mut positions = Vec::with_capacity(2 * res * res);
    let mut triangles = Vec::with_capacity(4 * res * res);
    for (plane, outward_positive) in [(wrap01(x0 + thickness), true), (wrap01(x0), false)] {
        let base = positions.len() as u32;
        for j in 0..res {
            for i in 0..res {
                positions.push([plane, i as f64 / res as f64, j as f64 / res as f64]);
            }
        }
        for j in 0..res as u32 {
            for i in 0..res as u32 {
                let r = res as u32;
                let v00 = base + i + r * j;
                let v10 = base + (i + 1) % r + r * j;
                let v01 = base + i + r * ((j + 1) % r);
                let v11 = base + (i + 1) % r + r * ((j + 1) % r);
                if outward_positive {
                    // outward normal +e1: right-handed winding in (y,z)
                    triangles.push([v00, v10, v11]);
                    triangles.push([v00, v11, v01]);
                } else {
                    triangles.push([v00, v11, v10]);
                    triangles.push([v00, v01, v11]);
                }
            }
        }
    }
    SurfaceMesh::new(
        positions,
        triangles,
        Some(LevelSet::Slab { axis: 0, x0: wrap01(x0), thickness }),
        MeshTag::Base,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn sphere_stats_and_volume() {
        let r = 0.25;
        let mesh = build_sphere([0.5, 0.5, 0.5], r, 1);
        let stats = mesh.validate().unwrap();
        assert_eq!(stats.euler_characteristic, 2);
        assert_eq!(stats.components, 1);
        let vol = mesh.enclosed_volume().unwrap();
        let exact = 4.0 / 3.0 * std::f64::consts::PI * r * r * r;
        // inscribed polyhedron: slightly below the ball volume
        assert!(vol < exact);
        assert_relative_eq!(vol, exact, max_relative = 1e-2);
        let area = mesh.area();
        assert_relative_eq!(area, 4.0 * std::f64::consts::PI * r * r, max_relative = 1e-2);
    }

    #[test]
    fn sphere_volume_at_refinement_3() {
        let r = 0.25;
        let exact = 4.0 / 3.0 * std::f64::consts::PI * r * r * r;
        let vol = build_sphere([0.5; 3], r, 3).enclosed_volume().unwrap();
        assert!((vol - exact).abs() < 1e-4, "volume {vol} vs {exact}");
    }

    #[test]
    fn sphere_volume_converges() {
        let r = 0.25;
        let exact = 4.0 / 3.0 * std::f64::consts::PI * r * r * r;
        let e1 = (build_sphere([0.5; 3], r, 1).enclosed_volume().unwrap() - exact).abs();
        let e2 = (build_sphere([0.5; 3], r, 2).enclosed_volume().unwrap() - exact).abs();
        assert!(e2 < e1 / 3.0, "expected ~4x volume error reduction: {e1} -> {e2}");
    }

    #[test]
    fn sphere_volume_translation_invariant() {
        let mesh = build_sphere([0.5, 0.5, 0.5], 0.2, 1);
        let v0 = mesh.enclosed_volume().unwrap();
        // translation that forces plenty of wrapping
        let moved = mesh.translated([0.9, 0.45, 0.77]);
        let v1 = moved.enclosed_volume().unwrap();
        assert_relative_eq!(v0, v1, epsilon = 1e-12);
        assert_relative_eq!(mesh.area(), moved.area(), epsilon = 1e-12);
    }

    #[test]
    fn lamella_volume_is_exact_thickness() {
        let mesh = build_lamella(0.2, 0.37, 8);
        mesh.validate().unwrap();
        let vol = mesh.enclosed_volume().unwrap();
        assert_relative_eq!(vol, 0.37, epsilon = 1e-12);
        // wrapping slab: interior contains the cut plane x = 0
        let wrapped = build_lamella(0.8, 0.37, 8);
        assert_relative_eq!(wrapped.enclosed_volume().unwrap(), 0.37, epsilon = 1e-12);
        let stats = wrapped.validate().unwrap();
        assert_eq!(stats.euler_characteristic, 0);
        assert_eq!(stats.components, 2);
    }

    #[test]
    fn flipped_orientation_gives_complement_volume() {
        let mesh = build_sphere([0.5; 3], 0.25, 2);
        let vol = mesh.enclosed_volume().unwrap();
        let flipped = SurfaceMesh::new(
            mesh.positions().to_vec(),
            mesh.triangles().iter().map(|t| [t[0], t[2], t[1]]).collect(),
            None,
            MeshTag::Base,
        );
        let cvol = flipped.enclosed_volume().unwrap();
        assert_relative_eq!(vol + cvol, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn open_mesh_is_rejected() {
        let mut tris = build_sphere([0.5; 3], 0.2, 1).triangles().to_vec();
        let positions = build_sphere([0.5; 3], 0.2, 1).positions().to_vec();
        tris.pop();
        let broken = SurfaceMesh::new(positions, tris, None, MeshTag::Base);
        assert!(matches!(broken.validate(), Err(Error::Geometry(_))));
    }

    #[test]
    fn signed_membership_queries() {
        let mesh = build_sphere([0.5; 3], 0.25, 3);
        let bins = TriangleBins::build(&mesh);
        assert!(mesh.point_inside_by_normal(&bins, [0.5, 0.5, 0.5]));
        assert!(mesh.point_inside_by_normal(&bins, [0.6, 0.45, 0.52]));
        assert!(!mesh.point_inside_by_normal(&bins, [0.9, 0.5, 0.5]));
        assert!(!mesh.point_inside_by_normal(&bins, [0.02, 0.03, 0.9]));
        let d = mesh.point_surface_distance(&bins, [0.5, 0.5, 0.5]);
        assert_relative_eq!(d, 0.25, max_relative = 1e-3);
    }
}
