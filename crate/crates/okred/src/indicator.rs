//! Inside/outside classification of the periodic grid against a closed mesh.
//!
//! Each grid point is classified by casting axis-aligned periodic rays in all
//! three directions and majority-voting the results. A ray direction
//! classifies a whole column of grid points at once from the sorted,
//! orientation-signed crossings of the surface with that line. Columns whose
//! crossing structure is unreliable (grazing hits, double counts on shared
//! edges) simply abstain. Remaining ties fall back to the level-set sign
//! when the mesh came from an implicit surface, then to the signed
//! nearest-triangle test.

use crate::error::Result;
use crate::field::PeriodicField;
use crate::mesh::{wrap01, SurfaceMesh, TriangleBins};

/// Classifies all cell centers of an n^3 grid: +1 inside the enclosed
/// region, -1 outside.
pub fn indicator_from_mesh(mesh: &SurfaceMesh, n: usize) -> Result<PeriodicField> {
    mesh.validate()?;
    indicator_from_mesh_unchecked(mesh, n)
}

/// Same as [`indicator_from_mesh`] without re-validating the mesh; used in
/// inner solver loops where the mesh is produced by a validated pipeline.
pub fn indicator_from_mesh_unchecked(mesh: &SurfaceMesh, n: usize) -> Result<PeriodicField> {
    let n3 = n * n * n;
    let mut votes = vec![0i8; n3];

    for dir in 0..3 {
        cast_direction(mesh, n, dir, &mut votes);
    }

    let mut values = vec![0.0f64; n3];
    let mut unresolved: Vec<usize> = Vec::new();
    for (idx, &v) in votes.iter().enumerate() {
        if v > 0 {
            values[idx] = 1.0;
        } else if v < 0 {
            values[idx] = -1.0;
        } else {
            unresolved.push(idx);
        }
    }

    if !unresolved.is_empty() {
        let h = 1.0 / n as f64;
        let point = |idx: usize| {
            let i = idx % n;
            let j = (idx / n) % n;
            let k = idx / (n * n);
            [
                (i as f64 + 0.5) * h,
                (j as f64 + 0.5) * h,
                (k as f64 + 0.5) * h,
            ]
        };
        if let Some(ls) = &mesh.level_set {
            for &idx in &unresolved {
                values[idx] = if ls.eval(point(idx)) > 0.0 { 1.0 } else { -1.0 };
            }
        } else {
            let bins = TriangleBins::build(mesh);
            for &idx in &unresolved {
                values[idx] = if mesh.point_inside_by_normal(&bins, point(idx)) {
                    1.0
                } else {
                    -1.0
                };
            }
        }
    }

    PeriodicField::from_values(n, values)
}

/// Casts periodic rays along axis `dir` through every transverse cell-center
/// column and adds one inside/outside vote per grid point.
fn cast_direction(mesh: &SurfaceMesh, n: usize, dir: usize, votes: &mut [i8]) {
    let (u, v) = ((dir + 1) % 3, (dir + 2) % 3);
    // crossings per column: (position along dir in [0,1), orientation sign)
    let mut columns: Vec<Vec<(f64, f64)>> = vec![Vec::new(); n * n];
    let nf = n as f64;

    for t in 0..mesh.triangle_count() {
        let tri = mesh.triangle_lifted(t);
        let nvec = crate::mesh::cross(
            crate::mesh::sub(tri[1], tri[0]),
            crate::mesh::sub(tri[2], tri[0]),
        );
        if nvec[dir].abs() < 1e-13 {
            continue; // grazing: no transversal crossing
        }
        let (mut ulo, mut uhi) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut vlo, mut vhi) = (f64::INFINITY, f64::NEG_INFINITY);
        for p in &tri {
            ulo = ulo.min(p[u]);
            uhi = uhi.max(p[u]);
            vlo = vlo.min(p[v]);
            vhi = vhi.max(p[v]);
        }
        // transverse cell centers (ju+0.5)/n covered by the (u,v) bounding box
        let ju_lo = (ulo * nf - 0.5).ceil() as i64;
        let ju_hi = (uhi * nf - 0.5).floor() as i64;
        let jv_lo = (vlo * nf - 0.5).ceil() as i64;
        let jv_hi = (vhi * nf - 0.5).floor() as i64;
        let e1 = crate::mesh::sub(tri[1], tri[0]);
        let e2 = crate::mesh::sub(tri[2], tri[0]);
        let det = e1[u] * e2[v] - e1[v] * e2[u];
        if det.abs() < 1e-16 {
            continue;
        }
        let sign = if nvec[dir] > 0.0 { 1.0 } else { -1.0 };
        for ju in ju_lo..=ju_hi {
            let pu = (ju as f64 + 0.5) / nf;
            for jv in jv_lo..=jv_hi {
                let pv = (jv as f64 + 0.5) / nf;
                let ru = pu - tri[0][u];
                let rv = pv - tri[0][v];
                let beta = (ru * e2[v] - rv * e2[u]) / det;
                let gamma = (e1[u] * rv - e1[v] * ru) / det;
                if beta < 0.0 || gamma < 0.0 || beta + gamma > 1.0 {
                    continue;
                }
                let x = tri[0][dir] + beta * e1[dir] + gamma * e2[dir];
                let cu = ju.rem_euclid(n as i64) as usize;
                let cv = jv.rem_euclid(n as i64) as usize;
                columns[cu + n * cv].push((wrap01(x), sign));
            }
        }
    }

    // walk each column and vote
    let mut col_state = vec![0i8; n];
    for cu in 0..n {
        for cv in 0..n {
            let crossings = &mut columns[cu + n * cv];
            if crossings.is_empty() {
                continue;
            }
            crossings.sort_by(|a, b| a.0.total_cmp(&b.0));
            // orientation must alternate exit/enter around the circle
            let mut ok = true;
            for w in 0..crossings.len() {
                let s0 = crossings[w].1;
                let s1 = crossings[(w + 1) % crossings.len()].1;
                if s0 * s1 > 0.0 {
                    ok = false;
                    break;
                }
            }
            if !ok {
                continue; // abstain: let the other directions decide
            }
            // state between crossings: inside after an entering crossing
            // (orientation sign < 0 when walking in +dir)
            let m = crossings.len();
            let mut c_idx = 0usize;
            for (s, slot) in col_state.iter_mut().enumerate() {
                let x = (s as f64 + 0.5) / nf;
                while c_idx < m && crossings[c_idx].0 <= x {
                    c_idx += 1;
                }
                // previous crossing, cyclically
                let prev = if c_idx == 0 { m - 1 } else { c_idx - 1 };
                *slot = if crossings[prev].1 < 0.0 { 1 } else { -1 };
            }
            for s in 0..n {
                let idx = match dir {
                    0 => s + n * (cu + n * cv),
                    1 => cv + n * (s + n * cu),
                    _ => cu + n * (cv + n * s),
                };
                votes[idx] = votes[idx].saturating_add(col_state[s]);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_lamella, build_sphere};
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn sphere_indicator_mean_matches_volume() {
        let r = 0.25;
        let mesh = build_sphere([0.5; 3], r, 1);
        let n = 48;
        let u = indicator_from_mesh(&mesh, n).unwrap();
        let vol = 4.0 / 3.0 * PI * r * r * r;
        let expect = 2.0 * vol - 1.0;
        let tol = 3.0 * mesh.area() / n as f64;
        assert!(
            (u.mean() - expect).abs() < tol,
            "mean {} vs {expect} (tol {tol})",
            u.mean()
        );
        // all samples are labels
        assert!(u.values().iter().all(|&v| v == 1.0 || v == -1.0));
    }

    #[test]
    fn wrapped_sphere_indicator() {
        // sphere centered at the corner: every octant wraps
        let r = 0.2;
        let mesh = build_sphere([0.0, 0.0, 0.0], r, 1);
        let n = 48;
        let u = indicator_from_mesh(&mesh, n).unwrap();
        let vol = 4.0 / 3.0 * PI * r * r * r;
        let expect = 2.0 * vol - 1.0;
        let tol = 3.0 * mesh.area() / n as f64;
        assert!((u.mean() - expect).abs() < tol, "mean {}", u.mean());
    }

    #[test]
    fn lamella_indicator_is_exact_square_wave() {
        let mesh = build_lamella(0.0, 0.5, 16);
        let n = 32;
        let u = indicator_from_mesh(&mesh, n).unwrap();
        for k in 0..n {
            for j in 0..n {
                for i in 0..n {
                    let x = (i as f64 + 0.5) / n as f64;
                    let expect = if x < 0.5 { 1.0 } else { -1.0 };
                    assert_eq!(u.values()[u.idx(i, j, k)], expect, "at i={i}");
                }
            }
        }
    }

    #[test]
    fn schwarz_p_indicator_mean_is_near_zero() {
        let mesh = crate::marching::build_schwarz_p_raw(32).unwrap();
        let u = indicator_from_mesh(&mesh, 32).unwrap();
        // swap symmetry: interior and exterior have equal volume
        assert!(u.mean().abs() < 0.02, "mean {}", u.mean());
        // and the origin cell is inside
        assert_relative_eq!(u.values()[u.idx(0, 0, 0)], 1.0);
    }
}
