//! Periodic isosurface extraction on the unit 3-torus.
//!
//! Cells are polygonized by tracing the intersection polygon around each
//! cube: every cube face pairs up its edge crossings (with the asymptotic
//! decider on ambiguous faces), and the pairings chain into closed cycles.
//! Because the pairing is a pure function of the shared face values, adjacent
//! cells always agree and the output is watertight by construction.
//!
//! Sample nodes sit at `(i+1/2)/res` per axis, which keeps the Schwarz P
//! nodal set away from the nodes at the resolutions used here.

use crate::error::{Error, Result};
use crate::mesh::{wrap01, LevelSet, MeshTag, SurfaceMesh};

/// Extracts the closed surface `{f = 0}` oriented away from `E = {f > 0}`.
pub fn extract_level_set(
    f: &dyn Fn([f64; 3]) -> f64,
    res: usize,
    provenance: Option<LevelSet>,
) -> Result<SurfaceMesh> {
    if res < 8 {
        return Err(Error::Config(format!(
            "level-set extraction needs resolution >= 8, got {res}"
        )));
    }
    let h = 1.0 / res as f64;
    let node = |i: usize| (i as f64 + 0.5) * h;

    // sample and snap away from exact zeros so every sign is well defined
    let mut values = vec![0.0f64; res * res * res];
    let vid = |i: usize, j: usize, k: usize| i + res * (j + res * k);
    for k in 0..res {
        for j in 0..res {
            for i in 0..res {
                let mut v = f([node(i), node(j), node(k)]);
                if v.abs() < 1e-12 {
                    v = 1e-12;
                }
                values[vid(i, j, k)] = v;
            }
        }
    }

    // crossing vertices on grid edges, one shared vertex per global edge
    let mut edge_vertex = vec![u32::MAX; 3 * res * res * res];
    let eid = |axis: usize, i: usize, j: usize, k: usize| axis + 3 * vid(i, j, k);
    let mut positions: Vec<[f64; 3]> = Vec::new();
    let wrap = |t: usize| t % res;
    for k in 0..res {
        for j in 0..res {
            for i in 0..res {
                let v0 = values[vid(i, j, k)];
                for (axis, (i1, j1, k1)) in [
                    (0, (wrap(i + 1), j, k)),
                    (1, (i, wrap(j + 1), k)),
                    (2, (i, j, wrap(k + 1))),
                ] {
                    let v1 = values[vid(i1, j1, k1)];
                    if (v0 > 0.0) != (v1 > 0.0) {
                        let t = (v0 / (v0 - v1)).clamp(1e-6, 1.0 - 1e-6);
                        let mut p = [node(i), node(j), node(k)];
                        p[axis] += t * h;
                        positions.push([wrap01(p[0]), wrap01(p[1]), wrap01(p[2])]);
                        edge_vertex[eid(axis, i, j, k)] = (positions.len() - 1) as u32;
                    }
                }
            }
        }
    }

    // cube edges: (corner offset, axis); corners are (dx,dy,dz)
    const CUBE_EDGES: [([usize; 3], usize); 12] = [
        ([0, 0, 0], 0),
        ([0, 1, 0], 0),
        ([0, 0, 1], 0),
        ([0, 1, 1], 0),
        ([0, 0, 0], 1),
        ([1, 0, 0], 1),
        ([0, 0, 1], 1),
        ([1, 0, 1], 1),
        ([0, 0, 0], 2),
        ([1, 0, 0], 2),
        ([0, 1, 0], 2),
        ([1, 1, 0], 2),
    ];
    // each face lists its 4 corners in cyclic order and the cube edge
    // between consecutive corners
    struct Face {
        corners: [usize; 4], // corner bit codes (dx | dy<<1 | dz<<2)
        edges: [usize; 4],
    }
    fn corner_code(d: [usize; 3]) -> usize {
        d[0] | d[1] << 1 | d[2] << 2
    }
    let faces: Vec<Face> = {
        let mut out = Vec::new();
        for axis in 0..3 {
            let (u, v) = ((axis + 1) % 3, (axis + 2) % 3);
            for side in 0..2 {
                let mk = |su: usize, sv: usize| {
                    let mut d = [0; 3];
                    d[axis] = side;
                    d[u] = su;
                    d[v] = sv;
                    d
                };
                let cs = [mk(0, 0), mk(1, 0), mk(1, 1), mk(0, 1)];
                let mut edges = [usize::MAX; 4];
                for e in 0..4 {
                    let a = cs[e];
                    let b = cs[(e + 1) % 4];
                    let step_axis = (0..3).find(|&ax| a[ax] != b[ax]).unwrap();
                    let origin = [a[0].min(b[0]), a[1].min(b[1]), a[2].min(b[2])];
                    edges[e] = CUBE_EDGES
                        .iter()
                        .position(|&(o, ax)| o == origin && ax == step_axis)
                        .unwrap();
                }
                out.push(Face {
                    corners: [
                        corner_code(cs[0]),
                        corner_code(cs[1]),
                        corner_code(cs[2]),
                        corner_code(cs[3]),
                    ],
                    edges,
                });
            }
        }
        out
    };

    let mut triangles: Vec<[u32; 3]> = Vec::new();
    let mut cell_edge_vertex = [u32::MAX; 12];
    let mut corner_vals = [0.0f64; 8];

    for k in 0..res {
        for j in 0..res {
            for i in 0..res {
                let mut any = false;
                for code in 0..8 {
                    let d = [code & 1, (code >> 1) & 1, (code >> 2) & 1];
                    corner_vals[code] =
                        values[vid(wrap(i + d[0]), wrap(j + d[1]), wrap(k + d[2]))];
                }
                for (e, &(o, axis)) in CUBE_EDGES.iter().enumerate() {
                    let idx = eid(axis, wrap(i + o[0]), wrap(j + o[1]), wrap(k + o[2]));
                    cell_edge_vertex[e] = edge_vertex[idx];
                    any |= cell_edge_vertex[e] != u32::MAX;
                }
                if !any {
                    continue;
                }

                // pair the crossings on each face
                let mut links: [[usize; 2]; 12] = [[usize::MAX; 2]; 12];
                fn push_link(links: &mut [[usize; 2]; 12], a: usize, b: usize) {
                    for slot in 0..2 {
                        if links[a][slot] == usize::MAX {
                            links[a][slot] = b;
                            return;
                        }
                    }
                }
                for face in &faces {
                    let crossed: Vec<usize> = face
                        .edges
                        .iter()
                        .copied()
                        .filter(|&e| cell_edge_vertex[e] != u32::MAX)
                        .collect();
                    match crossed.len() {
                        0 => {}
                        2 => {
                            push_link(&mut links, crossed[0], crossed[1]);
                            push_link(&mut links, crossed[1], crossed[0]);
                        }
                        4 => {
                            // ambiguous face: asymptotic decider on the
                            // bilinear interpolant
                            let va = corner_vals[face.corners[0]];
                            let vb = corner_vals[face.corners[1]];
                            let vc = corner_vals[face.corners[2]];
                            let vd = corner_vals[face.corners[3]];
                            // corners alternate (a,c) against (b,d); the
                            // saddle sign tells which diagonal connects
                            let joins_ac = va * vc > vb * vd;
                            let ac_positive = va > 0.0;
                            let e = face.edges;
                            let pairs = if joins_ac == ac_positive {
                                [(e[0], e[3]), (e[1], e[2])]
                            } else {
                                [(e[0], e[1]), (e[2], e[3])]
                            };
                            for (x, y) in pairs {
                                push_link(&mut links, x, y);
                                push_link(&mut links, y, x);
                            }
                        }
                        n => {
                            return Err(Error::Geometry(format!(
                                "cell ({i},{j},{k}): face with {n} crossings"
                            )));
                        }
                    }
                }

                // chain pairings into closed cycles
                let mut visited = [false; 12];
                for start in 0..12 {
                    if cell_edge_vertex[start] == u32::MAX || visited[start] {
                        continue;
                    }
                    let mut cycle = Vec::with_capacity(8);
                    let mut prev = usize::MAX;
                    let mut cur = start;
                    loop {
                        visited[cur] = true;
                        cycle.push(cur);
                        let nxt = if links[cur][0] != prev && links[cur][0] != usize::MAX {
                            links[cur][0]
                        } else {
                            links[cur][1]
                        };
                        if nxt == usize::MAX {
                            return Err(Error::Geometry(format!(
                                "cell ({i},{j},{k}): open contour"
                            )));
                        }
                        if nxt == start {
                            break;
                        }
                        prev = cur;
                        cur = nxt;
                    }
                    if cycle.len() < 3 {
                        return Err(Error::Geometry(format!(
                            "cell ({i},{j},{k}): degenerate {}-gon contour",
                            cycle.len()
                        )));
                    }

                    // orient the cycle so its right-handed normal points out
                    // of E = {f > 0}
                    let ids: Vec<u32> =
                        cycle.iter().map(|&e| cell_edge_vertex[e]).collect();
                    let anchor = positions[ids[0] as usize];
                    let lifted: Vec<[f64; 3]> = ids
                        .iter()
                        .map(|&v| SurfaceMesh::lift_near(anchor, positions[v as usize]))
                        .collect();
                    let mut newell = [0.0f64; 3];
                    for a in 0..lifted.len() {
                        let p = lifted[a];
                        let q = lifted[(a + 1) % lifted.len()];
                        newell[0] += (p[1] - q[1]) * (p[2] + q[2]);
                        newell[1] += (p[2] - q[2]) * (p[0] + q[0]);
                        newell[2] += (p[0] - q[0]) * (p[1] + q[1]);
                    }
                    let mut centroid = [0.0f64; 3];
                    for p in &lifted {
                        for a in 0..3 {
                            centroid[a] += p[a] / lifted.len() as f64;
                        }
                    }
                    let hg = h * 1e-3;
                    let mut grad = [0.0f64; 3];
                    for a in 0..3 {
                        let mut pp = centroid;
                        let mut pm = centroid;
                        pp[a] += hg;
                        pm[a] -= hg;
                        grad[a] = (f(pp) - f(pm)) / (2.0 * hg);
                    }
                    let aligned =
                        newell[0] * grad[0] + newell[1] * grad[1] + newell[2] * grad[2];
                    let ordered: Vec<u32> = if aligned > 0.0 {
                        ids.iter().rev().copied().collect()
                    } else {
                        ids
                    };

                    // fan from the smallest vertex id for determinism
                    let root = ordered
                        .iter()
                        .enumerate()
                        .min_by_key(|(_, &v)| v)
                        .map(|(idx, _)| idx)
                        .unwrap();
                    let m = ordered.len();
                    for s in 1..m - 1 {
                        triangles.push([
                            ordered[root],
                            ordered[(root + s) % m],
                            ordered[(root + s + 1) % m],
                        ]);
                    }
                }
            }
        }
    }

    let mesh = SurfaceMesh::new(positions, triangles, provenance, MeshTag::Base);
    mesh.validate()?;
    Ok(mesh)
}

/// The Schwarz P nodal function; its zero set approximates the minimal
/// surface to about a percent, and the component of `{f > 0}` containing the
/// origin is the enclosed region.
pub fn schwarz_p_level(p: [f64; 3]) -> f64 {
    let t = std::f64::consts::TAU;
    (t * p[0]).cos() + (t * p[1]).cos() + (t * p[2]).cos()
}

/// Builds the raw (unrelaxed) Schwarz P mesh and checks its topology.
pub fn build_schwarz_p_raw(resolution: usize) -> Result<SurfaceMesh> {
    if resolution < 32 {
        return Err(Error::Config(format!(
            "Schwarz P resolution must be at least 32, got {resolution}"
        )));
    }
    let mesh = extract_level_set(&schwarz_p_level, resolution, Some(LevelSet::SchwarzP))?;
    let stats = mesh.validate()?;
    if stats.euler_characteristic != -4 || stats.components != 1 {
        return Err(Error::Geometry(format!(
            "Schwarz P extraction produced chi = {}, {} components (expected -4, 1)",
            stats.euler_characteristic, stats.components
        )));
    }
    Ok(mesh)
}

/// Builds the Schwarz P base surface. With `relax` set, runs the
/// volume-constrained curvature relaxation until the discrete mean curvature
/// stops improving; the relaxed mesh is the base for the reduction stages.
pub fn build_schwarz_p(resolution: usize, relax: bool) -> Result<SurfaceMesh> {
    let raw = build_schwarz_p_raw(resolution)?;
    if !relax {
        return Ok(raw);
    }
    let opts = crate::relax::RelaxOptions::for_schwarz_p();
    let (relaxed, _report) = crate::relax::relax_to_cmc(&raw, &opts)?;
    let stats = relaxed.validate()?;
    if stats.euler_characteristic != -4 || stats.components != 1 {
        return Err(Error::Geometry(format!(
            "relaxation destroyed the Schwarz P topology: chi = {}",
            stats.euler_characteristic
        )));
    }
    Ok(relaxed)
}

/// Largest deviation of the mesh from itself under the three coordinate
/// reflections and under the half-period swap translation, measured as
/// vertex-to-surface distance.
pub fn schwarz_symmetry_deviation(mesh: &SurfaceMesh) -> (f64, f64) {
    let mut reflect_dev = 0.0f64;
    for axis in 0..3 {
        let reflected = SurfaceMesh::new(
            mesh.positions()
                .iter()
                .map(|p| {
                    let mut q = *p;
                    q[axis] = wrap01(-q[axis]);
                    q
                })
                .collect(),
            mesh.triangles().to_vec(),
            None,
            MeshTag::Base,
        );
        reflect_dev = reflect_dev.max(reflected.vertex_to_surface_deviation(mesh));
    }
    let swapped = mesh.translated([0.5, 0.5, 0.5]);
    let swap_dev = swapped.vertex_to_surface_deviation(mesh);
    (reflect_dev, swap_dev)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn sphere_extraction_matches_analytic() {
        let c = [0.5, 0.5, 0.5];
        let r = 0.3;
        let f = move |p: [f64; 3]| {
            let d = [p[0] - c[0], p[1] - c[1], p[2] - c[2]];
            r * r - (d[0] * d[0] + d[1] * d[1] + d[2] * d[2])
        };
        let mesh = extract_level_set(&f, 48, None).unwrap();
        let stats = mesh.validate().unwrap();
        assert_eq!(stats.euler_characteristic, 2);
        assert_eq!(stats.components, 1);
        let vol = mesh.enclosed_volume().unwrap();
        let exact = 4.0 / 3.0 * std::f64::consts::PI * r * r * r;
        assert_relative_eq!(vol, exact, max_relative = 1e-2);
        assert_relative_eq!(
            mesh.area(),
            4.0 * std::f64::consts::PI * r * r,
            max_relative = 2e-2
        );
    }

    #[test]
    fn schwarz_p_topology_and_volume() {
        let mesh = build_schwarz_p_raw(32).unwrap();
        let stats = mesh.validate().unwrap();
        assert_eq!(stats.euler_characteristic, -4);
        assert_eq!(stats.components, 1);
        // the half-period swap exchanges interior and exterior
        let vol = mesh.enclosed_volume().unwrap();
        assert!((vol - 0.5).abs() < 5e-3, "volume {vol}");
        // interior contains the origin
        assert!(mesh.point_is_inside([0.0, 0.0, 0.0]).unwrap());
        assert!(!mesh.point_is_inside([0.5, 0.5, 0.5]).unwrap());
    }

    #[test]
    fn schwarz_p_rejects_low_resolution() {
        assert!(matches!(
            build_schwarz_p_raw(16),
            Err(crate::error::Error::Config(_))
        ));
    }

    #[test]
    fn schwarz_p_symmetries() {
        let mesh = build_schwarz_p_raw(32).unwrap();
        let (refl, swap) = schwarz_symmetry_deviation(&mesh);
        // both deviations at mesh-tolerance scale (h = 1/32)
        assert!(refl < 1e-3, "reflection deviation {refl}");
        assert!(swap < 1e-3, "swap deviation {swap}");
    }

    #[test]
    fn ambiguous_faces_stay_watertight() {
        // a wavy two-sheeted surface rich in saddle faces at low resolution
        let f = |p: [f64; 3]| {
            let t = std::f64::consts::TAU;
            (t * p[2] * 2.0).cos() + 0.7 * (t * p[0]).cos() * (t * p[1]).sin()
        };
        let mesh = extract_level_set(&f, 16, None).unwrap();
        mesh.validate().unwrap();
    }
}
