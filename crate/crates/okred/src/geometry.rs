//! Discrete differential geometry of embedded periodic surfaces: normals,
//! curvatures, area weights, the cotangent stiffness form, normal-graph
//! perturbations, and the normal-offset volume expansion.
//!
//! Conventions: the normal points away from the enclosed region; the mean
//! curvature is the sum of principal curvatures (a sphere of radius `r` with
//! outward normal has `H = 2/r`); the squared second fundamental form is
//! `|A|^2 = H^2 - 2K`.

use crate::error::{Error, Result};
use crate::mesh::{add, cross, dot, norm, scale, sub, wrap01, MeshTag, SurfaceMesh};
use crate::sparse::CsrMatrix;

/// Per-vertex geometric data for a validated mesh.
#[derive(Debug, Clone)]
pub struct GeometryCache {
    /// Outward unit normals (angle-weighted).
    pub normals: Vec<[f64; 3]>,
    /// Lumped vertex area weights (one third of incident triangle areas).
    pub vertex_area: Vec<f64>,
    /// Mean curvature `H = k1 + k2` from the area gradient.
    pub mean_curvature: Vec<f64>,
    /// Gauss curvature from the angle defect.
    pub gauss_curvature: Vec<f64>,
    /// `|A|^2 = H^2 - 2K`, clamped at zero against rounding.
    pub second_form_sq: Vec<f64>,
    /// Cotangent stiffness matrix (weak Laplace-Beltrami, positive
    /// semidefinite, constants in the kernel).
    pub stiffness: CsrMatrix,
    pub total_area: f64,
    pub mean_edge_length: f64,
}

impl GeometryCache {
    /// Mass-weighted integral of a vertex function.
    pub fn integrate(&self, w: &[f64]) -> f64 {
        w.iter().zip(&self.vertex_area).map(|(a, b)| a * b).sum()
    }

    /// Mass-weighted L2 inner product.
    pub fn inner(&self, u: &[f64], v: &[f64]) -> f64 {
        u.iter()
            .zip(v)
            .zip(&self.vertex_area)
            .map(|((a, b), m)| a * b * m)
            .sum()
    }

    /// Mass-weighted L2 norm.
    pub fn l2_norm(&self, u: &[f64]) -> f64 {
        self.inner(u, u).sqrt()
    }

    /// Component of the normal along coordinate axis `i` at every vertex
    /// (the translational Jacobi fields).
    pub fn normal_component(&self, i: usize) -> Vec<f64> {
        self.normals.iter().map(|n| n[i]).collect()
    }

    /// Area-weighted mean of a vertex function.
    pub fn mean(&self, w: &[f64]) -> f64 {
        self.integrate(w) / self.total_area
    }
}

/// Computes the geometry cache. Fails on degenerate triangles.
pub fn compute_geometry(mesh: &SurfaceMesh) -> Result<GeometryCache> {
    let nv = mesh.vertex_count();
    let mut normals = vec![[0.0f64; 3]; nv];
    let mut vertex_area = vec![0.0f64; nv];
    let mut area_gradient = vec![[0.0f64; 3]; nv];
    let mut angle_sum = vec![0.0f64; nv];
    let mut triplets: Vec<(u32, u32, f64)> = Vec::with_capacity(mesh.triangle_count() * 12);
    let mut total_area = 0.0;
    let mut edge_len_sum = 0.0;

    for t in 0..mesh.triangle_count() {
        let idx = mesh.triangles()[t];
        let tri = mesh.triangle_lifted(t);
        let e = [
            sub(tri[2], tri[1]), // opposite vertex 0
            sub(tri[0], tri[2]), // opposite vertex 1
            sub(tri[1], tri[0]), // opposite vertex 2
        ];
        let nvec = cross(e[2], scale(e[1], -1.0));
        let area2 = norm(nvec);
        let area = 0.5 * area2;
        if area < 1e-14 {
            return Err(Error::Geometry(format!(
                "triangle {t} ({},{},{}) is degenerate: area = {area:.3e}",
                idx[0], idx[1], idx[2]
            )));
        }
        total_area += area;
        edge_len_sum += (norm(e[0]) + norm(e[1]) + norm(e[2])) / 3.0;
        let unit_n = scale(nvec, 1.0 / area2);

        let mut angles = [0.0f64; 3];
        let mut cots = [0.0f64; 3];
        for v in 0..3 {
            let u1 = e[(v + 2) % 3];
            let u2 = scale(e[(v + 1) % 3], -1.0);
            let cosang = (dot(u1, u2) / (norm(u1) * norm(u2))).clamp(-1.0, 1.0);
            angles[v] = cosang.acos();
            cots[v] = dot(u1, u2) / area2;
        }
        let obtuse = (0..3).find(|&v| angles[v] > std::f64::consts::FRAC_PI_2);
        for v in 0..3 {
            let vid = idx[v] as usize;
            angle_sum[vid] += angles[v];
            normals[vid] = add(normals[vid], scale(unit_n, angles[v]));
            // mixed Voronoi area (clamped on obtuse triangles)
            vertex_area[vid] += match obtuse {
                None => {
                    let l1 = dot(e[(v + 1) % 3], e[(v + 1) % 3]);
                    let l2 = dot(e[(v + 2) % 3], e[(v + 2) % 3]);
                    (l1 * cots[(v + 1) % 3] + l2 * cots[(v + 2) % 3]) / 8.0
                }
                Some(o) if o == v => area / 2.0,
                Some(_) => area / 4.0,
            };
            // gradient of this triangle's area with respect to vertex v
            area_gradient[vid] = add(area_gradient[vid], scale(cross(unit_n, e[v]), 0.5));
            // cotangent weight of the opposite edge
            let (a, b) = (idx[(v + 1) % 3], idx[(v + 2) % 3]);
            let w = 0.5 * cots[v];
            triplets.push((a, a, w));
            triplets.push((b, b, w));
            triplets.push((a, b, -w));
            triplets.push((b, a, -w));
        }
    }

    let mut mean_curvature = vec![0.0f64; nv];
    let mut gauss_curvature = vec![0.0f64; nv];
    let mut second_form_sq = vec![0.0f64; nv];
    for v in 0..nv {
        let len = norm(normals[v]);
        if len < 1e-14 || vertex_area[v] <= 0.0 {
            return Err(Error::Geometry(format!(
                "vertex {v} has a degenerate normal or zero area weight"
            )));
        }
        normals[v] = scale(normals[v], 1.0 / len);
        mean_curvature[v] = dot(area_gradient[v], normals[v]) / vertex_area[v];
        gauss_curvature[v] =
            (2.0 * std::f64::consts::PI - angle_sum[v]) / vertex_area[v];
        second_form_sq[v] =
            (mean_curvature[v] * mean_curvature[v] - 2.0 * gauss_curvature[v]).max(0.0);
    }

    let stiffness = CsrMatrix::from_triplets(nv, &mut triplets);
    let mean_edge_length = edge_len_sum / mesh.triangle_count() as f64;

    Ok(GeometryCache {
        normals,
        vertex_area,
        mean_curvature,
        gauss_curvature,
        second_form_sq,
        stiffness,
        total_area,
        mean_edge_length,
    })
}

/// Displaces the mesh by `x + xi + w(x) nu(x)` and wraps back into the torus.
/// Connectivity is unchanged. `cap` bounds the normal displacement so the
/// result stays an embedded normal graph.
pub fn perturb(
    mesh: &SurfaceMesh,
    geom: &GeometryCache,
    w: &[f64],
    xi: [f64; 3],
    cap: f64,
) -> Result<SurfaceMesh> {
    if w.len() != mesh.vertex_count() {
        return Err(Error::Inconsistency(format!(
            "perturbation has {} entries for {} vertices",
            w.len(),
            mesh.vertex_count()
        )));
    }
    let wmax = w.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if wmax > cap {
        return Err(Error::Geometry(format!(
            "perturbation too large: max |w| = {wmax:.3e} exceeds cap {cap:.3e}"
        )));
    }
    let positions = mesh
        .positions()
        .iter()
        .zip(&geom.normals)
        .zip(w)
        .map(|((p, n), wi)| {
            [
                wrap01(p[0] + xi[0] + wi * n[0]),
                wrap01(p[1] + xi[1] + wi * n[1]),
                wrap01(p[2] + xi[2] + wi * n[2]),
            ]
        })
        .collect();
    Ok(SurfaceMesh::new(
        positions,
        mesh.triangles().to_vec(),
        None,
        MeshTag::Perturbed,
    ))
}

/// Normal-offset volume change split into its linear part `∫ w dσ` and the
/// higher-order remainder `∫ (H w^2/2 + K w^3/3) dσ` from the offset
/// Jacobian `(1 + z k1)(1 + z k2)`.
pub fn volume_expansion(geom: &GeometryCache, w: &[f64], cap: f64) -> Result<(f64, f64)> {
    let wmax = w.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if wmax > cap {
        return Err(Error::Geometry(format!(
            "volume expansion outside the graph regime: max |w| = {wmax:.3e} > {cap:.3e}"
        )));
    }
    let mut linear = 0.0;
    let mut remainder = 0.0;
    for v in 0..w.len() {
        let a = geom.vertex_area[v];
        let h = geom.mean_curvature[v];
        let k = geom.gauss_curvature[v];
        linear += a * w[v];
        remainder += a * (0.5 * h * w[v] * w[v] + k * w[v] * w[v] * w[v] / 3.0);
    }
    Ok((linear, remainder))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_lamella, build_sphere};
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn sphere_curvatures() {
        let r = 0.25;
        let mesh = build_sphere([0.5; 3], r, 1);
        let geom = compute_geometry(&mesh).unwrap();
        // H = 2/r within 2%, everywhere
        for v in 0..mesh.vertex_count() {
            assert_relative_eq!(geom.mean_curvature[v], 2.0 / r, max_relative = 0.02);
        }
        // Gauss-Bonnet is exact for the angle defect
        let total_k = geom.integrate(&geom.gauss_curvature);
        assert_relative_eq!(total_k, 4.0 * PI, epsilon = 1e-9);
        // |A|^2 = 2/r^2 within 5%
        let aa = geom.second_form_sq.iter().sum::<f64>() / mesh.vertex_count() as f64;
        assert_relative_eq!(aa, 2.0 / (r * r), max_relative = 0.05);
    }

    #[test]
    fn sphere_curvature_at_refinement_3() {
        let r = 0.25;
        let mesh = build_sphere([0.5; 3], r, 3);
        let geom = compute_geometry(&mesh).unwrap();
        for v in 0..mesh.vertex_count() {
            assert_relative_eq!(geom.mean_curvature[v], 2.0 / r, max_relative = 0.02);
        }
    }

    #[test]
    fn schwarz_p_gauss_bonnet() {
        let mesh = crate::marching::build_schwarz_p_raw(32).unwrap();
        let geom = compute_geometry(&mesh).unwrap();
        let total_k = geom.integrate(&geom.gauss_curvature);
        assert_relative_eq!(total_k, -8.0 * PI, epsilon = 1e-9);
    }

    #[test]
    fn normal_components_integrate_to_zero() {
        let mesh = crate::marching::build_schwarz_p_raw(32).unwrap();
        let geom = compute_geometry(&mesh).unwrap();
        for i in 0..3 {
            let nu = geom.normal_component(i);
            let integral = geom.integrate(&nu).abs();
            assert!(
                integral < 1e-3 * geom.total_area,
                "axis {i}: |∫nu dσ| = {integral}"
            );
        }
    }

    #[test]
    fn stiffness_annihilates_constants_and_is_psd() {
        let mesh = build_sphere([0.5; 3], 0.25, 1);
        let geom = compute_geometry(&mesh).unwrap();
        let ones = vec![1.0; mesh.vertex_count()];
        let y = geom.stiffness.mul_vec_alloc(&ones);
        let max = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(max < 1e-12, "stiffness row sums {max}");
        // Dirichlet energy of x-coordinate restricted to the sphere is positive
        let xs: Vec<f64> = mesh.positions().iter().map(|p| p[0]).collect();
        assert!(geom.stiffness.bilinear(&xs, &xs) > 0.0);
    }

    #[test]
    fn perturb_identity_and_translation() {
        let mesh = build_sphere([0.5; 3], 0.25, 1);
        let geom = compute_geometry(&mesh).unwrap();
        let zero = vec![0.0; mesh.vertex_count()];
        let same = perturb(&mesh, &geom, &zero, [0.0; 3], 0.1).unwrap();
        for (p, q) in mesh.positions().iter().zip(same.positions()) {
            assert_eq!(p, q);
        }
        let moved = perturb(&mesh, &geom, &zero, [0.5, 0.0, 0.0], 0.1).unwrap();
        assert_relative_eq!(moved.area(), mesh.area(), epsilon = 1e-12);
        assert_relative_eq!(
            moved.enclosed_volume().unwrap(),
            mesh.enclosed_volume().unwrap(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn perturb_concentric_sphere_area() {
        let r = 0.25;
        let eps = 0.01;
        let mesh = build_sphere([0.5; 3], r, 1);
        let geom = compute_geometry(&mesh).unwrap();
        let w = vec![eps; mesh.vertex_count()];
        let grown = perturb(&mesh, &geom, &w, [0.0; 3], 0.1).unwrap();
        assert_relative_eq!(
            grown.area(),
            4.0 * PI * (r + eps) * (r + eps),
            max_relative = 0.02
        );
    }

    #[test]
    fn perturb_cap_is_enforced() {
        let mesh = build_sphere([0.5; 3], 0.25, 0);
        let geom = compute_geometry(&mesh).unwrap();
        let w = vec![0.2; mesh.vertex_count()];
        assert!(matches!(
            perturb(&mesh, &geom, &w, [0.0; 3], 0.1),
            Err(Error::Geometry(_))
        ));
    }

    #[test]
    fn volume_expansion_zero_and_sphere_shells() {
        let r = 0.25;
        let mesh = build_sphere([0.5; 3], r, 2);
        let geom = compute_geometry(&mesh).unwrap();
        let zero = vec![0.0; mesh.vertex_count()];
        assert_eq!(volume_expansion(&geom, &zero, 0.1).unwrap(), (0.0, 0.0));

        // constant offset: expansion matches the shell volume of the
        // discrete sphere (analytic shells up to mesh curvature error)
        let eps = 0.01;
        let w = vec![eps; mesh.vertex_count()];
        let (lin, rem) = volume_expansion(&geom, &w, 0.1).unwrap();
        let shell = 4.0 * PI * ((r + eps).powi(3) - r.powi(3)) / 3.0;
        assert_relative_eq!(lin + rem, shell, max_relative = 2e-3);

        // discrete consistency against the exact mesh volume difference
        let grown = perturb(&mesh, &geom, &w, [0.0; 3], 0.1).unwrap();
        let dv = grown.enclosed_volume().unwrap() - mesh.enclosed_volume().unwrap();
        assert_relative_eq!(lin + rem, dv, max_relative = 2e-3);
    }

    #[test]
    fn volume_expansion_formula_is_exact_on_analytic_cache() {
        // with exact sphere curvature data the expansion telescopes to the
        // exact concentric-shell volume
        let r = 0.25;
        let area = 4.0 * PI * r * r;
        let geom = GeometryCache {
            normals: vec![[1.0, 0.0, 0.0]],
            vertex_area: vec![area],
            mean_curvature: vec![2.0 / r],
            gauss_curvature: vec![1.0 / (r * r)],
            second_form_sq: vec![2.0 / (r * r)],
            stiffness: CsrMatrix::from_triplets(1, &mut vec![(0, 0, 0.0)]),
            total_area: area,
            mean_edge_length: 0.1,
        };
        for eps in [0.01, -0.015, 0.05] {
            let (lin, rem) = volume_expansion(&geom, &[eps], 0.1).unwrap();
            let shell = 4.0 * PI * ((r + eps).powi(3) - r.powi(3)) / 3.0;
            assert_relative_eq!(lin + rem, shell, epsilon = 1e-15);
        }
    }

    #[test]
    fn lamella_is_flat() {
        let mesh = build_lamella(0.2, 0.4, 12);
        let geom = compute_geometry(&mesh).unwrap();
        for v in 0..mesh.vertex_count() {
            assert!(geom.mean_curvature[v].abs() < 1e-10);
            assert!(geom.gauss_curvature[v].abs() < 1e-10);
            assert!(geom.normals[v][0].abs() > 1.0 - 1e-12);
        }
    }
}
