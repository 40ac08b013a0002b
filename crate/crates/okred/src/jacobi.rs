//! The linearized machinery around the base surface: the Jacobi operator
//! `L0 = -lap_S - |A|^2`, the translational kernel fields, the Gram matrix,
//! the kernel projection, and the constrained (bordered) linear solver.
//!
//! The bordered system pins the four integral constraints directly:
//!
//! ```text
//! [ K  C ] [ w]   [ M phi ]        K = S - diag(M |A|^2)
//! [ C' 0 ] [-m] = [ (a,0,0,0) ]    C = [M 1, M nu1, M nu2, M nu3]
//! ```
//!
//! with multipliers `m = (lambda, beta)`. `K` depends only on the base mesh,
//! so the factorization is computed once and reused by every solve in the
//! fixed-point iteration and the landscape scan.

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::GeometryCache;
use crate::sparse::CsrMatrix;

/// The 3x3 matrix of kernel-field inner products `∫ nu_k nu_i dσ`.
#[derive(Debug, Clone, Serialize)]
pub struct GramMatrix {
    pub matrix: [[f64; 3]; 3],
    pub condition: f64,
}

impl GramMatrix {
    pub fn solve3(&self, rhs: [f64; 3]) -> [f64; 3] {
        let m = DMatrix::from_fn(3, 3, |i, j| self.matrix[i][j]);
        let b = DVector::from_row_slice(&rhs);
        let x = m.lu().solve(&b).expect("gram matrix verified invertible");
        [x[0], x[1], x[2]]
    }
}

/// Computes the Gram matrix and rejects degenerate (rank-deficient)
/// geometries such as lamellae, whose normals span a single direction.
pub fn gram_matrix(geom: &GeometryCache) -> Result<GramMatrix> {
    let mut m = [[0.0f64; 3]; 3];
    for v in 0..geom.normals.len() {
        let a = geom.vertex_area[v];
        let n = geom.normals[v];
        for i in 0..3 {
            for j in 0..3 {
                m[i][j] += a * n[i] * n[j];
            }
        }
    }
    let sym = DMatrix::from_fn(3, 3, |i, j| m[i][j]).symmetric_eigen();
    let max = sym.eigenvalues.iter().cloned().fold(f64::MIN, f64::max);
    let min = sym.eigenvalues.iter().cloned().fold(f64::MAX, f64::min);
    let condition = if min <= 0.0 { f64::INFINITY } else { max / min };
    if !(condition < 1e8) {
        return Err(Error::Geometry(format!(
            "kernel Gram matrix is degenerate (condition {condition:.3e}); \
             the surface normals do not span all translations"
        )));
    }
    Ok(GramMatrix { matrix: m, condition })
}

/// Projection onto the complement of the translational kernel:
/// `P phi = phi - sum_i c_i nu_i` with `Gram c = (∫ phi nu_i)`.
pub fn project_kernel(geom: &GeometryCache, gram: &GramMatrix, phi: &[f64]) -> Vec<f64> {
    let mut rhs = [0.0f64; 3];
    for v in 0..phi.len() {
        let a = geom.vertex_area[v] * phi[v];
        for i in 0..3 {
            rhs[i] += a * geom.normals[v][i];
        }
    }
    let c = gram.solve3(rhs);
    phi.iter()
        .enumerate()
        .map(|(v, &p)| {
            p - c[0] * geom.normals[v][0]
                - c[1] * geom.normals[v][1]
                - c[2] * geom.normals[v][2]
        })
        .collect()
}

/// Result of a constrained linear solve.
#[derive(Debug, Clone, Serialize)]
pub struct LinearSolveResult {
    pub w: Vec<f64>,
    pub lambda: f64,
    pub beta: [f64; 3],
    /// `|∫ w dσ - a|`
    pub mean_constraint_residual: f64,
    /// `max_i |∫ w nu_i dσ|`
    pub kernel_constraint_residual: f64,
    /// relative residual of the bordered system after refinement
    pub equation_residual: f64,
}

/// The assembled Jacobi operator with its reusable bordered factorization.
pub struct JacobiOperator {
    n: usize,
    /// weak form `K = S - diag(M |A|^2)`
    weak: CsrMatrix,
    mass: Vec<f64>,
    /// bordered columns `M 1, M nu_i`
    constraints: [Vec<f64>; 4],
    factor: Lu<usize, f64>,
    bordered: SparseColMat<usize, f64>,
}

fn bordered_matrix(
    weak: &CsrMatrix,
    constraints: &[Vec<f64>],
    shift_mass: Option<(f64, &[f64])>,
) -> Result<SparseColMat<usize, f64>> {
    let n = weak.n();
    let nb = constraints.len();
    let dim = n + nb;
    let mut triplets: Vec<Triplet<usize, usize, f64>> =
        Vec::with_capacity(weak.nnz() + 2 * nb * n + n);
    for (r, c, v) in weak.entries() {
        let mut val = v;
        if let (Some((sigma, mass)), true) = (shift_mass, r == c) {
            val -= sigma * mass[r as usize];
        }
        triplets.push(Triplet::new(r as usize, c as usize, val));
    }
    // diagonal shift entries missing from the weak pattern are impossible:
    // the cotangent stiffness always stores the diagonal
    for (b, col) in constraints.iter().enumerate() {
        for (r, &v) in col.iter().enumerate() {
            if v != 0.0 {
                triplets.push(Triplet::new(r, n + b, v));
                triplets.push(Triplet::new(n + b, r, v));
            }
        }
    }
    SparseColMat::try_new_from_triplets(dim, dim, &triplets)
        .map_err(|e| Error::Geometry(format!("bordered assembly failed: {e:?}")))
}

fn factor_lu(mat: &SparseColMat<usize, f64>) -> Result<Lu<usize, f64>> {
    let sym = SymbolicLu::try_new(mat.symbolic())
        .map_err(|e| Error::Geometry(format!("symbolic factorization failed: {e:?}")))?;
    Lu::try_new_with_symbolic(sym, mat.as_ref())
        .map_err(|e| Error::Geometry(format!("numeric factorization failed: {e:?}")))
}

impl JacobiOperator {
    /// Assembles the weak operator and factors the bordered system.
    pub fn assemble(geom: &GeometryCache) -> Result<Self> {
        // deterministic numerics regardless of ambient thread pools
        faer::set_global_parallelism(faer::Par::Seq);
        let n = geom.vertex_area.len();
        let mut triplets: Vec<(u32, u32, f64)> = geom
            .stiffness
            .entries()
            .collect();
        for v in 0..n {
            triplets.push((
                v as u32,
                v as u32,
                -geom.vertex_area[v] * geom.second_form_sq[v],
            ));
        }
        let weak = CsrMatrix::from_triplets(n, &mut triplets);
        let mass = geom.vertex_area.clone();
        let mk = |f: &dyn Fn(usize) -> f64| -> Vec<f64> {
            (0..n).map(|v| mass[v] * f(v)).collect()
        };
        let constraints = [
            mk(&|_| 1.0),
            mk(&|v| geom.normals[v][0]),
            mk(&|v| geom.normals[v][1]),
            mk(&|v| geom.normals[v][2]),
        ];
        let bordered = bordered_matrix(&weak, &constraints, None)?;
        let factor = factor_lu(&bordered)?;
        Ok(Self { n, weak, mass, constraints, factor, bordered })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn weak_form(&self) -> &CsrMatrix {
        &self.weak
    }

    /// `L0 w` as a vertex function (strong form `M^{-1} K w`).
    pub fn apply_strong(&self, w: &[f64]) -> Vec<f64> {
        let mut y = self.weak.mul_vec_alloc(w);
        for v in 0..self.n {
            y[v] /= self.mass[v];
        }
        y
    }

    /// Quadratic form `<K w, w> = ∫ |grad w|^2 - |A|^2 w^2 dσ`.
    pub fn quadratic_form(&self, w: &[f64]) -> f64 {
        self.weak.bilinear(w, w)
    }

    /// Solves the constrained problem: `L0 w = lambda + sum beta_i nu_i +
    /// phi` with `∫ w nu_i = 0` and `∫ w = a`. When `phi` is orthogonal to
    /// the kernel fields the multipliers `beta` vanish (to solver accuracy).
    pub fn solve_linear(&self, phi: &[f64], a: f64) -> Result<LinearSolveResult> {
        if phi.len() != self.n {
            return Err(Error::Inconsistency(format!(
                "right-hand side has {} entries for {} vertices",
                phi.len(),
                self.n
            )));
        }
        let dim = self.n + 4;
        let mut rhs = Mat::<f64>::zeros(dim, 1);
        for v in 0..self.n {
            rhs[(v, 0)] = self.mass[v] * phi[v];
        }
        rhs[(self.n, 0)] = a;
        let mut sol = self.factor.solve(&rhs);
        // one round of iterative refinement in f64
        let mut resid = rhs.clone();
        sparse_mul_sub(&self.bordered, &sol, &mut resid);
        let corr = self.factor.solve(&resid);
        for r in 0..dim {
            sol[(r, 0)] += corr[(r, 0)];
        }
        resid = rhs.clone();
        sparse_mul_sub(&self.bordered, &sol, &mut resid);
        let rhs_norm = (0..dim).map(|r| rhs[(r, 0)].powi(2)).sum::<f64>().sqrt();
        let res_norm = (0..dim).map(|r| resid[(r, 0)].powi(2)).sum::<f64>().sqrt();

        let w: Vec<f64> = (0..self.n).map(|v| sol[(v, 0)]).collect();
        let lambda = -sol[(self.n, 0)];
        let beta = [
            -sol[(self.n + 1, 0)],
            -sol[(self.n + 2, 0)],
            -sol[(self.n + 3, 0)],
        ];
        if !w.iter().all(|v| v.is_finite()) || !lambda.is_finite() {
            return Err(Error::Divergence(
                "constrained solve produced non-finite values".into(),
            ));
        }
        let mean_c = dotv(&self.constraints[0], &w) - a;
        let mut kern_c = 0.0f64;
        for i in 0..3 {
            kern_c = kern_c.max(dotv(&self.constraints[1 + i], &w).abs());
        }
        Ok(LinearSolveResult {
            w,
            lambda,
            beta,
            mean_constraint_residual: mean_c.abs(),
            kernel_constraint_residual: kern_c,
            equation_residual: if rhs_norm > 0.0 { res_norm / rhs_norm } else { res_norm },
        })
    }
}

fn dotv(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `resid -= A sol` (resid starts as the right-hand side).
fn sparse_mul_sub(a: &SparseColMat<usize, f64>, sol: &Mat<f64>, resid: &mut Mat<f64>) {
    let sym = a.symbolic();
    for col in 0..a.ncols() {
        let xi = sol[(col, 0)];
        if xi == 0.0 {
            continue;
        }
        let vals = a.val_of_col(col);
        for (pos, &row) in sym.row_idx_of_col_raw(col).iter().enumerate() {
            resid[(row, 0)] -= vals[pos] * xi;
        }
    }
}

// ---------------------------------------------------------------------------
// kernel diagnostics
// ---------------------------------------------------------------------------

/// Result of the kernel / nondegeneracy check.
#[derive(Debug, Clone, Serialize)]
pub struct KernelReport {
    /// Smallest eigenvalues of `L0` on zero-mean functions, ascending.
    pub eigenvalues: Vec<f64>,
    /// Largest energy (Rayleigh-quotient) residual `<K nu_i, nu_i> /
    /// <M nu_i, nu_i>` of the translational fields; the honest "numerically
    /// zero" scale for this mesh, commensurate with the eigenvalues.
    pub jacobi_field_residual: f64,
    /// Largest strong-form residual `|L0 nu_i|_M / |nu_i|_M`; reported for
    /// refinement studies but not used as a threshold (the pointwise
    /// consistency error of the cotangent operator does not vanish).
    pub jacobi_strong_residual: f64,
    /// `10 x` the Jacobi-field residual: the near-zero eigenvalue threshold.
    pub epsilon_mesh: f64,
    /// Number of eigenvalues with `|mu| <= epsilon_mesh`.
    pub near_zero_count: usize,
    /// Largest principal angle (degrees) between the three lowest
    /// eigenvectors and the span of the kernel fields.
    pub subspace_angle_deg: f64,
    /// First eigenvalue beyond the translational kernel.
    pub fourth_eigenvalue: f64,
}

/// Computes the smallest eigenpairs of `L0` restricted to zero-mean
/// functions and compares the near-kernel against the translational fields.
///
/// Shift-inverted subspace iteration: with the bordered factorization of
/// `K - sigma M` (mean constraint pinned), eigenvalues nearest `sigma < 0`
/// converge first; everything at or above the spectral gap follows.
pub fn kernel_check(op: &JacobiOperator, geom: &GeometryCache) -> Result<KernelReport> {
    faer::set_global_parallelism(faer::Par::Seq);
    let n = op.n;
    let want = 6usize;
    let k = want + 2;
    let sigma = -1.0;
    let constraints = [op.constraints[0].clone()];
    let shifted = bordered_matrix(&op.weak, &constraints, Some((sigma, &op.mass)))?;
    let factor = factor_lu(&shifted)?;

    let mut rng = ChaCha8Rng::seed_from_u64(0x5EED_CAFE);
    let mut basis: Vec<Vec<f64>> = (0..k)
        .map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();

    let m_dot = |a: &[f64], b: &[f64]| -> f64 {
        a.iter()
            .zip(b)
            .zip(&op.mass)
            .map(|((x, y), m)| x * y * m)
            .sum()
    };

    let mut eigenvalues = vec![0.0f64; k];
    let mut last = vec![f64::INFINITY; want];
    for _iter in 0..60 {
        // shift-inverted power step through the bordered solve
        let dim = n + 1;
        let mut rhs = Mat::<f64>::zeros(dim, k);
        for (j, col) in basis.iter().enumerate() {
            for v in 0..n {
                rhs[(v, j)] = op.mass[v] * col[v];
            }
        }
        let sol = factor.solve(&rhs);
        for (j, col) in basis.iter_mut().enumerate() {
            for v in 0..n {
                col[v] = sol[(v, j)];
            }
        }
        // M-orthonormalize (modified Gram-Schmidt, twice)
        for _pass in 0..2 {
            for j in 0..k {
                for l in 0..j {
                    let c = m_dot(&basis[j].clone(), &basis[l]);
                    let bl = basis[l].clone();
                    for v in 0..n {
                        basis[j][v] -= c * bl[v];
                    }
                }
                let nn = m_dot(&basis[j], &basis[j]).sqrt();
                if nn < 1e-300 {
                    return Err(Error::Divergence(
                        "eigenbasis collapsed during subspace iteration".into(),
                    ));
                }
                for v in 0..n {
                    basis[j][v] /= nn;
                }
            }
        }
        // Rayleigh-Ritz on the k-dimensional subspace
        let mut a_r = DMatrix::<f64>::zeros(k, k);
        let applied: Vec<Vec<f64>> = basis.iter().map(|b| op.weak.mul_vec_alloc(b)).collect();
        for i in 0..k {
            for j in 0..=i {
                let val = dotv(&applied[i], &basis[j]);
                a_r[(i, j)] = val;
                a_r[(j, i)] = val;
            }
        }
        let eig = a_r.symmetric_eigen();
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let rotated: Vec<Vec<f64>> = order
            .iter()
            .map(|&col| {
                let mut out = vec![0.0f64; n];
                for (j, b) in basis.iter().enumerate() {
                    let c = eig.eigenvectors[(j, col)];
                    for v in 0..n {
                        out[v] += c * b[v];
                    }
                }
                out
            })
            .collect();
        basis = rotated;
        for (slot, &col) in order.iter().enumerate() {
            eigenvalues[slot] = eig.eigenvalues[col];
        }
        let delta = (0..want)
            .map(|i| (eigenvalues[i] - last[i]).abs())
            .fold(0.0f64, f64::max);
        let scale = eigenvalues[..want]
            .iter()
            .map(|e| e.abs())
            .fold(1e-14, f64::max);
        last.copy_from_slice(&eigenvalues[..want]);
        if delta < 1e-11 * scale {
            break;
        }
    }

    // Jacobi-field residuals of the translational fields
    let mut jac_res = 0.0f64;
    let mut jac_strong = 0.0f64;
    for i in 0..3 {
        let nu = geom.normal_component(i);
        let lnu = op.apply_strong(&nu);
        jac_strong = jac_strong.max(geom.l2_norm(&lnu) / geom.l2_norm(&nu));
        let m2 = geom.inner(&nu, &nu);
        jac_res = jac_res.max(op.quadratic_form(&nu).abs() / m2);
    }
    let epsilon_mesh = 10.0 * jac_res;
    let near_zero = eigenvalues[..want]
        .iter()
        .filter(|e| e.abs() <= epsilon_mesh)
        .count();

    // principal angles between the 3 lowest modes and span{nu_i}
    let nu_basis: Vec<Vec<f64>> = (0..3).map(|i| geom.normal_component(i)).collect();
    let nu_ortho = m_orthonormalize(&nu_basis, &op.mass)?;
    let low_ortho = m_orthonormalize(&basis[..3].to_vec(), &op.mass)?;
    let mut overlap = DMatrix::<f64>::zeros(3, 3);
    for i in 0..3 {
        for j in 0..3 {
            overlap[(i, j)] = m_dot(&low_ortho[i], &nu_ortho[j]);
        }
    }
    let svd = overlap.svd(false, false);
    let min_sv = svd
        .singular_values
        .iter()
        .cloned()
        .fold(f64::MAX, f64::min)
        .clamp(-1.0, 1.0);
    let subspace_angle_deg = min_sv.acos().to_degrees();

    Ok(KernelReport {
        eigenvalues: eigenvalues[..want].to_vec(),
        jacobi_field_residual: jac_res,
        jacobi_strong_residual: jac_strong,
        epsilon_mesh,
        near_zero_count: near_zero,
        subspace_angle_deg,
        fourth_eigenvalue: eigenvalues[3],
    })
}

fn m_orthonormalize(vecs: &[Vec<f64>], mass: &[f64]) -> Result<Vec<Vec<f64>>> {
    let m_dot = |a: &[f64], b: &[f64]| -> f64 {
        a.iter().zip(b).zip(mass).map(|((x, y), m)| x * y * m).sum()
    };
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(vecs.len());
    for v in vecs {
        let mut w = v.clone();
        for _ in 0..2 {
            for q in &out {
                let c = m_dot(&w, q);
                for x in 0..w.len() {
                    w[x] -= c * q[x];
                }
            }
        }
        let nn = m_dot(&w, &w).sqrt();
        if nn < 1e-14 {
            return Err(Error::Geometry(
                "linearly dependent basis in orthonormalization".into(),
            ));
        }
        for x in w.iter_mut() {
            *x /= nn;
        }
        out.push(w);
    }
    Ok(out)
}
