//! Prints base-surface diagnostics across refinement levels: topology,
//! volume, curvature after relaxation, kernel spectrum, Gram matrix.

use okred::geometry::compute_geometry;
use okred::jacobi::{gram_matrix, kernel_check, JacobiOperator};
use okred::marching::{build_schwarz_p_raw, schwarz_symmetry_deviation};
use okred::relax::{relax_to_cmc, RelaxOptions};

fn main() -> anyhow::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let resolutions: Vec<usize> = if args.len() > 1 {
        args[1..].iter().map(|a| a.parse().unwrap()).collect()
    } else {
        vec![32, 64]
    };
    for res in resolutions {
        let t0 = std::time::Instant::now();
        let raw = build_schwarz_p_raw(res)?;
        let stats = raw.validate()?;
        println!(
            "res {res}: V={} E={} F={} chi={} raw_volume={:.6} area={:.6} ({:.2?})",
            stats.vertices,
            stats.edges,
            stats.faces,
            stats.euler_characteristic,
            raw.enclosed_volume()?,
            raw.area(),
            t0.elapsed()
        );
        let t1 = std::time::Instant::now();
        let (relaxed, report) = relax_to_cmc(&raw, &RelaxOptions::for_schwarz_p())?;
        println!(
            "  relax: H_dev {:.3e} -> {:.3e}, max|H| {:.3e}, lambda {:+.3e}, rounds {}, vol_err {:.2e} ({:.2?})",
            report.initial_h_deviation,
            report.final_h_deviation,
            report.final_h_max,
            report.lambda_hat,
            report.newton_rounds_used,
            report.volume_error,
            t1.elapsed()
        );
        println!("  relaxed area = {:.8}", relaxed.area());
        let (refl, swap) = schwarz_symmetry_deviation(&relaxed);
        println!("  symmetry deviation: reflections {refl:.3e}, swap {swap:.3e}");
        let geom = compute_geometry(&relaxed)?;
        for i in 0..3 {
            let nu = geom.normal_component(i);
            println!(
                "  |int nu_{i}| = {:.3e} (area {:.4})",
                geom.integrate(&nu).abs(),
                geom.total_area
            );
        }
        let gram = gram_matrix(&geom)?;
        println!(
            "  gram diag = {:.6} {:.6} {:.6}, max offdiag = {:.2e}, cond = {:.3}",
            gram.matrix[0][0],
            gram.matrix[1][1],
            gram.matrix[2][2],
            gram.matrix[0][1].abs().max(gram.matrix[0][2].abs()).max(gram.matrix[1][2].abs()),
            gram.condition
        );
        let t2 = std::time::Instant::now();
        let op = JacobiOperator::assemble(&geom)?;
        let report = kernel_check(&op, &geom)?;
        println!(
            "  kernel: eigs {:?}\n    rayleigh_res {:.3e} strong_res {:.3e} eps_mesh {:.3e} near_zero {} angle {:.3} deg mu4 {:.4} ({:.2?})",
            report.eigenvalues,
            report.jacobi_field_residual,
            report.jacobi_strong_residual,
            report.epsilon_mesh,
            report.near_zero_count,
            report.subspace_angle_deg,
            report.fourth_eigenvalue,
            t2.elapsed()
        );
    }
    Ok(())
}
