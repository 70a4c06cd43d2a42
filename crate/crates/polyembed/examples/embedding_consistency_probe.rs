//! Internal probe: embedding-consistency error levels for test calibration.
use polyembed::embedding::{build_context, EmbeddingConfig};
use polyembed::geometry::{circle_dist, rational_params, select_canonical_angles, theta_alpha_set, Polygon};
use polyembed::solver::{far_field, plane_wave_field, solve, SolverConfig};
use std::f64::consts::TAU;

fn main() {
    for dofs in [32usize, 48, 64] {
        let poly = Polygon::regular(4, 1.0).unwrap();
        let params = rational_params(&poly, true).unwrap();
        let canonical = select_canonical_angles(&poly, &params, 42).unwrap();
        let cfg = SolverConfig::with_dofs(dofs);
        let ctx = build_context(&poly, 1.0, &params, canonical, &cfg, EmbeddingConfig::default()).unwrap();
        println!("dofs {dofs}: cond {:.3e}  max canon residual {:.3e}", ctx.condition_estimate(), ctx.max_canonical_residual());

        // b at canonical = unit vector?
        let mut worst_b = 0.0f64;
        for m in [0usize, 4, 6] {
            let bm = ctx.solve_bm(ctx.canonical().angles[m]);
            for (j, bj) in bm.b.iter().enumerate() {
                let e = if j == m { (bj.norm() - 1.0).abs() } else { bj.norm() };
                worst_b = worst_b.max(e);
            }
        }
        println!("  unit-vector deviation {worst_b:.3e}");

        // naive vs direct at same dofs, away from lines
        let alpha = 1.0;
        let zeros = theta_alpha_set(2, alpha);
        let direct = solve(&poly, &plane_wave_field(alpha, 1.0), &cfg).unwrap();
        let scale = (0..64).map(|i| far_field(&direct, TAU * i as f64 / 64.0).norm()).fold(0.0, f64::max);
        let mut worst = 0.0f64;
        for i in 0..40 {
            let theta = TAU * (i as f64 + 0.21) / 40.0;
            if zeros.iter().any(|&z| circle_dist(theta, z) < 0.3) { continue; }
            let d = (ctx.naive(theta, alpha).unwrap() - far_field(&direct, theta)).norm();
            worst = worst.max(d / scale);
        }
        println!("  naive vs direct rel {worst:.3e}");

        // naive at canonical angle vs canonical solution
        let m = 5usize;
        let am = ctx.canonical().angles[m];
        let zm = theta_alpha_set(2, am);
        let mut worst2 = 0.0f64;
        for i in 0..40 {
            let theta = TAU * (i as f64 + 0.37) / 40.0;
            if zm.iter().any(|&z| circle_dist(theta, z) < 0.3) { continue; }
            let d = (ctx.naive(theta, am).unwrap() - ctx.canonical_far_field(m, theta)).norm();
            worst2 = worst2.max(d / scale);
        }
        println!("  naive at canonical rel {worst2:.3e}");

        // combined reproduction over random θ
        let mut worst3 = 0.0f64;
        for i in 0..200 {
            let theta = TAU * (i as f64 + 0.13) / 200.0;
            let d = (ctx.combined(theta, am) - ctx.canonical_far_field(m, theta)).norm();
            worst3 = worst3.max(d / scale);
        }
        println!("  combined reproduction rel {worst3:.3e}");
    }
}
