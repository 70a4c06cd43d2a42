//! Internal probe: far-field accuracy via reciprocity violation and Cauchy
//! differences, for different solver settings.
use polyembed::geometry::Polygon;
use polyembed::solver::{far_field, plane_wave_field, solve, NodeDistribution, SolverConfig};

fn main() {
    let poly = Polygon::regular(4, 1.0).unwrap();
    let k = 1.0;
    let th = 2.2; // observation angle for reciprocity pair
    let al = 0.9;
    let ratio: f64 = std::env::var("RATIO").ok().and_then(|v| v.parse().ok()).unwrap_or(std::f64::consts::SQRT_2);
    let beta: f64 = std::env::var("BETA").ok().and_then(|v| v.parse().ok()).unwrap_or(1.2);
    let rtol: f64 = std::env::var("RTOL").ok().and_then(|v| v.parse().ok()).unwrap_or(1e-13);
    let mut prev = None;
    for dofs in [64usize, 96, 128] {
        let cfg = SolverConfig {
            nodes: NodeDistribution::CornerClusters { ratio, beta, ring_scale: 0.6 },
            rank_rtol: rtol,
            ..SolverConfig::with_dofs(dofs)
        };
        let t0 = std::time::Instant::now();
        let s_a = solve(&poly, &plane_wave_field(al, k), &cfg).unwrap();
        let s_t = solve(&poly, &plane_wave_field(th, k), &cfg).unwrap();
        let d1 = far_field(&s_a, th);
        let d2 = far_field(&s_t, al);
        let recip = (d1 - d2).norm();
        let cauchy = prev.map(|p: num_complex::Complex64| (p - d1).norm()).unwrap_or(f64::NAN);
        let cnorm: f64 = s_a.coefficients().iter().map(|c| c.norm()).fold(0.0, f64::max);
        println!("dofs {dofs:3}  resid {:9.3e}  recip {recip:9.3e}  cauchy {cauchy:9.3e}  |c|max {cnorm:9.3e}  rankdef {}  t={:.2}s",
            s_a.residual(), s_a.rank_deficient(), t0.elapsed().as_secs_f64());
        prev = Some(d1);
    }
}
