//! Internal probe: boundary-misfit profile vs corner distance.
use num_complex::Complex64;
use polyembed::geometry::{Point2, Polygon};
use polyembed::solver::{solve, IncidentField, plane_wave_field, scattered_field_at, NodeDistribution, SolverConfig};
use polyembed::special::hankel1;
use std::sync::Arc;

fn misfit_profile(label: &str, poly: &Polygon, inc: &IncidentField, cfg: &SolverConfig) {
    let sol = solve(poly, inc, cfg).unwrap();
    // probe points along side 0 at distances from the corner (vertex 0)
    let (a, b) = poly.side(0);
    let len = poly.side_lengths()[0];
    let t = (b - a) * (1.0 / len);
    println!("{label}: residual={:.3e} |c|max={:.3e}", sol.residual(),
        sol.coefficients().iter().map(|c| c.norm()).fold(0.0, f64::max));
    for expo in [-12.0f64, -10.0, -8.0, -6.0, -5.0, -4.0, -3.0, -2.0, -1.5, -1.0, -0.7, -0.4] {
        let d = 10f64.powf(expo) * len;
        if d > 0.5 * len { continue; }
        let x = a + t * d;
        let tot = inc.eval(x) + scattered_field_at(&sol, x).unwrap();
        let xm = a + t * (0.5 * len);
        let totm = inc.eval(xm) + scattered_field_at(&sol, xm).unwrap();
        println!("  d=1e{expo:+.0}: |misfit| = {:.3e}   (midside: {:.3e})", tot.norm(), totm.norm());
    }
}

fn main() {
    let poly = Polygon::regular(4, 1.0).unwrap();
    let k = 1.0;
    let z = Point2::new(0.1, 0.07);
    let exact = move |x: Point2| Complex64::new(0.0, 0.25) * hankel1(0, k * (x - z).norm()).unwrap();
    let smooth = IncidentField::custom(k, Arc::new(move |x| -exact(x)));
    let pw = plane_wave_field(1.0, k);

    for (sig, off) in [(3.0, 0.6), (4.0, 0.6), (5.0, 0.6), (6.0, 0.6)] {
        let cfg = SolverConfig {
            nodes: NodeDistribution::CornerClusters { sigma: sig, ring_scale: off },
            ..SolverConfig::with_dofs(32)
        };
        misfit_profile(&format!("smooth σ={sig} ring={off} dofs=32"), &poly, &smooth, &cfg);
    }
    for (sig, off) in [(4.0, 0.6), (5.0, 0.6), (6.0, 0.6)] {
        let cfg = SolverConfig {
            nodes: NodeDistribution::CornerClusters { sigma: sig, ring_scale: off },
            ..SolverConfig::with_dofs(32)
        };
        misfit_profile(&format!("planewave σ={sig} ring={off} dofs=32"), &poly, &pw, &cfg);
    }
}
