//! Internal probe: residual vs dofs for the square, both node layouts.
use polyembed::geometry::Polygon;
use polyembed::solver::{far_field, plane_wave_field, solve, NodeDistribution, SolverConfig};

fn main() {
    let poly = Polygon::regular(4, 1.0).unwrap();
    let inc = plane_wave_field(1.0, 1.0);
    println!("tapered:");
    let mut prev = None;
    for dofs in [8usize, 12, 16, 24, 32, 48, 64] {
        let cfg = SolverConfig::with_dofs(dofs);
        let sol = solve(&poly, &inc, &cfg).unwrap();
        let d0 = far_field(&sol, 0.3);
        let cnorm: f64 = sol.coefficients().iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        let dd = prev.map(|p: num_complex::Complex64| (p - d0).norm()).unwrap_or(f64::NAN);
        println!("  dofs {dofs:3}  residual {:9.3e}  |c| {:9.3e}  D(0.3) {:+.10e} {:+.10e}i  ffdiff {dd:9.3e}  rankdef {}", sol.residual(), cnorm, d0.re, d0.im, sol.rank_deficient());
        prev = Some(d0);
    }
    println!("uniform 0.7:");
    for dofs in [8usize, 16, 32, 64] {
        let cfg = SolverConfig { nodes: NodeDistribution::UniformScaled { scale: 0.7 }, ..SolverConfig::with_dofs(dofs) };
        let sol = solve(&poly, &inc, &cfg).unwrap();
        println!("  dofs {dofs:3}  residual {:9.3e}  rankdef {}", sol.residual(), sol.rank_deficient());
    }
}
