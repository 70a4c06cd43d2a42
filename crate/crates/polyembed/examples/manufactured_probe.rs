//! Internal probe: manufactured solution u^s = H0(k|x - z|), z inside.
use num_complex::Complex64;
use polyembed::geometry::{Point2, Polygon};
use polyembed::solver::{scattered_field_at, solve, IncidentField, SolverConfig};
use polyembed::special::hankel1;
use std::sync::Arc;

fn main() {
    let poly = Polygon::regular(4, 1.0).unwrap();
    let k = 1.0;
    let z = Point2::new(0.1, 0.07);
    let exact = move |x: Point2| {
        Complex64::new(0.0, 0.25) * hankel1(0, k * (x - z).norm()).unwrap()
    };
    // incident trace = -exact so the true scattered field is `exact`
    let inc = IncidentField::custom(k, Arc::new(move |x| -exact(x)));
    for dofs in [8usize, 16, 32, 48] {
        let cfg = SolverConfig::with_dofs(dofs);
        let sol = solve(&poly, &inc, &cfg).unwrap();
        // compare at external points
        let mut worst = 0.0f64;
        for i in 0..32 {
            let ang = std::f64::consts::TAU * i as f64 / 32.0;
            let x = Point2::new(2.0 * ang.cos(), 2.0 * ang.sin());
            let err = (scattered_field_at(&sol, x).unwrap() - exact(x)).norm();
            worst = worst.max(err);
        }
        println!("dofs {dofs:3}  residual {:9.3e}  ext err {worst:9.3e}", sol.residual());
    }
}
