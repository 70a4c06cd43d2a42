//! Internal probe: can two monopole ladders + smooth ring fit the corner
//! singular mode r^(2/3) sin(2φ/3) on the exterior wedge boundary?
use num_complex::Complex64;
use polyembed::geometry::Point2;
use polyembed::linalg::{lstsq, CMatrix};
use polyembed::special::hankel1;

fn main() {
    let k = 1.0;
    // Corner at origin; sides along +x and +y (interior = first quadrant).
    // Exterior wedge angle 3π/2, exterior field u = r^(2/3) sin(2φ/3), φ
    // measured from the +x side going CLOCKWISE through the exterior.
    // On the +x side (φ=0): u = 0... we fit the trace on BOTH sides of the
    // smooth data g(r) = r^(2/3) * [some nonzero trace]. Use instead the
    // harmonic function u = Re((x+iy)^(2/3)) rotated so it is nonzero on the
    // sides: u(r,φ_std) = r^(2/3) cos(2/3(φ_std + π/4)) where φ_std is the
    // standard angle. Evaluate on the two exterior-adjacent side segments.
    let nu = 2.0 / 3.0;
    let target = |p: Point2| -> f64 {
        let r = p.norm();
        if r == 0.0 { return 0.0; }
        let phi = p.y.atan2(p.x);
        r.powf(nu) * (nu * (phi + std::f64::consts::PI / 4.0)).cos()
    };

    for m in [8usize, 12, 16, 24, 32] {
        let sigma = 4.0;
        let radius = 0.3;
        let mf = m as f64;
        let radii: Vec<f64> = (1..=m)
            .map(|i| radius * (-sigma * (mf.sqrt() - (i as f64 - 0.5).sqrt())).exp())
            .collect();
        let mut poles: Vec<Point2> = Vec::new();
        let style = std::env::var("STYLE").unwrap_or_else(|_| "sides".into());
        let beta: f64 = std::env::var("BETA").ok().and_then(|v| v.parse().ok()).unwrap_or(0.4);
        match style.as_str() {
            "sides" => {
                for &r in &radii {
                    poles.push(Point2::new(r, beta * r));
                    poles.push(Point2::new(beta * r, r));
                }
            }
            "rot" => {
                for &r in &radii {
                    for ang in [22.5f64.to_radians(), 67.5f64.to_radians()] {
                        poles.push(Point2::new(r * ang.cos(), r * ang.sin()));
                    }
                }
            }
            _ => {
                // dipole pairs across the bisector
                for &r in &radii {
                    let bis = 45f64.to_radians();
                    let c = Point2::new(r * bis.cos(), r * bis.sin());
                    let t = Point2::new(-bis.sin(), bis.cos());
                    poles.push(c + t * (0.5 * beta * r));
                    poles.push(c + t * (-0.5 * beta * r));
                }
            }
        }
        // smooth arc of sources strictly inside the wedge
        for i in 0..24 {
            let ang = 0.15 + (i as f64 / 23.0) * (std::f64::consts::FRAC_PI_2 - 0.3);
            poles.push(Point2::new(0.35 * ang.cos(), 0.35 * ang.sin()));
        }
        // collocation: both sides, log-spaced from r_min*0.2 to 0.45
        let mut coll: Vec<Point2> = Vec::new();
        let r_lo = (radii[0] * 0.2_f64).ln();
        let r_hi = 0.45_f64.ln();
        let n_c = 6 * m + 60;
        for i in 0..n_c {
            let r = (r_lo + (r_hi - r_lo) * i as f64 / (n_c - 1) as f64).exp();
            coll.push(Point2::new(r, 0.0));
            coll.push(Point2::new(0.0, r));
        }
        let a = CMatrix::from_fn(coll.len(), poles.len(), |i, j| {
            Complex64::new(0.0, 0.25) * hankel1(0, k * (coll[i] - poles[j]).norm()).unwrap()
        });
        let b: Vec<Complex64> = coll.iter().map(|&p| Complex64::new(target(p), 0.0)).collect();
        let fit = lstsq(&a, &b, 1e-13).unwrap();
        // evaluate misfit on a finer check set
        let mut worst = 0.0f64;
        let mut worst_at = (0.0f64, 0usize);
        for i in 0..400 {
            let r = (r_lo + (r_hi - r_lo) * (i as f64 + 0.31) / 399.0).exp();
            for (si, p) in [Point2::new(r, 0.0), Point2::new(0.0, r)].into_iter().enumerate() {
                let mut v = Complex64::new(0.0, 0.0);
                for (c, &q) in fit.solution.iter().zip(poles.iter()) {
                    v += c * Complex64::new(0.0, 0.25) * hankel1(0, k * (p - q).norm()).unwrap();
                }
                let e = (v - Complex64::new(target(p), 0.0)).norm();
                if e > worst { worst = e; worst_at = (r, si); }
            }
        }
        println!("   worst at r={:.3e} side {}", worst_at.0, worst_at.1);
        let cmax = fit.solution.iter().map(|c| c.norm()).fold(0.0, f64::max);
        println!("m={m:3}  rank {}/{}  col-res {:9.3e}  misfit {worst:9.3e}  |c|max {cmax:9.3e}", fit.rank, poles.len(), fit.residual_norm);
    }
}
