//! Internal probe: tune the criterion-2 FD oracle (stencil width, step).
use num_complex::Complex64;
use polyembed::geometry::Point2;
use polyembed::kernel::{kernel, kernel_deriv};

fn fd_weights(order: usize, offsets: &[i64]) -> Vec<f64> {
    let n = offsets.len();
    let mut c = vec![vec![0.0f64; order + 1]; n];
    let mut c1 = 1.0;
    let mut c4 = offsets[0] as f64;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(order);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = offsets[i] as f64;
        for j in 0..i {
            let c3 = offsets[i] as f64 - offsets[j] as f64;
            c2 *= c3;
            if j == i - 1 {
                for s in (1..=mn).rev() {
                    c[i][s] = c1 * (s as f64 * c[i - 1][s - 1] - c5 * c[i - 1][s]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for s in (1..=mn).rev() {
                c[j][s] = (c4 * c[j][s] - s as f64 * c[j][s - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    c.iter().map(|row| row[order]).collect()
}

fn main() {
    let k: f64 = std::env::var("KK").ok().and_then(|v| v.parse().ok()).unwrap_or(8.495182670641043);
    let yx: f64 = std::env::var("YX").ok().and_then(|v| v.parse().ok()).unwrap_or(0.20277753557756917);
    let yy: f64 = std::env::var("YY").ok().and_then(|v| v.parse().ok()).unwrap_or(0.9731363736308172);
    let y = Point2::new(yx, yy);
    let theta = 1.234;
    let mu = (k * y.norm()).max(1.0);
    for n in [3usize, 5, 6] {
        let exact = kernel_deriv(n, k, y, theta).unwrap();
        for extra in [7usize, 9, 11, 13] {
            let half = ((n + extra) / 2) as i64;
            let offsets: Vec<i64> = (-half..=half).collect();
            let w = fd_weights(n, &offsets);
            let wsum: f64 = w.iter().map(|x| x.abs()).sum();
            for hm in [0.35, 0.25, 0.18, 0.12, 0.08] {
                let h = hm / mu;
                let mut fd = Complex64::new(0.0, 0.0);
                for (&o, &wj) in offsets.iter().zip(w.iter()) {
                    fd += wj * kernel(k, y, theta + o as f64 * h);
                }
                fd /= h.powi(n as i32);
                let rel = (exact - fd).norm() / exact.norm();
                print!("  n={n} w={} hμ={hm}: {rel:9.2e}", offsets.len());
            }
            println!("   Σ|w|={wsum:.1e}");
        }
    }
}
