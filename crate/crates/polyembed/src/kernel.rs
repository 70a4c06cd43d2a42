//! Exact θ-derivatives of the far-field kernel `K(θ, y) = e^{−ik(y₁cosθ + y₂sinθ)}`.
//!
//! Every derivative factors as `∂ⁿK/∂θⁿ = gₙ·K` where `g₁` is a degree-1
//! trigonometric polynomial and `gₙ = gₙ₋₁g₁ + gₙ₋₁′`. On Fourier coefficient
//! vectors the map `φ ↦ g₁φ + φ′` is a banded rectangular matrix: multiplying
//! by `g₁` shifts frequencies by ±1 with weights `c∓₁`, differentiation scales
//! frequency `ℓ` by `iℓ`. Chaining those matrices gives all the derivatives the
//! Taylor and L'Hôpital branches need without any numerical differentiation.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::geometry::Point2;

/// Highest derivative order the chain is built for. Covers the default Taylor
/// order (10) plus the two L'Hôpital orders.
pub const MAX_DERIV_ORDER: usize = 12;

/// A finite trigonometric polynomial `Σ_{ℓ=−n}^{n} b_ℓ e^{iℓθ}`.
#[derive(Clone, Debug, PartialEq)]
pub struct FourierPoly {
    degree: usize,
    /// Coefficients `b_{−n}, …, b_n`.
    coeffs: Vec<Complex64>,
}

impl FourierPoly {
    pub fn new(degree: usize, coeffs: Vec<Complex64>) -> Self {
        assert_eq!(coeffs.len(), 2 * degree + 1);
        FourierPoly { degree, coeffs }
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    /// Coefficient of `e^{iℓθ}` (zero outside the stored band).
    pub fn coeff(&self, ell: i64) -> Complex64 {
        let n = self.degree as i64;
        if ell < -n || ell > n {
            Complex64::new(0.0, 0.0)
        } else {
            self.coeffs[(ell + n) as usize]
        }
    }

    pub fn eval(&self, theta: f64) -> Complex64 {
        let n = self.degree as i64;
        let mut acc = Complex64::new(0.0, 0.0);
        for (idx, b) in self.coeffs.iter().enumerate() {
            let ell = idx as i64 - n;
            acc += b * Complex64::from_polar(1.0, ell as f64 * theta);
        }
        acc
    }
}

/// The banded `(2n+1) × (2n−1)` matrix applying `φ ↦ g₁φ + φ′` to a Fourier
/// polynomial of degree `n−1`.
#[derive(Clone, Debug)]
pub struct GnMatrix {
    n: usize,
    c_minus1: Complex64,
    c_plus1: Complex64,
}

impl GnMatrix {
    pub fn rows(&self) -> usize {
        2 * self.n + 1
    }

    pub fn cols(&self) -> usize {
        2 * self.n - 1
    }

    /// Dense entry, mostly for inspection and tests; `apply` never forms it.
    pub fn entry(&self, row: usize, col: usize) -> Complex64 {
        let n = self.n as i64;
        let ell_out = row as i64 - n;
        let ell_in = col as i64 - (n - 1);
        if ell_out == ell_in - 1 {
            self.c_minus1
        } else if ell_out == ell_in {
            Complex64::new(0.0, ell_in as f64)
        } else if ell_out == ell_in + 1 {
            self.c_plus1
        } else {
            Complex64::new(0.0, 0.0)
        }
    }

    /// Multiply: the input must have degree `n−1`, the output has degree `n`.
    pub fn apply(&self, phi: &FourierPoly) -> FourierPoly {
        assert_eq!(phi.degree() + 1, self.n, "degree mismatch in gn chain");
        let n = self.n as i64;
        let mut out = vec![Complex64::new(0.0, 0.0); 2 * self.n + 1];
        for (idx, slot) in out.iter_mut().enumerate() {
            let ell = idx as i64 - n;
            *slot = self.c_minus1 * phi.coeff(ell + 1)
                + Complex64::new(0.0, ell as f64) * phi.coeff(ell)
                + self.c_plus1 * phi.coeff(ell - 1);
        }
        FourierPoly::new(self.n, out)
    }
}

/// Fourier coefficients of `g₁(θ, y) = −ik(−y₁ sinθ + y₂ cosθ)`:
/// `c₋₁ = −ik(y₂ − iy₁)/2` and `c₁ = −ik(y₂ + iy₁)/2`.
pub fn g1_coeffs(k: f64, y: Point2) -> (Complex64, Complex64) {
    let factor = Complex64::new(0.0, -0.5 * k);
    (
        factor * Complex64::new(y.y, -y.x),
        factor * Complex64::new(y.y, y.x),
    )
}

/// The matrix taking `gₙ₋₁` to `gₙ`.
pub fn gn_matrix(n: usize, c_minus1: Complex64, c_plus1: Complex64) -> GnMatrix {
    assert!(n >= 1, "gn matrix needs n ≥ 1");
    GnMatrix {
        n,
        c_minus1,
        c_plus1,
    }
}

/// Coefficients of `gₙ` via the matrix chain `Gₙ ⋯ G₂` applied to `g₁`.
pub fn gn_coeffs(n: usize, k: f64, y: Point2) -> Result<FourierPoly> {
    if n == 0 || n > MAX_DERIV_ORDER {
        return Err(Error::OrderTooLarge {
            order: n,
            max: MAX_DERIV_ORDER,
        });
    }
    let (c_m1, c_p1) = g1_coeffs(k, y);
    let mut g = FourierPoly::new(1, vec![c_m1, Complex64::new(0.0, 0.0), c_p1]);
    for m in 2..=n {
        g = gn_matrix(m, c_m1, c_p1).apply(&g);
    }
    Ok(g)
}

/// `K(θ, y) = e^{−ik(y₁ cosθ + y₂ sinθ)}`.
pub fn kernel(k: f64, y: Point2, theta: f64) -> Complex64 {
    Complex64::from_polar(1.0, -k * (y.x * theta.cos() + y.y * theta.sin()))
}

/// `∂ⁿK/∂θⁿ(θ, y)`; the kernel itself for `n = 0`.
pub fn kernel_deriv(n: usize, k: f64, y: Point2, theta: f64) -> Result<Complex64> {
    if n == 0 {
        return Ok(kernel(k, y, theta));
    }
    let g = gn_coeffs(n, k, y)?;
    Ok(g.eval(theta) * kernel(k, y, theta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{PI, TAU};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    /// Independent route to the same recursion: convolution with
    /// `[c₋₁, 0, c₁]` plus the `iℓ` differentiation, never through `GnMatrix`.
    fn gn_by_convolution(n: usize, k: f64, y: Point2) -> FourierPoly {
        let (c_m1, c_p1) = g1_coeffs(k, y);
        let mut g = FourierPoly::new(1, vec![c_m1, c(0.0, 0.0), c_p1]);
        for m in 2..=n {
            let mut out = vec![c(0.0, 0.0); 2 * m + 1];
            for (idx, slot) in out.iter_mut().enumerate() {
                let ell = idx as i64 - m as i64;
                *slot = c_m1 * g.coeff(ell + 1)
                    + c_p1 * g.coeff(ell - 1)
                    + c(0.0, ell as f64) * g.coeff(ell);
            }
            g = FourierPoly::new(m, out);
        }
        g
    }

    #[test]
    fn g1_examples() {
        let (cm, cp) = g1_coeffs(1.0, Point2::new(1.0, 0.0));
        assert!((cm - c(-0.5, 0.0)).norm() < 1e-15);
        assert!((cp - c(0.5, 0.0)).norm() < 1e-15);
        // g₁(θ) = i sin θ for this k, y.
        let g = gn_coeffs(1, 1.0, Point2::new(1.0, 0.0)).unwrap();
        for theta in [0.3, 1.2, 4.0] {
            assert!((g.eval(theta) - c(0.0, theta.sin())).norm() < 1e-14);
        }

        let (cm, cp) = g1_coeffs(2.0, Point2::new(0.0, 0.0));
        assert_eq!((cm, cp), (c(0.0, 0.0), c(0.0, 0.0)));
    }

    #[test]
    fn g1_matches_direct_formula_randomly() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let k = rng.random_range(0.1..10.0);
            let y = Point2::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
            let (cm, cp) = g1_coeffs(k, y);
            for _ in 0..20 {
                let theta: f64 = rng.random_range(0.0..TAU);
                let series = cm * Complex64::from_polar(1.0, -theta)
                    + cp * Complex64::from_polar(1.0, theta);
                let direct = c(0.0, -k) * (-y.x * theta.sin() + y.y * theta.cos());
                assert!((series - direct).norm() < 1e-13);
            }
        }
    }

    #[test]
    fn pure_differentiation_matrix() {
        let m = gn_matrix(3, c(0.0, 0.0), c(0.0, 0.0));
        let phi = FourierPoly::new(2, (0..5).map(|i| c(i as f64, 0.0)).collect());
        let out = m.apply(&phi);
        for ell in -3i64..=3 {
            let expected = c(0.0, ell as f64) * phi.coeff(ell);
            assert!((out.coeff(ell) - expected).norm() < 1e-15);
        }
        // A constant with g₁ ≡ 0 maps to zero.
        let constant = FourierPoly::new(0, vec![c(5.0, -1.0)]);
        let out = gn_matrix(1, c(0.0, 0.0), c(0.0, 0.0)).apply(&constant);
        assert!(out.coeffs().iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn g2_symbolic_expansion() {
        // g₂ = g₁² + g₁′ has coefficients [c₋₁², −i c₋₁, 2c₋₁c₁, i c₁, c₁²].
        let k = 1.7;
        let y = Point2::new(0.4, -1.1);
        let (cm, cp) = g1_coeffs(k, y);
        let g2 = gn_coeffs(2, k, y).unwrap();
        let expected = [cm * cm, c(0.0, -1.0) * cm, 2.0 * cm * cp, c(0.0, 1.0) * cp, cp * cp];
        for (got, want) in g2.coeffs().iter().zip(expected.iter()) {
            assert!((got - want).norm() < 1e-14);
        }

        // k = 1, y = (1, 0): g₂(θ) = (i sinθ)² + i cosθ.
        let g2 = gn_coeffs(2, 1.0, Point2::new(1.0, 0.0)).unwrap();
        for theta in [0.2f64, 1.0, 2.9, 5.5] {
            let expected = c(-theta.sin() * theta.sin(), theta.cos());
            assert!((g2.eval(theta) - expected).norm() < 1e-14);
        }
    }

    #[test]
    fn matrix_chain_matches_convolution_route() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..10 {
            let k = rng.random_range(0.5..6.0);
            let y = Point2::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            for n in 1..=MAX_DERIV_ORDER {
                let a = gn_coeffs(n, k, y).unwrap();
                let b = gn_by_convolution(n, k, y);
                // The entries are sums of three products; compare relative to
                // the term magnitudes since the sum itself may nearly cancel.
                let scale = b.coeffs().iter().map(|z| z.norm()).fold(1.0, f64::max);
                for ell in -(n as i64)..=(n as i64) {
                    assert!((a.coeff(ell) - b.coeff(ell)).norm() < 1e-12 * scale);
                }
            }
        }
    }

    #[test]
    fn gn_satisfies_recursion_with_numeric_derivative() {
        // gₙ = gₙ₋₁ g₁ + gₙ₋₁′, the derivative taken by central differences.
        let k = 2.0;
        let y = Point2::new(0.8, 0.5);
        let h = 1e-5;
        for n in 2..=6usize {
            let gn = gn_coeffs(n, k, y).unwrap();
            let gprev = gn_coeffs(n - 1, k, y).unwrap();
            let g1 = gn_coeffs(1, k, y).unwrap();
            for theta in [0.1f64, 1.3, 2.2, 4.8] {
                let fd = (gprev.eval(theta + h) - gprev.eval(theta - h)) / (2.0 * h);
                let rhs = gprev.eval(theta) * g1.eval(theta) + fd;
                let lhs = gn.eval(theta);
                assert!(
                    (lhs - rhs).norm() <= 1e-6 * lhs.norm().max(1.0),
                    "n={n} θ={theta}: {lhs} vs {rhs}"
                );
            }
        }
    }

    #[test]
    fn kernel_deriv_low_orders_match_finite_differences() {
        let k = 1.3;
        let y = Point2::new(0.7, -0.4);
        let theta = 1.1;
        assert!((kernel_deriv(0, k, y, theta).unwrap() - kernel(k, y, theta)).norm() < 1e-16);
        // First and second derivative by 4th-order central stencils.
        let h = 1e-3;
        let f = |t: f64| kernel(k, y, t);
        let d1 = (-f(theta + 2.0 * h) + 8.0 * f(theta + h) - 8.0 * f(theta - h)
            + f(theta - 2.0 * h))
            / (12.0 * h);
        let d2 = (-f(theta + 2.0 * h) + 16.0 * f(theta + h) - 30.0 * f(theta)
            + 16.0 * f(theta - h)
            - f(theta - 2.0 * h))
            / (12.0 * h * h);
        assert!((kernel_deriv(1, k, y, theta).unwrap() - d1).norm() < 1e-10);
        assert!((kernel_deriv(2, k, y, theta).unwrap() - d2).norm() < 1e-8);
    }

    #[test]
    fn kernel_deriv_edge_cases() {
        // Source at the origin: K is constant in θ.
        for n in 1..=MAX_DERIV_ORDER {
            let d = kernel_deriv(n, 3.0, Point2::new(0.0, 0.0), 0.7).unwrap();
            assert_eq!(d.norm(), 0.0);
        }
        assert!(kernel_deriv(MAX_DERIV_ORDER + 1, 1.0, Point2::new(1.0, 0.0), 0.0).is_err());
        assert!(gn_coeffs(0, 1.0, Point2::new(1.0, 0.0)).is_err());
    }

    #[test]
    fn kernel_deriv_periodicity() {
        let k = 4.0;
        let y = Point2::new(0.3, 0.9);
        for n in 0..=6usize {
            for theta in [0.0f64, 0.37, 2.0, 5.9] {
                let a = kernel_deriv(n, k, y, theta).unwrap();
                let b = kernel_deriv(n, k, y, theta + TAU).unwrap();
                assert!((a - b).norm() <= 1e-12 * a.norm().max(1.0));
            }
        }
    }

    #[test]
    fn parity_for_source_on_y_axis() {
        // y = (0, y₂): g₁ is odd about π/2, so ∂K/∂θ(π−θ) = −∂K/∂θ(θ).
        let k = 2.5;
        let y = Point2::new(0.0, 1.2);
        for theta in [0.2f64, 0.9, 1.4] {
            let a = kernel_deriv(1, k, y, PI - theta).unwrap();
            let b = kernel_deriv(1, k, y, theta).unwrap();
            assert!((a + b).norm() < 1e-12);
        }
    }
}
