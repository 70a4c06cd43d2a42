//! Herglotz wave function incidence.
//!
//! A Herglotz wave function is the plane-wave superposition
//! `u^i(x) = ∫₀^{2π} g(α) e^{ikx·d_α} dα` with `d_α = −(cosα, sinα)`, so its
//! far field is the same integral of `D(θ, α)` against the kernel `g`. The
//! combined embedding evaluator makes the integrand cheap for any `α`, and a
//! phase-shifted equispaced trapezoid rule integrates it with spectral
//! accuracy while keeping every node away from the amplification points `Θ*`.
//!
//! The Fourier–Bessel kernels `g_ℓ` reproduce the regular wavefunctions
//! `ψ_ℓ = J_{|ℓ|}(k|x|)e^{iℓθ_x}` through the Jacobi–Anger expansion.

use std::f64::consts::TAU;
use std::sync::Arc;

use num_complex::Complex64;

use crate::embedding::EmbeddingContext;
use crate::geometry::{theta_star_set, Point2};
use crate::special::bessel_j;

/// Square-integrable kernel on `(0, 2π)` with a bound on its Fourier content.
#[derive(Clone)]
pub struct HerglotzKernel {
    eval: Arc<dyn Fn(f64) -> Complex64 + Send + Sync>,
    /// Highest Fourier frequency present (drives the quadrature size).
    pub oscillation_order: u32,
}

impl HerglotzKernel {
    pub fn new(eval: Arc<dyn Fn(f64) -> Complex64 + Send + Sync>, oscillation_order: u32) -> Self {
        HerglotzKernel {
            eval,
            oscillation_order,
        }
    }

    pub fn eval(&self, alpha: f64) -> Complex64 {
        (self.eval)(alpha)
    }
}

/// The kernel `g_ℓ(α) = i^{|ℓ|} e^{iℓα} / (2π)` generating the regular
/// wavefunction `ψ_ℓ`; unimodular up to the `1/(2π)` factor.
pub fn fourier_bessel_kernel(ell: i32) -> HerglotzKernel {
    let phase = Complex64::i().powi(ell.unsigned_abs() as i32) / TAU;
    HerglotzKernel::new(
        Arc::new(move |alpha: f64| phase * Complex64::from_polar(1.0, ell as f64 * alpha)),
        ell.unsigned_abs(),
    )
}

/// `ψ_ℓ(x) = J_{|ℓ|}(k|x|) e^{iℓθ_x}`; defined by continuity at the origin.
pub fn regular_wavefunction(ell: i32, k: f64, x: Point2) -> Complex64 {
    let r = x.norm();
    if r == 0.0 {
        return if ell == 0 {
            Complex64::new(1.0, 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        };
    }
    let radial = bessel_j(ell.unsigned_abs(), k * r).expect("positive argument");
    radial * Complex64::from_polar(1.0, ell as f64 * x.angle())
}

/// Equispaced trapezoid rule on the circle with a phase offset keeping the
/// nodes clear of a prescribed avoid set.
#[derive(Clone, Debug)]
pub struct QuadratureRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub phase: f64,
    /// Smallest arc distance from any node to the avoid set.
    pub achieved_min_dist: f64,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Number of quadrature nodes: `20·⌈max(k, ℓ_max)⌉` with a floor of 40.
pub fn quadrature_size(k: f64, ell_max: u32) -> usize {
    let scale = k.max(ell_max as f64).ceil() as usize;
    (20 * scale).max(40)
}

/// Build the rule avoiding `Θ*` for the given `p`.
pub fn build_quadrature(k: f64, ell_max: u32, p: u32) -> QuadratureRule {
    build_quadrature_avoiding(k, ell_max, &theta_star_set(p))
}

/// Build the rule maximizing the minimum distance from the nodes to an
/// arbitrary avoid set (for example `Θ*` plus the canonical angles).
/// The optimal phase is found by a grid scan over one node spacing followed
/// by golden-section refinement.
pub fn build_quadrature_avoiding(k: f64, ell_max: u32, avoid: &[f64]) -> QuadratureRule {
    let n = quadrature_size(k, ell_max);
    let spacing = TAU / n as f64;

    let min_dist = |phase: f64| -> f64 {
        if avoid.is_empty() {
            return f64::INFINITY;
        }
        let mut worst = f64::INFINITY;
        for &a in avoid {
            // Distance from `a` to the nearest lattice node.
            let offset = (a - phase).rem_euclid(spacing);
            worst = worst.min(offset.min(spacing - offset));
        }
        worst
    };

    // Coarse scan over one spacing.
    let samples = 10_000;
    let mut best_phase = 0.0;
    let mut best = -1.0f64;
    for i in 0..samples {
        let phase = spacing * i as f64 / samples as f64;
        let d = min_dist(phase);
        if d > best {
            best = d;
            best_phase = phase;
        }
    }
    // Golden-section refinement around the best sample.
    let gr = 0.5 * (5f64.sqrt() - 1.0);
    let mut lo = best_phase - spacing / samples as f64;
    let mut hi = best_phase + spacing / samples as f64;
    let mut x1 = hi - gr * (hi - lo);
    let mut x2 = lo + gr * (hi - lo);
    let mut f1 = min_dist(x1);
    let mut f2 = min_dist(x2);
    for _ in 0..60 {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + gr * (hi - lo);
            f2 = min_dist(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - gr * (hi - lo);
            f1 = min_dist(x1);
        }
    }
    let refined = 0.5 * (lo + hi);
    let phase = if min_dist(refined) >= best {
        refined.rem_euclid(spacing)
    } else {
        best_phase
    };
    let achieved_min_dist = min_dist(phase);

    let nodes: Vec<f64> = (0..n)
        .map(|i| (phase + i as f64 * spacing).rem_euclid(TAU))
        .collect();
    let weights = vec![spacing; n];
    QuadratureRule {
        nodes,
        weights,
        phase,
        achieved_min_dist,
    }
}

/// Far field of a Herglotz incident wave by quadrature over the combined
/// embedding evaluator: `Σ_i w_i g(α̃_i) E^⊛(θ, α̃_i)`.
pub fn herglotz_far_field(
    ctx: &EmbeddingContext,
    kernel: &HerglotzKernel,
    quad: &QuadratureRule,
    theta: f64,
) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for (&alpha, &w) in quad.nodes.iter().zip(quad.weights.iter()) {
        acc += kernel.eval(alpha) * ctx.combined(theta, alpha) * w;
    }
    acc
}
