//! Far-field diffraction coefficients for sound-soft convex rational polygons.
//!
//! The far-field coefficient `D(θ, α)` of a plane wave hitting a rational
//! polygon can be written, for *every* incident angle `α`, as a combination of
//! the far fields of a fixed small set of canonical plane-wave problems. The
//! combination divides by `Λ(θ, α) = cos(pθ) − (−1)^p cos(pα)`, so any noise
//! in the canonical solutions is amplified without bound near the zero set of
//! `Λ`. This crate implements that representation together with a stabilized
//! evaluator that switches between the raw quotient, L'Hôpital limits and
//! Taylor corrections so the result stays accurate on all of `[0, 2π)²`.
//!
//! What is here:
//!
//! * [`geometry`] — polygons with exact rational external angles, the angle
//!   sets `Θ_α` and `Θ*`, and the `Λ` function with its two-sided bounds.
//! * [`special`] — integer-order Bessel and Hankel functions.
//! * [`solver`] — a method-of-fundamental-solutions solver for the canonical
//!   plane-wave problems, exposing `D(θ)` and its `θ`-derivatives.
//! * [`kernel`] — fast exact derivatives of the far-field kernel
//!   `e^{−ik(y₁cosθ + y₂sinθ)}` through banded matrix products.
//! * [`embedding`] — the embedding system, the five-branch combined
//!   evaluator, and the stabilized Taylor machinery.
//! * [`herglotz`] — far fields for Herglotz wave function incidence by
//!   quadrature over the combined evaluator.
//! * [`tmatrix`] — single-scatterer T-matrix assembly from embedded far
//!   fields of regular wavefunctions.
//! * [`cli`] — the command front end used by the `polyembed` binary.
//!
//! The `examples/` directory has one runnable program per capability; start
//! with `far_field_square`.

pub mod cli;
pub mod embedding;
pub mod error;
pub mod geometry;
pub mod herglotz;
pub mod kernel;
pub mod linalg;
pub mod solver;
pub mod special;
pub mod tmatrix;

pub use error::{Error, Result};
pub use geometry::{CanonicalSet, Point2, Polygon, RationalAngleData};
