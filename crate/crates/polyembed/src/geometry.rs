//! Polygon geometry and the angle arithmetic behind the embedding formulae.
//!
//! A convex polygon is *rational* when every external angle is a rational
//! multiple of pi, `ω_j = π q_j / p`. From `p` come the two angle sets that
//! control where the embedding quotient degenerates:
//!
//! * `Θ_α` — the zero set of `Λ(·, α)`, where `Λ(θ, α) = cos(pθ) − (−1)^p cos(pα)`;
//! * `Θ*`  — `{nπ/p}`, the zero set of `∂Λ/∂θ`, where zeros of `Λ` are double.
//!
//! Angles are always points on the unit circle: every comparison here uses the
//! arc distance `|arg e^{i(a−b)}|`, never raw differences.

use std::f64::consts::{PI, TAU};
use std::ops::{Add, Mul, Neg, Sub};

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Tolerance for treating two angles as the same point on the circle.
pub const ANGLE_EQ_TOL: f64 = 1e-9;

/// A point (or vector) in the plane.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Point2 { x, y }
    }

    pub fn dot(self, other: Point2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// z-component of the cross product `self × other`.
    pub fn cross(self, other: Point2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn norm_sqr(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.norm_sqr().sqrt()
    }

    /// Polar angle in `[0, 2π)`.
    pub fn angle(self) -> f64 {
        normalize_angle(self.y.atan2(self.x))
    }
}

impl Add for Point2 {
    type Output = Point2;
    fn add(self, o: Point2) -> Point2 {
        Point2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Point2 {
    type Output = Point2;
    fn sub(self, o: Point2) -> Point2 {
        Point2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Point2 {
    type Output = Point2;
    fn mul(self, s: f64) -> Point2 {
        Point2::new(self.x * s, self.y * s)
    }
}

impl Neg for Point2 {
    type Output = Point2;
    fn neg(self) -> Point2 {
        Point2::new(-self.x, -self.y)
    }
}

/// Map an angle to `[0, 2π)`.
pub fn normalize_angle(a: f64) -> f64 {
    let r = a.rem_euclid(TAU);
    if r == TAU {
        0.0
    } else {
        r
    }
}

/// Arc distance between two angles, in `[0, π]`.
pub fn circle_dist(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    if d > PI {
        TAU - d
    } else {
        d
    }
}

/// Signed wrapped difference `a − b`, in `(−π, π]`.
pub fn signed_circle_diff(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    if d > PI {
        d - TAU
    } else {
        d
    }
}

/// Index and value of the element of `set` closest to `target` on the circle.
/// Ties are broken toward the smallest angle value.
pub fn closest_angle(target: f64, set: &[f64]) -> (usize, f64) {
    assert!(!set.is_empty(), "closest_angle on empty set");
    let mut best = (0usize, set[0], circle_dist(target, set[0]));
    for (i, &a) in set.iter().enumerate().skip(1) {
        let d = circle_dist(target, a);
        if d < best.2 || (d == best.2 && a < best.1) {
            best = (i, a, d);
        }
    }
    (best.0, best.1)
}

/// Exact external angle `ω = π·numer/denom` of one polygon corner.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AngleFraction {
    pub numer: u32,
    pub denom: u32,
}

impl AngleFraction {
    pub fn new(numer: u32, denom: u32) -> Result<Self> {
        if denom == 0 {
            return Err(Error::InvalidGeometry("angle fraction with zero denominator".into()));
        }
        let f = AngleFraction { numer, denom };
        let v = f.value();
        if !(1.0 < v && v < 2.0) {
            return Err(Error::InvalidGeometry(format!(
                "external angle π·{numer}/{denom} is outside (π, 2π)"
            )));
        }
        Ok(f)
    }

    /// The rational number `numer/denom`.
    pub fn value(self) -> f64 {
        self.numer as f64 / self.denom as f64
    }

    /// The angle `π·numer/denom` in radians.
    pub fn angle(self) -> f64 {
        PI * self.numer as f64 / self.denom as f64
    }

    pub fn reduced(self) -> AngleFraction {
        let g = gcd(self.numer, self.denom);
        AngleFraction {
            numer: self.numer / g,
            denom: self.denom / g,
        }
    }
}

fn gcd(a: u32, b: u32) -> u32 {
    let (mut a, mut b) = (a, b);
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a.max(1)
}

fn lcm(a: u32, b: u32) -> Option<u32> {
    (a / gcd(a, b)).checked_mul(b)
}

/// Convex rational polygon with counter-clockwise vertices, at least one side
/// parallel to the x-axis and the origin strictly inside.
#[derive(Clone, Debug)]
pub struct Polygon {
    vertices: Vec<Point2>,
    side_lengths: Vec<f64>,
    fractions: Vec<AngleFraction>,
}

impl Polygon {
    /// Build from vertices and the exact external-angle fractions, validating
    /// every geometric invariant. `fractions[j]` belongs to `vertices[j]`, the
    /// corner between sides `j−1` and `j`.
    pub fn new(vertices: Vec<Point2>, fractions: Vec<AngleFraction>) -> Result<Self> {
        let n = vertices.len();
        if n < 3 {
            return Err(Error::InvalidGeometry(format!("{n} vertices, need at least 3")));
        }
        if fractions.len() != n {
            return Err(Error::InvalidGeometry(format!(
                "{} angle fractions for {n} vertices",
                fractions.len()
            )));
        }

        let mut side_lengths = Vec::with_capacity(n);
        for j in 0..n {
            let e = vertices[(j + 1) % n] - vertices[j];
            let len = e.norm();
            if len < 1e-12 {
                return Err(Error::InvalidGeometry(format!("side {j} is degenerate")));
            }
            side_lengths.push(len);
        }

        // Strict convexity with counter-clockwise orientation.
        for j in 0..n {
            let e_prev = vertices[j] - vertices[(j + n - 1) % n];
            let e_next = vertices[(j + 1) % n] - vertices[j];
            if e_prev.cross(e_next) <= 0.0 {
                return Err(Error::InvalidGeometry(format!(
                    "corner {j} is not strictly convex in counter-clockwise order"
                )));
            }
        }

        // Coordinate convention: some side parallel to the x-axis ...
        let parallel = (0..n).any(|j| {
            let e = vertices[(j + 1) % n] - vertices[j];
            e.y.abs() <= 1e-9 * e.norm()
        });
        if !parallel {
            return Err(Error::InvalidGeometry(
                "no side is parallel to the x-axis".into(),
            ));
        }
        // ... and the origin strictly interior.
        for j in 0..n {
            let e = vertices[(j + 1) % n] - vertices[j];
            if e.cross(-vertices[j]) <= 0.0 {
                return Err(Error::InvalidGeometry("origin is not strictly interior".into()));
            }
        }

        // The declared fractions must match the measured external angles.
        for j in 0..n {
            let e_prev = vertices[j] - vertices[(j + n - 1) % n];
            let e_next = vertices[(j + 1) % n] - vertices[j];
            let turn = e_prev.cross(e_next).atan2(e_prev.dot(e_next));
            let measured = PI + turn;
            let declared = fractions[j].angle();
            if (measured - declared).abs() > 1e-9 {
                return Err(Error::InvalidGeometry(format!(
                    "corner {j}: declared external angle {declared:.12} differs from measured {measured:.12}"
                )));
            }
        }

        Ok(Polygon {
            vertices,
            side_lengths,
            fractions,
        })
    }

    /// Build from raw vertices, detecting the rational angles numerically by
    /// continued fractions (denominators up to 100, tolerance 1e−9).
    pub fn from_vertices(vertices: Vec<Point2>) -> Result<Self> {
        let n = vertices.len();
        if n < 3 {
            return Err(Error::InvalidGeometry(format!("{n} vertices, need at least 3")));
        }
        let mut fractions = Vec::with_capacity(n);
        for j in 0..n {
            let e_prev = vertices[j] - vertices[(j + n - 1) % n];
            let e_next = vertices[(j + 1) % n] - vertices[j];
            let turn = e_prev.cross(e_next).atan2(e_prev.dot(e_next));
            let ratio = (PI + turn) / PI;
            let (numer, denom) = rational_approx(ratio, 100).ok_or_else(|| {
                Error::NonRationalAngle(format!(
                    "corner {j}: ω/π = {ratio:.12} has no fraction with denominator ≤ 100 within 1e-9"
                ))
            })?;
            fractions.push(AngleFraction::new(numer, denom)?);
        }
        Polygon::new(vertices, fractions)
    }

    /// Regular `n`-gon with the given side length, centered at the origin with
    /// its bottom side parallel to the x-axis. External angles are
    /// `π(n+2)/n`, stored unreduced so that the no-reduction parameter choice
    /// `(p, q) = (n, n+2)` is recoverable.
    pub fn regular(n_sides: usize, side_length: f64) -> Result<Self> {
        if n_sides < 3 {
            return Err(Error::InvalidGeometry(format!(
                "regular polygon needs at least 3 sides, got {n_sides}"
            )));
        }
        if !(side_length > 0.0) {
            return Err(Error::InvalidGeometry(format!(
                "side length must be positive, got {side_length}"
            )));
        }
        let n = n_sides as f64;
        let circumradius = side_length / (2.0 * (PI / n).sin());
        let mut vertices = Vec::with_capacity(n_sides);
        for j in 0..n_sides {
            let phi = -PI / 2.0 - PI / n + TAU * j as f64 / n;
            vertices.push(Point2::new(circumradius * phi.cos(), circumradius * phi.sin()));
        }
        let frac = AngleFraction::new(n_sides as u32 + 2, n_sides as u32)?;
        Polygon::new(vertices, vec![frac; n_sides])
    }

    pub fn num_sides(&self) -> usize {
        self.vertices.len()
    }

    pub fn vertices(&self) -> &[Point2] {
        &self.vertices
    }

    pub fn side_lengths(&self) -> &[f64] {
        &self.side_lengths
    }

    pub fn external_angle_fractions(&self) -> &[AngleFraction] {
        &self.fractions
    }

    /// Endpoints of side `j`, from `vertices[j]` to `vertices[j+1]`.
    pub fn side(&self, j: usize) -> (Point2, Point2) {
        let n = self.vertices.len();
        (self.vertices[j], self.vertices[(j + 1) % n])
    }

    /// Unit outward normal of side `j`.
    pub fn outward_normal(&self, j: usize) -> Point2 {
        let (a, b) = self.side(j);
        let e = b - a;
        let len = e.norm();
        Point2::new(e.y / len, -e.x / len)
    }

    pub fn perimeter(&self) -> f64 {
        self.side_lengths.iter().sum()
    }

    /// Area centroid.
    pub fn centroid(&self) -> Point2 {
        let n = self.vertices.len();
        let mut area2 = 0.0;
        let mut cx = 0.0;
        let mut cy = 0.0;
        for j in 0..n {
            let a = self.vertices[j];
            let b = self.vertices[(j + 1) % n];
            let w = a.cross(b);
            area2 += w;
            cx += (a.x + b.x) * w;
            cy += (a.y + b.y) * w;
        }
        Point2::new(cx / (3.0 * area2), cy / (3.0 * area2))
    }

    /// Radius of the smallest origin-centered ball containing the polygon.
    pub fn enclosing_radius(&self) -> f64 {
        self.vertices.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Strict interiority test.
    pub fn contains_strict(&self, x: Point2) -> bool {
        let n = self.vertices.len();
        (0..n).all(|j| {
            let (a, b) = self.side(j);
            (b - a).cross(x - a) > 0.0
        })
    }

    /// Whether corner `j` is illuminated from direction angle `alpha`
    /// according to `rule`: the outward normal of an adjacent side must have
    /// positive dot product with `(cos α, sin α)`.
    pub fn corner_visible(&self, corner: usize, alpha: f64, rule: VisibilityRule) -> bool {
        let n = self.vertices.len();
        let d = Point2::new(alpha.cos(), alpha.sin());
        let prev = self.outward_normal((corner + n - 1) % n).dot(d) > 0.0;
        let next = self.outward_normal(corner).dot(d) > 0.0;
        match rule {
            VisibilityRule::AnyAdjacentSide => prev || next,
            VisibilityRule::BothAdjacentSides => prev && next,
        }
    }
}

/// Best rational approximation `a/b ≈ x` with `b ≤ max_denom`, accepted only
/// within 1e−9. Continued-fraction expansion.
fn rational_approx(x: f64, max_denom: u32) -> Option<(u32, u32)> {
    if !(x.is_finite() && x > 0.0) {
        return None;
    }
    let (mut h0, mut h1) = (1u64, x.floor() as u64);
    let (mut k0, mut k1) = (0u64, 1u64);
    let mut frac = x - x.floor();
    for _ in 0..64 {
        if (h1 as f64 / k1 as f64 - x).abs() <= 1e-9 {
            return Some((h1 as u32, k1 as u32));
        }
        if frac.abs() < 1e-15 {
            break;
        }
        let inv = 1.0 / frac;
        let a = inv.floor();
        frac = inv - a;
        let h2 = (a as u64).checked_mul(h1)?.checked_add(h0)?;
        let k2 = (a as u64).checked_mul(k1)?.checked_add(k0)?;
        if k2 > max_denom as u64 {
            break;
        }
        h0 = h1;
        h1 = h2;
        k0 = k1;
        k1 = k2;
    }
    if (h1 as f64 / k1 as f64 - x).abs() <= 1e-9 && k1 <= max_denom as u64 {
        Some((h1 as u32, k1 as u32))
    } else {
        None
    }
}

/// The rational-angle parameters `(p, {q_j})` of a polygon, with the number of
/// canonical solves `M = Σ (q_j − 1)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RationalAngleData {
    pub p: u32,
    pub q: Vec<u32>,
    /// Number of canonical problems, `M`.
    pub num_canonical: usize,
    pub quasi_regular: bool,
}

/// Compute `(p, q_j, M)`. With `use_reduction` the fractions are reduced to
/// lowest terms first, giving the smallest valid `p` (for quasi-regular
/// polygons with even side count this halves `p` and cuts `M` from `N(N+1)`
/// to `N²/2`); without it the fractions are used exactly as stored.
pub fn rational_params(polygon: &Polygon, use_reduction: bool) -> Result<RationalAngleData> {
    let fractions: Vec<AngleFraction> = polygon
        .external_angle_fractions()
        .iter()
        .map(|f| if use_reduction { f.reduced() } else { *f })
        .collect();

    let mut p: u32 = 1;
    for f in &fractions {
        p = lcm(p, f.denom).ok_or_else(|| {
            Error::NonRationalAngle("common denominator overflows u32".into())
        })?;
        if p > 100_000 {
            return Err(Error::NonRationalAngle(format!(
                "common denominator p = {p} is implausibly large"
            )));
        }
    }
    let q: Vec<u32> = fractions.iter().map(|f| f.numer * (p / f.denom)).collect();
    let num_canonical = q.iter().map(|&qj| (qj - 1) as usize).sum();
    let first = polygon.external_angle_fractions()[0].reduced();
    let quasi_regular = polygon
        .external_angle_fractions()
        .iter()
        .all(|f| f.reduced() == first);
    Ok(RationalAngleData {
        p,
        q,
        num_canonical,
        quasi_regular,
    })
}

/// `Θ* = {nπ/p : n = 0, …, 2p−1}`, sorted.
pub fn theta_star_set(p: u32) -> Vec<f64> {
    (0..2 * p).map(|n| n as f64 * PI / p as f64).collect()
}

/// `Θ_α`, the zero set of `Λ(·, α)` on `[0, 2π)`, sorted and deduplicated on
/// the circle. Contains `2p` angles, or `p` when `α ∈ Θ*`.
pub fn theta_alpha_set(p: u32, alpha: f64) -> Vec<f64> {
    let pf = p as f64;
    let mut angles = Vec::with_capacity(2 * p as usize);
    for n in 0..p {
        let shift = if p % 2 == 1 {
            (2 * n + 1) as f64 * PI / pf
        } else {
            2.0 * n as f64 * PI / pf
        };
        angles.push(normalize_angle(alpha + shift));
        angles.push(normalize_angle(-alpha + shift));
    }
    angles.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut out: Vec<f64> = Vec::with_capacity(angles.len());
    for a in angles {
        if out.last().is_none_or(|&last| circle_dist(a, last) > ANGLE_EQ_TOL) {
            out.push(a);
        }
    }
    // The circle wraps: the first and last survivors may still coincide.
    if out.len() > 1 && circle_dist(out[0], *out.last().unwrap()) <= ANGLE_EQ_TOL {
        out.pop();
    }
    out
}

/// `Λ(θ, α) = cos(pθ) − (−1)^p cos(pα)`.
pub fn lambda(p: u32, theta: f64, alpha: f64) -> f64 {
    let pf = p as f64;
    let sign = if p % 2 == 0 { 1.0 } else { -1.0 };
    (pf * theta).cos() - sign * (pf * alpha).cos()
}

/// First and second θ-derivatives of `Λ`: `(−p sin(pθ), −p² cos(pθ))`.
pub fn lambda_theta_derivs(p: u32, theta: f64) -> (f64, f64) {
    let pf = p as f64;
    (-pf * (pf * theta).sin(), -pf * pf * (pf * theta).cos())
}

/// n-th θ-derivative of `Λ` for `n ≥ 1`: `pⁿ cos(pθ + nπ/2)`.
pub fn lambda_theta_deriv_n(p: u32, theta: f64, n: u32) -> f64 {
    assert!(n >= 1, "θ-derivative order must be at least 1");
    let pf = p as f64;
    let base = pf * theta;
    let rotated = match n % 4 {
        0 => base.cos(),
        1 => -base.sin(),
        2 => -base.cos(),
        _ => base.sin(),
    };
    pf.powi(n as i32) * rotated
}

/// Two-sided bound on `|Λ(θ, α)|`:
/// `(p²/8)·|θ−θ₀|·|θ₀−θ*| ≤ |Λ| ≤ p²·|θ−θ₀|·(|θ−θ₀|/2 + |θ₀−θ*|)`,
/// with `θ₀` the element of `Θ_α` closest to `θ` and `θ*` the element of `Θ*`
/// closest to `θ₀`, all in the arc metric.
pub fn lambda_bounds(p: u32, theta: f64, alpha: f64) -> (f64, f64) {
    let zeros = theta_alpha_set(p, alpha);
    let (_, theta0) = closest_angle(theta, &zeros);
    let stars = theta_star_set(p);
    let (_, theta_star) = closest_angle(theta0, &stars);
    let d0 = circle_dist(theta, theta0);
    let ds = circle_dist(theta0, theta_star);
    let pf = p as f64;
    let lower = pf * pf / 8.0 * d0 * ds;
    let upper = pf * pf * d0 * (0.5 * d0 + ds);
    (lower, upper)
}

/// How many adjacent sides must face the incidence direction for a corner to
/// count as seen.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum VisibilityRule {
    #[default]
    AnyAdjacentSide,
    BothAdjacentSides,
}

/// Knobs for canonical-angle selection.
#[derive(Clone, Debug)]
pub struct SelectionOptions {
    pub visibility: VisibilityRule,
    /// Minimum pairwise arc separation; defaults to `π/(4M)`.
    pub min_separation: Option<f64>,
    /// Total random-draw budget before giving up.
    pub max_draws: usize,
}

impl Default for SelectionOptions {
    fn default() -> Self {
        SelectionOptions {
            visibility: VisibilityRule::default(),
            min_separation: None,
            max_draws: 10_000,
        }
    }
}

/// The `M` canonical incident angles `A_M`, with `Θ* ⊂ A_M` and the indices
/// of the `Θ*` members recorded.
#[derive(Clone, Debug)]
pub struct CanonicalSet {
    pub angles: Vec<f64>,
    pub star_indices: Vec<usize>,
}

impl CanonicalSet {
    /// Index of a canonical angle matching `alpha` on the circle, if any.
    pub fn index_of(&self, alpha: f64) -> Option<usize> {
        self.angles
            .iter()
            .position(|&a| circle_dist(a, alpha) <= ANGLE_EQ_TOL)
    }
}

/// Select `A_M`: all of `Θ*`, plus `M − 2p` random angles satisfying the
/// per-corner visibility counts and the anti-clustering separation.
/// Deterministic for a fixed seed.
pub fn select_canonical_angles(
    polygon: &Polygon,
    params: &RationalAngleData,
    rng_seed: u64,
) -> Result<CanonicalSet> {
    select_canonical_angles_with(polygon, params, rng_seed, &SelectionOptions::default())
}

pub fn select_canonical_angles_with(
    polygon: &Polygon,
    params: &RationalAngleData,
    rng_seed: u64,
    opts: &SelectionOptions,
) -> Result<CanonicalSet> {
    let m = params.num_canonical;
    let stars = theta_star_set(params.p);
    if m < stars.len() {
        return Err(Error::InfeasibleCanonicalSet(format!(
            "M = {m} canonical angles cannot contain the {} elements of Θ*",
            stars.len()
        )));
    }
    let min_sep = opts
        .min_separation
        .unwrap_or(PI / (4.0 * m as f64));
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut draws = 0usize;

    loop {
        let mut angles = stars.clone();
        while angles.len() < m {
            if draws >= opts.max_draws {
                return Err(Error::SelectionFailure { retries: draws });
            }
            draws += 1;
            let cand = rng.random_range(0.0..TAU);
            if angles.iter().all(|&a| circle_dist(cand, a) >= min_sep) {
                angles.push(cand);
            }
        }
        angles[stars.len()..].sort_by(|a, b| a.partial_cmp(b).unwrap());

        let visible = (0..polygon.num_sides()).all(|corner| {
            let need = (params.q[corner] - 1) as usize;
            let count = angles
                .iter()
                .filter(|&&a| polygon.corner_visible(corner, a, opts.visibility))
                .count();
            count >= need
        });
        if visible {
            return Ok(CanonicalSet {
                angles,
                star_indices: (0..stars.len()).collect(),
            });
        }
        if draws >= opts.max_draws {
            return Err(Error::SelectionFailure { retries: draws });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn regular_polygon_examples() {
        let square = Polygon::regular(4, 1.0).unwrap();
        assert_eq!(square.num_sides(), 4);
        for f in square.external_angle_fractions() {
            assert_relative_eq!(f.angle(), 1.5 * PI, max_relative = 1e-12);
        }
        for &len in square.side_lengths() {
            assert_relative_eq!(len, 1.0, max_relative = 1e-12);
        }
        assert!(square.contains_strict(Point2::new(0.0, 0.0)));
        assert!(square.centroid().norm() < 1e-12);

        let hex = Polygon::regular(6, 1.0).unwrap();
        for f in hex.external_angle_fractions() {
            assert_relative_eq!(f.angle(), 4.0 * PI / 3.0, max_relative = 1e-12);
        }

        let tri = Polygon::regular(3, 1.0).unwrap();
        for f in tri.external_angle_fractions() {
            assert_relative_eq!(f.angle(), 5.0 * PI / 3.0, max_relative = 1e-12);
        }

        assert!(Polygon::regular(2, 1.0).is_err());
        assert!(Polygon::regular(4, 0.0).is_err());
    }

    #[test]
    fn rational_params_examples() {
        let square = Polygon::regular(4, 1.0).unwrap();
        let r = rational_params(&square, true).unwrap();
        assert_eq!((r.p, r.q[0], r.num_canonical), (2, 3, 8));
        assert!(r.quasi_regular);

        let no_red = rational_params(&square, false).unwrap();
        assert_eq!((no_red.p, no_red.q[0], no_red.num_canonical), (4, 6, 20));

        let hex = Polygon::regular(6, 1.0).unwrap();
        let r = rational_params(&hex, true).unwrap();
        assert_eq!((r.p, r.q[0], r.num_canonical), (3, 4, 18));

        let pent = Polygon::regular(5, 1.0).unwrap();
        let r = rational_params(&pent, false).unwrap();
        assert_eq!((r.p, r.q[0], r.num_canonical), (5, 7, 30));
        // Already in lowest terms: reduction changes nothing for odd N.
        let r2 = rational_params(&pent, true).unwrap();
        assert_eq!((r2.p, r2.q[0], r2.num_canonical), (5, 7, 30));

        let tri = Polygon::regular(3, 1.0).unwrap();
        let r = rational_params(&tri, true).unwrap();
        assert_eq!((r.p, r.q[0], r.num_canonical), (3, 5, 12));
    }

    #[test]
    fn minimal_p_by_brute_force_for_pentagon() {
        // Independent check of minimality: smallest p ≤ 20 such that p·(7/5)
        // is an integer for every corner.
        let pent = Polygon::regular(5, 1.0).unwrap();
        let r = rational_params(&pent, true).unwrap();
        let mut brute = None;
        'outer: for p in 1u32..=20 {
            for f in pent.external_angle_fractions() {
                let q = p as f64 * f.value();
                if (q - q.round()).abs() > 1e-12 {
                    continue 'outer;
                }
            }
            brute = Some(p);
            break;
        }
        assert_eq!(brute, Some(r.p));
    }

    #[test]
    fn theta_star_examples() {
        assert_eq!(theta_star_set(2), vec![0.0, PI / 2.0, PI, 1.5 * PI]);
        let s3 = theta_star_set(3);
        assert_eq!(s3.len(), 6);
        assert_relative_eq!(s3[1], PI / 3.0);
        assert_eq!(theta_star_set(1), vec![0.0, PI]);
    }

    #[test]
    fn theta_star_closed_under_reflection() {
        for p in 1u32..=8 {
            let stars = theta_star_set(p);
            for &s in &stars {
                let reflected = normalize_angle(TAU - s);
                assert!(
                    stars.iter().any(|&t| circle_dist(t, reflected) < 1e-12),
                    "2π − {s} missing for p = {p}"
                );
            }
        }
    }

    #[test]
    fn theta_alpha_examples() {
        let set = theta_alpha_set(2, 0.0);
        assert_eq!(set.len(), 2);
        assert_relative_eq!(set[0], 0.0);
        assert_relative_eq!(set[1], PI);

        let set = theta_alpha_set(2, 1.0);
        assert_eq!(set.len(), 4);
        assert_relative_eq!(set[0], 1.0);
        assert_relative_eq!(set[1], PI - 1.0);
        assert_relative_eq!(set[2], PI + 1.0);
        assert_relative_eq!(set[3], TAU - 1.0);

        // α = π/3 lies in Θ* for p = 3: p elements, all in Θ*.
        let set = theta_alpha_set(3, PI / 3.0);
        assert_eq!(set.len(), 3);
        let stars = theta_star_set(3);
        for &t in &set {
            assert!(stars.iter().any(|&s| circle_dist(s, t) < 1e-9));
        }
    }

    #[test]
    fn theta_alpha_matches_brute_force_roots() {
        // Scan Λ(·, π/3) for p = 3 on a fine grid and cluster the near-zeros.
        let p = 3u32;
        let alpha = PI / 3.0;
        let n = 1_000_000usize;
        let mut roots: Vec<f64> = Vec::new();
        let mut record = |t: f64, roots: &mut Vec<f64>| {
            if roots.last().is_none_or(|&r| circle_dist(r, t) > 1e-3) {
                roots.push(t);
            }
        };
        let mut prev = f64::NAN;
        for i in 0..=n {
            let t = TAU * i as f64 / n as f64;
            let v = lambda(p, t, alpha);
            // Tangential near-zero: double roots never change sign, so the
            // threshold must admit Λ ≈ (p²/2)·(spacing/2)² at the nearest sample.
            if v.abs() < 2e-10 {
                record(t, &mut roots);
            } else if prev * v < 0.0 {
                record(t - 0.5 * TAU / n as f64, &mut roots);
            }
            prev = v;
        }
        // The scan runs over [0, 2π] and sees the root at 0 twice.
        if roots.len() > 1 && circle_dist(roots[0], *roots.last().unwrap()) < 1e-3 {
            roots.pop();
        }
        let set = theta_alpha_set(p, alpha);
        assert_eq!(roots.len(), set.len());
        for (r, s) in roots.iter().zip(set.iter()) {
            assert!(circle_dist(*r, *s) < 1e-5, "root {r} vs set element {s}");
        }
    }

    #[test]
    fn lambda_examples() {
        assert_relative_eq!(lambda(1, 0.0, 0.0), 2.0);
        for alpha in [0.3, 1.7, 5.0] {
            assert!(lambda(2, alpha, alpha).abs() < 1e-15);
        }
        assert_relative_eq!(
            lambda(3, 0.4, 0.1),
            (1.2f64).cos() + (0.3f64).cos(),
            max_relative = 1e-15
        );
    }

    #[test]
    fn lambda_deriv_examples() {
        let (d1, _) = lambda_theta_derivs(2, PI / 4.0);
        assert_relative_eq!(d1, -2.0, max_relative = 1e-12);
        let (d1, d2) = lambda_theta_derivs(2, 0.0);
        assert_eq!(d1, 0.0);
        assert_relative_eq!(d2, -4.0);
    }

    #[test]
    fn lambda_derivs_match_finite_differences() {
        let p = 3u32;
        let theta = 0.7;
        let alpha = 0.3;
        let h = 1e-5;
        let fd1 = (lambda(p, theta + h, alpha) - lambda(p, theta - h, alpha)) / (2.0 * h);
        let fd2 = (lambda(p, theta + h, alpha) - 2.0 * lambda(p, theta, alpha)
            + lambda(p, theta - h, alpha))
            / (h * h);
        let (d1, d2) = lambda_theta_derivs(p, theta);
        assert_relative_eq!(d1, fd1, max_relative = 1e-8);
        assert_relative_eq!(d2, fd2, max_relative = 1e-5);
        for n in 1..=4u32 {
            let exact = lambda_theta_deriv_n(p, theta, n);
            match n {
                1 => assert_relative_eq!(exact, d1),
                2 => assert_relative_eq!(exact, d2),
                _ => {}
            }
        }
    }

    #[test]
    fn lambda_bounds_examples() {
        // On a zero of Λ both bounds vanish with |Λ| = 0.
        let set = theta_alpha_set(2, 1.0);
        let theta0 = set[0];
        let (lo, hi) = lambda_bounds(2, theta0, 1.0);
        assert!(lo.abs() < 1e-12 && hi.abs() < 1e-10);
        assert!(lambda(2, theta0, 1.0).abs() < 1e-14);

        let (lo, hi) = lambda_bounds(2, 1.01, 1.0);
        let v = lambda(2, 1.01, 1.0).abs();
        assert!(lo <= v + 1e-12 && v <= hi + 1e-12, "{lo} ≤ {v} ≤ {hi}");
    }

    proptest! {
        #[test]
        fn lambda_vanishes_on_theta_alpha(p in 1u32..=8, alpha in 0.0..TAU) {
            for theta0 in theta_alpha_set(p, alpha) {
                prop_assert!(lambda(p, theta0, alpha).abs() < 1e-12);
            }
        }

        #[test]
        fn theta_alpha_cardinality(p in 1u32..=8, alpha in 0.0..TAU) {
            let stars = theta_star_set(p);
            let in_star = stars.iter().any(|&s| circle_dist(s, alpha) <= ANGLE_EQ_TOL);
            let expected = if in_star { p as usize } else { 2 * p as usize };
            prop_assert_eq!(theta_alpha_set(p, alpha).len(), expected);
        }

        #[test]
        fn lambda_bounds_hold(p in 1u32..=8, theta in 0.0..TAU, alpha in 0.0..TAU) {
            let (lo, hi) = lambda_bounds(p, theta, alpha);
            let v = lambda(p, theta, alpha).abs();
            prop_assert!(lo <= v + 1e-12, "lower {} > |Λ| {}", lo, v);
            prop_assert!(v <= hi + 1e-12, "|Λ| {} > upper {}", v, hi);
        }

        #[test]
        fn theta_alpha_symmetric_about_nearest_star(p in 1u32..=8, alpha in 0.0..TAU) {
            // Reflecting any zero about its nearest Θ* point gives another zero.
            let zeros = theta_alpha_set(p, alpha);
            let stars = theta_star_set(p);
            for &z in &zeros {
                let (_, s) = closest_angle(z, &stars);
                let reflected = normalize_angle(2.0 * s - z);
                prop_assert!(
                    zeros.iter().any(|&w| circle_dist(w, reflected) < 1e-8),
                    "reflection of {} about {} not in Θ_α", z, s
                );
            }
        }
    }

    #[test]
    fn canonical_selection_square() {
        let square = Polygon::regular(4, 1.0).unwrap();
        let params = rational_params(&square, true).unwrap();
        let set = select_canonical_angles(&square, &params, 42).unwrap();
        assert_eq!(set.angles.len(), 8);
        assert_eq!(set.star_indices, vec![0, 1, 2, 3]);
        let stars = theta_star_set(2);
        for (i, &s) in stars.iter().enumerate() {
            assert_relative_eq!(set.angles[i], s);
        }
        for corner in 0..4 {
            let seen = set
                .angles
                .iter()
                .filter(|&&a| square.corner_visible(corner, a, VisibilityRule::AnyAdjacentSide))
                .count();
            assert!(seen >= 2, "corner {corner} seen by {seen} angles");
        }
        // Pairwise distinct with the anti-clustering margin.
        for i in 0..8 {
            for j in (i + 1)..8 {
                assert!(circle_dist(set.angles[i], set.angles[j]) >= PI / 32.0 - 1e-12);
            }
        }
    }

    #[test]
    fn canonical_selection_hexagon() {
        let hex = Polygon::regular(6, 1.0).unwrap();
        let params = rational_params(&hex, true).unwrap();
        let set = select_canonical_angles(&hex, &params, 1).unwrap();
        assert_eq!(set.angles.len(), 18);
        assert_eq!(set.star_indices.len(), 6);
        for corner in 0..6 {
            let seen = set
                .angles
                .iter()
                .filter(|&&a| hex.corner_visible(corner, a, VisibilityRule::AnyAdjacentSide))
                .count();
            assert!(seen >= 3);
        }
    }

    #[test]
    fn canonical_selection_is_deterministic() {
        let square = Polygon::regular(4, 1.0).unwrap();
        let params = rational_params(&square, true).unwrap();
        let a = select_canonical_angles(&square, &params, 7).unwrap();
        let b = select_canonical_angles(&square, &params, 7).unwrap();
        assert_eq!(a.angles, b.angles);
    }

    #[test]
    fn from_vertices_detects_fractions() {
        let square = Polygon::regular(4, 1.0).unwrap();
        let poly = Polygon::from_vertices(square.vertices().to_vec()).unwrap();
        for f in poly.external_angle_fractions() {
            assert_eq!(f.reduced(), AngleFraction { numer: 3, denom: 2 });
        }
    }

    #[test]
    fn invalid_polygons_are_rejected() {
        // Origin outside.
        let vs = vec![
            Point2::new(1.0, 1.0),
            Point2::new(2.0, 1.0),
            Point2::new(2.0, 2.0),
            Point2::new(1.0, 2.0),
        ];
        assert!(Polygon::from_vertices(vs).is_err());
        // Clockwise (non-convex in CCW sense).
        let square = Polygon::regular(4, 1.0).unwrap();
        let mut rev = square.vertices().to_vec();
        rev.reverse();
        assert!(Polygon::from_vertices(rev).is_err());
        // No side parallel to the x-axis.
        let rotated: Vec<Point2> = square
            .vertices()
            .iter()
            .map(|v| {
                let (s, c) = (0.3f64).sin_cos();
                Point2::new(c * v.x - s * v.y, s * v.x + c * v.y)
            })
            .collect();
        assert!(Polygon::from_vertices(rotated).is_err());
    }

    #[test]
    fn circle_metric_basics() {
        assert_relative_eq!(circle_dist(0.1, TAU - 0.1), 0.2, max_relative = 1e-12);
        assert_relative_eq!(signed_circle_diff(0.1, TAU - 0.1), 0.2, max_relative = 1e-12);
        assert_relative_eq!(signed_circle_diff(TAU - 0.1, 0.1), -0.2, max_relative = 1e-12);
        assert_eq!(circle_dist(1.0, 1.0), 0.0);
        let (i, v) = closest_angle(0.05, &[0.0, 1.0, 6.0]);
        assert_eq!((i, v), (0, 0.0));
    }
}
