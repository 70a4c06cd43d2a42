//! Method-of-fundamental-solutions solver for the canonical scattering
//! problems, with far-field evaluation and fast far-field derivatives.
//!
//! The scattered field is represented as `u^s(x) = Σ_j c_j (i/4)H₀⁽¹⁾(k|x−y_j|)`
//! with source points `y_j` strictly inside the polygon. The coefficients
//! minimize the boundary misfit `|u^i + u^s|` in least squares on an
//! oversampled collocation grid. The scattered field of a sound-soft polygon
//! has an `r^{π/ω}` corner singularity, so by default both collocation and
//! source nodes are exponentially clustered toward the corners, with each
//! source offset inward proportionally to the local node spacing; uniform
//! nodes on a scaled copy of the boundary are available for comparison runs
//! but stall well short of the corner-resolving accuracy.
//!
//! The far-field coefficient in the normalization
//! `u^s ≈ e^{i(kr+π/4)}/√(2πkr)·D(θ)` is `D(θ) = ½ Σ_j c_j K(θ, y_j)` with
//! `K` the far-field kernel; the constant ½ is pinned by a large-radius
//! asymptotic fit exercised in the tests.

use std::f64::consts::TAU;
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, OnceLock};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::geometry::{Point2, Polygon};
use crate::kernel::{self, FourierPoly, MAX_DERIV_ORDER};
use crate::linalg::{lstsq, CMatrix};
use crate::special::hankel1;

/// Far-field normalization constant relating the fundamental-solution sum to
/// `D(θ)`; validated against the large-radius asymptotics before freezing.
pub const NORM_CONST: Complex64 = Complex64::new(0.5, 0.0);

/// What kind of incident field a solution was computed for.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FieldDescriptor {
    PlaneWave { alpha: f64 },
    RegularWave { ell: i32 },
    Zero,
    Custom,
}

impl fmt::Display for FieldDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FieldDescriptor::PlaneWave { alpha } => write!(f, "planewave {alpha}"),
            FieldDescriptor::RegularWave { ell } => write!(f, "regularwave {ell}"),
            FieldDescriptor::Zero => write!(f, "zero"),
            FieldDescriptor::Custom => write!(f, "custom"),
        }
    }
}

enum Trace {
    PlaneWave { alpha: f64 },
    RegularWave { ell: i32 },
    Zero,
    Custom(Arc<dyn Fn(Point2) -> Complex64 + Send + Sync>),
}

/// An incident field: the trace of an entire Helmholtz solution on (at least)
/// the boundary, plus a descriptor saying where it came from.
pub struct IncidentField {
    k: f64,
    trace: Trace,
}

impl IncidentField {
    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn descriptor(&self) -> FieldDescriptor {
        match &self.trace {
            Trace::PlaneWave { alpha } => FieldDescriptor::PlaneWave { alpha: *alpha },
            Trace::RegularWave { ell } => FieldDescriptor::RegularWave { ell: *ell },
            Trace::Zero => FieldDescriptor::Zero,
            Trace::Custom(_) => FieldDescriptor::Custom,
        }
    }

    /// Value of the incident field at a point.
    pub fn eval(&self, x: Point2) -> Complex64 {
        match &self.trace {
            Trace::PlaneWave { alpha } => {
                Complex64::from_polar(1.0, -self.k * (x.x * alpha.cos() + x.y * alpha.sin()))
            }
            Trace::RegularWave { ell } => crate::herglotz::regular_wavefunction(*ell, self.k, x),
            Trace::Zero => Complex64::new(0.0, 0.0),
            Trace::Custom(f) => f(x),
        }
    }

    /// A caller-supplied trace; the caller guarantees it restricts an entire
    /// Helmholtz solution at wavenumber `k`.
    pub fn custom(k: f64, trace: Arc<dyn Fn(Point2) -> Complex64 + Send + Sync>) -> Self {
        IncidentField {
            k,
            trace: Trace::Custom(trace),
        }
    }

    pub fn zero(k: f64) -> Self {
        IncidentField {
            k,
            trace: Trace::Zero,
        }
    }
}

/// The plane wave `e^{−ik(x₁cos α + x₂sin α)}`.
pub fn plane_wave_field(alpha: f64, k: f64) -> IncidentField {
    IncidentField {
        k,
        trace: Trace::PlaneWave { alpha },
    }
}

/// The regular wavefunction `J_{|ℓ|}(k|x|)e^{iℓθ_x}`.
pub fn regular_wave_field(ell: i32, k: f64) -> IncidentField {
    IncidentField {
        k,
        trace: Trace::RegularWave { ell },
    }
}

/// How boundary and source nodes are laid out.
#[derive(Clone, Debug)]
pub enum NodeDistribution {
    /// Geometric pole ladders hugging both sides of every corner (depth
    /// proportional to the corner distance, mimicking the single-layer
    /// density of the `r^{π/ω}` corner fields), plus a smooth source ring on
    /// the boundary scaled toward the centroid for the regular part.
    CornerClusters {
        /// Ratio between successive ladder radii.
        ratio: f64,
        /// Pole depth in units of its corner distance (capped inside acute
        /// corner wedges).
        beta: f64,
        /// Ring position as a scaling of the boundary toward the centroid.
        ring_scale: f64,
    },
    /// Equispaced-by-arc-length sources on the boundary scaled toward the
    /// centroid, equispaced collocation per side avoiding corners by half a
    /// spacing. Kept for comparison runs; converges slowly on corners.
    UniformScaled { scale: f64 },
}

impl Default for NodeDistribution {
    fn default() -> Self {
        NodeDistribution::CornerClusters {
            ratio: std::f64::consts::SQRT_2,
            beta: 0.8,
            ring_scale: 0.6,
        }
    }
}

/// Solver knobs.
#[derive(Clone, Debug, Default)]
pub struct SolverConfig {
    /// Source points per polygon side.
    pub dofs_per_side: usize,
    /// Collocation points per source point (the solve grid); 0 means 2.
    pub oversampling: usize,
    pub nodes: NodeDistribution,
    /// Relative pivot threshold for rank truncation in the least squares;
    /// 0 means 1e-9.
    pub rank_rtol: f64,
    /// Incremented once per PDE solve when present.
    pub counter: Option<Arc<AtomicU64>>,
}

impl SolverConfig {
    pub fn with_dofs(dofs_per_side: usize) -> Self {
        SolverConfig {
            dofs_per_side,
            ..SolverConfig::default()
        }
    }

    fn oversampling_or_default(&self) -> usize {
        if self.oversampling == 0 {
            2
        } else {
            self.oversampling
        }
    }

    fn rank_rtol_or_default(&self) -> f64 {
        if self.rank_rtol > 0.0 {
            self.rank_rtol
        } else {
            1e-9
        }
    }
}

/// A solved canonical problem: evaluates `D(θ)` and its θ-derivatives.
#[derive(Debug)]
pub struct FarFieldSolution {
    k: f64,
    source_points: Vec<Point2>,
    coefficients: Vec<Complex64>,
    residual: f64,
    rank_deficient: bool,
    deriv_chains: OnceLock<Vec<Vec<FourierPoly>>>,
}

impl Clone for FarFieldSolution {
    fn clone(&self) -> Self {
        FarFieldSolution {
            k: self.k,
            source_points: self.source_points.clone(),
            coefficients: self.coefficients.clone(),
            residual: self.residual,
            rank_deficient: self.rank_deficient,
            deriv_chains: OnceLock::new(),
        }
    }
}

impl FarFieldSolution {
    /// Assemble from raw parts (used by the cache reader and tests).
    pub fn from_parts(
        k: f64,
        source_points: Vec<Point2>,
        coefficients: Vec<Complex64>,
        residual: f64,
    ) -> Result<Self> {
        if !(k > 0.0) {
            return Err(Error::Domain(format!("wavenumber must be positive, got {k}")));
        }
        if source_points.len() != coefficients.len() {
            return Err(Error::Domain(format!(
                "{} source points for {} coefficients",
                source_points.len(),
                coefficients.len()
            )));
        }
        Ok(FarFieldSolution {
            k,
            source_points,
            coefficients,
            residual,
            rank_deficient: false,
            deriv_chains: OnceLock::new(),
        })
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn source_points(&self) -> &[Point2] {
        &self.source_points
    }

    pub fn coefficients(&self) -> &[Complex64] {
        &self.coefficients
    }

    /// Maximum boundary misfit `|u^i + u^s|`, measured on a grid finer than
    /// the solve grid.
    pub fn residual(&self) -> f64 {
        self.residual
    }

    pub fn rank_deficient(&self) -> bool {
        self.rank_deficient
    }

    fn chains(&self) -> &Vec<Vec<FourierPoly>> {
        self.deriv_chains.get_or_init(|| {
            self.source_points
                .iter()
                .map(|&y| {
                    (1..=MAX_DERIV_ORDER)
                        .map(|n| kernel::gn_coeffs(n, self.k, y).expect("order within cap"))
                        .collect()
                })
                .collect()
        })
    }
}

/// Scattered field `u^s(x) = Σ_j c_j (i/4)H₀⁽¹⁾(k|x − y_j|)`.
pub fn scattered_field_at(sol: &FarFieldSolution, x: Point2) -> Result<Complex64> {
    let quarter_i = Complex64::new(0.0, 0.25);
    let mut acc = Complex64::new(0.0, 0.0);
    for (c, &y) in sol.coefficients.iter().zip(sol.source_points.iter()) {
        let r = (x - y).norm();
        acc += c * quarter_i * hankel1(0, sol.k * r)?;
    }
    Ok(acc)
}

/// Far-field coefficient `D(θ) = ½ Σ_j c_j e^{−ik x̂(θ)·y_j}`.
pub fn far_field(sol: &FarFieldSolution, theta: f64) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for (c, &y) in sol.coefficients.iter().zip(sol.source_points.iter()) {
        acc += c * kernel::kernel(sol.k, y, theta);
    }
    NORM_CONST * acc
}

/// `∂ⁿD/∂θⁿ` for a single order; `n = 0` is the far field itself.
pub fn far_field_deriv(sol: &FarFieldSolution, theta: f64, n: usize) -> Result<Complex64> {
    Ok(far_field_derivs_upto(sol, theta, n)?[n])
}

/// All derivatives `∂ⁿD/∂θⁿ` for `n = 0, …, n_max` in one pass; the returned
/// vector has `n_max + 1` entries starting with the value.
pub fn far_field_derivs_upto(
    sol: &FarFieldSolution,
    theta: f64,
    n_max: usize,
) -> Result<Vec<Complex64>> {
    if n_max > MAX_DERIV_ORDER {
        return Err(Error::OrderTooLarge {
            order: n_max,
            max: MAX_DERIV_ORDER,
        });
    }
    let mut out = vec![Complex64::new(0.0, 0.0); n_max + 1];
    if n_max == 0 {
        out[0] = far_field(sol, theta);
        return Ok(out);
    }
    let chains = sol.chains();
    // Shared powers e^{iℓθ}, ℓ = −n_max..n_max.
    let unit = Complex64::from_polar(1.0, theta);
    let mut powers = vec![Complex64::new(0.0, 0.0); 2 * n_max + 1];
    powers[n_max] = Complex64::new(1.0, 0.0);
    for m in 1..=n_max {
        powers[n_max + m] = powers[n_max + m - 1] * unit;
        powers[n_max - m] = powers[n_max - m + 1] * unit.conj();
    }
    for ((c, &y), chain) in sol
        .coefficients
        .iter()
        .zip(sol.source_points.iter())
        .zip(chains.iter())
    {
        let weight = c * kernel::kernel(sol.k, y, theta);
        out[0] += weight;
        for (n, g) in chain.iter().enumerate().take(n_max) {
            let deg = n + 1;
            let mut gval = Complex64::new(0.0, 0.0);
            for (i, b) in g.coeffs().iter().enumerate() {
                // index i covers frequencies −deg..deg
                gval += b * powers[n_max + i - deg];
            }
            out[deg] += weight * gval;
        }
    }
    for v in out.iter_mut() {
        *v *= NORM_CONST;
    }
    Ok(out)
}

/// A source or sampling point that may be anchored at a polygon corner.
/// Distances between two points sharing an anchor are formed from the local
/// displacements alone, so the tiny corner-cluster geometry never cancels
/// against O(1) coordinates.
#[derive(Clone, Copy, Debug)]
struct AnchoredPoint {
    /// Corner (vertex) index this point is tied to, if any.
    anchor: Option<usize>,
    /// The anchor vertex, or the origin for free points.
    base: Point2,
    /// Offset from `base`; tiny for deep cluster members.
    disp: Point2,
    /// Arc-length cell represented by this node (collocation rows only);
    /// the least squares minimizes the cell-weighted boundary misfit, an
    /// approximation of the L²(∂Ω) norm.
    cell: f64,
}

impl AnchoredPoint {
    fn free(p: Point2) -> Self {
        AnchoredPoint {
            anchor: None,
            base: Point2::new(0.0, 0.0),
            disp: p,
            cell: 0.0,
        }
    }

    fn at_corner(anchor: usize, base: Point2, disp: Point2) -> Self {
        AnchoredPoint {
            anchor: Some(anchor),
            base,
            disp,
            cell: 0.0,
        }
    }

    fn with_cell(mut self, cell: f64) -> Self {
        self.cell = cell;
        self
    }

    fn point(&self) -> Point2 {
        self.base + self.disp
    }

    fn dist(&self, other: &AnchoredPoint) -> f64 {
        match (self.anchor, other.anchor) {
            (Some(a), Some(b)) if a == b => (self.disp - other.disp).norm(),
            _ => (self.point() - other.point()).norm(),
        }
    }
}

/// Per-corner geometry used by the cluster layout.
struct CornerFrame {
    corner: usize,
    vertex: Point2,
    /// Ladder directions, one per adjacent side: away-tangent tilted into the
    /// interior so a pole at radius `d` sits at depth `β_eff·d` off its side.
    ladder_dirs: [Point2; 2],
    /// Unit tangents of the two adjacent sides, pointing away from the corner.
    away_prev: Point2,
    away_next: Point2,
    /// Cluster radius: the pole ladder spans (0, radius].
    radius: f64,
}

fn corner_frames(polygon: &Polygon, radius_factor: f64, beta: f64) -> Vec<CornerFrame> {
    let n = polygon.num_sides();
    (0..n)
        .map(|j| {
            let prev = (j + n - 1) % n;
            let v = polygon.vertices()[j];
            let to_prev = polygon.vertices()[prev] - v;
            let to_next = polygon.vertices()[(j + 1) % n] - v;
            let away_prev = to_prev * (1.0 / to_prev.norm());
            let away_next = to_next * (1.0 / to_next.norm());
            let interior = TAU - polygon.external_angle_fractions()[j].angle();
            // Keep the ladders inside the corner wedge when it is acute.
            let beta_eff = if interior < 0.5 * std::f64::consts::PI {
                beta.min(0.7 * interior.tan())
            } else {
                beta
            };
            let inward_prev = Point2::new(away_prev.y, -away_prev.x);
            let inward_next = Point2::new(-away_next.y, away_next.x);
            let ladder_dirs = [
                away_next + inward_next * beta_eff,
                away_prev + inward_prev * beta_eff,
            ];
            let radius =
                radius_factor * polygon.side_lengths()[prev].min(polygon.side_lengths()[j]);
            CornerFrame {
                corner: j,
                vertex: v,
                ladder_dirs,
                away_prev,
                away_next,
                radius,
            }
        })
        .collect()
}

/// Geometric pole ladder radii, deepest last: `r_i = R·ρ^{−(i−½)}`.
fn pole_radii(radius: f64, m: usize, ratio: f64) -> Vec<f64> {
    (1..=m)
        .map(|i| radius * ratio.powf(-(i as f64 - 0.5)))
        .collect()
}

/// Sources for the cluster layout: a pole ladder on each corner bisector
/// resolving the `r^{π/ω}` corner layers, plus a smooth ring (the boundary
/// scaled toward the centroid) carrying the regular part of the field.
fn cluster_sources(
    polygon: &Polygon,
    frames: &[CornerFrame],
    config: &SolverConfig,
    ratio: f64,
    ring_scale: f64,
) -> Vec<AnchoredPoint> {
    let m_pole = (config.dofs_per_side / 4).max(2);
    let ring_per_side = config.dofs_per_side.saturating_sub(2 * m_pole).max(2);
    let mut sources = Vec::new();
    for frame in frames {
        for r in pole_radii(frame.radius, m_pole, ratio) {
            for dir in frame.ladder_dirs {
                sources.push(AnchoredPoint::at_corner(frame.corner, frame.vertex, dir * r));
            }
        }
    }
    let ring_cfg = SolverConfig {
        dofs_per_side: ring_per_side,
        ..config.clone()
    };
    for p in uniform_scaled_sources(polygon, &ring_cfg, ring_scale) {
        sources.push(AnchoredPoint::free(p));
    }
    sources
}

/// Boundary sampling for the cluster layout: per pole, points on both
/// adjacent sides at fixed multiples of the pole radius (each pole footprint
/// is bracketed at its own scale), plus uniform per-side coverage for the
/// smooth part. `deep_probe` adds two sub-ladder points per corner, used by
/// the residual grid.
fn cluster_collocation(
    polygon: &Polygon,
    frames: &[CornerFrame],
    config: &SolverConfig,
    ratio: f64,
    radial_factors: &[f64],
    uniform_per_side: usize,
    deep_probe: bool,
) -> Vec<AnchoredPoint> {
    let m_pole = (config.dofs_per_side / 4).max(2);
    let mut nodes = Vec::new();
    for frame in frames {
        let radii = pole_radii(frame.radius, m_pole, ratio);
        // Log-uniform cell for a factor sample at distance f·r.
        let cell_factor = (radial_factors.last().unwrap() / radial_factors[0])
            .powf(1.0 / radial_factors.len() as f64)
            - 1.0;
        for &r in &radii {
            for &f in radial_factors {
                let d = f * r;
                let cell = cell_factor * d;
                nodes.push(
                    AnchoredPoint::at_corner(frame.corner, frame.vertex, frame.away_prev * d)
                        .with_cell(cell),
                );
                nodes.push(
                    AnchoredPoint::at_corner(frame.corner, frame.vertex, frame.away_next * d)
                        .with_cell(cell),
                );
            }
        }
        if deep_probe {
            for &f in &[0.25, 0.05] {
                let d = f * radii[m_pole - 1];
                let cell = d;
                nodes.push(
                    AnchoredPoint::at_corner(frame.corner, frame.vertex, frame.away_prev * d)
                        .with_cell(cell),
                );
                nodes.push(
                    AnchoredPoint::at_corner(frame.corner, frame.vertex, frame.away_next * d)
                        .with_cell(cell),
                );
            }
        }
    }
    for side in 0..polygon.num_sides() {
        let (a, b) = polygon.side(side);
        let len = polygon.side_lengths()[side];
        let tangent = (b - a) * (1.0 / len);
        let h = len / uniform_per_side as f64;
        for i in 0..uniform_per_side {
            let s = (i as f64 + 0.5) * h;
            nodes.push(AnchoredPoint::free(a + tangent * s).with_cell(h));
        }
    }
    nodes
}

/// Sources for the uniform layout: the boundary scaled toward the centroid,
/// walked at equal arc-length steps.
fn uniform_scaled_sources(polygon: &Polygon, config: &SolverConfig, scale: f64) -> Vec<Point2> {
    let centroid = polygon.centroid();
    let n_total = polygon.num_sides() * config.dofs_per_side;
    let perimeter: f64 = polygon.perimeter() * scale;
    let step = perimeter / n_total as f64;
    let mut sources = Vec::with_capacity(n_total);
    let mut side = 0usize;
    let mut offset = 0.5 * step;
    let mut consumed = 0.0;
    for _ in 0..n_total {
        loop {
            let side_len = polygon.side_lengths()[side] * scale;
            if offset - consumed <= side_len {
                let (a, b) = polygon.side(side);
                let sa = centroid + (a - centroid) * scale;
                let sb = centroid + (b - centroid) * scale;
                let t = (offset - consumed) / side_len;
                sources.push(sa + (sb - sa) * t);
                break;
            }
            consumed += side_len;
            side += 1;
        }
        offset += step;
    }
    sources
}

fn uniform_boundary_points(polygon: &Polygon, per_side: usize) -> Vec<AnchoredPoint> {
    let mut nodes = Vec::new();
    for side in 0..polygon.num_sides() {
        let (a, b) = polygon.side(side);
        let len = polygon.side_lengths()[side];
        let tangent = (b - a) * (1.0 / len);
        let h = len / per_side as f64;
        for i in 0..per_side {
            nodes.push(AnchoredPoint::free(a + tangent * ((i as f64 + 0.5) * h)).with_cell(h));
        }
    }
    nodes
}

/// Fully laid-out discretization: sources, solve grid and residual grid.
struct NodeSet {
    sources: Vec<AnchoredPoint>,
    colloc: Vec<AnchoredPoint>,
    fine: Vec<AnchoredPoint>,
}

impl NodeSet {
    fn build(polygon: &Polygon, config: &SolverConfig) -> Self {
        let over = config.oversampling_or_default();
        match &config.nodes {
            NodeDistribution::CornerClusters {
                ratio,
                beta,
                ring_scale,
            } => {
                let frames = corner_frames(polygon, 0.3, *beta);
                let sources = cluster_sources(polygon, &frames, config, *ratio, *ring_scale);
                let colloc = cluster_collocation(
                    polygon,
                    &frames,
                    config,
                    *ratio,
                    &[0.55, 0.78, 1.1],
                    over * config.dofs_per_side,
                    true,
                );
                let fine = cluster_collocation(
                    polygon,
                    &frames,
                    config,
                    *ratio,
                    &[0.46, 0.65, 0.92, 1.3],
                    2 * over * config.dofs_per_side,
                    true,
                );
                NodeSet {
                    sources,
                    colloc,
                    fine,
                }
            }
            NodeDistribution::UniformScaled { scale } => {
                let sources = uniform_scaled_sources(polygon, config, *scale)
                    .into_iter()
                    .map(AnchoredPoint::free)
                    .collect();
                let colloc = uniform_boundary_points(polygon, over * config.dofs_per_side);
                let fine = uniform_boundary_points(polygon, 2 * over * config.dofs_per_side);
                NodeSet {
                    sources,
                    colloc,
                    fine,
                }
            }
        }
    }
}

/// Solve the sound-soft scattering problem for one incident field.
///
/// The coefficients minimize `|u^i + u^s|` on the collocation grid in least
/// squares; the reported residual comes from a finer grid reaching further
/// into the corners. Severe rank truncation is reported through
/// [`FarFieldSolution::rank_deficient`] and a log warning, not an error.
pub fn solve(
    polygon: &Polygon,
    incident: &IncidentField,
    config: &SolverConfig,
) -> Result<FarFieldSolution> {
    let k = incident.k();
    if !(k > 0.0) {
        return Err(Error::Domain(format!("wavenumber must be positive, got {k}")));
    }
    if config.dofs_per_side < 4 {
        return Err(Error::Domain(format!(
            "dofs_per_side must be at least 4, got {}",
            config.dofs_per_side
        )));
    }
    if let Some(counter) = &config.counter {
        counter.fetch_add(1, Ordering::Relaxed);
    }

    let nodes = NodeSet::build(polygon, config);
    let n_src = nodes.sources.len();

    let quarter_i = Complex64::new(0.0, 0.25);
    let mut a = CMatrix::zeros(nodes.colloc.len(), n_src);
    let weights: Vec<f64> = nodes.colloc.iter().map(|c| c.cell.max(1e-300).sqrt()).collect();
    for (i, node) in nodes.colloc.iter().enumerate() {
        for (j, src) in nodes.sources.iter().enumerate() {
            a.set(i, j, weights[i] * quarter_i * hankel1(0, k * node.dist(src))?);
        }
    }
    let b: Vec<Complex64> = nodes
        .colloc
        .iter()
        .zip(weights.iter())
        .map(|(c, w)| -incident.eval(c.point()) * *w)
        .collect();

    let fit = lstsq(&a, &b, config.rank_rtol_or_default())?;
    if fit.rank_deficient {
        log::warn!(
            "mfs collocation matrix truncated to rank {} of {} columns",
            fit.rank,
            n_src
        );
    }

    // Residual on the finer grid, through the same anchored distances.
    let mut worst = 0.0f64;
    for node in &nodes.fine {
        let mut total = incident.eval(node.point());
        for (c, src) in fit.solution.iter().zip(nodes.sources.iter()) {
            total += c * quarter_i * hankel1(0, k * node.dist(src))?;
        }
        worst = worst.max(total.norm());
    }

    Ok(FarFieldSolution {
        k,
        source_points: nodes.sources.iter().map(|s| s.point()).collect(),
        coefficients: fit.solution,
        residual: worst,
        rank_deficient: fit.rank_deficient,
        deriv_chains: OnceLock::new(),
    })
}

/// Write a set of solutions to the versioned `MFS1` cache format.
pub fn write_cache(
    path: &Path,
    k: f64,
    entries: &[(FieldDescriptor, &FarFieldSolution)],
) -> Result<()> {
    let mut out = String::new();
    out.push_str("MFS1\n");
    out.push_str(&format!("k {k}\n"));
    out.push_str(&format!("count {}\n", entries.len()));
    for (desc, sol) in entries {
        out.push_str(&format!("begin {desc}\n"));
        out.push_str(&format!("residual {}\n", sol.residual));
        out.push_str(&format!("sources {}\n", sol.source_points.len()));
        for (y, c) in sol.source_points.iter().zip(sol.coefficients.iter()) {
            out.push_str(&format!("{} {} {} {}\n", y.x, y.y, c.re, c.im));
        }
        out.push_str("end\n");
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(out.as_bytes())?;
    Ok(())
}

/// Read an `MFS1` cache file back.
pub fn read_cache(path: &Path) -> Result<(f64, Vec<(FieldDescriptor, FarFieldSolution)>)> {
    let file = std::fs::File::open(path)?;
    let mut lines = BufReader::new(file).lines();
    let mut next = |what: &str| -> Result<String> {
        lines
            .next()
            .transpose()?
            .ok_or_else(|| Error::FileFormat(format!("unexpected end of cache file, wanted {what}")))
    };

    if next("magic header")? != "MFS1" {
        return Err(Error::FileFormat("missing MFS1 magic header".into()));
    }
    let parse_kv = |line: &str, key: &str| -> Result<String> {
        line.strip_prefix(key)
            .and_then(|r| r.strip_prefix(' '))
            .map(str::to_owned)
            .ok_or_else(|| Error::FileFormat(format!("expected `{key} ...`, got `{line}`")))
    };
    let k: f64 = parse_kv(&next("k")?, "k")?
        .parse()
        .map_err(|e| Error::FileFormat(format!("bad wavenumber: {e}")))?;
    let count: usize = parse_kv(&next("count")?, "count")?
        .parse()
        .map_err(|e| Error::FileFormat(format!("bad count: {e}")))?;

    let mut entries = Vec::with_capacity(count);
    for _ in 0..count {
        let header = next("begin")?;
        let desc_str = parse_kv(&header, "begin")?;
        let desc = parse_descriptor(&desc_str)?;
        let residual: f64 = parse_kv(&next("residual")?, "residual")?
            .parse()
            .map_err(|e| Error::FileFormat(format!("bad residual: {e}")))?;
        let n: usize = parse_kv(&next("sources")?, "sources")?
            .parse()
            .map_err(|e| Error::FileFormat(format!("bad source count: {e}")))?;
        let mut points = Vec::with_capacity(n);
        let mut coeffs = Vec::with_capacity(n);
        for _ in 0..n {
            let line = next("source line")?;
            let mut it = line.split_whitespace();
            let mut num = || -> Result<f64> {
                it.next()
                    .ok_or_else(|| Error::FileFormat("short source line".into()))?
                    .parse()
                    .map_err(|e| Error::FileFormat(format!("bad number: {e}")))
            };
            let (x, y) = (num()?, num()?);
            points.push(Point2::new(x, y));
            let (re, im) = (num()?, num()?);
            coeffs.push(Complex64::new(re, im));
        }
        if next("end")? != "end" {
            return Err(Error::FileFormat("missing `end` after solution".into()));
        }
        let sol = FarFieldSolution::from_parts(k, points, coeffs, residual)?;
        entries.push((desc, sol));
    }
    Ok((k, entries))
}

fn parse_descriptor(s: &str) -> Result<FieldDescriptor> {
    let mut it = s.split_whitespace();
    match it.next() {
        Some("planewave") => {
            let alpha: f64 = it
                .next()
                .ok_or_else(|| Error::FileFormat("planewave without angle".into()))?
                .parse()
                .map_err(|e| Error::FileFormat(format!("bad angle: {e}")))?;
            Ok(FieldDescriptor::PlaneWave { alpha })
        }
        Some("regularwave") => {
            let ell: i32 = it
                .next()
                .ok_or_else(|| Error::FileFormat("regularwave without order".into()))?
                .parse()
                .map_err(|e| Error::FileFormat(format!("bad order: {e}")))?;
            Ok(FieldDescriptor::RegularWave { ell })
        }
        Some("zero") => Ok(FieldDescriptor::Zero),
        Some("custom") => Ok(FieldDescriptor::Custom),
        other => Err(Error::FileFormat(format!("unknown descriptor {other:?}"))),
    }
}

/// Fresh counter handle for instrumenting solve counts.
pub fn new_counter() -> Arc<AtomicU64> {
    Arc::new(AtomicU64::new(0))
}
