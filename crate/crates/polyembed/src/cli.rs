//! Command front end: reproduces the far-field experiments as CSV/plot-data
//! artifacts and exposes the library end to end.
//!
//! Every command writes its tables as CSV plus a gnuplot-friendly `.dat`
//! mirror, and a `manifest.txt` of `key = value` pairs recording the
//! configuration and the PDE-solve counter. Outputs are deterministic for a
//! fixed configuration and seed.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::Ordering;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::embedding::{build_context, build_context_from_solutions, EmbeddingConfig, EmbeddingContext};
use crate::error::{Error, Result};
use crate::geometry::{
    rational_params, select_canonical_angles, AngleFraction, Point2, Polygon,
    RationalAngleData,
};
use crate::herglotz::build_quadrature;
use crate::solver::{
    self, far_field, plane_wave_field, regular_wave_field, solve, FarFieldSolution,
    FieldDescriptor, SolverConfig,
};
use crate::tmatrix::{assemble_t_matrix, truncation_order, TMatrixConfig};

/// Built-in regular shapes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BuiltinShape {
    Triangle,
    Square,
    Pentagon,
    Hexagon,
}

impl BuiltinShape {
    pub fn sides(self) -> usize {
        match self {
            BuiltinShape::Triangle => 3,
            BuiltinShape::Square => 4,
            BuiltinShape::Pentagon => 5,
            BuiltinShape::Hexagon => 6,
        }
    }
}

impl FromStr for BuiltinShape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "triangle" => Ok(BuiltinShape::Triangle),
            "square" => Ok(BuiltinShape::Square),
            "pentagon" => Ok(BuiltinShape::Pentagon),
            "hexagon" => Ok(BuiltinShape::Hexagon),
            other => Err(Error::Config(format!(
                "unknown shape `{other}` (expected triangle|square|pentagon|hexagon)"
            ))),
        }
    }
}

/// Geometry source: a built-in regular polygon or a polygon file.
#[derive(Clone, Debug)]
pub enum ShapeSpec {
    Builtin { shape: BuiltinShape, side: f64 },
    File(PathBuf),
}

/// Evaluation mode for the error-grid command.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EvalMode {
    Naive,
    Taylor,
    Combined,
}

impl FromStr for EvalMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "naive" => Ok(EvalMode::Naive),
            "taylor" => Ok(EvalMode::Taylor),
            "combined" => Ok(EvalMode::Combined),
            other => Err(Error::Config(format!(
                "unknown mode `{other}` (expected naive|taylor|combined)"
            ))),
        }
    }
}

impl EvalMode {
    pub fn as_str(self) -> &'static str {
        match self {
            EvalMode::Naive => "naive",
            EvalMode::Taylor => "taylor",
            EvalMode::Combined => "combined",
        }
    }
}

/// Full run configuration; command-line flags override config-file entries.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub shape: ShapeSpec,
    pub k: f64,
    pub dofs_per_side: usize,
    pub tol1: f64,
    pub tol2: f64,
    pub taylor_order: usize,
    pub seed: u64,
    pub theta_grid: usize,
    pub out_dir: PathBuf,
    pub strict: bool,
    pub use_cache: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            shape: ShapeSpec::Builtin {
                shape: BuiltinShape::Square,
                side: 1.0,
            },
            k: 1.0,
            dofs_per_side: 48,
            tol1: 0.25,
            tol2: 0.05,
            taylor_order: 10,
            seed: 7,
            theta_grid: 1000,
            out_dir: PathBuf::from("out"),
            strict: false,
            use_cache: false,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.k > 0.0) {
            return Err(Error::Config(format!("k must be positive, got {}", self.k)));
        }
        if self.dofs_per_side < 4 {
            return Err(Error::Config(format!(
                "dofs must be at least 4, got {}",
                self.dofs_per_side
            )));
        }
        if !(self.tol1 > 0.0 && self.tol1 < 1.0) || !(self.tol2 > 0.0 && self.tol2 < 1.0) {
            return Err(Error::Config(format!(
                "tolerances must lie in (0, 1): tol1 = {}, tol2 = {}",
                self.tol1, self.tol2
            )));
        }
        if self.taylor_order < 1 {
            return Err(Error::Config("taylor-order must be at least 1".into()));
        }
        if self.theta_grid < 2 {
            return Err(Error::Config("grid must be at least 2".into()));
        }
        if let ShapeSpec::Builtin { side, .. } = self.shape {
            if !(side > 0.0) {
                return Err(Error::Config(format!("side must be positive, got {side}")));
            }
        }
        Ok(())
    }

    pub fn polygon(&self) -> Result<Polygon> {
        match &self.shape {
            ShapeSpec::Builtin { shape, side } => Polygon::regular(shape.sides(), *side),
            ShapeSpec::File(path) => read_polygon_file(path),
        }
    }

    fn solver_config(&self, counter: Arc<std::sync::atomic::AtomicU64>) -> SolverConfig {
        SolverConfig {
            counter: Some(counter),
            ..SolverConfig::with_dofs(self.dofs_per_side)
        }
    }

    fn embedding_config(&self) -> EmbeddingConfig {
        EmbeddingConfig {
            tol1: self.tol1,
            tol2: self.tol2,
            taylor_order: self.taylor_order,
            ..EmbeddingConfig::default()
        }
    }

    /// Build from `key = value` pairs (config file entries already merged
    /// with command-line overrides).
    pub fn from_kv(kv: &BTreeMap<String, String>) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        let parse_f64 = |key: &str, v: &str| -> Result<f64> {
            v.parse()
                .map_err(|e| Error::Config(format!("bad value for {key}: {e}")))
        };
        let parse_usize = |key: &str, v: &str| -> Result<usize> {
            v.parse()
                .map_err(|e| Error::Config(format!("bad value for {key}: {e}")))
        };
        let mut side: Option<f64> = None;
        let mut shape: Option<BuiltinShape> = None;
        let mut file: Option<PathBuf> = None;
        for (key, value) in kv {
            match key.as_str() {
                "shape" => shape = Some(value.parse()?),
                "side" => side = Some(parse_f64("side", value)?),
                "polygon-file" => file = Some(PathBuf::from(value)),
                "k" => cfg.k = parse_f64("k", value)?,
                "dofs" => cfg.dofs_per_side = parse_usize("dofs", value)?,
                "tol1" => cfg.tol1 = parse_f64("tol1", value)?,
                "tol2" => cfg.tol2 = parse_f64("tol2", value)?,
                "taylor-order" => cfg.taylor_order = parse_usize("taylor-order", value)?,
                "grid" => cfg.theta_grid = parse_usize("grid", value)?,
                "seed" => {
                    cfg.seed = value
                        .parse()
                        .map_err(|e| Error::Config(format!("bad value for seed: {e}")))?
                }
                "out" => cfg.out_dir = PathBuf::from(value),
                "strict" => cfg.strict = value == "true" || value == "1",
                "cache" => cfg.use_cache = value == "true" || value == "1",
                other => {
                    return Err(Error::Config(format!("unknown config key `{other}`")));
                }
            }
        }
        cfg.shape = match (file, shape) {
            (Some(path), None) => ShapeSpec::File(path),
            (Some(_), Some(_)) => {
                return Err(Error::Config(
                    "both shape and polygon-file given; pick one".into(),
                ))
            }
            (None, s) => ShapeSpec::Builtin {
                shape: s.unwrap_or(BuiltinShape::Square),
                side: side.unwrap_or(1.0),
            },
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Parse a plain `key = value` config file ('#' starts a comment).
pub fn parse_config_file(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path)?;
    let mut kv = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::Config(format!("line {} is not `key = value`: `{raw}`", idx + 1))
        })?;
        kv.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(kv)
}

/// Read the polygon text format: a header line `N p`, then `N` lines
/// `x y q_j` giving the vertex and the external-angle numerator (ω_j = πq_j/p).
pub fn read_polygon_file(path: &Path) -> Result<Polygon> {
    let file = std::fs::File::open(path)?;
    let mut lines = BufReader::new(file).lines();
    let mut next = || -> Result<String> {
        loop {
            match lines.next().transpose()? {
                Some(line) => {
                    let content = line.split('#').next().unwrap_or("").trim().to_string();
                    if !content.is_empty() {
                        return Ok(content);
                    }
                }
                None => return Err(Error::FileFormat("polygon file truncated".into())),
            }
        }
    };
    let header = next()?;
    let mut it = header.split_whitespace();
    let n: usize = it
        .next()
        .ok_or_else(|| Error::FileFormat("missing vertex count".into()))?
        .parse()
        .map_err(|e| Error::FileFormat(format!("bad vertex count: {e}")))?;
    let p: u32 = it
        .next()
        .ok_or_else(|| Error::FileFormat("missing angle denominator".into()))?
        .parse()
        .map_err(|e| Error::FileFormat(format!("bad angle denominator: {e}")))?;
    let mut vertices = Vec::with_capacity(n);
    let mut fractions = Vec::with_capacity(n);
    for _ in 0..n {
        let line = next()?;
        let mut parts = line.split_whitespace();
        let mut field = |what: &str| -> Result<String> {
            parts
                .next()
                .map(str::to_string)
                .ok_or_else(|| Error::FileFormat(format!("vertex line missing {what}")))
        };
        let x: f64 = field("x")?
            .parse()
            .map_err(|e| Error::FileFormat(format!("bad x: {e}")))?;
        let y: f64 = field("y")?
            .parse()
            .map_err(|e| Error::FileFormat(format!("bad y: {e}")))?;
        let q: u32 = field("q")?
            .parse()
            .map_err(|e| Error::FileFormat(format!("bad q: {e}")))?;
        vertices.push(Point2::new(x, y));
        fractions.push(AngleFraction::new(q, p)?);
    }
    Polygon::new(vertices, fractions)
}

/// Write the polygon text format.
pub fn write_polygon_file(path: &Path, polygon: &Polygon) -> Result<()> {
    let fractions = polygon.external_angle_fractions();
    let p = fractions.iter().fold(1u32, |acc, f| {
        let g = {
            let (mut a, mut b) = (acc, f.denom);
            while b != 0 {
                let t = a % b;
                a = b;
                b = t;
            }
            a.max(1)
        };
        acc / g * f.denom
    });
    let mut out = String::new();
    let _ = writeln!(out, "{} {}", polygon.num_sides(), p);
    for (v, f) in polygon.vertices().iter().zip(fractions.iter()) {
        let q = f.numer * (p / f.denom);
        let _ = writeln!(out, "{} {} {}", v.x, v.y, q);
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// What a command produced, for the binary to report.
#[derive(Debug, Default)]
pub struct RunSummary {
    pub files: Vec<PathBuf>,
    pub warnings: Vec<String>,
    pub solve_count: u64,
}

fn write_csv_with_mirror(
    out_dir: &Path,
    stem: &str,
    header: &str,
    rows: &[String],
    summary: &mut RunSummary,
) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    let csv_path = out_dir.join(format!("{stem}.csv"));
    let mut csv = String::with_capacity(rows.len() * 32);
    csv.push_str(header);
    csv.push('\n');
    for row in rows {
        csv.push_str(row);
        csv.push('\n');
    }
    std::fs::write(&csv_path, &csv)?;
    summary.files.push(csv_path);

    let dat_path = out_dir.join(format!("{stem}.dat"));
    let mut dat = String::with_capacity(rows.len() * 32);
    let _ = writeln!(dat, "# {}", header.replace(',', " "));
    for row in rows {
        dat.push_str(&row.replace(',', " "));
        dat.push('\n');
    }
    std::fs::write(&dat_path, &dat)?;
    summary.files.push(dat_path);
    Ok(())
}

fn write_manifest(
    out_dir: &Path,
    entries: &[(&str, String)],
    summary: &mut RunSummary,
) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    let mut out = String::new();
    for (key, value) in entries {
        let _ = writeln!(out, "{key} = {value}");
    }
    let path = out_dir.join("manifest.txt");
    std::fs::write(&path, out)?;
    summary.files.push(path);
    Ok(())
}

fn manifest_common(config: &RunConfig, command: &str) -> Vec<(&'static str, String)> {
    let shape = match &config.shape {
        ShapeSpec::Builtin { shape, side } => format!("{shape:?} side {side}"),
        ShapeSpec::File(path) => format!("file {}", path.display()),
    };
    vec![
        ("command", command.to_string()),
        ("shape", shape),
        ("k", config.k.to_string()),
        ("dofs", config.dofs_per_side.to_string()),
        ("tol1", config.tol1.to_string()),
        ("tol2", config.tol2.to_string()),
        ("taylor_order", config.taylor_order.to_string()),
        ("seed", config.seed.to_string()),
        ("grid", config.theta_grid.to_string()),
    ]
}

/// Canonical-context assembly shared by the embedding-based commands, with an
/// optional solution cache (`canonical_cache.mfs`) so reruns consume no PDE
/// solves.
pub struct PreparedContext {
    pub polygon: Polygon,
    pub params: RationalAngleData,
    pub ctx: EmbeddingContext,
    pub counter: Arc<std::sync::atomic::AtomicU64>,
    pub cache_hit: bool,
}

pub fn prepare_context(config: &RunConfig) -> Result<PreparedContext> {
    config.validate()?;
    let polygon = config.polygon()?;
    let params = rational_params(&polygon, true)?;
    let canonical = select_canonical_angles(&polygon, &params, config.seed)?;
    let counter = solver::new_counter();
    let cache_path = config.out_dir.join("canonical_cache.mfs");

    let mut cached: Option<Vec<FarFieldSolution>> = None;
    if config.use_cache && cache_path.exists() {
        if let Ok((k, entries)) = solver::read_cache(&cache_path) {
            if (k - config.k).abs() <= 1e-12 * config.k && entries.len() == canonical.angles.len()
            {
                let matches = entries.iter().zip(canonical.angles.iter()).all(
                    |((desc, _), &alpha)| match desc {
                        FieldDescriptor::PlaneWave { alpha: a } => (a - alpha).abs() < 1e-12,
                        _ => false,
                    },
                );
                if matches {
                    cached = Some(entries.into_iter().map(|(_, sol)| sol).collect());
                }
            }
        }
    }
    let cache_hit = cached.is_some();

    let ctx = match cached {
        Some(solutions) => build_context_from_solutions(
            &polygon,
            config.k,
            &params,
            canonical,
            solutions,
            config.embedding_config(),
        )?,
        None => {
            let ctx = build_context(
                &polygon,
                config.k,
                &params,
                canonical,
                &config.solver_config(counter.clone()),
                config.embedding_config(),
            )?;
            if config.use_cache {
                std::fs::create_dir_all(&config.out_dir)?;
                let entries: Vec<(FieldDescriptor, &FarFieldSolution)> = ctx
                    .canonical()
                    .angles
                    .iter()
                    .zip(ctx.solutions().iter())
                    .map(|(&alpha, sol)| (FieldDescriptor::PlaneWave { alpha }, sol))
                    .collect();
                solver::write_cache(&cache_path, config.k, &entries)?;
            }
            ctx
        }
    };
    Ok(PreparedContext {
        polygon,
        params,
        ctx,
        counter,
        cache_hit,
    })
}

/// Solve one plane-wave problem and dump `D(θ)` over a θ grid, with a reusable
/// solution cache.
pub fn cmd_solve(config: &RunConfig, alpha: f64) -> Result<RunSummary> {
    config.validate()?;
    let mut summary = RunSummary::default();
    let polygon = config.polygon()?;
    let counter = solver::new_counter();
    let cache_path = config.out_dir.join("solution_cache.mfs");

    let mut solution: Option<FarFieldSolution> = None;
    if config.use_cache && cache_path.exists() {
        if let Ok((k, entries)) = solver::read_cache(&cache_path) {
            if (k - config.k).abs() <= 1e-12 * config.k {
                for (desc, sol) in entries {
                    if let FieldDescriptor::PlaneWave { alpha: a } = desc {
                        if (a - alpha).abs() < 1e-12 {
                            solution = Some(sol);
                            break;
                        }
                    }
                }
            }
        }
    }
    let cache_hit = solution.is_some();
    let sol = match solution {
        Some(sol) => sol,
        None => {
            let sol = solve(
                &polygon,
                &plane_wave_field(alpha, config.k),
                &config.solver_config(counter.clone()),
            )?;
            std::fs::create_dir_all(&config.out_dir)?;
            solver::write_cache(
                &cache_path,
                config.k,
                &[(FieldDescriptor::PlaneWave { alpha }, &sol)],
            )?;
            summary.files.push(cache_path.clone());
            sol
        }
    };

    let rows: Vec<String> = (0..config.theta_grid)
        .map(|i| {
            let theta = std::f64::consts::TAU * i as f64 / config.theta_grid as f64;
            let d = far_field(&sol, theta);
            format!("{theta},{},{}", d.re, d.im)
        })
        .collect();
    write_csv_with_mirror(&config.out_dir, "far_field", "theta,re,im", &rows, &mut summary)?;

    summary.solve_count = counter.load(Ordering::Relaxed);
    if sol.rank_deficient() {
        summary
            .warnings
            .push("least-squares system was rank truncated".into());
    }
    let mut manifest = manifest_common(config, "solve");
    manifest.push(("alpha", alpha.to_string()));
    manifest.push(("solve_count", summary.solve_count.to_string()));
    manifest.push(("cache_hit", cache_hit.to_string()));
    manifest.push(("residual", sol.residual().to_string()));
    write_manifest(&config.out_dir, &manifest, &mut summary)?;
    Ok(summary)
}

/// Relative-error grid of one evaluation mode against direct double-budget
/// solves, written as `theta,alpha,branch,re,im,relerr`.
pub fn cmd_error_grid(config: &RunConfig, mode: EvalMode, grid_n: usize) -> Result<RunSummary> {
    if grid_n < 2 {
        return Err(Error::Config(format!("grid must be at least 2, got {grid_n}")));
    }
    let mut summary = RunSummary::default();
    let prepared = prepare_context(config)?;
    let ctx = &prepared.ctx;

    let angles: Vec<f64> = (0..grid_n)
        .map(|i| std::f64::consts::TAU * i as f64 / grid_n as f64)
        .collect();

    // Reference: direct solves at double budget, one per incidence row.
    let ref_cfg = SolverConfig {
        counter: Some(prepared.counter.clone()),
        ..SolverConfig::with_dofs(2 * config.dofs_per_side)
    };
    let references: Vec<FarFieldSolution> = angles
        .par_iter()
        .map(|&alpha| solve(&prepared.polygon, &plane_wave_field(alpha, config.k), &ref_cfg))
        .collect::<Result<_>>()?;

    let rows: Vec<String> = angles
        .par_iter()
        .zip(references.par_iter())
        .flat_map(|(&alpha, reference)| {
            let scale = angles
                .iter()
                .map(|&theta| far_field(reference, theta).norm())
                .fold(f64::MIN_POSITIVE, f64::max);
            angles
                .iter()
                .map(|&theta| {
                    let (value, branch) = match mode {
                        EvalMode::Combined => {
                            let (v, b) = ctx.combined_tagged(theta, alpha);
                            (v, b.as_str())
                        }
                        EvalMode::Taylor => (ctx.taylor_only(theta, alpha), "taylor"),
                        EvalMode::Naive => (
                            ctx.naive(theta, alpha).unwrap_or(Complex64::new(
                                f64::INFINITY,
                                f64::INFINITY,
                            )),
                            "naive",
                        ),
                    };
                    let relerr = (value - far_field(reference, theta)).norm() / scale;
                    format!("{theta},{alpha},{branch},{},{},{relerr}", value.re, value.im)
                })
                .collect::<Vec<_>>()
        })
        .collect();

    let stem = format!("error_grid_{}", mode.as_str());
    write_csv_with_mirror(
        &config.out_dir,
        &stem,
        "theta,alpha,branch,re,im,relerr",
        &rows,
        &mut summary,
    )?;

    summary.solve_count = prepared.counter.load(Ordering::Relaxed);
    let mut manifest = manifest_common(config, "error-grid");
    manifest.push(("mode", mode.as_str().to_string()));
    manifest.push(("grid_n", grid_n.to_string()));
    manifest.push(("solve_count", summary.solve_count.to_string()));
    manifest.push(("cache_hit", prepared.cache_hit.to_string()));
    manifest.push(("condition_estimate", ctx.condition_estimate().to_string()));
    manifest.push((
        "max_canonical_residual",
        ctx.max_canonical_residual().to_string(),
    ));
    write_manifest(&config.out_dir, &manifest, &mut summary)?;
    if ctx.condition_estimate() > ctx.config().condition_warn {
        summary.warnings.push(format!(
            "embedding system condition estimate {:.3e} above threshold",
            ctx.condition_estimate()
        ));
    }
    Ok(summary)
}

/// Per-ℓ Herglotz far fields against direct regular-wavefunction solves,
/// written as `theta,re,im,relerr_vs_direct` per ℓ.
pub fn cmd_herglotz(config: &RunConfig, ells: &[i32]) -> Result<RunSummary> {
    if ells.is_empty() {
        return Err(Error::Config("no ℓ values given".into()));
    }
    let mut summary = RunSummary::default();
    let prepared = prepare_context(config)?;
    let ctx = &prepared.ctx;
    let ell_max = ells.iter().map(|l| l.unsigned_abs()).max().unwrap();
    let quad = build_quadrature(config.k, ell_max, prepared.params.p);

    let thetas: Vec<f64> = (0..config.theta_grid)
        .map(|i| std::f64::consts::TAU * i as f64 / config.theta_grid as f64)
        .collect();

    let direct_cfg = SolverConfig {
        counter: Some(prepared.counter.clone()),
        ..SolverConfig::with_dofs(config.dofs_per_side)
    };
    for &ell in ells {
        let embedded = crate::tmatrix::regular_wave_far_field(ctx, ell, &quad, &thetas);
        let direct = solve(
            &prepared.polygon,
            &regular_wave_field(ell, config.k),
            &direct_cfg,
        )?;
        let scale = thetas
            .iter()
            .map(|&theta| far_field(&direct, theta).norm())
            .fold(f64::MIN_POSITIVE, f64::max);
        let rows: Vec<String> = thetas
            .iter()
            .zip(embedded.iter())
            .map(|(&theta, value)| {
                let relerr = (value - far_field(&direct, theta)).norm() / scale;
                format!("{theta},{},{},{relerr}", value.re, value.im)
            })
            .collect();
        let stem = format!("herglotz_ell_{ell}");
        write_csv_with_mirror(
            &config.out_dir,
            &stem,
            "theta,re,im,relerr_vs_direct",
            &rows,
            &mut summary,
        )?;
    }

    summary.solve_count = prepared.counter.load(Ordering::Relaxed);
    let mut manifest = manifest_common(config, "herglotz");
    manifest.push(("ells", format!("{ells:?}")));
    manifest.push(("n_quad", quad.len().to_string()));
    manifest.push(("solve_count", summary.solve_count.to_string()));
    manifest.push(("cache_hit", prepared.cache_hit.to_string()));
    write_manifest(&config.out_dir, &manifest, &mut summary)?;
    Ok(summary)
}

/// Assemble the T-matrix through the embedding context and write the `TMAT1`
/// file plus an energy-defect report.
pub fn cmd_tmatrix(config: &RunConfig) -> Result<RunSummary> {
    let mut summary = RunSummary::default();
    let prepared = prepare_context(config)?;
    let ctx = &prepared.ctx;
    let radius = prepared.polygon.enclosing_radius();
    let m_trunc = truncation_order(config.k, radius)?;
    let quad = build_quadrature(config.k, m_trunc, prepared.params.p);
    let tmatrix = assemble_t_matrix(ctx, radius, &quad, &TMatrixConfig::default())?;

    std::fs::create_dir_all(&config.out_dir)?;
    let path = config.out_dir.join("tmatrix.tmat");
    tmatrix.write(&path)?;
    summary.files.push(path);

    summary.solve_count = prepared.counter.load(Ordering::Relaxed);
    if tmatrix.defect_flagged() {
        summary.warnings.push(format!(
            "t-matrix energy defect {:.3e} above threshold",
            tmatrix.energy_defect()
        ));
    }
    let mut manifest = manifest_common(config, "tmatrix");
    manifest.push(("radius", radius.to_string()));
    manifest.push(("m_trunc", m_trunc.to_string()));
    manifest.push(("energy_defect", tmatrix.energy_defect().to_string()));
    manifest.push(("solve_count", summary.solve_count.to_string()));
    manifest.push(("cache_hit", prepared.cache_hit.to_string()));
    write_manifest(&config.out_dir, &manifest, &mut summary)?;
    Ok(summary)
}
