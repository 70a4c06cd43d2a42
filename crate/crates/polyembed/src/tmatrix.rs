//! Single-scatterer T-matrix assembly from embedded far fields.
//!
//! The T-matrix maps regular-wavefunction coefficients of an incident field
//! to radiating-wavefunction coefficients of the scattered field. Its columns
//! are Fourier projections of the far fields of the regular wavefunctions
//! `ψ_ℓ`, which the combined embedding evaluator delivers for every `ℓ` from
//! the same `M` canonical plane-wave solves — so the number of PDE solves
//! does not grow with the truncation order (and hence not with `k`).
//!
//! For a sound-soft scatterer the scattering matrix `S = I + 2T` is unitary;
//! the energy defect `‖T + T† + 2T†T‖₂` is reported as a diagnostic.

use std::f64::consts::TAU;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::embedding::EmbeddingContext;
use crate::error::{Error, Result};
use crate::geometry::Point2;
use crate::herglotz::{fourier_bessel_kernel, herglotz_far_field, QuadratureRule};
use crate::linalg::{spectral_norm, CMatrix};
use crate::solver::{far_field, regular_wave_field, solve, FarFieldSolution, SolverConfig};
use crate::special::hankel1;

/// Truncation order `⌈kR + 4(kR)^{1/3} + 5⌉` for a scatterer inside a ball of
/// radius `R`; keeps the T-matrix method stable as `k` grows.
pub fn truncation_order(k: f64, radius: f64) -> Result<u32> {
    if !(k > 0.0 && radius > 0.0) {
        return Err(Error::Domain(format!(
            "truncation order needs positive k and R, got k = {k}, R = {radius}"
        )));
    }
    let kr = k * radius;
    Ok((kr + 4.0 * kr.cbrt() + 5.0).ceil() as u32)
}

/// Far-field normalization of the radiating wavefunction: the far field of
/// `H_{|ℓ|}⁽¹⁾(k|x|)e^{iℓθ_x}` is `ρ_ℓ e^{iℓθ}` with `ρ_ℓ = 2(−i)^{|ℓ|+1}`,
/// pinned by the large-radius asymptotic fit in the tests.
pub fn radiating_far_field_constant(ell: i32) -> Complex64 {
    2.0 * Complex64::new(0.0, -1.0).powi(ell.unsigned_abs() as i32 + 1)
}

/// Assembly knobs.
#[derive(Clone, Debug)]
pub struct TMatrixConfig {
    /// Trapezoid points per truncation order in the Fourier projection.
    pub projection_factor: usize,
    /// Energy-defect level above which the matrix is flagged.
    pub defect_threshold: f64,
}

impl Default for TMatrixConfig {
    fn default() -> Self {
        TMatrixConfig {
            projection_factor: 8,
            defect_threshold: 1e-3,
        }
    }
}

/// Truncated T-matrix `T_{ℓ'ℓ}`, `ℓ, ℓ' ∈ [−M_trunc, M_trunc]`.
#[derive(Clone, Debug)]
pub struct TMatrix {
    k: f64,
    radius: f64,
    m_trunc: u32,
    /// Row-major `(2M+1)²` entries, row `ℓ'`, column `ℓ`.
    entries: Vec<Complex64>,
    /// Radiating-wavefunction far-field constants `ρ_{ℓ'}`.
    radiating_norms: Vec<Complex64>,
    energy_defect: f64,
    defect_flagged: bool,
}

impl TMatrix {
    fn from_entries(
        k: f64,
        radius: f64,
        m_trunc: u32,
        entries: Vec<Complex64>,
        defect_threshold: f64,
    ) -> Self {
        let dim = (2 * m_trunc + 1) as usize;
        assert_eq!(entries.len(), dim * dim);
        let radiating_norms = (-(m_trunc as i32)..=m_trunc as i32)
            .map(radiating_far_field_constant)
            .collect();
        let mut t = TMatrix {
            k,
            radius,
            m_trunc,
            entries,
            radiating_norms,
            energy_defect: 0.0,
            defect_flagged: false,
        };
        t.energy_defect = t.compute_energy_defect();
        t.defect_flagged = t.energy_defect > defect_threshold;
        if t.defect_flagged {
            log::warn!(
                "t-matrix energy defect {:.3e} above threshold {:.1e}",
                t.energy_defect,
                defect_threshold
            );
        }
        t
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn truncation(&self) -> u32 {
        self.m_trunc
    }

    pub fn dim(&self) -> usize {
        (2 * self.m_trunc + 1) as usize
    }

    pub fn orders(&self) -> impl Iterator<Item = i32> {
        -(self.m_trunc as i32)..=self.m_trunc as i32
    }

    pub fn radiating_norms(&self) -> &[Complex64] {
        &self.radiating_norms
    }

    /// `‖T + T† + 2T†T‖₂`; zero for a lossless (sound-soft) scatterer up to
    /// solver, embedding and truncation error.
    pub fn energy_defect(&self) -> f64 {
        self.energy_defect
    }

    pub fn defect_flagged(&self) -> bool {
        self.defect_flagged
    }

    pub fn entry(&self, ell_out: i32, ell_in: i32) -> Complex64 {
        let m = self.m_trunc as i32;
        assert!(ell_out.abs() <= m && ell_in.abs() <= m, "order out of range");
        let dim = self.dim();
        self.entries[(ell_out + m) as usize * dim + (ell_in + m) as usize]
    }

    /// Map regular-wavefunction coefficients to radiating coefficients.
    pub fn apply(&self, a: &[Complex64]) -> Result<Vec<Complex64>> {
        let dim = self.dim();
        if a.len() != dim {
            return Err(Error::Domain(format!(
                "coefficient vector has length {}, T-matrix dimension is {dim}",
                a.len()
            )));
        }
        let mut b = vec![Complex64::new(0.0, 0.0); dim];
        for (row, slot) in b.iter_mut().enumerate() {
            let mut acc = Complex64::new(0.0, 0.0);
            for (col, av) in a.iter().enumerate() {
                acc += self.entries[row * dim + col] * av;
            }
            *slot = acc;
        }
        Ok(b)
    }

    /// Scattered field `Σ_{ℓ'} b_{ℓ'} H_{|ℓ'|}⁽¹⁾(k|x|)e^{iℓ'θ_x}` for incident
    /// coefficients `a`; only valid outside the enclosing ball.
    pub fn scattered_field(&self, a: &[Complex64], x: Point2) -> Result<Complex64> {
        let r = x.norm();
        if r <= self.radius {
            return Err(Error::OutsideValidity {
                r,
                radius: self.radius,
            });
        }
        let b = self.apply(a)?;
        let theta = x.angle();
        let mut acc = Complex64::new(0.0, 0.0);
        for (ell, coeff) in self.orders().zip(b.iter()) {
            let radial = hankel1(ell.unsigned_abs(), self.k * r)?;
            acc += coeff * radial * Complex64::from_polar(1.0, ell as f64 * theta);
        }
        Ok(acc)
    }

    fn compute_energy_defect(&self) -> f64 {
        let dim = self.dim();
        let t = CMatrix::from_fn(dim, dim, |i, j| self.entries[i * dim + j]);
        let defect = CMatrix::from_fn(dim, dim, |i, j| {
            let mut acc = self.entries[i * dim + j] + self.entries[j * dim + i].conj();
            for q in 0..dim {
                acc += 2.0 * t.at(q, i).conj() * t.at(q, j);
            }
            acc
        });
        spectral_norm(&defect)
    }

    /// Write the `TMAT1` text format: header `TMAT1 k R M_trunc`, then one
    /// `lp,l,re,im` row per entry.
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        out.push_str(&format!("TMAT1 {} {} {}\n", self.k, self.radius, self.m_trunc));
        let dim = self.dim();
        let m = self.m_trunc as i64;
        for row in 0..dim {
            for col in 0..dim {
                let v = self.entries[row * dim + col];
                out.push_str(&format!(
                    "{},{},{},{}\n",
                    row as i64 - m,
                    col as i64 - m,
                    v.re,
                    v.im
                ));
            }
        }
        let mut file = std::fs::File::create(path)?;
        file.write_all(out.as_bytes())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<TMatrix> {
        let file = std::fs::File::open(path)?;
        let mut lines = BufReader::new(file).lines();
        let header = lines
            .next()
            .transpose()?
            .ok_or_else(|| Error::FileFormat("empty t-matrix file".into()))?;
        let mut it = header.split_whitespace();
        if it.next() != Some("TMAT1") {
            return Err(Error::FileFormat("missing TMAT1 magic header".into()));
        }
        let mut num = |what: &str| -> Result<f64> {
            it.next()
                .ok_or_else(|| Error::FileFormat(format!("header missing {what}")))?
                .parse()
                .map_err(|e| Error::FileFormat(format!("bad {what}: {e}")))
        };
        let k = num("k")?;
        let radius = num("R")?;
        let m_trunc = num("M_trunc")? as u32;
        let dim = (2 * m_trunc + 1) as usize;
        let mut entries = vec![Complex64::new(0.0, 0.0); dim * dim];
        let m = m_trunc as i64;
        for _ in 0..dim * dim {
            let line = lines
                .next()
                .transpose()?
                .ok_or_else(|| Error::FileFormat("t-matrix file truncated".into()))?;
            let mut parts = line.split(',');
            let mut field = |what: &str| -> Result<f64> {
                parts
                    .next()
                    .ok_or_else(|| Error::FileFormat(format!("row missing {what}")))?
                    .trim()
                    .parse()
                    .map_err(|e| Error::FileFormat(format!("bad {what}: {e}")))
            };
            let lp = field("lp")? as i64;
            let l = field("l")? as i64;
            let re = field("re")?;
            let im = field("im")?;
            if lp.abs() > m || l.abs() > m {
                return Err(Error::FileFormat(format!("order ({lp},{l}) out of range")));
            }
            entries[(lp + m) as usize * dim + (l + m) as usize] = Complex64::new(re, im);
        }
        Ok(TMatrix::from_entries(
            k,
            radius,
            m_trunc,
            entries,
            TMatrixConfig::default().defect_threshold,
        ))
    }
}

/// Fourier-project far fields `F_ℓ(θ_j)` into T-matrix entries:
/// `T_{ℓ'ℓ} = (1/(2πρ_{ℓ'})) ∫ F_ℓ(θ) e^{−iℓ'θ} dθ` by the trapezoid rule.
fn project_columns(
    k: f64,
    radius: f64,
    m_trunc: u32,
    far_fields: &[Vec<Complex64>],
    proj_nodes: &[f64],
    defect_threshold: f64,
) -> TMatrix {
    let dim = (2 * m_trunc + 1) as usize;
    let n_proj = proj_nodes.len();
    let mut entries = vec![Complex64::new(0.0, 0.0); dim * dim];
    for (col, values) in far_fields.iter().enumerate() {
        for row in 0..dim {
            let ell_out = row as i64 - m_trunc as i64;
            let rho = radiating_far_field_constant(ell_out as i32);
            let mut acc = Complex64::new(0.0, 0.0);
            for (&theta, v) in proj_nodes.iter().zip(values.iter()) {
                acc += v * Complex64::from_polar(1.0, -(ell_out as f64) * theta);
            }
            entries[row * dim + col] = acc / (rho * n_proj as f64);
        }
    }
    TMatrix::from_entries(k, radius, m_trunc, entries, defect_threshold)
}

fn projection_nodes(m_trunc: u32, factor: usize) -> Vec<f64> {
    let n = (factor.max(1) * m_trunc as usize).max(16);
    (0..n).map(|j| TAU * j as f64 / n as f64).collect()
}

/// Assemble the T-matrix from the embedding context: every column comes from
/// the Herglotz quadrature over the combined evaluator, consuming no PDE
/// solves beyond the `M` canonical ones already inside the context.
pub fn assemble_t_matrix(
    ctx: &EmbeddingContext,
    radius: f64,
    quad: &QuadratureRule,
    cfg: &TMatrixConfig,
) -> Result<TMatrix> {
    let k = ctx.k();
    let m_trunc = truncation_order(k, radius)?;
    let dim = (2 * m_trunc + 1) as usize;
    let nodes = projection_nodes(m_trunc, cfg.projection_factor);

    // The combined evaluator is shared by every column; evaluate the
    // (θ_j, α̃_i) grid once.
    let table: Vec<Vec<Complex64>> = nodes
        .par_iter()
        .map(|&theta| {
            quad.nodes
                .iter()
                .map(|&alpha| ctx.combined(theta, alpha))
                .collect()
        })
        .collect();

    let far_fields: Vec<Vec<Complex64>> = (0..dim)
        .map(|col| {
            let ell = col as i64 - m_trunc as i64;
            let kernel = fourier_bessel_kernel(ell as i32);
            nodes
                .iter()
                .enumerate()
                .map(|(j, _)| {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for ((&alpha, &w), value) in quad
                        .nodes
                        .iter()
                        .zip(quad.weights.iter())
                        .zip(table[j].iter())
                    {
                        acc += kernel.eval(alpha) * value * w;
                    }
                    acc
                })
                .collect()
        })
        .collect();

    Ok(project_columns(
        k,
        radius,
        m_trunc,
        &far_fields,
        &nodes,
        cfg.defect_threshold,
    ))
}

/// Oracle path: one direct solve per regular wavefunction, `2M_trunc + 1`
/// PDE solves in total.
pub fn direct_t_matrix(
    polygon: &crate::geometry::Polygon,
    k: f64,
    radius: f64,
    solver_cfg: &SolverConfig,
    cfg: &TMatrixConfig,
) -> Result<TMatrix> {
    let m_trunc = truncation_order(k, radius)?;
    let dim = (2 * m_trunc + 1) as usize;
    let nodes = projection_nodes(m_trunc, cfg.projection_factor);
    let solutions: Vec<FarFieldSolution> = (0..dim)
        .into_par_iter()
        .map(|col| {
            let ell = col as i64 - m_trunc as i64;
            solve(polygon, &regular_wave_field(ell as i32, k), solver_cfg)
        })
        .collect::<Result<_>>()?;
    let far_fields: Vec<Vec<Complex64>> = solutions
        .iter()
        .map(|sol| nodes.iter().map(|&theta| far_field(sol, theta)).collect())
        .collect();
    Ok(project_columns(
        k,
        radius,
        m_trunc,
        &far_fields,
        &nodes,
        cfg.defect_threshold,
    ))
}

/// Herglotz far field of `ψ_ℓ` sampled on a θ grid through the embedding
/// context (used by the per-ℓ error studies).
pub fn regular_wave_far_field(
    ctx: &EmbeddingContext,
    ell: i32,
    quad: &QuadratureRule,
    thetas: &[f64],
) -> Vec<Complex64> {
    let kernel = fourier_bessel_kernel(ell);
    thetas
        .par_iter()
        .map(|&theta| herglotz_far_field(ctx, &kernel, quad, theta))
        .collect()
}

/// Regular-wavefunction coefficients of the plane wave `e^{ikx·d_α}`:
/// `a_ℓ = (−i)^{|ℓ|} e^{−iℓα}` (Jacobi–Anger).
pub fn plane_wave_coefficients(alpha: f64, m_trunc: u32) -> Vec<Complex64> {
    (-(m_trunc as i32)..=m_trunc as i32)
        .map(|ell| {
            Complex64::new(0.0, -1.0).powi(ell.unsigned_abs() as i32)
                * Complex64::from_polar(1.0, -(ell as f64) * alpha)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::bessel_j;
    use std::f64::consts::PI;

    #[test]
    fn truncation_order_examples() {
        // kR = 1: ⌈1 + 4 + 5⌉ = 10.
        assert_eq!(truncation_order(1.0, 1.0).unwrap(), 10);
        // kR = 8: ⌈8 + 4·2 + 5⌉ = 21.
        assert_eq!(truncation_order(8.0, 1.0).unwrap(), 21);
        assert_eq!(truncation_order(2.0, 4.0).unwrap(), 21);
        let mut last = 0;
        for i in 1..40 {
            let m = truncation_order(0.5 * i as f64, 1.0).unwrap();
            assert!(m >= last, "not monotone at kR = {}", 0.5 * i as f64);
            last = m;
        }
        assert!(truncation_order(0.0, 1.0).is_err());
        assert!(truncation_order(1.0, -1.0).is_err());
    }

    #[test]
    fn radiating_constant_oracle() {
        // Evaluate H_{|ℓ|}(kr)e^{iℓθ} at kr = 1e6 and divide by the far-field
        // prefactor e^{i(kr+π/4)}/√(2πkr).
        let k = 1.0;
        let r = 1e6;
        for ell in -6i32..=6 {
            let theta = 0.7;
            let field = hankel1(ell.unsigned_abs(), k * r).unwrap()
                * Complex64::from_polar(1.0, ell as f64 * theta);
            let prefactor = Complex64::from_polar(1.0, k * r + PI / 4.0) / (TAU * k * r).sqrt();
            let fitted = field / (prefactor * Complex64::from_polar(1.0, ell as f64 * theta));
            let rho = radiating_far_field_constant(ell);
            assert!(
                (fitted - rho).norm() < 1e-4,
                "ℓ = {ell}: fitted {fitted} vs ρ {rho}"
            );
            assert!((rho.norm() - 2.0).abs() < 1e-14);
        }
        // ρ depends on ℓ only through |ℓ| mod 4.
        for ell in 0i32..8 {
            let a = radiating_far_field_constant(ell);
            let b = radiating_far_field_constant(ell + 4);
            assert!((a - b).norm() < 1e-15);
            assert!((a - radiating_far_field_constant(-ell)).norm() < 1e-15);
        }
    }

    /// Sound-soft circle of radius `a`: `T` is diagonal with
    /// `T_ℓℓ = −J_{|ℓ|}(ka)/H_{|ℓ|}(ka)`, and `S = I + 2T` is exactly unitary.
    fn circle_t_matrix(k: f64, a: f64, m_trunc: u32, radius: f64) -> TMatrix {
        let dim = (2 * m_trunc + 1) as usize;
        let mut entries = vec![Complex64::new(0.0, 0.0); dim * dim];
        for (row, ell) in (-(m_trunc as i32)..=m_trunc as i32).enumerate() {
            let j = bessel_j(ell.unsigned_abs(), k * a).unwrap();
            let h = hankel1(ell.unsigned_abs(), k * a).unwrap();
            entries[row * dim + row] = -j / h;
        }
        TMatrix::from_entries(k, radius, m_trunc, entries, 1e-3)
    }

    #[test]
    fn energy_defect_vanishes_for_lossless_circle() {
        let t = circle_t_matrix(1.0, 0.8, 6, 0.8);
        assert!(
            t.energy_defect() < 1e-12,
            "defect {} for an exactly lossless matrix",
            t.energy_defect()
        );
        assert!(!t.defect_flagged());
    }

    #[test]
    fn apply_and_scattered_field() {
        let t = circle_t_matrix(1.0, 0.8, 6, 0.8);
        let dim = t.dim();
        // Zero in, zero out.
        let zero = vec![Complex64::new(0.0, 0.0); dim];
        let b = t.apply(&zero).unwrap();
        assert!(b.iter().all(|z| z.norm() == 0.0));
        let field = t.scattered_field(&zero, Point2::new(3.0, 1.0)).unwrap();
        assert_eq!(field.norm(), 0.0);

        // Inside the validity ball: error.
        let a = plane_wave_coefficients(0.3, t.truncation());
        assert!(matches!(
            t.scattered_field(&a, Point2::new(0.1, 0.1)),
            Err(Error::OutsideValidity { .. })
        ));

        // Radiating behaviour: |u|·√r roughly constant along a ray.
        let dir = 0.9f64;
        let values: Vec<f64> = [10.0, 30.0, 100.0]
            .iter()
            .map(|&rr| {
                let x = Point2::new(rr * dir.cos(), rr * dir.sin());
                t.scattered_field(&a, x).unwrap().norm() * rr.sqrt()
            })
            .collect();
        for w in values.windows(2) {
            assert!(
                (w[0] - w[1]).abs() < 0.05 * w[0].max(1e-12),
                "radiated amplitude drifts: {values:?}"
            );
        }
    }

    #[test]
    fn circle_t_matrix_scattered_field_matches_series() {
        // For the circle the T-matrix result must reproduce the classical
        // partial-wave scattered field of a plane wave.
        let k = 1.0;
        let a = 0.8;
        let alpha = 0.4;
        let t = circle_t_matrix(k, a, 10, a);
        let coeffs = plane_wave_coefficients(alpha, t.truncation());
        let x = Point2::new(2.5, -1.3);
        let from_t = t.scattered_field(&coeffs, x).unwrap();

        let r = x.norm();
        let theta = x.angle();
        let mut series = Complex64::new(0.0, 0.0);
        for ell in -10i32..=10 {
            let a_ell = Complex64::new(0.0, -1.0).powi(ell.unsigned_abs() as i32)
                * Complex64::from_polar(1.0, -(ell as f64) * alpha);
            let j = bessel_j(ell.unsigned_abs(), k * a).unwrap();
            let h_at_a = hankel1(ell.unsigned_abs(), k * a).unwrap();
            let h = hankel1(ell.unsigned_abs(), k * r).unwrap();
            series += a_ell * (-j / h_at_a) * h * Complex64::from_polar(1.0, ell as f64 * theta);
        }
        assert!(
            (from_t - series).norm() < 1e-12,
            "T-matrix field {from_t} vs series {series}"
        );
    }

    #[test]
    fn file_roundtrip() {
        let t = circle_t_matrix(1.3, 0.6, 4, 0.75);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.tmat");
        t.write(&path).unwrap();
        let back = TMatrix::read(&path).unwrap();
        assert_eq!(back.truncation(), t.truncation());
        assert_eq!(back.k(), t.k());
        assert_eq!(back.radius(), t.radius());
        for lp in -4i32..=4 {
            for l in -4i32..=4 {
                assert!((back.entry(lp, l) - t.entry(lp, l)).norm() < 1e-15);
            }
        }
        assert!((back.energy_defect() - t.energy_defect()).abs() < 1e-12);

        std::fs::write(dir.path().join("bad.tmat"), "TMATX 1 1 1\n").unwrap();
        assert!(TMatrix::read(&dir.path().join("bad.tmat")).is_err());
    }
}
