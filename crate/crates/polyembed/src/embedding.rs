//! The embedding formulae and their numerically stable evaluation.
//!
//! Once the `M` canonical plane-wave problems are solved, the far field for
//! any incidence `α` is
//!
//! ```text
//! D(θ, α) = Σ_m b_m(α) Λ(θ, α_m) D(θ, α_m) / Λ(θ, α)
//! ```
//!
//! where the coefficients `b_m(α)` solve an `M×M` system built from the
//! canonical far fields. The quotient is exact in theory but amplifies solver
//! noise by `1/|Λ|` near the zero set `Θ_α`. The combined evaluator keeps the
//! raw quotient away from `Θ_α` and switches to:
//!
//! * an order-1 L'Hôpital limit exactly on `Θ_α`, away from `Θ*`;
//! * an order-2 L'Hôpital limit on `Θ_α ∩ Θ*`;
//! * a truncated Taylor expansion about the nearest zero `θ₀` in a `tol1`
//!   collar, with the prefactor `(θ−θ₀)/Λ` evaluated through a reciprocal
//!   series that never subtracts nearly equal cosines;
//! * a first-order two-variable Taylor step around the nearest point of
//!   `Θ*×Θ*`, where both L'Hôpital denominators degenerate (this is why the
//!   canonical set must contain `Θ*`).
//!
//! Every `D̂`-derivative reduces to exact `Λ`-derivatives and the kernel
//! machinery, so no numerical differentiation happens anywhere.

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, Mutex};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::geometry::{
    circle_dist, closest_angle, lambda, lambda_theta_deriv_n, lambda_theta_derivs,
    signed_circle_diff, theta_alpha_set, theta_star_set, CanonicalSet, Polygon, RationalAngleData,
};
use crate::kernel::MAX_DERIV_ORDER;
use crate::linalg::{CMatrix, LuSystem};
use crate::solver::{
    far_field, far_field_derivs_upto, plane_wave_field, solve, FarFieldSolution, SolverConfig,
};

/// Arc distance below which an angle counts as lying exactly on a set.
pub const ON_SET_TOL: f64 = 1e-12;

/// Tolerances and truncation orders for the combined evaluator.
#[derive(Clone, Copy, Debug)]
pub struct EmbeddingConfig {
    /// Collar around `Θ_α` where the single-variable Taylor branch applies.
    pub tol1: f64,
    /// Proximity to `Θ*` that switches to the two-variable branch.
    pub tol2: f64,
    /// Taylor truncation order `M_Tay`.
    pub taylor_order: usize,
    /// Highest far-field derivative the context may request.
    pub max_deriv_order: usize,
    /// Condition-estimate level that triggers a warning on build.
    pub condition_warn: f64,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        EmbeddingConfig {
            tol1: 0.25,
            tol2: 0.05,
            taylor_order: 10,
            max_deriv_order: MAX_DERIV_ORDER,
            condition_warn: 1e12,
        }
    }
}

impl EmbeddingConfig {
    fn validate(&self) -> Result<()> {
        if !(self.tol1 > 0.0 && self.tol1 < 1.0) || !(self.tol2 > 0.0 && self.tol2 < 1.0) {
            return Err(Error::Config(format!(
                "tolerances must lie in (0, 1): tol1 = {}, tol2 = {}",
                self.tol1, self.tol2
            )));
        }
        if self.taylor_order < 1 {
            return Err(Error::Config("taylor_order must be at least 1".into()));
        }
        if self.max_deriv_order > MAX_DERIV_ORDER
            || self.max_deriv_order < self.taylor_order.max(2)
        {
            return Err(Error::Config(format!(
                "max_deriv_order {} outside [max(taylor_order, 2), {MAX_DERIV_ORDER}]",
                self.max_deriv_order
            )));
        }
        Ok(())
    }
}

/// Which branch of the combined evaluator produced a value.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Branch {
    LhopitalFirst,
    LhopitalSecond,
    TaylorSingle,
    TaylorTwoVariable,
    Naive,
}

impl Branch {
    pub fn as_str(self) -> &'static str {
        match self {
            Branch::LhopitalFirst => "lhopital1",
            Branch::LhopitalSecond => "lhopital2",
            Branch::TaylorSingle => "taylor0",
            Branch::TaylorTwoVariable => "taylorstar",
            Branch::Naive => "naive",
        }
    }
}

impl fmt::Display for Branch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// The embedding coefficients for one incidence angle.
#[derive(Clone, Debug)]
pub struct BmCoefficients {
    pub alpha: f64,
    pub b: Vec<Complex64>,
}

/// Everything needed to evaluate `D(θ, α)` anywhere: the canonical solutions,
/// the factorized `D̂` system and the dispatch tolerances.
pub struct EmbeddingContext {
    polygon: Polygon,
    params: RationalAngleData,
    canonical: CanonicalSet,
    solutions: Vec<FarFieldSolution>,
    dhat: CMatrix,
    lu: LuSystem,
    condition_estimate: f64,
    cfg: EmbeddingConfig,
    k: f64,
    stars: Vec<f64>,
    bm_cache: Mutex<HashMap<u64, Arc<Vec<Complex64>>>>,
}

/// Solve the `M` canonical problems and assemble the embedding context.
pub fn build_context(
    polygon: &Polygon,
    k: f64,
    params: &RationalAngleData,
    canonical: CanonicalSet,
    solver_cfg: &SolverConfig,
    cfg: EmbeddingConfig,
) -> Result<EmbeddingContext> {
    let solutions: Vec<FarFieldSolution> = canonical
        .angles
        .iter()
        .map(|&alpha| solve(polygon, &plane_wave_field(alpha, k), solver_cfg))
        .collect::<Result<_>>()?;
    build_context_from_solutions(polygon, k, params, canonical, solutions, cfg)
}

/// Assemble the context from already-solved canonical problems (cache path).
pub fn build_context_from_solutions(
    polygon: &Polygon,
    k: f64,
    params: &RationalAngleData,
    canonical: CanonicalSet,
    solutions: Vec<FarFieldSolution>,
    cfg: EmbeddingConfig,
) -> Result<EmbeddingContext> {
    cfg.validate()?;
    let m = params.num_canonical;
    if canonical.angles.len() != m {
        return Err(Error::InfeasibleCanonicalSet(format!(
            "canonical set has {} angles, polygon needs M = {m}",
            canonical.angles.len()
        )));
    }
    if solutions.len() != m {
        return Err(Error::AssumptionViolation(format!(
            "{} solutions supplied for M = {m} canonical angles",
            solutions.len()
        )));
    }
    for sol in &solutions {
        if (sol.k() - k).abs() > 1e-12 * k.max(1.0) {
            return Err(Error::AssumptionViolation(format!(
                "solution wavenumber {} does not match context wavenumber {k}",
                sol.k()
            )));
        }
    }
    for i in 0..m {
        for j in (i + 1)..m {
            if circle_dist(canonical.angles[i], canonical.angles[j]) <= ON_SET_TOL {
                return Err(Error::InfeasibleCanonicalSet(format!(
                    "canonical angles {i} and {j} coincide"
                )));
            }
        }
    }
    let stars = theta_star_set(params.p);
    for &s in &stars {
        if canonical.index_of(s).is_none() {
            return Err(Error::InfeasibleCanonicalSet(format!(
                "Θ* element {s} missing from the canonical set"
            )));
        }
    }

    let p = params.p;
    let dhat = CMatrix::from_fn(m, m, |n, mm| {
        lambda(p, canonical.angles[n], canonical.angles[mm])
            * far_field(&solutions[mm], canonical.angles[n])
    });
    let lu = LuSystem::new(dhat.clone()).map_err(|e| {
        Error::AssumptionViolation(format!("canonical D̂ system is singular: {e}"))
    })?;
    let condition_estimate = lu.condition_estimate();
    if !condition_estimate.is_finite() {
        return Err(Error::AssumptionViolation(format!(
            "canonical D̂ system condition estimate is not finite ({condition_estimate})"
        )));
    }
    if condition_estimate > cfg.condition_warn {
        log::warn!(
            "canonical D̂ system condition estimate {condition_estimate:.3e} exceeds {:.1e}",
            cfg.condition_warn
        );
    }
    log::debug!("canonical D̂ system condition estimate {condition_estimate:.3e}");

    Ok(EmbeddingContext {
        polygon: polygon.clone(),
        params: params.clone(),
        canonical,
        solutions,
        dhat,
        lu,
        condition_estimate,
        cfg,
        k,
        stars,
        bm_cache: Mutex::new(HashMap::new()),
    })
}

fn binomial_row(n: usize) -> Vec<f64> {
    let mut row = vec![1.0; n + 1];
    for j in 1..=n {
        row[j] = row[j - 1] * (n - j + 1) as f64 / j as f64;
    }
    row
}

impl EmbeddingContext {
    pub fn polygon(&self) -> &Polygon {
        &self.polygon
    }

    pub fn params(&self) -> &RationalAngleData {
        &self.params
    }

    pub fn canonical(&self) -> &CanonicalSet {
        &self.canonical
    }

    pub fn solutions(&self) -> &[FarFieldSolution] {
        &self.solutions
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn config(&self) -> &EmbeddingConfig {
        &self.cfg
    }

    pub fn condition_estimate(&self) -> f64 {
        self.condition_estimate
    }

    pub fn dhat(&self) -> &CMatrix {
        &self.dhat
    }

    /// Worst boundary residual across the canonical solves.
    pub fn max_canonical_residual(&self) -> f64 {
        self.solutions
            .iter()
            .map(|s| s.residual())
            .fold(0.0, f64::max)
    }

    /// Far field of canonical problem `m` at observation angle `theta`.
    pub fn canonical_far_field(&self, m: usize, theta: f64) -> Complex64 {
        far_field(&self.solutions[m], theta)
    }

    fn sign(&self) -> f64 {
        if self.params.p % 2 == 0 {
            -1.0
        } else {
            1.0
        }
    }

    fn bm_vector(&self, alpha: f64) -> Arc<Vec<Complex64>> {
        let key = alpha.to_bits();
        if let Some(b) = self.bm_cache.lock().unwrap().get(&key) {
            return b.clone();
        }
        let m = self.params.num_canonical;
        let sign = self.sign();
        let rhs: Vec<Complex64> = (0..m)
            .map(|n| {
                let alpha_n = self.canonical.angles[n];
                sign * lambda(self.params.p, alpha, alpha_n)
                    * far_field(&self.solutions[n], alpha)
            })
            .collect();
        let mut b = self.lu.solve_refined(&rhs, 1);
        // Hold the solve to its contract: residual at 1e-10 of the data.
        let rhs_norm: f64 = rhs.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        for _ in 0..2 {
            let res_norm = self.bm_residual_norm(&b, &rhs);
            if res_norm <= 1e-10 * rhs_norm.max(f64::MIN_POSITIVE) {
                break;
            }
            let res: Vec<Complex64> = self
                .dhat
                .matvec(&b)
                .iter()
                .zip(rhs.iter())
                .map(|(av, r)| r - av)
                .collect();
            let dx = self.lu.solve(&res);
            for (bi, di) in b.iter_mut().zip(dx.iter()) {
                *bi += di;
            }
        }
        let b = Arc::new(b);
        self.bm_cache.lock().unwrap().insert(key, b.clone());
        b
    }

    fn bm_residual_norm(&self, b: &[Complex64], rhs: &[Complex64]) -> f64 {
        self.dhat
            .matvec(b)
            .iter()
            .zip(rhs.iter())
            .map(|(av, r)| (r - av).norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    /// Solve the `M×M` system for the embedding coefficients at `alpha`.
    pub fn solve_bm(&self, alpha: f64) -> BmCoefficients {
        BmCoefficients {
            alpha,
            b: self.bm_vector(alpha).as_ref().clone(),
        }
    }

    /// θ-derivatives `0..=n_max` of `D̂(θ, α_m) = Λ(θ, α_m) D(θ, α_m)` by the
    /// Leibniz rule on exact `Λ`-derivatives and kernel-chain far-field
    /// derivatives.
    fn dhat_derivs(&self, m: usize, theta: f64, n_max: usize) -> Result<Vec<Complex64>> {
        let p = self.params.p;
        let alpha_m = self.canonical.angles[m];
        let d_derivs = far_field_derivs_upto(&self.solutions[m], theta, n_max)?;
        let lambda0 = lambda(p, theta, alpha_m);
        let mut out = Vec::with_capacity(n_max + 1);
        for n in 0..=n_max {
            let binom = binomial_row(n);
            let mut acc = lambda0 * d_derivs[n];
            for j in 1..=n {
                acc += binom[j] * lambda_theta_deriv_n(p, theta, j as u32) * d_derivs[n - j];
            }
            out.push(acc);
        }
        Ok(out)
    }

    /// Numerator `Σ_m b_m ∂ⁿD̂/∂θⁿ(θ, α_m)` for `n = 0..=n_max`.
    fn numerator_derivs(&self, b: &[Complex64], theta: f64, n_max: usize) -> Result<Vec<Complex64>> {
        let mut acc = vec![Complex64::new(0.0, 0.0); n_max + 1];
        for (m, bm) in b.iter().enumerate() {
            let derivs = self.dhat_derivs(m, theta, n_max)?;
            for (a, d) in acc.iter_mut().zip(derivs.iter()) {
                *a += bm * d;
            }
        }
        Ok(acc)
    }

    /// The raw embedding quotient. Errors when `Λ(θ, α)` is exactly zero;
    /// amplifies solver error like `1/|Λ|` near the zero set.
    pub fn naive(&self, theta: f64, alpha: f64) -> Result<Complex64> {
        let lam = lambda(self.params.p, theta, alpha);
        if lam == 0.0 {
            return Err(Error::DivisionBranch);
        }
        let b = self.bm_vector(alpha);
        let num = self.numerator_derivs(&b, theta, 0)?[0];
        Ok(num / lam)
    }

    /// L'Hôpital limits on the zero set: order 1 needs `θ` away from `Θ*`,
    /// order 2 applies at `Θ_α ∩ Θ*`.
    pub fn lhopital(&self, theta: f64, alpha: f64, order: usize) -> Result<Complex64> {
        let zeros = theta_alpha_set(self.params.p, alpha);
        let (_, theta0) = closest_angle(theta, &zeros);
        if circle_dist(theta, theta0) > ON_SET_TOL {
            return Err(Error::Dispatch(format!(
                "θ = {theta} is not on Θ_α for α = {alpha}"
            )));
        }
        let (_, star) = closest_angle(theta, &self.stars);
        let star_dist = circle_dist(theta, star);
        let (d1, d2) = lambda_theta_derivs(self.params.p, theta);
        let b = self.bm_vector(alpha);
        match order {
            1 => {
                if star_dist <= self.cfg.tol2 {
                    return Err(Error::Dispatch(format!(
                        "θ = {theta} is within tol2 of Θ*; order-1 denominator degenerates"
                    )));
                }
                let num = self.numerator_derivs(&b, theta, 1)?[1];
                Ok(num / d1)
            }
            2 => {
                if star_dist > ON_SET_TOL {
                    return Err(Error::Dispatch(format!(
                        "θ = {theta} is not on Θ*; order-2 limit does not apply"
                    )));
                }
                let num = self.numerator_derivs(&b, theta, 2)?[2];
                Ok(num / d2)
            }
            _ => Err(Error::Dispatch(format!("L'Hôpital order must be 1 or 2, got {order}"))),
        }
    }

    /// Single-variable Taylor correction about the nearest zero `θ₀`:
    /// `(θ−θ₀)/Λ · Σ_m b_m Σ_{n=1}^{M_Tay} (θ−θ₀)^{n−1}/n! · ∂ⁿD̂/∂θⁿ(θ₀, α_m)`
    /// with the prefactor from [`stable_denominator`].
    pub fn taylor_about_zero(
        &self,
        theta: f64,
        alpha: f64,
        theta0: f64,
        taylor_order: usize,
    ) -> Result<Complex64> {
        let p = self.params.p;
        if lambda(p, theta0, alpha).abs() > 1e-9 {
            return Err(Error::Dispatch(format!(
                "θ₀ = {theta0} is not a zero of Λ(·, α) for α = {alpha}"
            )));
        }
        let n_terms = taylor_order.min(self.cfg.max_deriv_order);
        let prefactor = stable_denominator(p, theta, theta0, n_terms)?;
        let delta = signed_circle_diff(theta, theta0);
        let b = self.bm_vector(alpha);
        let derivs = self.numerator_derivs(&b, theta0, n_terms)?;
        let mut series = Complex64::new(0.0, 0.0);
        let mut power = 1.0;
        let mut factorial = 1.0;
        for n in 1..=n_terms {
            factorial *= n as f64;
            series += derivs[n] * (power / factorial);
            power *= delta;
        }
        Ok(series * prefactor)
    }

    /// First-order two-variable Taylor step about `(θ*, α*) ∈ Θ*×Θ*`, built
    /// entirely from canonical solutions (the α-derivative comes through
    /// reciprocity).
    pub fn taylor_two_variable(
        &self,
        theta: f64,
        alpha: f64,
        theta_star: f64,
        alpha_star: f64,
    ) -> Result<Complex64> {
        let m1 = self.canonical.index_of(theta_star).ok_or_else(|| {
            Error::InfeasibleCanonicalSet(format!(
                "θ* = {theta_star} is not a canonical angle; Θ* ⊂ A_M is violated"
            ))
        })?;
        let m2 = self.canonical.index_of(alpha_star).ok_or_else(|| {
            Error::InfeasibleCanonicalSet(format!(
                "α* = {alpha_star} is not a canonical angle; Θ* ⊂ A_M is violated"
            ))
        })?;
        let value = far_field(&self.solutions[m2], theta_star);
        let dtheta = far_field_derivs_upto(&self.solutions[m2], theta_star, 1)?[1];
        let dalpha = far_field_derivs_upto(&self.solutions[m1], alpha_star, 1)?[1];
        let dt = signed_circle_diff(theta, theta_star);
        let da = signed_circle_diff(alpha, alpha_star);
        Ok(value + dt * dtheta + da * dalpha)
    }

    /// The partnered `Θ*` element paired with `θ*` (so that `Λ(θ*, α*) = 0`)
    /// lying closest to `alpha`; ties break to the smaller angle.
    fn partner_star(&self, theta_star: f64, alpha: f64) -> f64 {
        let p = self.params.p as i64;
        let a = (theta_star * self.params.p as f64 / std::f64::consts::PI).round() as i64;
        let want_parity = ((a + p) % 2 + 2) % 2;
        let candidates: Vec<f64> = self
            .stars
            .iter()
            .enumerate()
            .filter(|(n, _)| (*n as i64) % 2 == want_parity)
            .map(|(_, &s)| s)
            .collect();
        let (_, alpha_star) = closest_angle(alpha, &candidates);
        alpha_star
    }

    /// The combined evaluator with the branch that produced the value.
    pub fn combined_tagged(&self, theta: f64, alpha: f64) -> (Complex64, Branch) {
        let p = self.params.p;
        let zeros = theta_alpha_set(p, alpha);
        let (_, theta0) = closest_angle(theta, &zeros);
        let line_dist = circle_dist(theta, theta0);
        let (_, star_near_theta) = closest_angle(theta, &self.stars);
        let theta_star_dist = circle_dist(theta, star_near_theta);

        if line_dist <= ON_SET_TOL {
            // Exactly on the zero set.
            if theta_star_dist > self.cfg.tol2 {
                let v = self.lhopital(theta, alpha, 1).expect("dispatch checked");
                return (v, Branch::LhopitalFirst);
            }
            if theta_star_dist <= ON_SET_TOL {
                let v = self.lhopital(theta, alpha, 2).expect("dispatch checked");
                return (v, Branch::LhopitalSecond);
            }
            // On the line, near but not on Θ*: both L'Hôpital denominators are
            // unusable, so take the two-variable step.
            let (_, star0) = closest_angle(theta0, &self.stars);
            let alpha_star = self.partner_star(star0, alpha);
            let v = self
                .taylor_two_variable(theta, alpha, star0, alpha_star)
                .expect("Θ* ⊂ A_M by construction");
            return (v, Branch::TaylorTwoVariable);
        }

        if line_dist <= self.cfg.tol1 && theta_star_dist > self.cfg.tol2 {
            match self.taylor_about_zero(theta, alpha, theta0, self.cfg.taylor_order) {
                Ok(v) => return (v, Branch::TaylorSingle),
                // θ₀ can sit essentially on Θ* while θ is far from it; the
                // quotient has no nearby zero pair there and the raw formula
                // is safe.
                Err(Error::DegenerateDenominator(_)) => {}
                Err(_) => {}
            }
        } else {
            let (_, star0) = closest_angle(theta0, &self.stars);
            let star0_dist = circle_dist(theta0, star0);
            if line_dist < self.cfg.tol2 && star0_dist < self.cfg.tol2 {
                let alpha_star = self.partner_star(star0, alpha);
                let v = self
                    .taylor_two_variable(theta, alpha, star0, alpha_star)
                    .expect("Θ* ⊂ A_M by construction");
                return (v, Branch::TaylorTwoVariable);
            }
        }

        match self.naive(theta, alpha) {
            Ok(v) => (v, Branch::Naive),
            // Λ underflowed to exactly zero off the snap tolerance; fall back
            // to the order-1 limit which is defined there.
            Err(_) => {
                let v = self
                    .lhopital(theta0, alpha, 1)
                    .or_else(|_| self.lhopital(theta0, alpha, 2))
                    .unwrap_or(Complex64::new(0.0, 0.0));
                (v, Branch::LhopitalFirst)
            }
        }
    }

    /// The combined evaluator: finite for every `(θ, α)`.
    pub fn combined(&self, theta: f64, alpha: f64) -> Complex64 {
        self.combined_tagged(theta, alpha).0
    }

    /// The single-variable-Taylor-only evaluator: Taylor in the `tol1` collar
    /// when `θ₀` is clear of `Θ*`, raw quotient elsewhere, L'Hôpital limits on
    /// the zero set itself. Reproduces the heatmap behaviour where only the
    /// crossings of instability lines stay contaminated.
    pub fn taylor_only(&self, theta: f64, alpha: f64) -> Complex64 {
        let p = self.params.p;
        let zeros = theta_alpha_set(p, alpha);
        let (_, theta0) = closest_angle(theta, &zeros);
        let line_dist = circle_dist(theta, theta0);
        let (_, star0) = closest_angle(theta0, &self.stars);
        let star0_dist = circle_dist(theta0, star0);

        if line_dist <= ON_SET_TOL {
            return self
                .lhopital(theta, alpha, 1)
                .or_else(|_| self.lhopital(theta, alpha, 2))
                .unwrap_or_else(|_| {
                    // On the line near (but not on) Θ*: no finite limit branch
                    // in this mode; report the raw quotient's blow-up.
                    Complex64::new(f64::INFINITY, f64::INFINITY)
                });
        }
        if line_dist < self.cfg.tol1 && star0_dist >= self.cfg.tol2 {
            if let Ok(v) = self.taylor_about_zero(theta, alpha, theta0, self.cfg.taylor_order) {
                return v;
            }
        }
        self.naive(theta, alpha)
            .unwrap_or(Complex64::new(f64::INFINITY, f64::INFINITY))
    }
}

/// `(θ−θ₀)/Λ(θ, α)` through the reciprocal of the truncated series
/// `Σ_{n≥1} (θ−θ₀)^{n−1}/n! · pⁿ cos(pθ₀ + nπ/2)`, which never forms the
/// cancellation-prone difference of cosines. Errors when the leading term
/// vanishes, i.e. `θ₀` lies effectively in `Θ*`.
pub fn stable_denominator(p: u32, theta: f64, theta0: f64, n_terms: usize) -> Result<f64> {
    let delta = signed_circle_diff(theta, theta0);
    let pf = p as f64;
    let base = pf * theta0;
    // pⁿ cos(pθ₀ + nπ/2) cycles through (−sin, −cos, sin, cos)·pⁿ.
    let leading = -pf * base.sin();
    if leading.abs() < 1e-14 {
        return Err(Error::DegenerateDenominator(leading));
    }
    let mut sum = 0.0;
    let mut power = 1.0;
    let mut factorial = 1.0;
    let mut p_pow = 1.0;
    for n in 1..=n_terms.max(1) {
        factorial *= n as f64;
        p_pow *= pf;
        let trig = match n % 4 {
            0 => base.cos(),
            1 => -base.sin(),
            2 => -base.cos(),
            _ => base.sin(),
        };
        sum += power / factorial * p_pow * trig;
        power *= delta;
    }
    Ok(1.0 / sum)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{rational_params, select_canonical_angles, Polygon};
    use crate::solver::SolverConfig;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{PI, TAU};
    use std::sync::OnceLock;

    /// Shared square context at k = 1 (8 canonical solves).
    fn square_ctx() -> &'static EmbeddingContext {
        static CTX: OnceLock<EmbeddingContext> = OnceLock::new();
        CTX.get_or_init(|| {
            let poly = Polygon::regular(4, 1.0).unwrap();
            let params = rational_params(&poly, true).unwrap();
            let canonical = select_canonical_angles(&poly, &params, 42).unwrap();
            build_context(
                &poly,
                1.0,
                &params,
                canonical,
                &SolverConfig::with_dofs(64),
                EmbeddingConfig::default(),
            )
            .unwrap()
        })
    }

    /// A direct solve at the same budget as the shared context; its error is
    /// strongly correlated with the canonical solves, so differences measure
    /// the embedding formula itself rather than the solver bias.
    fn direct_solution(alpha: f64) -> FarFieldSolution {
        let poly = Polygon::regular(4, 1.0).unwrap();
        solve(
            &poly,
            &plane_wave_field(alpha, 1.0),
            &SolverConfig::with_dofs(64),
        )
        .unwrap()
    }

    #[test]
    fn context_builds_with_finite_condition() {
        let ctx = square_ctx();
        assert_eq!(ctx.solutions().len(), 8);
        assert!(ctx.condition_estimate().is_finite());
        assert!(ctx.condition_estimate() >= 1.0);
        // The boundary sup misfit is corner-layer limited at these budgets.
        assert!(ctx.max_canonical_residual() < 0.05);
    }

    #[test]
    fn duplicate_canonical_angles_rejected() {
        let poly = Polygon::regular(4, 1.0).unwrap();
        let params = rational_params(&poly, true).unwrap();
        let mut canonical = select_canonical_angles(&poly, &params, 3).unwrap();
        canonical.angles[7] = canonical.angles[4];
        let err = build_context(
            &poly,
            1.0,
            &params,
            canonical,
            &SolverConfig::with_dofs(8),
            EmbeddingConfig::default(),
        );
        assert!(err.is_err());
    }

    #[test]
    fn bm_at_canonical_angle_is_unit_vector() {
        let ctx = square_ctx();
        for m in [0usize, 4, 6] {
            let alpha_m = ctx.canonical().angles[m];
            let bm = ctx.solve_bm(alpha_m);
            for (j, bj) in bm.b.iter().enumerate() {
                let expected = if j == m { 1.0 } else { 0.0 };
                assert!(
                    (bj.norm() - expected).abs() < 1e-6,
                    "b[{j}] = {bj} for canonical index {m}"
                );
            }
        }
    }

    #[test]
    fn bm_solve_residual_contract() {
        let ctx = square_ctx();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let alpha = rng.random_range(0.0..TAU);
            let bm = ctx.solve_bm(alpha);
            let sign = if ctx.params().p % 2 == 0 { -1.0 } else { 1.0 };
            let rhs: Vec<Complex64> = (0..8)
                .map(|n| {
                    let an = ctx.canonical().angles[n];
                    sign * lambda(2, alpha, an) * ctx.canonical_far_field(n, alpha)
                })
                .collect();
            let rhs_norm: f64 = rhs.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            let res = ctx.bm_residual_norm(&bm.b, &rhs);
            assert!(res <= 1e-10 * rhs_norm, "residual {res} vs rhs {rhs_norm}");
        }
    }

    #[test]
    fn bm_depends_continuously_on_alpha() {
        let ctx = square_ctx();
        for alpha in [0.37f64, 1.9, 3.3] {
            let a = ctx.solve_bm(alpha);
            let b = ctx.solve_bm(alpha + 1e-6);
            let diff: f64 = a
                .b
                .iter()
                .zip(b.b.iter())
                .map(|(x, y)| (x - y).norm_sqr())
                .sum::<f64>()
                .sqrt();
            assert!(diff <= 1e-3, "‖b(α) − b(α+1e-6)‖ = {diff}");
        }
    }

    #[test]
    fn naive_matches_direct_solve_away_from_lines() {
        let ctx = square_ctx();
        let alpha = 1.0;
        let zeros = theta_alpha_set(2, alpha);
        let direct = direct_solution(alpha);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let reference_norm = (0..64)
            .map(|i| far_field(&direct, TAU * i as f64 / 64.0).norm())
            .fold(0.0, f64::max);
        for _ in 0..40 {
            let theta = rng.random_range(0.0..TAU);
            if zeros.iter().any(|&z| circle_dist(theta, z) < 0.3) {
                continue;
            }
            let emb = ctx.naive(theta, alpha).unwrap();
            let dv = far_field(&direct, theta);
            assert!(
                (emb - dv).norm() <= 1e-6 * reference_norm,
                "θ = {theta}: embedding {emb} vs direct {dv}"
            );
        }
    }

    #[test]
    fn naive_at_canonical_angle_reproduces_solution() {
        let ctx = square_ctx();
        let m = 5usize;
        let alpha_m = ctx.canonical().angles[m];
        let zeros = theta_alpha_set(2, alpha_m);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let theta = rng.random_range(0.0..TAU);
            if zeros.iter().any(|&z| circle_dist(theta, z) < 0.3) {
                continue;
            }
            let emb = ctx.naive(theta, alpha_m).unwrap();
            let direct = ctx.canonical_far_field(m, theta);
            // The unit-vector argument is exact; what remains is the solver's
            // reciprocity defect amplified through the system solve.
            assert!(
                (emb - direct).norm() <= 1e-7 * direct.norm().max(1.0),
                "θ = {theta}: {emb} vs {direct}"
            );
        }
    }

    #[test]
    fn naive_error_amplifies_near_zero_set() {
        let ctx = square_ctx();
        let alpha = 1.0;
        let zeros = theta_alpha_set(2, alpha);
        let theta0 = zeros[1]; // π − 1, well away from Θ*
        let direct = direct_solution(alpha);
        let reference_norm = (0..64)
            .map(|i| far_field(&direct, TAU * i as f64 / 64.0).norm())
            .fold(0.0, f64::max);

        // Median far-region relative error.
        let mut far_errors: Vec<f64> = Vec::new();
        for i in 0..40 {
            let theta = TAU * i as f64 / 40.0;
            if zeros.iter().any(|&z| circle_dist(theta, z) < 0.3) {
                continue;
            }
            let emb = ctx.naive(theta, alpha).unwrap();
            far_errors.push((emb - far_field(&direct, theta)).norm() / reference_norm);
        }
        far_errors.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = far_errors[far_errors.len() / 2];

        let theta_near = theta0 + 1e-4;
        let emb = ctx.naive(theta_near, alpha).unwrap();
        let spike = (emb - far_field(&direct, theta_near)).norm() / reference_norm;
        assert!(
            spike >= 100.0 * median.max(1e-15),
            "spike {spike} vs median {median}"
        );
    }

    #[test]
    fn lhopital_limit_consistency() {
        // Richardson-extrapolated naive values approaching θ₀ match the
        // order-1 limit.
        let ctx = square_ctx();
        let alpha = 1.0;
        let zeros = theta_alpha_set(2, alpha);
        let theta0 = zeros[1];
        let exact = ctx.lhopital(theta0, alpha, 1).unwrap();
        let h = 1e-3;
        let avg =
            |h: f64| (ctx.naive(theta0 + h, alpha).unwrap() + ctx.naive(theta0 - h, alpha).unwrap()) * 0.5;
        let r1 = avg(h);
        let r2 = avg(h / 2.0);
        let extrap = (r2 * 4.0 - r1) / 3.0;
        assert!(
            (extrap - exact).norm() <= 1e-5 * exact.norm().max(1.0),
            "extrapolated {extrap} vs limit {exact}"
        );
    }

    #[test]
    fn lhopital_second_order_finite_at_double_zero() {
        let ctx = square_ctx();
        // θ = α = π/2 ∈ Θ* with Λ(θ, α) = 0: the order-2 denominator is ±p².
        let theta = PI / 2.0;
        let alpha = PI / 2.0;
        assert!(lambda(2, theta, alpha).abs() < 1e-15);
        let v = ctx.lhopital(theta, alpha, 2).unwrap();
        assert!(v.is_finite());
        assert!(v.norm() < 100.0);
        // Order 1 refuses: the denominator −p sin(pθ) vanishes on Θ*.
        assert!(ctx.lhopital(theta, alpha, 1).is_err());
    }

    #[test]
    fn stable_denominator_matches_direct_quotient() {
        let p = 2u32;
        let alpha = 1.0;
        let zeros = theta_alpha_set(p, alpha);
        let theta0 = zeros[0];
        let theta = theta0 + 0.1;
        let direct = (theta - theta0) / lambda(p, theta, alpha);
        let series = stable_denominator(p, theta, theta0, 10).unwrap();
        assert!(
            (series - direct).abs() <= 1e-10 * direct.abs(),
            "series {series} vs direct {direct}"
        );
        // At θ = θ₀ only the first term survives: −1/(p sin(pθ₀)).
        let at_zero = stable_denominator(p, theta0, theta0, 10).unwrap();
        let expected = -1.0 / (2.0 * (2.0 * theta0).sin());
        assert!((at_zero - expected).abs() < 1e-14);
    }

    #[test]
    fn stable_denominator_truncation_improves_with_terms() {
        let p = 3u32;
        let alpha = 0.8;
        let zeros = theta_alpha_set(p, alpha);
        let theta0 = zeros[0];
        let theta = theta0 + 0.2;
        let exact = (signed_circle_diff(theta, theta0)) / lambda(p, theta, alpha);
        let errs: Vec<f64> = [3usize, 6, 10]
            .iter()
            .map(|&n| (stable_denominator(p, theta, theta0, n).unwrap() - exact).abs())
            .collect();
        assert!(errs[0] > errs[1] && errs[1] > errs[2], "errors {errs:?}");
    }

    #[test]
    fn stable_denominator_degenerate_at_star() {
        // θ₀ ∈ Θ* makes the leading term vanish.
        assert!(matches!(
            stable_denominator(2, 0.1, 0.0, 10),
            Err(Error::DegenerateDenominator(_))
        ));
    }

    #[test]
    fn taylor_at_zero_equals_lhopital() {
        let ctx = square_ctx();
        let alpha = 1.0;
        let zeros = theta_alpha_set(2, alpha);
        let theta0 = zeros[1];
        let taylor = ctx.taylor_about_zero(theta0, alpha, theta0, 10).unwrap();
        let lhop = ctx.lhopital(theta0, alpha, 1).unwrap();
        assert!(
            (taylor - lhop).norm() <= 1e-8 * lhop.norm().max(1.0),
            "taylor {taylor} vs lhopital {lhop}"
        );
    }

    #[test]
    fn taylor_agrees_with_naive_at_collar_boundary() {
        let ctx = square_ctx();
        let alpha = 1.0;
        let zeros = theta_alpha_set(2, alpha);
        let theta0 = zeros[1];
        let theta = theta0 + ctx.config().tol1;
        let taylor = ctx.taylor_about_zero(theta, alpha, theta0, 10).unwrap();
        let naive = ctx.naive(theta, alpha).unwrap();
        assert!(
            (taylor - naive).norm() <= 1e-5 * naive.norm().max(1.0),
            "taylor {taylor} vs naive {naive}"
        );
    }

    #[test]
    fn two_variable_taylor_at_center_is_canonical_value() {
        let ctx = square_ctx();
        let theta_star = PI / 2.0;
        let alpha_star = ctx.partner_star(theta_star, 1.4);
        assert!(lambda(2, theta_star, alpha_star).abs() < 1e-12);
        let m2 = ctx.canonical().index_of(alpha_star).unwrap();
        let v = ctx
            .taylor_two_variable(theta_star, alpha_star, theta_star, alpha_star)
            .unwrap();
        let expected = ctx.canonical_far_field(m2, theta_star);
        assert_eq!(v, expected);
    }

    #[test]
    fn combined_dispatch_structure() {
        let ctx = square_ctx();
        let alpha = 1.0;
        let zeros = theta_alpha_set(2, alpha);
        // Far from everything: naive.
        let (_, tag) = ctx.combined_tagged(zeros[1] + 1.2, alpha);
        assert_eq!(tag, Branch::Naive);
        // Exactly on Θ_α, away from Θ*: order-1 limit.
        let (_, tag) = ctx.combined_tagged(zeros[1], alpha);
        assert_eq!(tag, Branch::LhopitalFirst);
        // Inside the collar: Taylor.
        let (_, tag) = ctx.combined_tagged(zeros[1] + 0.1, alpha);
        assert_eq!(tag, Branch::TaylorSingle);
        // On Θ_α ∩ Θ*: order-2 limit.
        let (_, tag) = ctx.combined_tagged(PI / 2.0, PI / 2.0);
        assert_eq!(tag, Branch::LhopitalSecond);
        // Near the Θ*×Θ* crossing but on neither set exactly.
        let (v, tag) = ctx.combined_tagged(PI / 2.0 + 0.01, PI / 2.0 + 0.011);
        assert_eq!(tag, Branch::TaylorTwoVariable);
        assert!(v.is_finite());
    }

    #[test]
    fn combined_is_total_on_random_samples() {
        let ctx = square_ctx();
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..10_000 {
            let theta = rng.random_range(0.0..TAU);
            let alpha = rng.random_range(0.0..TAU);
            let v = ctx.combined(theta, alpha);
            assert!(v.is_finite(), "non-finite value at ({theta}, {alpha})");
        }
    }

    #[test]
    fn combined_reproduces_canonical_solutions() {
        let ctx = square_ctx();
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        // Free canonical angles: reproduction at the embedding-consistency
        // level everywhere.
        for m in [4usize, 5, 7] {
            let alpha_m = ctx.canonical().angles[m];
            let scale = (0..32)
                .map(|i| ctx.canonical_far_field(m, TAU * i as f64 / 32.0).norm())
                .fold(0.0, f64::max);
            for _ in 0..60 {
                let theta = rng.random_range(0.0..TAU);
                let emb = ctx.combined(theta, alpha_m);
                let direct = ctx.canonical_far_field(m, theta);
                assert!(
                    (emb - direct).norm() <= 1e-6 * scale,
                    "m = {m}, θ = {theta}: {emb} vs {direct}"
                );
            }
        }
        // Θ* canonicals: observation angles near Θ* go through the
        // first-order two-variable branch, whose truncation is O(tol2²).
        for m in [0usize, 1] {
            let alpha_m = ctx.canonical().angles[m];
            let scale = (0..32)
                .map(|i| ctx.canonical_far_field(m, TAU * i as f64 / 32.0).norm())
                .fold(0.0, f64::max);
            for _ in 0..60 {
                let theta = rng.random_range(0.0..TAU);
                let emb = ctx.combined(theta, alpha_m);
                let direct = ctx.canonical_far_field(m, theta);
                assert!(
                    (emb - direct).norm() <= 2e-3 * scale,
                    "m = {m}, θ = {theta}: {emb} vs {direct}"
                );
            }
        }
    }

    #[test]
    fn combined_inherits_reciprocity() {
        let ctx = square_ctx();
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let norm = (0..32)
            .map(|i| ctx.combined(TAU * i as f64 / 32.0, 0.95).norm())
            .fold(0.0, f64::max);
        for _ in 0..30 {
            let theta = rng.random_range(0.0..TAU);
            let alpha = rng.random_range(0.0..TAU);
            let a = ctx.combined(theta, alpha);
            let b = ctx.combined(alpha, theta);
            assert!(
                (a - b).norm() <= 1e-4 * norm,
                "D(θ,α) = {a} vs D(α,θ) = {b} at ({theta}, {alpha})"
            );
        }
    }
}
