//! Dense complex linear algebra used by the solver and the embedding system.
//!
//! Only what the crate needs: column-pivoted Householder QR for ill-conditioned
//! least-squares collocation, partial-pivoted LU with one step of iterative
//! refinement and a 1-norm condition estimate for the embedding system, and a
//! power-iteration spectral norm for T-matrix diagnostics.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Dense row-major complex matrix.
#[derive(Clone, Debug)]
pub struct CMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl CMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        CMatrix {
            rows,
            cols,
            data: vec![Complex64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn from_fn<F: FnMut(usize, usize) -> Complex64>(rows: usize, cols: usize, mut f: F) -> Self {
        let mut m = CMatrix::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m.data[i * cols + j] = f(i, j);
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> Complex64 {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: Complex64) {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j] = v;
    }

    pub fn matvec(&self, x: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(x.len(), self.cols);
        let mut out = vec![Complex64::new(0.0, 0.0); self.rows];
        for i in 0..self.rows {
            let row = &self.data[i * self.cols..(i + 1) * self.cols];
            let mut acc = Complex64::new(0.0, 0.0);
            for (a, b) in row.iter().zip(x.iter()) {
                acc += a * b;
            }
            out[i] = acc;
        }
        out
    }

    /// `Aᴴ x` without forming the adjoint.
    pub fn adjoint_matvec(&self, x: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(x.len(), self.rows);
        let mut out = vec![Complex64::new(0.0, 0.0); self.cols];
        for i in 0..self.rows {
            let row = &self.data[i * self.cols..(i + 1) * self.cols];
            let xi = x[i];
            for (o, a) in out.iter_mut().zip(row.iter()) {
                *o += a.conj() * xi;
            }
        }
        out
    }

    /// Maximum absolute column sum.
    pub fn norm_one(&self) -> f64 {
        let mut best = 0.0f64;
        for j in 0..self.cols {
            let mut s = 0.0;
            for i in 0..self.rows {
                s += self.at(i, j).norm();
            }
            best = best.max(s);
        }
        best
    }
}

fn norm2(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Result of a column-pivoted least-squares solve.
#[derive(Clone, Debug)]
pub struct Lstsq {
    pub solution: Vec<Complex64>,
    /// Euclidean norm of `A x − b` implied by the triangular factor.
    pub residual_norm: f64,
    /// Numerical rank at the supplied relative threshold.
    pub rank: usize,
    pub rank_deficient: bool,
}

/// Minimum-residual solution of an overdetermined complex system by
/// Householder QR with column pivoting, after equilibrating every column to
/// unit norm (collocation columns span many orders of magnitude otherwise).
///
/// Columns whose pivot falls below `rank_rtol` times the largest pivot are
/// truncated; the corresponding solution entries are zero. Truncation is
/// reported, not fatal: collocation matrices are expected to be very
/// ill-conditioned and the small-residual solution is still meaningful.
pub fn lstsq(a: &CMatrix, b: &[Complex64], rank_rtol: f64) -> Result<Lstsq> {
    let m = a.rows();
    let n = a.cols();
    if b.len() != m {
        return Err(Error::Domain(format!(
            "lstsq: rhs length {} does not match {} rows",
            b.len(),
            m
        )));
    }
    if m < n {
        return Err(Error::Domain(format!(
            "lstsq: system is underdetermined ({m} rows, {n} cols)"
        )));
    }

    let mut r = a.clone();
    let mut col_scale = vec![1.0f64; n];
    for j in 0..n {
        let norm = (0..m).map(|i| r.at(i, j).norm_sqr()).sum::<f64>().sqrt();
        if norm > 0.0 {
            col_scale[j] = norm;
            for i in 0..m {
                let v = r.at(i, j) / norm;
                r.set(i, j, v);
            }
        }
    }
    let mut qtb = b.to_vec();
    let mut piv: Vec<usize> = (0..n).collect();

    for k in 0..n {
        // Pivot on the column with the largest remaining norm.
        let mut best_j = k;
        let mut best_norm = -1.0f64;
        for j in k..n {
            let mut s = 0.0;
            for i in k..m {
                s += r.at(i, j).norm_sqr();
            }
            if s > best_norm {
                best_norm = s;
                best_j = j;
            }
        }
        if best_j != k {
            for i in 0..m {
                let tmp = r.at(i, k);
                r.set(i, k, r.at(i, best_j));
                r.set(i, best_j, tmp);
            }
            piv.swap(k, best_j);
        }

        // Householder vector for column k, stored below the diagonal.
        let xnorm = {
            let mut s = 0.0;
            for i in k..m {
                s += r.at(i, k).norm_sqr();
            }
            s.sqrt()
        };
        if xnorm == 0.0 {
            continue;
        }
        let x0 = r.at(k, k);
        let phase = if x0.norm() == 0.0 {
            Complex64::new(1.0, 0.0)
        } else {
            x0 / x0.norm()
        };
        let s = phase * xnorm;
        // v = x + s e1 ; beta = 2 / vᴴv = 1 / (xnorm (xnorm + |x0|))
        let beta = 1.0 / (xnorm * (xnorm + x0.norm()));
        r.set(k, k, x0 + s);

        for j in (k + 1)..n {
            let mut dot = Complex64::new(0.0, 0.0);
            for i in k..m {
                dot += r.at(i, k).conj() * r.at(i, j);
            }
            let scale = dot * beta;
            for i in k..m {
                let v = r.at(i, j) - scale * r.at(i, k);
                r.set(i, j, v);
            }
        }
        {
            let mut dot = Complex64::new(0.0, 0.0);
            for i in k..m {
                dot += r.at(i, k).conj() * qtb[i];
            }
            let scale = dot * beta;
            for i in k..m {
                qtb[i] -= scale * r.at(i, k);
            }
        }
        // Store the implied diagonal of R.
        r.set(k, k, -s);
    }

    // Numerical rank from the pivot magnitudes.
    let r00 = r.at(0, 0).norm();
    let tol = rank_rtol * r00;
    let mut rank = 0;
    for k in 0..n {
        if r.at(k, k).norm() > tol {
            rank += 1;
        } else {
            break;
        }
    }
    if rank == 0 {
        // Zero matrix (or zero threshold anomaly): minimum-norm answer is 0.
        return Ok(Lstsq {
            solution: vec![Complex64::new(0.0, 0.0); n],
            residual_norm: norm2(&qtb),
            rank: 0,
            rank_deficient: true,
        });
    }

    // Back substitution on the leading rank x rank block.
    let mut z = vec![Complex64::new(0.0, 0.0); n];
    for k in (0..rank).rev() {
        let mut acc = qtb[k];
        for j in (k + 1)..rank {
            acc -= r.at(k, j) * z[j];
        }
        z[k] = acc / r.at(k, k);
    }

    let mut solution = vec![Complex64::new(0.0, 0.0); n];
    for (j, &p) in piv.iter().enumerate() {
        solution[p] = z[j] / col_scale[p];
    }

    let residual_norm = norm2(&qtb[rank..]);
    Ok(Lstsq {
        solution,
        residual_norm,
        rank,
        rank_deficient: rank < n,
    })
}

/// Partial-pivoted LU factorization of a square complex system, retaining the
/// original matrix for iterative refinement and condition estimation.
#[derive(Clone, Debug)]
pub struct LuSystem {
    n: usize,
    a: CMatrix,
    lu: CMatrix,
    /// Row permutation: row `i` of `PA` is row `perm[i]` of `A`.
    perm: Vec<usize>,
}

impl LuSystem {
    pub fn new(a: CMatrix) -> Result<Self> {
        let n = a.rows();
        if a.cols() != n {
            return Err(Error::Domain(format!(
                "lu: matrix is {}x{}, not square",
                a.rows(),
                a.cols()
            )));
        }
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let mut p = k;
            let mut best = lu.at(k, k).norm();
            for i in (k + 1)..n {
                let v = lu.at(i, k).norm();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best == 0.0 {
                return Err(Error::AssumptionViolation(format!(
                    "singular matrix: zero pivot at column {k}"
                )));
            }
            if p != k {
                for j in 0..n {
                    let tmp = lu.at(k, j);
                    lu.set(k, j, lu.at(p, j));
                    lu.set(p, j, tmp);
                }
                perm.swap(k, p);
            }
            let pivot = lu.at(k, k);
            for i in (k + 1)..n {
                let factor = lu.at(i, k) / pivot;
                lu.set(i, k, factor);
                for j in (k + 1)..n {
                    let v = lu.at(i, j) - factor * lu.at(k, j);
                    lu.set(i, j, v);
                }
            }
        }
        Ok(LuSystem { n, a, lu, perm })
    }

    pub fn size(&self) -> usize {
        self.n
    }

    /// Plain LU solve of `A x = b`.
    pub fn solve(&self, b: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(b.len(), self.n);
        let n = self.n;
        let mut x: Vec<Complex64> = (0..n).map(|i| b[self.perm[i]]).collect();
        for i in 1..n {
            let mut acc = x[i];
            for j in 0..i {
                acc -= self.lu.at(i, j) * x[j];
            }
            x[i] = acc;
        }
        for i in (0..n).rev() {
            let mut acc = x[i];
            for j in (i + 1)..n {
                acc -= self.lu.at(i, j) * x[j];
            }
            x[i] = acc / self.lu.at(i, i);
        }
        x
    }

    /// Solve of the adjoint system `Aᴴ x = b`.
    pub fn solve_adjoint(&self, b: &[Complex64]) -> Vec<Complex64> {
        let n = self.n;
        assert_eq!(b.len(), n);
        // A = Pᵀ L U, so Aᴴ = Uᴴ Lᴴ P: forward through Uᴴ, back through Lᴴ.
        let mut w = b.to_vec();
        for i in 0..n {
            let mut acc = w[i];
            for j in 0..i {
                acc -= self.lu.at(j, i).conj() * w[j];
            }
            w[i] = acc / self.lu.at(i, i).conj();
        }
        for i in (0..n).rev() {
            let mut acc = w[i];
            for j in (i + 1)..n {
                acc -= self.lu.at(j, i).conj() * w[j];
            }
            w[i] = acc;
        }
        let mut x = vec![Complex64::new(0.0, 0.0); n];
        for i in 0..n {
            x[self.perm[i]] = w[i];
        }
        x
    }

    /// LU solve followed by `steps` rounds of iterative refinement.
    pub fn solve_refined(&self, b: &[Complex64], steps: usize) -> Vec<Complex64> {
        let mut x = self.solve(b);
        for _ in 0..steps {
            let ax = self.a.matvec(&x);
            let res: Vec<Complex64> = b.iter().zip(ax.iter()).map(|(bi, ai)| bi - ai).collect();
            let dx = self.solve(&res);
            for (xi, di) in x.iter_mut().zip(dx.iter()) {
                *xi += di;
            }
        }
        x
    }

    /// 1-norm condition estimate by Hager's method.
    pub fn condition_estimate(&self) -> f64 {
        let n = self.n;
        let a_norm = self.a.norm_one();
        let mut x = vec![Complex64::new(1.0 / n as f64, 0.0); n];
        let mut est = 0.0f64;
        for _ in 0..5 {
            let w = self.solve(&x);
            let w_norm: f64 = w.iter().map(|z| z.norm()).sum();
            est = w_norm;
            let xi: Vec<Complex64> = w
                .iter()
                .map(|z| {
                    if z.norm() == 0.0 {
                        Complex64::new(1.0, 0.0)
                    } else {
                        z / z.norm()
                    }
                })
                .collect();
            let z = self.solve_adjoint(&xi);
            let (jmax, zmax) = z
                .iter()
                .enumerate()
                .map(|(j, v)| (j, v.norm()))
                .fold((0, 0.0), |acc, it| if it.1 > acc.1 { it } else { acc });
            let zx: f64 = z
                .iter()
                .zip(x.iter())
                .map(|(zi, xi)| (zi.conj() * xi).re)
                .sum();
            if zmax <= zx.abs() {
                break;
            }
            x = vec![Complex64::new(0.0, 0.0); n];
            x[jmax] = Complex64::new(1.0, 0.0);
        }
        a_norm * est
    }
}

/// Largest singular value by power iteration on `AᴴA`.
pub fn spectral_norm(a: &CMatrix) -> f64 {
    let n = a.cols();
    if n == 0 || a.rows() == 0 {
        return 0.0;
    }
    // Deterministic, non-degenerate start vector.
    let mut v: Vec<Complex64> = (0..n)
        .map(|j| Complex64::new(1.0 + (j as f64) * 0.618, 0.25 * ((j % 7) as f64)))
        .collect();
    let nv = norm2(&v);
    for z in v.iter_mut() {
        *z /= nv;
    }
    let mut sigma = 0.0f64;
    for _ in 0..200 {
        let av = a.matvec(&v);
        let mut w = a.adjoint_matvec(&av);
        let wn = norm2(&w);
        if wn == 0.0 {
            return 0.0;
        }
        for z in w.iter_mut() {
            *z /= wn;
        }
        let new_sigma = norm2(&a.matvec(&w));
        v = w;
        if (new_sigma - sigma).abs() <= 1e-12 * new_sigma.max(1.0) {
            return new_sigma;
        }
        sigma = new_sigma;
    }
    sigma
}
