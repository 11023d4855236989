//! Linear algebra for the AR(1) (Kac–Murdock–Szegő) covariance `Σ_ij = ρ^|i-j|`.
//!
//! Nothing here materializes `Σ` except the `dense` oracle helpers, which are
//! compiled only for tests or with the `test-support` feature.
//!
//! The precision matrix of the AR(1) covariance is tridiagonal:
//!
//! ```text
//! Σ⁻¹ = 1/(1-ρ²) · tridiag(-ρ; 1, 1+ρ², …, 1+ρ², 1; -ρ)
//! ```
//!
//! which gives O(n) quadratic forms and determinants, and an O(n) Sturm count
//! for eigenvalue bisection.

use crate::error::{domain, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_3;

pub(crate) fn check_rho(rho: f64) -> Result<()> {
    if !(0.0..1.0).contains(&rho) {
        return domain(format!("rho must lie in [0, 1), got {rho}"));
    }
    Ok(())
}

/// Log-density of a zero-mean Gaussian with variance `v` at `y`.
#[inline]
pub fn log_normal_pdf(y: f64, v: f64) -> f64 {
    -0.5 * (LN_2PI + v.ln()) - 0.5 * y * y / v
}

/// The `n × n` AR(1) Toeplitz covariance with correlation `rho`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ar1Covariance {
    n: usize,
    rho: f64,
}

impl Ar1Covariance {
    pub fn new(n: usize, rho: f64) -> Result<Self> {
        if n == 0 {
            return domain("blocklength must be at least 1");
        }
        check_rho(rho)?;
        Ok(Self { n, rho })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// `(n-1)·log(1-ρ²)`.
    pub fn logdet(&self) -> f64 {
        (self.n as f64 - 1.0) * (-self.rho * self.rho).ln_1p()
    }

    /// Diagonal of `(1-ρ²)·Σ⁻¹`.
    fn scaled_precision_diag(&self, i: usize) -> f64 {
        if self.n == 1 {
            1.0 - self.rho * self.rho
        } else if i == 0 || i + 1 == self.n {
            1.0
        } else {
            1.0 + self.rho * self.rho
        }
    }

    /// All eigenvalues of `Σ`, ascending.
    ///
    /// Bisection on the tridiagonal precision matrix, then inverted per
    /// eigenvalue. O(n²) overall.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let n = self.n;
        let rho = self.rho;
        if rho == 0.0 || n == 1 {
            return vec![1.0; n];
        }
        let scale = 1.0 - rho * rho;
        let diag: Vec<f64> = (0..n).map(|i| self.scaled_precision_diag(i)).collect();
        let off2 = vec![rho * rho; n - 1];
        // eigenvalues of (1-ρ²)Σ⁻¹ lie in ((1-ρ)², (1+ρ)²)
        let lo = (1.0 - rho) * (1.0 - rho) * (1.0 - 1e-12);
        let hi = (1.0 + rho) * (1.0 + rho) * (1.0 + 1e-12);
        let mu = tridiagonal_eigenvalues(&diag, &off2, lo, hi);
        // descending μ ↔ ascending λ
        mu.iter().rev().map(|m| scale / m).collect()
    }

    /// `vᵀ Σ⁻¹ v` in O(n). `v.len()` must equal `n`.
    pub fn precision_quadform(&self, v: &[f64]) -> f64 {
        debug_assert_eq!(v.len(), self.n);
        let rho = self.rho;
        let mut acc = 0.0;
        for (i, &vi) in v.iter().enumerate() {
            acc += self.scaled_precision_diag(i) * vi * vi;
        }
        for w in v.windows(2) {
            acc -= 2.0 * rho * w[0] * w[1];
        }
        acc / (1.0 - rho * rho)
    }
}

/// Eigenvalues (ascending) of the symmetric tridiagonal matrix with diagonal
/// `diag` and squared off-diagonal `off2`, all assumed inside `[lo, hi]`.
/// Sturm-sequence bisection to machine precision.
pub(crate) fn tridiagonal_eigenvalues(diag: &[f64], off2: &[f64], lo: f64, hi: f64) -> Vec<f64> {
    let n = diag.len();
    debug_assert_eq!(off2.len() + 1, n.max(1));
    let count_below = |x: f64| {
        let mut count = 0;
        let mut q = 1.0;
        for i in 0..n {
            let d = diag[i] - x;
            q = if i == 0 { d } else { d - off2[i - 1] / q };
            if q == 0.0 {
                q = -f64::EPSILON * (1.0 + x.abs());
            }
            if q < 0.0 {
                count += 1;
            }
        }
        count
    };
    let mut out: Vec<f64> = Vec::with_capacity(n);
    for k in 0..n {
        let mut a = out.last().map_or(lo, |&p| p.max(lo));
        let mut b = hi;
        loop {
            let mid = 0.5 * (a + b);
            if mid <= a || mid >= b || b - a <= 2.0 * f64::EPSILON * a.abs().max(b.abs()) {
                break;
            }
            if count_below(mid) > k {
                b = mid;
            } else {
                a = mid;
            }
        }
        out.push(0.5 * (a + b));
    }
    out
}

/// Log-determinant of the `n × n` AR(1) covariance, `(n-1)·log(1-ρ²)`.
pub fn ar1_logdet(n: usize, rho: f64) -> Result<f64> {
    Ok(Ar1Covariance::new(n, rho)?.logdet())
}

/// `vᵀ Σ⁻¹ v` for the AR(1) covariance of size `v.len()`.
pub fn ar1_precision_quadform(rho: f64, v: &[f64]) -> Result<f64> {
    if v.is_empty() {
        return domain("quadratic form of an empty vector");
    }
    Ok(Ar1Covariance::new(v.len(), rho)?.precision_quadform(v))
}

/// Eigenvalues of the `n × n` AR(1) covariance, ascending.
pub fn ar1_eigenvalues(n: usize, rho: f64) -> Result<Vec<f64>> {
    Ok(Ar1Covariance::new(n, rho)?.eigenvalues())
}

/// Incremental Cholesky factor of `C_n = diag(x)·Σ·diag(x) + σ_z²·I`,
/// extended by one row per received symbol, together with the running
/// Gaussian log-density of `y^n` under `N(0, C_n)`.
///
/// Row `k` of the factor is `(x_k·g_1, …, x_k·g_{k-1}, d_k)` where
/// `g = ρ^k·L⁻¹β`, `β_j = x_j ρ^{-j}`. Only `|g|²` and `g·w` enter the new
/// diagonal and the whitened output, so without factor storage each append is
/// O(1); with storage it is O(k) to rescale `g`.
#[derive(Debug, Clone)]
pub struct SeqCholesky {
    rho: f64,
    sigma_z2: f64,
    n: usize,
    gg: f64,
    gw: f64,
    log_diag: f64,
    quad: f64,
    factor: Option<StoredFactor>,
}

#[derive(Debug, Clone, Default)]
struct StoredFactor {
    g: Vec<f64>,
    rows: Vec<Vec<f64>>,
}

impl SeqCholesky {
    pub fn new(rho: f64, sigma_z2: f64) -> Result<Self> {
        check_rho(rho)?;
        if !(sigma_z2 > 0.0 && sigma_z2.is_finite()) {
            return domain(format!("noise variance must be positive, got {sigma_z2}"));
        }
        Ok(Self {
            rho,
            sigma_z2,
            n: 0,
            gg: 0.0,
            gw: 0.0,
            log_diag: 0.0,
            quad: 0.0,
            factor: None,
        })
    }

    /// Same as [`SeqCholesky::new`] but keeps every factor row.
    pub fn with_factor(rho: f64, sigma_z2: f64) -> Result<Self> {
        let mut s = Self::new(rho, sigma_z2)?;
        s.factor = Some(StoredFactor::default());
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Appends input `x` and output `y`; returns `log f(y^n | x^n)`.
    pub fn push(&mut self, x: f64, y: f64) -> f64 {
        let r2 = self.rho * self.rho;
        self.gg *= r2;
        self.gw *= self.rho;
        let d2 = x * x * (1.0 - self.gg) + self.sigma_z2;
        let d = d2.sqrt();
        let w = (y - x * self.gw) / d;
        let g_new = x * (1.0 - self.gg) / d;

        if let Some(f) = self.factor.as_mut() {
            for gj in f.g.iter_mut() {
                *gj *= self.rho;
            }
            let mut row: Vec<f64> = f.g.iter().map(|gj| x * gj).collect();
            row.push(d);
            f.rows.push(row);
            f.g.push(g_new);
        }

        self.gg += g_new * g_new;
        self.gw += g_new * w;
        self.log_diag += d.ln();
        self.quad += w * w;
        self.n += 1;
        self.log_density()
    }

    /// `log f(y^n | x^n)` for the symbols pushed so far (0 when empty).
    pub fn log_density(&self) -> f64 {
        -0.5 * self.n as f64 * LN_2PI - self.log_diag - 0.5 * self.quad
    }

    /// Stored factor rows, if created with [`SeqCholesky::with_factor`].
    pub fn factor_rows(&self) -> Option<&[Vec<f64>]> {
        self.factor.as_ref().map(|f| f.rows.as_slice())
    }
}

/// Per-prefix `log f_{Y^n|X^n}(y^n|x^n)` for `n = 1..N`.
pub fn seq_gaussian_logpdf(x: &[f64], y: &[f64], rho: f64, sigma_z2: f64) -> Result<Vec<f64>> {
    if x.len() != y.len() {
        return domain(format!(
            "length mismatch: x has {}, y has {}",
            x.len(),
            y.len()
        ));
    }
    if x.is_empty() {
        return domain("empty sequence");
    }
    let mut chol = SeqCholesky::new(rho, sigma_z2)?;
    Ok(x.iter()
        .zip(y)
        .map(|(&xk, &yk)| chol.push(xk, yk))
        .collect())
}

/// Dense reference computations used by oracle checks only.
#[cfg(any(test, feature = "test-support"))]
pub mod dense {
    use std::f64::consts::PI;

    pub const MAX_DENSE: usize = 512;

    pub type Matrix = Vec<Vec<f64>>;

    pub fn ar1_matrix(n: usize, rho: f64) -> Matrix {
        assert!(
            n <= MAX_DENSE,
            "dense materialization capped at {MAX_DENSE}"
        );
        (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| rho.powi((i as i32 - j as i32).abs()))
                    .collect()
            })
            .collect()
    }

    /// `diag(x)·Σ·diag(x) + σ_z²·I`.
    pub fn conditional_cov(x: &[f64], rho: f64, sigma_z2: f64) -> Matrix {
        let mut c = ar1_matrix(x.len(), rho);
        for (i, row) in c.iter_mut().enumerate() {
            for (j, cij) in row.iter_mut().enumerate() {
                *cij *= x[i] * x[j];
            }
            row[i] += sigma_z2;
        }
        c
    }

    /// Plain Cholesky–Banachiewicz; `None` if not positive definite.
    pub fn cholesky(a: &Matrix) -> Option<Matrix> {
        let n = a.len();
        let mut l = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..=i {
                let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
                if i == j {
                    let d = a[i][i] - s;
                    if d <= 0.0 {
                        return None;
                    }
                    l[i][i] = d.sqrt();
                } else {
                    l[i][j] = (a[i][j] - s) / l[j][j];
                }
            }
        }
        Some(l)
    }

    pub fn logdet(a: &Matrix) -> f64 {
        let l = cholesky(a).expect("positive definite");
        2.0 * l.iter().enumerate().map(|(i, r)| r[i].ln()).sum::<f64>()
    }

    /// Solves `L z = b` by forward substitution.
    pub fn forward(l: &Matrix, b: &[f64]) -> Vec<f64> {
        let mut z = vec![0.0; b.len()];
        for i in 0..b.len() {
            let s: f64 = (0..i).map(|k| l[i][k] * z[k]).sum();
            z[i] = (b[i] - s) / l[i][i];
        }
        z
    }

    /// `vᵀ A⁻¹ v` via Cholesky.
    pub fn inverse_quadform(a: &Matrix, v: &[f64]) -> f64 {
        let l = cholesky(a).expect("positive definite");
        forward(&l, v).iter().map(|z| z * z).sum()
    }

    pub fn gaussian_logpdf(cov: &Matrix, y: &[f64]) -> f64 {
        let n = y.len() as f64;
        -0.5 * n * (2.0 * PI).ln() - 0.5 * logdet(cov) - 0.5 * inverse_quadform(cov, y)
    }

    /// Determinant by cofactor expansion (small n only).
    pub fn cofactor_det(a: &Matrix) -> f64 {
        let n = a.len();
        if n == 1 {
            return a[0][0];
        }
        (0..n)
            .map(|j| {
                let minor: Matrix = a[1..]
                    .iter()
                    .map(|row| {
                        row.iter()
                            .enumerate()
                            .filter(|&(k, _)| k != j)
                            .map(|(_, v)| *v)
                            .collect()
                    })
                    .collect();
                let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                sign * a[0][j] * cofactor_det(&minor)
            })
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::dense;
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn logdet_examples() {
        assert_eq!(ar1_logdet(5, 0.0).unwrap(), 0.0);
        assert_eq!(ar1_logdet(1, 0.9).unwrap(), 0.0);
        // cofactor expansion of the 3x3 matrix
        let det = dense::cofactor_det(&dense::ar1_matrix(3, 0.5));
        assert_relative_eq!(ar1_logdet(3, 0.5).unwrap(), det.ln(), epsilon = 1e-14);
        assert_relative_eq!(ar1_logdet(3, 0.5).unwrap(), -0.575364, epsilon = 1e-6);
    }

    #[test]
    fn rejects_unit_correlation() {
        assert!(ar1_logdet(3, 1.0).is_err());
        assert!(ar1_logdet(3, -0.1).is_err());
        assert!(ar1_logdet(0, 0.1).is_err());
        assert!(ar1_eigenvalues(3, 1.0).is_err());
    }

    #[test]
    fn logdet_matches_dense() {
        for &rho in &[0.0, 0.3, 0.5, 0.9] {
            for n in 1..=8 {
                let d = dense::logdet(&dense::ar1_matrix(n, rho));
                assert!((ar1_logdet(n, rho).unwrap() - d).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn quadform_examples() {
        assert_eq!(ar1_precision_quadform(0.0, &[1.0, 2.0, 3.0]).unwrap(), 14.0);
        assert_relative_eq!(
            ar1_precision_quadform(0.5, &[1.0, 0.0]).unwrap(),
            4.0 / 3.0,
            epsilon = 1e-14
        );
        assert_relative_eq!(
            ar1_precision_quadform(0.5, &[1.0, 1.0]).unwrap(),
            4.0 / 3.0,
            epsilon = 1e-14
        );
        assert!(ar1_precision_quadform(0.5, &[]).is_err());
    }

    #[test]
    fn quadform_matches_dense_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for &rho in &[0.0, 0.2, 0.5, 0.95] {
            for n in [1, 2, 3, 7, 40] {
                let v: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
                let want = dense::inverse_quadform(&dense::ar1_matrix(n, rho), &v);
                let got = ar1_precision_quadform(rho, &v).unwrap();
                assert_relative_eq!(got, want, max_relative = 1e-9);
            }
        }
    }

    #[test]
    fn eigen_examples() {
        assert_eq!(ar1_eigenvalues(3, 0.0).unwrap(), vec![1.0; 3]);
        let e = ar1_eigenvalues(2, 0.5).unwrap();
        assert_relative_eq!(e[0], 0.5, epsilon = 1e-13);
        assert_relative_eq!(e[1], 1.5, epsilon = 1e-13);
        let e = ar1_eigenvalues(50, 0.3).unwrap();
        assert!((e.iter().sum::<f64>() - 50.0).abs() < 1e-9);
    }

    #[test]
    fn eigen_bounds_and_logdet_consistency() {
        for &rho in &[0.1, 0.3, 0.7] {
            let lo = (1.0 - rho) / (1.0 + rho);
            let hi = (1.0 + rho) / (1.0 - rho);
            let mut last_gap = f64::INFINITY;
            for n in [10, 100, 400] {
                let e = ar1_eigenvalues(n, rho).unwrap();
                assert!(e.windows(2).all(|w| w[0] <= w[1]));
                assert!(e[0] > lo && e[n - 1] < hi);
                let sum_log: f64 = e.iter().map(|l| l.ln()).sum();
                assert!((sum_log - ar1_logdet(n, rho).unwrap()).abs() < 1e-9 * n as f64);
                let gap = (sum_log / n as f64 - (1.0 - rho * rho).ln()).abs();
                assert!(gap < last_gap);
                last_gap = gap;
            }
        }
    }

    #[test]
    fn seq_logpdf_noise_only_and_iid() {
        let y = [0.3, -1.2, 2.0, 0.1];
        let got = seq_gaussian_logpdf(&[0.0; 4], &y, 0.6, 2.0).unwrap();
        let mut acc = 0.0;
        for (k, &yk) in y.iter().enumerate() {
            acc += log_normal_pdf(yk, 2.0);
            assert!((got[k] - acc).abs() < 1e-12);
        }
        let x = [1.0, -3.0, 0.5, 10.0];
        let got = seq_gaussian_logpdf(&x, &y, 0.0, 0.7).unwrap();
        let mut acc = 0.0;
        for k in 0..4 {
            acc += log_normal_pdf(y[k], 0.7 + x[k] * x[k]);
            assert!((got[k] - acc).abs() < 1e-9);
        }
    }

    #[test]
    fn seq_logpdf_matches_dense_and_factor() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for &rho in &[0.5, 0.3, 0.9] {
            let n = if rho == 0.5 { 4 } else { 25 };
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(-10.0..10.0)).collect();
            let y: Vec<f64> = (0..n).map(|_| rng.random_range(-10.0..10.0)).collect();
            let mut chol = SeqCholesky::with_factor(rho, 1.3).unwrap();
            for k in 0..n {
                let lp = chol.push(x[k], y[k]);
                let cov = dense::conditional_cov(&x[..=k], rho, 1.3);
                let want = dense::gaussian_logpdf(&cov, &y[..=k]);
                assert!((lp - want).abs() < 1e-9, "n={} {lp} vs {want}", k + 1);
                // L·Lᵀ reproduces the leading principal submatrix
                let rows = chol.factor_rows().unwrap();
                for i in 0..=k {
                    for j in 0..=i {
                        let s: f64 = (0..=j).map(|m| rows[i][m] * rows[j][m]).sum();
                        assert_relative_eq!(s, cov[i][j], max_relative = 1e-10, epsilon = 1e-10);
                    }
                }
            }
        }
    }

    #[test]
    fn seq_logpdf_rejects_bad_input() {
        assert!(seq_gaussian_logpdf(&[1.0], &[1.0], 0.3, 0.0).is_err());
        assert!(seq_gaussian_logpdf(&[1.0, 2.0], &[1.0], 0.3, 1.0).is_err());
        assert!(seq_gaussian_logpdf(&[], &[], 0.3, 1.0).is_err());
    }
}
