//! Gaussian expectations and adaptive quadrature.
//!
//! [`gauss_expectation`] first runs Gauss–Hermite with node doubling
//! (32 → 64 → 128 → 256). Integrands such as `φ_{σ²+P₀h²}(y)` at high SNR have
//! a feature of width `σ/√P₀` around `h = 0` that polynomial rules resolve
//! only very slowly, so when the doubling schedule does not settle the same
//! expectation is recomputed by globally adaptive Gauss–Kronrod (7/15) on the
//! two half-lines, truncated where the Gaussian weight underflows.

use std::collections::BinaryHeap;
use std::f64::consts::PI;
use std::sync::OnceLock;

use crate::error::{Error, Result};

pub const DEFAULT_TOL: f64 = 1e-9;

/// Node counts tried by the Gauss–Hermite stage.
pub const GH_SCHEDULE: [usize; 4] = [32, 64, 128, 256];

/// Subinterval budget of the adaptive stage.
const MAX_SUBINTERVALS: usize = 4000;

/// `φ(38) ≈ 1e-314`; the Gaussian weight is zero in double precision beyond.
const TRUNCATION_SIGMAS: f64 = 38.0;

/// Gauss–Hermite rule for `E[f(Z)]`, `Z ~ N(0, 1)`.
#[derive(Debug, Clone)]
pub struct HermiteRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl HermiteRule {
    /// Builds the `n`-point rule from the Jacobi matrix of the probabilists'
    /// Hermite polynomials (zero diagonal, off-diagonal `√k`): nodes by
    /// bisection, weights `1 / Σ_j p̂_j(x)²` over the orthonormal polynomials.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let diag = vec![0.0; n];
        let off2: Vec<f64> = (1..n).map(|k| k as f64).collect();
        // Gershgorin bound
        let bound = 2.0 * (n as f64).sqrt() + 1.0;
        let nodes = crate::linalg::tridiagonal_eigenvalues(&diag, &off2, -bound, bound);
        let weights = nodes
            .iter()
            .map(|&x| {
                let (mut p_prev, mut p) = (0.0, 1.0);
                let mut sum = 1.0;
                for j in 0..n - 1 {
                    let jf = j as f64;
                    let next = (x * p - jf.sqrt() * p_prev) / (jf + 1.0).sqrt();
                    p_prev = p;
                    p = next;
                    sum += p * p;
                }
                1.0 / sum
            })
            .collect();
        Self { nodes, weights }
    }

    /// Cached rule for one of the schedule sizes (built on first use).
    pub fn cached(n: usize) -> &'static HermiteRule {
        static RULES: [OnceLock<HermiteRule>; 4] = [const { OnceLock::new() }; 4];
        let idx = GH_SCHEDULE
            .iter()
            .position(|&k| k == n)
            .expect("only schedule sizes are cached");
        RULES[idx].get_or_init(|| HermiteRule::new(n))
    }

    /// `(Σ wᵢ f(σ zᵢ), Σ wᵢ |f(σ zᵢ)|)`.
    fn apply<F: Fn(f64) -> f64>(&self, f: &F, sigma: f64) -> (f64, f64) {
        let mut sum = 0.0;
        let mut abs = 0.0;
        for (z, w) in self.nodes.iter().zip(&self.weights) {
            let v = w * f(sigma * z);
            sum += v;
            abs += v.abs();
        }
        (sum, abs)
    }
}

fn converged(delta: f64, est: f64, abs_scale: f64, tol: f64) -> bool {
    delta <= tol * est.abs().max(f64::EPSILON * abs_scale)
}

/// `∫ f(h) φ_{σ²}(h) dh` to relative tolerance `tol`.
pub fn gauss_expectation<F: Fn(f64) -> f64>(f: F, sigma2: f64, tol: f64) -> Result<f64> {
    match gauss_hermite_expectation(&f, sigma2, tol) {
        Ok(v) => Ok(v),
        Err(Error::Convergence { .. }) => adaptive_gauss_expectation(&f, sigma2, tol),
        Err(e) => Err(e),
    }
}

fn check_expectation_args(sigma2: f64, tol: f64) -> Result<()> {
    if !(sigma2 > 0.0 && sigma2.is_finite()) {
        return Err(Error::Domain(format!(
            "variance must be positive, got {sigma2}"
        )));
    }
    if !(tol > 0.0) {
        return Err(Error::Domain(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    Ok(())
}

/// Gauss–Hermite stage only: node doubling until successive estimates agree.
pub fn gauss_hermite_expectation<F: Fn(f64) -> f64>(f: &F, sigma2: f64, tol: f64) -> Result<f64> {
    check_expectation_args(sigma2, tol)?;
    let sigma = sigma2.sqrt();
    let mut prev = HermiteRule::cached(GH_SCHEDULE[0]).apply(f, sigma).0;
    for &n in &GH_SCHEDULE[1..] {
        let (est, abs) = HermiteRule::cached(n).apply(f, sigma);
        if !est.is_finite() {
            return Err(Error::Convergence {
                previous: prev,
                last: est,
                nodes: n,
            });
        }
        if converged((est - prev).abs(), est, abs, tol) {
            return Ok(est);
        }
        if n == *GH_SCHEDULE.last().unwrap() {
            return Err(Error::Convergence {
                previous: prev,
                last: est,
                nodes: n,
            });
        }
        prev = est;
    }
    unreachable!()
}

/// Adaptive stage only: Gauss–Kronrod on `[-38σ, 0]` and `[0, 38σ]`.
pub fn adaptive_gauss_expectation<F: Fn(f64) -> f64>(f: &F, sigma2: f64, tol: f64) -> Result<f64> {
    check_expectation_args(sigma2, tol)?;
    let sigma = sigma2.sqrt();
    let norm = 1.0 / (2.0 * PI * sigma2).sqrt();
    let g = |h: f64| f(h) * norm * (-0.5 * h * h / sigma2).exp();
    let l = TRUNCATION_SIGMAS * sigma;
    integrate_adaptive(&g, &[-l, -sigma, 0.0, sigma, l], tol)
}

// Gauss–Kronrod 7/15 abscissae and weights.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Debug, Clone, Copy)]
struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
    abs: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Segment {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    let mut abs = WGK[7] * fc.abs();
    for j in 0..7 {
        let dx = h * XGK[j];
        let f1 = f(c - dx);
        let f2 = f(c + dx);
        k += WGK[j] * (f1 + f2);
        abs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            g += WG[j / 2] * (f1 + f2);
        }
    }
    Segment {
        a,
        b,
        value: k * h,
        error: ((k - g) * h).abs(),
        abs: abs * h.abs(),
    }
}

/// Globally adaptive Gauss–Kronrod over consecutive breakpoints, bisecting
/// the segment with the largest error estimate until the summed estimate is
/// below `tol` relative to the integral.
pub fn integrate_adaptive<F: Fn(f64) -> f64>(f: &F, breakpoints: &[f64], tol: f64) -> Result<f64> {
    let mut heap: BinaryHeap<Segment> = breakpoints
        .windows(2)
        .filter(|w| w[1] > w[0])
        .map(|w| gk15(f, w[0], w[1]))
        .collect();
    let mut evaluated = heap.len();
    loop {
        let (value, error, abs) = heap.iter().fold((0.0, 0.0, 0.0), |acc, s| {
            (acc.0 + s.value, acc.1 + s.error, acc.2 + s.abs)
        });
        if !value.is_finite() {
            return Err(Error::Convergence {
                previous: value,
                last: value,
                nodes: 15 * evaluated,
            });
        }
        if converged(error, value, abs, tol) {
            return Ok(value);
        }
        let worst = match heap.pop() {
            Some(s) => s,
            None => return Ok(0.0),
        };
        let mid = 0.5 * (worst.a + worst.b);
        if evaluated >= MAX_SUBINTERVALS || mid <= worst.a || mid >= worst.b {
            return Err(Error::Convergence {
                previous: value - error,
                last: value,
                nodes: 15 * evaluated,
            });
        }
        heap.push(gk15(f, worst.a, mid));
        heap.push(gk15(f, mid, worst.b));
        evaluated += 2;
    }
}
