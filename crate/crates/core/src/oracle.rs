//! Brute-force estimators used to validate the closed forms at small `n`.
//!
//! These are deliberately naive: plain Monte Carlo over the true or the
//! reference fading law, or scalar quadrature where the channel is memoryless.
//! Sampling is split into a fixed number of shards with derived seeds and
//! merged in shard order, so every estimate is a deterministic function of its
//! seed regardless of thread count.

use std::io::Write;

use rayon::prelude::*;

use crate::channel::{derive_seed, rng_from, std_normal, ChannelParams};
use crate::error::{domain, Result};
use crate::linalg::{log_normal_pdf, Ar1Covariance};
use crate::quadrature::gauss_expectation;

/// Longest output prefix accepted by [`mc_log_output_density`].
pub const MAX_DENSITY_LEN: usize = 12;
/// Longest fading vector accepted by [`mc_renyi_moment`].
pub const MAX_RENYI_LEN: usize = 8;
pub const MIN_DENSITY_SAMPLES: usize = 10_000;

const SHARDS: usize = 32;
const MIN_ESS: f64 = 100.0;

#[derive(Debug, Clone, PartialEq)]
pub struct McEstimate {
    pub value: f64,
    pub std_error: f64,
    pub sample_count: usize,
    pub seed: u64,
    /// Set when the estimate is statistically unreliable.
    pub warning: Option<String>,
}

impl McEstimate {
    /// `|value − reference| ≤ k·std_error`.
    pub fn agrees_with(&self, reference: f64, k: f64) -> bool {
        (self.value - reference).abs() <= k * self.std_error
    }
}

pub fn write_estimates_csv<W: Write>(estimates: &[McEstimate], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(["value", "std_error", "samples", "seed"])?;
    for e in estimates {
        w.write_record([
            e.value.to_string(),
            e.std_error.to_string(),
            e.sample_count.to_string(),
            e.seed.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Streaming `Σ exp(l)` and `Σ exp(2l)` relative to a running maximum.
#[derive(Debug, Clone, Copy)]
struct LogSumExp {
    max: f64,
    s1: f64,
    s2: f64,
    count: usize,
}

impl Default for LogSumExp {
    fn default() -> Self {
        Self {
            max: f64::NEG_INFINITY,
            s1: 0.0,
            s2: 0.0,
            count: 0,
        }
    }
}

impl LogSumExp {
    fn push(&mut self, l: f64) {
        if l > self.max {
            let scale = (self.max - l).exp();
            self.s1 = self.s1 * scale + 1.0;
            self.s2 = self.s2 * scale * scale + 1.0;
            self.max = l;
        } else {
            let w = (l - self.max).exp();
            self.s1 += w;
            self.s2 += w * w;
        }
        self.count += 1;
    }

    fn merge(&mut self, other: &LogSumExp) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let max = self.max.max(other.max);
        let (a, b) = ((self.max - max).exp(), (other.max - max).exp());
        self.s1 = self.s1 * a + other.s1 * b;
        self.s2 = self.s2 * a * a + other.s2 * b * b;
        self.max = max;
        self.count += other.count;
    }

    /// Log of the sample mean with its delta-method standard error.
    fn log_mean(&self) -> (f64, f64, f64) {
        let n = self.count as f64;
        let m1 = self.s1 / n;
        let m2 = self.s2 / n;
        let var = (m2 - m1 * m1).max(0.0);
        let se = (var / n).sqrt() / m1;
        let ess = self.s1 * self.s1 / self.s2;
        (self.max + m1.ln(), se, ess)
    }
}

fn shard_sizes(samples: usize) -> Vec<usize> {
    let base = samples / SHARDS;
    let extra = samples % SHARDS;
    (0..SHARDS).map(|i| base + usize::from(i < extra)).collect()
}

/// Estimates `log f_{Yⁿ}(yⁿ)` for every prefix `n = 1..=y.len()` from the
/// same fading paths.
pub fn mc_log_output_density_prefixes(
    y: &[f64],
    channel: &ChannelParams,
    samples: usize,
    seed: u64,
) -> Result<Vec<McEstimate>> {
    channel.validate()?;
    let n = y.len();
    if n == 0 || n > MAX_DENSITY_LEN {
        return domain(format!(
            "output length must be in 1..={MAX_DENSITY_LEN}, got {n}"
        ));
    }
    if samples < MIN_DENSITY_SAMPLES {
        return domain(format!(
            "at least {MIN_DENSITY_SAMPLES} samples required, got {samples}"
        ));
    }
    let (rho, sz2, p0) = (channel.rho, channel.sigma_z2, channel.p0);
    let innov = (1.0 - rho * rho).sqrt();
    let shards: Vec<Vec<LogSumExp>> = shard_sizes(samples)
        .into_par_iter()
        .enumerate()
        .map(|(shard, count)| {
            let mut rng = rng_from(derive_seed(seed, shard as u64));
            let mut acc = vec![LogSumExp::default(); n];
            for _ in 0..count {
                let mut h = std_normal(&mut rng);
                let mut l = 0.0;
                for k in 0..n {
                    h = rho * h + innov * std_normal(&mut rng);
                    l += log_normal_pdf(y[k], sz2 + p0 * h * h);
                    acc[k].push(l);
                }
            }
            acc
        })
        .collect();
    let mut total = vec![LogSumExp::default(); n];
    for shard in &shards {
        for (t, s) in total.iter_mut().zip(shard) {
            t.merge(s);
        }
    }
    Ok(total
        .iter()
        .map(|acc| {
            let (value, se, ess) = acc.log_mean();
            McEstimate {
                value,
                std_error: se,
                sample_count: samples,
                seed,
                warning: (ess < MIN_ESS)
                    .then(|| format!("effective sample size {ess:.1} below {MIN_ESS}")),
            }
        })
        .collect())
}

/// Estimates `log f_{Yⁿ}(yⁿ) = log E_{Hⁿ~P}[Π_k φ_{σ_z²+P₀H_k²}(y_k)]`.
pub fn mc_log_output_density(
    y: &[f64],
    channel: &ChannelParams,
    samples: usize,
    seed: u64,
) -> Result<McEstimate> {
    Ok(mc_log_output_density_prefixes(y, channel, samples, seed)?
        .pop()
        .expect("nonempty"))
}

/// Exact information density of the memoryless (`ρ = 0`) channel, with each
/// per-symbol output density computed by quadrature over the fading.
pub fn iid_exact_info_density(
    x: &[f64],
    y: &[f64],
    channel: &ChannelParams,
    tol: f64,
) -> Result<f64> {
    channel.validate()?;
    if channel.rho != 0.0 {
        return domain(format!(
            "exact information density needs rho = 0, got {}",
            channel.rho
        ));
    }
    if x.len() != y.len() || x.is_empty() {
        return domain(format!(
            "length mismatch or empty: x {}, y {}",
            x.len(),
            y.len()
        ));
    }
    let (sz2, p0) = (channel.sigma_z2, channel.p0);
    let mut total = 0.0;
    for (&xk, &yk) in x.iter().zip(y) {
        let peak = log_normal_pdf(yk, sz2.max(yk * yk));
        let marginal = gauss_expectation(
            |h| (log_normal_pdf(yk, sz2 + p0 * h * h) - peak).exp(),
            1.0,
            tol,
        )?;
        total += log_normal_pdf(yk, sz2 + xk * xk) - (peak + marginal.ln());
    }
    Ok(total)
}

fn check_reference(n: usize, rho: f64, sigma_h2: f64, samples: usize) -> Result<Ar1Covariance> {
    let cov = Ar1Covariance::new(n, rho)?;
    if !(sigma_h2 > 0.0 && sigma_h2.is_finite()) {
        return domain(format!("sigma_h2 must be positive, got {sigma_h2}"));
    }
    if samples < 2 {
        return domain("at least two samples required");
    }
    Ok(cov)
}

/// `log dP/dQ (h)` for `P = N(0, Σ)`, `Q = N(0, σ_h² I)`.
fn log_likelihood_ratio(cov: &Ar1Covariance, sigma_h2: f64, h: &[f64]) -> f64 {
    let n = h.len() as f64;
    let sq: f64 = h.iter().map(|v| v * v).sum();
    -0.5 * (cov.logdet() + cov.precision_quadform(h)) + 0.5 * (n * sigma_h2.ln() + sq / sigma_h2)
}

/// Estimates `E_Q[L(Hⁿ)^r]` by sampling `Hⁿ ~ Q`.
///
/// Warns when the largest 0.1% of the samples carry more than half of the
/// total mass (the estimator is then dominated by its tail).
pub fn mc_renyi_moment(
    n: usize,
    rho: f64,
    sigma_h2: f64,
    r: f64,
    samples: usize,
    seed: u64,
) -> Result<McEstimate> {
    if n > MAX_RENYI_LEN {
        return domain(format!(
            "fading length must be at most {MAX_RENYI_LEN}, got {n}"
        ));
    }
    if !crate::bounds::is_feasible(r, sigma_h2, rho) {
        return Err(crate::error::Error::Infeasible {
            r,
            sigma_h2,
            rho,
            floor: crate::bounds::feasibility_floor(r, rho),
        });
    }
    let cov = check_reference(n, rho, sigma_h2, samples)?;
    let sd = sigma_h2.sqrt();
    let shards: Vec<Vec<f64>> = shard_sizes(samples)
        .into_par_iter()
        .enumerate()
        .map(|(shard, count)| {
            let mut rng = rng_from(derive_seed(seed, shard as u64));
            let mut h = vec![0.0; n];
            (0..count)
                .map(|_| {
                    for v in h.iter_mut() {
                        *v = sd * std_normal(&mut rng);
                    }
                    (r * log_likelihood_ratio(&cov, sigma_h2, &h)).exp()
                })
                .collect()
        })
        .collect();
    let mut values: Vec<f64> = shards.into_iter().flatten().collect();
    let (mean, se) = mean_and_se(&values);
    let total: f64 = values.iter().sum();
    let top = (values.len() as f64 * 0.001).ceil() as usize;
    let cut = values.len() - top;
    let last = values.len() - 1;
    values.select_nth_unstable_by(cut.min(last), |a, b| a.total_cmp(b));
    let tail: f64 = values[cut..].iter().sum();
    let warning = (tail > 0.5 * total).then(|| {
        format!(
            "heavy tail: top 0.1% of samples carry {:.0}% of the mass",
            100.0 * tail / total
        )
    });
    Ok(McEstimate {
        value: mean,
        std_error: se,
        sample_count: samples,
        seed,
        warning,
    })
}

/// Estimates `D(P‖Q)` by sampling `Hⁿ ~ P` from the AR(1) recursion.
pub fn mc_kl_divergence(
    n: usize,
    rho: f64,
    sigma_h2: f64,
    samples: usize,
    seed: u64,
) -> Result<McEstimate> {
    let cov = check_reference(n, rho, sigma_h2, samples)?;
    let innov = (1.0 - rho * rho).sqrt();
    let shards: Vec<(f64, f64, usize)> = shard_sizes(samples)
        .into_par_iter()
        .enumerate()
        .map(|(shard, count)| {
            let mut rng = rng_from(derive_seed(seed, shard as u64));
            let mut h = vec![0.0; n];
            let (mut s, mut s2) = (0.0, 0.0);
            for _ in 0..count {
                let mut prev = std_normal(&mut rng);
                for v in h.iter_mut() {
                    prev = rho * prev + innov * std_normal(&mut rng);
                    *v = prev;
                }
                let l = log_likelihood_ratio(&cov, sigma_h2, &h);
                s += l;
                s2 += l * l;
            }
            (s, s2, count)
        })
        .collect();
    let (s, s2, count) = shards
        .iter()
        .fold((0.0, 0.0, 0), |a, b| (a.0 + b.0, a.1 + b.1, a.2 + b.2));
    let nf = count as f64;
    let mean = s / nf;
    let var = (s2 / nf - mean * mean).max(0.0) * nf / (nf - 1.0);
    Ok(McEstimate {
        value: mean,
        std_error: (var / nf).sqrt(),
        sample_count: samples,
        seed,
        warning: None,
    })
}

fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}
