//! Computable lower (ψ) and upper (φ) bounds on the information density
//! `ı(xⁿ; yⁿ) = log f(yⁿ|xⁿ) − log f(yⁿ)` of the Gauss–Markov fading channel
//! under Gaussian signaling.
//!
//! Both bounds replace the intractable output density `f(yⁿ)` by an
//! expectation under an i.i.d. reference fading law `Q = N(0, σ_h² I)`:
//!
//! ```text
//! ψ(xⁿ,yⁿ) = log f(yⁿ|xⁿ) − (1/s)·log E_Q[f(yⁿ|Hⁿ)^s] − (1/r)·log E_Q[L^r]
//! φ(xⁿ,yⁿ) = log f(yⁿ|xⁿ) − E_Q[log f(yⁿ|Hⁿ)]        + D(P‖Q)
//! ```
//!
//! with `L = dP/dQ`, `P = N(0, Σ)` the AR(1) fading law and `1/r + 1/s = 1`.
//! The envelope terms factorize per symbol and are evaluated by scalar
//! quadrature; the penalties depend only on `(n, ρ, σ_h², r)`.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::io::Write;
use std::sync::{Arc, OnceLock, RwLock};

use serde::{Deserialize, Serialize};

use crate::channel::ChannelParams;
use crate::error::{domain, Error, Result};
use crate::linalg::{ar1_eigenvalues, check_rho, log_normal_pdf, seq_gaussian_logpdf};
use crate::quadrature::{gauss_expectation, integrate_adaptive, DEFAULT_TOL};

/// Hölder order `r`, its conjugate `s = r/(r−1)` and the reference fading
/// variance `σ_h²`, validated against the correlation they are bound to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawReference", into = "RawReference")]
pub struct ReferenceParams {
    r: f64,
    s: f64,
    sigma_h2: f64,
    rho: f64,
}

#[derive(Serialize, Deserialize)]
struct RawReference {
    r: f64,
    sigma_h2: f64,
    rho: f64,
}

impl TryFrom<RawReference> for ReferenceParams {
    type Error = Error;

    fn try_from(raw: RawReference) -> Result<Self> {
        ReferenceParams::new(raw.r, raw.sigma_h2, raw.rho)
    }
}

impl From<ReferenceParams> for RawReference {
    fn from(p: ReferenceParams) -> Self {
        RawReference {
            r: p.r,
            sigma_h2: p.sigma_h2,
            rho: p.rho,
        }
    }
}

/// `((r−1)/r)·(1+ρ)/(1−ρ)`: `σ_h²` must exceed this.
pub fn feasibility_floor(r: f64, rho: f64) -> f64 {
    (r - 1.0) / r * (1.0 + rho) / (1.0 - rho)
}

pub fn is_feasible(r: f64, sigma_h2: f64, rho: f64) -> bool {
    r > 1.0 && (0.0..1.0).contains(&rho) && sigma_h2 > feasibility_floor(r, rho)
}

fn check_feasible(r: f64, sigma_h2: f64, rho: f64) -> Result<()> {
    check_rho(rho)?;
    if !(r > 1.0 && r.is_finite()) {
        return domain(format!("Hölder order r must be finite and > 1, got {r}"));
    }
    if !(sigma_h2 > 0.0 && sigma_h2.is_finite()) {
        return domain(format!("sigma_h2 must be positive, got {sigma_h2}"));
    }
    if !is_feasible(r, sigma_h2, rho) {
        return Err(Error::Infeasible {
            r,
            sigma_h2,
            rho,
            floor: feasibility_floor(r, rho),
        });
    }
    Ok(())
}

impl ReferenceParams {
    pub fn new(r: f64, sigma_h2: f64, rho: f64) -> Result<Self> {
        check_feasible(r, sigma_h2, rho)?;
        Ok(Self {
            r,
            s: r / (r - 1.0),
            sigma_h2,
            rho,
        })
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn sigma_h2(&self) -> f64 {
        self.sigma_h2
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub(crate) fn check_channel(&self, channel: &ChannelParams) -> Result<()> {
        channel.validate()?;
        if channel.rho != self.rho {
            return domain(format!(
                "reference parameters were validated for rho = {}, channel has rho = {}",
                self.rho, channel.rho
            ));
        }
        Ok(())
    }
}

/// Per-eigenvalue contribution to `log E_Q[L^r]`:
/// `(r/2)·log(σ_h²/λ) − ½·log(r·σ_h²/λ − (r−1))`.
fn renyi_eigen_term(lambda: f64, sigma_h2: f64, r: f64) -> Option<f64> {
    let arg = r * sigma_h2 / lambda - (r - 1.0);
    (arg > 0.0).then(|| 0.5 * r * (sigma_h2 / lambda).ln() - 0.5 * arg.ln())
}

/// `log E_Q[L(Hⁿ)^r]` by summing over the eigenvalues of `Σ`.
pub fn renyi_log_moment(n: usize, rho: f64, sigma_h2: f64, r: f64) -> Result<f64> {
    check_feasible(r, sigma_h2, rho)?;
    let mut acc = 0.0;
    for lambda in ar1_eigenvalues(n, rho)? {
        acc += renyi_eigen_term(lambda, sigma_h2, r).ok_or(Error::Infeasible {
            r,
            sigma_h2,
            rho,
            floor: feasibility_floor(r, rho),
        })?;
    }
    Ok(acc)
}

/// `((r−1)/r)·D_r(P‖Q) = (1/r)·log E_Q[L^r]`.
pub fn renyi_penalty(n: usize, rho: f64, sigma_h2: f64, r: f64) -> Result<f64> {
    Ok(renyi_log_moment(n, rho, sigma_h2, r)? / r)
}

/// `log E_Q[L(Hⁿ)^r]` for every `n = 1..=n_max` in O(n_max).
///
/// Uses `E_Q[L^r] = (σ_h^{2n}/|Σ|)^{r/2}·det(A)^{-1/2}` with the tridiagonal
/// `A = r·σ_h²·Σ⁻¹ − (r−1)·I`, whose determinant follows from the continuant
/// recurrence over the leading minors. Agrees with the eigenvalue route.
pub fn renyi_log_moment_trajectory(
    n_max: usize,
    rho: f64,
    sigma_h2: f64,
    r: f64,
) -> Result<Vec<f64>> {
    check_feasible(r, sigma_h2, rho)?;
    if n_max == 0 {
        return domain("trajectory length must be at least 1");
    }
    let infeasible = || Error::Infeasible {
        r,
        sigma_h2,
        rho,
        floor: feasibility_floor(r, rho),
    };
    let l1r = (-rho * rho).ln_1p();
    let c = r * sigma_h2 / (1.0 - rho * rho);
    let b2 = c * c * rho * rho;
    let a_end = c - (r - 1.0);
    let a_mid = c * (1.0 + rho * rho) - (r - 1.0);

    let mut out = Vec::with_capacity(n_max);
    let det1 = r * sigma_h2 - (r - 1.0);
    if det1 <= 0.0 {
        return Err(infeasible());
    }
    out.push(0.5 * r * sigma_h2.ln() - 0.5 * det1.ln());

    // q_k = E_k / E_{k-1} for the leading minors of diag(a_end, a_mid, a_mid, …)
    let mut q = a_end;
    let mut log_e = a_end.ln();
    for n in 2..=n_max {
        let last = a_end - b2 / q;
        if q <= 0.0 || last <= 0.0 {
            return Err(infeasible());
        }
        let log_det = log_e + last.ln();
        let nf = n as f64;
        out.push(0.5 * r * (nf * sigma_h2.ln() - (nf - 1.0) * l1r) - 0.5 * log_det);
        q = a_mid - b2 / q;
        log_e += q.ln();
    }
    Ok(out)
}

/// `D(P‖Q) = ½·[n/σ_h² − n + n·log σ_h² − (n−1)·log(1−ρ²)]`.
pub fn kl_penalty(n: usize, rho: f64, sigma_h2: f64) -> Result<f64> {
    check_rho(rho)?;
    if n == 0 {
        return domain("blocklength must be at least 1");
    }
    if !(sigma_h2 > 0.0 && sigma_h2.is_finite()) {
        return domain(format!("sigma_h2 must be positive, got {sigma_h2}"));
    }
    let nf = n as f64;
    Ok(0.5 * (nf / sigma_h2 - nf + nf * sigma_h2.ln() - (nf - 1.0) * (-rho * rho).ln_1p()))
}

/// AR(1) spectral density `(1−ρ²)/(1+ρ²−2ρ·cos ω)`.
pub fn ar1_spectral_density(rho: f64, omega: f64) -> f64 {
    (1.0 - rho * rho) / (1.0 + rho * rho - 2.0 * rho * omega.cos())
}

fn spectral_average<F: Fn(f64) -> f64>(rho: f64, g: F) -> Result<f64> {
    // even integrand: (1/2π)∫_{-π}^{π} = (1/π)∫_0^π
    let integrand = |w: f64| g(ar1_spectral_density(rho, w));
    Ok(integrate_adaptive(&integrand, &[0.0, 0.5 * PI, PI], 1e-11)? / PI)
}

/// `lim (1/n)·log E_Q[L^r]`: the spectral average of the per-eigenvalue
/// contribution of [`renyi_log_moment`] over `S_H(ω)`.
pub fn szego_rate(rho: f64, sigma_h2: f64, r: f64) -> Result<f64> {
    check_feasible(r, sigma_h2, rho)?;
    spectral_average(rho, |lambda| {
        0.5 * r * (sigma_h2 / lambda).ln() - 0.5 * (r * sigma_h2 / lambda - (r - 1.0)).ln()
    })
}

/// The alternative closed-form integrand
/// `½·log(r·σ_h²·S / (r·σ_h² − (r−1)·S))`, kept for comparison against
/// [`szego_rate`]. It does not agree with the finite-n moments: at `ρ = 0`,
/// `σ_h² = 1` it gives `½·log r` where every finite-n value is 0.
pub fn szego_rate_printed_form(rho: f64, sigma_h2: f64, r: f64) -> Result<f64> {
    check_feasible(r, sigma_h2, rho)?;
    spectral_average(rho, |s| {
        0.5 * (r * sigma_h2 * s / (r * sigma_h2 - (r - 1.0) * s)).ln()
    })
}

/// `log c_{s,v}` with `c_{s,v} = (s·(2πv)^{s−1})^{-1/2}`.
pub fn log_power_constant(s: f64, v: f64) -> f64 {
    -0.5 * (s.ln() + (s - 1.0) * (2.0 * PI * v).ln())
}

/// `c_{s,v}·φ_{v/s}(y)`, which equals `φ_v(y)^s`.
pub fn gaussian_power(y: f64, v: f64, s: f64) -> f64 {
    (log_power_constant(s, v) + log_normal_pdf(y, v / s)).exp()
}

/// `log ∫ c_{s,v(h)}·φ_{v(h)/s}(y)·φ_{σ_h²}(h) dh` with `v(h) = σ_z² + P₀h²`.
pub fn holder_envelope_term(y: f64, s: f64, sigma_h2: f64, channel: &ChannelParams) -> Result<f64> {
    let (sz2, p0) = (channel.sigma_z2, channel.p0);
    // φ_v(y) over v ≥ σ_z² peaks at v = max(σ_z², y²); scaling by its s-th
    // power keeps the integrand in (0, 1].
    let v_peak = sz2.max(y * y);
    let log_peak = s * log_normal_pdf(y, v_peak);
    let integrand = |h: f64| {
        let v = sz2 + p0 * h * h;
        (log_power_constant(s, v) + log_normal_pdf(y, v / s) - log_peak).exp()
    };
    let mean = gauss_expectation(integrand, sigma_h2, DEFAULT_TOL)?;
    Ok(log_peak + mean.ln())
}

/// Per-prefix `log E_Q[f(yⁿ|Hⁿ)^s]`.
pub fn holder_envelope_log(
    y: &[f64],
    params: &ReferenceParams,
    channel: &ChannelParams,
) -> Result<Vec<f64>> {
    if y.is_empty() {
        return domain("empty output sequence");
    }
    params.check_channel(channel)?;
    cumulative(y, |yk| {
        holder_envelope_term(yk, params.s, params.sigma_h2, channel)
    })
}

/// `E_{h~N(0,σ_h²)}[log φ_{v(h)}(y)]`.
pub fn jensen_envelope_term(y: f64, sigma_h2: f64, channel: &ChannelParams) -> Result<f64> {
    let (sz2, p0) = (channel.sigma_z2, channel.p0);
    gauss_expectation(
        |h| log_normal_pdf(y, sz2 + p0 * h * h),
        sigma_h2,
        DEFAULT_TOL,
    )
}

/// Per-prefix `E_Q[log f(yⁿ|Hⁿ)]`.
pub fn jensen_envelope_log(y: &[f64], sigma_h2: f64, channel: &ChannelParams) -> Result<Vec<f64>> {
    if y.is_empty() {
        return domain("empty output sequence");
    }
    channel.validate()?;
    if !(sigma_h2 > 0.0 && sigma_h2.is_finite()) {
        return domain(format!("sigma_h2 must be positive, got {sigma_h2}"));
    }
    cumulative(y, |yk| jensen_envelope_term(yk, sigma_h2, channel))
}

fn cumulative<F: Fn(f64) -> Result<f64>>(y: &[f64], term: F) -> Result<Vec<f64>> {
    let mut acc = 0.0;
    y.iter()
        .map(|&yk| {
            acc += term(yk)?;
            Ok(acc)
        })
        .collect()
}

/// Trajectory-wide penalty tables keyed by their exact parameters.
///
/// Penalties do not depend on the trace, so campaigns share one table per
/// `(ρ, σ_h², r)`; a longer request replaces a shorter cached table.
#[derive(Debug, Default)]
pub struct PenaltyCache {
    renyi: RwLock<HashMap<(u64, u64, u64), Arc<Vec<f64>>>>,
    kl: RwLock<HashMap<(u64, u64), Arc<Vec<f64>>>>,
}

impl PenaltyCache {
    pub fn global() -> &'static PenaltyCache {
        static CACHE: OnceLock<PenaltyCache> = OnceLock::new();
        CACHE.get_or_init(PenaltyCache::default)
    }

    /// Rényi penalties `(1/r)·log E_Q[L^r]` for `n = 1..=n_max` (at least).
    pub fn renyi(&self, params: &ReferenceParams, n_max: usize) -> Result<Arc<Vec<f64>>> {
        let key = (
            params.rho.to_bits(),
            params.sigma_h2.to_bits(),
            params.r.to_bits(),
        );
        if let Some(t) = self.renyi.read().unwrap().get(&key) {
            if t.len() >= n_max {
                return Ok(Arc::clone(t));
            }
        }
        let table: Vec<f64> =
            renyi_log_moment_trajectory(n_max, params.rho, params.sigma_h2, params.r)?
                .into_iter()
                .map(|m| m / params.r)
                .collect();
        let mut map = self.renyi.write().unwrap();
        let entry = map.entry(key).or_insert_with(|| Arc::new(Vec::new()));
        if entry.len() < table.len() {
            *entry = Arc::new(table);
        }
        Ok(Arc::clone(entry))
    }

    /// KL penalties `D(P‖Q)` for `n = 1..=n_max` (at least).
    pub fn kl(&self, rho: f64, sigma_h2: f64, n_max: usize) -> Result<Arc<Vec<f64>>> {
        let key = (rho.to_bits(), sigma_h2.to_bits());
        if let Some(t) = self.kl.read().unwrap().get(&key) {
            if t.len() >= n_max {
                return Ok(Arc::clone(t));
            }
        }
        let table = (1..=n_max.max(1))
            .map(|n| kl_penalty(n, rho, sigma_h2))
            .collect::<Result<Vec<_>>>()?;
        let mut map = self.kl.write().unwrap();
        let entry = map.entry(key).or_insert_with(|| Arc::new(Vec::new()));
        if entry.len() < table.len() {
            *entry = Arc::new(table);
        }
        Ok(Arc::clone(entry))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundKind {
    Lower,
    Upper,
}

impl BoundKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            BoundKind::Lower => "lower",
            BoundKind::Upper => "upper",
        }
    }
}

/// Per-prefix bound values for one `(x, y)` pair; index `i` is `n = i + 1`.
///
/// `envelope` holds the envelope contribution actually subtracted:
/// `(1/s)·log E_Q[f^s]` for the lower bound, `E_Q[log f]` for the upper.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundTrajectory {
    pub kind: BoundKind,
    pub log_cond: Vec<f64>,
    pub envelope: Vec<f64>,
    pub penalty: Vec<f64>,
    pub value: Vec<f64>,
}

impl BoundTrajectory {
    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(out);
        w.write_record(["n", "log_cond", "envelope", "penalty", "value", "kind"])?;
        for i in 0..self.len() {
            w.write_record([
                (i + 1).to_string(),
                self.log_cond[i].to_string(),
                self.envelope[i].to_string(),
                self.penalty[i].to_string(),
                self.value[i].to_string(),
                self.kind.as_str().to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn check_lengths(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return domain(format!("length mismatch: x {}, y {}", x.len(), y.len()));
    }
    if x.is_empty() {
        return domain("empty sequence");
    }
    Ok(())
}

/// ψ for every prefix of `(x, y)`.
pub fn lower_bound_trajectory(
    x: &[f64],
    y: &[f64],
    params: &ReferenceParams,
    channel: &ChannelParams,
) -> Result<BoundTrajectory> {
    check_lengths(x, y)?;
    params.check_channel(channel)?;
    let log_cond = seq_gaussian_logpdf(x, y, channel.rho, channel.sigma_z2)?;
    let envelope: Vec<f64> = holder_envelope_log(y, params, channel)?
        .into_iter()
        .map(|e| e / params.s)
        .collect();
    let penalty = PenaltyCache::global().renyi(params, x.len())?[..x.len()].to_vec();
    let value = (0..x.len())
        .map(|i| log_cond[i] - envelope[i] - penalty[i])
        .collect();
    Ok(BoundTrajectory {
        kind: BoundKind::Lower,
        log_cond,
        envelope,
        penalty,
        value,
    })
}

/// φ for every prefix of `(x, y)`.
pub fn upper_bound_trajectory(
    x: &[f64],
    y: &[f64],
    sigma_h2: f64,
    channel: &ChannelParams,
) -> Result<BoundTrajectory> {
    check_lengths(x, y)?;
    let log_cond = seq_gaussian_logpdf(x, y, channel.rho, channel.sigma_z2)?;
    let envelope = jensen_envelope_log(y, sigma_h2, channel)?;
    let penalty = PenaltyCache::global().kl(channel.rho, sigma_h2, x.len())?[..x.len()].to_vec();
    let value = (0..x.len())
        .map(|i| log_cond[i] + penalty[i] - envelope[i])
        .collect();
    Ok(BoundTrajectory {
        kind: BoundKind::Upper,
        log_cond,
        envelope,
        penalty,
        value,
    })
}
