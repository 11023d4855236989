//! Gauss–Markov fading, Gaussian random codebooks and the scalar fading
//! channel `y_k = h_k·x_k + z_k`.
//!
//! Every sampler is a pure function of its arguments and a 64-bit seed.
//! Independent streams are obtained with [`derive_seed`], never by sharing a
//! generator.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

/// SplitMix64 finalizer over `(master, index)`.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub(crate) fn rng_from(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub(crate) fn std_normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

// sub-stream tags below a trial seed
pub(crate) const STREAM_FADING: u64 = 1;
pub(crate) const STREAM_NOISE: u64 = 2;
pub(crate) const STREAM_CODEBOOK: u64 = 3;
pub(crate) const STREAM_MESSAGE: u64 = 4;
pub(crate) const STREAM_INPUT: u64 = 5;

/// Physical channel constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    /// Fading correlation, in `[0, 1)`.
    pub rho: f64,
    /// Noise variance.
    pub sigma_z2: f64,
    /// Per-symbol signal power.
    pub p0: f64,
}

impl ChannelParams {
    pub fn new(rho: f64, sigma_z2: f64, p0: f64) -> Result<Self> {
        let c = Self { rho, sigma_z2, p0 };
        c.validate()?;
        Ok(c)
    }

    /// Channel at a given linear SNR `p0 / sigma_z2`.
    pub fn with_snr(rho: f64, sigma_z2: f64, snr: f64) -> Result<Self> {
        Self::new(rho, sigma_z2, snr * sigma_z2)
    }

    pub fn validate(&self) -> Result<()> {
        crate::linalg::check_rho(self.rho)?;
        if !(self.sigma_z2 > 0.0 && self.sigma_z2.is_finite()) {
            return domain(format!(
                "sigma_z2 must be positive and finite, got {}",
                self.sigma_z2
            ));
        }
        if !(self.p0 >= 0.0 && self.p0.is_finite()) {
            return domain(format!(
                "p0 must be nonnegative and finite, got {}",
                self.p0
            ));
        }
        Ok(())
    }

    pub fn snr(&self) -> f64 {
        self.p0 / self.sigma_z2
    }
}

/// `(h_1, …, h_n)` of the stationary AR(1) process started from `h_0 ~ N(0, 1)`.
///
/// `rho = 1` is accepted here (a constant path); the bounds reject it.
pub fn sample_fading(n: usize, rho: f64, seed: u64) -> Result<Vec<f64>> {
    if n == 0 {
        return domain("fading length must be at least 1");
    }
    if !(0.0..=1.0).contains(&rho) {
        return domain(format!("rho must lie in [0, 1], got {rho}"));
    }
    let mut rng = rng_from(seed);
    let innov = (1.0 - rho * rho).sqrt();
    let mut h = std_normal(&mut rng);
    Ok((0..n)
        .map(|_| {
            h = rho * h + innov * std_normal(&mut rng);
            h
        })
        .collect())
}

/// `y_k = h_k·x_k + z_k` for a given noise realization.
pub fn apply_channel(x: &[f64], h: &[f64], z: &[f64]) -> Result<Vec<f64>> {
    if x.len() != h.len() || x.len() != z.len() {
        return domain(format!(
            "length mismatch: x {}, h {}, z {}",
            x.len(),
            h.len(),
            z.len()
        ));
    }
    Ok(x.iter()
        .zip(h)
        .zip(z)
        .map(|((xk, hk), zk)| hk * xk + zk)
        .collect())
}

/// i.i.d. `N(0, sigma2)` noise.
pub fn sample_noise(n: usize, sigma2: f64, seed: u64) -> Vec<f64> {
    let mut rng = rng_from(seed);
    let sd = sigma2.sqrt();
    (0..n).map(|_| sd * std_normal(&mut rng)).collect()
}

/// Passes `x` through fading `h` with fresh `N(0, sigma_z2)` noise.
pub fn transmit(x: &[f64], h: &[f64], sigma_z2: f64, seed: u64) -> Result<Vec<f64>> {
    if x.len() != h.len() {
        return domain(format!("length mismatch: x {}, h {}", x.len(), h.len()));
    }
    if !(sigma_z2 > 0.0 && sigma_z2.is_finite()) {
        return domain(format!("sigma_z2 must be positive, got {sigma_z2}"));
    }
    apply_channel(x, h, &sample_noise(x.len(), sigma_z2, seed))
}

/// `m_count` Gaussian codewords of length `horizon`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    m_count: usize,
    horizon: usize,
    p0: f64,
    seed: u64,
    symbols: Vec<f64>,
}

impl Codebook {
    pub fn m_count(&self) -> usize {
        self.m_count
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn p0(&self) -> f64 {
        self.p0
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Codeword `m` (0-based).
    pub fn row(&self, m: usize) -> &[f64] {
        &self.symbols[m * self.horizon..(m + 1) * self.horizon]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.symbols.chunks_exact(self.horizon)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(out);
        w.write_record(["message", "index", "x"])?;
        for (m, row) in self.rows().enumerate() {
            for (k, x) in row.iter().enumerate() {
                w.write_record([m.to_string(), (k + 1).to_string(), x.to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Entries i.i.d. `N(0, p0)`, deterministic in `seed`.
pub fn gen_codebook(m_count: usize, horizon: usize, p0: f64, seed: u64) -> Result<Codebook> {
    if m_count == 0 || horizon == 0 {
        return domain("codebook needs at least one message and one symbol");
    }
    if !(p0 >= 0.0 && p0.is_finite()) {
        return domain(format!("p0 must be nonnegative, got {p0}"));
    }
    let mut rng = rng_from(seed);
    let sd = p0.sqrt();
    let symbols = (0..m_count * horizon)
        .map(|_| sd * std_normal(&mut rng))
        .collect();
    Ok(Codebook {
        m_count,
        horizon,
        p0,
        seed,
        symbols,
    })
}

/// One channel realization.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub x: Vec<f64>,
    pub h: Vec<f64>,
    pub y: Vec<f64>,
}

impl Trace {
    /// Sends `x` through the channel with fading and noise drawn from
    /// sub-streams of `seed`.
    pub fn simulate(x: &[f64], channel: &ChannelParams, seed: u64) -> Result<Self> {
        channel.validate()?;
        let h = sample_fading(x.len(), channel.rho, derive_seed(seed, STREAM_FADING))?;
        let y = transmit(x, &h, channel.sigma_z2, derive_seed(seed, STREAM_NOISE))?;
        Ok(Self {
            x: x.to_vec(),
            h,
            y,
        })
    }

    /// Random-coding trace: `x` i.i.d. `N(0, p0)` of length `n`.
    pub fn random(n: usize, channel: &ChannelParams, seed: u64) -> Result<Self> {
        let x = sample_noise(n, channel.p0, derive_seed(seed, STREAM_INPUT));
        Self::simulate(&x, channel, seed)
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(out);
        w.write_record(["index", "x", "h", "y"])?;
        for k in 0..self.len() {
            w.write_record([
                (k + 1).to_string(),
                self.x[k].to_string(),
                self.h[k].to_string(),
                self.y[k].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}
