//! Variable-length stop-feedback decoding with the certified lower bound ψ.
//!
//! After each received symbol the decoder updates ψ for every codeword and
//! stops at the first `n` where some codeword reaches the threshold `γ`. A
//! unique crossing codeword is the decision; several simultaneous crossings
//! are an error, and no crossing by `n_max` is reported as truncation.

use std::collections::BTreeMap;
use std::io::Write;
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{holder_envelope_term, PenaltyCache, ReferenceParams};
use crate::channel::{
    derive_seed, gen_codebook, rng_from, ChannelParams, Codebook, Trace, STREAM_CODEBOOK,
    STREAM_MESSAGE,
};
use crate::error::{domain, Result};
use crate::linalg::SeqCholesky;
use crate::stats::clopper_pearson;

/// `log((M−1)/ε)`, natural log.
pub fn threshold(m_count: usize, epsilon: f64) -> Result<f64> {
    if m_count < 2 {
        return domain(format!(
            "threshold needs at least two messages, got {m_count}"
        ));
    }
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return domain(format!("epsilon must be in (0, 1], got {epsilon}"));
    }
    Ok(((m_count - 1) as f64 / epsilon).ln())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecoderConfig {
    pub m_count: usize,
    pub epsilon: f64,
    pub gamma: f64,
    pub n_max: usize,
    pub channel: ChannelParams,
    pub reference: ReferenceParams,
}

impl DecoderConfig {
    /// Configuration with `gamma = threshold(m_count, epsilon)`.
    pub fn new(
        m_count: usize,
        epsilon: f64,
        n_max: usize,
        channel: ChannelParams,
        reference: ReferenceParams,
    ) -> Result<Self> {
        let gamma = threshold(m_count, epsilon)?;
        let c = Self {
            m_count,
            epsilon,
            gamma,
            n_max,
            channel,
            reference,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn validate(&self) -> Result<()> {
        threshold(self.m_count, self.epsilon)?;
        if self.n_max == 0 {
            return domain("n_max must be positive");
        }
        if self.gamma.is_nan() {
            return domain("gamma is NaN");
        }
        self.reference.check_channel(&self.channel)
    }

    /// Whether `gamma` is high enough for the `epsilon` error guarantee.
    pub fn guarantees_reliability(&self) -> bool {
        threshold(self.m_count, self.epsilon).is_ok_and(|t| self.gamma >= t)
    }
}

/// Incremental ψ for a fixed set of candidate inputs.
///
/// The envelope and penalty terms depend only on `yⁿ` and `n`, so they are
/// computed once per step; each candidate only extends its own conditional
/// density in O(1).
#[derive(Debug, Clone)]
pub struct PsiTracker {
    reference: ReferenceParams,
    channel: ChannelParams,
    penalty: Arc<Vec<f64>>,
    conditionals: Vec<SeqCholesky>,
    envelope: f64,
    psi: Vec<f64>,
    n: usize,
    n_max: usize,
}

impl PsiTracker {
    pub fn new(
        candidates: usize,
        n_max: usize,
        channel: &ChannelParams,
        reference: &ReferenceParams,
    ) -> Result<Self> {
        reference.check_channel(channel)?;
        if candidates == 0 || n_max == 0 {
            return domain("need at least one candidate and one step");
        }
        let seq = SeqCholesky::new(channel.rho, channel.sigma_z2)?;
        Ok(Self {
            reference: *reference,
            channel: *channel,
            penalty: PenaltyCache::global().renyi(reference, n_max)?,
            conditionals: vec![seq; candidates],
            envelope: 0.0,
            psi: vec![0.0; candidates],
            n: 0,
            n_max,
        })
    }

    /// Number of symbols consumed.
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Consumes output `y`, with `symbol(m)` the `n`-th input of candidate
    /// `m`, and returns ψ for every candidate.
    pub fn step<F: Fn(usize) -> f64>(&mut self, symbol: F, y: f64) -> Result<&[f64]> {
        if self.n >= self.n_max {
            return domain(format!("tracker horizon {} exceeded", self.n_max));
        }
        self.envelope += holder_envelope_term(
            y,
            self.reference.s(),
            self.reference.sigma_h2(),
            &self.channel,
        )? / self.reference.s();
        let shared = self.envelope + self.penalty[self.n];
        for (m, (chol, psi)) in self
            .conditionals
            .iter_mut()
            .zip(self.psi.iter_mut())
            .enumerate()
        {
            *psi = chol.push(symbol(m), y) - shared;
        }
        self.n += 1;
        Ok(&self.psi)
    }

    pub fn values(&self) -> &[f64] {
        &self.psi
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    Correct,
    WrongMessage,
    Ambiguous,
    Truncated,
}

impl Outcome {
    pub fn as_str(&self) -> &'static str {
        match self {
            Outcome::Correct => "correct",
            Outcome::WrongMessage => "wrong_message",
            Outcome::Ambiguous => "ambiguous",
            Outcome::Truncated => "truncated",
        }
    }

    /// Truncation counts as an error in the headline rate.
    pub fn is_error(&self) -> bool {
        !matches!(self, Outcome::Correct)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoppingRecord {
    /// Transmitted message, 0-based.
    pub message: usize,
    /// Stopping time, `None` when truncated at `n_max`.
    pub tau: Option<usize>,
    pub decoded: Option<usize>,
    pub outcome: Outcome,
    /// Largest ψ of the transmitted codeword over the evaluated prefix.
    pub trajectory_peak: f64,
    pub seed: u64,
}

/// ψ of the transmitted codeword and of its strongest competitor, per `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialTrajectory {
    pub seed: u64,
    pub message: usize,
    pub gamma: f64,
    pub psi_sent: Vec<f64>,
    pub psi_best_other: Vec<f64>,
}

impl TrialTrajectory {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(out);
        w.write_record(["n", "psi_sent", "psi_best_other", "gamma"])?;
        for (i, (a, b)) in self.psi_sent.iter().zip(&self.psi_best_other).enumerate() {
            w.write_record([
                (i + 1).to_string(),
                a.to_string(),
                b.to_string(),
                self.gamma.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn run_trial(
    codebook: &Codebook,
    message: usize,
    config: &DecoderConfig,
    seed: u64,
    record: bool,
) -> Result<(StoppingRecord, Option<TrialTrajectory>)> {
    config.validate()?;
    if codebook.m_count() != config.m_count {
        return domain(format!(
            "codebook has {} messages, config expects {}",
            codebook.m_count(),
            config.m_count
        ));
    }
    if codebook.horizon() < config.n_max {
        return domain(format!(
            "codebook horizon {} shorter than n_max {}",
            codebook.horizon(),
            config.n_max
        ));
    }
    if message >= config.m_count {
        return domain(format!(
            "message {message} out of range 0..{}",
            config.m_count
        ));
    }
    let trace = Trace::simulate(
        &codebook.row(message)[..config.n_max],
        &config.channel,
        seed,
    )?;
    let mut tracker = PsiTracker::new(
        config.m_count,
        config.n_max,
        &config.channel,
        &config.reference,
    )?;
    let mut traj = record.then(|| TrialTrajectory {
        seed,
        message,
        gamma: config.gamma,
        psi_sent: Vec::new(),
        psi_best_other: Vec::new(),
    });
    let mut peak = f64::NEG_INFINITY;
    for (k, &yk) in trace.y.iter().enumerate() {
        let psi = tracker.step(|m| codebook.row(m)[k], yk)?;
        peak = peak.max(psi[message]);
        if let Some(t) = traj.as_mut() {
            t.psi_sent.push(psi[message]);
            let other = psi
                .iter()
                .enumerate()
                .filter(|&(m, _)| m != message)
                .map(|(_, &v)| v)
                .fold(f64::NEG_INFINITY, f64::max);
            t.psi_best_other.push(other);
        }
        let mut crossers = psi
            .iter()
            .enumerate()
            .filter(|&(_, &v)| v >= config.gamma)
            .map(|(m, _)| m);
        if let Some(first) = crossers.next() {
            let (decoded, outcome) = match crossers.next() {
                Some(_) => (None, Outcome::Ambiguous),
                None if first == message => (Some(first), Outcome::Correct),
                None => (Some(first), Outcome::WrongMessage),
            };
            let rec = StoppingRecord {
                message,
                tau: Some(k + 1),
                decoded,
                outcome,
                trajectory_peak: peak,
                seed,
            };
            return Ok((rec, traj));
        }
    }
    let rec = StoppingRecord {
        message,
        tau: None,
        decoded: None,
        outcome: Outcome::Truncated,
        trajectory_peak: peak,
        seed,
    };
    Ok((rec, traj))
}

/// Sends `codebook` row `message` (0-based) through the channel with fading
/// and noise drawn from `seed`, and decodes it.
pub fn decode_trial(
    codebook: &Codebook,
    message: usize,
    config: &DecoderConfig,
    seed: u64,
) -> Result<StoppingRecord> {
    Ok(run_trial(codebook, message, config, seed, false)?.0)
}

/// As [`decode_trial`], also returning the ψ trajectories.
pub fn decode_trial_traced(
    codebook: &Codebook,
    message: usize,
    config: &DecoderConfig,
    seed: u64,
) -> Result<(StoppingRecord, TrialTrajectory)> {
    let (rec, traj) = run_trial(codebook, message, config, seed, true)?;
    Ok((rec, traj.expect("recorded")))
}

/// Aggregate of a campaign. The error count includes truncations.
#[derive(Debug, Clone, PartialEq)]
pub struct CampaignStats {
    pub trials: u64,
    pub errors: u64,
    pub wrong_message: u64,
    pub ambiguous: u64,
    pub truncations: u64,
    pub error_rate: f64,
    /// 95% Clopper–Pearson interval on `error_rate`.
    pub ci_low: f64,
    pub ci_high: f64,
    pub truncation_rate: f64,
    /// Stopping-time counts over non-truncated trials.
    pub tau_histogram: BTreeMap<usize, u64>,
    /// Mean stopping time over non-truncated trials (NaN if none stopped).
    pub mean_tau: f64,
}

impl CampaignStats {
    pub fn from_records(records: &[StoppingRecord]) -> Result<Self> {
        if records.is_empty() {
            return domain("no trials");
        }
        let count = |o: Outcome| records.iter().filter(|r| r.outcome == o).count() as u64;
        let (wrong_message, ambiguous, truncations) = (
            count(Outcome::WrongMessage),
            count(Outcome::Ambiguous),
            count(Outcome::Truncated),
        );
        let trials = records.len() as u64;
        let errors = wrong_message + ambiguous + truncations;
        let (ci_low, ci_high) = clopper_pearson(errors, trials, 0.95)?;
        let mut tau_histogram = BTreeMap::new();
        let mut tau_sum = 0u64;
        for tau in records.iter().filter_map(|r| r.tau) {
            *tau_histogram.entry(tau).or_insert(0) += 1;
            tau_sum += tau as u64;
        }
        let stopped = trials - truncations;
        Ok(Self {
            trials,
            errors,
            wrong_message,
            ambiguous,
            truncations,
            error_rate: errors as f64 / trials as f64,
            ci_low,
            ci_high,
            truncation_rate: truncations as f64 / trials as f64,
            tau_histogram,
            mean_tau: if stopped == 0 {
                f64::NAN
            } else {
                tau_sum as f64 / stopped as f64
            },
        })
    }

    pub fn write_histogram_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(out);
        w.write_record(["tau", "count"])?;
        for (tau, count) in &self.tau_histogram {
            w.write_record([tau.to_string(), count.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_summary_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(out);
        w.write_record([
            "trials",
            "errors",
            "truncations",
            "mean_tau",
            "ci_low",
            "ci_high",
            "error_rate",
            "truncation_rate",
            "wrong_message",
            "ambiguous",
        ])?;
        w.write_record([
            self.trials.to_string(),
            self.errors.to_string(),
            self.truncations.to_string(),
            self.mean_tau.to_string(),
            self.ci_low.to_string(),
            self.ci_high.to_string(),
            self.error_rate.to_string(),
            self.truncation_rate.to_string(),
            self.wrong_message.to_string(),
            self.ambiguous.to_string(),
        ])?;
        w.flush()?;
        Ok(())
    }
}

/// Result of [`run_campaign_detailed`].
#[derive(Debug, Clone, PartialEq)]
pub struct Campaign {
    pub stats: CampaignStats,
    pub records: Vec<StoppingRecord>,
    /// Trajectories of the first trials, in trial order.
    pub trajectories: Vec<TrialTrajectory>,
}

/// Runs `trials` independent trials, each with its own codebook, message,
/// fading and noise derived from `master_seed` and the trial index.
pub fn run_campaign(
    config: &DecoderConfig,
    trials: usize,
    master_seed: u64,
) -> Result<CampaignStats> {
    Ok(run_campaign_detailed(config, trials, master_seed, 0)?.stats)
}

/// As [`run_campaign`], keeping every record and the ψ trajectories of the
/// first `traced` trials.
pub fn run_campaign_detailed(
    config: &DecoderConfig,
    trials: usize,
    master_seed: u64,
    traced: usize,
) -> Result<Campaign> {
    config.validate()?;
    if trials == 0 {
        return domain("trials must be positive");
    }
    log::info!(
        "campaign: {trials} trials, M = {}, gamma = {:.4}, n_max = {}",
        config.m_count,
        config.gamma,
        config.n_max
    );
    let results: Vec<(StoppingRecord, Option<TrialTrajectory>)> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let seed = derive_seed(master_seed, i as u64);
            let codebook = gen_codebook(
                config.m_count,
                config.n_max,
                config.channel.p0,
                derive_seed(seed, STREAM_CODEBOOK),
            )?;
            let message =
                rng_from(derive_seed(seed, STREAM_MESSAGE)).random_range(0..config.m_count);
            run_trial(&codebook, message, config, seed, i < traced)
        })
        .collect::<Result<_>>()?;
    let (records, trajectories): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    let stats = CampaignStats::from_records(&records)?;
    log::info!(
        "campaign done: {} errors ({} truncated), mean tau {:.2}",
        stats.errors,
        stats.truncations,
        stats.mean_tau
    );
    Ok(Campaign {
        stats,
        records,
        trajectories: trajectories.into_iter().flatten().collect(),
    })
}
