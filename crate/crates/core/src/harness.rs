//! Experiment configuration and the batch commands behind the `vlsf` binary.
//!
//! Each command reads an [`ExperimentConfig`], writes CSV files plus a
//! `manifest.toml` into `<out_dir>/<command>/`, and is a pure function of
//! the configuration: re-running it reproduces every file byte for byte.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bounds::{
    lower_bound_trajectory, renyi_log_moment_trajectory, szego_rate, szego_rate_printed_form,
    upper_bound_trajectory, ReferenceParams,
};
use crate::channel::{derive_seed, ChannelParams, Trace};
use crate::decoder::{run_campaign_detailed, DecoderConfig};
use crate::error::{Error, Result};
use crate::tuner::{grid_search, Objective, SigmaScale, TuneGrid};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceSection {
    pub r: f64,
    pub sigma_h2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecoderSection {
    pub m_count: usize,
    pub epsilon: f64,
    /// Defaults to `log((m_count − 1)/epsilon)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TuneSection {
    pub r_values: Vec<f64>,
    pub sigma_h2_values: Vec<f64>,
    #[serde(default)]
    pub sigma_scale: SigmaScale,
    #[serde(default = "default_objective")]
    pub objective: Objective,
}

fn default_objective() -> Objective {
    Objective::MeanBoundAtN
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SzegoSection {
    pub n_values: Vec<usize>,
}

impl Default for SzegoSection {
    fn default() -> Self {
        Self {
            n_values: vec![1, 2, 5, 10, 20, 50, 100, 200, 500, 1000, 2000],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub master_seed: u64,
    pub out_dir: PathBuf,
    /// Decoding trials for `simulate`.
    pub trials: usize,
    /// Decoding horizon for `simulate`.
    pub n_max: usize,
    /// Trace length for `bounds`, `tune` and `trace`.
    pub n_eval: usize,
    /// Number of traces for `bounds` and `tune`.
    pub trace_count: usize,
    /// Trials whose ψ trajectories `simulate` writes out.
    #[serde(default = "default_traced")]
    pub traced_trials: usize,
    pub channel: ChannelParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<ReferenceSection>,
    pub decoder: DecoderSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tune: Option<TuneSection>,
    #[serde(default)]
    pub szego: SzegoSection,
}

fn default_traced() -> usize {
    5
}

impl Default for ExperimentConfig {
    /// Desk-scale run at ρ = 0.3, SNR 100.
    fn default() -> Self {
        Self {
            master_seed: 1,
            out_dir: PathBuf::from("out"),
            trials: 200,
            n_max: 400,
            n_eval: 50,
            trace_count: 20,
            traced_trials: default_traced(),
            channel: ChannelParams {
                rho: 0.3,
                sigma_z2: 1.0,
                p0: 100.0,
            },
            reference: Some(ReferenceSection {
                r: 4.0,
                sigma_h2: 1.4625,
            }),
            decoder: DecoderSection {
                m_count: 16,
                epsilon: 0.05,
                gamma: None,
            },
            tune: Some(TuneSection {
                r_values: crate::tuner::logspace(1.1, 8.0, 12),
                sigma_h2_values: crate::tuner::linspace(1.05, 4.0, 16),
                sigma_scale: SigmaScale::FloorMultiple,
                objective: Objective::MeanBoundAtN,
            }),
            szego: SzegoSection::default(),
        }
    }
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let c: Self = toml::from_str(text).map_err(|e| config_err(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| config_err(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.channel
            .validate()
            .map_err(|e| config_err(e.to_string()))?;
        for (name, v) in [
            ("trials", self.trials),
            ("n_max", self.n_max),
            ("n_eval", self.n_eval),
            ("trace_count", self.trace_count),
        ] {
            if v == 0 {
                return Err(config_err(format!("{name} must be positive")));
            }
        }
        Ok(())
    }

    /// Reference parameters bound to the channel correlation.
    pub fn reference_params(&self) -> Result<ReferenceParams> {
        let r = self
            .reference
            .ok_or_else(|| config_err("missing [reference] section"))?;
        ReferenceParams::new(r.r, r.sigma_h2, self.channel.rho)
    }

    pub fn decoder_config(&self) -> Result<DecoderConfig> {
        let d = &self.decoder;
        let config = DecoderConfig::new(
            d.m_count,
            d.epsilon,
            self.n_max,
            self.channel,
            self.reference_params()?,
        )
        .map_err(|e| match e {
            Error::Domain(msg) => config_err(msg),
            other => other,
        })?;
        Ok(match d.gamma {
            Some(g) => config.with_gamma(g),
            None => config,
        })
    }

    pub fn tune_grid(&self) -> Result<TuneGrid> {
        let t = self
            .tune
            .as_ref()
            .ok_or_else(|| config_err("missing [tune] section"))?;
        let grid = TuneGrid {
            r_values: t.r_values.clone(),
            sigma_h2_values: t.sigma_h2_values.clone(),
            sigma_scale: t.sigma_scale,
            objective: t.objective,
            n_eval: self.n_eval,
            trace_count: self.trace_count,
            master_seed: self.master_seed,
        };
        grid.validate().map_err(|e| config_err(e.to_string()))?;
        Ok(grid)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Bounds,
    Simulate,
    Tune,
    Szego,
    Trace,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Bounds => "bounds",
            Command::Simulate => "simulate",
            Command::Tune => "tune",
            Command::Szego => "szego",
            Command::Trace => "trace",
        }
    }
}

/// What a command wrote, plus human-readable summary lines.
#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub command: Command,
    pub dir: PathBuf,
    pub files: Vec<PathBuf>,
    pub summary: Vec<String>,
}

struct Output {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Output {
    fn create(config: &ExperimentConfig, command: Command) -> Result<Self> {
        let dir = config.out_dir.join(command.name());
        // per-trace/per-trial files from a larger earlier run would linger
        for sub in ["traces", "trajectories"] {
            let stale = dir.join(sub);
            if stale.is_dir() {
                fs::remove_dir_all(&stale)?;
            }
        }
        fs::create_dir_all(&dir)?;
        Ok(Self {
            dir,
            files: Vec::new(),
        })
    }

    fn write<F: FnOnce(&mut BufWriter<File>) -> Result<()>>(
        &mut self,
        name: &str,
        body: F,
    ) -> Result<()> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        let mut w = BufWriter::new(File::create(&path)?);
        body(&mut w)?;
        w.flush()?;
        self.files.push(PathBuf::from(name));
        Ok(())
    }

    fn finish(
        mut self,
        config: &ExperimentConfig,
        command: Command,
        summary: Vec<String>,
    ) -> Result<RunReport> {
        #[derive(Serialize)]
        struct Manifest<'a> {
            command: &'a str,
            version: &'a str,
            files: Vec<String>,
            summary: &'a [String],
            config: &'a ExperimentConfig,
        }
        let manifest = Manifest {
            command: command.name(),
            version: VERSION,
            files: self.files.iter().map(|p| p.display().to_string()).collect(),
            summary: &summary,
            config,
        };
        let text = toml::to_string(&manifest).map_err(|e| config_err(e.to_string()))?;
        self.write("manifest.toml", |w| Ok(w.write_all(text.as_bytes())?))?;
        Ok(RunReport {
            command,
            dir: self.dir,
            files: self.files,
            summary,
        })
    }
}

pub fn run(command: Command, config: &ExperimentConfig) -> Result<RunReport> {
    config.validate()?;
    log::info!("running {} (seed {})", command.name(), config.master_seed);
    match command {
        Command::Bounds => cmd_bounds(config),
        Command::Simulate => cmd_simulate(config),
        Command::Tune => cmd_tune(config),
        Command::Szego => cmd_szego(config),
        Command::Trace => cmd_trace(config),
    }
}

fn trace_seed(config: &ExperimentConfig, t: usize) -> u64 {
    derive_seed(config.master_seed, t as u64)
}

/// Per-trace ψ and φ trajectories and their average over the traces.
///
/// Uses `[reference]` if present, otherwise the maximizer of `[tune]`.
pub fn cmd_bounds(config: &ExperimentConfig) -> Result<RunReport> {
    let params = match config.reference {
        Some(_) => config.reference_params()?,
        None => {
            let (r, sigma_h2, _) = grid_search(&config.tune_grid()?, &config.channel)?.best();
            ReferenceParams::new(r, sigma_h2, config.channel.rho)?
        }
    };
    let mut out = Output::create(config, Command::Bounds)?;
    let n = config.n_eval;
    let mut sum_psi = vec![0.0; n];
    let mut sum_phi = vec![0.0; n];
    for t in 0..config.trace_count {
        let trace = Trace::random(n, &config.channel, trace_seed(config, t))?;
        let lower = lower_bound_trajectory(&trace.x, &trace.y, &params, &config.channel)?;
        let upper = upper_bound_trajectory(&trace.x, &trace.y, params.sigma_h2(), &config.channel)?;
        for i in 0..n {
            sum_psi[i] += lower.value[i];
            sum_phi[i] += upper.value[i];
        }
        out.write(&format!("traces/trace_{t:04}.csv"), |w| trace.write_csv(w))?;
        out.write(&format!("traces/trace_{t:04}_lower.csv"), |w| {
            lower.write_csv(w)
        })?;
        out.write(&format!("traces/trace_{t:04}_upper.csv"), |w| {
            upper.write_csv(w)
        })?;
    }
    let count = config.trace_count as f64;
    out.write("averaged.csv", |w| {
        let mut c = csv_writer(w);
        c.write_record(["n", "mean_psi", "mean_phi"])?;
        for i in 0..n {
            c.write_record([
                (i + 1).to_string(),
                (sum_psi[i] / count).to_string(),
                (sum_phi[i] / count).to_string(),
            ])?;
        }
        c.flush()?;
        Ok(())
    })?;
    let summary = vec![format!(
        "r = {}, sigma_h2 = {}: mean psi[{n}] = {:.4}, mean phi[{n}] = {:.4}",
        params.r(),
        params.sigma_h2(),
        sum_psi[n - 1] / count,
        sum_phi[n - 1] / count
    )];
    out.finish(config, Command::Bounds, summary)
}

/// Decoding campaign: stopping-time histogram, summary, per-trial records
/// and the ψ trajectories of the first trials.
pub fn cmd_simulate(config: &ExperimentConfig) -> Result<RunReport> {
    let decoder = config.decoder_config()?;
    let campaign = run_campaign_detailed(
        &decoder,
        config.trials,
        config.master_seed,
        config.traced_trials,
    )?;
    let mut out = Output::create(config, Command::Simulate)?;
    out.write("histogram.csv", |w| campaign.stats.write_histogram_csv(w))?;
    out.write("summary.csv", |w| campaign.stats.write_summary_csv(w))?;
    out.write("records.csv", |w| {
        let mut c = csv_writer(w);
        c.write_record([
            "trial",
            "seed",
            "message",
            "tau",
            "decoded",
            "outcome",
            "trajectory_peak",
        ])?;
        for (i, rec) in campaign.records.iter().enumerate() {
            c.write_record([
                i.to_string(),
                rec.seed.to_string(),
                rec.message.to_string(),
                rec.tau.map_or_else(String::new, |t| t.to_string()),
                rec.decoded.map_or_else(String::new, |d| d.to_string()),
                rec.outcome.as_str().to_string(),
                rec.trajectory_peak.to_string(),
            ])?;
        }
        c.flush()?;
        Ok(())
    })?;
    for (i, traj) in campaign.trajectories.iter().enumerate() {
        out.write(&format!("trajectories/trial_{i:04}.csv"), |w| {
            traj.write_csv(w)
        })?;
    }
    let s = &campaign.stats;
    let summary = vec![
        format!("gamma = {:.4}, trials = {}, mean tau = {:.3}", decoder.gamma, s.trials, s.mean_tau),
        format!(
            "errors = {} (wrong {}, ambiguous {}, truncated {}), error rate {:.5}, 95% CI [{:.5}, {:.5}]",
            s.errors, s.wrong_message, s.ambiguous, s.truncations, s.error_rate, s.ci_low, s.ci_high
        ),
    ];
    out.finish(config, Command::Simulate, summary)
}

/// Scored `(r, σ_h²)` table and its maximizer.
pub fn cmd_tune(config: &ExperimentConfig) -> Result<RunReport> {
    let result = grid_search(&config.tune_grid()?, &config.channel)?;
    let mut out = Output::create(config, Command::Tune)?;
    out.write("tune.csv", |w| result.write_csv(w))?;
    let (r, sigma_h2, score) = result.best();
    let summary = vec![format!(
        "maximizer: r = {r}, sigma_h2 = {sigma_h2}, score = {score:.6}"
    )];
    out.finish(config, Command::Tune, summary)
}

/// Per-symbol Rényi moment against its spectral limit, with the alternative
/// integrand alongside for comparison.
pub fn cmd_szego(config: &ExperimentConfig) -> Result<RunReport> {
    let params = config.reference_params()?;
    let (r, sigma_h2, rho) = (params.r(), params.sigma_h2(), params.rho());
    let limit = szego_rate(rho, sigma_h2, r)?;
    let printed = szego_rate_printed_form(rho, sigma_h2, r)?;
    let divergent = (printed - limit).abs() > 1e-9 * limit.abs().max(1.0);
    let n_values = &config.szego.n_values;
    if n_values.is_empty() || n_values.contains(&0) {
        return Err(config_err("szego.n_values must be nonempty and positive"));
    }
    let n_top = *n_values.iter().max().expect("nonempty");
    let moments = renyi_log_moment_trajectory(n_top, rho, sigma_h2, r)?;
    let mut out = Output::create(config, Command::Szego)?;
    out.write("szego.csv", |w| {
        let mut c = csv_writer(w);
        c.write_record(["n", "rate", "limit", "rel_error", "printed_form"])?;
        for &n in n_values {
            let rate = moments[n - 1] / n as f64;
            let rel = if limit == 0.0 {
                (rate - limit).abs()
            } else {
                ((rate - limit) / limit).abs()
            };
            c.write_record([
                n.to_string(),
                rate.to_string(),
                limit.to_string(),
                rel.to_string(),
                printed.to_string(),
            ])?;
        }
        c.flush()?;
        Ok(())
    })?;
    out.write("limit.csv", |w| {
        let mut c = csv_writer(w);
        c.write_record([
            "rho",
            "sigma_h2",
            "r",
            "limit",
            "printed_form",
            "printed_form_divergent",
        ])?;
        c.write_record([
            rho.to_string(),
            sigma_h2.to_string(),
            r.to_string(),
            limit.to_string(),
            printed.to_string(),
            divergent.to_string(),
        ])?;
        c.flush()?;
        Ok(())
    })?;
    let mut summary = vec![format!(
        "limit = {limit:.8}, rate at n = {n_top}: {:.8}",
        moments[n_top - 1] / n_top as f64
    )];
    if divergent {
        summary.push(format!(
            "printed-form integrand gives {printed:.8}, which differs from the limit"
        ));
    }
    out.finish(config, Command::Szego, summary)
}

/// One random-coding channel realization of length `n_eval`.
pub fn cmd_trace(config: &ExperimentConfig) -> Result<RunReport> {
    let trace = Trace::random(config.n_eval, &config.channel, config.master_seed)?;
    let mut out = Output::create(config, Command::Trace)?;
    out.write("trace.csv", |w| trace.write_csv(w))?;
    let summary = vec![format!(
        "{} symbols at seed {}",
        trace.len(),
        config.master_seed
    )];
    out.finish(config, Command::Trace, summary)
}

fn csv_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_round_trips() {
        let c = ExperimentConfig::default();
        let text = c.to_toml_string().unwrap();
        assert_eq!(ExperimentConfig::from_toml_str(&text).unwrap(), c);
        let mut g = c.clone();
        g.decoder.gamma = Some(f64::INFINITY);
        g.tune.as_mut().unwrap().objective = Objective::MeanCrossingTime {
            m_count: 4,
            epsilon: 0.1,
            n_max: 50,
        };
        let text = g.to_toml_string().unwrap();
        assert_eq!(ExperimentConfig::from_toml_str(&text).unwrap(), g);
    }

    #[test]
    fn config_errors_are_classified() {
        let bad = ExperimentConfig::from_toml_str("master_seed = 1\nunknown = 2").unwrap_err();
        assert_eq!(bad.exit_code(), 2);
        let mut c = ExperimentConfig::default();
        c.trials = 0;
        assert_eq!(c.validate().unwrap_err().exit_code(), 2);
        let mut c = ExperimentConfig::default();
        c.reference = Some(ReferenceSection {
            r: 4.0,
            sigma_h2: 1.0,
        });
        assert_eq!(c.reference_params().unwrap_err().exit_code(), 3);
        c.reference = None;
        assert_eq!(c.decoder_config().unwrap_err().exit_code(), 2);
    }
}
