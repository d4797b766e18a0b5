//! Synthetic Ramsey measurements: trace synthesis with shot noise, spectra,
//! symmetric four-line fits and conversion of the splittings to offset charge.

mod fit;
mod inversion;
mod spectrum;
mod trace_io;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, invalid, Error, Result};
use crate::hamiltonian::Transition;

pub use fit::{
    fit_peaks, fit_time_domain, line_amplitudes, select_model, FitOptions, InitStrategy, PeakFit, PeakModel, P_AMPLITUDE, P_BASELINE,
    P_CENTER, P_DF1, P_DF2, P_FWHM, RESOLVE_SIGMA,
};
pub use inversion::{charge_config_from_fit, track_series, ChargeEstimate, TrackOptions, TrackPoint, JUMP_SIGMA};
pub use spectrum::{spectrum, Spectrum, Window};
pub use trace_io::{read_trace, write_trace};

/// Acquisition settings of one Ramsey experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Drive detuning, MHz.
    pub detuning_mhz: f64,
    pub shots: u64,
    /// Free-evolution delays, us, strictly increasing.
    pub delays_us: Vec<f64>,
    pub t2_us: f64,
    /// Wall-clock time spent per delay point, ms.
    pub acquisition_ms: f64,
}

impl Default for ExperimentConfig {
    /// 401 delays over 20 us (50 ns step, 10 MHz Nyquist), 2500 shots,
    /// 3.5 MHz detuning, T2 = 15 us.
    fn default() -> Self {
        Self {
            detuning_mhz: 3.5,
            shots: 2500,
            delays_us: uniform_delays(401, 0.05),
            t2_us: 15.0,
            acquisition_ms: 100.0,
        }
    }
}

/// `n` delays starting at zero with spacing `step_us`.
pub fn uniform_delays(n: usize, step_us: f64) -> Vec<f64> {
    (0..n).map(|i| i as f64 * step_us).collect()
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        ensure_finite("detuning_mhz", self.detuning_mhz)?;
        ensure_finite("t2_us", self.t2_us)?;
        ensure_finite("acquisition_ms", self.acquisition_ms)?;
        if self.shots == 0 {
            return Err(invalid("shots", "at least one shot per delay is required"));
        }
        if self.t2_us <= 0.0 {
            return Err(invalid("t2_us", format!("must be positive, got {}", self.t2_us)));
        }
        if self.acquisition_ms < 0.0 {
            return Err(invalid("acquisition_ms", "must be non-negative"));
        }
        if self.delays_us.len() < 2 {
            return Err(invalid("delays_us", "need at least two delays"));
        }
        for w in self.delays_us.windows(2) {
            ensure_finite("delays_us", w[0])?;
            ensure_finite("delays_us", w[1])?;
            if w[1] <= w[0] {
                return Err(invalid(
                    "delays_us",
                    format!("delays must be strictly increasing ({} then {})", w[0], w[1]),
                ));
            }
        }
        Ok(())
    }

    /// Largest delay step, us.
    pub fn max_step_us(&self) -> f64 {
        self.delays_us.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }

    /// Nyquist frequency of the coarsest step, MHz.
    pub fn nyquist_mhz(&self) -> f64 {
        0.5 / self.max_step_us()
    }

    /// Total acquisition time of one trace, minutes.
    pub fn trace_duration_min(&self) -> f64 {
        self.delays_us.len() as f64 * self.acquisition_ms / 60_000.0
    }

    /// Checks that branch offsets `freqs_mhz` neither fold through zero nor
    /// exceed the Nyquist frequency once added to the detuning.
    pub fn check_aliasing(&self, freqs_mhz: &[f64]) -> Result<()> {
        let fmax = freqs_mhz.iter().fold(0.0f64, |a, f| a.max(f.abs()));
        if self.detuning_mhz <= fmax {
            return Err(Error::Aliasing(format!(
                "detuning {} MHz does not exceed the largest branch offset {} MHz; lines fold through zero",
                self.detuning_mhz, fmax
            )));
        }
        let ny = self.nyquist_mhz();
        if self.detuning_mhz + fmax >= ny {
            return Err(Error::Aliasing(format!(
                "highest line {} MHz reaches the Nyquist frequency {} MHz of the delay grid",
                self.detuning_mhz + fmax,
                ny
            )));
        }
        Ok(())
    }
}

/// Measured excited-state probabilities versus delay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RamseyTrace {
    pub delays_us: Vec<f64>,
    pub probabilities: Vec<f64>,
    pub config: ExperimentConfig,
    pub mode: Transition,
    /// Start time of the acquisition, minutes.
    pub time_min: f64,
}

impl RamseyTrace {
    pub fn validate(&self) -> Result<()> {
        if self.delays_us.len() != self.probabilities.len() {
            return Err(Error::LengthMismatch(format!(
                "{} delays but {} probabilities",
                self.delays_us.len(),
                self.probabilities.len()
            )));
        }
        for &p in &self.probabilities {
            if !(0.0..=1.0).contains(&p) {
                return Err(invalid("probabilities", format!("{p} lies outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// Branch weights must be non-negative and sum to one.
pub fn check_weights(weights: &[f64; 4]) -> Result<()> {
    for &w in weights {
        ensure_finite("weights", w)?;
        if w < 0.0 {
            return Err(invalid("weights", format!("negative weight {w}")));
        }
    }
    let s: f64 = weights.iter().sum();
    if (s - 1.0).abs() > 1e-9 {
        return Err(invalid("weights", format!("weights sum to {s}, not 1")));
    }
    Ok(())
}

pub const EQUAL_WEIGHTS: [f64; 4] = [0.25; 4];

/// Noise-free excited-state probability at delay `t_us`.
pub fn ideal_probability(t_us: f64, branch_mhz: &[f64; 4], weights: &[f64; 4], cfg: &ExperimentConfig) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let osc: f64 = branch_mhz
        .iter()
        .zip(weights)
        .map(|(f, w)| w * (two_pi * (cfg.detuning_mhz + f) * t_us).cos())
        .sum();
    0.5 + 0.5 * (-t_us / cfg.t2_us).exp() * osc
}

/// Synthesizes a trace from four branch frequency offsets (MHz, relative to
/// the undisturbed transition). `seed = None` returns the noise-free
/// probabilities; otherwise each point is a binomial estimate over
/// `cfg.shots` shots.
pub fn synthesize_trace(
    branch_mhz: &[f64; 4],
    weights: &[f64; 4],
    cfg: &ExperimentConfig,
    mode: Transition,
    seed: Option<u64>,
) -> Result<RamseyTrace> {
    cfg.validate()?;
    check_weights(weights)?;
    for &f in branch_mhz {
        ensure_finite("branch frequency", f)?;
    }
    cfg.check_aliasing(branch_mhz)?;
    let mut rng = seed.map(ChaCha8Rng::seed_from_u64);
    let mut probs = Vec::with_capacity(cfg.delays_us.len());
    for &t in &cfg.delays_us {
        let p = ideal_probability(t, branch_mhz, weights, cfg).clamp(0.0, 1.0);
        let v = match rng.as_mut() {
            None => p,
            Some(r) => {
                let b = Binomial::new(cfg.shots, p).map_err(|e| invalid("probability", e.to_string()))?;
                b.sample(r) as f64 / cfg.shots as f64
            }
        };
        probs.push(v);
    }
    Ok(RamseyTrace {
        delays_us: cfg.delays_us.clone(),
        probabilities: probs,
        config: cfg.clone(),
        mode,
        time_min: 0.0,
    })
}
