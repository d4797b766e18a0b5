use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use super::RamseyTrace;
use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    /// Default: the fit model passes through the same transform, so leakage
    /// is modelled rather than suppressed.
    #[default]
    None,
    Hann,
}

impl Window {
    fn coefficients(self, n: usize) -> Vec<f64> {
        match self {
            Window::None => vec![1.0; n],
            Window::Hann => (0..n)
                .map(|j| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * j as f64 / (n - 1) as f64).cos())
                .collect(),
        }
    }

    /// Equivalent noise bandwidth in bins.
    pub fn enbw(self) -> f64 {
        match self {
            Window::None => 1.0,
            Window::Hann => 1.5,
        }
    }
}

impl std::str::FromStr for Window {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" | "rect" => Ok(Window::None),
            "hann" => Ok(Window::Hann),
            other => Err(invalid("window", format!("unknown window `{other}`"))),
        }
    }
}

pub const MIN_POINTS: usize = 16;

/// One-sided magnitude spectrum of a mean-removed trace. A cosine of
/// amplitude `A` appears with peak height close to `A`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub freqs_mhz: Vec<f64>,
    pub magnitude: Vec<f64>,
    pub pad: usize,
    pub window: Window,
    /// First delay, us.
    pub t0_us: f64,
    /// Delay step, us.
    pub dt_us: f64,
    pub n_samples: usize,
}

impl Spectrum {
    /// Sampled duration `n dt`, us.
    pub fn span_us(&self) -> f64 {
        self.n_samples as f64 * self.dt_us
    }

    /// Bin spacing `1 / (span pad)`, MHz.
    pub fn bin_mhz(&self) -> f64 {
        1.0 / (self.span_us() * self.pad as f64)
    }

    /// Unpadded frequency resolution `1 / span`, MHz.
    pub fn resolution_mhz(&self) -> f64 {
        1.0 / self.span_us()
    }

    pub fn nyquist_mhz(&self) -> f64 {
        0.5 / self.dt_us
    }
}

/// Reusable transform for one grid, pad and window.
pub(crate) struct Engine {
    n: usize,
    len: usize,
    coeffs: Vec<f64>,
    norm: f64,
    fft: Arc<dyn Fft<f64>>,
    buf: Vec<Complex<f64>>,
    scratch: Vec<Complex<f64>>,
}

impl Engine {
    pub(crate) fn new(n: usize, pad: usize, window: Window) -> Self {
        let len = n * pad;
        let coeffs = window.coefficients(n);
        let norm = 2.0 / coeffs.iter().sum::<f64>();
        let fft = FftPlanner::new().plan_fft_forward(len);
        let scratch = vec![Complex::default(); fft.get_inplace_scratch_len()];
        Self {
            n,
            len,
            coeffs,
            norm,
            fft,
            buf: vec![Complex::default(); len],
            scratch,
        }
    }

    pub(crate) fn bins(&self) -> usize {
        self.len / 2 + 1
    }

    /// Magnitudes of bins `lo..hi` of the mean-removed, windowed signal.
    pub(crate) fn magnitudes(&mut self, x: &[f64], lo: usize, hi: usize, out: &mut Vec<f64>) {
        let mean = x.iter().sum::<f64>() / self.n as f64;
        for (j, b) in self.buf.iter_mut().enumerate() {
            *b = if j < self.n {
                Complex::new((x[j] - mean) * self.coeffs[j], 0.0)
            } else {
                Complex::default()
            };
        }
        self.fft.process_with_scratch(&mut self.buf, &mut self.scratch);
        out.clear();
        out.extend(self.buf[lo..hi].iter().map(|c| c.norm() * self.norm));
    }
}

/// Checks for a uniform grid and returns `(t0, dt)`.
pub(crate) fn uniform_step(delays: &[f64]) -> Result<(f64, f64)> {
    if delays.len() < MIN_POINTS {
        return Err(invalid(
            "delays_us",
            format!("need at least {MIN_POINTS} delay points, got {}", delays.len()),
        ));
    }
    let n = delays.len();
    let dt = (delays[n - 1] - delays[0]) / (n - 1) as f64;
    if !(dt > 0.0) {
        return Err(Error::NonUniformGrid("delays are not increasing".into()));
    }
    for (j, &t) in delays.iter().enumerate() {
        let want = delays[0] + j as f64 * dt;
        if (t - want).abs() > 1e-6 * dt {
            return Err(Error::NonUniformGrid(format!(
                "delay {j} is {t} us, expected {want} us for a uniform step of {dt} us"
            )));
        }
    }
    Ok((delays[0], dt))
}

/// Zero-padded one-sided spectrum. `pad` multiplies the transform length.
pub fn spectrum(trace: &RamseyTrace, pad: usize, window: Window) -> Result<Spectrum> {
    trace.validate()?;
    if pad == 0 {
        return Err(invalid("pad", "zero-pad factor must be at least 1"));
    }
    let (t0, dt) = uniform_step(&trace.delays_us)?;
    let n = trace.delays_us.len();
    let mut eng = Engine::new(n, pad, window);
    let bins = eng.bins();
    let mut mag = Vec::with_capacity(bins);
    eng.magnitudes(&trace.probabilities, 0, bins, &mut mag);
    let df = 1.0 / (n as f64 * pad as f64 * dt);
    Ok(Spectrum {
        freqs_mhz: (0..bins).map(|k| k as f64 * df).collect(),
        magnitude: mag,
        pad,
        window,
        t0_us: t0,
        dt_us: dt,
        n_samples: n,
    })
}
