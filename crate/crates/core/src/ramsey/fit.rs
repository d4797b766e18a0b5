//! Symmetric multi-line fits of Ramsey spectra.
//!
//! The model lines are evaluated as the exact transform of sampled,
//! exponentially decaying cosines (a Lorentzian sampled on the finite grid),
//! pushed through the same mean removal, window and padding as the data. That
//! keeps leakage and finite-span ripple in the model instead of the residual.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::spectrum::{uniform_step, Engine, Spectrum};
use super::RamseyTrace;
use crate::error::{Error, Result};
use crate::lm::{jacobian, minimize, LmOptions};
use crate::tight_binding::SplittingPair;

pub const P_CENTER: usize = 0;
pub const P_DF1: usize = 1;
pub const P_DF2: usize = 2;
pub const P_FWHM: usize = 3;
pub const P_AMPLITUDE: usize = 4;
pub const P_BASELINE: usize = 5;

/// Margin, in standard deviations of the outer splitting, by which it must
/// clear the resolution limit to count as resolved.
pub const RESOLVE_SIGMA: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PeakModel {
    FourPeak,
    OnePeak,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum InitStrategy {
    /// Starts derived from the largest local maxima of the spectrum.
    TopPeaks,
    /// A single user-supplied start.
    Given {
        center_mhz: f64,
        df1_mhz: f64,
        df2_mhz: f64,
        fwhm_mhz: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub strategy: InitStrategy,
    /// Fitted frequency band, MHz. `None` centres a band on the spectral
    /// centroid.
    pub band_mhz: Option<(f64, f64)>,
    /// Number of starts refined by Levenberg-Marquardt.
    pub max_starts: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            strategy: InitStrategy::TopPeaks,
            band_mhz: None,
            max_starts: 6,
        }
    }
}

/// Fitted line parameters. Covariance is indexed by `P_CENTER`, `P_DF1`,
/// `P_DF2`, `P_FWHM`, `P_AMPLITUDE`, `P_BASELINE`; entries a model does not use
/// are zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakFit {
    pub model: PeakModel,
    pub center_mhz: f64,
    /// `None` for the one-line model or when the splitting is unresolved.
    pub splitting: Option<SplittingPair>,
    pub fwhm_mhz: f64,
    pub amplitude: f64,
    pub baseline: f64,
    pub covariance: [[f64; 6]; 6],
    pub resolved: bool,
    /// `1 / span`, MHz.
    pub resolution_mhz: f64,
    /// Root-mean-square residual over the fitted band.
    pub rms_residual: f64,
    pub iterations: usize,
}

impl PeakFit {
    pub fn sigma(&self, p: usize) -> f64 {
        self.covariance[p][p].max(0.0).sqrt()
    }
}

/// Geometry of the transform shared by data and model.
struct Problem<'a> {
    spec: &'a Spectrum,
    times: Vec<f64>,
    lo: usize,
    hi: usize,
    data: Vec<f64>,
}

impl<'a> Problem<'a> {
    fn new(spec: &'a Spectrum, band: Option<(f64, f64)>) -> Result<Self> {
        let bin = spec.bin_mhz();
        let ny = spec.nyquist_mhz();
        let (flo, fhi) = match band {
            Some(b) => b,
            None => {
                let c = centroid(spec);
                let half = 0.95 * c.min(ny - c);
                (c - half, c + half)
            }
        };
        let lo = ((flo / bin).ceil().max(1.0)) as usize;
        let hi = (((fhi / bin).floor() as usize) + 1).min(spec.magnitude.len());
        if hi <= lo + 8 {
            return Err(Error::FitFailure(format!(
                "fit band {flo:.4}..{fhi:.4} MHz holds too few bins"
            )));
        }
        Ok(Self {
            spec,
            times: (0..spec.n_samples).map(|j| spec.t0_us + j as f64 * spec.dt_us).collect(),
            lo,
            hi,
            data: spec.magnitude[lo..hi].to_vec(),
        })
    }

    fn engine(&self) -> Engine {
        Engine::new(self.spec.n_samples, self.spec.pad, self.spec.window)
    }

    fn freq(&self, i: usize) -> f64 {
        (self.lo + i) as f64 * self.spec.bin_mhz()
    }
}

/// Line positions for the model.
fn lines(model: PeakModel, center: f64, x1: f64, x2: f64) -> Vec<f64> {
    match model {
        PeakModel::FourPeak => vec![
            center - 0.5 * x2,
            center - 0.5 * x1,
            center + 0.5 * x1,
            center + 0.5 * x2,
        ],
        PeakModel::OnePeak => vec![center],
    }
}

/// Unit-amplitude decaying cosines on the sample times.
fn model_signal(times: &[f64], nus: &[f64], fwhm: f64, out: &mut Vec<f64>) {
    let gamma = PI * fwhm;
    out.clear();
    out.extend(times.iter().map(|&t| {
        let env = (-gamma * t).exp();
        env * nus.iter().map(|nu| (2.0 * PI * nu * t).cos()).sum::<f64>()
    }));
}

/// Magnitude-weighted centre of the spectrum's peaks.
fn centroid(spec: &Spectrum) -> f64 {
    let skip = 2 * spec.pad;
    let mags = &spec.magnitude[skip.min(spec.magnitude.len())..];
    let mut sorted = mags.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let med = sorted[sorted.len() / 2];
    let (mut num, mut den) = (0.0, 0.0);
    for (k, m) in mags.iter().enumerate() {
        let w = (m - med).max(0.0).powi(4);
        num += w * spec.freqs_mhz[k + skip];
        den += w;
    }
    if den > 0.0 {
        num / den
    } else {
        0.5 * spec.nyquist_mhz()
    }
}

/// Local maxima in the band, tallest first, at least one resolution cell
/// apart.
fn top_peaks(p: &Problem, count: usize) -> Vec<f64> {
    let d = &p.data;
    let mut idx: Vec<usize> = (1..d.len().saturating_sub(1))
        .filter(|&i| d[i] >= d[i - 1] && d[i] >= d[i + 1])
        .collect();
    idx.sort_by(|&a, &b| d[b].total_cmp(&d[a]));
    let tallest = idx.first().map_or(0.0, |&i| d[i]);
    let mut out: Vec<usize> = Vec::new();
    for i in idx {
        if d[i] < 0.2 * tallest {
            break;
        }
        if out.iter().all(|&j| i.abs_diff(j) >= p.spec.pad) {
            out.push(i);
        }
        if out.len() == count {
            break;
        }
    }
    out.iter().map(|&i| p.freq(i)).collect()
}

struct Evaluator<'p, 'a> {
    p: &'p Problem<'a>,
    model: PeakModel,
    eng: Engine,
    sig: Vec<f64>,
    mag: Vec<f64>,
}

impl<'p, 'a> Evaluator<'p, 'a> {
    fn new(p: &'p Problem<'a>, model: PeakModel) -> Self {
        Self {
            p,
            model,
            eng: p.engine(),
            sig: Vec::new(),
            mag: Vec::new(),
        }
    }

    /// Unit-amplitude model magnitudes.
    fn shape(&mut self, center: f64, x1: f64, x2: f64, fwhm: f64) -> &[f64] {
        let nus = lines(self.model, center, x1, x2);
        model_signal(&self.p.times, &nus, fwhm, &mut self.sig);
        self.eng.magnitudes(&self.sig, self.p.lo, self.p.hi, &mut self.mag);
        &self.mag
    }

    /// Residuals with amplitude and baseline solved by linear least squares.
    /// `theta = [center, x1, x2, ln fwhm]` (x1, x2 ignored for one line).
    fn projected(&mut self, theta: &[f64]) -> Option<(Vec<f64>, f64, f64)> {
        if theta.iter().any(|v| !v.is_finite()) || theta[3] > 10.0 {
            return None;
        }
        let fwhm = theta[3].exp();
        let data = self.p.data.clone();
        let s = self.shape(theta[0], theta[1], theta[2], fwhm);
        let n = s.len() as f64;
        let (mut ss, mut s1, mut sd, mut d1) = (0.0, 0.0, 0.0, 0.0);
        for (a, b) in s.iter().zip(&data) {
            ss += a * a;
            s1 += a;
            sd += a * b;
            d1 += b;
        }
        let det = ss * n - s1 * s1;
        let (amp, base) = if det.abs() > 1e-300 {
            ((sd * n - s1 * d1) / det, (ss * d1 - s1 * sd) / det)
        } else {
            (0.0, d1 / n)
        };
        let r = s.iter().zip(&data).map(|(a, b)| amp * a + base - b).collect();
        Some((r, amp, base))
    }

    /// Residuals for explicit parameters `[center, df1, df2, fwhm, amp, base]`.
    fn full(&mut self, q: &[f64]) -> Option<Vec<f64>> {
        if q.iter().any(|v| !v.is_finite()) || q[P_FWHM] <= 0.0 {
            return None;
        }
        let data = self.p.data.clone();
        let (amp, base) = (q[P_AMPLITUDE], q[P_BASELINE]);
        let s = self.shape(q[P_CENTER], q[P_DF1], q[P_DF2], q[P_FWHM]);
        Some(s.iter().zip(&data).map(|(a, b)| amp * a + base - b).collect())
    }
}

fn starts(p: &Problem, model: PeakModel, strategy: InitStrategy, fwhm0: f64) -> Vec<[f64; 4]> {
    let lf = fwhm0.ln();
    if let InitStrategy::Given {
        center_mhz,
        df1_mhz,
        df2_mhz,
        fwhm_mhz,
    } = strategy
    {
        return vec![[center_mhz, df1_mhz, df2_mhz, fwhm_mhz.max(1e-6).ln()]];
    }
    let peaks = top_peaks(p, 4);
    let res = p.spec.resolution_mhz();
    let mut centers = vec![centroid(p.spec)];
    if !peaks.is_empty() {
        centers.push(peaks.iter().sum::<f64>() / peaks.len() as f64);
        centers.push(peaks[0]);
    }
    let mut out = Vec::new();
    for &c in &centers {
        if model == PeakModel::OnePeak {
            out.push([c, 0.0, 0.0, lf]);
            continue;
        }
        let mut seps: Vec<f64> = peaks.iter().map(|f| 2.0 * (f - c).abs()).filter(|s| *s > 0.5 * res).collect();
        seps.push(0.5 * res);
        seps.sort_by(|a, b| a.total_cmp(b));
        seps.dedup_by(|a, b| (*a - *b).abs() < 0.5 * res);
        for (i, &a) in seps.iter().enumerate() {
            for &b in &seps[i..] {
                out.push([c, a, b, lf]);
            }
        }
    }
    out
}

/// Fits the symmetric four-line (or single-line) model to a spectrum.
///
/// For the four-line model a splitting is reported only when the outer
/// separation exceeds both the resolution `1/span` and the fitted line width
/// by `RESOLVE_SIGMA` standard deviations; otherwise the fit is flagged unresolved and the single-line parameters are
/// returned without a splitting.
pub fn fit_peaks(spec: &Spectrum, model: PeakModel, opts: &FitOptions) -> Result<PeakFit> {
    let p = Problem::new(spec, opts.band_mhz)?;
    let fit = fit_model(&p, model, opts)?;
    if model == PeakModel::OnePeak {
        return Ok(fit);
    }
    let sp = fit.splitting.expect("four-line fit carries a splitting");
    let threshold = fit.resolution_mhz.max(fit.fwhm_mhz);
    if sp.df2_mhz - RESOLVE_SIGMA * fit.sigma(P_DF2) >= threshold {
        return Ok(fit);
    }
    let mut one = fit_model(&p, PeakModel::OnePeak, &FitOptions { strategy: InitStrategy::TopPeaks, ..*opts })?;
    one.model = PeakModel::FourPeak;
    one.resolved = false;
    Ok(one)
}

/// Separate amplitudes of the four lines of a resolved fit, ordered from the
/// lowest frequency up, by linear least squares with the line positions and
/// width held at the fitted values. Unequal branch weights show up here; the
/// shared-amplitude model cannot express them.
pub fn line_amplitudes(spec: &Spectrum, fit: &PeakFit, band_mhz: Option<(f64, f64)>) -> Result<[f64; 4]> {
    let sp = match (fit.model, fit.splitting) {
        (PeakModel::FourPeak, Some(sp)) => sp,
        _ => return Err(Error::FitFailure("line amplitudes need a resolved four-line fit".into())),
    };
    let p = Problem::new(spec, band_mhz)?;
    let mut eng = p.engine();
    let (mut sig, mut mag) = (Vec::new(), Vec::new());
    let n = p.data.len();
    let mut basis = DMatrix::from_element(n, 5, 1.0);
    for (c, nu) in lines(PeakModel::FourPeak, fit.center_mhz, sp.df1_mhz, sp.df2_mhz).into_iter().enumerate() {
        model_signal(&p.times, &[nu], fit.fwhm_mhz, &mut sig);
        eng.magnitudes(&sig, p.lo, p.hi, &mut mag);
        basis.column_mut(c).copy_from_slice(&mag);
    }
    let x = basis
        .svd(true, true)
        .solve(&DVector::from_column_slice(&p.data), 1e-12)
        .map_err(|e| Error::FitFailure(e.to_string()))?;
    Ok([x[0], x[1], x[2], x[3]])
}

/// Four-line fit when the splitting is resolved, single-line fit otherwise.
pub fn select_model(spec: &Spectrum, opts: &FitOptions) -> Result<PeakFit> {
    let f = fit_peaks(spec, PeakModel::FourPeak, opts)?;
    if f.resolved {
        Ok(f)
    } else {
        let p = Problem::new(spec, opts.band_mhz)?;
        fit_model(&p, PeakModel::OnePeak, opts)
    }
}

fn fit_model(p: &Problem, model: PeakModel, opts: &FitOptions) -> Result<PeakFit> {
    let res = p.spec.resolution_mhz();
    let fwhm0 = 2.0 * res;
    let mut ev = Evaluator::new(p, model);
    let mut cands: Vec<([f64; 4], f64)> = starts(p, model, opts.strategy, fwhm0)
        .into_iter()
        .filter_map(|s| ev.projected(&s).map(|(r, _, _)| (s, r.iter().map(|v| v * v).sum::<f64>())))
        .collect();
    if cands.is_empty() {
        return Err(Error::FitFailure("no valid starting point".into()));
    }
    cands.sort_by(|a, b| a.1.total_cmp(&b.1));
    cands.truncate(opts.max_starts.max(1));

    let mut best: Option<(Vec<f64>, f64, usize)> = None;
    for (s, _) in &cands {
        let x0: Vec<f64> = match model {
            PeakModel::FourPeak => s.to_vec(),
            PeakModel::OnePeak => vec![s[0], s[3]],
        };
        let res = minimize(
            |x| {
                let th = match model {
                    PeakModel::FourPeak => [x[0], x[1], x[2], x[3]],
                    PeakModel::OnePeak => [x[0], 0.0, 0.0, x[1]],
                };
                ev.projected(&th).map(|r| r.0)
            },
            &x0,
            LmOptions::default(),
        );
        if let Some(r) = res {
            if best.as_ref().is_none_or(|b| r.cost < b.1) {
                best = Some((r.x, r.cost, r.iterations));
            }
        }
    }
    let (x, cost, iterations) = best.ok_or_else(|| Error::FitFailure("all restarts failed".into()))?;
    let th = match model {
        PeakModel::FourPeak => [x[0], x[1], x[2], x[3]],
        PeakModel::OnePeak => [x[0], 0.0, 0.0, x[1]],
    };
    let (_, amp, base) = ev
        .projected(&th)
        .ok_or_else(|| Error::FitFailure("optimum outside the model domain".into()))?;
    let (d1, d2) = {
        let (a, b) = (th[1].abs(), th[2].abs());
        (a.min(b), a.max(b))
    };
    let q = [th[0], d1, d2, th[3].exp(), amp, base];
    let used: Vec<usize> = match model {
        PeakModel::FourPeak => vec![P_CENTER, P_DF1, P_DF2, P_FWHM, P_AMPLITUDE, P_BASELINE],
        PeakModel::OnePeak => vec![P_CENTER, P_FWHM, P_AMPLITUDE, P_BASELINE],
    };
    let n = p.data.len();
    let dof = (n - used.len()).max(1) as f64;
    let s2 = cost / dof;
    let inflate = p.spec.pad as f64 * p.spec.window.enbw();
    let cov = covariance(
        |sub: &[f64]| {
            let mut full = q;
            for (k, &i) in used.iter().enumerate() {
                full[i] = sub[k];
            }
            ev.full(&full)
        },
        &used.iter().map(|&i| q[i]).collect::<Vec<_>>(),
        &used,
        s2 * inflate,
        res,
    )?;
    if !q.iter().all(|v| v.is_finite()) {
        return Err(Error::FitFailure("non-finite parameters at the optimum".into()));
    }
    Ok(PeakFit {
        model,
        center_mhz: q[P_CENTER],
        splitting: match model {
            PeakModel::FourPeak => Some(SplittingPair::new(d1, d2)),
            PeakModel::OnePeak => None,
        },
        fwhm_mhz: q[P_FWHM],
        amplitude: amp,
        baseline: base,
        covariance: cov,
        resolved: model == PeakModel::FourPeak,
        resolution_mhz: res,
        rms_residual: (cost / n as f64).sqrt(),
        iterations,
    })
}

/// `scale (J^T J)^-1` embedded into the 6x6 parameter layout.
fn covariance<F>(mut f: F, x: &[f64], used: &[usize], scale: f64, res: f64) -> Result<[[f64; 6]; 6]>
where
    F: FnMut(&[f64]) -> Option<Vec<f64>>,
{
    let r0 = f(x).ok_or_else(|| Error::FitFailure("model undefined at the optimum".into()))?;
    let steps: Vec<f64> = x
        .iter()
        .zip(used)
        .map(|(v, &i)| match i {
            P_CENTER | P_DF1 | P_DF2 | P_FWHM => 1e-4 * res,
            _ => 1e-6 * v.abs().max(1e-6),
        })
        .collect();
    let j = jacobian(&mut f, x, &r0, &steps)
        .ok_or_else(|| Error::FitFailure("model undefined near the optimum".into()))?;
    let jtj = j.transpose() * &j;
    let inv = invert_psd(&jtj);
    let mut out = [[0.0; 6]; 6];
    for (a, &ia) in used.iter().enumerate() {
        for (b, &ib) in used.iter().enumerate() {
            out[ia][ib] = scale * inv[(a, b)];
        }
    }
    Ok(out)
}

/// Inverse of a symmetric positive semidefinite matrix via its
/// eigendecomposition; null directions get zero weight.
fn invert_psd(m: &DMatrix<f64>) -> DMatrix<f64> {
    let e = m.clone().symmetric_eigen();
    let top = e.eigenvalues.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let inv = DVector::from_iterator(
        e.eigenvalues.len(),
        e.eigenvalues.iter().map(|&v| if v > 1e-14 * top { 1.0 / v } else { 0.0 }),
    );
    let mut out = &e.eigenvectors * DMatrix::from_diagonal(&inv) * e.eigenvectors.transpose();
    // symmetrize against rounding
    let t = out.transpose();
    out = (&out + t) * 0.5;
    out
}

/// Time-domain cross-check: fits
/// `p(t) = c + a exp(-pi fwhm t) sum cos(2 pi nu_l t)` directly to the trace,
/// starting from a spectral fit.
pub fn fit_time_domain(trace: &RamseyTrace, start: &PeakFit) -> Result<PeakFit> {
    trace.validate()?;
    let (_, dt) = uniform_step(&trace.delays_us)?;
    let span = trace.delays_us.len() as f64 * dt;
    let sp = start.splitting.unwrap_or(SplittingPair::new(0.0, 0.0));
    let model = start.model;
    let times = &trace.delays_us;
    let data = &trace.probabilities;
    let mut sig = Vec::new();
    let mut resid = |x: &[f64]| -> Option<Vec<f64>> {
        if x.iter().any(|v| !v.is_finite()) || x[3] > 10.0 {
            return None;
        }
        let nus = lines(model, x[0], x[1], x[2]);
        model_signal(times, &nus, x[3].exp(), &mut sig);
        Some(sig.iter().zip(data).map(|(s, d)| x[5] + x[4] * s - d).collect())
    };
    let a0 = match model {
        PeakModel::FourPeak => 0.125,
        PeakModel::OnePeak => 0.5,
    };
    let x0 = [
        start.center_mhz,
        sp.df1_mhz,
        sp.df2_mhz,
        start.fwhm_mhz.max(1e-6).ln(),
        a0,
        0.5,
    ];
    let r = minimize(&mut resid, &x0, LmOptions::default())
        .ok_or_else(|| Error::FitFailure("time-domain model undefined at the start".into()))?;
    let x = r.x;
    let (d1, d2) = (x[1].abs().min(x[2].abs()), x[1].abs().max(x[2].abs()));
    let q = [x[0], d1, d2, x[3].exp(), x[4], x[5]];
    let used: Vec<usize> = match model {
        PeakModel::FourPeak => vec![0, 1, 2, 3, 4, 5],
        PeakModel::OnePeak => vec![0, 3, 4, 5],
    };
    let n = data.len();
    let s2 = r.cost / (n - used.len()).max(1) as f64;
    let mut sig2 = Vec::new();
    let cov = covariance(
        |sub: &[f64]| {
            let mut full = q;
            for (k, &i) in used.iter().enumerate() {
                full[i] = sub[k];
            }
            if full[3] <= 0.0 {
                return None;
            }
            let nus = lines(model, full[0], full[1], full[2]);
            model_signal(times, &nus, full[3], &mut sig2);
            Some(sig2.iter().zip(data).map(|(s, d)| full[5] + full[4] * s - d).collect())
        },
        &used.iter().map(|&i| q[i]).collect::<Vec<_>>(),
        &used,
        s2,
        1.0 / span,
    )?;
    let resolution = 1.0 / span;
    let resolved = model == PeakModel::FourPeak && d2 >= resolution.max(q[3]);
    Ok(PeakFit {
        model,
        center_mhz: q[0],
        splitting: if resolved { Some(SplittingPair::new(d1, d2)) } else { None },
        fwhm_mhz: q[3],
        amplitude: q[4],
        baseline: q[5],
        covariance: cov,
        resolved,
        resolution_mhz: resolution,
        rms_residual: (r.cost / n as f64).sqrt(),
        iterations: r.iterations,
    })
}
