//! Splitting pairs to charge offsets, and tracking over a series of traces.

use serde::{Deserialize, Serialize};

use super::fit::{fit_peaks, FitOptions, PeakFit, PeakModel, P_DF1, P_DF2};
use super::spectrum::{spectrum, Window};
use super::RamseyTrace;
use crate::error::{invalid, Error, Result};
use crate::tight_binding::{canonical_config, invert_delta_fs, SplittingPair};

/// Jump threshold in combined standard deviations.
pub const JUMP_SIGMA: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChargeEstimate {
    /// Canonical solution (`n_gS >= n_gD`, `n_gS + n_gD <= 1/2`).
    pub ng_sigma: f64,
    pub ng_delta: f64,
    pub sigma_ng_sigma: f64,
    pub sigma_ng_delta: f64,
    pub covariance: [[f64; 2]; 2],
    /// Every root in `[0, 1/2]^2`; they share the uncertainty above.
    pub solutions: Vec<(f64, f64)>,
    /// Pair used for the inversion, after any boundary clamp.
    pub splitting: SplittingPair,
    /// True when the fitted pair lay outside the representable set but within
    /// one standard deviation of it.
    pub clamped: bool,
}

/// Moves a pair onto the representable set `df1 + df2 <= eps`, `df1 >= 0`.
fn clamp_pair(f1: f64, f2: f64, eps: f64) -> (f64, f64) {
    let (mut f1, mut f2) = (f1.max(0.0), f2.max(0.0));
    let excess = f1 + f2 - eps;
    if excess > 0.0 {
        let cut1 = (0.5 * excess).min(f1);
        f1 -= cut1;
        f2 -= excess - cut1;
    }
    (f1, f2)
}

fn canonical_at(f1: f64, f2: f64, eps: f64) -> Option<(f64, f64)> {
    let (f1, f2) = clamp_pair(f1.min(f2), f1.max(f2), eps);
    let sols = invert_delta_fs(SplittingPair::new(f1, f2), eps).ok()?;
    Some(canonical_config(sols[0].0, sols[0].1))
}

/// Inverts a resolved fit to charge offsets with 1-sigma uncertainties
/// propagated through a finite-difference Jacobian of the inverse map.
pub fn charge_config_from_fit(fit: &PeakFit, epsilon_mhz: f64) -> Result<ChargeEstimate> {
    if !(epsilon_mhz.is_finite() && epsilon_mhz > 0.0) {
        return Err(invalid("epsilon", format!("must be positive, got {epsilon_mhz}")));
    }
    let sp = match (fit.model, fit.resolved, fit.splitting) {
        (PeakModel::FourPeak, true, Some(sp)) => sp,
        _ => return Err(Error::FitFailure("splitting unresolved; no charge offset can be assigned".into())),
    };
    let c = &fit.covariance;
    let (v1, v2, c12) = (c[P_DF1][P_DF1].max(0.0), c[P_DF2][P_DF2].max(0.0), c[P_DF1][P_DF2]);
    let (f1, f2) = (sp.df1_mhz, sp.df2_mhz);
    let sigma_sum = (v1 + v2 + 2.0 * c12).max(0.0).sqrt();
    let excess = f1 + f2 - epsilon_mhz;
    if excess > sigma_sum {
        return Err(Error::Infeasible {
            df1_mhz: f1,
            df2_mhz: f2,
            epsilon_mhz,
            bound: format!("df1 + df2 exceeds epsilon by {excess:.4} MHz, more than 1 sigma ({sigma_sum:.4} MHz)"),
        });
    }
    let (g1, g2) = clamp_pair(f1, f2, epsilon_mhz);
    let clamped = excess > 0.0;
    let pair = SplittingPair::new(g1, g2);
    let solutions = invert_delta_fs(pair, epsilon_mhz)?;
    let (s, d) = canonical_config(solutions[0].0, solutions[0].1);

    // Jacobian columns by central differences with a step near one sigma.
    let floor = 1e-6 * epsilon_mhz;
    let mut jac = [[0.0; 2]; 2];
    for (col, (h, base)) in [(v1.sqrt().max(floor), (g1, g2)), (v2.sqrt().max(floor), (g1, g2))]
        .into_iter()
        .enumerate()
    {
        let shift = |k: f64| {
            if col == 0 {
                (base.0 + k, base.1)
            } else {
                (base.0, base.1 + k)
            }
        };
        let (p, m) = (shift(h), shift(-h));
        let hi = canonical_at(p.0, p.1, epsilon_mhz);
        let lo = canonical_at(m.0, m.1, epsilon_mhz);
        let (a, b, span) = match (hi, lo) {
            (Some(a), Some(b)) => (a, b, 2.0 * h),
            (Some(a), None) => (a, (s, d), h),
            (None, Some(b)) => ((s, d), b, h),
            (None, None) => ((s, d), (s, d), 1.0),
        };
        jac[0][col] = (a.0 - b.0) / span;
        jac[1][col] = (a.1 - b.1) / span;
    }
    let cf = [[v1, c12], [c12, v2]];
    let mut cov = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                for l in 0..2 {
                    cov[i][j] += jac[i][k] * cf[k][l] * jac[j][l];
                }
            }
        }
    }
    Ok(ChargeEstimate {
        ng_sigma: s,
        ng_delta: d,
        sigma_ng_sigma: cov[0][0].max(0.0).sqrt(),
        sigma_ng_delta: cov[1][1].max(0.0).sqrt(),
        covariance: cov,
        solutions,
        splitting: pair,
        clamped,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackOptions {
    pub epsilon_mhz: f64,
    pub pad: usize,
    pub window: Window,
    pub fit: FitOptions,
}

impl TrackOptions {
    pub fn new(epsilon_mhz: f64) -> Self {
        Self {
            epsilon_mhz,
            pad: 4,
            window: Window::None,
            fit: FitOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackPoint {
    pub time_min: f64,
    pub fit: Option<PeakFit>,
    pub estimate: Option<ChargeEstimate>,
    /// Set on the first point after a move larger than `JUMP_SIGMA`.
    pub jump: bool,
    pub error: Option<String>,
}

impl TrackPoint {
    pub fn splitting(&self) -> Option<(SplittingPair, f64, f64)> {
        let f = self.fit.as_ref()?;
        let sp = f.splitting?;
        Some((sp, f.sigma(P_DF1), f.sigma(P_DF2)))
    }
}

/// Fits and inverts each trace in time order. Failures are kept inline.
pub fn track_series(traces: &[RamseyTrace], opts: &TrackOptions) -> Result<Vec<TrackPoint>> {
    if traces.len() < 2 {
        return Err(invalid("traces", format!("need at least 2, got {}", traces.len())));
    }
    if traces.windows(2).any(|w| w[1].time_min < w[0].time_min) {
        return Err(invalid("traces", "not in time order"));
    }
    let mut out: Vec<TrackPoint> = Vec::with_capacity(traces.len());
    let mut last: Option<(SplittingPair, f64, f64)> = None;
    for t in traces {
        let fit = spectrum(t, opts.pad, opts.window).and_then(|s| fit_peaks(&s, PeakModel::FourPeak, &opts.fit));
        let mut p = TrackPoint {
            time_min: t.time_min,
            fit: None,
            estimate: None,
            jump: false,
            error: None,
        };
        match fit {
            Ok(f) => {
                p.fit = Some(f.clone());
                match charge_config_from_fit(&f, opts.epsilon_mhz) {
                    Ok(e) => p.estimate = Some(e),
                    Err(e) => p.error = Some(e.to_string()),
                }
            }
            Err(e) => p.error = Some(e.to_string()),
        }
        if let Some(cur) = p.splitting() {
            if let Some(prev) = last {
                let z1 = (cur.0.df1_mhz - prev.0.df1_mhz).abs() / (cur.1.powi(2) + prev.1.powi(2)).sqrt();
                let z2 = (cur.0.df2_mhz - prev.0.df2_mhz).abs() / (cur.2.powi(2) + prev.2.powi(2)).sqrt();
                p.jump = z1.max(z2) > JUMP_SIGMA;
            }
            last = Some(cur);
        }
        out.push(p);
    }
    Ok(out)
}
