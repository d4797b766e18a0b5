//! Closed-form dispersion model: the cosine-product energy surface, the
//! splitting pair observed in Ramsey spectra and its inverse, the analytic
//! dispersion law and the nearest-neighbour overlap integrals.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, invalid, Error, Result};
use crate::hamiltonian::{dispersion_many, CircuitParams, DispersionTarget, Parity};
use crate::quad::composite;

/// Mean energy and dispersion of one level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DispersionModel {
    pub mean: f64,
    pub epsilon: f64,
    pub level: (usize, usize),
}

impl DispersionModel {
    pub fn new(mean: f64, epsilon: f64, level: (usize, usize)) -> Result<Self> {
        ensure_finite("mean", mean)?;
        ensure_finite("epsilon", epsilon)?;
        if epsilon < 0.0 {
            return Err(invalid("epsilon", format!("must be non-negative, got {epsilon}")));
        }
        Ok(Self { mean, epsilon, level })
    }
}

/// `E = mean + (epsilon / 4) cos(pi n_gS) cos(pi n_gD)`.
pub fn tb_energy(ng_sigma: f64, ng_delta: f64, model: &DispersionModel) -> f64 {
    model.mean + 0.25 * model.epsilon * (PI * ng_sigma).cos() * (PI * ng_delta).cos()
}

/// Inner and outer peak separations, MHz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplittingPair {
    pub df1_mhz: f64,
    pub df2_mhz: f64,
}

impl SplittingPair {
    pub fn new(df1_mhz: f64, df2_mhz: f64) -> Self {
        Self { df1_mhz, df2_mhz }
    }
}

/// `df1 = eps |sin sin|`, `df2 = eps |cos cos|` with `eps` in MHz.
pub fn delta_fs(ng_sigma: f64, ng_delta: f64, epsilon_mhz: f64) -> SplittingPair {
    let (u, v) = (PI * ng_sigma, PI * ng_delta);
    SplittingPair {
        df1_mhz: epsilon_mhz * (u.sin() * v.sin()).abs(),
        df2_mhz: epsilon_mhz * (u.cos() * v.cos()).abs(),
    }
}

/// Frequency offsets of the four parity branches from their mean, in
/// `Parity::ALL` order. The outer pair (EE, OO) is split by
/// `eps cos cos` and the inner pair (EO, OE) by `eps sin sin`.
pub fn branch_offsets(ng_sigma: f64, ng_delta: f64, epsilon: f64) -> [f64; 4] {
    let (u, v) = (PI * ng_sigma, PI * ng_delta);
    let cc = 0.5 * epsilon * u.cos() * v.cos();
    let ss = 0.5 * epsilon * u.sin() * v.sin();
    let mut out = [0.0; 4];
    for p in Parity::ALL {
        out[p.index()] = match p {
            Parity::EE => cc,
            Parity::EO => -ss,
            Parity::OE => ss,
            Parity::OO => -cc,
        };
    }
    out
}

const REPRESENTABLE_TOL: f64 = 1e-9;

/// All `(n_gS, n_gD)` in `[0, 1/2]^2` reproducing `pair`. The two closed-form
/// roots are mirror images under `n_gS <-> n_gD`; coincident roots are merged.
pub fn invert_delta_fs(pair: SplittingPair, epsilon_mhz: f64) -> Result<Vec<(f64, f64)>> {
    let SplittingPair { df1_mhz: f1, df2_mhz: f2 } = pair;
    ensure_finite("df1", f1)?;
    ensure_finite("df2", f2)?;
    ensure_finite("epsilon", epsilon_mhz)?;
    if epsilon_mhz <= 0.0 {
        return Err(invalid("epsilon", format!("must be positive, got {epsilon_mhz}")));
    }
    let infeasible = |bound: String| Error::Infeasible {
        df1_mhz: f1,
        df2_mhz: f2,
        epsilon_mhz,
        bound,
    };
    let tol = REPRESENTABLE_TOL * epsilon_mhz;
    if f1 < -tol || f2 < -tol {
        return Err(infeasible("separations must be non-negative".into()));
    }
    if f1 + f2 > epsilon_mhz + tol {
        return Err(infeasible(format!("df1 + df2 = {} exceeds epsilon", f1 + f2)));
    }
    if (f2 - f1).abs() > epsilon_mhz + tol {
        return Err(infeasible(format!("|df2 - df1| = {} exceeds epsilon", (f2 - f1).abs())));
    }
    let a = ((f2 + f1) / epsilon_mhz).clamp(-1.0, 1.0).acos(); // u - v
    let b = ((f2 - f1) / epsilon_mhz).clamp(-1.0, 1.0).acos(); // u + v
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(2);
    for sign in [1.0, -1.0] {
        let u = 0.5 * (b + sign * a);
        let v = 0.5 * (b - sign * a);
        let (s, d) = (u / PI, v / PI);
        let slack = 1e-12;
        if s < -slack || d < -slack || s > 0.5 + slack || d > 0.5 + slack {
            continue;
        }
        let p = (s.clamp(0.0, 0.5), d.clamp(0.0, 0.5));
        if !out.iter().any(|q| (q.0 - p.0).abs() < 1e-12 && (q.1 - p.1).abs() < 1e-12) {
            out.push(p);
        }
    }
    if out.is_empty() {
        return Err(infeasible("no root inside the fundamental domain".into()));
    }
    Ok(out)
}

/// Folds any offset pair into the fundamental domain `[0, 1/2]^2` without
/// changing `delta_fs`.
pub fn fold_fundamental(ng_sigma: f64, ng_delta: f64) -> (f64, f64) {
    let f = |x: f64| {
        let r = x.rem_euclid(1.0);
        r.min(1.0 - r)
    };
    (f(ng_sigma), f(ng_delta))
}

/// Canonical representative of the set of configurations that share the same
/// sorted splitting pair (inner <= outer): inside `[0, 1/2]^2` with
/// `n_gS + n_gD <= 1/2` and `n_gS >= n_gD`.
pub fn canonical_config(ng_sigma: f64, ng_delta: f64) -> (f64, f64) {
    let (mut s, mut d) = fold_fundamental(ng_sigma, ng_delta);
    if s + d > 0.5 {
        (s, d) = (0.5 - d, 0.5 - s);
    }
    if d > s {
        (s, d) = (d, s);
    }
    (s, d)
}

/// Analytic dispersion law with prefactor `a0`, GHz. The `(1 +/- E_p/2)`
/// factors are taken with `E_p` expressed in units of `E_C`, i.e. the sum and
/// difference charging energies.
pub fn analytic_epsilon(params: &CircuitParams, m: usize, n: usize, a0: f64) -> Result<f64> {
    params.validate()?;
    ensure_finite("a0", a0)?;
    let ratio = params.ej_over_ec();
    if ratio < 10.0 {
        log::warn!("analytic dispersion used at E_J/E_C = {ratio:.2}, below its validity range");
    }
    let ej = params.ej_mean();
    let (cs, cd) = (params.ec_sigma(), params.ec_delta());
    let fact = |k: usize| (1..=k).fold(1.0, |a, i| a * i as f64);
    let pre = a0 * ej * 4f64.powi((m + n) as i32) / (fact(m) * fact(n));
    let powers = (ej / cs).powf(m as f64 / 2.0) * (ej / cd).powf(n as f64 / 2.0);
    let expo = -((2.0 * ej / cs).sqrt() + (2.0 * ej / cd).sqrt());
    Ok(pre * powers * expo.exp())
}

/// One sweep point: numerical dispersion of a level at a given ratio.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub params: CircuitParams,
    pub epsilon: f64,
}

/// Result of fitting the analytic prefactor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct A0Fit {
    pub a0: f64,
    pub level: (usize, usize),
    /// Standard deviation of `ln(numerical / analytic)`.
    pub log_residual_std: f64,
    /// Largest `max(r, 1/r)` of the ratio numerical / analytic.
    pub worst_factor: f64,
    pub points: usize,
}

pub const MIN_SWEEP_POINTS: usize = 10;

/// Least-squares fit of `ln a0` to `ln(numerical) - ln(analytic at a0 = 1)`.
pub fn calibrate_a0(sweep: &[SweepPoint], level: (usize, usize)) -> Result<A0Fit> {
    if sweep.len() < MIN_SWEEP_POINTS {
        return Err(invalid(
            "sweep",
            format!("need at least {MIN_SWEEP_POINTS} points, got {}", sweep.len()),
        ));
    }
    let mut logs = Vec::with_capacity(sweep.len());
    for p in sweep {
        let unit = analytic_epsilon(&p.params, level.0, level.1, 1.0)?;
        if !(p.epsilon > 0.0) || !(unit > 0.0) {
            return Err(Error::FitFailure(format!(
                "non-positive dispersion at E_J/E_C = {:.2}",
                p.params.ej_over_ec()
            )));
        }
        logs.push(p.epsilon.ln() - unit.ln());
    }
    let n = logs.len() as f64;
    let mean = logs.iter().sum::<f64>() / n;
    let var = logs.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / n;
    let a0 = mean.exp();
    if !a0.is_finite() || a0 <= 0.0 {
        return Err(Error::FitFailure(format!("prefactor diverged ({a0})")));
    }
    let worst = logs.iter().map(|l| (l - mean).abs().exp()).fold(1.0, f64::max);
    Ok(A0Fit {
        a0,
        level,
        log_residual_std: var.sqrt(),
        worst_factor: worst,
        points: sweep.len(),
    })
}

/// Numerical dispersions of several levels over a list of `E_J / E_C` values,
/// with `E_C`, `E_p` and the junction ratio taken from `base`. Rows follow
/// `ratios`, columns follow `levels`.
pub fn numerical_sweep(
    base: &CircuitParams,
    ratios: &[f64],
    levels: &[(usize, usize)],
    cutoff: usize,
) -> Result<Vec<Vec<SweepPoint>>> {
    let targets: Vec<DispersionTarget> = levels.iter().map(|&(m, n)| DispersionTarget::Level(m, n)).collect();
    let mut rows = Vec::with_capacity(ratios.len());
    for &r in ratios {
        let p = base.with_ratio(r)?;
        let d = dispersion_many(&p, &targets, cutoff)?;
        rows.push(d.iter().map(|x| SweepPoint { params: p, epsilon: x.epsilon }).collect());
    }
    Ok(rows)
}

/// Nearest-neighbour overlap integrals of the two-site lattice ansatz, with
/// `gamma - alpha beta` the cosine-product amplitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TbCoefficients {
    /// Site overlap, dimensionless.
    pub alpha: f64,
    /// Potential shift from the neighbouring site, GHz.
    pub beta: f64,
    /// Two-centre bond energy, GHz.
    pub gamma: f64,
}

impl TbCoefficients {
    pub fn dominance(&self) -> f64 {
        (self.alpha * self.beta / self.gamma).abs()
    }
}

/// Evaluates the overlap integrals over `[0, 2 pi]^2` with Gaussian site
/// orbitals. The orbital is the harmonic ground state of each mode: `|u|^2`
/// has variance `sqrt(8 E_C,mode / E_J)` along `phi_S` and `phi_D`, and the
/// neighbouring site sits at `(2 pi, 2 pi)`.
pub fn tb_coefficients(params: &CircuitParams) -> Result<TbCoefficients> {
    params.validate()?;
    let ratio = params.ej_over_ec();
    if ratio < 5.0 {
        return Err(invalid(
            "params",
            format!("E_J/E_C = {ratio:.2} is outside the transmon regime"),
        ));
    }
    let ej = params.ej_mean();
    let vs = (8.0 * params.ec_sigma() / ej).sqrt();
    let vd = (8.0 * params.ec_delta() / ej).sqrt();
    let norm = 1.0 / (2.0 * PI * (vs * vd).sqrt());
    let a = 2.0 * PI;
    let u = |x: f64, y: f64| norm.sqrt() * (-x * x / (4.0 * vs) - y * y / (4.0 * vd)).exp();

    let integrate = |panels: usize| -> [f64; 3] {
        let (x, w) = composite(0.0, a, panels, 16);
        let mut acc = [0.0; 3];
        for (xi, wi) in x.iter().zip(&w) {
            let sx = (xi / 4.0).sin().powi(2);
            for (yj, wj) in x.iter().zip(&w) {
                let sy = (yj / 4.0).sin().powi(2);
                let here = u(*xi, *yj);
                let there = u(xi - a, yj - a);
                let ww = wi * wj;
                acc[0] += ww * here * there;
                acc[1] += ww * here * here * sx * sy;
                acc[2] += ww * here * there * sx * sy;
            }
        }
        [4.0 * acc[0], -16.0 * ej * acc[1], -16.0 * ej * acc[2]]
    };

    let mut prev = integrate(2);
    for level in 2..9 {
        let cur = integrate(1 << level);
        let converged = cur
            .iter()
            .zip(&prev)
            .all(|(c, p)| (c - p).abs() <= 1e-8 * c.abs().max(f64::MIN_POSITIVE));
        if converged {
            return Ok(TbCoefficients {
                alpha: cur[0],
                beta: cur[1],
                gamma: cur[2],
            });
        }
        prev = cur;
    }
    Err(Error::IntegrationFailure(format!(
        "overlap integrals not converged to 1e-8 at E_J/E_C = {ratio:.2}"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn energy_surface_corners() {
        let m = DispersionModel::new(1.0, 0.4, (0, 1)).unwrap();
        assert!((tb_energy(0.0, 0.0, &m) - 1.1).abs() < 1e-15);
        assert!((tb_energy(0.5, 0.3, &m) - 1.0).abs() < 1e-15);
        assert!((tb_energy(1.0, 0.0, &m) - 0.9).abs() < 1e-15);
        assert!(DispersionModel::new(1.0, -0.1, (0, 1)).is_err());
    }

    #[test]
    fn canonical_is_idempotent() {
        for &(s, d) in &[(0.1, 0.3), (0.4, 0.35), (0.9, -0.2), (1.3, 0.05)] {
            let c = canonical_config(s, d);
            assert_eq!(canonical_config(c.0, c.1), c);
            let a = delta_fs(s, d, 1.0);
            let b = delta_fs(c.0, c.1, 1.0);
            let (lo, hi) = (a.df1_mhz.min(a.df2_mhz), a.df1_mhz.max(a.df2_mhz));
            assert!((b.df1_mhz - lo).abs() < 1e-12 && (b.df2_mhz - hi).abs() < 1e-12);
        }
    }
}
