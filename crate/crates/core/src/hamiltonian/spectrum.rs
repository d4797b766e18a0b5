use serde::{Deserialize, Serialize};

use super::eigen::lowest_eigenpairs;
use super::labeling::{assign_labels, Assignment, References, Resolution};
use super::matrix::{BandedHamiltonian, DEFAULT_CUTOFF};
use super::{ChargeConfig, CircuitParams, Parity};
use crate::error::{Error, Result};

/// Energies closer than this (GHz) are treated as degenerate when labeling.
pub const DEGENERACY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Level {
    /// Sum-mode quanta.
    pub m: usize,
    /// Difference-mode quanta.
    pub n: usize,
    /// GHz.
    pub energy: f64,
    /// Squared overlap with the reference state.
    pub overlap: f64,
    pub resolution: Resolution,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSpectrum {
    /// Ascending in energy.
    pub levels: Vec<Level>,
    pub cutoff: usize,
    pub offsets: ChargeConfig,
}

impl LabeledSpectrum {
    pub fn get(&self, m: usize, n: usize) -> Option<&Level> {
        self.levels.iter().find(|l| l.m == m && l.n == n)
    }

    pub fn energy(&self, m: usize, n: usize) -> Result<f64> {
        self.get(m, n).map(|l| l.energy).ok_or_else(|| {
            Error::LabelingFailure(format!(
                "level |{m}{n}> not among the {} computed states",
                self.levels.len()
            ))
        })
    }

    /// Energies relative to the ground state.
    pub fn relative(&self) -> Vec<(usize, usize, f64)> {
        let e0 = self.levels.first().map_or(0.0, |l| l.energy);
        self.levels.iter().map(|l| (l.m, l.n, l.energy - e0)).collect()
    }
}

/// The `k` lowest eigenstates at `cfg`, labeled `|m n>`.
pub fn solve_spectrum(
    params: &CircuitParams,
    cfg: &ChargeConfig,
    cutoff: usize,
    k: usize,
) -> Result<LabeledSpectrum> {
    let h = BandedHamiltonian::new(params, cfg, cutoff)?;
    if k == 0 {
        return Err(crate::error::invalid("k", "at least one level is required"));
    }
    // a few spare states so a degenerate cluster is never cut at the boundary
    let extra = (k + 3).min(h.dim());
    let (vals, mut vecs) = lowest_eigenpairs(&h, extra);
    let mut end = k.min(vals.len());
    while end < vals.len() && vals[end] - vals[end - 1] <= DEGENERACY_TOL {
        end += 1;
    }
    vecs.truncate(end);
    let refs = References::new(params, cfg, cutoff)?;
    let assigned: Vec<Assignment> = assign_labels(&refs, &vals[..end], &mut vecs, DEGENERACY_TOL)?;
    let levels: Vec<Level> = assigned
        .iter()
        .zip(&vals)
        .take(k)
        .map(|(a, &e)| Level {
            m: a.label.0,
            n: a.label.1,
            energy: e,
            overlap: a.overlap,
            resolution: a.resolution,
        })
        .collect();
    if (levels[0].m, levels[0].n) != (0, 0) {
        return Err(Error::LabelingFailure(format!(
            "ground state labeled |{}{}> instead of |00>",
            levels[0].m, levels[0].n
        )));
    }
    Ok(LabeledSpectrum {
        levels,
        cutoff,
        offsets: *cfg,
    })
}

/// Transitions observable in Ramsey experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Transition {
    /// `|00> -> |10>`.
    #[serde(rename = "sigma")]
    Sigma,
    /// `|00> -> |01>`.
    #[serde(rename = "delta")]
    Delta,
    /// `|01> -> |11>`.
    #[serde(rename = "01-11")]
    SigmaGivenDelta,
}

impl Transition {
    pub fn levels(self) -> ((usize, usize), (usize, usize)) {
        match self {
            Transition::Sigma => ((0, 0), (1, 0)),
            Transition::Delta => ((0, 0), (0, 1)),
            Transition::SigmaGivenDelta => ((0, 1), (1, 1)),
        }
    }

    pub fn frequency(self, s: &LabeledSpectrum) -> Result<f64> {
        let (a, b) = self.levels();
        Ok(s.energy(b.0, b.1)? - s.energy(a.0, a.1)?)
    }

    /// States needed to reach the upper level.
    fn states_needed(self) -> usize {
        match self {
            Transition::Sigma | Transition::Delta => 3,
            Transition::SigmaGivenDelta => 6,
        }
    }
}

impl std::str::FromStr for Transition {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sigma" | "s" => Ok(Transition::Sigma),
            "delta" | "d" => Ok(Transition::Delta),
            "01-11" | "01->11" => Ok(Transition::SigmaGivenDelta),
            other => Err(crate::error::invalid(
                "transition",
                format!("unknown transition `{other}` (expected sigma, delta or 01-11)"),
            )),
        }
    }
}

/// Transition frequency (GHz) in each parity branch, in `Parity::ALL` order.
pub fn parity_branch_frequencies(
    params: &CircuitParams,
    base: &ChargeConfig,
    transition: Transition,
    cutoff: usize,
) -> Result<[f64; 4]> {
    base.validate()?;
    let mut out = [0.0; 4];
    for p in Parity::ALL {
        let cfg = base.with_parity(p);
        let s = solve_spectrum(params, &cfg, cutoff, transition.states_needed())?;
        out[p.index()] = transition.frequency(&s)?;
    }
    Ok(out)
}

/// Transition frequency at a single configuration.
pub fn transition_frequency(
    params: &CircuitParams,
    cfg: &ChargeConfig,
    transition: Transition,
    cutoff: usize,
) -> Result<f64> {
    let s = solve_spectrum(params, cfg, cutoff, transition.states_needed())?;
    transition.frequency(&s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeMethod {
    Numerical,
    Perturbative,
}

/// Mode frequencies and nonlinearities, GHz. Anharmonicities are reported as
/// positive numbers (`eta = 2 E_1 - E_0 - E_2`), and so is the cross-Kerr shift
/// `chi = E_01 + E_10 - E_00 - E_11`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeParams {
    pub omega_sigma: f64,
    pub omega_delta: f64,
    pub eta_sigma: f64,
    pub eta_delta: f64,
    pub chi: f64,
}

/// Mode parameters at the charge sweet spot with the default cutoff.
pub fn mode_parameters(params: &CircuitParams, method: ModeMethod) -> Result<ModeParams> {
    mode_parameters_at(params, &ChargeConfig::default(), DEFAULT_CUTOFF, method)
}

pub fn mode_parameters_at(
    params: &CircuitParams,
    cfg: &ChargeConfig,
    cutoff: usize,
    method: ModeMethod,
) -> Result<ModeParams> {
    params.validate()?;
    match method {
        ModeMethod::Perturbative => Ok(perturbative(params)),
        ModeMethod::Numerical => {
            let needed = [(0, 0), (0, 1), (1, 0), (0, 2), (2, 0), (1, 1)];
            let mut spec = solve_spectrum(params, cfg, cutoff, 9)?;
            if needed.iter().any(|&(m, n)| spec.get(m, n).is_none()) {
                spec = solve_spectrum(params, cfg, cutoff, 15)?;
            }
            for &(m, n) in &needed[1..] {
                let lv = spec.get(m, n).ok_or_else(|| {
                    Error::LabelingFailure(format!("level |{m}{n}> not found among 15 states"))
                })?;
                if lv.resolution != Resolution::Overlap {
                    return Err(Error::LabelingFailure(format!(
                        "sum and difference modes are not distinguishable: |{m}{n}> was assigned by {:?} (E_p = {} GHz)",
                        lv.resolution,
                        params.ep()
                    )));
                }
            }
            let e = |m, n| spec.energy(m, n);
            let (e00, e01, e10) = (e(0, 0)?, e(0, 1)?, e(1, 0)?);
            let (e02, e20, e11) = (e(0, 2)?, e(2, 0)?, e(1, 1)?);
            Ok(ModeParams {
                omega_sigma: e10 - e00,
                omega_delta: e01 - e00,
                eta_sigma: 2.0 * e10 - e00 - e20,
                eta_delta: 2.0 * e01 - e00 - e02,
                chi: e01 + e10 - e00 - e11,
            })
        }
    }
}

/// Leading-order oscillator expansion of each mode. Each mode is a transmon
/// with charging energy `E_CS` or `E_CD` and a quartic term half the
/// single-junction one, so `eta = E_C,mode / 2`; the cross-quartic term shifts
/// each frequency by half of `sqrt(E_CS E_CD)`. The reported cross-Kerr is
/// `4 sqrt(eta_S eta_D)`.
fn perturbative(p: &CircuitParams) -> ModeParams {
    let ej = p.ej_mean();
    let (cs, cd) = (p.ec_sigma(), p.ec_delta());
    let eta_sigma = 0.5 * cs;
    let eta_delta = 0.5 * cd;
    let cross = (cs * cd).sqrt();
    ModeParams {
        omega_sigma: (8.0 * ej * cs).sqrt() - eta_sigma - 0.5 * cross,
        omega_delta: (8.0 * ej * cd).sqrt() - eta_delta - 0.5 * cross,
        eta_sigma,
        eta_delta,
        chi: 4.0 * (eta_sigma * eta_delta).sqrt(),
    }
}

/// Outcome of a dispersion evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dispersion {
    /// Peak-to-peak value, GHz.
    pub epsilon: f64,
    /// Value at `(n_gS, n_gD) = (0, 0)`.
    pub at_origin: f64,
    /// Value at `(n_gS, n_gD) = (1, 0)`.
    pub at_corner: f64,
    /// Spread over the coarse sanity grid.
    pub grid_min: f64,
    pub grid_max: f64,
    /// False when the grid found values more than 1% of epsilon outside the
    /// extremal pair. Only possible for `E_J/E_C >= 10`; below that it is an
    /// error.
    pub grid_consistent: bool,
}

/// Quantity whose charge dispersion is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DispersionTarget {
    Level(usize, usize),
    Transition(Transition),
}

impl DispersionTarget {
    fn states_needed(&self) -> usize {
        match self {
            DispersionTarget::Level(m, n) => {
                // enough states to cover everything up to m + n quanta
                let t = m + n;
                ((t + 1) * (t + 2) / 2).max(3)
            }
            DispersionTarget::Transition(t) => t.states_needed(),
        }
    }

    fn value(&self, s: &LabeledSpectrum) -> Result<f64> {
        match *self {
            DispersionTarget::Level(m, n) => s.energy(m, n),
            DispersionTarget::Transition(t) => t.frequency(s),
        }
    }
}

/// Grid of `(n_gS, n_gD)` points for the sanity sweep. The difference axis
/// is folded to `[0, 1]` only when the junctions are equal.
fn sanity_grid(params: &CircuitParams) -> Vec<(f64, f64)> {
    let folded = params.ej1() == params.ej2();
    let ds: Vec<f64> = if folded {
        (0..5).map(|i| i as f64 * 0.25).collect()
    } else {
        (0..9).map(|i| -1.0 + i as f64 * 0.25).collect()
    };
    let mut pts = Vec::new();
    for i in 0..5 {
        for &d in &ds {
            pts.push((i as f64 * 0.25, d));
        }
    }
    pts
}

/// Peak-to-peak dispersions of several targets from a single set of
/// diagonalizations.
pub fn dispersion_many(
    params: &CircuitParams,
    targets: &[DispersionTarget],
    cutoff: usize,
) -> Result<Vec<Dispersion>> {
    params.validate()?;
    let k = targets.iter().map(|t| t.states_needed()).max().unwrap_or(3);
    let eval = |s: f64, d: f64| -> Result<Vec<f64>> {
        let spec = solve_spectrum(params, &ChargeConfig::sum_diff(s, d), cutoff, k)?;
        targets.iter().map(|t| t.value(&spec)).collect()
    };
    let a = eval(0.0, 0.0)?;
    let b = eval(1.0, 0.0)?;
    let mut lo: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x.min(*y)).collect();
    let mut hi: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x.max(*y)).collect();
    for (s, d) in sanity_grid(params) {
        if (s, d) == (0.0, 0.0) || (s, d) == (1.0, 0.0) {
            continue;
        }
        for (i, v) in eval(s, d)?.into_iter().enumerate() {
            lo[i] = lo[i].min(v);
            hi[i] = hi[i].max(v);
        }
    }
    let ratio = params.ej_over_ec();
    let mut out = Vec::with_capacity(targets.len());
    for (i, t) in targets.iter().enumerate() {
        let eps = (a[i] - b[i]).abs();
        let excess = (hi[i] - lo[i]) - eps;
        let consistent = excess <= 0.01 * eps;
        if !consistent {
            let msg = format!(
                "{t:?}: grid spread {:.6e} GHz exceeds extremal-point dispersion {:.6e} GHz by more than 1%",
                hi[i] - lo[i],
                eps
            );
            if ratio < 10.0 {
                return Err(Error::ModelViolation(msg));
            }
            log::warn!("{msg}");
        }
        out.push(Dispersion {
            epsilon: eps,
            at_origin: a[i],
            at_corner: b[i],
            grid_min: lo[i],
            grid_max: hi[i],
            grid_consistent: consistent,
        });
    }
    Ok(out)
}

/// Peak-to-peak charge dispersion of level `|m n>` in GHz, evaluated at the
/// default cutoff.
pub fn dispersion_epsilon(params: &CircuitParams, level: (usize, usize)) -> Result<f64> {
    Ok(dispersion_report(params, DispersionTarget::Level(level.0, level.1), DEFAULT_CUTOFF)?.epsilon)
}

pub fn dispersion_report(
    params: &CircuitParams,
    target: DispersionTarget,
    cutoff: usize,
) -> Result<Dispersion> {
    Ok(dispersion_many(params, &[target], cutoff)?[0])
}

/// Peak-to-peak dispersion of a transition frequency in GHz.
pub fn transition_dispersion(params: &CircuitParams, transition: Transition) -> Result<f64> {
    Ok(dispersion_report(params, DispersionTarget::Transition(transition), DEFAULT_CUTOFF)?.epsilon)
}
