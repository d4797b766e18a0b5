//! Ground-truth charge-noise generators: quasiparticle parity switching,
//! slow offset drift, and scripted charge paths driven through the full
//! measurement loop.

mod scenario;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use serde::{Deserialize, Serialize};

pub use scenario::{
    analyze_scenario, end_to_end_eval, run_scenario, AnalysisOptions, BranchModel, Metrics, OffsetWaypoint, Path,
    ScenarioOutput, ScenarioScript, SeriesRecord, TruthRecord, Waypoint,
};

use crate::error::{ensure_finite, invalid, Result};

/// Measured quasiparticle tunnelling rate per island, 1/us.
pub const DEFAULT_QP_RATE_PER_US: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DriftModel {
    /// Independent Gaussian random walk in each coordinate.
    RandomWalk {
        sigma_per_sqrt_min: [f64; 2],
    },
    /// Sum of Ornstein-Uhlenbeck processes with log-spaced correlation times
    /// and equal variances, giving a 1/f spectrum between the corner
    /// frequencies of the shortest and longest component.
    OuSum {
        total_sigma: [f64; 2],
        tau_min_min: f64,
        tau_max_min: f64,
        components: usize,
    },
}

impl Default for DriftModel {
    fn default() -> Self {
        DriftModel::RandomWalk {
            sigma_per_sqrt_min: [3e-5, 3e-5],
        }
    }
}

impl DriftModel {
    pub fn validate(&self) -> Result<()> {
        match *self {
            DriftModel::RandomWalk { sigma_per_sqrt_min } => {
                for s in sigma_per_sqrt_min {
                    ensure_finite("drift sigma", s)?;
                    if s < 0.0 {
                        return Err(invalid("drift sigma", format!("must be >= 0, got {s}")));
                    }
                }
            }
            DriftModel::OuSum {
                total_sigma,
                tau_min_min,
                tau_max_min,
                components,
            } => {
                for s in total_sigma {
                    ensure_finite("drift sigma", s)?;
                    if s < 0.0 {
                        return Err(invalid("drift sigma", format!("must be >= 0, got {s}")));
                    }
                }
                if !(tau_min_min > 0.0 && tau_max_min > tau_min_min && tau_max_min.is_finite()) {
                    return Err(invalid("drift tau", "need 0 < tau_min < tau_max"));
                }
                if components < 2 {
                    return Err(invalid("drift components", "need at least 2"));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub qp_rate_per_us: f64,
    pub drift: DriftModel,
    pub seed: u64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            qp_rate_per_us: DEFAULT_QP_RATE_PER_US,
            drift: DriftModel::default(),
            seed: 0,
        }
    }
}

impl NoiseModel {
    pub fn validate(&self) -> Result<()> {
        ensure_finite("qp_rate_per_us", self.qp_rate_per_us)?;
        if self.qp_rate_per_us < 0.0 {
            return Err(invalid("qp_rate_per_us", format!("must be >= 0, got {}", self.qp_rate_per_us)));
        }
        self.drift.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParityEvent {
    /// 1 or 2.
    pub island: u8,
    pub time_us: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EventLog {
    pub events: Vec<ParityEvent>,
}

impl EventLog {
    pub fn count(&self, island: u8) -> usize {
        self.events.iter().filter(|e| e.island == island).count()
    }
}

/// Poisson parity switches on each island over `[0, duration_us)`, merged in
/// time order.
pub fn simulate_parity_process(rate_per_us: f64, duration_us: f64, seed: u64) -> Result<EventLog> {
    ensure_finite("rate", rate_per_us)?;
    ensure_finite("duration", duration_us)?;
    if rate_per_us < 0.0 || duration_us < 0.0 {
        return Err(invalid("rate", "rate and duration must be non-negative"));
    }
    let mut events = Vec::new();
    if rate_per_us > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let exp = Exp::new(rate_per_us).map_err(|e| invalid("rate", e.to_string()))?;
        for island in [1u8, 2] {
            let mut t = exp.sample(&mut rng);
            while t < duration_us {
                events.push(ParityEvent { island, time_us: t });
                t += exp.sample(&mut rng);
            }
        }
    }
    events.sort_by(|a, b| a.time_us.total_cmp(&b.time_us).then(a.island.cmp(&b.island)));
    Ok(EventLog { events })
}

/// Parity state carried across acquisition windows.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub(crate) struct ParityState {
    pub odd: [bool; 2],
    /// Time to the next switch on each island, us.
    pub next: [f64; 2],
}

/// Advances the two-island parity process over a window of `len_us` and
/// returns the dwell fraction of each branch in `Parity::ALL` order together
/// with the number of switches.
pub(crate) fn dwell_fractions<R: Rng>(
    state: &mut ParityState,
    rate: f64,
    len_us: f64,
    rng: &mut R,
) -> ([f64; 4], u64) {
    use crate::hamiltonian::Parity;
    let mut dwell = [0.0; 4];
    let mut switches = 0u64;
    if rate <= 0.0 {
        dwell[Parity::from_odd(state.odd[0], state.odd[1]).index()] = 1.0;
        return (dwell, 0);
    }
    let exp = Exp::new(rate).expect("positive rate");
    let mut left = len_us;
    loop {
        let k = if state.next[0] <= state.next[1] { 0 } else { 1 };
        let step = state.next[k].min(left);
        dwell[Parity::from_odd(state.odd[0], state.odd[1]).index()] += step;
        state.next[0] -= step;
        state.next[1] -= step;
        left -= step;
        if left <= 0.0 {
            break;
        }
        state.odd[k] = !state.odd[k];
        state.next[k] = exp.sample(rng);
        switches += 1;
    }
    for d in &mut dwell {
        *d /= len_us;
    }
    (dwell, switches)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftTrajectory {
    pub times_min: Vec<f64>,
    pub ng_sigma: Vec<f64>,
    pub ng_delta: Vec<f64>,
}

/// Drift sampled every `cadence_min` over `[0, duration_min]`, starting at
/// zero for the random walk and from the stationary law for the OU sum.
pub fn simulate_drift(model: &DriftModel, duration_min: f64, cadence_min: f64, seed: u64) -> Result<DriftTrajectory> {
    model.validate()?;
    if !(cadence_min > 0.0 && duration_min >= 0.0 && duration_min.is_finite()) {
        return Err(invalid("cadence", "need cadence > 0 and a finite duration >= 0"));
    }
    let n = (duration_min / cadence_min + 1e-9).floor() as usize + 1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let times: Vec<f64> = (0..n).map(|k| k as f64 * cadence_min).collect();
    let mut out = [vec![0.0; n], vec![0.0; n]];
    match *model {
        DriftModel::RandomWalk { sigma_per_sqrt_min } => {
            for (c, o) in out.iter_mut().enumerate() {
                let s = sigma_per_sqrt_min[c] * cadence_min.sqrt();
                for k in 1..n {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    o[k] = o[k - 1] + s * z;
                }
            }
        }
        DriftModel::OuSum {
            total_sigma,
            tau_min_min,
            tau_max_min,
            components,
        } => {
            let ratio = (tau_max_min / tau_min_min).ln();
            let taus: Vec<f64> = (0..components)
                .map(|i| tau_min_min * (ratio * i as f64 / (components - 1) as f64).exp())
                .collect();
            for (c, o) in out.iter_mut().enumerate() {
                let s = total_sigma[c] / (components as f64).sqrt();
                let mut x: Vec<f64> = taus
                    .iter()
                    .map(|_| s * Distribution::<f64>::sample(&StandardNormal, &mut rng))
                    .collect();
                let decay: Vec<f64> = taus.iter().map(|t| (-cadence_min / t).exp()).collect();
                for k in 0..n {
                    if k > 0 {
                        for (xi, a) in x.iter_mut().zip(&decay) {
                            let z: f64 = StandardNormal.sample(&mut rng);
                            *xi = *xi * a + s * (1.0 - a * a).sqrt() * z;
                        }
                    }
                    o[k] = x.iter().sum();
                }
            }
        }
    }
    let [ng_sigma, ng_delta] = out;
    Ok(DriftTrajectory {
        times_min: times,
        ng_sigma,
        ng_delta,
    })
}
