use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use super::{dwell_fractions, simulate_drift, NoiseModel, ParityState};
use crate::error::{ensure_finite, invalid, Error, Result};
use crate::hamiltonian::{parity_branch_frequencies, ChargeConfig, CircuitParams, Transition};
use crate::locator::{biangulate, induced_offsets, BiangulateOptions, LocalizationRegion, SensitivityMap, LEVEL_1SIGMA};
use crate::ramsey::{synthesize_trace, track_series, ExperimentConfig, RamseyTrace, TrackOptions, TrackPoint};
use crate::tight_binding::{branch_offsets, canonical_config};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub t_min: f64,
    pub x_um: f64,
    pub y_um: f64,
    /// Elementary charges.
    pub q: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OffsetWaypoint {
    pub t_min: f64,
    pub ng_sigma: f64,
    pub ng_delta: f64,
}

/// Piecewise-linear path. Two waypoints at the same time script a jump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "waypoints", rename_all = "kebab-case")]
pub enum Path {
    Spatial(Vec<Waypoint>),
    Offsets(Vec<OffsetWaypoint>),
}

impl Path {
    fn times(&self) -> Vec<f64> {
        match self {
            Path::Spatial(w) => w.iter().map(|p| p.t_min).collect(),
            Path::Offsets(w) => w.iter().map(|p| p.t_min).collect(),
        }
    }

    fn values(&self) -> Vec<[f64; 3]> {
        match self {
            Path::Spatial(w) => w.iter().map(|p| [p.x_um, p.y_um, p.q]).collect(),
            Path::Offsets(w) => w.iter().map(|p| [p.ng_sigma, p.ng_delta, 0.0]).collect(),
        }
    }

    /// Path value at `t`; after a duplicated time the later waypoint wins.
    fn at(&self, t: f64) -> [f64; 3] {
        let ts = self.times();
        let vs = self.values();
        let Some(i) = ts.iter().rposition(|&x| x <= t) else {
            return vs[0];
        };
        if i + 1 == ts.len() {
            return vs[i];
        }
        let w = (t - ts[i]) / (ts[i + 1] - ts[i]);
        let mut out = [0.0; 3];
        for c in 0..3 {
            out[c] = vs[i][c] + w * (vs[i + 1][c] - vs[i][c]);
        }
        out
    }

    fn jump_times(&self) -> Vec<f64> {
        self.times().windows(2).filter(|w| w[0] == w[1]).map(|w| w[0]).collect()
    }
}

/// How branch frequencies follow from the offsets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BranchModel {
    /// Closed-form offsets with dispersion `ScenarioScript::epsilon_mhz`.
    TightBinding,
    /// Full diagonalization at each tick.
    Numerical { params: CircuitParams, cutoff: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioScript {
    pub duration_min: f64,
    pub cadence_min: f64,
    pub path: Path,
    pub epsilon_mhz: f64,
    pub branches: BranchModel,
    pub mode: Transition,
}

impl ScenarioScript {
    pub fn validate(&self) -> Result<()> {
        ensure_finite("duration_min", self.duration_min)?;
        ensure_finite("cadence_min", self.cadence_min)?;
        ensure_finite("epsilon_mhz", self.epsilon_mhz)?;
        if self.duration_min < 0.0 || self.cadence_min <= 0.0 || self.epsilon_mhz <= 0.0 {
            return Err(invalid("scenario", "need duration >= 0, cadence > 0, epsilon > 0"));
        }
        let ts = self.path.times();
        if ts.is_empty() {
            return Err(invalid("path", "no waypoints"));
        }
        for v in self.path.values().iter().flatten() {
            ensure_finite("waypoint", *v)?;
        }
        if ts.iter().any(|t| !t.is_finite() || *t < 0.0 || *t > self.duration_min) {
            return Err(invalid("path", "waypoint times must lie within the duration"));
        }
        if ts.windows(2).any(|w| w[1] < w[0]) {
            return Err(invalid("path", "waypoints out of time order"));
        }
        if ts.windows(3).any(|w| w[0] == w[1] && w[1] == w[2]) {
            return Err(invalid("path", "more than two waypoints share a time"));
        }
        Ok(())
    }

    /// 150-minute run at a 2-minute cadence: a single charge drifting near
    /// island 1, hopping outward at 75 min and drifting again afterwards.
    pub fn reference(epsilon_mhz: f64) -> Self {
        let w = |t_min, x_um, y_um| Waypoint { t_min, x_um, y_um, q: 1.0 };
        Self {
            duration_min: 150.0,
            cadence_min: 2.0,
            path: Path::Spatial(vec![
                w(0.0, -30.0, 40.0),
                w(75.0, -32.0, 43.0),
                w(75.0, -60.0, 120.0),
                w(150.0, -62.0, 123.0),
            ]),
            epsilon_mhz,
            branches: BranchModel::TightBinding,
            mode: Transition::Delta,
        }
    }

    pub fn tick_times(&self) -> Vec<f64> {
        let n = (self.duration_min / self.cadence_min + 1e-9).floor() as usize + 1;
        (0..n).map(|k| k as f64 * self.cadence_min).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub times_min: Vec<f64>,
    pub ng_sigma: Vec<f64>,
    pub ng_delta: Vec<f64>,
    /// Representative of each truth in the inversion's fundamental domain.
    pub canonical: Vec<(f64, f64)>,
    /// `(x, y, q)` for spatial paths.
    pub positions: Vec<Option<[f64; 3]>>,
    pub weights: Vec<[f64; 4]>,
    pub parity_switches: Vec<u64>,
    /// First tick after each scripted jump.
    pub jump_ticks: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioOutput {
    pub traces: Vec<RamseyTrace>,
    pub truth: TruthRecord,
}

/// Plays a script: one trace per tick from the path plus drift, with branch
/// weights set by the parity dwell fractions during that trace's acquisition.
pub fn run_scenario(
    script: &ScenarioScript,
    noise: &NoiseModel,
    cfg: &ExperimentConfig,
    map: Option<&SensitivityMap>,
) -> Result<ScenarioOutput> {
    script.validate()?;
    noise.validate()?;
    cfg.validate()?;
    if matches!(script.path, Path::Spatial(_)) && map.is_none() {
        return Err(invalid("map", "a spatial path needs a sensitivity map"));
    }
    let ticks = script.tick_times();
    let mut master = ChaCha8Rng::seed_from_u64(noise.seed);
    let drift = simulate_drift(&noise.drift, script.duration_min, script.cadence_min, master.next_u64())?;
    let mut prng = ChaCha8Rng::seed_from_u64(master.next_u64());
    let mut state = ParityState::default();
    if noise.qp_rate_per_us > 0.0 {
        let exp = Exp::new(noise.qp_rate_per_us).expect("positive rate");
        state.next = [exp.sample(&mut prng), exp.sample(&mut prng)];
    }
    let acq_us = cfg.delays_us.len() as f64 * cfg.acquisition_ms * 1e3;
    let gap_us = script.cadence_min * 60e6 - acq_us;
    let jumps = script.path.jump_times();

    let mut traces = Vec::with_capacity(ticks.len());
    let mut truth = TruthRecord {
        times_min: ticks.clone(),
        ng_sigma: Vec::new(),
        ng_delta: Vec::new(),
        canonical: Vec::new(),
        positions: Vec::new(),
        weights: Vec::new(),
        parity_switches: Vec::new(),
        jump_ticks: jumps
            .iter()
            .filter_map(|&t| ticks.iter().position(|&x| x >= t))
            .collect(),
    };
    for (k, &t) in ticks.iter().enumerate() {
        let v = script.path.at(t);
        let (base, pos) = match (&script.path, map) {
            (Path::Spatial(_), Some(m)) => (induced_offsets(m, v[0], v[1], v[2])?, Some(v)),
            _ => ((v[0], v[1]), None),
        };
        let ng = (base.0 + drift.ng_sigma[k], base.1 + drift.ng_delta[k]);
        let (weights, switches) = dwell_fractions(&mut state, noise.qp_rate_per_us, acq_us, &mut prng);
        if gap_us > 0.0 {
            dwell_fractions(&mut state, noise.qp_rate_per_us, gap_us, &mut prng);
        }
        let offsets = match script.branches {
            BranchModel::TightBinding => branch_offsets(ng.0, ng.1, script.epsilon_mhz),
            BranchModel::Numerical { params, cutoff } => {
                let f = parity_branch_frequencies(&params, &ChargeConfig::sum_diff(ng.0, ng.1), script.mode, cutoff)?;
                let mean = f.iter().sum::<f64>() / 4.0;
                f.map(|x| (x - mean) * 1e3)
            }
        };
        let mut trace = synthesize_trace(&offsets, &weights, cfg, script.mode, Some(master.next_u64()))?;
        trace.time_min = t;
        traces.push(trace);
        truth.ng_sigma.push(ng.0);
        truth.ng_delta.push(ng.1);
        truth.canonical.push(canonical_config(ng.0, ng.1));
        truth.positions.push(pos);
        truth.weights.push(weights);
        truth.parity_switches.push(switches);
    }
    Ok(ScenarioOutput { traces, truth })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalysisOptions {
    pub track: TrackOptions,
    pub biangulate: BiangulateOptions,
    /// Added in quadrature to the propagated offset uncertainties before
    /// localization; covers drift within a trace and map error, neither of which is in the fit
    /// covariance.
    pub sigma_floor: f64,
}

impl AnalysisOptions {
    pub fn new(epsilon_mhz: f64) -> Self {
        Self {
            track: TrackOptions::new(epsilon_mhz),
            biangulate: BiangulateOptions::default(),
            sigma_floor: 1e-3,
        }
    }
}

/// Per-tick outcome of the analysis chain, in the shape consumed by
/// [`end_to_end_eval`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesRecord {
    pub estimates: Vec<Option<(f64, f64)>>,
    pub jump_flags: Vec<bool>,
    /// Whether the true position fell inside the 1-sigma region; `None` when
    /// no localization was attempted.
    pub hits: Vec<Option<bool>>,
}

/// Fits, inverts, and (with a map) localizes every trace of a scenario.
pub fn analyze_scenario(
    out: &ScenarioOutput,
    map: Option<&SensitivityMap>,
    opts: &AnalysisOptions,
) -> Result<(Vec<TrackPoint>, Vec<Option<LocalizationRegion>>, SeriesRecord)> {
    let track = track_series(&out.traces, &opts.track)?;
    let mut regions = Vec::with_capacity(track.len());
    let mut hits = Vec::with_capacity(track.len());
    for (p, pos) in track.iter().zip(&out.truth.positions) {
        let (Some(m), Some(e), Some(pos)) = (map, p.estimate.as_ref(), pos) else {
            regions.push(None);
            hits.push(None);
            continue;
        };
        let f = opts.sigma_floor;
        let r = biangulate(
            e.ng_sigma,
            e.ng_delta,
            e.sigma_ng_sigma.hypot(f),
            e.sigma_ng_delta.hypot(f),
            m,
            &opts.biangulate,
        );
        match r {
            Ok(r) => {
                let (x, y) = (pos[0], pos[1]);
                let hit = [(x, y), (-x, y), (x, -y), (-x, -y)]
                    .iter()
                    .any(|&(a, b)| r.contains(m, a, b, LEVEL_1SIGMA));
                hits.push(Some(hit));
                regions.push(Some(r));
            }
            Err(Error::NoSolution { .. }) => {
                hits.push(Some(false));
                regions.push(None);
            }
            Err(e) => return Err(e),
        }
    }
    let series = SeriesRecord {
        estimates: track
            .iter()
            .map(|p| p.estimate.as_ref().map(|e| (e.ng_sigma, e.ng_delta)))
            .collect(),
        jump_flags: track.iter().map(|p| p.jump).collect(),
        hits,
    };
    Ok((track, regions, series))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Root mean square over ticks and both coordinates.
    pub rms_ng: f64,
    pub hit_rate: Option<f64>,
    /// 1 when nothing was flagged.
    pub jump_precision: f64,
    /// 1 when no jump was scripted.
    pub jump_recall: f64,
    pub n_points: usize,
    pub n_estimated: usize,
    pub n_flagged: usize,
    pub n_true_jumps: usize,
}

/// Scores a recovered series against the truth. Offsets are compared with the
/// canonical truth; a flag counts as correct only on the first tick after a
/// scripted jump.
pub fn end_to_end_eval(series: &SeriesRecord, truth: &TruthRecord) -> Result<Metrics> {
    let n = truth.canonical.len();
    for (name, len) in [
        ("estimates", series.estimates.len()),
        ("jump_flags", series.jump_flags.len()),
        ("hits", series.hits.len()),
    ] {
        if len != n {
            return Err(Error::LengthMismatch(format!("{name} has {len} entries, truth has {n}")));
        }
    }
    let (mut sum, mut cnt) = (0.0, 0usize);
    for (e, t) in series.estimates.iter().zip(&truth.canonical) {
        if let Some(e) = e {
            sum += (e.0 - t.0).powi(2) + (e.1 - t.1).powi(2);
            cnt += 1;
        }
    }
    if cnt == 0 {
        return Err(Error::FitFailure("no tick produced an estimate".into()));
    }
    let tried: Vec<bool> = series.hits.iter().flatten().copied().collect();
    let hit_rate = (!tried.is_empty()).then(|| tried.iter().filter(|h| **h).count() as f64 / tried.len() as f64);
    let flagged: Vec<usize> = series.jump_flags.iter().enumerate().filter(|f| *f.1).map(|f| f.0).collect();
    let tp = flagged.iter().filter(|k| truth.jump_ticks.contains(k)).count();
    let found = truth.jump_ticks.iter().filter(|k| flagged.contains(k)).count();
    Ok(Metrics {
        rms_ng: (sum / (2 * cnt) as f64).sqrt(),
        hit_rate,
        jump_precision: if flagged.is_empty() { 1.0 } else { tp as f64 / flagged.len() as f64 },
        jump_recall: if truth.jump_ticks.is_empty() {
            1.0
        } else {
            found as f64 / truth.jump_ticks.len() as f64
        },
        n_points: n,
        n_estimated: cnt,
        n_flagged: flagged.len(),
        n_true_jumps: truth.jump_ticks.len(),
    })
}
