//! The six verbs. Each composes the core modules as configured and returns a
//! [`ResultBundle`]; writing it to disk is left to the caller.

use anyhow::{bail, Context, Result};
use log::info;
use twomode::hamiltonian::{
    mode_parameters, parity_branch_frequencies, solve_spectrum, transition_dispersion, ChargeConfig, CircuitParams,
    ModeMethod, Parity, Transition,
};
use twomode::locator::{
    biangulate, induced_offsets, load_map, surrogate_map, BiangulateOptions, GridSpec, LocalizationRegion, SensitivityMap,
    LEVEL_1SIGMA,
};
use twomode::noise::{
    analyze_scenario, end_to_end_eval, run_scenario, AnalysisOptions, BranchModel, Metrics, NoiseModel, ScenarioOutput,
    SeriesRecord,
};
use twomode::ramsey::{
    charge_config_from_fit, read_trace, select_model, spectrum, synthesize_trace, track_series, FitOptions, PeakModel,
    TrackOptions, TrackPoint, P_CENTER, P_DF1, P_DF2,
};
use twomode::tight_binding::{analytic_epsilon, branch_offsets, calibrate_a0, delta_fs, numerical_sweep, MIN_SWEEP_POINTS};

use crate::bundle::{Cell, ResultBundle, Table};
use crate::config::{Branches, LocalizeInput, MapSource, RamseySource, Resolved, Uncertainty};
use crate::schema;

/// End-to-end pass thresholds reported in the `metrics` table.
pub const E2E_MAX_RMS_NG: f64 = 0.05;
pub const E2E_MIN_HIT_RATE: f64 = 0.8;

/// Levels of the dispersion sweep, in column order.
pub const SWEEP_LEVELS: [(usize, usize); 4] = [(0, 0), (0, 1), (1, 0), (0, 2)];

/// Ratio marked for device A on the sweep.
pub const DEVICE_A_RATIO: f64 = 22.0;

pub fn execute(command: &str, cfg: &Resolved) -> Result<ResultBundle> {
    let r = match command {
        "spectrum" => cmd_spectrum(cfg),
        "dispersion-sweep" => cmd_dispersion_sweep(cfg),
        "ramsey" => cmd_ramsey(cfg),
        "track" => cmd_track(cfg),
        "localize" => cmd_localize(cfg),
        "end2end" => cmd_end2end(cfg),
        other => bail!("unknown command `{other}`"),
    };
    r.with_context(|| command.to_string())
}

fn bundle(command: &'static str, cfg: &Resolved) -> ResultBundle {
    ResultBundle::new(command, cfg.hash(), cfg.seed)
}

fn label(m: usize, n: usize) -> String {
    format!("{m}{n}")
}

pub fn cmd_spectrum(cfg: &Resolved) -> Result<ResultBundle> {
    let mut b = bundle("spectrum", cfg);
    let p = cfg.device.params()?;
    let s = solve_spectrum(&p, &ChargeConfig::default(), cfg.device.cutoff, 6)?;
    let e0 = s.levels.first().map_or(0.0, |l| l.energy);
    let mut levels = Table::new(&schema::LEVELS);
    for l in &s.levels {
        levels.push(vec![
            label(l.m, l.n).into(),
            l.m.into(),
            l.n.into(),
            l.energy.into(),
            (l.energy - e0).into(),
            l.overlap.into(),
            format!("{:?}", l.resolution).to_lowercase().into(),
        ]);
    }
    let mut modes = Table::new(&schema::MODES);
    for (name, method) in [("numerical", ModeMethod::Numerical), ("perturbative", ModeMethod::Perturbative)] {
        let m = mode_parameters(&p, method)?;
        modes.push(vec![
            name.into(),
            m.omega_sigma.into(),
            m.omega_delta.into(),
            m.eta_sigma.into(),
            m.eta_delta.into(),
            m.chi.into(),
        ]);
        b.metric(&format!("omega_sigma_{name}_ghz"), m.omega_sigma);
        b.metric(&format!("omega_delta_{name}_ghz"), m.omega_delta);
        b.metric(&format!("eta_sigma_{name}_ghz"), m.eta_sigma);
        b.metric(&format!("eta_delta_{name}_ghz"), m.eta_delta);
        b.metric(&format!("chi_{name}_ghz"), m.chi);
    }
    b.metric("ej_over_ec", p.ej_over_ec());
    b.tables = vec![levels, modes];
    Ok(b)
}

pub fn cmd_dispersion_sweep(cfg: &Resolved) -> Result<ResultBundle> {
    let mut b = bundle("dispersion-sweep", cfg);
    let sw = &cfg.sweep;
    let ratios = sw.ratios();
    let base = CircuitParams::symmetric(DEVICE_A_RATIO * sw.ec_ghz, sw.ec_ghz, sw.ep_over_ec * sw.ec_ghz)?;
    info!("sweeping {} ratios from {} to {}", ratios.len(), ratios[0], ratios[ratios.len() - 1]);
    let rows = numerical_sweep(&base, &ratios, &SWEEP_LEVELS, cfg.device.cutoff)?;

    let mut calib = Table::new(&schema::CALIBRATION);
    let mut a0 = [None; 4];
    if rows.len() >= MIN_SWEEP_POINTS {
        for (j, &(m, n)) in SWEEP_LEVELS.iter().enumerate() {
            let col: Vec<_> = rows.iter().map(|r| r[j]).collect();
            let fit = calibrate_a0(&col, (m, n))?;
            a0[j] = Some(fit.a0);
            calib.push(vec![
                label(m, n).into(),
                fit.a0.into(),
                fit.log_residual_std.into(),
                fit.worst_factor.into(),
                fit.points.into(),
            ]);
            b.metric(&format!("a0_{}", label(m, n)), fit.a0);
            b.metric(&format!("worst_factor_{}", label(m, n)), fit.worst_factor);
        }
    } else {
        b.metric(
            "calibration",
            format!("skipped: {} points, calibration needs {MIN_SWEEP_POINTS}", rows.len()),
        );
    }

    let mut sweep = Table::new(&schema::SWEEP);
    for (r, row) in ratios.iter().zip(&rows) {
        let p = row[0].params;
        let mut cells: Vec<Cell> = vec![(*r).into(), p.ej_mean().into()];
        for (j, &(m, n)) in SWEEP_LEVELS.iter().enumerate() {
            cells.push(row[j].epsilon.into());
            cells.push(match a0[j] {
                Some(a) => analytic_epsilon(&p, m, n, a)?.into(),
                None => Cell::Empty,
            });
        }
        sweep.push(cells);
    }
    for (j, &(m, n)) in SWEEP_LEVELS.iter().enumerate() {
        let dec = rows.windows(2).all(|w| w[1][j].epsilon < w[0][j].epsilon);
        b.metric(&format!("decreasing_{}", label(m, n)), dec);
    }

    let mut markers = Table::new(&schema::MARKERS);
    let mk = numerical_sweep(&base, &[DEVICE_A_RATIO], &SWEEP_LEVELS, cfg.device.cutoff)?;
    let mut cells: Vec<Cell> = vec!["device-a".into(), DEVICE_A_RATIO.into()];
    cells.extend(mk[0].iter().map(|p| Cell::F(p.epsilon)));
    markers.push(cells);

    b.metric("ep_over_ec", sw.ep_over_ec);
    b.metric("points", rows.len());
    b.tables = vec![sweep, markers, calib];
    Ok(b)
}

/// Dispersion used to convert splittings, MHz.
fn epsilon_mhz(cfg: &Resolved, explicit: Option<f64>, mode: Transition) -> Result<f64> {
    match explicit {
        Some(e) => Ok(e),
        None => Ok(transition_dispersion(&cfg.device.params()?, mode)? * 1e3),
    }
}

pub fn cmd_ramsey(cfg: &Resolved) -> Result<ResultBundle> {
    let mut b = bundle("ramsey", cfg);
    let mode = cfg.experiment.transition;
    let eps = epsilon_mhz(cfg, cfg.ramsey.epsilon_mhz, mode)?;
    let mut branches = Table::new(&schema::BRANCHES);
    let trace = match &cfg.ramsey.source {
        RamseySource::Synthetic {
            ng_sigma_2e,
            ng_delta_2e,
            branches: model,
            weights,
        } => {
            let offsets = match model {
                Branches::TightBinding => branch_offsets(*ng_sigma_2e, *ng_delta_2e, eps),
                Branches::Numerical => {
                    let base = ChargeConfig::sum_diff(*ng_sigma_2e, *ng_delta_2e);
                    let f = parity_branch_frequencies(&cfg.device.params()?, &base, mode, cfg.device.cutoff)?;
                    let mean = f.iter().sum::<f64>() / 4.0;
                    f.map(|x| (x - mean) * 1e3)
                }
            };
            for p in Parity::ALL {
                branches.push(vec![p.to_string().into(), offsets[p.index()].into(), weights[p.index()].into()]);
            }
            if *model == Branches::TightBinding {
                let t = delta_fs(*ng_sigma_2e, *ng_delta_2e, eps);
                b.metric("truth_df1_mhz", t.df1_mhz);
                b.metric("truth_df2_mhz", t.df2_mhz);
            }
            synthesize_trace(&offsets, weights, &cfg.experiment.experiment(), mode, Some(cfg.seed))?
        }
        RamseySource::TraceFile(f) => {
            read_trace(&f.path).with_context(|| format!("reading {}", f.path.display()))?
        }
    };
    let spec = spectrum(&trace, cfg.experiment.pad, cfg.experiment.window)?;
    let fit = select_model(&spec, &FitOptions::default())?;

    let mut tr = Table::new(&schema::TRACE);
    for (d, p) in trace.delays_us.iter().zip(&trace.probabilities) {
        tr.push(vec![(*d).into(), (*p).into()]);
    }
    let mut sp = Table::new(&schema::SPECTRUM);
    for (f, m) in spec.freqs_mhz.iter().zip(&spec.magnitude) {
        sp.push(vec![(*f).into(), (*m).into()]);
    }
    let mut ft = Table::new(&schema::FIT);
    let four = fit.model == PeakModel::FourPeak;
    let split = fit.splitting;
    ft.push(vec![
        if four { "four-peak" } else { "one-peak" }.into(),
        fit.center_mhz.into(),
        fit.sigma(P_CENTER).into(),
        split.map(|s| s.df1_mhz).into(),
        split.map(|_| fit.sigma(P_DF1)).into(),
        split.map(|s| s.df2_mhz).into(),
        split.map(|_| fit.sigma(P_DF2)).into(),
        fit.fwhm_mhz.into(),
        fit.amplitude.into(),
        fit.baseline.into(),
        fit.resolved.into(),
        fit.resolution_mhz.into(),
        fit.rms_residual.into(),
        fit.iterations.into(),
    ]);
    let mut ch = Table::new(&schema::CHARGE);
    if fit.resolved {
        match charge_config_from_fit(&fit, eps) {
            Ok(e) => ch.push(vec![
                e.ng_sigma.into(),
                e.sigma_ng_sigma.into(),
                e.ng_delta.into(),
                e.sigma_ng_delta.into(),
                e.clamped.into(),
            ]),
            Err(e) => b.metric("charge_error", e.to_string()),
        }
    }
    b.metric("epsilon_mhz", eps);
    b.metric("resolved", fit.resolved);
    b.metric("resolution_mhz", fit.resolution_mhz);
    if let Some(s) = split {
        b.metric("df1_mhz", s.df1_mhz);
        b.metric("df2_mhz", s.df2_mhz);
    }
    b.tables = vec![branches, tr, sp, ft, ch];
    Ok(b)
}

pub fn build_map(cfg: &Resolved) -> Result<SensitivityMap> {
    Ok(match &cfg.map {
        MapSource::Surrogate {
            geometry,
            half_width_um,
            step_um,
        } => {
            info!("building surrogate map, half width {half_width_um} um, step {step_um} um");
            surrogate_map(geometry, &GridSpec::symmetric(*half_width_um, *step_um)?)?
        }
        MapSource::File(f) => load_map(&f.path).with_context(|| format!("loading map {}", f.path.display()))?,
    })
}

struct Simulation {
    out: ScenarioOutput,
    track: Vec<TrackPoint>,
    regions: Vec<Option<LocalizationRegion>>,
    series: SeriesRecord,
    metrics: Metrics,
    epsilon_mhz: f64,
}

fn simulate(cfg: &Resolved, map: Option<&SensitivityMap>, localize: bool) -> Result<Simulation> {
    let mode = cfg.experiment.transition;
    let sc = &cfg.scenario;
    let eps = epsilon_mhz(cfg, sc.epsilon_mhz, mode)?;
    let model = match sc.branches {
        Branches::TightBinding => BranchModel::TightBinding,
        Branches::Numerical => BranchModel::Numerical {
            params: cfg.device.params()?,
            cutoff: cfg.device.cutoff,
        },
    };
    let script = sc.script(eps, mode, model);
    let noise = NoiseModel {
        qp_rate_per_us: cfg.noise.qp_rate_per_us,
        drift: cfg.noise.drift,
        seed: cfg.seed,
    };
    info!("running {} ticks", script.tick_times().len());
    let out = run_scenario(&script, &noise, &cfg.experiment.experiment(), map)?;
    let mut opts = AnalysisOptions::new(eps);
    opts.track = TrackOptions {
        pad: cfg.experiment.pad,
        window: cfg.experiment.window,
        ..TrackOptions::new(eps)
    };
    let (track, regions, series) = if localize {
        analyze_scenario(&out, map, &opts)?
    } else {
        let track = track_series(&out.traces, &opts.track)?;
        let series = SeriesRecord {
            estimates: track.iter().map(|p| p.estimate.as_ref().map(|e| (e.ng_sigma, e.ng_delta))).collect(),
            jump_flags: track.iter().map(|p| p.jump).collect(),
            hits: vec![None; track.len()],
        };
        let regions = vec![None; track.len()];
        (track, regions, series)
    };
    let metrics = end_to_end_eval(&series, &out.truth)?;
    Ok(Simulation {
        out,
        track,
        regions,
        series,
        metrics,
        epsilon_mhz: eps,
    })
}

fn truth_table(s: &Simulation) -> Table {
    let t = &s.out.truth;
    let mut tab = Table::new(&schema::TRUTH);
    for k in 0..t.times_min.len() {
        let pos = t.positions[k];
        let w = t.weights[k];
        tab.push(vec![
            t.times_min[k].into(),
            t.ng_sigma[k].into(),
            t.ng_delta[k].into(),
            t.canonical[k].0.into(),
            t.canonical[k].1.into(),
            pos.map(|p| p[0]).into(),
            pos.map(|p| p[1]).into(),
            pos.map(|p| p[2]).into(),
            w[0].into(),
            w[1].into(),
            w[2].into(),
            w[3].into(),
            (t.parity_switches[k] as usize).into(),
            t.jump_ticks.contains(&k).into(),
        ]);
    }
    tab
}

fn trajectory_table(s: &Simulation) -> Table {
    let mut tab = Table::new(&schema::TRAJECTORY);
    for p in &s.track {
        let sp = p.splitting();
        let e = p.estimate.as_ref();
        tab.push(vec![
            p.time_min.into(),
            sp.map(|x| x.0.df1_mhz).into(),
            sp.map(|x| x.1).into(),
            sp.map(|x| x.0.df2_mhz).into(),
            sp.map(|x| x.2).into(),
            e.map(|e| e.ng_sigma).into(),
            e.map(|e| e.sigma_ng_sigma).into(),
            e.map(|e| e.ng_delta).into(),
            e.map(|e| e.sigma_ng_delta).into(),
            p.jump.into(),
            p.error.clone().into(),
        ]);
    }
    tab
}

fn track_metrics(b: &mut ResultBundle, s: &Simulation) {
    let m = &s.metrics;
    b.metric("epsilon_mhz", s.epsilon_mhz);
    b.metric("rms_ng_2e", m.rms_ng);
    b.metric("jump_precision", m.jump_precision);
    b.metric("jump_recall", m.jump_recall);
    b.metric("n_points", m.n_points);
    b.metric("n_estimated", m.n_estimated);
    b.metric("n_flagged", m.n_flagged);
    b.metric("n_true_jumps", m.n_true_jumps);
}

pub fn cmd_track(cfg: &Resolved) -> Result<ResultBundle> {
    let mut b = bundle("track", cfg);
    let map = if cfg.scenario.needs_map() { Some(build_map(cfg)?) } else { None };
    let s = simulate(cfg, map.as_ref(), false)?;
    track_metrics(&mut b, &s);
    b.tables = vec![truth_table(&s), trajectory_table(&s)];
    Ok(b)
}

fn contour_rows(tab: &mut Table, time: Option<f64>, r: &LocalizationRegion) {
    for (name, segs) in [("1sigma", &r.contour_1sigma), ("2sigma", &r.contour_2sigma)] {
        for (k, seg) in segs.iter().enumerate() {
            for &(x, y) in seg {
                tab.push(vec![time.into(), name.into(), k.into(), x.into(), y.into()]);
            }
        }
    }
}

fn region_hit(map: &SensitivityMap, r: &LocalizationRegion, x: f64, y: f64) -> bool {
    [(x, y), (-x, y), (x, -y), (-x, -y)]
        .iter()
        .any(|&(a, c)| r.contains(map, a, c, LEVEL_1SIGMA))
}

pub fn cmd_localize(cfg: &Resolved) -> Result<ResultBundle> {
    let mut b = bundle("localize", cfg);
    let map = build_map(cfg)?;
    let l = &cfg.localize;
    let (s, d, truth) = match l.input {
        LocalizeInput::Measured { ng_sigma_2e, ng_delta_2e } => (ng_sigma_2e, ng_delta_2e, None),
        LocalizeInput::Forward { x_um, y_um, q_e } => {
            let (s, d) = induced_offsets(&map, x_um, y_um, q_e)?;
            (s, d, Some((x_um, y_um)))
        }
    };
    let (ss, sd) = match l.uncertainty {
        Uncertainty::Absolute {
            sigma_ng_sigma_2e,
            sigma_ng_delta_2e,
        } => (sigma_ng_sigma_2e, sigma_ng_delta_2e),
        Uncertainty::Fraction { fraction } => {
            let (a, c) = map.max_abs();
            (fraction * a, fraction * c)
        }
    };
    let opts = BiangulateOptions {
        q_assumed: l.q_assumed_e,
        restrict_quadrant: l.restrict_quadrant,
        refine: l.refine,
    };
    let r = biangulate(s, d, ss, sd, &map, &opts)?;
    let mut region = Table::new(&schema::REGION);
    region.push(vec![
        r.best_x_um.into(),
        r.best_y_um.into(),
        r.chi2_min.into(),
        r.area_1sigma_um2.into(),
        r.area_2sigma_um2.into(),
        r.quadrant_restricted.into(),
        s.into(),
        d.into(),
        ss.into(),
        sd.into(),
    ]);
    let mut images = Table::new(&schema::IMAGES);
    for (k, (x, y)) in r.images().iter().enumerate() {
        images.push(vec![k.into(), (*x).into(), (*y).into()]);
    }
    let mut contours = Table::new(&schema::CONTOURS);
    contour_rows(&mut contours, None, &r);
    b.metric("best_x_um", r.best_x_um);
    b.metric("best_y_um", r.best_y_um);
    b.metric("area_1sigma_um2", r.area_1sigma_um2);
    if let Some((x, y)) = truth {
        b.metric("truth_x_um", x);
        b.metric("truth_y_um", y);
        b.metric("hit", region_hit(&map, &r, x, y));
    }
    b.tables = vec![region, images, contours];
    Ok(b)
}

pub fn cmd_end2end(cfg: &Resolved) -> Result<ResultBundle> {
    let mut b = bundle("end2end", cfg);
    let map = build_map(cfg)?;
    let s = simulate(cfg, Some(&map), true)?;
    let m = &s.metrics;
    track_metrics(&mut b, &s);
    let hit_rate = m.hit_rate;
    b.metric("hit_rate", hit_rate.map_or(serde_json::Value::Null, Into::into));

    let mut loc = Table::new(&schema::LOCALIZATION);
    let mut contours = Table::new(&schema::CONTOURS);
    for (k, p) in s.track.iter().enumerate() {
        let r = s.regions[k].as_ref();
        let err = match (r, &p.estimate) {
            (Some(_), _) => None,
            (None, None) => Some("no offset estimate".to_string()),
            (None, Some(_)) if s.series.hits[k].is_some() => Some("no localization solution".to_string()),
            (None, Some(_)) => Some("no map position".to_string()),
        };
        loc.push(vec![
            p.time_min.into(),
            r.map(|r| r.best_x_um).into(),
            r.map(|r| r.best_y_um).into(),
            r.map(|r| r.area_1sigma_um2).into(),
            s.series.hits[k].into(),
            err.into(),
        ]);
        if let Some(r) = r {
            contour_rows(&mut contours, Some(p.time_min), r);
        }
    }
    let meets = m.rms_ng < E2E_MAX_RMS_NG
        && m.n_flagged == 1
        && m.n_true_jumps == 1
        && m.jump_recall == 1.0
        && hit_rate.is_some_and(|h| h >= E2E_MIN_HIT_RATE);
    let mut mt = Table::new(&schema::METRICS);
    mt.push(vec![
        m.rms_ng.into(),
        hit_rate.into(),
        m.jump_precision.into(),
        m.jump_recall.into(),
        m.n_points.into(),
        m.n_estimated.into(),
        m.n_flagged.into(),
        m.n_true_jumps.into(),
        meets.into(),
    ]);
    b.metric("meets_thresholds", meets);
    b.tables = vec![truth_table(&s), trajectory_table(&s), loc, contours, mt];
    Ok(b)
}
