use std::sync::OnceLock;

use rustfft::{num_complex::Complex, FftPlanner};
use twomode::hamiltonian::Transition;
use twomode::locator::*;
use twomode::noise::*;
use twomode::ramsey::*;
use twomode::tight_binding::{branch_offsets, canonical_config};
use twomode::Error;

fn quiet() -> NoiseModel {
    NoiseModel {
        qp_rate_per_us: 0.0,
        drift: DriftModel::RandomWalk {
            sigma_per_sqrt_min: [0.0, 0.0],
        },
        seed: 1,
    }
}

fn offsets_script(duration: f64, path: Vec<(f64, f64, f64)>) -> ScenarioScript {
    ScenarioScript {
        duration_min: duration,
        cadence_min: 2.0,
        path: Path::Offsets(
            path.into_iter()
                .map(|(t_min, ng_sigma, ng_delta)| OffsetWaypoint { t_min, ng_sigma, ng_delta })
                .collect(),
        ),
        epsilon_mhz: 4.0,
        branches: BranchModel::TightBinding,
        mode: Transition::Delta,
    }
}

fn map() -> &'static SensitivityMap {
    static MAP: OnceLock<SensitivityMap> = OnceLock::new();
    MAP.get_or_init(|| surrogate_map(&DeviceGeometry::device_a(), &GridSpec::symmetric(300.0, 5.0).unwrap()).unwrap())
}

#[test]
fn zero_rate_gives_empty_log() {
    assert!(simulate_parity_process(0.0, 1e6, 3).unwrap().events.is_empty());
    assert!(simulate_parity_process(-1.0, 1e6, 3).is_err());
}

#[test]
fn poisson_counts() {
    let log = simulate_parity_process(0.01, 1e6, 12).unwrap();
    for island in [1, 2] {
        let n = log.count(island) as f64;
        assert!((n - 1e4).abs() < 300.0, "island {island}: {n}");
    }
    assert!(log.events.windows(2).all(|w| w[0].time_us <= w[1].time_us));
    assert!(log.events.iter().all(|e| e.island == 1 || e.island == 2));
    assert_eq!(log, simulate_parity_process(0.01, 1e6, 12).unwrap());
    assert_ne!(log, simulate_parity_process(0.01, 1e6, 13).unwrap());
}

#[test]
fn zero_step_is_constant() {
    let m = DriftModel::RandomWalk {
        sigma_per_sqrt_min: [0.0, 0.0],
    };
    let d = simulate_drift(&m, 150.0, 2.0, 5).unwrap();
    assert_eq!(d.times_min.len(), 76);
    assert!(d.ng_sigma.iter().chain(&d.ng_delta).all(|v| *v == 0.0));
}

#[test]
fn random_walk_variance() {
    let sigma = 0.01;
    let m = DriftModel::RandomWalk {
        sigma_per_sqrt_min: [sigma, sigma],
    };
    let n_steps = 50;
    let (mut vs, mut vd) = (0.0, 0.0);
    for seed in 0..1000 {
        let d = simulate_drift(&m, n_steps as f64, 1.0, seed).unwrap();
        vs += d.ng_sigma[n_steps].powi(2);
        vd += d.ng_delta[n_steps].powi(2);
    }
    let want = n_steps as f64 * sigma * sigma;
    for v in [vs / 1000.0, vd / 1000.0] {
        assert!((v / want - 1.0).abs() < 0.1, "{v} vs {want}");
    }
}

#[test]
fn ou_sum_is_one_over_f() {
    let (tau_lo, tau_hi) = (1.0, 1000.0);
    let m = DriftModel::OuSum {
        total_sigma: [0.01, 0.01],
        tau_min_min: tau_lo,
        tau_max_min: tau_hi,
        components: 13,
    };
    let dt = 0.1;
    let seg = 1 << 16;
    let d = simulate_drift(&m, dt * (16 * seg) as f64, dt, 9).unwrap();
    let fft = FftPlanner::new().plan_fft_forward(seg);
    let mut psd = vec![0.0; seg / 2];
    for chunk in d.ng_sigma.chunks_exact(seg) {
        let mut buf: Vec<Complex<f64>> = chunk
            .iter()
            .enumerate()
            .map(|(k, v)| {
                let w = 0.5 - 0.5 * (2.0 * std::f64::consts::PI * k as f64 / seg as f64).cos();
                Complex::new(v * w, 0.0)
            })
            .collect();
        fft.process(&mut buf);
        for (p, c) in psd.iter_mut().zip(&buf) {
            *p += c.norm_sqr();
        }
    }
    // two decades inside the corner frequencies
    let f = |k: usize| k as f64 / (seg as f64 * dt);
    let (f_lo, f_hi) = (3.0 / (2.0 * std::f64::consts::PI * tau_hi), 0.3 / (2.0 * std::f64::consts::PI * tau_lo));
    let pts: Vec<(f64, f64)> = (1..seg / 2)
        .filter(|&k| f(k) >= f_lo && f(k) <= f_hi)
        .map(|k| (f(k).ln(), psd[k].ln()))
        .collect();
    let n = pts.len() as f64;
    let (mx, my) = (pts.iter().map(|p| p.0).sum::<f64>() / n, pts.iter().map(|p| p.1).sum::<f64>() / n);
    let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
    assert!((-1.2..=-0.8).contains(&slope), "slope {slope}");
}

#[test]
fn perfect_recovery_scores_zero() {
    let out = run_scenario(
        &offsets_script(10.0, vec![(0.0, 0.1, 0.05)]),
        &quiet(),
        &ExperimentConfig::default(),
        None,
    )
    .unwrap();
    let t = &out.truth;
    let series = SeriesRecord {
        estimates: t.canonical.iter().map(|c| Some(*c)).collect(),
        jump_flags: vec![false; t.canonical.len()],
        hits: vec![Some(true); t.canonical.len()],
    };
    let m = end_to_end_eval(&series, t).unwrap();
    assert_eq!(m.rms_ng, 0.0);
    assert_eq!(m.hit_rate, Some(1.0));
    assert_eq!((m.jump_precision, m.jump_recall), (1.0, 1.0));

    let shifted = SeriesRecord {
        estimates: t.canonical.iter().map(|c| Some((c.0 + 0.1, c.1 - 0.1))).collect(),
        ..series.clone()
    };
    assert!((end_to_end_eval(&shifted, t).unwrap().rms_ng - 0.1).abs() < 1e-15);

    let short = SeriesRecord {
        estimates: vec![None; 2],
        ..series
    };
    assert!(matches!(end_to_end_eval(&short, t), Err(Error::LengthMismatch(_))));
}

#[test]
fn scenarios_are_deterministic() {
    let script = offsets_script(20.0, vec![(0.0, 0.1, 0.05), (20.0, 0.2, 0.1)]);
    let noise = NoiseModel {
        seed: 77,
        ..NoiseModel::default()
    };
    let cfg = ExperimentConfig::default();
    let a = run_scenario(&script, &noise, &cfg, None).unwrap();
    let b = run_scenario(&script, &noise, &cfg, None).unwrap();
    assert_eq!(a, b);
    let c = run_scenario(&script, &NoiseModel { seed: 78, ..noise }, &cfg, None).unwrap();
    assert_ne!(a.traces[0].probabilities, c.traces[0].probabilities);
}

#[test]
fn script_validation() {
    let cfg = ExperimentConfig::default();
    let late = offsets_script(10.0, vec![(0.0, 0.1, 0.1), (12.0, 0.1, 0.1)]);
    assert!(run_scenario(&late, &quiet(), &cfg, None).is_err());
    let unordered = offsets_script(10.0, vec![(5.0, 0.1, 0.1), (1.0, 0.1, 0.1)]);
    assert!(run_scenario(&unordered, &quiet(), &cfg, None).is_err());
    let mut spatial = ScenarioScript::reference(4.0);
    assert!(run_scenario(&spatial, &quiet(), &cfg, None).is_err());
    spatial.path = Path::Spatial(vec![Waypoint {
        t_min: 0.0,
        x_um: 500.0,
        y_um: 0.0,
        q: 1.0,
    }]);
    assert!(matches!(
        run_scenario(&spatial, &quiet(), &cfg, Some(map())),
        Err(Error::OutOfBounds { .. })
    ));
}

#[test]
fn static_path_gives_stable_fits() {
    let noise = NoiseModel {
        drift: quiet().drift,
        ..NoiseModel::default()
    };
    let out = run_scenario(
        &offsets_script(18.0, vec![(0.0, 0.12, 0.07)]),
        &noise,
        &ExperimentConfig::default(),
        None,
    )
    .unwrap();
    let pts = track_series(&out.traces, &TrackOptions::new(4.0)).unwrap();
    let fits: Vec<&PeakFit> = pts.iter().map(|p| p.fit.as_ref().unwrap()).collect();
    let truth = twomode::tight_binding::delta_fs(0.12, 0.07, 4.0);
    for f in &fits {
        let s = f.splitting.unwrap();
        assert!((s.df1_mhz - truth.df1_mhz).abs() < 4.0 * f.sigma(P_DF1));
        assert!((s.df2_mhz - truth.df2_mhz).abs() < 4.0 * f.sigma(P_DF2));
    }
    assert!(pts.iter().all(|p| !p.jump));
}

#[test]
fn offset_step_flags_one_jump() {
    let script = offsets_script(
        20.0,
        vec![(0.0, 0.05, 0.02), (9.0, 0.05, 0.02), (9.0, 0.35, 0.02), (20.0, 0.35, 0.02)],
    );
    let out = run_scenario(&script, &NoiseModel { seed: 4, ..NoiseModel::default() }, &ExperimentConfig::default(), None).unwrap();
    assert_eq!(out.truth.jump_ticks, vec![5]);
    let (pts, _, series) = analyze_scenario(&out, None, &AnalysisOptions::new(4.0)).unwrap();
    let flags: Vec<usize> = pts.iter().enumerate().filter(|p| p.1.jump).map(|p| p.0).collect();
    assert_eq!(flags, vec![5]);
    let m = end_to_end_eval(&series, &out.truth).unwrap();
    assert_eq!((m.jump_precision, m.jump_recall), (1.0, 1.0));
    assert!(m.rms_ng < 0.01);
    assert_eq!(m.hit_rate, None);
}

#[test]
fn blending_conserves_spectral_weight() {
    // a few parity events per 40 s acquisition
    let noise = NoiseModel {
        qp_rate_per_us: 1e-7,
        drift: quiet().drift,
        seed: 21,
    };
    let cfg = ExperimentConfig::default();
    let branches = branch_offsets(0.15, 0.06, 4.0);
    let out = run_scenario(&offsets_script(40.0, vec![(0.0, 0.15, 0.06)]), &noise, &cfg, None).unwrap();
    let reference = synthesize_trace(&branches, &EQUAL_WEIGHTS, &cfg, Transition::Delta, None).unwrap();
    let rs = spectrum(&reference, 4, Window::None).unwrap();
    let lines = fit_peaks(&rs, PeakModel::FourPeak, &FitOptions::default()).unwrap();
    let band = Some((0.5, 9.5));
    let total0: f64 = line_amplitudes(&rs, &lines, band).unwrap().iter().sum();
    let mut uneven = 0;
    for w in &out.truth.weights {
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        if w.iter().any(|x| (x - 0.25).abs() > 0.1) {
            uneven += 1;
        }
        let clean = RamseyTrace {
            probabilities: cfg.delays_us.iter().map(|&d| ideal_probability(d, &branches, w, &cfg)).collect(),
            ..reference.clone()
        };
        let amps = line_amplitudes(&spectrum(&clean, 4, Window::None).unwrap(), &lines, band).unwrap();
        let total: f64 = amps.iter().sum();
        assert!((total / total0 - 1.0).abs() < 0.05, "weights {w:?}: {amps:?}");
    }
    assert!(uneven >= 5, "{:?}", out.truth.weights);
}

#[test]
fn shot_noise_does_not_bias() {
    let cfg = ExperimentConfig::default();
    let (s, d) = (0.17, 0.06);
    let truth = canonical_config(s, d);
    let (mut es, mut ed, mut n) = (0.0, 0.0, 0.0);
    for seed in 0..200 {
        let t = synthesize_trace(&branch_offsets(s, d, 4.0), &EQUAL_WEIGHTS, &cfg, Transition::Delta, Some(seed)).unwrap();
        let f = fit_peaks(&spectrum(&t, 4, Window::None).unwrap(), PeakModel::FourPeak, &FitOptions::default()).unwrap();
        if let Ok(e) = charge_config_from_fit(&f, 4.0) {
            es += e.ng_sigma - truth.0;
            ed += e.ng_delta - truth.1;
            n += 1.0;
        }
    }
    assert!(n >= 190.0);
    assert!((es / n).abs() < 0.01 && (ed / n).abs() < 0.01, "{} {}", es / n, ed / n);
}

#[test]
fn outward_drift_grows_region() {
    // 0.5 um per tick: below the per-tick resolution, so no jump flags
    let w = |t_min, x_um, y_um| Waypoint { t_min, x_um, y_um, q: 1.0 };
    let script = ScenarioScript {
        duration_min: 40.0,
        cadence_min: 2.0,
        path: Path::Spatial(vec![w(0.0, -160.0, 160.0), w(40.0, -175.0, 175.0)]),
        epsilon_mhz: 4.3,
        branches: BranchModel::TightBinding,
        mode: Transition::Delta,
    };
    let noise = NoiseModel { seed: 3, ..NoiseModel::default() };
    let out = run_scenario(&script, &noise, &ExperimentConfig::default(), Some(map())).unwrap();
    let (pts, regions, series) = analyze_scenario(&out, Some(map()), &AnalysisOptions::new(4.3)).unwrap();
    assert!(pts.iter().all(|p| !p.jump));
    let areas: Vec<f64> = regions.iter().map(|r| r.as_ref().unwrap().area_1sigma_um2).collect();
    let third = areas.len() / 3;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    assert!(mean(&areas[areas.len() - third..]) > 1.3 * mean(&areas[..third]), "{areas:?}");
    let m = end_to_end_eval(&series, &out.truth).unwrap();
    assert!(m.hit_rate.unwrap() >= 0.8);
}
