//! Acceptance criteria 1-8. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use twomode::hamiltonian::*;
use twomode::locator::*;
use twomode::noise::*;
use twomode::ramsey::*;
use twomode::tight_binding::*;

// tolerances
const C1_REL: f64 = 0.15;
const C1_TARGETS_MHZ: [f64; 2] = [4.0, 4.1];
const C1_MAX_S: f64 = 10.0;
const C2_SLOPE_VAR: f64 = 0.10;
const C2_FACTOR: f64 = 2.0;
const C2_MAX_S: f64 = 120.0;
const C3_FACTOR: (f64, f64) = (400.0, 1e4);
const C3_KHZ: (f64, f64) = (2.0, 50.0);
const C4_REL: f64 = 1e-3;
const C4_DRAWS: usize = 20;
const C5_TOL: f64 = 1e-9;
const C5_DRAWS: usize = 1000;
const C6_RUNS: usize = 50;
const C6_MIN_FRACTION: f64 = 0.9;
const C6_NULL_RUNS: usize = 100;
const C7_RUNS: usize = 100;
const C7_MIN_HITS: usize = 90;
const C7_NOISE: f64 = 0.01;
const C8_RMS: f64 = 0.05;
const C8_HIT_RATE: f64 = 0.8;
const C8_MAX_S: f64 = 300.0;

struct Outcome {
    pass: bool,
    detail: String,
}

fn run(n: usize, name: &str, f: impl FnOnce() -> Outcome) -> bool {
    let t = Instant::now();
    let o = f();
    println!(
        "criterion {n} {} {name}: {} [{:.1} s]",
        if o.pass { "PASS" } else { "FAIL" },
        o.detail,
        t.elapsed().as_secs_f64()
    );
    o.pass
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

fn c1() -> Outcome {
    let t = Instant::now();
    let d = dispersion_many(
        &CircuitParams::device_a(),
        &[DispersionTarget::Level(0, 1), DispersionTarget::Level(1, 0)],
        10,
    )
    .unwrap();
    let el = secs(t.elapsed());
    let got = [d[0].epsilon * 1e3, d[1].epsilon * 1e3];
    let ok = got.iter().zip(C1_TARGETS_MHZ).all(|(g, w)| (g / w - 1.0).abs() <= C1_REL);
    Outcome {
        pass: ok && el < C1_MAX_S,
        detail: format!(
            "eps_01 = {:.3} MHz (target 4.0), eps_10 = {:.3} MHz (target 4.1), tol {:.0}%, {el:.2} s",
            got[0],
            got[1],
            100.0 * C1_REL
        ),
    }
}

/// Least-squares slope of y against x.
fn slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

fn c2() -> Outcome {
    let t = Instant::now();
    let ratios: Vec<f64> = (0..14).map(|i| 15.0 + 5.0 * i as f64).collect();
    let levels = [(0, 0), (0, 1), (1, 0), (0, 2)];
    let base = CircuitParams::symmetric(11.0, 0.5, 0.2).unwrap();
    let rows = numerical_sweep(&base, &ratios, &levels, 10).unwrap();
    let x: Vec<f64> = ratios.iter().map(|r| r.sqrt()).collect();
    let mut ok = true;
    let mut parts = Vec::new();
    for (j, &lv) in levels.iter().enumerate() {
        let col: Vec<SweepPoint> = rows.iter().map(|r| r[j]).collect();
        let eps: Vec<f64> = col.iter().map(|p| p.epsilon).collect();
        let decreasing = eps.windows(2).all(|w| w[1] < w[0]);
        let y: Vec<f64> = eps.iter().map(|e| e.ln()).collect();
        let g = slope(&x, &y);
        let h = x.len() / 2;
        let var = [slope(&x[..h], &y[..h]), slope(&x[h..], &y[h..])]
            .iter()
            .map(|s| (s / g - 1.0).abs())
            .fold(0.0, f64::max);
        let fit = calibrate_a0(&col, lv).unwrap();
        let good = decreasing && var <= C2_SLOPE_VAR && fit.worst_factor <= C2_FACTOR;
        ok &= good;
        parts.push(format!(
            "{}{}: A0 {:.2}, slope var {:.1}%, worst factor {:.2}{}",
            lv.0,
            lv.1,
            fit.a0,
            100.0 * var,
            fit.worst_factor,
            if decreasing { "" } else { ", NOT decreasing" }
        ));
    }
    let el = secs(t.elapsed());
    Outcome {
        pass: ok && el < C2_MAX_S,
        detail: format!("{} ({el:.1} s)", parts.join("; ")),
    }
}

fn c3() -> Outcome {
    let base = CircuitParams::symmetric(11.0, 0.5, 0.2).unwrap();
    let lo = dispersion_epsilon(&base.with_ratio(22.0).unwrap(), (1, 1)).unwrap();
    let hi = dispersion_epsilon(&base.with_ratio(70.0).unwrap(), (1, 1)).unwrap();
    let b = dispersion_epsilon(&CircuitParams::device_b(), (1, 1)).unwrap();
    let factor = lo / hi;
    let khz = hi * 1e6;
    Outcome {
        pass: (C3_FACTOR.0..=C3_FACTOR.1).contains(&factor) && (C3_KHZ.0..=C3_KHZ.1).contains(&khz),
        detail: format!(
            "eps_11(22) = {:.2} MHz, eps_11(70) = {khz:.2} kHz, factor {factor:.0} (device B: {:.2} kHz)",
            lo * 1e3,
            b * 1e6
        ),
    }
}

/// Dense single-junction levels, written independently of the library.
fn transmon_oracle(ej: f64, ec: f64, ng: f64, cut: i64) -> Vec<f64> {
    let w = (2 * cut + 1) as usize;
    let h = DMatrix::from_fn(w, w, |i, j| {
        if i == j {
            let q = i as f64 - cut as f64 - ng;
            4.0 * ec * q * q
        } else if i.abs_diff(j) == 1 {
            -0.5 * ej
        } else {
            0.0
        }
    });
    let mut ev: Vec<f64> = h.symmetric_eigen().eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Lowest `k` sums `E_i(ng1) + E_j(ng2)`.
fn decoupled_levels(ej1: f64, ej2: f64, ec: f64, ng1: f64, ng2: f64, k: usize) -> Vec<f64> {
    let a = transmon_oracle(ej1, ec, ng1, 25);
    let b = transmon_oracle(ej2, ec, ng2, 25);
    let mut s: Vec<f64> = a[..k].iter().flat_map(|x| b[..k].iter().map(move |y| x + y)).collect();
    s.sort_by(f64::total_cmp);
    s.truncate(k);
    s
}

fn c4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    let mut worst_eps: f64 = 0.0;
    let k = 3;
    for _ in 0..C4_DRAWS {
        let ec = rng.random_range(0.2..0.8);
        let ej1 = ec * rng.random_range(15.0..60.0);
        let ej2 = ej1 * (1.0 + rng.random_range(-0.05..0.05));
        let p = CircuitParams::new(ej1, ej2, ec, 0.0).unwrap();
        let (g1, g2) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let s = solve_spectrum(&p, &ChargeConfig::islands(g1, g2), 10, k).unwrap();
        let want = decoupled_levels(ej1, ej2, ec, g1, g2, k);
        for (l, w) in s.levels.iter().zip(&want) {
            worst = worst.max(((l.energy - w) / w).abs());
        }
        // peak-to-peak between the extremal offsets, per sorted level
        let at = |ng: f64| solve_spectrum(&p, &ChargeConfig::islands(ng, ng), 10, k).unwrap();
        let (s0, s1) = (at(0.0), at(0.5));
        let (w0, w1) = (
            decoupled_levels(ej1, ej2, ec, 0.0, 0.0, k),
            decoupled_levels(ej1, ej2, ec, 0.5, 0.5, k),
        );
        for i in 0..k {
            let got = (s0.levels[i].energy - s1.levels[i].energy).abs();
            let want = (w0[i] - w1[i]).abs();
            worst_eps = worst_eps.max(((got - want) / want).abs());
        }
    }
    Outcome {
        pass: worst < C4_REL && worst_eps < C4_REL,
        detail: format!("{C4_DRAWS} draws at E_p = 0: worst level error {worst:.1e}, worst eps error {worst_eps:.1e} (tol {C4_REL:.0e})"),
    }
}

fn c5() -> Outcome {
    let eps = 4.0;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    let mut accepted = 0;
    for _ in 0..C5_DRAWS {
        let (s, d) = (rng.random_range(0.0..0.5), rng.random_range(0.0..0.5));
        let p = delta_fs(s, d, eps);
        let sols = invert_delta_fs(p, eps).unwrap();
        let back = sols.iter().map(|&(a, b)| {
            let q = delta_fs(a, b, eps);
            (q.df1_mhz - p.df1_mhz).abs().max((q.df2_mhz - p.df2_mhz).abs())
        });
        worst = worst.max(back.fold(0.0, f64::max));
        let truth = canonical_config(s, d);
        let hit = sols.iter().any(|&(a, b)| {
            let c = canonical_config(a, b);
            (c.0 - truth.0).abs().max((c.1 - truth.1).abs()) < 1e-6
        });
        worst = worst.max(if hit { 0.0 } else { 1.0 });
        // infeasible: sum above eps, or a negative entry
        let bad = [
            SplittingPair::new(rng.random_range(0.0..eps), 0.0),
            SplittingPair::new(-rng.random_range(1e-6..eps), rng.random_range(0.0..eps)),
        ];
        let bad0 = SplittingPair::new(bad[0].df1_mhz, eps - bad[0].df1_mhz + rng.random_range(1e-6..eps));
        for b in [bad0, bad[1]] {
            if invert_delta_fs(b, eps).is_ok() {
                accepted += 1;
            }
        }
    }
    Outcome {
        pass: worst <= C5_TOL && accepted == 0,
        detail: format!("{C5_DRAWS} points: worst forward/inverse mismatch {worst:.1e} MHz; {accepted} of {} infeasible pairs accepted", 2 * C5_DRAWS),
    }
}

fn c6() -> Outcome {
    let eps = 4.0;
    let cfg = ExperimentConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut within, mut ng_within) = (0, 0);
    let mut tol = 0.0;
    for seed in 0..C6_RUNS as u64 {
        let (s, d) = (rng.random_range(0.0..0.5), rng.random_range(0.0..0.5));
        let tr = synthesize_trace(&branch_offsets(s, d, eps), &EQUAL_WEIGHTS, &cfg, Transition::Delta, Some(seed)).unwrap();
        let sp = spectrum(&tr, 4, Window::None).unwrap();
        tol = (2.0 * sp.bin_mhz()).max(0.1);
        let Ok(f) = fit_peaks(&sp, PeakModel::FourPeak, &FitOptions::default()) else {
            continue;
        };
        let truth = delta_fs(s, d, eps);
        // the fit cannot tell inner from outer lines: compare sorted pairs
        let (t1, t2) = (truth.df1_mhz.min(truth.df2_mhz), truth.df1_mhz.max(truth.df2_mhz));
        if let Some(got) = f.splitting {
            if (got.df1_mhz - t1).abs() <= tol && (got.df2_mhz - t2).abs() <= tol {
                within += 1;
            }
        }
        if let Ok(e) = charge_config_from_fit(&f, eps) {
            let c = canonical_config(s, d);
            if (e.ng_sigma - c.0).abs() < 0.05 && (e.ng_delta - c.1).abs() < 0.05 {
                ng_within += 1;
            }
        }
    }
    // device-B scale: branch spread of the suppressed 11 level, 10 kHz resolution
    let eps_b = dispersion_epsilon(&CircuitParams::device_b(), (1, 1)).unwrap() * 1e3;
    let null_cfg = ExperimentConfig {
        detuning_mhz: 1.0,
        delays_us: uniform_delays(401, 0.25),
        t2_us: 50.0,
        ..ExperimentConfig::default()
    };
    let mut false_splits = 0;
    let mut resolution = 0.0;
    for seed in 0..C6_NULL_RUNS as u64 {
        let (s, d) = (rng.random_range(0.0..0.5), rng.random_range(0.0..0.5));
        let tr = synthesize_trace(&branch_offsets(s, d, eps_b), &EQUAL_WEIGHTS, &null_cfg, Transition::Delta, Some(10_000 + seed))
            .unwrap();
        let sp = spectrum(&tr, 4, Window::None).unwrap();
        resolution = sp.resolution_mhz();
        match fit_peaks(&sp, PeakModel::FourPeak, &FitOptions::default()) {
            Ok(f) if f.resolved || f.splitting.is_some() => false_splits += 1,
            _ => {}
        }
    }
    let frac = within as f64 / C6_RUNS as f64;
    Outcome {
        pass: frac >= C6_MIN_FRACTION && false_splits == 0,
        detail: format!(
            "{within}/{C6_RUNS} fits within {tol:.3} MHz of (df1, df2) ({ng_within}/{C6_RUNS} within 0.05 n_g); null: {false_splits}/{C6_NULL_RUNS} false splittings at {:.1} kHz resolution, eps_B {:.2} kHz",
            resolution * 1e3,
            eps_b * 1e3
        ),
    }
}

fn reference_map() -> SensitivityMap {
    surrogate_map(&DeviceGeometry::device_a(), &GridSpec::symmetric(600.0, 5.0).unwrap()).unwrap()
}

fn c7(map: &SensitivityMap) -> Outcome {
    let (smax, dmax) = map.max_abs();
    let (ss, sd) = (C7_NOISE * smax, C7_NOISE * dmax);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let half = 0.5 * (map.grid.nx - 1) as f64 * map.grid.dx_um - 1.0;
    let (mut hits, mut noisy_hits) = (0, 0);
    let opts = BiangulateOptions::default();
    let noise = (Normal::new(0.0, ss).unwrap(), Normal::new(0.0, sd).unwrap());
    let inside = |r: &LocalizationRegion, x: f64, y: f64| {
        [(x, y), (-x, y), (x, -y), (-x, -y)].iter().any(|&(a, b)| r.contains(map, a, b, LEVEL_1SIGMA))
    };
    for _ in 0..C7_RUNS {
        let (x, y) = (rng.random_range(-half..half), rng.random_range(-half..half));
        let (s, d) = induced_offsets(map, x, y, 1.0).unwrap();
        if let Ok(r) = biangulate(s, d, ss, sd, map, &opts) {
            hits += inside(&r, x, y) as usize;
        }
        let (ns, nd) = (s + noise.0.sample(&mut rng), d + noise.1.sample(&mut rng));
        if let Ok(r) = biangulate(ns, nd, ss, sd, map, &opts) {
            noisy_hits += inside(&r, x, y) as usize;
        }
    }
    let sym = map.symmetry_report();
    let exact = sym.checked && sym.sigma_even == 0.0 && sym.delta_odd == 0.0;
    Outcome {
        pass: hits >= C7_MIN_HITS && exact,
        detail: format!(
            "{hits}/{C7_RUNS} inside 1-sigma with sigma = 1% of max (info: {noisy_hits}/{C7_RUNS} with 1% noise added to the offsets); mirror residuals ({:e}, {:e})",
            sym.sigma_even, sym.delta_odd
        ),
    }
}

fn c8(map: &SensitivityMap, map_s: f64) -> Outcome {
    let t = Instant::now();
    let eps = transition_dispersion(&CircuitParams::device_a(), Transition::Delta).unwrap() * 1e3;
    let script = ScenarioScript::reference(eps);
    let noise = NoiseModel {
        seed: 8,
        ..NoiseModel::default()
    };
    let out = run_scenario(&script, &noise, &ExperimentConfig::default(), Some(map)).unwrap();
    let (_, _, series) = analyze_scenario(&out, Some(map), &AnalysisOptions::new(eps)).unwrap();
    let m = end_to_end_eval(&series, &out.truth).unwrap();
    let el = secs(t.elapsed()) + map_s;
    let hit = m.hit_rate.unwrap_or(0.0);
    let one_jump = m.n_flagged == 1 && m.jump_recall == 1.0 && m.n_true_jumps == 1;
    Outcome {
        pass: m.rms_ng < C8_RMS && one_jump && hit >= C8_HIT_RATE && el < C8_MAX_S,
        detail: format!(
            "eps {eps:.3} MHz, {} ticks: RMS {:.2e} n_g, {} flagged (true jump ticks {:?}), hit rate {hit:.2}, {el:.1} s incl. map",
            m.n_points, m.rms_ng, m.n_flagged, out.truth.jump_ticks
        ),
    }
}

fn main() {
    let mut ok = true;
    ok &= run(1, "device-A dispersion", c1);
    ok &= run(2, "dispersion sweep shape", c2);
    ok &= run(3, "suppression factor", c3);
    ok &= run(4, "decoupled oracle", c4);
    ok &= run(5, "splitting round trip", c5);
    ok &= run(6, "Ramsey closed loop", c6);
    let t = Instant::now();
    let map = reference_map();
    let map_s = secs(t.elapsed());
    ok &= run(7, "localization", || c7(&map));
    ok &= run(8, "end-to-end scenario", || c8(&map, map_s));
    if !ok {
        std::process::exit(1);
    }
}
