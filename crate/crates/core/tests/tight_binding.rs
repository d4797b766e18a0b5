use proptest::prelude::*;
use twomode::hamiltonian::{dispersion_epsilon, CircuitParams, Parity};
use twomode::tight_binding::*;
use twomode::Error;

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

#[test]
fn splitting_examples() {
    let p = delta_fs(0.0, 0.0, 4.0);
    assert_eq!((p.df1_mhz, p.df2_mhz), (0.0, 4.0));
    let p = delta_fs(0.25, 0.25, 4.0);
    assert!(close(p.df1_mhz, 2.0, 1e-12) && close(p.df2_mhz, 2.0, 1e-12));
    let p = delta_fs(0.5, 0.5, 4.0);
    assert!(close(p.df1_mhz, 4.0, 1e-12) && close(p.df2_mhz, 0.0, 1e-12));
}

#[test]
fn inversion_examples() {
    let s = invert_delta_fs(SplittingPair::new(0.0, 4.0), 4.0).unwrap();
    assert_eq!(s, vec![(0.0, 0.0)]);
    let s = invert_delta_fs(SplittingPair::new(2.0, 2.0), 4.0).unwrap();
    assert_eq!(s.len(), 1);
    assert!(close(s[0].0, 0.25, 1e-12) && close(s[0].1, 0.25, 1e-12));
    match invert_delta_fs(SplittingPair::new(3.0, 3.0), 4.0) {
        Err(Error::Infeasible { bound, .. }) => assert!(bound.contains("df1 + df2"), "{bound}"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn inversion_returns_swap_images() {
    let s = invert_delta_fs(delta_fs(0.3, 0.1, 4.0), 4.0).unwrap();
    assert_eq!(s.len(), 2);
    assert!(s.iter().any(|p| close(p.0, 0.3, 1e-9) && close(p.1, 0.1, 1e-9)));
    assert!(s.iter().any(|p| close(p.0, 0.1, 1e-9) && close(p.1, 0.3, 1e-9)));
}

#[test]
fn infeasible_pairs_rejected() {
    for (a, b) in [(5.0, 0.0), (0.0, 4.5), (-1.0, 2.0), (2.5, 2.5), (1.0, 3.1)] {
        assert!(matches!(
            invert_delta_fs(SplittingPair::new(a, b), 4.0),
            Err(Error::Infeasible { .. })
        ));
    }
}

#[test]
fn branch_structure_from_energy_surface() {
    // evaluating the energy surface on the four parity-shifted offsets gives
    // +/- cc and +/- ss branches around the mean
    let model = DispersionModel::new(5.0, 0.008, (0, 1)).unwrap();
    let (s, d) = (0.17, 0.08);
    let mut e = [0.0; 4];
    for p in Parity::ALL {
        let (a, b) = p.shifts();
        let (g1, g2) = (0.5 * (s + d) + a, 0.5 * (s - d) + b);
        e[p.index()] = tb_energy(g1 + g2, g1 - g2, &model);
    }
    let mean = e.iter().sum::<f64>() / 4.0;
    assert!(close(mean, 5.0, 1e-15));
    let off = branch_offsets(s, d, model.epsilon / 2.0);
    for i in 0..4 {
        assert!(close(e[i] - 5.0, off[i], 1e-15), "{i}");
    }
    let pair = delta_fs(s, d, 1.0);
    let b = branch_offsets(s, d, 1.0);
    assert!(close((b[0] - b[3]).abs(), pair.df2_mhz, 1e-15));
    assert!(close((b[2] - b[1]).abs(), pair.df1_mhz, 1e-15));
}

#[test]
fn analytic_standard_transmon_limit() {
    let p = CircuitParams::symmetric(20.0, 0.5, 0.0).unwrap();
    let e = analytic_epsilon(&p, 0, 1, 1.0).unwrap();
    let (ej, ec) = (20.0f64, 0.5f64);
    let want = ej * 4.0 * (ej / ec).sqrt() * (-2.0 * (2.0 * ej / ec).sqrt()).exp();
    assert!(close(e, want, 1e-12 * want));
}

#[test]
fn analytic_decreasing() {
    let base = CircuitParams::device_a();
    let mut last = f64::INFINITY;
    for i in 0..30 {
        let r = 10.0 + 3.0 * i as f64;
        let e = analytic_epsilon(&base.with_ratio(r).unwrap(), 1, 1, 14.45).unwrap();
        assert!(e > 0.0 && e < last);
        last = e;
    }
}

#[test]
fn analytic_log_slope_nearly_constant() {
    let base = CircuitParams::device_a();
    let f = |r: f64| analytic_epsilon(&base.with_ratio(r).unwrap(), 0, 1, 1.0).unwrap().ln();
    let xs: Vec<f64> = (0..9).map(|i| (30.0 + 5.0 * i as f64).sqrt()).collect();
    let slopes: Vec<f64> = xs
        .windows(2)
        .map(|w| (f(w[1] * w[1]) - f(w[0] * w[0])) / (w[1] - w[0]))
        .collect();
    let mean = slopes.iter().sum::<f64>() / slopes.len() as f64;
    assert!(mean < 0.0);
    for s in &slopes {
        assert!(((s - mean) / mean).abs() < 0.1, "{s} vs {mean}");
    }
}

fn sweep(levels: &[(usize, usize)]) -> Vec<Vec<SweepPoint>> {
    let ratios: Vec<f64> = (0..14).map(|i| 15.0 + 5.0 * i as f64).collect();
    numerical_sweep(&CircuitParams::device_a(), &ratios, levels, 10).unwrap()
}

fn column(rows: &[Vec<SweepPoint>], j: usize) -> Vec<SweepPoint> {
    rows.iter().map(|r| r[j]).collect()
}

#[test]
fn calibration_golden_and_linearity() {
    let rows = sweep(&[(0, 1), (1, 1)]);
    let c01 = column(&rows, 0);
    let fit = calibrate_a0(&c01, (0, 1)).unwrap();
    // prefactor frozen from an independent numpy sweep
    assert!((fit.a0 / 12.117533 - 1.0).abs() < 0.2, "{}", fit.a0);
    assert!(fit.log_residual_std < 0.7);
    assert!(fit.worst_factor < 2.0);
    let again = calibrate_a0(&c01, (0, 1)).unwrap();
    assert!((again.a0 - fit.a0).abs() <= 1e-12 * fit.a0);
    let halved: Vec<SweepPoint> = c01
        .iter()
        .map(|p| SweepPoint { params: p.params, epsilon: p.epsilon / 2.0 })
        .collect();
    let h = calibrate_a0(&halved, (0, 1)).unwrap();
    assert!((h.a0 / fit.a0 - 0.5).abs() < 1e-12);

    let fit11 = calibrate_a0(&column(&rows, 1), (1, 1)).unwrap();
    assert!((fit11.a0 / 14.453717 - 1.0).abs() < 0.2, "{}", fit11.a0);

    // calibrated law within a factor of two at ratios 22 and 70
    for r in [22.0, 70.0] {
        let p = CircuitParams::device_a().with_ratio(r).unwrap();
        let num = dispersion_epsilon(&p, (0, 1)).unwrap();
        let ana = analytic_epsilon(&p, 0, 1, fit.a0).unwrap();
        assert!(ana / num < 2.0 && num / ana < 2.0, "{r}: {ana} {num}");
    }
}

#[test]
fn suppression_of_the_11_level() {
    let a0 = 14.453717;
    let base = CircuitParams::device_a();
    let lo = analytic_epsilon(&base.with_ratio(22.0).unwrap(), 1, 1, a0).unwrap();
    let hi = analytic_epsilon(&base.with_ratio(70.0).unwrap(), 1, 1, a0).unwrap();
    assert!(lo / hi >= 400.0, "{}", lo / hi);
}

#[test]
fn calibration_needs_ten_points() {
    let rows = sweep(&[(0, 0)]);
    let c = column(&rows, 0);
    assert!(calibrate_a0(&c[..9], (0, 0)).is_err());
}

#[test]
fn overlap_integrals_device_a() {
    let c = tb_coefficients(&CircuitParams::device_a()).unwrap();
    // independent scipy dblquad values
    assert!((c.alpha / 2.4216865519e-07 - 1.0).abs() < 1e-6, "{}", c.alpha);
    assert!((c.beta / -5.6839578446e-02 - 1.0).abs() < 1e-6, "{}", c.beta);
    assert!((c.gamma / -2.6638552071e-06 - 1.0).abs() < 1e-6, "{}", c.gamma);
    assert!(c.gamma < 0.0);
    assert!(c.dominance() < 0.2);
}

#[test]
fn dominance_shrinks_with_ratio() {
    let base = CircuitParams::device_a();
    let a = tb_coefficients(&base.with_ratio(22.0).unwrap()).unwrap();
    let b = tb_coefficients(&base.with_ratio(70.0).unwrap()).unwrap();
    assert!(b.dominance() < a.dominance());
    assert!(a.dominance() < 0.2 && b.dominance() < 0.2);
}

#[test]
fn gamma_decreases_with_josephson_energy() {
    let p = CircuitParams::device_a();
    let q = CircuitParams::symmetric(22.0, 0.5, 0.2).unwrap();
    let a = tb_coefficients(&p).unwrap();
    let b = tb_coefficients(&q).unwrap();
    assert!(b.gamma.abs() < a.gamma.abs());
}

/// The Gaussian site orbital underestimates the tunnelling tail: at device-A
/// parameters |gamma| is a few kHz while a quarter of the numerical
/// dispersion is about a MHz.
#[test]
#[ignore = "harmonic site orbitals give |gamma| ~400x below epsilon_01 / 4"]
fn gamma_tracks_quarter_dispersion() {
    let p = CircuitParams::device_a();
    let c = tb_coefficients(&p).unwrap();
    let q = dispersion_epsilon(&p, (0, 1)).unwrap() / 4.0;
    let r = c.gamma.abs() / q;
    assert!(r > 1.0 / 3.0 && r < 3.0, "{r}");
}

#[test]
fn outside_transmon_regime_rejected() {
    let p = CircuitParams::symmetric(1.0, 0.5, 0.2).unwrap();
    assert!(tb_coefficients(&p).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn round_trip(s in 0.0f64..=0.5, d in 0.0f64..=0.5, eps in 0.01f64..50.0) {
        let pair = delta_fs(s, d, eps);
        let sols = invert_delta_fs(pair, eps).unwrap();
        let hit = sols.iter().any(|q| (q.0 - s).abs() < 1e-6 && (q.1 - d).abs() < 1e-6);
        prop_assert!(hit, "{sols:?} vs ({s}, {d})");
        for q in &sols {
            let back = delta_fs(q.0, q.1, eps);
            prop_assert!((back.df1_mhz - pair.df1_mhz).abs() <= 1e-9 * eps);
            prop_assert!((back.df2_mhz - pair.df2_mhz).abs() <= 1e-9 * eps);
        }
    }

    #[test]
    fn reflection_symmetry(s in 0.0f64..=0.5, d in 0.0f64..=0.5) {
        let a = delta_fs(s, d, 3.0);
        for (x, y) in [(1.0 - s, d), (s, 1.0 - d), (-s, d), (s, -d)] {
            let b = delta_fs(x, y, 3.0);
            prop_assert!((a.df1_mhz - b.df1_mhz).abs() < 1e-12);
            prop_assert!((a.df2_mhz - b.df2_mhz).abs() < 1e-12);
        }
    }

    #[test]
    fn model_bounded(s in -2.0f64..2.0, d in -2.0f64..2.0, eps in 0.0f64..1.0) {
        let m = DispersionModel::new(3.0, eps, (1, 1)).unwrap();
        let e = tb_energy(s, d, &m);
        prop_assert!(e >= 3.0 - eps / 4.0 - 1e-15 && e <= 3.0 + eps / 4.0 + 1e-15);
    }
}
