use std::f64::consts::TAU;

use num_complex::Complex64;
use proptest::prelude::*;
use sbmap_core::analysis::*;
use sbmap_core::bath::BathSpec;
use sbmap_core::rwa::{lock_in_time, PoleExpansion, RwaModel};
use sbmap_core::sbm::{integrate_correlator, MapSeries, SbmModel, Solver, TimeGrid};

/// Sweep whose slice at every time is the line `(a cos φ) · (cos δ, sin δ)`
/// plus a transverse ripple `eps · sin 3φ` across it.
fn line_sweep(n: usize, times: &[f64], delta: f64, eps: f64, amp: impl Fn(f64) -> f64) -> SweepResult {
    let phis = angle_grid(n);
    let (sd, cd) = delta.sin_cos();
    let mut out = SweepResult {
        phis: phis.clone(),
        times: times.to_vec(),
        sx: Vec::new(),
        sy: Vec::new(),
        sz: Vec::new(),
        delta_phi: 0.0,
    };
    for &t in times {
        let a = amp(t);
        let along: Vec<f64> = phis.iter().map(|p| a * p.cos()).collect();
        let across: Vec<f64> = phis.iter().map(|p| a * eps * (3.0 * p).sin()).collect();
        out.sx.push(along.iter().zip(&across).map(|(u, v)| cd * u - sd * v).collect());
        out.sy.push(along.iter().zip(&across).map(|(u, v)| sd * u + cd * v).collect());
        out.sz.push(vec![0.0; n]);
    }
    out
}

fn short_series() -> MapSeries {
    let m = SbmModel::new(1.0, 0.0, BathSpec::zero_temperature(0.025, 1.0, 4.0)).unwrap();
    let grid = TimeGrid::covering(120.0, 0.25, 0.5).unwrap();
    integrate_correlator(&m, &grid, Solver::Quadrature).unwrap()
}

/// `e^{-γt} + B/(t₀² + t²)` with the two terms equal at `t_cross`.
fn crossover(gamma: f64, t_cross: f64) -> (Vec<f64>, Vec<f64>) {
    let t0 = 50.0;
    let b = (-gamma * t_cross).exp() * (t0 * t0 + t_cross * t_cross);
    let times: Vec<f64> = (1..=4000).map(|k| k as f64).collect();
    let values = times.iter().map(|&t| (-gamma * t).exp() + b / (t0 * t0 + t * t)).collect();
    (times, values)
}

fn opts() -> TpOptions {
    TpOptions {
        t_start: 0.75,
        slope_window: 25.0,
    }
}

#[test]
fn extract_tp_recovers_synthetic_crossover() {
    let (times, values) = crossover(0.03, 400.0);
    let r = extract_tp(&times, &values, &opts()).unwrap();
    assert!((r.t_p / 400.0 - 1.0).abs() < 0.02, "{r:?}");
    assert!((r.exp_rate - 0.03).abs() < 0.003);
    assert!((r.tail_exponent - 2.0).abs() < 0.05, "{r:?}");
    assert!(r.early_window.1 < 400.0 && r.late_window.0 >= 400.0, "{r:?}");
}

#[test]
fn extract_tp_rejects_short_series() {
    let times = [1.0, 2.0, 3.0];
    assert!(extract_tp(&times, &[1.0, 0.5, 0.25], &opts()).is_err());
}

#[test]
fn tail_exponent_of_power_law() {
    let times: Vec<f64> = (1..=2000).map(|k| k as f64).collect();
    for p in [4.0 / 3.0, 2.0, 4.0] {
        let v: Vec<f64> = times.iter().map(|t| 3.0 * t.powf(-p)).collect();
        assert!((tail_exponent(&times, &v).unwrap() + p).abs() < 1e-10);
    }
}

#[test]
fn quadrature_shift_recovers_synthetic_rotation() {
    let times = [100.0, 150.0, 200.0];
    for delta in [0.1, -0.0278, 1e-4, 1e-10] {
        let sw = line_sweep(128, &times, delta, 0.0, |t| t.powi(-2));
        let q = extract_quadrature_shift(&sw, 100.0).unwrap();
        assert!((q.delta_phi - delta).abs() < 1e-12 + 1e-9 * delta.abs(), "{q:?}");
        assert!(q.stable && q.contrast < 1e-12);
        assert!((q.slope - delta.tan()).abs() < 1e-12);
    }
}

#[test]
fn quadrature_shift_flags_drift() {
    let times = [100.0, 150.0];
    let mut sw = line_sweep(64, &times, 0.05, 0.0, |_| 1.0);
    let rot = line_sweep(64, &times, 0.08, 0.0, |_| 1.0);
    sw.sx[1] = rot.sx[1].clone();
    sw.sy[1] = rot.sy[1].clone();
    let q = extract_quadrature_shift(&sw, 100.0).unwrap();
    assert!(!q.stable && (q.drift - 0.6).abs() < 1e-9, "{q:?}");
}

#[test]
fn quadrature_shift_is_frame_consistent() {
    let series = short_series();
    let phis = angle_grid(64);
    let times = [80.0, 120.0];
    let bare = phi_sweep(&series, &phis, &times, 0.0).unwrap();
    let (d, _) = quadrature_angle(&bare, 80.0).unwrap();
    assert!(d.abs() > 1e-3);
    let rotated = phi_sweep(&series, &phis, &times, d).unwrap();
    let (residual, _) = quadrature_angle(&rotated, 80.0).unwrap();
    assert!(residual.abs() < 1e-9, "{d} {residual}");
}

#[test]
fn sweep_preserves_physicality() {
    let series = short_series();
    let sw = phi_sweep(&series, &angle_grid(32), &[0.0, 10.0, 60.0, 120.0], -0.03).unwrap();
    assert!(sw.max_bloch_norm() <= 1.0 + 1e-6);
    // φ = 0 of a rotated sweep starts on the rotated x axis
    assert!((sw.sx[0][0] - 1.0).abs() < 1e-14 && sw.sy[0][0].abs() < 1e-14);
    assert!(phi_sweep(&series, &[], &[1.0], 0.0).is_err());
    assert!(phi_sweep(&series, &[0.0], &[500.0], 0.0).is_err());
}

#[test]
fn envelope_normalization_recovers_pattern() {
    let times: Vec<f64> = (1..=400).map(|k| k as f64).collect();
    let sw = line_sweep(64, &times, 0.0, 0.0, |t| 0.3 * t.powf(-4.0 / 3.0));
    let n = envelope_normalize(&sw);
    for k in [100, 200, 300] {
        assert!(n.valid[k]);
        for (j, p) in sw.phis.iter().enumerate() {
            assert!((n.sx[k][j] - p.cos()).abs() < 1e-3, "k={k} j={j}");
            assert!(n.sy[k][j].abs() < 1e-12);
        }
    }
    let mut zero = sw.clone();
    zero.sx[5] = vec![0.0; 64];
    let n = envelope_normalize(&zero);
    assert!(!n.valid[5] && n.sx[5].iter().all(|v| *v == 0.0));
    assert!(n.sx.iter().flatten().all(|v| v.abs() <= 1.0));
}

#[test]
fn basin_gaps_of_a_known_pattern() {
    let eps = 1e-3;
    let sw = line_sweep(4096, &[1000.0], 0.02, eps, |_| 1e-4);
    let b = basin_classify(&sw, 1000.0, 0.0).unwrap();
    assert!((b.axis - 0.02).abs() < 1e-9);
    assert!((b.residual / 1e-4 - eps).abs() < 1e-6);
    // |cos φ| ≤ 3ε around φ = π/2 and 3π/2
    assert_eq!(b.gap_widths.len(), 2);
    for w in &b.gap_widths {
        let expected = 2.0 * (3.0 * eps).asin();
        assert!((w - expected).abs() < 0.05 * expected, "{w} vs {expected}");
    }
    assert_eq!(b.basin_segments(), 3);
    assert_eq!(b.labels[0], Basin::Plus);
    assert_eq!(b.labels[2048], Basin::Minus);
}

#[test]
fn basin_window_averages_breathing() {
    // The ripple alternates sign between the two slices and averages out.
    let mut sw = line_sweep(256, &[10.0, 11.0], 0.0, 0.01, |_| 1.0);
    let flipped = line_sweep(256, &[11.0], 0.0, -0.01, |_| 1.0);
    sw.sy[1] = flipped.sy[0].clone();
    let (_, y) = averaged_slice(&sw, 10.5, 2.0);
    assert!(y.iter().all(|v| v.abs() < 1e-15));
    let (_, y) = averaged_slice(&sw, 10.0, 0.0);
    assert_eq!(y, sw.sy[0]);
}

#[test]
fn basin_labels_are_pi_symmetric() {
    let series = short_series();
    let phis = angle_grid(256);
    let sw = phi_sweep(&series, &phis, &[110.0, 120.0], 0.0).unwrap();
    let b = basin_classify(&sw, 120.0, 0.0).unwrap();
    let flip = |l: Basin| match l {
        Basin::Plus => Basin::Minus,
        Basin::Minus => Basin::Plus,
        Basin::Gap => Basin::Gap,
    };
    for j in 0..128 {
        assert_eq!(b.labels[j + 128], flip(b.labels[j]), "j={j}");
    }
}

#[test]
fn basin_classify_rejects_empty_signal() {
    let sw = line_sweep(16, &[1.0], 0.0, 0.0, |_| 0.0);
    assert!(basin_classify(&sw, 1.0, 0.0).is_err());
}

#[test]
fn choi_of_davies_only_series_vanishes() {
    let mut series = short_series();
    series.phi_map = series.times.iter().map(|&t| series.davies_map(t)).collect();
    let r = choi_report(&series, 10.0);
    assert!(r.negativity.iter().all(|n| n.abs() < 1e-14));
    assert_eq!(r.last_negative, None);
    assert!(r.late_max_abs < 1e-14);
}

#[test]
fn choi_of_weak_coupling_series_is_bounded() {
    let series = short_series();
    let r = choi_report(&series, 20.0);
    assert!(r.min >= -1e-5, "{}", r.min);
    assert!(r.late_max_abs < 1e-9);
    if let Some(t) = r.last_negative {
        assert!(t < 5.0 / 4.0, "{t}");
    }
}

fn sub_ohmic() -> RwaModel {
    RwaModel::new(1.0, BathSpec::zero_temperature(0.01, 1.0 / 3.0, 4.0)).unwrap()
}

#[test]
fn rwa_coherence_locks_to_correlator() {
    let m = sub_ohmic();
    let bath = m.bath().unwrap();
    let tp = lock_in_time(&m).unwrap().numeric;
    let times: Vec<f64> = (0..=40).map(|k| tp * (1.0 + 9.0 * k as f64 / 40.0)).collect();
    let pe = PoleExpansion::new(&m).unwrap();
    let f: Vec<Complex64> = times.iter().map(|&t| pe.eval(t).unwrap()).collect();
    let c: Vec<Complex64> = times.iter().map(|&t| bath.correlation(t).unwrap()).collect();
    let r = phase_lock_check(&times, &f, &c, 3.0 * tp).unwrap();
    assert!(r.locked, "{}", r.max_after);
    // a free precession never locks
    let davies: Vec<Complex64> = times
        .iter()
        .map(|&t| Complex64::new(-0.01 * t, -1.02 * t).exp())
        .collect();
    let r = phase_lock_check(&times, &davies, &c, 3.0 * tp).unwrap();
    assert!(!r.locked);
    assert!(phase_lock_check(&times, &f, &c, 20.0 * tp).is_err());
}

#[test]
fn phase_slip_at_lock_in() {
    let m = sub_ohmic();
    let tp = lock_in_time(&m).unwrap().numeric;
    let pe = PoleExpansion::new(&m).unwrap();
    let jump_near = |centre: f64, half: usize| {
        let times: Vec<f64> = (0..=2 * half).map(|k| centre + 0.25 * (k as f64 - half as f64)).collect();
        let f: Vec<Complex64> = times.iter().map(|&t| pe.eval(t).unwrap()).collect();
        largest_phase_jump(&times, &f).unwrap()
    };
    // the carrier alone advances ~0.25 rad per sample
    let (t, jump) = jump_near(tp, 32);
    assert!(jump > 1.0, "jump {jump} at {t}");
    assert!((t / tp - 1.0).abs() < 0.02, "{t} vs {tp}");
    let (_, quiet) = jump_near(0.8 * tp, 6);
    assert!(quiet < 0.4, "{quiet}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn extract_tp_is_scale_equivariant(scale in 1e-6f64..1e6) {
        let (times, values) = crossover(0.03, 400.0);
        let base = extract_tp(&times, &values, &opts()).unwrap().t_p;
        let scaled: Vec<f64> = values.iter().map(|v| v * scale).collect();
        let got = extract_tp(&times, &scaled, &opts()).unwrap().t_p;
        prop_assert!((got / base - 1.0).abs() < 1e-9);
    }

    #[test]
    fn quadrature_shift_recovery(log_d in -10.0f64..-1.0, sign in prop::bool::ANY, amp in 1e-8f64..1.0) {
        let d = if sign { 10f64.powf(log_d) } else { -(10f64.powf(log_d)) };
        let sw = line_sweep(64, &[50.0, 75.0], d, 0.0, |_| amp);
        let q = extract_quadrature_shift(&sw, 50.0).unwrap();
        prop_assert!((q.delta_phi - d).abs() < 1e-12 + 1e-8 * d.abs());
    }

    #[test]
    fn basin_labels_flip_with_half_turn(phase in 0.0f64..TAU, eps in 1e-4f64..1e-2) {
        let n = 512;
        let mut sw = line_sweep(n, &[1.0], 0.0, eps, |_| 1.0);
        // rotate the pattern in φ by a random phase
        let shift = (phase / TAU * n as f64) as usize;
        sw.sx[0].rotate_left(shift);
        sw.sy[0].rotate_left(shift);
        let b = basin_classify(&sw, 1.0, 0.0).unwrap();
        let mut mirrored = sw.clone();
        mirrored.sx[0] = (0..n).map(|j| -sw.sx[0][(j + n / 2) % n]).collect();
        mirrored.sy[0] = (0..n).map(|j| -sw.sy[0][(j + n / 2) % n]).collect();
        let c = basin_classify(&mirrored, 1.0, 0.0).unwrap();
        prop_assert_eq!(b.labels, c.labels);
    }
}
