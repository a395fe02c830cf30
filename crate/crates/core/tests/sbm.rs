use std::f64::consts::{PI, TAU};

use nalgebra::Matrix2;
use num_complex::Complex64;
use proptest::prelude::*;
use sbmap_core::bath::{Bath, BathSpec, Beta};
use sbmap_core::sbm::*;
use sbmap_core::superop::{vec_index, QubitState, Superop};

fn model(lambda2: f64, s: f64, xi: f64) -> SbmModel {
    SbmModel::new(1.0, xi, BathSpec::zero_temperature(lambda2, s, 4.0)).unwrap()
}

fn rotation(theta: f64) -> Superop {
    let u = Matrix2::new(
        Complex64::from_polar(1.0, -0.5 * theta),
        Complex64::new(0.0, 0.0),
        Complex64::new(0.0, 0.0),
        Complex64::from_polar(1.0, 0.5 * theta),
    );
    Superop::sandwich(&u, &u.adjoint())
}

/// Population block (indices 0, 3) of a superoperator.
fn population_block(s: &Superop) -> Superop {
    let mut out = Superop::zero();
    for i in [0, 3] {
        for j in [0, 3] {
            out.m[(i, j)] = s.m[(i, j)];
        }
    }
    out
}

fn bias_block(s: &Superop) -> Superop {
    let mut out = Superop::zero();
    for i in [1, 2] {
        for j in [0, 3] {
            out.m[(i, j)] = s.m[(i, j)];
        }
    }
    out
}

#[test]
fn davies_rates_at_zero_temperature() {
    let m = model(0.025, 1.0, 0.0);
    let r = davies_rates(&m).unwrap();
    // J(Δ) = 2πλ² Δ^s ω_c^{1-s} e^{-Δ/ω_c}
    let j = TAU * 0.025 * (-0.25f64).exp();
    assert!((r.j_plus - j).abs() < 1e-12 * j);
    assert_eq!(r.j_minus, 0.0);
    assert_eq!(r.j_zero, 0.0);
    // T₂ = 2T₁
    assert!((r.nu2 - 0.5 * r.nu1).abs() < 1e-15);
    assert!((r.delta_tilde - 1.0).abs() < 0.1);
}

#[test]
fn davies_generator_fixed_point() {
    for xi in [0.0, 0.3] {
        let l0 = davies_generator(&model(0.05, 0.5, xi)).unwrap();
        let rho = Superop::identity().apply_state(&QubitState::ground());
        let v = l0.apply_state(&rho);
        assert!(v.rho.norm() < 1e-15);
        let late = l0.expm(500.0).apply_state(&QubitState::equator(0.7));
        assert!((late.rho - QubitState::ground().rho).norm() < 1e-10);
    }
}

#[test]
fn finite_temperature_detailed_balance() {
    let spec = BathSpec {
        beta: Beta::Finite(2.0),
        ..BathSpec::zero_temperature(0.02, 1.0, 4.0)
    };
    let m = SbmModel::new(1.0, 0.0, spec).unwrap();
    let r = davies_rates(&m).unwrap();
    assert!((r.j_minus / r.j_plus - (-2.0f64).exp()).abs() < 1e-9);
}

#[test]
fn model_validation() {
    assert!(SbmModel::new(0.0, 0.0, BathSpec::zero_temperature(0.01, 1.0, 4.0)).is_err());
    assert!(SbmModel::new(1.0, f64::NAN, BathSpec::zero_temperature(0.01, 1.0, 4.0)).is_err());
    assert!(SbmModel::new(1.0, 0.0, BathSpec::zero_temperature(-0.01, 1.0, 4.0)).is_err());
}

#[test]
fn resummed_generator_starts_hamiltonian() {
    let m = model(0.025, 1.0, 0.2);
    let l = resummed_generator(&m, 0.0).unwrap();
    assert!((l.m - m.hamiltonian().m).norm() < 1e-14);
}

#[test]
fn resummed_generator_secular_part_approaches_davies() {
    // The non-secular entries stay O(λ²); the secular (phase-covariant) part
    // converges to L₀ as the bath tail dies out.
    let secular = [(0, 0), (0, 3), (3, 0), (3, 3), (1, 1), (2, 2)];
    let dist = |l2: f64| {
        let m = model(l2, 1.0, 0.0);
        let l = resummed_generator(&m, 60.0).unwrap();
        let l0 = davies_generator(&m).unwrap();
        secular.iter().map(|&ij| (l.m[ij] - l0.m[ij]).norm()).fold(0.0, f64::max) / l2
    };
    let (a, b) = (dist(1e-3), dist(2.5e-4));
    assert!(a < 0.05, "{a}");
    assert!(b < a, "{a} {b}");
}

#[test]
fn correlator_rk4_basic_contract() {
    let m = model(0.025, 1.0, 0.05);
    let grid = TimeGrid::covering(40.0, 0.0125, 0.5).unwrap();
    let series = integrate_correlator(&m, &grid, Solver::Rk4).unwrap();
    assert_eq!(series.times.len(), grid.samples + 1);
    assert_eq!(series.c[0].m, Superop::zero().m);
    assert!((series.phi_map[0].m - Superop::identity().m).norm() < 1e-15);
    assert_eq!(series.meta.cross_check.len(), CROSS_CHECK_SAMPLES);
    for &(t, d) in &series.meta.cross_check {
        assert!(d < CROSS_CHECK_LIMIT, "t={t}: {d}");
    }
    assert!(series.meta.trace_defect < 1e-10);
    assert!(series.meta.hermiticity_defect < 1e-10);
    // Φ = e^{L₀t} + C at every sample
    for k in [10, 40, 80] {
        let t = series.times[k];
        let diff = series.phi_map[k].m - series.davies_map(t).m - series.c[k].m;
        assert!(diff.norm() < 1e-14);
    }
}

#[test]
fn rk4_rejects_coarse_steps() {
    let m = model(0.025, 1.0, 0.0);
    let grid = TimeGrid::covering(10.0, 0.02, 0.5).unwrap();
    assert!(integrate_correlator(&m, &grid, Solver::Rk4).is_err());
}

#[test]
fn quadrature_and_rk4_agree() {
    let m = model(0.01, 1.0 / 3.0, 0.1);
    let grid = TimeGrid::covering(30.0, 0.0125, 1.0).unwrap();
    let rk = integrate_correlator(&m, &grid, Solver::Rk4).unwrap();
    let qd = correlator_quadrature(&m, &rk.times).unwrap();
    for (a, b) in rk.c.iter().zip(&qd) {
        assert!((a.m - b.m).norm() < 1e-8);
    }
}

#[test]
fn short_time_correlator_slope() {
    // L(0) is the bare Hamiltonian part, so Ċ(0) = L(0) - L₀.
    let m = model(0.025, 1.0, 0.0);
    let l0 = davies_generator(&m).unwrap();
    let slope = l0.m - m.hamiltonian().m;
    let c = correlator_quadrature(&m, &[1e-4, 2e-4]).unwrap();
    for (k, t) in [1e-4, 2e-4].iter().enumerate() {
        let expected = slope * Complex64::from(-t);
        assert!((c[k].m - expected).norm() < 1e-2 * expected.norm());
    }
}

#[test]
fn late_blocks_match_asymptotic_forms() {
    for xi in [0.0, 0.05] {
        let m = model(0.025, 1.0, xi);
        let nu2 = davies_rates(&m).unwrap().nu2;
        let (t20, t30) = (20.0 / nu2, 30.0 / nu2);
        let c = correlator_quadrature(&m, &[t20, t30]).unwrap();
        let tol = 4.0 * m.bath.lambda2;

        let pcp = pcp_asymptote(&m).unwrap();
        let err = (population_block(&c[0]).m - pcp.m).norm() / pcp.norm();
        assert!(err < tol, "xi={xi}: PCP {err}");

        let qcp = qcp_asymptote(&m).unwrap();
        let got = bias_block(&c[0]);
        if xi == 0.0 {
            assert!(got.norm() < 1e-12);
        } else {
            let err = (got.m - qcp.m).norm() / qcp.norm();
            assert!(err < tol, "xi={xi}: QCP {err}");
        }

        let q = qcq_asymptote(&m, t30).unwrap();
        let block = Matrix2::new(c[1].m[(1, 1)], c[1].m[(1, 2)], c[1].m[(2, 1)], c[1].m[(2, 2)]);
        let err = (block - q).norm() / q.norm();
        assert!(err < tol, "xi={xi}: QCQ {err}");
    }
}

#[test]
fn qcq_asymptote_requires_late_time() {
    let m = model(0.025, 1.0, 0.0);
    assert!(qcq_asymptote(&m, 10.0).is_err());
}

#[test]
fn pcp_sign_and_mean_force_state() {
    let m = model(0.025, 1.0, 0.05);
    let slope = absorption_slope(&m).unwrap();
    // exact moment against a central difference of S
    let bath = m.bath().unwrap();
    let h = 1e-4;
    let fd = (bath.lamb_shift(-1.0 + h).unwrap() - bath.lamb_shift(-1.0 - h).unwrap()) / (2.0 * h);
    assert!((slope - fd).abs() < 1e-6 * fd.abs());
    assert!(slope < 0.0);
    let mf = mean_force_state(&m).unwrap();
    assert!((mf.trace() - 1.0).norm() < 1e-15);
    assert!(mf.hermiticity_defect() < 1e-15);
    assert!(mf.rho[(0, 0)].re > 0.0 && mf.rho[(0, 0)].re < 0.05);
    assert!((mf.rho[(1, 0)].re - bias_coherence(&m).unwrap()).abs() < 1e-15);
}

#[test]
fn late_state_relaxes_to_mean_force() {
    let m = model(0.025, 1.0, 0.05);
    let nu2 = davies_rates(&m).unwrap().nu2;
    let t = 20.0 / nu2;
    let grid = TimeGrid::covering(t, 0.25, 2.5).unwrap();
    let series = integrate_correlator(&m, &grid, Solver::Quadrature).unwrap();
    let mf = mean_force_state(&m).unwrap();
    for rho0 in [QubitState::excited(), QubitState::ground(), QubitState::equator(1.1)] {
        let ev = evolve(&series, &rho0, series.meta.grid.t_max()).unwrap();
        let p = ev.state.rho[(0, 0)].re;
        let p_mf = mf.rho[(0, 0)].re;
        assert!((p - p_mf).abs() < 4.0 * m.bath.lambda2 * p_mf, "{p} vs {p_mf}");
        let c = ev.state.rho[(1, 0)];
        let c_mf = mf.rho[(1, 0)];
        assert!((c - c_mf).norm() < 0.2 * c_mf.norm(), "{c} vs {c_mf}");
    }
}

#[test]
fn evolve_contract() {
    let m = model(0.025, 1.0, 0.0);
    let grid = TimeGrid::covering(20.0, 0.25, 0.5).unwrap();
    let series = integrate_correlator(&m, &grid, Solver::Quadrature).unwrap();
    let rho0 = QubitState::equator(0.4);
    let ev = evolve(&series, &rho0, 7.3).unwrap();
    assert!((ev.state.trace() - 1.0).norm() < 1e-12);
    assert!(ev.state.hermiticity_defect() < 1e-15);
    assert!(ev.hermiticity_defect < 1e-12);
    assert!(evolve(&series, &rho0, 25.0).is_err());
    assert!(evolve(&series, &rho0, -1.0).is_err());
    // a map that loses trace is rejected
    let mut bad = Superop::identity();
    bad.m[(0, 0)] = Complex64::new(0.9, 0.0);
    assert!(apply_map(&bad, &QubitState::excited(), 1.0).is_err());
}

#[test]
fn van_hove_map_converges_to_davies() {
    // At fixed τ = λ²t the correction C shrinks linearly with λ².
    let tau = 1.0;
    let c = |l2: f64| {
        let m = model(l2, 1.0, 0.1);
        correlator_quadrature(&m, &[tau / l2]).unwrap()[0].norm()
    };
    let (a, b) = (c(0.02), c(0.01));
    let ratio = a / b;
    assert!((1.6..2.4).contains(&ratio), "{a} {b} {ratio}");
}

#[test]
fn projection_predictor_shape() {
    let m = model(0.025, 1.0, 0.0);
    // nodes at φ = (s+1)π/2 ± π/2
    for phi in [PI / 2.0, 3.0 * PI / 2.0] {
        assert!(projection_predictor(&m, phi, 100.0, 1.0).abs() < 1e-15);
    }
    // cos(φ - π) for s = 1
    let v = projection_predictor(&m, 0.0, 10.0, 2.0);
    assert!((v + 2.0 * 10f64.powi(-2)).abs() < 1e-15);
    let samples: Vec<(f64, f64, f64)> = (0..24)
        .map(|k| {
            let phi = TAU * k as f64 / 24.0;
            let t = 300.0 + 10.0 * k as f64;
            (phi, t, projection_predictor(&m, phi, t, 0.37))
        })
        .collect();
    assert!((fit_projection_prefactor(&m, &samples).unwrap() - 0.37).abs() < 1e-12);
    assert!(fit_projection_prefactor(&m, &[]).is_err());
}

#[test]
fn time_grid_covering() {
    let g = TimeGrid::covering(100.0, 0.0125, 0.5).unwrap();
    assert_eq!(g.stride, 40);
    assert!(g.t_max() >= 100.0);
    assert_eq!(g.times().len(), g.samples + 1);
    assert!(TimeGrid::covering(100.0, 0.1, 0.05).is_err());
    assert!(TimeGrid::covering(-1.0, 0.1, 0.5).is_err());
}

#[test]
fn map_series_round_trips_through_json() {
    let m = model(0.025, 1.0, 0.0);
    let grid = TimeGrid::covering(2.0, 0.25, 0.5).unwrap();
    let series = integrate_correlator(&m, &grid, Solver::Quadrature).unwrap();
    let text = serde_json::to_string(&series.meta).unwrap();
    let back: MapMeta = serde_json::from_str(&text).unwrap();
    assert_eq!(back, series.meta);
}

fn model_strategy() -> impl Strategy<Value = SbmModel> {
    (0.002f64..0.05, 0.3f64..3.0, -0.5f64..0.5, 0.5f64..2.0, 2.0f64..8.0).prop_map(|(l2, s, xi, d, wc)| {
        SbmModel::new(d, xi, BathSpec::zero_temperature(l2, s, wc)).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn resummed_generator_preserves_trace_and_hermiticity(m in model_strategy(), t in 0.01f64..80.0) {
        let l = resummed_generator(&m, t).unwrap();
        let scale = l.norm();
        prop_assert!(l.generator_trace_defect() < 1e-12 * scale);
        prop_assert!(l.hermiticity_covariance_defect() < 1e-12 * scale);
    }

    #[test]
    fn davies_semigroup_composes(m in model_strategy(), t in 0.0f64..50.0, u in 0.0f64..50.0) {
        let l0 = davies_generator(&m).unwrap();
        let lhs = l0.expm(t).compose(&l0.expm(u));
        let rhs = l0.expm(t + u);
        prop_assert!((lhs.m - rhs.m).norm() < 1e-12);
        prop_assert!(rhs.map_trace_defect() < 1e-12);
    }

    #[test]
    fn davies_is_phase_covariant(m in model_strategy(), theta in 0.0f64..TAU, t in 0.0f64..30.0) {
        let l0 = davies_generator(&m).unwrap();
        let u = rotation(theta);
        prop_assert!(u.commutator(&l0).norm() < 1e-13);
        let e = l0.expm(t);
        prop_assert!(u.commutator(&e).norm() < 1e-13);
    }

    #[test]
    fn van_hove_correction_contracts(m in model_strategy(), tau in 0.05f64..0.5) {
        // ‖Φ(τ/λ²) - e^{L₀τ/λ²}‖ shrinks when λ² is halved at fixed τ.
        let gap = |m: &SbmModel| correlator_quadrature(m, &[tau / m.bath.lambda2]).unwrap()[0].norm();
        let half = m.scaled(0.5);
        prop_assert!(gap(&half) < gap(&m));
    }

    #[test]
    fn davies_map_is_completely_positive(m in model_strategy(), t in 0.0f64..100.0) {
        let e = davies_generator(&m).unwrap().expm(t);
        prop_assert!(sbmap_core::superop::choi_negativity(&e) > -1e-14);
    }
}

#[test]
fn vec_index_convention() {
    // ρ21 sits at index 1
    let rho = QubitState::equator(0.3);
    let v = sbmap_core::superop::vectorize(&rho);
    assert!((v.v[vec_index(1, 0)] - Complex64::from_polar(0.5, 0.3)).norm() < 1e-15);
    let _ = Bath::new(BathSpec::zero_temperature(0.01, 1.0, 4.0)).unwrap();
}
