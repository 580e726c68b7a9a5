//! Phase chain, asymptotic rate, periodic density and the linearized self-consistency map.

use mfh_core::invariant::{gamma, j_of_alpha};
use mfh_core::periodic::{
    g_functional, linearized_g, periodic_density, phase_chain_grid, phase_chain_step, phase_invariant_measure,
    volterra_cross_check, ChainMethod, ChainOptions,
};
use mfh_core::{ModelSpec, PeriodicCurrent};
use num_complex::Complex64 as C;
use std::f64::consts::PI;

fn toy() -> ModelSpec {
    ModelSpec::toy(1.5, 0.1).unwrap()
}

fn spectral() -> ChainOptions {
    ChainOptions { nodes: 1024, modes: 64, method: Some(ChainMethod::StepSpectral) }
}

#[test]
fn shift_equivariance() {
    let a = PeriodicCurrent::from_coeffs(1.0, 0.7, vec![C::new(0.05, 0.02), C::new(-0.01, 0.015)]);
    let shift = 0.9;
    let s0 = phase_invariant_measure(&toy(), &a, &spectral()).unwrap();
    let s1 = phase_invariant_measure(&toy(), &a.shifted(shift), &spectral()).unwrap();
    for t in [0.0, 0.4, 1.3, 3.0, 4.2] {
        let (r0, r1) = (s0.rate_at(t + shift), s1.rate_at(t));
        assert!((r0 - r1).abs() < 1e-10, "t={t}: {r0} vs {r1}");
    }
}

#[test]
fn time_rescaling_consistency() {
    // in reduced time s = t/τ the drift, rate and current all scale by τ
    let tau = 0.6;
    let coeffs = vec![C::new(0.04, 0.0), C::new(0.0, -0.02)];
    let a = PeriodicCurrent::from_coeffs(1.0, tau, coeffs.clone());
    let scaled = PeriodicCurrent::from_coeffs(tau, 1.0, coeffs.iter().map(|c| c * tau).collect());
    let m = toy();
    let s = phase_invariant_measure(&m, &a, &spectral()).unwrap();
    let r = phase_invariant_measure(&m.time_scaled(tau), &scaled, &spectral()).unwrap();
    for k in 0..8 {
        let th = 2.0 * PI * k as f64 / 8.0;
        let (x, y) = (s.rate_at(tau * th), r.rate_at(th) / tau);
        assert!((x - y).abs() < 1e-9, "theta={th}: {x} vs {y}");
    }
}

#[test]
fn grid_chain_constant_current_smooth_model() {
    let m = ModelSpec::poly(2.0, 2.0, -0.5).unwrap();
    let g = gamma(&m, 1.0).unwrap();
    let sol = phase_chain_grid(&m, &PeriodicCurrent::constant_with_tau(1.0, 0.8), 256).unwrap();
    let sup = sol.rho.iter().map(|r| (r - g).abs()).fold(0.0, f64::max);
    assert!(sup < 1e-6, "{sup}");
    assert!(sol.doeblin_delta > 0.0);
    assert!(sol.normalization_error < 1e-10);
}

#[test]
fn mean_rate_depends_on_the_mean_to_first_order() {
    // mean ρ − γ scales like amp²
    let m = toy();
    let g = gamma(&m, 1.0).unwrap();
    let gap = |amp: f64| phase_chain_step(&m, &PeriodicCurrent::cosine(1.0, 1.0, amp), 1024, 64).unwrap().mean_rate() - g;
    let (g1, g2) = (gap(0.02), gap(0.04));
    assert!((g2 / g1 - 4.0).abs() < 0.05, "{g1} {g2}");
}

#[test]
fn volterra_cross_check_step_model() {
    let m = toy();
    let a = PeriodicCurrent::cosine(1.0, 1.0, 0.1);
    let sol = phase_chain_step(&m, &a, 2048, 64).unwrap();
    let gap = volterra_cross_check(&m, &a, &sol, 8, 1024).unwrap();
    assert!(gap < 1e-4, "{gap}");
}

#[test]
fn volterra_cross_check_smooth_model() {
    let m = ModelSpec::poly(2.0, 2.0, -0.5).unwrap();
    let a = PeriodicCurrent::cosine(1.0, 1.0, 0.2);
    let sol = phase_chain_grid(&m, &a, 512).unwrap();
    let gap = volterra_cross_check(&m, &a, &sol, 8, 512).unwrap();
    assert!(gap < 1e-4, "{gap}");
}

#[test]
fn periodic_density_mass_and_rate() {
    let m = ModelSpec::poly(2.0, 2.0, -0.5).unwrap();
    let a = PeriodicCurrent::cosine(1.0, 1.0, 0.3);
    let sol = phase_invariant_measure(&m, &a, &ChainOptions::default()).unwrap();
    let d = periodic_density(&m, &a, &sol, 4, 120).unwrap();
    assert!(d.mass_error() < 1e-6, "{}", d.mass_error());
    assert!(d.rate_error() < 1e-6, "{}", d.rate_error());
    assert!(d.density.iter().flatten().all(|&p| p >= 0.0));
}

#[test]
fn periodic_density_toy_constant_current_matches_invariant() {
    let m = toy();
    let a = PeriodicCurrent::constant_with_tau(1.0, 1.0);
    let sol = phase_invariant_measure(&m, &a, &ChainOptions::default()).unwrap();
    let d = periodic_density(&m, &a, &sol, 2, 100).unwrap();
    let inv = mfh_core::invariant::InvariantMeasure::new(&m, 1.0).unwrap();
    for (x, p) in d.x[0].iter().zip(&d.density[0]) {
        if (x - 1.0).abs() > 1e-6 {
            assert!((p - inv.density(*x)).abs() < 1e-6 * (1.0 + p), "x={x}: {p} vs {}", inv.density(*x));
        }
    }
}

#[test]
fn linearized_g_matches_finite_difference() {
    let m = toy();
    let (alpha, tau) = (0.5, 0.3);
    let dir = vec![C::new(1.0, 0.0), C::new(0.3, -0.2), C::new(0.0, 0.1)];
    let opts = spectral();
    let base = g_functional(&m, alpha, tau, &[], &opts).unwrap();
    let lin = linearized_g(&m, alpha, tau, &dir).unwrap();
    let eps = 1e-4;
    let plus: Vec<C> = dir.iter().map(|c| c * eps).collect();
    let minus: Vec<C> = dir.iter().map(|c| -c * eps).collect();
    let gp = g_functional(&m, alpha, tau, &plus, &opts).unwrap();
    let gm = g_functional(&m, alpha, tau, &minus, &opts).unwrap();
    for n in 1..=dir.len() {
        let fd = (gp.coeffs[n] - gm.coeffs[n]) / (2.0 * eps);
        let err = (fd - lin[n - 1]).norm();
        assert!(err < 1e-6 * (1.0 + lin[n - 1].norm()), "mode {n}: fd {fd} lin {}", lin[n - 1]);
    }
    assert!(base.coeffs.iter().all(|c| c.norm() < 1e-12), "G vanishes at h = 0");
    assert!((base.j - j_of_alpha(&m, alpha).unwrap()).abs() < 1e-15);
}
