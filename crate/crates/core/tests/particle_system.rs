//! Particle system: determinism, exchangeability, flow-only runs, step-size insensitivity
//! and oscillation detection.

use mfh_core::model::flow;
use mfh_core::particle::{
    detect_oscillation, simulate, simulate_state, CounterRng, InitLaw, ParticleState, SimConfig,
};
use mfh_core::{MfhError, ModelSpec, PeriodicCurrent};

fn poly10() -> ModelSpec {
    ModelSpec::poly(10.0, 2.0, -2.0).unwrap()
}

fn small(seed: u64) -> SimConfig {
    SimConfig { n: 3000, j: 0.8, init: InitLaw::Uniform01, t_end: 4.0, seed, ..SimConfig::default() }
}

#[test]
fn seed_determinism_across_thread_counts() {
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| simulate(&poly10(), &small(5)).unwrap())
    };
    let (a, b) = (run(1), run(3));
    assert_eq!(a.spike_counts, b.spike_counts);
    assert_eq!(a.raster, b.raster);
    assert_eq!(a.final_potentials, b.final_potentials);
    assert_ne!(simulate(&poly10(), &small(6)).unwrap().spike_counts, a.spike_counts);
}

#[test]
fn exchangeability() {
    let model = poly10();
    let cfg = small(9);
    let base = ParticleState::new(&model, cfg.n, cfg.j, cfg.init, cfg.seed).unwrap();
    let perm: Vec<usize> = (0..cfg.n).map(|i| (i * 7 + 3) % cfg.n).collect();
    let mut s1 = base.clone();
    let mut s2 = base.permuted(&perm);
    let cfg = SimConfig { raster_neurons: cfg.n, ..cfg };
    let o1 = simulate_state(&model, &mut s1, &cfg).unwrap();
    let o2 = simulate_state(&model, &mut s2, &cfg).unwrap();
    assert_eq!(o1.spike_counts, o2.spike_counts);
    // position i of the permuted run holds neuron perm[i]
    let mut r1: Vec<(usize, u64)> = o1.raster.iter().map(|(i, t)| (*i, t.to_bits())).collect();
    let mut r2: Vec<(usize, u64)> = o2.raster.iter().map(|(i, t)| (perm[*i], t.to_bits())).collect();
    r1.sort();
    r2.sort();
    assert_eq!(r1, r2);
}

#[test]
fn zero_rate_follows_the_flow() {
    let model = ModelSpec::new(
        mfh_core::model::Drift::Affine { c0: 1.5, c1: -1.0 },
        mfh_core::model::Rate::Zero,
    )
    .unwrap();
    let cfg = SimConfig { n: 1, j: 0.0, init: InitLaw::PointMass(0.2), t_end: 3.0, ..SimConfig::default() };
    let out = simulate(&model, &cfg).unwrap();
    assert_eq!(out.total_spikes, 0);
    let exact = flow(&model, &PeriodicCurrent::constant(0.0), 3.0, 0.0, 0.2).unwrap();
    assert!((out.final_potentials[0] - exact).abs() < 1e-12, "{} vs {exact}", out.final_potentials[0]);
}

#[test]
fn uncoupled_toy_rate_matches_gamma() {
    let model = ModelSpec::toy(1.5, 0.1).unwrap();
    let g = mfh_core::invariant::gamma(&model, 0.0).unwrap();
    let cfg = SimConfig { n: 20_000, j: 0.0, init: InitLaw::InvariantAt(0.0), t_end: 40.0, seed: 3, ..SimConfig::default() };
    let out = simulate(&model, &cfg).unwrap();
    let (mean, se) = out.batch_mean_rate(0.0, 8);
    assert!((mean - g).abs() < 4.0 * se, "{mean} vs {g} (se {se})");
}

#[test]
fn invariant_start_has_the_invariant_mean() {
    let model = ModelSpec::toy(1.5, 0.1).unwrap();
    let inv = mfh_core::invariant::InvariantMeasure::new(&model, 0.0).unwrap();
    let n = 200_000;
    let st = ParticleState::new(&model, n, 0.0, InitLaw::InvariantAt(0.0), 4).unwrap();
    let mean = st.potentials.iter().sum::<f64>() / n as f64;
    // ∫ x ν(dx) by quadrature on the density
    let m = 4000;
    let hi = inv.x_upper;
    let exact: f64 = (0..m).map(|k| {
        let x = (k as f64 + 0.5) * hi / m as f64;
        x * inv.density(x) * hi / m as f64
    }).sum();
    assert!((mean - exact).abs() < 5e-3, "{mean} vs {exact}");
}

#[test]
fn halving_the_step_changes_the_rate_by_less_than_one_se() {
    let model = poly10();
    let run = |cap: f64| {
        let cfg = SimConfig { n: 20_000, j: 0.0, init: InitLaw::Uniform01, t_end: 20.0, seed: 2, hazard_cap: cap, dt_max: 4.0 * cap, ..SimConfig::default() };
        simulate(&model, &cfg).unwrap().batch_mean_rate(5.0, 8)
    };
    let (r1, se1) = run(0.05);
    let (r2, se2) = run(0.025);
    assert!((r1 - r2).abs() < se1.max(se2), "{r1} vs {r2} (se {se1}, {se2})");
}

#[test]
fn rate_explosion_is_reported() {
    let cfg = SimConfig { n: 10, init: InitLaw::PointMass(3.0), dt_min: 1e-3, t_end: 1.0, ..SimConfig::default() };
    match simulate(&poly10(), &cfg) {
        Err(MfhError::RateExplosion { hazard }) => assert!(hazard > 1.0),
        other => panic!("expected RateExplosion, got {other:?}"),
    }
}

#[test]
fn oscillation_detector_on_synthetic_series() {
    let dt = 0.05;
    let rng = CounterRng::new(1);
    let noisy: Vec<f64> = (0..4000)
        .map(|k| 1.0 + 0.2 * (2.0 * std::f64::consts::PI * 0.8 * k as f64 * dt).sin() + 0.1 * (rng.uniform(k, 0, 9) - 0.5))
        .collect();
    let rep = detect_oscillation(&noisy, dt, 10.0, 4).unwrap();
    assert!(rep.oscillating && rep.snr > 5.0);
    assert!((rep.frequency - 0.8).abs() < 0.05 + 1.0 / (1000.0 * dt), "{}", rep.frequency);
    let flat = vec![1.3; 4000];
    let rep = detect_oscillation(&flat, dt, 10.0, 4).unwrap();
    assert!(!rep.oscillating && rep.snr < 5.0);
    assert!(matches!(detect_oscillation(&flat[..100], dt, 1.0, 4), Err(MfhError::SeriesTooShort { .. })));
}

#[test]
fn coupled_regime_oscillates() {
    let cfg = SimConfig { n: 5000, t_end: 30.0, seed: 1, ..small(1) };
    let out = simulate(&poly10(), &cfg).unwrap();
    let rep = detect_oscillation(&out.rate, cfg.dt_bin, 8.0, 4).unwrap();
    assert!(rep.oscillating, "{rep:?}");
    assert!((0.8..1.3).contains(&rep.frequency), "{rep:?}");
}
