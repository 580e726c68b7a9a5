//! Property-based checks of closed forms and structural invariants.

use mfh_core::hopf::{curve_denominator, imaginary_root_curve, u_eval};
use mfh_core::invariant::{gamma, InvariantMeasure};
use mfh_core::kernels::{survival, toy_survival};
use mfh_core::model::hitting_time;
use mfh_core::particle::CounterRng;
use mfh_core::periodic::{fourier_coeffs, fourier_eval};
use mfh_core::spectral::Transforms;
use mfh_core::{PeriodicCurrent, ToyParams};
use num_complex::Complex64 as C;
use proptest::prelude::*;

fn toy_params() -> impl Strategy<Value = ToyParams> {
    (1.05f64..4.0, 0.02f64..1.0, 0.05f64..4.0).prop_map(|(m, beta, alpha)| ToyParams::new(beta, m, alpha).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn toy_gamma_identity(p in toy_params()) {
        let g = gamma(&p.model(), p.alpha).unwrap();
        let closed = 1.0 / (hitting_time(&p, 0.0) + p.beta);
        prop_assert!((g - closed).abs() <= 1e-8 * closed.max(1.0), "{} vs {}", g, closed);
        prop_assert!((p.gamma() - closed).abs() <= 1e-12 * closed.max(1.0));
    }

    #[test]
    fn invariant_measure_is_normalized(p in toy_params()) {
        let inv = InvariantMeasure::new(&p.model(), p.alpha).unwrap();
        prop_assert!((inv.mass() - 1.0).abs() < 1e-8, "mass {}", inv.mass());
        prop_assert!((inv.rate_integral() - inv.gamma).abs() < 1e-8 * inv.gamma, "{} vs {}", inv.rate_integral(), inv.gamma);
    }

    #[test]
    fn hitting_time_decreases(p in toy_params(), x in 0.0f64..0.9, dx in 0.01f64..0.1) {
        prop_assert!(hitting_time(&p, x + dx) < hitting_time(&p, x));
        let faster = ToyParams::new(p.beta, p.m, p.alpha + 0.1).unwrap();
        prop_assert!(hitting_time(&faster, x) < hitting_time(&p, x));
    }

    #[test]
    fn toy_survival_closed_form(p in toy_params(), x in 0.0f64..1.5, u in 0.0f64..3.0) {
        let numeric = survival(&p.model(), &PeriodicCurrent::constant(p.alpha), u, 0.0, x).unwrap();
        let closed = toy_survival(p.m, p.beta, p.alpha, x, u);
        prop_assert!((numeric - closed).abs() < 1e-9, "{} vs {}", numeric, closed);
    }

    #[test]
    fn renewal_kernel_has_unit_mass(p in toy_params()) {
        let tr = Transforms::new(&p.model(), p.alpha, -0.5).unwrap();
        let k0 = tr.k_hat(C::new(0.0, 0.0)).unwrap();
        prop_assert!((k0 - 1.0).norm() < 1e-10, "{}", k0);
    }

    #[test]
    fn u_curve_identity(y in 0.1f64..48.0, omega in 0.3f64..3.0) {
        prop_assume!(curve_denominator(omega, y).abs() > 1e-6);
        let (b, d) = imaginary_root_curve(omega, y).unwrap();
        prop_assert!(u_eval(b, d, omega, C::new(0.0, y)).norm() < 1e-10);
    }

    #[test]
    fn fourier_roundtrip(c in proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1..8), mean in -2.0f64..2.0) {
        let mut coeffs = vec![C::new(mean, 0.0)];
        coeffs.extend(c.iter().map(|&(re, im)| C::new(re, im)));
        let n = 32;
        let samples: Vec<f64> = (0..n).map(|j| fourier_eval(&coeffs, 2.0 * std::f64::consts::PI * j as f64 / n as f64)).collect();
        let back = fourier_coeffs(&samples);
        for (k, a) in coeffs.iter().enumerate() {
            prop_assert!((back[k] - a).norm() < 1e-12);
        }
    }

    #[test]
    fn current_shift(c in proptest::collection::vec((-0.3f64..0.3, -0.3f64..0.3), 1..5), tau in 0.2f64..3.0, th in -5.0f64..5.0, t in 0.0f64..10.0) {
        let a = PeriodicCurrent::from_coeffs(1.0, tau, c.iter().map(|&(re, im)| C::new(re, im)).collect());
        prop_assert!((a.shifted(th).value(t) - a.value(t + th)).abs() < 1e-12);
    }

    #[test]
    fn counter_rng_is_a_pure_function(seed in any::<u64>(), id in any::<u64>(), k in any::<u32>()) {
        let r = CounterRng::new(seed);
        let u = r.uniform(id, k, 0);
        prop_assert!(u > 0.0 && u < 1.0);
        prop_assert_eq!(u.to_bits(), CounterRng::new(seed).uniform(id, k, 0).to_bits());
        prop_assert!(r.exp1(id, k) > 0.0);
    }
}
