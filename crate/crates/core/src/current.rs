//! Periodic input currents a(t) = alpha + h(t / tau), with h a zero-mean 2π-periodic function.

use num_complex::Complex64 as C;
use std::f64::consts::PI;

/// A T-periodic current with T = 2πτ. The zero-mean part is stored through its complex
/// Fourier coefficients `c_n`, n = 1..=N, so that h(θ) = 2 Re Σ c_n e^{inθ}.
/// A constant current is the special case with no modes.
#[derive(Clone, Debug, PartialEq)]
pub struct PeriodicCurrent {
    pub tau: f64,
    pub alpha: f64,
    pub coeffs: Vec<C>,
}

impl PeriodicCurrent {
    pub fn constant(alpha: f64) -> Self {
        Self { tau: 1.0, alpha, coeffs: Vec::new() }
    }

    pub fn constant_with_tau(alpha: f64, tau: f64) -> Self {
        Self { tau, alpha, coeffs: Vec::new() }
    }

    pub fn from_coeffs(alpha: f64, tau: f64, coeffs: Vec<C>) -> Self {
        Self { tau, alpha, coeffs }
    }

    /// alpha + amp·cos(θ)
    pub fn cosine(alpha: f64, tau: f64, amp: f64) -> Self {
        Self { tau, alpha, coeffs: vec![C::new(0.5 * amp, 0.0)] }
    }

    /// Builds the current from samples of h on the uniform grid θ_j = 2πj/n, keeping
    /// `n_modes` harmonics. The sample mean is discarded.
    pub fn from_samples(alpha: f64, tau: f64, samples: &[f64], n_modes: usize) -> Self {
        let n = samples.len();
        let coeffs = (1..=n_modes.min(n / 2))
            .map(|k| {
                let mut acc = C::new(0.0, 0.0);
                for (j, &v) in samples.iter().enumerate() {
                    let th = 2.0 * PI * (k * j) as f64 / n as f64;
                    acc += v * C::new(th.cos(), -th.sin());
                }
                acc / n as f64
            })
            .collect();
        Self { tau, alpha, coeffs }
    }

    pub fn period(&self) -> f64 {
        2.0 * PI * self.tau
    }

    pub fn n_modes(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_constant(&self) -> bool {
        self.coeffs.iter().all(|c| c.norm() == 0.0)
    }

    /// h at reduced time θ.
    pub fn h_reduced(&self, theta: f64) -> f64 {
        let mut acc = 0.0;
        if self.coeffs.is_empty() {
            return 0.0;
        }
        let e1 = C::new(theta.cos(), theta.sin());
        let mut e = e1;
        for c in &self.coeffs {
            acc += 2.0 * (c * e).re;
            e *= e1;
        }
        acc
    }

    /// a(t) in physical time.
    pub fn value(&self, t: f64) -> f64 {
        self.alpha + self.h_reduced(t / self.tau)
    }

    /// h sampled on the uniform grid θ_j = 2πj/n.
    pub fn samples(&self, n: usize) -> Vec<f64> {
        (0..n).map(|j| self.h_reduced(2.0 * PI * j as f64 / n as f64)).collect()
    }

    /// Lower bound of a over a period, by dense sampling.
    pub fn min_value(&self) -> f64 {
        if self.is_constant() {
            return self.alpha;
        }
        let n = 64 * self.n_modes().max(1) + 256;
        self.samples(n).into_iter().fold(f64::INFINITY, f64::min) + self.alpha
    }

    /// (S_θ a)(t) = a(t + θ), θ in physical time.
    pub fn shifted(&self, theta: f64) -> Self {
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(k, c)| {
                let ph = (k + 1) as f64 * theta / self.tau;
                c * C::new(ph.cos(), ph.sin())
            })
            .collect();
        Self { tau: self.tau, alpha: self.alpha, coeffs }
    }

    /// The current τ·a(τ·) seen in reduced time, which has τ = 1.
    pub fn rescaled(&self) -> Self {
        Self {
            tau: 1.0,
            alpha: self.alpha * self.tau,
            coeffs: self.coeffs.iter().map(|c| c * self.tau).collect(),
        }
    }

    /// ∫_s^t e^{c1 (t-u)} a(u) du, exact.
    pub(crate) fn exp_weighted_integral(&self, c1: f64, s: f64, t: f64) -> f64 {
        let d = t - s;
        let mut acc = self.alpha * expm1_over(c1, d);
        if self.coeffs.is_empty() {
            return acc;
        }
        let ec = (c1 * d).exp();
        for (k, c) in self.coeffs.iter().enumerate() {
            let w = (k + 1) as f64 / self.tau;
            let et = C::new((w * t).cos(), (w * t).sin());
            let es = C::new((w * s).cos(), (w * s).sin());
            let v = (et - ec * es) / C::new(-c1, w);
            acc += 2.0 * (c * v).re;
        }
        acc
    }
}

/// ∫_0^d e^{c v} dv
pub(crate) fn expm1_over(c: f64, d: f64) -> f64 {
    let x = c * d;
    if x.abs() < 1e-8 {
        d * (1.0 + 0.5 * x)
    } else {
        x.exp_m1() / c
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_roundtrip() {
        let a = PeriodicCurrent::from_coeffs(0.3, 0.7, vec![C::new(0.02, -0.01), C::new(0.0, 0.005)]);
        let s = a.samples(64);
        let b = PeriodicCurrent::from_samples(0.3, 0.7, &s, 2);
        for (x, y) in a.coeffs.iter().zip(&b.coeffs) {
            assert!((x - y).norm() < 1e-15);
        }
        let mean: f64 = s.iter().sum::<f64>() / 64.0;
        assert!(mean.abs() < 1e-16);
    }

    #[test]
    fn shift_moves_the_profile() {
        let a = PeriodicCurrent::cosine(1.0, 0.5, 0.1);
        let b = a.shifted(0.3);
        assert!((b.value(0.2) - a.value(0.5)).abs() < 1e-15);
    }

    #[test]
    fn weighted_integral_matches_quadrature() {
        let a = PeriodicCurrent::from_coeffs(0.4, 0.3, vec![C::new(0.1, 0.05), C::new(-0.02, 0.0)]);
        let g = crate::quadrature::GaussRule::new(40);
        let (s, t, c1) = (-0.4, 0.9, -1.3);
        let q = g.integrate(s, t, |u| (c1 * (t - u)).exp() * a.value(u));
        assert!((q - a.exp_weighted_integral(c1, s, t)).abs() < 1e-13);
    }
}
