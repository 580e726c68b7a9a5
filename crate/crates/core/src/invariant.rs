//! Invariant measures under constant current and the self-consistency map α ↦ J(α).

use crate::error::{MfhError, Result};
use crate::model::ModelSpec;
use crate::quadrature::{panels, tanh_sinh, GaussRule};
use crate::trajectory::Trajectory;
use serde::Serialize;

/// γ(α) from 1/γ = ∫_0^∞ H(t) dt along the path started at 0.
pub fn gamma_of(tr: &Trajectory) -> Result<f64> {
    if tr.kappa <= 0.0 {
        return Err(MfhError::InvalidParameter(format!(
            "no invariant measure at alpha = {}: the hazard does not stay positive",
            tr.alpha
        )));
    }
    if let (Some((_, height)), Some(tc)) = (tr.model().step(), tr.t_cross) {
        return Ok(1.0 / (tc + 1.0 / height));
    }
    let gl = GaussRule::new(16);
    let width = (1.0 / tr.kappa).clamp(0.01, 0.25);
    let mut breaks = tr.breakpoints();
    breaks.extend([1e-4, 1e-3, 1e-2]);
    let w = tr.t_max;
    let mut mean = 0.0;
    for (a, b) in panels(0.0, w, width, &breaks) {
        mean += gl.integrate(a, b, |t| tr.survival(t));
    }
    mean += tr.survival(w) / tr.kappa;
    Ok(1.0 / mean)
}

pub fn gamma(model: &ModelSpec, alpha: f64) -> Result<f64> {
    gamma_of(&Trajectory::new(model, alpha, 0.0)?)
}

/// J(α) = α / γ(α).
pub fn j_of_alpha(model: &ModelSpec, alpha: f64) -> Result<f64> {
    Ok(alpha / gamma(model, alpha)?)
}

/// Invariant density ν∞_α(x) = γ H(t(x)) / (b(x) + α) on [0, σ_α).
#[derive(Clone, Debug)]
pub struct InvariantMeasure {
    pub alpha: f64,
    pub gamma: f64,
    pub j: f64,
    /// Right end of the support (σ_α, or φ(t_max) when σ_α is infinite).
    pub x_upper: f64,
    traj: Trajectory,
}

#[derive(Clone, Debug, Serialize)]
pub struct InvariantSummary {
    pub alpha: f64,
    pub gamma: f64,
    #[serde(rename = "J")]
    pub j: f64,
    pub sigma: Option<f64>,
    pub mass: f64,
    pub rate_integral: f64,
}

impl InvariantMeasure {
    pub fn new(model: &ModelSpec, alpha: f64) -> Result<Self> {
        let traj = Trajectory::new(model, alpha, 0.0)?;
        let gamma = gamma_of(&traj)?;
        let x_upper = traj.sigma.unwrap_or_else(|| traj.phi(traj.t_max));
        Ok(InvariantMeasure { alpha, gamma, j: alpha / gamma, x_upper, traj })
    }

    pub fn trajectory(&self) -> &Trajectory {
        &self.traj
    }

    /// Time for the path from 0 to reach x; `gap` = x_upper − x when known exactly.
    fn time_to(&self, x: f64, gap: f64) -> f64 {
        if let Some((g0, c1)) = self.traj.model().affine().map(|(c0, c1)| (c0 + self.alpha, c1)) {
            if c1 < 0.0 {
                let s = -g0 / c1;
                return (gap / s).ln() / c1;
            }
            if c1 == 0.0 {
                return x / g0;
            }
            return (c1 * x / g0).ln_1p() / c1;
        }
        let (mut lo, mut hi) = (0.0, self.traj.t_max);
        if self.traj.phi(hi) <= x {
            return hi;
        }
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if self.traj.phi(mid) < x {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    fn density_gap(&self, x: f64, gap: f64) -> f64 {
        if x < 0.0 || gap <= 0.0 {
            return 0.0;
        }
        let t = self.time_to(x, gap);
        let v = match self.traj.model().affine() {
            Some((_, c1)) if self.traj.sigma.is_some() => -c1 * gap,
            _ => self.traj.model().b(x) + self.alpha,
        };
        self.gamma * self.traj.survival(t) / v
    }

    pub fn density(&self, x: f64) -> f64 {
        self.density_gap(x, self.x_upper - x)
    }

    fn integrate(&self, weight: impl Fn(f64) -> f64) -> f64 {
        let mut cuts = vec![0.0];
        if let Some((thr, _)) = self.traj.model().step() {
            if thr > 0.0 && thr < self.x_upper {
                cuts.push(thr);
            }
        }
        cuts.push(self.x_upper);
        let mut total = 0.0;
        for w in cuts.windows(2) {
            let (a, b) = (w[0], w[1]);
            let top = b == self.x_upper;
            total += tanh_sinh(a, b, 1e-12, |x, _, db| {
                let gap = if top { db } else { self.x_upper - x };
                weight(x) * self.density_gap(x, gap)
            });
        }
        total
    }

    /// ∫ ν∞ dx; equals 1.
    pub fn mass(&self) -> f64 {
        self.integrate(|_| 1.0)
    }

    /// ∫ f ν∞ dx; equals γ.
    pub fn rate_integral(&self) -> f64 {
        let m = self.traj.model().clone();
        self.integrate(move |x| m.f(x))
    }

    /// (x, ν∞(x)) on `n` points of [0, x_upper).
    pub fn samples(&self, n: usize) -> Vec<(f64, f64)> {
        (0..n)
            .map(|k| {
                let x = self.x_upper * k as f64 / n as f64;
                (x, self.density(x))
            })
            .collect()
    }

    pub fn summary(&self) -> InvariantSummary {
        InvariantSummary {
            alpha: self.alpha,
            gamma: self.gamma,
            j: self.j,
            sigma: self.traj.sigma,
            mass: self.mass(),
            rate_integral: self.rate_integral(),
        }
    }
}

/// All α in (0, alpha_max] with α = J γ(α), by a uniform scan and bisection.
pub fn solve_alpha_for_j(model: &ModelSpec, j: f64, alpha_max: Option<f64>) -> Result<Vec<f64>> {
    if j < 0.0 {
        return Err(MfhError::InvalidParameter(format!("J = {j} < 0")));
    }
    if j == 0.0 {
        return Ok(vec![0.0]);
    }
    let a_min = (-model.b(0.0)).max(0.0);
    let g = |a: f64| -> Result<f64> { Ok(a - j * gamma(model, a)?) };
    let lo = a_min + 1e-9;
    let hi = match alpha_max {
        Some(v) => v,
        None => {
            let g0 = gamma(model, lo).unwrap_or(1.0);
            10.0 * (1.0 + j * g0)
        }
    };
    let n = 400;
    let mut roots = Vec::new();
    let mut xa = lo;
    let mut ga = g(xa)?;
    for k in 1..=n {
        let xb = lo + (hi - lo) * k as f64 / n as f64;
        let gb = g(xb)?;
        if ga == 0.0 {
            roots.push(xa);
        } else if ga * gb < 0.0 {
            let (mut a, mut b, mut fa) = (xa, xb, ga);
            for _ in 0..200 {
                let mid = 0.5 * (a + b);
                let fm = g(mid)?;
                if fm * fa > 0.0 {
                    a = mid;
                    fa = fm;
                } else {
                    b = mid;
                }
                if b - a < 1e-14 * (1.0 + b) {
                    break;
                }
            }
            roots.push(0.5 * (a + b));
        }
        xa = xb;
        ga = gb;
    }
    if roots.is_empty() {
        return Err(MfhError::NoRootInScan { j });
    }
    Ok(roots)
}

/// Finite-difference J′(α) compared with (1 − J Θ̂(0)) / γ.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct JPrimeCheck {
    pub alpha: f64,
    pub j_prime_fd: f64,
    pub j_prime_identity: f64,
    pub theta_hat_0: f64,
    pub gamma_prime_fd: f64,
}

pub fn j_prime_check(model: &ModelSpec, alpha: f64) -> Result<JPrimeCheck> {
    let h = 1e-4 * (1.0 + alpha);
    let gp = gamma(model, alpha + h)?;
    let gm = gamma(model, alpha - h)?;
    let g = gamma(model, alpha)?;
    let j = alpha / g;
    let gamma_prime_fd = (gp - gm) / (2.0 * h);
    let j_prime_fd = ((alpha + h) / gp - (alpha - h) / gm) / (2.0 * h);
    let tr = crate::spectral::Transforms::new(model, alpha, 0.0)?;
    let theta0 = tr.theta_hat_zero();
    Ok(JPrimeCheck { alpha, j_prime_fd, j_prime_identity: (1.0 - j * theta0) / g, theta_hat_0: theta0, gamma_prime_fd })
}
