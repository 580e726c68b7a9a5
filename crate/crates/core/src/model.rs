//! Neuron model: drift b, jump rate f, deterministic flow φ and the toy parametrization.

use crate::current::{expm1_over, PeriodicCurrent};
use crate::error::{MfhError, Result};
use crate::quadrature::GaussRule;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::sync::Arc;

pub type Func = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum Drift {
    /// b(x) = c0 + c1 x
    Affine { c0: f64, c1: f64 },
    Custom { b: Func, db: Func },
}

#[derive(Clone)]
pub enum Rate {
    /// f(x) = scale · x^p
    Power { p: f64, scale: f64 },
    /// f(x) = 1/β for x ≥ threshold, 0 below.
    Step { beta: f64, threshold: f64 },
    Zero,
    Custom { f: Func, df: Func },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum ModelKind {
    SmoothPolynomialRate { p: f64 },
    ToyStepRate { beta: f64 },
    Custom,
}

#[derive(Clone)]
pub struct ModelSpec {
    pub drift: Drift,
    pub rate: Rate,
}

impl fmt::Debug for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let d = match &self.drift {
            Drift::Affine { c0, c1 } => format!("affine({c0}, {c1})"),
            Drift::Custom { .. } => "custom".into(),
        };
        let r = match &self.rate {
            Rate::Power { p, scale } => format!("{scale}*x^{p}"),
            Rate::Step { beta, threshold } => format!("step(beta={beta}, thr={threshold})"),
            Rate::Zero => "zero".into(),
            Rate::Custom { .. } => "custom".into(),
        };
        write!(f, "ModelSpec {{ drift: {d}, rate: {r} }}")
    }
}

impl ModelSpec {
    pub fn new(drift: Drift, rate: Rate) -> Result<Self> {
        let m = Self { drift, rate };
        if m.b(0.0) < 0.0 {
            return Err(MfhError::InvalidParameter(format!("b(0) = {} < 0", m.b(0.0))));
        }
        match &m.rate {
            Rate::Step { beta, .. } if *beta <= 0.0 => {
                return Err(MfhError::InvalidParameter("beta must be positive".into()))
            }
            Rate::Power { p, scale } if *p <= 0.0 || *scale < 0.0 => {
                return Err(MfhError::InvalidParameter("power rate needs p > 0, scale ≥ 0".into()))
            }
            _ => {}
        }
        Ok(m)
    }

    /// Toy model: b(x) = m − x, f = step of height 1/β at 1.
    pub fn toy(m: f64, beta: f64) -> Result<Self> {
        Self::new(Drift::Affine { c0: m, c1: -1.0 }, Rate::Step { beta, threshold: 1.0 })
    }

    /// f(x) = x^p with affine drift c0 + c1 x.
    pub fn poly(p: f64, c0: f64, c1: f64) -> Result<Self> {
        Self::new(Drift::Affine { c0, c1 }, Rate::Power { p, scale: 1.0 })
    }

    pub fn b(&self, x: f64) -> f64 {
        match &self.drift {
            Drift::Affine { c0, c1 } => c0 + c1 * x,
            Drift::Custom { b, .. } => b(x),
        }
    }

    pub fn db(&self, x: f64) -> f64 {
        match &self.drift {
            Drift::Affine { c1, .. } => *c1,
            Drift::Custom { db, .. } => db(x),
        }
    }

    pub fn f(&self, x: f64) -> f64 {
        match &self.rate {
            Rate::Power { p, scale } => {
                if x <= 0.0 {
                    0.0
                } else if p.fract() == 0.0 && *p <= 32.0 {
                    scale * x.powi(*p as i32)
                } else {
                    scale * x.powf(*p)
                }
            }
            Rate::Step { beta, threshold } => {
                if x >= *threshold {
                    1.0 / beta
                } else {
                    0.0
                }
            }
            Rate::Zero => 0.0,
            Rate::Custom { f, .. } => f(x),
        }
    }

    /// f′(x); `None` at the discontinuity of a step rate.
    pub fn df(&self, x: f64) -> Option<f64> {
        match &self.rate {
            Rate::Power { p, scale } => Some(if x <= 0.0 { 0.0 } else { scale * p * x.powf(p - 1.0) }),
            Rate::Step { threshold, .. } => {
                if x == *threshold {
                    None
                } else {
                    Some(0.0)
                }
            }
            Rate::Zero => Some(0.0),
            Rate::Custom { df, .. } => Some(df(x)),
        }
    }

    /// (f(x) − f(y)) / (x − y), evaluated without cancellation for power rates.
    pub fn f_divided_difference(&self, x: f64, y: f64) -> f64 {
        if let Rate::Power { p, scale } = &self.rate {
            if p.fract() == 0.0 && *p >= 1.0 && x >= 0.0 && y >= 0.0 {
                let n = *p as i32;
                let mut acc = 0.0;
                let mut xp = 1.0;
                let mut yp = y.powi(n - 1);
                let ry = if y > 0.0 { 1.0 / y } else { 0.0 };
                for k in 0..n {
                    if y == 0.0 {
                        // only the x^{n-1} term survives
                        if k == n - 1 {
                            acc += xp;
                        }
                    } else {
                        acc += xp * yp;
                        yp *= ry;
                    }
                    xp *= x;
                }
                return scale * acc;
            }
        }
        if (x - y).abs() < 1e-12 * (1.0 + x.abs()) {
            return self.df(0.5 * (x + y)).unwrap_or(0.0);
        }
        (self.f(x) - self.f(y)) / (x - y)
    }

    pub fn kind(&self) -> ModelKind {
        match &self.rate {
            Rate::Power { p, .. } => ModelKind::SmoothPolynomialRate { p: *p },
            Rate::Step { beta, .. } => ModelKind::ToyStepRate { beta: *beta },
            _ => ModelKind::Custom,
        }
    }

    pub fn affine(&self) -> Option<(f64, f64)> {
        match &self.drift {
            Drift::Affine { c0, c1 } => Some((*c0, *c1)),
            _ => None,
        }
    }

    /// (threshold, height) for step rates.
    pub fn step(&self) -> Option<(f64, f64)> {
        match &self.rate {
            Rate::Step { beta, threshold } => Some((*threshold, 1.0 / beta)),
            _ => None,
        }
    }

    /// (m, β) when this is exactly the toy model.
    pub fn toy_params(&self) -> Option<(f64, f64)> {
        match (&self.drift, &self.rate) {
            (Drift::Affine { c0, c1 }, Rate::Step { beta, threshold }) if *c1 == -1.0 && *threshold == 1.0 => {
                Some((*c0, *beta))
            }
            _ => None,
        }
    }

    /// The model (τb, τf) that runs in reduced time.
    pub fn time_scaled(&self, tau: f64) -> ModelSpec {
        let drift = match &self.drift {
            Drift::Affine { c0, c1 } => Drift::Affine { c0: tau * c0, c1: tau * c1 },
            Drift::Custom { b, db } => {
                let (b, db) = (b.clone(), db.clone());
                Drift::Custom {
                    b: Arc::new(move |x| tau * b(x)),
                    db: Arc::new(move |x| tau * db(x)),
                }
            }
        };
        let rate = match &self.rate {
            Rate::Power { p, scale } => Rate::Power { p: *p, scale: tau * scale },
            Rate::Step { beta, threshold } => Rate::Step { beta: beta / tau, threshold: *threshold },
            Rate::Zero => Rate::Zero,
            Rate::Custom { f, df } => {
                let (f, df) = (f.clone(), df.clone());
                Rate::Custom {
                    f: Arc::new(move |x| tau * f(x)),
                    df: Arc::new(move |x| tau * df(x)),
                }
            }
        };
        ModelSpec { drift, rate }
    }

    pub fn from_config(cfg: &ModelConfig) -> Result<Self> {
        match cfg {
            ModelConfig::Toy { beta, m } => Self::toy(*m, *beta),
            ModelConfig::Poly { p, drift } => Self::poly(*p, drift.affine[0], drift.affine[1]),
            ModelConfig::Zero { drift } => {
                Self::new(Drift::Affine { c0: drift.affine[0], c1: drift.affine[1] }, Rate::Zero)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineConfig {
    pub affine: [f64; 2],
}

/// JSON model block: `{"kind":"toy","beta":..,"m":..}` or
/// `{"kind":"poly","p":..,"drift":{"affine":[c0,c1]}}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModelConfig {
    Toy { beta: f64, m: f64 },
    Poly { p: f64, drift: AffineConfig },
    Zero { drift: AffineConfig },
}

/// Toy parameters with the (ω, δ) change of variables.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToyParams {
    pub beta: f64,
    pub m: f64,
    pub alpha: f64,
}

impl ToyParams {
    pub fn new(beta: f64, m: f64, alpha: f64) -> Result<Self> {
        if beta <= 0.0 || m < 0.0 || alpha < 0.0 || m + alpha <= 1.0 {
            return Err(MfhError::InvalidParameter(format!(
                "toy needs beta > 0, m ≥ 0, alpha ≥ 0, m + alpha > 1 (got beta={beta}, m={m}, alpha={alpha})"
            )));
        }
        Ok(Self { beta, m, alpha })
    }

    pub fn sigma(&self) -> f64 {
        self.m + self.alpha
    }

    /// ω = t*_α(0) = log(σ/(σ−1))
    pub fn omega(&self) -> f64 {
        (1.0 / (self.sigma() - 1.0)).ln_1p()
    }

    pub fn delta(&self) -> f64 {
        self.alpha / (self.m + self.alpha - 1.0)
    }

    /// Inverse change of variables: α = δ/(e^ω−1), m = 1 + (1−δ)/(e^ω−1).
    pub fn from_omega_delta(beta: f64, omega: f64, delta: f64) -> Result<Self> {
        let e = omega.exp_m1();
        Self::new(beta, 1.0 + (1.0 - delta) / e, delta / e)
    }

    pub fn model(&self) -> ModelSpec {
        ModelSpec::toy(self.m, self.beta).expect("validated toy parameters")
    }

    pub fn gamma(&self) -> f64 {
        1.0 / (self.omega() + self.beta)
    }

    /// J(α) = α(ω + β)
    pub fn j(&self) -> f64 {
        self.alpha * (self.omega() + self.beta)
    }

    /// J′(α) = β + ω − δ(1 − e^{−ω})
    pub fn j_prime(&self) -> f64 {
        self.beta + self.omega() - self.delta() * (-(-self.omega()).exp_m1())
    }
}

/// Closed-form toy hitting time t*_α(x) = log((m+α−x)/(m+α−1)) for x ≤ 1.
pub fn hitting_time(toy: &ToyParams, x: f64) -> f64 {
    let s = toy.sigma();
    if x >= 1.0 {
        return 0.0;
    }
    ((1.0 - x) / (s - 1.0)).ln_1p()
}

/// t = ∫_x^{thr} dy / (b(y) + α) by Gauss–Legendre panels (requires b + α > 0 on the range).
pub fn hitting_time_quadrature(model: &ModelSpec, alpha: f64, x: f64, threshold: f64) -> f64 {
    if x >= threshold {
        return 0.0;
    }
    let g = GaussRule::new(20);
    let n = 16;
    let h = (threshold - x) / n as f64;
    (0..n)
        .map(|k| {
            let a = x + k as f64 * h;
            g.integrate(a, a + h, |y| 1.0 / (model.b(y) + alpha))
        })
        .sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SigmaAlpha {
    /// First zero of b + α, or `None` when b + α stays positive.
    pub value: Option<f64>,
    /// inf(b + α) over the scanned bracket when `value` is `None`.
    pub inf_gap: f64,
    /// b′(σ_α) < 0 in the finite case; inf(b + α) > 0 otherwise.
    pub nondegenerate: bool,
}

/// σ_α = inf{x ≥ 0 : b(x) + α = 0}.
pub fn sigma_alpha(model: &ModelSpec, alpha: f64) -> Result<SigmaAlpha> {
    if let Some((c0, c1)) = model.affine() {
        let g0 = c0 + alpha;
        if c1 < 0.0 && g0 >= 0.0 {
            return Ok(SigmaAlpha { value: Some(-g0 / c1), inf_gap: 0.0, nondegenerate: true });
        }
        if c1 >= 0.0 && g0 > 0.0 {
            return Ok(SigmaAlpha { value: None, inf_gap: g0, nondegenerate: true });
        }
        if g0 == 0.0 {
            return Err(MfhError::DegenerateEquilibrium { x: 0.0 });
        }
    }
    let g = |x: f64| model.b(x) + alpha;
    let xmax = 10.0 * (1.0 + model.b(0.0).abs() + alpha);
    let n = 4096;
    let mut prev = g(0.0);
    let mut inf_gap = prev;
    let mut bracket = None;
    if prev <= 0.0 {
        bracket = Some((0.0, 0.0));
    } else {
        for k in 1..=n {
            let x = xmax * k as f64 / n as f64;
            let v = g(x);
            inf_gap = inf_gap.min(v);
            if v <= 0.0 {
                bracket = Some((xmax * (k - 1) as f64 / n as f64, x));
                break;
            }
            prev = v;
        }
    }
    let _ = prev;
    match bracket {
        None => Ok(SigmaAlpha { value: None, inf_gap, nondegenerate: inf_gap > 0.0 }),
        Some((mut lo, mut hi)) => {
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if g(mid) > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
                if hi - lo < 1e-15 * (1.0 + hi) {
                    break;
                }
            }
            let x = 0.5 * (lo + hi);
            let d = model.db(x);
            if d.abs() < 1e-10 {
                return Err(MfhError::DegenerateEquilibrium { x });
            }
            Ok(SigmaAlpha { value: Some(x), inf_gap: 0.0, nondegenerate: d < 0.0 })
        }
    }
}

/// φ^a_{t,s}(x). Exact for affine drift, classical RK4 otherwise.
pub fn flow(model: &ModelSpec, current: &PeriodicCurrent, t: f64, s: f64, x: f64) -> Result<f64> {
    if t == s {
        return Ok(x);
    }
    if let Some((c0, c1)) = model.affine() {
        return Ok(affine_flow(c0, c1, current, t, s, x));
    }
    flow_rk4(model, current, t, s, x, 1e-3 * current.tau)
}

pub(crate) fn affine_flow(c0: f64, c1: f64, current: &PeriodicCurrent, t: f64, s: f64, x: f64) -> f64 {
    let d = t - s;
    (c1 * d).exp() * x + c0 * expm1_over(c1, d) + current.exp_weighted_integral(c1, s, t)
}

/// Fixed-step RK4 flow with step at most `h_max`.
pub fn flow_rk4(model: &ModelSpec, current: &PeriodicCurrent, t: f64, s: f64, x: f64, h_max: f64) -> Result<f64> {
    let d = t - s;
    let n = (d.abs() / h_max).ceil().max(1.0);
    if n > 5e8 {
        return Err(MfhError::FlowDivergence { steps: n as usize });
    }
    let n = n as usize;
    let h = d / n as f64;
    let rhs = |u: f64, y: f64| model.b(y) + current.value(u);
    let mut y = x;
    let mut u = s;
    for _ in 0..n {
        let k1 = rhs(u, y);
        let k2 = rhs(u + 0.5 * h, y + 0.5 * h * k1);
        let k3 = rhs(u + 0.5 * h, y + 0.5 * h * k2);
        let k4 = rhs(u + h, y + h * k3);
        y += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        u += h;
        if !y.is_finite() {
            return Err(MfhError::FlowDivergence { steps: n });
        }
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toy_flow_matches_closed_form() {
        let m = ModelSpec::toy(1.5, 0.1).unwrap();
        let a = PeriodicCurrent::constant(1.0);
        let v = flow(&m, &a, 1.0, 0.0, 0.0).unwrap();
        assert!((v - 2.5 * (1.0 - (-1.0f64).exp())).abs() < 1e-14);
        assert!((v - 1.5803014).abs() < 1e-7);
        let r = flow_rk4(&m, &a, 1.0, 0.0, 0.0, 1e-3).unwrap();
        assert!((r - v).abs() < 1e-12);
        assert_eq!(flow(&m, &a, 3.0, 3.0, 0.7).unwrap(), 0.7);
        let far = flow(&m, &PeriodicCurrent::constant(0.0), 40.0, 0.0, 0.0).unwrap();
        assert!((far - 1.5).abs() < 1e-12);
    }

    #[test]
    fn hitting_times() {
        let t0 = ToyParams::new(0.1, 1.5, 0.0).unwrap();
        assert!((hitting_time(&t0, 0.0) - 3f64.ln()).abs() < 1e-15);
        assert_eq!(hitting_time(&t0, 1.0), 0.0);
        let t1 = ToyParams::new(0.1, 1.5, 1.0).unwrap();
        assert!((hitting_time(&t1, 0.0) - (5.0f64 / 3.0).ln()).abs() < 1e-15);
        let q = hitting_time_quadrature(&t1.model(), 1.0, 0.0, 1.0);
        assert!((q - (5.0f64 / 3.0).ln()).abs() < 1e-13);
        assert!((t1.omega() - 0.5108256).abs() < 1e-7);
    }

    #[test]
    fn sigma_cases() {
        let toy = ModelSpec::toy(1.5, 0.1).unwrap();
        let s = sigma_alpha(&toy, 1.0).unwrap();
        assert_eq!(s.value, Some(2.5));
        let osc_model = ModelSpec::poly(10.0, 2.0, -2.0).unwrap();
        assert!((sigma_alpha(&osc_model, 0.0).unwrap().value.unwrap() - 1.0).abs() < 1e-15);
        let flat = ModelSpec::poly(1.0, 1.0, 0.0).unwrap();
        let s = sigma_alpha(&flat, 0.5).unwrap();
        assert!(s.value.is_none() && (s.inf_gap - 1.5).abs() < 1e-15);
        let custom = ModelSpec::new(
            Drift::Custom { b: Arc::new(|x| 2.0 - 2.0 * x), db: Arc::new(|_| -2.0) },
            Rate::Zero,
        )
        .unwrap();
        let s = sigma_alpha(&custom, 0.0).unwrap();
        assert!((s.value.unwrap() - 1.0).abs() < 1e-13 && s.nondegenerate);
    }

    #[test]
    fn toy_change_of_variables_roundtrip() {
        let p = ToyParams::new(0.1, 1.5, 1.0).unwrap();
        let q = ToyParams::from_omega_delta(0.1, p.omega(), p.delta()).unwrap();
        assert!((q.m - p.m).abs() < 1e-14 && (q.alpha - p.alpha).abs() < 1e-14);
        assert!((p.j() - 0.6108256).abs() < 1e-7);
        assert!((p.j_prime() - 0.3441590).abs() < 1e-7);
    }

    #[test]
    fn divided_difference_is_stable() {
        let m = ModelSpec::poly(10.0, 2.0, -2.0).unwrap();
        let (x, y) = (1.2, 1.2 - 1e-13);
        let d = m.f_divided_difference(x, y);
        assert!((d - 10.0 * 1.2f64.powi(9)).abs() < 1e-9);
        assert!((m.f_divided_difference(0.5, 0.0) - 0.5f64.powi(9)).abs() < 1e-15);
    }
}
