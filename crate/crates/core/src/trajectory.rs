//! Deterministic paths of one neuron: φ, the cumulative hazard Λ and the survival e^{-Λ}.
//!
//! [`Trajectory`] covers a constant current started from any x0; [`PathStepper`]
//! marches under a general periodic current.

use crate::current::{expm1_over, PeriodicCurrent};
use crate::error::{MfhError, Result};
use crate::model::{affine_flow, sigma_alpha, ModelSpec};
use crate::quadrature::GaussRule;

const LAMBDA_CAP: f64 = 60.0;

/// Constant-current path from `x0`.
#[derive(Clone, Debug)]
pub struct Trajectory {
    model: ModelSpec,
    pub alpha: f64,
    pub x0: f64,
    /// (c0 + α, c1) for affine drift.
    affine: Option<(f64, f64)>,
    /// (threshold, height) for step rates.
    step: Option<(f64, f64)>,
    /// Time at which a step rate switches on (or off when the path decreases through it).
    pub t_cross: Option<f64>,
    crossing_up: bool,
    /// Limit of φ, when finite.
    pub sigma: Option<f64>,
    /// Asymptotic hazard: H(t) ~ C e^{-κ t}.
    pub kappa: f64,
    /// Time after which H < e^{-60} (or a cap when the hazard stays small).
    pub t_max: f64,
    h: f64,
    phi_tab: Vec<f64>,
    lam_tab: Vec<f64>,
    haz_tab: Vec<f64>,
    gl: GaussRule,
}

impl Trajectory {
    pub fn new(model: &ModelSpec, alpha: f64, x0: f64) -> Result<Self> {
        if model.b(0.0) + alpha < 0.0 {
            return Err(MfhError::InvalidParameter(format!("b(0) + alpha = {} < 0", model.b(0.0) + alpha)));
        }
        let sig = sigma_alpha(model, alpha)?;
        let affine = model.affine().map(|(c0, c1)| (c0 + alpha, c1));
        let step = model.step();
        let mut tr = Trajectory {
            model: model.clone(),
            alpha,
            x0,
            affine,
            step,
            t_cross: None,
            crossing_up: true,
            sigma: sig.value,
            kappa: 0.0,
            t_max: 0.0,
            h: 0.0,
            phi_tab: Vec::new(),
            lam_tab: Vec::new(),
            haz_tab: Vec::new(),
            gl: GaussRule::new(8),
        };
        // time scale of the drift
        let rel = match affine {
            Some((_, c1)) if c1 != 0.0 => 1.0 / c1.abs(),
            _ => 1.0,
        };
        let x_hi = match sig.value {
            Some(s) => s.max(x0),
            None => x0 + 10.0 * (model.b(0.0).abs() + alpha + 1.0),
        };
        let f_hi = model.f(x_hi).max(model.f(x0));
        tr.h = (0.01 * rel.min(1.0)).min(0.02 / (1.0 + f_hi));
        if affine.is_none() {
            tr.h = tr.h.min(1e-3);
        }
        if let Some((thr, height)) = step {
            tr.locate_crossing(thr)?;
            tr.kappa = if tr.eventually_above(thr) { height } else { 0.0 };
        } else if let Some(s) = sig.value {
            tr.kappa = model.f(s);
        }
        tr.build_tables()?;
        if step.is_none() && sig.value.is_none() {
            tr.kappa = model.f(tr.phi(tr.t_max));
        }
        Ok(tr)
    }

    fn eventually_above(&self, thr: f64) -> bool {
        match self.sigma {
            Some(s) => s > thr || (s == thr && self.x0 >= thr),
            None => true,
        }
    }

    fn locate_crossing(&mut self, thr: f64) -> Result<()> {
        let up = self.x0 < thr;
        let reachable = match self.sigma {
            Some(s) => (up && s > thr) || (!up && s < thr),
            None => up,
        };
        self.crossing_up = up;
        if !up && !reachable {
            // starts above and stays above
            self.crossing_up = true;
            self.t_cross = Some(0.0);
            return Ok(());
        }
        if !reachable {
            return Ok(());
        }
        if !up {
            // starts above, drifts below: rate switches off
            self.t_cross = Some(self.solve_level(thr)?);
            return Ok(());
        }
        self.t_cross = Some(self.solve_level(thr)?);
        Ok(())
    }

    /// First t with φ(t) = level (φ is monotone).
    fn solve_level(&self, level: f64) -> Result<f64> {
        let g = |t: f64| self.phi_raw(t) - level;
        let sign0 = g(0.0).signum();
        let mut hi = 1e-3;
        let mut n = 0;
        while g(hi).signum() == sign0 {
            hi *= 2.0;
            n += 1;
            if n > 80 {
                return Err(MfhError::FlowDivergence { steps: n });
            }
        }
        let mut lo = 0.0;
        let mut t = 0.5 * (lo + hi);
        for _ in 0..200 {
            let v = g(t);
            if v == 0.0 {
                return Ok(t);
            }
            if v.signum() == sign0 {
                lo = t;
            } else {
                hi = t;
            }
            let d = self.model.b(self.phi_raw(t)) + self.alpha;
            let tn = t - v / d;
            t = if tn > lo && tn < hi && d != 0.0 { tn } else { 0.5 * (lo + hi) };
            if hi - lo < 1e-15 * (1.0 + hi) {
                break;
            }
        }
        // final Newton polish
        for _ in 0..3 {
            let d = self.model.b(self.phi_raw(t)) + self.alpha;
            if d == 0.0 {
                break;
            }
            t -= g(t) / d;
        }
        Ok(t)
    }

    /// φ without the table, for affine drift; RK4 from 0 otherwise.
    fn phi_raw(&self, t: f64) -> f64 {
        if let Some((g0, c1)) = self.affine {
            return (c1 * t).exp() * self.x0 + g0 * expm1_over(c1, t);
        }
        if !self.phi_tab.is_empty() {
            return self.phi(t);
        }
        let a = PeriodicCurrent::constant(self.alpha);
        crate::model::flow_rk4(&self.model, &a, t, 0.0, self.x0, 1e-3).unwrap_or(f64::NAN)
    }

    fn build_tables(&mut self) -> Result<()> {
        let smooth = self.step.is_none() && !matches!(self.model.rate, crate::model::Rate::Zero);
        let need_phi = self.affine.is_none();
        // horizon
        let t_cap = 1e5 * self.h.max(1e-3);
        if !smooth {
            let tc = self.t_cross.unwrap_or(0.0);
            self.t_max = if self.kappa > 0.0 { tc + LAMBDA_CAP / self.kappa } else { tc + 200.0 };
            if need_phi {
                // φ table is needed anyway
                self.t_max = self.t_max.min(t_cap);
                self.fill_phi(self.t_max)?;
            }
            return Ok(());
        }
        let h = self.h;
        let mut phi = vec![self.x0];
        let mut lam = vec![0.0];
        let rhs = |m: &ModelSpec, y: f64| m.b(y) + self.alpha;
        let mut t = 0.0;
        let mut y = self.x0;
        let mut l = 0.0;
        let mut k = 0usize;
        while l < LAMBDA_CAP && t < t_cap {
            let y1 = if let Some((g0, c1)) = self.affine {
                (c1 * h).exp() * y + g0 * expm1_over(c1, h)
            } else {
                let k1 = rhs(&self.model, y);
                let k2 = rhs(&self.model, y + 0.5 * h * k1);
                let k3 = rhs(&self.model, y + 0.5 * h * k2);
                let k4 = rhs(&self.model, y + h * k3);
                y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            };
            if !y1.is_finite() {
                return Err(MfhError::FlowDivergence { steps: k });
            }
            phi.push(y1);
            // hazard over the step from the Hermite interpolant of φ
            let (ya, yb) = (y, y1);
            let (da, db) = (rhs(&self.model, ya), rhs(&self.model, yb));
            let inc = self.gl.integrate(0.0, h, |s| {
                let v = if let Some((g0, c1)) = self.affine {
                    (c1 * s).exp() * ya + g0 * expm1_over(c1, s)
                } else {
                    hermite(ya, yb, da, db, h, s)
                };
                self.model.f(v)
            });
            l += inc;
            lam.push(l);
            y = y1;
            t += h;
            k += 1;
        }
        self.t_max = t;
        self.haz_tab = phi.iter().map(|&x| self.model.f(x)).collect();
        self.lam_tab = lam;
        if need_phi {
            self.phi_tab = phi;
        }
        Ok(())
    }

    fn fill_phi(&mut self, t_end: f64) -> Result<()> {
        let h = self.h;
        let n = (t_end / h).ceil() as usize + 1;
        let mut phi = Vec::with_capacity(n + 1);
        let mut y = self.x0;
        phi.push(y);
        for k in 0..n {
            let k1 = self.model.b(y) + self.alpha;
            let k2 = self.model.b(y + 0.5 * h * k1) + self.alpha;
            let k3 = self.model.b(y + 0.5 * h * k2) + self.alpha;
            let k4 = self.model.b(y + h * k3) + self.alpha;
            y += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            if !y.is_finite() {
                return Err(MfhError::FlowDivergence { steps: k });
            }
            phi.push(y);
        }
        self.phi_tab = phi;
        Ok(())
    }

    pub fn model(&self) -> &ModelSpec {
        &self.model
    }

    /// φ^α_t(x0).
    pub fn phi(&self, t: f64) -> f64 {
        if let Some((g0, c1)) = self.affine {
            return (c1 * t).exp() * self.x0 + g0 * expm1_over(c1, t);
        }
        let n = self.phi_tab.len();
        let pos = t / self.h;
        if pos >= (n - 1) as f64 {
            return self.phi_tab[n - 1];
        }
        let k = pos.floor().max(0.0) as usize;
        let (ya, yb) = (self.phi_tab[k], self.phi_tab[k + 1]);
        let da = self.model.b(ya) + self.alpha;
        let db = self.model.b(yb) + self.alpha;
        hermite(ya, yb, da, db, self.h, t - k as f64 * self.h)
    }

    /// Cumulative hazard Λ(t) = ∫_0^t f(φ_u) du.
    pub fn lambda(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        if let Some((_, height)) = self.step {
            return match self.t_cross {
                None => 0.0,
                Some(tc) if self.crossing_up => height * (t - tc).max(0.0),
                Some(tc) => height * t.min(tc),
            };
        }
        if self.lam_tab.is_empty() {
            return 0.0;
        }
        let n = self.lam_tab.len();
        let pos = t / self.h;
        if pos >= (n - 1) as f64 {
            let tl = (n - 1) as f64 * self.h;
            return self.lam_tab[n - 1] + self.kappa.max(self.model.f(self.phi(tl))) * (t - tl);
        }
        let k = pos.floor() as usize;
        let tk = k as f64 * self.h;
        if t == tk {
            return self.lam_tab[k];
        }
        self.lam_tab[k] + self.gl.integrate(tk, t, |u| self.model.f(self.phi(u)))
    }

    /// Λ(t) from the cubic Hermite interpolant of the node table (Λ′ = f(φ) at the nodes).
    pub fn lambda_fast(&self, t: f64) -> f64 {
        if self.lam_tab.is_empty() {
            return self.lambda(t);
        }
        if t <= 0.0 {
            return 0.0;
        }
        let n = self.lam_tab.len();
        let pos = t / self.h;
        if pos >= (n - 1) as f64 {
            return self.lambda(t);
        }
        let k = pos.floor() as usize;
        hermite(self.lam_tab[k], self.lam_tab[k + 1], self.haz_tab[k], self.haz_tab[k + 1], self.h, t - k as f64 * self.h)
    }

    pub fn survival(&self, t: f64) -> f64 {
        (-self.lambda(t)).exp()
    }

    /// Hazard f(φ_t), with the right-continuous value at a step discontinuity.
    pub fn hazard(&self, t: f64) -> f64 {
        if let Some((_, height)) = self.step {
            return match self.t_cross {
                None => 0.0,
                Some(tc) if self.crossing_up => {
                    if t >= tc {
                        height
                    } else {
                        0.0
                    }
                }
                Some(tc) => {
                    if t < tc {
                        height
                    } else {
                        0.0
                    }
                }
            };
        }
        self.model.f(self.phi(t))
    }

    /// First-jump density K(t) = f(φ_t) H(t).
    pub fn density(&self, t: f64) -> f64 {
        if t < 0.0 {
            return 0.0;
        }
        self.hazard(t) * self.survival(t)
    }

    /// Points where H′ is discontinuous.
    pub fn breakpoints(&self) -> Vec<f64> {
        self.t_cross.into_iter().filter(|&t| t > 0.0).collect()
    }

    /// b(φ_t) + α.
    pub fn velocity(&self, t: f64) -> f64 {
        self.model.b(self.phi(t)) + self.alpha
    }

    /// b(φ_t) + α for affine drift written as c1(φ_t − σ) = c1(x0 − σ)e^{c1 t}, avoiding cancellation.
    pub fn velocity_stable(&self, t: f64) -> f64 {
        if let Some((g0, c1)) = self.affine {
            return (g0 + c1 * self.x0) * (c1 * t).exp();
        }
        self.velocity(t)
    }
}

pub(crate) fn hermite(ya: f64, yb: f64, da: f64, db: f64, h: f64, s: f64) -> f64 {
    let u = s / h;
    let u2 = u * u;
    let u3 = u2 * u;
    (2.0 * u3 - 3.0 * u2 + 1.0) * ya + (u3 - 2.0 * u2 + u) * h * da + (-2.0 * u3 + 3.0 * u2) * yb + (u3 - u2) * h * db
}

/// State of a path marched under a periodic current: potential, cumulative hazard and ∫ b′(φ).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PathState {
    pub t: f64,
    pub x: f64,
    pub lambda: f64,
    pub int_db: f64,
}

/// Marches φ^a_{t,s}(x) forward in time, accumulating Λ and ∫b′(φ) per step.
/// Step rates are integrated exactly between located threshold crossings.
pub struct PathStepper<'a> {
    model: &'a ModelSpec,
    current: &'a PeriodicCurrent,
    pub state: PathState,
    gl: GaussRule,
    h_max: f64,
}

impl<'a> PathStepper<'a> {
    pub fn new(model: &'a ModelSpec, current: &'a PeriodicCurrent, s: f64, x: f64) -> Self {
        let h_max = 0.01 * current.tau.min(1.0);
        Self {
            model,
            current,
            state: PathState { t: s, x, lambda: 0.0, int_db: 0.0 },
            gl: GaussRule::new(6),
            h_max,
        }
    }

    pub fn with_max_step(mut self, h: f64) -> Self {
        self.h_max = h;
        self
    }

    fn flow1(&self, t0: f64, x0: f64, h: f64) -> f64 {
        if let Some((c0, c1)) = self.model.affine() {
            return affine_flow(c0, c1, self.current, t0 + h, t0, x0);
        }
        let rhs = |u: f64, y: f64| self.model.b(y) + self.current.value(u);
        let n = (h.abs() / 1e-3_f64.min(self.h_max)).ceil().max(1.0) as usize;
        let dh = h / n as f64;
        let (mut u, mut y) = (t0, x0);
        for _ in 0..n {
            let k1 = rhs(u, y);
            let k2 = rhs(u + 0.5 * dh, y + 0.5 * dh * k1);
            let k3 = rhs(u + 0.5 * dh, y + 0.5 * dh * k2);
            let k4 = rhs(u + dh, y + dh * k3);
            y += dh / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            u += dh;
        }
        y
    }

    /// Advances to time `t`.
    pub fn advance_to(&mut self, t: f64) -> Result<PathState> {
        let mut guard = 0usize;
        while self.state.t < t {
            let h = (t - self.state.t).min(self.h_max);
            self.step(h)?;
            guard += 1;
            if guard > 200_000_000 {
                return Err(MfhError::FlowDivergence { steps: guard });
            }
        }
        Ok(self.state)
    }

    fn step(&mut self, h: f64) -> Result<()> {
        let PathState { t: t0, x: x0, .. } = self.state;
        let x1 = self.flow1(t0, x0, h);
        if !x1.is_finite() {
            return Err(MfhError::FlowDivergence { steps: 1 });
        }
        let dl = match self.model.step() {
            Some((thr, height)) => {
                let a0 = x0 >= thr;
                let a1 = x1 >= thr;
                if a0 == a1 {
                    if a0 {
                        height * h
                    } else {
                        0.0
                    }
                } else {
                    // bisect the crossing inside the step
                    let (mut lo, mut hi) = (0.0, h);
                    for _ in 0..60 {
                        let mid = 0.5 * (lo + hi);
                        if (self.flow1(t0, x0, mid) >= thr) == a0 {
                            lo = mid;
                        } else {
                            hi = mid;
                        }
                    }
                    let tc = 0.5 * (lo + hi);
                    if a0 {
                        height * tc
                    } else {
                        height * (h - tc)
                    }
                }
            }
            None => match self.model.rate {
                crate::model::Rate::Zero => 0.0,
                _ => self.gl.integrate(0.0, h, |s| self.model.f(self.flow1(t0, x0, s))),
            },
        };
        let ddb = match self.model.affine() {
            Some((_, c1)) => c1 * h,
            None => self.gl.integrate(0.0, h, |s| self.model.db(self.flow1(t0, x0, s))),
        };
        self.state = PathState { t: t0 + h, x: x1, lambda: self.state.lambda + dl, int_db: self.state.int_db + ddb };
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Drift, Rate};
    use std::sync::Arc;

    #[test]
    fn toy_survival_closed_form() {
        let m = ModelSpec::toy(1.5, 0.1).unwrap();
        let tr = Trajectory::new(&m, 1.0, 0.0).unwrap();
        let ts = (5.0f64 / 3.0).ln();
        assert!((tr.t_cross.unwrap() - ts).abs() < 1e-14);
        assert_eq!(tr.survival(0.3), 1.0);
        assert!((tr.survival(ts + 1.0) - (-10.0f64).exp()).abs() < 1e-15);
        let above = Trajectory::new(&m, 1.0, 2.0).unwrap();
        assert!((above.survival(0.7) - (-7.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn smooth_hazard_matches_direct_quadrature() {
        let m = ModelSpec::poly(10.0, 2.0, -2.0).unwrap();
        let tr = Trajectory::new(&m, 0.3, 0.0).unwrap();
        let g = GaussRule::new(30);
        for &t in &[0.2, 0.77, 1.9, 4.0] {
            let exact: f64 = (0..40)
                .map(|k| {
                    let a = t * k as f64 / 40.0;
                    g.integrate(a, a + t / 40.0, |u| m.f(1.15 * (1.0 - (-2.0 * u).exp())))
                })
                .sum();
            assert!((tr.lambda(t) - exact).abs() < 1e-12, "{t}: {} vs {exact}", tr.lambda(t));
        }
    }

    #[test]
    fn rk4_table_matches_affine() {
        let aff = ModelSpec::poly(2.0, 2.0, -0.5).unwrap();
        let cus = ModelSpec::new(
            Drift::Custom { b: Arc::new(|x| 2.0 - 0.5 * x), db: Arc::new(|_| -0.5) },
            Rate::Power { p: 2.0, scale: 1.0 },
        )
        .unwrap();
        let a = Trajectory::new(&aff, 0.5, 0.0).unwrap();
        let b = Trajectory::new(&cus, 0.5, 0.0).unwrap();
        for &t in &[0.1, 0.55, 1.3, 2.0] {
            assert!((a.phi(t) - b.phi(t)).abs() < 1e-10);
            assert!((a.lambda(t) - b.lambda(t)).abs() < 1e-9);
        }
    }

    #[test]
    fn stepper_matches_trajectory_for_constant_current() {
        let m = ModelSpec::toy(1.5, 0.1).unwrap();
        let a = PeriodicCurrent::constant(1.0);
        let tr = Trajectory::new(&m, 1.0, 0.0).unwrap();
        let mut st = PathStepper::new(&m, &a, 3.0, 0.0);
        let s = st.advance_to(4.2).unwrap();
        assert!((s.x - tr.phi(1.2)).abs() < 1e-13);
        assert!((s.lambda - tr.lambda(1.2)).abs() < 1e-12);
        assert!((s.int_db + 1.2).abs() < 1e-13);
    }
}
