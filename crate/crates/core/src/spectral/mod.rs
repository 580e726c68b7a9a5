//! Laplace transforms Ĥ, Ψ̂, Θ̂ = Ψ̂/Ĥ of the constant-current kernels and the stability
//! function 1 − J Θ̂.
//!
//! Numerically, transforms are Gauss–Legendre sums over a fixed node table whose horizon
//! makes e^{-Re z·t} H(t) negligible for Re z ≥ `re_min`. Toy models use closed forms.

pub mod roots;

use crate::error::{MfhError, Result};
use crate::invariant::gamma_of;
use crate::model::{ModelSpec, ToyParams};
use crate::quadrature::{panels, GaussRule};
use crate::trajectory::Trajectory;
use num_complex::Complex64 as C;
use rayon::prelude::*;
use roots::{find_zeros, Rect, RootOptions};
use crate::io::ReIm;
use serde::ser::SerializeStruct;
use serde::{Serialize, Serializer};

/// (1 − e^{−x})/x, with a series near 0.
pub(crate) fn one_minus_exp_over(x: C) -> C {
    if x.norm() < 1e-2 {
        let mut term = C::new(1.0, 0.0);
        let mut sum = term;
        for k in 2..9 {
            term = -term * x / k as f64;
            sum += term;
        }
        return sum;
    }
    (1.0 - (-x).exp()) / x
}

/// Closed-form toy transforms in natural time.
pub mod toy {
    use super::*;

    /// Ĥ(z) = (1 − e^{−zω})/z + β e^{−zω}/(1 + βz).
    pub fn h_hat(p: &ToyParams, z: C) -> C {
        let w = p.omega();
        w * one_minus_exp_over(z * w) + p.beta * (-z * w).exp() / (1.0 + p.beta * z)
    }

    /// J Ψ̂(z) = (α/σ)(e^ω − e^{−zω}) / ((1 + βz)(1 + z)).
    pub fn j_psi_hat(p: &ToyParams, z: C) -> C {
        let w = p.omega();
        let num = w.exp() * w * one_minus_exp_over(w * (1.0 + z));
        p.alpha / p.sigma() * num / (1.0 + p.beta * z)
    }

    /// Ĥ − J Ψ̂.
    pub fn f_hol(p: &ToyParams, z: C) -> C {
        h_hat(p, z) - j_psi_hat(p, z)
    }
}

/// Transform tables for one (model, α).
#[derive(Clone, Debug)]
pub struct Transforms {
    pub alpha: f64,
    pub gamma: f64,
    pub j: f64,
    /// Decay rate of H.
    pub kappa: f64,
    /// Smallest Re z the tables are accurate for.
    pub re_min: f64,
    /// Quadrature horizon.
    pub horizon: f64,
    toy: Option<ToyParams>,
    /// (t, w, Λ(t), Ψ(t) e^{Λ(t)})
    nodes: Vec<(f64, f64, f64, f64)>,
    /// H(W), Ψ(W) at the horizon.
    tail: (f64, f64),
    psi_hat0: f64,
    h_hat0: f64,
}

impl Transforms {
    /// Closed forms for the toy, numeric tables otherwise, accurate for |Im z| ≤ 40.
    pub fn new(model: &ModelSpec, alpha: f64, re_min: f64) -> Result<Self> {
        let mut t = Self::numeric(model, alpha, re_min, 40.0)?;
        if let Some((m, beta)) = model.toy_params() {
            t.toy = Some(ToyParams::new(beta, m, alpha)?);
        }
        Ok(t)
    }

    /// Numeric tables resolving oscillations up to |Im z| ≤ `im_max`.
    pub fn numeric(model: &ModelSpec, alpha: f64, re_min: f64, im_max: f64) -> Result<Self> {
        let tr = Trajectory::new(model, alpha, 0.0)?;
        let gamma = gamma_of(&tr)?;
        let kappa = tr.kappa;
        if re_min <= -kappa {
            return Err(MfhError::DomainViolation { re: re_min, bound: -kappa });
        }
        let tc = tr.t_cross.unwrap_or(0.0);
        let width = 0.2f64.min(1.0 / kappa).min(8.0 / im_max.max(1.0));
        let mut w = tc + width;
        while tr.lambda(w) + re_min * w < 38.0 {
            w += width;
        }
        let gl = GaussRule::new(16);
        let mut breaks = vec![1e-4, 1e-3, 1e-2];
        breaks.extend(tr.breakpoints());
        let mut pts = Vec::new();
        for (a, b) in panels(0.0, w, width, &breaks) {
            pts.extend(gl.mapped(a, b));
        }
        let psi = PsiTable::new(&tr, gamma, model)?;
        let nodes: Vec<(f64, f64, f64, f64)> =
            pts.par_iter().map(|&(t, wt)| (t, wt, tr.lambda(t), psi.ratio(t))).collect();
        let h_w = tr.survival(w);
        let psi_w = psi.ratio(w) * h_w;
        let h_hat0 = nodes.iter().map(|n| n.1 * (-n.2).exp()).sum::<f64>() + h_w / kappa;
        let psi_hat0 = nodes.iter().map(|n| n.1 * (-n.2).exp() * n.3).sum::<f64>() + psi_w / kappa;
        Ok(Transforms {
            alpha,
            gamma,
            j: alpha / gamma,
            kappa,
            re_min,
            horizon: w,
            toy: None,
            nodes,
            tail: (h_w, psi_w),
            psi_hat0,
            h_hat0,
        })
    }

    pub fn is_closed_form(&self) -> bool {
        self.toy.is_some()
    }

    fn check(&self, z: C) -> Result<()> {
        if self.toy.is_none() && z.re < self.re_min - 1e-12 {
            return Err(MfhError::DomainViolation { re: z.re, bound: self.re_min });
        }
        if self.toy.is_some() && z.re <= -self.kappa {
            return Err(MfhError::DomainViolation { re: z.re, bound: -self.kappa });
        }
        Ok(())
    }

    /// (Ĥ(z), Ψ̂(z)) from the tables.
    fn sums(&self, z: C) -> (C, C) {
        let mut h = C::new(0.0, 0.0);
        let mut p = C::new(0.0, 0.0);
        for &(t, w, lam, r) in &self.nodes {
            let e = w * (-z * t - lam).exp();
            h += e;
            p += e * r;
        }
        let wz = self.horizon;
        let tail = (-z * wz).exp() / (z + self.kappa);
        (h + tail * self.tail.0, p + tail * self.tail.1)
    }

    pub fn h_hat(&self, z: C) -> Result<C> {
        self.check(z)?;
        Ok(match &self.toy {
            Some(p) => toy::h_hat(p, z),
            None => self.sums(z).0,
        })
    }

    pub fn psi_hat(&self, z: C) -> Result<C> {
        self.check(z)?;
        Ok(match &self.toy {
            Some(p) => toy::j_psi_hat(p, z) / self.j,
            None => self.sums(z).1,
        })
    }

    /// K̂(z) = 1 − z Ĥ(z).
    pub fn k_hat(&self, z: C) -> Result<C> {
        Ok(1.0 - z * self.h_hat(z)?)
    }

    /// Θ̂(z) = Ψ̂(z)/Ĥ(z); fails near the zeros of 1 − K̂ other than z = 0.
    pub fn theta_hat(&self, z: C) -> Result<C> {
        let (h, p) = match &self.toy {
            Some(t) => {
                self.check(z)?;
                (toy::h_hat(t, z), toy::j_psi_hat(t, z) / self.j)
            }
            None => {
                self.check(z)?;
                self.sums(z)
            }
        };
        if (z * h).norm() < 1e-10 && z.norm() > 1e-8 {
            return Err(MfhError::PoleProximity { re: z.re, im: z.im });
        }
        Ok(p / h)
    }

    /// Θ̂(0) = γ Ψ̂(0).
    pub fn theta_hat_zero(&self) -> f64 {
        match &self.toy {
            Some(p) => (toy::j_psi_hat(p, C::new(0.0, 0.0)) / (self.j * toy::h_hat(p, C::new(0.0, 0.0)))).re,
            None => self.psi_hat0 / self.h_hat0,
        }
    }

    /// Ĥ − J Ψ̂, holomorphic on Re z > −κ; its zeros are those of 1 − J Θ̂.
    pub fn f_hol(&self, z: C) -> Result<C> {
        self.check(z)?;
        Ok(match &self.toy {
            Some(p) => toy::f_hol(p, z),
            None => {
                let (h, p) = self.sums(z);
                h - self.j * p
            }
        })
    }

    /// 1 − J Θ̂(z).
    pub fn one_minus_j_theta(&self, z: C) -> Result<C> {
        Ok(1.0 - self.j * self.theta_hat(z)?)
    }
}

/// Ψ(s) e^{Λ(s)} on demand.
struct PsiTable<'a> {
    tr: &'a Trajectory,
    model: &'a ModelSpec,
    gamma: f64,
    /// u-nodes (u, w, φ(u), b(φ_u) + α)
    unodes: Vec<(f64, f64, f64, f64)>,
    step: Option<(f64, f64)>,
}

impl<'a> PsiTable<'a> {
    fn new(tr: &'a Trajectory, gamma: f64, model: &'a ModelSpec) -> Result<Self> {
        let gl = GaussRule::new(16);
        let step = model.step();
        let mut unodes = Vec::new();
        if step.is_none() {
            let ks = tr.kappa.max(1e-3);
            let width = 0.5f64.min(2.0 / ks);
            let mut u_end = width;
            while tr.lambda(u_end) < 45.0 + tr.kappa * 0.0 && u_end < tr.t_max + 60.0 / ks {
                u_end += width;
            }
            // H(s+u)/H(s) ≤ H(u)·e^{...}; a margin covers the slow start
            u_end += 45.0 / ks;
            for (a, b) in panels(0.0, u_end, width, &[1e-3, 1e-2]) {
                for (u, w) in gl.mapped(a, b) {
                    unodes.push((u, w, tr.phi(u), tr.velocity_stable(u)));
                }
            }
        }
        Ok(PsiTable { tr, model, gamma, unodes, step })
    }

    fn ratio(&self, s: f64) -> f64 {
        let tr = self.tr;
        if let Some((_, height)) = self.step {
            let tc = match tr.t_cross {
                Some(t) => t,
                None => return 0.0,
            };
            let lo = (tc - s).max(0.0);
            let gl = GaussRule::new(16);
            let ls = height * (s - tc).max(0.0);
            let mut acc = 0.0;
            for (a, b) in panels(lo, tc, 0.1, &[]) {
                acc += gl.integrate(a, b, |u| {
                    let lam = height * (s + u - tc).max(0.0);
                    (ls - lam).exp() / tr.velocity_stable(u)
                });
            }
            return self.gamma * height * acc;
        }
        let ls = tr.lambda_fast(s);
        let affine = self.model.affine();
        let mut acc = 0.0;
        for &(u, w, phi_u, vel_u) in &self.unodes {
            let e = ls - tr.lambda_fast(s + u);
            if e < -46.0 {
                continue;
            }
            let phi_su = tr.phi(s + u);
            let q = match affine {
                Some((_, c1)) => crate::current::expm1_over(c1, s) * self.model.f_divided_difference(phi_su, phi_u),
                None => (self.model.f(phi_su) - self.model.f(phi_u)) / vel_u,
            };
            acc += w * e.exp() * q;
        }
        self.gamma * acc
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Verdict {
    Stable,
    Unstable,
    Marginal,
}

#[derive(Clone, Copy, Debug)]
pub struct SpectralOptions {
    /// Left edge of the search rectangle; defaults to −0.9κ.
    pub re_lo: Option<f64>,
    pub re_hi: f64,
    pub im_max: f64,
    /// |Re z| below this counts as on the imaginary axis.
    pub margin: f64,
}

impl Default for SpectralOptions {
    fn default() -> Self {
        SpectralOptions { re_lo: None, re_hi: 2.0, im_max: 40.0, margin: 1e-6 }
    }
}

#[derive(Clone, Debug)]
pub struct SpectralReport {
    pub alpha: f64,
    pub j: f64,
    pub gamma: f64,
    /// Zeros of 1 − J Θ̂ with Re z > −λ*.
    pub roots: Vec<C>,
    pub verdict: Verdict,
    /// Spectral gap of the renewal kernel: −max Re over the zeros of Ĥ in the rectangle.
    pub lambda_star: f64,
    pub rect: Rect,
}

impl Serialize for SpectralReport {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut st = s.serialize_struct("SpectralReport", 5)?;
        st.serialize_field("alpha", &self.alpha)?;
        st.serialize_field("J", &self.j)?;
        let roots: Vec<ReIm> = self.roots.iter().map(|&z| z.into()).collect();
        st.serialize_field("roots", &roots)?;
        st.serialize_field("verdict", &self.verdict)?;
        st.serialize_field("lambda_star", &self.lambda_star)?;
        st.end()
    }
}

/// Locate the zeros of 1 − J Θ̂ in the search rectangle and classify the equilibrium.
pub fn analyze(model: &ModelSpec, alpha: f64, opts: &SpectralOptions) -> Result<SpectralReport> {
    let probe = Trajectory::new(model, alpha, 0.0)?;
    let kappa = probe.kappa;
    let re_lo = opts.re_lo.unwrap_or(-0.9 * kappa);
    let tf = if model.toy_params().is_some() {
        Transforms::new(model, alpha, re_lo)?
    } else {
        Transforms::numeric(model, alpha, re_lo, opts.im_max)?
    };
    let rect = Rect::new(re_lo, opts.re_hi, -opts.im_max, opts.im_max);
    let ropts = RootOptions::default();
    let h_zeros = find_zeros(&|z| tf.h_hat(z), rect, &ropts)?;
    let lambda_star = h_zeros.iter().map(|z| -z.re).fold(f64::INFINITY, f64::min);
    let lambda_star = if lambda_star.is_finite() { lambda_star } else { -re_lo };
    let zeros = find_zeros(&|z| tf.f_hol(z), rect, &ropts)?;
    let roots: Vec<C> = zeros.into_iter().filter(|z| z.re > -lambda_star).collect();
    let max_re = roots.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
    let verdict = if max_re > opts.margin {
        Verdict::Unstable
    } else if max_re >= -opts.margin {
        Verdict::Marginal
    } else {
        Verdict::Stable
    };
    Ok(SpectralReport { alpha, j: tf.j, gamma: tf.gamma, roots, verdict, lambda_star, rect })
}
