//! Renewal-type Volterra equations r = K^ν + K * r, solved by trapezoidal product
//! integration on a uniform grid.
//!
//! Step rates make u ↦ K(t, u) jump at the crossing time and make K^ν jump once.
//! The solver writes r = K^ν + ρ with ρ = K * r continuous and integrates every cell
//! that contains a jump piecewise, so the scheme stays second order.

use crate::current::PeriodicCurrent;
use crate::error::{MfhError, Result};
use crate::kernels::KernelGrid;
use crate::model::{Func, ModelSpec};
use crate::quadrature::GaussRule;
use std::sync::Arc;
use crate::quadrature::exp_linear_weights;
use crate::trajectory::{PathStepper, Trajectory};
use num_complex::Complex64 as C;
use serde::Serialize;
use std::path::Path;

/// Discontinuity of u ↦ K(t_n, u) inside the cell [u_m, u_{m+1}].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Split {
    pub m: usize,
    pub theta: f64,
    /// K(t_n, u_c−) and K(t_n, u_c+).
    pub left: f64,
    pub right: f64,
    /// H(t_n, u_c), where H has a kink.
    pub h_at: f64,
}

/// Two-time kernel on the nodes t_n = t_0 + n·dt.
///
/// Convolutions use product integration: the integrand's unknown factor is linear on each
/// cell and the kernel enters through its moments against the two hat functions.
pub trait GridKernel: Sync {
    fn dt(&self) -> f64;
    /// Number of nodes.
    fn len(&self) -> usize;
    fn k(&self, n: usize, m: usize) -> f64;
    fn h(&self, n: usize, m: usize) -> f64;
    fn split(&self, n: usize) -> Option<Split>;
    /// Lag at which a time-homogeneous kernel jumps; with a jumping forcing this puts a kink in ρ.
    fn jump_lag(&self) -> Option<f64> {
        None
    }
    /// Time (from the first node) at which ρ has a kink when the forcing jumps at `t`.
    fn kink_after(&self, t: f64) -> Option<f64> {
        self.jump_lag().map(|l| t + l)
    }
    /// (∫ K(t_n,u)(1−θ) du, ∫ K(t_n,u) θ du) over cell m, θ = (u − u_m)/dt.
    fn k_cell(&self, n: usize, m: usize) -> (f64, f64) {
        hat_moments(nodal_k(self, n, m), self.dt())
    }
    fn h_cell(&self, n: usize, m: usize) -> (f64, f64) {
        hat_moments(nodal_h(self, n, m), self.dt())
    }
    /// ∫ over cell m of K(t_n, u) g(u) du.
    fn k_cell_product(&self, n: usize, m: usize, g: Lin) -> f64 {
        cell_product(nodal_k(self, n, m), g, self.dt())
    }
    fn h_cell_product(&self, n: usize, m: usize, g: Lin) -> f64 {
        cell_product(nodal_h(self, n, m), g, self.dt())
    }
    /// ∫_{t_0}^{t_n} K(t_n, u) v(u) du without the v_n term, and the coefficient of v_n.
    fn conv_k(&self, n: usize, v: &[f64]) -> (f64, f64) {
        let mut acc = 0.0;
        let mut diag = 0.0;
        for m in 0..n {
            let (a, b) = self.k_cell(n, m);
            acc += a * v[m];
            if m + 1 < n {
                acc += b * v[m + 1];
            } else {
                diag = b;
            }
        }
        (acc, diag)
    }
    /// ∫_{t_0}^{t_n} H(t_n, u) v(u) du.
    fn conv_h(&self, n: usize, v: &[f64]) -> f64 {
        (0..n)
            .map(|m| {
                let (a, b) = self.h_cell(n, m);
                a * v[m] + b * v[m + 1]
            })
            .sum()
    }
}

fn nodal_k<G: GridKernel + ?Sized>(g: &G, n: usize, m: usize) -> Lin {
    match g.split(n) {
        Some(s) if s.m == m => Lin { v0: g.k(n, m), v1: g.k(n, m + 1), jump: Some((s.theta, s.left, s.right)) },
        _ => Lin::plain(g.k(n, m), g.k(n, m + 1)),
    }
}

fn nodal_h<G: GridKernel + ?Sized>(g: &G, n: usize, m: usize) -> Lin {
    match g.split(n) {
        Some(s) if s.m == m => Lin { v0: g.h(n, m), v1: g.h(n, m + 1), jump: Some((s.theta, s.h_at, s.h_at)) },
        _ => Lin::plain(g.h(n, m), g.h(n, m + 1)),
    }
}

fn hat_moments(l: Lin, dt: f64) -> (f64, f64) {
    (cell_product(l, Lin::plain(1.0, 0.0), dt), cell_product(l, Lin::plain(0.0, 1.0), dt))
}

/// Jump of the forcing K^ν inside the cell [t_m, t_{m+1}].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jump {
    pub m: usize,
    pub theta: f64,
    pub left: f64,
    pub right: f64,
}

/// K^ν and H^ν on the nodes.
#[derive(Clone, Debug)]
pub struct Forcing {
    pub k: Vec<f64>,
    pub h: Vec<f64>,
    pub jump: Option<Jump>,
}

/// Piecewise-linear function on one cell in the local variable θ ∈ [0, 1], with at most
/// one jump at θ = `jump.0` from `jump.1` to `jump.2`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Lin {
    pub v0: f64,
    pub v1: f64,
    pub jump: Option<(f64, f64, f64)>,
}

impl Lin {
    pub fn plain(v0: f64, v1: f64) -> Self {
        Lin { v0, v1, jump: None }
    }

    pub fn eval(&self, th: f64, from_left: bool) -> f64 {
        match self.jump {
            None => self.v0 + (self.v1 - self.v0) * th,
            Some((tj, l, r)) => {
                if th < tj || (th == tj && from_left) {
                    if tj == 0.0 {
                        return l;
                    }
                    self.v0 + (l - self.v0) * th / tj
                } else {
                    if tj == 1.0 {
                        return r;
                    }
                    r + (self.v1 - r) * (th - tj) / (1.0 - tj)
                }
            }
        }
    }

    /// Sub-intervals of [0, 1] on which the function is linear.
    fn pieces(&self) -> Vec<(f64, f64)> {
        match self.jump {
            Some((tj, _, _)) if tj > 0.0 && tj < 1.0 => vec![(0.0, tj), (tj, 1.0)],
            _ => vec![(0.0, 1.0)],
        }
    }
}

/// Exact ∫ over one cell of the product of two piecewise-linear factors (Simpson per piece).
fn cell_product(a: Lin, b: Lin, dt: f64) -> f64 {
    let mut pts = [0.0, 1.0, 2.0, 2.0];
    let mut np = 2;
    for j in [a.jump, b.jump].iter().flatten() {
        if j.0 > 0.0 && j.0 < 1.0 {
            pts[np] = j.0;
            np += 1;
        }
    }
    let pts = &mut pts[..np];
    pts.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let mut acc = 0.0;
    for w in pts.windows(2) {
        let (p, q) = (w[0], w[1]);
        if q <= p {
            continue;
        }
        let c = 0.5 * (p + q);
        let fp = a.eval(p, false) * b.eval(p, false);
        let fc = a.eval(c, false) * b.eval(c, false);
        let fq = a.eval(q, true) * b.eval(q, true);
        acc += (q - p) / 6.0 * (fp + 4.0 * fc + fq);
    }
    acc * dt
}

/// Solution of the rate equation on the grid.
#[derive(Clone, Debug, Serialize)]
pub struct RateSolution {
    pub t: Vec<f64>,
    pub r: Vec<f64>,
    /// sup_n |H^ν(t_n) + ∫ H(t_n, u) r(u) du − 1|.
    pub residual_mass: f64,
    pub gamma: Option<f64>,
    /// r − γ for constant-current runs.
    pub xi: Option<Vec<f64>>,
    #[serde(skip)]
    pub jump: Option<Jump>,
    #[serde(skip)]
    pub dt: f64,
}

impl RateSolution {
    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.xi = Some(self.r.iter().map(|r| r - gamma).collect());
        self.gamma = Some(gamma);
        self
    }

    /// Value at time t by linear interpolation (one-sided across the forcing jump).
    pub fn rate_at(&self, t: f64) -> f64 {
        let pos = (t - self.t[0]) / self.dt;
        let n = self.t.len();
        if pos <= 0.0 {
            return self.r[0];
        }
        if pos >= (n - 1) as f64 {
            return self.r[n - 1];
        }
        let m = pos.floor() as usize;
        let th = pos - m as f64;
        self.r[m] + (self.r[m + 1] - self.r[m]) * th
    }

    /// ∫_0^T e^{-zt} ξ(t) dt with exact weights for piecewise-linear ξ.
    pub fn xi_transform(&self, z: C) -> Option<C> {
        let xi = self.xi.as_ref()?;
        let (w0, w1) = exp_linear_weights(z, self.dt);
        let e = (-z * self.dt).exp();
        // Σ over cells of e^{-z t_{m+1}} (w0 ξ_m + w1 ξ_{m+1}), Horner from the right
        let mut acc = C::new(0.0, 0.0);
        for m in (0..xi.len() - 1).rev() {
            acc = acc * e + w0 * xi[m] + w1 * xi[m + 1];
        }
        Some(acc * (-z * self.t[0]).exp() * e)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let rows = (0..self.t.len()).map(|i| {
            let xi = self.xi.as_ref().map(|x| x[i]).unwrap_or(f64::NAN);
            vec![self.t[i], self.r[i], xi]
        });
        crate::io::write_csv(path, &["t", "r", "xi"], rows)
    }
}

/// ρ's kink: cell index and position, where the forcing jump meets the kernel jump.
fn kink_cell<G: GridKernel + ?Sized>(forcing: &Forcing, kernel: &G, dt: f64, n_nodes: usize) -> Option<(usize, f64)> {
    let j = forcing.jump?;
    let pos = kernel.kink_after((j.m as f64 + j.theta) * dt)? / dt;
    let m = pos.floor() as usize;
    let th = pos - m as f64;
    (m >= 1 && m + 1 < n_nodes && th > 0.0).then_some((m, th))
}

/// Correction to a plain cell integral when ρ is linear on each side of a kink at θ.
/// Returns (constant part, coefficient of ρ_{m+1}); the left value at the kink is extrapolated
/// from ρ_{m−1}, ρ_m.
fn kink_correction(
    plain: (f64, f64),
    product: impl Fn(Lin) -> f64,
    rho: &[f64],
    m: usize,
    th: f64,
    include_right: bool,
) -> (f64, f64) {
    let vk = rho[m] + th * (rho[m] - rho[m - 1]);
    let p0 = product(Lin { v0: rho[m], v1: 0.0, jump: Some((th, vk, vk)) });
    let p1 = product(Lin { v0: 0.0, v1: 1.0, jump: Some((th, 0.0, 0.0)) });
    let (a, b) = plain;
    if include_right {
        (p0 + p1 * rho[m + 1] - a * rho[m] - b * rho[m + 1], 0.0)
    } else {
        (p0 - a * rho[m], p1 - b)
    }
}

/// Marches ρ = K * K^ν + K * ρ and returns r = K^ν + ρ.
pub fn solve_rate<G: GridKernel>(forcing: &Forcing, kernel: &G, t0: f64) -> Result<RateSolution> {
    let n_nodes = kernel.len();
    let dt = kernel.dt();
    if forcing.k.len() < n_nodes || forcing.h.len() < n_nodes {
        return Err(MfhError::InvalidParameter("forcing shorter than kernel grid".into()));
    }
    let g = &forcing.k[..n_nodes];
    let jump_cell = forcing.jump.map(|j| (j.m, Lin { v0: g[j.m], v1: g[j.m + 1], jump: Some((j.theta, j.left, j.right)) }));
    let kink = kink_cell(forcing, kernel, dt, n_nodes);
    let mut rho = vec![0.0; n_nodes];
    for n in 1..n_nodes {
        let (mut f, dg) = kernel.conv_k(n, g);
        f += dg * g[n];
        if let Some((m, gl)) = jump_cell {
            if m < n {
                let (a, b) = kernel.k_cell(n, m);
                f += kernel.k_cell_product(n, m, gl) - (a * g[m] + b * g[m + 1]);
            }
        }
        let (mut s, mut diag) = kernel.conv_k(n, &rho);
        if let Some((m, th)) = kink {
            if m < n {
                let (c, d) = kink_correction(kernel.k_cell(n, m), |l| kernel.k_cell_product(n, m, l), &rho, m, th, m + 1 < n);
                s += c;
                diag += d;
            }
        }
        if (1.0 - diag).abs() < 1e-14 {
            return Err(MfhError::GridTooCoarse { residual: f64::INFINITY, limit: 0.0 });
        }
        rho[n] = (f + s) / (1.0 - diag);
    }
    let r: Vec<f64> = (0..n_nodes).map(|n| g[n] + rho[n]).collect();
    let mut residual: f64 = (forcing.h[0] - 1.0).abs();
    for n in 1..n_nodes {
        let mut acc = kernel.conv_h(n, g) + kernel.conv_h(n, &rho);
        if let Some((m, gl)) = jump_cell {
            if m < n {
                let (a, b) = kernel.h_cell(n, m);
                acc += kernel.h_cell_product(n, m, gl) - (a * g[m] + b * g[m + 1]);
            }
        }
        if let Some((m, th)) = kink {
            if m < n {
                acc += kink_correction(kernel.h_cell(n, m), |l| kernel.h_cell_product(n, m, l), &rho, m, th, true).0;
            }
        }
        residual = residual.max((forcing.h[n] + acc - 1.0).abs());
    }
    Ok(RateSolution {
        t: (0..n_nodes).map(|n| t0 + n as f64 * dt).collect(),
        r,
        residual_mass: residual,
        gamma: None,
        xi: None,
        jump: forcing.jump,
        dt,
    })
}

/// Like [`solve_rate`], failing with `GridTooCoarse` when the mass residual exceeds 10·tol.
pub fn solve_rate_checked<G: GridKernel>(forcing: &Forcing, kernel: &G, t0: f64, tol: f64) -> Result<RateSolution> {
    let sol = solve_rate(forcing, kernel, t0)?;
    if sol.residual_mass > 10.0 * tol {
        return Err(MfhError::GridTooCoarse { residual: sol.residual_mass, limit: 10.0 * tol });
    }
    Ok(sol)
}

/// Time-homogeneous kernel K(t, u) = k(t − u), H(t, u) = h(t − u), with cell moments
/// computed by Gauss–Legendre quadrature.
#[derive(Clone)]
pub struct ConvolutionKernel {
    dt: f64,
    n: usize,
    k_nodes: Vec<f64>,
    h_nodes: Vec<f64>,
    /// Reversed lag-cell moments: `*_a` pairs with the left node of a u-cell, `*_b` with the right.
    ka_rev: Vec<f64>,
    kb_rev: Vec<f64>,
    ha_rev: Vec<f64>,
    hb_rev: Vec<f64>,
    kf: Func,
    hf: Func,
    jump_lag: Option<f64>,
    gl: GaussRule,
}

impl std::fmt::Debug for ConvolutionKernel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "ConvolutionKernel {{ dt: {}, n: {}, jump_lag: {:?} }}", self.dt, self.n, self.jump_lag)
    }
}

impl ConvolutionKernel {
    /// Smooth lag functions k and h = 1 − ∫k.
    pub fn from_fn(
        dt: f64,
        n: usize,
        k: impl Fn(f64) -> f64 + Send + Sync + 'static,
        h: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self::build(dt, n, Arc::new(k), Arc::new(h), None)
    }

    /// Kernel of a constant current α with resets to 0.
    pub fn from_trajectory(tr: &Trajectory, dt: f64, n: usize) -> Self {
        let (a, b) = (tr.clone(), tr.clone());
        let jump = tr.t_cross.filter(|&t| t > 0.0);
        Self::build(dt, n, Arc::new(move |l| a.density(l)), Arc::new(move |l| b.survival(l)), jump)
    }

    pub fn model_kernel(model: &ModelSpec, alpha: f64, dt: f64, t_end: f64) -> Result<Self> {
        let tr = Trajectory::new(model, alpha, 0.0)?;
        let n = (t_end / dt).round() as usize + 1;
        Ok(Self::from_trajectory(&tr, dt, n))
    }

    fn build(dt: f64, n: usize, kf: Func, hf: Func, jump_lag: Option<f64>) -> Self {
        let gl = GaussRule::new(8);
        let cells = n.saturating_sub(1);
        let mut ka = vec![0.0; cells];
        let mut kb = vec![0.0; cells];
        let mut ha = vec![0.0; cells];
        let mut hb = vec![0.0; cells];
        for j in 0..cells {
            let a = j as f64 * dt;
            let e = a + dt;
            let mut cuts = vec![a];
            if let Some(l) = jump_lag {
                if l > a && l < e {
                    cuts.push(l);
                }
            }
            cuts.push(e);
            for w in cuts.windows(2) {
                for (x, wt) in gl.mapped(w[0], w[1]) {
                    let th = (x - a) / dt;
                    let (kv, hv) = (kf(x), hf(x));
                    // lag θ near 1 is the left node of the u-cell
                    ka[j] += wt * kv * th;
                    kb[j] += wt * kv * (1.0 - th);
                    ha[j] += wt * hv * th;
                    hb[j] += wt * hv * (1.0 - th);
                }
            }
        }
        let rev = |v: Vec<f64>| -> Vec<f64> { v.into_iter().rev().collect() };
        ConvolutionKernel {
            dt,
            n,
            k_nodes: (0..n).map(|l| kf(l as f64 * dt)).collect(),
            h_nodes: (0..n).map(|l| hf(l as f64 * dt)).collect(),
            ka_rev: rev(ka),
            kb_rev: rev(kb),
            ha_rev: rev(ha),
            hb_rev: rev(hb),
            kf,
            hf,
            jump_lag,
            gl,
        }
    }

    fn product(&self, f: &Func, n: usize, m: usize, g: Lin) -> f64 {
        let tn = n as f64 * self.dt;
        let um = m as f64 * self.dt;
        let mut cuts: Vec<f64> = g.pieces().into_iter().flat_map(|(p, q)| [p, q]).collect();
        if let Some(l) = self.jump_lag {
            let th = (tn - l - um) / self.dt;
            if th > 0.0 && th < 1.0 {
                cuts.push(th);
            }
        }
        cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        cuts.dedup();
        let mut acc = 0.0;
        for w in cuts.windows(2) {
            for (th, wt) in self.gl.mapped(w[0], w[1]) {
                acc += wt * f(tn - um - th * self.dt) * g.eval(th, false);
            }
        }
        acc * self.dt
    }

    /// Σ_{m<n} a_{n−1−m} v_m, where a_{n−1−m} sits at a_rev[cells − n + m].
    fn lag_dot(a_rev: &[f64], v: &[f64], cells: usize, n: usize) -> f64 {
        let off = cells - n;
        a_rev[off..off + n].iter().zip(&v[..n]).map(|(a, b)| a * b).sum()
    }
}

impl GridKernel for ConvolutionKernel {
    fn dt(&self) -> f64 {
        self.dt
    }
    fn len(&self) -> usize {
        self.n
    }
    fn k(&self, n: usize, m: usize) -> f64 {
        self.k_nodes[n - m]
    }
    fn h(&self, n: usize, m: usize) -> f64 {
        self.h_nodes[n - m]
    }
    fn split(&self, _n: usize) -> Option<Split> {
        None
    }
    fn jump_lag(&self) -> Option<f64> {
        self.jump_lag
    }
    fn k_cell(&self, n: usize, m: usize) -> (f64, f64) {
        let i = self.n - 1 - (n - 1 - m) - 1;
        (self.ka_rev[i], self.kb_rev[i])
    }
    fn h_cell(&self, n: usize, m: usize) -> (f64, f64) {
        let i = self.n - 1 - (n - 1 - m) - 1;
        (self.ha_rev[i], self.hb_rev[i])
    }
    fn k_cell_product(&self, n: usize, m: usize, g: Lin) -> f64 {
        self.product(&self.kf, n, m, g)
    }
    fn h_cell_product(&self, n: usize, m: usize, g: Lin) -> f64 {
        self.product(&self.hf, n, m, g)
    }
    fn conv_k(&self, n: usize, v: &[f64]) -> (f64, f64) {
        let cells = self.n - 1;
        let a = Self::lag_dot(&self.ka_rev, v, cells, n);
        // Σ_{m<n−1} b_{n−1−m} v_{m+1}
        let off = cells - n;
        let b: f64 = self.kb_rev[off..off + n - 1].iter().zip(&v[1..n]).map(|(x, y)| x * y).sum();
        (a + b, self.kb_rev[cells - 1])
    }
    fn conv_h(&self, n: usize, v: &[f64]) -> f64 {
        let cells = self.n - 1;
        let a = Self::lag_dot(&self.ha_rev, v, cells, n);
        let off = cells - n;
        let b: f64 = self.hb_rev[off..off + n].iter().zip(&v[1..=n]).map(|(x, y)| x * y).sum();
        a + b
    }
}

impl Forcing {
    /// ν = δ_{x0} at t = 0 under the constant current of the trajectory.
    pub fn from_trajectory(tr: &Trajectory, dt: f64, n: usize) -> Self {
        let k = (0..n).map(|l| tr.density(l as f64 * dt)).collect();
        let h = (0..n).map(|l| tr.survival(l as f64 * dt)).collect();
        let jump = tr.t_cross.filter(|&t| t > 0.0).and_then(|tc| {
            let pos = tc / dt;
            let m = pos.floor() as usize;
            let theta = pos - m as f64;
            let eps = 1e-13 * (1.0 + tc);
            (theta > 0.0 && m + 1 < n).then(|| Jump { m, theta, left: tr.density(tc - eps), right: tr.density(tc + eps) })
        });
        Forcing { k, h, jump }
    }

    pub fn from_fn(dt: f64, n: usize, k: impl Fn(f64) -> f64, h: impl Fn(f64) -> f64) -> Self {
        Forcing { k: (0..n).map(|l| k(l as f64 * dt)).collect(), h: (0..n).map(|l| h(l as f64 * dt)).collect(), jump: None }
    }
}

/// Constant current α, ν = δ_0: returns r on [0, t_end] together with ξ = r − γ(α).
pub fn solve_constant_current(model: &ModelSpec, alpha: f64, t_end: f64, dt: f64) -> Result<RateSolution> {
    if !(dt > 0.0 && t_end > 0.0 && t_end / dt < 1e8) {
        return Err(MfhError::InvalidParameter(format!("need 0 < dt and 0 < t_end, got dt = {dt}, t_end = {t_end}")));
    }
    let tr = Trajectory::new(model, alpha, 0.0)?;
    let n = (t_end / dt).round() as usize + 1;
    let kernel = ConvolutionKernel::from_trajectory(&tr, dt, n);
    let forcing = Forcing::from_trajectory(&tr, dt, n);
    let gamma = crate::invariant::gamma_of(&tr)?;
    Ok(solve_rate(&forcing, &kernel, 0.0)?.with_gamma(gamma))
}

/// Step-rate kernel under an arbitrary current: after a reset at u the path crosses the
/// threshold at C(u) and then fires at the constant height.
#[derive(Clone, Debug)]
pub struct CrossingKernel {
    dt: f64,
    t0: f64,
    height: f64,
    cross: Vec<f64>,
    gl: GaussRule,
}

impl CrossingKernel {
    pub fn new(model: &ModelSpec, current: &PeriodicCurrent, t0: f64, dt: f64, n: usize) -> Result<Self> {
        let (thr, height) = model
            .step()
            .ok_or_else(|| MfhError::InvalidParameter("crossing kernel needs a step rate".into()))?;
        if model.b(thr) + current.min_value() <= 0.0 {
            return Err(MfhError::InvalidParameter("path may fall back below the threshold".into()));
        }
        let cross = (0..n)
            .map(|m| crossing_time(model, current, t0 + m as f64 * dt, 0.0, thr))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { dt, t0, height, cross, gl: GaussRule::new(8) })
    }

    /// Forcing for ν = δ_x at the first node.
    pub fn forcing(&self, model: &ModelSpec, current: &PeriodicCurrent, x: f64) -> Result<Forcing> {
        let (thr, _) = model.step().expect("step rate");
        let n = self.cross.len();
        let c = if x >= thr { self.t0 } else { crossing_time(model, current, self.t0, x, thr)? };
        let hgt = self.height;
        let tn = |i: usize| self.t0 + i as f64 * self.dt;
        let k = (0..n).map(|i| if tn(i) >= c { hgt * (-(tn(i) - c) * hgt).exp() } else { 0.0 }).collect();
        let h = (0..n).map(|i| if tn(i) >= c { (-(tn(i) - c) * hgt).exp() } else { 1.0 }).collect();
        let pos = (c - self.t0) / self.dt;
        let m = pos.floor() as usize;
        let theta = pos - m as f64;
        let jump = (theta > 0.0 && m + 1 < n).then_some(Jump { m, theta, left: 0.0, right: hgt });
        Ok(Forcing { k, h, jump })
    }
}

/// First time after s at which φ^a_{·,s}(x) reaches `thr`.
pub fn crossing_time(model: &ModelSpec, current: &PeriodicCurrent, s: f64, x: f64, thr: f64) -> Result<f64> {
    if x >= thr {
        return Ok(s);
    }
    let h = 0.05 * current.tau.min(1.0);
    let mut st = PathStepper::new(model, current, s, x).with_max_step(h);
    let mut prev = st.state;
    let mut guard = 0;
    loop {
        let next = st.advance_to(prev.t + h)?;
        if next.x >= thr {
            let (mut lo, mut hi) = (prev.t, next.t);
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                if crate::model::flow(model, current, mid, prev.t, prev.x)? >= thr {
                    hi = mid;
                } else {
                    lo = mid;
                }
                if hi - lo < 1e-15 * (1.0 + hi.abs()) {
                    break;
                }
            }
            return Ok(0.5 * (lo + hi));
        }
        prev = next;
        guard += 1;
        if guard > 10_000_000 {
            return Err(MfhError::FlowDivergence { steps: guard });
        }
    }
}

impl CrossingKernel {
    /// θ in the u-cell m at which C(u) = t, with C linear on the cell.
    fn cut(&self, t: f64, m: usize) -> Option<f64> {
        let (c0, c1) = (self.cross[m], self.cross[m + 1]);
        let th = (t - c0) / (c1 - c0);
        (th > 0.0 && th < 1.0).then_some(th)
    }

    fn crossing_in_cell(&self, m: usize, th: f64) -> f64 {
        self.cross[m] + th * (self.cross[m + 1] - self.cross[m])
    }

    fn kval(&self, t: f64, c: f64) -> f64 {
        if c <= t {
            self.height * (-(t - c) * self.height).exp()
        } else {
            0.0
        }
    }

    fn hval(&self, t: f64, c: f64) -> f64 {
        if c <= t {
            (-(t - c) * self.height).exp()
        } else {
            1.0
        }
    }

    fn product(&self, kernel: bool, n: usize, m: usize, g: Lin) -> f64 {
        let t = self.t0 + n as f64 * self.dt;
        let mut cuts: Vec<f64> = g.pieces().into_iter().flat_map(|(p, q)| [p, q]).collect();
        cuts.extend(self.cut(t, m));
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        let mut acc = 0.0;
        for w in cuts.windows(2) {
            for (th, wt) in self.gl.mapped(w[0], w[1]) {
                let c = self.crossing_in_cell(m, th);
                let v = if kernel { self.kval(t, c) } else { self.hval(t, c) };
                acc += wt * v * g.eval(th, false);
            }
        }
        acc * self.dt
    }

    /// First u-cell whose kernel contribution at t_n is above e^{-40}.
    fn first_cell(&self, n: usize) -> usize {
        let t = self.t0 + n as f64 * self.dt;
        let cutoff = 40.0 / self.height;
        self.cross[..=n].partition_point(|&c| t - c > cutoff).saturating_sub(1)
    }
}

impl GridKernel for CrossingKernel {
    fn dt(&self) -> f64 {
        self.dt
    }
    fn len(&self) -> usize {
        self.cross.len()
    }
    fn k(&self, n: usize, m: usize) -> f64 {
        self.kval(self.t0 + n as f64 * self.dt, self.cross[m])
    }
    fn h(&self, n: usize, m: usize) -> f64 {
        self.hval(self.t0 + n as f64 * self.dt, self.cross[m])
    }
    fn split(&self, n: usize) -> Option<Split> {
        let t = self.t0 + n as f64 * self.dt;
        // last m with C_m ≤ t; C is increasing
        let idx = self.cross[..=n].partition_point(|&c| c <= t);
        if idx == 0 || idx > n {
            return None;
        }
        let m = idx - 1;
        let theta = self.cut(t, m)?;
        Some(Split { m, theta, left: self.height, right: 0.0, h_at: 1.0 })
    }
    fn kink_after(&self, t: f64) -> Option<f64> {
        let pos = t / self.dt;
        let m = (pos.floor() as usize).min(self.cross.len() - 2);
        Some(self.crossing_in_cell(m, pos - m as f64) - self.t0)
    }
    fn k_cell(&self, n: usize, m: usize) -> (f64, f64) {
        (self.product(true, n, m, Lin::plain(1.0, 0.0)), self.product(true, n, m, Lin::plain(0.0, 1.0)))
    }
    fn h_cell(&self, n: usize, m: usize) -> (f64, f64) {
        (self.product(false, n, m, Lin::plain(1.0, 0.0)), self.product(false, n, m, Lin::plain(0.0, 1.0)))
    }
    fn k_cell_product(&self, n: usize, m: usize, g: Lin) -> f64 {
        self.product(true, n, m, g)
    }
    fn h_cell_product(&self, n: usize, m: usize, g: Lin) -> f64 {
        self.product(false, n, m, g)
    }
    fn conv_k(&self, n: usize, v: &[f64]) -> (f64, f64) {
        let mut acc = 0.0;
        let mut diag = 0.0;
        for m in self.first_cell(n)..n {
            let (a, b) = self.k_cell(n, m);
            acc += a * v[m];
            if m + 1 < n {
                acc += b * v[m + 1];
            } else {
                diag = b;
            }
        }
        (acc, diag)
    }
    fn conv_h(&self, n: usize, v: &[f64]) -> f64 {
        (self.first_cell(n)..n)
            .map(|m| {
                let (a, b) = self.h_cell(n, m);
                a * v[m] + b * v[m + 1]
            })
            .sum()
    }
}

/// Kernel read from a periodic [`KernelGrid`] with dt equal to the grid step.
pub struct PeriodicTableKernel<'a> {
    grid: &'a KernelGrid,
    n: usize,
}

impl<'a> PeriodicTableKernel<'a> {
    pub fn new(grid: &'a KernelGrid, periods: usize) -> Self {
        Self { grid, n: periods * grid.n + 1 }
    }

    /// ν = δ_0 at the first node.
    pub fn forcing(&self) -> Forcing {
        let k = (0..self.n).map(|i| self.k(i, 0)).collect();
        let h = (0..self.n).map(|i| self.h(i, 0)).collect();
        Forcing { k, h, jump: None }
    }
}

impl GridKernel for PeriodicTableKernel<'_> {
    fn dt(&self) -> f64 {
        self.grid.dt
    }
    fn len(&self) -> usize {
        self.n
    }
    fn k(&self, n: usize, m: usize) -> f64 {
        self.grid.k_half(m % self.grid.n, 2 * (n - m) as i64)
    }
    fn h(&self, n: usize, m: usize) -> f64 {
        self.grid.h_half(m % self.grid.n, 2 * (n - m) as i64)
    }
    fn split(&self, _n: usize) -> Option<Split> {
        None
    }
}

/// Exponential fit |ξ(t)| ≈ C e^{-λ t} over the tail window.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecayFit {
    pub lambda: f64,
    pub c: f64,
    pub window: (f64, f64),
    pub points: usize,
    pub floor: f64,
    /// ∫ ξ over the computed horizon.
    pub integral: f64,
}

pub fn stationary_rate_gap(sol: &RateSolution, gamma: f64) -> Result<DecayFit> {
    let n = sol.r.len();
    let xi: Vec<f64> = sol.r.iter().map(|r| r - gamma).collect();
    let abs: Vec<f64> = xi.iter().map(|x| x.abs()).collect();
    // t_half: from here on |ξ| stays below 1% of γ
    let mut start = n;
    for i in (0..n).rev() {
        if abs[i] >= 0.01 * gamma {
            break;
        }
        start = i;
    }
    if start + 8 >= n {
        return Err(MfhError::TailBelowFloor);
    }
    let mut tail: Vec<f64> = abs[n - n / 10..].to_vec();
    tail.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let plateau = tail[tail.len() / 2];
    let floor = (20.0 * plateau).max(1e-13 * gamma.max(1e-300));
    let peaks: Vec<usize> = (start.max(1)..n - 1).filter(|&i| abs[i] >= abs[i - 1] && abs[i] > abs[i + 1] && abs[i] > floor).collect();
    let pts: Vec<usize> = if peaks.len() >= 3 { peaks } else { (start..n).filter(|&i| abs[i] > floor).collect() };
    // keep the leading run above the floor
    let mut used = Vec::new();
    for &i in &pts {
        if abs[i] <= floor {
            break;
        }
        used.push(i);
    }
    if used.len() < 3 {
        return Err(MfhError::TailBelowFloor);
    }
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    let k = used.len() as f64;
    for &i in &used {
        let (x, y) = (sol.t[i], abs[i].ln());
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    let slope = (k * sxy - sx * sy) / (k * sxx - sx * sx);
    let icpt = (sy - slope * sx) / k;
    let integral = sol.dt * (xi.iter().sum::<f64>() - 0.5 * (xi[0] + xi[n - 1]));
    Ok(DecayFit {
        lambda: -slope,
        c: icpt.exp(),
        window: (sol.t[used[0]], sol.t[*used.last().unwrap()]),
        points: used.len(),
        floor,
        integral,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_kernel_gives_zero_rate() {
        let k = ConvolutionKernel::from_fn(0.01, 200, |_| 0.0, |_| 1.0);
        let f = Forcing::from_fn(0.01, 200, |_| 0.0, |_| 1.0);
        let s = solve_rate(&f, &k, 0.0).unwrap();
        assert!(s.r.iter().all(|&r| r == 0.0));
        assert!(s.residual_mass < 1e-15);
    }

    #[test]
    fn renewal_gamma_kernel() {
        // K(t) = t e^{-t}: r(t) = (1 − e^{-2t})/2
        let dt = 1e-3;
        let n = 10001;
        let k = ConvolutionKernel::from_fn(dt, n, |t| t * (-t).exp(), |t| (1.0 + t) * (-t).exp());
        let f = Forcing::from_fn(dt, n, |t| t * (-t).exp(), |t| (1.0 + t) * (-t).exp());
        let s = solve_rate(&f, &k, 0.0).unwrap();
        let err = s.t.iter().zip(&s.r).map(|(t, r)| (r - 0.5 * (1.0 - (-2.0 * t).exp())).abs()).fold(0.0, f64::max);
        assert!(err < 1e-6, "{err}");
        assert!(s.residual_mass < 1e-6);
    }

    #[test]
    fn cell_product_handles_two_jumps() {
        let a = Lin { v0: 1.0, v1: 0.0, jump: Some((0.3, 1.0, 0.0)) };
        let b = Lin { v0: 0.0, v1: 2.0, jump: Some((0.6, 0.0, 2.0)) };
        assert_eq!(cell_product(a, b, 1.0), 0.0);
        let b = Lin { v0: 2.0, v1: 0.0, jump: Some((0.6, 2.0, 0.0)) };
        assert!((cell_product(a, b, 1.0) - 0.6).abs() < 1e-15);
    }
}
