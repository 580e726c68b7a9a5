//! Periodic regime: the phase chain of spike times modulo the period, the asymptotic
//! periodic rate ρ_a, the periodic density ν̃_a and the self-consistent periodic branch.
//!
//! Reduced phase θ = t/τ lives on [0, 2π]. The invariant phase density `pi` is taken with
//! respect to θ, `c` is the expected number of revolutions per spike measured in reduced
//! time (so c = 1/(2πτγ) for a constant current) and `rho = pi/(τ c)` is the rate in
//! physical time.

use crate::current::PeriodicCurrent;
use crate::error::{MfhError, Result};
use crate::hopf::BifurcationPoint;
use crate::invariant::j_of_alpha;
use crate::kernels::{certify_decay, KernelGrid};
use crate::model::{flow, ModelSpec};
use crate::quadrature::GaussRule;
use crate::spectral::Transforms;
use crate::trajectory::PathStepper;
use crate::volterra::{crossing_time, solve_rate, CrossingKernel, PeriodicTableKernel};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::Serialize;
use std::f64::consts::PI;
use std::path::Path;

/// Discretization of the phase chain.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ChainMethod {
    /// Cell transition matrix on a uniform grid, solved by LU.
    Grid,
    /// Step rates: spike phase = crossing phase + exponential wait, solved on Fourier modes.
    StepSpectral,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChainOptions {
    /// Phase nodes for the grid method and for the sampled output.
    pub nodes: usize,
    /// Fourier modes kept by the spectral method.
    pub modes: usize,
    /// None picks the spectral method whenever it applies.
    pub method: Option<ChainMethod>,
}

impl Default for ChainOptions {
    fn default() -> Self {
        Self { nodes: 2048, modes: 64, method: None }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct PhaseChainSolution {
    pub method: ChainMethod,
    pub alpha: f64,
    pub tau: f64,
    /// Reduced phase nodes θ_j = 2πj/n.
    pub theta: Vec<f64>,
    /// Invariant phase density on [0, 2π].
    pub pi: Vec<f64>,
    pub rho: Vec<f64>,
    pub c: f64,
    /// Lower bound of the periodized kernel density (physical time).
    pub doeblin_delta: f64,
    /// max_t |∫ H(t, s) ρ(s) ds − 1|, the constancy of c over the period.
    pub normalization_error: f64,
    /// Grid: ‖Pπ − π‖₁. Spectral: relative size of the last kept mode.
    pub stationarity_residual: f64,
    /// Fourier coefficients of ρ in θ, n = 0..: ρ(θ) = ρ̂_0 + 2 Re Σ ρ̂_n e^{inθ}.
    #[serde(skip)]
    pub rho_hat: Vec<C>,
}

impl PhaseChainSolution {
    /// ρ at physical time t by its Fourier series.
    pub fn rate_at(&self, t: f64) -> f64 {
        fourier_eval(&self.rho_hat, t / self.tau)
    }

    pub fn mean_rate(&self) -> f64 {
        self.rho_hat[0].re
    }

    /// ρ̂_n for n ≥ 0, zero beyond the resolved band.
    pub fn rho_mode(&self, n: usize) -> C {
        self.rho_hat.get(n).copied().unwrap_or(C::new(0.0, 0.0))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let rows = (0..self.theta.len()).map(|j| vec![self.theta[j], self.tau * self.theta[j], self.pi[j], self.rho[j]]);
        crate::io::write_csv(path, &["theta", "t", "pi", "rho"], rows)
    }
}

/// f(θ) = f̂_0 + 2 Re Σ_{n≥1} f̂_n e^{inθ}.
pub fn fourier_eval(coeffs: &[C], theta: f64) -> f64 {
    let Some(c0) = coeffs.first() else { return 0.0 };
    let e1 = C::new(theta.cos(), theta.sin());
    let mut e = e1;
    let mut acc = c0.re;
    for c in &coeffs[1..] {
        acc += 2.0 * (c * e).re;
        e *= e1;
    }
    acc
}

/// f̂_n = (1/N) Σ_j f(θ_j) e^{−inθ_j} for n = 0..N/2 (the Nyquist mode is dropped).
pub fn fourier_coeffs(samples: &[f64]) -> Vec<C> {
    let n = samples.len();
    let mut buf: Vec<C> = samples.iter().map(|&v| C::new(v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let keep = if n % 2 == 0 { n / 2 } else { n / 2 + 1 };
    buf.truncate(keep.max(1));
    for c in &mut buf {
        *c /= n as f64;
    }
    buf
}

fn stays_above(model: &ModelSpec, current: &PeriodicCurrent) -> Option<(f64, f64)> {
    let (thr, height) = model.step()?;
    (model.b(thr) + current.min_value() > 0.0).then_some((thr, height))
}

/// Invariant measure of the phase chain, ρ and c.
pub fn phase_invariant_measure(model: &ModelSpec, current: &PeriodicCurrent, opts: &ChainOptions) -> Result<PhaseChainSolution> {
    if model.b(0.0) + current.min_value() <= 0.0 {
        return Err(MfhError::InvalidParameter(format!("inf a = {} ≤ −b(0)", current.min_value())));
    }
    let spectral_ok = stays_above(model, current).is_some();
    match opts.method {
        Some(ChainMethod::Grid) => phase_chain_grid(model, current, opts.nodes),
        Some(ChainMethod::StepSpectral) if !spectral_ok => Err(MfhError::InvalidParameter(
            "spectral phase chain needs a step rate whose path stays above the threshold".into(),
        )),
        _ if spectral_ok => phase_chain_step(model, current, opts.nodes, opts.modes),
        _ => phase_chain_grid(model, current, opts.nodes),
    }
}

/// Asymptotic periodic rate ρ_a.
pub fn asymptotic_rate(model: &ModelSpec, current: &PeriodicCurrent, opts: &ChainOptions) -> Result<PhaseChainSolution> {
    phase_invariant_measure(model, current, opts)
}

/// Grid method: P_ij is the probability that the next spike after a reset at node s_j lands in
/// the cell centred at t_i. π solves Pπ = π with Σπ = 1 (LU with one row replaced by the
/// normalization) and is confirmed by power iteration.
pub fn phase_chain_grid(model: &ModelSpec, current: &PeriodicCurrent, n: usize) -> Result<PhaseChainSolution> {
    let grid = KernelGrid::build(model, current, n)?;
    let p = grid.transition_matrix();
    let pmin = p.iter().cloned().fold(f64::INFINITY, f64::min);
    let doeblin_delta = pmin / grid.dt;
    if !(pmin > 0.0) {
        return Err(MfhError::DoeblinFailure { min: pmin });
    }
    let mut a = p.clone();
    for i in 0..n {
        a[(i, i)] -= 1.0;
    }
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut rhs = DVector::zeros(n);
    rhs[n - 1] = 1.0;
    let mut x = a.lu().solve(&rhs).ok_or(MfhError::DoeblinFailure { min: pmin })?;
    // power-iteration polish; the chain contracts so the increment can only shrink
    for _ in 0..50 {
        let next = &p * &x;
        let s = next.sum();
        let next = next / s;
        let inc: f64 = (&next - &x).abs().sum();
        x = next;
        if inc < 1e-13 {
            break;
        }
    }
    let stationarity_residual = (&p * &x - &x).abs().sum();
    if x.iter().any(|&v| v < -1e-12) {
        return Err(MfhError::DoeblinFailure { min: x.min() });
    }

    let period = grid.period;
    let isi = mean_isi_per_node(model, current, &grid)?;
    let mean_isi: f64 = x.iter().zip(&isi).map(|(p, m)| p * m).sum();
    let c = mean_isi / period;

    // c_i = Σ_j π_j Σ_k H(t_i + Δ/2 + kT, s_j) is constant in i exactly when Pπ = π
    let wraps = (grid.half_lags / (2 * n)) as i64 + 1;
    let ni = n as i64;
    let c_half: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            (0..n)
                .map(|j| {
                    let d = (i as i64 - j as i64).rem_euclid(ni);
                    let s: f64 = (0..wraps).map(|w| grid.h_half(j, 2 * (d + w * ni) + 1)).sum();
                    x[j] * s
                })
                .sum()
        })
        .collect();
    let c_mean = c_half.iter().sum::<f64>() / n as f64;
    let normalization_error = c_half.iter().map(|v| (v / c_mean - 1.0).abs()).fold(0.0, f64::max);

    let dtheta = 2.0 * PI / n as f64;
    let tau = current.tau;
    let pi: Vec<f64> = x.iter().map(|v| v / dtheta).collect();
    let rho: Vec<f64> = pi.iter().map(|v| v / (tau * c)).collect();
    let rho_hat = fourier_coeffs(&rho);
    Ok(PhaseChainSolution {
        method: ChainMethod::Grid,
        alpha: current.alpha,
        tau,
        theta: (0..n).map(|j| j as f64 * dtheta).collect(),
        pi,
        rho,
        c,
        doeblin_delta,
        normalization_error,
        stationarity_residual,
        rho_hat,
    })
}

/// Mean interspike interval after a reset at each grid node.
fn mean_isi_per_node(model: &ModelSpec, current: &PeriodicCurrent, grid: &KernelGrid) -> Result<Vec<f64>> {
    let n = grid.n;
    if let Some((thr, height)) = stays_above(model, current) {
        // H = 1 up to the crossing, then decays at the constant height
        let cols = if grid.is_constant() { 1 } else { n };
        let m = (0..cols)
            .into_par_iter()
            .map(|j| {
                let s = j as f64 * grid.dt;
                Ok(crossing_time(model, current, s, 0.0, thr)? - s + 1.0 / height)
            })
            .collect::<Result<Vec<f64>>>()?;
        return Ok(if cols == 1 { vec![m[0]; n] } else { m });
    }
    // Simpson on the half-lag table; the tail beyond it is below 1e-13
    let h = 0.5 * grid.dt;
    Ok((0..n)
        .map(|j| {
            let mut acc = 0.0;
            let mut l = 0;
            while l + 2 < grid.half_lags {
                acc += (h / 3.0) * (grid.h_half(j, l as i64) + 4.0 * grid.h_half(j, l as i64 + 1) + grid.h_half(j, l as i64 + 2));
                l += 2;
            }
            acc
        })
        .collect())
}

/// Crossing map of a step-rate model: after a reset at s the path crosses the threshold at
/// C(s) = s + D(s), with D periodic.
#[derive(Clone, Debug)]
struct CrossingMap {
    period: f64,
    /// D at s_k = kT/S
    d: Vec<f64>,
    d_hat: Vec<C>,
}

impl CrossingMap {
    fn new(model: &ModelSpec, current: &PeriodicCurrent, thr: f64, samples: usize) -> Result<Self> {
        let period = current.period();
        let d = if current.is_constant() {
            vec![crossing_time(model, current, 0.0, 0.0, thr)?; samples]
        } else {
            (0..samples)
                .into_par_iter()
                .map(|k| {
                    let s = period * k as f64 / samples as f64;
                    Ok(crossing_time(model, current, s, 0.0, thr)? - s)
                })
                .collect::<Result<Vec<f64>>>()?
        };
        let mut d_hat = fourier_coeffs(&d);
        let floor = 1e-17 * (1.0 + d_hat[0].norm());
        while d_hat.len() > 1 && d_hat.last().is_some_and(|c| c.norm() < floor) {
            d_hat.pop();
        }
        Ok(Self { period, d, d_hat })
    }

    fn delay(&self, s: f64) -> f64 {
        fourier_eval(&self.d_hat, 2.0 * PI * s / self.period)
    }

    fn delay_prime(&self, s: f64) -> f64 {
        let w = 2.0 * PI / self.period;
        let th = w * s;
        let e1 = C::new(th.cos(), th.sin());
        let mut e = e1;
        let mut acc = 0.0;
        for (k, c) in self.d_hat.iter().enumerate().skip(1) {
            acc += 2.0 * (c * e * C::new(0.0, k as f64 * w)).re;
            e *= e1;
        }
        acc
    }

    /// s with C(s) = t.
    fn preimage(&self, t: f64) -> f64 {
        let mean = self.d_hat[0].re;
        let mut s = t - mean;
        for _ in 0..60 {
            let g = s + self.delay(s) - t;
            let step = g / (1.0 + self.delay_prime(s));
            s -= step;
            if step.abs() < 1e-15 * (1.0 + s.abs()) {
                break;
            }
        }
        s
    }
}

/// Spectral method for step rates. With D_n = 1/(1 + inωβ) the Laplace symbol of the
/// exponential wait and M_nm = (1/T)∫ e^{imωs − inωC(s)} ds the crossing transfer,
/// π̂ = D M π̂ with π̂_0 = 1/T.
pub fn phase_chain_step(model: &ModelSpec, current: &PeriodicCurrent, nodes: usize, modes: usize) -> Result<PhaseChainSolution> {
    let (thr, height) = stays_above(model, current).ok_or_else(|| {
        MfhError::InvalidParameter("spectral phase chain needs a step rate whose path stays above the threshold".into())
    })?;
    let beta = 1.0 / height;
    let tau = current.tau;
    let period = current.period();
    let w = 1.0 / tau;
    let k = modes as i64;
    let dim = 2 * modes + 1;
    let samples = (8 * modes).max(1024).next_power_of_two();
    let map = CrossingMap::new(model, current, thr, samples)?;

    let fft = FftPlanner::new().plan_fft_inverse(samples);
    let rows: Vec<Vec<C>> = (-k..=k)
        .into_par_iter()
        .map(|n| {
            let mut g: Vec<C> = (0..samples)
                .map(|j| {
                    let s = period * j as f64 / samples as f64;
                    let ph = -(n as f64) * w * (s + map.d[j]);
                    C::new(ph.cos(), ph.sin())
                })
                .collect();
            fft.process(&mut g);
            (-k..=k).map(|m| g[m.rem_euclid(samples as i64) as usize] / samples as f64).collect()
        })
        .collect();
    let mut a = DMatrix::<C>::zeros(dim, dim);
    let mut rhs = DVector::<C>::zeros(dim);
    for (row, n) in (-k..=k).enumerate() {
        if n == 0 {
            a[(row, row)] = C::new(1.0, 0.0);
            rhs[row] = C::new(1.0 / period, 0.0);
            continue;
        }
        let dn = 1.0 / C::new(1.0, n as f64 * w * beta);
        for col in 0..dim {
            a[(row, col)] = -dn * rows[row][col];
        }
        a[(row, row)] += 1.0;
    }
    let pi_hat = a.lu().solve(&rhs).ok_or(MfhError::DegenerateJacobian)?;
    let tail = pi_hat[dim - 1].norm() / pi_hat[modes].norm();
    // physical density: π(t) = Σ π̂_n e^{inωt}; keep n ≥ 0 and enforce conjugate symmetry
    let pos: Vec<C> = (0..=modes)
        .map(|n| {
            if n == 0 {
                C::new(pi_hat[modes].re, 0.0)
            } else {
                0.5 * (pi_hat[modes + n] + pi_hat[modes - n].conj())
            }
        })
        .collect();
    let pi_phys = |t: f64| fourier_eval(&pos, w * t);
    let mean_isi: f64 = (0..samples)
        .map(|j| pi_phys(period * j as f64 / samples as f64) * (map.d[j] + beta))
        .sum::<f64>()
        * period
        / samples as f64;
    let c = mean_isi / period;
    let rho_hat: Vec<C> = pos.iter().map(|p| p / c).collect();

    let dtheta = 2.0 * PI / nodes as f64;
    let theta: Vec<f64> = (0..nodes).map(|j| j as f64 * dtheta).collect();
    let pi: Vec<f64> = theta.iter().map(|&th| tau * pi_phys(tau * th)).collect();
    let rho: Vec<f64> = pi.iter().map(|v| v / (tau * c)).collect();
    let eh = (-height * period).exp();
    let doeblin_delta = height * eh / (1.0 - eh);

    let mut sol = PhaseChainSolution {
        method: ChainMethod::StepSpectral,
        alpha: current.alpha,
        tau,
        theta,
        pi,
        rho,
        c,
        doeblin_delta,
        normalization_error: 0.0,
        stationarity_residual: tail,
        rho_hat,
    };
    sol.normalization_error = (0..32)
        .map(|i| (normalization_integral(&sol, &map, height, period * i as f64 / 32.0) - 1.0).abs())
        .fold(0.0, f64::max);
    Ok(sol)
}

/// ∫_{−∞}^t H(t, s) ρ(s) ds for a step rate, split at the reset time whose crossing is t.
fn normalization_integral(sol: &PhaseChainSolution, map: &CrossingMap, height: f64, t: f64) -> f64 {
    let gl = GaussRule::new(20);
    let s_star = map.preimage(t);
    let mut acc = 0.0;
    let width = map.period / 16.0;
    let mut b = t;
    while b > s_star {
        let a = (b - width).max(s_star);
        acc += gl.integrate(a, b, |s| sol.rate_at(s));
        b = a;
    }
    let reach = 40.0 / height + 2.0 * map.period;
    let mut b = s_star;
    while b > s_star - reach {
        let a = b - width;
        acc += gl.integrate(a, b, |s| (-height * (t - s - map.delay(s))).exp() * sol.rate_at(s));
        b = a;
    }
    acc
}

/// Volterra run from a reset at t = 0 over `periods` periods; returns max over the last period
/// of |r − ρ|.
pub fn volterra_cross_check(
    model: &ModelSpec,
    current: &PeriodicCurrent,
    sol: &PhaseChainSolution,
    periods: usize,
    steps_per_period: usize,
) -> Result<f64> {
    let period = current.period();
    let dt = period / steps_per_period as f64;
    let n = periods * steps_per_period + 1;
    let r = if stays_above(model, current).is_some() {
        let kernel = CrossingKernel::new(model, current, 0.0, dt, n)?;
        let forcing = kernel.forcing(model, current, 0.0)?;
        solve_rate(&forcing, &kernel, 0.0)?
    } else {
        let grid = KernelGrid::build(model, current, steps_per_period)?;
        let kernel = PeriodicTableKernel::new(&grid, periods);
        solve_rate(&kernel.forcing(), &kernel, 0.0)?
    };
    let start = (periods - 1) * steps_per_period;
    Ok((start..n).map(|i| (r.r[i] - sol.rate_at(i as f64 * dt)).abs()).fold(0.0, f64::max))
}

/// ν̃_a(t, ·) at a few phases, sampled on a uniform x-grid.
#[derive(Clone, Debug, Serialize)]
pub struct PeriodicDensity {
    /// Physical times in [0, T).
    pub t: Vec<f64>,
    /// σ_a(t) = lim_{s→−∞} φ^a_{t,s}(0), approximated at the certified horizon.
    pub sigma: Vec<f64>,
    pub x: Vec<Vec<f64>>,
    pub density: Vec<Vec<f64>>,
    /// ∫ ν̃(t, x) dx per phase.
    pub mass: Vec<f64>,
    /// ∫ f ν̃(t, x) dx per phase.
    pub f_moment: Vec<f64>,
    /// ρ(t) per phase.
    pub rho: Vec<f64>,
}

impl PeriodicDensity {
    pub fn mass_error(&self) -> f64 {
        self.mass.iter().map(|m| (m - 1.0).abs()).fold(0.0, f64::max)
    }

    pub fn rate_error(&self) -> f64 {
        self.f_moment.iter().zip(&self.rho).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let rows = (0..self.t.len())
            .flat_map(|i| (0..self.x[i].len()).map(move |k| (i, k)))
            .map(|(i, k)| vec![self.t[i], self.x[i][k], self.density[i][k]]);
        crate::io::write_csv(path, &["t", "x", "density"], rows)
    }
}

/// Inverse flow β^a_t(x): the reset time s ≤ t with φ^a_{t,s}(0) = x, by bisection on
/// [t − lag_max, t].
pub fn inverse_flow(model: &ModelSpec, current: &PeriodicCurrent, t: f64, x: f64, lag_max: f64) -> Result<f64> {
    if x <= 0.0 {
        return Ok(t);
    }
    let (mut lo, mut hi) = (t - lag_max, t);
    if flow(model, current, t, lo, 0.0)? < x {
        return Err(MfhError::InverseFlowFailure { t, x });
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if flow(model, current, t, mid, 0.0)? >= x {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// ν̃(t, x) = ρ(s) H(t, s) / ((b(0) + a(s)) exp ∫_s^t b′(φ_{u,s}(0)) du) at s = β_t(x).
fn density_at(model: &ModelSpec, current: &PeriodicCurrent, sol: &PhaseChainSolution, t: f64, x: f64, lag_max: f64) -> Result<f64> {
    let s = inverse_flow(model, current, t, x, lag_max)?;
    let mut st = PathStepper::new(model, current, s, 0.0);
    let state = st.advance_to(t)?;
    let speed = (model.b(0.0) + current.value(s)) * state.int_db.exp();
    Ok(sol.rate_at(s) * (-state.lambda).exp() / speed)
}

/// Periodic density at `phases` equally spaced times, with `nx` samples per phase.
pub fn periodic_density(
    model: &ModelSpec,
    current: &PeriodicCurrent,
    sol: &PhaseChainSolution,
    phases: usize,
    nx: usize,
) -> Result<PeriodicDensity> {
    let cert = certify_decay(model, current)?;
    let lag_max = cert.s0 + 40.0 / cert.rate;
    let period = current.period();
    let gl = GaussRule::new(16);
    let thr = model.step().map(|(t, _)| t);
    let per_phase = (0..phases)
        .into_par_iter()
        .map(|i| -> Result<_> {
            let t = period * i as f64 / phases as f64;
            let sigma = flow(model, current, t, t - lag_max, 0.0)?;
            let top = sigma * (1.0 - 1e-12);
            let xs: Vec<f64> = (0..nx).map(|k| top * k as f64 / (nx - 1) as f64).collect();
            let dens = xs.iter().map(|&x| density_at(model, current, sol, t, x, lag_max)).collect::<Result<Vec<_>>>()?;
            // Gauss panels in x, split at a step threshold
            let mut breaks: Vec<f64> = (0..=64).map(|k| top * k as f64 / 64.0).collect();
            if let Some(th) = thr {
                if th > 0.0 && th < top {
                    breaks.push(th);
                }
            }
            breaks.sort_by(f64::total_cmp);
            let (mut mass, mut fm) = (0.0, 0.0);
            for w in breaks.windows(2) {
                for (x, wt) in gl.mapped(w[0], w[1]) {
                    let d = density_at(model, current, sol, t, x, lag_max)?;
                    mass += wt * d;
                    fm += wt * d * model.f(x);
                }
            }
            Ok((t, sigma, xs, dens, mass, fm, sol.rate_at(t)))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = PeriodicDensity {
        t: vec![],
        sigma: vec![],
        x: vec![],
        density: vec![],
        mass: vec![],
        f_moment: vec![],
        rho: vec![],
    };
    for (t, s, xs, d, m, f, r) in per_phase {
        out.t.push(t);
        out.sigma.push(s);
        out.x.push(xs);
        out.density.push(d);
        out.mass.push(m);
        out.f_moment.push(f);
        out.rho.push(r);
    }
    Ok(out)
}

/// Symbol of the linearized G at h = 0: mode n of h is multiplied by 1 − J(α)Θ̂_α(in/τ).
pub fn linearized_symbol(model: &ModelSpec, alpha: f64, tau: f64, n: usize) -> Result<C> {
    let tr = Transforms::new(model, alpha, 0.0)?;
    tr.one_minus_j_theta(C::new(0.0, n as f64 / tau))
}

/// DG(0, α, τ)h for h = 2 Re Σ c_n e^{inθ}; returns the output coefficients.
pub fn linearized_g(model: &ModelSpec, alpha: f64, tau: f64, coeffs: &[C]) -> Result<Vec<C>> {
    let tr = Transforms::new(model, alpha, 0.0)?;
    coeffs
        .iter()
        .enumerate()
        .map(|(k, c)| Ok(c * tr.one_minus_j_theta(C::new(0.0, (k + 1) as f64 / tau))?))
        .collect()
}

/// G(h, α, τ) = (α + h) − J(α) ρ_{α+h,τ}, in Fourier coefficients n = 0..=modes.
#[derive(Clone, Debug)]
pub struct GValue {
    pub coeffs: Vec<C>,
    pub chain: PhaseChainSolution,
    pub j: f64,
}

impl GValue {
    /// sup_θ |G(θ) − mean G|, the part the branch equations control.
    pub fn oscillating_sup_norm(&self) -> f64 {
        let mut c = self.coeffs.clone();
        c[0] = C::new(0.0, 0.0);
        (0..512).map(|i| fourier_eval(&c, 2.0 * PI * i as f64 / 512.0).abs()).fold(0.0, f64::max)
    }

    /// mean of G = α − J(α) mean(ρ).
    pub fn mean_defect(&self) -> f64 {
        self.coeffs[0].re
    }

    /// sup_θ |G(θ)| on a 512-point grid.
    pub fn sup_norm(&self) -> f64 {
        (0..512)
            .map(|i| fourier_eval(&self.coeffs, 2.0 * PI * i as f64 / 512.0).abs())
            .fold(0.0, f64::max)
    }
}

pub fn g_functional(model: &ModelSpec, alpha: f64, tau: f64, coeffs: &[C], opts: &ChainOptions) -> Result<GValue> {
    let current = PeriodicCurrent::from_coeffs(alpha, tau, coeffs.to_vec());
    let chain = asymptotic_rate(model, &current, opts)?;
    let j = j_of_alpha(model, alpha)?;
    let len = chain.rho_hat.len().max(coeffs.len() + 1);
    let g = (0..len)
        .map(|n| {
            let a = match n {
                0 => C::new(alpha, 0.0),
                _ => coeffs.get(n - 1).copied().unwrap_or_default(),
            };
            a - j * chain.rho_mode(n)
        })
        .collect();
    Ok(GValue { coeffs: g, chain, j })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BranchOptions {
    /// Fourier modes of h.
    pub modes: usize,
    pub chain: ChainOptions,
    pub tol: f64,
    pub max_iter: usize,
    pub v_cap: f64,
}

impl Default for BranchOptions {
    fn default() -> Self {
        Self {
            modes: 32,
            chain: ChainOptions { nodes: 256, modes: 64, method: None },
            tol: 1e-10,
            max_iter: 40,
            v_cap: 0.05,
        }
    }
}

/// One point of the periodic branch: a_v(t) = α_v + h(t/τ_v) with first harmonic v cos θ.
#[derive(Clone, Debug, Serialize)]
pub struct BranchPoint {
    pub v: f64,
    pub alpha: f64,
    pub tau: f64,
    #[serde(rename = "J")]
    pub j: f64,
    /// ‖G‖∞
    pub residual: f64,
    /// ‖G − mean G‖∞, driven below the tolerance by Newton.
    pub oscillating_residual: f64,
    /// mean G = J(α)(γ(α) − mean ρ); the equations for h, α, τ do not act on it.
    pub mean_defect: f64,
    pub iterations: usize,
    /// Mean of a_v over a sampled period.
    pub mean_a: f64,
    /// max over modes 33..=64 of |G_n|.
    pub tail: f64,
    #[serde(skip)]
    pub coeffs: Vec<C>,
    #[serde(skip)]
    pub rho_hat: Vec<C>,
}

impl BranchPoint {
    pub fn current(&self) -> PeriodicCurrent {
        PeriodicCurrent::from_coeffs(self.alpha, self.tau, self.coeffs.clone())
    }

    /// Rows (t, a_v(t), ρ(t)) over one period.
    pub fn write_csv(&self, path: &Path, samples: usize) -> Result<()> {
        let a = self.current();
        let period = a.period();
        let rows = (0..samples).map(|i| {
            let t = period * i as f64 / samples as f64;
            vec![t, a.value(t), fourier_eval(&self.rho_hat, t / self.tau)]
        });
        crate::io::write_csv(path, &["t", "a", "rho"], rows)
    }
}

fn pack(coeffs: &[C], alpha: f64, tau: f64) -> DVector<f64> {
    let m = coeffs.len();
    let mut u = DVector::zeros(2 * m);
    for (k, c) in coeffs.iter().enumerate().skip(1) {
        u[2 * (k - 1)] = c.re;
        u[2 * (k - 1) + 1] = c.im;
    }
    u[2 * m - 2] = alpha;
    u[2 * m - 1] = tau;
    u
}

fn unpack(u: &DVector<f64>, v: f64, m: usize) -> (Vec<C>, f64, f64) {
    let mut coeffs = vec![C::new(0.5 * v, 0.0)];
    for k in 1..m {
        coeffs.push(C::new(u[2 * (k - 1)], u[2 * (k - 1) + 1]));
    }
    (coeffs, u[2 * m - 2], u[2 * m - 1])
}

fn residual_vec(g: &GValue, m: usize) -> DVector<f64> {
    let mut f = DVector::zeros(2 * m);
    for n in 1..=m {
        let c = g.coeffs.get(n).copied().unwrap_or_default();
        f[2 * (n - 1)] = c.re;
        f[2 * (n - 1) + 1] = c.im;
    }
    f
}

/// Newton solve of G(h, α, τ) = 0 with h's first harmonic fixed to v cos θ.
///
/// The h-block of the Jacobian is the diagonal symbol of the linearization at (α, τ); the
/// (α, τ) columns are central differences of G.
pub fn solve_selfconsistent_branch(
    point: &BifurcationPoint,
    v: f64,
    warm: Option<&BranchPoint>,
    opts: &BranchOptions,
) -> Result<BranchPoint> {
    if v.abs() > opts.v_cap {
        return Err(MfhError::InvalidParameter(format!("|v| = {} exceeds the cap {}", v.abs(), opts.v_cap)));
    }
    let model = point.toy().model();
    let m = opts.modes;
    let eval = |u: &DVector<f64>| -> Result<GValue> {
        let (c, a, t) = unpack(u, v, m);
        g_functional(&model, a, t, &c, &opts.chain)
    };
    let mut u = match warm {
        Some(w) => {
            let mut c = w.coeffs.clone();
            c.resize(m, C::new(0.0, 0.0));
            // second harmonic and mean shift scale like v²
            let r = if w.v != 0.0 { v / w.v } else { 1.0 };
            for (k, ck) in c.iter_mut().enumerate().skip(1) {
                *ck *= r.powi(k as i32 + 1);
            }
            let alpha = point.alpha0 + (w.alpha - point.alpha0) * r * r;
            let tau = point.tau0 + (w.tau - point.tau0) * r * r;
            pack(&c, alpha, tau)
        }
        None => pack(&vec![C::new(0.0, 0.0); m], point.alpha0, point.tau0),
    };
    let mut g = eval(&u)?;
    let mut f = residual_vec(&g, m);
    let mut res = g.oscillating_sup_norm();
    let mut iterations = 0;
    while res > opts.tol {
        if iterations >= opts.max_iter {
            return Err(MfhError::NewtonDiverged { residual: res });
        }
        iterations += 1;
        let (_, alpha, tau) = unpack(&u, v, m);
        let tr = Transforms::new(&model, alpha, 0.0)?;
        let mut jac = DMatrix::<f64>::zeros(2 * m, 2 * m);
        for n in 2..=m {
            let s = tr.one_minus_j_theta(C::new(0.0, n as f64 / tau))?;
            let r = 2 * (n - 1);
            let c = 2 * (n - 2);
            jac[(r, c)] = s.re;
            jac[(r, c + 1)] = -s.im;
            jac[(r + 1, c)] = s.im;
            jac[(r + 1, c + 1)] = s.re;
        }
        for (col, scale) in [(2 * m - 2, alpha.abs().max(1e-3)), (2 * m - 1, tau)] {
            let h = 1e-6 * scale;
            let mut up = u.clone();
            up[col] += h;
            let mut dn = u.clone();
            dn[col] -= h;
            let d = (residual_vec(&eval(&up)?, m) - residual_vec(&eval(&dn)?, m)) / (2.0 * h);
            jac.set_column(col, &d);
        }
        let step = jac.lu().solve(&(-&f)).ok_or(MfhError::DegenerateJacobian)?;
        let mut lam = 1.0;
        let mut accepted = false;
        for _ in 0..=8 {
            let trial = &u + lam * &step;
            if let Ok(gt) = eval(&trial) {
                let rt = gt.oscillating_sup_norm();
                if rt < res {
                    u = trial;
                    f = residual_vec(&gt, m);
                    g = gt;
                    res = rt;
                    accepted = true;
                    break;
                }
            }
            lam *= 0.5;
        }
        if !accepted {
            return Err(MfhError::NewtonDiverged { residual: res });
        }
    }
    let (coeffs, alpha, tau) = unpack(&u, v, m);
    let current = PeriodicCurrent::from_coeffs(alpha, tau, coeffs.clone());
    let samples = current.samples(4096);
    let mean_a = alpha + samples.iter().sum::<f64>() / samples.len() as f64;
    let tail = (m + 1..=2 * m).map(|n| g.coeffs.get(n).map_or(0.0, |c| c.norm())).fold(0.0, f64::max);
    Ok(BranchPoint {
        v,
        alpha,
        tau,
        j: g.j,
        residual: g.sup_norm(),
        oscillating_residual: res,
        mean_defect: g.mean_defect(),
        iterations,
        mean_a,
        tail,
        coeffs,
        rho_hat: g.chain.rho_hat.clone(),
    })
}

/// Branch traced over the given amplitudes in order, each warm-started from the previous.
pub fn trace_branch(point: &BifurcationPoint, vs: &[f64], opts: &BranchOptions) -> Result<Vec<BranchPoint>> {
    let mut out: Vec<BranchPoint> = Vec::with_capacity(vs.len());
    for &v in vs {
        let bp = solve_selfconsistent_branch(point, v, out.last(), opts)?;
        out.push(bp);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::invariant::gamma;

    #[test]
    fn fourier_roundtrip() {
        let f = |t: f64| 0.3 + (t).cos() * 0.2 - 0.1 * (3.0 * t).sin();
        let s: Vec<f64> = (0..16).map(|j| f(2.0 * PI * j as f64 / 16.0)).collect();
        let c = fourier_coeffs(&s);
        for t in [0.1, 1.7, 4.0] {
            assert!((fourier_eval(&c, t) - f(t)).abs() < 1e-14);
        }
    }

    #[test]
    fn constant_current_gives_uniform_phase_and_gamma() {
        let m = ModelSpec::toy(1.5, 0.1).unwrap();
        let a = PeriodicCurrent::constant(1.0);
        let g = gamma(&m, 1.0).unwrap();
        let sol = phase_chain_step(&m, &a, 64, 16).unwrap();
        for (p, r) in sol.pi.iter().zip(&sol.rho) {
            assert!((p - 0.5 / PI).abs() < 1e-12);
            assert!((r - g).abs() < 1e-12);
        }
        assert!((sol.c - 1.0 / (2.0 * PI * g)).abs() < 1e-12);
        assert!(sol.normalization_error < 1e-10, "{}", sol.normalization_error);
    }

    #[test]
    fn spectral_and_grid_chains_agree() {
        let m = ModelSpec::toy(1.5, 0.1).unwrap();
        let a = PeriodicCurrent::cosine(1.0, 0.5, 0.1);
        // the grid chain is first order pointwise
        let gap = |n: usize| {
            let s = phase_chain_step(&m, &a, n, 48).unwrap();
            let g = phase_chain_grid(&m, &a, n).unwrap();
            assert!(g.normalization_error < 1e-10);
            let sup = s.rho.iter().zip(&g.rho).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            (sup, (s.mean_rate() - g.mean_rate()).abs())
        };
        let (g1, m1) = gap(512);
        let (g2, m2) = gap(1024);
        assert!(g2 < 1.5e-3 && g2 < 0.6 * g1, "{g1} {g2}");
        assert!(m1 < 1e-5 && m2 < 1e-5, "{m1} {m2}");
    }
}
