//! Survival kernel H, first-jump density K and their T-periodizations on a grid.

use crate::current::PeriodicCurrent;
use crate::error::{MfhError, Result};
use crate::model::{flow, ModelSpec};
use crate::trajectory::{PathStepper, Trajectory};
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;
use std::path::Path;

/// H^x_a(t, s) = exp(-∫_s^t f(φ^a_{u,s}(x)) du).
pub fn survival(model: &ModelSpec, current: &PeriodicCurrent, t: f64, s: f64, x: f64) -> Result<f64> {
    if t <= s {
        return Ok(1.0);
    }
    let mut st = PathStepper::new(model, current, s, x);
    Ok((-st.advance_to(t)?.lambda).exp())
}

/// K^x_a(t, s) = f(φ^a_{t,s}(x)) H^x_a(t, s).
pub fn first_jump_density(model: &ModelSpec, current: &PeriodicCurrent, t: f64, s: f64, x: f64) -> Result<f64> {
    if t < s {
        return Ok(0.0);
    }
    let mut st = PathStepper::new(model, current, s, x);
    let state = st.advance_to(t)?;
    Ok(model.f(state.x) * (-state.lambda).exp())
}

/// Closed-form toy survival at lag u from x under constant current α.
pub fn toy_survival(m: f64, beta: f64, alpha: f64, x: f64, u: f64) -> f64 {
    let s = m + alpha;
    let ts = if x >= 1.0 { 0.0 } else { ((1.0 - x) / (s - 1.0)).ln_1p() };
    if u < ts {
        1.0
    } else {
        (-(u - ts) / beta).exp()
    }
}

/// Certified exponential decay: φ^a_{t,s}(0) ≥ λ0 whenever t − s ≥ s0, so that
/// H(t, s) ≤ exp(-f(λ0)(t − s − s0)).
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DecayCertificate {
    pub lambda0: f64,
    pub s0: f64,
    pub rate: f64,
}

impl DecayCertificate {
    /// Lag beyond which the periodized tail is below `tol`.
    pub fn horizon(&self, period: f64, tol: f64) -> f64 {
        let geo = 1.0 - (-self.rate * period).exp();
        self.s0 + ((1.0 / tol) / geo).ln() / self.rate
    }
}

pub fn certify_decay(model: &ModelSpec, current: &PeriodicCurrent) -> Result<DecayCertificate> {
    let amin = current.min_value();
    if model.b(0.0) + amin <= 0.0 {
        return Err(MfhError::InvalidParameter(format!("inf a = {amin} ≤ −b(0)")));
    }
    let period = current.period();
    let mut s0 = match model.step() {
        Some((thr, _)) => {
            let tr = Trajectory::new(model, amin, 0.0)?;
            match tr.t_cross {
                Some(t) if t > 0.0 => 2.0 * t,
                _ => {
                    let _ = thr;
                    period
                }
            }
        }
        None => 0.25 * period.max(0.1),
    };
    let scan = 64;
    for _ in 0..24 {
        let mut lambda0 = f64::INFINITY;
        for i in 0..scan {
            let t = period * i as f64 / scan as f64;
            lambda0 = lambda0.min(flow(model, current, t, t - s0, 0.0)?);
        }
        let rate = model.f(lambda0);
        if rate > 0.0 {
            return Ok(DecayCertificate { lambda0, s0, rate });
        }
        s0 *= 2.0;
    }
    Err(MfhError::TailNotConvergent(format!("f(λ0) ≤ 0 up to lag {s0}")))
}

/// H and K sampled at half-integer lags ℓΔ/2 from every start node s_j = jΔ.
#[derive(Clone, Debug)]
pub struct KernelGrid {
    pub tau: f64,
    pub period: f64,
    pub n: usize,
    pub dt: f64,
    /// Number of stored half-lags per start node.
    pub half_lags: usize,
    /// Truncation lag L, in periods.
    pub tail_horizon: f64,
    pub decay: DecayCertificate,
    /// max over stored lags of H(lag)·e^{f(λ0) lag}.
    pub empirical_constant: f64,
    constant: bool,
    h: Vec<f64>,
    k: Vec<f64>,
}

impl KernelGrid {
    pub fn build(model: &ModelSpec, current: &PeriodicCurrent, n: usize) -> Result<Self> {
        if n < 4 {
            return Err(MfhError::InvalidParameter("grid needs at least 4 nodes".into()));
        }
        let decay = certify_decay(model, current)?;
        let period = current.period();
        let dt = period / n as f64;
        // at least one full wrap past s0 so that every cell receives mass
        let horizon = decay.horizon(period, 1e-13).max(period + decay.s0);
        let half_lags = (2.0 * horizon / dt).ceil() as usize + 2;
        let constant = current.is_constant();
        let cols = if constant { 1 } else { n };
        let mut h = vec![0.0; cols * half_lags];
        let mut k = vec![0.0; cols * half_lags];
        if constant {
            let tr = Trajectory::new(model, current.alpha, 0.0)?;
            for l in 0..half_lags {
                let u = 0.5 * l as f64 * dt;
                h[l] = tr.survival(u);
                k[l] = tr.density(u);
            }
        } else {
            let res: Vec<Result<()>> = h
                .par_chunks_mut(half_lags)
                .zip(k.par_chunks_mut(half_lags))
                .enumerate()
                .map(|(j, (hc, kc))| {
                    let s = j as f64 * dt;
                    let mut st = PathStepper::new(model, current, s, 0.0).with_max_step((0.5 * dt).min(0.01 * current.tau));
                    hc[0] = 1.0;
                    kc[0] = model.f(0.0);
                    for l in 1..half_lags {
                        let state = st.advance_to(s + 0.5 * l as f64 * dt)?;
                        let hv = (-state.lambda).exp();
                        hc[l] = hv;
                        kc[l] = model.f(state.x) * hv;
                    }
                    Ok(())
                })
                .collect();
            for r in res {
                r?;
            }
        }
        let mut empirical_constant: f64 = 0.0;
        for c in 0..cols {
            for l in 0..half_lags {
                let u = 0.5 * l as f64 * dt;
                empirical_constant = empirical_constant.max(h[c * half_lags + l] * (decay.rate * u).exp());
            }
        }
        Ok(Self {
            tau: current.tau,
            period,
            n,
            dt,
            half_lags,
            tail_horizon: horizon / period,
            decay,
            empirical_constant,
            constant,
            h,
            k,
        })
    }

    pub fn is_constant(&self) -> bool {
        self.constant
    }

    fn col(&self, j: usize) -> usize {
        if self.constant {
            0
        } else {
            j % self.n
        }
    }

    /// H(s_j + ℓΔ/2, s_j); 1 for negative lags, 0 past the horizon.
    pub fn h_half(&self, j: usize, l: i64) -> f64 {
        if l < 0 {
            return 1.0;
        }
        let l = l as usize;
        if l >= self.half_lags {
            return 0.0;
        }
        self.h[self.col(j) * self.half_lags + l]
    }

    pub fn k_half(&self, j: usize, l: i64) -> f64 {
        if l < 0 || l as usize >= self.half_lags {
            return 0.0;
        }
        self.k[self.col(j) * self.half_lags + l as usize]
    }

    fn wraps(&self) -> i64 {
        (self.half_lags / (2 * self.n)) as i64 + 1
    }

    /// K^T(t_i, s_j) = Σ_{k≥0} K(t_i + kT, s_j) with t_i taken in [s_j, s_j + T).
    pub fn k_periodized(&self, i: usize, j: usize) -> f64 {
        let n = self.n as i64;
        let d = (i as i64 - j as i64).rem_euclid(n);
        (0..self.wraps()).map(|w| self.k_half(j, 2 * (d + w * n))).sum()
    }

    /// H^T(t_i, s_j); at coincident nodes the two one-sided limits are averaged.
    pub fn h_periodized(&self, i: usize, j: usize) -> f64 {
        let n = self.n as i64;
        let d = (i as i64 - j as i64).rem_euclid(n);
        let s: f64 = (0..self.wraps()).map(|w| self.h_half(j, 2 * (d + w * n))).sum();
        if d == 0 {
            s - 0.5
        } else {
            s
        }
    }

    /// Cell transition probabilities P_ij = Σ_k [H(t_i − Δ/2 + kT, s_j) − H(t_i + Δ/2 + kT, s_j)],
    /// the chance that the next jump after s_j lands in the cell centred at t_i (mod T).
    /// Columns sum to one up to the certified tail.
    pub fn transition_matrix(&self) -> DMatrix<f64> {
        let n = self.n;
        let ni = n as i64;
        let wraps = self.wraps();
        let mut p = DMatrix::zeros(n, n);
        for j in 0..n {
            for i in 0..n {
                let d = (i as i64 - j as i64).rem_euclid(ni);
                let mut acc = 0.0;
                for w in 0..wraps {
                    let l = 2 * (d + w * ni);
                    acc += self.h_half(j, l - 1) - self.h_half(j, l + 1);
                }
                p[(i, j)] = acc;
            }
        }
        p
    }

    /// max_j |Σ_i P_ij − 1|.
    pub fn column_mass_defect(&self) -> f64 {
        let p = self.transition_matrix();
        (0..self.n).map(|j| (p.column(j).sum() - 1.0).abs()).fold(0.0, f64::max)
    }

    /// Uniform lower bound of the cell-averaged periodized density.
    pub fn doeblin_delta(&self) -> f64 {
        let p = self.transition_matrix();
        p.iter().cloned().fold(f64::INFINITY, f64::min) / self.dt
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["t", "s", "H", "K"])?;
        let cols = if self.constant { 1 } else { self.n };
        for j in 0..cols {
            let s = j as f64 * self.dt;
            for l in 0..self.half_lags {
                let t = s + 0.5 * l as f64 * self.dt;
                w.write_record([
                    crate::io::fmt_f64(t),
                    crate::io::fmt_f64(s),
                    crate::io::fmt_f64(self.h_half(j, l as i64)),
                    crate::io::fmt_f64(self.k_half(j, l as i64)),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toy_survival_examples() {
        let m = ModelSpec::toy(1.5, 0.1).unwrap();
        let a = PeriodicCurrent::constant(1.0);
        let ts = (5.0f64 / 3.0).ln();
        assert_eq!(survival(&m, &a, 0.4, 0.0, 0.0).unwrap(), 1.0);
        let v = survival(&m, &a, ts + 1.0, 0.0, 0.0).unwrap();
        assert!((v / (-10.0f64).exp() - 1.0).abs() < 1e-10);
        let v = survival(&m, &a, 2.3, 1.6, 2.0).unwrap();
        assert!((v - (-7.0f64).exp()).abs() < 1e-15);
        assert_eq!(first_jump_density(&m, &a, 0.3, 0.0, 0.0).unwrap(), 0.0);
        let k = first_jump_density(&m, &a, ts + 0.2, 0.0, 0.0).unwrap();
        assert!((k - 10.0 * (-2.0f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn grid_columns_are_stochastic() {
        let m = ModelSpec::toy(1.5, 0.1).unwrap();
        let a = PeriodicCurrent::cosine(1.0, 1.0, 0.1);
        let g = KernelGrid::build(&m, &a, 64).unwrap();
        assert!(g.column_mass_defect() < 1e-11);
        assert!(g.doeblin_delta() > 0.0);
    }
}
