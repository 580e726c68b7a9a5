//! Toy-model Hopf analytics: the function U whose zeros are the roots of 1 − J Θ̂, the
//! imaginary-root curve (β⁰_ω(y), δ⁰_ω(y)), its multiple points and the construction of
//! bifurcation points.

use crate::error::{MfhError, Result};
use crate::io::ReIm;
use crate::model::ToyParams;
use crate::spectral::{analyze, one_minus_exp_over, toy, SpectralOptions};
use num_complex::Complex64 as C;
use rayon::prelude::*;
use serde::Serialize;
use std::f64::consts::PI;
use std::path::Path;

/// g(x) = (1 − e^{−x})/x and g′(x).
fn g_and_dg(x: C) -> (C, C) {
    if x.norm() < 1e-2 {
        let mut g = C::new(0.0, 0.0);
        let mut dg = C::new(0.0, 0.0);
        let mut fact = 1.0;
        let mut pw = C::new(1.0, 0.0);
        for k in 0..10 {
            fact *= (k + 1) as f64;
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            g += sign * pw / fact;
            if k + 1 < 10 {
                let kk = (k + 1) as f64;
                let sgn1 = if (k + 1) % 2 == 0 { 1.0 } else { -1.0 };
                dg += sgn1 * kk * pw / (fact * (kk + 1.0));
            }
            pw *= x;
        }
        return (g, dg);
    }
    let e = (-x).exp();
    let g = (1.0 - e) / x;
    (g, (e - g) / x)
}

/// U(β, δ, ω, z) = δ z/(z+1)(1 − e^{−ω(z+1)}) + e^{−ωz} − (1 + βz).
pub fn u_eval(beta: f64, delta: f64, omega: f64, z: C) -> C {
    let a = z * omega * one_minus_exp_over(omega * (z + 1.0));
    delta * a + (-omega * z).exp() - (1.0 + beta * z)
}

/// Exact partial derivatives of U.
#[derive(Clone, Copy, Debug)]
pub struct UPartials {
    pub u: C,
    pub d_beta: C,
    pub d_delta: C,
    pub d_omega: C,
    pub d_z: C,
}

pub fn u_partials(beta: f64, delta: f64, omega: f64, z: C) -> UPartials {
    let x = omega * (z + 1.0);
    let (g, dg) = g_and_dg(x);
    let a = z * omega * g;
    let a_z = omega * g + z * omega * omega * dg;
    let e = (-omega * z).exp();
    UPartials {
        u: delta * a + e - (1.0 + beta * z),
        d_beta: -z,
        d_delta: a,
        d_omega: delta * z * (-x).exp() - z * e,
        d_z: delta * a_z - omega * e - beta,
    }
}

/// Common denominator D = y²e^ω − y²cos(ωy) − y sin(ωy); positive for every y > 0.
pub fn curve_denominator(omega: f64, y: f64) -> f64 {
    let (s, c) = (omega * y).sin_cos();
    y * y * (omega.exp() - c) - y * s
}

/// (β⁰_ω(y), δ⁰_ω(y)): the unique (β, δ) for which iy is a root of U(β, δ, ω, ·).
pub fn imaginary_root_curve(omega: f64, y: f64) -> Result<(f64, f64)> {
    let d = curve_denominator(omega, y);
    if !(y > 0.0) || d.abs() < 1e-14 * (1.0 + y * y) {
        return Err(MfhError::DenominatorVanishes { y });
    }
    let (s, c) = (omega * y).sin_cos();
    let e = omega.exp();
    // 1 − cos written as 2 sin² to keep accuracy at small ωy
    let one_minus_cos = 2.0 * (0.5 * omega * y).sin().powi(2);
    let beta = ((1.0 + e) * one_minus_cos - (e - 1.0) * y * s) / d;
    let delta = e * (1.0 + y * y) * one_minus_cos / d;
    let _ = c;
    Ok((beta, delta))
}

/// Residuals of the two real equations characterizing U(β, δ, ω, iy) = 0.
pub fn curve_system_residual(beta: f64, delta: f64, omega: f64, y: f64) -> (f64, f64) {
    let (s, c) = (omega * y).sin_cos();
    let q = y * (1.0 - delta * (-omega).exp());
    (c + s * q - (1.0 - beta * y * y), -s + c * q - y * (1.0 + beta - delta))
}

/// (1 − δe^{−ω})² − (−2β + β²y² + (1+β−δ)²), zero along the curve.
pub fn curve_identity_residual(beta: f64, delta: f64, omega: f64, y: f64) -> f64 {
    (1.0 - delta * (-omega).exp()).powi(2) - (-2.0 * beta + beta * beta * y * y + (1.0 + beta - delta).powi(2))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CurveSample {
    pub y: f64,
    pub beta0: f64,
    pub delta0: f64,
}

/// Curve samples on `n` equispaced y in [y_lo, y_hi].
pub fn curve_samples(omega: f64, y_lo: f64, y_hi: f64, n: usize) -> Result<Vec<CurveSample>> {
    (0..n)
        .into_par_iter()
        .map(|k| {
            let y = y_lo + (y_hi - y_lo) * k as f64 / (n - 1).max(1) as f64;
            let (beta0, delta0) = imaginary_root_curve(omega, y)?;
            Ok(CurveSample { y, beta0, delta0 })
        })
        .collect()
}

pub fn write_curve_csv(path: &Path, samples: &[CurveSample]) -> Result<()> {
    crate::io::write_csv(path, &["y", "beta0", "delta0"], samples.iter().map(|s| vec![s.y, s.beta0, s.delta0]))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MultiplePoint {
    pub beta: f64,
    pub delta: f64,
    /// Parameter values at which the curve passes through the point.
    pub ys: usize,
}

/// Points visited by the curve at several y. The curve meets β = 0 only at (0, 0) and
/// (0, 2/(1+e^{−ω})); any crossing of two polyline segments away from the axis is reported
/// as `SpuriousIntersection`.
pub fn curve_self_intersection_check(omega: f64, y_grid: &[f64]) -> Result<Vec<MultiplePoint>> {
    let pts: Vec<(f64, f64)> =
        y_grid.iter().map(|&y| imaginary_root_curve(omega, y)).collect::<Result<Vec<_>>>()?;
    // axis crossings, refined by bisection on β⁰
    let mut hits: Vec<(f64, f64)> = Vec::new();
    for k in 0..pts.len().saturating_sub(1) {
        let (b0, b1) = (pts[k].0, pts[k + 1].0);
        if b0 == 0.0 || b0 * b1 < 0.0 {
            let (mut lo, mut hi) = (y_grid[k], y_grid[k + 1]);
            let f_lo = b0;
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                let (bm, _) = imaginary_root_curve(omega, mid)?;
                if bm == 0.0 {
                    lo = mid;
                    hi = mid;
                    break;
                }
                if bm * f_lo > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
                if hi - lo < 1e-15 * hi {
                    break;
                }
            }
            let y = 0.5 * (lo + hi);
            hits.push(imaginary_root_curve(omega, y)?);
        }
    }
    let mut out: Vec<MultiplePoint> = Vec::new();
    for (b, d) in hits {
        match out.iter_mut().find(|p| (p.delta - d).abs() < 1e-6) {
            Some(p) => p.ys += 1,
            None => out.push(MultiplePoint { beta: b, delta: d, ys: 1 }),
        }
    }
    out.retain(|p| p.ys >= 2);
    out.sort_by(|a, b| a.delta.partial_cmp(&b.delta).unwrap());
    // off-axis crossings between non-adjacent segments
    let n = pts.len();
    let bbox: Vec<(f64, f64, f64, f64)> = (0..n.saturating_sub(1))
        .map(|k| {
            let (p, q) = (pts[k], pts[k + 1]);
            (p.0.min(q.0), p.0.max(q.0), p.1.min(q.1), p.1.max(q.1))
        })
        .collect();
    let spurious = (0..bbox.len()).into_par_iter().find_map_any(|i| {
        for j in i + 2..bbox.len() {
            let (a, b) = (bbox[i], bbox[j]);
            if a.1 < b.0 || b.1 < a.0 || a.3 < b.2 || b.3 < a.2 {
                continue;
            }
            if let Some((x, yv)) = segment_intersection(pts[i], pts[i + 1], pts[j], pts[j + 1]) {
                if x.abs() > 1e-3 {
                    return Some((x, yv));
                }
            }
        }
        None
    });
    if let Some((beta, delta)) = spurious {
        return Err(MfhError::SpuriousIntersection { beta, delta });
    }
    Ok(out)
}

fn segment_intersection(p1: (f64, f64), p2: (f64, f64), q1: (f64, f64), q2: (f64, f64)) -> Option<(f64, f64)> {
    let r = (p2.0 - p1.0, p2.1 - p1.1);
    let s = (q2.0 - q1.0, q2.1 - q1.1);
    let den = r.0 * s.1 - r.1 * s.0;
    if den == 0.0 {
        return None;
    }
    let qp = (q1.0 - p1.0, q1.1 - p1.1);
    let t = (qp.0 * s.1 - qp.1 * s.0) / den;
    let u = (qp.0 * r.1 - qp.1 * r.0) / den;
    if (0.0..=1.0).contains(&t) && (0.0..=1.0).contains(&u) {
        Some((p1.0 + t * r.0, p1.1 + t * r.1))
    } else {
        None
    }
}

/// The β = 0 multiple points (0, 0) and (0, 2/(1+e^{−ω})).
pub fn expected_multiple_points(omega: f64) -> [(f64, f64); 2] {
    [(0.0, 0.0), (0.0, 2.0 / (1.0 + (-omega).exp()))]
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LocusSample {
    pub y: f64,
    pub alpha: f64,
    pub beta: f64,
    #[serde(rename = "J")]
    pub j: f64,
}

/// Imaginary-root locus in the (β, J) plane at fixed m: for each y, every α > 0 with
/// δ⁰_{ω(α)}(y) = δ(α) gives β = β⁰_{ω(α)}(y) and J = α(ω(α) + β). Only β > 0 is kept.
pub fn coupling_locus_samples(m: f64, y_lo: f64, y_hi: f64, n: usize) -> Vec<LocusSample> {
    let omega_of = |a: f64| (1.0 / (m + a - 1.0)).ln_1p();
    let g = |a: f64, y: f64| -> f64 {
        match imaginary_root_curve(omega_of(a), y) {
            Ok((_, d)) => d - a / (m + a - 1.0),
            Err(_) => f64::NAN,
        }
    };
    let a_min = (1.0 - m).max(0.0) + 1e-6;
    let alphas: Vec<f64> = (0..=400).map(|k| a_min * (1e4f64).powf(k as f64 / 400.0).max(1.0) + 20.0 * (k as f64 / 400.0).powi(2)).collect();
    (0..n)
        .into_par_iter()
        .flat_map_iter(|k| {
            let y = y_lo + (y_hi - y_lo) * k as f64 / (n - 1).max(1) as f64;
            let mut out = Vec::new();
            let mut prev = (alphas[0], g(alphas[0], y));
            for &a in &alphas[1..] {
                let cur = (a, g(a, y));
                if prev.1 * cur.1 < 0.0 {
                    let (mut lo, mut hi, flo) = (prev.0, cur.0, prev.1);
                    for _ in 0..100 {
                        let mid = 0.5 * (lo + hi);
                        if g(mid, y) * flo > 0.0 {
                            lo = mid;
                        } else {
                            hi = mid;
                        }
                    }
                    let alpha = 0.5 * (lo + hi);
                    let w = omega_of(alpha);
                    if let Ok((beta, _)) = imaginary_root_curve(w, y) {
                        if beta > 0.0 {
                            out.push(LocusSample { y, alpha, beta, j: alpha * (w + beta) });
                        }
                    }
                }
                prev = cur;
            }
            out
        })
        .collect()
}

pub fn write_locus_csv(path: &Path, samples: &[LocusSample]) -> Result<()> {
    crate::io::write_csv(path, &["y", "alpha", "beta", "J"], samples.iter().map(|s| vec![s.y, s.alpha, s.beta, s.j]))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PointChecks {
    /// ±i y0 are simple roots and every other root has negative real part.
    pub isolated_marginal_pair: bool,
    pub nonresonance: bool,
    pub transversality: bool,
}

/// Toy bifurcation point with its spectral checks. Times are natural (ω-time); the
/// marginal root is i y0 and the reduced period is τ0 = 1/y0.
#[derive(Clone, Debug, Serialize)]
pub struct BifurcationPoint {
    pub omega0: f64,
    pub epsilon0: f64,
    pub y0: f64,
    pub beta0: f64,
    pub d0: f64,
    pub alpha0: f64,
    pub m0: f64,
    pub tau0: f64,
    #[serde(rename = "J0")]
    pub j0: f64,
    #[serde(rename = "dU_dz")]
    pub du_dz: ReIm,
    #[serde(rename = "Z0_prime")]
    pub z0_prime: ReIm,
    /// Leading-order Re 𝔷₀′ as ε₀ → 0.
    pub z0_prime_leading: f64,
    /// min over 2 ≤ |n| ≤ 64 and n = 0 of |1 − J Θ̂(i n y0)|.
    pub nonresonance_margin: f64,
    pub checks: PointChecks,
}

impl BifurcationPoint {
    pub fn toy(&self) -> ToyParams {
        ToyParams { beta: self.beta0, m: self.m0, alpha: self.alpha0 }
    }

    /// U along the α-family at fixed (β0, m0).
    pub fn u_at_alpha(&self, alpha: f64, z: C) -> C {
        let p = ToyParams { beta: self.beta0, m: self.m0, alpha };
        u_eval(self.beta0, p.delta(), p.omega(), z)
    }

    /// 𝔷₀′(α0) by central differences of the root of U tracked from i y0.
    pub fn z0_prime_fd(&self, h: f64) -> Result<C> {
        let root = |alpha: f64| -> Result<C> {
            let mut z = C::new(0.0, self.y0);
            let p = ToyParams { beta: self.beta0, m: self.m0, alpha };
            let (d, w) = (p.delta(), p.omega());
            for _ in 0..50 {
                let up = u_partials(self.beta0, d, w, z);
                let step = up.u / up.d_z;
                z -= step;
                if step.norm() < 1e-15 {
                    break;
                }
            }
            Ok(z)
        };
        Ok((root(self.alpha0 + h)? - root(self.alpha0 - h)?) / (2.0 * h))
    }
}

pub const N_MAX_RESONANCE: i64 = 64;

/// Builds the point y0 = (2π/ω0)(1 − ε0/ω0), (β0, d0) = (β⁰, δ⁰)(y0), maps to (α0, m0) and
/// checks simplicity, nonresonance and transversality.
pub fn construct_bifurcation_point(omega0: f64, epsilon0: f64) -> Result<BifurcationPoint> {
    let y0 = 2.0 * PI / omega0 * (1.0 - epsilon0 / omega0);
    let (beta0, d0) = imaginary_root_curve(omega0, y0)?;
    let p = ToyParams::from_omega_delta(beta0, omega0, d0)?;
    let (alpha0, m0) = (p.alpha, p.m);
    let z0 = C::new(0.0, y0);
    let up = u_partials(beta0, d0, omega0, z0);
    let s = m0 + alpha0;
    let d_delta = (m0 - 1.0) / (s - 1.0).powi(2);
    let d_omega = -1.0 / (s * (s - 1.0));
    let z0_prime = -(up.d_delta * d_delta + up.d_omega * d_omega) / up.d_z;
    let tp = 4.0 * PI * PI;
    let z0_prime_leading =
        -(-omega0).exp_m1() / omega0 * tp / (tp + omega0 * omega0) * (m0 - 1.0) / (s - 1.0).powi(2);
    let j0 = p.j();
    let one_minus = |n: i64| -> C {
        let z = C::new(0.0, n as f64 * y0);
        1.0 - toy::j_psi_hat(&p, z) / toy::h_hat(&p, z)
    };
    let mut margin = one_minus(0).norm();
    let mut worst = 0;
    for n in 2..=N_MAX_RESONANCE {
        let v = one_minus(n).norm();
        if v < margin {
            margin = v;
            worst = n;
        }
    }
    let nonresonance = margin > 1e-6;
    let transversality = z0_prime.re > 0.0;
    // |U(iy)| ≥ β|y| − 2 − 2δ, so no imaginary-axis root lies beyond this height; only roots
    // near or right of the axis matter here
    let im_max = 40f64.max((3.0 + 2.0 * d0) / beta0);
    let opts = SpectralOptions { re_lo: Some(-0.05), re_hi: 2.0, im_max, margin: 1e-6 };
    let report = analyze(&p.model(), alpha0, &opts)?;
    let on_axis: Vec<&C> = report.roots.iter().filter(|z| z.re.abs() <= 1e-6).collect();
    let pair = on_axis.len() == 2 && on_axis.iter().all(|z| (z.im.abs() - y0).abs() <= 1e-6);
    let rest_stable = report.roots.iter().filter(|z| z.re.abs() > 1e-6).all(|z| z.re < 0.0);
    let isolated_marginal_pair = pair && rest_stable && up.d_z.norm() > 1e-8;
    let point = BifurcationPoint {
        omega0,
        epsilon0,
        y0,
        beta0,
        d0,
        alpha0,
        m0,
        tau0: 1.0 / y0,
        j0,
        du_dz: up.d_z.into(),
        z0_prime: z0_prime.into(),
        z0_prime_leading,
        nonresonance_margin: margin,
        checks: PointChecks { isolated_marginal_pair, nonresonance, transversality },
    };
    if !transversality {
        return Err(MfhError::TransversalityFailed { re: z0_prime.re });
    }
    if !nonresonance {
        return Err(MfhError::ResonanceDetected { n: worst, modulus: margin });
    }
    Ok(point)
}

/// Extrapolated limits of β0/ε0 and d0/ε0² as ε0 → 0 from three or more ε0 values
/// (polynomial fit through the samples, evaluated at 0).
#[derive(Clone, Debug, Serialize)]
pub struct AsymptoticFit {
    pub epsilons: Vec<f64>,
    pub beta_ratio: Vec<f64>,
    pub d_ratio: Vec<f64>,
    pub beta_slope_limit: f64,
    pub d_curvature_limit: f64,
    /// e^ω/(2(e^ω − 1))(1 + (2π)²/ω²)
    pub d_curvature_expected: f64,
}

pub fn asymptotic_fit(omega0: f64, epsilons: &[f64]) -> Result<AsymptoticFit> {
    let mut beta_ratio = Vec::new();
    let mut d_ratio = Vec::new();
    for &e in epsilons {
        let y = 2.0 * PI / omega0 * (1.0 - e / omega0);
        let (b, d) = imaginary_root_curve(omega0, y)?;
        beta_ratio.push(b / e);
        d_ratio.push(d / (e * e));
    }
    let extrap = |vals: &[f64]| -> f64 {
        // Lagrange interpolation evaluated at 0
        let mut acc = 0.0;
        for i in 0..epsilons.len() {
            let mut l = 1.0;
            for j in 0..epsilons.len() {
                if i != j {
                    l *= epsilons[j] / (epsilons[j] - epsilons[i]);
                }
            }
            acc += l * vals[i];
        }
        acc
    };
    let e = omega0.exp();
    Ok(AsymptoticFit {
        epsilons: epsilons.to_vec(),
        beta_slope_limit: extrap(&beta_ratio),
        d_curvature_limit: extrap(&d_ratio),
        beta_ratio,
        d_ratio,
        d_curvature_expected: e / (2.0 * (e - 1.0)) * (1.0 + 4.0 * PI * PI / (omega0 * omega0)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn u_vanishes_at_zero_and_on_the_curve() {
        assert_eq!(u_eval(0.3, 0.7, 1.2, C::new(0.0, 0.0)), C::new(0.0, 0.0));
        let (b, d) = imaginary_root_curve(1.0, 3.0).unwrap();
        assert!((b - 0.2024788).abs() < 1e-7 && (d - 1.6416323).abs() < 1e-7);
        assert!(u_eval(b, d, 1.0, C::new(0.0, 3.0)).norm() < 1e-13);
    }

    #[test]
    fn u_matches_premultiplied_transforms() {
        // U = (J Ψ̂ − Ĥ) z (1 + βz) with (α, m) from (ω, δ)
        let p = ToyParams::from_omega_delta(0.05, 1.0, 0.3).unwrap();
        let z = C::new(1.0, 2.0);
        let alt = (toy::j_psi_hat(&p, z) - toy::h_hat(&p, z)) * z * (1.0 + p.beta * z);
        assert!((u_eval(0.05, 0.3, 1.0, z) - alt).norm() < 1e-13);
    }

    #[test]
    fn u_series_near_minus_one() {
        let z = C::new(-1.0 + 1e-9, 1e-9);
        let far = C::new(-1.0 + 1e-2, 0.0);
        assert!(u_eval(0.1, 0.5, 1.0, z).is_finite());
        let a = u_eval(0.1, 0.5, 1.0, far);
        let b = u_eval(0.1, 0.5, 1.0, far + 1e-3);
        assert!((a - b).norm() < 1e-2);
    }

    #[test]
    fn partials_match_finite_differences() {
        let (b, d, w) = (0.07, 0.4, 1.3);
        let z = C::new(-0.2, 4.0);
        let p = u_partials(b, d, w, z);
        let h = 1e-6;
        let fd_z = (u_eval(b, d, w, z + h) - u_eval(b, d, w, z - h)) / (2.0 * h);
        let fd_w = (u_eval(b, d, w + h, z) - u_eval(b, d, w - h, z)) / (2.0 * h);
        let fd_d = (u_eval(b, d + h, w, z) - u_eval(b, d - h, w, z)) / (2.0 * h);
        assert!((p.d_z - fd_z).norm() < 1e-8);
        assert!((p.d_omega - fd_w).norm() < 1e-8);
        assert!((p.d_delta - fd_d).norm() < 1e-8);
        let near = u_partials(b, d, w, C::new(-1.0 + 1e-5, 1e-5));
        let fd = (u_eval(b, d, w, C::new(-1.0 + 2e-5, 1e-5)) - u_eval(b, d, w, C::new(-1.0, 1e-5))) / 2e-5;
        assert!((near.d_z - fd).norm() < 1e-6);
    }

    #[test]
    fn curve_zeros_of_beta() {
        let (b, d) = imaginary_root_curve(1.0, 2.0 * PI).unwrap();
        assert!(b.abs() < 1e-14 && d.abs() < 1e-14);
        assert!(matches!(imaginary_root_curve(1.0, 0.0), Err(MfhError::DenominatorVanishes { .. })));
    }

    #[test]
    fn reference_point() {
        let p = construct_bifurcation_point(1.0, 0.05).unwrap();
        assert!((p.beta0 - 0.0517117).abs() < 1e-7);
        assert!((p.d0 - 0.0751933).abs() < 1e-7);
        assert!((p.alpha0 - 0.0437607).abs() < 1e-7);
        assert!((p.m0 - 1.5382160).abs() < 1e-7);
        assert!((p.tau0 - 0.1675315).abs() < 1e-7);
        assert!(p.checks.isolated_marginal_pair && p.checks.nonresonance && p.checks.transversality);
        let fd = p.z0_prime_fd(1e-5).unwrap();
        let z = C::new(p.z0_prime.re, p.z0_prime.im);
        assert!((fd - z).norm() / z.norm() < 1e-4);
    }
}
