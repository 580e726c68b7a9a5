//! Quadrature rules shared by the kernel, transform and invariant-measure code.

use std::f64::consts::PI;

/// Gauss–Legendre rule on [-1, 1].
#[derive(Clone, Debug)]
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussRule {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 1.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            dp = if d != 0.0 { d } else { dp };
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        GaussRule { nodes, weights }
    }

    /// Nodes and weights mapped to [a, b].
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let c = 0.5 * (a + b);
        let hw = 0.5 * (b - a);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(x, w)| (c + hw * x, hw * w))
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        self.mapped(a, b).map(|(x, w)| w * f(x)).sum()
    }
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Split [a, b] into panels no wider than `width`, respecting interior breakpoints.
pub fn panels(a: f64, b: f64, width: f64, breaks: &[f64]) -> Vec<(f64, f64)> {
    let mut cuts: Vec<f64> = vec![a];
    let mut inner: Vec<f64> = breaks.iter().copied().filter(|&x| x > a && x < b).collect();
    inner.sort_by(|x, y| x.partial_cmp(y).unwrap());
    cuts.extend(inner);
    cuts.push(b);
    let mut out = Vec::new();
    for w in cuts.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        if hi <= lo {
            continue;
        }
        let k = ((hi - lo) / width).ceil().max(1.0) as usize;
        let step = (hi - lo) / k as f64;
        for j in 0..k {
            let p = lo + j as f64 * step;
            let q = if j + 1 == k { hi } else { lo + (j + 1) as f64 * step };
            out.push((p, q));
        }
    }
    out
}

/// Double-exponential (tanh–sinh) quadrature on [a, b].
///
/// The integrand receives `(x, x - a, b - x)` with both distances computed without
/// cancellation, so endpoint singularities can be evaluated accurately.
pub fn tanh_sinh<F: FnMut(f64, f64, f64) -> f64>(a: f64, b: f64, tol: f64, mut f: F) -> f64 {
    let hw = 0.5 * (b - a);
    if hw <= 0.0 {
        return 0.0;
    }
    let tmax = 4.0;
    let mut eval = |t: f64| -> f64 {
        let u = 0.5 * PI * t.sinh();
        let ch = u.cosh();
        let w = hw * 0.5 * PI * t.cosh() / (ch * ch);
        if w == 0.0 || !w.is_finite() {
            return 0.0;
        }
        let (da, db) = if u >= 0.0 {
            let db = 2.0 * hw / ((2.0 * u).exp() + 1.0);
            (2.0 * hw - db, db)
        } else {
            let da = 2.0 * hw / ((-2.0 * u).exp() + 1.0);
            (da, 2.0 * hw - da)
        };
        if da <= 0.0 || db <= 0.0 {
            return 0.0;
        }
        let x = if u >= 0.0 { b - db } else { a + da };
        let v = f(x, da, db);
        if v.is_finite() {
            w * v
        } else {
            0.0
        }
    };
    let mut h = 0.5;
    let n0 = (tmax / h) as i64;
    let mut sum: f64 = (-n0..=n0).map(|k| eval(k as f64 * h)).sum();
    let mut est = sum * h;
    for _level in 0..10 {
        h *= 0.5;
        let n = (tmax / h) as i64;
        let add: f64 = (-n..=n).filter(|k| k % 2 != 0).map(|k| eval(k as f64 * h)).sum();
        sum += add;
        let new = sum * h;
        let done = (new - est).abs() <= tol * new.abs().max(1e-300);
        est = new;
        if done {
            break;
        }
    }
    est
}

/// Weights `(w0, w1)` with ∫_0^h e^{-z(h-s)} (g0 (1 - s/h) + g1 s/h) ds = w0 g0 + w1 g1.
pub fn exp_linear_weights(z: num_complex::Complex64, h: f64) -> (num_complex::Complex64, num_complex::Complex64) {
    use num_complex::Complex64 as C;
    let x = z * h;
    if x.norm() < 1e-3 {
        // series in x
        let w0 = C::new(h, 0.0) * (C::new(0.5, 0.0) - x / 3.0 + x * x / 8.0 - x * x * x / 30.0);
        let w1 = C::new(h, 0.0) * (C::new(0.5, 0.0) - x / 6.0 + x * x / 24.0 - x * x * x / 120.0);
        return (w0, w1);
    }
    let e = (-x).exp();
    // ∫_0^1 e^{-x(1-u)} (1-u) du and ∫_0^1 e^{-x(1-u)} u du
    let w1 = (C::new(1.0, 0.0) / x - (C::new(1.0, 0.0) - e) / (x * x)) * h;
    let w0 = ((C::new(1.0, 0.0) - e) / x * h) - w1;
    (w0, w1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_integrates_polynomials_exactly() {
        let g = GaussRule::new(8);
        let v = g.integrate(0.0, 2.0, |x| x.powi(15));
        assert!((v - 2f64.powi(16) / 16.0).abs() < 1e-9);
        let s: f64 = g.weights.iter().sum();
        assert!((s - 2.0).abs() < 1e-14);
    }

    #[test]
    fn tanh_sinh_handles_endpoint_singularity() {
        let v = tanh_sinh(0.0, 1.0, 1e-14, |_, _, db| db.powf(-0.5));
        assert!((v - 2.0).abs() < 1e-10, "{v}");
        let v = tanh_sinh(0.0, 3.0, 1e-14, |x, _, _| x.exp());
        assert!((v - (3f64.exp() - 1.0)).abs() < 1e-11);
    }

    #[test]
    fn panels_respect_breaks() {
        let p = panels(0.0, 1.0, 0.3, &[0.45]);
        assert!(p.iter().any(|&(_, b)| b == 0.45));
        let total: f64 = p.iter().map(|(a, b)| b - a).sum();
        assert!((total - 1.0).abs() < 1e-15);
    }

    #[test]
    fn exp_weights_match_quadrature() {
        use num_complex::Complex64 as C;
        let g = GaussRule::new(20);
        for z in [C::new(0.3, 2.0), C::new(1e-5, 1e-5), C::new(-2.0, 40.0)] {
            let h = 0.1;
            let (w0, w1) = exp_linear_weights(z, h);
            let q0: C = g.mapped(0.0, h).map(|(s, w)| (-(z * (h - s))).exp() * (1.0 - s / h) * w).sum();
            let q1: C = g.mapped(0.0, h).map(|(s, w)| (-(z * (h - s))).exp() * (s / h) * w).sum();
            assert!((w0 - q0).norm() < 1e-13 && (w1 - q1).norm() < 1e-13);
        }
    }
}
