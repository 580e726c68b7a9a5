//! Zeros of a holomorphic function in a rectangle: argument principle with adaptive
//! subdivision, then Newton polishing.

use crate::error::{MfhError, Result};
use num_complex::Complex64 as C;
use serde::Serialize;
use std::f64::consts::PI;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Rect {
    pub re_lo: f64,
    pub re_hi: f64,
    pub im_lo: f64,
    pub im_hi: f64,
}

impl Rect {
    pub fn new(re_lo: f64, re_hi: f64, im_lo: f64, im_hi: f64) -> Self {
        Rect { re_lo, re_hi, im_lo, im_hi }
    }

    fn corners(&self) -> [C; 4] {
        [
            C::new(self.re_lo, self.im_lo),
            C::new(self.re_hi, self.im_lo),
            C::new(self.re_hi, self.im_hi),
            C::new(self.re_lo, self.im_hi),
        ]
    }

    fn contains(&self, z: C, slack: f64) -> bool {
        z.re >= self.re_lo - slack && z.re <= self.re_hi + slack && z.im >= self.im_lo - slack && z.im <= self.im_hi + slack
    }

    fn center(&self) -> C {
        C::new(0.5 * (self.re_lo + self.re_hi), 0.5 * (self.im_lo + self.im_hi))
    }

    fn width(&self) -> f64 {
        self.re_hi - self.re_lo
    }

    fn height(&self) -> f64 {
        self.im_hi - self.im_lo
    }

    /// Split across the longer side at fraction `frac`.
    fn split(&self, frac: f64) -> (Rect, Rect) {
        if self.width() >= self.height() {
            let c = self.re_lo + frac * self.width();
            (Rect { re_hi: c, ..*self }, Rect { re_lo: c, ..*self })
        } else {
            let c = self.im_lo + frac * self.height();
            (Rect { im_hi: c, ..*self }, Rect { im_lo: c, ..*self })
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct RootOptions {
    /// Cells smaller than this are resolved by Newton from the center.
    pub min_size: f64,
    pub max_depth: usize,
    /// Newton stops when the step is below `tol · (1 + |z|)`.
    pub tol: f64,
}

impl Default for RootOptions {
    fn default() -> Self {
        RootOptions { min_size: 1e-6, max_depth: 60, tol: 1e-14 }
    }
}

const MAX_ARG_STEP: f64 = PI / 4.0;
const SPLIT: f64 = 0.4871;

/// Total change of arg f along the segment a → b, divided by 2π. `None` when f vanishes on it.
fn edge_turns<F>(f: &F, a: C, b: C) -> Result<Option<f64>>
where
    F: Fn(C) -> Result<C>,
{
    let len = (b - a).norm();
    let n0 = ((len * 4.0).ceil() as usize).clamp(8, 4096);
    let mut total = 0.0;
    let mut za = a;
    let mut fa = f(a)?;
    for k in 1..=n0 {
        let zb = a + (b - a) * (k as f64 / n0 as f64);
        let fb = f(zb)?;
        match refine(f, za, fa, zb, fb, 0)? {
            Some(d) => total += d,
            None => return Ok(None),
        }
        za = zb;
        fa = fb;
    }
    Ok(Some(total / (2.0 * PI)))
}

fn refine<F>(f: &F, za: C, fa: C, zb: C, fb: C, depth: usize) -> Result<Option<f64>>
where
    F: Fn(C) -> Result<C>,
{
    if fa.norm() == 0.0 || fb.norm() == 0.0 || !fa.is_finite() || !fb.is_finite() {
        return Ok(None);
    }
    let d = (fb / fa).arg();
    if !d.is_finite() {
        return Ok(None);
    }
    if d.abs() <= MAX_ARG_STEP {
        return Ok(Some(d));
    }
    if depth > 40 || (zb - za).norm() < 1e-13 * (1.0 + za.norm()) {
        return Ok(None);
    }
    let zm = 0.5 * (za + zb);
    let fm = f(zm)?;
    let l = refine(f, za, fa, zm, fm, depth + 1)?;
    let r = refine(f, zm, fm, zb, fb, depth + 1)?;
    Ok(match (l, r) {
        (Some(x), Some(y)) => Some(x + y),
        _ => None,
    })
}

/// Number of zeros inside the rectangle, or `None` when one sits on the boundary.
pub fn winding<F>(f: &F, rect: &Rect) -> Result<Option<i64>>
where
    F: Fn(C) -> Result<C>,
{
    let c = rect.corners();
    let mut total = 0.0;
    for k in 0..4 {
        match edge_turns(f, c[k], c[(k + 1) % 4])? {
            Some(t) => total += t,
            None => return Ok(None),
        }
    }
    let w = total.round();
    if (total - w).abs() > 0.05 {
        return Ok(None);
    }
    Ok(Some(w as i64))
}

/// Newton iteration with a central-difference derivative; `None` if it fails to converge.
pub fn newton<F>(f: &F, z0: C, tol: f64) -> Result<Option<C>>
where
    F: Fn(C) -> Result<C>,
{
    let mut z = z0;
    for _ in 0..60 {
        // leaving the domain of f counts as non-convergence
        let (fz, fp, fm) = match (f(z), f(z + 1e-6 * (1.0 + z.norm())), f(z - 1e-6 * (1.0 + z.norm()))) {
            (Ok(a), Ok(b), Ok(c)) => (a, b, c),
            _ => return Ok(None),
        };
        if fz.norm() == 0.0 {
            return Ok(Some(z));
        }
        let h = 1e-6 * (1.0 + z.norm());
        let d = (fp - fm) / (2.0 * h);
        if d.norm() == 0.0 || !d.is_finite() {
            return Ok(None);
        }
        let step = fz / d;
        z -= step;
        if !z.is_finite() {
            return Ok(None);
        }
        if step.norm() < tol * (1.0 + z.norm()) {
            return Ok(Some(z));
        }
    }
    Ok(None)
}

fn solve_cell<F>(f: &F, rect: Rect, w: i64, depth: usize, opts: &RootOptions) -> Result<Vec<C>>
where
    F: Fn(C) -> Result<C> + Sync,
{
    if w <= 0 {
        return Ok(Vec::new());
    }
    let small = rect.width().max(rect.height()) < opts.min_size;
    if small || depth >= opts.max_depth {
        let z = newton(f, rect.center(), opts.tol)?.unwrap_or(rect.center());
        return Ok(vec![z; w as usize]);
    }
    if w == 1 {
        if let Some(z) = newton(f, rect.center(), opts.tol)? {
            if rect.contains(z, 0.0) {
                return Ok(vec![z]);
            }
        }
    }
    for attempt in 0..5 {
        let frac = SPLIT + 0.0613 * attempt as f64;
        let (a, b) = rect.split(frac);
        let (wa, wb) = rayon::join(|| winding(f, &a), || winding(f, &b));
        let (wa, wb) = match (wa?, wb?) {
            (Some(x), Some(y)) => (x, y),
            _ => continue,
        };
        if wa + wb != w {
            continue;
        }
        let (ra, rb) = rayon::join(|| solve_cell(f, a, wa, depth + 1, opts), || solve_cell(f, b, wb, depth + 1, opts));
        let mut out = ra?;
        out.extend(rb?);
        return Ok(out);
    }
    let z = newton(f, rect.center(), opts.tol)?.unwrap_or(rect.center());
    Ok(vec![z; w as usize])
}

/// All zeros of `f` in `rect`, counted with multiplicity.
///
/// A zero on the outer boundary is handled by enlarging the rectangle slightly.
pub fn find_zeros<F>(f: &F, rect: Rect, opts: &RootOptions) -> Result<Vec<C>>
where
    F: Fn(C) -> Result<C> + Sync,
{
    let mut r = rect;
    let mut total = None;
    for k in 0..6 {
        if let Some(w) = winding(f, &r)? {
            total = Some(w);
            break;
        }
        let e = 1e-7 * (k + 1) as f64 * (1.0 + r.width().max(r.height()));
        r = Rect::new(r.re_lo - e, r.re_hi + e, r.im_lo - e, r.im_hi + e);
    }
    let total = total.ok_or(MfhError::WindingInconsistent { expected: -1, found: 0 })?;
    let mut roots = solve_cell(f, r, total, 0, opts)?;
    roots.sort_by(|a, b| b.re.partial_cmp(&a.re).unwrap().then(a.im.partial_cmp(&b.im).unwrap()));
    if roots.len() as i64 != total {
        return Err(MfhError::WindingInconsistent { expected: total, found: roots.len() });
    }
    Ok(roots)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_roots() {
        let f = |z: C| -> Result<C> { Ok((z - C::new(0.3, 1.0)) * (z - C::new(0.3, -1.0)) * (z + 2.0)) };
        let roots = find_zeros(&f, Rect::new(-3.0, 1.0, -5.0, 5.0), &RootOptions::default()).unwrap();
        assert_eq!(roots.len(), 3);
        assert!((roots[0] - C::new(0.3, -1.0)).norm() < 1e-12);
        assert!((roots[1] - C::new(0.3, 1.0)).norm() < 1e-12);
        assert!((roots[2] + 2.0).norm() < 1e-12);
    }

    #[test]
    fn transcendental_roots() {
        // zeros of e^z − 1 at 2πik
        let f = |z: C| -> Result<C> { Ok(z.exp() - 1.0) };
        let roots = find_zeros(&f, Rect::new(-1.0, 1.0, -20.0, 20.0), &RootOptions::default()).unwrap();
        assert_eq!(roots.len(), 7);
        for r in roots {
            let k = (r.im / (2.0 * PI)).round();
            assert!((r - C::new(0.0, 2.0 * PI * k)).norm() < 1e-12);
        }
    }

    #[test]
    fn double_root_counts_twice() {
        let f = |z: C| -> Result<C> { Ok((z - 0.5) * (z - 0.5) * (z + C::new(0.0, 1.0))) };
        let roots = find_zeros(&f, Rect::new(-1.0, 1.0, -2.0, 2.0), &RootOptions::default()).unwrap();
        assert_eq!(roots.len(), 3);
        assert_eq!(roots.iter().filter(|r| (**r - 0.5).norm() < 1e-6).count(), 2);
    }
}
