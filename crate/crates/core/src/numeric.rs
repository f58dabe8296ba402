//! Scalar root finding, the principal Lambert W branch and adaptive
//! quadrature.

use std::f64::consts::E;

use crate::error::{Error, Result};

/// Finds a root of `f` in `[a, b]` with Brent's method.
///
/// `f(a)` and `f(b)` must not have the same strict sign. Iteration stops when
/// the bracket is narrower than `xtol + 4ε|x|` or `f` vanishes exactly.
pub fn brent<F>(mut f: F, a: f64, b: f64, xtol: f64, max_iter: usize) -> Result<f64>
where
    F: FnMut(f64) -> f64,
{
    let (mut a, mut b) = (a, b);
    let mut fa = f(a);
    let mut fb = f(b);
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if !(fa.is_finite() && fb.is_finite()) {
        return Err(Error::domain("brent: non-finite function value at bracket ends"));
    }
    if fa.signum() == fb.signum() {
        return Err(Error::domain(format!(
            "brent: no sign change on [{a}, {b}] (f = {fa:e}, {fb:e})"
        )));
    }
    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut e = d;
    for _ in 0..max_iter {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol = 2.0 * f64::EPSILON * b.abs() + 0.5 * xtol;
        let m = 0.5 * (c - b);
        if m.abs() <= tol || fb == 0.0 {
            return Ok(b);
        }
        if e.abs() >= tol && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * m * s;
                q = 1.0 - s;
            } else {
                let qa = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * m * qa * (qa - r) - (b - a) * (r - 1.0));
                q = (qa - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            } else {
                p = -p;
            }
            if 2.0 * p < (3.0 * m * q - (tol * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = m;
                e = m;
            }
        } else {
            d = m;
            e = m;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol { d } else { tol.copysign(m) };
        fb = f(b);
    }
    Err(Error::NoConvergence { what: "brent", iterations: max_iter })
}

/// Plain bisection on a sign-changing bracket, run until the midpoint no
/// longer moves or `xtol` is reached.
pub fn bisect<F>(mut f: F, a: f64, b: f64, xtol: f64) -> Result<f64>
where
    F: FnMut(f64) -> f64,
{
    let (mut lo, mut hi) = (a.min(b), a.max(b));
    let flo = f(lo);
    let fhi = f(hi);
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if flo.signum() == fhi.signum() {
        return Err(Error::domain(format!("bisect: no sign change on [{lo}, {hi}]")));
    }
    let lo_negative = flo < 0.0;
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi || hi - lo <= xtol {
            return Ok(mid);
        }
        let fm = f(mid);
        if fm == 0.0 {
            return Ok(mid);
        }
        if (fm < 0.0) == lo_negative {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Principal branch `W₀` of the Lambert function, `W(x)·exp(W(x)) = x`.
pub fn lambert_w0(x: f64) -> Result<f64> {
    let branch = -1.0 / E;
    if x.is_nan() || x < branch - 4.0 * f64::EPSILON {
        return Err(Error::domain(format!("lambert_w0: argument {x} below -1/e")));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if x <= branch {
        return Ok(-1.0);
    }
    if x == f64::INFINITY {
        return Ok(f64::INFINITY);
    }

    let mut w = if x < -0.25 {
        // series around the branch point
        let p = (2.0 * (E * x + 1.0)).sqrt();
        -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p * p * p
    } else if x < 3.0 {
        x.ln_1p()
    } else {
        let l1 = x.ln();
        let l2 = l1.ln();
        l1 - l2 + l2 / l1
    };

    for _ in 0..64 {
        let ew = w.exp();
        let f = w * ew - x;
        let wp1 = w + 1.0;
        if wp1.abs() < 1e-300 {
            break;
        }
        let denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1);
        let step = f / denom;
        w -= step;
        if step.abs() <= 4.0 * f64::EPSILON * (1.0 + w.abs()) {
            break;
        }
    }
    // one Newton polish keeps the residual at round-off level
    let ew = w.exp();
    let f = w * ew - x;
    let fp = ew * (w + 1.0);
    if fp != 0.0 && fp.is_finite() {
        let candidate = w - f / fp;
        let fc = candidate * candidate.exp() - x;
        if fc.abs() < f.abs() {
            w = candidate;
        }
    }
    Ok(w)
}

/// Adaptive composite Simpson quadrature of `f` on `[a, b]` to absolute
/// tolerance `tol`.
pub fn adaptive_simpson<F>(f: F, a: f64, b: f64, tol: f64) -> f64
where
    F: Fn(f64) -> f64,
{
    #[allow(clippy::too_many_arguments)]
    fn recurse<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }

    if a == b {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    recurse(&f, a, b, fa, fm, fb, whole, tol, 48)
}

/// Adaptive Simpson over consecutive pieces split at `breaks`, so kinks of
/// the integrand sit on panel boundaries.
pub fn piecewise_simpson<F>(f: F, breaks: &[f64], tol: f64) -> f64
where
    F: Fn(f64) -> f64,
{
    let mut pts: Vec<f64> = breaks.to_vec();
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let pieces = pts.len().saturating_sub(1).max(1) as f64;
    pts.windows(2)
        .map(|w| adaptive_simpson(&f, w[0], w[1], tol / pieces))
        .sum()
}

/// Least-squares slope and intercept of `y` against `x`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}
