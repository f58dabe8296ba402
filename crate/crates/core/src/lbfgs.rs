//! Limited-memory BFGS with a strong Wolfe line search.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LbfgsOptions {
    pub memory: usize,
    pub max_iterations: usize,
    /// Stop when `‖∇f‖_∞` falls below this.
    pub gradient_tol: f64,
    /// Sufficient-decrease constant.
    pub c1: f64,
    /// Curvature constant.
    pub c2: f64,
    pub max_line_search: usize,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        LbfgsOptions {
            memory: 10,
            max_iterations: 500,
            gradient_tol: 1e-10,
            c1: 1e-4,
            c2: 0.9,
            max_line_search: 40,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    /// Gradient tolerance reached.
    Converged,
    /// No further decrease is representable at a finite value.
    Stagnated,
    MaxIterations,
    LineSearchFailed,
    NonFinite,
}

impl Status {
    /// Whether the final point counts as a local minimizer.
    pub fn is_success(self) -> bool {
        matches!(self, Status::Converged | Status::Stagnated)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub status: Status,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Minimizes `f`, which returns the value and writes the gradient.
pub fn minimize<F>(mut f: F, x0: &[f64], opts: &LbfgsOptions) -> Minimum
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut g = vec![0.0; n];
    let mut fx = f(&x, &mut g);
    let mut evaluations = 1;
    let finish = |x: Vec<f64>, fx: f64, g: &[f64], it: usize, ev: usize, status: Status| Minimum {
        x,
        value: fx,
        gradient_norm: inf_norm(g),
        iterations: it,
        evaluations: ev,
        status,
    };
    if !fx.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return finish(x, fx, &g, 0, evaluations, Status::NonFinite);
    }
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(opts.memory);
    let mut d = vec![0.0; n];
    let mut x_new = vec![0.0; n];
    let mut g_new = vec![0.0; n];

    for it in 0..opts.max_iterations {
        if inf_norm(&g) <= opts.gradient_tol {
            return finish(x, fx, &g, it, evaluations, Status::Converged);
        }
        // two-loop recursion for d = -H g
        d.copy_from_slice(&g);
        let mut alphas = Vec::with_capacity(history.len());
        for (s, y, rho) in history.iter().rev() {
            let a = rho * dot(s, &d);
            d.iter_mut().zip(y).for_each(|(di, yi)| *di -= a * yi);
            alphas.push(a);
        }
        if let Some((s, y, _)) = history.back() {
            let gamma = dot(s, y) / dot(y, y);
            d.iter_mut().for_each(|v| *v *= gamma);
        }
        for ((s, y, rho), a) in history.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &d);
            d.iter_mut().zip(s).for_each(|(di, si)| *di += (a - b) * si);
        }
        d.iter_mut().for_each(|v| *v = -*v);
        let mut slope = dot(&g, &d);
        if !(slope < 0.0) {
            // not a descent direction: restart from steepest descent
            history.clear();
            d.iter_mut().zip(&g).for_each(|(di, gi)| *di = -gi);
            slope = -dot(&g, &g);
        }
        let alpha0 = if history.is_empty() { (1.0 / inf_norm(&d)).min(1.0) } else { 1.0 };

        let ls = line_search(&mut f, &x, fx, &d, slope, alpha0, opts, &mut x_new, &mut g_new);
        evaluations += ls.evaluations;
        match ls.outcome {
            LineOutcome::Accepted(f_new) => {
                let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
                let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
                let sy = dot(&s, &y);
                let decrease = fx - f_new;
                x.copy_from_slice(&x_new);
                g.copy_from_slice(&g_new);
                let f_old = fx;
                fx = f_new;
                if sy > 1e-16 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() {
                    if history.len() == opts.memory {
                        history.pop_front();
                    }
                    history.push_back((s, y, 1.0 / sy));
                }
                if decrease <= 4.0 * f64::EPSILON * f_old.abs().max(1e-300) && inf_norm(&g) > opts.gradient_tol {
                    return finish(x, fx, &g, it + 1, evaluations, Status::Stagnated);
                }
            }
            LineOutcome::NoProgress => {
                return finish(x, fx, &g, it, evaluations, Status::Stagnated);
            }
            LineOutcome::NonFinite => {
                return finish(x, fx, &g, it, evaluations, Status::NonFinite);
            }
            LineOutcome::Failed => {
                if history.is_empty() {
                    return finish(x, fx, &g, it, evaluations, Status::LineSearchFailed);
                }
                history.clear();
            }
        }
    }
    let status = if inf_norm(&g) <= opts.gradient_tol { Status::Converged } else { Status::MaxIterations };
    finish(x, fx, &g, opts.max_iterations, evaluations, status)
}

enum LineOutcome {
    Accepted(f64),
    /// The step shrank below resolution without any decrease.
    NoProgress,
    NonFinite,
    Failed,
}

struct LineResult {
    outcome: LineOutcome,
    evaluations: usize,
}

/// Strong Wolfe line search with bracketing and a safeguarded cubic zoom.
#[allow(clippy::too_many_arguments)]
fn line_search<F>(
    f: &mut F,
    x: &[f64],
    f0: f64,
    d: &[f64],
    slope0: f64,
    alpha0: f64,
    opts: &LbfgsOptions,
    x_new: &mut [f64],
    g_new: &mut [f64],
) -> LineResult
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let mut evaluations = 0;
    let mut eval = |alpha: f64, x_new: &mut [f64], g_new: &mut [f64], evaluations: &mut usize| -> (f64, f64) {
        for ((xn, xi), di) in x_new.iter_mut().zip(x).zip(d) {
            *xn = xi + alpha * di;
        }
        *evaluations += 1;
        let v = f(x_new, g_new);
        (v, dot(g_new, d))
    };
    let armijo = |alpha: f64, v: f64| v <= f0 + opts.c1 * alpha * slope0;
    let curvature = |dg: f64| dg.abs() <= -opts.c2 * slope0;

    let mut best: Option<(f64, f64)> = None; // (alpha, value) with value < f0
    let note = |alpha: f64, v: f64, best: &mut Option<(f64, f64)>| {
        if v < f0 && best.is_none_or(|(_, bv)| v < bv) {
            *best = Some((alpha, v));
        }
    };

    let (mut a_prev, mut f_prev, mut dg_prev) = (0.0, f0, slope0);
    let mut alpha = alpha0;
    let mut bracket: Option<(f64, f64, f64, f64, f64, f64)> = None; // lo, f_lo, dg_lo, hi, f_hi, dg_hi
    for i in 0..opts.max_line_search {
        let (v, dg) = eval(alpha, x_new, g_new, &mut evaluations);
        if !v.is_finite() {
            // treat as too long a step
            bracket = Some((a_prev, f_prev, dg_prev, alpha, f64::INFINITY, f64::NAN));
            break;
        }
        note(alpha, v, &mut best);
        if !armijo(alpha, v) || (i > 0 && v >= f_prev) {
            bracket = Some((a_prev, f_prev, dg_prev, alpha, v, dg));
            break;
        }
        if curvature(dg) {
            return LineResult { outcome: LineOutcome::Accepted(v), evaluations };
        }
        if dg >= 0.0 {
            bracket = Some((alpha, v, dg, a_prev, f_prev, dg_prev));
            break;
        }
        a_prev = alpha;
        f_prev = v;
        dg_prev = dg;
        alpha *= 2.0;
    }

    if let Some((mut lo, mut f_lo, mut dg_lo, mut hi, mut f_hi, mut dg_hi)) = bracket {
        for _ in 0..opts.max_line_search {
            let width = (hi - lo).abs();
            if width <= f64::EPSILON * lo.abs().max(hi.abs()) {
                break;
            }
            let mut trial = cubic_min(lo, f_lo, dg_lo, hi, f_hi, dg_hi).unwrap_or(0.5 * (lo + hi));
            let (a, b) = if lo < hi { (lo, hi) } else { (hi, lo) };
            let margin = 0.1 * (b - a);
            if !(trial > a + margin && trial < b - margin) {
                trial = 0.5 * (lo + hi);
            }
            let (v, dg) = eval(trial, x_new, g_new, &mut evaluations);
            if !v.is_finite() {
                hi = trial;
                f_hi = f64::INFINITY;
                dg_hi = f64::NAN;
                continue;
            }
            note(trial, v, &mut best);
            if !armijo(trial, v) || v >= f_lo {
                hi = trial;
                f_hi = v;
                dg_hi = dg;
            } else {
                if curvature(dg) {
                    return LineResult { outcome: LineOutcome::Accepted(v), evaluations };
                }
                if dg * (hi - lo) >= 0.0 {
                    hi = lo;
                    f_hi = f_lo;
                    dg_hi = dg_lo;
                }
                lo = trial;
                f_lo = v;
                dg_lo = dg;
            }
        }
    }

    // accept the best sufficient decrease seen even without curvature
    if let Some((a, v)) = best {
        if armijo(a, v) {
            let (v2, _) = eval(a, x_new, g_new, &mut evaluations);
            return LineResult { outcome: LineOutcome::Accepted(v2), evaluations };
        }
    }
    if f0.is_finite() && best.is_none() {
        return LineResult { outcome: LineOutcome::NoProgress, evaluations };
    }
    if !f0.is_finite() {
        return LineResult { outcome: LineOutcome::NonFinite, evaluations };
    }
    LineResult { outcome: LineOutcome::Failed, evaluations }
}

/// Minimizer of the cubic interpolating values and slopes at `a` and `b`.
fn cubic_min(a: f64, fa: f64, da: f64, b: f64, fb: f64, db: f64) -> Option<f64> {
    if !(fa.is_finite() && fb.is_finite() && da.is_finite() && db.is_finite()) {
        return None;
    }
    let d1 = da + db - 3.0 * (fa - fb) / (a - b);
    let disc = d1 * d1 - da * db;
    if disc < 0.0 {
        return None;
    }
    let d2 = (b - a).signum() * disc.sqrt();
    let t = b - (b - a) * (db + d2 - d1) / (db - da + 2.0 * d2);
    t.is_finite().then_some(t)
}
