use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LbfgsConfig {
    pub max_iters: usize,
    pub memory: usize,
    /// Trial step of the very first line search, along `-g`.
    pub initial_step: f64,
    pub c1: f64,
    pub c2: f64,
    pub grad_tol: f64,
    pub max_line_evals: usize,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        Self { max_iters: 5000, memory: 20, initial_step: 1e-3, c1: 1e-4, c2: 0.9, grad_tol: 1e-9, max_line_evals: 40 }
    }
}

impl LbfgsConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.memory >= 1
            && self.initial_step > 0.0
            && 0.0 < self.c1
            && self.c1 < self.c2
            && self.c2 < 1.0
            && self.grad_tol >= 0.0
            && self.max_line_evals >= 1;
        if !ok {
            return Err(Error::Config(format!("invalid L-BFGS settings {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    GradientTolerance,
    MaxIterations,
    LineSearchFailure,
}

/// One accepted step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineStep {
    pub step: f64,
    pub loss_before: f64,
    pub loss_after: f64,
    /// Directional derivative `gᵀd` at the start of the step.
    pub slope: f64,
    pub armijo: bool,
    pub curvature: bool,
    pub evaluations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LbfgsOutcome {
    pub loss: f64,
    pub initial_loss: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub termination: Termination,
    pub steps: Vec<LineStep>,
    pub pairs_skipped: usize,
}

struct Eval {
    alpha: f64,
    x: Vec<f64>,
    f: f64,
    g: Vec<f64>,
    slope: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Minimizes `f` from `x` (updated in place) with limited-memory BFGS and a
/// strong-Wolfe line search.
///
/// `objective(x, grad)` returns the loss and writes its gradient; a
/// non-finite loss is treated as `+∞` during the line search. The returned
/// point is always the best one accepted, so the final loss never exceeds
/// the initial loss.
pub fn lbfgs_minimize<F>(mut objective: F, x: &mut [f64], cfg: &LbfgsConfig) -> Result<LbfgsOutcome>
where
    F: FnMut(&[f64], &mut [f64]) -> Result<f64>,
{
    cfg.validate()?;
    let n = x.len();
    let mut g = vec![0.0; n];
    let mut f = objective(x, &mut g)?;
    let mut evaluations = 1;
    if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!("L-BFGS start is not finite (loss {f})")));
    }
    let initial_loss = f;
    let mut hist: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(cfg.memory);
    let mut steps = Vec::new();
    let mut skipped = 0;
    let mut iterations = 0;
    let mut d = vec![0.0; n];
    let mut alpha_buf = vec![0.0; cfg.memory];

    let termination = loop {
        if norm(&g) < cfg.grad_tol {
            break Termination::GradientTolerance;
        }
        if iterations >= cfg.max_iters {
            break Termination::MaxIterations;
        }

        // two-loop recursion
        d.iter_mut().zip(&g).for_each(|(di, gi)| *di = -gi);
        for (k, (s, y, rho)) in hist.iter().enumerate().rev() {
            let a = rho * dot(s, &d);
            alpha_buf[k] = a;
            d.iter_mut().zip(y).for_each(|(di, yi)| *di -= a * yi);
        }
        if let Some((s, y, _)) = hist.back() {
            let gamma = dot(s, y) / dot(y, y);
            d.iter_mut().for_each(|di| *di *= gamma);
        }
        for (k, (s, y, rho)) in hist.iter().enumerate() {
            let b = rho * dot(y, &d);
            d.iter_mut().zip(s).for_each(|(di, si)| *di += (alpha_buf[k] - b) * si);
        }
        let mut slope = dot(&g, &d);
        if !(slope < 0.0) {
            // not a descent direction: drop the memory and use steepest descent
            hist.clear();
            d.iter_mut().zip(&g).for_each(|(di, gi)| *di = -gi);
            slope = -dot(&g, &g);
        }
        let first_trial = if iterations == 0 && hist.is_empty() { cfg.initial_step } else { 1.0 };

        let (accepted, evals) = line_search(&mut objective, x, f, slope, &d, first_trial, cfg)?;
        evaluations += evals;
        let Some(new) = accepted else {
            break Termination::LineSearchFailure;
        };
        let step = new.alpha;
        let armijo = new.f <= f + cfg.c1 * step * slope;
        let curvature = new.slope.abs() <= -cfg.c2 * slope;
        steps.push(LineStep { step, loss_before: f, loss_after: new.f, slope, armijo, curvature, evaluations: evals });

        let s: Vec<f64> = new.x.iter().zip(x.iter()).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = new.g.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * norm(&s) * norm(&y) && sy > 0.0 {
            if hist.len() == cfg.memory {
                hist.pop_front();
            }
            hist.push_back((s, y, 1.0 / sy));
        } else {
            skipped += 1;
        }
        x.copy_from_slice(&new.x);
        g = new.g;
        f = new.f;
        iterations += 1;
    };
    Ok(LbfgsOutcome { loss: f, initial_loss, iterations, evaluations, termination, steps, pairs_skipped: skipped })
}

/// Strong-Wolfe search (bracketing then zoom with safeguarded cubic
/// interpolation). If the zoom runs out of evaluations, the best point that
/// satisfies sufficient decrease is returned.
fn line_search<F>(
    objective: &mut F,
    x: &[f64],
    f0: f64,
    slope0: f64,
    d: &[f64],
    first: f64,
    cfg: &LbfgsConfig,
) -> Result<(Option<Eval>, usize)>
where
    F: FnMut(&[f64], &mut [f64]) -> Result<f64>,
{
    let mut evals = 0;
    let mut eval = |alpha: f64, evals: &mut usize| -> Result<Eval> {
        let xt: Vec<f64> = x.iter().zip(d).map(|(a, b)| a + alpha * b).collect();
        let mut gt = vec![0.0; x.len()];
        let mut ft = objective(&xt, &mut gt)?;
        *evals += 1;
        if !ft.is_finite() || gt.iter().any(|v| !v.is_finite()) {
            ft = f64::INFINITY;
        }
        let slope = if ft.is_finite() { dot(&gt, d) } else { f64::NAN };
        Ok(Eval { alpha, x: xt, f: ft, g: gt, slope })
    };
    let armijo = |alpha: f64, f: f64| f <= f0 + cfg.c1 * alpha * slope0;
    let curvature = |s: f64| s.abs() <= -cfg.c2 * slope0;

    let (mut a_prev, mut prev): (f64, Option<Eval>) = (0.0, None);
    let (mut f_prev, mut s_prev) = (f0, slope0);
    let mut alpha = first;
    let bracket = loop {
        if evals >= cfg.max_line_evals {
            return Ok((prev.filter(|p| p.f < f0), evals));
        }
        let e = eval(alpha, &mut evals)?;
        if !armijo(alpha, e.f) || (prev.is_some() && e.f >= f_prev) {
            break (a_prev, prev, f_prev, s_prev, alpha, Some(e));
        }
        if curvature(e.slope) {
            return Ok((Some(e), evals));
        }
        if e.slope >= 0.0 {
            let (ef, es) = (e.f, e.slope);
            break (alpha, Some(e), ef, es, a_prev, prev);
        }
        a_prev = alpha;
        f_prev = e.f;
        s_prev = e.slope;
        prev = Some(e);
        alpha *= 2.0;
    };

    let (mut lo, mut lo_e, mut f_lo, mut s_lo, mut hi, hi_e) = bracket;
    let (mut f_hi, mut s_hi) = match &hi_e {
        Some(e) => (e.f, e.slope),
        None => (f0, slope0),
    };
    loop {
        if evals >= cfg.max_line_evals || (hi - lo).abs() <= 1e-16 * lo.abs().max(hi.abs()) {
            return Ok((lo_e.filter(|e| e.f < f0), evals));
        }
        let alpha = interpolate(lo, f_lo, s_lo, hi, f_hi, s_hi);
        let e = eval(alpha, &mut evals)?;
        if !armijo(alpha, e.f) || e.f >= f_lo {
            hi = alpha;
            f_hi = e.f;
            s_hi = e.slope;
        } else {
            if curvature(e.slope) {
                return Ok((Some(e), evals));
            }
            if e.slope * (hi - lo) >= 0.0 {
                hi = lo;
                f_hi = f_lo;
                s_hi = s_lo;
            }
            lo = alpha;
            f_lo = e.f;
            s_lo = e.slope;
            lo_e = Some(e);
        }
    }
}

/// Minimizer of the cubic through both end points, kept at least 10% of the
/// interval away from either end; bisection when the cubic is unusable.
fn interpolate(a: f64, fa: f64, da: f64, b: f64, fb: f64, db: f64) -> f64 {
    let (lo, hi) = (a.min(b), a.max(b));
    let width = hi - lo;
    let mid = 0.5 * (a + b);
    if !fb.is_finite() || !db.is_finite() || !fa.is_finite() || !da.is_finite() {
        return mid;
    }
    let d1 = da + db - 3.0 * (fa - fb) / (a - b);
    let disc = d1 * d1 - da * db;
    if disc < 0.0 {
        return mid;
    }
    let d2 = (b - a).signum() * disc.sqrt();
    let t = b - (b - a) * (db + d2 - d1) / (db - da + 2.0 * d2);
    if !t.is_finite() {
        return mid;
    }
    t.clamp(lo + 0.1 * width, hi - 0.1 * width)
}
