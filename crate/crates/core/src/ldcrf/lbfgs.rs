//! Limited-memory BFGS with a strong-Wolfe line search (minimization).

use std::collections::VecDeque;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LbfgsOptions {
    pub memory: usize,
    pub max_iterations: usize,
    /// Converged when `max |g| < grad_tol`.
    pub grad_tol: f64,
    pub c1: f64,
    pub c2: f64,
    pub max_line_search: usize,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        Self { memory: 10, max_iterations: 200, grad_tol: 1e-5, c1: 1e-4, c2: 0.9, max_line_search: 40 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LbfgsStop {
    Converged,
    MaxIterations,
    /// No step satisfying sufficient decrease could be found.
    LineSearchFailed,
    NonFinite,
}

#[derive(Debug, Clone)]
pub struct LbfgsOutcome {
    pub x: Vec<f64>,
    pub f: f64,
    pub grad: Vec<f64>,
    pub iterations: usize,
    pub evaluations: usize,
    /// Objective after the start point and after every accepted step.
    pub trace: Vec<f64>,
    pub stop: LbfgsStop,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

struct Probe {
    alpha: f64,
    f: f64,
    slope: f64,
    x: Vec<f64>,
    g: Vec<f64>,
}

struct LineSearch<'a, F> {
    eval: &'a mut F,
    x0: &'a [f64],
    d: &'a [f64],
    f0: f64,
    slope0: f64,
    opts: LbfgsOptions,
    evaluations: usize,
}

impl<F: FnMut(&[f64]) -> (f64, Vec<f64>)> LineSearch<'_, F> {
    fn probe(&mut self, alpha: f64) -> Probe {
        let x: Vec<f64> = self.x0.iter().zip(self.d).map(|(x, d)| x + alpha * d).collect();
        let (f, g) = (self.eval)(&x);
        self.evaluations += 1;
        let slope = dot(&g, self.d);
        Probe { alpha, f, slope, x, g }
    }

    fn armijo(&self, p: &Probe) -> bool {
        p.f.is_finite() && p.f <= self.f0 + self.opts.c1 * p.alpha * self.slope0
    }

    fn curvature(&self, p: &Probe) -> bool {
        p.slope.abs() <= -self.opts.c2 * self.slope0
    }

    /// Strong-Wolfe step; falls back to the best sufficient-decrease point.
    fn search(&mut self, alpha0: f64) -> Option<Probe> {
        let mut prev: Option<Probe> = None;
        let mut alpha = alpha0;
        let mut best: Option<Probe> = None;
        for _ in 0..self.opts.max_line_search {
            let p = self.probe(alpha);
            if !p.f.is_finite() {
                // Overshot into overflow territory: shrink.
                alpha *= 0.1;
                continue;
            }
            let worse_than_prev = prev.as_ref().is_some_and(|q| p.f >= q.f);
            if !self.armijo(&p) || worse_than_prev {
                let lo = prev.unwrap_or(Probe { alpha: 0.0, f: self.f0, slope: self.slope0, x: self.x0.to_vec(), g: Vec::new() });
                return self.zoom(lo, p).or(best);
            }
            if self.curvature(&p) {
                return Some(p);
            }
            if p.slope >= 0.0 {
                let lo = p;
                let hi = prev.unwrap_or(Probe { alpha: 0.0, f: self.f0, slope: self.slope0, x: self.x0.to_vec(), g: Vec::new() });
                return self.zoom(lo, hi).or(best);
            }
            alpha *= 2.0;
            best = Some(Probe { alpha: p.alpha, f: p.f, slope: p.slope, x: p.x.clone(), g: p.g.clone() });
            prev = Some(p);
        }
        best
    }

    fn zoom(&mut self, mut lo: Probe, mut hi: Probe) -> Option<Probe> {
        for _ in 0..self.opts.max_line_search {
            let (a, b) = (lo.alpha, hi.alpha);
            let width = b - a;
            // Cubic interpolation from the two bracketing points.
            let d1 = lo.slope + hi.slope - 3.0 * (lo.f - hi.f) / (a - b);
            let disc = d1 * d1 - lo.slope * hi.slope;
            let mut alpha = if disc >= 0.0 && hi.f.is_finite() {
                let d2 = disc.sqrt().copysign(b - a);
                b - (b - a) * (hi.slope + d2 - d1) / (hi.slope - lo.slope + 2.0 * d2)
            } else {
                a + 0.5 * width
            };
            let (low, high) = if a < b { (a, b) } else { (b, a) };
            let margin = 0.1 * (high - low);
            if !alpha.is_finite() || alpha < low + margin || alpha > high - margin {
                alpha = 0.5 * (a + b);
            }
            if (high - low).abs() < 1e-16 * high.abs().max(1.0) {
                break;
            }
            let p = self.probe(alpha);
            if !self.armijo(&p) || p.f >= lo.f {
                hi = p;
            } else {
                if self.curvature(&p) {
                    return Some(p);
                }
                if p.slope * (hi.alpha - lo.alpha) >= 0.0 {
                    hi = lo;
                }
                lo = p;
            }
        }
        (lo.alpha > 0.0 && !lo.g.is_empty()).then_some(lo)
    }
}

/// Minimizes `eval`, which returns the objective and its gradient.
pub fn minimize<F>(mut eval: F, x0: Vec<f64>, opts: &LbfgsOptions) -> LbfgsOutcome
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let (mut f, mut g) = eval(&x0);
    let mut x = x0;
    let mut evaluations = 1;
    let mut trace = vec![f];
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut iterations = 0;

    if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return LbfgsOutcome { x, f, grad: g, iterations, evaluations, trace, stop: LbfgsStop::NonFinite };
    }

    let stop = loop {
        if max_abs(&g) < opts.grad_tol {
            break LbfgsStop::Converged;
        }
        if iterations >= opts.max_iterations {
            break LbfgsStop::MaxIterations;
        }

        // Two-loop recursion for d = -H g.
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(history.len());
        for (s, y, rho) in history.iter().rev() {
            let a = rho * dot(s, &q);
            q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
            alphas.push(a);
        }
        if let Some((s, y, _)) = history.back() {
            let gamma = dot(s, y) / dot(y, y);
            q.iter_mut().for_each(|v| *v *= gamma);
        }
        for ((s, y, rho), a) in history.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &q);
            q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
        }
        let mut d: Vec<f64> = q.into_iter().map(|v| -v).collect();
        let mut slope = dot(&g, &d);
        if !(slope < 0.0) {
            history.clear();
            d = g.iter().map(|v| -v).collect();
            slope = dot(&g, &d);
        }
        let alpha0 = if history.is_empty() { 1.0 / dot(&g, &g).sqrt().max(1.0) } else { 1.0 };

        let mut ls = LineSearch { eval: &mut eval, x0: &x, d: &d, f0: f, slope0: slope, opts: *opts, evaluations: 0 };
        let step = ls.search(alpha0);
        evaluations += ls.evaluations;
        let Some(step) = step else {
            if history.is_empty() {
                break LbfgsStop::LineSearchFailed;
            }
            history.clear();
            continue;
        };

        let s: Vec<f64> = step.x.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = step.g.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 {
            if history.len() == opts.memory {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }
        x = step.x;
        f = step.f;
        g = step.g;
        trace.push(f);
        iterations += 1;
    };

    LbfgsOutcome { x, f, grad: g, iterations, evaluations, trace, stop }
}
