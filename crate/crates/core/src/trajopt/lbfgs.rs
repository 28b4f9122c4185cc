//! Limited-memory BFGS with a backtracking Armijo line search.

use std::collections::VecDeque;

#[derive(Debug, Clone, Copy)]
pub struct LbfgsOptions {
    pub memory: usize,
    pub max_iters: usize,
    /// Stop when the infinity norm of the gradient falls below this.
    pub grad_tol: f64,
    /// Stop when the relative decrease of the objective falls below this.
    pub f_tol: f64,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        Self { memory: 8, max_iters: 200, grad_tol: 1e-6, f_tol: 1e-12 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LbfgsOutcome {
    pub f: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimizes `f` from `x` in place. `f(x, grad)` returns the value and
/// writes the gradient; non-finite values reject a trial step.
pub fn minimize<F>(mut f: F, x: &mut [f64], opts: LbfgsOptions) -> LbfgsOutcome
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x.len();
    let mut g = vec![0.0; n];
    let mut fx = f(x, &mut g);
    let mut hist: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(opts.memory);
    let mut d = vec![0.0; n];
    let mut xt = vec![0.0; n];
    let mut gt = vec![0.0; n];
    let mut alpha = vec![0.0; opts.memory];
    for it in 0..opts.max_iters {
        if g.iter().fold(0.0f64, |m, v| m.max(v.abs())) <= opts.grad_tol {
            return LbfgsOutcome { f: fx, iterations: it, converged: true };
        }
        // Two-loop recursion for d = -H g.
        d.iter_mut().zip(&g).for_each(|(di, gi)| *di = -gi);
        for (k, (s, y, rho)) in hist.iter().enumerate().rev() {
            alpha[k] = rho * dot(s, &d);
            d.iter_mut().zip(y).for_each(|(di, yi)| *di -= alpha[k] * yi);
        }
        let gamma = match hist.back() {
            Some((s, y, _)) => dot(s, y) / dot(y, y),
            None => 1.0 / g.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12),
        };
        d.iter_mut().for_each(|di| *di *= gamma);
        for (k, (s, y, rho)) in hist.iter().enumerate() {
            let beta = rho * dot(y, &d);
            d.iter_mut().zip(s).for_each(|(di, si)| *di += (alpha[k] - beta) * si);
        }
        let mut slope = dot(&g, &d);
        if slope >= 0.0 {
            // Not a descent direction: restart from steepest descent.
            hist.clear();
            let scale = 1.0 / g.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
            d.iter_mut().zip(&g).for_each(|(di, gi)| *di = -gi * scale);
            slope = dot(&g, &d);
        }
        let mut step = 1.0;
        let mut ft = f64::INFINITY;
        let mut accepted = false;
        for _ in 0..40 {
            xt.iter_mut().zip(x.iter().zip(&d)).for_each(|(t, (xi, di))| *t = xi + step * di);
            ft = f(&xt, &mut gt);
            if ft.is_finite() && ft <= fx + 1e-4 * step * slope {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            return LbfgsOutcome { f: fx, iterations: it, converged: false };
        }
        let s: Vec<f64> = xt.iter().zip(x.iter()).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gt.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() {
            if hist.len() == opts.memory {
                hist.pop_front();
            }
            hist.push_back((s, y, 1.0 / sy));
        }
        x.copy_from_slice(&xt);
        g.copy_from_slice(&gt);
        let decrease = fx - ft;
        fx = ft;
        if decrease <= opts.f_tol * fx.abs().max(1.0) {
            return LbfgsOutcome { f: fx, iterations: it + 1, converged: true };
        }
    }
    LbfgsOutcome { f: fx, iterations: opts.max_iters, converged: false }
}
