//! Limited-memory BFGS minimiser with box projection and a backtracking
//! Armijo line search. Used by the parametric least-squares fit and, through
//! negation, by the outer dual ascent over the Lagrange multipliers.

use crate::error::{Error, Result};
use std::collections::VecDeque;

#[derive(Debug, Clone)]
pub struct LbfgsOptions {
    /// Number of curvature pairs kept.
    pub memory: usize,
    /// Convergence test on the infinity norm of the projected gradient.
    pub grad_tol_inf: f64,
    /// Budget of objective/gradient evaluations.
    pub max_evals: usize,
    /// Armijo sufficient-decrease constant.
    pub armijo_c1: f64,
    /// Backtracking halvings per line search.
    pub max_line_steps: usize,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        LbfgsOptions {
            memory: 10,
            grad_tol_inf: 1e-6,
            max_evals: 200,
            armijo_c1: 1e-4,
            max_line_steps: 30,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LbfgsOutcome {
    pub x: Vec<f64>,
    pub f: f64,
    pub grad: Vec<f64>,
    pub grad_inf_norm: f64,
    pub evaluations: usize,
    pub converged: bool,
    /// Objective values of accepted iterates, in order.
    pub accepted_f: Vec<f64>,
}

fn project(x: &mut [f64], lower: Option<&[f64]>, upper: Option<&[f64]>) {
    if let Some(lo) = lower {
        for (xi, &l) in x.iter_mut().zip(lo) {
            if *xi < l {
                *xi = l;
            }
        }
    }
    if let Some(up) = upper {
        for (xi, &u) in x.iter_mut().zip(up) {
            if *xi > u {
                *xi = u;
            }
        }
    }
}

/// Gradient with components frozen at active bounds zeroed out.
fn projected_gradient(
    x: &[f64],
    g: &[f64],
    lower: Option<&[f64]>,
    upper: Option<&[f64]>,
) -> Vec<f64> {
    let mut pg = g.to_vec();
    if let Some(lo) = lower {
        for i in 0..x.len() {
            if x[i] <= lo[i] && g[i] > 0.0 {
                pg[i] = 0.0;
            }
        }
    }
    if let Some(up) = upper {
        for i in 0..x.len() {
            if x[i] >= up[i] && g[i] < 0.0 {
                pg[i] = 0.0;
            }
        }
    }
    pg
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimises `f` from `x0`, optionally inside a box. The closure returns the
/// objective and its gradient. Evaluation failures abort the run.
pub fn minimize<F>(
    mut f: F,
    x0: &[f64],
    lower: Option<&[f64]>,
    upper: Option<&[f64]>,
    opts: &LbfgsOptions,
) -> Result<LbfgsOutcome>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let n = x0.len();
    if n == 0 {
        return Err(Error::invalid("empty parameter vector"));
    }
    let mut x = x0.to_vec();
    project(&mut x, lower, upper);

    let (mut fx, mut gx) = f(&x)?;
    let mut evals = 1usize;
    let mut accepted_f = vec![fx];

    let mut s_hist: VecDeque<Vec<f64>> = VecDeque::new();
    let mut y_hist: VecDeque<Vec<f64>> = VecDeque::new();
    let mut gamma = 1.0;

    let mut converged = inf_norm(&projected_gradient(&x, &gx, lower, upper)) < opts.grad_tol_inf;

    while !converged && evals < opts.max_evals {
        // two-loop recursion: d = H * g
        let mut d = projected_gradient(&x, &gx, lower, upper);
        let k = s_hist.len();
        let mut alphas = vec![0.0; k];
        for i in (0..k).rev() {
            let rho = 1.0 / dot(&y_hist[i], &s_hist[i]);
            alphas[i] = rho * dot(&s_hist[i], &d);
            for (dj, yj) in d.iter_mut().zip(&y_hist[i]) {
                *dj -= alphas[i] * yj;
            }
        }
        for dj in d.iter_mut() {
            *dj *= gamma;
        }
        for i in 0..k {
            let rho = 1.0 / dot(&y_hist[i], &s_hist[i]);
            let beta = rho * dot(&y_hist[i], &d);
            for (dj, sj) in d.iter_mut().zip(&s_hist[i]) {
                *dj += (alphas[i] - beta) * sj;
            }
        }
        // fall back to steepest descent if curvature information misleads
        if dot(&d, &gx) <= 1e-14 * inf_norm(&d) * inf_norm(&gx) {
            d = projected_gradient(&x, &gx, lower, upper);
        }

        let mut t = if k == 0 {
            1.0 / inf_norm(&d).max(1.0)
        } else {
            1.0
        };
        let mut accepted = false;
        for _ in 0..opts.max_line_steps {
            if evals >= opts.max_evals {
                break;
            }
            let mut xt: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi - t * di).collect();
            project(&mut xt, lower, upper);
            let displacement: Vec<f64> = xt.iter().zip(&x).map(|(a, b)| a - b).collect();
            if inf_norm(&displacement) == 0.0 {
                break;
            }
            let (ft, gt) = f(&xt)?;
            evals += 1;
            let decrease = dot(&gx, &displacement);
            if ft <= fx + opts.armijo_c1 * decrease && ft.is_finite() {
                let s: Vec<f64> = displacement;
                let y: Vec<f64> = gt.iter().zip(&gx).map(|(a, b)| a - b).collect();
                let sy = dot(&s, &y);
                if sy > 1e-12 * inf_norm(&s) * inf_norm(&y) * n as f64 {
                    gamma = sy / dot(&y, &y);
                    s_hist.push_back(s);
                    y_hist.push_back(y);
                    if s_hist.len() > opts.memory {
                        s_hist.pop_front();
                        y_hist.pop_front();
                    }
                }
                x = xt;
                fx = ft;
                gx = gt;
                accepted_f.push(fx);
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
        converged = inf_norm(&projected_gradient(&x, &gx, lower, upper)) < opts.grad_tol_inf;
    }

    let grad_inf_norm = inf_norm(&projected_gradient(&x, &gx, lower, upper));
    Ok(LbfgsOutcome {
        x,
        f: fx,
        grad: gx,
        grad_inf_norm,
        evaluations: evals,
        converged,
        accepted_f,
    })
}
