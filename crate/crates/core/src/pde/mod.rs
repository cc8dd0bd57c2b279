//! Linear parabolic solvers on the shared grid: the unsplit implicit backward
//! step used inside policy iteration, ADI pricing sweeps, and the forward
//! discounted-density solver that is their adjoint.

pub mod adi;
pub mod backward;
pub mod density;

use crate::error::{Error, Result};
use crate::grid::Grid;

/// How the discount rate at a node is derived from its second coordinate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Discounting {
    /// Second coordinate is the rescaled short rate; discount at `r / scale`.
    ScaledRate { scale: f64 },
    /// Constant discount rate (test and constant-coefficient configurations).
    Constant(f64),
    /// No discounting (the LSV variant's zero-rate setting).
    None,
}

impl Discounting {
    #[inline]
    pub fn rate_at(&self, r_coord: f64) -> f64 {
        match self {
            Discounting::ScaledRate { scale } => r_coord / scale,
            Discounting::Constant(r) => *r,
            Discounting::None => 0.0,
        }
    }
}

/// Iterative-solve diagnostics.
#[derive(Debug, Clone, Copy, Default)]
pub struct SolveStats {
    pub iterations: usize,
    pub residual: f64,
}

pub(crate) fn require_pde_grid(grid: &Grid) -> Result<()> {
    if grid.nz < 4 || grid.nr < 4 {
        return Err(Error::invalid(
            "PDE solvers need at least 4 nodes per axis for the boundary treatment",
        ));
    }
    Ok(())
}

/// Bi-conjugate gradient stabilised with Jacobi scaling, matrix-free.
///
/// `apply` computes `y = M x`. Solves to `tol` relative residual in the
/// 2-norm, restarting once on stagnation before giving up.
pub(crate) fn bicgstab(
    apply: &dyn Fn(&[f64], &mut [f64]),
    diag: &[f64],
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    max_iter: usize,
) -> Result<SolveStats> {
    let n = b.len();
    let b_norm = norm2(b);
    if b_norm == 0.0 {
        x.fill(0.0);
        return Ok(SolveStats {
            iterations: 0,
            residual: 0.0,
        });
    }
    let mut r = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    apply(x, &mut tmp);
    for i in 0..n {
        r[i] = b[i] - tmp[i];
    }
    let mut total_iters = 0usize;

    for _restart in 0..3 {
        let r0 = r.clone();
        let mut rho = 1.0f64;
        let mut alpha = 1.0f64;
        let mut omega = 1.0f64;
        let mut v = vec![0.0; n];
        let mut p = vec![0.0; n];
        let mut s = vec![0.0; n];
        let mut t = vec![0.0; n];

        while total_iters < max_iter {
            let res = norm2(&r) / b_norm;
            if res <= tol {
                return Ok(SolveStats {
                    iterations: total_iters,
                    residual: res,
                });
            }
            let rho_new = dot(&r0, &r);
            if rho_new.abs() < 1e-300 {
                break; // breakdown: restart with the current iterate
            }
            let beta = (rho_new / rho) * (alpha / omega);
            rho = rho_new;
            for i in 0..n {
                p[i] = r[i] + beta * (p[i] - omega * v[i]);
            }
            // Jacobi-preconditioned direction
            for i in 0..n {
                tmp[i] = p[i] / diag[i];
            }
            apply(&tmp, &mut v);
            alpha = rho / dot(&r0, &v);
            if !alpha.is_finite() {
                break;
            }
            for i in 0..n {
                s[i] = r[i] - alpha * v[i];
            }
            for i in 0..n {
                x[i] += alpha * tmp[i];
            }
            if norm2(&s) / b_norm <= tol {
                for i in 0..n {
                    r[i] = s[i];
                }
                total_iters += 1;
                continue;
            }
            for i in 0..n {
                tmp[i] = s[i] / diag[i];
            }
            apply(&tmp, &mut t);
            let tt = dot(&t, &t);
            omega = if tt > 0.0 { dot(&t, &s) / tt } else { 0.0 };
            if !omega.is_finite() || omega == 0.0 {
                break;
            }
            for i in 0..n {
                x[i] += omega * tmp[i];
            }
            for i in 0..n {
                r[i] = s[i] - omega * t[i];
            }
            total_iters += 1;
        }
        // refresh the true residual before a restart
        apply(x, &mut tmp);
        for i in 0..n {
            r[i] = b[i] - tmp[i];
        }
        if norm2(&r) / b_norm <= tol {
            return Ok(SolveStats {
                iterations: total_iters,
                residual: norm2(&r) / b_norm,
            });
        }
        if total_iters >= max_iter {
            break;
        }
    }
    let res = norm2(&r) / b_norm;
    Err(Error::SolverDiverged {
        residual: res,
        iterations: total_iters,
    })
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Thomas algorithm for a tridiagonal system, in place on scratch buffers.
/// `lo[0]` and `up[n-1]` are ignored.
pub(crate) fn solve_tridiagonal(
    lo: &[f64],
    diag: &[f64],
    up: &[f64],
    rhs: &[f64],
    scratch: &mut Vec<f64>,
    out: &mut Vec<f64>,
) -> Result<()> {
    let n = diag.len();
    scratch.clear();
    scratch.resize(n, 0.0);
    out.clear();
    out.resize(n, 0.0);
    let mut beta = diag[0];
    if beta.abs() < 1e-300 {
        return Err(Error::SolverDiverged {
            residual: f64::INFINITY,
            iterations: 0,
        });
    }
    out[0] = rhs[0] / beta;
    for i in 1..n {
        scratch[i] = up[i - 1] / beta;
        beta = diag[i] - lo[i] * scratch[i];
        if beta.abs() < 1e-300 {
            return Err(Error::SolverDiverged {
                residual: f64::INFINITY,
                iterations: i,
            });
        }
        out[i] = (rhs[i] - lo[i] * out[i - 1]) / beta;
    }
    for i in (0..n - 1).rev() {
        let next = out[i + 1];
        out[i] -= scratch[i + 1] * next;
    }
    Ok(())
}
