//! One implicit backward-Euler step of a linear parabolic operator with the
//! cross-derivative in the system matrix, solved matrix-free to a tight
//! residual. This is the inner linear solve of policy iteration.

use super::{bicgstab, require_pde_grid, Discounting, SolveStats};
use crate::error::Result;
use crate::grid::{apply_frozen_curvature_boundary, ScalarField};
use crate::models::ModelSurfaces;

/// Nine-point stencil weights of `(I - dt L)` at interior nodes, plus the
/// frozen-curvature constraint rows on the boundary.
pub(crate) struct BackwardOperator {
    pub nz: usize,
    pub nr: usize,
    w_c: Vec<f64>,
    w_zm: Vec<f64>,
    w_zp: Vec<f64>,
    w_rm: Vec<f64>,
    w_rp: Vec<f64>,
    w_x: Vec<f64>,
}

impl BackwardOperator {
    pub fn new(coeffs: &ModelSurfaces, disc: Discounting, dt: f64) -> Self {
        let g = &coeffs.grid;
        let (nz, nr) = (g.nz, g.nr);
        let (hz, hr) = (g.hz(), g.hr());
        let n = g.n_nodes();
        let mut op = BackwardOperator {
            nz,
            nr,
            w_c: vec![1.0; n],
            w_zm: vec![0.0; n],
            w_zp: vec![0.0; n],
            w_rm: vec![0.0; n],
            w_rp: vec![0.0; n],
            w_x: vec![0.0; n],
        };
        for ir in 1..nr - 1 {
            let rate = disc.rate_at(g.r(ir));
            for iz in 1..nz - 1 {
                let i = g.idx(iz, ir);
                let (a1, a2) = (coeffs.alpha1[i], coeffs.alpha2[i]);
                let (b11, b12, b22) = (coeffs.beta11[i], coeffs.beta12[i], coeffs.beta22[i]);
                op.w_c[i] = 1.0 + dt * (rate + b11 / (hz * hz) + b22 / (hr * hr));
                op.w_zp[i] = -dt * (a1 / (2.0 * hz) + b11 / (2.0 * hz * hz));
                op.w_zm[i] = -dt * (-a1 / (2.0 * hz) + b11 / (2.0 * hz * hz));
                op.w_rp[i] = -dt * (a2 / (2.0 * hr) + b22 / (2.0 * hr * hr));
                op.w_rm[i] = -dt * (-a2 / (2.0 * hr) + b22 / (2.0 * hr * hr));
                op.w_x[i] = -dt * b12 / (4.0 * hz * hr);
            }
        }
        op
    }

    /// y = M x. Boundary rows encode the curvature constraints
    /// `x_b - 2 x_in + x_in2` (z-normal on z-edges for interior rows,
    /// r-normal on r-edges including corners).
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        let (nz, nr) = (self.nz, self.nr);
        for ir in 1..nr - 1 {
            let row = ir * nz;
            for iz in 1..nz - 1 {
                let i = row + iz;
                let cross = x[i + nz + 1] - x[i + nz - 1] - x[i - nz + 1] + x[i - nz - 1];
                y[i] = self.w_c[i] * x[i]
                    + self.w_zm[i] * x[i - 1]
                    + self.w_zp[i] * x[i + 1]
                    + self.w_rm[i] * x[i - nz]
                    + self.w_rp[i] * x[i + nz]
                    + self.w_x[i] * cross;
            }
            y[row] = x[row] - 2.0 * x[row + 1] + x[row + 2];
            y[row + nz - 1] = x[row + nz - 1] - 2.0 * x[row + nz - 2] + x[row + nz - 3];
        }
        for iz in 0..nz {
            y[iz] = x[iz] - 2.0 * x[nz + iz] + x[2 * nz + iz];
            let top = (nr - 1) * nz + iz;
            y[top] = x[top] - 2.0 * x[(nr - 2) * nz + iz] + x[(nr - 3) * nz + iz];
        }
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.w_c
    }

    /// Interior stencil weights, used by the adjoint density solver.
    pub fn weights(&self, i: usize) -> [f64; 6] {
        [
            self.w_c[i],
            self.w_zm[i],
            self.w_zp[i],
            self.w_rm[i],
            self.w_rp[i],
            self.w_x[i],
        ]
    }
}

/// Curvature targets of the boundary rows for a given anchor field.
pub(crate) fn boundary_rhs(anchor: &ScalarField, rhs: &mut [f64]) {
    let g = &anchor.grid;
    let (nz, nr) = (g.nz, g.nr);
    let a = &anchor.values;
    for ir in 1..nr - 1 {
        let row = ir * nz;
        rhs[row] = a[row] - 2.0 * a[row + 1] + a[row + 2];
        rhs[row + nz - 1] = a[row + nz - 1] - 2.0 * a[row + nz - 2] + a[row + nz - 3];
    }
    for iz in 0..nz {
        rhs[iz] = a[iz] - 2.0 * a[nz + iz] + a[2 * nz + iz];
        let top = (nr - 1) * nz + iz;
        rhs[top] = a[top] - 2.0 * a[(nr - 2) * nz + iz] + a[(nr - 3) * nz + iz];
    }
}

/// Solves `(I - dt L) phi = phi_next - dt * source` with frozen coefficients,
/// the cross term inside the matrix, and frozen-curvature boundary rows
/// anchored at `anchor`. The linear system is solved to 1e-12 relative
/// residual; `warm_start` seeds the Krylov iteration.
pub fn implicit_backward_step(
    phi_next: &ScalarField,
    coeffs: &ModelSurfaces,
    disc: Discounting,
    anchor: &ScalarField,
    source: Option<&[f64]>,
    dt: f64,
    warm_start: Option<&ScalarField>,
) -> Result<(ScalarField, SolveStats)> {
    require_pde_grid(&phi_next.grid)?;
    phi_next.ensure_finite("implicit step terminal data")?;
    let g = phi_next.grid;
    let op = BackwardOperator::new(coeffs, disc, dt);

    let mut rhs = vec![0.0; g.n_nodes()];
    for ir in 1..g.nr - 1 {
        for iz in 1..g.nz - 1 {
            let i = g.idx(iz, ir);
            rhs[i] = phi_next.values[i] - dt * source.map_or(0.0, |s| s[i]);
        }
    }
    boundary_rhs(anchor, &mut rhs);

    let mut x = warm_start.unwrap_or(phi_next).values.clone();
    let apply = |v: &[f64], out: &mut [f64]| op.apply(v, out);
    let stats = bicgstab(
        &apply,
        op.diagonal(),
        &rhs,
        &mut x,
        1e-12,
        40 * (g.nz + g.nr).max(200),
    )?;

    let solved = ScalarField { grid: g, values: x };
    // re-impose the boundary relation exactly
    let out = apply_frozen_curvature_boundary(&solved, anchor)?;
    Ok((out, stats))
}
