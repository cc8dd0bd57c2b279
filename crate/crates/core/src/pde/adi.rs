//! Douglas-type ADI pricing sweeps: implicit one-dimensional solves in each
//! direction, the cross-derivative treated explicitly with one corrector
//! pass. Used to generate model prices from frozen characteristics.

use super::{require_pde_grid, solve_tridiagonal, Discounting};
use crate::error::{Error, Result};
use crate::grid::{Grid, ScalarField};
use crate::instruments::{Instrument, QuoteSet};
use crate::models::{ModelSurfaces, SurfacePath};
use rayon::prelude::*;

/// Where the model is evaluated and how it discounts.
#[derive(Debug, Clone, Copy)]
pub struct PricingSetup {
    /// Initial state (log-spot, second coordinate in grid units).
    pub x0z: f64,
    pub x0r: f64,
    pub rate_scale: f64,
    pub disc: Discounting,
}

impl PricingSetup {
    pub fn from_quotes(quotes: &QuoteSet) -> Self {
        PricingSetup {
            x0z: quotes.s0.ln(),
            x0r: quotes.r0 * quotes.rate_scale,
            rate_scale: quotes.rate_scale,
            disc: Discounting::ScaledRate {
                scale: quotes.rate_scale,
            },
        }
    }

    /// LSV setting: zero rates, second coordinate is the variance state.
    pub fn lsv(s0: f64, v0: f64) -> Self {
        PricingSetup {
            x0z: s0.ln(),
            x0r: v0,
            rate_scale: 1.0,
            disc: Discounting::None,
        }
    }
}

/// Snap an instrument maturity to the time lattice.
pub fn maturity_step(grid: &Grid, instr: &Instrument) -> Result<usize> {
    let tau = instr.tau();
    let k = (tau / grid.dt).round();
    if (k * grid.dt - tau).abs() > 1e-9 * tau.max(1.0) {
        return Err(Error::invalid(format!(
            "maturity {} days is off the day lattice (dt = {} years)",
            instr.maturity_days, grid.dt
        )));
    }
    let k = k as usize;
    if k == 0 || k > grid.n_steps {
        return Err(Error::invalid(format!(
            "maturity step {k} outside the horizon (n_steps = {})",
            grid.n_steps
        )));
    }
    Ok(k)
}

fn fill_boundary(vals: &mut [f64], anchor: &ScalarField) {
    let g = &anchor.grid;
    let (nz, nr) = (g.nz, g.nr);
    let a = &anchor.values;
    for ir in 1..nr - 1 {
        let row = ir * nz;
        let c_lo = a[row] - 2.0 * a[row + 1] + a[row + 2];
        vals[row] = c_lo + 2.0 * vals[row + 1] - vals[row + 2];
        let c_hi = a[row + nz - 1] - 2.0 * a[row + nz - 2] + a[row + nz - 3];
        vals[row + nz - 1] = c_hi + 2.0 * vals[row + nz - 2] - vals[row + nz - 3];
    }
    for iz in 0..nz {
        let c_lo = a[iz] - 2.0 * a[nz + iz] + a[2 * nz + iz];
        vals[iz] = c_lo + 2.0 * vals[nz + iz] - vals[2 * nz + iz];
        let top = (nr - 1) * nz + iz;
        let c_hi = a[top] - 2.0 * a[(nr - 2) * nz + iz] + a[(nr - 3) * nz + iz];
        vals[top] = c_hi + 2.0 * vals[(nr - 2) * nz + iz] - vals[(nr - 3) * nz + iz];
    }
}

struct DirectionalOps {
    nz: usize,
    nr: usize,
    hz: f64,
    hr: f64,
    // per-node tridiagonal weights of (I - dt Lz) and (I - dt Lr)
    z_lo: Vec<f64>,
    z_d: Vec<f64>,
    z_up: Vec<f64>,
    r_lo: Vec<f64>,
    r_d: Vec<f64>,
    r_up: Vec<f64>,
    cross: Vec<f64>, // beta12 coefficient for the explicit mixed term
    dt: f64,
}

impl DirectionalOps {
    fn new(coeffs: &ModelSurfaces, disc: Discounting, dt: f64) -> Self {
        let g = &coeffs.grid;
        let (nz, nr) = (g.nz, g.nr);
        let (hz, hr) = (g.hz(), g.hr());
        let n = g.n_nodes();
        let mut ops = DirectionalOps {
            nz,
            nr,
            hz,
            hr,
            z_lo: vec![0.0; n],
            z_d: vec![1.0; n],
            z_up: vec![0.0; n],
            r_lo: vec![0.0; n],
            r_d: vec![1.0; n],
            r_up: vec![0.0; n],
            cross: vec![0.0; n],
            dt,
        };
        for ir in 1..nr - 1 {
            let rate = disc.rate_at(g.r(ir));
            for iz in 1..nz - 1 {
                let i = g.idx(iz, ir);
                let (a1, a2) = (coeffs.alpha1[i], coeffs.alpha2[i]);
                let (b11, b12, b22) = (coeffs.beta11[i], coeffs.beta12[i], coeffs.beta22[i]);
                // half the discounting in each direction
                ops.z_lo[i] = -dt * (-a1 / (2.0 * hz) + b11 / (2.0 * hz * hz));
                ops.z_d[i] = 1.0 + dt * (b11 / (hz * hz) + 0.5 * rate);
                ops.z_up[i] = -dt * (a1 / (2.0 * hz) + b11 / (2.0 * hz * hz));
                ops.r_lo[i] = -dt * (-a2 / (2.0 * hr) + b22 / (2.0 * hr * hr));
                ops.r_d[i] = 1.0 + dt * (b22 / (hr * hr) + 0.5 * rate);
                ops.r_up[i] = -dt * (a2 / (2.0 * hr) + b22 / (2.0 * hr * hr));
                ops.cross[i] = b12;
            }
        }
        ops
    }

    /// Lz psi at an interior node (drift+diffusion in z, minus half the rate).
    #[inline]
    fn lz_at(&self, psi: &[f64], i: usize) -> f64 {
        -(self.z_lo[i] * psi[i - 1] + (self.z_d[i] - 1.0) * psi[i] + self.z_up[i] * psi[i + 1])
            / self.dt
    }

    #[inline]
    fn lr_at(&self, psi: &[f64], i: usize) -> f64 {
        let nz = self.nz;
        -(self.r_lo[i] * psi[i - nz] + (self.r_d[i] - 1.0) * psi[i] + self.r_up[i] * psi[i + nz])
            / self.dt
    }

    #[inline]
    fn cross_at(&self, psi: &[f64], i: usize) -> f64 {
        let nz = self.nz;
        self.cross[i] * (psi[i + nz + 1] - psi[i + nz - 1] - psi[i - nz + 1] + psi[i - nz - 1])
            / (4.0 * self.hz * self.hr)
    }

    /// Two implicit directional sweeps from a predictor, with line-end
    /// unknowns eliminated through the frozen-curvature constraints.
    fn sweeps(
        &self,
        predictor: &[f64],
        lz_psi: &[f64],
        lr_psi: &[f64],
        anchor: &ScalarField,
    ) -> Result<Vec<f64>> {
        let (nz, nr) = (self.nz, self.nr);
        let dt = self.dt;
        let a = &anchor.values;
        let mut y1 = vec![0.0; nz * nr];
        let mut lo = Vec::new();
        let mut d = Vec::new();
        let mut up = Vec::new();
        let mut rhs = Vec::new();
        let mut scratch = Vec::new();
        let mut sol = Vec::new();

        // z-direction: one tridiagonal line per interior r-row
        for ir in 1..nr - 1 {
            let row = ir * nz;
            let m = nz - 2;
            lo.clear();
            d.clear();
            up.clear();
            rhs.clear();
            for k in 0..m {
                let i = row + 1 + k;
                lo.push(self.z_lo[i]);
                d.push(self.z_d[i]);
                up.push(self.z_up[i]);
                rhs.push(predictor[i] - dt * lz_psi[i]);
            }
            let c_lo = a[row] - 2.0 * a[row + 1] + a[row + 2];
            let c_hi = a[row + nz - 1] - 2.0 * a[row + nz - 2] + a[row + nz - 3];
            // x_0 = c_lo + 2 x_1 - x_2 and mirrored at the top end
            d[0] += 2.0 * lo[0];
            up[0] -= lo[0];
            rhs[0] -= lo[0] * c_lo;
            d[m - 1] += 2.0 * up[m - 1];
            lo[m - 1] -= up[m - 1];
            rhs[m - 1] -= up[m - 1] * c_hi;
            lo[0] = 0.0;
            up[m - 1] = 0.0;
            solve_tridiagonal(&lo, &d, &up, &rhs, &mut scratch, &mut sol)?;
            y1[row + 1..row + nz - 1].copy_from_slice(&sol);
        }

        // r-direction: one tridiagonal line per interior z-column
        let mut y2 = vec![0.0; nz * nr];
        for iz in 1..nz - 1 {
            let m = nr - 2;
            lo.clear();
            d.clear();
            up.clear();
            rhs.clear();
            for k in 0..m {
                let i = (1 + k) * nz + iz;
                lo.push(self.r_lo[i]);
                d.push(self.r_d[i]);
                up.push(self.r_up[i]);
                rhs.push(y1[i] - dt * lr_psi[i]);
            }
            let c_lo = a[iz] - 2.0 * a[nz + iz] + a[2 * nz + iz];
            let top = (nr - 1) * nz + iz;
            let c_hi = a[top] - 2.0 * a[(nr - 2) * nz + iz] + a[(nr - 3) * nz + iz];
            d[0] += 2.0 * lo[0];
            up[0] -= lo[0];
            rhs[0] -= lo[0] * c_lo;
            d[m - 1] += 2.0 * up[m - 1];
            lo[m - 1] -= up[m - 1];
            rhs[m - 1] -= up[m - 1] * c_hi;
            lo[0] = 0.0;
            up[m - 1] = 0.0;
            solve_tridiagonal(&lo, &d, &up, &rhs, &mut scratch, &mut sol)?;
            for k in 0..m {
                y2[(1 + k) * nz + iz] = sol[k];
            }
        }
        Ok(y2)
    }
}

/// One backward ADI step from the slice values `psi` using coefficients
/// frozen on the step.
pub fn adi_backward_step(
    psi: &ScalarField,
    coeffs: &ModelSurfaces,
    disc: Discounting,
    anchor: &ScalarField,
    dt: f64,
) -> Result<ScalarField> {
    require_pde_grid(&psi.grid)?;
    let g = psi.grid;
    let (nz, nr) = (g.nz, g.nr);
    let ops = DirectionalOps::new(coeffs, disc, dt);
    let p = &psi.values;

    let n = g.n_nodes();
    let mut lz = vec![0.0; n];
    let mut lr = vec![0.0; n];
    let mut xp = vec![0.0; n];
    for ir in 1..nr - 1 {
        for iz in 1..nz - 1 {
            let i = g.idx(iz, ir);
            lz[i] = ops.lz_at(p, i);
            lr[i] = ops.lr_at(p, i);
            xp[i] = ops.cross_at(p, i);
        }
    }

    // explicit predictor with the full operator
    let mut y0 = p.clone();
    for ir in 1..nr - 1 {
        for iz in 1..nz - 1 {
            let i = g.idx(iz, ir);
            y0[i] = p[i] + dt * (lz[i] + lr[i] + xp[i]);
        }
    }
    fill_boundary(&mut y0, anchor);

    let mut y2 = ops.sweeps(&y0, &lz, &lr, anchor)?;
    fill_boundary(&mut y2, anchor);

    // corrector: refresh the mixed derivative at the new iterate and resweep
    let mut y0c = p.clone();
    for ir in 1..nr - 1 {
        for iz in 1..nz - 1 {
            let i = g.idx(iz, ir);
            y0c[i] = p[i] + dt * (lz[i] + lr[i] + ops.cross_at(&y2, i));
        }
    }
    fill_boundary(&mut y0c, anchor);
    let mut out = ops.sweeps(&y0c, &lz, &lr, anchor)?;
    fill_boundary(&mut out, anchor);

    Ok(ScalarField {
        grid: g,
        values: out,
    })
}

/// Rolls a terminal payoff field back to time zero along a coefficient path.
/// The payoff slice anchors the frozen-curvature boundary all the way down.
pub fn adi_backward_path(
    path: &SurfacePath,
    disc: Discounting,
    payoff: ScalarField,
    maturity_step: usize,
) -> Result<ScalarField> {
    let anchor = payoff.clone();
    let mut psi = payoff;
    for k in (0..maturity_step).rev() {
        psi = adi_backward_step(&psi, path.at(k), disc, &anchor, psi.grid.dt)?;
    }
    Ok(psi)
}

/// Prices one instrument off frozen characteristics; returns the value field
/// at time zero and its bilinear interpolation at the initial state. With
/// `scaled`, payoff and price are divided by the instrument's vega weight.
pub fn adi_price(
    path: &SurfacePath,
    setup: &PricingSetup,
    instr: &Instrument,
    scaled: bool,
) -> Result<(ScalarField, f64)> {
    let grid = path.grid;
    let k = maturity_step(&grid, instr)?;
    let w = if scaled {
        instr.vega_weight.unwrap_or(1.0)
    } else {
        1.0
    };
    let payoff = ScalarField::from_fn(&grid, |z, r| {
        instr.payoff(z, r, setup.rate_scale, &grid) / w
    });
    let field = adi_backward_path(path, setup.disc, payoff, k)?;
    let price = field.interpolate(setup.x0z, setup.x0r);
    Ok((field, price))
}

/// Prices every instrument concurrently; the output order matches the input.
pub fn price_all(
    path: &SurfacePath,
    setup: &PricingSetup,
    instruments: &[Instrument],
    scaled: bool,
) -> Result<Vec<f64>> {
    instruments
        .par_iter()
        .map(|instr| adi_price(path, setup, instr, scaled).map(|(_, p)| p))
        .collect()
}

/// Convenience wrapper for the rate variants, pricing against the quote
/// context's initial state.
pub fn price_all_for_quotes(
    path: &SurfacePath,
    quotes: &QuoteSet,
    scaled: bool,
) -> Result<Vec<f64>> {
    price_all(path, &PricingSetup::from_quotes(quotes), &quotes.instruments, scaled)
}
