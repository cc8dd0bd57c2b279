//! Uniform tensor grid over (log-price z, rescaled rate r), finite-difference
//! stencils, and the frozen-curvature boundary fill used by all solvers.
//!
//! Node layout is row-major with z fastest: `node = ir * nz + iz`. Every module
//! in the crate shares this convention.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Uniform 2D space-time lattice.
///
/// The second axis is the rescaled short rate `r_scaled = R * r` for the hybrid
/// variants, or the instantaneous variance `v` for the LSV variant; the grid
/// itself is agnostic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub z_min: f64,
    pub z_max: f64,
    pub r_min: f64,
    pub r_max: f64,
    pub nz: usize,
    pub nr: usize,
    /// Time step in years (one day by default).
    pub dt: f64,
    /// Number of steps from 0 to the horizon.
    pub n_steps: usize,
}

impl Grid {
    pub fn new(
        z_min: f64,
        z_max: f64,
        r_min: f64,
        r_max: f64,
        nz: usize,
        nr: usize,
        dt: f64,
        n_steps: usize,
    ) -> Result<Self> {
        let g = Grid {
            z_min,
            z_max,
            r_min,
            r_max,
            nz,
            nr,
            dt,
            n_steps,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.nz < 3 || self.nr < 3 {
            return Err(Error::invalid(format!(
                "grid needs at least 3 nodes per axis, got {}x{}",
                self.nz, self.nr
            )));
        }
        if !(self.z_max > self.z_min) || !(self.r_max > self.r_min) {
            return Err(Error::invalid("grid bounds must satisfy max > min"));
        }
        if !(self.dt > 0.0) || self.n_steps == 0 {
            return Err(Error::invalid("grid needs dt > 0 and n_steps >= 1"));
        }
        for v in [self.z_min, self.z_max, self.r_min, self.r_max, self.dt] {
            if !v.is_finite() {
                return Err(Error::invalid("grid bounds must be finite"));
            }
        }
        Ok(())
    }

    #[inline]
    pub fn hz(&self) -> f64 {
        (self.z_max - self.z_min) / (self.nz - 1) as f64
    }

    #[inline]
    pub fn hr(&self) -> f64 {
        (self.r_max - self.r_min) / (self.nr - 1) as f64
    }

    #[inline]
    pub fn n_nodes(&self) -> usize {
        self.nz * self.nr
    }

    #[inline]
    pub fn idx(&self, iz: usize, ir: usize) -> usize {
        ir * self.nz + iz
    }

    #[inline]
    pub fn z(&self, iz: usize) -> f64 {
        self.z_min + iz as f64 * self.hz()
    }

    #[inline]
    pub fn r(&self, ir: usize) -> f64 {
        self.r_min + ir as f64 * self.hr()
    }

    /// Horizon in years.
    #[inline]
    pub fn horizon(&self) -> f64 {
        self.dt * self.n_steps as f64
    }

    pub fn same_layout(&self, other: &Grid) -> bool {
        self.nz == other.nz
            && self.nr == other.nr
            && (self.z_min - other.z_min).abs() < 1e-14
            && (self.z_max - other.z_max).abs() < 1e-14
            && (self.r_min - other.r_min).abs() < 1e-14
            && (self.r_max - other.r_max).abs() < 1e-14
    }

    /// Bilinear interpolation weights for a point, clamped to the domain.
    /// Returns the four node indices and weights (weights sum to 1).
    pub fn bilinear(&self, z: f64, r: f64) -> ([usize; 4], [f64; 4]) {
        let hz = self.hz();
        let hr = self.hr();
        let fz = ((z - self.z_min) / hz).clamp(0.0, (self.nz - 1) as f64);
        let fr = ((r - self.r_min) / hr).clamp(0.0, (self.nr - 1) as f64);
        let iz = (fz.floor() as usize).min(self.nz - 2);
        let ir = (fr.floor() as usize).min(self.nr - 2);
        let wz = fz - iz as f64;
        let wr = fr - ir as f64;
        (
            [
                self.idx(iz, ir),
                self.idx(iz + 1, ir),
                self.idx(iz, ir + 1),
                self.idx(iz + 1, ir + 1),
            ],
            [
                (1.0 - wz) * (1.0 - wr),
                wz * (1.0 - wr),
                (1.0 - wz) * wr,
                wz * wr,
            ],
        )
    }
}

/// Values of a scalar quantity on every node of a [`Grid`] at one time slice.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub grid: Grid,
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: &Grid) -> Self {
        ScalarField {
            grid: *grid,
            values: vec![0.0; grid.n_nodes()],
        }
    }

    pub fn constant(grid: &Grid, c: f64) -> Self {
        ScalarField {
            grid: *grid,
            values: vec![c; grid.n_nodes()],
        }
    }

    pub fn from_fn(grid: &Grid, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.n_nodes());
        for ir in 0..grid.nr {
            for iz in 0..grid.nz {
                values.push(f(grid.z(iz), grid.r(ir)));
            }
        }
        ScalarField {
            grid: *grid,
            values,
        }
    }

    #[inline]
    pub fn at(&self, iz: usize, ir: usize) -> f64 {
        self.values[self.grid.idx(iz, ir)]
    }

    pub fn interpolate(&self, z: f64, r: f64) -> f64 {
        let (idx, w) = self.grid.bilinear(z, r);
        idx.iter().zip(w.iter()).map(|(&i, &wi)| self.values[i] * wi).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Rejects non-finite values, reporting the first offending node.
    pub fn ensure_finite(&self, context: &'static str) -> Result<()> {
        if let Some(node) = self.values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { node, context });
        }
        Ok(())
    }

    fn check_layout(&self, other: &ScalarField, what: &str) -> Result<()> {
        if !self.grid.same_layout(&other.grid) {
            return Err(Error::GridMismatch(what.to_string()));
        }
        Ok(())
    }
}

/// First derivatives of a field. Interior nodes use second-order central
/// differences, boundary nodes the second-order one-sided 3-point stencil.
pub fn fd_gradient(field: &ScalarField) -> Result<(ScalarField, ScalarField)> {
    field.ensure_finite("fd_gradient input")?;
    let g = &field.grid;
    let (nz, nr) = (g.nz, g.nr);
    let (hz, hr) = (g.hz(), g.hr());
    let mut dz = ScalarField::zeros(g);
    let mut dr = ScalarField::zeros(g);
    let f = &field.values;

    for ir in 0..nr {
        let row = ir * nz;
        dz.values[row] = (-3.0 * f[row] + 4.0 * f[row + 1] - f[row + 2]) / (2.0 * hz);
        for iz in 1..nz - 1 {
            dz.values[row + iz] = (f[row + iz + 1] - f[row + iz - 1]) / (2.0 * hz);
        }
        dz.values[row + nz - 1] =
            (3.0 * f[row + nz - 1] - 4.0 * f[row + nz - 2] + f[row + nz - 3]) / (2.0 * hz);
    }
    for iz in 0..nz {
        dr.values[iz] = (-3.0 * f[iz] + 4.0 * f[nz + iz] - f[2 * nz + iz]) / (2.0 * hr);
        for ir in 1..nr - 1 {
            dr.values[ir * nz + iz] = (f[(ir + 1) * nz + iz] - f[(ir - 1) * nz + iz]) / (2.0 * hr);
        }
        let last = (nr - 1) * nz + iz;
        dr.values[last] =
            (3.0 * f[last] - 4.0 * f[(nr - 2) * nz + iz] + f[(nr - 3) * nz + iz]) / (2.0 * hr);
    }
    Ok((dz, dr))
}

/// Second derivatives (dzz, drr, dzr).
///
/// Interior nodes use the 3-point second difference and the 4-point cross
/// stencil. Boundary second derivatives reuse the 3-point stencil anchored at
/// the adjacent interior node, which is the same convention the
/// frozen-curvature boundary fill imposes; the cross derivative is the
/// composition of the two one-sided/central gradient operators.
pub fn fd_hessian(field: &ScalarField) -> Result<(ScalarField, ScalarField, ScalarField)> {
    field.ensure_finite("fd_hessian input")?;
    let g = &field.grid;
    let (nz, nr) = (g.nz, g.nr);
    let (hz, hr) = (g.hz(), g.hr());
    let (hz2, hr2) = (hz * hz, hr * hr);
    let mut dzz = ScalarField::zeros(g);
    let mut drr = ScalarField::zeros(g);
    let f = &field.values;

    for ir in 0..nr {
        let row = ir * nz;
        for iz in 1..nz - 1 {
            dzz.values[row + iz] = (f[row + iz + 1] - 2.0 * f[row + iz] + f[row + iz - 1]) / hz2;
        }
        dzz.values[row] = dzz.values[row + 1];
        dzz.values[row + nz - 1] = dzz.values[row + nz - 2];
    }
    for iz in 0..nz {
        for ir in 1..nr - 1 {
            drr.values[ir * nz + iz] =
                (f[(ir + 1) * nz + iz] - 2.0 * f[ir * nz + iz] + f[(ir - 1) * nz + iz]) / hr2;
        }
        drr.values[iz] = drr.values[nz + iz];
        drr.values[(nr - 1) * nz + iz] = drr.values[(nr - 2) * nz + iz];
    }

    let (dz, _) = fd_gradient(field)?;
    let (_, dzr) = fd_gradient(&dz)?;
    Ok((dzz, drr, dzr))
}

/// Fills the boundary nodes of `field` so that the discrete second derivative
/// normal to the boundary (the 3-point stencil through the boundary node and
/// its two inward neighbours) equals that of `anchor`. Interior untouched.
///
/// z-edges are filled for interior r-rows first, then r-edges for every
/// column, so corners take their curvature in the r direction. The operation
/// is idempotent for a fixed anchor.
pub fn apply_frozen_curvature_boundary(
    field: &ScalarField,
    anchor: &ScalarField,
) -> Result<ScalarField> {
    field.check_layout(anchor, "frozen-curvature field vs anchor")?;
    let g = &field.grid;
    let (nz, nr) = (g.nz, g.nr);
    let mut out = field.clone();
    let a = &anchor.values;

    // curvature of the anchor in value units: a0 - 2 a1 + a2
    for ir in 1..nr - 1 {
        let row = ir * nz;
        let c_lo = a[row] - 2.0 * a[row + 1] + a[row + 2];
        out.values[row] = c_lo + 2.0 * out.values[row + 1] - out.values[row + 2];
        let c_hi = a[row + nz - 1] - 2.0 * a[row + nz - 2] + a[row + nz - 3];
        out.values[row + nz - 1] = c_hi + 2.0 * out.values[row + nz - 2] - out.values[row + nz - 3];
    }
    for iz in 0..nz {
        let c_lo = a[iz] - 2.0 * a[nz + iz] + a[2 * nz + iz];
        out.values[iz] = c_lo + 2.0 * out.values[nz + iz] - out.values[2 * nz + iz];
        let top = (nr - 1) * nz + iz;
        let c_hi = a[top] - 2.0 * a[(nr - 2) * nz + iz] + a[(nr - 3) * nz + iz];
        out.values[top] = c_hi + 2.0 * out.values[(nr - 2) * nz + iz] - out.values[(nr - 3) * nz + iz];
    }
    Ok(out)
}
