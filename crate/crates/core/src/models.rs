//! Parametric reference families and their drift/covariance surfaces on the
//! grid, plus least-squares parametric calibration.
//!
//! All rate-related parameters are stored against the rescaled short rate
//! `r_scaled = rate_scale * r` (the convention the whole engine computes in);
//! `from_natural` constructors convert from absolute-rate units. The log-stock
//! drift and all discounting still use the actual rate `r_scaled / rate_scale`.

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::instruments::QuoteSet;
use crate::lbfgs::{self, LbfgsOptions};
use serde::{Deserialize, Serialize};

/// CEV local volatility for the stock with a Vasicek short rate,
/// time-homogeneous.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CevVasicekParams {
    /// Volatility scale of the CEV local volatility `sigma * S^(gamma-1)`.
    pub sigma: f64,
    /// CEV exponent.
    pub gamma: f64,
    /// Instantaneous correlation between log-stock and rate.
    pub rho: f64,
    /// Volatility of the rescaled rate.
    pub rate_vol: f64,
    /// Mean-reversion speed.
    pub mean_reversion: f64,
    /// Reversion level of the rescaled rate.
    pub mean_level: f64,
}

impl CevVasicekParams {
    /// Builds from absolute-rate-unit parameters, applying the rate scale.
    pub fn from_natural(
        sigma: f64,
        gamma: f64,
        rho: f64,
        rate_vol_natural: f64,
        mean_reversion: f64,
        mean_level_natural: f64,
        rate_scale: f64,
    ) -> Self {
        CevVasicekParams {
            sigma,
            gamma,
            rho,
            rate_vol: rate_scale * rate_vol_natural,
            mean_reversion,
            mean_level: rate_scale * mean_level_natural,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.rate_vol > 0.0 && self.mean_reversion > 0.0 && self.mean_level > 0.0)
        {
            return Err(Error::invalid("cev-vasicek scales must be positive"));
        }
        if !(self.gamma >= 0.0) || self.rho.abs() > 1.0 {
            return Err(Error::invalid("cev-vasicek needs gamma >= 0 and |rho| <= 1"));
        }
        Ok(())
    }

    pub fn to_vec(&self) -> Vec<f64> {
        vec![
            self.sigma,
            self.gamma,
            self.rho,
            self.rate_vol,
            self.mean_reversion,
            self.mean_level,
        ]
    }

    pub fn from_vec(v: &[f64]) -> Self {
        CevVasicekParams {
            sigma: v[0],
            gamma: v[1],
            rho: v[2],
            rate_vol: v[3],
            mean_reversion: v[4],
            mean_level: v[5],
        }
    }
}

/// CEV local volatility with a Hull-White short rate whose reversion level
/// `b(t)` fits a flat initial curve at the starting rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HullWhiteCevParams {
    pub sigma: f64,
    pub gamma: f64,
    pub rho: f64,
    /// Volatility of the rescaled rate.
    pub rate_vol: f64,
    pub mean_reversion: f64,
    /// Initial rescaled rate the term structure is fitted to.
    pub r0_scaled: f64,
}

impl HullWhiteCevParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.rate_vol > 0.0 && self.mean_reversion > 0.0) {
            return Err(Error::invalid("hull-white-cev scales must be positive"));
        }
        if !(self.gamma >= 0.0) || self.rho.abs() > 1.0 {
            return Err(Error::invalid("hull-white-cev needs gamma >= 0 and |rho| <= 1"));
        }
        Ok(())
    }

    /// Time-dependent reversion level (rescaled-rate units):
    /// `b(t) = a * r0 + rate_vol^2 / (2 a) * (1 - exp(-2 a t))`.
    pub fn b(&self, t: f64) -> f64 {
        let a = self.mean_reversion;
        a * self.r0_scaled + self.rate_vol * self.rate_vol / (2.0 * a) * (1.0 - (-2.0 * a * t).exp())
    }
}

/// Heston reference for the LSV variant; state is (log-stock, variance).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HestonParams {
    pub kappa: f64,
    pub theta: f64,
    pub xi: f64,
    pub rho: f64,
}

impl HestonParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.kappa > 0.0 && self.theta > 0.0 && self.xi > 0.0) {
            return Err(Error::invalid("heston parameters must be positive"));
        }
        if self.rho.abs() > 1.0 {
            return Err(Error::invalid("heston needs |rho| <= 1"));
        }
        Ok(())
    }
}

/// The five model characteristics on one time slice: drifts (alpha1, alpha2)
/// and covariance entries (beta11, beta12, beta22), all in grid units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSurfaces {
    pub grid: Grid,
    pub alpha1: Vec<f64>,
    pub alpha2: Vec<f64>,
    pub beta11: Vec<f64>,
    pub beta12: Vec<f64>,
    pub beta22: Vec<f64>,
}

impl ModelSurfaces {
    pub fn zeros(grid: &Grid) -> Self {
        let n = grid.n_nodes();
        ModelSurfaces {
            grid: *grid,
            alpha1: vec![0.0; n],
            alpha2: vec![0.0; n],
            beta11: vec![0.0; n],
            beta12: vec![0.0; n],
            beta22: vec![0.0; n],
        }
    }

    /// Positive-semidefiniteness node-wise, with a small slack for rounding.
    pub fn validate_psd(&self) -> Result<()> {
        for i in 0..self.grid.n_nodes() {
            let (b11, b12, b22) = (self.beta11[i], self.beta12[i], self.beta22[i]);
            if b11 < -1e-14 || b22 < -1e-14 {
                return Err(Error::invalid(format!(
                    "negative variance at node {i}: beta11={b11}, beta22={b22}"
                )));
            }
            if b12 * b12 > b11 * b22 * (1.0 + 1e-10) + 1e-14 {
                return Err(Error::invalid(format!(
                    "covariance not PSD at node {i}: beta12^2={} > beta11*beta22={}",
                    b12 * b12,
                    b11 * b22
                )));
            }
        }
        Ok(())
    }

    /// Bilinearly interpolated characteristics at a point.
    pub fn interpolate(&self, z: f64, r: f64) -> [f64; 5] {
        let (idx, w) = self.grid.bilinear(z, r);
        let mut out = [0.0; 5];
        for (&i, &wi) in idx.iter().zip(w.iter()) {
            out[0] += wi * self.alpha1[i];
            out[1] += wi * self.alpha2[i];
            out[2] += wi * self.beta11[i];
            out[3] += wi * self.beta12[i];
            out[4] += wi * self.beta22[i];
        }
        out
    }
}

/// Characteristics at every time slice, `slices[k]` holding those frozen on
/// the step from `t_k` to `t_{k+1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfacePath {
    pub grid: Grid,
    pub slices: Vec<ModelSurfaces>,
}

impl SurfacePath {
    pub fn constant(surface: ModelSurfaces) -> Self {
        let grid = surface.grid;
        SurfacePath {
            grid,
            slices: vec![surface; grid.n_steps + 1],
        }
    }

    pub fn at(&self, step: usize) -> &ModelSurfaces {
        &self.slices[step.min(self.slices.len() - 1)]
    }

    pub fn validate_psd(&self) -> Result<()> {
        for s in &self.slices {
            s.validate_psd()?;
        }
        Ok(())
    }
}

/// A reference model: a parametric family or a set of non-parametric surfaces
/// (the latter produced by reference-model iteration).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum ReferenceModel {
    CevVasicek(CevVasicekParams),
    HullWhiteCev(HullWhiteCevParams),
    Heston(HestonParams),
    Surfaces(SurfacePath),
}

impl ReferenceModel {
    /// Materialises the reference characteristics on a grid for every slice.
    pub fn materialise(&self, grid: &Grid, rate_scale: f64) -> Result<SurfacePath> {
        match self {
            ReferenceModel::CevVasicek(p) => {
                p.validate()?;
                Ok(SurfacePath::constant(characteristics_cev_vasicek(p, grid, rate_scale)))
            }
            ReferenceModel::HullWhiteCev(p) => {
                p.validate()?;
                let slices = (0..=grid.n_steps)
                    .map(|k| characteristics_hw_cev(p, k as f64 * grid.dt, grid, rate_scale))
                    .collect();
                Ok(SurfacePath {
                    grid: *grid,
                    slices,
                })
            }
            ReferenceModel::Heston(p) => {
                p.validate()?;
                Ok(SurfacePath::constant(characteristics_heston(p, grid)))
            }
            ReferenceModel::Surfaces(path) => {
                if !path.grid.same_layout(grid) {
                    return Err(Error::GridMismatch(
                        "non-parametric reference lives on a different grid".into(),
                    ));
                }
                path.validate_psd()?;
                Ok(path.clone())
            }
        }
    }

    /// True when the reference carries no stochastic discounting (LSV).
    pub fn is_lsv(&self) -> bool {
        matches!(self, ReferenceModel::Heston(_))
    }
}

/// CEV-Vasicek characteristics; time-homogeneous.
pub fn characteristics_cev_vasicek(
    p: &CevVasicekParams,
    grid: &Grid,
    rate_scale: f64,
) -> ModelSurfaces {
    let mut s = ModelSurfaces::zeros(grid);
    for ir in 0..grid.nr {
        let r_scaled = grid.r(ir);
        let rate = r_scaled / rate_scale;
        for iz in 0..grid.nz {
            let z = grid.z(iz);
            let i = grid.idx(iz, ir);
            let loc = p.sigma * ((p.gamma - 1.0) * z).exp();
            let b11 = loc * loc;
            s.beta11[i] = b11;
            s.beta22[i] = p.rate_vol * p.rate_vol;
            s.beta12[i] = p.rho * loc * p.rate_vol;
            s.alpha1[i] = rate - 0.5 * b11;
            s.alpha2[i] = p.mean_reversion * (p.mean_level - r_scaled);
        }
    }
    debug_assert!(s.validate_psd().is_ok());
    s
}

/// Hull-White-CEV characteristics at time `t`.
pub fn characteristics_hw_cev(
    p: &HullWhiteCevParams,
    t: f64,
    grid: &Grid,
    rate_scale: f64,
) -> ModelSurfaces {
    let mut s = ModelSurfaces::zeros(grid);
    let b_t = p.b(t);
    for ir in 0..grid.nr {
        let r_scaled = grid.r(ir);
        let rate = r_scaled / rate_scale;
        for iz in 0..grid.nz {
            let z = grid.z(iz);
            let i = grid.idx(iz, ir);
            let loc = p.sigma * ((p.gamma - 1.0) * z).exp();
            let b11 = loc * loc;
            s.beta11[i] = b11;
            s.beta22[i] = p.rate_vol * p.rate_vol;
            s.beta12[i] = p.rho * loc * p.rate_vol;
            s.alpha1[i] = rate - 0.5 * b11;
            s.alpha2[i] = b_t - p.mean_reversion * r_scaled;
        }
    }
    debug_assert!(s.validate_psd().is_ok());
    s
}

/// Heston characteristics over (z, v); the second axis is variance and there
/// is no discounting.
pub fn characteristics_heston(p: &HestonParams, grid: &Grid) -> ModelSurfaces {
    let mut s = ModelSurfaces::zeros(grid);
    for ir in 0..grid.nr {
        let v = grid.r(ir).max(0.0);
        for iz in 0..grid.nz {
            let i = grid.idx(iz, ir);
            s.beta11[i] = v;
            s.beta22[i] = p.xi * p.xi * v;
            s.beta12[i] = p.rho * p.xi * v;
            s.alpha1[i] = -0.5 * v;
            s.alpha2[i] = p.kappa * (p.theta - v);
        }
    }
    debug_assert!(s.validate_psd().is_ok());
    s
}

/// Diagnostics from the parametric least-squares fit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParametricFit {
    pub params: CevVasicekParams,
    pub objective: f64,
    pub grad_inf_norm: f64,
    pub evaluations: usize,
    pub converged: bool,
}

/// Least-squares fit of the CEV-Vasicek family to a prepared quote set by
/// pricing through the PDE backend. `free` masks which of the six parameters
/// (sigma, gamma, rho, rate_vol, mean_reversion, mean_level) move.
///
/// Returns the best iterate found with a warning flag when the first-order
/// tolerance was not met within the evaluation budget; the objective never
/// increases between accepted iterates.
pub fn parametric_calibrate(
    init: &CevVasicekParams,
    quotes: &QuoteSet,
    grid: &Grid,
    free: &[bool; 6],
    grad_tol: f64,
    max_evals: usize,
) -> Result<ParametricFit> {
    init.validate()?;
    quotes.validate()?;
    let lower = [1e-6, 0.0, -1.0, 1e-8, 1e-6, 1e-8];
    let upper = [10.0, 3.0, 1.0, 10.0, 20.0, 50.0];
    let x0 = init.to_vec();

    let objective = |x: &[f64]| -> Result<f64> {
        let p = CevVasicekParams::from_vec(x);
        let surfaces = SurfacePath::constant(characteristics_cev_vasicek(&p, grid, quotes.rate_scale));
        let prices = crate::pde::adi::price_all_for_quotes(&surfaces, quotes, false)?;
        let n = quotes.len() as f64;
        Ok(prices
            .iter()
            .zip(&quotes.instruments)
            .map(|(p, i)| {
                let d = p - i.market_price;
                d * d
            })
            .sum::<f64>()
            / n)
    };

    // central-difference gradient with a relative step per parameter
    let grad = |x: &[f64]| -> Result<Vec<f64>> {
        let mut g = vec![0.0; 6];
        for k in 0..6 {
            if !free[k] {
                continue;
            }
            let h = 1e-4 * x[k].abs().max(1e-3);
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[k] = (x[k] + h).min(upper[k]);
            xm[k] = (x[k] - h).max(lower[k]);
            let denom = xp[k] - xm[k];
            g[k] = (objective(&xp)? - objective(&xm)?) / denom;
        }
        Ok(g)
    };

    let opts = LbfgsOptions {
        memory: 10,
        grad_tol_inf: grad_tol,
        max_evals,
        ..LbfgsOptions::default()
    };
    let mut eval_count = 0usize;
    let outcome = lbfgs::minimize(
        |x| {
            eval_count += 1;
            let f = objective(x)?;
            let g = grad(x)?;
            Ok((f, g))
        },
        &x0,
        Some(&lower),
        Some(&upper),
        &opts,
    )?;

    Ok(ParametricFit {
        params: CevVasicekParams::from_vec(&outcome.x),
        objective: outcome.f,
        grad_inf_norm: outcome.grad_inf_norm,
        evaluations: eval_count,
        converged: outcome.converged,
    })
}
