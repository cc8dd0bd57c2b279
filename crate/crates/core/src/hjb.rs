//! Backward solve of the nonlinear dual HJB equation: jump source terms at
//! the option maturities, policy iteration per time slice, and the
//! frozen-curvature boundary anchored at the most recent maturity slice.

use crate::error::{Error, Result};
use crate::grid::{fd_gradient, fd_hessian, ScalarField};
use crate::instruments::{Instrument, QuoteSet};
use crate::models::{ModelSurfaces, SurfacePath};
use crate::optimisers::{optimal_for, Bounds, DualDerivatives, RefPoint, Variant};
use crate::pde::adi::maturity_step;
use crate::pde::backward::implicit_backward_step;
use crate::pde::Discounting;

/// Solver parameters for one HJB sweep.
#[derive(Debug, Clone, Copy)]
pub struct HjbConfig {
    pub variant: Variant,
    pub bounds: Bounds,
    pub seq_p: f64,
    /// Policy-iteration stop: sup-norm change between successive iterates.
    pub eps2: f64,
    pub max_policy_iters: usize,
    pub disc: Discounting,
    pub rate_scale: f64,
}

/// Backward solution: value function and optimal characteristics per slice,
/// with policy-iteration diagnostics.
#[derive(Debug, Clone)]
pub struct HjbSolution {
    /// phi at every slice, including the maturity jumps at their slices.
    pub phi: Vec<ScalarField>,
    /// Pre-jump phi at each maturity slice, keyed by step index.
    pub pre_jump: Vec<(usize, ScalarField)>,
    /// Optimal characteristics frozen on each step.
    pub surfaces: SurfacePath,
    /// Inner iterations per backward step (index = step).
    pub policy_iterations: Vec<usize>,
    /// Nodes where the cross-covariance candidate left the PSD band.
    pub strict_violations: u64,
    /// Inner sweeps whose sup-norm delta failed to shrink monotonically.
    pub contraction_violations: u64,
}

impl HjbSolution {
    pub fn value_at(&self, z: f64, r: f64) -> f64 {
        self.phi[0].interpolate(z, r)
    }
}

/// Adds the weighted jump `lambda * G / vega_weight` of one instrument to a
/// slice.
pub fn add_jump(
    phi: &ScalarField,
    lambda: f64,
    instr: &Instrument,
    rate_scale: f64,
) -> ScalarField {
    let g = phi.grid;
    let w = instr.vega_weight.unwrap_or(1.0);
    let mut out = phi.clone();
    for ir in 0..g.nr {
        for iz in 0..g.nz {
            let i = g.idx(iz, ir);
            out.values[i] += lambda * instr.payoff(g.z(iz), g.r(ir), rate_scale, &g) / w;
        }
    }
    out
}

/// One policy-iteration sweep: approximate the optimal characteristics from
/// the current iterate, then take one implicit step from the next slice with
/// those frozen coefficients and the cost at the optimum as source.
pub fn policy_iteration_step(
    phi_old: &ScalarField,
    phi_next: &ScalarField,
    reference: &ModelSurfaces,
    cfg: &HjbConfig,
    anchor: &ScalarField,
) -> Result<(ScalarField, ModelSurfaces, u64)> {
    phi_old.ensure_finite("policy iterate")?;
    let grid = phi_old.grid;
    let (dz, dr) = fd_gradient(phi_old)?;
    let (dzz, drr, dzr) = fd_hessian(phi_old)?;

    let mut optimal = ModelSurfaces::zeros(&grid);
    let mut cost = vec![0.0; grid.n_nodes()];
    let mut strict_violations = 0u64;
    for ir in 0..grid.nr {
        let rate = cfg.disc.rate_at(grid.r(ir));
        for iz in 0..grid.nz {
            let i = grid.idx(iz, ir);
            let d = DualDerivatives {
                a1: dz.values[i],
                a2: dr.values[i],
                b11: 0.5 * dzz.values[i],
                b12: 0.5 * dzr.values[i],
                b22: 0.5 * drr.values[i],
                rate,
            };
            let refp = RefPoint {
                alpha2: reference.alpha2[i],
                beta11: reference.beta11[i],
                beta12: reference.beta12[i],
                beta22: reference.beta22[i],
            };
            let p = optimal_for(cfg.variant, &d, &refp, &cfg.bounds, cfg.seq_p)?;
            optimal.alpha1[i] = p.alpha1;
            optimal.alpha2[i] = p.alpha2;
            optimal.beta11[i] = p.beta11;
            optimal.beta12[i] = p.beta12;
            optimal.beta22[i] = p.beta22;
            cost[i] = p.cost;
            if !p.strict_interior {
                strict_violations += 1;
            }
        }
    }

    let (phi_new, _) = implicit_backward_step(
        phi_next,
        &optimal,
        cfg.disc,
        anchor,
        Some(&cost),
        grid.dt,
        Some(phi_old),
    )?;
    Ok((phi_new, optimal, strict_violations))
}

/// Full backward sweep from the horizon to time zero for a fixed multiplier
/// vector. `quotes` must be prepared (weights assigned); `reference` holds
/// the reference characteristics per slice.
pub fn hjb_solve(
    lambda: &[f64],
    quotes: &QuoteSet,
    reference: &SurfacePath,
    cfg: &HjbConfig,
) -> Result<HjbSolution> {
    let grid = reference.grid;
    if lambda.len() != quotes.len() {
        return Err(Error::invalid(format!(
            "lambda has {} entries for {} instruments",
            lambda.len(),
            quotes.len()
        )));
    }
    if lambda.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("lambda must be finite"));
    }

    // group instruments by maturity step
    let mut jumps: Vec<Vec<usize>> = vec![Vec::new(); grid.n_steps + 1];
    for (i, instr) in quotes.instruments.iter().enumerate() {
        let k = maturity_step(&grid, instr)?;
        jumps[k].push(i);
    }

    let n = grid.n_steps;
    let mut phi_slices = vec![ScalarField::zeros(&grid); n + 1];
    let mut pre_jump = Vec::new();
    let mut surfaces = SurfacePath {
        grid,
        slices: vec![reference.at(n).clone(); n + 1],
    };
    let mut policy_iterations = vec![0usize; n];
    let mut strict_violations = 0u64;
    let mut contraction_violations = 0u64;

    // terminal condition phi(T, .) = 0, then any jumps maturing exactly there
    let mut current = ScalarField::zeros(&grid);
    if !jumps[n].is_empty() {
        pre_jump.push((n, current.clone()));
        for &i in &jumps[n] {
            current = add_jump(&current, lambda[i], &quotes.instruments[i], cfg.rate_scale);
        }
    }
    let mut anchor = current.clone();
    phi_slices[n] = current.clone();

    for k in (0..n).rev() {
        // initial guess: the value at the previous time step
        let mut phi_new = current.clone();
        let mut iters = 0usize;
        let mut last_delta = f64::INFINITY;
        let (converged_phi, coeffs) = loop {
            let phi_old = phi_new;
            let (stepped, optimal, strict) =
                policy_iteration_step(&phi_old, &current, reference.at(k), cfg, &anchor)?;
            iters += 1;
            let delta = stepped
                .values
                .iter()
                .zip(&phi_old.values)
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            if iters > 1 && delta > last_delta {
                contraction_violations += 1;
            }
            last_delta = delta;
            phi_new = stepped;
            if delta < cfg.eps2 {
                strict_violations += strict;
                break (phi_new, optimal);
            }
            if iters >= cfg.max_policy_iters {
                return Err(Error::PolicyIterationStalled {
                    slice: k,
                    max_iters: cfg.max_policy_iters,
                    delta,
                });
            }
        };
        surfaces.slices[k] = coeffs;
        policy_iterations[k] = iters;
        current = converged_phi;

        if !jumps[k].is_empty() {
            pre_jump.push((k, current.clone()));
            for &i in &jumps[k] {
                current = add_jump(&current, lambda[i], &quotes.instruments[i], cfg.rate_scale);
            }
            anchor = current.clone();
        }
        phi_slices[k] = current.clone();
    }

    Ok(HjbSolution {
        phi: phi_slices,
        pre_jump,
        surfaces,
        policy_iterations,
        strict_violations,
        contraction_violations,
    })
}

/// Day steps out to the longest quoted maturity.
pub fn horizon_steps(quotes: &QuoteSet) -> usize {
    quotes
        .instruments
        .iter()
        .map(|i| i.maturity_days.ceil() as usize)
        .max()
        .unwrap_or(1)
}
