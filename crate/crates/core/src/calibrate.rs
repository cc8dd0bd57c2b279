//! Outer optimisation over the price-constraint multipliers: dual objective
//! and gradient, L-BFGS ascent, and reference-model iteration with spatial
//! smoothing of the output characteristics.

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::hjb::{hjb_solve, HjbConfig, HjbSolution};
use crate::instruments::{prepare_quotes, Instrument, QuoteSet};
use crate::lbfgs::{self, LbfgsOptions};
use crate::models::{ModelSurfaces, ReferenceModel, SurfacePath};
use crate::optimisers::{Bounds, Variant, DEFAULT_SEQ_P};
use crate::pde::adi::{price_all, PricingSetup};
use crate::pde::Discounting;
use serde::{Deserialize, Serialize};
use std::time::Instant;

/// Everything the calibration loop needs besides the quotes and reference.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibrationConfig {
    pub variant: Variant,
    pub grid: Grid,
    pub bounds: Bounds,
    /// Constant rescaling of the short rate.
    pub rate_scale: f64,
    /// Outer stop: infinity norm of the dual gradient in vega-scaled units.
    pub eps1: f64,
    /// Inner stop of the policy iteration.
    pub eps2: f64,
    /// Barrier exponent of the sequential cost.
    pub seq_p: f64,
    /// Correlation shape parameter of the sequential variant:
    /// `beta12 = rho_ref * beta22` with implied instantaneous correlation
    /// `rho_ref * sqrt(beta22) / sqrt(beta11)`.
    pub rho_ref: Option<f64>,
    /// Function-evaluation budget per smoothing epoch.
    pub max_outer_evals: usize,
    /// Smoothing applications required before a converged run may return.
    pub min_smoothing_iterations: usize,
    /// Hard cap on optimisation epochs.
    pub max_epochs: usize,
    /// Gaussian kernel radius in grid cells.
    pub smoothing_bandwidth: f64,
    pub max_policy_iters: usize,
    /// Force unit vega weights (diagnostic runs).
    pub identity_weights: bool,
    /// Initial variance state for the LSV variant.
    pub v0: Option<f64>,
}

impl CalibrationConfig {
    pub fn defaults(variant: Variant, grid: Grid) -> Self {
        CalibrationConfig {
            variant,
            grid,
            bounds: Bounds {
                b11_lo: 0.01,
                b11_hi: 0.5,
                b22_lo: 2e-4,
                b22_hi: 1e-3,
            },
            rate_scale: 100.0,
            eps1: 1e-3,
            eps2: 1e-8,
            seq_p: DEFAULT_SEQ_P,
            rho_ref: None,
            max_outer_evals: 150,
            min_smoothing_iterations: 10,
            max_epochs: 20,
            smoothing_bandwidth: 2.0,
            max_policy_iters: 200,
            identity_weights: false,
            v0: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        self.bounds.validate()?;
        if !(self.eps1 > 0.0 && self.eps2 > 0.0) {
            return Err(Error::invalid("tolerances must be positive"));
        }
        if self.variant == Variant::Sequential && self.rho_ref.is_none() {
            return Err(Error::invalid(
                "sequential variant requires rho_ref in the configuration",
            ));
        }
        if self.variant == Variant::Lsv && self.v0.is_none() {
            return Err(Error::invalid("lsv variant requires v0 in the configuration"));
        }
        if self.max_epochs == 0 {
            return Err(Error::invalid("max_epochs must be at least 1"));
        }
        Ok(())
    }

    pub fn discounting(&self) -> Discounting {
        match self.variant {
            Variant::Lsv => Discounting::None,
            _ => Discounting::ScaledRate {
                scale: self.rate_scale,
            },
        }
    }

    pub fn pricing_setup(&self, quotes: &QuoteSet) -> PricingSetup {
        match self.variant {
            Variant::Lsv => PricingSetup::lsv(quotes.s0, self.v0.unwrap_or(0.0)),
            _ => PricingSetup::from_quotes(quotes),
        }
    }

    fn hjb_config(&self) -> HjbConfig {
        HjbConfig {
            variant: self.variant,
            bounds: self.bounds,
            seq_p: self.seq_p,
            eps2: self.eps2,
            max_policy_iters: self.max_policy_iters,
            disc: self.discounting(),
            rate_scale: match self.variant {
                Variant::Lsv => 1.0,
                _ => self.rate_scale,
            },
        }
    }
}

/// Per-instrument calibration report in natural price units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstrumentReport {
    pub kind: crate::instruments::OptionKind,
    pub maturity_days: f64,
    pub strike: f64,
    pub notional: f64,
    pub market_price: f64,
    pub market_iv: Option<f64>,
    pub model_price: f64,
    pub model_iv: Option<f64>,
    pub vega_weight: f64,
    /// Vega-scaled price mismatch, the gradient component at the optimum.
    pub scaled_error: f64,
}

impl InstrumentReport {
    /// Rebuilds the instrument this row reports on (weight included).
    pub fn instrument(&self) -> Instrument {
        Instrument {
            kind: self.kind,
            maturity_days: self.maturity_days,
            strike: self.strike,
            notional: self.notional,
            market_price: self.market_price,
            market_iv: self.market_iv,
            vega_weight: Some(self.vega_weight),
        }
    }
}

/// Calibration output: optimal multipliers, the unsmoothed characteristics,
/// per-instrument prices, and convergence diagnostics.
#[derive(Debug, Clone)]
pub struct CalibrationResult {
    pub variant: Variant,
    /// LSV initial variance, where applicable.
    pub v0: Option<f64>,
    pub lambda: Vec<f64>,
    pub converged: bool,
    pub grad_inf_norm: f64,
    pub objective: f64,
    pub phi0: f64,
    pub epochs: usize,
    pub total_evals: usize,
    pub reports: Vec<InstrumentReport>,
    /// Gradient infinity norm at the end of each epoch.
    pub grad_history: Vec<f64>,
    /// Dual objective at every accepted iterate, all epochs concatenated.
    pub objective_history: Vec<f64>,
    pub strict_violations: u64,
    pub contraction_violations: u64,
    pub max_policy_iterations_seen: usize,
    pub wall_clock_secs: f64,
    /// Always false: the reported surfaces come from an unsmoothed run.
    pub final_output_smoothed: bool,
    pub surfaces: SurfacePath,
    /// The prepared quotes the run calibrated to (weights filled in).
    pub quotes: QuoteSet,
}

/// Dual objective `L(lambda) = lambda . u_scaled - phi(0, x0)`.
pub fn dual_objective(lambda: &[f64], scaled_targets: &[f64], phi0: f64) -> f64 {
    lambda
        .iter()
        .zip(scaled_targets)
        .map(|(l, u)| l * u)
        .sum::<f64>()
        - phi0
}

/// Gradient of the dual objective: vega-scaled price mismatches of the
/// instruments priced on the multiplier's optimal characteristics.
pub fn dual_gradient(
    solution: &HjbSolution,
    quotes: &QuoteSet,
    setup: &PricingSetup,
) -> Result<Vec<f64>> {
    let prices = price_all(&solution.surfaces, setup, &quotes.instruments, true)?;
    Ok(quotes
        .instruments
        .iter()
        .zip(&prices)
        .map(|(instr, p)| instr.scaled_target() - p)
        .collect())
}

/// One full dual evaluation at a multiplier vector.
pub struct DualEvaluation {
    pub objective: f64,
    pub gradient: Vec<f64>,
    pub scaled_prices: Vec<f64>,
    pub solution: HjbSolution,
}

pub fn evaluate_dual(
    lambda: &[f64],
    quotes: &QuoteSet,
    reference: &SurfacePath,
    cfg: &CalibrationConfig,
) -> Result<DualEvaluation> {
    let setup = cfg.pricing_setup(quotes);
    let solution = hjb_solve(lambda, quotes, reference, &cfg.hjb_config())?;
    let phi0 = solution.value_at(setup.x0z, setup.x0r);
    let scaled_targets: Vec<f64> = quotes.instruments.iter().map(|i| i.scaled_target()).collect();
    let objective = dual_objective(lambda, &scaled_targets, phi0);
    let prices = price_all(&solution.surfaces, &setup, &quotes.instruments, true)?;
    let gradient: Vec<f64> = scaled_targets
        .iter()
        .zip(&prices)
        .map(|(u, p)| u - p)
        .collect();
    Ok(DualEvaluation {
        objective,
        gradient,
        scaled_prices: prices,
        solution,
    })
}

/// Materialises the reference characteristics and applies the sequential
/// variant's correlation structure where required.
pub fn build_reference_path(
    reference: &ReferenceModel,
    cfg: &CalibrationConfig,
) -> Result<SurfacePath> {
    let rate_scale = match cfg.variant {
        Variant::Lsv => 1.0,
        _ => cfg.rate_scale,
    };
    let mut path = reference.materialise(&cfg.grid, rate_scale)?;
    if cfg.variant == Variant::Sequential {
        let rho_ref = cfg
            .rho_ref
            .ok_or_else(|| Error::invalid("sequential variant requires rho_ref"))?;
        for slice in path.slices.iter_mut() {
            for i in 0..slice.beta12.len() {
                slice.beta12[i] = rho_ref * slice.beta22[i];
                let s = rho_ref * rho_ref * slice.beta22[i];
                if slice.beta11[i] <= s {
                    return Err(Error::SequentialDomain {
                        sigma_bar_sq: slice.beta11[i],
                        floor: s,
                    });
                }
            }
        }
    }
    Ok(path)
}

/// Truncated-Gaussian spatial smoothing of the free characteristics, with
/// bound and positive-semidefiniteness re-projection. Time slices are
/// smoothed independently; the frozen components of the sequential, full
/// sequential and LSV variants are copied through untouched.
pub fn smooth_reference_iteration(
    surfaces: &SurfacePath,
    variant: Variant,
    bounds: &Bounds,
    bandwidth: f64,
    disc: Discounting,
) -> Result<SurfacePath> {
    if !(bandwidth > 0.0) {
        return Err(Error::invalid("smoothing bandwidth must be positive"));
    }
    let grid = surfaces.grid;
    let radius = bandwidth.ceil() as i64;
    let sigma = 0.5 * bandwidth;
    let mut kernel = Vec::new();
    for dr in -radius..=radius {
        for dz in -radius..=radius {
            let d2 = (dz * dz + dr * dr) as f64;
            if d2 <= (radius * radius) as f64 + 1e-12 {
                kernel.push((dz, dr, (-0.5 * d2 / (sigma * sigma)).exp()));
            }
        }
    }

    let smooth_field = |values: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; values.len()];
        for ir in 0..grid.nr as i64 {
            for iz in 0..grid.nz as i64 {
                let mut acc = 0.0;
                let mut wsum = 0.0;
                for &(dz, dr, w) in &kernel {
                    let (jz, jr) = (iz + dz, ir + dr);
                    if jz >= 0 && jz < grid.nz as i64 && jr >= 0 && jr < grid.nr as i64 {
                        acc += w * values[grid.idx(jz as usize, jr as usize)];
                        wsum += w;
                    }
                }
                out[grid.idx(iz as usize, ir as usize)] = acc / wsum;
            }
        }
        out
    };

    let mut slices = Vec::with_capacity(surfaces.slices.len());
    for slice in &surfaces.slices {
        let mut next = slice.clone();
        next.beta11 = smooth_field(&slice.beta11);
        match variant {
            Variant::Joint => {
                next.alpha2 = smooth_field(&slice.alpha2);
                next.beta12 = smooth_field(&slice.beta12);
                next.beta22 = smooth_field(&slice.beta22);
            }
            Variant::FullSequential | Variant::Lsv => {
                next.beta12 = smooth_field(&slice.beta12);
            }
            Variant::Sequential => {}
        }
        // re-project to the admissible set
        for i in 0..grid.n_nodes() {
            match variant {
                Variant::Sequential => {
                    // stay inside the barrier's domain
                    let s = next.beta12[i] * next.beta12[i] / next.beta22[i];
                    if next.beta11[i] <= s {
                        next.beta11[i] = s + 1e-10;
                    }
                }
                _ => {
                    next.beta11[i] = next.beta11[i].clamp(bounds.b11_lo, bounds.b11_hi);
                    if variant == Variant::Joint {
                        next.beta22[i] = next.beta22[i].clamp(bounds.b22_lo, bounds.b22_hi);
                    }
                    let band = (next.beta11[i] * next.beta22[i]).max(0.0).sqrt();
                    next.beta12[i] = next.beta12[i].clamp(-band, band);
                }
            }
        }
        // risk-neutral drift follows the projected variance
        for ir in 0..grid.nr {
            let rate = disc.rate_at(grid.r(ir));
            for iz in 0..grid.nz {
                let i = grid.idx(iz, ir);
                next.alpha1[i] = rate - 0.5 * next.beta11[i];
            }
        }
        next.validate_psd()?;
        slices.push(next);
    }
    Ok(SurfacePath { grid, slices })
}

/// Calibrates the model to the quotes: L-BFGS ascent of the dual objective
/// from `lambda = 0`, wrapped in reference-model iteration. Returns the last
/// (unsmoothed) run's output; `converged` is false when the evaluation
/// budget ran out first.
pub fn calibrate(
    cfg: &CalibrationConfig,
    raw_quotes: &QuoteSet,
    reference: &ReferenceModel,
) -> Result<CalibrationResult> {
    cfg.validate()?;
    let started = Instant::now();
    let quotes = prepare_quotes(raw_quotes, cfg.identity_weights)?;
    for instr in &quotes.instruments {
        crate::pde::adi::maturity_step(&cfg.grid, instr)?;
    }
    let mut reference_path = build_reference_path(reference, cfg)?;

    let n = quotes.len();
    let mut lambda = vec![0.0; n];
    let mut total_evals = 0usize;
    let mut epochs = 0usize;
    let mut grad_history = Vec::new();
    let mut objective_history = Vec::new();
    let mut converged;
    let mut last_eval: Option<(Vec<f64>, DualEvaluation)>;

    loop {
        let mut epoch_last: Option<(Vec<f64>, DualEvaluation)> = None;
        let opts = LbfgsOptions {
            memory: 10,
            grad_tol_inf: cfg.eps1,
            max_evals: cfg.max_outer_evals,
            ..LbfgsOptions::default()
        };
        let outcome = lbfgs::minimize(
            |x| {
                let state = evaluate_dual(x, &quotes, &reference_path, cfg)?;
                let f = -state.objective;
                let g: Vec<f64> = state.gradient.iter().map(|v| -v).collect();
                epoch_last = Some((x.to_vec(), state));
                Ok((f, g))
            },
            &lambda,
            None,
            None,
            &opts,
        )?;
        total_evals += outcome.evaluations;
        epochs += 1;
        lambda = outcome.x.clone();
        converged = outcome.converged;
        grad_history.push(outcome.grad_inf_norm);
        objective_history.extend(outcome.accepted_f.iter().map(|f| -f));

        // recover the full state at the final iterate
        let state = match epoch_last {
            Some((x, state)) if x == lambda => state,
            _ => evaluate_dual(&lambda, &quotes, &reference_path, cfg)?,
        };
        last_eval = Some((lambda.clone(), state));

        let smoothings_done = epochs - 1;
        if (converged && smoothings_done >= cfg.min_smoothing_iterations)
            || epochs >= cfg.max_epochs
        {
            break;
        }
        // reference-model iteration: smoothed output becomes the next
        // reference; lambda warm-starts the next epoch
        let (_, ref state) = last_eval.as_ref().unwrap();
        reference_path = smooth_reference_iteration(
            &state.solution.surfaces,
            cfg.variant,
            &cfg.bounds,
            cfg.smoothing_bandwidth,
            cfg.discounting(),
        )?;
    }

    let (_, state) = last_eval.unwrap();
    let setup = cfg.pricing_setup(&quotes);
    let mut reports = Vec::with_capacity(n);
    for (i, instr) in quotes.instruments.iter().enumerate() {
        let w = instr.vega_weight.unwrap_or(1.0);
        let model_price = state.scaled_prices[i] * w;
        let model_iv = quotes.implied_vol(instr, model_price).ok();
        reports.push(InstrumentReport {
            kind: instr.kind,
            maturity_days: instr.maturity_days,
            strike: instr.strike,
            notional: instr.notional,
            market_price: instr.market_price,
            market_iv: instr.market_iv,
            model_price,
            model_iv,
            vega_weight: w,
            scaled_error: state.gradient[i],
        });
    }
    let grad_inf_norm = state
        .gradient
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()));

    Ok(CalibrationResult {
        variant: cfg.variant,
        v0: cfg.v0,
        lambda,
        converged,
        grad_inf_norm,
        objective: state.objective,
        phi0: state.solution.value_at(setup.x0z, setup.x0r),
        epochs,
        total_evals,
        reports,
        grad_history,
        objective_history,
        strict_violations: state.solution.strict_violations,
        contraction_violations: state.solution.contraction_violations,
        max_policy_iterations_seen: state
            .solution
            .policy_iterations
            .iter()
            .copied()
            .max()
            .unwrap_or(0),
        wall_clock_secs: started.elapsed().as_secs_f64(),
        final_output_smoothed: false,
        surfaces: state.solution.surfaces,
        quotes,
    })
}

/// Generates synthetic quotes by pricing instruments under a generating
/// model with the engine's own pricer. The returned set carries the model
/// prices as market prices; implied vols are filled in by preparation.
pub fn generate_quotes(
    generating: &ReferenceModel,
    templates: &[Instrument],
    cfg: &CalibrationConfig,
    s0: f64,
    r0: f64,
) -> Result<QuoteSet> {
    let rate_scale = match cfg.variant {
        Variant::Lsv => 1.0,
        _ => cfg.rate_scale,
    };
    let path = generating.materialise(&cfg.grid, rate_scale)?;
    let raw = QuoteSet::new(templates.to_vec(), rate_scale, s0, r0)?;
    let setup = cfg.pricing_setup(&raw);
    let prices = price_all(&path, &setup, &raw.instruments, false)?;
    let mut out = raw;
    for (instr, price) in out.instruments.iter_mut().zip(&prices) {
        instr.market_price = *price;
        instr.market_iv = None;
        instr.vega_weight = None;
    }
    out.validate()?;
    Ok(out)
}

/// Node-wise maximum absolute difference between two surface paths, per
/// characteristic: (alpha1, alpha2, beta11, beta12, beta22).
pub fn surface_deviation(a: &SurfacePath, b: &SurfacePath) -> [f64; 5] {
    let mut out = [0.0f64; 5];
    for (sa, sb) in a.slices.iter().zip(&b.slices) {
        let fields: [(&Vec<f64>, &Vec<f64>); 5] = [
            (&sa.alpha1, &sb.alpha1),
            (&sa.alpha2, &sb.alpha2),
            (&sa.beta11, &sb.beta11),
            (&sa.beta12, &sb.beta12),
            (&sa.beta22, &sb.beta22),
        ];
        for (k, (fa, fb)) in fields.iter().enumerate() {
            for (x, y) in fa.iter().zip(fb.iter()) {
                out[k] = out[k].max((x - y).abs());
            }
        }
    }
    out
}

/// Discrete H1 seminorm of one characteristic surface, summed over slices;
/// the smoothing criterion the spike test measures.
pub fn roughness(path: &SurfacePath, field: impl Fn(&ModelSurfaces) -> &Vec<f64>) -> f64 {
    let g = path.grid;
    let mut total = 0.0;
    for slice in &path.slices {
        let v = field(slice);
        for ir in 0..g.nr {
            for iz in 0..g.nz - 1 {
                let d = v[g.idx(iz + 1, ir)] - v[g.idx(iz, ir)];
                total += d * d;
            }
        }
        for ir in 0..g.nr - 1 {
            for iz in 0..g.nz {
                let d = v[g.idx(iz, ir + 1)] - v[g.idx(iz, ir)];
                total += d * d;
            }
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{characteristics_cev_vasicek, CevVasicekParams};

    fn small_grid() -> Grid {
        let z0 = 92.0f64.ln();
        Grid::new(z0 - 0.6, z0 + 0.6, 0.0, 5.0, 25, 17, 1.0 / 365.0, 30).unwrap()
    }

    fn params() -> CevVasicekParams {
        CevVasicekParams {
            sigma: 0.45,
            gamma: 0.93,
            rho: -0.2,
            rate_vol: 0.023,
            mean_reversion: 0.1,
            mean_level: 2.8,
        }
    }

    fn cfg(variant: Variant) -> CalibrationConfig {
        let mut c = CalibrationConfig::defaults(variant, small_grid());
        c.eps1 = 1e-6;
        c.eps2 = 1e-10;
        c.min_smoothing_iterations = 0;
        c.max_epochs = 3;
        c.max_outer_evals = 40;
        c
    }

    fn templates() -> Vec<Instrument> {
        vec![
            Instrument::call(20.0, 88.0, 0.0),
            Instrument::call(30.0, 92.0, 0.0),
            Instrument::call(30.0, 96.0, 0.0),
        ]
    }

    #[test]
    fn reference_priced_quotes_return_immediately_at_zero_lambda() {
        let c = cfg(Variant::Joint);
        let reference = ReferenceModel::CevVasicek(params());
        let quotes = generate_quotes(&reference, &templates(), &c, 92.0, 0.025).unwrap();
        let result = calibrate(&c, &quotes, &reference).unwrap();
        assert!(result.converged);
        assert_eq!(result.epochs, 1);
        assert!(result.lambda.iter().all(|&l| l == 0.0));
        assert!(result.grad_inf_norm < 1e-9, "gradient {}", result.grad_inf_norm);
        assert_eq!(result.objective, 0.0);
        assert!(!result.final_output_smoothed);
    }

    #[test]
    fn zero_lambda_gradient_is_quote_minus_reference_price() {
        let c = cfg(Variant::Joint);
        let reference = ReferenceModel::CevVasicek(params());
        let ref_path = build_reference_path(&reference, &c).unwrap();
        let mut quotes = generate_quotes(&reference, &templates(), &c, 92.0, 0.025).unwrap();
        // shift the market prices away from the reference
        for i in quotes.instruments.iter_mut() {
            i.market_price *= 1.02;
        }
        let prepared = prepare_quotes(&quotes, false).unwrap();
        let state = evaluate_dual(&vec![0.0; 3], &prepared, &ref_path, &c).unwrap();
        assert_eq!(state.objective, 0.0);
        let setup = c.pricing_setup(&prepared);
        let ref_prices = price_all(&ref_path, &setup, &prepared.instruments, true).unwrap();
        for (i, g) in state.gradient.iter().enumerate() {
            let want = prepared.instruments[i].scaled_target() - ref_prices[i];
            assert!((g - want).abs() < 1e-12);
        }
    }

    #[test]
    fn dual_gradient_matches_finite_differences_of_the_objective() {
        let c = cfg(Variant::Joint);
        let reference = ReferenceModel::CevVasicek(params());
        let ref_path = build_reference_path(&reference, &c).unwrap();
        let mut quotes = generate_quotes(&reference, &templates(), &c, 92.0, 0.025).unwrap();
        for i in quotes.instruments.iter_mut() {
            i.market_price *= 1.01;
        }
        let prepared = prepare_quotes(&quotes, false).unwrap();
        let mut c2 = c.clone();
        c2.eps2 = 1e-12;
        let lambda = vec![0.05, -0.03, 0.02];
        let state = evaluate_dual(&lambda, &prepared, &ref_path, &c2).unwrap();
        let h = 1e-4;
        for k in 0..lambda.len() {
            let mut up = lambda.clone();
            let mut dn = lambda.clone();
            up[k] += h;
            dn[k] -= h;
            let fu = evaluate_dual(&up, &prepared, &ref_path, &c2).unwrap().objective;
            let fd = evaluate_dual(&dn, &prepared, &ref_path, &c2).unwrap().objective;
            let fd_grad = (fu - fd) / (2.0 * h);
            let rel = (state.gradient[k] - fd_grad).abs() / fd_grad.abs().max(1e-3);
            assert!(
                rel < 1e-3,
                "component {k}: analytic {} vs fd {fd_grad} (rel {rel:.2e})",
                state.gradient[k]
            );
        }
    }

    #[test]
    fn smoothing_is_identity_on_constant_surfaces_and_reduces_spikes() {
        let g = small_grid();
        let path = SurfacePath::constant(characteristics_cev_vasicek(&params(), &g, 100.0));
        let b = Bounds::new(0.01, 0.5, 2e-4, 1e-3).unwrap();
        let disc = Discounting::ScaledRate { scale: 100.0 };

        // gamma = 1 makes every surface flat; smoothing must not move it
        let flat_params = CevVasicekParams {
            gamma: 1.0,
            ..params()
        };
        let flat = SurfacePath::constant(characteristics_cev_vasicek(&flat_params, &g, 100.0));
        let smoothed = smooth_reference_iteration(&flat, Variant::Joint, &b, 2.0, disc).unwrap();
        // alpha2 varies linearly in r; beta11 is constant
        for (a, b2) in flat.slices[0].beta11.iter().zip(&smoothed.slices[0].beta11) {
            assert!((a - b2).abs() < 1e-12);
        }

        // spike: raised node must come down and total roughness shrink
        let mut spiky = path.clone();
        let mid = g.idx(g.nz / 2, g.nr / 2);
        for s in spiky.slices.iter_mut() {
            s.beta11[mid] += 0.05;
        }
        let smoothed = smooth_reference_iteration(&spiky, Variant::Joint, &b, 2.0, disc).unwrap();
        assert!(smoothed.slices[0].beta11[mid] < spiky.slices[0].beta11[mid]);
        assert!(smoothed.slices[0].beta11[mid + 1] > spiky.slices[0].beta11[mid + 1]);
        let rough_before = roughness(&spiky, |s| &s.beta11);
        let rough_after = roughness(&smoothed, |s| &s.beta11);
        assert!(rough_after < rough_before);
        smoothed.validate_psd().unwrap();
    }

    #[test]
    fn sequential_config_requires_rho_ref() {
        let mut c = cfg(Variant::Sequential);
        c.rho_ref = None;
        let reference = ReferenceModel::CevVasicek(params());
        let quotes =
            generate_quotes(&reference, &templates(), &cfg(Variant::Joint), 92.0, 0.025).unwrap();
        match calibrate(&c, &quotes, &reference) {
            Err(Error::InvalidInput(msg)) => assert!(msg.contains("rho_ref")),
            other => panic!("expected missing-parameter error, got {other:?}"),
        }
    }
}
