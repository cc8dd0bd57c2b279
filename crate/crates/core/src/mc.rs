//! Monte Carlo simulation of the calibrated characteristics: an independent
//! pricing backend for cross-validation and trajectory export.
//!
//! Paths follow an Euler scheme with coefficients bilinearly interpolated in
//! space and piecewise-constant in time, the two-dimensional noise built from
//! the node-wise Cholesky factor of the covariance. Paths reflect at the
//! truncated domain boundary; reflections and positive-semidefiniteness
//! repairs after interpolation are counted so an undersized domain is
//! observable.

use crate::error::{Error, Result};
use crate::instruments::Instrument;
use crate::models::SurfacePath;
use crate::pde::adi::PricingSetup;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct McConfig {
    pub n_paths: usize,
    pub seed: u64,
    pub substeps_per_day: usize,
    pub antithetic: bool,
    /// Paths per independent RNG stream; the estimate does not depend on it.
    pub chunk_size: usize,
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig {
            n_paths: 100_000,
            seed: 7,
            substeps_per_day: 4,
            antithetic: true,
            chunk_size: 4096,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct McDiagnostics {
    pub reflections: u64,
    pub psd_repairs: u64,
}

#[derive(Debug, Clone)]
pub struct McEstimate {
    pub value: f64,
    pub std_error: f64,
    pub n_samples: usize,
}

struct PathState {
    z: f64,
    r: f64,
    discount_integral: f64,
}

#[inline]
fn reflect_into(x: f64, lo: f64, hi: f64, reflections: &mut u64) -> f64 {
    let mut v = x;
    for _ in 0..8 {
        if v < lo {
            v = 2.0 * lo - v;
            *reflections += 1;
        } else if v > hi {
            v = 2.0 * hi - v;
            *reflections += 1;
        } else {
            return v;
        }
    }
    v.clamp(lo, hi)
}

/// Advances one state by one substep using coefficients at its location.
#[inline]
fn euler_substep(
    state: &mut PathState,
    surfaces: &SurfacePath,
    setup: &PricingSetup,
    day: usize,
    h: f64,
    g1: f64,
    g2: f64,
    diag: &mut McDiagnostics,
) {
    let grid = &surfaces.grid;
    let slice = surfaces.at(day);
    let [a1, a2, b11, mut b12, b22] = slice.interpolate(state.z, state.r);
    let band = (b11.max(0.0) * b22.max(0.0)).sqrt();
    if b12.abs() > band {
        b12 = b12.clamp(-band, band);
        diag.psd_repairs += 1;
    }
    let l11 = b11.max(0.0).sqrt();
    let l21 = if l11 > 0.0 { b12 / l11 } else { 0.0 };
    let l22 = (b22.max(0.0) - l21 * l21).max(0.0).sqrt();

    let rate = setup.disc.rate_at(state.r);
    state.discount_integral += rate * h;

    let sh = h.sqrt();
    let z_new = state.z + a1 * h + l11 * sh * g1;
    let r_new = state.r + a2 * h + (l21 * g1 + l22 * g2) * sh;
    state.z = reflect_into(z_new, grid.z_min, grid.z_max, &mut diag.reflections);
    state.r = reflect_into(r_new, grid.r_min, grid.r_max, &mut diag.reflections);
}

/// Simulates `n_export` full trajectories, recording (z, r) daily. Intended
/// for plot export; pricing uses `mc_price_all`.
pub fn simulate_paths(
    surfaces: &SurfacePath,
    setup: &PricingSetup,
    cfg: &McConfig,
    n_days: usize,
    n_export: usize,
) -> Result<Vec<Vec<(f64, f64)>>> {
    validate_cfg(cfg)?;
    if n_days > surfaces.grid.n_steps {
        return Err(Error::invalid("simulation horizon exceeds the surface path"));
    }
    let h = surfaces.grid.dt / cfg.substeps_per_day as f64;
    let mut out = Vec::with_capacity(n_export);
    let mut diag = McDiagnostics::default();
    for p in 0..n_export {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(1_000_000 + p as u64);
        let mut state = PathState {
            z: setup.x0z,
            r: setup.x0r,
            discount_integral: 0.0,
        };
        let mut traj = vec![(state.z, state.r)];
        for day in 0..n_days {
            for _ in 0..cfg.substeps_per_day {
                let g1: f64 = StandardNormal.sample(&mut rng);
                let g2: f64 = StandardNormal.sample(&mut rng);
                euler_substep(&mut state, surfaces, setup, day, h, g1, g2, &mut diag);
            }
            traj.push((state.z, state.r));
        }
        out.push(traj);
    }
    Ok(out)
}

fn validate_cfg(cfg: &McConfig) -> Result<()> {
    if cfg.n_paths == 0 || cfg.substeps_per_day == 0 || cfg.chunk_size == 0 {
        return Err(Error::invalid("mc config needs positive path/substep/chunk counts"));
    }
    Ok(())
}

/// Discounted-payoff estimates for several instruments from one simulation
/// sweep to the longest maturity. Chunked counter-based streams make the
/// estimate independent of thread scheduling; a fixed seed reproduces it
/// bitwise.
pub fn mc_price_all(
    surfaces: &SurfacePath,
    setup: &PricingSetup,
    instruments: &[Instrument],
    cfg: &McConfig,
) -> Result<(Vec<McEstimate>, McDiagnostics)> {
    validate_cfg(cfg)?;
    let grid = surfaces.grid;
    let maturity_days: Vec<usize> = instruments
        .iter()
        .map(|i| crate::pde::adi::maturity_step(&grid, i))
        .collect::<Result<_>>()?;
    let max_day = *maturity_days.iter().max().unwrap_or(&0);
    let h = grid.dt / cfg.substeps_per_day as f64;

    // pair-level samples when antithetic
    let sample_stride = if cfg.antithetic { 2 } else { 1 };
    let n_samples = cfg.n_paths / sample_stride;
    if n_samples == 0 {
        return Err(Error::invalid("too few paths for the antithetic setting"));
    }
    let samples_per_chunk = cfg.chunk_size;
    let n_chunks = n_samples.div_ceil(samples_per_chunk);

    struct ChunkAccum {
        sums: Vec<f64>,
        sq_sums: Vec<f64>,
        diag: McDiagnostics,
    }

    let chunk_results: Vec<ChunkAccum> = (0..n_chunks)
        .into_par_iter()
        .map(|chunk| {
            let lo = chunk * samples_per_chunk;
            let hi = ((chunk + 1) * samples_per_chunk).min(n_samples);
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(chunk as u64 + 1);
            let mut acc = ChunkAccum {
                sums: vec![0.0; instruments.len()],
                sq_sums: vec![0.0; instruments.len()],
                diag: McDiagnostics::default(),
            };
            let mut payoff_scratch = vec![0.0; instruments.len()];
            for _ in lo..hi {
                payoff_scratch.fill(0.0);
                let mut plus = PathState {
                    z: setup.x0z,
                    r: setup.x0r,
                    discount_integral: 0.0,
                };
                let mut minus = PathState {
                    z: setup.x0z,
                    r: setup.x0r,
                    discount_integral: 0.0,
                };
                for day in 0..max_day {
                    for _ in 0..cfg.substeps_per_day {
                        let g1: f64 = StandardNormal.sample(&mut rng);
                        let g2: f64 = StandardNormal.sample(&mut rng);
                        euler_substep(
                            &mut plus, surfaces, setup, day, h, g1, g2, &mut acc.diag,
                        );
                        if cfg.antithetic {
                            euler_substep(
                                &mut minus, surfaces, setup, day, h, -g1, -g2, &mut acc.diag,
                            );
                        }
                    }
                    for (k, instr) in instruments.iter().enumerate() {
                        if maturity_days[k] == day + 1 {
                            let pay = |s: &PathState| {
                                instr.payoff(s.z, s.r, setup.rate_scale, &grid)
                                    * (-s.discount_integral).exp()
                            };
                            payoff_scratch[k] = if cfg.antithetic {
                                0.5 * (pay(&plus) + pay(&minus))
                            } else {
                                pay(&plus)
                            };
                        }
                    }
                }
                for k in 0..instruments.len() {
                    acc.sums[k] += payoff_scratch[k];
                    acc.sq_sums[k] += payoff_scratch[k] * payoff_scratch[k];
                }
            }
            acc
        })
        .collect();

    // deterministic reduction in chunk order
    let mut sums = vec![0.0; instruments.len()];
    let mut sq_sums = vec![0.0; instruments.len()];
    let mut diag = McDiagnostics::default();
    for c in &chunk_results {
        for k in 0..instruments.len() {
            sums[k] += c.sums[k];
            sq_sums[k] += c.sq_sums[k];
        }
        diag.reflections += c.diag.reflections;
        diag.psd_repairs += c.diag.psd_repairs;
    }

    let n = n_samples as f64;
    let estimates = (0..instruments.len())
        .map(|k| {
            let mean = sums[k] / n;
            let var = ((sq_sums[k] / n - mean * mean) * n / (n - 1.0)).max(0.0);
            McEstimate {
                value: mean,
                std_error: (var / n).sqrt(),
                n_samples,
            }
        })
        .collect();
    Ok((estimates, diag))
}

/// Single-instrument wrapper.
pub fn mc_price(
    surfaces: &SurfacePath,
    setup: &PricingSetup,
    instr: &Instrument,
    cfg: &McConfig,
) -> Result<(McEstimate, McDiagnostics)> {
    let (mut est, diag) = mc_price_all(surfaces, setup, std::slice::from_ref(instr), cfg)?;
    Ok((est.remove(0), diag))
}
