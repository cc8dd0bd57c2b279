//! Exact calibration of hybrid equity/short-rate (and local-stochastic-volatility)
//! models to European option prices via semimartingale optimal transport duality.
//!
//! The engine fits the drift and covariance of a two-dimensional diffusion so that
//! a set of call and cap prices is reproduced exactly, while penalising deviation
//! from a parametric reference model. The dual problem is a nonlinear HJB equation
//! with jump source terms at the option maturities; it is solved by policy
//! iteration on a uniform finite-difference grid, inside an L-BFGS loop over the
//! Lagrange multipliers of the price constraints.
//!
//! Module map:
//! - [`grid`]: uniform tensor grid, stencils, frozen-curvature boundary fill.
//! - [`instruments`]: calibrating options, Black/Bachelier pricing, implied vol,
//!   vega rescaling of quotes.
//! - [`models`]: parametric reference families (CEV-Vasicek, Hull-White-CEV,
//!   Heston) and their drift/covariance surfaces, plus least-squares parametric
//!   calibration.
//! - [`optimisers`]: closed-form maximisers of the dual Hamiltonian for the four
//!   calibration variants, and a brute-force transform oracle.
//! - [`pde`]: implicit backward step, ADI pricing, and the forward discounted
//!   density solver.
//! - [`hjb`]: backward HJB sweep with maturity jumps and policy iteration.
//! - [`calibrate`]: outer optimisation over the multipliers, dual gradients,
//!   reference-model iteration with smoothing.
//! - [`mc`]: Monte Carlo cross-validation of the calibrated model.
//! - [`io`]: instrument/config/result file formats.

pub mod calibrate;
pub mod error;
pub mod grid;
pub mod hjb;
pub mod instruments;
pub mod io;
pub mod lbfgs;
pub mod mc;
pub mod models;
pub mod optimisers;
pub mod pde;

pub use error::{Error, Result};
pub use grid::{Grid, ScalarField};
pub use instruments::{Instrument, OptionKind, QuoteSet};
pub use models::{
    CevVasicekParams, HestonParams, HullWhiteCevParams, ModelSurfaces, ReferenceModel, SurfacePath,
};
pub use optimisers::{Bounds, DualDerivatives, Variant};
