//! Python bindings: the pricing analytics, instrument/quote types, and the
//! calibration entry points, configured through the same JSON documents the
//! CLI reads.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use sotcal::calibrate::{self, CalibrationResult};
use sotcal::instruments;
use sotcal::io::RunConfig;
use sotcal::mc::{mc_price_all, McConfig};
use sotcal::models::SurfacePath;
use sotcal::optimisers::Variant;
use sotcal::pde::adi::{price_all, PricingSetup};

fn err(e: sotcal::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Black forward price.
#[pyfunction]
fn black_price(forward: f64, strike: f64, expiry: f64, vol: f64, discount: f64) -> PyResult<f64> {
    instruments::black_price(forward, strike, expiry, vol, discount).map_err(err)
}

/// Black implied volatility (bisection/Newton hybrid).
#[pyfunction]
fn black_implied_vol(
    price: f64,
    forward: f64,
    strike: f64,
    expiry: f64,
    discount: f64,
) -> PyResult<f64> {
    instruments::black_implied_vol(price, forward, strike, expiry, discount).map_err(err)
}

/// Black vega per unit volatility.
#[pyfunction]
fn black_vega(forward: f64, strike: f64, expiry: f64, vol: f64, discount: f64) -> PyResult<f64> {
    instruments::black_vega(forward, strike, expiry, vol, discount).map_err(err)
}

/// Bachelier (normal) forward price.
#[pyfunction]
fn bachelier_price(
    forward: f64,
    strike: f64,
    expiry: f64,
    vol: f64,
    discount: f64,
) -> PyResult<f64> {
    instruments::bachelier_price(forward, strike, expiry, vol, discount).map_err(err)
}

/// Bachelier implied (absolute) volatility.
#[pyfunction]
fn bachelier_implied_vol(
    price: f64,
    forward: f64,
    strike: f64,
    expiry: f64,
    discount: f64,
) -> PyResult<f64> {
    instruments::bachelier_implied_vol(price, forward, strike, expiry, discount).map_err(err)
}

/// One calibrating option quote.
#[pyclass(name = "Instrument", from_py_object)]
#[derive(Clone)]
struct PyInstrument {
    inner: instruments::Instrument,
}

#[pymethods]
impl PyInstrument {
    /// European call on the equity underlying.
    #[staticmethod]
    fn call(maturity_days: f64, strike: f64, price: f64) -> Self {
        PyInstrument {
            inner: instruments::Instrument::call(maturity_days, strike, price),
        }
    }

    /// Option on the short rate paying `notional * tau * (r - K)^+`.
    #[staticmethod]
    fn cap(maturity_days: f64, strike: f64, notional: f64, price: f64) -> Self {
        PyInstrument {
            inner: instruments::Instrument::cap(maturity_days, strike, notional, price),
        }
    }

    #[getter]
    fn maturity_days(&self) -> f64 {
        self.inner.maturity_days
    }

    #[getter]
    fn strike(&self) -> f64 {
        self.inner.strike
    }

    #[getter]
    fn price(&self) -> f64 {
        self.inner.market_price
    }

    #[getter]
    fn implied_vol(&self) -> Option<f64> {
        self.inner.market_iv
    }

    #[getter]
    fn vega_weight(&self) -> Option<f64> {
        self.inner.vega_weight
    }

    fn __repr__(&self) -> String {
        format!(
            "Instrument(kind={:?}, maturity_days={}, strike={}, price={})",
            self.inner.kind, self.inner.maturity_days, self.inner.strike, self.inner.market_price
        )
    }
}

/// Calibration output: multipliers, convergence diagnostics and the
/// per-instrument price/implied-vol table.
#[pyclass(name = "CalibrationOutcome")]
struct PyOutcome {
    result: CalibrationResult,
    summary_json: String,
}

#[pymethods]
impl PyOutcome {
    #[getter]
    fn multipliers(&self) -> Vec<f64> {
        self.result.lambda.clone()
    }

    #[getter]
    fn converged(&self) -> bool {
        self.result.converged
    }

    #[getter]
    fn grad_inf_norm(&self) -> f64 {
        self.result.grad_inf_norm
    }

    #[getter]
    fn objective(&self) -> f64 {
        self.result.objective
    }

    #[getter]
    fn epochs(&self) -> usize {
        self.result.epochs
    }

    #[getter]
    fn total_evals(&self) -> usize {
        self.result.total_evals
    }

    #[getter]
    fn model_prices(&self) -> Vec<f64> {
        self.result.reports.iter().map(|r| r.model_price).collect()
    }

    #[getter]
    fn market_prices(&self) -> Vec<f64> {
        self.result.reports.iter().map(|r| r.market_price).collect()
    }

    #[getter]
    fn model_ivs(&self) -> Vec<Option<f64>> {
        self.result.reports.iter().map(|r| r.model_iv).collect()
    }

    #[getter]
    fn market_ivs(&self) -> Vec<Option<f64>> {
        self.result.reports.iter().map(|r| r.market_iv).collect()
    }

    /// The result.json document as a string.
    fn to_json(&self) -> String {
        self.summary_json.clone()
    }

    /// Monte Carlo cross-check of every calibrating instrument on the final
    /// surfaces: returns (adi_price, mc_price, mc_stderr) triples.
    #[pyo3(signature = (n_paths = 20000, seed = 7))]
    fn mc_validate(&self, n_paths: usize, seed: u64) -> PyResult<Vec<(f64, f64, f64)>> {
        let instruments: Vec<_> = self.result.reports.iter().map(|r| r.instrument()).collect();
        let setup = outcome_setup(&self.result);
        let adi = price_all(&self.result.surfaces, &setup, &instruments, false).map_err(err)?;
        let cfg = McConfig {
            n_paths,
            seed,
            ..McConfig::default()
        };
        let (est, _) =
            mc_price_all(&self.result.surfaces, &setup, &instruments, &cfg).map_err(err)?;
        Ok(adi
            .iter()
            .zip(&est)
            .map(|(a, e)| (*a, e.value, e.std_error))
            .collect())
    }

    fn __repr__(&self) -> String {
        format!(
            "CalibrationOutcome(converged={}, grad_inf_norm={:.3e}, epochs={})",
            self.result.converged, self.result.grad_inf_norm, self.result.epochs
        )
    }
}

fn outcome_setup(result: &CalibrationResult) -> PricingSetup {
    match result.variant {
        Variant::Lsv => PricingSetup::lsv(result.quotes.s0, result.v0.unwrap_or(0.0)),
        _ => PricingSetup::from_quotes(&result.quotes),
    }
}

fn parse_config(config_json: &str) -> PyResult<RunConfig> {
    serde_json::from_str(config_json)
        .map_err(|e| PyValueError::new_err(format!("config json: {e}")))
}

/// Prices the configured synthetic instrument layout under the generating
/// model and returns the quotes.
#[pyfunction]
fn gen_synthetic(config_json: &str) -> PyResult<Vec<PyInstrument>> {
    let cfg = parse_config(config_json)?;
    let generating = cfg
        .generating
        .clone()
        .ok_or_else(|| PyValueError::new_err("config lacks a generating model"))?;
    let templates = cfg.templates().map_err(err)?;
    let horizon = templates
        .iter()
        .map(|i| i.maturity_days)
        .fold(0.0f64, f64::max);
    let cc = cfg.calibration_config(Some(horizon)).map_err(err)?;
    let quotes = calibrate::generate_quotes(&generating, &templates, &cc, cfg.market.s0, cfg.market.r0)
        .map_err(err)?;
    Ok(quotes
        .instruments
        .into_iter()
        .map(|inner| PyInstrument { inner })
        .collect())
}

/// Calibrates the configured variant to the given quotes.
#[pyfunction]
fn run_calibration(config_json: &str, quotes: Vec<PyInstrument>) -> PyResult<PyOutcome> {
    let cfg = parse_config(config_json)?;
    let instruments: Vec<_> = quotes.into_iter().map(|q| q.inner).collect();
    if instruments.is_empty() {
        return Err(PyValueError::new_err("no instruments supplied"));
    }
    let horizon = instruments
        .iter()
        .map(|i| i.maturity_days)
        .fold(0.0f64, f64::max);
    let cc = cfg.calibration_config(Some(horizon)).map_err(err)?;
    let quote_set = cfg.quote_set(instruments).map_err(err)?;
    let result = calibrate::calibrate(&cc, &quote_set, &cfg.reference).map_err(err)?;
    let summary = sotcal::io::result_summary(&result, &cc, &cfg.hash());
    let summary_json = serde_json::to_string_pretty(&summary)
        .map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok(PyOutcome {
        result,
        summary_json,
    })
}

/// Reference-model characteristics at time zero on the configured grid:
/// returns (z_nodes, second_axis_nodes, alpha1, alpha2, beta11, beta12,
/// beta22) with surfaces flattened row-major (z fastest).
#[pyfunction]
fn reference_surfaces(
    config_json: &str,
) -> PyResult<(Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>)> {
    let cfg = parse_config(config_json)?;
    let cc = cfg.calibration_config(Some(30.0)).map_err(err)?;
    let path: SurfacePath = calibrate::build_reference_path(&cfg.reference, &cc).map_err(err)?;
    let g = path.grid;
    let s0 = &path.slices[0];
    let zs = (0..g.nz).map(|i| g.z(i)).collect();
    let rs = (0..g.nr).map(|i| g.r(i)).collect();
    Ok((
        zs,
        rs,
        s0.alpha1.clone(),
        s0.alpha2.clone(),
        s0.beta11.clone(),
        s0.beta12.clone(),
        s0.beta22.clone(),
    ))
}

#[pymodule]
fn sotcal_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(black_price, m)?)?;
    m.add_function(wrap_pyfunction!(black_implied_vol, m)?)?;
    m.add_function(wrap_pyfunction!(black_vega, m)?)?;
    m.add_function(wrap_pyfunction!(bachelier_price, m)?)?;
    m.add_function(wrap_pyfunction!(bachelier_implied_vol, m)?)?;
    m.add_function(wrap_pyfunction!(gen_synthetic, m)?)?;
    m.add_function(wrap_pyfunction!(run_calibration, m)?)?;
    m.add_function(wrap_pyfunction!(reference_surfaces, m)?)?;
    m.add_class::<PyInstrument>()?;
    m.add_class::<PyOutcome>()?;
    let _ = Variant::Joint; // re-exported through config strings only
    Ok(())
}
