//! Calibrating instruments: payoff evaluation on the truncated grid domain,
//! Black (lognormal) and Bachelier (normal) pricing, implied volatility, vega,
//! and the vega rescaling of quotes that converts price errors into
//! implied-volatility errors.
//!
//! Conventions: model time (PDE/Monte Carlo) uses a year fraction of
//! `days / 365`; the quoting layer (implied vol, vega, forward, discount)
//! uses `days / 360`, matching the convention the calibrated IV tables are
//! quoted under. Weights only condition the optimisation, they do not move
//! its fixed point.

use crate::error::{Error, Result};
use crate::grid::Grid;
use serde::{Deserialize, Serialize};

/// Year fraction used for PDE and simulation time.
pub const MODEL_DAYS_PER_YEAR: f64 = 365.0;
/// Year fraction used for implied-vol and vega quoting.
pub const QUOTE_DAYS_PER_YEAR: f64 = 360.0;

const SQRT_2: f64 = std::f64::consts::SQRT_2;
const INV_SQRT_2PI: f64 = 0.3989422804014327;

#[inline]
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / SQRT_2)
}

#[inline]
pub fn norm_pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptionKind {
    /// European call on the equity underlying, strike in price units.
    EquityCall,
    /// Caplet-style option on the short rate, strike in absolute rate units,
    /// paying `notional * tau * (r - K)^+`.
    RateCap,
}

/// One calibrating option quote.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instrument {
    pub kind: OptionKind,
    /// Maturity in days; fractional days are permitted at the type level but
    /// must sit on the time lattice when solving.
    pub maturity_days: f64,
    pub strike: f64,
    /// Notional (caps); 1 for calls.
    pub notional: f64,
    /// Market price in currency units.
    pub market_price: f64,
    /// Quoted implied volatility, if available; filled by `prepare_quotes`
    /// otherwise.
    pub market_iv: Option<f64>,
    /// Currency per vol point; set by `prepare_quotes`.
    pub vega_weight: Option<f64>,
}

impl Instrument {
    pub fn call(maturity_days: f64, strike: f64, market_price: f64) -> Self {
        Instrument {
            kind: OptionKind::EquityCall,
            maturity_days,
            strike,
            notional: 1.0,
            market_price,
            market_iv: None,
            vega_weight: None,
        }
    }

    pub fn cap(maturity_days: f64, strike: f64, notional: f64, market_price: f64) -> Self {
        Instrument {
            kind: OptionKind::RateCap,
            maturity_days,
            strike,
            notional,
            market_price,
            market_iv: None,
            vega_weight: None,
        }
    }

    /// Maturity in model years (ACT/365).
    #[inline]
    pub fn tau(&self) -> f64 {
        self.maturity_days / MODEL_DAYS_PER_YEAR
    }

    /// Maturity in quoting years (ACT/360).
    #[inline]
    pub fn tau_quote(&self) -> f64 {
        self.maturity_days / QUOTE_DAYS_PER_YEAR
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.maturity_days > 0.0) {
            return Err(Error::invalid("instrument maturity must be positive"));
        }
        if self.kind == OptionKind::EquityCall && !(self.strike > 0.0) {
            return Err(Error::invalid("call strike must be positive"));
        }
        if !(self.notional > 0.0) {
            return Err(Error::invalid("notional must be positive"));
        }
        if !(self.market_price >= 0.0) || !self.market_price.is_finite() {
            return Err(Error::invalid("market price must be finite and nonnegative"));
        }
        Ok(())
    }

    /// Payoff at state (z, r_scaled), truncated at its value on the domain
    /// boundary so the payoff is bounded on all of R^2.
    pub fn payoff(&self, z: f64, r_scaled: f64, rate_scale: f64, grid: &Grid) -> f64 {
        let zc = z.clamp(grid.z_min, grid.z_max);
        let rc = r_scaled.clamp(grid.r_min, grid.r_max);
        match self.kind {
            OptionKind::EquityCall => (zc.exp() - self.strike).max(0.0),
            OptionKind::RateCap => {
                self.notional * self.tau() * (rc / rate_scale - self.strike).max(0.0)
            }
        }
    }

    /// Vega-rescaled market target; identical to the raw price until
    /// `prepare_quotes` has assigned a weight.
    pub fn scaled_target(&self) -> f64 {
        self.market_price / self.vega_weight.unwrap_or(1.0)
    }
}

/// Quoting model for cap implied vols and vegas. The normal model is the
/// default since cap strikes and the short rate can sit near zero; the
/// lognormal fallback needs strictly positive rates and strikes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CapQuoteModel {
    #[default]
    Normal,
    Lognormal,
}

/// Ordered set of calibrating quotes plus the market context they are quoted
/// against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuoteSet {
    pub instruments: Vec<Instrument>,
    /// Constant rescaling of the short rate, `r_scaled = rate_scale * r`.
    pub rate_scale: f64,
    /// Spot of the equity underlying.
    pub s0: f64,
    /// Initial short rate (unscaled). Zero for the LSV variant.
    pub r0: f64,
    #[serde(default)]
    pub cap_quote_model: CapQuoteModel,
}

impl QuoteSet {
    pub fn new(instruments: Vec<Instrument>, rate_scale: f64, s0: f64, r0: f64) -> Result<Self> {
        let q = QuoteSet {
            instruments,
            rate_scale,
            s0,
            r0,
            cap_quote_model: CapQuoteModel::Normal,
        };
        q.validate()?;
        Ok(q)
    }

    pub fn validate(&self) -> Result<()> {
        if self.instruments.is_empty() {
            return Err(Error::invalid("quote set needs at least one instrument"));
        }
        if !(self.rate_scale > 0.0) {
            return Err(Error::invalid("rate scale must be positive"));
        }
        if !(self.s0 > 0.0) {
            return Err(Error::invalid("spot must be positive"));
        }
        for i in &self.instruments {
            i.validate()?;
        }
        let sorted = self
            .instruments
            .windows(2)
            .all(|w| w[0].maturity_days <= w[1].maturity_days);
        if !sorted {
            return Err(Error::invalid("instruments must be sorted by maturity"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.instruments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instruments.is_empty()
    }

    /// Quoting-convention forward and discount factor for an instrument.
    pub fn quote_forward_discount(&self, instr: &Instrument) -> (f64, f64) {
        let tq = instr.tau_quote();
        let discount = (-self.r0 * tq).exp();
        match instr.kind {
            OptionKind::EquityCall => (self.s0 * (self.r0 * tq).exp(), discount),
            OptionKind::RateCap => (self.r0, discount),
        }
    }

    /// Implied volatility of a price under the quote conventions.
    pub fn implied_vol(&self, instr: &Instrument, price: f64) -> Result<f64> {
        let (fwd, disc) = self.quote_forward_discount(instr);
        match instr.kind {
            OptionKind::EquityCall => {
                black_implied_vol(price, fwd, instr.strike, instr.tau_quote(), disc)
            }
            OptionKind::RateCap => {
                let unit = price / (instr.notional * instr.tau_quote());
                match self.cap_quote_model {
                    CapQuoteModel::Normal => {
                        bachelier_implied_vol(unit, fwd, instr.strike, instr.tau_quote(), disc)
                    }
                    CapQuoteModel::Lognormal => {
                        black_implied_vol(unit, fwd, instr.strike, instr.tau_quote(), disc)
                    }
                }
            }
        }
    }

    /// Quote-convention vega of an instrument at volatility `vol`.
    pub fn vega(&self, instr: &Instrument, vol: f64) -> Result<f64> {
        let (fwd, disc) = self.quote_forward_discount(instr);
        match instr.kind {
            OptionKind::EquityCall => black_vega(fwd, instr.strike, instr.tau_quote(), vol, disc),
            OptionKind::RateCap => {
                let unit = match self.cap_quote_model {
                    CapQuoteModel::Normal => {
                        bachelier_vega(fwd, instr.strike, instr.tau_quote(), vol, disc)?
                    }
                    CapQuoteModel::Lognormal => {
                        black_vega(fwd, instr.strike, instr.tau_quote(), vol, disc)?
                    }
                };
                Ok(instr.notional * instr.tau_quote() * unit)
            }
        }
    }
}

fn check_black_inputs(forward: f64, strike: f64, expiry: f64, discount: f64) -> Result<()> {
    if !(forward > 0.0 && strike > 0.0 && expiry > 0.0 && discount > 0.0) {
        return Err(Error::invalid(format!(
            "black inputs must be positive: forward={forward}, strike={strike}, expiry={expiry}, discount={discount}"
        )));
    }
    Ok(())
}

/// Black formula on the forward.
pub fn black_price(forward: f64, strike: f64, expiry: f64, vol: f64, discount: f64) -> Result<f64> {
    check_black_inputs(forward, strike, expiry, discount)?;
    if !(vol >= 0.0) {
        return Err(Error::invalid("volatility must be nonnegative"));
    }
    if vol == 0.0 {
        return Ok(discount * (forward - strike).max(0.0));
    }
    let sd = vol * expiry.sqrt();
    let d1 = ((forward / strike).ln() + 0.5 * sd * sd) / sd;
    let d2 = d1 - sd;
    Ok(discount * (forward * norm_cdf(d1) - strike * norm_cdf(d2)))
}

/// Analytic Black vega (per unit of volatility).
pub fn black_vega(forward: f64, strike: f64, expiry: f64, vol: f64, discount: f64) -> Result<f64> {
    check_black_inputs(forward, strike, expiry, discount)?;
    if !(vol > 0.0) {
        return Err(Error::invalid("volatility must be positive for vega"));
    }
    let sd = vol * expiry.sqrt();
    let d1 = ((forward / strike).ln() + 0.5 * sd * sd) / sd;
    Ok(discount * forward * norm_pdf(d1) * expiry.sqrt())
}

/// Inverts the Black formula by a bisection/Newton hybrid; the result
/// reproduces `price` to 1e-10 absolute.
pub fn black_implied_vol(
    price: f64,
    forward: f64,
    strike: f64,
    expiry: f64,
    discount: f64,
) -> Result<f64> {
    check_black_inputs(forward, strike, expiry, discount)?;
    let lo_bound = discount * (forward - strike).max(0.0);
    let hi_bound = discount * forward;
    if !(price > lo_bound) || !(price < hi_bound) {
        return Err(Error::PriceOutOfBand {
            price,
            lo: lo_bound,
            hi: hi_bound,
        });
    }
    invert_monotone(
        |v| black_price(forward, strike, expiry, v, discount).unwrap(),
        |v| black_vega(forward, strike, expiry, v, discount).unwrap(),
        price,
        1e-10,
    )
}

/// Bachelier (normal) forward price. `forward` and `strike` may take any sign;
/// `vol` is an absolute volatility.
pub fn bachelier_price(
    forward: f64,
    strike: f64,
    expiry: f64,
    vol: f64,
    discount: f64,
) -> Result<f64> {
    if !(expiry > 0.0 && discount > 0.0) {
        return Err(Error::invalid("bachelier needs expiry > 0 and discount > 0"));
    }
    if !(vol >= 0.0) {
        return Err(Error::invalid("volatility must be nonnegative"));
    }
    if vol == 0.0 {
        return Ok(discount * (forward - strike).max(0.0));
    }
    let sd = vol * expiry.sqrt();
    let d = (forward - strike) / sd;
    Ok(discount * ((forward - strike) * norm_cdf(d) + sd * norm_pdf(d)))
}

/// Analytic Bachelier vega per unit of absolute volatility.
pub fn bachelier_vega(
    forward: f64,
    strike: f64,
    expiry: f64,
    vol: f64,
    discount: f64,
) -> Result<f64> {
    if !(expiry > 0.0 && discount > 0.0 && vol > 0.0) {
        return Err(Error::invalid("bachelier vega needs positive expiry, discount, vol"));
    }
    let sd = vol * expiry.sqrt();
    let d = (forward - strike) / sd;
    Ok(discount * norm_pdf(d) * expiry.sqrt())
}

pub fn bachelier_implied_vol(
    price: f64,
    forward: f64,
    strike: f64,
    expiry: f64,
    discount: f64,
) -> Result<f64> {
    if !(expiry > 0.0 && discount > 0.0) {
        return Err(Error::invalid("bachelier needs expiry > 0 and discount > 0"));
    }
    let lo_bound = discount * (forward - strike).max(0.0);
    if !(price > lo_bound) {
        return Err(Error::PriceOutOfBand {
            price,
            lo: lo_bound,
            hi: f64::INFINITY,
        });
    }
    invert_monotone(
        |v| bachelier_price(forward, strike, expiry, v, discount).unwrap(),
        |v| bachelier_vega(forward, strike, expiry, v, discount).unwrap(),
        price,
        1e-10,
    )
}

/// Newton iteration safeguarded by a bisection bracket for a monotone price
/// function of volatility.
fn invert_monotone(
    price_of: impl Fn(f64) -> f64,
    vega_of: impl Fn(f64) -> f64,
    target: f64,
    tol: f64,
) -> Result<f64> {
    let mut lo = 1e-12;
    let mut hi = 1.0;
    let mut guard = 0;
    while price_of(hi) < target {
        hi *= 2.0;
        guard += 1;
        if guard > 80 {
            return Err(Error::invalid("implied vol bracket expansion failed"));
        }
    }
    // drive the residual as close to rounding as the bracket allows; `tol`
    // is only the acceptance floor
    let aim = (1e-4 * tol).max(1e-15 * target.abs());
    let mut v = 0.5 * (lo + hi);
    let mut best = (f64::INFINITY, v);
    for _ in 0..200 {
        let p = price_of(v);
        let err = p - target;
        if err.abs() < best.0 {
            best = (err.abs(), v);
        }
        if err.abs() <= aim {
            return Ok(v);
        }
        if err > 0.0 {
            hi = v;
        } else {
            lo = v;
        }
        if hi - lo <= f64::EPSILON * hi {
            break;
        }
        let vega = vega_of(v);
        let newton = if vega > 1e-300 { v - err / vega } else { f64::NAN };
        v = if newton.is_finite() && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    if best.0 <= tol {
        return Ok(best.1);
    }
    Err(Error::invalid(format!(
        "implied vol iteration failed to reach tolerance, last residual {:.3e}",
        best.0
    )))
}

/// Assigns vega weights (and implied vols where missing), producing the
/// rescaled quote set used everywhere downstream. Idempotent: weights are
/// recomputed from the raw price and quoted vol, which never change.
///
/// With `identity_weights` every weight is forced to 1 and the rescaled
/// targets equal the raw prices.
pub fn prepare_quotes(raw: &QuoteSet, identity_weights: bool) -> Result<QuoteSet> {
    raw.validate()?;
    let mut out = raw.clone();
    out.instruments
        .sort_by(|a, b| a.maturity_days.partial_cmp(&b.maturity_days).unwrap());
    let ctx = out.clone();
    for (index, instr) in out.instruments.iter_mut().enumerate() {
        let iv = match instr.market_iv {
            Some(v) if v > 0.0 => v,
            _ => ctx
                .implied_vol(instr, instr.market_price)
                .map_err(|e| Error::InstrumentRejected {
                    index,
                    reason: format!("no quotable implied vol: {e}"),
                })?,
        };
        instr.market_iv = Some(iv);
        if identity_weights {
            instr.vega_weight = Some(1.0);
            continue;
        }
        let vega = ctx.vega(instr, iv).map_err(|e| Error::InstrumentRejected {
            index,
            reason: format!("vega evaluation failed: {e}"),
        })?;
        if !(vega > 1e-12) {
            return Err(Error::InstrumentRejected {
                index,
                reason: format!("vega {vega:.3e} too small to weight"),
            });
        }
        instr.vega_weight = Some(vega);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;

    fn test_grid() -> Grid {
        Grid::new(3.9, 5.2, 0.0, 5.0, 11, 11, 1.0 / 365.0, 130).unwrap()
    }

    #[test]
    fn call_payoff_intrinsic_values() {
        let g = test_grid();
        let call = Instrument::call(60.0, 92.0, 7.0);
        assert!((call.payoff(99.0f64.ln(), 2.5, 100.0, &g) - 7.0).abs() < 1e-9);
        assert_eq!(call.payoff(85.0f64.ln(), 2.5, 100.0, &g), 0.0);
    }

    #[test]
    fn cap_payoff_accrual() {
        let g = test_grid();
        // tau = 91.25/365 = 0.25 exactly
        let cap = Instrument::cap(91.25, 0.025, 1.0e7, 10_000.0);
        let v = cap.payoff(4.5, 0.03 * 100.0, 100.0, &g);
        assert!((v - 12_500.0).abs() < 1e-6, "got {v}");
    }

    #[test]
    fn payoff_truncated_at_domain_boundary() {
        let g = test_grid();
        let call = Instrument::call(60.0, 92.0, 7.0);
        let at_edge = call.payoff(g.z_max, 2.5, 100.0, &g);
        let beyond = call.payoff(g.z_max + 5.0, 2.5, 100.0, &g);
        assert_eq!(at_edge, beyond);
    }

    #[test]
    fn black_degenerate_limits() {
        // vol -> 0 gives discounted intrinsic
        let p = black_price(100.0, 92.0, 0.5, 0.0, 0.97).unwrap();
        assert!((p - 0.97 * 8.0).abs() < 1e-12);
        // strike -> 0 gives discounted forward
        let p = black_price(100.0, 1e-12, 0.5, 0.3, 0.97).unwrap();
        assert!((p - 97.0).abs() < 1e-6);
        assert!(black_price(-1.0, 92.0, 0.5, 0.2, 1.0).is_err());
    }

    #[test]
    fn black_round_trip_table_anchor() {
        // paper-table quoting conventions: year fraction days/360
        let tq = 60.0 / 360.0;
        let fwd = 92.0 * (0.025f64 * tq).exp();
        let disc = (-0.025f64 * tq).exp();
        let iv = black_implied_vol(7.3755, fwd, 92.0, tq, disc).unwrap();
        assert!((iv - 0.4811).abs() < 2.5e-4, "iv = {iv}");
        let back = black_price(fwd, 92.0, tq, iv, disc).unwrap();
        assert!((back - 7.3755).abs() < 1e-9);
    }

    #[test]
    fn implied_vol_price_round_trip() {
        for vol in [0.05, 0.2, 0.4811, 0.9, 2.0] {
            for strike in [60.0, 92.0, 130.0] {
                let p = black_price(92.0, strike, 60.0 / 365.0, vol, 0.99).unwrap();
                let intrinsic = 0.99 * (92.0 - strike).max(0.0);
                if p - intrinsic < 1e-9 {
                    continue; // numerically degenerate: no quotable vol
                }
                let v = black_implied_vol(p, 92.0, strike, 60.0 / 365.0, 0.99).unwrap();
                assert!((v - vol).abs() < 1e-8, "vol {vol} strike {strike} -> {v}");
            }
        }
    }

    #[test]
    fn implied_vol_out_of_band_errors() {
        let lo = 0.99 * (100.0f64 - 92.0);
        match black_implied_vol(lo, 100.0, 92.0, 0.5, 0.99) {
            Err(Error::PriceOutOfBand { .. }) => {}
            other => panic!("expected out-of-band, got {other:?}"),
        }
        assert!(black_implied_vol(99.5, 100.0, 92.0, 0.5, 0.99).is_err());
    }

    #[test]
    fn vega_matches_finite_difference() {
        let h = 1e-5;
        for (f, k, t, v) in [
            (92.0, 92.0, 60.0 / 360.0, 0.4811),
            (92.0, 120.0, 1.0 / 3.0, 0.3),
            (100.0, 80.0, 0.75, 0.6),
        ] {
            let analytic = black_vega(f, k, t, v, 0.99).unwrap();
            let up = black_price(f, k, t, v + h, 0.99).unwrap();
            let dn = black_price(f, k, t, v - h, 0.99).unwrap();
            let fd = (up - dn) / (2.0 * h);
            assert!((analytic - fd).abs() < 1e-6, "analytic {analytic}, fd {fd}");
        }
        // Bachelier side
        let analytic = bachelier_vega(0.025, 0.02, 0.25, 0.01, 0.995).unwrap();
        let up = bachelier_price(0.025, 0.02, 0.25, 0.01 + h, 0.995).unwrap();
        let dn = bachelier_price(0.025, 0.02, 0.25, 0.01 - h, 0.995).unwrap();
        assert!((analytic - (up - dn) / (2.0 * h)).abs() < 1e-6);
    }

    #[test]
    fn vega_vanishes_deep_in_and_out() {
        let v = black_vega(92.0, 92.0 * 200.0, 0.25, 0.3, 1.0).unwrap();
        assert!(v < 1e-10);
        let v = black_vega(92.0, 92.0 / 200.0, 0.25, 0.3, 1.0).unwrap();
        assert!(v < 1e-10);
        assert!(black_vega(92.0, 92.0, 0.25, 0.3, 1.0).unwrap() > 0.0);
    }

    fn sample_quotes() -> QuoteSet {
        QuoteSet::new(
            vec![
                Instrument::call(60.0, 92.0, 7.3755),
                Instrument::call(60.0, 92.0, 7.3755),
                Instrument::cap(92.0, 0.02, 1.0e7, 18_000.0),
            ],
            100.0,
            92.0,
            0.025,
        )
        .unwrap()
    }

    #[test]
    fn prepare_quotes_assigns_weights_and_is_idempotent() {
        let prepared = prepare_quotes(&sample_quotes(), false).unwrap();
        for i in &prepared.instruments {
            assert!(i.vega_weight.unwrap() > 0.0);
            assert!(i.market_iv.unwrap() > 0.0);
        }
        // identical instruments get identical weights
        assert_eq!(
            prepared.instruments[0].vega_weight,
            prepared.instruments[1].vega_weight
        );
        let twice = prepare_quotes(&prepared, false).unwrap();
        assert_eq!(prepared, twice);
    }

    #[test]
    fn prepare_quotes_identity_weighting() {
        let prepared = prepare_quotes(&sample_quotes(), true).unwrap();
        for i in &prepared.instruments {
            assert_eq!(i.vega_weight, Some(1.0));
            assert_eq!(i.scaled_target(), i.market_price);
        }
    }

    #[test]
    fn prepare_quotes_scaling_makes_one_vol_point_one_unit() {
        // a price bump of one vega equals 1.0 in rescaled units
        let prepared = prepare_quotes(&sample_quotes(), false).unwrap();
        let instr = &prepared.instruments[0];
        let w = instr.vega_weight.unwrap();
        let bumped = (instr.market_price + w) / w;
        assert!((bumped - instr.scaled_target() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn lognormal_cap_quoting_fallback() {
        let mut q = sample_quotes();
        q.cap_quote_model = CapQuoteModel::Lognormal;
        let prepared = prepare_quotes(&q, false).unwrap();
        let normal = prepare_quotes(&sample_quotes(), false).unwrap();
        // the cap row gets a lognormal vol, different from the normal one
        let cap_ln = prepared.instruments.last().unwrap();
        let cap_n = normal.instruments.last().unwrap();
        assert_eq!(cap_ln.kind, OptionKind::RateCap);
        assert!(cap_ln.market_iv.unwrap() > 0.1, "lognormal rate vol is relative");
        assert!(cap_n.market_iv.unwrap() < 0.1, "normal rate vol is absolute");
        // calls are unaffected by the cap quoting model
        assert_eq!(
            prepared.instruments[0].vega_weight,
            normal.instruments[0].vega_weight
        );
    }

    #[test]
    fn prepare_quotes_rejects_unquotable_price() {
        let q = QuoteSet::new(
            vec![Instrument::call(60.0, 92.0, 0.0)],
            100.0,
            92.0,
            0.025,
        )
        .unwrap();
        match prepare_quotes(&q, false) {
            Err(Error::InstrumentRejected { index: 0, .. }) => {}
            other => panic!("expected rejection, got {other:?}"),
        }
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            /// Inverting the Black price recovers the volatility across the
            /// quotable region.
            #[test]
            fn implied_vol_inverts_price(
                vol in 0.05f64..1.5,
                moneyness in -0.35f64..0.35,
                days in 10.0f64..365.0,
            ) {
                let expiry = days / 365.0;
                let strike = 92.0 * moneyness.exp();
                let price = black_price(92.0, strike, expiry, vol, 0.99).unwrap();
                let intrinsic = 0.99 * (92.0 - strike).max(0.0);
                prop_assume!(price - intrinsic > 1e-9);
                let back = black_implied_vol(price, 92.0, strike, expiry, 0.99).unwrap();
                prop_assert!((back - vol).abs() < 1e-8);
            }

            /// Bachelier round trip on rate-scale inputs of either sign.
            #[test]
            fn bachelier_inverts_price(
                vol in 1e-4f64..0.05,
                strike in -0.01f64..0.06,
                days in 10.0f64..365.0,
            ) {
                let expiry = days / 360.0;
                let price = bachelier_price(0.025, strike, expiry, vol, 0.995).unwrap();
                let intrinsic = 0.995 * (0.025 - strike).max(0.0);
                prop_assume!(price - intrinsic > 1e-12);
                let back = bachelier_implied_vol(price, 0.025, strike, expiry, 0.995).unwrap();
                prop_assert!((back - vol).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn quoteset_rejects_unsorted_maturities() {
        let q = QuoteSet {
            instruments: vec![
                Instrument::call(120.0, 92.0, 10.0),
                Instrument::call(60.0, 92.0, 7.0),
            ],
            rate_scale: 100.0,
            s0: 92.0,
            r0: 0.025,
            cap_quote_model: CapQuoteModel::Normal,
        };
        assert!(q.validate().is_err());
    }
}
