//! File formats: instrument CSV, run configuration JSON, calibration result
//! JSON, surface CSV export (with the rate scaling undone), smile tables and
//! Monte Carlo validation reports.

use crate::calibrate::{CalibrationConfig, CalibrationResult, InstrumentReport};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::instruments::{Instrument, OptionKind, QuoteSet};
use crate::mc::McConfig;
use crate::models::{ModelSurfaces, ReferenceModel, SurfacePath};
use crate::optimisers::{Bounds, Variant, DEFAULT_SEQ_P};
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::Write;
use std::path::Path;

pub const INSTRUMENT_HEADER: &str = "kind,maturity_days,strike,notional,price,iv";
pub const SURFACE_HEADER: &str = "t_days,z,r_unscaled,alpha1,alpha2,beta11,beta12,beta22,rho";

/// FNV-1a 64-bit hash, used to stamp outputs with their configuration.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

// ---------------------------------------------------------------------------
// instrument files
// ---------------------------------------------------------------------------

pub fn write_instruments(path: &Path, instruments: &[Instrument]) -> Result<()> {
    let mut out = String::new();
    out.push_str(INSTRUMENT_HEADER);
    out.push('\n');
    for i in instruments {
        let kind = match i.kind {
            OptionKind::EquityCall => "call",
            OptionKind::RateCap => "cap",
        };
        let iv = i.market_iv.map(|v| v.to_string()).unwrap_or_default();
        out.push_str(&format!(
            "{kind},{},{},{},{},{iv}\n",
            i.maturity_days, i.strike, i.notional, i.market_price
        ));
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_instruments(path: &Path) -> Result<Vec<Instrument>> {
    let text = fs::read_to_string(path)?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(text.as_bytes());
    let headers = rdr.headers()?.clone();
    let want: Vec<&str> = INSTRUMENT_HEADER.split(',').collect();
    for (k, name) in want.iter().enumerate() {
        if headers.get(k).map(str::trim) != Some(*name) {
            return Err(Error::invalid(format!(
                "instrument file header must be `{INSTRUMENT_HEADER}`"
            )));
        }
    }
    let mut out = Vec::new();
    for (line, record) in rdr.records().enumerate() {
        let record = record?;
        let field = |k: usize| -> Result<&str> {
            record
                .get(k)
                .ok_or_else(|| Error::invalid(format!("row {line}: missing column {k}")))
        };
        let parse = |k: usize| -> Result<f64> {
            field(k)?
                .trim()
                .parse::<f64>()
                .map_err(|e| Error::invalid(format!("row {line}: {e}")))
        };
        let kind = match field(0)?.trim().to_ascii_lowercase().as_str() {
            "call" | "equitycall" | "equity-call" => OptionKind::EquityCall,
            "cap" | "ratecap" | "rate-cap" => OptionKind::RateCap,
            other => {
                return Err(Error::invalid(format!(
                    "row {line}: unknown instrument kind `{other}`"
                )))
            }
        };
        let iv = match record.get(5).map(str::trim) {
            Some("") | None => None,
            Some(s) => Some(
                s.parse::<f64>()
                    .map_err(|e| Error::invalid(format!("row {line}: {e}")))?,
            ),
        };
        out.push(Instrument {
            kind,
            maturity_days: parse(1)?,
            strike: parse(2)?,
            notional: parse(3)?,
            market_price: parse(4)?,
            market_iv: iv,
            vega_weight: None,
        });
    }
    if out.is_empty() {
        return Err(Error::invalid("instrument file holds no rows"));
    }
    out.sort_by(|a, b| a.maturity_days.partial_cmp(&b.maturity_days).unwrap());
    Ok(out)
}

// ---------------------------------------------------------------------------
// run configuration
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketConfig {
    pub s0: f64,
    pub r0: f64,
    pub rate_scale: f64,
    /// Initial variance state (LSV variant only).
    #[serde(default)]
    pub v0: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridConfig {
    pub z_min: f64,
    pub z_max: f64,
    pub r_min: f64,
    pub r_max: f64,
    pub nz: usize,
    pub nr: usize,
    #[serde(default = "one")]
    pub dt_days: f64,
    /// Defaults to the longest instrument maturity.
    #[serde(default)]
    pub n_steps: Option<usize>,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CallSpec {
    pub maturity_days: f64,
    pub strikes: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CapSpec {
    pub maturity_days: f64,
    pub strikes: Vec<f64>,
    pub notional: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SyntheticSpec {
    #[serde(default)]
    pub calls: Vec<CallSpec>,
    #[serde(default)]
    pub caps: Vec<CapSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub variant: Variant,
    pub market: MarketConfig,
    pub grid: GridConfig,
    pub bounds: Bounds,
    #[serde(default = "d_eps1")]
    pub eps1: f64,
    #[serde(default = "d_eps2")]
    pub eps2: f64,
    #[serde(default = "d_seq_p")]
    pub seq_p: f64,
    #[serde(default)]
    pub rho_ref: Option<f64>,
    #[serde(default = "d_evals")]
    pub max_outer_evals: usize,
    #[serde(default = "d_smooth")]
    pub min_smoothing_iterations: usize,
    #[serde(default = "d_epochs")]
    pub max_epochs: usize,
    #[serde(default = "d_bandwidth")]
    pub smoothing_bandwidth: f64,
    #[serde(default = "d_policy")]
    pub max_policy_iters: usize,
    #[serde(default)]
    pub identity_weights: bool,
    /// Cap implied-vol/vega quoting model; normal by default.
    #[serde(default)]
    pub cap_quote_model: crate::instruments::CapQuoteModel,
    pub reference: ReferenceModel,
    /// Generating model for synthetic quote files.
    #[serde(default)]
    pub generating: Option<ReferenceModel>,
    /// Strike/maturity layout for synthetic quote files.
    #[serde(default)]
    pub synthetic_instruments: Option<SyntheticSpec>,
    #[serde(default)]
    pub mc: Option<McConfig>,
}

fn d_eps1() -> f64 {
    1e-3
}
fn d_eps2() -> f64 {
    1e-8
}
fn d_seq_p() -> f64 {
    DEFAULT_SEQ_P
}
fn d_evals() -> usize {
    150
}
fn d_smooth() -> usize {
    10
}
fn d_epochs() -> usize {
    20
}
fn d_bandwidth() -> f64 {
    2.0
}
fn d_policy() -> usize {
    200
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn hash(&self) -> String {
        let canon = serde_json::to_string(self).unwrap_or_default();
        format!("{:016x}", fnv1a(canon.as_bytes()))
    }

    pub fn build_grid(&self, horizon_days: Option<f64>) -> Result<Grid> {
        let steps = match self.grid.n_steps {
            Some(n) => n,
            None => horizon_days
                .map(|d| (d / self.grid.dt_days).ceil() as usize)
                .ok_or_else(|| {
                    Error::invalid("grid.n_steps missing and no instruments to infer it from")
                })?,
        };
        Grid::new(
            self.grid.z_min,
            self.grid.z_max,
            self.grid.r_min,
            self.grid.r_max,
            self.grid.nz,
            self.grid.nr,
            self.grid.dt_days / 365.0,
            steps,
        )
    }

    pub fn calibration_config(&self, horizon_days: Option<f64>) -> Result<CalibrationConfig> {
        let grid = self.build_grid(horizon_days)?;
        let cfg = CalibrationConfig {
            variant: self.variant,
            grid,
            bounds: self.bounds,
            rate_scale: self.market.rate_scale,
            eps1: self.eps1,
            eps2: self.eps2,
            seq_p: self.seq_p,
            rho_ref: self.rho_ref,
            max_outer_evals: self.max_outer_evals,
            min_smoothing_iterations: self.min_smoothing_iterations,
            max_epochs: self.max_epochs,
            smoothing_bandwidth: self.smoothing_bandwidth,
            max_policy_iters: self.max_policy_iters,
            identity_weights: self.identity_weights,
            v0: self.market.v0,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Expands the synthetic instrument layout into maturity-sorted templates.
    pub fn templates(&self) -> Result<Vec<Instrument>> {
        let spec = self
            .synthetic_instruments
            .as_ref()
            .ok_or_else(|| Error::invalid("config lacks synthetic_instruments"))?;
        let mut out = Vec::new();
        for c in &spec.calls {
            if c.strikes.is_empty() {
                return Err(Error::invalid("empty strike list for synthetic calls"));
            }
            for &k in &c.strikes {
                out.push(Instrument::call(c.maturity_days, k, 0.0));
            }
        }
        for c in &spec.caps {
            if c.strikes.is_empty() {
                return Err(Error::invalid("empty strike list for synthetic caps"));
            }
            for &k in &c.strikes {
                out.push(Instrument::cap(c.maturity_days, k, c.notional, 0.0));
            }
        }
        if out.is_empty() {
            return Err(Error::invalid("synthetic instrument layout is empty"));
        }
        out.sort_by(|a, b| a.maturity_days.partial_cmp(&b.maturity_days).unwrap());
        Ok(out)
    }

    pub fn quote_set(&self, instruments: Vec<Instrument>) -> Result<QuoteSet> {
        let mut q = QuoteSet::new(
            instruments,
            self.market.rate_scale,
            self.market.s0,
            self.market.r0,
        )?;
        q.cap_quote_model = self.cap_quote_model;
        Ok(q)
    }
}

// ---------------------------------------------------------------------------
// calibration results
// ---------------------------------------------------------------------------

/// The JSON face of a calibration run; surfaces live in the companion CSV.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ResultSummary {
    pub config_hash: String,
    pub variant: Variant,
    pub grid: Grid,
    pub rate_scale: f64,
    pub market: MarketConfig,
    pub lambda: Vec<f64>,
    pub converged: bool,
    pub grad_inf_norm: f64,
    pub objective: f64,
    pub phi0: f64,
    pub epochs: usize,
    pub total_evals: usize,
    pub grad_history: Vec<f64>,
    pub strict_violations: u64,
    pub contraction_violations: u64,
    pub max_policy_iterations_seen: usize,
    pub wall_clock_secs: f64,
    pub final_output_smoothed: bool,
    pub reports: Vec<InstrumentReport>,
}

pub fn result_summary(
    result: &CalibrationResult,
    cfg: &CalibrationConfig,
    config_hash: &str,
) -> ResultSummary {
    ResultSummary {
        config_hash: config_hash.to_string(),
        variant: cfg.variant,
        grid: cfg.grid,
        rate_scale: cfg.rate_scale,
        market: MarketConfig {
            s0: result.quotes.s0,
            r0: result.quotes.r0,
            rate_scale: result.quotes.rate_scale,
            v0: cfg.v0,
        },
        lambda: result.lambda.clone(),
        converged: result.converged,
        grad_inf_norm: result.grad_inf_norm,
        objective: result.objective,
        phi0: result.phi0,
        epochs: result.epochs,
        total_evals: result.total_evals,
        grad_history: result.grad_history.clone(),
        strict_violations: result.strict_violations,
        contraction_violations: result.contraction_violations,
        max_policy_iterations_seen: result.max_policy_iterations_seen,
        wall_clock_secs: result.wall_clock_secs,
        final_output_smoothed: result.final_output_smoothed,
        reports: result.reports.clone(),
    }
}

/// Writes result.json, surfaces.csv and smile.csv into `dir`.
pub fn write_run_output(
    dir: &Path,
    result: &CalibrationResult,
    cfg: &CalibrationConfig,
    config_hash: &str,
) -> Result<()> {
    fs::create_dir_all(dir)?;
    let summary = result_summary(result, cfg, config_hash);
    fs::write(
        dir.join("result.json"),
        serde_json::to_string_pretty(&summary)?,
    )?;
    write_surfaces(
        &dir.join("surfaces.csv"),
        &result.surfaces,
        cfg.surface_scale(),
        config_hash,
    )?;
    write_smile(&dir.join("smile.csv"), &result.reports, config_hash)?;
    Ok(())
}

impl CalibrationConfig {
    /// Rate scale the surface export unscales by (1 for the LSV variant).
    pub fn surface_scale(&self) -> f64 {
        match self.variant {
            Variant::Lsv => 1.0,
            _ => self.rate_scale,
        }
    }
}

pub fn read_result_summary(dir: &Path) -> Result<ResultSummary> {
    let text = fs::read_to_string(dir.join("result.json"))?;
    Ok(serde_json::from_str(&text)?)
}

/// Surface CSV with the rate scaling undone: the second coordinate, the rate
/// drift and the rate (co)variances are divided by the appropriate powers of
/// the scale, and the correlation column is scale-free. A comment line
/// carries the configuration hash.
pub fn write_surfaces(
    path: &Path,
    surfaces: &SurfacePath,
    rate_scale: f64,
    config_hash: &str,
) -> Result<()> {
    let g = surfaces.grid;
    let mut out = String::with_capacity(surfaces.slices.len() * g.n_nodes() * 64);
    out.push_str(&format!("# config_hash={config_hash}\n"));
    out.push_str(SURFACE_HEADER);
    out.push('\n');
    let dt_days = g.dt * 365.0;
    for (k, slice) in surfaces.slices.iter().enumerate() {
        let t_days = k as f64 * dt_days;
        for ir in 0..g.nr {
            let r_unscaled = g.r(ir) / rate_scale;
            for iz in 0..g.nz {
                let i = g.idx(iz, ir);
                let (b11, b12, b22) = (slice.beta11[i], slice.beta12[i], slice.beta22[i]);
                let denom = (b11 * b22).sqrt();
                let rho = if denom > 0.0 { b12 / denom } else { 0.0 };
                out.push_str(&format!(
                    "{t_days},{},{r_unscaled},{},{},{},{},{},{rho}\n",
                    g.z(iz),
                    slice.alpha1[i],
                    slice.alpha2[i] / rate_scale,
                    b11,
                    b12 / rate_scale,
                    b22 / (rate_scale * rate_scale),
                ));
            }
        }
    }
    let mut f = fs::File::create(path)?;
    f.write_all(out.as_bytes())?;
    Ok(())
}

/// Reads a surface CSV back into grid units (the inverse of `write_surfaces`
/// up to one rounding in the scale factors).
pub fn read_surfaces(path: &Path, grid: &Grid, rate_scale: f64) -> Result<SurfacePath> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().skip_while(|l| l.starts_with('#'));
    match lines.next() {
        Some(h) if h.trim() == SURFACE_HEADER => {}
        _ => return Err(Error::invalid(format!("surface file must start with `{SURFACE_HEADER}`"))),
    }
    let n = grid.n_nodes();
    let mut slices = vec![ModelSurfaces::zeros(grid); grid.n_steps + 1];
    let dt_days = grid.dt * 365.0;
    let mut count = 0usize;
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let mut next = || -> Result<f64> {
            parts
                .next()
                .ok_or_else(|| Error::invalid("short surface row"))?
                .parse::<f64>()
                .map_err(|e| Error::invalid(format!("surface row: {e}")))
        };
        let t_days = next()?;
        let z = next()?;
        let r_unscaled = next()?;
        let a1 = next()?;
        let a2 = next()?;
        let b11 = next()?;
        let b12 = next()?;
        let b22 = next()?;
        let _rho = next()?;
        let k = (t_days / dt_days).round() as usize;
        let iz = ((z - grid.z_min) / grid.hz()).round() as usize;
        let ir = ((r_unscaled * rate_scale - grid.r_min) / grid.hr()).round() as usize;
        if k > grid.n_steps || iz >= grid.nz || ir >= grid.nr {
            return Err(Error::invalid("surface row off the declared grid"));
        }
        let i = grid.idx(iz, ir);
        slices[k].alpha1[i] = a1;
        slices[k].alpha2[i] = a2 * rate_scale;
        slices[k].beta11[i] = b11;
        slices[k].beta12[i] = b12 * rate_scale;
        slices[k].beta22[i] = b22 * rate_scale * rate_scale;
        count += 1;
    }
    if count != n * (grid.n_steps + 1) {
        return Err(Error::invalid(format!(
            "surface file holds {count} rows, expected {}",
            n * (grid.n_steps + 1)
        )));
    }
    Ok(SurfacePath {
        grid: *grid,
        slices,
    })
}

pub fn write_smile(path: &Path, reports: &[InstrumentReport], config_hash: &str) -> Result<()> {
    let mut out = String::new();
    out.push_str(&format!("# config_hash={config_hash}\n"));
    out.push_str(
        "kind,maturity_days,strike,market_price,model_price,market_iv,model_iv,scaled_error\n",
    );
    for r in reports {
        let kind = match r.kind {
            OptionKind::EquityCall => "call",
            OptionKind::RateCap => "cap",
        };
        out.push_str(&format!(
            "{kind},{},{},{},{},{},{},{}\n",
            r.maturity_days,
            r.strike,
            r.market_price,
            r.model_price,
            r.market_iv.map(|v| v.to_string()).unwrap_or_default(),
            r.model_iv.map(|v| v.to_string()).unwrap_or_default(),
            r.scaled_error,
        ));
    }
    fs::write(path, out)?;
    Ok(())
}

/// Per-instrument Monte Carlo cross-validation rows.
pub fn write_mc_report(
    path: &Path,
    rows: &[(Instrument, f64, f64, f64)], // (instrument, adi, mc, stderr)
    config_hash: &str,
) -> Result<()> {
    let mut out = String::new();
    out.push_str(&format!("# config_hash={config_hash}\n"));
    out.push_str("kind,maturity_days,strike,adi_price,mc_price,mc_stderr,gap_in_se\n");
    for (instr, adi, mc, se) in rows {
        let kind = match instr.kind {
            OptionKind::EquityCall => "call",
            OptionKind::RateCap => "cap",
        };
        let gap = if *se > 0.0 { (adi - mc).abs() / se } else { 0.0 };
        out.push_str(&format!(
            "{kind},{},{},{adi},{mc},{se},{gap}\n",
            instr.maturity_days, instr.strike
        ));
    }
    fs::write(path, out)?;
    Ok(())
}

/// Simulated trajectories for plotting, one row per (path, day), with the
/// rate scaling undone on the second coordinate.
pub fn write_path_samples(
    path: &Path,
    trajectories: &[Vec<(f64, f64)>],
    dt_days: f64,
    rate_scale: f64,
    config_hash: &str,
) -> Result<()> {
    let mut out = format!("# config_hash={config_hash}\npath,t_days,z,r_unscaled\n");
    for (p, traj) in trajectories.iter().enumerate() {
        for (k, (z, r)) in traj.iter().enumerate() {
            out.push_str(&format!("{p},{},{z},{}\n", k as f64 * dt_days, r / rate_scale));
        }
    }
    fs::write(path, out)?;
    Ok(())
}

/// Loads `result.json` and `surfaces.csv` from a run directory.
pub fn load_run_output(dir: &Path) -> Result<(ResultSummary, SurfacePath)> {
    let summary = read_result_summary(dir)?;
    let scale = match summary.variant {
        Variant::Lsv => 1.0,
        _ => summary.rate_scale,
    };
    let surfaces = read_surfaces(&dir.join("surfaces.csv"), &summary.grid, scale)?;
    Ok((summary, surfaces))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::CevVasicekParams;
    use tempfile::tempdir;

    fn sample_instruments() -> Vec<Instrument> {
        vec![
            Instrument::call(60.0, 92.0, 7.3755),
            Instrument {
                market_iv: Some(0.4811),
                ..Instrument::call(60.0, 99.0, 4.6051)
            },
            Instrument::cap(92.0, 0.02, 1.0e7, 18_000.0),
        ]
    }

    #[test]
    fn instrument_csv_round_trips() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("quotes.csv");
        let instruments = sample_instruments();
        write_instruments(&path, &instruments).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with(INSTRUMENT_HEADER));
        let back = read_instruments(&path).unwrap();
        assert_eq!(instruments, back);
    }

    #[test]
    fn instrument_csv_rejects_bad_header_and_kinds() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "kind,days,strike\ncall,60,92\n").unwrap();
        assert!(read_instruments(&path).is_err());
        std::fs::write(
            &path,
            format!("{INSTRUMENT_HEADER}\nswap,60,92,1,5.0,\n"),
        )
        .unwrap();
        assert!(read_instruments(&path).is_err());
    }

    #[test]
    fn run_config_round_trips_and_hash_is_stable() {
        let cfg = RunConfig {
            variant: Variant::Joint,
            market: MarketConfig {
                s0: 92.0,
                r0: 0.025,
                rate_scale: 100.0,
                v0: None,
            },
            grid: GridConfig {
                z_min: 3.9,
                z_max: 5.1,
                r_min: 0.0,
                r_max: 5.0,
                nz: 51,
                nr: 51,
                dt_days: 1.0,
                n_steps: None,
            },
            bounds: Bounds {
                b11_lo: 0.05,
                b11_hi: 1.0,
                b22_lo: 2e-4,
                b22_hi: 1e-2,
            },
            eps1: 1e-4,
            eps2: 1e-10,
            seq_p: 4.0,
            rho_ref: None,
            max_outer_evals: 150,
            min_smoothing_iterations: 0,
            max_epochs: 5,
            smoothing_bandwidth: 2.0,
            max_policy_iters: 200,
            identity_weights: false,
            cap_quote_model: Default::default(),
            reference: ReferenceModel::CevVasicek(CevVasicekParams {
                sigma: 0.9,
                gamma: 0.89,
                rho: -0.2,
                rate_vol: 0.04,
                mean_reversion: 0.05,
                mean_level: 2.5,
            }),
            generating: None,
            synthetic_instruments: Some(SyntheticSpec {
                calls: vec![CallSpec {
                    maturity_days: 60.0,
                    strikes: vec![85.0, 92.0],
                }],
                caps: vec![],
            }),
            mc: None,
        };
        let dir = tempdir().unwrap();
        let path = dir.path().join("config.json");
        cfg.save(&path).unwrap();
        let back = RunConfig::load(&path).unwrap();
        assert_eq!(cfg.hash(), back.hash());
        assert_eq!(back.templates().unwrap().len(), 2);
        // horizon defaults to the longest maturity
        let grid = back.build_grid(Some(60.0)).unwrap();
        assert_eq!(grid.n_steps, 60);
    }

    #[test]
    fn empty_strike_list_is_rejected() {
        let spec = SyntheticSpec {
            calls: vec![CallSpec {
                maturity_days: 60.0,
                strikes: vec![],
            }],
            caps: vec![],
        };
        let cfg = RunConfig {
            variant: Variant::Joint,
            market: MarketConfig {
                s0: 92.0,
                r0: 0.025,
                rate_scale: 100.0,
                v0: None,
            },
            grid: GridConfig {
                z_min: 3.9,
                z_max: 5.1,
                r_min: 0.0,
                r_max: 5.0,
                nz: 21,
                nr: 21,
                dt_days: 1.0,
                n_steps: Some(60),
            },
            bounds: Bounds {
                b11_lo: 0.05,
                b11_hi: 1.0,
                b22_lo: 2e-4,
                b22_hi: 1e-2,
            },
            eps1: 1e-4,
            eps2: 1e-10,
            seq_p: 4.0,
            rho_ref: None,
            max_outer_evals: 10,
            min_smoothing_iterations: 0,
            max_epochs: 1,
            smoothing_bandwidth: 2.0,
            max_policy_iters: 200,
            identity_weights: false,
            cap_quote_model: Default::default(),
            reference: ReferenceModel::Heston(crate::models::HestonParams {
                kappa: 1.0,
                theta: 0.05,
                xi: 0.2,
                rho: -0.4,
            }),
            generating: None,
            synthetic_instruments: Some(spec),
            mc: None,
        };
        assert!(cfg.templates().is_err());
    }

    #[test]
    fn surfaces_csv_round_trips_to_near_machine_precision() {
        use crate::models::characteristics_cev_vasicek;
        let g = Grid::new(4.0, 5.0, 0.0, 5.0, 9, 7, 1.0 / 365.0, 3).unwrap();
        let p = CevVasicekParams {
            sigma: 0.4115,
            gamma: 0.9362,
            rho: -0.2037,
            rate_vol: 0.0232,
            mean_reversion: 0.0156,
            mean_level: 0.2852,
        };
        let path = SurfacePath::constant(characteristics_cev_vasicek(&p, &g, 100.0));
        let dir = tempdir().unwrap();
        let file = dir.path().join("surfaces.csv");
        write_surfaces(&file, &path, 100.0, "testhash").unwrap();
        let back = read_surfaces(&file, &g, 100.0).unwrap();
        for (a, b) in path.slices.iter().zip(&back.slices) {
            for (x, y) in a.beta22.iter().zip(&b.beta22) {
                assert!((x - y).abs() <= 4.0 * f64::EPSILON * x.abs());
            }
            for (x, y) in a.beta12.iter().zip(&b.beta12) {
                assert!((x - y).abs() <= 4.0 * f64::EPSILON * x.abs().max(1e-300));
            }
            assert_eq!(a.alpha1, b.alpha1); // unscaled column is exact
            for (x, y) in a.alpha2.iter().zip(&b.alpha2) {
                assert!((x - y).abs() <= 4.0 * f64::EPSILON * x.abs().max(1e-300));
            }
        }
    }

    #[test]
    fn fnv_hash_is_deterministic() {
        assert_eq!(fnv1a(b"abc"), fnv1a(b"abc"));
        assert_ne!(fnv1a(b"abc"), fnv1a(b"abd"));
    }

    #[test]
    fn result_summary_round_trips_through_json() {
        let summary = ResultSummary {
            config_hash: "0123456789abcdef".into(),
            variant: Variant::FullSequential,
            grid: Grid::new(4.0, 5.0, 0.0, 5.0, 9, 7, 1.0 / 365.0, 3).unwrap(),
            rate_scale: 100.0,
            market: MarketConfig {
                s0: 92.0,
                r0: 0.025,
                rate_scale: 100.0,
                v0: None,
            },
            lambda: vec![0.125, -3.5e-4],
            converged: true,
            grad_inf_norm: 7.25e-5,
            objective: 0.0123456789012345,
            phi0: -0.5,
            epochs: 2,
            total_evals: 37,
            grad_history: vec![1.0, 7.25e-5],
            strict_violations: 0,
            contraction_violations: 0,
            max_policy_iterations_seen: 4,
            wall_clock_secs: 12.5,
            final_output_smoothed: false,
            reports: vec![InstrumentReport {
                kind: OptionKind::RateCap,
                maturity_days: 92.0,
                strike: 0.02,
                notional: 1e7,
                market_price: 12_345.678901234567,
                market_iv: Some(0.0123),
                model_price: 12_345.678,
                model_iv: None,
                vega_weight: 987.654,
                scaled_error: -3.2e-5,
            }],
        };
        let text = serde_json::to_string_pretty(&summary).unwrap();
        let back: ResultSummary = serde_json::from_str(&text).unwrap();
        assert_eq!(summary, back);
    }

    #[test]
    fn path_samples_export_has_the_expected_layout() {
        let dir = tempdir().unwrap();
        let file = dir.path().join("paths.csv");
        let trajs = vec![vec![(4.5, 2.5), (4.6, 2.4)], vec![(4.5, 2.5), (4.4, 2.6)]];
        write_path_samples(&file, &trajs, 1.0, 100.0, "h").unwrap();
        let text = std::fs::read_to_string(&file).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("# config_hash=h"));
        assert_eq!(lines.next(), Some("path,t_days,z,r_unscaled"));
        assert_eq!(lines.next(), Some("0,0,4.5,0.025"));
        assert_eq!(text.lines().count(), 6);
    }
}
