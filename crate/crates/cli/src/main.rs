//! Command-line frontend: synthetic quote generation, calibration runs,
//! Monte Carlo validation and surface comparison.

use clap::{Args, Parser, Subcommand};
use sotcal::calibrate::{calibrate, generate_quotes};
use sotcal::error::Result;
use sotcal::io::{
    load_run_output, read_instruments, write_instruments, write_mc_report, write_run_output,
    write_surfaces, RunConfig,
};
use sotcal::mc::mc_price_all;
use sotcal::models::{ModelSurfaces, SurfacePath};
use sotcal::optimisers::Variant;
use sotcal::pde::adi::{price_all, PricingSetup};
use sotcal::pde::Discounting;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "sotcal",
    about = "Exact calibration of hybrid local-volatility / short-rate models by semimartingale optimal transport",
    version
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone, Default)]
struct Overrides {
    /// Grid nodes as `nz,nr`.
    #[arg(long, value_name = "NZ,NR")]
    grid: Option<String>,
    /// Time step in days.
    #[arg(long)]
    dt_days: Option<f64>,
    /// Calibration variant: joint | seq | full-seq | lsv.
    #[arg(long)]
    variant: Option<String>,
    /// Outer tolerance on the vega-scaled gradient.
    #[arg(long)]
    eps1: Option<f64>,
    /// Policy-iteration tolerance.
    #[arg(long)]
    eps2: Option<f64>,
    /// Diffusion bounds as `b11_lo,b11_hi,b22_lo,b22_hi`.
    #[arg(long, value_name = "LO,HI,LO,HI")]
    bounds: Option<String>,
    /// Minimum smoothing (reference-iteration) applications.
    #[arg(long)]
    smoothing_iters: Option<usize>,
    /// Monte Carlo seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Price a synthetic instrument layout under the configured generating
    /// model and write the quote file.
    GenSynthetic {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Calibrate the configured variant to a quote file.
    Calibrate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        instruments: PathBuf,
        /// Output directory for result.json, surfaces.csv, smile.csv.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Monte Carlo cross-check of a calibrated run.
    ValidateMc {
        #[arg(long)]
        config: PathBuf,
        /// Directory written by `calibrate`.
        #[arg(long)]
        result: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        paths: Option<usize>,
        /// Also export this many simulated trajectories for plotting.
        #[arg(long)]
        export_paths: Option<usize>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Node-wise differences between two calibrated runs.
    Compare {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_variant(s: &str) -> Result<Variant> {
    match s {
        "joint" => Ok(Variant::Joint),
        "seq" | "sequential" => Ok(Variant::Sequential),
        "full-seq" | "full-sequential" => Ok(Variant::FullSequential),
        "lsv" => Ok(Variant::Lsv),
        other => Err(sotcal::Error::invalid(format!(
            "unknown variant `{other}` (expected joint | seq | full-seq | lsv)"
        ))),
    }
}

fn apply_overrides(cfg: &mut RunConfig, ov: &Overrides) -> Result<()> {
    if let Some(grid) = &ov.grid {
        let parts: Vec<_> = grid.split(',').collect();
        if parts.len() != 2 {
            return Err(sotcal::Error::invalid("--grid expects `nz,nr`"));
        }
        cfg.grid.nz = parts[0].trim().parse().map_err(|e| {
            sotcal::Error::invalid(format!("--grid: {e}"))
        })?;
        cfg.grid.nr = parts[1].trim().parse().map_err(|e| {
            sotcal::Error::invalid(format!("--grid: {e}"))
        })?;
    }
    if let Some(dt) = ov.dt_days {
        cfg.grid.dt_days = dt;
    }
    if let Some(v) = &ov.variant {
        cfg.variant = parse_variant(v)?;
    }
    if let Some(e) = ov.eps1 {
        cfg.eps1 = e;
    }
    if let Some(e) = ov.eps2 {
        cfg.eps2 = e;
    }
    if let Some(b) = &ov.bounds {
        let vals: Vec<f64> = b
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| sotcal::Error::invalid(format!("--bounds: {e}")))?;
        if vals.len() != 4 {
            return Err(sotcal::Error::invalid(
                "--bounds expects `b11_lo,b11_hi,b22_lo,b22_hi`",
            ));
        }
        cfg.bounds = sotcal::Bounds::new(vals[0], vals[1], vals[2], vals[3])?;
    }
    if let Some(n) = ov.smoothing_iters {
        cfg.min_smoothing_iterations = n;
    }
    if let Some(seed) = ov.seed {
        let mut mc = cfg.mc.unwrap_or_default();
        mc.seed = seed;
        cfg.mc = Some(mc);
    }
    Ok(())
}

fn run() -> Result<u8> {
    let cli = Cli::parse();
    match cli.cmd {
        Cmd::GenSynthetic {
            config,
            out,
            overrides,
        } => {
            let mut cfg = RunConfig::load(&config)?;
            apply_overrides(&mut cfg, &overrides)?;
            let generating = cfg
                .generating
                .clone()
                .ok_or_else(|| sotcal::Error::invalid("config lacks a generating model"))?;
            let templates = cfg.templates()?;
            let horizon = templates
                .iter()
                .map(|i| i.maturity_days)
                .fold(0.0f64, f64::max);
            let cc = cfg.calibration_config(Some(horizon))?;
            let quotes = generate_quotes(&generating, &templates, &cc, cfg.market.s0, cfg.market.r0)?;
            write_instruments(&out, &quotes.instruments)?;
            eprintln!(
                "wrote {} synthetic quotes to {} (config {})",
                quotes.len(),
                out.display(),
                cfg.hash()
            );
            Ok(0)
        }
        Cmd::Calibrate {
            config,
            instruments,
            out,
            overrides,
        } => {
            let mut cfg = RunConfig::load(&config)?;
            apply_overrides(&mut cfg, &overrides)?;
            let instrs = read_instruments(&instruments)?;
            let horizon = instrs.iter().map(|i| i.maturity_days).fold(0.0f64, f64::max);
            let cc = cfg.calibration_config(Some(horizon))?;
            let quotes = cfg.quote_set(instrs)?;
            let result = calibrate(&cc, &quotes, &cfg.reference)?;
            write_run_output(&out, &result, &cc, &cfg.hash())?;
            eprintln!(
                "variant {} | converged {} | grad {:.3e} | epochs {} | evals {} | {:.1}s",
                cc.variant.as_str(),
                result.converged,
                result.grad_inf_norm,
                result.epochs,
                result.total_evals,
                result.wall_clock_secs
            );
            for r in &result.reports {
                eprintln!(
                    "  {:>7} {:>5.0}d K={:<8} market {:>10.4} model {:>10.4} iv {:?}",
                    format!("{:?}", r.kind),
                    r.maturity_days,
                    r.strike,
                    r.market_price,
                    r.model_price,
                    r.model_iv
                );
            }
            Ok(if result.converged { 0 } else { 2 })
        }
        Cmd::ValidateMc {
            config,
            result,
            out,
            paths,
            export_paths,
            overrides,
        } => {
            let mut cfg = RunConfig::load(&config)?;
            apply_overrides(&mut cfg, &overrides)?;
            let (summary, surfaces) = load_run_output(&result)?;
            let instruments: Vec<_> = summary.reports.iter().map(|r| r.instrument()).collect();
            let setup = match summary.variant {
                Variant::Lsv => PricingSetup::lsv(
                    summary.market.s0,
                    summary.market.v0.unwrap_or(0.0),
                ),
                _ => PricingSetup {
                    x0z: summary.market.s0.ln(),
                    x0r: summary.market.r0 * summary.market.rate_scale,
                    rate_scale: summary.market.rate_scale,
                    disc: Discounting::ScaledRate {
                        scale: summary.market.rate_scale,
                    },
                },
            };
            let adi = price_all(&surfaces, &setup, &instruments, false)?;
            let mut mc_cfg = cfg.mc.unwrap_or_default();
            if let Some(p) = paths {
                mc_cfg.n_paths = p;
            }
            let (estimates, diag) = mc_price_all(&surfaces, &setup, &instruments, &mc_cfg)?;
            let rows: Vec<_> = instruments
                .iter()
                .zip(adi.iter().zip(&estimates))
                .map(|(i, (a, e))| (i.clone(), *a, e.value, e.std_error))
                .collect();
            write_mc_report(&out, &rows, &summary.config_hash)?;
            if let Some(n) = export_paths {
                let horizon = instruments
                    .iter()
                    .map(|i| i.maturity_days.ceil() as usize)
                    .max()
                    .unwrap_or(1);
                let trajectories =
                    sotcal::mc::simulate_paths(&surfaces, &setup, &mc_cfg, horizon, n)?;
                let paths_file = out.with_extension("paths.csv");
                sotcal::io::write_path_samples(
                    &paths_file,
                    &trajectories,
                    surfaces.grid.dt * 365.0,
                    setup.rate_scale,
                    &summary.config_hash,
                )?;
                eprintln!("wrote {n} trajectories to {}", paths_file.display());
            }
            let worst = rows
                .iter()
                .map(|(_, a, m, s)| if *s > 0.0 { (a - m).abs() / s } else { 0.0 })
                .fold(0.0f64, f64::max);
            eprintln!(
                "mc validation: {} instruments, worst gap {:.2} standard errors, {} reflections, {} psd repairs",
                rows.len(),
                worst,
                diag.reflections,
                diag.psd_repairs
            );
            Ok(if worst <= 3.0 { 0 } else { 2 })
        }
        Cmd::Compare { a, b, out } => {
            let (sum_a, surf_a) = load_run_output(&a)?;
            let (sum_b, surf_b) = load_run_output(&b)?;
            if !surf_a.grid.same_layout(&surf_b.grid) || surf_a.slices.len() != surf_b.slices.len()
            {
                return Err(sotcal::Error::GridMismatch(
                    "compared runs live on different grids".into(),
                ));
            }
            std::fs::create_dir_all(&out)?;
            let grid = surf_a.grid;
            let mut diff = SurfacePath {
                grid,
                slices: Vec::with_capacity(surf_a.slices.len()),
            };
            for (sa, sb) in surf_a.slices.iter().zip(&surf_b.slices) {
                let mut d = ModelSurfaces::zeros(&grid);
                for i in 0..grid.n_nodes() {
                    d.alpha1[i] = sa.alpha1[i] - sb.alpha1[i];
                    d.alpha2[i] = sa.alpha2[i] - sb.alpha2[i];
                    d.beta11[i] = sa.beta11[i] - sb.beta11[i];
                    d.beta12[i] = sa.beta12[i] - sb.beta12[i];
                    d.beta22[i] = sa.beta22[i] - sb.beta22[i];
                }
                diff.slices.push(d);
            }
            let scale = match sum_a.variant {
                Variant::Lsv => 1.0,
                _ => sum_a.rate_scale,
            };
            write_surfaces(
                &out.join("surface_diff.csv"),
                &diff,
                scale,
                &format!("{}-vs-{}", sum_a.config_hash, sum_b.config_hash),
            )?;
            let dev = sotcal::calibrate::surface_deviation(&surf_a, &surf_b);
            let summary = serde_json::json!({
                "a": sum_a.config_hash,
                "b": sum_b.config_hash,
                "max_abs": {
                    "alpha1": dev[0],
                    "alpha2": dev[1],
                    "beta11": dev[2],
                    "beta12": dev[3],
                    "beta22": dev[4],
                }
            });
            std::fs::write(
                out.join("diff_summary.json"),
                serde_json::to_string_pretty(&summary)?,
            )?;
            eprintln!(
                "max |diff|: alpha1 {:.3e} alpha2 {:.3e} beta11 {:.3e} beta12 {:.3e} beta22 {:.3e}",
                dev[0], dev[1], dev[2], dev[3], dev[4]
            );
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
