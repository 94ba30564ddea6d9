//! `bicount` command-line driver.
//!
//! Exit status: 0 success, 1 i/o, 2 configuration, 3 numerical failure,
//! 4 validation failure. `BICOUNT_WORKERS` sets the worker thread count.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bicount::harness::{self, persist, CurveSection, HarnessError, RunConfig};
use bicount::nodal::BoundarySubset;
use bicount::orbits::OrbitTable;
use bicount::trace::LengthSpectrum;
use bicount::BICountSequence;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bicount", version, about = "Boundary-intersection counts and length spectra for planar billiards")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Run configuration (TOML); unspecified values come from the africa-desk preset.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve for all Dirichlet levels below k_max, resuming finished windows.
    Solve {
        #[command(flatten)]
        common: Common,
        /// Curve file (TOML: family, a, b, delta, scale, resolution).
        #[arg(long)]
        curve: Option<PathBuf>,
        #[arg(long)]
        kmax: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Count boundary intersections for a solved spectrum.
    Count {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        spectrum: PathBuf,
        /// Γ as arclength fractions, e.g. "0.1:0.3,0.6:0.7".
        #[arg(long)]
        gamma: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Search for periodic orbits.
    Orbits {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        curve: Option<PathBuf>,
        #[arg(long)]
        max_bounces: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Numerical and semiclassical length spectra from a count table and an orbit table.
    Spectrum {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        counts: PathBuf,
        #[arg(long)]
        orbits: PathBuf,
        #[arg(long)]
        q0: Option<f64>,
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(long)]
        gamma: Option<String>,
        #[arg(long)]
        curve: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Random-wave checks on one spectral window.
    ValidateRwm {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        spectrum: PathBuf,
        /// Window centre in k.
        #[arg(long)]
        k: f64,
        /// Window half-width c/√k.
        #[arg(long)]
        c: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Peak-match two length spectra on a shared grid.
    Compare {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        numerical: PathBuf,
        #[arg(long)]
        semiclassical: PathBuf,
        #[arg(long)]
        orbits: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Full pipeline with stage caching.
    Run {
        #[command(flatten)]
        common: Common,
        /// Start from a named preset instead of a file: disk, africa-desk, full-scale.
        #[arg(long, conflicts_with = "config")]
        preset: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print a preset configuration as TOML.
    Preset { name: String },
}

fn base_config(common: &Common) -> Result<RunConfig, HarnessError> {
    match &common.config {
        Some(p) => RunConfig::load(p),
        None => RunConfig::preset("africa-desk"),
    }
}

fn load_curve(path: &Path) -> Result<CurveSection, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))
}

fn config_err(e: impl std::fmt::Display) -> HarnessError {
    HarnessError::Config(e.to_string())
}

fn set_workers() -> Result<(), HarnessError> {
    let Ok(v) = std::env::var("BICOUNT_WORKERS") else { return Ok(()) };
    let n: usize = v
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| HarnessError::Config(format!("BICOUNT_WORKERS must be a positive integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(config_err)
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    set_workers()?;
    match cli.command {
        Command::Solve { common, curve, kmax, out } => {
            let mut cfg = base_config(&common)?;
            if let Some(c) = curve {
                cfg.curve = load_curve(&c)?;
            }
            if let Some(k) = kmax {
                cfg.solve.k_max = k;
            }
            cfg.validate()?;
            let dir = out.unwrap_or_else(|| cfg.output.join("spectrum"));
            let spectrum = harness::solve_stage(&cfg.curve, &cfg.solve, &dir)?;
            println!("{} levels below k = {} written to {}", spectrum.modes.len(), cfg.solve.k_max, dir.display());
            let w = &spectrum.weyl;
            println!("weyl: max |N - N_smooth| = {:.2} at k = {:.3} (bound {:.2})", w.max_deviation, w.at_k, w.threshold_at_max);
            spectrum.completeness().map_err(|e| HarnessError::Validation(e.to_string()))
        }
        Command::Count { common, spectrum, gamma, out } => {
            let cfg = base_config(&common)?;
            let (spec, _) = persist::read_spectrum(&spectrum)?;
            let subset = gamma
                .as_deref()
                .map(|g| BoundarySubset::parse_fractions(g, spec.perimeter))
                .transpose()
                .map_err(config_err)?;
            let seq = harness::count_stage(&spec, subset.as_ref(), &cfg.count.count)?;
            persist::write_file(&out, seq.to_text())?;
            let tang: usize = seq.records.iter().map(|r| r.tangencies).sum();
            println!("{} counts written to {} ({tang} suspect tangencies)", seq.records.len(), out.display());
            Ok(())
        }
        Command::Orbits { common, curve, max_bounces, out } => {
            let mut cfg = base_config(&common)?;
            if let Some(c) = curve {
                cfg.curve = load_curve(&c)?;
            }
            if let Some(n) = max_bounces {
                cfg.orbits.max_bounces = n;
            }
            cfg.validate()?;
            let boundary = cfg.curve.build()?;
            let orbit_cfg = bicount::orbits::OrbitSearchConfig { seed: cfg.seed, ..cfg.orbits };
            let table = harness::orbit_stage(&boundary, &orbit_cfg);
            persist::write_file(&out, table.to_json_lines())?;
            println!(
                "{} orbits ({} isolated) written to {}; dropped {} repetitions, {} nonphysical",
                table.orbits.len(),
                table.isolated().count(),
                out.display(),
                table.repetitions_dropped,
                table.nonphysical_dropped
            );
            Ok(())
        }
        Command::Spectrum { common, counts, orbits, q0, sigma, gamma, curve, out } => {
            let mut cfg = base_config(&common)?;
            if let Some(c) = curve {
                cfg.curve = load_curve(&c)?;
            }
            cfg.spectrum.q0 = q0.or(cfg.spectrum.q0);
            cfg.spectrum.sigma = sigma.or(cfg.spectrum.sigma);
            cfg.validate()?;
            let seq = BICountSequence::from_text(&persist::read_text(&counts)?).map_err(config_err)?;
            let table = OrbitTable::from_json_lines(&persist::read_text(&orbits)?).map_err(config_err)?;
            let boundary = cfg.curve.build()?;
            if (boundary.perimeter() - seq.perimeter).abs() > 1e-8 * seq.perimeter {
                return Err(HarnessError::Config("count table and curve have different perimeters".into()));
            }
            let gamma = match (gamma, &seq.gamma) {
                (Some(g), Some(h))
                    if BoundarySubset::parse_fractions(&g, seq.perimeter).map(|s| s.fraction_spec()).ok()
                        != BoundarySubset::parse_fractions(h, seq.perimeter).map(|s| s.fraction_spec()).ok() =>
                {
                    return Err(HarnessError::Config(format!("--gamma {g} differs from the count table's Γ {h}")))
                }
                (Some(_), None) => return Err(HarnessError::Config("count table has no Γ counts".into())),
                (_, h) => h.clone(),
            };
            let subset = gamma
                .as_deref()
                .map(|g| BoundarySubset::parse_fractions(g, seq.perimeter))
                .transpose()
                .map_err(config_err)?;
            let output = harness::spectra_stage(&seq, &table, &boundary, &cfg.spectrum, subset.as_ref())?;
            persist::write_file(&out.join("numerical.csv"), output.numerical.to_csv())?;
            persist::write_file(&out.join("semiclassical.csv"), output.semiclassical.to_csv())?;
            persist::write_file(&out.join("compare.txt"), output.compare.to_text())?;
            persist::write_file(&out.join("peaks.txt"), bicount::trace::peak_report_text(&output.peaks))?;
            if let (Some((n, s)), Some(c)) = (&output.gamma, &output.compare_gamma) {
                persist::write_file(&out.join("numerical_gamma.csv"), n.to_csv())?;
                persist::write_file(&out.join("semiclassical_gamma.csv"), s.to_csv())?;
                persist::write_file(&out.join("compare_gamma.txt"), c.to_text())?;
            }
            println!(
                "window q0 = {:.3}, sigma = {:.3}; background {:.3e}; spectra written to {}",
                output.window.q0,
                output.window.sigma,
                output.compare.background,
                out.display()
            );
            Ok(())
        }
        Command::ValidateRwm { common, spectrum, k, c, out } => {
            let cfg = base_config(&common)?;
            let (spec, meta) = persist::read_spectrum(&spectrum)?;
            let boundary = CurveSection { spec: meta.curve, resolution: meta.resolution }.build()?;
            let c = c.unwrap_or(cfg.rwm.c);
            let report = bicount::rwm::validate_window(&spec, &boundary, k, c, cfg.rwm.bins, &cfg.count.count)
                .map_err(|e| HarnessError::numerical("validate-rwm", e))?;
            let text = report.to_text();
            match out {
                Some(p) => persist::write_file(&p, &text)?,
                None => print!("{text}"),
            }
            if report.rice_deviation.abs() > cfg.rwm.max_rice_deviation {
                return Err(HarnessError::Validation(format!(
                    "Rice integral {:.3} vs counted {:.3}",
                    report.rice_eta, report.counted_eta
                )));
            }
            Ok(())
        }
        Command::Compare { common, numerical, semiclassical, orbits, out } => {
            let cfg = base_config(&common)?;
            let read = |p: &Path| LengthSpectrum::from_csv(&persist::read_text(p)?).map_err(config_err);
            let num = read(&numerical)?;
            let scl = read(&semiclassical)?;
            let table = orbits
                .map(|p| OrbitTable::from_json_lines(&persist::read_text(&p)?).map_err(config_err))
                .transpose()?;
            let isolated: Vec<_> = table.iter().flat_map(|t| t.isolated().cloned()).collect();
            let tol = harness::SpectraOutput::peak_tolerance(&num.window);
            let report = harness::compare_report(&num, &scl, &isolated, cfg.spectrum.r_max, 0.1, tol);
            persist::write_file(&out.join("compare.txt"), report.to_text())?;
            let markers = isolated.iter().map(|o| (o.length, o.id.to_string())).collect();
            harness::emit_plot_data(&out, "compare", &num, Some((&scl, report.calibration)), markers)?;
            print!("{}", report.to_text());
            Ok(())
        }
        Command::Run { common, preset, out } => {
            let mut cfg = match preset {
                Some(p) => RunConfig::preset(&p)?,
                None => base_config(&common)?,
            };
            if let Some(o) = out {
                cfg.output = o;
            }
            let result = harness::run_pipeline(&cfg)?;
            println!(
                "run {} in {}: {} levels, {} orbits, {} stage(s) recomputed",
                cfg.name,
                result.dir.display(),
                result.spectrum.modes.len(),
                result.orbits.orbits.len(),
                result.manifest.stages_recomputed()
            );
            if result.validation_failures.is_empty() {
                Ok(())
            } else {
                Err(HarnessError::Validation(result.validation_failures.join("; ")))
            }
        }
        Command::Preset { name } => {
            print!("{}", RunConfig::preset(&name)?.to_toml());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
