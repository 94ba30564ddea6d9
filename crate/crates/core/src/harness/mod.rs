//! End-to-end pipeline: solve → orbits → count → length spectra, plus the
//! random-wave check, with per-stage caching keyed on parameter hashes.

pub mod compare;
pub mod config;
pub mod persist;

use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bim::{assemble_spectrum, Spectrum, SpectrumSolver};
use crate::geometry::BoundaryCurve;
use crate::nodal::{
    smoothed_density, windowed_fluctuation, BICountSequence, BoundarySubset, CountConfig, CountSource,
    DensityVariable, Window,
};
use crate::orbits::{find_orbits_up_to, OrbitSearchConfig, OrbitTable, PeriodicOrbit};
use crate::rwm::{validate_window, RwmReport};
use crate::trace::{
    numerical_length_spectrum, peak_report, peak_report_text, semiclassical_length_spectrum, smooth_density,
    LengthGrid, LengthSpectrum, PartialSmooth, PeakRow, SpectrumWindow, TraceFormulaInput,
};

pub use compare::{compare_report, emit_plot_data, CompareReport};
pub use config::{hash_of, CurveSection, RunConfig, SolveSection, SpectrumSection};
pub use persist::{Manifest, SpectrumMeta, StageRecord};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{stage} stage failed: {message}")]
    Numerical { stage: String, message: String },
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl HarnessError {
    pub fn numerical(stage: &str, e: impl std::fmt::Display) -> Self {
        HarnessError::Numerical { stage: stage.into(), message: e.to_string() }
    }

    /// Process exit status for the command-line driver.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Io(_) => 1,
            HarnessError::Config(_) => 2,
            HarnessError::Numerical { .. } => 3,
            HarnessError::Validation(_) => 4,
        }
    }
}

/// All levels below `k_max`, solving window by window and reusing windows
/// already stored under `dir` with the same curve and solver settings.
pub fn solve_stage(curve: &CurveSection, solve: &SolveSection, dir: &Path) -> Result<Spectrum, HarnessError> {
    let boundary = curve.build()?;
    let solver = SpectrumSolver::new(&boundary, solve.solver).map_err(|e| HarnessError::Config(e.to_string()))?;
    let window_key = hash_of(&(curve, &solve.solver));
    let mut windows = Vec::new();
    let all = solver.windows(solve.k_max);
    for (i, (lo, hi)) in all.iter().copied().enumerate() {
        let path = persist::window_path(dir, lo, hi);
        if let Some(w) = persist::load_window(&path, &window_key) {
            windows.push(w);
            continue;
        }
        let t = Instant::now();
        let w = solver.solve_window(lo, hi).map_err(|e| HarnessError::numerical("solve", e))?;
        info!(
            "window {}/{} [{lo:.3}, {hi:.3}): {} levels, N = {}, {:.1}s",
            i + 1,
            all.len(),
            w.modes.len(),
            w.points,
            t.elapsed().as_secs_f64()
        );
        persist::store_window(&path, &window_key, &w)?;
        windows.push(w);
    }
    let spectrum = assemble_spectrum(windows, &boundary, solve.k_max, &solve.solver);
    let meta = SpectrumMeta {
        curve: curve.spec,
        resolution: curve.resolution,
        solver: solve.solver,
        k_max: solve.k_max,
        perimeter: spectrum.perimeter,
        area: spectrum.area,
        levels: spectrum.modes.len(),
        normalization: persist::NORMALIZATION.into(),
        weyl: spectrum.weyl.clone(),
    };
    persist::write_spectrum(dir, &spectrum, &meta)?;
    Ok(spectrum)
}

pub fn orbit_stage(curve: &BoundaryCurve, cfg: &OrbitSearchConfig) -> OrbitTable {
    find_orbits_up_to(curve, cfg)
}

/// A boundary subset that removes every bounce of one orbit and keeps every
/// bounce of another.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaChoice {
    pub fractions: String,
    pub excluded_orbit: Option<usize>,
    pub kept_orbit: Option<usize>,
}

impl GammaChoice {
    pub fn subset(&self, perimeter: f64) -> Result<BoundarySubset, HarnessError> {
        BoundarySubset::parse_fractions(&self.fractions, perimeter).map_err(|e| HarnessError::Config(e.to_string()))
    }
}

fn circular_distance(a: f64, b: f64, perimeter: f64) -> f64 {
    let d = (a - b).rem_euclid(perimeter);
    d.min(perimeter - d)
}

/// Picks the shortest isolated orbit `a` whose length is at least `sep`
/// from every other orbit length with `|Φ| > 1`, cuts gaps of half-width `gap·L` around its
/// bounces, and pairs it with the shortest other such orbit `b` whose
/// bounces all stay clear of the gaps.
pub fn auto_gamma(table: &OrbitTable, perimeter: f64, gap: f64, sep: f64) -> Result<GammaChoice, HarnessError> {
    let isolated: Vec<&PeriodicOrbit> = table.isolated().collect();
    let separated = |o: &PeriodicOrbit| {
        table
            .orbits
            .iter()
            .filter(|p| p.id != o.id && p.phi.abs() > 1.0)
            .all(|p| (p.length - o.length).abs() >= sep)
            && o.phi.abs() > 1.0
    };
    let half = gap * perimeter;
    let clear_margin = 0.5 * half;
    let candidates: Vec<&PeriodicOrbit> = isolated.iter().copied().filter(|o| separated(o)).collect();
    for a in &candidates {
        for b in &candidates {
            if a.id == b.id {
                continue;
            }
            let clear = b
                .bounces
                .iter()
                .all(|&sb| a.bounces.iter().all(|&sa| circular_distance(sa, sb, perimeter) > half + clear_margin));
            if !clear {
                continue;
            }
            let gaps: Vec<(f64, f64)> = a.bounces.iter().map(|&s| (s - half, s + half)).collect();
            let cut = BoundarySubset::new(perimeter, &gaps).map_err(|e| HarnessError::Config(e.to_string()))?;
            return Ok(GammaChoice {
                fractions: cut.complement().fraction_spec(),
                excluded_orbit: Some(a.id),
                kept_orbit: Some(b.id),
            });
        }
    }
    Err(HarnessError::Config(
        "gamma = \"auto\": no pair of well-separated orbits with disjoint bounce neighbourhoods".into(),
    ))
}

pub fn resolve_gamma(
    spec: Option<&str>,
    table: Option<&OrbitTable>,
    perimeter: f64,
    gap: f64,
) -> Result<Option<GammaChoice>, HarnessError> {
    match spec {
        None => Ok(None),
        Some("auto") => {
            let table = table.ok_or_else(|| HarnessError::Config("gamma = \"auto\" needs an orbit table".into()))?;
            auto_gamma(table, perimeter, gap, 0.3).map(Some)
        }
        Some(s) => {
            BoundarySubset::parse_fractions(s, perimeter).map_err(|e| HarnessError::Config(e.to_string()))?;
            Ok(Some(GammaChoice { fractions: s.to_string(), excluded_orbit: None, kept_orbit: None }))
        }
    }
}

pub fn count_stage(
    spectrum: &Spectrum,
    gamma: Option<&BoundarySubset>,
    cfg: &CountConfig,
) -> Result<BICountSequence, HarnessError> {
    let seq = BICountSequence::from_spectrum(spectrum, gamma, cfg).map_err(|e| HarnessError::numerical("count", e))?;
    seq.check_contiguous().map_err(|e| HarnessError::numerical("count", e))?;
    Ok(seq)
}

/// Numerical and semiclassical length spectra, full and (when present)
/// restricted to `Γ`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectraOutput {
    pub window: Window,
    pub input: TraceFormulaInput,
    pub numerical: LengthSpectrum,
    pub semiclassical: LengthSpectrum,
    pub gamma: Option<(LengthSpectrum, LengthSpectrum)>,
    pub compare: CompareReport,
    pub compare_gamma: Option<CompareReport>,
    pub peaks: Vec<PeakRow>,
}

impl SpectraOutput {
    pub fn peak_tolerance(window: &Window) -> f64 {
        (2.0 / window.sigma).max(0.05)
    }
}

pub fn spectra_stage(
    seq: &BICountSequence,
    table: &OrbitTable,
    curve: &BoundaryCurve,
    section: &SpectrumSection,
    gamma: Option<&BoundarySubset>,
) -> Result<SpectraOutput, HarnessError> {
    let err = |e: &dyn std::fmt::Display| HarnessError::numerical("spectrum", e);
    let (l, a) = (seq.perimeter, seq.area);
    let q_max = seq.records.last().map_or(0.0, |r| seq.q_of(r.n));
    let window = section.window_for(q_max);
    let grid = LengthGrid { x_max: section.x_max, dx: section.dx };
    let fluct = |source: CountSource, smooth: &dyn Fn(f64) -> f64| {
        let d = smoothed_density(seq, DensityVariable::Q, section.grid_step, section.density_width, source)
            .map_err(|e| err(&e))?;
        let f = windowed_fluctuation(&d, smooth, window).map_err(|e| err(&e))?;
        numerical_length_spectrum(&f, &grid).map_err(|e| err(&e))
    };
    let numerical = fluct(CountSource::Full, &|q| smooth_density(q, l, a))?;
    let input = TraceFormulaInput::new(
        l,
        a,
        table,
        section.r_max,
        SpectrumWindow { window, kernel_width: section.density_width },
    );
    let semiclassical = semiclassical_length_spectrum(&input, &grid, section.mode, None).map_err(|e| err(&e))?;
    let tol = SpectraOutput::peak_tolerance(&window);
    let compare = compare_report(&numerical, &semiclassical, &input.orbits, input.r_max, 0.1, tol);
    let peaks = peak_report(&numerical, &semiclassical, &input, tol);

    let (gamma_pair, compare_gamma) = match gamma {
        Some(g) => {
            let partial = PartialSmooth::new(curve, g);
            let num_g = fluct(CountSource::Gamma, &|q| partial.eval(q))?;
            let scl_g = semiclassical_length_spectrum(&input, &grid, section.mode, Some(g)).map_err(|e| err(&e))?;
            let cmp = compare_report(&num_g, &scl_g, &input.orbits, input.r_max, 0.1, tol);
            (Some((num_g, scl_g)), Some(cmp))
        }
        None => (None, None),
    };
    Ok(SpectraOutput {
        window,
        input,
        numerical,
        semiclassical,
        gamma: gamma_pair,
        compare,
        compare_gamma,
        peaks,
    })
}

pub fn rwm_stage(
    spectrum: &Spectrum,
    curve: &BoundaryCurve,
    cfg: &RunConfig,
) -> Result<RwmReport, HarnessError> {
    let center = cfg.rwm.center.unwrap_or(0.75 * cfg.solve.k_max);
    validate_window(spectrum, curve, center, cfg.rwm.c, cfg.rwm.bins, &cfg.count.count)
        .map_err(|e| HarnessError::numerical("rwm", e))
}

/// Everything a finished run produced, loaded or computed.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub dir: PathBuf,
    pub manifest: Manifest,
    pub curve: BoundaryCurve,
    pub spectrum: Spectrum,
    pub orbits: OrbitTable,
    pub gamma: Option<GammaChoice>,
    pub counts: BICountSequence,
    pub spectra: SpectraOutput,
    pub rwm: Option<RwmReport>,
    /// Checks that ran to completion but did not pass.
    pub validation_failures: Vec<String>,
}

struct Stager<'a> {
    dir: &'a Path,
    old: Option<Manifest>,
    new: Manifest,
}

impl Stager<'_> {
    /// Runs `compute` unless the previous manifest holds this stage with the
    /// same key and intact files; `load` then rebuilds the value from disk.
    fn stage<T>(
        &mut self,
        name: &str,
        key: &str,
        load: impl FnOnce(&Path) -> Result<T, HarnessError>,
        compute: impl FnOnce(&Path) -> Result<(T, Vec<PathBuf>), HarnessError>,
    ) -> Result<T, HarnessError> {
        let t = Instant::now();
        if let Some(old) = &self.old {
            if old.is_fresh(self.dir, name, key) {
                if let Ok(v) = load(self.dir) {
                    let mut rec = old.stages[name].clone();
                    rec.cached = true;
                    self.new.stages.insert(name.into(), rec);
                    info!("{name}: cached");
                    return Ok(v);
                }
            }
        }
        let (value, files) = compute(self.dir)?;
        let rec = StageRecord {
            key: key.into(),
            seconds: t.elapsed().as_secs_f64(),
            cached: false,
            files: persist::checksums(self.dir, &files)?,
        };
        info!("{name}: {:.1}s", rec.seconds);
        self.new.stages.insert(name.into(), rec);
        // keep finished stages even if a later one fails
        self.new.store(self.dir)?;
        Ok(value)
    }
}

fn write_text(dir: &Path, rel: &str, text: impl AsRef<[u8]>) -> Result<PathBuf, HarnessError> {
    let p = dir.join(rel);
    persist::write_file(&p, text)?;
    Ok(p)
}

fn write_spectra(dir: &Path, out: &SpectraOutput) -> Result<Vec<PathBuf>, HarnessError> {
    let mut files = vec![
        write_text(dir, "length/numerical.csv", out.numerical.to_csv())?,
        write_text(dir, "length/semiclassical.csv", out.semiclassical.to_csv())?,
        write_text(dir, "length/compare.txt", out.compare.to_text())?,
        write_text(dir, "length/peaks.txt", peak_report_text(&out.peaks))?,
        write_text(dir, "length/window.json", serde_json::to_vec_pretty(&out.window).expect("window"))?,
    ];
    let markers: Vec<(f64, String)> =
        out.input.orbits.iter().map(|o| (o.length, o.id.to_string())).collect();
    files.extend(emit_plot_data(
        &dir.join("plot"),
        "full",
        &out.numerical,
        Some((&out.semiclassical, out.compare.calibration)),
        markers.clone(),
    )?);
    if let (Some((num, scl)), Some(cmp)) = (&out.gamma, &out.compare_gamma) {
        files.push(write_text(dir, "length/numerical_gamma.csv", num.to_csv())?);
        files.push(write_text(dir, "length/semiclassical_gamma.csv", scl.to_csv())?);
        files.push(write_text(dir, "length/compare_gamma.txt", cmp.to_text())?);
        // Γ spectra share the full-boundary calibration
        files.extend(emit_plot_data(
            &dir.join("plot"),
            "gamma",
            num,
            Some((scl, out.compare.calibration)),
            markers,
        )?);
    }
    Ok(files)
}

fn read_spectra_files(dir: &Path) -> Result<(LengthSpectrum, LengthSpectrum, Option<(LengthSpectrum, LengthSpectrum)>), HarnessError> {
    let read = |rel: &str| -> Result<LengthSpectrum, HarnessError> {
        let p = dir.join(rel);
        LengthSpectrum::from_csv(&persist::read_text(&p)?).map_err(|e| persist::io_err(&p, e))
    };
    let gamma = if dir.join("length/numerical_gamma.csv").exists() {
        Some((read("length/numerical_gamma.csv")?, read("length/semiclassical_gamma.csv")?))
    } else {
        None
    };
    Ok((read("length/numerical.csv")?, read("length/semiclassical.csv")?, gamma))
}

/// Runs (or reloads) every stage of `cfg` under `cfg.output`.
pub fn run_pipeline(cfg: &RunConfig) -> Result<RunOutput, HarnessError> {
    cfg.validate()?;
    let dir = cfg.output.clone();
    std::fs::create_dir_all(&dir).map_err(|e| persist::io_err(&dir, e))?;
    write_text(&dir, "config.toml", cfg.to_toml())?;
    let curve = cfg.curve.build()?;
    let mut st = Stager {
        dir: &dir,
        old: Manifest::load(&dir),
        new: Manifest { config_hash: hash_of(cfg), ..Default::default() },
    };
    let mut failures = Vec::new();

    let solve_key = hash_of(&(&cfg.curve, &cfg.solve));
    let spectrum = st.stage(
        "solve",
        &solve_key,
        |d| persist::read_spectrum(&d.join("spectrum")).map(|(s, _)| s),
        |d| {
            let s = solve_stage(&cfg.curve, &cfg.solve, &d.join("spectrum"))?;
            let mut files: Vec<PathBuf> = [persist::LEVELS_FILE, persist::MODES_FILE, persist::SPECTRUM_MANIFEST]
                .iter()
                .map(|f| d.join("spectrum").join(f))
                .collect();
            files.push(write_text(d, "curve.csv", curve.export_csv(512))?);
            Ok((s, files))
        },
    )?;
    if let Err(e) = spectrum.completeness() {
        failures.push(format!("solve: {e}"));
    }

    let orbit_cfg = OrbitSearchConfig { seed: cfg.seed, ..cfg.orbits };
    let orbit_key = hash_of(&(&cfg.curve, &orbit_cfg));
    let orbits = st.stage(
        "orbits",
        &orbit_key,
        |d| {
            let p = d.join("orbits.jsonl");
            OrbitTable::from_json_lines(&persist::read_text(&p)?).map_err(|e| persist::io_err(&p, e))
        },
        |d| {
            let t = orbit_stage(&curve, &orbit_cfg);
            let p = write_text(d, "orbits.jsonl", t.to_json_lines())?;
            Ok((t, vec![p]))
        },
    )?;

    let count_key = hash_of(&(&solve_key, &cfg.count, &orbit_key));
    let (counts, gamma) = st.stage(
        "count",
        &count_key,
        |d| {
            let p = d.join("counts.txt");
            let seq = BICountSequence::from_text(&persist::read_text(&p)?).map_err(|e| persist::io_err(&p, e))?;
            let g = d.join("gamma.json");
            let gamma: Option<GammaChoice> =
                serde_json::from_str(&persist::read_text(&g)?).map_err(|e| persist::io_err(&g, e))?;
            Ok((seq, gamma))
        },
        |d| {
            let gamma = resolve_gamma(cfg.count.gamma.as_deref(), Some(&orbits), curve.perimeter(), cfg.count.auto_gap)?;
            let subset = gamma.as_ref().map(|g| g.subset(curve.perimeter())).transpose()?;
            let seq = count_stage(&spectrum, subset.as_ref(), &cfg.count.count)?;
            let files = vec![
                write_text(d, "counts.txt", seq.to_text())?,
                write_text(d, "gamma.json", serde_json::to_vec_pretty(&gamma).expect("gamma"))?,
            ];
            Ok(((seq, gamma), files))
        },
    )?;
    let subset = gamma.as_ref().map(|g| g.subset(curve.perimeter())).transpose()?;

    let spectrum_key = hash_of(&(&count_key, &orbit_key, &cfg.spectrum));
    // the reports are cheap to rebuild; the cached stage only skips the transforms
    let spectra = st.stage(
        "spectrum",
        &spectrum_key,
        |d| {
            let (numerical, semiclassical, gamma_pair) = read_spectra_files(d)?;
            let mut out = spectra_stage_reports(&counts, &orbits, &cfg.spectrum, numerical, semiclassical)?;
            if let Some((num_g, scl_g)) = gamma_pair {
                out.compare_gamma = Some(compare_report(
                    &num_g,
                    &scl_g,
                    &out.input.orbits,
                    out.input.r_max,
                    0.1,
                    SpectraOutput::peak_tolerance(&out.window),
                ));
                out.gamma = Some((num_g, scl_g));
            }
            Ok(out)
        },
        |d| {
            let out = spectra_stage(&counts, &orbits, &curve, &cfg.spectrum, subset.as_ref())?;
            let files = write_spectra(d, &out)?;
            Ok((out, files))
        },
    )?;

    let rwm = if cfg.rwm.enabled {
        let rwm_key = hash_of(&(&solve_key, &cfg.rwm, &cfg.count.count));
        let r = st.stage(
            "rwm",
            &rwm_key,
            |d| {
                let p = d.join("rwm.json");
                serde_json::from_str(&persist::read_text(&p)?).map_err(|e| persist::io_err(&p, e))
            },
            |d| {
                let r = rwm_stage(&spectrum, &curve, cfg)?;
                let files = vec![
                    write_text(d, "rwm_report.txt", r.to_text())?,
                    write_text(d, "rwm.json", serde_json::to_vec_pretty(&r).expect("rwm"))?,
                ];
                Ok((r, files))
            },
        )?;
        if r.rice_deviation.abs() > cfg.rwm.max_rice_deviation {
            failures.push(format!(
                "rwm: Rice integral deviates from the counted mean by {:+.3}",
                r.rice_deviation
            ));
        }
        Some(r)
    } else {
        None
    };

    st.new.notes = failures.clone();
    st.new.store(&dir)?;
    let manifest = st.new;
    Ok(RunOutput {
        dir,
        manifest,
        curve,
        spectrum,
        orbits,
        gamma,
        counts,
        spectra,
        rwm,
        validation_failures: failures,
    })
}

/// Rebuilds the report part of [`SpectraOutput`] around stored spectra.
fn spectra_stage_reports(
    seq: &BICountSequence,
    table: &OrbitTable,
    section: &SpectrumSection,
    numerical: LengthSpectrum,
    semiclassical: LengthSpectrum,
) -> Result<SpectraOutput, HarnessError> {
    let window = numerical.window;
    let input = TraceFormulaInput::new(
        seq.perimeter,
        seq.area,
        table,
        section.r_max,
        SpectrumWindow { window, kernel_width: section.density_width },
    );
    let tol = SpectraOutput::peak_tolerance(&window);
    let compare = compare_report(&numerical, &semiclassical, &input.orbits, input.r_max, 0.1, tol);
    let peaks = peak_report(&numerical, &semiclassical, &input, tol);
    Ok(SpectraOutput {
        window,
        input,
        numerical,
        semiclassical,
        gamma: None,
        compare,
        compare_gamma: None,
        peaks,
    })
}
