//! Boundary-intersection counts: zeros of the boundary functions `u_n(s)`.

use std::f64::consts::{PI, TAU};
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bim::{EigenMode, Spectrum};
use crate::fourier::{resample, TrigInterpolant};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CountError {
    #[error("mode {n} at k = {k} has {samples} samples, needs {required}")]
    UnderSampled { n: usize, k: f64, samples: usize, required: usize },
    #[error("count sequence jumps from n = {after} to n = {next}")]
    IncompleteSequence { after: usize, next: usize },
    #[error("kernel width {width} is below twice the grid step {step}")]
    KernelTooNarrow { width: f64, step: f64 },
    #[error("window [{lo:.3}, {hi:.3}] leaves the computed range [{range_lo:.3}, {range_hi:.3}]")]
    WindowOutOfRange { lo: f64, hi: f64, range_lo: f64, range_hi: f64 },
    #[error("invalid boundary subset: {0}")]
    InvalidSubset(String),
    #[error("no partial counts in this sequence")]
    NoPartialCounts,
    #[error("malformed count table line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

/// A union of arclength intervals `[s_a, s_b)` on a boundary of length `L`.
/// Stored normalized: inside `[0, L)`, sorted, disjoint, non-adjacent.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundarySubset {
    perimeter: f64,
    intervals: Vec<(f64, f64)>,
}

impl BoundarySubset {
    /// Intervals may wrap (`s_b < s_a` means `[s_a, L) ∪ [0, s_b)`); an
    /// interval of length `≥ L` covers everything.
    pub fn new(perimeter: f64, intervals: &[(f64, f64)]) -> Result<Self, CountError> {
        if !(perimeter > 0.0 && perimeter.is_finite()) {
            return Err(CountError::InvalidSubset(format!("perimeter {perimeter}")));
        }
        let mut pieces = Vec::new();
        for &(a, b) in intervals {
            if !(a.is_finite() && b.is_finite()) {
                return Err(CountError::InvalidSubset(format!("non-finite interval ({a}, {b})")));
            }
            if b - a >= perimeter {
                pieces.push((0.0, perimeter));
                continue;
            }
            let a0 = a.rem_euclid(perimeter);
            let b0 = b.rem_euclid(perimeter);
            if a0 == b0 {
                continue;
            }
            if b0 > a0 {
                pieces.push((a0, b0));
            } else {
                pieces.push((a0, perimeter));
                if b0 > 0.0 {
                    pieces.push((0.0, b0));
                }
            }
        }
        pieces.sort_by(|x, y| x.0.total_cmp(&y.0));
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(pieces.len());
        for (a, b) in pieces {
            match merged.last_mut() {
                Some(last) if a <= last.1 => last.1 = last.1.max(b),
                _ => merged.push((a, b)),
            }
        }
        Ok(Self { perimeter, intervals: merged })
    }

    pub fn full(perimeter: f64) -> Self {
        Self { perimeter, intervals: vec![(0.0, perimeter)] }
    }

    pub fn empty(perimeter: f64) -> Self {
        Self { perimeter, intervals: Vec::new() }
    }

    /// Parses `"0.1:0.3,0.9:0.05"` (fractions of `L`), `"full"` or `"empty"`.
    pub fn parse_fractions(spec: &str, perimeter: f64) -> Result<Self, CountError> {
        let spec = spec.trim();
        match spec {
            "full" => return Ok(Self::full(perimeter)),
            "empty" | "" => return Ok(Self::empty(perimeter)),
            _ => {}
        }
        let mut out = Vec::new();
        for part in spec.split(',') {
            let (a, b) = part
                .split_once(':')
                .ok_or_else(|| CountError::InvalidSubset(format!("expected a:b, got {part:?}")))?;
            let parse = |x: &str| {
                x.trim()
                    .parse::<f64>()
                    .map_err(|_| CountError::InvalidSubset(format!("bad number {x:?}")))
            };
            let (fa, fb) = (parse(a)?, parse(b)?);
            if !(0.0..=1.0).contains(&fa) || !(0.0..=1.0).contains(&fb) {
                return Err(CountError::InvalidSubset(format!("fractions must lie in [0, 1]: {part:?}")));
            }
            out.push((fa * perimeter, fb * perimeter));
        }
        Self::new(perimeter, &out)
    }

    /// Inverse of [`parse_fractions`](Self::parse_fractions) (wrapping
    /// intervals come out split at `s = 0`).
    pub fn fraction_spec(&self) -> String {
        if self.intervals.is_empty() {
            return "empty".into();
        }
        self.intervals
            .iter()
            .map(|(a, b)| format!("{}:{}", a / self.perimeter, b / self.perimeter))
            .collect::<Vec<_>>()
            .join(",")
    }

    pub fn perimeter(&self) -> f64 {
        self.perimeter
    }

    pub fn intervals(&self) -> &[(f64, f64)] {
        &self.intervals
    }

    pub fn contains(&self, s: f64) -> bool {
        let s = s.rem_euclid(self.perimeter);
        self.intervals.iter().any(|&(a, b)| s >= a && s < b)
    }

    pub fn measure(&self) -> f64 {
        self.intervals.iter().map(|(a, b)| b - a).sum()
    }

    pub fn complement(&self) -> Self {
        let mut out = Vec::new();
        let mut cursor = 0.0;
        for &(a, b) in &self.intervals {
            if a > cursor {
                out.push((cursor, a));
            }
            cursor = b;
        }
        if cursor < self.perimeter {
            out.push((cursor, self.perimeter));
        }
        Self { perimeter: self.perimeter, intervals: out }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CountConfig {
    /// Samples with `|u| ≤ tolerance · max|u|` are treated as zero.
    pub tolerance: f64,
    /// Upsampling factor applied before scanning for sign changes.
    pub upsample: usize,
    pub min_samples_per_wavelength: f64,
}

impl Default for CountConfig {
    fn default() -> Self {
        Self { tolerance: 1e-6, upsample: 4, min_samples_per_wavelength: 6.0 }
    }
}

/// Arc on which `|u|` stayed below tolerance for more than half a boundary
/// wavelength. No crossing is counted there.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuspectTangency {
    pub s_start: f64,
    pub s_end: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BiCount {
    pub eta: usize,
    /// Sorted zero locations in `[0, L)`.
    pub zeros: Vec<f64>,
    pub tangencies: Vec<SuspectTangency>,
}

impl BiCount {
    pub fn count_in(&self, gamma: &BoundarySubset) -> usize {
        self.zeros.iter().filter(|&&s| gamma.contains(s)).count()
    }
}

/// Illinois false position for a sign change of `f` on `[a, b]`.
fn refine_root(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let mut fa = f(a);
    let mut fb = f(b);
    if fa == 0.0 {
        return a;
    }
    if fb == 0.0 {
        return b;
    }
    if fa * fb > 0.0 {
        return 0.5 * (a + b);
    }
    let mut kept = 0i8;
    for _ in 0..200 {
        let c = (a * fb - b * fa) / (fb - fa);
        let c = if c > a && c < b { c } else { 0.5 * (a + b) };
        let fc = f(c);
        if fc == 0.0 || b - a < tol {
            return c;
        }
        if fa * fc < 0.0 {
            b = c;
            fb = fc;
            if kept == -1 {
                fa *= 0.5;
            }
            kept = -1;
        } else {
            a = c;
            fa = fc;
            if kept == 1 {
                fb *= 0.5;
            }
            kept = 1;
        }
    }
    0.5 * (a + b)
}

/// Sign changes of the boundary function around the closed boundary.
pub fn count_bi(mode: &EigenMode, perimeter: f64, cfg: &CountConfig) -> Result<BiCount, CountError> {
    let u = &mode.samples;
    let n = u.len();
    let required = (cfg.min_samples_per_wavelength * mode.k * perimeter / TAU).ceil() as usize;
    if n < required.max(2) {
        return Err(CountError::UnderSampled { n: mode.index, k: mode.k, samples: n, required });
    }
    let fine = resample(u, n * cfg.upsample.max(1));
    let m = fine.len();
    let h = perimeter / m as f64;
    let peak = fine.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    let tol = cfg.tolerance * peak;
    let half_wavelength = PI / mode.k.max(f64::MIN_POSITIVE);

    let significant: Vec<usize> = (0..m).filter(|&j| fine[j].abs() > tol).collect();
    if significant.is_empty() {
        let tangencies = vec![SuspectTangency { s_start: 0.0, s_end: perimeter }];
        return Ok(BiCount { eta: 0, zeros: Vec::new(), tangencies });
    }
    let interp = TrigInterpolant::new(u, perimeter);
    let mut zeros = Vec::new();
    let mut tangencies = Vec::new();
    let count = significant.len();
    for idx in 0..count {
        let a = significant[idx];
        let b = significant[(idx + 1) % count];
        // index gap, unwrapped across s = 0
        let gap = if b > a { b - a } else { b + m - a };
        let s_a = a as f64 * h;
        let s_b = s_a + gap as f64 * h;
        if (gap - 1) as f64 * h > half_wavelength {
            tangencies.push(SuspectTangency {
                s_start: (s_a + h).rem_euclid(perimeter),
                s_end: (s_b - h).rem_euclid(perimeter),
            });
            continue;
        }
        if fine[a].signum() != fine[b].signum() {
            let s = refine_root(|s| interp.eval(s), s_a, s_b, 1e-13 * perimeter);
            zeros.push(s.rem_euclid(perimeter));
        }
    }
    zeros.sort_by(f64::total_cmp);
    Ok(BiCount { eta: zeros.len(), zeros, tangencies })
}

/// Zeros of the mode lying in `gamma`.
pub fn count_bi_partial(
    mode: &EigenMode,
    perimeter: f64,
    gamma: &BoundarySubset,
    cfg: &CountConfig,
) -> Result<usize, CountError> {
    Ok(count_bi(mode, perimeter, cfg)?.count_in(gamma))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CountRecord {
    pub n: usize,
    pub k: f64,
    pub eta: usize,
    pub eta_gamma: Option<usize>,
    pub tangencies: usize,
}

/// Counts for a whole spectrum, in spectral order.
#[derive(Debug, Clone, PartialEq)]
pub struct BICountSequence {
    pub records: Vec<CountRecord>,
    pub perimeter: f64,
    pub area: f64,
    pub tolerance: f64,
    /// Fraction spec of Γ when partial counts are present.
    pub gamma: Option<String>,
}

impl BICountSequence {
    pub fn from_spectrum(
        spectrum: &Spectrum,
        gamma: Option<&BoundarySubset>,
        cfg: &CountConfig,
    ) -> Result<Self, CountError> {
        let records = spectrum
            .modes
            .par_iter()
            .map(|mode| {
                let c = count_bi(mode, spectrum.perimeter, cfg)?;
                Ok(CountRecord {
                    n: mode.index,
                    k: mode.k,
                    eta: c.eta,
                    eta_gamma: gamma.map(|g| c.count_in(g)),
                    tangencies: c.tangencies.len(),
                })
            })
            .collect::<Result<Vec<_>, CountError>>()?;
        Ok(Self {
            records,
            perimeter: spectrum.perimeter,
            area: spectrum.area,
            tolerance: cfg.tolerance,
            gamma: gamma.map(BoundarySubset::fraction_spec),
        })
    }

    /// Record indices must run `1, 2, 3, …` without gaps.
    pub fn check_contiguous(&self) -> Result<(), CountError> {
        let mut prev = 0;
        for r in &self.records {
            if r.n != prev + 1 {
                return Err(CountError::IncompleteSequence { after: prev, next: r.n });
            }
            prev = r.n;
        }
        Ok(())
    }

    /// Unfolded wavenumber `q_n = √(4πn/A)`.
    pub fn q_of(&self, n: usize) -> f64 {
        (4.0 * PI * n as f64 / self.area).sqrt()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# bicount count table");
        let _ = writeln!(out, "# perimeter {:.17e}", self.perimeter);
        let _ = writeln!(out, "# area {:.17e}", self.area);
        let _ = writeln!(out, "# tolerance {:e}", self.tolerance);
        let _ = writeln!(out, "# gamma {}", self.gamma.as_deref().unwrap_or("none"));
        let _ = writeln!(out, "# n k eta eta_gamma tangencies");
        for r in &self.records {
            let g = r.eta_gamma.map_or_else(|| "-".to_string(), |g| g.to_string());
            let _ = writeln!(out, "{} {:.15} {} {} {}", r.n, r.k, r.eta, g, r.tangencies);
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, CountError> {
        let mut seq = Self { records: Vec::new(), perimeter: f64::NAN, area: f64::NAN, tolerance: f64::NAN, gamma: None };
        for (i, line) in text.lines().enumerate() {
            let err = |reason: &str| CountError::Parse { line: i + 1, reason: reason.to_string() };
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                let mut it = rest.split_whitespace();
                let key = it.next().unwrap_or("");
                let val = it.next().unwrap_or("");
                let num = || val.parse::<f64>().map_err(|_| err("bad header value"));
                match key {
                    "perimeter" => seq.perimeter = num()?,
                    "area" => seq.area = num()?,
                    "tolerance" => seq.tolerance = num()?,
                    "gamma" if val != "none" => seq.gamma = Some(val.to_string()),
                    _ => {}
                }
                continue;
            }
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 5 {
                return Err(err("expected 5 fields"));
            }
            seq.records.push(CountRecord {
                n: f[0].parse().map_err(|_| err("n"))?,
                k: f[1].parse().map_err(|_| err("k"))?,
                eta: f[2].parse().map_err(|_| err("eta"))?,
                eta_gamma: if f[3] == "-" { None } else { Some(f[3].parse().map_err(|_| err("eta_gamma"))?) },
                tangencies: f[4].parse().map_err(|_| err("tangencies"))?,
            });
        }
        if !(seq.perimeter > 0.0 && seq.area > 0.0) {
            return Err(CountError::Parse { line: 0, reason: "missing perimeter/area header".into() });
        }
        Ok(seq)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DensityVariable {
    /// Spectral index `n`.
    N,
    /// Unfolded wavenumber `q = √(4πn/A)`.
    Q,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CountSource {
    Full,
    Gamma,
}

/// A count density per unit `n`, sampled on a uniform grid in `variable`.
#[derive(Debug, Clone, PartialEq)]
pub struct Density {
    pub variable: DensityVariable,
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    /// Gaussian kernel width, in units of `variable`.
    pub width: f64,
    /// Range covered by the sequence, `[0, q_N]` or `[0, N]`.
    pub range: (f64, f64),
}

fn gaussian(x: f64, width: f64) -> f64 {
    (-0.5 * (x / width).powi(2)).exp() / (width * TAU.sqrt())
}

/// `Σ_m ρ(x − x_m) η_m` with a normalized Gaussian `ρ`.
///
/// In the `q` variable each bump is weighted by `dq/dn = 2π/(A q_m)`, i.e.
/// `ρ(q − q_m) = ρ(n − m) · A q_m/(2π)`, so both variables give the count
/// density per unit `n` and every record contributes a bump of `n`-integral
/// `η_m`.
pub fn smoothed_density(
    seq: &BICountSequence,
    variable: DensityVariable,
    grid_step: f64,
    width: f64,
    source: CountSource,
) -> Result<Density, CountError> {
    if !(width >= 2.0 * grid_step) || !(grid_step > 0.0) {
        return Err(CountError::KernelTooNarrow { width, step: grid_step });
    }
    seq.check_contiguous()?;
    let last = seq.records.last().map_or(0, |r| r.n);
    let x_of = |n: usize| match variable {
        DensityVariable::N => n as f64,
        DensityVariable::Q => seq.q_of(n),
    };
    let x_max = x_of(last);
    let points = (x_max / grid_step).floor() as usize;
    let grid: Vec<f64> = (1..=points).map(|j| j as f64 * grid_step).collect();
    let mut values = vec![0.0; grid.len()];
    let reach = 8.0 * width;
    for r in &seq.records {
        let eta = match source {
            CountSource::Full => r.eta,
            CountSource::Gamma => r.eta_gamma.ok_or(CountError::NoPartialCounts)?,
        } as f64;
        if eta == 0.0 {
            continue;
        }
        let xm = x_of(r.n);
        let weight = match variable {
            DensityVariable::N => eta,
            DensityVariable::Q => eta * TAU / (seq.area * xm),
        };
        let lo = (((xm - reach) / grid_step).ceil() as isize - 1).max(0) as usize;
        let hi = (((xm + reach) / grid_step).floor() as usize).min(grid.len());
        for j in lo..hi {
            values[j] += weight * gaussian(grid[j] - xm, width);
        }
    }
    Ok(Density { variable, grid, values, width, range: (0.0, x_max) })
}

/// Gaussian window `W(q) = exp(−(q − q₀)²/(2σ²))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub q0: f64,
    pub sigma: f64,
}

impl Window {
    pub fn weight(&self, q: f64) -> f64 {
        (-0.5 * ((q - self.q0) / self.sigma).powi(2)).exp()
    }

    pub fn support(&self) -> (f64, f64) {
        (self.q0 - 3.0 * self.sigma, self.q0 + 3.0 * self.sigma)
    }
}

/// `f(q) = (d(q) − d_sm(q))/q · W(q)` on the grid points within `3σ` of `q₀`.
#[derive(Debug, Clone, PartialEq)]
pub struct Fluctuation {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub window: Window,
}

pub fn windowed_fluctuation(
    density: &Density,
    smooth: impl Fn(f64) -> f64,
    window: Window,
) -> Result<Fluctuation, CountError> {
    let (lo, hi) = window.support();
    let slack = 1e-9 * density.range.1.max(1.0);
    if !(window.sigma > 0.0) || lo < density.range.0 - slack || hi > density.range.1 + slack {
        return Err(CountError::WindowOutOfRange {
            lo,
            hi,
            range_lo: density.range.0,
            range_hi: density.range.1,
        });
    }
    let (grid, values) = density
        .grid
        .iter()
        .zip(&density.values)
        .filter(|(q, _)| **q >= lo && **q <= hi && **q > 0.0)
        .map(|(&q, &d)| (q, (d - smooth(q)) / q * window.weight(q)))
        .unzip();
    Ok(Fluctuation { grid, values, window })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mode_from(k: f64, n: usize, f: impl Fn(f64) -> f64) -> EigenMode {
        let samples = (0..n).map(|j| f(TAU * j as f64 / n as f64)).collect();
        EigenMode { index: 1, k, sigma_min: 0.0, samples }
    }

    #[test]
    fn cosine_mode_has_equally_spaced_zeros() {
        let mode = mode_from(6.38, 64, |t| (3.0 * t).cos());
        let c = count_bi(&mode, TAU, &CountConfig::default()).unwrap();
        assert_eq!(c.eta, 6);
        for (i, z) in c.zeros.iter().enumerate() {
            let expect = PI / 6.0 + i as f64 * PI / 3.0;
            assert!((z - expect).abs() < 1e-10, "{z} vs {expect}");
        }
        assert!(c.tangencies.is_empty());
    }

    #[test]
    fn constant_sign_has_no_zeros() {
        let mode = mode_from(2.4, 48, |t| 1.2 + 0.3 * t.cos());
        assert_eq!(count_bi(&mode, TAU, &CountConfig::default()).unwrap().eta, 0);
    }

    #[test]
    fn flat_stretch_is_a_suspect_tangency() {
        // u vanishes identically on a quarter of the boundary
        let mode = mode_from(3.0, 256, |t| if t < 1.5 * PI { (t * 2.0 / 3.0 * 2.0).sin().powi(3) } else { 0.0 });
        let cfg = CountConfig { upsample: 1, ..Default::default() };
        let c = count_bi(&mode, TAU, &cfg).unwrap();
        assert!(!c.tangencies.is_empty());
        let z = mode_from(3.0, 64, |_| 0.0);
        let c = count_bi(&z, TAU, &cfg).unwrap();
        assert_eq!(c.eta, 0);
        assert_eq!(c.tangencies.len(), 1);
    }

    #[test]
    fn undersampled_mode_is_rejected() {
        let mode = mode_from(30.0, 64, |t| (30.0 * t).cos());
        assert!(matches!(count_bi(&mode, TAU, &CountConfig::default()), Err(CountError::UnderSampled { .. })));
    }

    #[test]
    fn subsets_normalize_and_complement() {
        let g = BoundarySubset::new(10.0, &[(8.0, 2.0), (1.0, 3.0), (5.0, 6.0)]).unwrap();
        assert_eq!(g.intervals(), &[(0.0, 3.0), (5.0, 6.0), (8.0, 10.0)]);
        assert!((g.measure() - 6.0).abs() < 1e-12);
        let c = g.complement();
        assert_eq!(c.intervals(), &[(3.0, 5.0), (6.0, 8.0)]);
        assert!(g.contains(9.5) && g.contains(-0.5) && !g.contains(4.0));
        let p = BoundarySubset::parse_fractions("0.8:0.2, 0.5:0.6", 10.0).unwrap();
        assert_eq!(p.intervals().len(), 3);
        assert!((p.measure() - 5.0).abs() < 1e-12);
        assert!(BoundarySubset::parse_fractions("0.2-0.4", 10.0).is_err());
        assert!(BoundarySubset::parse_fractions("0.2:1.4", 10.0).is_err());
        assert_eq!(BoundarySubset::parse_fractions("full", 3.0).unwrap().measure(), 3.0);
        let round = BoundarySubset::parse_fractions(&p.fraction_spec(), 10.0).unwrap();
        assert_eq!(round, p);
    }

    #[test]
    fn partial_counts_on_full_and_empty_sets() {
        let mode = mode_from(6.38, 64, |t| (3.0 * t + 0.2).sin());
        let cfg = CountConfig::default();
        assert_eq!(count_bi_partial(&mode, TAU, &BoundarySubset::full(TAU), &cfg).unwrap(), 6);
        assert_eq!(count_bi_partial(&mode, TAU, &BoundarySubset::empty(TAU), &cfg).unwrap(), 0);
    }

    fn sequence(etas: &[usize], area: f64) -> BICountSequence {
        BICountSequence {
            records: etas
                .iter()
                .enumerate()
                .map(|(i, &eta)| CountRecord { n: i + 1, k: 0.0, eta, eta_gamma: None, tangencies: 0 })
                .collect(),
            perimeter: 1.0,
            area,
            tolerance: 1e-6,
            gamma: None,
        }
    }

    #[test]
    fn single_bump_integrates_to_eta() {
        let mut seq = sequence(&[0; 40], 3.0);
        seq.records[19].eta = 14;
        let d = smoothed_density(&seq, DensityVariable::N, 0.05, 1.0, CountSource::Full).unwrap();
        let integral: f64 = d.values.iter().sum::<f64>() * 0.05;
        assert!((integral - 14.0).abs() < 1e-6);
        // q variable: integral over n = ∫ d (A q / 2π) dq
        let d = smoothed_density(&seq, DensityVariable::Q, 0.002, 0.02, CountSource::Full).unwrap();
        let integral: f64 =
            d.grid.iter().zip(&d.values).map(|(q, v)| v * seq.area * q / TAU).sum::<f64>() * 0.002;
        assert!((integral - 14.0).abs() < 1e-3, "{integral}");
    }

    #[test]
    fn constant_counts_give_constant_density() {
        let seq = sequence(&[6; 400], 2.0);
        let d = smoothed_density(&seq, DensityVariable::N, 0.25, 1.5, CountSource::Full).unwrap();
        for (x, v) in d.grid.iter().zip(&d.values) {
            if *x > 20.0 && *x < 380.0 {
                assert!((v - 6.0).abs() < 1e-6, "{x} {v}");
            }
        }
    }

    #[test]
    fn density_preconditions() {
        let seq = sequence(&[2; 10], 2.0);
        assert!(matches!(
            smoothed_density(&seq, DensityVariable::N, 0.5, 0.5, CountSource::Full),
            Err(CountError::KernelTooNarrow { .. })
        ));
        assert_eq!(
            smoothed_density(&seq, DensityVariable::N, 0.1, 0.5, CountSource::Gamma).unwrap_err(),
            CountError::NoPartialCounts
        );
        let mut gappy = seq.clone();
        gappy.records.remove(4);
        assert_eq!(
            smoothed_density(&gappy, DensityVariable::N, 0.1, 0.5, CountSource::Full).unwrap_err(),
            CountError::IncompleteSequence { after: 4, next: 6 }
        );
    }

    #[test]
    fn fluctuation_of_pure_smooth_part_vanishes() {
        let grid: Vec<f64> = (1..=1000).map(|j| j as f64 * 0.05).collect();
        let smooth = |q: f64| 0.4 * q + 0.1;
        let density = Density {
            variable: DensityVariable::Q,
            values: grid.iter().map(|&q| smooth(q)).collect(),
            grid: grid.clone(),
            width: 0.2,
            range: (0.0, 50.0),
        };
        let w = Window { q0: 25.0, sigma: 8.0 };
        let f = windowed_fluctuation(&density, smooth, w).unwrap();
        assert!(f.values.iter().all(|v| v.abs() < 1e-14));

        // windowed cosine
        let eps = 0.3;
        let density = Density {
            values: grid.iter().map(|&q| smooth(q) + eps * (4.0 * q).cos()).collect(),
            ..density
        };
        let f = windowed_fluctuation(&density, smooth, w).unwrap();
        for (q, v) in f.grid.iter().zip(&f.values) {
            assert!((v - eps * (4.0 * q).cos() / q * w.weight(*q)).abs() < 1e-14);
        }
        assert!(matches!(
            windowed_fluctuation(&density, smooth, Window { q0: 40.0, sigma: 8.0 }),
            Err(CountError::WindowOutOfRange { .. })
        ));
    }

    #[test]
    fn count_table_round_trip() {
        let mut seq = sequence(&[0, 2, 4, 4], 3.5);
        seq.records[2].eta_gamma = Some(3);
        seq.records[2].k = 3.25;
        let text = seq.to_text();
        let back = BICountSequence::from_text(&text).unwrap();
        assert_eq!(back.records, seq.records);
        assert_eq!(back.area, seq.area);
        assert!(BICountSequence::from_text("1 2 3").is_err());
    }
}
