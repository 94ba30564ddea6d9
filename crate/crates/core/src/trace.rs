//! Trace formula for the boundary-intersection counts and length spectra.
//!
//! The count density in the unfolded variable `q` is a smooth part plus a
//! sum over periodic orbits `p` and repetitions `r`:
//!
//! ```text
//! d_sm(q)  = L q/(2π) + (L² − 6πA)/(4πA)
//! d_osc(q) = (1/π) Σ Φ_p / √|tr(M_p^r) − 2| · cos(r(q̃ L_p − ν_p π/2)),   q̃ = q + L/(2A)
//! ```
//!
//! Length spectra use `f̂(x) = ∫ f(q) e^{−iqx} dq` with no `2π` factor, so
//! peaks sit at orbit lengths.

use std::f64::consts::{PI, TAU};
use std::fmt::Write as _;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::BoundaryCurve;
use crate::nodal::{BoundarySubset, Fluctuation, Window};
use crate::orbits::{partial_trig_factor, OrbitTable, PeriodicOrbit};
use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TraceError {
    #[error("orbit {id} repeated {r} times is marginal (|tr M^r − 2| = {value:.2e})")]
    MarginalOrbitInSum { id: usize, r: u32, value: f64 },
    #[error("q step {q_step} aliases lengths beyond {limit:.3} (requested x_max = {x_max})")]
    AliasingRisk { q_step: f64, x_max: f64, limit: f64 },
    #[error("invalid length grid: {0}")]
    InvalidGrid(String),
    #[error("malformed spectrum table line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

/// `L q/(2π) + (L² − 6πA)/(4πA)`.
pub fn smooth_density<T: Real>(q: T, perimeter: T, area: T) -> T {
    let pi = T::PI();
    let four = T::lit(4.0);
    perimeter * q / (T::lit(2.0) * pi) + (perimeter * perimeter - T::lit(6.0) * pi * area) / (four * pi * area)
}

/// Smooth part of the counts restricted to `Γ`: the local density
/// `(k − κ(s))/(2π)` integrated over `Γ`, with `k → q + L/(2A)`, and the
/// remaining constant of the full formula shared in proportion to `|Γ|/L`.
/// Reduces to [`smooth_density`] for `Γ = ∂Ω`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartialSmooth {
    pub measure: f64,
    pub curvature_integral: f64,
    pub perimeter: f64,
    pub area: f64,
}

impl PartialSmooth {
    pub fn new(curve: &BoundaryCurve, gamma: &BoundarySubset) -> Self {
        let samples = 4096;
        let ds = curve.perimeter() / samples as f64;
        let curvature_integral = (0..samples)
            .map(|j| (j as f64 + 0.5) * ds)
            .filter(|&s| gamma.contains(s))
            .map(|s| curve.point_data(s).curvature * ds)
            .sum();
        Self { measure: gamma.measure(), curvature_integral, perimeter: curve.perimeter(), area: curve.area() }
    }

    pub fn eval(&self, q: f64) -> f64 {
        let g = self.measure;
        g * q / TAU + g * self.perimeter / (4.0 * PI * self.area) - self.curvature_integral / TAU
            - 0.5 * g / self.perimeter
    }
}

/// Gaussian window plus the smoothing applied to the numerical density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrumWindow {
    pub window: Window,
    /// Width in `q` of the Gaussian that smoothed the counts; its transform
    /// `exp(−w²x²/2)` multiplies the semiclassical spectrum. Zero disables.
    pub kernel_width: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceFormulaInput {
    pub perimeter: f64,
    pub area: f64,
    /// Isolated orbits only.
    pub orbits: Vec<PeriodicOrbit>,
    pub r_max: u32,
    pub window: SpectrumWindow,
    /// Marginal orbits left out of the sum.
    pub excluded: Vec<usize>,
}

impl TraceFormulaInput {
    pub fn new(perimeter: f64, area: f64, table: &OrbitTable, r_max: u32, window: SpectrumWindow) -> Self {
        let (orbits, marginal): (Vec<_>, Vec<_>) = table.orbits.iter().cloned().partition(|o| o.isolated());
        Self {
            perimeter,
            area,
            orbits,
            r_max: r_max.max(1),
            window,
            excluded: marginal.iter().map(|o| o.id).collect(),
        }
    }

    /// `q̃ − q`.
    pub fn unfolding_shift(&self) -> f64 {
        self.perimeter / (2.0 * self.area)
    }
}

/// One `(p, r)` term of the orbit sum: `amplitude · cos(length·q + phase)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrbitTerm {
    pub id: usize,
    pub r: u32,
    pub length: f64,
    pub amplitude: f64,
    pub phase: f64,
}

/// Amplitude `m Φ/(π√|tr(M^r) − 2|)` (with `m` the reversal multiplicity)
/// and phase `r(L_p L/(2A) − ν π/2)`, so that the term reads
/// `A cos(r L_p q + φ)`.
pub fn orbit_terms(
    input: &TraceFormulaInput,
    gamma: Option<&BoundarySubset>,
    x_limit: f64,
) -> Result<Vec<OrbitTerm>, TraceError> {
    let shift = input.unfolding_shift();
    let mut terms = Vec::new();
    for o in &input.orbits {
        let phi = gamma.map_or(o.phi, |g| partial_trig_factor(o, g));
        let mut power = o.monodromy;
        for r in 1..=input.r_max {
            if r > 1 {
                power = power * o.monodromy;
            }
            let length = r as f64 * o.length;
            if length > x_limit {
                break;
            }
            let det = (power.trace() - 2.0).abs();
            if det < 1e-9 {
                return Err(TraceError::MarginalOrbitInSum { id: o.id, r, value: det });
            }
            let r_f = r as f64;
            terms.push(OrbitTerm {
                id: o.id,
                r,
                length,
                amplitude: o.reversal_multiplicity() as f64 * phi / (PI * det.sqrt()),
                phase: r_f * (o.length * shift - o.maslov as f64 * PI / 2.0),
            });
        }
    }
    Ok(terms)
}

/// Oscillating part of the density on the given `q` values.
pub fn oscillating_density(
    q: &[f64],
    input: &TraceFormulaInput,
    gamma: Option<&BoundarySubset>,
) -> Result<Vec<f64>, TraceError> {
    let terms = orbit_terms(input, gamma, f64::INFINITY)?;
    Ok(q.par_iter()
        .map(|&q| terms.iter().map(|t| t.amplitude * (t.length * q + t.phase).cos()).sum())
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Numerical,
    Semiclassical,
}

/// Uniform grid `x_j = j·dx`, `j = 0..=x_max/dx`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LengthGrid {
    pub x_max: f64,
    pub dx: f64,
}

impl LengthGrid {
    pub fn points(&self) -> Vec<f64> {
        let n = (self.x_max / self.dx).round() as usize;
        (0..=n).map(|j| j as f64 * self.dx).collect()
    }

    fn validate(&self) -> Result<(), TraceError> {
        if !(self.dx > 0.0 && self.x_max > self.dx) {
            return Err(TraceError::InvalidGrid(format!("x_max {} dx {}", self.x_max, self.dx)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LengthSpectrum {
    pub x: Vec<f64>,
    pub values: Vec<Complex64>,
    pub provenance: Provenance,
    pub window: Window,
}

impl LengthSpectrum {
    pub fn magnitude(&self) -> Vec<f64> {
        self.values.iter().map(|z| z.norm()).collect()
    }

    /// Largest `|f̂|` within `tol` of `x0`, with its position.
    pub fn peak_near(&self, x0: f64, tol: f64) -> Option<(f64, f64)> {
        self.x
            .iter()
            .zip(&self.values)
            .filter(|(x, _)| (**x - x0).abs() <= tol)
            .map(|(&x, z)| (x, z.norm()))
            .max_by(|a, b| a.1.total_cmp(&b.1))
    }

    /// Median `|f̂|` over `[x_lo, x_hi]`.
    pub fn background(&self, x_lo: f64, x_hi: f64) -> f64 {
        let mut m: Vec<f64> = self
            .x
            .iter()
            .zip(&self.values)
            .filter(|(x, _)| **x >= x_lo && **x <= x_hi)
            .map(|(_, z)| z.norm())
            .collect();
        if m.is_empty() {
            return 0.0;
        }
        m.sort_by(f64::total_cmp);
        m[m.len() / 2]
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self { values: self.values.iter().map(|z| z * factor).collect(), ..self.clone() }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let tag = match self.provenance {
            Provenance::Numerical => "numerical",
            Provenance::Semiclassical => "semiclassical",
        };
        let _ = writeln!(out, "# provenance {tag}");
        let _ = writeln!(out, "# transform f(x) = integral f(q) exp(-i q x) dq");
        let _ = writeln!(out, "# window q0 {} sigma {}", self.window.q0, self.window.sigma);
        let _ = writeln!(out, "x,re,im,abs");
        for (x, z) in self.x.iter().zip(&self.values) {
            let _ = writeln!(out, "{x:.6},{:.10e},{:.10e},{:.10e}", z.re, z.im, z.norm());
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self, TraceError> {
        let mut provenance = Provenance::Numerical;
        let mut window = Window { q0: f64::NAN, sigma: f64::NAN };
        let mut x = Vec::new();
        let mut values = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let err = |reason: &str| TraceError::Parse { line: i + 1, reason: reason.into() };
            if let Some(rest) = line.strip_prefix('#') {
                let f: Vec<&str> = rest.split_whitespace().collect();
                match f.first() {
                    Some(&"provenance") if f.get(1) == Some(&"semiclassical") => {
                        provenance = Provenance::Semiclassical
                    }
                    Some(&"window") if f.len() == 5 => {
                        window.q0 = f[2].parse().map_err(|_| err("q0"))?;
                        window.sigma = f[4].parse().map_err(|_| err("sigma"))?;
                    }
                    _ => {}
                }
                continue;
            }
            if line.starts_with("x,") || line.trim().is_empty() {
                continue;
            }
            let f: Vec<f64> = line
                .split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|_| err("number"))?;
            if f.len() != 4 {
                return Err(err("expected 4 columns"));
            }
            x.push(f[0]);
            values.push(Complex64::new(f[1], f[2]));
        }
        Ok(Self { x, values, provenance, window })
    }
}

/// `Σ_j f(q_j) e^{−i q_j x} Δq` at one `x` (any sign) for uniform `q_j`.
pub fn fourier_at(q: &[f64], f: &[f64], x: f64) -> Complex64 {
    let dq = if q.len() > 1 { (q[q.len() - 1] - q[0]) / (q.len() - 1) as f64 } else { 0.0 };
    let mut acc = Complex64::new(0.0, 0.0);
    for (&qj, &fj) in q.iter().zip(f) {
        let (s, c) = (qj * x).sin_cos();
        acc += Complex64::new(fj * c, -fj * s);
    }
    acc * dq
}

fn transform(q: &[f64], f: &[f64], grid: &LengthGrid) -> Vec<Complex64> {
    grid.points().par_iter().map(|&x| fourier_at(q, f, x)).collect()
}

fn check_grid(q: &[f64], grid: &LengthGrid) -> Result<(), TraceError> {
    grid.validate()?;
    if q.len() < 2 {
        return Err(TraceError::InvalidGrid("fewer than two q samples".into()));
    }
    let dq = (q[q.len() - 1] - q[0]) / (q.len() - 1) as f64;
    let limit = PI / dq;
    if grid.x_max > limit {
        return Err(TraceError::AliasingRisk { q_step: dq, x_max: grid.x_max, limit });
    }
    let span = q[q.len() - 1] - q[0];
    if grid.dx > PI / span {
        return Err(TraceError::InvalidGrid(format!(
            "dx = {} under-resolves a q range of {span:.3} (need ≤ {:.4})",
            grid.dx,
            PI / span
        )));
    }
    Ok(())
}

/// Transform of the windowed fluctuation of the computed counts.
pub fn numerical_length_spectrum(f: &Fluctuation, grid: &LengthGrid) -> Result<LengthSpectrum, TraceError> {
    check_grid(&f.grid, grid)?;
    Ok(LengthSpectrum {
        x: grid.points(),
        values: transform(&f.grid, &f.values, grid),
        provenance: Provenance::Numerical,
        window: f.window,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformMode {
    /// Closed-form Gaussians with `1/q` frozen at `q₀`.
    Analytic,
    /// Numerical transform of `d_osc(q)/q · W(q)` on a `q` grid with this
    /// many points across `q₀ ± 3σ`.
    Quadrature { points: usize },
}

/// Trace-formula prediction on the length grid. With `gamma`, `Φ_p` is
/// replaced by its restriction to bounces in `Γ`.
pub fn semiclassical_length_spectrum(
    input: &TraceFormulaInput,
    grid: &LengthGrid,
    mode: TransformMode,
    gamma: Option<&BoundarySubset>,
) -> Result<LengthSpectrum, TraceError> {
    grid.validate()?;
    let w = input.window.window;
    let x_limit = grid.x_max + 8.0 / w.sigma;
    let terms = orbit_terms(input, gamma, x_limit)?;
    let x = grid.points();
    let mut values = match mode {
        TransformMode::Analytic => {
            let norm = w.sigma * TAU.sqrt() / (2.0 * w.q0);
            x.par_iter()
                .map(|&x| {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for t in &terms {
                        for (y, ph) in [(x - t.length, t.phase), (x + t.length, -t.phase)] {
                            let g = (-0.5 * (w.sigma * y).powi(2)).exp();
                            acc += Complex64::from_polar(t.amplitude * norm * g, ph - w.q0 * y);
                        }
                    }
                    acc
                })
                .collect()
        }
        TransformMode::Quadrature { points } => {
            let (lo, hi) = w.support();
            let lo = lo.max(0.0);
            let n = points.max(2);
            let dq = (hi - lo) / (n - 1) as f64;
            let q: Vec<f64> = (0..n).map(|j| lo + j as f64 * dq).filter(|&q| q > 0.0).collect();
            check_grid(&q, grid)?;
            let f: Vec<f64> = q
                .iter()
                .map(|&q| {
                    let d: f64 = terms.iter().map(|t| t.amplitude * (t.length * q + t.phase).cos()).sum();
                    d / q * w.weight(q)
                })
                .collect();
            transform(&q, &f, grid)
        }
    };
    let kw = input.window.kernel_width;
    if kw > 0.0 {
        for (v, &x) in values.iter_mut().zip(&x) {
            *v *= (-0.5 * (kw * x).powi(2)).exp();
        }
    }
    Ok(LengthSpectrum { x, values, provenance: Provenance::Semiclassical, window: w })
}

/// Restricted prediction: every `Φ_p` replaced by `Φ_{p,Γ}`.
pub fn partial_semiclassical_spectrum(
    input: &TraceFormulaInput,
    grid: &LengthGrid,
    mode: TransformMode,
    gamma: &BoundarySubset,
) -> Result<LengthSpectrum, TraceError> {
    semiclassical_length_spectrum(input, grid, mode, Some(gamma))
}

/// One row of a numerical-vs-semiclassical peak comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakRow {
    pub orbit_id: usize,
    pub orbit_length: f64,
    pub phi: f64,
    pub numerical_position: f64,
    pub numerical_height: f64,
    pub semiclassical_height: f64,
    /// Separation from the nearest other orbit length (repetitions included).
    pub isolation: f64,
}

impl PeakRow {
    pub fn deviation(&self) -> f64 {
        self.numerical_position - self.orbit_length
    }
}

/// Peak heights near every included orbit length `≤ x_max`.
pub fn peak_report(
    numerical: &LengthSpectrum,
    semiclassical: &LengthSpectrum,
    input: &TraceFormulaInput,
    tol: f64,
) -> Vec<PeakRow> {
    let x_max = numerical.x.last().copied().unwrap_or(0.0);
    let mut lengths: Vec<f64> = Vec::new();
    for o in &input.orbits {
        for r in 1..=input.r_max {
            lengths.push(r as f64 * o.length);
        }
    }
    input
        .orbits
        .iter()
        .filter(|o| o.length <= x_max)
        .filter_map(|o| {
            let (pos, h) = numerical.peak_near(o.length, tol)?;
            let (_, hs) = semiclassical.peak_near(o.length, tol)?;
            let isolation = lengths
                .iter()
                .filter(|&&l| (l - o.length).abs() > 1e-9)
                .map(|l| (l - o.length).abs())
                .fold(f64::INFINITY, f64::min);
            Some(PeakRow {
                orbit_id: o.id,
                orbit_length: o.length,
                phi: o.phi,
                numerical_position: pos,
                numerical_height: h,
                semiclassical_height: hs,
                isolation,
            })
        })
        .collect()
}

pub fn peak_report_text(rows: &[PeakRow]) -> String {
    let mut out = String::from("# orbit length phi position deviation numerical semiclassical isolation\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{} {:.6} {:+.4} {:.4} {:+.4} {:.5e} {:.5e} {:.4}",
            r.orbit_id,
            r.orbit_length,
            r.phi,
            r.numerical_position,
            r.deviation(),
            r.numerical_height,
            r.semiclassical_height,
            r.isolation
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orbits::OrbitFlags;
    use crate::scalar::Mat2;

    pub(crate) fn synthetic_orbit(id: usize, length: f64, trace: f64, phi: f64, maslov: u32) -> PeriodicOrbit {
        // symmetric hyperbolic matrix with the requested trace
        let a = trace / 2.0;
        let b = (a * a - 1.0).sqrt();
        let m = Mat2::new(a, b, b, a);
        PeriodicOrbit {
            id,
            n_bounces: 2,
            params: vec![0.0, 3.0],
            bounces: vec![0.0, 1.0],
            angles: vec![1.0, 1.0],
            curvatures: vec![0.0, 0.0],
            segments: vec![length / 2.0; 2],
            length,
            monodromy: m,
            trace,
            maslov,
            phi,
            gradient_residual: 0.0,
            flags: OrbitFlags { marginal: false, self_retracing: true },
        }
    }

    fn input(orbits: Vec<PeriodicOrbit>, r_max: u32, q0: f64, sigma: f64) -> TraceFormulaInput {
        let table = OrbitTable { orbits, repetitions_dropped: 0, nonphysical_dropped: 0 };
        let window = SpectrumWindow { window: Window { q0, sigma }, kernel_width: 0.0 };
        TraceFormulaInput::new(2.0 * PI, PI, &table, r_max, window)
    }

    #[test]
    fn smooth_density_examples() {
        let (l, a) = (TAU, PI);
        assert!((smooth_density(0.0, l, a) + 0.5).abs() < 1e-15);
        assert!((smooth_density(3.0, l, a) - (3.0 - 0.5)).abs() < 1e-14);
        let single = smooth_density(0.0f32, 2.0 * std::f32::consts::PI, std::f32::consts::PI);
        assert!((single + 0.5).abs() < 1e-6);
    }

    #[test]
    fn partial_smooth_part_reduces_to_full() {
        let c = BoundaryCurve::build(crate::geometry::CurveSpec::africa(), 128).unwrap();
        let full = PartialSmooth::new(&c, &BoundarySubset::full(c.perimeter()));
        for q in [0.0, 5.0, 40.0] {
            let expect = smooth_density(q, c.perimeter(), c.area());
            assert!((full.eval(q) - expect).abs() < 1e-6, "{} {expect}", full.eval(q));
        }
        let g = BoundarySubset::new(c.perimeter(), &[(0.0, 1.0), (3.0, 4.5)]).unwrap();
        let part = PartialSmooth::new(&c, &g);
        let rest = PartialSmooth::new(&c, &g.complement());
        assert!((part.eval(7.0) + rest.eval(7.0) - full.eval(7.0)).abs() < 1e-9);
    }

    #[test]
    fn single_orbit_amplitude_and_repetition() {
        let inp = input(vec![synthetic_orbit(1, 3.0, 6.0, 1.0, 4)], 2, 30.0, 5.0);
        let terms = orbit_terms(&inp, None, f64::INFINITY).unwrap();
        assert_eq!(terms.len(), 2);
        assert!((terms[0].amplitude - 1.0 / (2.0 * PI)).abs() < 1e-14);
        // tr M² − 2 = 36 − 2 − 2 = 32
        assert!((terms[1].amplitude - 1.0 / (PI * 32f64.sqrt())).abs() < 1e-14);
        assert!((terms[1].length - 6.0).abs() < 1e-14);
        let q = [0.7];
        let d = oscillating_density(&q, &inp, None).unwrap()[0];
        let shift = inp.unfolding_shift();
        let expect = (1.0 / (2.0 * PI)) * (3.0 * (0.7 + shift) - 2.0 * PI).cos()
            + (1.0 / (PI * 32f64.sqrt())) * (2.0 * (3.0 * (0.7 + shift) - 2.0 * PI)).cos();
        assert!((d - expect).abs() < 1e-13);
        let empty = input(vec![], 3, 30.0, 5.0);
        assert_eq!(oscillating_density(&q, &empty, None).unwrap(), vec![0.0]);
    }

    #[test]
    fn marginal_repetition_is_an_error() {
        let mut o = synthetic_orbit(4, 2.0, 6.0, 1.0, 4);
        o.monodromy = Mat2::new(0.0, -1.0, 1.0, 0.0);
        let inp = TraceFormulaInput { orbits: vec![o], ..input(vec![], 4, 30.0, 5.0) };
        // rotation by π/2: M⁴ = I
        assert!(matches!(orbit_terms(&inp, None, 100.0), Err(TraceError::MarginalOrbitInSum { r: 4, .. })));
    }

    #[test]
    fn analytic_peak_sits_at_orbit_length() {
        let inp = input(vec![synthetic_orbit(1, 3.0, 6.0, 1.0, 4)], 1, 40.0, 6.0);
        let grid = LengthGrid { x_max: 8.0, dx: 0.005 };
        let s = semiclassical_length_spectrum(&inp, &grid, TransformMode::Analytic, None).unwrap();
        let (pos, h) = s.peak_near(3.0, 1.0).unwrap();
        assert!((pos - 3.0).abs() <= grid.dx);
        let expect = 1.0 / (2.0 * PI) / (2.0 * 40.0) * 6.0 * TAU.sqrt();
        assert!((h - expect).abs() < 1e-6 * expect);
        // doubling Φ doubles the height
        let inp2 = input(vec![synthetic_orbit(1, 3.0, 6.0, 2.0, 4)], 1, 40.0, 6.0);
        let s2 = semiclassical_length_spectrum(&inp2, &grid, TransformMode::Analytic, None).unwrap();
        assert!((s2.peak_near(3.0, 1.0).unwrap().1 - 2.0 * h).abs() < 1e-12);
    }

    #[test]
    fn aliasing_is_detected() {
        let f = Fluctuation { grid: vec![1.0, 1.5, 2.0], values: vec![0.0; 3], window: Window { q0: 1.5, sigma: 0.1 } };
        let grid = LengthGrid { x_max: 10.0, dx: 0.01 };
        assert!(matches!(numerical_length_spectrum(&f, &grid), Err(TraceError::AliasingRisk { .. })));
    }

    #[test]
    fn windowed_cosine_transform() {
        let w = Window { q0: 30.0, sigma: 5.0 };
        let q: Vec<f64> = (0..5000).map(|j| 5.0 + j as f64 * 0.01).collect();
        let amp = 0.8;
        let vals: Vec<f64> = q.iter().map(|&q| amp * (4.0 * q).cos() * w.weight(q)).collect();
        let f = Fluctuation { grid: q, values: vals, window: w };
        let grid = LengthGrid { x_max: 8.0, dx: 0.01 };
        let s = numerical_length_spectrum(&f, &grid).unwrap();
        let (pos, h) = s.peak_near(4.0, 0.5).unwrap();
        assert!((pos - 4.0).abs() < 0.011);
        let expect = amp / 2.0 * w.sigma * TAU.sqrt();
        assert!((h / expect - 1.0).abs() < 1e-3, "{h} {expect}");
        let zero = Fluctuation { values: vec![0.0; f.grid.len()], ..f };
        assert!(numerical_length_spectrum(&zero, &grid).unwrap().magnitude().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn csv_round_trip() {
        let inp = input(vec![synthetic_orbit(1, 3.0, 6.0, 1.0, 4)], 1, 40.0, 6.0);
        let grid = LengthGrid { x_max: 4.0, dx: 0.05 };
        let s = semiclassical_length_spectrum(&inp, &grid, TransformMode::Analytic, None).unwrap();
        let back = LengthSpectrum::from_csv(&s.to_csv()).unwrap();
        assert_eq!(back.provenance, Provenance::Semiclassical);
        assert_eq!(back.window, s.window);
        for (a, b) in back.values.iter().zip(&s.values) {
            assert!((a - b).norm() < 1e-9 * (1.0 + b.norm()));
        }
    }
}
