use std::f64::consts::{PI, TAU};

use faer::{Mat, Side};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{kernel_on, Discretization, NodeSpacing, SolverConfig, SolverError};
use crate::geometry::BoundaryCurve;
use crate::linalg::{smallest_singular, InverseIterationConfig, SmallestSingular};
use crate::optimize::brent_minimize;

const SWEEP_ITER: InverseIterationConfig =
    InverseIterationConfig { block: 3, converge: 2, rel_tol: 1e-7, max_iter: 40 };
/// Bracket resampling used when a second level hides inside it.
const FINE_SAMPLES: usize = 36;
const REFINE_ITER: InverseIterationConfig =
    InverseIterationConfig { block: 3, converge: 2, rel_tol: 1e-11, max_iter: 100 };

/// One Dirichlet level with its boundary function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenMode {
    /// 1-based position in the sorted spectrum (0 until assembled).
    pub index: usize,
    pub k: f64,
    pub sigma_min: f64,
    /// `u(s_j)` at `s_j = j L / N`, normalized so that `Σ u² Δs = 1`.
    pub samples: Vec<f64>,
}

impl EigenMode {
    pub fn n_points(&self) -> usize {
        self.samples.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepSample {
    pub k: f64,
    pub sigma: f64,
    pub sigma2: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub points: usize,
    pub samples: Vec<SweepSample>,
    /// Indices of interior local minima of `σ_min`.
    pub minima: Vec<usize>,
}

fn evaluate(disc: &Discretization, k: f64, cfg: InverseIterationConfig) -> SmallestSingular {
    let a = kernel_on(disc, k).eigencondition();
    smallest_singular(&a, cfg)
}

/// Mean level spacing `2π / (A k)` from the leading Weyl term.
pub fn mean_spacing(area: f64, k: f64) -> f64 {
    TAU / (area * k)
}

/// Samples `σ_min(k)` on a uniform grid over `[k_lo, k_hi]` and flags local
/// minima as eigenvalue candidates.
pub fn singular_value_sweep(
    curve: &BoundaryCurve,
    k_lo: f64,
    k_hi: f64,
    step: f64,
    points: usize,
    spacing: NodeSpacing,
) -> Result<Sweep, SolverError> {
    if !(k_hi > k_lo && k_lo > 0.0) {
        return Err(SolverError::InvalidConfig(format!("empty sweep window [{k_lo}, {k_hi}]")));
    }
    if step > 0.25 * mean_spacing(curve.area(), k_hi) * (1.0 + 1e-12) {
        return Err(SolverError::InvalidConfig(format!(
            "sweep step {step} exceeds a quarter of the mean level spacing"
        )));
    }
    let disc = Discretization::new(curve, points, spacing)?;
    Ok(sweep_on(&disc, k_lo, k_hi, step))
}

fn sweep_on(disc: &Discretization, k_lo: f64, k_hi: f64, step: f64) -> Sweep {
    let count = ((k_hi - k_lo) / step).ceil() as usize + 1;
    let h = (k_hi - k_lo) / (count - 1) as f64;
    let samples: Vec<SweepSample> = (0..count)
        .into_par_iter()
        .map(|i| {
            let k = k_lo + h * i as f64;
            let s = evaluate(disc, k, SWEEP_ITER);
            SweepSample { k, sigma: s.values[0], sigma2: s.values[1] }
        })
        .collect();
    let minima = (1..count.saturating_sub(1))
        .filter(|&i| samples[i].sigma < samples[i - 1].sigma && samples[i].sigma <= samples[i + 1].sigma)
        .collect();
    Sweep { points: disc.len(), samples, minima }
}

/// Converts complex null vectors spanning a real subspace into an
/// orthonormal real basis of the same dimension.
fn realify(vectors: &[Vec<Complex64>]) -> Vec<Vec<f64>> {
    let n = vectors[0].len();
    let m = vectors.len();
    let cols: Vec<Vec<f64>> = vectors
        .iter()
        .flat_map(|v| [v.iter().map(|z| z.re).collect(), v.iter().map(|z| z.im).collect()])
        .collect();
    let gram = Mat::<f64>::from_fn(2 * m, 2 * m, |a, b| {
        cols[a].iter().zip(&cols[b]).map(|(x, y)| x * y).sum()
    });
    let evd = gram.self_adjoint_eigen(Side::Lower).expect("small symmetric eigenproblem");
    let u = evd.U();
    // eigenvalues ascending: the dominant m directions are the last columns
    let mut out: Vec<Vec<f64>> = (0..m)
        .map(|r| {
            let c = 2 * m - 1 - r;
            let mut v = vec![0.0; n];
            for (a, col) in cols.iter().enumerate() {
                let w = u[(a, c)];
                for (vi, x) in v.iter_mut().zip(col) {
                    *vi += w * x;
                }
            }
            v
        })
        .collect();
    // re-orthonormalize against round-off
    for j in 0..m {
        for i in 0..j {
            let dot: f64 = out[i].iter().zip(&out[j]).map(|(a, b)| a * b).sum();
            let (head, tail) = out.split_at_mut(j);
            for (x, y) in tail[0].iter_mut().zip(&head[i]) {
                *x -= dot * y;
            }
        }
        let norm = out[j].iter().map(|x| x * x).sum::<f64>().sqrt();
        out[j].iter_mut().for_each(|x| *x /= norm);
    }
    out
}

/// Unit discrete norm `Σ u² Δs = 1`, first significant extremum positive.
fn normalize_mode(u: &mut [f64], ds: f64) {
    let norm = (u.iter().map(|x| x * x).sum::<f64>() * ds).sqrt();
    u.iter_mut().for_each(|x| *x /= norm);
    let n = u.len();
    let peak = u.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let first = (0..n).find(|&j| {
        let a = u[j].abs();
        a > 1e-3 * peak && a >= u[(j + n - 1) % n].abs() && a >= u[(j + 1) % n].abs()
    });
    if let Some(j) = first {
        if u[j] < 0.0 {
            u.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

struct Located {
    k: f64,
    triplets: SmallestSingular,
}

fn minimize_sigma(disc: &Discretization, lo: f64, hi: f64, which: usize, cfg: &SolverConfig) -> Located {
    let mid = 0.5 * (lo + hi);
    let (k, _, _) = brent_minimize(
        |k| evaluate(disc, k, REFINE_ITER).values[which].powi(2),
        lo,
        hi,
        cfg.refine_rel_tol * mid,
        200,
    );
    Located { k, triplets: evaluate(disc, k, REFINE_ITER) }
}

fn modes_at(disc: &Discretization, loc: &Located, multiplicity: usize) -> Vec<EigenMode> {
    let basis = realify(&loc.triplets.vectors[..multiplicity]);
    basis
        .into_iter()
        .enumerate()
        .map(|(j, u)| {
            let mut u = disc.to_arclength(&u);
            normalize_mode(&mut u, disc.spacing());
            EigenMode { index: 0, k: loc.k, sigma_min: loc.triplets.values[j], samples: u }
        })
        .collect()
}

/// Refines the eigenvalue bracketed by `[lo, hi]` (a sweep minimum and its
/// neighbours) and returns its mode(s). A degenerate pair yields two
/// orthogonal modes; a close but distinct partner level is located and
/// returned as well.
pub fn refine_eigenvalue(
    disc: &Discretization,
    lo: f64,
    hi: f64,
    cfg: &SolverConfig,
) -> Result<Vec<EigenMode>, SolverError> {
    let edge_lo = evaluate(disc, lo, REFINE_ITER).values[0];
    let edge_hi = evaluate(disc, hi, REFINE_ITER).values[0];
    let main = minimize_sigma(disc, lo, hi, 0, cfg);
    let k = main.k;
    if !k.is_finite() {
        return Err(SolverError::NoConvergence(0.5 * (lo + hi)));
    }
    let sigma = main.triplets.values[0];
    if sigma > cfg.sigma_tol {
        return Err(SolverError::SpuriousMinimum { k, sigma, tol: cfg.sigma_tol });
    }
    // σ_min grows linearly away from an isolated level
    let slope = (edge_lo / (k - lo).abs().max(1e-300)).max(edge_hi / (hi - k).abs().max(1e-300));
    let degenerate_sigma = (slope * cfg.doublet_rel * k).max(cfg.sigma_tol * 0.1);
    let multiplicity_of = |loc: &Located| {
        1 + loc.triplets.values[1..].iter().take_while(|&&s| s <= degenerate_sigma).count()
    };
    let multiplicity = multiplicity_of(&main);
    let mut modes = modes_at(disc, &main, multiplicity);

    // Partners closer than the sweep could separate: probe where σ_next
    // predicts one, and resample the bracket (widened by half on each side) finely.
    let Some(&sigma_next) = main.triplets.values.get(multiplicity) else {
        return Ok(modes);
    };
    let width = hi - lo;
    let distance = sigma_next / slope;
    if distance >= width {
        return Ok(modes);
    }
    let mut brackets = Vec::new();
    for dir in [-1.0, 1.0] {
        let probe = k + dir * distance;
        if evaluate(disc, probe, REFINE_ITER).values[0] < 0.5 * sigma_next {
            brackets.push(if dir > 0.0 {
                (k + 0.3 * distance, k + 2.0 * distance)
            } else {
                (k - 2.0 * distance, k - 0.3 * distance)
            });
        }
    }
    let fine = FINE_SAMPLES;
    let ks: Vec<f64> = (0..=fine).map(|i| lo - 0.5 * width + 2.0 * width * i as f64 / fine as f64).collect();
    let sig: Vec<f64> = ks.par_iter().map(|&q| evaluate(disc, q, SWEEP_ITER).values[0]).collect();
    for i in 1..fine {
        if sig[i] < sig[i - 1] && sig[i] <= sig[i + 1] && (ks[i] - k).abs() > 3.0 * width / fine as f64 {
            brackets.push((ks[i - 1], ks[i + 1]));
        }
    }
    let mut found = vec![k];
    for (a, b) in brackets {
        let partner = minimize_sigma(disc, a, b, 0, cfg);
        let pk = partner.k;
        if partner.triplets.values[0] <= cfg.sigma_tol && found.iter().all(|&f| (pk - f).abs() > cfg.doublet_rel * pk) {
            found.push(pk);
            modes.extend(modes_at(disc, &partner, multiplicity_of(&partner)));
        }
    }
    Ok(modes)
}

/// Levels found in one `k` window `[k_lo, k_hi)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowResult {
    pub k_lo: f64,
    pub k_hi: f64,
    pub points: usize,
    pub sweep_samples: usize,
    pub spurious: usize,
    pub modes: Vec<EigenMode>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeylReport {
    pub max_deviation: f64,
    pub at_k: f64,
    pub threshold_at_max: f64,
    pub passed: bool,
}

/// Sorted, indexed spectrum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub modes: Vec<EigenMode>,
    pub k_max: f64,
    pub perimeter: f64,
    pub area: f64,
    pub weyl: WeylReport,
}

impl Spectrum {
    pub fn k_values(&self) -> Vec<f64> {
        self.modes.iter().map(|m| m.k).collect()
    }

    pub fn completeness(&self) -> Result<(), SolverError> {
        if self.weyl.passed {
            Ok(())
        } else {
            Err(SolverError::MissedLevelSuspected {
                k: self.weyl.at_k,
                deviation: self.weyl.max_deviation,
                threshold: self.weyl.threshold_at_max,
            })
        }
    }
}

/// Smooth counting function `(A k² − L k)/(4π)`.
pub fn weyl_count(area: f64, perimeter: f64, k: f64) -> f64 {
    (area * k * k - perimeter * k) / (4.0 * PI)
}

/// Largest excess of `|N(k) − N̄(k)|` over `c + f·√N(k)`, checked on both
/// sides of every step of the staircase.
pub fn weyl_report(ks: &[f64], area: f64, perimeter: f64, cfg: &SolverConfig) -> WeylReport {
    let mut worst = WeylReport { max_deviation: 0.0, at_k: 0.0, threshold_at_max: cfg.weyl_const, passed: true };
    let mut worst_excess = f64::NEG_INFINITY;
    for (i, &k) in ks.iter().enumerate() {
        let smooth = weyl_count(area, perimeter, k);
        for count in [i as f64, (i + 1) as f64] {
            let dev = (count - smooth).abs();
            let threshold = cfg.weyl_const + cfg.weyl_sqrt_factor * count.sqrt();
            if dev - threshold > worst_excess {
                worst_excess = dev - threshold;
                worst = WeylReport { max_deviation: dev, at_k: k, threshold_at_max: threshold, passed: true };
            }
        }
    }
    worst.passed = worst_excess <= 0.0;
    worst
}

/// Merges window results into one sorted, indexed spectrum.
pub fn assemble_spectrum(
    mut windows: Vec<WindowResult>,
    curve: &BoundaryCurve,
    k_max: f64,
    cfg: &SolverConfig,
) -> Spectrum {
    windows.sort_by(|a, b| a.k_lo.total_cmp(&b.k_lo));
    let mut modes: Vec<EigenMode> = windows
        .into_iter()
        .flat_map(|w| w.modes)
        .filter(|m| m.k < k_max)
        .collect();
    modes.sort_by(|a, b| a.k.total_cmp(&b.k));
    for (i, m) in modes.iter_mut().enumerate() {
        m.index = i + 1;
    }
    let ks: Vec<f64> = modes.iter().map(|m| m.k).collect();
    let weyl = weyl_report(&ks, curve.area(), curve.perimeter(), cfg);
    Spectrum { modes, k_max, perimeter: curve.perimeter(), area: curve.area(), weyl }
}

/// Drives the sweep → refine pipeline window by window.
pub struct SpectrumSolver<'a> {
    pub curve: &'a BoundaryCurve,
    pub config: SolverConfig,
}

impl<'a> SpectrumSolver<'a> {
    pub fn new(curve: &'a BoundaryCurve, config: SolverConfig) -> Result<Self, SolverError> {
        config.validate()?;
        Ok(Self { curve, config })
    }

    pub fn k_start(&self) -> f64 {
        // Faber–Krahn: k₁ ≥ j₀,₁ √(π/A)
        self.config
            .k_start
            .unwrap_or_else(|| 0.8 * 2.404_825_557_695_773 * (PI / self.curve.area()).sqrt())
    }

    /// Window boundaries covering `[k_start, k_max)`.
    pub fn windows(&self, k_max: f64) -> Vec<(f64, f64)> {
        let start = self.k_start();
        let w = self.config.window_width;
        let mut out = Vec::new();
        let mut lo = start;
        while lo < k_max {
            let hi = (lo + w).min(k_max);
            out.push((lo, hi));
            lo = hi;
        }
        out
    }

    pub fn solve_window(&self, k_lo: f64, k_hi: f64) -> Result<WindowResult, SolverError> {
        let cfg = &self.config;
        let points = cfg.points_for(k_hi, self.curve.perimeter());
        let disc = Discretization::new(self.curve, points, cfg.node_spacing)?;
        let step = cfg.sweep_step_factor * mean_spacing(self.curve.area(), k_hi);
        let margin = 2.0 * step;
        let sweep = sweep_on(&disc, (k_lo - margin).max(1e-3), k_hi + margin, step);
        let refined: Vec<Result<Vec<EigenMode>, SolverError>> = sweep
            .minima
            .par_iter()
            .map(|&i| refine_eigenvalue(&disc, sweep.samples[i - 1].k, sweep.samples[i + 1].k, cfg))
            .collect();
        let mut spurious = 0;
        let mut found: Vec<EigenMode> = Vec::new();
        for r in refined {
            match r {
                Ok(ms) => found.extend(ms),
                Err(SolverError::SpuriousMinimum { .. }) => spurious += 1,
                Err(e) => return Err(e),
            }
        }
        found.sort_by(|a, b| a.k.total_cmp(&b.k));
        let modes = dedup_modes(found, cfg.doublet_rel)
            .into_iter()
            .filter(|m| m.k >= k_lo && m.k < k_hi)
            .collect();
        Ok(WindowResult {
            k_lo,
            k_hi,
            points,
            sweep_samples: sweep.samples.len(),
            spurious,
            modes,
        })
    }

    pub fn solve(&self, k_max: f64) -> Result<Spectrum, SolverError> {
        let windows = self
            .windows(k_max)
            .into_iter()
            .map(|(lo, hi)| self.solve_window(lo, hi))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(assemble_spectrum(windows, self.curve, k_max, &self.config))
    }
}

/// The same level reached from two sweep minima is kept once; genuine
/// degenerate partners (orthogonal modes at one `k`) are all kept.
fn dedup_modes(sorted: Vec<EigenMode>, rel: f64) -> Vec<EigenMode> {
    let mut out: Vec<EigenMode> = Vec::with_capacity(sorted.len());
    for m in sorted {
        let dup = out.iter().rev().take_while(|o| (m.k - o.k).abs() <= rel * m.k).any(|o| {
            let dot: f64 = o.samples.iter().zip(&m.samples).map(|(a, b)| a * b).sum();
            let na: f64 = o.samples.iter().map(|a| a * a).sum();
            let nb: f64 = m.samples.iter().map(|b| b * b).sum();
            o.samples.len() == m.samples.len() && dot.abs() > 0.5 * (na * nb).sqrt()
        });
        if !dup {
            out.push(m);
        }
    }
    out
}

/// All Dirichlet levels below `k_max`. Returns `MissedLevelSuspected` when
/// the staircase strays from Weyl's law beyond the configured bound.
pub fn solve_spectrum(
    curve: &BoundaryCurve,
    k_max: f64,
    config: SolverConfig,
) -> Result<Spectrum, SolverError> {
    let spectrum = SpectrumSolver::new(curve, config)?.solve(k_max)?;
    spectrum.completeness()?;
    Ok(spectrum)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weyl_report_flags_missing_block() {
        let (area, perimeter) = (PI, TAU);
        // levels placed exactly on the smooth staircase
        let ks: Vec<f64> = (1..=400)
            .map(|n| {
                let n = n as f64 - 0.5;
                // solve (A k² − L k)/(4π) = n
                (perimeter + (perimeter * perimeter + 16.0 * PI * area * n).sqrt()) / (2.0 * area)
            })
            .collect();
        let cfg = SolverConfig::default();
        assert!(weyl_report(&ks, area, perimeter, &cfg).passed);
        let mut holes = ks.clone();
        holes.drain(200..300);
        let r = weyl_report(&holes, area, perimeter, &cfg);
        assert!(!r.passed);
        assert!(r.max_deviation > 99.0);
    }

    #[test]
    fn normalization_fixes_norm_and_sign() {
        let n = 64;
        let ds = 0.1;
        let mut u: Vec<f64> = (0..n).map(|j| -(TAU * j as f64 / n as f64 + 0.3).sin()).collect();
        normalize_mode(&mut u, ds);
        let norm: f64 = u.iter().map(|x| x * x).sum::<f64>() * ds;
        assert!((norm - 1.0).abs() < 1e-12);
        let peak = u.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let first = (0..n).find(|&j| u[j].abs() >= u[(j + n - 1) % n].abs() && u[j].abs() >= u[(j + 1) % n].abs() && u[j].abs() > 1e-3 * peak).unwrap();
        assert!(u[first] > 0.0);
    }

    #[test]
    fn realify_recovers_real_subspace() {
        let a: Vec<f64> = (0..20).map(|j| (j as f64 * 0.3).cos()).collect();
        let b: Vec<f64> = (0..20).map(|j| (j as f64 * 0.7).sin()).collect();
        let phase = Complex64::from_polar(1.0, 0.8);
        let v1: Vec<Complex64> = a.iter().zip(&b).map(|(x, y)| phase * (x + 0.5 * y)).collect();
        let v2: Vec<Complex64> = a.iter().zip(&b).map(|(x, y)| Complex64::new(0.2 * x, -y)).collect();
        let r = realify(&[v1, v2]);
        assert_eq!(r.len(), 2);
        // each real vector lies in span{a, b}
        let gram = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>();
        for v in &r {
            let (aa, ab, bb) = (gram(&a, &a), gram(&a, &b), gram(&b, &b));
            let (va, vb) = (gram(v, &a), gram(v, &b));
            let det = aa * bb - ab * ab;
            let ca = (va * bb - vb * ab) / det;
            let cb = (vb * aa - va * ab) / det;
            let resid: f64 = v.iter().zip(a.iter().zip(&b)).map(|(x, (p, q))| (x - ca * p - cb * q).powi(2)).sum();
            assert!(resid < 1e-20);
        }
        assert!(gram(&r[0], &r[1]).abs() < 1e-12);
    }
}
