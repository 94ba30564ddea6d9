//! Periodic orbits of the billiard: search, stability and the
//! bounce-angle factor entering the boundary-count trace formula.

use std::f64::consts::TAU;

use faer::{Mat, Side};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{chord_is_interior, BoundaryCurve};
use crate::nodal::BoundarySubset;
use crate::scalar::{Mat2, Real};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OrbitError {
    #[error("launch is tangent to the boundary (p = {0})")]
    TangentLaunch(f64),
    #[error("ray from s = {0} found no boundary intersection")]
    RayEscapes(f64),
    #[error("bounce {index} has sin ψ = {sin_psi:.2e}")]
    DegenerateBounce { index: usize, sin_psi: f64 },
    #[error("conjugate point sits on bounce {0}")]
    AmbiguousConjugatePoint(usize),
}

/// `Σ (4cos²ψ − 1)·2 sin ψ` over the given bounce angles.
pub fn trig_factor<T: Real>(angles: &[T]) -> T {
    let (one, two, four) = (T::one(), T::lit(2.0), T::lit(4.0));
    angles
        .iter()
        .fold(T::zero(), |acc, &psi| acc + (four * psi.cos().powi(2) - one) * two * psi.sin())
}

/// Product of free flights and bounces over one period, starting just after
/// bounce 1: `B₁ F_n B_n ⋯ B₂ F₁`. `lengths[i]` runs from bounce `i` to
/// bounce `i+1`.
pub fn monodromy_from<T: Real>(lengths: &[T], curvatures: &[T], sin_psi: &[T]) -> Mat2<T> {
    let n = lengths.len();
    let mut m = Mat2::identity();
    for i in 0..n {
        let next = (i + 1) % n;
        m = Mat2::reflection(curvatures[next], sin_psi[next]) * Mat2::free_flight(lengths[i]) * m;
    }
    m
}

/// Next bounce of the ray leaving arclength `s` with tangential momentum
/// fraction `p = cos ψ`. Returns `(s′, p′)` with `p′` the tangential
/// component of the reflected direction at `s′`.
pub struct BilliardMap<'a> {
    curve: &'a BoundaryCurve,
    polygon: Vec<[f64; 2]>,
    params: Vec<f64>,
}

impl<'a> BilliardMap<'a> {
    pub fn new(curve: &'a BoundaryCurve, polygon_points: usize) -> Self {
        let params: Vec<f64> = (0..polygon_points).map(|j| TAU * j as f64 / polygon_points as f64).collect();
        let polygon = params.iter().map(|&t| curve.spec().eval(t).0).collect();
        Self { curve, polygon, params }
    }

    pub fn apply(&self, s: f64, p: f64) -> Result<(f64, f64), OrbitError> {
        if !(p.abs() < 1.0 - 1e-12) {
            return Err(OrbitError::TangentLaunch(p));
        }
        let t0 = self.curve.param_at_arclength(s);
        let frame = self.curve.point_at_param(t0);
        let q = (1.0 - p * p).sqrt();
        let dir = [
            p * frame.tangent[0] + q * frame.normal[0],
            p * frame.tangent[1] + q * frame.normal[1],
        ];
        let r0 = frame.position;
        let scale = self.curve.perimeter();
        // first polygon edge crossed by the ray, away from the launch point
        let n = self.polygon.len();
        let mut best: Option<(f64, f64)> = None;
        for i in 0..n {
            let a = self.polygon[i];
            let b = self.polygon[(i + 1) % n];
            let e = [b[0] - a[0], b[1] - a[1]];
            let den = dir[0] * e[1] - dir[1] * e[0];
            if den.abs() < 1e-300 {
                continue;
            }
            let w = [a[0] - r0[0], a[1] - r0[1]];
            let lam = (w[0] * e[1] - w[1] * e[0]) / den;
            let mu = (w[0] * dir[1] - w[1] * dir[0]) / den;
            if (-1e-9..=1.0 + 1e-9).contains(&mu) && lam > 1e-6 * scale && best.map_or(true, |(l, _)| lam < l) {
                let t_hi = if i + 1 == n { TAU } else { self.params[i + 1] };
                best = Some((lam, self.params[i] + mu * (t_hi - self.params[i])));
            }
        }
        let (mut lam, mut t) = best.ok_or(OrbitError::RayEscapes(s))?;
        // Newton on r(t) = r0 + λ d
        for _ in 0..50 {
            let (r, dr, _) = self.curve.spec().eval(t);
            let f = [r[0] - r0[0] - lam * dir[0], r[1] - r0[1] - lam * dir[1]];
            let det = dr[0] * (-dir[1]) - (-dir[0]) * dr[1];
            let dt = (f[0] * (-dir[1]) - (-dir[0]) * f[1]) / det;
            let dl = (dr[0] * f[1] - dr[1] * f[0]) / det;
            t -= dt;
            lam -= dl;
            if dt.abs() < 1e-15 && dl.abs() < 1e-15 * scale {
                break;
            }
        }
        let t = t.rem_euclid(TAU);
        let hit = self.curve.point_at_param(t);
        let p_out = dir[0] * hit.tangent[0] + dir[1] * hit.tangent[1];
        Ok((self.curve.arclength_at_param(t).rem_euclid(scale), p_out))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct OrbitFlags {
    /// `|tr M| ≤ 2 + 1e-6`: not isolated-unstable, excluded from trace sums.
    pub marginal: bool,
    /// The orbit is its own time reverse.
    pub self_retracing: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodicOrbit {
    pub id: usize,
    pub n_bounces: usize,
    /// Curve parameter of each bounce.
    pub params: Vec<f64>,
    /// Arclength of each bounce.
    pub bounces: Vec<f64>,
    /// Angle between the orbit and the boundary tangent, in `(0, π)`.
    pub angles: Vec<f64>,
    pub curvatures: Vec<f64>,
    /// `segments[i]` joins bounce `i` to bounce `i+1`.
    pub segments: Vec<f64>,
    pub length: f64,
    pub monodromy: Mat2<f64>,
    pub trace: f64,
    pub maslov: u32,
    pub phi: f64,
    /// Largest `|∂L/∂s_i|`.
    pub gradient_residual: f64,
    pub flags: OrbitFlags,
}

impl PeriodicOrbit {
    /// 2 for an orbit distinct from its time reverse, otherwise 1.
    pub fn reversal_multiplicity(&self) -> u32 {
        if self.flags.self_retracing {
            1
        } else {
            2
        }
    }

    pub fn isolated(&self) -> bool {
        !self.flags.marginal
    }

    pub fn sin_psi(&self) -> Vec<f64> {
        self.angles.iter().map(|a| a.sin()).collect()
    }

    /// The same orbit read from bounce `shift` onwards.
    pub fn cyclic_shift(&self, shift: usize) -> Self {
        let rot = |v: &[f64]| {
            let mut out = v.to_vec();
            out.rotate_left(shift % v.len().max(1));
            out
        };
        let mut out = Self {
            params: rot(&self.params),
            bounces: rot(&self.bounces),
            angles: rot(&self.angles),
            curvatures: rot(&self.curvatures),
            segments: rot(&self.segments),
            ..self.clone()
        };
        out.monodromy = monodromy_from(&out.segments, &out.curvatures, &out.sin_psi());
        out.trace = out.monodromy.trace();
        out
    }

    /// Traversal in the opposite direction.
    pub fn reversed(&self) -> Self {
        let n = self.n_bounces;
        let idx: Vec<usize> = (0..n).map(|i| (n - i) % n).collect();
        let pick = |v: &[f64]| idx.iter().map(|&i| v[i]).collect::<Vec<_>>();
        // reversed segment i joins bounce (n−i) to bounce (n−i−1)
        let segments = (0..n).map(|i| self.segments[(2 * n - i - 1) % n]).collect();
        let mut out = Self {
            params: pick(&self.params),
            bounces: pick(&self.bounces),
            angles: pick(&self.angles).into_iter().map(|a| std::f64::consts::PI - a).collect(),
            curvatures: pick(&self.curvatures),
            segments,
            ..self.clone()
        };
        out.monodromy = monodromy_from(&out.segments, &out.curvatures, &out.sin_psi());
        out.trace = out.monodromy.trace();
        out.phi = trig_factor(&out.angles);
        out
    }

    /// Explicit `r`-fold traversal as a single `r·n`-bounce orbit.
    pub fn repeated(&self, r: usize) -> Self {
        let rep = |v: &[f64]| v.iter().copied().cycle().take(v.len() * r).collect::<Vec<_>>();
        let mut out = Self {
            n_bounces: self.n_bounces * r,
            params: rep(&self.params),
            bounces: rep(&self.bounces),
            angles: rep(&self.angles),
            curvatures: rep(&self.curvatures),
            segments: rep(&self.segments),
            length: self.length * r as f64,
            ..self.clone()
        };
        out.monodromy = monodromy_from(&out.segments, &out.curvatures, &out.sin_psi());
        out.trace = out.monodromy.trace();
        out.phi = trig_factor(&out.angles);
        out
    }
}

/// Recomputes `M_p` from the bounce data.
pub fn monodromy(orbit: &PeriodicOrbit) -> Result<Mat2<f64>, OrbitError> {
    let sin_psi = orbit.sin_psi();
    if let Some((index, &s)) = sin_psi.iter().enumerate().find(|(_, &s)| s < 1e-8) {
        return Err(OrbitError::DegenerateBounce { index, sin_psi: s });
    }
    Ok(monodromy_from(&orbit.segments, &orbit.curvatures, &sin_psi))
}

/// Zero crossings of the transverse displacement `y` inside the free
/// flights, propagating the Jacobi field `v = (y, y')` over one period.
fn flight_zeros(orbit: &PeriodicOrbit, mut v: [f64; 2], skip_start: bool) -> Result<u32, OrbitError> {
    let n = orbit.n_bounces;
    let sin_psi = orbit.sin_psi();
    let norm = v[0].abs().max(v[1].abs());
    let tol = 1e-10 * norm.max(f64::MIN_POSITIVE);
    let mut count = 0;
    for i in 0..n {
        let y0 = v[0];
        let y1 = v[0] + orbit.segments[i] * v[1];
        if (i > 0 || !skip_start) && y0.abs() < tol {
            return Err(OrbitError::AmbiguousConjugatePoint(i));
        }
        if y1.abs() < tol {
            return Err(OrbitError::AmbiguousConjugatePoint((i + 1) % n));
        }
        if y0 * y1 < 0.0 {
            count += 1;
        }
        v = Mat2::free_flight(orbit.segments[i]).apply(v);
        let next = (i + 1) % n;
        v = Mat2::reflection(orbit.curvatures[next], sin_psi[next]).apply(v);
    }
    Ok(count)
}

/// `ν = 2 n_p + μ`, with `μ` the number of focal points of the orbit's
/// invariant (unstable) direction along one period, which does not depend
/// on the starting bounce. Elliptic orbits have no invariant real direction;
/// for them `μ` counts the sign changes of the `(1,2)` entry of the
/// accumulated stability matrix started at bounce 1.
pub fn maslov_index(orbit: &PeriodicOrbit) -> Result<u32, OrbitError> {
    let m = monodromy(orbit)?;
    let mu = match m.real_eigenvectors() {
        Some([unstable, _]) => flight_zeros(orbit, unstable, false)?,
        // (1,2) entry of the accumulated matrix is the y-component of the
        // field started at (0, 1)
        None => flight_zeros(orbit, [0.0, 1.0], true)?,
    };
    Ok(2 * orbit.n_bounces as u32 + mu)
}

/// `Φ_p` restricted to bounces lying in `gamma`.
pub fn partial_trig_factor(orbit: &PeriodicOrbit, gamma: &BoundarySubset) -> f64 {
    let inside: Vec<f64> = orbit
        .bounces
        .iter()
        .zip(&orbit.angles)
        .filter(|(s, _)| gamma.contains(**s))
        .map(|(_, &a)| a)
        .collect();
    trig_factor(&inside)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OrbitSearchConfig {
    pub max_bounces: usize,
    /// Newton starts per bounce number.
    pub starts_per_bounce: usize,
    pub seed: u64,
    /// Largest accepted `|∂L/∂s_i|`.
    pub grad_tol: f64,
    pub max_newton: usize,
    pub polygon_points: usize,
    /// Grazing bounces below this `sin ψ` are rejected.
    pub min_sin_psi: f64,
    pub dedup_tol: f64,
}

impl Default for OrbitSearchConfig {
    fn default() -> Self {
        Self {
            max_bounces: 5,
            starts_per_bounce: 800,
            seed: 1,
            grad_tol: 1e-9,
            max_newton: 100,
            polygon_points: 4096,
            min_sin_psi: 1e-3,
            dedup_tol: 1e-6,
        }
    }
}

struct Functional {
    length: f64,
    grad: Vec<f64>,
    hess: Mat<f64>,
    /// `|dr/dt|` at each bounce.
    speed: Vec<f64>,
    min_segment: f64,
}

fn functional(curve: &BoundaryCurve, ts: &[f64]) -> Functional {
    let n = ts.len();
    let evals: Vec<_> = ts.iter().map(|&t| curve.spec().eval(t)).collect();
    let mut e = Vec::with_capacity(n);
    let mut len = Vec::with_capacity(n);
    for i in 0..n {
        let a = evals[i].0;
        let b = evals[(i + 1) % n].0;
        let d = [b[0] - a[0], b[1] - a[1]];
        let l = d[0].hypot(d[1]);
        len.push(l);
        e.push([d[0] / l, d[1] / l]);
    }
    let dot = |a: [f64; 2], b: [f64; 2]| a[0] * b[0] + a[1] * b[1];
    // a·(I − e eᵀ)·b / ℓ
    let proj = |a: [f64; 2], ei: [f64; 2], l: f64, b: [f64; 2]| (dot(a, b) - dot(a, ei) * dot(ei, b)) / l;
    let mut grad = vec![0.0; n];
    let mut hess = Mat::<f64>::zeros(n, n);
    for i in 0..n {
        let prev = (i + n - 1) % n;
        let (_, d1, d2) = evals[i];
        let g = [e[prev][0] - e[i][0], e[prev][1] - e[i][1]];
        grad[i] = dot(d1, g);
        hess[(i, i)] += dot(d2, g) + proj(d1, e[prev], len[prev], d1) + proj(d1, e[i], len[i], d1);
        let j = (i + 1) % n;
        let off = -proj(d1, e[i], len[i], evals[j].1);
        hess[(i, j)] += off;
        hess[(j, i)] += off;
    }
    Functional {
        length: len.iter().sum(),
        grad,
        hess,
        speed: evals.iter().map(|(_, d, _)| d[0].hypot(d[1])).collect(),
        min_segment: len.iter().copied().fold(f64::INFINITY, f64::min),
    }
}

fn arclength_residual(f: &Functional) -> f64 {
    f.grad.iter().zip(&f.speed).map(|(g, s)| (g / s).abs()).fold(0.0, f64::max)
}

/// Newton step with the Hessian pseudo-inverse: flat directions (continuous
/// families) are left alone instead of blowing up.
fn newton_step(f: &Functional) -> Vec<f64> {
    let n = f.grad.len();
    let evd = f.hess.self_adjoint_eigen(Side::Lower).expect("small symmetric eigenproblem");
    let vals = evd.S();
    let vecs = evd.U();
    let top = (0..n).map(|i| vals[i].abs()).fold(0.0, f64::max);
    let mut step = vec![0.0; n];
    for k in 0..n {
        let lam = vals[k];
        if lam.abs() <= 1e-10 * top {
            continue;
        }
        let c: f64 = (0..n).map(|i| vecs[(i, k)] * f.grad[i]).sum::<f64>() / lam;
        for i in 0..n {
            step[i] -= c * vecs[(i, k)];
        }
    }
    step
}

fn newton(curve: &BoundaryCurve, mut ts: Vec<f64>, cfg: &OrbitSearchConfig) -> Option<(Vec<f64>, Functional)> {
    let scale = curve.perimeter();
    let mut f = functional(curve, &ts);
    for _ in 0..cfg.max_newton {
        if !(f.min_segment > 1e-6 * scale) {
            return None;
        }
        let res = arclength_residual(&f);
        if res < 1e-13 {
            break;
        }
        let mut step = newton_step(&f);
        let big = step.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if big > 0.4 {
            step.iter_mut().for_each(|x| *x *= 0.4 / big);
        }
        let gnorm = |g: &Functional| g.grad.iter().map(|x| x * x).sum::<f64>();
        let current = gnorm(&f);
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..8 {
            let trial: Vec<f64> = ts.iter().zip(&step).map(|(t, d)| t + alpha * d).collect();
            let ft = functional(curve, &trial);
            if ft.min_segment > 1e-6 * scale && gnorm(&ft) < current {
                accepted = Some((trial, ft));
                break;
            }
            alpha *= 0.5;
        }
        match accepted {
            Some((t, ft)) => {
                ts = t;
                f = ft;
            }
            None => break,
        }
    }
    if !(f.min_segment > 1e-6 * scale) || arclength_residual(&f) >= cfg.grad_tol {
        return None;
    }
    Some((ts.into_iter().map(|t| t.rem_euclid(TAU)).collect(), f))
}

fn angle_gap(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    d.min(TAU - d)
}

/// Smallest proper period of the bounce sequence under cyclic shift.
fn primitive_period(ts: &[f64], tol: f64) -> usize {
    let n = ts.len();
    (1..n)
        .filter(|d| n % d == 0)
        .find(|&d| (0..n).all(|i| angle_gap(ts[i], ts[(i + d) % n]) < tol))
        .unwrap_or(n)
}

fn is_self_retracing(ts: &[f64], tol: f64) -> bool {
    let n = ts.len();
    let rev: Vec<f64> = ts.iter().rev().copied().collect();
    (0..n).any(|shift| (0..n).all(|i| angle_gap(ts[(i + shift) % n], rev[i]) < tol))
}

fn build_orbit(curve: &BoundaryCurve, ts: Vec<f64>, f: &Functional, self_retracing: bool) -> PeriodicOrbit {
    let n = ts.len();
    let frames: Vec<_> = ts.iter().map(|&t| curve.point_at_param(t)).collect();
    let mut segments = Vec::with_capacity(n);
    let mut angles = Vec::with_capacity(n);
    for i in 0..n {
        let a = frames[i].position;
        let b = frames[(i + 1) % n].position;
        let d = [b[0] - a[0], b[1] - a[1]];
        let l = d[0].hypot(d[1]);
        segments.push(l);
        let fr = &frames[i];
        let along = (d[0] * fr.tangent[0] + d[1] * fr.tangent[1]) / l;
        let across = (d[0] * fr.normal[0] + d[1] * fr.normal[1]) / l;
        angles.push(across.atan2(along));
    }
    let curvatures: Vec<f64> = frames.iter().map(|p| p.curvature).collect();
    let sin_psi: Vec<f64> = angles.iter().map(|a| a.sin()).collect();
    let m = monodromy_from(&segments, &curvatures, &sin_psi);
    let mut orbit = PeriodicOrbit {
        id: 0,
        n_bounces: n,
        bounces: ts.iter().map(|&t| curve.arclength_at_param(t).rem_euclid(curve.perimeter())).collect(),
        params: ts,
        phi: trig_factor(&angles),
        angles,
        curvatures,
        segments,
        length: f.length,
        monodromy: m,
        trace: m.trace(),
        maslov: 0,
        gradient_residual: arclength_residual(f),
        flags: OrbitFlags { marginal: m.trace().abs() <= 2.0 + 1e-6, self_retracing },
    };
    // a focal point exactly on a bounce is measure-zero; fall back to 2n
    orbit.maslov = maslov_index(&orbit).unwrap_or(2 * n as u32);
    orbit
}

fn same_orbit(a: &PeriodicOrbit, b: &PeriodicOrbit, tol: f64) -> bool {
    if a.n_bounces != b.n_bounces || (a.length - b.length).abs() > tol * a.length.max(1.0) {
        return false;
    }
    let rel = 100.0 * tol;
    a.params.iter().all(|&t| b.params.iter().any(|&u| angle_gap(t, u) < rel))
        && b.params.iter().all(|&t| a.params.iter().any(|&u| angle_gap(t, u) < rel))
}

/// Candidate start: bounce parameters advancing by roughly `2πw/n`, or
/// uniformly random.
fn seed_start(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let t0 = rng.random::<f64>() * TAU;
    if rng.random::<f64>() < 0.3 {
        return (0..n).map(|_| rng.random::<f64>() * TAU).collect();
    }
    let w = rng.random_range(1..=(n / 2).max(1));
    let jitter = 0.6 * TAU / n as f64;
    (0..n)
        .map(|i| t0 + TAU * (w * i) as f64 / n as f64 + jitter * (rng.random::<f64>() - 0.5))
        .collect()
}

/// Outcome of one orbit search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrbitTable {
    pub orbits: Vec<PeriodicOrbit>,
    /// Converged solutions that were repetitions of shorter orbits.
    pub repetitions_dropped: usize,
    /// Converged solutions rejected for exterior chords or grazing bounces.
    pub nonphysical_dropped: usize,
}

impl OrbitTable {
    /// Isolated orbits usable in the trace formula.
    pub fn isolated(&self) -> impl Iterator<Item = &PeriodicOrbit> {
        self.orbits.iter().filter(|o| o.isolated())
    }

    pub fn to_json_lines(&self) -> String {
        self.orbits
            .iter()
            .map(|o| serde_json::to_string(o).expect("orbit serializes") + "\n")
            .collect()
    }

    pub fn from_json_lines(text: &str) -> Result<Self, serde_json::Error> {
        let orbits = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { orbits, repetitions_dropped: 0, nonphysical_dropped: 0 })
    }
}

/// Periodic orbits with exactly `n` bounces, deduplicated under cyclic shift
/// and reversal. Repetitions of shorter orbits are dropped.
pub fn find_periodic_orbits(curve: &BoundaryCurve, n: usize, cfg: &OrbitSearchConfig) -> OrbitTable {
    assert!(n >= 2, "periodic orbits need at least two bounces");
    let polygon = curve.polygon(cfg.polygon_points);
    let candidates: Vec<Option<Vec<f64>>> = (0..cfg.starts_per_bounce)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ ((n as u64) << 40) ^ k as u64);
            let start = seed_start(&mut rng, n);
            newton(curve, start, cfg).map(|(ts, _)| ts)
        })
        .collect();
    let mut table = OrbitTable { orbits: Vec::new(), repetitions_dropped: 0, nonphysical_dropped: 0 };
    let mut converged: Vec<Vec<f64>> = candidates.into_iter().flatten().collect();
    converged.sort_by(|a, b| a.iter().sum::<f64>().total_cmp(&b.iter().sum::<f64>()));
    for ts in converged {
        if primitive_period(&ts, 1e-6) < n {
            table.repetitions_dropped += 1;
            continue;
        }
        let f = functional(curve, &ts);
        let retracing = is_self_retracing(&ts, 1e-6);
        let orbit = build_orbit(curve, ts, &f, retracing);
        if table.orbits.iter().any(|o| same_orbit(o, &orbit, cfg.dedup_tol)) {
            continue;
        }
        let grazing = orbit.angles.iter().any(|a| a.sin() < cfg.min_sin_psi);
        let exterior = (0..n).any(|i| {
            let a = curve.spec().eval(orbit.params[i]).0;
            let b = curve.spec().eval(orbit.params[(i + 1) % n]).0;
            !chord_is_interior(a, b, &polygon)
        });
        if grazing || exterior {
            table.nonphysical_dropped += 1;
            continue;
        }
        table.orbits.push(orbit);
    }
    table
}

/// All orbits with `2..=cfg.max_bounces` bounces, sorted by length and
/// numbered from 1.
pub fn find_orbits_up_to(curve: &BoundaryCurve, cfg: &OrbitSearchConfig) -> OrbitTable {
    let mut all = OrbitTable { orbits: Vec::new(), repetitions_dropped: 0, nonphysical_dropped: 0 };
    for n in 2..=cfg.max_bounces {
        let t = find_periodic_orbits(curve, n, cfg);
        all.orbits.extend(t.orbits);
        all.repetitions_dropped += t.repetitions_dropped;
        all.nonphysical_dropped += t.nonphysical_dropped;
    }
    all.orbits.sort_by(|a, b| a.length.total_cmp(&b.length));
    for (i, o) in all.orbits.iter_mut().enumerate() {
        o.id = i + 1;
    }
    all
}

/// Gradient of the length functional in arclength at the given parameters.
pub fn length_gradient(curve: &BoundaryCurve, params: &[f64]) -> Vec<f64> {
    let f = functional(curve, params);
    f.grad.iter().zip(&f.speed).map(|(g, s)| g / s).collect()
}
