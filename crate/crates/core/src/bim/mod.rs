//! Dirichlet eigenvalues by the boundary integral method.
//!
//! The normal derivative `u(s)` of an interior Dirichlet eigenfunction
//! satisfies `u = ĥ u` with the double-layer type kernel
//!
//! ```text
//! h(s, s'; k) = 2 n(s)·∇ G₀(r(s), r(s')),   G₀ = (i/4) H₀⁽¹⁾(k|r − r'|)
//! ```
//!
//! (`n` the outward normal). The kernel is discretized by Nyström's method
//! on nodes uniform in a boundary parameter, using Kress's splitting of the logarithmic
//! part of `H₁⁽¹⁾`, so the quadrature is spectrally accurate for smooth
//! boundaries. Eigenvalues are the real `k` where `I − K(k)` is singular;
//! they are located by sweeping the smallest singular value and refined by
//! Brent minimization of `σ_min²`.

use std::f64::consts::{PI, TAU};

use faer::Mat;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use spec_math::cephes64::{j1, y1};
use thiserror::Error;

use crate::fourier::TrigInterpolant;
use crate::geometry::{BoundaryCurve, PointData};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("{points} boundary points under-resolve k = {k} (need at least {required})")]
    UnderResolved { k: f64, points: usize, required: usize },
    #[error("point count {0} must be even")]
    OddPointCount(usize),
    #[error("refinement near k = {0} did not converge")]
    NoConvergence(f64),
    #[error("minimum near k = {k} has sigma_min = {sigma:.3e} above tolerance {tol:.1e}")]
    SpuriousMinimum { k: f64, sigma: f64, tol: f64 },
    #[error("Weyl deviation {deviation:.2} at k = {k:.4} exceeds {threshold:.2}; levels may be missing")]
    MissedLevelSuspected { k: f64, deviation: f64, threshold: f64 },
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
}

/// Placement of the quadrature nodes along the boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeSpacing {
    /// Uniform in the curve's own parameter. For conformal-map boundaries
    /// this crowds nodes into strongly curved stretches.
    #[default]
    Parameter,
    /// Uniform in arclength.
    Arclength,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub points_per_wavelength: f64,
    pub min_points: usize,
    /// Sweep step as a fraction of the mean level spacing `2π/(A k)`.
    pub sweep_step_factor: f64,
    /// Width in `k` of one independently solved (and cached) window.
    pub window_width: f64,
    /// Largest accepted `σ_min` at a refined eigenvalue.
    pub sigma_tol: f64,
    /// Relative `k` separation below which two levels form a doublet.
    pub doublet_rel: f64,
    /// Relative accuracy of refined eigenvalues.
    pub refine_rel_tol: f64,
    /// Lowest `k` swept; `None` starts just below the Faber–Krahn bound.
    pub k_start: Option<f64>,
    /// Weyl deviation allowed: `weyl_const + weyl_sqrt_factor·√N`.
    pub weyl_const: f64,
    pub weyl_sqrt_factor: f64,
    pub node_spacing: NodeSpacing,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            points_per_wavelength: 8.0,
            min_points: 48,
            sweep_step_factor: 0.25,
            window_width: 1.0,
            sigma_tol: 1e-5,
            doublet_rel: 1e-6,
            refine_rel_tol: 1e-9,
            k_start: None,
            weyl_const: 5.0,
            weyl_sqrt_factor: 3.0,
            node_spacing: NodeSpacing::Parameter,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), SolverError> {
        let bad = |m: &str| Err(SolverError::InvalidConfig(m.to_string()));
        if !(self.points_per_wavelength >= 6.0) {
            return bad("points_per_wavelength must be at least 6");
        }
        if !(self.sweep_step_factor > 0.0 && self.sweep_step_factor <= 0.25) {
            return bad("sweep_step_factor must lie in (0, 0.25]");
        }
        if !(self.window_width > 0.0) {
            return bad("window_width must be positive");
        }
        if !(self.sigma_tol > 0.0 && self.doublet_rel > 0.0 && self.refine_rel_tol > 0.0) {
            return bad("tolerances must be positive");
        }
        Ok(())
    }

    /// Even point count resolving wavenumbers up to `k`.
    pub fn points_for(&self, k: f64, perimeter: f64) -> usize {
        let n = (self.points_per_wavelength * k * perimeter / TAU).ceil() as usize;
        let n = n.max(self.min_points);
        n + n % 2
    }
}

/// Minimum point count accepted by [`build_kernel`] (6 points per wavelength).
pub fn required_points(k: f64, perimeter: f64) -> usize {
    (6.0 * k * perimeter / TAU).ceil() as usize
}

/// Node data and `k`-independent quadrature weights for one point count.
///
/// Nodes sit at `θ_j = 2πj/N` of a periodic parameter `θ`; `jac[j]` is
/// `ds/dθ` there. Mode samples are always reported on `N` points uniform in
/// arclength (see [`Discretization::to_arclength`]).
#[derive(Debug, Clone)]
pub struct Discretization {
    pub nodes: Vec<PointData>,
    pub jac: Vec<f64>,
    pub perimeter: f64,
    pub spacing_kind: NodeSpacing,
    /// Curve parameter `t` at the arclength-uniform output points.
    output_params: Vec<f64>,
    /// Kress weights `R_m` for index difference `m`.
    log_weights: Vec<f64>,
    /// `log(4 sin²(π m / N))`, zero at `m = 0`.
    log_factor: Vec<f64>,
}

impl Discretization {
    pub fn new(curve: &BoundaryCurve, n: usize, spacing: NodeSpacing) -> Result<Self, SolverError> {
        if n % 2 != 0 || n < 4 {
            return Err(SolverError::OddPointCount(n));
        }
        let half = n / 2;
        let log_weights = (0..n)
            .map(|m| {
                let theta = TAU * m as f64 / n as f64;
                let mut acc = 0.0;
                for p in 1..half {
                    acc += (p as f64 * theta).cos() / p as f64;
                }
                let alt = if m % 2 == 0 { 1.0 } else { -1.0 };
                -TAU / half as f64 * acc - PI / (half * half) as f64 * alt
            })
            .collect();
        let log_factor = (0..n)
            .map(|m| {
                if m == 0 {
                    0.0
                } else {
                    (4.0 * (PI * m as f64 / n as f64).sin().powi(2)).ln()
                }
            })
            .collect();
        let perimeter = curve.perimeter();
        let output_params: Vec<f64> =
            (0..n).map(|j| curve.param_at_arclength(perimeter * j as f64 / n as f64)).collect();
        let (nodes, jac) = match spacing {
            NodeSpacing::Arclength => (
                output_params.iter().map(|&t| curve.point_at_param(t)).collect(),
                vec![perimeter / TAU; n],
            ),
            NodeSpacing::Parameter => (0..n)
                .map(|j| {
                    let t = TAU * j as f64 / n as f64;
                    (curve.point_at_param(t), curve.speed(t))
                })
                .unzip(),
        };
        Ok(Self { nodes, jac, perimeter, spacing_kind: spacing, output_params, log_weights, log_factor })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Arclength spacing of the reported mode samples.
    pub fn spacing(&self) -> f64 {
        self.perimeter / self.nodes.len() as f64
    }

    /// Values at the nodes, resampled onto `N` points uniform in arclength
    /// by trigonometric interpolation in the node parameter.
    pub fn to_arclength(&self, values: &[f64]) -> Vec<f64> {
        match self.spacing_kind {
            NodeSpacing::Arclength => values.to_vec(),
            NodeSpacing::Parameter => {
                let interp = TrigInterpolant::new(values, TAU);
                self.output_params.iter().map(|&t| interp.eval(t)).collect()
            }
        }
    }
}

/// Discretized kernel `K_ij ≈ h(s_i, s_j; k) Δs` at one wavenumber.
#[derive(Debug, Clone)]
pub struct KernelOperator {
    pub k: f64,
    pub matrix: Mat<Complex64>,
}

impl KernelOperator {
    /// `I − K`, singular at Dirichlet eigenvalues.
    pub fn eigencondition(&self) -> Mat<Complex64> {
        let n = self.matrix.nrows();
        Mat::from_fn(n, n, |i, j| {
            let one = if i == j { 1.0 } else { 0.0 };
            Complex64::new(one, 0.0) - self.matrix[(i, j)]
        })
    }
}

/// Builds the Nyström matrix of `h` on `n` nodes.
pub fn build_kernel(
    curve: &BoundaryCurve,
    k: f64,
    n: usize,
    spacing: NodeSpacing,
) -> Result<KernelOperator, SolverError> {
    let required = required_points(k, curve.perimeter());
    if n < required {
        return Err(SolverError::UnderResolved { k, points: n, required });
    }
    let disc = Discretization::new(curve, n, spacing)?;
    Ok(kernel_on(&disc, k))
}

/// Kernel matrix on a prepared discretization.
pub fn kernel_on(disc: &Discretization, k: f64) -> KernelOperator {
    let n = disc.len();
    let jac = &disc.jac;
    let trap = TAU / n as f64;
    let mut m = Mat::<Complex64>::zeros(n, n);
    for i in 0..n {
        let pi = &disc.nodes[i];
        m[(i, i)] = Complex64::new(-pi.curvature / TAU * jac[i] * trap, 0.0);
        for j in (i + 1)..n {
            let pj = &disc.nodes[j];
            let dx = pi.position[0] - pj.position[0];
            let dy = pi.position[1] - pj.position[1];
            let d = dx.hypot(dy);
            // outward normal = −inward normal
            let ci = -(pi.normal[0] * dx + pi.normal[1] * dy) / d;
            let cj = (pj.normal[0] * dx + pj.normal[1] * dy) / d;
            let kd = k * d;
            let (bj, by) = if kd > 1e-12 {
                (0.5 * k * j1(kd), 0.5 * k * y1(kd))
            } else {
                // k·J₁(kd)/2 → 0, k·Y₁(kd)/2 → −1/(πd)
                (0.0, -1.0 / (PI * d))
            };
            let w_log = disc.log_weights[j - i];
            let lf = disc.log_factor[j - i];
            for (row, col, c) in [(i, j, ci), (j, i, cj)] {
                // h = −(ik/2) H₁(kd) c = (k/2)(Y₁ − iJ₁) c
                let full = Complex64::new(by * c, -bj * c) * jac[col];
                // log-singular coefficient of the real part: (k/2π) J₁ c
                let l1 = bj * c / PI * jac[col];
                let l2 = full - l1 * lf;
                m[(row, col)] = Complex64::new(w_log * l1, 0.0) + l2 * trap;
            }
        }
    }
    KernelOperator { k, matrix: m }
}

mod solve;

pub use solve::{
    assemble_spectrum, mean_spacing, refine_eigenvalue, singular_value_sweep, solve_spectrum, weyl_count, weyl_report,
    EigenMode, Spectrum, SpectrumSolver, Sweep, SweepSample, WeylReport, WindowResult,
};
