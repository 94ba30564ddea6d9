//! Random-wave checks on boundary functions: Rice's formula, pointwise
//! moments over a spectral window, and the curvature-corrected smooth part
//! of the zero density.

use std::f64::consts::{PI, TAU};
use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bim::{EigenMode, Spectrum};
use crate::fourier::{derivative, resample};
use crate::geometry::BoundaryCurve;
use crate::nodal::{count_bi, CountConfig, CountError};
use crate::scalar::Real;

/// Smallest ensemble accepted by [`ensemble_moments`].
pub const MIN_MEMBERS: usize = 20;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RwmError {
    #[error("field variance vanishes")]
    DegenerateField,
    #[error("window holds {found} modes, need at least {required}")]
    TooFewModes { found: usize, required: usize },
    #[error(transparent)]
    Count(#[from] CountError),
}

/// Mean zero density `(1/π)√(⟨u̇²⟩/⟨u²⟩)` of a stationary Gaussian process.
pub fn rice_density<T: Real>(var_u: T, var_udot: T) -> Result<T, RwmError> {
    if !(var_u > T::zero()) {
        return Err(RwmError::DegenerateField);
    }
    Ok((var_udot / var_u).sqrt() / T::PI())
}

/// Modes with `|k_n − center| ≤ half_width`.
#[derive(Debug, Clone)]
pub struct WindowEnsemble<'a> {
    pub center: f64,
    pub half_width: f64,
    pub members: Vec<&'a EigenMode>,
}

impl<'a> WindowEnsemble<'a> {
    /// Half-width `c / √k`.
    pub fn select(spectrum: &'a Spectrum, center: f64, c: f64) -> Result<Self, RwmError> {
        Self::with_half_width(spectrum, center, c / center.sqrt())
    }

    pub fn with_half_width(spectrum: &'a Spectrum, center: f64, half_width: f64) -> Result<Self, RwmError> {
        let members: Vec<&EigenMode> =
            spectrum.modes.iter().filter(|m| (m.k - center).abs() <= half_width).collect();
        if members.len() < MIN_MEMBERS {
            return Err(RwmError::TooFewModes { found: members.len(), required: MIN_MEMBERS });
        }
        Ok(Self { center, half_width, members })
    }

    pub fn mean_k(&self) -> f64 {
        self.members.iter().map(|m| m.k).sum::<f64>() / self.members.len() as f64
    }
}

/// Pointwise moments across an ensemble, on a uniform arclength grid.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleMoments {
    pub s: Vec<f64>,
    pub var_u: Vec<f64>,
    pub var_udot: Vec<f64>,
    /// `⟨u⁴⟩/⟨u²⟩² − 3`.
    pub excess_kurtosis: Vec<f64>,
    pub members: usize,
}

impl EnsembleMoments {
    /// Rice density at every grid point.
    pub fn rice_profile(&self) -> Result<Vec<f64>, RwmError> {
        self.var_u.iter().zip(&self.var_udot).map(|(&a, &b)| rice_density(a, b)).collect()
    }

    /// `∮ (1/π)√(⟨u̇²⟩/⟨u²⟩) ds`, the Rice estimate of the mean count.
    pub fn rice_integral(&self, perimeter: f64) -> Result<f64, RwmError> {
        let ds = perimeter / self.s.len() as f64;
        Ok(self.rice_profile()?.iter().sum::<f64>() * ds)
    }

    pub fn max_abs_kurtosis(&self) -> f64 {
        self.excess_kurtosis.iter().fold(0.0f64, |m, k| m.max(k.abs()))
    }

    pub fn mean_kurtosis(&self) -> f64 {
        self.excess_kurtosis.iter().sum::<f64>() / self.excess_kurtosis.len() as f64
    }
}

/// Moments of `u` and `du/ds` over the members (raw moments: the ensemble
/// is symmetric under `u → −u`). All members are resampled onto the finest
/// member grid; the derivative is spectral.
pub fn ensemble_moments(modes: &[&EigenMode], perimeter: f64) -> Result<EnsembleMoments, RwmError> {
    if modes.len() < MIN_MEMBERS {
        return Err(RwmError::TooFewModes { found: modes.len(), required: MIN_MEMBERS });
    }
    let n = modes.iter().map(|m| m.samples.len()).max().unwrap_or(0);
    let zero = || (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let (m2, d2, m4) = modes
        .par_iter()
        .map(|mode| {
            let u = resample(&mode.samples, n);
            let du = derivative(&u, perimeter);
            let mut acc = zero();
            for j in 0..n {
                let x2 = u[j] * u[j];
                acc.0[j] = x2;
                acc.1[j] = du[j] * du[j];
                acc.2[j] = x2 * x2;
            }
            acc
        })
        .reduce(zero, |mut a, b| {
            for j in 0..n {
                a.0[j] += b.0[j];
                a.1[j] += b.1[j];
                a.2[j] += b.2[j];
            }
            a
        });
    let count = modes.len() as f64;
    let var_u: Vec<f64> = m2.iter().map(|x| x / count).collect();
    let var_udot: Vec<f64> = d2.iter().map(|x| x / count).collect();
    let excess_kurtosis = m4
        .iter()
        .zip(&var_u)
        .map(|(q, v)| if *v > 0.0 { q / count / (v * v) - 3.0 } else { f64::NAN })
        .collect();
    Ok(EnsembleMoments {
        s: (0..n).map(|j| perimeter * j as f64 / n as f64).collect(),
        var_u,
        var_udot,
        excess_kurtosis,
        members: modes.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothPartBin {
    pub s_lo: f64,
    pub s_hi: f64,
    pub mean_curvature: f64,
    /// Zeros per unit length per member.
    pub counted: f64,
    /// `(k̄ − κ̄)/(2π)`.
    pub predicted: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothPartReport {
    pub mean_k: f64,
    pub bins: Vec<SmoothPartBin>,
    /// Relative deviation of the counted density from `(k̄ − κ̄)/(2π)`,
    /// averaged over bins.
    pub mean_relative_deviation: f64,
    /// Relative deviation of the boundary-averaged count density from
    /// `k̄/(2π)`.
    pub leading_relative_deviation: f64,
    /// Pearson correlation of `b̄(s) − k̄/(2π)` with `−κ̄(s)/(2π)`.
    pub curvature_correlation: f64,
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        0.0
    } else {
        sxy / (sxx * syy).sqrt()
    }
}

/// Compares the zero density binned along the boundary with
/// `(k − κ(s))/(2π)`.
pub fn smooth_part_check(
    ensemble: &WindowEnsemble,
    curve: &BoundaryCurve,
    bins: usize,
    cfg: &CountConfig,
) -> Result<SmoothPartReport, RwmError> {
    let bins = bins.max(1);
    let perimeter = curve.perimeter();
    let width = perimeter / bins as f64;
    let counts = ensemble
        .members
        .par_iter()
        .map(|m| count_bi(m, perimeter, cfg).map(|c| c.zeros))
        .collect::<Result<Vec<_>, _>>()?;
    let mut hist = vec![0usize; bins];
    for zeros in &counts {
        for &s in zeros {
            hist[((s / width) as usize).min(bins - 1)] += 1;
        }
    }
    let members = ensemble.members.len() as f64;
    let k = ensemble.mean_k();
    let sub = 16;
    let out: Vec<SmoothPartBin> = (0..bins)
        .map(|b| {
            let s_lo = b as f64 * width;
            let kappa = (0..sub)
                .map(|j| curve.point_data(s_lo + (j as f64 + 0.5) * width / sub as f64).curvature)
                .sum::<f64>()
                / sub as f64;
            SmoothPartBin {
                s_lo,
                s_hi: s_lo + width,
                mean_curvature: kappa,
                counted: hist[b] as f64 / (members * width),
                predicted: (k - kappa) / TAU,
            }
        })
        .collect();
    let mean_relative_deviation =
        out.iter().map(|b| (b.counted / b.predicted - 1.0).abs()).sum::<f64>() / bins as f64;
    let total: usize = hist.iter().sum();
    let leading_relative_deviation = total as f64 / (members * perimeter) / (k / TAU) - 1.0;
    let excess: Vec<f64> = out.iter().map(|b| b.counted - k / TAU).collect();
    let neg_kappa: Vec<f64> = out.iter().map(|b| -b.mean_curvature / TAU).collect();
    Ok(SmoothPartReport {
        mean_k: k,
        bins: out,
        mean_relative_deviation,
        leading_relative_deviation,
        curvature_correlation: pearson(&excess, &neg_kappa),
    })
}

/// Summary written by `validate-rwm`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RwmReport {
    pub center: f64,
    pub half_width: f64,
    pub members: usize,
    pub max_abs_kurtosis: f64,
    pub mean_kurtosis: f64,
    pub rice_eta: f64,
    pub counted_eta: f64,
    /// `rice_eta / counted_eta − 1`.
    pub rice_deviation: f64,
    pub smooth_part: SmoothPartReport,
}

impl RwmReport {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "center_k {:.6}", self.center);
        let _ = writeln!(out, "half_width {:.6}", self.half_width);
        let _ = writeln!(out, "members {}", self.members);
        let _ = writeln!(out, "max_abs_excess_kurtosis {:.4}", self.max_abs_kurtosis);
        let _ = writeln!(out, "mean_excess_kurtosis {:.4}", self.mean_kurtosis);
        let _ = writeln!(out, "rice_eta {:.4}", self.rice_eta);
        let _ = writeln!(out, "counted_eta {:.4}", self.counted_eta);
        let _ = writeln!(out, "rice_vs_counted {:+.4}", self.rice_deviation);
        let sp = &self.smooth_part;
        let _ = writeln!(out, "leading_density_deviation {:+.4}", sp.leading_relative_deviation);
        let _ = writeln!(out, "smooth_part_mean_deviation {:.4}", sp.mean_relative_deviation);
        let _ = writeln!(out, "curvature_correlation {:+.4}", sp.curvature_correlation);
        let _ = writeln!(out, "# s_lo s_hi mean_kappa counted predicted");
        for b in &sp.bins {
            let _ = writeln!(
                out,
                "{:.6} {:.6} {:.6} {:.6} {:.6}",
                b.s_lo, b.s_hi, b.mean_curvature, b.counted, b.predicted
            );
        }
        out
    }
}

/// Full window check: moments, Rice integral against the counted mean, and
/// the binned smooth part.
pub fn validate_window(
    spectrum: &Spectrum,
    curve: &BoundaryCurve,
    center: f64,
    c: f64,
    bins: usize,
    cfg: &CountConfig,
) -> Result<RwmReport, RwmError> {
    let ensemble = WindowEnsemble::select(spectrum, center, c)?;
    let moments = ensemble_moments(&ensemble.members, curve.perimeter())?;
    let rice_eta = moments.rice_integral(curve.perimeter())?;
    let etas = ensemble
        .members
        .par_iter()
        .map(|m| count_bi(m, curve.perimeter(), cfg).map(|c| c.eta))
        .collect::<Result<Vec<_>, _>>()?;
    let counted_eta = etas.iter().sum::<usize>() as f64 / etas.len() as f64;
    let smooth_part = smooth_part_check(&ensemble, curve, bins, cfg)?;
    Ok(RwmReport {
        center,
        half_width: ensemble.half_width,
        members: ensemble.members.len(),
        max_abs_kurtosis: moments.max_abs_kurtosis(),
        mean_kurtosis: moments.mean_kurtosis(),
        rice_eta,
        counted_eta,
        rice_deviation: rice_eta / counted_eta - 1.0,
        smooth_part,
    })
}

/// Kurtosis diagnostic applied to an ensemble of independent Gaussian
/// samples of the same shape as a billiard window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KurtosisCalibration {
    pub members: usize,
    pub points: usize,
    pub mean_excess: f64,
    /// Standard error of a single-point excess kurtosis, `√(24/members)`.
    pub standard_error: f64,
    /// Standard error of the boundary-averaged excess kurtosis.
    pub mean_standard_error: f64,
}

pub fn gaussian_calibration(members: usize, points: usize, seed: u64) -> Result<KurtosisCalibration, RwmError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let modes: Vec<EigenMode> = (0..members)
        .map(|i| EigenMode {
            index: i + 1,
            k: 1.0,
            sigma_min: 0.0,
            samples: (0..points).map(|_| StandardNormal.sample(&mut rng)).collect(),
        })
        .collect();
    let refs: Vec<&EigenMode> = modes.iter().collect();
    let moments = ensemble_moments(&refs, 1.0)?;
    let se = (24.0 / members as f64).sqrt();
    Ok(KurtosisCalibration {
        members,
        points,
        mean_excess: moments.mean_kurtosis(),
        standard_error: se,
        mean_standard_error: se / (points as f64).sqrt(),
    })
}

/// Mean zero density `k/(π√2)` of the isotropic 1D cosine ensemble
/// `Σ cos(k x cos θ_j + φ_j)`; a reference value for Monte Carlo checks.
pub fn cosine_ensemble_density(k: f64) -> f64 {
    k / (PI * 2f64.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rice_density_examples() {
        assert!((rice_density(1.0, PI * PI).unwrap() - 1.0).abs() < 1e-15);
        let base = rice_density(2.0f64, 3.0).unwrap();
        assert!((rice_density(2.0, 3.0 * 9.0).unwrap() - 3.0 * base).abs() < 1e-14);
        assert!((rice_density(2.0 * 4.0, 3.0).unwrap() - base / 2.0).abs() < 1e-14);
        assert_eq!(rice_density(0.0, 1.0), Err(RwmError::DegenerateField));
        let single: f32 = rice_density(1.0f32, 4.0).unwrap();
        assert!((single - 2.0 / std::f32::consts::PI).abs() < 1e-6);
    }

    #[test]
    fn gaussian_kurtosis_is_near_zero() {
        let cal = gaussian_calibration(400, 64, 7).unwrap();
        assert!(cal.mean_excess.abs() < 5.0 * cal.mean_standard_error, "{cal:?}");
    }

    #[test]
    fn too_few_members() {
        let m = EigenMode { index: 1, k: 1.0, sigma_min: 0.0, samples: vec![1.0; 8] };
        let refs = vec![&m; 5];
        assert_eq!(ensemble_moments(&refs, 1.0).unwrap_err(), RwmError::TooFewModes { found: 5, required: 20 });
    }

    #[test]
    fn rotating_waves_have_uniform_moments() {
        // members cos(mθ + φ) on a circle: second moments do not depend on s
        let modes: Vec<EigenMode> = (0..24)
            .map(|i| EigenMode {
                index: i + 1,
                k: 5.0,
                sigma_min: 0.0,
                samples: (0..64)
                    .map(|j| (5.0 * TAU * j as f64 / 64.0 + TAU * i as f64 / 24.0).cos())
                    .collect(),
            })
            .collect();
        let refs: Vec<&EigenMode> = modes.iter().collect();
        let mom = ensemble_moments(&refs, TAU).unwrap();
        for j in 0..64 {
            assert!((mom.var_u[j] - 0.5).abs() < 1e-12);
            assert!((mom.var_udot[j] - 12.5).abs() < 1e-10);
        }
        // Rice predicts 10 zeros, exactly the count of cos(5θ)
        assert!((mom.rice_integral(TAU).unwrap() - 10.0).abs() < 1e-9);
    }
}
