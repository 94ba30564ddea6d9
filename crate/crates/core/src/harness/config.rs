//! Run configuration, read from TOML.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::HarnessError;
use crate::bim::SolverConfig;
use crate::geometry::{BoundaryCurve, ConformalMapSpec, CurveSpec};
use crate::nodal::CountConfig;
use crate::orbits::OrbitSearchConfig;
use crate::trace::TransformMode;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveSection {
    #[serde(flatten)]
    pub spec: CurveSpec,
    #[serde(default = "default_resolution")]
    pub resolution: usize,
}

fn default_resolution() -> usize {
    128
}

impl CurveSection {
    pub fn build(&self) -> Result<BoundaryCurve, HarnessError> {
        BoundaryCurve::build(self.spec, self.resolution).map_err(|e| HarnessError::Config(e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveSection {
    pub k_max: f64,
    #[serde(flatten)]
    pub solver: SolverConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountSection {
    #[serde(flatten)]
    pub count: CountConfig,
    /// `Γ` as arclength fractions (`"0.1:0.3,0.6:0.7"`), `"auto"` to
    /// exclude one short orbit and keep another, or absent.
    #[serde(default)]
    pub gamma: Option<String>,
    /// Half-width, as a fraction of `L`, of the gaps cut around the excluded
    /// orbit's bounce points by `gamma = "auto"`.
    #[serde(default = "default_gap")]
    pub auto_gap: f64,
}

fn default_gap() -> f64 {
    0.08
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpectrumSection {
    /// Window centre; `None` uses `q0_fraction · q_N`.
    pub q0: Option<f64>,
    pub sigma: Option<f64>,
    pub q0_fraction: f64,
    pub sigma_fraction: f64,
    pub r_max: u32,
    pub x_max: f64,
    pub dx: f64,
    /// Gaussian width, in `q`, of the kernel smoothing the counts.
    pub density_width: f64,
    pub grid_step: f64,
    pub mode: TransformMode,
}

impl Default for SpectrumSection {
    fn default() -> Self {
        Self {
            q0: None,
            sigma: None,
            q0_fraction: 0.52,
            sigma_fraction: 0.15,
            r_max: 3,
            x_max: 12.0,
            dx: 0.005,
            density_width: 0.05,
            grid_step: 0.01,
            mode: TransformMode::Analytic,
        }
    }
}

impl SpectrumSection {
    pub fn window_for(&self, q_max: f64) -> crate::nodal::Window {
        crate::nodal::Window {
            q0: self.q0.unwrap_or(self.q0_fraction * q_max),
            sigma: self.sigma.unwrap_or(self.sigma_fraction * q_max),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RwmSection {
    pub enabled: bool,
    /// Window centre in `k`; `None` uses `0.75 · k_max`.
    pub center: Option<f64>,
    /// Half-width `c/√k`.
    pub c: f64,
    pub bins: usize,
    /// Largest accepted `|rice/counted − 1|`.
    pub max_rice_deviation: f64,
}

impl Default for RwmSection {
    fn default() -> Self {
        Self { enabled: true, center: None, c: 4.0, bins: 8, max_rice_deviation: 0.05 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub output: PathBuf,
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub curve: CurveSection,
    pub solve: SolveSection,
    pub count: CountSection,
    pub orbits: OrbitSearchConfig,
    #[serde(default)]
    pub spectrum: SpectrumSection,
    #[serde(default)]
    pub rwm: RwmSection,
}

fn default_name() -> String {
    "run".into()
}

fn default_seed() -> u64 {
    1
}

pub const PRESETS: [&str; 3] = ["disk", "africa-desk", "full-scale"];

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let cfg: Self = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        self.solve.solver.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        if !(self.solve.k_max > 0.0) {
            return bad(format!("k_max must be positive, got {}", self.solve.k_max));
        }
        let s = &self.spectrum;
        if !(s.x_max > s.dx && s.dx > 0.0 && s.grid_step > 0.0 && s.density_width > 0.0) {
            return bad("spectrum grid parameters must be positive with x_max > dx".into());
        }
        if s.r_max == 0 {
            return bad("r_max must be at least 1".into());
        }
        if self.orbits.max_bounces < 2 {
            return bad("orbits.max_bounces must be at least 2".into());
        }
        if !(self.count.auto_gap > 0.0 && self.count.auto_gap < 0.25) {
            return bad("count.auto_gap must lie in (0, 0.25)".into());
        }
        Ok(())
    }

    /// Named parameter sets. `full-scale` holds the full-scale parameters and is
    /// far beyond desk-scale runtimes.
    pub fn preset(name: &str) -> Result<Self, HarnessError> {
        let orbits = OrbitSearchConfig::default();
        let africa = CurveSection { spec: CurveSpec::Conformal(ConformalMapSpec::africa()), resolution: 128 };
        let count = CountSection { count: CountConfig::default(), gamma: None, auto_gap: default_gap() };
        let cfg = match name {
            "disk" => RunConfig {
                name: name.into(),
                output: "runs/disk".into(),
                seed: 1,
                curve: CurveSection { spec: CurveSpec::Disk { radius: 1.0 }, resolution: 128 },
                solve: SolveSection { k_max: 16.0, solver: SolverConfig::default() },
                count,
                orbits: OrbitSearchConfig { max_bounces: 3, starts_per_bounce: 200, ..orbits },
                spectrum: SpectrumSection { x_max: 8.0, ..Default::default() },
                // integrable: no random-wave statistics to check
                rwm: RwmSection { enabled: false, ..Default::default() },
            },
            "africa-desk" => RunConfig {
                name: name.into(),
                output: "runs/africa-desk".into(),
                seed: 1,
                curve: africa,
                solve: SolveSection { k_max: 60.0, solver: SolverConfig::default() },
                count: CountSection { gamma: Some("auto".into()), ..count },
                orbits,
                spectrum: SpectrumSection::default(),
                rwm: RwmSection::default(),
            },
            "full-scale" => RunConfig {
                name: name.into(),
                output: "runs/full-scale".into(),
                seed: 1,
                curve: africa,
                solve: SolveSection { k_max: 260.0, solver: SolverConfig::default() },
                count: CountSection { gamma: Some("auto".into()), ..count },
                orbits: OrbitSearchConfig { max_bounces: 7, starts_per_bounce: 4000, ..orbits },
                spectrum: SpectrumSection { q0: Some(130.0), sigma: Some(50.0), ..Default::default() },
                rwm: RwmSection { center: Some(150.0), ..Default::default() },
            },
            other => {
                return Err(HarnessError::Config(format!(
                    "unknown preset {other:?}; known: {}",
                    PRESETS.join(", ")
                )))
            }
        };
        Ok(cfg)
    }

    /// `q_N` for `N(k_max)` levels, from the smooth staircase.
    pub fn expected_q_max(&self, area: f64, perimeter: f64) -> f64 {
        let n = crate::bim::weyl_count(area, perimeter, self.solve.k_max).max(1.0);
        (4.0 * PI * n / area).sqrt()
    }
}

/// Hex sha256 of a serializable value's JSON form.
pub fn hash_of<T: Serialize>(value: &T) -> String {
    let json = serde_json::to_vec(value).expect("value serializes");
    hex::encode(Sha256::digest(&json))
}
