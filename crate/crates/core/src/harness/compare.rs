//! Peak matching between numerical and semiclassical length spectra, and
//! plot-ready column files.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::persist::write_file;
use super::HarnessError;
use crate::orbits::PeriodicOrbit;
use crate::trace::LengthSpectrum;

/// Interior local maxima of `|f̂|` at or above `floor`.
pub fn local_maxima(s: &LengthSpectrum, floor: f64) -> Vec<(f64, f64)> {
    let m = s.magnitude();
    (1..m.len().saturating_sub(1))
        .filter(|&i| m[i] >= floor && m[i] > m[i - 1] && m[i] >= m[i + 1])
        .map(|i| (s.x[i], m[i]))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakMatch {
    pub position: f64,
    pub semiclassical_height: f64,
    pub numerical_position: Option<f64>,
    pub numerical_height: Option<f64>,
    /// `(id, r)` of the orbit length nearest the peak.
    pub nearest_orbit: Option<(usize, u32)>,
}

impl PeakMatch {
    pub fn deviation(&self) -> Option<f64> {
        self.numerical_position.map(|p| p - self.position)
    }

    pub fn ratio(&self, calibration: f64) -> Option<f64> {
        self.numerical_height.map(|h| h / (calibration * self.semiclassical_height))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub matches: Vec<PeakMatch>,
    /// Numerical peaks above the threshold with no semiclassical partner.
    pub unmatched_numerical: Vec<(f64, f64)>,
    /// Median numerical `|f̂|` away from semiclassical peaks.
    pub background: f64,
    /// Numerical/semiclassical height ratio at the largest isolated peak.
    pub calibration: f64,
    pub tolerance: f64,
}

/// Matches every semiclassical peak above `threshold · max|f̂_scl|` to the
/// nearest numerical local maximum within `tolerance`.
pub fn compare_report(
    numerical: &LengthSpectrum,
    semiclassical: &LengthSpectrum,
    orbits: &[PeriodicOrbit],
    r_max: u32,
    threshold: f64,
    tolerance: f64,
) -> CompareReport {
    let top_scl = semiclassical.magnitude().into_iter().fold(0.0, f64::max);
    let top_num = numerical.magnitude().into_iter().fold(0.0, f64::max);
    let scl_peaks = local_maxima(semiclassical, threshold * top_scl);
    let num_peaks = local_maxima(numerical, threshold * top_num);
    let lengths: Vec<(f64, usize, u32)> = orbits
        .iter()
        .flat_map(|o| (1..=r_max).map(move |r| (r as f64 * o.length, o.id, r)))
        .collect();

    let matches: Vec<PeakMatch> = scl_peaks
        .iter()
        .map(|&(x, h)| {
            let num = num_peaks
                .iter()
                .filter(|(xn, _)| (xn - x).abs() <= tolerance)
                .min_by(|a, b| (a.0 - x).abs().total_cmp(&(b.0 - x).abs()));
            let nearest_orbit = lengths
                .iter()
                .min_by(|a, b| (a.0 - x).abs().total_cmp(&(b.0 - x).abs()))
                .map(|&(_, id, r)| (id, r));
            PeakMatch {
                position: x,
                semiclassical_height: h,
                numerical_position: num.map(|p| p.0),
                numerical_height: num.map(|p| p.1),
                nearest_orbit,
            }
        })
        .collect();

    let unmatched_numerical = num_peaks
        .iter()
        .filter(|(xn, _)| scl_peaks.iter().all(|(x, _)| (xn - x).abs() > tolerance))
        .copied()
        .collect();

    let x_lo = 2.0 * tolerance;
    let away: Vec<f64> = numerical
        .x
        .iter()
        .zip(numerical.magnitude())
        .filter(|(x, _)| **x >= x_lo && scl_peaks.iter().all(|(p, _)| (*x - p).abs() > tolerance))
        .map(|(_, m)| m)
        .collect();
    let background = median(away);

    // largest semiclassical peak whose neighbours are all beyond 2·tolerance
    let calibration = matches
        .iter()
        .filter(|m| m.numerical_height.is_some())
        .filter(|m| {
            scl_peaks
                .iter()
                .all(|(p, _)| (p - m.position).abs() < 1e-12 || (p - m.position).abs() > 2.0 * tolerance)
        })
        .max_by(|a, b| a.semiclassical_height.total_cmp(&b.semiclassical_height))
        .and_then(|m| m.numerical_height.map(|h| h / m.semiclassical_height))
        .unwrap_or(1.0);

    CompareReport { matches, unmatched_numerical, background, calibration, tolerance }
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

impl CompareReport {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "background {:.6e}", self.background);
        let _ = writeln!(out, "calibration {:.6}", self.calibration);
        let _ = writeln!(out, "tolerance {:.4}", self.tolerance);
        let _ = writeln!(out, "# position scl_height num_position deviation num_height ratio orbit");
        let opt = |v: Option<f64>, p: usize| v.map_or_else(|| "-".to_string(), |v| format!("{v:.p$}"));
        for m in &self.matches {
            let orbit = m.nearest_orbit.map_or_else(|| "-".to_string(), |(id, r)| format!("{id}x{r}"));
            let _ = writeln!(
                out,
                "{:.4} {:.5e} {} {} {} {} {}",
                m.position,
                m.semiclassical_height,
                opt(m.numerical_position, 4),
                opt(m.deviation(), 4),
                opt(m.numerical_height, 6),
                opt(m.ratio(self.calibration), 3),
                orbit
            );
        }
        for (x, h) in &self.unmatched_numerical {
            let _ = writeln!(out, "# unmatched numerical peak {x:.4} {h:.5e}");
        }
        out
    }
}

/// One labelled series in the plot spec.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotSeries {
    pub file: String,
    pub x_column: usize,
    pub y_column: usize,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotSpec {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    /// Drawn in this order, later series on top.
    pub series: Vec<PlotSeries>,
    /// Vertical markers: `(x, label)`.
    pub markers: Vec<(f64, String)>,
}

fn magnitude_columns(s: &LengthSpectrum) -> String {
    let mut out = String::from("# x abs\n");
    for (x, z) in s.x.iter().zip(&s.values) {
        let _ = writeln!(out, "{x:.6} {:.8e}", z.norm());
    }
    out
}

/// Writes `<stem>.dat` (two columns) for every spectrum, `<stem>_overlay.dat`
/// (`x`, numerical, calibrated semiclassical) for each pair, and
/// `<stem>_plot.json`.
pub fn emit_plot_data(
    dir: &Path,
    stem: &str,
    numerical: &LengthSpectrum,
    semiclassical: Option<(&LengthSpectrum, f64)>,
    markers: Vec<(f64, String)>,
) -> Result<Vec<PathBuf>, HarnessError> {
    let mut files = Vec::new();
    let num_file = format!("{stem}_numerical.dat");
    write_file(&dir.join(&num_file), magnitude_columns(numerical))?;
    files.push(dir.join(&num_file));
    let mut series = vec![PlotSeries { file: num_file, x_column: 0, y_column: 1, label: "numerical".into() }];
    if let Some((scl, cal)) = semiclassical {
        if scl.x.len() != numerical.x.len() || scl.x.iter().zip(&numerical.x).any(|(a, b)| (a - b).abs() > 1e-12) {
            return Err(HarnessError::Numerical {
                stage: "plot".into(),
                message: "overlay needs a shared x grid".into(),
            });
        }
        let scl_file = format!("{stem}_semiclassical.dat");
        write_file(&dir.join(&scl_file), magnitude_columns(&scl.scaled(cal)))?;
        files.push(dir.join(&scl_file));
        let mut overlay = String::from("# x numerical semiclassical\n");
        for ((x, a), b) in numerical.x.iter().zip(&numerical.values).zip(&scl.values) {
            let _ = writeln!(overlay, "{x:.6} {:.8e} {:.8e}", a.norm(), cal * b.norm());
        }
        let overlay_file = format!("{stem}_overlay.dat");
        write_file(&dir.join(&overlay_file), overlay)?;
        files.push(dir.join(&overlay_file));
        series = vec![
            PlotSeries { file: overlay_file.clone(), x_column: 0, y_column: 1, label: "numerical".into() },
            PlotSeries { file: overlay_file, x_column: 0, y_column: 2, label: format!("semiclassical (x{cal:.3})") },
        ];
    }
    let spec = PlotSpec {
        title: format!("length spectrum {stem}"),
        x_label: "x (length)".into(),
        y_label: "|f(x)|".into(),
        series,
        markers,
    };
    let plot_file = dir.join(format!("{stem}_plot.json"));
    write_file(&plot_file, serde_json::to_vec_pretty(&spec).expect("plot spec serializes"))?;
    files.push(plot_file);
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nodal::Window;
    use crate::trace::Provenance;
    use num_complex::Complex64;

    fn bumps(centres: &[(f64, f64)]) -> LengthSpectrum {
        let x: Vec<f64> = (0..=1000).map(|j| j as f64 * 0.01).collect();
        let values = x
            .iter()
            .map(|&x| {
                let v: f64 = centres.iter().map(|&(c, h)| h * (-0.5 * ((x - c) / 0.1).powi(2)).exp()).sum();
                Complex64::new(v + 1e-3, 0.0)
            })
            .collect();
        LengthSpectrum { x, values, provenance: Provenance::Semiclassical, window: Window { q0: 30.0, sigma: 10.0 } }
    }

    #[test]
    fn identical_inputs_match_exactly() {
        let s = bumps(&[(3.0, 1.0), (5.0, 0.5)]);
        let r = compare_report(&s, &s, &[], 1, 0.1, 0.2);
        assert_eq!(r.matches.len(), 2);
        for m in &r.matches {
            assert_eq!(m.deviation(), Some(0.0));
            assert_eq!(m.ratio(r.calibration), Some(1.0));
        }
        assert!(r.unmatched_numerical.is_empty());
    }

    #[test]
    fn removed_orbit_is_unmatched() {
        let num = bumps(&[(3.0, 1.0), (5.0, 0.5)]);
        let scl = bumps(&[(3.0, 1.0)]);
        let r = compare_report(&num, &scl, &[], 1, 0.1, 0.2);
        assert_eq!(r.matches.len(), 1);
        assert_eq!(r.unmatched_numerical.len(), 1);
        assert!((r.unmatched_numerical[0].0 - 5.0).abs() < 0.011);
    }

    #[test]
    fn plot_files_are_written() {
        let dir = tempfile::tempdir().unwrap();
        let s = bumps(&[(3.0, 1.0)]);
        let files = emit_plot_data(dir.path(), "full", &s, None, vec![]).unwrap();
        assert_eq!(files.len(), 2);
        let files = emit_plot_data(dir.path(), "pair", &s, Some((&s, 2.0)), vec![(3.0, "1".into())]).unwrap();
        assert_eq!(files.len(), 4);
        let overlay = std::fs::read_to_string(dir.path().join("pair_overlay.dat")).unwrap();
        let row: Vec<f64> = overlay.lines().nth(301).unwrap().split(' ').map(|v| v.parse().unwrap()).collect();
        assert!((row[2] - 2.0 * row[1]).abs() < 1e-6);
    }
}
